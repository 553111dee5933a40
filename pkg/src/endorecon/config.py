"""Pipeline configuration: YAML schema, validation, and defaults.

The document is a flat set of upper-case keys with a few nested sections
(INTRINSICS, ICP). Relative paths are resolved against the directory of the
config file. See the README for the full grammar.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .depth_io import CameraIntrinsics
from .icp import IcpConfig, ThresholdScheme

DEPTH_KINDS = ("disparity-npy", "depth-png")
INVERT_MODES = ("intensity", "reciprocal", "none")
SELECTOR_SCHEMES = ("hyperiqa", "rchannel")

_TOP_LEVEL_KEYS = {
    "DATA_PATH",
    "OUTPUT_DIR",
    "SELECT_SCHEME",
    "DEPTH_PATH",
    "DEPTH_SCHEME",
    "DEPTH_UNIT_SCALE",
    "DEPTH_INVERT",
    "INTRINSICS",
    "ICP",
    "GROUND_TRUTH_PATH",
    "GT_UNIT_SCALE",
    "SCALE_ALIGN",
    "MASK_INTENSITY_FLOOR",
    "CHECKPOINT_FRAMES",
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SelectorSpec:
    """One frame-selection pass: scheme id, threshold, optional score sidecar."""

    scheme: str
    threshold: float
    scores: Path | None = None


@dataclass(frozen=True)
class DepthSource:
    """Where predictions live and how their rasters are encoded."""

    directory: Path
    kind: str
    unit_scale: float = 1.0
    invert: str = "intensity"


@dataclass
class PipelineConfig:
    data_path: Path
    output_dir: Path
    depth: DepthSource
    intrinsics: CameraIntrinsics
    icp: IcpConfig = field(default_factory=IcpConfig)
    select_schemes: list[SelectorSpec] = field(default_factory=list)
    ground_truth_path: Path | None = None
    gt_unit_scale: float = 1.0
    scale_align: bool = True
    mask_intensity_floor: float = 10.0
    checkpoint_frames: list[int] = field(default_factory=list)

    def as_dict(self) -> dict:
        """JSON-friendly echo of the configuration for the run manifest."""
        scheme = self.icp.scheme
        return {
            "DATA_PATH": str(self.data_path),
            "OUTPUT_DIR": str(self.output_dir),
            "SELECT_SCHEME": [
                {
                    "scheme": s.scheme,
                    "threshold": s.threshold,
                    **({"scores": str(s.scores)} if s.scores else {}),
                }
                for s in self.select_schemes
            ],
            "DEPTH_PATH": str(self.depth.directory),
            "DEPTH_SCHEME": self.depth.kind,
            "DEPTH_UNIT_SCALE": self.depth.unit_scale,
            "DEPTH_INVERT": self.depth.invert,
            "INTRINSICS": {
                "fx": self.intrinsics.fx,
                "fy": self.intrinsics.fy,
                "cx": self.intrinsics.cx,
                "cy": self.intrinsics.cy,
                "baseline": self.intrinsics.baseline,
            },
            "ICP": {
                "mode": self.icp.mode,
                "scheme": {
                    "name": scheme.name,
                    "value": scheme.value,
                    "factor": scheme.factor,
                    "fraction": scheme.fraction,
                    "t_initial": scheme.t_initial,
                    "t_final": scheme.t_final,
                },
                "max_iterations": self.icp.max_iterations,
                "convergence_eps": self.icp.convergence_eps,
                "merge_novelty_radius": self.icp.merge_novelty_radius,
            },
            "GROUND_TRUTH_PATH": str(self.ground_truth_path) if self.ground_truth_path else None,
            "GT_UNIT_SCALE": self.gt_unit_scale,
            "SCALE_ALIGN": self.scale_align,
            "MASK_INTENSITY_FLOOR": self.mask_intensity_floor,
            "CHECKPOINT_FRAMES": list(self.checkpoint_frames),
        }


def parse_threshold_scheme(raw, field_name: str = "ICP.scheme") -> ThresholdScheme:
    """Build a ThresholdScheme from a bare name or a {name: ..., params} mapping."""
    try:
        if isinstance(raw, str):
            return ThresholdScheme(raw)
        if isinstance(raw, dict):
            known = {"name", "value", "factor", "fraction", "t_initial", "t_final"}
            unknown = set(raw) - known
            if unknown:
                raise ConfigError(
                    "%s: unknown scheme parameter(s) %s" % (field_name, sorted(unknown))
                )
            if "name" not in raw:
                raise ConfigError("%s: scheme mapping needs a 'name' key" % field_name)
            return ThresholdScheme(**raw)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("%s: %s" % (field_name, exc)) from exc
    raise ConfigError("%s: expected a scheme name or mapping, got %r" % (field_name, raw))


def _parse_selectors(raw, base: Path) -> list[SelectorSpec]:
    if raw is None:
        return []
    if not isinstance(raw, list):
        raise ConfigError("SELECT_SCHEME must be a list of selector specs")
    specs = []
    for i, entry in enumerate(raw):
        where = "SELECT_SCHEME[%d]" % i
        if not isinstance(entry, dict) or "scheme" not in entry:
            raise ConfigError("%s: expected a mapping with a 'scheme' key" % where)
        scheme = entry["scheme"]
        if scheme not in SELECTOR_SCHEMES:
            raise ConfigError(
                "%s.scheme: unknown selection scheme %r (choices: %s)"
                % (where, scheme, ", ".join(SELECTOR_SCHEMES))
            )
        if "threshold" not in entry:
            raise ConfigError("%s.threshold is required" % where)
        threshold = float(entry["threshold"])
        if threshold <= 0:
            raise ConfigError("%s.threshold must be positive, got %g" % (where, threshold))
        scores = None
        if scheme == "hyperiqa":
            if "scores" not in entry:
                raise ConfigError("%s.scores (quality score CSV) is required for hyperiqa" % where)
            scores = base / str(entry["scores"])
        specs.append(SelectorSpec(scheme=scheme, threshold=threshold, scores=scores))
    return specs


def load_config(path: str | Path) -> PipelineConfig:
    """Load and validate a pipeline configuration document."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError("config file does not exist: %s" % path)
    base = path.parent
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError("%s: not a well-formed configuration document (%s)" % (path, exc))
    if not isinstance(doc, dict):
        raise ConfigError("%s: top level must be a key-value mapping" % path)
    unknown = set(doc) - _TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError("unknown configuration key(s): %s" % ", ".join(sorted(unknown)))
    for required in ("DATA_PATH", "OUTPUT_DIR", "DEPTH_PATH", "DEPTH_SCHEME", "INTRINSICS"):
        if required not in doc:
            raise ConfigError("%s is required" % required)

    data_path = base / str(doc["DATA_PATH"])
    if not data_path.is_dir():
        raise ConfigError("DATA_PATH does not exist: %s" % data_path)

    kind = doc["DEPTH_SCHEME"]
    if kind not in DEPTH_KINDS:
        raise ConfigError(
            "DEPTH_SCHEME: unknown raster kind %r (choices: %s)" % (kind, ", ".join(DEPTH_KINDS))
        )
    invert = doc.get("DEPTH_INVERT", "intensity")
    if invert not in INVERT_MODES:
        raise ConfigError(
            "DEPTH_INVERT must be one of %s, got %r" % (", ".join(INVERT_MODES), invert)
        )
    unit_scale = float(doc.get("DEPTH_UNIT_SCALE", 1.0))
    if unit_scale <= 0:
        raise ConfigError("DEPTH_UNIT_SCALE must be positive, got %g" % unit_scale)
    depth = DepthSource(
        directory=base / str(doc["DEPTH_PATH"]), kind=kind, unit_scale=unit_scale, invert=invert
    )

    intr = doc["INTRINSICS"]
    if not isinstance(intr, dict):
        raise ConfigError("INTRINSICS must be a mapping with fx, cx, cy")
    for key in ("fx", "cx", "cy"):
        if key not in intr:
            raise ConfigError("INTRINSICS.%s is required" % key)
    try:
        intrinsics = CameraIntrinsics(
            fx=float(intr["fx"]),
            fy=float(intr.get("fy", intr["fx"])),
            cx=float(intr["cx"]),
            cy=float(intr["cy"]),
            baseline=float(intr.get("baseline", 0.0)),
        )
    except ValueError as exc:
        raise ConfigError("INTRINSICS: %s" % exc) from exc
    if kind == "disparity-npy" and intrinsics.baseline <= 0:
        raise ConfigError("INTRINSICS.baseline must be positive for disparity sources")

    icp_raw = doc.get("ICP", {}) or {}
    if not isinstance(icp_raw, dict):
        raise ConfigError("ICP must be a mapping")
    unknown = set(icp_raw) - {"mode", "scheme", "max_iterations", "convergence_eps", "merge_novelty_radius"}
    if unknown:
        raise ConfigError("ICP: unknown key(s): %s" % ", ".join(sorted(unknown)))
    radius = icp_raw.get("merge_novelty_radius")
    try:
        icp_config = IcpConfig(
            mode=icp_raw.get("mode", "neighbor"),
            scheme=parse_threshold_scheme(icp_raw.get("scheme", "mean_plus_2std")),
            max_iterations=int(icp_raw.get("max_iterations", 40)),
            convergence_eps=float(icp_raw.get("convergence_eps", 1e-6)),
            merge_novelty_radius=None if radius is None else float(radius),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("ICP: %s" % exc) from exc

    gt_raw = doc.get("GROUND_TRUTH_PATH")
    ground_truth = base / str(gt_raw) if gt_raw else None

    checkpoints = doc.get("CHECKPOINT_FRAMES", []) or []
    if not isinstance(checkpoints, list):
        raise ConfigError("CHECKPOINT_FRAMES must be a list of frame ordinals")

    return PipelineConfig(
        data_path=data_path,
        output_dir=base / str(doc["OUTPUT_DIR"]),
        depth=depth,
        intrinsics=intrinsics,
        icp=icp_config,
        select_schemes=_parse_selectors(doc.get("SELECT_SCHEME"), base),
        ground_truth_path=ground_truth,
        gt_unit_scale=float(doc.get("GT_UNIT_SCALE", 1.0)),
        scale_align=bool(doc.get("SCALE_ALIGN", True)),
        mask_intensity_floor=float(doc.get("MASK_INTENSITY_FLOOR", 10.0)),
        checkpoint_frames=[int(c) for c in checkpoints],
    )
