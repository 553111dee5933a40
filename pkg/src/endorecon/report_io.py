"""Artifact writers: PLY clouds, heatmaps, trace CSVs, metric reports, manifest.

Every writer is deterministic for identical inputs; the run manifest is the
single place a timestamp appears.
"""

from __future__ import annotations

import csv
import hashlib
import json
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .depth_io import write_gray8_png, write_npy_2d
from .geometry import PointCloud
from .icp import IcpReport
from .metrics import MetricReport

TOOL_VERSION = "0.1.0"


def write_ply(path: str | Path, cloud: PointCloud) -> None:
    """ASCII PLY v1.0 with float x/y/z vertices at 9 significant digits."""
    lines = [
        "ply",
        "format ascii 1.0",
        "element vertex %d" % len(cloud),
        "property float x",
        "property float y",
        "property float z",
        "end_header",
    ]
    for x, y, z in cloud.points:
        lines.append("%.9g %.9g %.9g" % (x, y, z))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def write_trace_csv(path: str | Path, report: IcpReport) -> None:
    """Per-iteration alignment trace."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "threshold", "inliers", "mean_distance", "max_distance"])
        for row in report.per_iteration:
            writer.writerow(
                [row.iteration, repr(row.threshold), row.inliers, repr(row.mean_distance), repr(row.max_distance)]
            )


def write_heatmap(path_stem: str | Path, raster: np.ndarray) -> list[Path]:
    """Emit a heatmap as normalized 8-bit PNG + raw float32 NPY + min/max sidecar.

    Returns the paths written. The sidecar records the normalization range so
    raw values are recoverable from the PNG alone.
    """
    stem = Path(path_stem)
    raster = np.asarray(raster, dtype=np.float64)
    lo = float(raster.min())
    hi = float(raster.max())
    png = stem.with_suffix(".png")
    npy = stem.with_suffix(".npy")
    sidecar = stem.parent / (stem.name + ".range.json")
    scaled = np.zeros_like(raster) if hi == lo else (raster - lo) / (hi - lo) * 255.0
    write_gray8_png(png, scaled)
    write_npy_2d(npy, raster.astype(np.float32))
    sidecar.write_text(
        json.dumps({"min": lo, "max": hi}, sort_keys=True) + "\n", encoding="utf-8"
    )
    return [png, npy, sidecar]


def write_metrics_json(path: str | Path, report: MetricReport) -> None:
    Path(path).write_text(
        json.dumps(report.as_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def write_metrics_csv(path: str | Path, report: MetricReport) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["frame", "rmse", "mae", "sq_rel", "delta_accuracy", "ssim", "log_rmse", "excluded_nonpositive_gt", "scale"]
        )
        for f in report.per_frame:
            writer.writerow(
                [
                    f.frame,
                    repr(f.rmse),
                    repr(f.mae),
                    repr(f.sq_rel),
                    repr(f.delta_accuracy),
                    repr(f.ssim),
                    repr(f.log_rmse),
                    f.excluded_nonpositive_gt,
                    repr(f.scale),
                ]
            )


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_run_manifest(
    path: str | Path,
    config_echo: dict,
    input_paths: list[Path],
    output_paths: list[Path],
    status: str = "completed",
    abort_stage: str | None = None,
    base_dir: Path | None = None,
) -> None:
    """JSON manifest tying outputs to the config and input content hashes.

    Keys are emitted in sorted order; the timestamp is the only field that
    differs between reruns on identical inputs.
    """
    base = Path(base_dir) if base_dir else None

    def rel(p: Path) -> str:
        if base is not None:
            try:
                return p.relative_to(base).as_posix()
            except ValueError:
                pass
        return p.as_posix()

    manifest = {
        "tool_version": TOOL_VERSION,
        "status": status,
        "abort_stage": abort_stage,
        "config": config_echo,
        "inputs": {rel(p): sha256_file(p) for p in sorted(input_paths)},
        "outputs": sorted(rel(p) for p in output_paths),
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    Path(path).write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")
