"""Stage sequencing: select -> depth import -> reconstruct -> evaluate -> report.

The driver is single-threaded and deterministic: identical configuration and
inputs produce byte-identical artifacts (the manifest timestamp aside). It
owns the staging directory and the output inventory; the stages themselves
are pure library calls.
"""

from __future__ import annotations

import dataclasses
import logging
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import depth_io, report_io
from .config import PipelineConfig
from .depth_io import DepthMap
from .frame_select import (
    Frame,
    QualityScoreTable,
    list_frame_paths,
    load_frames,
    select_by_rchannel,
    select_by_score,
)
from .geometry import PointCloud, apply_transform, backproject
from .icp import SequenceAlignment, align_sequence, error_heatmap
from .kdtree import NeighborIndex, median_nn_spacing
from .map_merge import GlobalMap, merge
from .metrics import MetricReport, evaluate_sequence

logger = logging.getLogger(__name__)

ALL_STAGES = ("select", "depth", "reconstruct", "heatmap", "evaluate", "report")


@dataclass
class PipelineResult:
    selected: list[Frame] = field(default_factory=list)
    staged_paths: list[Path] = field(default_factory=list)
    universal_mask: np.ndarray | None = None
    depth_maps: list[DepthMap] = field(default_factory=list)
    clouds: list[PointCloud] = field(default_factory=list)
    alignment: SequenceAlignment | None = None
    global_map: GlobalMap | None = None
    novelty_radius: float | None = None
    metrics: MetricReport | None = None
    outputs: list[Path] = field(default_factory=list)
    inputs: list[Path] = field(default_factory=list)
    status: str = "completed"
    abort_stage: str | None = None


def stage_frames(selected: list[Path], staging_dir: str | Path) -> list[Path]:
    """Copy frames into a cleared staging directory as zero-padded ordinals.

    Copies are byte-identical and keep the input order; rerunning with a
    different list leaves nothing behind from the previous run.
    """
    staging_dir = Path(staging_dir)
    if staging_dir.exists():
        shutil.rmtree(staging_dir)
    staging_dir.mkdir(parents=True)
    staged = []
    for i, src in enumerate(selected):
        dst = staging_dir / ("%06d%s" % (i, Path(src).suffix.lower()))
        shutil.copyfile(src, dst)
        staged.append(dst)
    return staged


def _run_select(config: PipelineConfig, result: PipelineResult) -> list[Frame]:
    paths = list_frame_paths(config.data_path)
    result.inputs.extend(paths)
    frames = load_frames(paths)
    for spec in config.select_schemes:
        if spec.scheme == "hyperiqa":
            scores = QualityScoreTable.read_csv(spec.scores)
            result.inputs.append(spec.scores)
            frames = select_by_score(frames, scores, spec.threshold)
        else:
            frames = select_by_rchannel(frames, spec.threshold)
    logger.info("selected %d of %d frames", len(frames), len(paths))
    return frames


def _prediction_path(config: PipelineConfig, frame: Frame) -> Path:
    stem = frame.path.stem
    if config.depth.kind == "disparity-npy":
        candidate = config.depth.directory / (stem + "_disp.npy")
    else:
        candidate = config.depth.directory / (stem + "_depth.png")
        if not candidate.exists():
            candidate = config.depth.directory / (stem + ".png")
    if not candidate.exists():
        raise FileNotFoundError(
            "no %s prediction for frame %s (looked for %s)"
            % (config.depth.kind, frame.path.name, candidate.name)
        )
    return candidate


def _import_one(config: PipelineConfig, frame: Frame, path: Path) -> DepthMap:
    height, width = frame.pixels.shape[:2]
    if config.depth.kind == "disparity-npy":
        disp = depth_io.read_npy_2d(path, kind="disparity")
        disp = depth_io.resize_bilinear(disp, width, height)
        return depth_io.disparity_to_depth(disp, config.intrinsics)
    raw = depth_io.read_depth_png(path, config.depth.unit_scale)
    raw = depth_io.resize_bilinear(raw, width, height)
    if config.depth.invert == "intensity":
        relative = depth_io.invert_8bit(depth_io.normalize_8bit(raw))
        return depth_io.reinterpret_as_depth(relative)
    if config.depth.invert == "reciprocal":
        valid = raw.mask & (raw.values > 0)
        values = np.zeros_like(raw.values)
        values[valid] = 1.0 / raw.values[valid]
        return DepthMap(values, valid, "depth")
    return raw


def _run_depth_import(
    config: PipelineConfig, frames: list[Frame], result: PipelineResult, write: bool
) -> list[DepthMap]:
    if not frames:
        raise ValueError("no frames survived selection; nothing to import depth for")
    mask = depth_io.generate_universal_mask(
        [f.pixels for f in frames], config.mask_intensity_floor
    )
    result.universal_mask = mask
    maps = []
    out_dir = config.output_dir / "depth"
    if write:
        out_dir.mkdir(parents=True, exist_ok=True)
    for frame in frames:
        path = _prediction_path(config, frame)
        result.inputs.append(path)
        imported = _import_one(config, frame, path).with_mask(mask)
        maps.append(imported)
        if write:
            png = out_dir / (frame.path.stem + "_depth.png")
            depth_io.write_gray8_png(png, depth_io.normalize_8bit(imported).values)
            result.outputs.append(png)
    return maps


def _resolve_novelty_radius(config: PipelineConfig, first_cloud: PointCloud) -> float:
    if config.icp.merge_novelty_radius is not None:
        return config.icp.merge_novelty_radius
    radius = median_nn_spacing(first_cloud.points)
    logger.info("merge novelty radius defaulted to frame-0 median spacing: %g", radius)
    return radius


def _run_reconstruct(
    config: PipelineConfig,
    maps: list[DepthMap],
    result: PipelineResult,
    write: bool,
    write_heatmaps: bool,
) -> None:
    clouds = [backproject(m, config.intrinsics) for m in maps]
    result.clouds = clouds
    radius = _resolve_novelty_radius(config, clouds[0])
    result.novelty_radius = radius
    icp_config = dataclasses.replace(config.icp, merge_novelty_radius=radius)

    alignment = align_sequence(clouds, icp_config)
    result.alignment = alignment
    if alignment.aborted_at is not None:
        result.status = "aborted"
        result.abort_stage = "reconstruct:frame_%d" % alignment.aborted_at
        logger.error(
            "alignment aborted at frame %d: %s", alignment.aborted_at, alignment.abort_reason
        )

    aligned = [
        apply_transform(clouds[k], alignment.transforms[k])
        for k in range(len(alignment.transforms))
    ]
    global_map = GlobalMap.empty()
    recon_dir = config.output_dir / "reconstruction"
    if write or write_heatmaps:
        recon_dir.mkdir(parents=True, exist_ok=True)
    for k, cloud in enumerate(aligned):
        global_map = merge(global_map, cloud, radius, frame=k)
        if write and k in config.checkpoint_frames:
            snapshot = recon_dir / ("map_frame_%06d.ply" % k)
            report_io.write_ply(snapshot, global_map.cloud)
            result.outputs.append(snapshot)
    result.global_map = global_map

    if write:
        final = recon_dir / "map_final.ply"
        report_io.write_ply(final, global_map.cloud)
        result.outputs.append(final)
        for k, report in enumerate(alignment.reports, start=1):
            trace = recon_dir / ("icp_trace_%06d.csv" % k)
            report_io.write_trace_csv(trace, report)
            result.outputs.append(trace)

    if write_heatmaps and len(aligned) > 1:
        shape = maps[0].shape
        for k in range(1, len(aligned)):
            report = alignment.reports[k - 1]
            if not report.per_iteration:
                continue
            threshold = report.per_iteration[-1].threshold
            target_index = NeighborIndex(aligned[k - 1].points)
            raster = error_heatmap(aligned[k], target_index, threshold, shape)
            written = report_io.write_heatmap(recon_dir / ("heatmap_%06d" % k), raster)
            result.outputs.extend(written)


def _gt_path(config: PipelineConfig, frame: Frame) -> Path:
    stem = frame.path.stem
    for name in (stem + "_depth.png", stem + ".png"):
        candidate = config.ground_truth_path / name
        if candidate.exists():
            return candidate
    raise FileNotFoundError(
        "no ground-truth raster for frame %s under %s" % (frame.path.name, config.ground_truth_path)
    )


def _run_evaluate(
    config: PipelineConfig,
    frames: list[Frame],
    maps: list[DepthMap],
    result: PipelineResult,
    write: bool,
) -> None:
    if config.ground_truth_path is None:
        logger.info("no GROUND_TRUTH_PATH configured; skipping evaluation")
        return
    gts = []
    for frame in frames:
        path = _gt_path(config, frame)
        result.inputs.append(path)
        gt = depth_io.read_depth_png(path, config.gt_unit_scale)
        gts.append(gt.with_mask(result.universal_mask))
    result.metrics = evaluate_sequence(maps, gts, scale_align=config.scale_align)
    if result.metrics.spikes:
        logger.warning("error spikes flagged at frames %s", result.metrics.spikes)
    if write:
        eval_dir = config.output_dir / "evaluation"
        eval_dir.mkdir(parents=True, exist_ok=True)
        json_path = eval_dir / "metrics.json"
        csv_path = eval_dir / "metrics.csv"
        report_io.write_metrics_json(json_path, result.metrics)
        report_io.write_metrics_csv(csv_path, result.metrics)
        result.outputs.extend([json_path, csv_path])


def run_pipeline(
    config: PipelineConfig,
    stages: tuple[str, ...] = ALL_STAGES,
    config_path: Path | None = None,
) -> PipelineResult:
    """Run the requested stages; upstream data dependencies are computed
    in-memory but only requested stages write their artifacts."""
    result = PipelineResult()
    if config_path is not None:
        result.inputs.append(Path(config_path))
    config.output_dir.mkdir(parents=True, exist_ok=True)
    current = "select"
    try:
        frames = _run_select(config, result)
        result.selected = frames
        if "select" in stages:
            result.staged_paths = stage_frames(
                [f.path for f in frames], config.output_dir / "staging"
            )
            result.outputs.extend(result.staged_paths)
        if not (set(stages) - {"select"}):
            return result

        current = "depth"
        result.depth_maps = _run_depth_import(config, frames, result, write="depth" in stages)

        if "reconstruct" in stages or "heatmap" in stages:
            current = "reconstruct"
            _run_reconstruct(
                config,
                result.depth_maps,
                result,
                write="reconstruct" in stages,
                write_heatmaps="heatmap" in stages,
            )

        if "evaluate" in stages:
            current = "evaluate"
            _run_evaluate(config, frames, result.depth_maps, result, write=True)
    except Exception:
        if "report" in stages:
            _write_manifest(config, result, status="aborted", abort_stage=current)
        raise

    if "report" in stages:
        current = "report"
        _write_manifest(config, result, status=result.status, abort_stage=result.abort_stage)
    return result


def _write_manifest(
    config: PipelineConfig, result: PipelineResult, status: str, abort_stage: str | None
) -> None:
    manifest_path = config.output_dir / "manifest.json"
    report_io.write_run_manifest(
        manifest_path,
        config.as_dict(),
        [p for p in result.inputs if p and Path(p).exists()],
        result.outputs,
        status=status,
        abort_stage=abort_stage,
        base_dir=config.output_dir,
    )
