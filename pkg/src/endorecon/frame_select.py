"""Frame filtering by external quality score and by red-channel intensity.

Both rules keep a frame only when its statistic is strictly greater than the
configured threshold, and neither ever reorders the sequence.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")
VIDEO_EXTENSIONS = (".mp4", ".avi", ".mov", ".mkv", ".webm")


@dataclass
class Frame:
    """One input frame: sequence ordinal, origin path, and 8-bit RGB pixels."""

    index: int
    path: Path
    pixels: np.ndarray

    def __post_init__(self) -> None:
        self.pixels = np.asarray(self.pixels)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError("frame pixels must be HxWx3, got shape %r" % (self.pixels.shape,))


@dataclass
class QualityScoreTable:
    """Externally produced per-frame quality scores keyed by frame index."""

    entries: dict[int, float] = field(default_factory=dict)

    @classmethod
    def read_csv(cls, path: str | Path) -> "QualityScoreTable":
        """Load the sidecar CSV with header ``frame_index,score``."""
        entries: dict[int, float] = {}
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != [
                "frame_index",
                "score",
            ]:
                raise ValueError("%s: expected CSV header 'frame_index,score'" % path)
            for row in reader:
                entries[int(row["frame_index"])] = float(row["score"])
        return cls(entries)


def list_frame_paths(directory: str | Path) -> list[Path]:
    """Image files of a directory in lexicographic order.

    Video containers are rejected: extract frames with external tooling
    (e.g. ffmpeg) and point the pipeline at the resulting image directory.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError("frame directory does not exist: %s" % directory)
    paths = []
    for p in sorted(directory.iterdir(), key=lambda p: p.name):
        suffix = p.suffix.lower()
        if suffix in VIDEO_EXTENSIONS:
            raise ValueError(
                "%s looks like a video file; extract frames with external tooling "
                "(e.g. ffmpeg) and pass the image directory" % p
            )
        if suffix in IMAGE_EXTENSIONS:
            paths.append(p)
    return paths


def load_frames(paths: list[Path]) -> list[Frame]:
    frames = []
    for i, p in enumerate(paths):
        img = Image.open(p).convert("RGB")
        frames.append(Frame(index=i, path=p, pixels=np.asarray(img, dtype=np.uint8)))
    return frames


def select_by_score(
    frames: list[Frame], scores: QualityScoreTable, threshold: float
) -> list[Frame]:
    """Keep frames whose quality score is strictly above the threshold."""
    for frame in frames:
        if frame.index not in scores.entries:
            raise ValueError(
                "no quality score for frame %d (%s)" % (frame.index, frame.path.name)
            )
    return [f for f in frames if scores.entries[f.index] > threshold]


def select_by_rchannel(frames: list[Frame], threshold: float) -> list[Frame]:
    """Keep frames whose mean red-channel intensity is strictly above the threshold."""
    kept = []
    for frame in frames:
        if frame.pixels.size == 0:
            raise ValueError("frame %d has an empty raster" % frame.index)
        if float(frame.pixels[:, :, 0].mean()) > threshold:
            kept.append(frame)
    return kept
