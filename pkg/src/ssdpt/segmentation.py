"""Overlapped fixed-length segmentation of log-Mel features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .features import LogMelFeature

STRICT = "strict"
PADDED = "padded"


@dataclass
class SegmentBatch:
    """B segments of P frames by F bands cut from one clip.

    Every segment carries the clip's machine ID.
    """

    segments: np.ndarray  # (B, P, F)
    frame_length: int
    hop_length: int
    machine_id: int
    clip_id: str = ""

    def __post_init__(self):
        if self.segments.ndim != 3 or self.segments.shape[0] < 1:
            raise ShapeError(f"segments must be (B>=1, P, F), got {self.segments.shape}")

    def __len__(self):
        return self.segments.shape[0]

    @property
    def starts(self):
        return np.arange(len(self)) * self.hop_length


def segment_count(T, P, H, mode=STRICT):
    if mode == STRICT:
        return (T - P) // H + 1 if T >= P else 0
    if mode == PADDED:
        return T // H
    raise ValueError(f"unknown segmentation mode {mode!r}")


def segment(feat: LogMelFeature | np.ndarray, P, H, mode=STRICT, machine_id=0, clip_id=None) -> SegmentBatch:
    """Cut ``feat`` into segments of ``P`` frames starting every ``H`` frames.

    ``strict`` keeps only windows that lie inside the feature, giving
    ``(T - P) // H + 1`` segments. ``padded`` produces ``T // H`` segments and
    fills frames past the end by repeating the final frame.
    """
    values = feat.values if isinstance(feat, LogMelFeature) else np.asarray(feat, dtype=np.float64)
    if clip_id is None:
        clip_id = feat.source_id if isinstance(feat, LogMelFeature) else ""
    if values.ndim != 2:
        raise ShapeError(f"feature must be (T, F), got {values.shape}")
    T = values.shape[0]
    if P < 1 or H < 1:
        raise ValueError("P and H must be >= 1")
    if T < 1:
        raise ShapeError("feature has no frames")
    B = segment_count(T, P, H, mode)
    if mode == STRICT:
        if T < P:
            raise ShapeError(f"{clip_id or 'feature'}: {T} frames is shorter than segment length {P}")
        windows = np.lib.stride_tricks.sliding_window_view(values, P, axis=0)[::H][:B]
        segs = np.ascontiguousarray(windows.transpose(0, 2, 1))
    else:
        if B < 1:
            raise ShapeError(f"{clip_id or 'feature'}: {T} frames yields no segments at hop {H}")
        rows = np.minimum(np.arange(B)[:, None] * H + np.arange(P)[None, :], T - 1)
        segs = values[rows]
    return SegmentBatch(segs, P, H, int(machine_id), clip_id)
