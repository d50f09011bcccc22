"""Mixup and spectrogram masking used during self-supervised training."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ShapeError

MASK_KINDS = ("NM", "TM", "FM", "SpecAugment", "PM")


@dataclass(frozen=True)
class MaskSpec:
    """Masking recipe.

    ``width`` is the run length of TM/FM masks (SpecAugment uses it for both
    axes) and ``r`` the side of PM squares.
    """

    kind: str = "PM"
    k: int = 3
    width: int = 4
    r: int = 5
    fill_value: float = 0.0

    def __post_init__(self):
        if self.kind not in MASK_KINDS:
            raise ValueError(f"mask kind must be one of {MASK_KINDS}, got {self.kind!r}")
        if self.k < 0 or self.width < 1 or self.r < 1:
            raise ValueError("mask k must be >= 0, width and r >= 1")
        if self.kind == "NM" and self.k != 0:
            object.__setattr__(self, "k", 0)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if d.get("kind") == "NM":
            d.setdefault("k", 0)
        return cls(**d)

    def to_dict(self):
        return asdict(self)

    def max_coverage(self, P, F):
        """Upper bound on the number of masked cells in a P x F map."""
        if self.kind == "NM":
            return 0
        if self.kind == "TM":
            return self.k * self.width * F
        if self.kind == "FM":
            return self.k * self.width * P
        if self.kind == "SpecAugment":
            return self.k * self.width * (F + P)
        return self.k * self.r**2

    def check(self, P, F):
        if self.kind in ("TM", "SpecAugment") and self.width > P:
            raise ValueError(f"time mask width {self.width} exceeds {P} frames")
        if self.kind in ("FM", "SpecAugment") and self.width > F:
            raise ValueError(f"frequency mask width {self.width} exceeds {F} bins")
        if self.kind == "PM" and self.r > min(P, F):
            raise ValueError(f"patch size {self.r} exceeds min({P}, {F})")


def draw_lambda(a, rng: np.random.Generator, size=None):
    """Mixup weight from Beta(a, a), clamped to [0, 1]."""
    if not a > 0:
        raise ValueError(f"Beta concentration must be positive, got {a}")
    return np.clip(rng.beta(a, a, size=size), 0.0, 1.0)


def mixup(x_i, x_j, l_i, l_j, lam):
    """Convex combination of two features and of their (one-hot or soft) labels."""
    x_i, x_j = np.asarray(x_i, dtype=np.float64), np.asarray(x_j, dtype=np.float64)
    l_i, l_j = np.asarray(l_i, dtype=np.float64), np.asarray(l_j, dtype=np.float64)
    if x_i.shape != x_j.shape or l_i.shape != l_j.shape:
        raise ShapeError("mixup operands must have equal shapes")
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    if lam == 1.0:
        return x_i.copy(), l_i.copy()
    if lam == 0.0:
        return x_j.copy(), l_j.copy()
    return lam * x_i + (1.0 - lam) * x_j, lam * l_i + (1.0 - lam) * l_j


def generate_mask(spec: MaskSpec, P, F, rng: np.random.Generator) -> np.ndarray:
    """Boolean (P, F) map, True where the feature is masked."""
    spec.check(P, F)
    mask = np.zeros((P, F), dtype=bool)
    if spec.kind in ("TM", "SpecAugment"):
        for t0 in rng.integers(0, P - spec.width + 1, size=spec.k):
            mask[t0 : t0 + spec.width, :] = True
    if spec.kind in ("FM", "SpecAugment"):
        for f0 in rng.integers(0, F - spec.width + 1, size=spec.k):
            mask[:, f0 : f0 + spec.width] = True
    if spec.kind == "PM":
        t0s = rng.integers(0, P - spec.r + 1, size=spec.k)
        f0s = rng.integers(0, F - spec.r + 1, size=spec.k)
        for t0, f0 in zip(t0s, f0s):
            mask[t0 : t0 + spec.r, f0 : f0 + spec.r] = True
    return mask


def apply_mask(x, mask, fill_value=0.0):
    x = np.asarray(x)
    if x.shape[-mask.ndim :] != mask.shape:
        raise ShapeError(f"mask shape {mask.shape} does not match feature shape {x.shape}")
    return np.where(mask, fill_value, x)
