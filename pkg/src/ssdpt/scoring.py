"""Clip-level anomaly scores and thresholding."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import torch
from scipy import special, stats

from .errors import FitError
from .model import DPT
from .segmentation import SegmentBatch

PROB_CLAMP = 1e-12
NORMAL, ANOMALY = "normal", "anomaly"
SCORE_COLUMNS = ["clip_id", "machine_type", "section", "domain", "label", "A_c", "A_r", "A"]


@dataclass(frozen=True)
class ScoreConfig:
    beta: float = 0.001
    threshold: float | None = None

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be >= 0")


@dataclass
class ScoreRecord:
    clip_id: str
    A_c: float
    A_r: float
    A: float
    machine_id: int = 0
    machine_type: str = ""
    section: int = 0
    domain: str = ""
    ground_truth: str | None = None
    beta: float = 0.001
    error: str | None = None


def log_odds_score(p_own):
    """Mean over segments of ln((1 - p) / p), p clamped away from 0 and 1."""
    p = np.clip(np.asarray(p_own, dtype=np.float64), PROB_CLAMP, 1 - PROB_CLAMP)
    return float(np.mean(np.log1p(-p) - np.log(p)))


def mse_score(per_segment_mse):
    return float(np.mean(per_segment_mse))


def total_score(a_c, a_r, beta):
    return a_c + beta * a_r


def decide(score, tau):
    """Anomalous iff score >= tau (boundary inclusive)."""
    return ANOMALY if score >= tau else NORMAL


@torch.no_grad()
def segment_outputs(segments: SegmentBatch, model: DPT, chunk=512):
    """Run the model over every segment without masking or mixup.

    Returns (probabilities (B, I), per-segment reconstruction MSE (B,)).
    """
    dtype = next(model.parameters()).dtype
    probs, mses = [], []
    for start in range(0, len(segments), chunk):
        x = torch.as_tensor(segments.segments[start : start + chunk], dtype=dtype)
        out = model(x)
        probs.append(out.probabilities.double().numpy())
        mses.append(((out.reconstruction - x) ** 2).mean(dim=(-1, -2)).double().numpy())
    return np.concatenate(probs), np.concatenate(mses)


def score_classification(segments: SegmentBatch, model: DPT, true_id=None):
    true_id = segments.machine_id if true_id is None else true_id
    probs, _ = segment_outputs(segments, model)
    return log_odds_score(probs[:, true_id])


def score_reconstruction(segments: SegmentBatch, model: DPT):
    _, mses = segment_outputs(segments, model)
    return mse_score(mses)


def score_clip(segments: SegmentBatch, model: DPT, beta=0.001, true_id=None):
    """(A_c, A_r, A) for one clip from a single pass over its segments."""
    true_id = segments.machine_id if true_id is None else true_id
    if not 0 <= true_id < model.config.num_ids:
        raise ValueError(f"machine id {true_id} outside [0, {model.config.num_ids})")
    probs, mses = segment_outputs(segments, model)
    a_c, a_r = log_odds_score(probs[:, true_id]), mse_score(mses)
    return a_c, a_r, total_score(a_c, a_r, beta)


@dataclass(frozen=True)
class GammaFit:
    shape: float
    scale: float
    shift: float
    converged: bool
    iterations: int

    def quantile(self, q):
        return float(stats.gamma.ppf(q, self.shape, scale=self.scale)) + self.shift


@dataclass(frozen=True)
class GammaThreshold:
    threshold: float
    fit: GammaFit

    def __float__(self):
        return self.threshold


def fit_gamma(scores, max_iter=100, tol=1e-10) -> GammaFit:
    """Maximum-likelihood gamma fit with Newton steps on the shape equation.

    Scores with non-positive values are shifted onto positive support first;
    the shift is recorded and undone by :meth:`GammaFit.quantile`.
    """
    x = np.asarray(scores, dtype=np.float64)
    if x.size < 10:
        raise FitError(f"need at least 10 scores for a gamma fit, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise FitError("scores contain non-finite values")
    if np.ptp(x) == 0:
        raise FitError("scores have zero variance")
    shift = 0.0
    if x.min() <= 0:
        shift = x.min() - 1e-6 * max(1.0, np.ptp(x))
        x = x - shift
    mean, var = x.mean(), x.var()
    s = np.log(mean) - np.mean(np.log(x))
    a_mm = mean**2 / var
    a = a_mm
    for it in range(1, max_iter + 1):
        f = np.log(a) - special.digamma(a) - s
        df = 1.0 / a - special.polygamma(1, a)
        step = f / df
        a_new = a - step
        if a_new <= 0:
            a_new = a / 2
        if abs(a_new - a) <= tol * a:
            a = a_new
            return GammaFit(float(a), float(mean / a), float(shift), True, it)
        a = a_new
    return GammaFit(float(a_mm), float(var / mean), float(shift), False, max_iter)


def fit_gamma_threshold(train_scores, p=0.1) -> GammaThreshold:
    """Score threshold at false-positive rate ``p`` under a fitted gamma model."""
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    fit = fit_gamma(train_scores)
    return GammaThreshold(fit.quantile(1 - p), fit)


def _fmt(v):
    return repr(float(v))


def write_scores_csv(path, records):
    """One row per clip, sorted by clip_id; failed clips carry ``error:<reason>`` in A."""
    rows = sorted(records, key=lambda r: r.clip_id)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCORE_COLUMNS)
        for r in rows:
            label = r.ground_truth or "unknown"
            if r.error:
                w.writerow([r.clip_id, r.machine_type, f"{r.section:02d}", r.domain, label, "", "", f"error:{r.error}"])
            else:
                w.writerow([r.clip_id, r.machine_type, f"{r.section:02d}", r.domain, label,
                            _fmt(r.A_c), _fmt(r.A_r), _fmt(r.A)])


def read_scores_csv(path):
    """Returns (records, error_rows)."""
    records, errors = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != SCORE_COLUMNS:
            raise ValueError(f"{path}: expected header {','.join(SCORE_COLUMNS)}, got {reader.fieldnames}")
        for lineno, row in enumerate(reader, start=2):
            if row["A"].startswith("error"):
                errors.append(row)
                continue
            try:
                rec = ScoreRecord(
                    clip_id=row["clip_id"], A_c=float(row["A_c"]), A_r=float(row["A_r"]), A=float(row["A"]),
                    machine_type=row["machine_type"], section=int(row["section"]), domain=row["domain"],
                    ground_truth=row["label"] if row["label"] in (NORMAL, ANOMALY) else None,
                )
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed row ({exc})") from exc
            records.append(rec)
    return records, errors
