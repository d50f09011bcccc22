import math

import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from gradcheck import TOY
from ssdpt.errors import FitError
from ssdpt.model import init_model
from ssdpt.scoring import (
    ScoreRecord,
    decide,
    fit_gamma,
    fit_gamma_threshold,
    log_odds_score,
    mse_score,
    read_scores_csv,
    score_classification,
    score_clip,
    score_reconstruction,
    segment_outputs,
    total_score,
    write_scores_csv,
)
from ssdpt.segmentation import SegmentBatch


def test_log_odds_examples():
    assert log_odds_score([0.5, 0.5, 0.5]) == 0.0
    assert abs(log_odds_score([0.9]) - math.log(1 / 9)) < 1e-12
    assert abs(log_odds_score([0.9]) - (-2.1972)) < 1e-4
    assert abs(log_odds_score([0.9, 0.1])) < 1e-12
    assert math.isfinite(log_odds_score([0.0, 1.0]))


@given(st.floats(1e-6, 1 - 1e-6), st.floats(1e-6, 1 - 1e-6))
def test_log_odds_decreasing(p, q):
    if p < q:
        assert log_odds_score([p]) > log_odds_score([q])


def test_mse_score():
    assert abs(mse_score([0.2, 0.4]) - 0.3) < 1e-15


def test_total_score_and_decide():
    assert total_score(-2.0, 100.0, 0.0) == -2.0
    assert abs(total_score(-2.0, 100.0, 0.001) - (-1.9)) < 1e-12
    assert decide(1.5, 1.5) == "anomaly"
    assert decide(0.5, 1.5) == "normal"
    assert decide(2.5, 1.5) == "anomaly"


@given(st.floats(-50, 50), st.floats(0, 100), st.floats(0, 1), st.floats(0, 1))
def test_total_score_linear_in_beta(a_c, a_r, b1, b2):
    lhs = total_score(a_c, a_r, b1 + b2) - a_c
    rhs = (total_score(a_c, a_r, b1) - a_c) + (total_score(a_c, a_r, b2) - a_c)
    assert abs(lhs - rhs) < 1e-9


@pytest.fixture(scope="module")
def toy_clip():
    model = init_model(TOY, seed=0, dtype=torch.float64)
    segs = np.random.default_rng(0).standard_normal((5, 8, 6))
    return model, SegmentBatch(segs, 8, 1, 1, "c")


def test_clip_scores_match_manual(toy_clip):
    model, batch = toy_clip
    with torch.no_grad():
        out = model(torch.from_numpy(batch.segments))
    p = out.probabilities[:, 1].numpy()
    expected_c = np.mean(np.log((1 - p) / p))
    expected_r = np.mean(((out.reconstruction.numpy() - batch.segments) ** 2).mean(axis=(1, 2)))
    assert abs(score_classification(batch, model) - expected_c) < 1e-12
    assert abs(score_reconstruction(batch, model) - expected_r) < 1e-12
    a_c, a_r, a = score_clip(batch, model, beta=0.001)
    assert a == a_c + 0.001 * a_r


def test_clip_scores_order_invariant(toy_clip):
    model, batch = toy_clip
    flipped = SegmentBatch(batch.segments[::-1].copy(), 8, 1, 1, "c")
    np.testing.assert_allclose(score_clip(flipped, model), score_clip(batch, model), rtol=1e-12)


def test_segment_outputs_chunking(toy_clip):
    model, batch = toy_clip
    a = segment_outputs(batch, model, chunk=2)
    b = segment_outputs(batch, model, chunk=512)
    np.testing.assert_allclose(a[0], b[0], rtol=1e-12)
    np.testing.assert_allclose(a[1], b[1], rtol=1e-12)


def test_score_clip_rejects_bad_id(toy_clip):
    model, batch = toy_clip
    with pytest.raises(ValueError):
        score_clip(batch, model, true_id=3)


def test_gamma_threshold_exponential():
    x = np.random.default_rng(0).exponential(1.0, 100_000)
    assert abs(fit_gamma_threshold(x, 0.1).threshold - math.log(10)) < 0.05


def test_gamma_mle_recovers_parameters():
    x = np.random.default_rng(1).gamma(4.0, 2.0, 100_000)
    fit = fit_gamma(x)
    assert fit.converged
    assert abs(fit.shape - 4.0) < 0.1
    assert abs(fit.scale - 2.0) < 0.05


def test_gamma_mle_matches_scipy():
    from scipy import stats

    x = np.random.default_rng(2).gamma(0.7, 3.0, 5000)
    a, _, scale = stats.gamma.fit(x, floc=0)
    fit = fit_gamma(x)
    assert abs(fit.shape - a) < 1e-4 * a and abs(fit.scale - scale) < 1e-4 * scale


def test_gamma_shift_for_negative_scores():
    x = np.random.default_rng(3).gamma(3.0, 1.0, 20_000) - 5.0
    thr = fit_gamma_threshold(x, 0.1)
    assert thr.fit.shift < -4.9
    # about 10% of the training scores lie above the threshold
    assert abs(np.mean(x >= thr.threshold) - 0.1) < 0.02


def test_gamma_errors():
    with pytest.raises(FitError):
        fit_gamma(np.full(50, 3.0))
    with pytest.raises(FitError):
        fit_gamma(np.arange(5.0))


def test_score_csv_roundtrip(tmp_path):
    recs = [
        ScoreRecord("pump/b", -1.25, 3.5, -1.2465, 0, "pump", 1, "target", "anomaly"),
        ScoreRecord("fan/a", 0.1, 2.0, 0.102, 0, "fan", 0, "source", "normal"),
        ScoreRecord("fan/c", math.nan, math.nan, math.nan, 0, "fan", 2, "source", "normal", error="too_short"),
    ]
    path = tmp_path / "s.csv"
    write_scores_csv(path, recs)
    lines = path.read_text().splitlines()
    assert lines[0] == "clip_id,machine_type,section,domain,label,A_c,A_r,A"
    assert [l.split(",")[0] for l in lines[1:]] == ["fan/a", "fan/c", "pump/b"]
    back, errors = read_scores_csv(path)
    assert [r.clip_id for r in back] == ["fan/a", "pump/b"]
    assert back[1].A == -1.2465 and back[1].section == 1 and back[1].ground_truth == "anomaly"
    assert len(errors) == 1 and errors[0]["A"].startswith("error:")
