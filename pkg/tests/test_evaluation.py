import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssdpt.evaluation import auc, build_report, harmonic_mean, pauc, roc_points
from ssdpt.scoring import ScoreRecord


def brute_pairs(anom, norm, tie_policy):
    total = 0.0
    for a in anom:
        for n in norm:
            if a > n:
                total += 1.0
            elif a == n and tie_policy == "half":
                total += 0.5
    return total / (len(anom) * len(norm))


def brute_pauc(anom, norm, p, tie_policy):
    keep = sorted(norm, reverse=True)[: math.floor(p * len(norm))]
    return brute_pairs(anom, keep, tie_policy)


def test_auc_examples():
    assert auc([5, 6], [1, 2]) == 1.0
    assert auc([1, 1], [1, 1], "strict") == 0.0
    assert auc([1, 1], [1, 1], "half") == 0.5
    assert auc([3, 1], [2, 0], "strict") == 0.75


def test_auc_empty():
    with pytest.raises(ValueError):
        auc([], [1.0])


def test_pauc_examples():
    anom, norm = [5, 4], [3, 2, 1, 0.5, 0.2, 0.1, 0.05, 0.01, 0.0, -1]
    assert pauc(anom, norm, 0.1) == 1.0
    assert pauc([3, 1], [2, 0], 1.0) == auc([3, 1], [2, 0])
    with pytest.raises(ValueError):
        pauc([1], [0, 0, 0], 0.1)


def random_instance(rng):
    na, nn_ = rng.integers(1, 51, size=2)
    # coarse grid so ties occur
    return rng.integers(0, 20, na).astype(float), rng.integers(0, 20, nn_).astype(float)


def test_brute_force_equivalence_1000():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        anom, norm = random_instance(rng)
        for tp in ("strict", "half"):
            assert auc(anom, norm, tp) == brute_pairs(anom, norm, tp)
            assert pauc(anom, norm, 1.0, tp) == auc(anom, norm, tp)
            if math.floor(0.1 * len(norm)) >= 1:
                assert pauc(anom, norm, 0.1, tp) == brute_pauc(anom, norm, 0.1, tp)


@settings(max_examples=200)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=30), st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=30))
def test_auc_swap_symmetry(a, n):
    assert abs(auc(a, n, "half") - (1 - auc(n, a, "half"))) < 1e-12


@settings(max_examples=200)
@given(st.lists(st.integers(-1000, 1000), min_size=1, max_size=30),
       st.lists(st.integers(-1000, 1000), min_size=1, max_size=30))
def test_auc_monotone_invariance(a, n):
    # cubic plus offset is exact, hence strictly increasing, on these integers
    f = lambda v: np.asarray(v, dtype=np.float64) ** 3 + 7.0
    assert auc(f(a), f(n)) == auc(a, n)


def test_harmonic_mean():
    assert harmonic_mean([0.7, 0.7, 0.7]) == pytest.approx(0.7, abs=1e-15)
    assert abs(harmonic_mean([0.5, 1.0]) - 2 / 3) < 1e-12
    assert harmonic_mean([0.619]) == 0.619
    with pytest.raises(ValueError, match="cell x"):
        harmonic_mean([0.5, 0.0], ["cell y", "cell x"])


def test_roc_points():
    pts = roc_points([3, 1], [2, 0])
    assert pts[0] == (0.0, 0.0) and pts[-1] == (1.0, 1.0)
    assert (0.0, 0.5) in pts


def rec(mt, sec, dom, gt, a):
    return ScoreRecord(f"{mt}/{sec}{dom}{gt}{a}", 0.0, 0.0, a, 0, mt, sec, dom, gt)


def test_report_single_cell():
    recs = [rec("fan", 0, "source", "anomaly", 3), rec("fan", 0, "source", "anomaly", 1),
            rec("fan", 0, "source", "normal", 2), rec("fan", 0, "source", "normal", 0)]
    r = build_report(recs, p=1.0)
    assert r.h_auc == r.cells[0].auc == 0.75
    assert r.machines["fan"]["h_pauc"] == 0.75


def test_report_harmonic_over_cells():
    recs = [rec("fan", 0, "source", "anomaly", 1), rec("fan", 0, "source", "normal", 1),
            rec("fan", 1, "source", "anomaly", 2), rec("fan", 1, "source", "normal", 1)]
    r = build_report(recs, p=1.0, tie_policy="half")
    assert [c.auc for c in r.cells] == [0.5, 1.0]
    assert abs(r.machines["fan"]["h_auc"] - 2 / 3) < 1e-12
    assert abs(r.h_auc - 2 / 3) < 1e-12
    d = r.to_dict()
    assert set(d) >= {"overall", "machines", "cells"}


def test_report_missing_class():
    with pytest.raises(ValueError, match="no anomaly"):
        build_report([rec("fan", 0, "source", "normal", 1)], p=1.0)
    with pytest.raises(ValueError, match="ground truth"):
        build_report([ScoreRecord("x", 0, 0, 0, machine_type="fan")], p=1.0)
