"""AUC / pAUC and their harmonic-mean aggregation over sections and domains."""

from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field

import numpy as np

from .scoring import ANOMALY, NORMAL, ScoreRecord

TIE_POLICIES = ("strict", "half")


def _pair_score(anomaly_scores, normal_scores, tie_policy):
    a = np.asarray(anomaly_scores, dtype=np.float64)
    n = np.sort(np.asarray(normal_scores, dtype=np.float64))
    if a.size == 0 or n.size == 0:
        raise ValueError("AUC needs at least one anomalous and one normal score")
    if tie_policy not in TIE_POLICIES:
        raise ValueError(f"tie_policy must be one of {TIE_POLICIES}")
    below = np.searchsorted(n, a, side="left")
    wins = below.sum()
    if tie_policy == "half":
        ties = (np.searchsorted(n, a, side="right") - below).sum()
        return (wins + 0.5 * ties) / (a.size * n.size)
    return wins / (a.size * n.size)


def auc(anomaly_scores, normal_scores, tie_policy="half"):
    """Fraction of (anomalous, normal) pairs ranked with the anomalous clip higher."""
    return float(_pair_score(anomaly_scores, normal_scores, tie_policy))


def pauc(anomaly_scores, normal_scores, p=0.1, tie_policy="half"):
    """AUC against only the floor(p * N-) highest-scoring normal clips."""
    n = np.sort(np.asarray(normal_scores, dtype=np.float64))
    keep = math.floor(p * n.size)
    if keep < 1:
        raise ValueError(f"p={p} keeps no normal clips out of {n.size}")
    return float(_pair_score(anomaly_scores, n[n.size - keep :], tie_policy))


def harmonic_mean(values, labels=None):
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("harmonic mean of an empty sequence")
    bad = np.flatnonzero(v <= 0)
    if bad.size:
        where = labels[bad[0]] if labels is not None else f"index {bad[0]}"
        raise ValueError(f"harmonic mean needs positive values; {where} is {v[bad[0]]}")
    return float(v.size / np.sum(1.0 / v))


def roc_points(anomaly_scores, normal_scores):
    """(FPR, TPR) at every distinct threshold, from (0, 0) to (1, 1)."""
    a = np.asarray(anomaly_scores, dtype=np.float64)
    n = np.asarray(normal_scores, dtype=np.float64)
    thresholds = np.unique(np.concatenate([a, n]))[::-1]
    pts = [(0.0, 0.0)]
    for t in thresholds:
        pts.append((float(np.mean(n >= t)), float(np.mean(a >= t))))
    return pts


@dataclass
class CellResult:
    machine_type: str
    section: int
    domain: str
    auc: float
    pauc: float
    n_normal: int
    n_anomaly: int


@dataclass
class EvalReport:
    cells: list
    machines: dict  # machine_type -> {"h_auc", "h_pauc"}
    h_auc: float
    h_pauc: float
    p: float = 0.1
    tie_policy: str = "half"
    skipped: list = field(default_factory=list)

    def to_dict(self):
        return {
            "p": self.p, "tie_policy": self.tie_policy,
            "overall": {"h_auc": self.h_auc, "h_pauc": self.h_pauc},
            "machines": self.machines,
            "cells": [asdict(c) for c in self.cells],
            "skipped": self.skipped,
        }

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_table_csv(self, path, method="SSDPT"):
        """Overall row in the layout of a method comparison table."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "h-AUC", "h-pAUC"])
            w.writerow([method, f"{self.h_auc:.6f}", f"{self.h_pauc:.6f}"])

    def write_machines_csv(self, path, method="SSDPT"):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "machine_type", "h-AUC", "h-pAUC"])
            for mt in sorted(self.machines):
                m = self.machines[mt]
                w.writerow([method, mt, f"{m['h_auc']:.6f}", f"{m['h_pauc']:.6f}"])

    def write_cells_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["machine_type", "section", "domain", "AUC", "pAUC", "n_normal", "n_anomaly"])
            for c in self.cells:
                w.writerow([c.machine_type, f"{c.section:02d}", c.domain, f"{c.auc:.6f}", f"{c.pauc:.6f}",
                            c.n_normal, c.n_anomaly])


def group_cells(records):
    cells = defaultdict(lambda: {NORMAL: [], ANOMALY: []})
    for r in records:
        if r.ground_truth not in (NORMAL, ANOMALY):
            raise ValueError(f"{r.clip_id}: missing ground truth label")
        cells[(r.machine_type, r.section, r.domain)][r.ground_truth].append(r.A)
    return dict(sorted(cells.items()))


def build_report(records: list[ScoreRecord], p=0.1, tie_policy="half") -> EvalReport:
    cells = []
    for (mt, sec, dom), groups in group_cells(records).items():
        if not groups[NORMAL] or not groups[ANOMALY]:
            missing = NORMAL if not groups[NORMAL] else ANOMALY
            raise ValueError(f"cell ({mt}, section {sec:02d}, {dom}) has no {missing} clips")
        cells.append(CellResult(
            mt, sec, dom,
            auc(groups[ANOMALY], groups[NORMAL], tie_policy),
            pauc(groups[ANOMALY], groups[NORMAL], p, tie_policy),
            len(groups[NORMAL]), len(groups[ANOMALY]),
        ))
    if not cells:
        raise ValueError("no scored clips to evaluate")

    def label(c):
        return f"cell ({c.machine_type}, section {c.section:02d}, {c.domain})"

    machines = {}
    for mt in sorted({c.machine_type for c in cells}):
        sub = [c for c in cells if c.machine_type == mt]
        machines[mt] = {
            "h_auc": harmonic_mean([c.auc for c in sub], [label(c) for c in sub]),
            "h_pauc": harmonic_mean([c.pauc for c in sub], [label(c) for c in sub]),
        }
    return EvalReport(
        cells, machines,
        harmonic_mean([c.auc for c in cells], [label(c) for c in cells]),
        harmonic_mean([c.pauc for c in cells], [label(c) for c in cells]),
        p, tie_policy,
    )


def write_roc_csv(path, records):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["machine_type", "section", "domain", "fpr", "tpr"])
        for (mt, sec, dom), groups in group_cells(records).items():
            if groups[NORMAL] and groups[ANOMALY]:
                for fpr, tpr in roc_points(groups[ANOMALY], groups[NORMAL]):
                    w.writerow([mt, f"{sec:02d}", dom, f"{fpr:.6f}", f"{tpr:.6f}"])
