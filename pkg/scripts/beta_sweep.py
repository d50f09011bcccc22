"""Per-machine h-AUC / h-pAUC as a function of the score weight beta.

A = A_c + beta * A_r is linear in beta, so the sweep only needs one score CSV
(any beta) and recomputes A from its A_c and A_r columns.

    python3 scripts/beta_sweep.py --scores runs/desk/scores.csv --out runs/desk/beta.csv
"""

import argparse
import csv
from dataclasses import replace

from ssdpt.evaluation import build_report
from ssdpt.scoring import read_scores_csv, total_score

DEFAULT_BETAS = [0.0, 1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 5e-2, 1e-1, 1.0]


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--scores", required=True)
    ap.add_argument("--out", required=True)
    ap.add_argument("--betas", type=float, nargs="+", default=DEFAULT_BETAS)
    ap.add_argument("--p", type=float, default=0.1)
    ap.add_argument("--tie-policy", default="half", choices=["strict", "half"])
    args = ap.parse_args()

    records, _ = read_scores_csv(args.scores)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["beta", "machine_type", "h-AUC", "h-pAUC"])
        for beta in args.betas:
            rescored = [replace(r, A=total_score(r.A_c, r.A_r, beta), beta=beta) for r in records]
            try:
                rep = build_report(rescored, args.p, args.tie_policy)
            except ValueError as exc:
                # a zero-AUC cell has no harmonic mean; keep the sweep going
                print(f"beta={beta:<8g} skipped: {exc}")
                w.writerow([beta, "all", "nan", "nan"])
                continue
            for mt, m in sorted(rep.machines.items()):
                w.writerow([beta, mt, f"{m['h_auc']:.6f}", f"{m['h_pauc']:.6f}"])
            w.writerow([beta, "all", f"{rep.h_auc:.6f}", f"{rep.h_pauc:.6f}"])
            print(f"beta={beta:<8g} h-AUC {rep.h_auc:.4f}  h-pAUC {rep.h_pauc:.4f}")


if __name__ == "__main__":
    main()
