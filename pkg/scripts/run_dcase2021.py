"""Full-data run on the DCASE 2021 task 2 development set.

Expects the usual layout (``<data>/<machine>/{train,source_test,target_test}``)
and trains one model per machine type with the default settings (100 epochs,
P=64). This takes days on a CPU; there is no expected number to hit here, the
script only produces the overall and per-machine tables.

    python3 scripts/run_dcase2021.py --data /path/to/dev_data --work runs/dcase
"""

import argparse
import csv
import sys
from pathlib import Path

from ssdpt.cli import main as ssdpt


def run(step, *args):
    code = ssdpt([step, *map(str, args)])
    if code:
        sys.exit(f"ssdpt {step} failed with exit code {code}")


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--data", required=True, help="DCASE 2021 task 2 development data root")
    ap.add_argument("--work", required=True, help="output directory")
    ap.add_argument("--config", help="run config JSON; defaults profile if omitted")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--method", default="SSDPT")
    args = ap.parse_args()

    work = Path(args.work)
    common = ["--threads", args.threads] + (["--config", args.config] if args.config else [])
    run("train", "--data", args.data, "--out", work / "checkpoints", *common)
    run("score", "--data", args.data, "--checkpoints", work / "checkpoints", "--out", work / "scores.csv", *common)
    run("eval", "--scores", work / "scores.csv", "--out", work / "report", "--method", args.method, *common)

    # overall table: method, h-AUC, h-pAUC
    for name in ("table.csv", "machines.csv"):
        with open(work / "report" / name) as fh:
            rows = list(csv.reader(fh))
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        print()
        for r in rows:
            print("  ".join(c.ljust(w) for c, w in zip(r, widths)))


if __name__ == "__main__":
    main()
