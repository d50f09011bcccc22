"""Desk-scale end-to-end run on the synthetic corpus.

Synthesizes 3 machine types x 3 sections (40 normal training clips and 20 normal
plus 20 anomalous test clips per section), trains with the ``desk`` profile and
prints the evaluation tables. About 6 minutes on one CPU core.

    python3 scripts/desk_run.py --work runs/desk
"""

import argparse
import sys
from pathlib import Path

from ssdpt.cli import main as ssdpt


def run(step, *args):
    code = ssdpt([step, *map(str, args)])
    if code:
        sys.exit(f"ssdpt {step} failed with exit code {code}")


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--work", required=True)
    ap.add_argument("--seed", type=int, default=1, help="corpus seed")
    ap.add_argument("--train-seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    work = Path(args.work)
    run("synth", "--out", work / "data", "--machine-types", 3, "--sections", 3, "--clips", 40,
        "--test-clips", 40, "--anomaly-fraction", 0.5, "--seed", args.seed)
    run("train", "--profile", "desk", "--data", work / "data", "--out", work / "checkpoints",
        "--seed", args.train_seed, "--threads", args.threads, "-v")
    run("score", "--data", work / "data", "--checkpoints", work / "checkpoints", "--out", work / "scores.csv",
        "--threads", args.threads)
    run("eval", "--scores", work / "scores.csv", "--out", work / "report")
    print((work / "report" / "machines.csv").read_text())


if __name__ == "__main__":
    main()
