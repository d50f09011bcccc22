"""Mask-method and DPT-configuration ablations on a corpus.

``--grid masks`` trains one model per mask type (NM, TM, FM, SpecAugment, PM);
``--grid dpt`` sweeps blocks M in {1, 2, 3} and frame length P in {64, 128, 256}.
Each variant gets its own config file, checkpoints, scores and report under
``--work``; the summary lands in ``<work>/<grid>.csv`` with per-machine rows.

    python3 scripts/ablate.py --data runs/desk/data --work runs/ablate --grid masks --profile desk
"""

import argparse
import csv
import json
import sys
from pathlib import Path

from ssdpt.cli import main as ssdpt

MASKS = {
    "NM": {"kind": "NM"},
    "TM": {"kind": "TM", "k": 2, "width": 4},
    "FM": {"kind": "FM", "k": 2, "width": 4},
    "SpecAugment": {"kind": "SpecAugment", "k": 2, "width": 4},
    "PM": {"kind": "PM", "k": 3, "r": 5},
}


def variants(grid):
    if grid == "masks":
        for name, mask in MASKS.items():
            yield name, {"augment": {"mask": mask}}
    else:
        for blocks in (1, 2, 3):
            for P in (64, 128, 256):
                yield f"M{blocks}_P{P}", {"model": {"blocks": blocks}, "segmentation": {"frame_length": P}}


def run(step, *args, fatal=True):
    code = ssdpt([step, *map(str, args)])
    if code and fatal:
        sys.exit(f"ssdpt {step} failed with exit code {code}")
    return code


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--data", required=True)
    ap.add_argument("--work", required=True)
    ap.add_argument("--grid", choices=["masks", "dpt"], required=True)
    ap.add_argument("--profile", default="desk")
    ap.add_argument("--epochs", type=int)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--only", nargs="+", help="run just these variant names")
    args = ap.parse_args()

    work = Path(args.work) / args.grid
    work.mkdir(parents=True, exist_ok=True)
    rows = []
    for name, doc in variants(args.grid):
        if args.only and name not in args.only:
            continue
        vdir = work / name
        vdir.mkdir(exist_ok=True)
        cfg = vdir / "config.json"
        cfg.write_text(json.dumps({"profile": args.profile, **doc}, indent=2))
        common = ["--config", cfg, "--threads", args.threads]
        extra = ["--epochs", args.epochs] if args.epochs is not None else []
        run("train", "--data", args.data, "--out", vdir / "checkpoints", *common, *extra)
        run("score", "--data", args.data, "--checkpoints", vdir / "checkpoints", "--out", vdir / "scores.csv", *common)
        if run("eval", "--scores", vdir / "scores.csv", "--out", vdir / "report", "--method", name, *common,
               fatal=False):
            # e.g. a cell with zero AUC has no harmonic mean; keep the rest of the grid
            rows.append({"method": name, "machine_type": "all", "h-AUC": "nan", "h-pAUC": "nan"})
            print(f"{name:<12} evaluation failed, recorded as nan")
            continue
        with open(vdir / "report" / "machines.csv") as fh:
            rows += list(csv.DictReader(fh))
        with open(vdir / "report" / "table.csv") as fh:
            overall = next(csv.DictReader(fh))
        rows.append({**overall, "machine_type": "all"})
        print(f"{name:<12} h-AUC {overall['h-AUC']}  h-pAUC {overall['h-pAUC']}")
    with open(Path(args.work) / f"{args.grid}.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, ["method", "machine_type", "h-AUC", "h-pAUC"], lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


if __name__ == "__main__":
    main()
