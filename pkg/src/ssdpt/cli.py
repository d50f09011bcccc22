"""Command-line entry point: ``ssdpt {synth,features,train,score,eval}``.

Exit codes: 0 success, 1 runtime I/O failure, 2 usage or config error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import torch

from .config import ConfigError, RunConfig, from_dict, load_config, override
from .dataset import LabelSpace, SynthSpec, scan_dcase, synth_corpus
from .errors import DatasetError, FitError, NonFiniteError, ShapeError
from .evaluation import build_report, write_roc_csv
from .features import FeatureExtractor, write_feature
from .model import init_model, load_checkpoint, parameter_digest, save_checkpoint
from .pipeline import extract_all, model_config_for, score_machine, train_machine
from .scoring import decide, fit_gamma_threshold, read_scores_csv, write_scores_csv

log = logging.getLogger("ssdpt")

EXIT_OK, EXIT_IO, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _run_config(args) -> RunConfig:
    return load_config(args.config, args.profile)


def _setup_threads(n):
    if n < 1:
        raise UsageError("--threads must be >= 1")
    torch.set_num_threads(n)


def _select_types(labels: LabelSpace, wanted):
    if not wanted:
        return labels.machine_types
    missing = sorted(set(wanted) - set(labels.machine_types))
    if missing:
        raise UsageError(f"machine type(s) not in corpus: {', '.join(missing)}")
    return [mt for mt in labels.machine_types if mt in wanted]


def cmd_synth(args):
    spec = SynthSpec(
        machine_types=args.machine_types, sections=args.sections, clips_per_section=args.clips,
        test_clips_per_section=args.test_clips, anomaly_fraction_test=args.anomaly_fraction,
        duration_s=args.duration, target_train_clips=args.target_train_clips, seed=args.seed,
    )
    try:
        spec.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    metas = synth_corpus(args.out, spec)
    print(f"wrote {len(metas)} clips to {args.out}")
    return EXIT_OK


def cmd_features(args):
    cfg = _run_config(args)
    clips = scan_dcase(args.data)
    if args.split != "all":
        clips = [c for c in clips if c.split == args.split]
    out = Path(args.out)
    feats = extract_all(clips, FeatureExtractor(cfg.features), args.threads)
    for clip, feat in zip(clips, feats):
        dest = out / clip.machine_type / clip.path.parent.name / (clip.path.stem + ".lmel")
        dest.parent.mkdir(parents=True, exist_ok=True)
        write_feature(dest, feat, {"machine_type": clip.machine_type, "section": clip.section,
                                   "domain": clip.domain, "label": clip.condition})
    print(f"wrote {len(clips)} feature files to {out}")
    return EXIT_OK


def cmd_train(args):
    cfg = _run_config(args)
    cfg = override(cfg, "training", epochs=args.epochs, seed=args.seed, batch_size=args.batch_size)
    clips = scan_dcase(args.data)
    labels = LabelSpace.from_clips(clips)
    types = _select_types(labels, args.machine_type)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.dump(out / "run_config.json")
    for mt in types:
        init_digest = parameter_digest(init_model(model_config_for(cfg, labels.id_count(mt)),
                                                  seed=cfg.training.seed))
        extra = {"machine_type": mt, "labels": {mt: list(labels.sections[mt])},
                 "run_config": cfg.to_dict(), "init_digest": init_digest}
        log_path = out / f"{mt}.train.jsonl"
        every = cfg.training.checkpoint_every
        with open(log_path, "w") as fh:

            def on_epoch(state, record):
                fh.write(json.dumps({"machine_type": mt, **record}, sort_keys=True) + "\n")
                fh.flush()
                if every and (record["epoch"] + 1) % every == 0:
                    save_checkpoint(out / f"{mt}.epoch{record['epoch'] + 1:04d}.ckpt", state.model,
                                    {**extra, "epoch": record["epoch"] + 1})

            state = train_machine(clips, labels, mt, cfg, on_epoch=on_epoch, threads=args.threads)
        save_checkpoint(out / f"{mt}.ckpt", state.model, {**extra, "epoch": cfg.training.epochs})
        hist = state.history
        summary = f"L {hist[0]['L']:.4f} -> {hist[-1]['L']:.4f}" if hist else "no epochs run"
        print(f"{mt}: {summary}, checkpoint {out / f'{mt}.ckpt'}")
    return EXIT_OK


def _checkpoint_config(header, args) -> RunConfig:
    """Run config stored with the checkpoint, checked against ``--config`` if given."""
    stored = from_dict(header["extra"]["run_config"], "defaults")
    if args.config is None:
        return stored
    given = _run_config(args)
    for section in ("features", "model"):
        if asdict(getattr(given, section)) != asdict(getattr(stored, section)):
            raise ConfigError(f"'{section}' settings differ from those the checkpoint was trained with")
    if given.segmentation.frame_length != stored.segmentation.frame_length:
        raise ConfigError(f"frame_length {given.segmentation.frame_length} differs from checkpoint "
                          f"({stored.segmentation.frame_length})")
    return given


def cmd_score(args):
    clips = scan_dcase(args.data)
    labels = LabelSpace.from_clips(clips)
    types = _select_types(labels, args.machine_type)
    ckpt_dir = Path(args.checkpoints)
    records, decisions = [], []
    for mt in types:
        path = ckpt_dir / f"{mt}.ckpt"
        if not path.is_file():
            raise FileNotFoundError(f"no checkpoint for {mt} at {path}")
        try:
            model, header = load_checkpoint(path)
        except (ShapeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        cfg = _checkpoint_config(header, args)
        cfg = override(cfg, "scoring", beta=args.beta)
        trained = LabelSpace({k: tuple(v) for k, v in header["extra"]["labels"].items()})
        if model.config.num_ids != trained.id_count(mt) or model.config.bands != cfg.features.n_mels:
            raise ConfigError(f"{path}: checkpoint model does not match its stored configuration")
        model.eval()
        test = [c for c in clips if c.machine_type == mt and c.split == "test"]
        recs = score_machine(test, model, trained, mt, cfg, args.threads)
        records += recs
        if args.decisions:
            train = [c for c in clips if c.machine_type == mt and c.split == "train"]
            train_scores = [r.A for r in score_machine(train, model, trained, mt, cfg, args.threads) if not r.error]
            thr = fit_gamma_threshold(train_scores, args.threshold_p).threshold
            decisions += [(r.clip_id, r.A, thr, decide(r.A, thr)) for r in recs if not r.error]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_scores_csv(out, records)
    if args.decisions:
        with open(args.decisions, "w") as fh:
            fh.write("clip_id,A,threshold,decision\n")
            for cid, a, thr, d in sorted(decisions):
                fh.write(f"{cid},{a!r},{thr!r},{d}\n")
    failed = sum(r.error is not None for r in records)
    if failed:
        print(f"warning: {failed} clip(s) could not be scored (see error rows)", file=sys.stderr)
    print(f"scored {len(records) - failed} clips -> {out}")
    return EXIT_OK


def cmd_eval(args):
    cfg = _run_config(args)
    p = cfg.evaluation.p if args.p is None else args.p
    tie = cfg.evaluation.tie_policy if args.tie_policy is None else args.tie_policy
    if not 0 < p <= 1:
        raise UsageError("--p must lie in (0, 1]")
    records, errors = read_scores_csv(args.scores)
    report = build_report(records, p=p, tie_policy=tie)
    report.skipped = sorted(row["clip_id"] for row in errors)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.write_json(out / "report.json")
    report.write_table_csv(out / "table.csv", args.method)
    report.write_machines_csv(out / "machines.csv", args.method)
    report.write_cells_csv(out / "cells.csv")
    write_roc_csv(out / "roc.csv", records)
    print(f"h-AUC {report.h_auc:.4f}  h-pAUC {report.h_pauc:.4f}  ({len(report.cells)} cells)")
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run config JSON (schema ssdpt-config-1)")
    common.add_argument("--profile", help="named defaults profile: defaults or desk")
    common.add_argument("--threads", type=int, default=1, help="worker cap (1 for bit-reproducible runs)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="ssdpt", description="Dual-path Transformer anomalous sound detection.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic corpus in DCASE layout")
    p.add_argument("--out", required=True)
    p.add_argument("--machine-types", type=int, default=3)
    p.add_argument("--sections", type=int, default=3)
    p.add_argument("--clips", type=int, default=40, help="normal training clips per section")
    p.add_argument("--test-clips", type=int, default=40, help="test clips per section")
    p.add_argument("--anomaly-fraction", type=float, default=0.5)
    p.add_argument("--duration", type=float, default=4.0, help="clip length in seconds")
    p.add_argument("--target-train-clips", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("features", parents=[common], help="extract log-Mel features to LMEL files")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", choices=["train", "test", "all"], default="all")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", parents=[common], help="train one model per machine type")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="directory for checkpoints and logs")
    p.add_argument("--machine-type", action="append")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--batch-size", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", parents=[common], help="score test clips")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoints", required=True, help="directory holding <machine_type>.ckpt")
    p.add_argument("--out", required=True, help="score CSV path")
    p.add_argument("--machine-type", action="append")
    p.add_argument("--beta", type=float)
    p.add_argument("--decisions", help="also fit a gamma threshold on training scores and write decisions here")
    p.add_argument("--threshold-p", type=float, default=0.1, help="upper-tail mass of the fitted threshold")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", parents=[common], help="AUC / pAUC report from a score CSV")
    p.add_argument("--scores", required=True)
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--p", type=float)
    p.add_argument("--tie-policy", choices=["strict", "half"])
    p.add_argument("--method", default="SSDPT", help="row label in table.csv")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _setup_threads(args.threads)
        return args.func(args)
    except (UsageError, ConfigError, DatasetError) as exc:
        print(f"ssdpt {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NonFiniteError, FitError) as exc:
        print(f"ssdpt {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"ssdpt {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"ssdpt {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
