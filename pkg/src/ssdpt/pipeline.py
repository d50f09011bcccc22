"""End-to-end glue: corpus clips to trained models to score records."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor

import torch

from .config import RunConfig
from .dataset import ClipMeta, LabelSpace
from .errors import ShapeError
from .features import FeatureExtractor
from .model import DptConfig
from .scoring import ScoreRecord, score_clip
from .segmentation import segment
from .training import fit

log = logging.getLogger(__name__)


def extract_all(clips, extractor: FeatureExtractor, threads=1):
    """Log-Mel features for each clip, in input order."""
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(lambda c: extractor.from_file(c.path, c.clip_id), clips))
    return [extractor.from_file(c.path, c.clip_id) for c in clips]


def model_config_for(cfg: RunConfig, num_ids) -> DptConfig:
    m = cfg.model
    return DptConfig(
        blocks=m.blocks, frame_length=cfg.segmentation.frame_length, bands=cfg.features.n_mels,
        heads=m.heads, encoder_layers=m.encoder_layers, ffn_width=m.ffn_width, num_ids=num_ids,
    )


def train_machine(clips: list[ClipMeta], labels: LabelSpace, machine_type, cfg: RunConfig,
                  dtype=torch.float32, on_epoch=None, threads=1):
    """Train one model on the normal training clips of ``machine_type``."""
    train = [c for c in clips if c.machine_type == machine_type and c.split == "train"]
    if not train:
        raise ValueError(f"no training clips for {machine_type}")
    extractor = FeatureExtractor(cfg.features)
    seg = cfg.segmentation
    batches = []
    for clip, feat in zip(train, extract_all(train, extractor, threads)):
        try:
            batches.append(segment(feat, seg.frame_length, seg.hop_train, seg.mode,
                                   labels.label(machine_type, clip.section), clip.clip_id))
        except ShapeError as exc:
            log.warning("skipping training clip: %s", exc)
    mcfg = model_config_for(cfg, labels.id_count(machine_type))
    return fit(batches, cfg.train_config(), mcfg, dtype=dtype, on_epoch=on_epoch)


def score_machine(clips: list[ClipMeta], model, labels: LabelSpace, machine_type, cfg: RunConfig, threads=1):
    """Score records for every clip of ``machine_type`` in ``clips``.

    Clips too short to segment yield a record with ``error`` set instead of scores.
    """
    subset = [c for c in clips if c.machine_type == machine_type]
    extractor = FeatureExtractor(cfg.features)
    seg, beta = cfg.segmentation, cfg.scoring.beta
    records = []
    for clip, feat in zip(subset, extract_all(subset, extractor, threads)):
        label = labels.label(machine_type, clip.section)
        base = dict(clip_id=clip.clip_id, machine_id=label, machine_type=machine_type, section=clip.section,
                    domain=clip.domain, beta=beta,
                    ground_truth=clip.condition if clip.condition != "unknown" else None)
        try:
            batch = segment(feat, seg.frame_length, seg.hop_test, seg.mode, label, clip.clip_id)
        except ShapeError as exc:
            records.append(ScoreRecord(A_c=float("nan"), A_r=float("nan"), A=float("nan"),
                                       error=f"too_short({exc})", **base))
            continue
        a_c, a_r, a = score_clip(batch, model, beta)
        records.append(ScoreRecord(A_c=a_c, A_r=a_r, A=a, **base))
    return records
