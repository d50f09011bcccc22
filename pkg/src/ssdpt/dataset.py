"""DCASE 2021 task 2 directory layout and a synthetic machine-sound corpus.

Layout::

    <root>/<machine_type>/train/section_00_source_train_normal_0000.wav
    <root>/<machine_type>/source_test/section_00_source_test_anomaly_0003.wav
    <root>/<machine_type>/target_test/...
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DatasetError
from .features import Waveform, write_wav

log = logging.getLogger(__name__)

SPLIT_DIRS = ("train", "source_test", "target_test")
DOMAINS = ("source", "target")
MACHINE_NAMES = ("fan", "gearbox", "pump", "slider", "ToyCar", "ToyTrain", "valve")

_CLIP_RE = re.compile(
    r"^section_(?P<section>\d{2})_(?P<domain>source|target)_(?P<split>train|test)_"
    r"(?:(?P<condition>normal|anomaly)_)?(?P<index>\d+)(?:_[^/]*)?\.wav$"
)


@dataclass(frozen=True)
class ClipMeta:
    path: Path
    machine_type: str
    section: int
    domain: str
    split: str
    condition: str  # normal | anomaly | unknown
    index: int = 0

    @property
    def clip_id(self):
        return f"{self.machine_type}/{self.path.stem}"


@dataclass(frozen=True)
class LabelSpace:
    """Sections of each machine type, in the order used as class indices."""

    sections: dict  # machine_type -> tuple of section numbers

    @classmethod
    def from_clips(cls, clips):
        by_type = {}
        for c in clips:
            by_type.setdefault(c.machine_type, set()).add(c.section)
        return cls({mt: tuple(sorted(s)) for mt, s in sorted(by_type.items())})

    @property
    def machine_types(self):
        return list(self.sections)

    def id_count(self, machine_type):
        return len(self.sections[machine_type])

    def label(self, machine_type, section):
        try:
            return self.sections[machine_type].index(section)
        except (KeyError, ValueError):
            raise DatasetError(f"section {section:02d} of {machine_type} is not in the label space") from None


def parse_clip_name(path, machine_type):
    path = Path(path)
    m = _CLIP_RE.match(path.name)
    if not m:
        raise DatasetError(f"unparseable clip filename: {path}")
    return ClipMeta(
        path, machine_type, int(m["section"]), m["domain"], m["split"],
        m["condition"] or "unknown", int(m["index"]),
    )


def scan_dcase(root) -> list[ClipMeta]:
    """Parse every clip under ``root``; non-WAV files are skipped with a warning."""
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} is not a directory")
    clips = []
    for mdir in sorted(p for p in root.iterdir() if p.is_dir()):
        for split_dir in SPLIT_DIRS:
            d = mdir / split_dir
            if not d.is_dir():
                continue
            for f in sorted(d.iterdir()):
                if f.suffix.lower() != ".wav":
                    log.warning("skipping non-WAV file %s", f)
                    continue
                meta = parse_clip_name(f, mdir.name)
                expected_split = "train" if split_dir == "train" else "test"
                if meta.split != expected_split:
                    raise DatasetError(f"{f}: {meta.split} clip inside {split_dir}/")
                if split_dir != "train" and meta.domain != split_dir.split("_")[0]:
                    raise DatasetError(f"{f}: {meta.domain} clip inside {split_dir}/")
                if meta.split == "train" and meta.condition != "normal":
                    raise DatasetError(f"{f}: training clips must be normal, got {meta.condition}")
                clips.append(meta)
    if not clips:
        raise DatasetError(f"no clips found under {root}")
    return clips


@dataclass(frozen=True)
class SynthSpec:
    """Desk-scale corpus recipe.

    ``clips_per_section`` normal training clips are split between domains;
    ``target_train_clips`` pins the target share (e.g. 3 to mimic target-domain
    scarcity); None means an even split. Test clips are split evenly between
    domains with ``anomaly_fraction_test`` of each domain anomalous.
    """

    machine_types: int = 3
    sections: int = 3
    clips_per_section: int = 40
    test_clips_per_section: int = 40
    anomaly_fraction_test: float = 0.5
    duration_s: float = 4.0
    sample_rate: int = 16000
    target_train_clips: int | None = None
    seed: int = 0

    def validate(self):
        if min(self.machine_types, self.sections, self.clips_per_section) < 1:
            raise ValueError("machine_types, sections and clips_per_section must be >= 1")
        if self.machine_types > len(MACHINE_NAMES):
            raise ValueError(f"at most {len(MACHINE_NAMES)} machine types")
        if self.sections > 100:
            raise ValueError("section numbers are two digits")
        if not 1.0 <= self.duration_s <= 10.0:
            raise ValueError("clip duration must be between 1 and 10 seconds")
        if not 0.0 <= self.anomaly_fraction_test <= 1.0:
            raise ValueError("anomaly_fraction_test must lie in [0, 1]")
        if self.test_clips_per_section < 0:
            raise ValueError("test_clips_per_section must be >= 0")


def fundamental_hz(section):
    return 90.0 + 37.0 * section


def harmonic_profile(machine_index, domain):
    """Amplitudes of the four harmonics; machine types and domains differ in timbre."""
    base = np.array([1.0, 0.6, 0.4, 0.25]) ** (1.0 + 0.35 * machine_index)
    if domain == "target":
        base = base * np.array([1.0, 0.7, 1.2, 1.0])
    return base


def pink_noise(n, rng):
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.arange(spec.size)
    f[0] = 1
    noise = np.fft.irfft(spec / np.sqrt(f), n)
    return noise / np.sqrt(np.mean(noise**2))


def _rms(x):
    return float(np.sqrt(np.mean(x**2)))


def synth_clip(machine_index, section, domain, anomalous, rng, duration_s=4.0, sample_rate=16000):
    """One clip: harmonic stack plus pink noise at -20 dB; anomalies add a 1.37 f0 tone at -6 dB and 3 clicks."""
    n = int(round(duration_s * sample_rate))
    t = np.arange(n) / sample_rate
    f0 = fundamental_hz(section)
    amps = harmonic_profile(machine_index, domain)
    phases = rng.uniform(0, 2 * np.pi, size=amps.size + 1)
    stack = sum(a * np.sin(2 * np.pi * (h + 1) * f0 * t + phases[h]) for h, a in enumerate(amps))
    stack *= 0.1 / _rms(stack)
    level = _rms(stack)
    x = stack + level * 10 ** (-20 / 20) * pink_noise(n, rng)
    if anomalous:
        tone = np.sin(2 * np.pi * 1.37 * f0 * t + phases[-1])
        x = x + level * 10 ** (-6 / 20) * tone / _rms(tone)
        click_len = int(0.005 * sample_rate)
        env = np.exp(-np.arange(click_len) / (0.001 * sample_rate))
        peak = np.max(np.abs(stack))
        for start in rng.integers(0, n - click_len, size=3):
            x[start : start + click_len] += peak * env * rng.choice([-1.0, 1.0], size=click_len)
    return Waveform(np.clip(x, -1.0, 1.0), sample_rate)


def _clip_rng(seed, *key):
    return np.random.default_rng(np.random.SeedSequence([seed, *key]))


def synth_corpus(out_dir, spec: SynthSpec = SynthSpec()) -> list[ClipMeta]:
    """Write a deterministic DCASE-layout corpus and return its metadata."""
    spec.validate()
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc}") from exc
    n_target = spec.clips_per_section // 2 if spec.target_train_clips is None else spec.target_train_clips
    n_target = min(n_target, spec.clips_per_section)
    train_counts = {"source": spec.clips_per_section - n_target, "target": n_target}
    test_per_domain = spec.test_clips_per_section // 2
    n_anom = int(round(spec.anomaly_fraction_test * test_per_domain))
    metas = []
    for m in range(spec.machine_types):
        mt = MACHINE_NAMES[m]
        for split_dir in SPLIT_DIRS:
            (out_dir / mt / split_dir).mkdir(parents=True, exist_ok=True)
        for sec in range(spec.sections):
            for d, dom in enumerate(DOMAINS):
                jobs = [("train", "normal", i) for i in range(train_counts[dom])]
                jobs += [("test", "normal" if i >= n_anom else "anomaly", i) for i in range(test_per_domain)]
                for split, cond, i in jobs:
                    rng = _clip_rng(spec.seed, m, sec, d, split == "test", i)
                    wave = synth_clip(m, sec, dom, cond == "anomaly", rng, spec.duration_s, spec.sample_rate)
                    sub = "train" if split == "train" else f"{dom}_test"
                    path = out_dir / mt / sub / f"section_{sec:02d}_{dom}_{split}_{cond}_{i:04d}.wav"
                    write_wav(path, wave)
                    metas.append(ClipMeta(path, mt, sec, dom, split, cond, i))
    return metas
