"""Log-Mel feature extraction.

Audio is read from RIFF WAV, turned into a Hann-windowed magnitude STFT with
centre (reflect) padding, projected onto an HTK-scale triangular filterbank and
log-compressed as ``ln(mel_power + 1e-8)``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .errors import ShapeError

LOG_FLOOR = 1e-8
FEATURE_MAGIC = b"LMEL"


@dataclass(frozen=True)
class FeatureConfig:
    sample_rate: int = 16000
    window_size: int = 1024
    hop: int = 512
    n_mels: int = 128
    f_min: float = 0.0
    f_max: float = 8000.0

    def validate(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.window_size < 2 or self.window_size & (self.window_size - 1):
            raise ValueError(f"window_size must be a power of two, got {self.window_size}")
        if self.hop < 1:
            raise ValueError("hop must be >= 1")
        if self.n_mels < 1:
            raise ValueError("n_mels must be >= 1")
        if not 0 <= self.f_min < self.f_max <= self.sample_rate / 2:
            raise ValueError("need 0 <= f_min < f_max <= sample_rate / 2")


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ShapeError("waveform samples must be one-dimensional")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")

    def __len__(self):
        return self.samples.shape[0]


@dataclass(frozen=True)
class MelFilterbank:
    weights: np.ndarray  # (n_mels, n_fft // 2 + 1)
    centers_hz: np.ndarray
    n_fft: int
    sample_rate: int

    @property
    def n_mels(self):
        return self.weights.shape[0]


@dataclass
class LogMelFeature:
    values: np.ndarray  # (T, F)
    source_id: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def frame_count(self):
        return self.values.shape[0]

    @property
    def band_count(self):
        return self.values.shape[1]


def load_wav(path) -> Waveform:
    """Read a 16-bit PCM or 32-bit float WAV file as a mono waveform in [-1, 1].

    Multichannel audio is averaged across channels.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such WAV file: {path}")
    try:
        rate, data = wavfile.read(path)
    except ValueError as exc:
        raise ValueError(f"{path}: not a readable WAV file ({exc})") from exc
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise ValueError(f"{path}: unsupported sample format {data.dtype} (need 16-bit PCM or 32-bit float)")
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    return Waveform(np.clip(samples, -1.0, 1.0), int(rate))


def write_wav(path, wave: Waveform):
    """Write a waveform as 16-bit PCM mono."""
    pcm = np.round(np.clip(wave.samples, -1.0, 32767 / 32768) * 32768.0).astype(np.int16)
    wavfile.write(Path(path), wave.sample_rate, pcm)


def stft_magnitude(wave: Waveform, window_size=1024, hop=512) -> np.ndarray:
    """Magnitude STFT with a periodic Hann window and reflect centre padding.

    Returns:
        (T, window_size // 2 + 1) array with T = 1 + len(wave) // hop.
    """
    if len(wave) < 1:
        raise ValueError("cannot compute STFT of an empty waveform")
    if window_size < 2 or window_size & (window_size - 1):
        raise ValueError(f"window_size must be a power of two, got {window_size}")
    if hop < 1:
        raise ValueError("hop must be >= 1")
    half = window_size // 2
    padded = np.pad(wave.samples, half, mode="reflect") if len(wave) > 1 else np.full(
        window_size + 1, wave.samples[0]
    )
    n_frames = 1 + len(wave) // hop
    frames = np.lib.stride_tricks.sliding_window_view(padded, window_size)[::hop][:n_frames]
    window = np.hanning(window_size + 1)[:-1]
    return np.abs(np.fft.rfft(frames * window, axis=1))


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels=128, n_fft=1024, sample_rate=16000, f_min=0.0, f_max=8000.0) -> MelFilterbank:
    """HTK-scale triangular filterbank, each row rescaled so its largest weight is 1."""
    if n_mels < 1:
        raise ValueError("n_mels must be >= 1")
    if not f_min < f_max <= sample_rate / 2:
        raise ValueError("need f_min < f_max <= sample_rate / 2")
    fft_freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    edges = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2))
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (fft_freqs - lo) / (mid - lo)
    falling = (hi - fft_freqs) / (hi - mid)
    weights = np.maximum(0.0, np.minimum(rising, falling))
    peaks = weights.max(axis=1)
    empty = np.flatnonzero(peaks <= 0)
    if empty.size:
        raise ValueError(
            f"{empty.size} mel filters contain no FFT bin (first: band {empty[0]}); "
            f"reduce n_mels or increase n_fft"
        )
    return MelFilterbank(weights / peaks[:, None], edges[1:-1].copy(), n_fft, sample_rate)


def log_mel(spec: np.ndarray, fb: MelFilterbank, source_id="") -> LogMelFeature:
    """Natural log of mel-projected power, floored at 1e-8."""
    spec = np.asarray(spec, dtype=np.float64)
    if spec.ndim != 2 or spec.shape[1] != fb.weights.shape[1]:
        raise ShapeError(f"spectrogram has shape {spec.shape}, filterbank expects (*, {fb.weights.shape[1]})")
    return LogMelFeature(np.log((spec**2) @ fb.weights.T + LOG_FLOOR), source_id)


class FeatureExtractor:
    """Waveform to log-Mel pipeline holding one shared filterbank."""

    def __init__(self, config: FeatureConfig = FeatureConfig()):
        config.validate()
        self.config = config
        self.filterbank = mel_filterbank(
            config.n_mels, config.window_size, config.sample_rate, config.f_min, config.f_max
        )

    def __call__(self, wave: Waveform, source_id="") -> LogMelFeature:
        if wave.sample_rate != self.config.sample_rate:
            raise ValueError(
                f"{source_id or 'waveform'}: sample rate {wave.sample_rate} Hz, expected "
                f"{self.config.sample_rate} Hz (resampling is not supported)"
            )
        spec = stft_magnitude(wave, self.config.window_size, self.config.hop)
        return log_mel(spec, self.filterbank, source_id)

    def from_file(self, path, source_id=None) -> LogMelFeature:
        path = Path(path)
        return self(load_wav(path), source_id if source_id is not None else path.stem)


def write_feature(path, feat: LogMelFeature, manifest: dict | None = None):
    """Write ``LMEL`` binary (16-byte header then float64 LE rows) plus a JSON sidecar.

    Header layout: magic ``LMEL``, u32 frame count, u32 band count, u32 reserved (0).
    """
    path = Path(path)
    values = np.ascontiguousarray(feat.values, dtype="<f8")
    t, f = values.shape
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC + struct.pack("<III", t, f, 0))
        fh.write(values.tobytes())
    side = {"clip_id": feat.source_id, "frames": t, "bands": f}
    side.update(feat.meta)
    if manifest:
        side.update(manifest)
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(side, indent=2, sort_keys=True))


def read_feature(path) -> LogMelFeature:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 16 or raw[:4] != FEATURE_MAGIC:
        raise ValueError(f"{path}: not an LMEL feature file")
    t, f, _ = struct.unpack("<III", raw[4:16])
    if len(raw) != 16 + 8 * t * f:
        raise ValueError(f"{path}: payload size does not match header ({t}x{f})")
    values = np.frombuffer(raw[16:], dtype="<f8").reshape(t, f).astype(np.float64)
    meta = {}
    side = path.with_suffix(path.suffix + ".json")
    if side.is_file():
        meta = json.loads(side.read_text())
    return LogMelFeature(values, meta.get("clip_id", path.stem), meta)
