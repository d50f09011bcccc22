import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.io import wavfile

from ssdpt.errors import ShapeError
from ssdpt.features import (
    LOG_FLOOR,
    FeatureExtractor,
    LogMelFeature,
    Waveform,
    hz_to_mel,
    load_wav,
    log_mel,
    mel_filterbank,
    read_feature,
    stft_magnitude,
    write_feature,
)


@pytest.fixture(scope="module")
def fb():
    return mel_filterbank(128, 1024, 16000, 0.0, 8000.0)


# --- load_wav ---------------------------------------------------------------

def test_load_wav_ten_seconds(tmp_path):
    path = tmp_path / "a.wav"
    rng = np.random.default_rng(0)
    wavfile.write(path, 16000, rng.integers(-20000, 20000, 160000).astype(np.int16))
    w = load_wav(path)
    assert len(w) == 160000
    assert w.sample_rate == 16000
    assert np.all(np.abs(w.samples) <= 1.0)


def test_load_wav_zero(tmp_path):
    path = tmp_path / "z.wav"
    wavfile.write(path, 16000, np.zeros(1000, dtype=np.int16))
    assert np.all(load_wav(path).samples == 0.0)


def test_load_wav_stereo_cancels(tmp_path):
    path = tmp_path / "s.wav"
    data = np.tile(np.array([[0.5, -0.5]], dtype=np.float32), (500, 1))
    wavfile.write(path, 16000, data)
    w = load_wav(path)
    assert len(w) == 500
    assert np.all(w.samples == 0.0)


def test_load_wav_float32_roundtrip(tmp_path):
    path = tmp_path / "f.wav"
    data = np.linspace(-1, 1, 101, dtype=np.float32)
    wavfile.write(path, 16000, data)
    np.testing.assert_array_equal(load_wav(path).samples, data.astype(np.float64))


def test_load_wav_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_wav(tmp_path / "missing.wav")
    bogus = tmp_path / "bogus.wav"
    bogus.write_bytes(b"not a riff file at all")
    with pytest.raises(ValueError):
        load_wav(bogus)
    eight = tmp_path / "u8.wav"
    wavfile.write(eight, 16000, np.zeros(10, dtype=np.uint8))
    with pytest.raises(ValueError, match="unsupported"):
        load_wav(eight)


# --- stft -------------------------------------------------------------------

def test_stft_shape_ten_seconds():
    spec = stft_magnitude(Waveform(np.zeros(160000)), 1024, 512)
    assert spec.shape == (313, 513)
    assert np.all(spec == 0.0)


@settings(max_examples=200, deadline=None)
@given(L=st.integers(1, 10_000), hop=st.integers(1, 2048))
def test_stft_frame_count(L, hop):
    spec = stft_magnitude(Waveform(np.ones(L)), 256, hop)
    assert spec.shape[0] == 1 + L // hop


@pytest.mark.parametrize("k", [3, 40, 100, 257])
def test_stft_bin_centre_sine(k):
    sr = 16000
    t = np.arange(16000) / sr
    spec = stft_magnitude(Waveform(np.sin(2 * np.pi * k * sr / 1024 * t), sr), 1024, 512)
    # edge frames see reflected padding; interior frames are pure
    assert np.all(spec[2:-2].argmax(axis=1) == k)


def test_stft_empty():
    with pytest.raises(ValueError):
        stft_magnitude(Waveform(np.zeros(0)), 1024, 512)


def test_stft_matches_direct_dft():
    # brute-force DFT of one interior frame
    rng = np.random.default_rng(3)
    x = rng.standard_normal(4000)
    n, hop = 256, 100
    spec = stft_magnitude(Waveform(x), n, hop)
    frame = 10
    start = frame * hop - n // 2
    seg = x[start : start + n] * (0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n))
    basis = np.exp(-2j * np.pi * np.outer(np.arange(n // 2 + 1), np.arange(n)) / n)
    np.testing.assert_allclose(spec[frame], np.abs(basis @ seg), rtol=1e-9, atol=1e-9)


# --- filterbank -------------------------------------------------------------

def test_filterbank_shape_and_peaks(fb):
    assert fb.weights.shape == (128, 513)
    assert np.all(fb.weights >= 0)
    np.testing.assert_allclose(fb.weights.max(axis=1), 1.0, rtol=0, atol=0)


def test_filterbank_centres_increasing(fb):
    mels = np.linspace(hz_to_mel(0.0), hz_to_mel(8000.0), 130)[1:-1]
    centres = 700.0 * (10 ** (mels / 2595.0) - 1)
    np.testing.assert_allclose(fb.centers_hz, centres, rtol=1e-12)
    assert np.all(np.diff(fb.centers_hz) > 0)
    # peak bins are non-decreasing too
    assert np.all(np.diff(fb.weights.argmax(axis=1)) >= 0)


def test_filterbank_flat_spectrum_positive(fb):
    assert np.all(fb.weights @ np.ones(513) > 0)


def test_filterbank_too_many_mels():
    with pytest.raises(ValueError, match="no FFT bin"):
        mel_filterbank(256, 256, 16000, 0.0, 8000.0)


def test_filterbank_bad_range():
    with pytest.raises(ValueError):
        mel_filterbank(40, 1024, 16000, 100.0, 9000.0)


# --- log_mel ----------------------------------------------------------------

def test_log_mel_zero(fb):
    out = log_mel(np.zeros((313, 513)), fb)
    assert out.values.shape == (313, 128)
    np.testing.assert_allclose(out.values, np.log(1e-8))
    assert abs(np.log(1e-8) - (-18.4207)) < 1e-4


def test_log_mel_doubling_adds_ln4(fb):
    rng = np.random.default_rng(0)
    spec = rng.uniform(1.0, 10.0, size=(20, 513))
    a, b = log_mel(spec, fb).values, log_mel(2 * spec, fb).values
    np.testing.assert_allclose(b - a, np.log(4.0), atol=1e-6)


def test_log_mel_shape_mismatch(fb):
    with pytest.raises(ShapeError):
        log_mel(np.zeros((10, 512)), fb)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1e6), st.integers(1, 5))
def test_log_mel_finite(scale, rows):
    fb = mel_filterbank(8, 64, 16000, 0.0, 8000.0)
    spec = np.random.default_rng(rows).uniform(0, 1, (rows, 33)) * scale
    out = log_mel(spec, fb).values
    assert np.all(np.isfinite(out)) and np.all(out >= np.log(LOG_FLOOR) - 1e-12)


# --- extractor and serialisation --------------------------------------------

def test_extractor_rejects_other_rates():
    with pytest.raises(ValueError, match="sample rate"):
        FeatureExtractor()(Waveform(np.zeros(1000), 8000))


def test_feature_roundtrip(tmp_path):
    feat = LogMelFeature(np.random.default_rng(1).standard_normal((7, 5)), "fan/clip")
    path = tmp_path / "x.lmel"
    write_feature(path, feat, {"machine_type": "fan", "label": "normal"})
    raw = path.read_bytes()
    assert raw[:4] == b"LMEL" and len(raw) == 16 + 7 * 5 * 8
    back = read_feature(path)
    np.testing.assert_array_equal(back.values, feat.values)
    assert back.source_id == "fan/clip"
    side = json.loads((tmp_path / "x.lmel.json").read_text())
    assert side["machine_type"] == "fan" and side["frames"] == 7
