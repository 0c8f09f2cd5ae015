"""Audio ingestion and the MFCC front-end.

Fixed pipeline: 16 kHz mono PCM in, 30 ms Hann windows with 10 ms hop,
512-point real FFT, 64 triangular mel filters spanning 20 Hz - 8 kHz,
log with a 1e-10 floor, DCT-II keeping 40 coefficients.  A 1-second clip
gives a 98x40 time-major map.  Also SNR-controlled mixing and the training
augmentation (random shift + low-volume noise).
"""

import struct
import wave
from dataclasses import dataclass

import numpy as np
from scipy.fftpack import dct

from . import ContractViolation, DataError

SAMPLE_RATE = 16000
WINDOW = 480  # 30 ms
HOP = 160  # 10 ms
NFFT = 512
N_MELS = 64
N_COEFF = 40
MEL_LOW_HZ = 20.0
MEL_HIGH_HZ = 8000.0
LOG_FLOOR = 1e-10

CACHE_MAGIC = b"LDYF"
CACHE_VERSION = 1


@dataclass
class AudioClip:
    samples: np.ndarray  # float64 in [-1, 1]
    sample_rate: int = SAMPLE_RATE
    label: str | None = None


def load_wav(path, downmix=False):
    """Read a 16 kHz PCM16 WAV.  -32768 maps to -1.0 exactly.

    Stereo input is rejected unless downmix=True (then channels are averaged).
    A wrong sample rate is an error; there is no silent resampling.
    """
    try:
        with wave.open(str(path), "rb") as w:
            rate = w.getframerate()
            channels = w.getnchannels()
            width = w.getsampwidth()
            raw = w.readframes(w.getnframes())
    except (wave.Error, EOFError) as exc:
        raise DataError(f"{path}: malformed WAV ({exc})") from exc
    if rate != SAMPLE_RATE:
        raise DataError(f"{path}: sample rate {rate}, expected {SAMPLE_RATE}")
    if width != 2:
        raise DataError(f"{path}: {8 * width}-bit samples, expected 16-bit PCM")
    data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    if channels > 1:
        if not downmix:
            raise DataError(f"{path}: {channels} channels; pass downmix to average")
        data = data.reshape(-1, channels).mean(axis=1)
    return AudioClip(samples=data, sample_rate=rate)


def save_wav(path, clip):
    """Write a clip back out as 16 kHz mono PCM16 (round-trip helper)."""
    pcm = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(clip.sample_rate)
        w.writeframes(pcm.tobytes())


def mel_from_hz(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def hz_from_mel(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels=N_MELS, nfft=NFFT, sample_rate=SAMPLE_RATE,
                   low_hz=MEL_LOW_HZ, high_hz=MEL_HIGH_HZ):
    """Triangular filters on a mel-spaced grid, evaluated at FFT bin centers."""
    edges = hz_from_mel(np.linspace(mel_from_hz(low_hz), mel_from_hz(high_hz), n_mels + 2))
    bin_hz = np.arange(nfft // 2 + 1) * (sample_rate / nfft)
    fb = np.zeros((n_mels, nfft // 2 + 1))
    for m in range(n_mels):
        lo, center, hi = edges[m], edges[m + 1], edges[m + 2]
        up = (bin_hz - lo) / (center - lo)
        down = (hi - bin_hz) / (hi - center)
        fb[m] = np.maximum(0.0, np.minimum(up, down))
    return fb


def hann_window(n=WINDOW):
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def mfcc(clip, keep_c0=True):
    """Time-major T x 40 MFCC map; a 1-second clip yields T=98.

    Clips shorter than 1 s are zero-padded to 16000 samples first (the model
    consumes fixed-size maps).  keep_c0=False drops the 0th cepstral
    coefficient and keeps coefficients 1..40 instead.
    """
    if clip.sample_rate != SAMPLE_RATE:
        raise DataError(f"sample rate {clip.sample_rate}, expected {SAMPLE_RATE}")
    samples = np.asarray(clip.samples, dtype=np.float64)
    if samples.size == 0:
        raise DataError("empty clip")
    if samples.size < SAMPLE_RATE:
        samples = np.pad(samples, (0, SAMPLE_RATE - samples.size))
    n_frames = 1 + (samples.size - WINDOW) // HOP
    window = hann_window()
    fb = mel_filterbank()
    idx = np.arange(WINDOW)[None, :] + HOP * np.arange(n_frames)[:, None]
    frames = samples[idx] * window
    pspec = np.abs(np.fft.rfft(frames, NFFT, axis=1)) ** 2
    energies = pspec @ fb.T
    logmel = np.log(np.maximum(energies, LOG_FLOOR))
    ceps = dct(logmel, type=2, axis=1, norm="ortho")
    if keep_c0:
        return ceps[:, :N_COEFF]
    return ceps[:, 1:N_COEFF + 1]


def mix_at_snr(clean, noise, snr_db, rng=None):
    """clean + scaled random crop of noise, hitting snr_db exactly pre-clamp.

    Returns (mixed clip, clamp_rate): the fraction of samples clipped to
    [-1, 1] after the addition.
    """
    cs = np.asarray(clean.samples, dtype=np.float64)
    ns = np.asarray(noise.samples, dtype=np.float64)
    if ns.size < cs.size:
        raise ContractViolation(
            f"noise ({ns.size} samples) shorter than clean ({cs.size})"
        )
    rng = rng or np.random.default_rng()
    start = int(rng.integers(0, ns.size - cs.size + 1))
    crop = ns[start:start + cs.size]
    rms_c = np.sqrt(np.mean(cs**2))
    rms_n = np.sqrt(np.mean(crop**2))
    if rms_c == 0.0 or rms_n == 0.0:
        raise DataError("silent clean or noise signal: SNR undefined")
    scale = (rms_c / rms_n) * 10.0 ** (-snr_db / 20.0)
    mixed = cs + scale * crop
    clamped = np.clip(mixed, -1.0, 1.0)
    clamp_rate = float(np.mean(mixed != clamped))
    out = AudioClip(samples=clamped, sample_rate=clean.sample_rate, label=clean.label)
    return out, clamp_rate


MAX_SHIFT = SAMPLE_RATE // 10  # +-100 ms
NOISE_PROB = 0.8
NOISE_MAX_VOLUME = 0.1


def time_shift(samples, shift):
    """Shift right by `shift` samples (negative = left), zero fill."""
    out = np.zeros_like(samples)
    if shift > 0:
        out[shift:] = samples[:-shift or None]
    elif shift < 0:
        out[:shift] = samples[-shift:]
    else:
        out[:] = samples
    return out


def augment(clip, noise_pool, rng):
    """Training augmentation: random +-100 ms shift, then with probability 0.8
    a random noise crop at a uniform [0, 0.1] volume.  Deterministic per rng.
    """
    samples = np.asarray(clip.samples, dtype=np.float64)
    shift = int(rng.integers(-MAX_SHIFT, MAX_SHIFT + 1))
    out = time_shift(samples, shift)
    if noise_pool and rng.uniform() < NOISE_PROB:
        noise = noise_pool[int(rng.integers(len(noise_pool)))]
        ns = np.asarray(noise.samples, dtype=np.float64)
        if ns.size >= out.size:
            start = int(rng.integers(0, ns.size - out.size + 1))
            crop = ns[start:start + out.size]
            out = out + rng.uniform(0.0, NOISE_MAX_VOLUME) * crop
    return AudioClip(samples=np.clip(out, -1.0, 1.0),
                     sample_rate=clip.sample_rate, label=clip.label)


def write_feature_cache(path, feature_map):
    """Binary cache: magic 'LDYF', version u16, T u32, F u32, float32 data."""
    fm = np.ascontiguousarray(feature_map, dtype="<f4")
    if fm.ndim != 2:
        raise ContractViolation(f"feature map must be 2-D, got shape {fm.shape}")
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<HII", CACHE_VERSION, fm.shape[0], fm.shape[1]))
        fh.write(fm.tobytes())


def read_feature_cache(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CACHE_MAGIC:
            raise DataError(f"{path}: bad magic {magic!r}")
        version, T, F = struct.unpack("<HII", fh.read(10))
        if version != CACHE_VERSION:
            raise DataError(f"{path}: unsupported cache version {version}")
        data = np.frombuffer(fh.read(4 * T * F), dtype="<f4")
        if data.size != T * F:
            raise DataError(f"{path}: truncated cache file")
    return data.reshape(T, F)
