"""Waveform I/O, STFT analysis/synthesis, magnitude compression, masking.

The analysis chain is fixed by the model: 16 kHz mono PCM-16 input, 512-pt
FFT, hop 256, square-root periodic Hann window on both sides. That window
pair satisfies the overlap-add identity exactly (sin^2 + cos^2), so
istft(stft(x)) reproduces the interior of x to rounding error without a
normalisation pass.
"""
import wave
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, NumericError, ShapeError

SAMPLE_RATE = 16000
FFT_SIZE = 512
HOP = 256


@dataclass
class AudioBuffer:
    """Mono float64 samples in [-1, 1] plus their sample rate."""
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.ascontiguousarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ShapeError(
                f"samples must be 1-d, got shape {self.samples.shape}")
        if int(self.sample_rate) <= 0:
            raise NumericError(f"sample_rate must be positive, got {self.sample_rate}")
        self.sample_rate = int(self.sample_rate)

    @property
    def duration(self):
        return self.samples.size / self.sample_rate


def read_wav(path):
    """Read a 16 kHz mono PCM-16 WAV file into an AudioBuffer."""
    try:
        with wave.open(str(path), "rb") as fh:
            channels = fh.getnchannels()
            width = fh.getsampwidth()
            rate = fh.getframerate()
            comp = fh.getcomptype()
            n = fh.getnframes()
            raw = fh.readframes(n)
    except (wave.Error, EOFError, OSError) as exc:
        raise DataError(f"{path}: not a readable WAV file ({exc})") from None
    if comp != "NONE":
        raise DataError(f"{path}: compressed WAV ({comp}) is not supported")
    if width != 2:
        raise DataError(f"{path}: expected 16-bit PCM, got {8 * width}-bit")
    if channels != 1:
        raise DataError(f"{path}: expected mono, got {channels} channels")
    if rate != SAMPLE_RATE:
        raise DataError(f"{path}: expected {SAMPLE_RATE} Hz, got {rate} Hz")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return AudioBuffer(samples, rate)


def write_wav(path, buf):
    """Write an AudioBuffer as 16 kHz mono PCM-16.

    Samples are clipped to the representable range and rounded, so the
    read-back differs from the input by at most one LSB (1/32768).
    """
    scaled = np.rint(np.clip(buf.samples, -1.0, 1.0) * 32768.0)
    pcm = np.clip(scaled, -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(buf.sample_rate)
        fh.writeframes(pcm.tobytes())


def sqrt_hann_window(n=FFT_SIZE):
    """Square root of the periodic Hann window: w[k] = sin(pi k / n)."""
    return np.sin(np.pi * np.arange(n) / n)


def hann_window(n):
    """Periodic Hann window (used by the spectral losses)."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def frame_count(n_samples, fft_size=FFT_SIZE, hop=HOP):
    if n_samples < fft_size:
        raise DataError(
            f"audio has {n_samples} samples, shorter than one {fft_size}-sample frame")
    return (n_samples - fft_size) // hop + 1


def stft(samples, fft_size=FFT_SIZE, hop=HOP, window=None):
    """Frame, window and transform. Returns complex128 (T, fft_size//2 + 1).

    Only whole frames are taken; trailing samples that do not fill a frame
    are dropped. The default window is the square-root Hann analysis
    window.
    """
    samples = np.ascontiguousarray(samples, dtype=np.float64)
    if samples.ndim != 1:
        raise ShapeError(f"stft input must be 1-d, got shape {samples.shape}")
    tdim = frame_count(samples.size, fft_size, hop)
    if window is None:
        window = sqrt_hann_window(fft_size)
    idx = np.arange(fft_size)[None, :] + hop * np.arange(tdim)[:, None]
    frames = samples[idx] * window
    return np.fft.rfft(frames, n=fft_size, axis=1)


def istft(spec, fft_size=FFT_SIZE, hop=HOP, window=None):
    """Inverse transform, window, overlap-add. Returns float64 samples.

    Output length is (T - 1) * hop + fft_size. With the default analysis
    and synthesis window pair no amplitude correction is needed.
    """
    spec = np.asarray(spec)
    if spec.ndim != 2 or spec.shape[1] != fft_size // 2 + 1:
        raise ShapeError(
            f"istft input must be (T, {fft_size // 2 + 1}), got {spec.shape}")
    if window is None:
        window = sqrt_hann_window(fft_size)
    frames = np.fft.irfft(spec, n=fft_size, axis=1) * window
    tdim = spec.shape[0]
    out = np.zeros((tdim - 1) * hop + fft_size)
    for t in range(tdim):
        out[t * hop:t * hop + fft_size] += frames[t]
    return out


def compress(mag, c):
    """Power-law compression of a non-negative magnitude array."""
    _check_exponent(c)
    mag = np.asarray(mag, dtype=np.float64)
    if (mag < 0.0).any():
        raise NumericError("mag has negative entries")
    return mag ** c


def decompress(cm, c):
    """Inverse of compress."""
    _check_exponent(c)
    cm = np.asarray(cm, dtype=np.float64)
    if (cm < 0.0).any():
        raise NumericError("cm has negative entries")
    return cm ** (1.0 / c)


def _check_exponent(c):
    if not 0.0 < c <= 1.0:
        raise NumericError(f"compression exponent must be in (0, 1], got {c}")


def apply_mask(spec, mask, c):
    """Apply a (0, 1) mask to the compressed magnitude of a spectrum.

    Scaling the compressed magnitude by m and decompressing is the same as
    scaling the bin by m**(1/c), which is how it is computed: phase is
    untouched and bins where the mask is exactly 1.0 pass through
    unchanged, bit for bit.
    """
    _check_exponent(c)
    spec = np.asarray(spec)
    mask = np.asarray(mask, dtype=np.float64)
    if spec.shape != mask.shape:
        raise ShapeError(
            f"spec shape {spec.shape} and mask shape {mask.shape} disagree")
    if (mask < 0.0).any() or (mask > 1.0).any():
        raise NumericError("mask has entries outside [0, 1]")
    return spec * mask ** (1.0 / c)


def ideal_ratio_mask(clean_spec, noisy_spec, c):
    """Oracle mask: compressed clean over compressed noisy magnitude,
    clipped to [0, 1]. Bins with zero noisy magnitude pass through."""
    _check_exponent(c)
    cs = np.abs(np.asarray(clean_spec)) ** c
    cn = np.abs(np.asarray(noisy_spec)) ** c
    if cs.shape != cn.shape:
        raise ShapeError(
            f"clean shape {cs.shape} and noisy shape {cn.shape} disagree")
    out = np.ones_like(cn)
    nz = cn > 0.0
    out[nz] = np.minimum(cs[nz] / cn[nz], 1.0)
    return out


def si_sdr(est, ref):
    """Scale-invariant signal-to-distortion ratio in dB, capped at +100.

    The reference is scaled by alpha = <est, ref> / <ref, ref>; the ratio
    compares the energy of the scaled reference against the residual. A
    bit-exact match (or an exactly scaled copy) hits the cap.
    """
    est = np.ascontiguousarray(est, dtype=np.float64)
    ref = np.ascontiguousarray(ref, dtype=np.float64)
    if est.shape != ref.shape or est.ndim != 1:
        raise ShapeError(
            f"si_sdr needs equal-length 1-d signals, got {est.shape} and {ref.shape}")
    ref_energy = float(np.dot(ref, ref))
    if ref_energy == 0.0:
        raise NumericError("ref is silent")
    alpha = float(np.dot(est, ref)) / ref_energy
    err = est - alpha * ref
    err_energy = float(np.dot(err, err))
    target_energy = alpha * alpha * ref_energy
    if err_energy == 0.0:
        return 100.0
    if target_energy == 0.0:
        return -100.0
    val = 10.0 * np.log10(target_energy / err_energy)
    return float(min(val, 100.0))
