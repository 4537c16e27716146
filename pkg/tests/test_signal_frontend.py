import numpy as np
import pytest

from dsn.errors import DataError, NumericError, ShapeError
from dsn.signal_frontend import (FFT_SIZE, HOP, SAMPLE_RATE, AudioBuffer,
                                 apply_mask, compress, decompress,
                                 frame_count, hann_window, ideal_ratio_mask,
                                 istft, read_wav, si_sdr, sqrt_hann_window,
                                 stft, write_wav)
from dsn.tensor_core import SeededRng


def test_sqrt_hann_window_overlap_identity():
    # with hop = fft/2, the squared window overlap-adds to exactly one
    w = sqrt_hann_window()
    power = w ** 2
    assert np.allclose(power[:HOP] + power[HOP:], 1.0, rtol=0, atol=1e-15)


def test_stft_istft_roundtrip_interior():
    rng = SeededRng(0)
    x = rng.uniform(-0.8, 0.8, 4 * FFT_SIZE)
    spec = stft(x)
    back = istft(spec)
    # the first and last half-frame lack overlap partners; the interior
    # must reconstruct to near machine precision
    assert back.size == (spec.shape[0] - 1) * HOP + FFT_SIZE
    assert np.max(np.abs(back[HOP:-HOP] - x[HOP:x.size - HOP])) <= 1e-10


def test_stft_frame_geometry():
    x = np.zeros(SAMPLE_RATE)
    spec = stft(x)
    assert spec.shape == (frame_count(SAMPLE_RATE), FFT_SIZE // 2 + 1)
    assert frame_count(SAMPLE_RATE) == (SAMPLE_RATE - FFT_SIZE) // HOP + 1


def test_stft_pure_tone_lands_in_its_bin():
    # 1 kHz at 16 kHz with a 512 fft: bin = 1000/16000*512 = 32 exactly
    t = np.arange(2 * SAMPLE_RATE) / SAMPLE_RATE
    x = np.sin(2 * np.pi * 1000.0 * t)
    spec = stft(x)
    mags = np.abs(spec).mean(axis=0)
    assert int(np.argmax(mags)) == 32


def test_stft_rejects_short_input():
    with pytest.raises(DataError):
        stft(np.zeros(FFT_SIZE - 1))


def test_compress_matches_frozen_value_and_roundtrips():
    c = 0.3
    assert compress(np.array([0.5]), c)[0] == pytest.approx(
        0.8122523963562356, abs=1e-15)
    rng = SeededRng(1)
    mag = rng.uniform(0.0, 3.0, 64)
    assert np.allclose(decompress(compress(mag, c), c), mag,
                       rtol=1e-12, atol=1e-12)


def test_compress_validates_exponent_and_sign():
    with pytest.raises(NumericError):
        compress(np.array([1.0]), 0.0)
    with pytest.raises(NumericError):
        compress(np.array([1.0]), 1.5)
    with pytest.raises(NumericError):
        compress(np.array([-0.1]), 0.3)


def test_apply_mask_all_ones_is_bit_exact_identity():
    rng = SeededRng(2)
    spec = stft(rng.uniform(-0.5, 0.5, 4 * FFT_SIZE))
    out = apply_mask(spec, np.ones(spec.shape), 0.3)
    assert np.array_equal(out, spec)


def test_apply_mask_equals_power_law():
    rng = SeededRng(3)
    spec = stft(rng.uniform(-0.5, 0.5, 4 * FFT_SIZE))
    mask = rng.uniform(0.0, 1.0, spec.shape)
    out = apply_mask(spec, mask, 0.3)
    want = spec * mask ** (1.0 / 0.3)
    assert np.allclose(out, want, rtol=1e-13, atol=1e-16)


def test_apply_mask_rejects_out_of_range():
    spec = np.ones((2, 3), dtype=np.complex128)
    with pytest.raises(NumericError):
        apply_mask(spec, np.full((2, 3), 1.5), 0.3)


def test_ideal_ratio_mask_bounds_and_zero_denominator():
    clean = np.array([[1.0 + 0j, 0.0 + 0j, 4.0 + 0j]])
    noisy = np.array([[2.0 + 0j, 0.0 + 0j, 1.0 + 0j]])
    mask = ideal_ratio_mask(clean, noisy, 0.3)
    assert mask.shape == clean.shape
    # |S|^c/|X|^c for the first bin, clipped at 1 for the third,
    # and 1 where the noisy bin is exactly silent
    assert mask[0, 0] == pytest.approx(0.5 ** 0.3, abs=1e-15)
    assert mask[0, 1] == 1.0
    assert mask[0, 2] == 1.0
    assert np.all(mask >= 0.0) and np.all(mask <= 1.0)


def test_si_sdr_is_scale_invariant_exactly():
    rng = SeededRng(4)
    ref = rng.normal(0.0, 1.0, 4000)
    # a perfectly scaled estimate projects back onto the reference with
    # zero residual: the capped score is returned exactly
    assert si_sdr(2.0 * ref, ref) == 100.0
    assert si_sdr(ref, ref) == 100.0


def test_si_sdr_known_mixture_value():
    rng = SeededRng(5)
    ref = rng.normal(0.0, 1.0, 4000)
    noise = rng.normal(0.0, 1.0, 4000)
    # make the noise exactly orthogonal to the reference
    noise -= ref * (noise @ ref) / (ref @ ref)
    est = ref + noise
    want = 10.0 * np.log10((ref @ ref) / (noise @ noise))
    assert si_sdr(est, ref) == pytest.approx(want, abs=1e-10)


def test_si_sdr_rejects_silent_reference():
    with pytest.raises(NumericError):
        si_sdr(np.ones(16), np.zeros(16))


def test_si_sdr_orthogonal_estimate_floors():
    ref = np.zeros(8)
    ref[0] = 1.0
    est = np.zeros(8)
    est[1] = 1.0
    assert si_sdr(est, ref) == -100.0


def test_wav_roundtrip_one_lsb(tmp_path):
    rng = SeededRng(6)
    samples = rng.uniform(-0.9, 0.9, SAMPLE_RATE // 4)
    path = tmp_path / "x.wav"
    write_wav(str(path), AudioBuffer(samples))
    back = read_wav(str(path))
    assert back.sample_rate == SAMPLE_RATE
    assert back.samples.dtype == np.float64
    assert np.max(np.abs(back.samples - samples)) <= 1.0 / 32768.0


def test_read_wav_rejects_missing_file(tmp_path):
    with pytest.raises(DataError) as err:
        read_wav(str(tmp_path / "absent.wav"))
    assert "absent.wav" in str(err.value)


def test_read_wav_rejects_wrong_rate(tmp_path):
    import wave

    path = tmp_path / "wrong.wav"
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(8000)
        fh.writeframes(b"\x00\x00" * 100)
    with pytest.raises(DataError):
        read_wav(str(path))


def test_audio_buffer_duration():
    buf = AudioBuffer(np.zeros(SAMPLE_RATE))
    assert buf.duration == 1.0


def test_audio_buffer_rejects_2d():
    with pytest.raises(ShapeError):
        AudioBuffer(np.zeros((2, 100)))


def test_hann_window_is_periodic():
    w = hann_window(8)
    assert w[0] == 0.0
    assert w.size == 8
    # periodic hann: w[k] = 0.5 - 0.5 cos(2 pi k / n)
    want = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(8) / 8)
    assert np.allclose(w, want, rtol=0, atol=1e-15)
