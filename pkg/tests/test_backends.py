import subprocess
import sys

import numpy as np
import pytest

from conftest import frame_count_of, noise_audio, random_gates
from dsn import kernels
from dsn.dsn_model import build_model, forward_utterance
from dsn.errors import ConfigError

pytestmark = pytest.mark.skipif(not kernels.HAS_NUMBA,
                                reason="numba backend unavailable")


@pytest.fixture()
def rng():
    return np.random.default_rng(99)


def _mask(rng, n):
    m = (rng.uniform(0, 1, n) < 0.6).astype(np.uint8)
    m[0] = 1
    return m


def _both(name, *args):
    results = {}
    for backend in kernels.available_backends():
        previous = kernels.set_backend(backend)
        try:
            results[backend] = getattr(kernels, name)(*args)
        finally:
            kernels.set_backend(previous)
    return results["numpy"], results["numba"]


def _assert_close(a, b):
    if isinstance(a, tuple):
        for x, y in zip(a, b):
            _assert_close(x, y)
        return
    scale = max(float(np.max(np.abs(a))), 1e-30)
    assert float(np.max(np.abs(a - b))) / scale <= 1e-12


def test_backend_selection_roundtrip():
    assert kernels.available_backends() == ("numba", "numpy")
    start = kernels.active_backend()
    previous = kernels.set_backend("numpy")
    assert previous == start
    assert kernels.active_backend() == "numpy"
    kernels.set_backend(start)
    with pytest.raises(ConfigError):
        kernels.set_backend("fortran")


def test_env_flag_rejects_unknown_backend():
    code = "import dsn.kernels"
    proc = subprocess.run([sys.executable, "-c", code],
                          env={"DSN_BACKEND": "cuda", "PATH": "/usr/bin"},
                          capture_output=True, text=True)
    assert proc.returncode != 0
    assert "DSN_BACKEND" in proc.stderr


def test_env_flag_selects_numpy():
    code = ("import dsn.kernels as k; print(k.active_backend())")
    proc = subprocess.run([sys.executable, "-c", code],
                          env={"DSN_BACKEND": "numpy", "PATH": "/usr/bin"},
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.strip() == "numpy"


def test_conv2d_core_parity(rng):
    tdim, fdim, ci, co = 6, 9, 3, 4
    args = (rng.standard_normal((tdim + 1, fdim + 2, ci)),
            rng.standard_normal((2, 3, ci, co)),
            rng.standard_normal(co), _mask(rng, tdim))
    _assert_close(*_both("conv2d_core", *args))


def test_convt_core_parity(rng):
    tdim, fo, cp, cq = 6, 5, 4, 3
    args = (rng.standard_normal((tdim + 1, fo, cq)),
            rng.standard_normal((2, 3, cp, cq)),
            rng.standard_normal(cp), _mask(rng, tdim))
    _assert_close(*_both("convt_core", *args))


def test_bigru_core_parity(rng):
    tdim, fdim, nin, h = 4, 7, 6, 5

    def w():
        return 0.3 * rng.standard_normal((3 * h, nin))

    def u():
        return 0.3 * rng.standard_normal((3 * h, h))

    def b():
        return 0.1 * rng.standard_normal(3 * h)

    args = (rng.standard_normal((tdim, fdim, nin)),
            w(), u(), b(), b(), w(), u(), b(), b(), _mask(rng, tdim))
    _assert_close(*_both("bigru_core", *args))


@pytest.mark.parametrize("gated,slim", [(False, False), (True, False),
                                        (True, True)])
def test_gru_seq_core_parity(rng, gated, slim):
    tdim, fdim, nin, h = 8, 5, 6, 4
    g = _mask(rng, tdim).astype(np.float64)
    args = (rng.standard_normal((tdim, fdim, nin)),
            0.3 * rng.standard_normal((3 * h, nin)),
            0.3 * rng.standard_normal((3 * h, h)),
            0.1 * rng.standard_normal(3 * h),
            0.1 * rng.standard_normal(3 * h),
            g, 0.2 * rng.standard_normal((fdim, h)), gated, slim)
    _assert_close(*_both("gru_seq_core", *args))


def test_attn_bins_core_parity(rng):
    tdim, fdim, heads, dh = 5, 9, 2, 4
    shape = (tdim, fdim, heads, dh)
    args = (rng.standard_normal(shape), rng.standard_normal(shape),
            rng.standard_normal(shape), _mask(rng, tdim))
    _assert_close(*_both("attn_bins_core", *args))


@pytest.mark.parametrize("ctx", [1, 3, 16])
def test_attn_time_core_parity(rng, ctx):
    tdim, fdim, heads, dh = 12, 5, 2, 4
    shape = (tdim, fdim, heads, dh)
    args = (rng.standard_normal(shape), rng.standard_normal(shape),
            rng.standard_normal(shape), _mask(rng, tdim), _mask(rng, tdim),
            ctx)
    _assert_close(*_both("attn_time_core", *args))


def test_full_forward_parity(config):
    audio = noise_audio(7, seconds=0.5)
    model = build_model(config, seed=3)
    gates = random_gates(8, frame_count_of(audio, config))
    outputs = {}
    for backend in kernels.available_backends():
        previous = kernels.set_backend(backend)
        try:
            for mode in ("slim", "masked"):
                res = forward_utterance(model, audio, mode=mode, gates=gates)
                outputs[(backend, mode)] = res.audio.samples
        finally:
            kernels.set_backend(previous)
    for mode in ("slim", "masked"):
        a = outputs[("numpy", mode)]
        b = outputs[("numba", mode)]
        scale = float(np.max(np.abs(a)))
        assert float(np.max(np.abs(a - b))) / scale <= 1e-12
