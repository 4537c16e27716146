import numpy as np
import pytest

from dsn.dsn_model import ModelConfig, build_model
from dsn.policy_gate import GateVector
from dsn.signal_frontend import SAMPLE_RATE, AudioBuffer
from dsn.tensor_core import SeededRng


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    """Echo the one-line acceptance verdicts after the test report."""
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def config():
    return ModelConfig()


@pytest.fixture(scope="session")
def model(config):
    return build_model(config, seed=0)


def noise_audio(seed, seconds=1.0, amplitude=0.5):
    rng = SeededRng(seed)
    samples = rng.uniform(-amplitude, amplitude, int(seconds * SAMPLE_RATE))
    return AudioBuffer(samples)


def frame_count_of(audio, config):
    return (audio.samples.size - config.fft_size) // config.hop + 1


def random_gates(seed, n_frames, p=0.5):
    rng = SeededRng(seed)
    return GateVector((rng.uniform(0.0, 1.0, n_frames) < p).astype(np.float64))
