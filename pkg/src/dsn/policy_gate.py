"""Per-frame gating policy: features, logits, Gumbel-softmax, gate losses.

The policy reads the second encoder stage, summarises each frame to
per-channel mean and standard deviation over frequency, and maps that
through a two-layer head to two logits: class 0 skips the dynamic
sub-components for the frame, class 1 activates them. Training-style
relaxation uses Gumbel-softmax; inference uses the hard argmax with no
noise.
"""
from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ShapeError
from .tensor_core import SeededRng, softmax, xavier_init

HIDDEN = 16
N_CLASSES = 2


@dataclass
class PolicyParams:
    fc1_w: np.ndarray   # (features, HIDDEN)
    fc1_b: np.ndarray   # (HIDDEN,)
    fc2_w: np.ndarray   # (HIDDEN, N_CLASSES)
    fc2_b: np.ndarray   # (N_CLASSES,)


def build_policy(n_features, rng):
    return PolicyParams(
        fc1_w=xavier_init((n_features, HIDDEN), rng),
        fc1_b=np.zeros(HIDDEN),
        fc2_w=xavier_init((HIDDEN, N_CLASSES), rng),
        fc2_b=np.zeros(N_CLASSES),
    )


@dataclass
class GateVector:
    """Per-frame gate values. Hard gates are exactly 0.0 or 1.0."""
    values: np.ndarray
    hard: bool = True

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ShapeError(f"gate values must be 1-d, got {self.values.shape}")
        if self.values.size == 0:
            raise ShapeError("gate vector is empty")
        if self.hard:
            if not np.isin(self.values, (0.0, 1.0)).all():
                raise NumericError("hard gate values must be exactly 0 or 1")
        else:
            if (self.values < 0.0).any() or (self.values > 1.0).any():
                raise NumericError("soft gate values must lie in [0, 1]")

    def __len__(self):
        return self.values.size

    @property
    def activation_ratio(self):
        return float(self.values.mean())

    def active_mask(self):
        """uint8 mask of frames whose gate is non-zero."""
        return (self.values != 0.0).astype(np.uint8)


def policy_features(enc):
    """Frame summary: per-channel mean and std over the frequency axis.

    enc is (T, F, C); the result is (T, 2C), means first, then stds.
    """
    enc = np.asarray(enc, dtype=np.float64)
    if enc.ndim != 3:
        raise ShapeError(f"encoder features must be (T, F, C), got {enc.shape}")
    return np.concatenate([enc.mean(axis=1), enc.std(axis=1)], axis=1)


def policy_logits(params, feats):
    """Two-layer head with a tanh between the layers. Returns (T, 2)."""
    feats = np.asarray(feats, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[1] != params.fc1_w.shape[0]:
        raise ShapeError(
            f"features must be (T, {params.fc1_w.shape[0]}), got {feats.shape}")
    hidden = np.tanh(feats @ params.fc1_w + params.fc1_b)
    return hidden @ params.fc2_w + params.fc2_b


def gumbel_softmax(logits, tau, noise=None, hard=True):
    """Two-class Gumbel-softmax over (T, 2) logits; returns a GateVector.

    Hard mode ignores noise and takes the deterministic argmax, with ties
    resolved to skip. Soft mode relaxes through a temperature-scaled
    softmax of (logits + noise); zero noise is used when none is given.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2 or logits.shape[1] != N_CLASSES:
        raise ShapeError(f"logits must be (T, {N_CLASSES}), got {logits.shape}")
    if not tau > 0.0:
        raise NumericError(f"temperature must be positive, got {tau}")
    if hard:
        values = (logits[:, 1] > logits[:, 0]).astype(np.float64)
        return GateVector(values, hard=True)
    if noise is None:
        noise = np.zeros_like(logits)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != logits.shape:
        raise ShapeError(
            f"noise shape {noise.shape} must match logits shape {logits.shape}")
    probs = softmax((logits + noise) / tau, axis=1)
    return GateVector(probs[:, 1], hard=False)


def sample_gumbel_noise(shape, rng):
    if not isinstance(rng, SeededRng):
        raise ShapeError("rng must be a SeededRng")
    return rng.gumbel(size=shape)


def gate_loss(gates, theta):
    """Hinge on the mean activation: max(0, mean(g) - theta)."""
    values = gates.values if isinstance(gates, GateVector) else np.asarray(
        gates, dtype=np.float64)
    if values.size == 0:
        raise ShapeError("gate vector is empty")
    if not 0.0 <= theta <= 1.0:
        raise NumericError(f"theta must be in [0, 1], got {theta}")
    return float(max(0.0, values.mean() - theta))


def map_ovrl_to_theta(ovrl, lam):
    """Map an overall speech-quality score in [1, 5] to a gate target.

    theta = lam * (5 - ovrl) / 4, clipped to [0, 1]: clean input (score 5)
    asks for zero dynamic activation, the worst score asks for lam.
    """
    if not 1.0 <= ovrl <= 5.0:
        raise NumericError(f"ovrl score must be in [1, 5], got {ovrl}")
    if lam < 0.0:
        raise NumericError(f"lam must be non-negative, got {lam}")
    return float(np.clip(lam * (5.0 - ovrl) / 4.0, 0.0, 1.0))


def gate_loss_mgt(gates, ovrl, lam):
    """Gate hinge against the metric-derived target."""
    return gate_loss(gates, map_ovrl_to_theta(ovrl, lam))


def policy_grad(params, feats, tau, theta, noise=None):
    """Analytic gradient of the soft gate loss w.r.t. the policy parameters.

    Runs the soft path: hidden = tanh(feats @ W1 + b1), logits, relaxed
    gates g = softmax((logits + noise)/tau)[:, 1], loss = max(0, mean(g) -
    theta). Returns (loss, grads) where grads has keys fc1_w, fc1_b,
    fc2_w, fc2_b. At the hinge kink (mean exactly theta) the subgradient
    zero is returned. The reconstruction path carries no gradient into the
    policy; this hinge is the only term that does.
    """
    feats = np.asarray(feats, dtype=np.float64)
    tdim = feats.shape[0]
    if noise is None:
        noise = np.zeros((tdim, N_CLASSES))
    noise = np.asarray(noise, dtype=np.float64)
    if not tau > 0.0:
        raise NumericError(f"temperature must be positive, got {tau}")

    pre = feats @ params.fc1_w + params.fc1_b
    hidden = np.tanh(pre)
    logits = hidden @ params.fc2_w + params.fc2_b
    probs = softmax((logits + noise) / tau, axis=1)
    g = probs[:, 1]
    excess = g.mean() - theta
    loss = float(max(0.0, excess))

    zeros = {
        "fc1_w": np.zeros_like(params.fc1_w),
        "fc1_b": np.zeros_like(params.fc1_b),
        "fc2_w": np.zeros_like(params.fc2_w),
        "fc2_b": np.zeros_like(params.fc2_b),
    }
    if excess <= 0.0:
        return loss, zeros

    # d loss / d g_t = 1/T; two-class softmax jacobian row:
    # d g / d y_act = g (1 - g), d g / d y_skip = -g (1 - g), and the
    # temperature divides both.
    coeff = g * (1.0 - g) / (tau * tdim)
    dlogits = np.stack([-coeff, coeff], axis=1)
    grads = dict(zeros)
    grads["fc2_w"] = hidden.T @ dlogits
    grads["fc2_b"] = dlogits.sum(axis=0)
    dhidden = dlogits @ params.fc2_w.T
    dpre = dhidden * (1.0 - hidden * hidden)
    grads["fc1_w"] = feats.T @ dpre
    grads["fc1_b"] = dpre.sum(axis=0)
    return loss, grads


def grad_check(seed, n_features=64, tdim=40, tau=0.5, step=1e-5):
    """Worst relative error of policy_grad against central differences.

    Builds a seeded policy and feature batch, sets theta to half the mean
    relaxed gate so the hinge is strictly active (the kink would make
    finite differences meaningless), then compares the analytic
    directional derivative along one random unit direction per parameter
    tensor with a central difference of the same loss.
    """
    rng = SeededRng(seed)
    params = build_policy(n_features, rng)
    feats = rng.normal(0.0, 1.0, (tdim, n_features))
    noise = sample_gumbel_noise((tdim, N_CLASSES), rng)
    relaxed = gumbel_softmax(policy_logits(params, feats), tau,
                             noise=noise, hard=False)
    theta = float(np.mean(relaxed.values)) / 2.0
    _, grads = policy_grad(params, feats, tau, theta, noise=noise)

    worst = 0.0
    for name, grad in grads.items():
        tensor = getattr(params, name)
        base = tensor.copy()
        direction = rng.normal(0.0, 1.0, tensor.shape)
        direction /= np.linalg.norm(direction)
        analytic = float(np.sum(grad * direction))
        np.copyto(tensor, base + step * direction)
        plus = policy_grad(params, feats, tau, theta, noise=noise)[0]
        np.copyto(tensor, base - step * direction)
        minus = policy_grad(params, feats, tau, theta, noise=noise)[0]
        np.copyto(tensor, base)
        numeric = (plus - minus) / (2.0 * step)
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
        worst = max(worst, rel)
    return worst
