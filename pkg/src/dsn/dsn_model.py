"""Model assembly: config, construction, offline and streaming forwards.

Signal path: STFT magnitudes are power-law compressed, pushed through two
static encoder convolutions, and split by a static/dynamic convolution
pair into two parallel 32-channel streams S (static) and D (dynamic,
pre-gated, exactly zero on skipped frames). Three transformer blocks
follow, each an attention sub-block and a grouped-GRU sub-block; the first
and last attend over frequency bins within a frame, the middle one attends
causally over time. Every sub-block adds its static path plus the gated
dynamic path into S, and the gated dynamic path alone into D. The streams
merge by addition into the decoder, whose first stage is again a
static/dynamic pair; two static transposed convolutions with encoder skip
connections produce a sigmoid mask over the compressed magnitude.

A small policy head reads the second encoder stage and decides per frame
whether the dynamic parts run; one gate vector steers every dynamic
sub-component of the forward pass. All convolutions are causal in time
(one frame of history, no look-ahead), the time attention sees at most
ctx past frames, and the time GRU state always advances, so the model
streams frame by frame with bounded state.
"""
import json
from dataclasses import dataclass, fields

import numpy as np

from . import dynamic_blocks as blocks
from .dynamic_blocks import MASKED, SLIM, TimeAttnCache, check_mode
from .errors import ConfigError, DataError, ShapeError, WeightFormatError
from .policy_gate import (GateVector, PolicyParams, build_policy, gate_loss,
                          gumbel_softmax, map_ovrl_to_theta, policy_features,
                          policy_logits)
from .signal_frontend import (SAMPLE_RATE, AudioBuffer, apply_mask,
                              hann_window, istft, sqrt_hann_window, stft)
from .tensor_core import SeededRng, conv2d, conv2d_transpose, sigmoid

WEIGHT_FORMAT_VERSION = "dsn-weights-v1"


@dataclass(frozen=True)
class ModelConfig:
    """Reference configuration of the slimmable enhancer.

    channels are the three encoder stage widths; the transformer streams
    are channels[2] wide each. n_groups GRU groups and n_heads attention
    heads split evenly into static and dynamic halves; n_dynamic_groups is
    either half of n_groups (the reference) or 0 for a purely static
    build. max_ctx_frames bounds the causal attention window.
    """
    fft_size: int = 512
    hop: int = 256
    compression: float = 0.3
    channels: tuple = (16, 32, 32)
    n_groups: int = 4
    n_dynamic_groups: int = 2
    n_heads: int = 4
    max_ctx_frames: int = 63
    temperature: float = 0.5
    target_ratio: float = 0.5
    ratio_scale: float = 0.5
    gate_weight: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        if self.fft_size < 16 or self.fft_size % 2:
            raise ConfigError(f"fft_size must be even and >= 16, got {self.fft_size}")
        if not 0 < self.hop <= self.fft_size:
            raise ConfigError(f"hop must be in (0, fft_size], got {self.hop}")
        if not 0.0 < self.compression <= 1.0:
            raise ConfigError(
                f"compression must be in (0, 1], got {self.compression}")
        if len(self.channels) != 3 or any(c < 1 for c in self.channels):
            raise ConfigError(
                f"channels must be three positive widths, got {self.channels}")
        if self.n_groups < 2 or self.n_groups % 2:
            raise ConfigError(f"n_groups must be even and >= 2, got {self.n_groups}")
        if self.n_dynamic_groups not in (0, self.n_groups // 2):
            raise ConfigError(
                f"n_dynamic_groups must be 0 or {self.n_groups // 2}, "
                f"got {self.n_dynamic_groups}")
        if self.n_heads < 2 or self.n_heads % 2:
            raise ConfigError(f"n_heads must be even and >= 2, got {self.n_heads}")
        if self.channels[2] % (self.n_heads // 2):
            raise ConfigError(
                f"{self.n_heads // 2} heads per side do not tile "
                f"{self.channels[2]} channels")
        if self.channels[2] % (self.n_groups // 2):
            raise ConfigError(
                f"{self.n_groups // 2} groups per side do not tile "
                f"{self.channels[2]} channels")
        if self.max_ctx_frames < 1:
            raise ConfigError(
                f"max_ctx_frames must be >= 1, got {self.max_ctx_frames}")
        if not self.temperature > 0.0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")
        if not 0.0 <= self.target_ratio <= 1.0:
            raise ConfigError(
                f"target_ratio must be in [0, 1], got {self.target_ratio}")
        if self.ratio_scale < 0.0:
            raise ConfigError(f"ratio_scale must be >= 0, got {self.ratio_scale}")
        if self.gate_weight < 0.0:
            raise ConfigError(f"gate_weight must be >= 0, got {self.gate_weight}")

    @property
    def freq_chain(self):
        """Frequency sizes along the encoder: input and three stages."""
        f = self.fft_size // 2 + 1
        chain = [f]
        for _ in range(3):
            f = (f - 1) // 2 + 1
            chain.append(f)
        return tuple(chain)

    @property
    def frames_per_second(self):
        return SAMPLE_RATE / self.hop

    @property
    def n_heads_static(self):
        return self.n_heads // 2

    @property
    def n_heads_dynamic(self):
        return self.n_heads // 2 if self.n_dynamic_groups else 0

    @property
    def head_dim(self):
        return self.channels[2] // self.n_heads_static

    @property
    def n_static_groups(self):
        return self.n_groups // 2

    @property
    def n_policy_features(self):
        return 2 * self.channels[1]

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config key: {unknown[0]!r}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(f"bad config value: {exc}") from None

    @classmethod
    def from_json(cls, path):
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"{path}: cannot read config ({exc})") from None
        if not isinstance(data, dict):
            raise DataError(f"{path}: config must be a JSON object")
        return cls.from_dict(data)


@dataclass
class DsnModel:
    config: ModelConfig
    conv1: blocks.ConvParams
    conv2: blocks.ConvParams
    conv3: blocks.DynConvPair
    policy: PolicyParams
    f1_mha: blocks.DynMhaBlock
    f1_gru: blocks.FreqGruBlock
    t_mha: blocks.DynMhaBlock
    t_gru: blocks.TimeGruBlock
    f2_mha: blocks.DynMhaBlock
    f2_gru: blocks.FreqGruBlock
    deconv3: blocks.DynConvPair
    deconv2: blocks.ConvParams
    deconv1: blocks.ConvParams

    def named_params(self):
        """Yield (name, array) in a fixed order; names mark dynamic branches."""
        yield from _conv_params("conv1", self.conv1)
        yield from _conv_params("conv2", self.conv2)
        yield from _pair_params("conv3", self.conv3)
        yield "policy.fc1.w", self.policy.fc1_w
        yield "policy.fc1.b", self.policy.fc1_b
        yield "policy.fc2.w", self.policy.fc2_w
        yield "policy.fc2.b", self.policy.fc2_b
        for prefix, mha, gru in (("f1", self.f1_mha, self.f1_gru),
                                 ("t", self.t_mha, self.t_gru),
                                 ("f2", self.f2_mha, self.f2_gru)):
            yield from _mha_params(prefix + ".mha", mha)
            yield from _gru_params(prefix + ".gru", gru)
        yield from _pair_params("deconv3", self.deconv3)
        yield from _conv_params("deconv2", self.deconv2)
        yield from _conv_params("deconv1", self.deconv1)

    @property
    def n_params(self):
        return sum(arr.size for _, arr in self.named_params())


def _conv_params(name, conv):
    yield name + ".kern", conv.kern
    yield name + ".bias", conv.bias


def _pair_params(name, pair):
    yield from _conv_params(name + ".static", pair.static)
    yield from _conv_params(name + ".dynamic", pair.dynamic)


def _lin_params(name, lin):
    for branch, subs in (("static", lin.static), ("dynamic", lin.dynamic)):
        for i, p in enumerate(subs):
            yield f"{name}.{branch}.{i}.w", p.w
            yield f"{name}.{branch}.{i}.b", p.b


def _mha_params(name, blk):
    for pname, proj in (("q", blk.q), ("k", blk.k), ("v", blk.v),
                        ("out", blk.out)):
        yield from _lin_params(f"{name}.{pname}", proj)


def _gru_dir_params(name, grp):
    yield name + ".w", grp.w
    yield name + ".u", grp.u
    yield name + ".bx", grp.bx
    yield name + ".bh", grp.bh


def _gru_params(name, blk):
    bidir = isinstance(blk, blocks.FreqGruBlock)
    for branch, groups in (("static", blk.static_groups),
                           ("dynamic", blk.dynamic_groups)):
        for i, grp in enumerate(groups):
            if bidir:
                yield from _gru_dir_params(f"{name}.{branch}.{i}.fwd", grp.fwd)
                yield from _gru_dir_params(f"{name}.{branch}.{i}.bwd", grp.bwd)
            else:
                yield from _gru_dir_params(f"{name}.{branch}.{i}", grp)
    yield from _lin_params(name + ".lin", blk.lin)


def build_model(config, seed=None):
    """Construct a model with seeded Glorot-uniform weights.

    The draw order matches named_params order, so a (config, seed) pair
    pins every tensor.
    """
    rng = SeededRng(config.seed if seed is None else seed)
    c0, c1, c2 = config.channels
    stream = c2
    ns, nd = config.n_static_groups, config.n_dynamic_groups
    hs, hd, dh = (config.n_heads_static, config.n_heads_dynamic,
                  config.head_dim)
    ctx = config.max_ctx_frames

    conv1 = blocks.build_conv(1, c0, rng)
    conv2 = blocks.build_conv(c0, c1, rng)
    conv3 = blocks.build_conv_pair(c1, c2, rng)
    policy = build_policy(config.n_policy_features, rng)
    f1_mha = blocks.build_mha("freq", stream, hs, hd, dh, rng)
    f1_gru = blocks.build_freq_gru(stream, ns, nd, rng)
    t_mha = blocks.build_mha("time", stream, hs, hd, dh, rng, ctx=ctx)
    t_gru = blocks.build_time_gru(stream, ns, nd, rng)
    f2_mha = blocks.build_mha("freq", stream, hs, hd, dh, rng)
    f2_gru = blocks.build_freq_gru(stream, ns, nd, rng)
    deconv3 = blocks.build_conv_pair(c2, c1, rng, transpose=True)
    deconv2 = blocks.build_conv(2 * c1, c0, rng, transpose=True)
    deconv1 = blocks.build_conv(2 * c0, 1, rng, transpose=True)
    return DsnModel(
        config=config, conv1=conv1, conv2=conv2, conv3=conv3, policy=policy,
        f1_mha=f1_mha, f1_gru=f1_gru, t_mha=t_mha, t_gru=t_gru,
        f2_mha=f2_mha, f2_gru=f2_gru, deconv3=deconv3, deconv2=deconv2,
        deconv1=deconv1,
    )


# ---------------------------------------------------------------------------
# offline forward


@dataclass
class EnhanceResult:
    audio: AudioBuffer
    gates: GateVector
    mask: np.ndarray   # (T, fft/2 + 1)


def _decide_gates(model, enc2, gate_override, n_frames):
    """Run the policy head (always, its cost is unconditional) and apply
    an override if one is forced."""
    feats = policy_features(enc2)
    logits = policy_logits(model.policy, feats)
    gates = gumbel_softmax(logits, model.config.temperature, hard=True)
    if gate_override is not None:
        if gate_override not in (0, 1):
            raise ConfigError(
                f"gate_override must be 0 or 1, got {gate_override!r}")
        gates = GateVector(np.full(n_frames, float(gate_override)))
    return gates


def _policy_macs(config, n_frames):
    from .policy_gate import HIDDEN, N_CLASSES
    return n_frames * (config.n_policy_features * HIDDEN + HIDDEN * N_CLASSES)


def _apply_paths(s_stream, d_stream, static_path, dynamic_path, g):
    s_stream = s_stream + static_path
    if dynamic_path is not None:
        gated = g[:, None, None] * dynamic_path
        s_stream = s_stream + gated
        d_stream = d_stream + gated
    return s_stream, d_stream


def forward_utterance(model, audio, mode=SLIM, gate_override=None,
                      gates=None, counter=None):
    """Enhance a whole utterance. Returns an EnhanceResult.

    mode selects slim (structural skipping) or masked (dense oracle)
    execution. gate_override forces every frame's gate to 0 or 1; gates
    supplies an explicit GateVector instead (mutually exclusive). The
    policy head runs and is counted either way. counter, when given,
    receives per-block multiply-accumulate counts.
    """
    check_mode(mode)
    if not isinstance(audio, AudioBuffer):
        raise ShapeError("audio must be an AudioBuffer")
    if audio.sample_rate != SAMPLE_RATE:
        raise DataError(
            f"model expects {SAMPLE_RATE} Hz audio, got {audio.sample_rate}")
    if gates is not None and gate_override is not None:
        raise ConfigError("pass either gates or gate_override, not both")
    cfg = model.config

    spec = stft(audio.samples, cfg.fft_size, cfg.hop)
    cm = np.abs(spec) ** cfg.compression
    tdim = spec.shape[0]
    f1, f2 = cfg.freq_chain[1], cfg.freq_chain[2]

    enc1 = conv2d(cm[:, :, None], model.conv1.kern, model.conv1.bias)
    enc2 = conv2d(enc1, model.conv2.kern, model.conv2.bias)
    if counter is not None:
        counter.add("conv1.static", tdim * f1 * cfg.channels[0] * 6 * 1)
        counter.add("conv2.static",
                    tdim * f2 * cfg.channels[1] * 6 * cfg.channels[0])
        counter.add("policy.static", _policy_macs(cfg, tdim))

    if gates is None:
        gates = _decide_gates(model, enc2, gate_override, tdim)
    elif not isinstance(gates, GateVector):
        raise ShapeError("gates must be a GateVector")
    g = gates.values

    s_stream, d_stream = blocks.conv_pair_streams(
        model.conv3, enc2, gates, mode, counter, "conv3")

    for prefix, mha, gru in (("f1", model.f1_mha, model.f1_gru),
                             ("t", model.t_mha, model.t_gru),
                             ("f2", model.f2_mha, model.f2_gru)):
        st, dy = blocks.mha_forward(mha, s_stream, d_stream, gates, mode,
                                    counter, prefix + ".mha")
        s_stream, d_stream = _apply_paths(s_stream, d_stream, st, dy, g)
        if prefix == "t":
            st, dy, _ = blocks.time_gru_forward(
                gru, s_stream, d_stream, gates, mode, counter, prefix + ".gru")
        else:
            st, dy = blocks.freq_gru_forward(
                gru, s_stream, d_stream, gates, mode, counter, prefix + ".gru")
        s_stream, d_stream = _apply_paths(s_stream, d_stream, st, dy, g)

    merged = s_stream + d_stream
    dec3 = blocks.conv_pair_merged(model.deconv3, merged, gates, mode,
                                   counter, "deconv3")
    cat2 = np.concatenate([dec3, enc2], axis=2)
    dec2 = conv2d_transpose(cat2, model.deconv2.kern, model.deconv2.bias,
                            causal=True)
    cat1 = np.concatenate([dec2, enc1], axis=2)
    dec1 = conv2d_transpose(cat1, model.deconv1.kern, model.deconv1.bias,
                            causal=True)
    if counter is not None:
        counter.add("deconv2.static",
                    tdim * 6 * f2 * cfg.channels[0] * (2 * cfg.channels[1]))
        counter.add("deconv1.static", tdim * 6 * f1 * 1 * (2 * cfg.channels[0]))

    mask = sigmoid(dec1[:, :, 0])
    out_spec = apply_mask(spec, mask, cfg.compression)
    enhanced = istft(out_spec, cfg.fft_size, cfg.hop)
    return EnhanceResult(audio=AudioBuffer(enhanced), gates=gates, mask=mask)


# ---------------------------------------------------------------------------
# streaming forward


@dataclass
class StreamState:
    """Everything the model carries between frames; size is constant.

    hist holds one input frame per causal convolution; tgru_h the per-bin
    time-GRU states; attn_cache the bounded key/value rings; ola_tail the
    second half of the previous synthesis frame.
    """
    mode: str
    gate_override: object
    hist: dict
    tgru_h: np.ndarray
    attn_cache: TimeAttnCache
    ola_tail: np.ndarray
    window: np.ndarray
    frame: int = 0

    def nbytes(self):
        total = sum(a.nbytes for a in self.hist.values())
        total += self.tgru_h.nbytes + self.ola_tail.nbytes + self.window.nbytes
        total += self.attn_cache.nbytes()
        return total


def init_stream_state(model, mode=SLIM, gate_override=None):
    check_mode(mode)
    if gate_override is not None and gate_override not in (0, 1):
        raise ConfigError(
            f"gate_override must be 0 or 1, got {gate_override!r}")
    cfg = model.config
    c0, c1, c2 = cfg.channels
    f0, f1, f2, f3 = cfg.freq_chain
    hist = {
        "conv1": np.zeros((f0, 1)),
        "conv2": np.zeros((f1, c0)),
        "conv3": np.zeros((f2, c1)),
        "deconv3": np.zeros((f3, c2)),
        "deconv2": np.zeros((f2, 2 * c1)),
        "deconv1": np.zeros((f1, 2 * c0)),
    }
    width = c2 // cfg.n_static_groups
    tgru_h = np.zeros((cfg.n_groups if cfg.n_dynamic_groups
                       else cfg.n_static_groups, f3, width))
    cache = TimeAttnCache(
        ctx=cfg.max_ctx_frames, fdim=f3,
        n_heads_static=cfg.n_heads_static,
        n_heads_dynamic=cfg.n_heads_dynamic,
        head_dim=cfg.head_dim,
    )
    return StreamState(
        mode=mode, gate_override=gate_override, hist=hist, tgru_h=tgru_h,
        attn_cache=cache, ola_tail=np.zeros(cfg.hop),
        window=sqrt_hann_window(cfg.fft_size),
    )


def forward_streaming(model, frame, state):
    """Process one fft_size-sample input frame; emit hop output samples.

    Frames advance by hop samples, so the caller feeds overlapping frames:
    frame t covers samples [t*hop, t*hop + fft_size). The emitted block
    completes output samples [t*hop, (t+1)*hop). Equals the offline
    forward on the same gate decisions.
    """
    cfg = model.config
    frame = np.ascontiguousarray(frame, dtype=np.float64)
    if frame.shape != (cfg.fft_size,):
        raise ShapeError(
            f"frame must have {cfg.fft_size} samples, got {frame.shape}")
    mode = state.mode

    spec_t = np.fft.rfft(frame * state.window, n=cfg.fft_size)
    cm = np.abs(spec_t)[None, :, None] ** cfg.compression

    enc1 = conv2d(cm, model.conv1.kern, model.conv1.bias,
                  history=state.hist["conv1"])
    enc2 = conv2d(enc1, model.conv2.kern, model.conv2.bias,
                  history=state.hist["conv2"])
    state.hist["conv1"] = cm[0]
    state.hist["conv2"] = enc1[0]

    gates = _decide_gates(model, enc2, state.gate_override, 1)
    g = gates.values
    g_t = float(g[0])

    s_stream, d_stream = blocks.conv_pair_streams(
        model.conv3, enc2, gates, mode, history=state.hist["conv3"])
    state.hist["conv3"] = enc2[0]

    for prefix, mha, gru in (("f1", model.f1_mha, model.f1_gru),
                             ("t", model.t_mha, model.t_gru),
                             ("f2", model.f2_mha, model.f2_gru)):
        if prefix == "t":
            st, dy = blocks.mha_time_step(mha, s_stream, d_stream, g_t, mode,
                                          state.attn_cache)
            s_stream, d_stream = _apply_paths(s_stream, d_stream, st, dy, g)
            st, dy, state.tgru_h = blocks.time_gru_forward(
                gru, s_stream, d_stream, gates, mode, h0=state.tgru_h)
        else:
            st, dy = blocks.mha_forward(mha, s_stream, d_stream, gates, mode)
            s_stream, d_stream = _apply_paths(s_stream, d_stream, st, dy, g)
            st, dy = blocks.freq_gru_forward(gru, s_stream, d_stream, gates,
                                             mode)
        s_stream, d_stream = _apply_paths(s_stream, d_stream, st, dy, g)

    merged = s_stream + d_stream
    dec3 = blocks.conv_pair_merged(model.deconv3, merged, gates, mode,
                                   history=state.hist["deconv3"])
    state.hist["deconv3"] = merged[0]
    cat2 = np.concatenate([dec3, enc2], axis=2)
    dec2 = conv2d_transpose(cat2, model.deconv2.kern, model.deconv2.bias,
                            causal=True, history=state.hist["deconv2"])
    state.hist["deconv2"] = cat2[0]
    cat1 = np.concatenate([dec2, enc1], axis=2)
    dec1 = conv2d_transpose(cat1, model.deconv1.kern, model.deconv1.bias,
                            causal=True, history=state.hist["deconv1"])
    state.hist["deconv1"] = cat1[0]

    mask = sigmoid(dec1[:, :, 0])
    out_spec = apply_mask(spec_t[None, :], mask, cfg.compression)
    synth = np.fft.irfft(out_spec[0], n=cfg.fft_size) * state.window
    hop_out = state.ola_tail + synth[:cfg.hop]
    state.ola_tail = synth[cfg.hop:].copy()
    state.frame += 1
    return hop_out, g_t, state


# ---------------------------------------------------------------------------
# weight serialization: JSON header line plus little-endian float64 blob


def save_weights(model, path):
    tensors = []
    offset = 0
    arrays = []
    for name, arr in model.named_params():
        tensors.append({"name": name, "shape": list(arr.shape),
                        "offset": offset})
        arrays.append(np.ascontiguousarray(arr, dtype="<f8"))
        offset += arr.size * 8
    header = {"version": WEIGHT_FORMAT_VERSION, "tensors": tensors}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8"))
        fh.write(b"\n")
        for arr in arrays:
            fh.write(arr.tobytes())


def load_weights(model, path):
    """Fill a built model's tensors from a weight file, in place.

    The file must contain exactly the model's tensors with matching
    shapes; anything missing, extra or misshapen raises WeightFormatError
    naming the tensor.
    """
    try:
        with open(path, "rb") as fh:
            header_line = fh.readline()
            blob = fh.read()
    except OSError as exc:
        raise DataError(f"{path}: cannot read weights ({exc})") from None
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WeightFormatError(f"{path}: bad manifest header ({exc})") from None
    if header.get("version") != WEIGHT_FORMAT_VERSION:
        raise WeightFormatError(
            f"{path}: expected format {WEIGHT_FORMAT_VERSION!r}, "
            f"got {header.get('version')!r}")
    entries = {t["name"]: t for t in header.get("tensors", [])}
    model_params = dict(model.named_params())
    missing = sorted(set(model_params) - set(entries))
    if missing:
        raise WeightFormatError(f"{path}: missing tensor {missing[0]!r}")
    extra = sorted(set(entries) - set(model_params))
    if extra:
        raise WeightFormatError(f"{path}: unexpected tensor {extra[0]!r}")
    for name, arr in model_params.items():
        ent = entries[name]
        if tuple(ent["shape"]) != arr.shape:
            raise WeightFormatError(
                f"{path}: tensor {name!r} has shape {tuple(ent['shape'])}, "
                f"model expects {arr.shape}")
        start = ent["offset"]
        end = start + arr.size * 8
        if end > len(blob):
            raise WeightFormatError(f"{path}: blob too short for {name!r}")
        data = np.frombuffer(blob[start:end], dtype="<f8").reshape(arr.shape)
        np.copyto(arr, data)
    return model


# ---------------------------------------------------------------------------
# losses


LOSS_RESOLUTIONS = ((256, 64), (512, 128), (1024, 256))
LOG_FLOOR = 1e-10


def stft_loss_terms(est, ref, fft_size, hop):
    """Spectral convergence and log-magnitude L1 at one resolution."""
    est = np.ascontiguousarray(est, dtype=np.float64)
    ref = np.ascontiguousarray(ref, dtype=np.float64)
    if est.shape != ref.shape or est.ndim != 1:
        raise ShapeError(
            f"loss needs equal-length 1-d signals, got {est.shape} and {ref.shape}")
    win = hann_window(fft_size)
    emag = np.abs(stft(est, fft_size, hop, window=win))
    rmag = np.abs(stft(ref, fft_size, hop, window=win))
    rnorm = np.linalg.norm(rmag)
    if rnorm == 0.0:
        raise ShapeError(f"reference is silent at resolution {fft_size}")
    sc = np.linalg.norm(rmag - emag) / rnorm
    logmag = np.abs(np.log(np.maximum(rmag, LOG_FLOOR))
                    - np.log(np.maximum(emag, LOG_FLOOR))).mean()
    return float(sc), float(logmag)


def multi_res_stft_loss(est, ref, resolutions=LOSS_RESOLUTIONS):
    """Mean over resolutions of (spectral convergence + log-magnitude L1)."""
    terms = [sum(stft_loss_terms(est, ref, fft, hop))
             for fft, hop in resolutions]
    return float(np.mean(terms))


def total_objective(est, ref, gates, config, ovrl=None):
    """Reconstruction plus weighted gate hinge.

    With an ovrl score the gate target comes from the metric mapping;
    otherwise the configured fixed ratio is used.
    """
    theta = (map_ovrl_to_theta(ovrl, config.ratio_scale)
             if ovrl is not None else config.target_ratio)
    rec = multi_res_stft_loss(est, ref)
    gate = gate_loss(gates, theta)
    return {
        "total": rec + config.gate_weight * gate,
        "reconstruction": rec,
        "gate": gate,
        "theta": theta,
    }
