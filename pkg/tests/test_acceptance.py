"""Acceptance gate: twelve numbered criteria, each with a pinned tolerance.

Every test computes its measurement first, records a single
"ACCEPTANCE n: PASS/FAIL" line (echoed in the terminal summary), and only
then asserts, so a red run still reports every verdict it reached.
"""
import copy
import time

import numpy as np

from conftest import (ACCEPTANCE_LINES, frame_count_of, noise_audio,
                      random_gates)
from dsn.compute_ledger import (PUBLISHED_ANCHORS, MacCounter,
                                compare_with_published, count_macs,
                                expected_macs, throughput_bench)
from dsn.dsn_model import (build_model, forward_streaming, forward_utterance,
                           init_stream_state)
from dsn.policy_gate import (GateVector, gate_loss, gate_loss_mgt,
                             grad_check, map_ovrl_to_theta)
from dsn.signal_frontend import SAMPLE_RATE, apply_mask, ideal_ratio_mask, \
    istft, si_sdr, stft
from dsn.tensor_core import SeededRng


def _report(n, ok, detail):
    line = f"ACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} — {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def _rel(a, b):
    return float(np.max(np.abs(a - b))) / float(np.max(np.abs(b)))


def test_criterion_1_slim_equals_masked_dense(config):
    start = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        m = build_model(config, seed=seed)
        audio = noise_audio(1000 + seed, seconds=1.0)
        gates = random_gates(2000 + seed, frame_count_of(audio, config))
        slim = forward_utterance(m, audio, mode="slim", gates=gates)
        dense = forward_utterance(m, audio, mode="masked", gates=gates)
        worst = max(worst, _rel(slim.audio.samples, dense.audio.samples))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-5 and elapsed < 120.0
    _report(1, ok, f"slim vs masked-dense max relative error {worst:.3e} "
                   f"over 20 models (bound 1e-5, target 1e-12) "
                   f"in {elapsed:.1f}s")


def test_criterion_2_gate_override_identities(config):
    m = build_model(config, seed=11)
    audio = noise_audio(12, seconds=1.0)
    base = forward_utterance(m, audio, mode="slim", gate_override=0)

    scrambled = copy.deepcopy(m)
    rng = SeededRng(13)
    for name, arr in scrambled.named_params():
        if ".dynamic" in name:
            arr += rng.uniform(-1.0, 1.0, arr.shape)
    redo = forward_utterance(scrambled, audio, mode="slim", gate_override=0)
    skip_invariant = np.array_equal(base.audio.samples, redo.audio.samples)

    full_s = forward_utterance(m, audio, mode="slim", gate_override=1)
    full_m = forward_utterance(m, audio, mode="masked", gate_override=1)
    full_equal = np.array_equal(full_s.audio.samples, full_m.audio.samples)

    ok = skip_invariant and full_equal
    _report(2, ok, "all-skip output invariant to scrambling every "
                   f"dynamic-branch weight: {skip_invariant}; all-active "
                   f"slim equals masked bit for bit: {full_equal}")


def test_criterion_3_causality(model, config):
    audio = noise_audio(14, seconds=1.0)
    bumped = noise_audio(14, seconds=1.0)
    n_perturb = 12000
    bumped.samples[n_perturb] += 0.3
    a = forward_utterance(model, audio, mode="slim").audio.samples
    b = forward_utterance(model, bumped, mode="slim").audio.samples
    first_frame = (n_perturb - config.fft_size) // config.hop + 1
    boundary = config.hop * first_frame
    prefix_exact = np.array_equal(a[:boundary], b[:boundary])
    tail_changed = not np.array_equal(a[boundary:], b[boundary:])
    ok = prefix_exact and tail_changed
    _report(3, ok, f"perturbing sample {n_perturb} leaves output samples "
                   f"[0, {boundary}) bit-unchanged under policy gating "
                   f"(prefix exact: {prefix_exact})")


def test_criterion_4_streaming_matches_offline(model, config):
    audio = noise_audio(15, seconds=2.0)
    offline = forward_utterance(model, audio, mode="slim")
    state = init_stream_state(model, mode="slim")
    chunks = []
    for t in range(len(offline.gates)):
        frame = audio.samples[t * config.hop:t * config.hop + config.fft_size]
        out, _, state = forward_streaming(model, frame, state)
        chunks.append(out)
    streamed = np.concatenate(chunks)
    diff = float(np.max(np.abs(
        streamed - offline.audio.samples[:streamed.size])))
    ok = diff <= 1e-9
    _report(4, ok, f"frame-by-frame streaming vs offline max absolute "
                   f"difference {diff:.3e} on 2 s (bound 1e-9)")


def test_criterion_5_gating_loss_examples():
    ones = GateVector(np.ones(16))
    ratio_loss = gate_loss(ones, 0.5)
    theta_m = map_ovrl_to_theta(1.0, 0.5)
    mgt_loss = gate_loss_mgt(ones, 1.0, 0.5)
    ok = ratio_loss == 0.5 and theta_m == 0.5 and mgt_loss == 0.5
    _report(5, ok, f"gate_loss(g=1, theta=0.5) = {ratio_loss} and "
                   f"theta_m(m=1, lambda=0.5) = {theta_m} and "
                   f"mgt loss = {mgt_loss}, all exact")


def test_criterion_6_policy_gradients():
    worst = max(grad_check(seed) for seed in range(100))
    ok = worst <= 1e-6
    _report(6, ok, f"analytic vs central-difference policy gradients, "
                   f"100 seeds, max relative error {worst:.3e} (bound 1e-6)")


def test_criterion_7_mac_ledger_vs_published(config):
    report = count_macs(config)
    rows = compare_with_published(report)
    worst_delta = max(abs(r["delta_rel_err"]) for r in rows.values())
    worst_share = max(abs(r["share_diff"]) for r in rows.values())
    anchors = (report.zero_activation, report.per_second(0.5),
               report.full_activation)
    ok = worst_delta <= 0.20 and worst_share <= 0.08
    _report(7, ok, f"six published delta rows matched: worst |delta| error "
                   f"{worst_delta:.1%} (bound 20%), worst share gap "
                   f"{100 * worst_share:.1f} pts (bound 8); non-binding "
                   f"anchors {anchors[0]:.1f}/{anchors[1]:.1f}/"
                   f"{anchors[2]:.1f} M vs published "
                   f"{PUBLISHED_ANCHORS['zero']:.0f}/"
                   f"{PUBLISHED_ANCHORS['half']:.0f}/"
                   f"{PUBLISHED_ANCHORS['dense']:.0f} M")


def test_criterion_8_counter_matches_static_model(model, config):
    audio = noise_audio(16, seconds=1.0)
    n = frame_count_of(audio, config)
    exact = True
    for gates in (GateVector(np.zeros(n)), GateVector(np.ones(n)),
                  random_gates(17, n)):
        counter = MacCounter()
        forward_utterance(model, audio, mode="slim", gates=gates,
                          counter=counter)
        want = {k: v for k, v in expected_macs(config, gates).items() if v}
        exact = exact and counter.counts == want
    ok = exact
    _report(8, ok, "runtime MAC counter equals the static count for "
                   "all-skip, all-active and random binary gates, exactly")


def test_criterion_9_slim_throughput(model):
    rows = throughput_bench(model, seconds=4.0, repeats=5)
    ratio = rows[1]["median_s"] / rows[0]["median_s"]
    ok = ratio >= 1.25
    _report(9, ok, f"all-skip runs {ratio:.2f}x faster than all-active "
                   f"(median of 5 on 4 s audio, bound 1.25x)")


def test_criterion_10_parameter_count(model):
    n = model.n_params
    err = abs(n / 140000.0 - 1.0)
    ok = err <= 0.25
    _report(10, ok, f"{n} parameters, {100 * err:.1f}% from the published "
                    f"0.14 M (bound 25%)")


def test_criterion_11_frontend_identities(model, config):
    audio = noise_audio(18, seconds=1.0)
    x = audio.samples
    back = istft(stft(x))
    interior = slice(config.fft_size, back.size - config.fft_size)
    roundtrip = float(np.max(np.abs(back[interior] - x[interior])))

    forced = copy.deepcopy(model)
    forced.deconv1.bias[:] = 500.0
    res = forward_utterance(forced, audio, mode="slim")
    mask_is_one = bool(np.all(res.mask == 1.0))
    passthrough = np.array_equal(res.audio.samples, back)

    scale_exact = si_sdr(2.0 * x, x) == 100.0 and si_sdr(0.37 * x, x) == 100.0
    ok = roundtrip <= 1e-10 and mask_is_one and passthrough and scale_exact
    _report(11, ok, f"analysis-synthesis interior error {roundtrip:.3e} "
                    f"(bound 1e-10); saturated mask is exactly 1 and "
                    f"passes input through bit for bit: {passthrough}; "
                    f"SI-SDR scale invariance exact: {scale_exact}")


def test_criterion_12_ideal_mask_gain(config):
    t = np.arange(SAMPLE_RATE) / SAMPLE_RATE
    clean = np.sin(2 * np.pi * 440.0 * t) + 0.5 * np.sin(2 * np.pi * 880.0 * t)
    noise = SeededRng(19).uniform(-1.0, 1.0, clean.size)
    noise *= np.sqrt(np.mean(clean ** 2) / np.mean(noise ** 2))
    mix = clean + noise

    mask = ideal_ratio_mask(stft(clean), stft(mix), config.compression)
    est = istft(apply_mask(stft(mix), mask, config.compression))
    ref = clean[:est.size]
    gain = si_sdr(est, ref) - si_sdr(mix[:est.size], ref)
    ok = gain >= 5.0
    _report(12, ok, f"clipped compressed-domain ideal mask lifts SI-SDR by "
                    f"{gain:.1f} dB on a 0 dB synthetic mixture (bound 5)")
