"""Batch command-line surface.

Subcommands: enhance (wav in, enhanced wav + gate traces out), analyze
(join gate ratios with a score sidecar), maccount (per-block MAC table),
bench (wall-clock and counted-MAC comparison), gradcheck (policy gradient
finite-difference check), selftest (equivalence, causality and streaming
verification).

Exit codes: 0 success, 1 usage error, 2 data error, 3 verification
failure. Every command is deterministic given its flags and seed; CSVs
are byte-identical across repeated runs. ``DSN_THREADS`` caps parallel
file workers during directory enhancement.
"""
import argparse
import csv
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .compute_ledger import (MacCounter, activation_report, backend_bench,
                             bench, compare_with_published, count_macs,
                             expected_macs, realized_vs_linear)
from .dsn_model import (ModelConfig, build_model, forward_streaming,
                        forward_utterance, init_stream_state, load_weights)
from .errors import ConfigError, DataError, DsnError, VerificationError
from .policy_gate import GateVector, grad_check, map_ovrl_to_theta
from .signal_frontend import SAMPLE_RATE, AudioBuffer, read_wav, write_wav
from .tensor_core import SeededRng

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_VERIFY = 3

GRADCHECK_SEEDS = 10
GRADCHECK_TOL = 1e-6


class _Parser(argparse.ArgumentParser):
    """argparse maps usage errors to exit code 2; this surface uses 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser():
    parser = _Parser(prog="dsn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    def add_common(p, weights=False):
        p.add_argument("--config", default=None,
                       help="model config as JSON; defaults to the "
                            "reference configuration")
        p.add_argument("--seed", type=int, default=0)
        if weights:
            p.add_argument("--weights", default=None,
                           help="weight file written by save_weights")

    p = sub.add_parser("enhance", help="enhance wav files")
    p.add_argument("input", help="a wav file or a directory of wav files")
    add_common(p, weights=True)
    p.add_argument("--mode", choices=("slim", "masked"), default="slim")
    p.add_argument("--gate-override", choices=("0", "1", "policy"),
                   default="policy")
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("analyze",
                       help="join gate ratios with a score sidecar")
    p.add_argument("gates_csv", help="gates.csv written by enhance")
    p.add_argument("--metrics", required=True,
                   help="sidecar: one 'utterance_id<TAB>score' per line")
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("maccount", help="print the per-block MAC table")
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=".", help="directory for macs.csv")
    p.set_defaults(func=cmd_maccount)

    p = sub.add_parser("bench", help="wall-clock and counted-MAC benchmark")
    add_common(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gradcheck",
                       help="policy gradient finite-difference check")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("selftest",
                       help="equivalence, causality and streaming checks")
    add_common(p)
    p.set_defaults(func=cmd_selftest)
    return parser


# ---------------------------------------------------------------------------
# shared plumbing


def _load_config(path):
    return ModelConfig() if path is None else ModelConfig.from_json(path)


def _load_model(config, weights, seed):
    model = build_model(config, seed=seed)
    if weights is not None:
        load_weights(model, weights)
    return model


def _out_dir(text):
    path = Path(text)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_csv(path, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)


def _read_csv(path):
    if not Path(path).is_file():
        raise DataError(f"no such file: {path}")
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return list(csv.reader(fh))


def _thread_count(n_files):
    raw = os.environ.get("DSN_THREADS", "1")
    try:
        threads = int(raw)
    except ValueError:
        raise ConfigError(f"DSN_THREADS must be an integer, got {raw!r}")
    if threads < 1:
        raise ConfigError(f"DSN_THREADS must be >= 1, got {threads}")
    return min(threads, max(n_files, 1))


def _collect_wavs(text):
    path = Path(text)
    if path.is_dir():
        files = sorted(path.glob("*.wav"))
        if not files:
            raise DataError(f"no wav files in directory {path}")
        return files
    if path.is_file():
        return [path]
    raise DataError(f"no such file or directory: {path}")


def _read_sidecar(path):
    """Parse 'utterance_id<TAB>score' lines into {id: float}."""
    if not Path(path).is_file():
        raise DataError(f"no such file: {path}")
    scores = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError(
                    f"malformed sidecar line {lineno}: {line!r} "
                    f"(expected 'utterance_id<TAB>score')")
            utt, text = parts[0].strip(), parts[1].strip()
            try:
                value = float(text)
            except ValueError:
                raise DataError(
                    f"malformed sidecar line {lineno}: score {text!r} "
                    f"is not a number")
            if utt in scores:
                raise DataError(
                    f"duplicate utterance {utt!r} at sidecar line {lineno}")
            scores[utt] = value
    if not scores:
        raise DataError(f"sidecar {path} holds no records")
    return scores


# ---------------------------------------------------------------------------
# commands


def cmd_enhance(args):
    config = _load_config(args.config)
    model = _load_model(config, args.weights, args.seed)
    inputs = _collect_wavs(args.input)
    out = _out_dir(args.out)
    override = None if args.gate_override == "policy" else int(args.gate_override)

    def process(path):
        audio = read_wav(str(path))
        return forward_utterance(model, audio, mode=args.mode,
                                 gate_override=override)

    threads = _thread_count(len(inputs))
    if threads > 1 and len(inputs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(process, inputs))
    else:
        results = [process(path) for path in inputs]

    summary = [("utterance_id", "n_frames", "activation_ratio")]
    for path, result in zip(inputs, results):
        stem = path.stem
        write_wav(str(out / f"{stem}.enhanced.wav"), result.audio)
        trace = [("frame", "gate")]
        trace += [(str(i), f"{v:g}") for i, v in enumerate(result.gates.values)]
        _write_csv(out / f"{stem}.gates.csv", trace)
        ratio = result.gates.activation_ratio
        summary.append((stem, str(len(result.gates)), f"{ratio:.6f}"))
        print(f"{stem}: {len(result.gates)} frames, "
              f"activation ratio {ratio:.3f}")
    _write_csv(out / "gates.csv", summary)
    print(f"wrote {len(inputs)} enhanced files and gates.csv to {out}")
    return EXIT_OK


def cmd_analyze(args):
    rows = _read_csv(args.gates_csv)
    if not rows or rows[0] != ["utterance_id", "n_frames", "activation_ratio"]:
        raise DataError(
            f"{args.gates_csv} is not a gates.csv (unexpected header)")
    scores = _read_sidecar(args.metrics)
    missing = [row[0] for row in rows[1:] if row[0] not in scores]
    if missing:
        raise DataError(
            "sidecar is missing utterances: " + ", ".join(sorted(missing)))

    entries = [(row[0], float(row[2]), scores[row[0]]) for row in rows[1:]]
    report = activation_report(entries)
    out = _out_dir(args.out)
    _write_csv(out / "activation.csv", report.csv_rows())
    _write_csv(out / "activation_grouped.csv", report.grouped_csv_rows())

    for key, count, mean, std in report.grouped:
        print(f"key {key:>8}: {count} utterances, "
              f"mean ratio {mean:.4f}, std {std:.4f}")
    # score-mapped gate objective, defined only for quality scores in [1, 5]
    if all(1.0 <= s <= 5.0 for s in scores.values()):
        lam = _load_config(args.config).ratio_scale
        hinges = [max(0.0, ratio - map_ovrl_to_theta(key, lam))
                  for _, key, ratio in report.rows]
        print(f"mean score-mapped gate objective (lambda {lam:g}): "
              f"{float(np.mean(hinges)):.6f}")
    print(f"wrote activation.csv and activation_grouped.csv to {out}")
    return EXIT_OK


def cmd_maccount(args):
    config = _load_config(args.config)
    report = count_macs(config)
    for line in report.table_lines():
        print(line)
    comparison = compare_with_published(report)
    if set(comparison) <= set(report.delta_rows()):
        print("published delta cross-check:")
        for name, row in comparison.items():
            print(f"  {name:<8} {row['delta_m_per_s']:>7.2f} M/s vs "
                  f"{row['published_m_per_s']:.2f} published "
                  f"({row['delta_rel_err']:+.1%}); share "
                  f"{row['share']:.1%} vs {row['published_share']:.0%} "
                  f"({100 * row['share_diff']:+.1f} pts)")
    out = _out_dir(args.out)
    _write_csv(out / "macs.csv", report.csv_rows())
    print(f"wrote macs.csv to {out}")
    return EXIT_OK


def cmd_bench(args):
    config = _load_config(args.config)
    model = build_model(config, seed=args.seed)
    print("mode    override  median_s   RTF      M MACs/s  activation")
    rows = bench(model, seconds=2.0, repeats=5, seed=args.seed + 1)
    for (mode, override), row in rows.items():
        rtf = 2.0 / row["median_s"]
        print(f"{mode:<7} {override!s:<9} {row['median_s']:>8.4f} "
              f"{rtf:>7.2f}x {row['macs_per_s']:>9.2f} "
              f"{row['activation_ratio']:>9.3f}")
    slim0 = rows[("slim", 0)]["median_s"]
    slim1 = rows[("slim", 1)]["median_s"]
    print(f"slim all-skip speedup over all-active: {slim1 / slim0:.2f}x")

    backends = backend_bench(config, seconds=1.0, repeats=3,
                             seed=args.seed + 2)
    for name, median in sorted(backends.items()):
        print(f"backend {name}: {median:.4f} s median")
    realized, modeled, rel = realized_vs_linear(model, seconds=8.0,
                                                seed=args.seed + 3)
    print(f"realized {realized:.2f} M MACs/s vs affine model "
          f"{modeled:.2f} at half activation ({rel:+.2%})")
    return EXIT_OK


def cmd_gradcheck(args):
    worst = 0.0
    for seed in range(args.seed, args.seed + GRADCHECK_SEEDS):
        worst = max(worst, grad_check(seed))
    print(f"max relative gradient error over {GRADCHECK_SEEDS} seeds "
          f"starting at {args.seed}: {worst:.3e}")
    if worst > GRADCHECK_TOL:
        raise VerificationError(
            f"gradient error {worst:.3e} exceeds {GRADCHECK_TOL:g}")
    print(f"gradcheck ok (tolerance {GRADCHECK_TOL:g})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# selftest


def _noise_audio(rng, seconds):
    return AudioBuffer(rng.uniform(-0.5, 0.5, int(seconds * SAMPLE_RATE)))


def _rel_diff(a, b):
    scale = max(float(np.max(np.abs(b))), 1e-30)
    return float(np.max(np.abs(a - b))) / scale


def _check_equivalence(config, seed):
    rng = SeededRng(seed + 1000)
    model = build_model(config, seed=seed)
    audio = _noise_audio(rng, 0.5)
    n_frames = (audio.samples.size - config.fft_size) // config.hop + 1
    gates = GateVector((rng.uniform(0, 1, n_frames) < 0.5).astype(np.float64))
    slim = forward_utterance(model, audio, mode="slim", gates=gates)
    dense = forward_utterance(model, audio, mode="masked", gates=gates)
    return _rel_diff(slim.audio.samples, dense.audio.samples)


def _check_causality(config, seed):
    rng = SeededRng(seed + 2000)
    model = build_model(config, seed=seed)
    audio = _noise_audio(rng, 1.0)
    bumped = audio.samples.copy()
    perturb = 12000
    bumped[perturb] += 0.25
    base = forward_utterance(model, audio, mode="slim")
    poked = forward_utterance(model, AudioBuffer(bumped), mode="slim")
    # the first analysis frame that sees the perturbed sample
    t0 = (perturb - config.fft_size) // config.hop + 1
    boundary = config.hop * t0
    prefix_ok = np.array_equal(base.audio.samples[:boundary],
                               poked.audio.samples[:boundary])
    return prefix_ok, boundary


def _check_streaming(config, seed):
    rng = SeededRng(seed + 3000)
    model = build_model(config, seed=seed)
    audio = _noise_audio(rng, 1.0)
    offline = forward_utterance(model, audio, mode="slim")
    n_frames = len(offline.gates)
    state = init_stream_state(model, mode="slim")
    chunks = []
    for t in range(n_frames):
        frame = audio.samples[t * config.hop:t * config.hop + config.fft_size]
        out, _, state = forward_streaming(model, frame, state)
        chunks.append(out)
    streamed = np.concatenate(chunks)
    diff = float(np.max(np.abs(
        streamed - offline.audio.samples[:config.hop * n_frames])))
    return diff


def _check_counter(config, seed):
    rng = SeededRng(seed + 4000)
    model = build_model(config, seed=seed)
    audio = _noise_audio(rng, 0.5)
    n_frames = (audio.samples.size - config.fft_size) // config.hop + 1
    gates = GateVector((rng.uniform(0, 1, n_frames) < 0.5).astype(np.float64))
    counter = MacCounter()
    forward_utterance(model, audio, mode="slim", gates=gates, counter=counter)
    expected = {k: v for k, v in expected_macs(config, gates).items() if v}
    return counter.nonzero() == expected


def cmd_selftest(args):
    config = _load_config(args.config)
    failures = []

    worst = max(_check_equivalence(config, args.seed + i) for i in range(3))
    ok = worst <= 1e-5
    print(f"{'ok' if ok else 'FAIL'} slim vs masked-dense equivalence: "
          f"max relative difference {worst:.3e} over 3 models")
    if not ok:
        failures.append("equivalence")

    prefix_ok, boundary = _check_causality(config, args.seed)
    print(f"{'ok' if prefix_ok else 'FAIL'} causality: output before "
          f"sample {boundary} unchanged by a later input perturbation")
    if not prefix_ok:
        failures.append("causality")

    diff = _check_streaming(config, args.seed)
    ok = diff <= 1e-9
    print(f"{'ok' if ok else 'FAIL'} streaming vs offline: "
          f"max absolute difference {diff:.3e}")
    if not ok:
        failures.append("streaming")

    counter_ok = _check_counter(config, args.seed)
    print(f"{'ok' if counter_ok else 'FAIL'} op counter matches the "
          f"closed-form expectation exactly")
    if not counter_ok:
        failures.append("counter")

    if failures:
        raise VerificationError("selftest failures: " + ", ".join(failures))
    print("selftest ok")
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except VerificationError as exc:
        print(f"verification failure: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DsnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
