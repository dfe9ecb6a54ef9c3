"""``hitgen`` command-line entry point.

Subcommands: verify, bench, train, generate, interpolate, params. Every
command accepts ``--config <json>``, ``--seed`` and ``--out``; outputs that
land on disk get a ``*.config.json`` sidecar (or a manifest) holding the
resolved configuration, and the same configuration is printed as the first
line of the report on stdout.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .attention import MODES
from .bench import BENCH_HEADER, run_bench, wall_ratios
from .generator import (PRESETS, REFERENCE_PARAMS_M, build_generator, generate, interpolate, param_breakdown,
                        preset, sample_latent)
from .io import encode_ppm, write_csv, write_json
from .runconfig import RunConfig, RunConfigError
from .training import TRAIN_HEADER, TrainingDivergence, train_toy
from .verify import SUITES, exit_code, run_suite

log = logging.getLogger("hitgen")


def _header(cfg: RunConfig, command: str, **extra) -> dict:
    return {"command": command, "version": __version__, **extra, "config": cfg.resolved()}


def _emit_header(header: dict) -> None:
    print("# " + json.dumps(header, sort_keys=True))


def _out_dir(args, cfg: RunConfig) -> Path:
    out = Path(args.out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(args, default_preset: str) -> RunConfig:
    cfg = RunConfig.load(args.config)
    if getattr(args, "preset", None):
        cfg.preset = args.preset
    return cfg.with_default_preset(default_preset)


# -- commands ------------------------------------------------------------------------

def cmd_verify(args) -> int:
    cfg = RunConfig.load(args.config)
    header = _header(cfg, "verify", suite=args.suite)
    _emit_header(header)
    print("name,max_error,threshold,verdict")
    results = run_suite(args.suite, on_result=lambda r: print(r.line(), flush=True))
    failed = [r.name for r in results if not r.passed]
    print(f"# {len(results) - len(failed)}/{len(results)} properties passed"
          + (f"; failing: {', '.join(failed)}" if failed else ""))
    if args.out:
        out = _out_dir(args, cfg)
        write_csv(out / "verify.csv", ("name", "max_error", "threshold", "verdict"),
                  [(r.name, r.max_error, r.threshold, "PASS" if r.passed else "FAIL") for r in results])
        write_json(out / "verify.config.json", header)
    return exit_code(results)


def cmd_bench(args) -> int:
    cfg = RunConfig.load(args.config)
    b = cfg.bench
    sizes = args.sizes or b.sizes
    modes = args.modes or b.modes
    repeats = args.repeats or b.repeats
    dtype = np.float32 if b.dtype == "f32" else np.float64
    header = _header(cfg, "bench", sizes=sizes, modes=modes, repeats=repeats)
    _emit_header(header)
    rows = run_bench(sizes, modes, repeats, heads=b.heads, dim=b.dim, dtype=dtype, seed=args.seed or 0)
    print(",".join(BENCH_HEADER))
    for r in rows:
        print(",".join(str(c) for c in r.cells()))
    for N, ratio in wall_ratios(rows):
        print(f"# N={N}: wall-time ratio full/multi_axis = {ratio:.2f}")
    out = _out_dir(args, cfg)
    write_csv(out / "bench.csv", BENCH_HEADER, [r.cells() for r in rows])
    write_json(out / "bench.config.json", header)
    return 0


def cmd_train(args) -> int:
    cfg = _load(args, "toy_8")
    if args.steps is not None:
        cfg.train.steps = args.steps
    seed = cfg.seed if args.seed is None else args.seed
    gen_cfg = cfg.generator_config()
    header = _header(cfg, "train", train_seed=seed)
    _emit_header(header)
    out = _out_dir(args, cfg)
    try:
        result = train_toy(gen_cfg, cfg.train.hyper(), seed=seed, disc_hidden=cfg.train.disc_hidden,
                           dtype=cfg.np_dtype)
    except TrainingDivergence as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    path = write_csv(out / "train.csv", TRAIN_HEADER, [r.cells() for r in result.trace])
    write_json(out / "train.config.json", header)
    md = result.moment_distances()
    print(f"moment distance: {md[0][1]:.6g} at step {md[0][0]} -> {md[-1][1]:.6g} at step {md[-1][0]}")
    print(f"trace written to {path}")
    return 0


def _render(cfg: RunConfig, latents: list[np.ndarray]) -> list[bytes]:
    params = build_generator(cfg.generator_config(), seed=cfg.seed, dtype=cfg.np_dtype)
    return [encode_ppm(generate(params, z, mode="eval").data[0]) for z in latents]


def cmd_generate(args) -> int:
    cfg = _load(args, "toy_32")
    gen_cfg = cfg.generator_config()
    base = 0 if args.seed is None else args.seed
    seeds = [base + i for i in range(args.count)]
    header = _header(cfg, "generate", latent_seeds=seeds)
    _emit_header(header)
    out = _out_dir(args, cfg)
    files = []
    images = _render(cfg, [sample_latent(gen_cfg, s, cfg.np_dtype) for s in seeds])
    for s, data in zip(seeds, images):
        path = out / f"sample_seed{s}.ppm"
        path.write_bytes(data)
        files.append({"file": path.name, "latent_seed": s})
        print(path)
    write_json(out / "manifest.json", {**header, "images": files})
    return 0


def cmd_interpolate(args) -> int:
    cfg = _load(args, "toy_32")
    gen_cfg = cfg.generator_config()
    base = 0 if args.seed is None else args.seed
    seed_a = base if args.seed_a is None else args.seed_a
    seed_b = base + 1 if args.seed_b is None else args.seed_b
    header = _header(cfg, "interpolate", seed_a=seed_a, seed_b=seed_b, steps=args.steps)
    _emit_header(header)
    out = _out_dir(args, cfg)
    params = build_generator(gen_cfg, seed=cfg.seed, dtype=cfg.np_dtype)
    frames = interpolate(params, sample_latent(gen_cfg, seed_a, cfg.np_dtype),
                         sample_latent(gen_cfg, seed_b, cfg.np_dtype), args.steps)
    files = []
    for i, (t, img) in enumerate(zip(np.linspace(0.0, 1.0, args.steps), frames)):
        path = out / f"interp_{seed_a}_{seed_b}_{i:03d}.ppm"
        path.write_bytes(encode_ppm(img.data[0]))
        files.append({"file": path.name, "t": float(t)})
        print(path)
    write_json(out / "manifest.json", {**header, "images": files})
    return 0


def params_table(name: str) -> list[tuple[str, int, str, str]]:
    """Rows of (group, count, reference, deviation); the reference columns are blank without a published count."""
    groups = param_breakdown(preset(name))
    total = sum(groups.values())
    rows = [(k, v, "", "") for k, v in groups.items()]
    ref = REFERENCE_PARAMS_M.get(name)
    if ref is None:
        rows.append(("total", total, "", ""))
    else:
        rows.append(("total", total, f"{ref:.2f}M", f"{(total / 1e6 - ref) / ref:+.2%}"))
    return rows


def cmd_params(args) -> int:
    cfg = RunConfig.load(args.config)
    name = args.preset or cfg.preset or "hit_b_256"
    rows = params_table(name)
    has_ref = name in REFERENCE_PARAMS_M
    print(f"# preset {name}")
    print("group,params,reference,deviation" if has_ref else "group,params")
    for group, count, ref, dev in rows:
        print(f"{group},{count},{ref},{dev}" if has_ref else f"{group},{count}")
    total = rows[-1][1]
    print(f"# total {total / 1e6:.2f}M" + (f" vs reference {rows[-1][2]} ({rows[-1][3]})" if has_ref else ""))
    return 0


# -- parser --------------------------------------------------------------------------

def _csv_list(kind):
    def parse(text: str):
        return [kind(v) for v in text.split(",") if v]
    return parse


def _mode_list(text: str):
    modes = _csv_list(str)(text)
    bad = [m for m in modes if m not in MODES]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown modes {bad}; choose from {', '.join(MODES)}")
    return modes


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--seed", type=int, help="run seed (latent seed for images, training seed for train)")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="hitgen", description="Staged transformer image generator toolkit.")
    p.add_argument("--version", action="version", version=f"hitgen {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("verify", parents=[common], help="run property suites")
    s.add_argument("--suite", choices=SUITES + ("all",), default="all")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("bench", parents=[common], help="attention cost benchmark")
    s.add_argument("--sizes", type=_csv_list(int), help="comma-separated N values (perfect squares)")
    s.add_argument("--modes", type=_mode_list, help="comma-separated attention modes")
    s.add_argument("--repeats", type=int)
    s.set_defaults(func=cmd_bench)

    presets = sorted(PRESETS)
    s = sub.add_parser("train", parents=[common], help="toy adversarial training run")
    s.add_argument("--preset", choices=presets)
    s.add_argument("--steps", type=int)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("generate", parents=[common], help="write sample images as PPM")
    s.add_argument("--preset", choices=presets)
    s.add_argument("--count", type=int, default=1)
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("interpolate", parents=[common], help="latent interpolation frames")
    s.add_argument("--preset", choices=presets)
    s.add_argument("--seed-a", type=int)
    s.add_argument("--seed-b", type=int)
    s.add_argument("--steps", type=int, default=5)
    s.set_defaults(func=cmd_interpolate)

    s = sub.add_parser("params", parents=[common], help="parameter counts per stage")
    s.add_argument("--preset", choices=presets)
    s.set_defaults(func=cmd_params)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if getattr(args, "count", 1) < 1:
        print("error: --count must be at least 1", file=sys.stderr)
        return 2
    if getattr(args, "steps", None) is not None and args.command == "interpolate" and args.steps < 2:
        print("error: interpolation needs --steps >= 2", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (RunConfigError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
