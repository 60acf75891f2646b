"""Command line front end.

Subcommands: evolve (one run), batch (seeded series with statistics),
heal (perturbation recovery trials), snapshot (growth stage dumps) and
target (emit a benchmark picture). Settings come from built-in presets,
an INI config file and command line flags, in increasing precedence.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
from importlib import resources

import numpy as np

from .growth import GrowthConfig
from .harness import (RunConfig, export_csv, run_batch, run_evolution,
                      self_healing_experiment, snapshot_growth, write_manifest)
from .neat import Genome, NeatConfig, genome_from_text, genome_to_text
from .patterns import (TARGET_KINDS, GrayImage, ModelVariant, VARIANTS, make_target,
                       parse_variant, write_pgm)


def _parse_grid(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise SystemExit(f"bad grid {text!r}, expected WIDTHxHEIGHT") from None


def _load_ini(path_or_text: str, from_file: bool = True) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(interpolation=None)
    if from_file:
        if not parser.read(path_or_text):
            raise SystemExit(f"config file not found: {path_or_text}")
    else:
        parser.read_string(path_or_text)
    return parser


def _preset_text(name: str) -> str:
    try:
        return (resources.files("devogrid") / "presets" / f"{name}.ini").read_text()
    except FileNotFoundError:
        raise SystemExit(f"unknown preset {name!r}") from None


def _apply_ini(settings: dict, parser: configparser.ConfigParser) -> None:
    for section in parser.sections():
        for key, value in parser.items(section):
            settings[f"{section}.{key}"] = value


def build_run_config(args) -> RunConfig:
    """Merge defaults, preset, config file and flags into a RunConfig."""
    settings: dict[str, str] = {}
    if getattr(args, "preset", None):
        _apply_ini(settings, _load_ini(_preset_text(args.preset), from_file=False))
    if getattr(args, "config", None):
        _apply_ini(settings, _load_ini(args.config))

    def run_opt(key, flag):
        return flag if flag is not None else settings.get(f"run.{key}")

    variant_name = run_opt("variant", args.variant) or "1-ffwd"
    target_kind = run_opt("target", args.target) or "2bands"
    grid = run_opt("grid", args.grid) or "32x32"
    width, height = _parse_grid(grid) if isinstance(grid, str) else grid
    seed = int(run_opt("seed", args.seed) or 0)
    runs = int(run_opt("runs", getattr(args, "runs", None)) or 16)
    workers = int(run_opt("workers", getattr(args, "workers", None)) or 1)

    neat_kwargs = {}
    for key, value in settings.items():
        if key.startswith("neat.") and key != "neat.generations":
            name = key.split(".", 1)[1]
            field_type = type(getattr(NeatConfig(), name))
            if name in ("init_weight_range", "uniform_reset_range"):
                lo, hi = value.split(",")
                neat_kwargs[name] = (float(lo), float(hi))
            elif name == "stagnation_generations":
                neat_kwargs[name] = None if value.lower() == "none" else int(value)
            else:
                neat_kwargs[name] = field_type(value)
    if args.pop is not None:
        neat_kwargs["pop_size"] = args.pop
    generations = args.generations
    if generations is None and "neat.generations" in settings:
        generations = int(settings["neat.generations"])
    neat_cfg = NeatConfig(**neat_kwargs)
    if generations is not None:
        neat_cfg.max_evaluations = generations * neat_cfg.pop_size

    growth_kwargs = {}
    for name in ("max_iterations", "stability_window"):
        if f"growth.{name}" in settings:
            growth_kwargs[name] = int(settings[f"growth.{name}"])
    if "growth.energy_epsilon" in settings:
        growth_kwargs["energy_epsilon"] = float(settings["growth.energy_epsilon"])
    growth_cfg = GrowthConfig(**growth_kwargs)

    return RunConfig(variant=parse_variant(variant_name), target_kind=target_kind,
                     width=width, height=height, neat=neat_cfg, growth=growth_cfg,
                     runs=runs, seed=seed, out_dir=args.out, workers=workers)


def _load_champion(path: str) -> Genome:
    with open(path) as fh:
        return genome_from_text(fh.read())


def _variant_for_genome(genome: Genome, override: str | None) -> ModelVariant:
    if override:
        return parse_variant(override)
    n_in, n_out = len(genome.input_ids), len(genome.output_ids)
    for variant in VARIANTS.values():
        if (variant.n_inputs, variant.n_outputs) == (n_in, n_out) \
                and variant.topology == genome.kind:
            return variant
    raise SystemExit(f"cannot infer variant from genome arity {n_in}x{n_out}; use --variant")


def cmd_evolve(args) -> int:
    cfg = build_run_config(args)
    record = run_evolution(cfg, run_index=args.run_index)
    print(f"run {record.run_index}: best fitness {record.best_fitness:.6f} "
          f"after {record.evaluations} evaluations "
          f"({record.iterations_of_best} growth iterations for the champion)")
    if cfg.out_dir:
        os.makedirs(cfg.out_dir, exist_ok=True)
        export_csv(record, os.path.join(cfg.out_dir, f"evolution-run{record.run_index}.csv"))
        with open(os.path.join(cfg.out_dir, f"champion-run{record.run_index}.txt"), "w") as fh:
            fh.write(genome_to_text(record.best_genome))
        write_pgm(cfg.target(), os.path.join(cfg.out_dir, "target.pgm"))
        write_manifest(cfg, os.path.join(cfg.out_dir, "manifest.txt"),
                       extra={"best_fitness": repr(record.best_fitness)})
        print(f"wrote results to {cfg.out_dir}")
    return 0


def cmd_batch(args) -> int:
    cfg = build_run_config(args)
    batch = run_batch(cfg)
    s = batch.summary
    print(f"{cfg.runs} runs: min {s['min']:.6f}  q1 {s['q1']:.6f}  "
          f"median {s['median']:.6f}  q3 {s['q3']:.6f}  max {s['max']:.6f}")
    if cfg.out_dir:
        os.makedirs(cfg.out_dir, exist_ok=True)
        export_csv(batch, os.path.join(cfg.out_dir, "batch.csv"))
        for rec in batch.records:
            export_csv(rec, os.path.join(cfg.out_dir, f"evolution-run{rec.run_index}.csv"))
            with open(os.path.join(cfg.out_dir, f"champion-run{rec.run_index}.txt"), "w") as fh:
                fh.write(genome_to_text(rec.best_genome))
        with open(os.path.join(cfg.out_dir, "mean-curve.csv"), "w") as fh:
            fh.write("generation,mean_best_fitness\n")
            for g, v in enumerate(batch.mean_online_curve):
                fh.write(f"{g},{v!r}\n")
        write_pgm(cfg.target(), os.path.join(cfg.out_dir, "target.pgm"))
        write_manifest(cfg, os.path.join(cfg.out_dir, "manifest.txt"),
                       extra={k: repr(v) for k, v in s.items()})
        print(f"wrote results to {cfg.out_dir}")
    return 0


def cmd_heal(args) -> int:
    genome = _load_champion(args.genome)
    variant = _variant_for_genome(genome, args.variant)
    if variant.family != "developmental":
        raise SystemExit("healing trials need a developmental champion")
    width, height = _parse_grid(args.grid)
    target = make_target(args.target, width, height) if args.target \
        else GrayImage(np.zeros((height, width), dtype=np.uint8))
    gcfg = GrowthConfig(max_iterations=args.max_iterations)
    report = self_healing_experiment(genome, variant, target, gcfg,
                                     trials=args.trials, sigma=args.sigma,
                                     seed=args.seed,
                                     mode="random" if args.random_init else "gauss")
    if report.error:
        print(f"error: {report.error}")
        return 1
    print(f"mode={report.mode} sigma={report.sigma} trials={report.trials}")
    print(f"exact {report.n_exact}  close {report.n_close}  diverged {report.n_diverged}")
    if report.recovery_iterations:
        print(f"recovery iterations: min {min(report.recovery_iterations)} "
              f"max {max(report.recovery_iterations)} "
              f"(baseline growth {report.baseline_iterations})")
    return 0


def cmd_snapshot(args) -> int:
    genome = _load_champion(args.genome)
    variant = _variant_for_genome(genome, args.variant)
    if variant.family != "developmental":
        raise SystemExit("snapshots need a developmental champion")
    width, height = _parse_grid(args.grid)
    target = make_target(args.target, width, height) if args.target \
        else GrayImage(np.zeros((height, width), dtype=np.uint8))
    iterations = [int(x) for x in args.iterations.split(",")]
    gcfg = GrowthConfig(max_iterations=args.max_iterations)
    paths = snapshot_growth(genome, variant, target, gcfg, iterations,
                            args.out, binary=args.binary)
    print(f"wrote {len(paths)} files under {args.out}")
    return 0


def cmd_target(args) -> int:
    width, height = _parse_grid(args.size)
    img = make_target(args.kind, width, height)
    write_pgm(img, args.out, binary=args.binary)
    print(f"wrote {args.kind} {width}x{height} to {args.out}")
    return 0


def _add_evolve_flags(sub) -> None:
    sub.add_argument("--config", help="INI config file")
    sub.add_argument("--preset", choices=["desk", "paper"], help="built-in settings")
    sub.add_argument("--target", choices=TARGET_KINDS, default=None)
    sub.add_argument("--variant", choices=sorted(VARIANTS), default=None)
    sub.add_argument("--grid", default=None, help="WIDTHxHEIGHT, e.g. 32x32")
    sub.add_argument("--pop", type=int, default=None, help="population size")
    sub.add_argument("--generations", type=int, default=None)
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--out", default=None, help="output directory")
    sub.add_argument("--workers", type=int, default=None,
                     help="processes for fitness evaluation (default 1)")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="devogrid",
        description="Evolve grid-cell neural controllers that grow into target patterns.")
    subs = parser.add_subparsers(dest="command", required=True)

    p_evolve = subs.add_parser("evolve", help="one evolution run")
    _add_evolve_flags(p_evolve)
    p_evolve.add_argument("--run-index", type=int, default=0)
    p_evolve.set_defaults(fn=cmd_evolve)

    p_batch = subs.add_parser("batch", help="several runs with statistics")
    _add_evolve_flags(p_batch)
    p_batch.add_argument("--runs", type=int, default=None)
    p_batch.set_defaults(fn=cmd_batch)

    p_heal = subs.add_parser("heal", help="perturbation recovery trials")
    p_heal.add_argument("--genome", required=True, help="champion genome file")
    p_heal.add_argument("--variant", default=None)
    p_heal.add_argument("--grid", required=True)
    p_heal.add_argument("--target", choices=TARGET_KINDS, default=None)
    p_heal.add_argument("--sigma", type=float, default=1.0)
    p_heal.add_argument("--trials", type=int, default=20)
    p_heal.add_argument("--seed", type=int, default=0)
    p_heal.add_argument("--max-iterations", type=int, default=1024)
    p_heal.add_argument("--random-init", action="store_true",
                        help="re-randomize the whole state instead of Gaussian noise")
    p_heal.set_defaults(fn=cmd_heal)

    p_snap = subs.add_parser("snapshot", help="dump growth stages as graymaps")
    p_snap.add_argument("--genome", required=True)
    p_snap.add_argument("--variant", default=None)
    p_snap.add_argument("--grid", required=True)
    p_snap.add_argument("--target", choices=TARGET_KINDS, default=None)
    p_snap.add_argument("--iterations", required=True, help="comma separated, e.g. 0,16,32")
    p_snap.add_argument("--max-iterations", type=int, default=1024)
    p_snap.add_argument("--out", required=True)
    p_snap.add_argument("--binary", action="store_true", help="write P5 instead of P2")
    p_snap.set_defaults(fn=cmd_snapshot)

    p_target = subs.add_parser("target", help="emit a benchmark target picture")
    p_target.add_argument("--kind", choices=TARGET_KINDS, required=True)
    p_target.add_argument("--size", required=True, help="WIDTHxHEIGHT")
    p_target.add_argument("--out", required=True)
    p_target.add_argument("--binary", action="store_true")
    p_target.set_defaults(fn=cmd_target)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
