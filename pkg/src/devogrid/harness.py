"""Experiment driver: single evolution runs, seeded batches with box-plot
statistics, growth snapshots, self-healing trials and all file output.

Run r of a batch is seeded with seed + r and is bit-reproducible from the
configuration alone, independent of evaluation parallelism.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import neat
from .growth import GrowthConfig, init_organism
from .neat import Genome, NeatConfig
from .patterns import (FitnessEvaluator, GrayImage, ModelVariant, evaluate_detailed,
                       make_target, similarity, write_pgm)


@dataclass
class RunConfig:
    variant: ModelVariant
    target_kind: str
    width: int = 32
    height: int = 32
    neat: NeatConfig = field(default_factory=NeatConfig)
    growth: GrowthConfig = field(default_factory=GrowthConfig)
    runs: int = 16
    seed: int = 0
    out_dir: str | None = None
    workers: int = 1

    def target(self) -> GrayImage:
        return make_target(self.target_kind, self.width, self.height)


@dataclass
class RunRecord:
    run_index: int
    seed: int
    best_genome: Genome
    best_fitness: float
    online_curve: list[float]          # best fitness per generation
    mean_fitness_curve: list[float]
    species_counts: list[int]
    mean_genome_edges: list[float]     # enabled connections, population mean
    iterations_of_best: int
    evaluations: int


@dataclass
class BatchResult:
    records: list[RunRecord]
    summary: dict[str, float]          # min, q1, median, q3, max of final fitness
    mean_online_curve: list[float]


@dataclass
class HealingReport:
    mode: str                          # "gauss" | "random"
    sigma: float
    trials: int
    n_exact: int
    n_close: int
    n_diverged: int
    recovery_iterations: list[int]
    baseline_iterations: int
    error: str | None = None

    @property
    def exact_fraction(self) -> float:
        return self.n_exact / self.trials if self.trials else 0.0

    @property
    def close_fraction(self) -> float:
        return self.n_close / self.trials if self.trials else 0.0


def _pool_map(workers: int):
    """An order-preserving map, possibly fanned out over processes."""
    if workers <= 1:
        return map, None
    from concurrent.futures import ProcessPoolExecutor

    pool = ProcessPoolExecutor(max_workers=workers)

    def pmap(fn, items):
        items = list(items)
        chunk = max(1, len(items) // (workers * 4))
        return pool.map(fn, items, chunksize=chunk)

    return pmap, pool


def run_evolution(cfg: RunConfig, run_index: int = 0) -> RunRecord:
    """One full evolution run; the record's curve is non-decreasing."""
    target = cfg.target()
    fitness = FitnessEvaluator(cfg.variant, target, cfg.growth)
    run_seed = cfg.seed + run_index
    map_fn, pool = _pool_map(cfg.workers)
    try:
        result = neat.run_neat(fitness, cfg.neat, cfg.variant.n_inputs,
                               cfg.variant.n_outputs, cfg.variant.topology,
                               seed=run_seed, map_fn=map_fn)
    finally:
        if pool is not None:
            pool.shutdown()
    _, growth_result = evaluate_detailed(result.best_genome, cfg.variant, target, cfg.growth)
    return RunRecord(
        run_index=run_index,
        seed=run_seed,
        best_genome=result.best_genome,
        best_fitness=result.best_fitness,
        online_curve=[s.best_fitness for s in result.stats],
        mean_fitness_curve=[s.mean_fitness for s in result.stats],
        species_counts=[s.species_count for s in result.stats],
        mean_genome_edges=[s.mean_enabled_conns for s in result.stats],
        iterations_of_best=growth_result.iterations_used if growth_result else 0,
        evaluations=result.evaluations,
    )


def five_number_summary(values) -> dict[str, float]:
    """Box-plot statistics with linear quartile interpolation."""
    qs = np.percentile(np.asarray(values, dtype=np.float64), [0, 25, 50, 75, 100])
    return {"min": float(qs[0]), "q1": float(qs[1]), "median": float(qs[2]),
            "q3": float(qs[3]), "max": float(qs[4])}


def run_batch(cfg: RunConfig) -> BatchResult:
    """cfg.runs independent runs plus their five-number fitness summary."""
    if cfg.runs < 1:
        raise ValueError("need at least one run")
    records = [run_evolution(cfg, r) for r in range(cfg.runs)]
    finals = [rec.best_fitness for rec in records]
    n_gens = min(len(rec.online_curve) for rec in records)
    mean_curve = [float(np.mean([rec.online_curve[g] for rec in records]))
                  for g in range(n_gens)]
    return BatchResult(records=records, summary=five_number_summary(finals),
                       mean_online_curve=mean_curve)


# ---------------------------------------------------------------------------
# self-healing


def self_healing_experiment(champion: Genome, variant: ModelVariant, target: GrayImage,
                            gcfg: GrowthConfig, trials: int, sigma: float, seed: int,
                            mode: str = "gauss") -> HealingReport:
    """Perturb a converged organism and measure how it recovers.

    Each trial restarts from the converged state, disturbs it (Gaussian
    state noise, or a full uniform re-randomization in "random" mode) and
    resumes growth. Outcomes: exact (identical discrete phenotype), close
    (similarity to the original >= 0.99) or diverged (anything else,
    including failing to re-stabilize).
    """
    if mode not in ("gauss", "random"):
        raise ValueError(f"unknown healing mode {mode!r}")
    org = init_organism(champion, target.width, target.height, variant.chemicals)
    base = org.grow(gcfg)
    if not base.converged:
        return HealingReport(mode=mode, sigma=sigma, trials=0, n_exact=0, n_close=0,
                             n_diverged=0, recovery_iterations=[],
                             baseline_iterations=base.iterations_used,
                             error="champion did not stabilize")
    reference = base.phenotype
    n_exact = n_close = n_diverged = 0
    recovery = []
    for trial in range(trials):
        rng = np.random.default_rng([seed, trial])
        work = org.copy()
        if mode == "gauss":
            work.perturb(sigma, rng)
        else:
            work.randomize_state(rng)
        result = work.grow(gcfg)
        if not result.converged:
            n_diverged += 1
            continue
        recovery.append(result.iterations_used)
        if result.phenotype == reference:
            n_exact += 1
        elif similarity(result.phenotype, reference) >= 0.99:
            n_close += 1
        else:
            n_diverged += 1
    return HealingReport(mode=mode, sigma=sigma, trials=trials, n_exact=n_exact,
                         n_close=n_close, n_diverged=n_diverged,
                         recovery_iterations=recovery,
                         baseline_iterations=base.iterations_used)


# ---------------------------------------------------------------------------
# growth snapshots


def snapshot_growth(champion: Genome, variant: ModelVariant, target: GrayImage,
                    gcfg: GrowthConfig, iterations: list[int], out_dir: str,
                    binary: bool = False) -> list[str]:
    """Dump phenotype and chemical maps at the requested iterations.

    One graymap per channel per iteration. Iterations past the stopping
    point reuse the final state; the manifest notes this. Returns the
    written file paths (manifest last).
    """
    os.makedirs(out_dir, exist_ok=True)
    wanted = sorted(set(int(i) for i in iterations))
    if wanted and wanted[0] < 0:
        raise ValueError("snapshot iterations must be >= 0")
    org = init_organism(champion, target.width, target.height, variant.chemicals)
    states: dict[int, tuple[GrayImage, list[GrayImage]]] = {}

    def keep(iteration: int, o) -> None:
        if iteration in wanted_set:
            states[iteration] = (o.phenotype(),
                                 [o.chemical_map(k) for k in range(1, variant.chemicals + 1)])

    wanted_set = set(wanted)
    result = org.grow(gcfg, observer=keep)
    paths = []
    notes = []
    for it in wanted:
        if it in states:
            pheno, chems = states[it]
        else:
            pheno, chems = org.phenotype(), [org.chemical_map(k)
                                             for k in range(1, variant.chemicals + 1)]
            notes.append(f"iteration {it} past final state at {org.iteration}, reused it")
        stem = os.path.join(out_dir, f"phenotype-iter{it:05d}.pgm")
        write_pgm(pheno, stem, binary=binary)
        paths.append(stem)
        for k, img in enumerate(chems, start=1):
            name = os.path.join(out_dir, f"chemical{k}-iter{it:05d}.pgm")
            write_pgm(img, name, binary=binary)
            paths.append(name)
    manifest = os.path.join(out_dir, "snapshots.txt")
    with open(manifest, "w") as fh:
        fh.write(f"variant={variant.name}\ngrid={target.width}x{target.height}\n")
        fh.write(f"converged={result.converged}\niterations_used={result.iterations_used}\n")
        for p in paths:
            fh.write(os.path.basename(p) + "\n")
        for note in notes:
            fh.write("# " + note + "\n")
    paths.append(manifest)
    return paths


# ---------------------------------------------------------------------------
# file output


def export_csv(item: RunRecord | BatchResult, path) -> None:
    """Per-generation rows for a record, per-run rows for a batch.

    Comma separated, decimal points, full float round-trip precision.
    """
    with open(path, "w") as fh:
        if isinstance(item, RunRecord):
            fh.write("generation,best_fitness,mean_fitness,species_count,mean_genome_edges\n")
            for g in range(len(item.online_curve)):
                fh.write(f"{g},{item.online_curve[g]!r},{item.mean_fitness_curve[g]!r},"
                         f"{item.species_counts[g]},{item.mean_genome_edges[g]!r}\n")
        else:
            fh.write("run,seed,best_fitness,iterations_of_best,evaluations\n")
            for rec in item.records:
                fh.write(f"{rec.run_index},{rec.seed},{rec.best_fitness!r},"
                         f"{rec.iterations_of_best},{rec.evaluations}\n")


def write_manifest(cfg: RunConfig, path, extra: dict | None = None) -> None:
    """Flat key=value echo of the full experiment configuration."""
    with open(path, "w") as fh:
        fh.write("[run]\n")
        fh.write(f"variant={cfg.variant.name}\ntarget={cfg.target_kind}\n")
        fh.write(f"grid={cfg.width}x{cfg.height}\nruns={cfg.runs}\nseed={cfg.seed}\n")
        fh.write(f"run_seeds={','.join(str(cfg.seed + r) for r in range(cfg.runs))}\n")
        fh.write(f"workers={cfg.workers}\n")
        fh.write("[neat]\n")
        for name in ("pop_size", "max_evaluations", "reproduction_ratio", "elite_per_species",
                     "p_crossover", "p_add_node", "p_add_link", "p_enable_link",
                     "p_disable_link", "p_weight_gauss", "weight_gauss_sigma",
                     "p_weight_uniform", "c1", "c2", "c3", "compat_threshold"):
            fh.write(f"{name}={getattr(cfg.neat, name)}\n")
        fh.write(f"init_weight_range={cfg.neat.init_weight_range[0]},{cfg.neat.init_weight_range[1]}\n")
        fh.write(f"uniform_reset_range={cfg.neat.uniform_reset_range[0]},{cfg.neat.uniform_reset_range[1]}\n")
        fh.write(f"stagnation_generations={cfg.neat.stagnation_generations}\n")
        fh.write("[growth]\n")
        fh.write(f"max_iterations={cfg.growth.max_iterations}\n")
        fh.write(f"stability_window={cfg.growth.stability_window}\n")
        fh.write(f"energy_epsilon={cfg.growth.energy_epsilon}\n")
        if extra:
            fh.write("[results]\n")
            for key, value in extra.items():
                fh.write(f"{key}={value}\n")
