"""NEAT-style evolution of network topologies and weights.

Genomes are lists of node genes and innovation-numbered connection genes.
Structural mutations grow networks from a minimal fully-connected seed;
speciation with fitness sharing protects new topologies. Every input and
output node is kept connected to at least one enabled gene at all times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

FEEDFORWARD = "feedforward"
RECURRENT = "recurrent"

ROLE_INPUT = "input"
ROLE_BIAS = "bias"
ROLE_OUTPUT = "output"
ROLE_HIDDEN = "hidden"

# rng stream labels, combined with (seed, generation) to derive substreams
_PHASE_INIT = 0
_PHASE_SPECIATE = 1
_PHASE_REPRODUCE = 2


@dataclass
class NodeGene:
    id: int
    role: str  # input | bias | output | hidden


@dataclass
class ConnGene:
    innovation: int
    src: int
    dst: int
    weight: float
    enabled: bool


@dataclass
class Genome:
    """A network blueprint: node genes plus innovation-numbered connections.

    Node ids follow a fixed convention: inputs are 0..n_inputs-1, the bias
    node is n_inputs, outputs follow the bias, hidden nodes take ids after
    that. conn_genes stays sorted by innovation number.
    """

    kind: str
    node_genes: list[NodeGene]
    conn_genes: list[ConnGene]

    def copy(self) -> "Genome":
        return Genome(
            kind=self.kind,
            node_genes=[replace(n) for n in self.node_genes],
            conn_genes=[replace(c) for c in self.conn_genes],
        )

    def nodes_by_role(self, role: str) -> list[int]:
        return [n.id for n in self.node_genes if n.role == role]

    @property
    def input_ids(self) -> list[int]:
        return self.nodes_by_role(ROLE_INPUT)

    @property
    def bias_id(self) -> int:
        return self.nodes_by_role(ROLE_BIAS)[0]

    @property
    def output_ids(self) -> list[int]:
        return self.nodes_by_role(ROLE_OUTPUT)

    @property
    def hidden_ids(self) -> list[int]:
        return self.nodes_by_role(ROLE_HIDDEN)

    def enabled_conns(self) -> list[ConnGene]:
        return [c for c in self.conn_genes if c.enabled]

    def has_conn(self, src: int, dst: int) -> bool:
        return any(c.src == src and c.dst == dst for c in self.conn_genes)

    def find_conn(self, src: int, dst: int) -> ConnGene | None:
        for c in self.conn_genes:
            if c.src == src and c.dst == dst:
                return c
        return None

    def add_conn(self, gene: ConnGene) -> None:
        """Insert keeping conn_genes sorted by innovation."""
        pos = len(self.conn_genes)
        while pos > 0 and self.conn_genes[pos - 1].innovation > gene.innovation:
            pos -= 1
        self.conn_genes.insert(pos, gene)

    def key(self) -> str:
        """Canonical text form; equal genomes give equal keys."""
        return genome_to_text(self)


class InnovationRegistry:
    """Hands out innovation numbers and hidden-node ids.

    Within one generation the same structural addition (same src/dst pair,
    or a split of the same connection) always receives the same number, so
    crossover can align genes across lineages. begin_generation() clears
    the per-generation memo while the counters keep increasing for the
    whole run.
    """

    def __init__(self, n_inputs: int, n_outputs: int):
        self.next_innovation = 0
        self.next_node_id = n_inputs + 1 + n_outputs  # inputs + bias + outputs
        self.seen: dict[tuple[int, int], int] = {}
        self.split_seen: dict[int, int] = {}

    def begin_generation(self) -> None:
        self.seen.clear()
        self.split_seen.clear()

    def innovation(self, src: int, dst: int) -> int:
        key = (src, dst)
        if key not in self.seen:
            self.seen[key] = self.next_innovation
            self.next_innovation += 1
        return self.seen[key]

    def node_for_split(self, innovation: int) -> int:
        if innovation not in self.split_seen:
            self.split_seen[innovation] = self.next_node_id
            self.next_node_id += 1
        return self.split_seen[innovation]

    def fresh_node_id(self) -> int:
        node_id = self.next_node_id
        self.next_node_id += 1
        return node_id


@dataclass
class NeatConfig:
    pop_size: int = 500
    max_evaluations: int = 250_000
    reproduction_ratio: float = 0.2
    elite_per_species: int = 1
    p_crossover: float = 0.15
    p_add_node: float = 0.01
    p_add_link: float = 0.01
    p_enable_link: float = 0.045
    p_disable_link: float = 0.045
    p_weight_gauss: float = 0.8
    weight_gauss_sigma: float = 0.1
    p_weight_uniform: float = 0.01
    c1: float = 1.0
    c2: float = 1.0
    c3: float = 0.2
    compat_threshold: float = 3.0
    init_weight_range: tuple[float, float] = (-1.0, 1.0)
    uniform_reset_range: tuple[float, float] = (-5.0, 5.0)
    stagnation_generations: int | None = None

    def __post_init__(self):
        if self.pop_size < 2:
            raise ValueError("pop_size must be at least 2")
        for name in ("p_crossover", "p_add_node", "p_add_link", "p_enable_link",
                     "p_disable_link", "p_weight_gauss", "p_weight_uniform"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")


@dataclass
class Species:
    representative: Genome
    members: list[int] = field(default_factory=list)
    best_fitness: float = -math.inf
    gens_since_improved: int = 0


# ---------------------------------------------------------------------------
# population construction


def init_population(cfg: NeatConfig, n_inputs: int, n_outputs: int, kind: str,
                    reg: InnovationRegistry, rng: np.random.Generator) -> list[Genome]:
    """Minimal seed population: inputs plus bias fully connected to outputs.

    All genomes share one innovation numbering for the common structure;
    weights are drawn uniformly from cfg.init_weight_range.
    """
    if n_inputs < 1 or n_outputs < 1:
        raise ValueError("need at least one input and one output")
    lo, hi = cfg.init_weight_range
    nodes = (
        [NodeGene(i, ROLE_INPUT) for i in range(n_inputs)]
        + [NodeGene(n_inputs, ROLE_BIAS)]
        + [NodeGene(n_inputs + 1 + o, ROLE_OUTPUT) for o in range(n_outputs)]
    )
    population = []
    for _ in range(cfg.pop_size):
        conns = []
        for o in range(n_outputs):
            dst = n_inputs + 1 + o
            for src in range(n_inputs + 1):  # real inputs then the bias node
                innov = reg.innovation(src, dst)
                conns.append(ConnGene(innov, src, dst, float(rng.uniform(lo, hi)), True))
        conns.sort(key=lambda c: c.innovation)
        genome = Genome(kind=kind, node_genes=[replace(n) for n in nodes], conn_genes=conns)
        population.append(genome)
    return population


# ---------------------------------------------------------------------------
# distance and speciation


def compatibility_distance(g1: Genome, g2: Genome, cfg: NeatConfig) -> float:
    """c1*E/N + c2*D/N + c3*mean|w1-w2| over matching innovations.

    N is 1 when both genomes carry fewer than 20 connection genes,
    otherwise the larger gene count.
    """
    c1_genes, c2_genes = g1.conn_genes, g2.conn_genes
    i = j = 0
    matching = 0
    weight_diff = 0.0
    disjoint = 0
    while i < len(c1_genes) and j < len(c2_genes):
        a, b = c1_genes[i], c2_genes[j]
        if a.innovation == b.innovation:
            matching += 1
            weight_diff += abs(a.weight - b.weight)
            i += 1
            j += 1
        elif a.innovation < b.innovation:
            disjoint += 1
            i += 1
        else:
            disjoint += 1
            j += 1
    # two-pointer leftovers lie beyond the other genome's highest innovation
    excess = (len(c1_genes) - i) + (len(c2_genes) - j)
    n = 1 if (len(c1_genes) < 20 and len(c2_genes) < 20) else max(len(c1_genes), len(c2_genes))
    mean_wd = weight_diff / matching if matching else 0.0
    return cfg.c1 * excess / n + cfg.c2 * disjoint / n + cfg.c3 * mean_wd


def speciate(population: list[Genome], prev_species: list[Species], cfg: NeatConfig,
             rng: np.random.Generator) -> list[Species]:
    """Assign each genome to the first species within compat_threshold.

    Representatives come from the previous generation's species; genomes
    matching none found a new species. Emptied species are dropped, each
    surviving species draws a fresh representative from its new members.
    """
    species = [Species(representative=s.representative, members=[],
                       best_fitness=s.best_fitness,
                       gens_since_improved=s.gens_since_improved)
               for s in prev_species]
    for idx, genome in enumerate(population):
        for sp in species:
            if compatibility_distance(genome, sp.representative, cfg) <= cfg.compat_threshold:
                sp.members.append(idx)
                break
        else:
            species.append(Species(representative=genome.copy(), members=[idx]))
    species = [sp for sp in species if sp.members]
    for sp in species:
        pick = sp.members[int(rng.integers(len(sp.members)))]
        sp.representative = population[pick].copy()
    return species


def allocate_offspring(species: list[Species], fitnesses: list[float],
                       cfg: NeatConfig) -> list[int]:
    """Share fitness within species and split pop_size proportionally.

    Each species' adjusted total is sum(raw fitness)/|members|; counts are
    rounded half-up and the rounding residual lands on the species holding
    the best raw fitness, which is also guaranteed at least one slot so the
    run champion always survives. All-zero fitness allocates uniformly.
    """
    adjusted = [sum(fitnesses[m] for m in sp.members) / len(sp.members) for sp in species]
    total = sum(adjusted)
    n = len(species)
    if total <= 0.0:
        counts = [cfg.pop_size // n] * n
        for i in range(cfg.pop_size - sum(counts)):
            counts[i] += 1
        return counts
    counts = [int(math.floor(cfg.pop_size * a / total + 0.5)) for a in adjusted]
    best_species = max(range(n), key=lambda i: max(fitnesses[m] for m in species[i].members))
    counts[best_species] = max(1, counts[best_species])
    while sum(counts) > cfg.pop_size:
        candidates = [i for i in range(n) if counts[i] > 0 and not (i == best_species and counts[i] == 1)]
        worst = max(candidates, key=lambda i: counts[i])
        counts[worst] -= 1
    if sum(counts) < cfg.pop_size:
        counts[best_species] += cfg.pop_size - sum(counts)
    return counts


# ---------------------------------------------------------------------------
# structural helpers


def _would_cycle(genome: Genome, src: int, dst: int) -> bool:
    """True if an enabled src->dst edge would close a directed cycle."""
    if src == dst:
        return True
    # depth-first from dst over enabled edges, looking for src
    adjacency: dict[int, list[int]] = {}
    for c in genome.conn_genes:
        if c.enabled:
            adjacency.setdefault(c.src, []).append(c.dst)
    stack = [dst]
    seen = set()
    while stack:
        node = stack.pop()
        if node == src:
            return True
        if node in seen:
            continue
        seen.add(node)
        stack.extend(adjacency.get(node, ()))
    return False


def _is_acyclic(genome: Genome) -> bool:
    indeg: dict[int, int] = {n.id: 0 for n in genome.node_genes}
    adjacency: dict[int, list[int]] = {n.id: [] for n in genome.node_genes}
    for c in genome.conn_genes:
        if c.enabled:
            adjacency[c.src].append(c.dst)
            indeg[c.dst] += 1
    queue = [nid for nid, d in indeg.items() if d == 0]
    visited = 0
    while queue:
        node = queue.pop()
        visited += 1
        for nxt in adjacency[node]:
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                queue.append(nxt)
    return visited == len(genome.node_genes)


def _io_connected(genome: Genome) -> bool:
    return not _dangling_io_nodes(genome)


def _dangling_io_nodes(genome: Genome) -> list[NodeGene]:
    touched = set()
    for c in genome.conn_genes:
        if c.enabled:
            touched.add(c.src)
            touched.add(c.dst)
    return [n for n in genome.node_genes
            if n.role in (ROLE_INPUT, ROLE_OUTPUT) and n.id not in touched]


def check_genome(genome: Genome) -> None:
    """Raise ValueError if any structural invariant is broken."""
    innovations = [c.innovation for c in genome.conn_genes]
    if innovations != sorted(innovations) or len(set(innovations)) != len(innovations):
        raise ValueError("connection genes must carry unique increasing innovations")
    roles = {n.id: n.role for n in genome.node_genes}
    for c in genome.conn_genes:
        if roles[c.dst] in (ROLE_INPUT, ROLE_BIAS):
            raise ValueError(f"connection {c.innovation} targets an input/bias node")
    if genome.kind == FEEDFORWARD and not _is_acyclic(genome):
        raise ValueError("feedforward genome has a cycle over enabled connections")
    dangling = _dangling_io_nodes(genome)
    if dangling:
        raise ValueError(f"unconnected i/o nodes: {[n.id for n in dangling]}")


# ---------------------------------------------------------------------------
# variation operators


def crossover(fitter: Genome, other: Genome, rng: np.random.Generator) -> Genome:
    """Recombine along innovation numbers.

    Matching genes (weight and enabled flag together) come from a uniformly
    random parent; disjoint and excess genes come from the fitter parent
    only, so the child inherits the fitter parent's structure. Flag mixing
    can break acyclicity or i/o connectivity, both repaired afterwards.
    """
    if fitter.kind != other.kind:
        raise ValueError("cannot cross genomes of different kinds")
    other_by_innov = {c.innovation: c for c in other.conn_genes}
    child_conns = []
    for gene in fitter.conn_genes:
        match = other_by_innov.get(gene.innovation)
        if match is not None and rng.random() < 0.5:
            child_conns.append(ConnGene(gene.innovation, gene.src, gene.dst,
                                        match.weight, match.enabled))
        else:
            child_conns.append(replace(gene))
    child = Genome(kind=fitter.kind,
                   node_genes=[replace(n) for n in fitter.node_genes],
                   conn_genes=child_conns)
    _repair_child(child, fitter)
    return child


def _repair_child(child: Genome, fitter: Genome) -> None:
    """Restore invariants a flag-mixing crossover may have violated.

    Both repairs pull flags back towards the fitter parent, whose enabled
    set is known valid: re-disable flipped-on genes if a cycle appeared,
    re-enable the fitter's gene at any disconnected i/o node, and as a last
    resort copy the fitter parent's flags wholesale.
    """
    fitter_enabled = {c.innovation: c.enabled for c in fitter.conn_genes}
    if child.kind == FEEDFORWARD and not _is_acyclic(child):
        for gene in child.conn_genes:
            if gene.enabled and not fitter_enabled[gene.innovation]:
                gene.enabled = False
    for node in _dangling_io_nodes(child):
        for gene in child.conn_genes:
            if (gene.src == node.id or gene.dst == node.id) and fitter_enabled[gene.innovation]:
                gene.enabled = True
                break
    if not _io_connected(child) or (child.kind == FEEDFORWARD and not _is_acyclic(child)):
        for gene in child.conn_genes:
            gene.enabled = fitter_enabled[gene.innovation]


def mutate_add_node(genome: Genome, reg: InnovationRegistry,
                    rng: np.random.Generator) -> Genome:
    """Split a random enabled connection, preserving its function at first.

    The old gene is disabled; the new hidden node receives the incoming
    half with weight 1.0 and passes the old weight on the outgoing half.
    Splitting the same connection twice in one generation reuses the same
    node id and innovation numbers.
    """
    enabled = genome.enabled_conns()
    if not enabled:
        return genome
    gene = enabled[int(rng.integers(len(enabled)))]
    node_id = reg.node_for_split(gene.innovation)
    if any(n.id == node_id for n in genome.node_genes):
        node_id = reg.fresh_node_id()
    gene.enabled = False
    genome.node_genes.append(NodeGene(node_id, ROLE_HIDDEN))
    genome.add_conn(ConnGene(reg.innovation(gene.src, node_id), gene.src, node_id, 1.0, True))
    genome.add_conn(ConnGene(reg.innovation(node_id, gene.dst), node_id, gene.dst, gene.weight, True))
    return genome


def mutate_add_link(genome: Genome, cfg: NeatConfig, reg: InnovationRegistry,
                    rng: np.random.Generator) -> Genome:
    """Add one enabled connection between a uniformly chosen legal pair.

    Legal: destination is not an input or bias node, the pair is not
    already present, and for feedforward genomes the new edge keeps the
    enabled graph acyclic (recurrent genomes may gain loops and cycles).
    Leaves the genome unchanged when no legal pair exists.
    """
    dst_ids = [n.id for n in genome.node_genes if n.role in (ROLE_OUTPUT, ROLE_HIDDEN)]
    src_ids = [n.id for n in genome.node_genes]
    pairs = []
    for src in src_ids:
        for dst in dst_ids:
            if genome.has_conn(src, dst):
                continue
            if genome.kind == FEEDFORWARD and _would_cycle(genome, src, dst):
                continue
            pairs.append((src, dst))
    if not pairs:
        return genome
    src, dst = pairs[int(rng.integers(len(pairs)))]
    lo, hi = cfg.init_weight_range
    genome.add_conn(ConnGene(reg.innovation(src, dst), src, dst, float(rng.uniform(lo, hi)), True))
    return genome


def mutate_weights(genome: Genome, cfg: NeatConfig, rng: np.random.Generator) -> Genome:
    """Gaussian perturbation behind a per-genome gate, plus per-gene resets.

    With probability p_weight_gauss every connection weight receives
    independent N(0, sigma^2) noise; independently each gene is reset to a
    uniform draw from uniform_reset_range with probability p_weight_uniform.
    """
    conns = genome.conn_genes
    if rng.random() < cfg.p_weight_gauss:
        deltas = rng.normal(0.0, cfg.weight_gauss_sigma, size=len(conns))
        for gene, delta in zip(conns, deltas):
            gene.weight += float(delta)
    lo, hi = cfg.uniform_reset_range
    gates = rng.random(len(conns))
    for gene, gate in zip(conns, gates):
        if gate < cfg.p_weight_uniform:
            gene.weight = float(rng.uniform(lo, hi))
    return genome


def mutate_toggle(genome: Genome, cfg: NeatConfig, rng: np.random.Generator) -> Genome:
    """Enable or disable one random gene, refusing invariant-breaking flips.

    Enabling is skipped if it would close a cycle in a feedforward genome;
    disabling is skipped if it would leave an input or output node with no
    enabled incident connection.
    """
    if rng.random() < cfg.p_enable_link:
        disabled = [c for c in genome.conn_genes if not c.enabled]
        if disabled:
            gene = disabled[int(rng.integers(len(disabled)))]
            if genome.kind != FEEDFORWARD or not _would_cycle(genome, gene.src, gene.dst):
                gene.enabled = True
    if rng.random() < cfg.p_disable_link:
        enabled = genome.enabled_conns()
        if enabled:
            gene = enabled[int(rng.integers(len(enabled)))]
            gene.enabled = False
            if not _io_connected(genome):
                gene.enabled = True
    return genome


def enforce_io_connectivity(genome: Genome, cfg: NeatConfig, reg: InnovationRegistry,
                            rng: np.random.Generator) -> Genome:
    """Reconnect any input or output node that lost all enabled genes.

    A dangling input gains an edge to a random output and a dangling output
    an edge from a random input; if that pair already exists as a disabled
    gene it is re-enabled instead of duplicated.
    """
    for node in _dangling_io_nodes(genome):
        if node.role == ROLE_INPUT:
            outputs = genome.output_ids
            src, dst = node.id, outputs[int(rng.integers(len(outputs)))]
        else:
            inputs = genome.input_ids
            src, dst = inputs[int(rng.integers(len(inputs)))], node.id
        existing = genome.find_conn(src, dst)
        if existing is not None:
            existing.enabled = True
        else:
            lo, hi = cfg.init_weight_range
            genome.add_conn(ConnGene(reg.innovation(src, dst), src, dst,
                                     float(rng.uniform(lo, hi)), True))
    return genome


def reproduce(population: list[Genome], fitnesses: list[float], species: list[Species],
              cfg: NeatConfig, reg: InnovationRegistry,
              rng: np.random.Generator) -> list[Genome]:
    """Build the next generation, species by species.

    Each allocated species keeps its champion verbatim; the rest of its
    slots are filled from the top reproduction_ratio share of members by
    crossover (p_crossover) or cloning, then pass through the weight,
    add-node, add-link and toggle mutations. One innovation memo spans the
    whole generation.
    """
    reg.begin_generation()
    counts = allocate_offspring(species, fitnesses, cfg)
    next_population: list[Genome] = []
    for sp, count in zip(species, counts):
        if count == 0:
            continue
        ranked = sorted(sp.members, key=lambda m: (-fitnesses[m], m))
        champion = population[ranked[0]]
        next_population.append(champion.copy())
        pool = ranked[:max(1, math.ceil(cfg.reproduction_ratio * len(ranked)))]
        for _ in range(count - 1):
            if rng.random() < cfg.p_crossover:
                ia = pool[int(rng.integers(len(pool)))]
                ib = pool[int(rng.integers(len(pool)))]
                if fitnesses[ib] > fitnesses[ia]:
                    ia, ib = ib, ia
                child = crossover(population[ia], population[ib], rng)
            else:
                child = population[pool[int(rng.integers(len(pool)))]].copy()
            mutate_weights(child, cfg, rng)
            if rng.random() < cfg.p_add_node:
                mutate_add_node(child, reg, rng)
            if rng.random() < cfg.p_add_link:
                mutate_add_link(child, cfg, reg, rng)
            mutate_toggle(child, cfg, rng)
            next_population.append(child)
    return next_population


# ---------------------------------------------------------------------------
# serialization


def genome_to_text(genome: Genome) -> str:
    """Line-oriented text form, stable across runs for champion archiving."""
    lines = [f"genome {genome.kind} {len(genome.node_genes)} {len(genome.conn_genes)}"]
    for n in genome.node_genes:
        lines.append(f"node {n.id} {n.role}")
    for c in genome.conn_genes:
        lines.append(f"conn {c.innovation} {c.src} {c.dst} {c.weight!r} {int(c.enabled)}")
    return "\n".join(lines) + "\n"


def genome_from_text(text: str) -> Genome:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    head = lines[0].split()
    if head[0] != "genome" or len(head) != 4:
        raise ValueError("malformed genome header")
    kind = head[1]
    if kind not in (FEEDFORWARD, RECURRENT):
        raise ValueError(f"unknown genome kind {kind!r}")
    n_nodes, n_conns = int(head[2]), int(head[3])
    nodes, conns = [], []
    for line in lines[1:]:
        parts = line.split()
        if parts[0] == "node":
            nodes.append(NodeGene(int(parts[1]), parts[2]))
        elif parts[0] == "conn":
            conns.append(ConnGene(int(parts[1]), int(parts[2]), int(parts[3]),
                                  float(parts[4]), bool(int(parts[5]))))
        else:
            raise ValueError(f"unexpected genome line: {line!r}")
    if len(nodes) != n_nodes or len(conns) != n_conns:
        raise ValueError("genome header counts do not match body")
    return Genome(kind=kind, node_genes=nodes, conn_genes=conns)


# ---------------------------------------------------------------------------
# generation loop


@dataclass
class GenerationStats:
    generation: int
    best_fitness: float
    mean_fitness: float
    species_count: int
    mean_enabled_conns: float


@dataclass
class EvolutionResult:
    best_genome: Genome
    best_fitness: float
    stats: list[GenerationStats]
    evaluations: int


def run_neat(fitness_fn, cfg: NeatConfig, n_inputs: int, n_outputs: int, kind: str,
             seed: int, map_fn=map, stop_when=None) -> EvolutionResult:
    """Drive evaluate/speciate/reproduce until the evaluation budget is spent.

    fitness_fn maps a Genome to a non-negative float and must be
    deterministic; identical genomes are served from a cache but still
    count toward the budget. map_fn may fan evaluations out to a pool
    (results are consumed in population order, so any order-preserving
    map works). stop_when(best_genome, best_fitness) may end the run early.

    Randomness is split into named substreams per generation and phase, so
    evaluation parallelism can never perturb the reproduction stream.
    """
    reg = InnovationRegistry(n_inputs, n_outputs)
    rng_init = np.random.default_rng([seed, 0, _PHASE_INIT])
    population = init_population(cfg, n_inputs, n_outputs, kind, reg, rng_init)
    species: list[Species] = []
    cache: dict[str, float] = {}
    best_genome: Genome | None = None
    best_fitness = -math.inf
    stats: list[GenerationStats] = []
    evaluations = 0
    n_generations = max(1, cfg.max_evaluations // cfg.pop_size)

    for gen in range(n_generations):
        keys = [g.key() for g in population]
        missing = [i for i, k in enumerate(keys) if k not in cache]
        for i, fit in zip(missing, map_fn(fitness_fn, [population[i] for i in missing])):
            cache[keys[i]] = float(fit)
        fitnesses = [cache[k] for k in keys]
        evaluations += len(population)

        gen_best = max(range(len(population)), key=lambda i: (fitnesses[i], -i))
        if fitnesses[gen_best] > best_fitness:
            best_fitness = fitnesses[gen_best]
            best_genome = population[gen_best].copy()

        rng_spec = np.random.default_rng([seed, gen, _PHASE_SPECIATE])
        species = speciate(population, species, cfg, rng_spec)
        for sp in species:
            sp_best = max(fitnesses[m] for m in sp.members)
            if sp_best > sp.best_fitness:
                sp.best_fitness = sp_best
                sp.gens_since_improved = 0
            else:
                sp.gens_since_improved += 1

        mean_edges = sum(len(g.enabled_conns()) for g in population) / len(population)
        stats.append(GenerationStats(
            generation=gen,
            best_fitness=fitnesses[gen_best],
            mean_fitness=sum(fitnesses) / len(fitnesses),
            species_count=len(species),
            mean_enabled_conns=mean_edges,
        ))

        if stop_when is not None and stop_when(best_genome, best_fitness):
            break
        if gen == n_generations - 1:
            break

        active = species
        if cfg.stagnation_generations is not None:
            keep = [sp for sp in species
                    if sp.gens_since_improved < cfg.stagnation_generations
                    or gen_best in sp.members]
            active = keep if keep else species

        rng_repr = np.random.default_rng([seed, gen, _PHASE_REPRODUCE])
        population = reproduce(population, fitnesses, active, cfg, reg, rng_repr)

    assert best_genome is not None
    return EvolutionResult(best_genome=best_genome, best_fitness=best_fitness,
                           stats=stats, evaluations=evaluations)
