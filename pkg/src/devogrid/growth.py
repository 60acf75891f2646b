"""Developmental grid simulation: one controller clone per cell, synchronous
chemical exchange, energy-based halting, perturbation and recovery.

Every cell holds an independent activation state over shared weights. Cell
inputs are the chemical outputs its four neighbors wrote in the previous
step (north, east, south, west, each carrying all chemicals, then the
constant bias); cells on the border read 0 for missing neighbors. Growth
stops once the summed squared activation energy stays constant over a
sliding window, or gives up at the iteration cap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .neat import FEEDFORWARD, Genome
from .network import Network, compile_genome
from .patterns import GrayImage, levels_from_unit


@dataclass
class GrowthConfig:
    max_iterations: int = 1024
    stability_window: int = 8
    energy_epsilon: float = 0.0

    def __post_init__(self):
        if self.stability_window < 1:
            raise ValueError("stability_window must be >= 1")
        if self.energy_epsilon < 0:
            raise ValueError("energy_epsilon must be >= 0")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")


@dataclass
class GrowthResult:
    converged: bool
    iterations_used: int
    phenotype: GrayImage | None
    energy_trace: list[float]
    final_state: "Organism"


class Organism:
    """A width x height grid of cells sharing one controller's weights.

    The controller instance is read-only here; per-cell activations live in
    a (cells, neurons) matrix and the chemical buffer in a (h, w, M) array
    holding what each cell broadcast at the previous step.
    """

    def __init__(self, net: Network, width: int, height: int, chemicals: int):
        if net.n_inputs != 4 * chemicals + 1:
            raise ValueError(
                f"controller expects {net.n_inputs} inputs, grid wiring provides "
                f"{4 * chemicals + 1} (4 neighbors x {chemicals} chemicals + bias)")
        if len(net.output_ids) != chemicals + 1:
            raise ValueError(
                f"controller has {len(net.output_ids)} outputs, need {chemicals + 1}")
        self.net = net
        self.width = width
        self.height = height
        self.chemicals = chemicals
        self.iteration = 0
        n = net.n_neurons
        cells = height * width
        # one row per cell: n activation columns, then the 4M neighbor input
        # slots and the constant bias, so each neuron update is one gemv
        self._buf = np.zeros((cells, n + net.n_inputs))
        self._buf[:, -1] = 1.0
        self.act = self._buf[:, :n]
        self._inp3 = self._buf[:, n:].reshape(height, width, net.n_inputs)
        assert np.shares_memory(self._inp3, self._buf)
        self.chem = np.zeros((height, width, chemicals))
        self._cmat = np.hstack([net.weights, net.input_weights])
        self._cmat_t = np.ascontiguousarray(self._cmat.T)
        self._nact = np.empty((cells, n))
        if net.kind == FEEDFORWARD:
            # per layer: indices plus the transposed weight block feeding it
            self._layers = [(idx, np.ascontiguousarray(self._cmat[idx].T))
                            for idx in net.topo_layers]
            self._lbufs = [np.empty((cells, len(idx))) for idx, _ in self._layers]
        # chemical output neurons: output ids after the differentiation one;
        # compiled genomes give the contiguous columns 1..M
        chem_ids = net.output_ids[1:chemicals + 1]
        if not chem_ids:
            self._chem_cols = slice(0, 0)
        elif chem_ids == list(range(chem_ids[0], chem_ids[0] + chemicals)):
            self._chem_cols = slice(chem_ids[0], chem_ids[0] + chemicals)
        else:
            self._chem_cols = np.array(chem_ids, dtype=np.intp)

    def copy(self) -> "Organism":
        dup = Organism(self.net, self.width, self.height, self.chemicals)
        dup.act[:] = self.act
        dup.chem[:] = self.chem
        dup.iteration = self.iteration
        return dup

    def _act3(self) -> np.ndarray:
        return self.act.reshape(self.height, self.width, self.net.n_neurons)

    def cell_activations(self, row: int, col: int) -> np.ndarray:
        """View of one cell's activation vector."""
        return self.act[row * self.width + col]

    def _assemble_inputs(self) -> None:
        m = self.chemicals
        chem, inp3 = self.chem, self._inp3
        inp3[1:, :, 0:m] = chem[:-1, :, :]            # north neighbor (r-1, c)
        inp3[:, :-1, m:2 * m] = chem[:, 1:, :]        # east  neighbor (r, c+1)
        inp3[:-1, :, 2 * m:3 * m] = chem[1:, :, :]    # south neighbor (r+1, c)
        inp3[:, 1:, 3 * m:4 * m] = chem[:, :-1, :]    # west  neighbor (r, c-1)

    def step(self) -> None:
        """One synchronous grid step.

        All cells read the pre-step chemical buffer; feedforward cells run
        a complete pass, recurrent cells one per-neuron update. The buffer
        is then refilled from the chemical output neurons.
        """
        self._assemble_inputs()
        buf = self._buf
        if self.net.kind == FEEDFORWARD:
            for (idx, block_t), out in zip(self._layers, self._lbufs):
                np.matmul(buf, block_t, out=out)
                expit(out, out=out)
                buf[:, idx] = out
        else:
            nact = self._nact
            np.matmul(buf, self._cmat_t, out=nact)
            expit(nact, out=nact)
            buf[:, :nact.shape[1]] = nact
        self.chem[:] = self._act3()[:, :, self._chem_cols]
        self.iteration += 1

    def energy(self) -> float:
        """Sum of squared activations over every neuron of every cell."""
        return float(np.einsum("ij,ij->", self.act, self.act))

    def phenotype(self) -> GrayImage:
        """Discretized differentiation outputs (output index 0) per cell."""
        diff = self.act[:, self.net.output_ids[0]].reshape(self.height, self.width)
        return GrayImage(levels_from_unit(diff))

    def chemical_map(self, k: int) -> GrayImage:
        """Discretized buffer of chemical k (1-based)."""
        if not 1 <= k <= self.chemicals:
            raise ValueError(f"chemical index {k} out of range 1..{self.chemicals}")
        return GrayImage(levels_from_unit(self.chem[:, :, k - 1]))

    def perturb(self, sigma: float, rng: np.random.Generator) -> None:
        """Add N(0, sigma^2) noise to every activation, without clamping.

        The chemical buffer is refreshed from the perturbed output neurons
        so the next step sees the disturbance on both channels.
        """
        if sigma < 0:
            raise ValueError("sigma must be >= 0")
        self.act += rng.normal(0.0, sigma, size=self.act.shape)
        self.chem[:] = self._act3()[:, :, self._chem_cols]

    def randomize_state(self, rng: np.random.Generator) -> None:
        """Draw every activation and buffer entry uniformly from [0, 1)."""
        self.act[:] = rng.uniform(0.0, 1.0, size=self.act.shape)
        self.chem[:] = rng.uniform(0.0, 1.0, size=self.chem.shape)

    def grow(self, cfg: GrowthConfig, observer=None) -> GrowthResult:
        """Iterate until the energy is window-stable or the cap is hit.

        Convergence: the last stability_window consecutive energy
        differences (starting from the energy of the state grown from) all
        lie within energy_epsilon. observer(iteration, organism), when
        given, is called on the initial state and after every step.

        Two shortcuts keep the observable behavior bit-identical while
        skipping dead time: a state that exactly repeats itself is rolled
        forward arithmetically, and an exact two-cycle whose energies
        differ more than epsilon can never satisfy the window, so the
        remaining trace is synthesized up to the cap. Both are disabled
        while an observer is attached.
        """
        window, eps = cfg.stability_window, cfg.energy_epsilon
        trace: list[float] = []
        prev_energy = self.energy()
        stable_run = 0
        fast = observer is None
        if fast:
            prev_act = np.empty_like(self.act)
            prev_chem = np.empty_like(self.chem)
            prev2_act = np.empty_like(self.act)
            filled = 0
        if observer is not None:
            observer(self.iteration, self)
        start = self.iteration
        converged = False
        while self.iteration - start < cfg.max_iterations:
            if fast:
                prev2_act, prev_act = prev_act, prev2_act
                np.copyto(prev_act, self.act)
                if filled == 0:
                    # only the state grown from can carry a hand-set buffer;
                    # every later buffer is a copy of activation columns, so
                    # comparing activations alone is exact from then on
                    np.copyto(prev_chem, self.chem)
                filled += 1
            self.step()
            energy = self.energy()
            trace.append(energy)
            if abs(energy - prev_energy) <= eps:
                stable_run += 1
            else:
                stable_run = 0
            prev_energy = energy
            if observer is not None:
                observer(self.iteration, self)
            if stable_run >= window:
                converged = True
                break
            if not fast:
                continue
            steps_left = cfg.max_iterations - (self.iteration - start)
            # equal states imply bit-equal energies, so cheap float checks
            # gate the array comparisons without missing a detection
            if stable_run >= 1 and np.array_equal(self.act, prev_act) \
                    and (filled > 1 or np.array_equal(self.chem, prev_chem)):
                # exact fixed point: roll the window forward without stepping
                needed = window - stable_run
                if needed <= steps_left:
                    trace.extend([energy] * needed)
                    self.iteration += needed
                    converged = True
                else:
                    trace.extend([energy] * steps_left)
                    self.iteration += steps_left
                break
            if len(trace) >= 3 and energy == trace[-3] \
                    and np.array_equal(self.act, prev2_act):
                other = trace[-2]
                if abs(energy - other) > eps:
                    # exact 2-cycle with distinct energies never stabilizes
                    for k in range(1, steps_left + 1):
                        trace.append(other if k % 2 else energy)
                    if steps_left % 2:
                        self.step()  # land on the honest final state
                        self.iteration += steps_left - 1
                    else:
                        self.iteration += steps_left
                    break
        iterations = self.iteration - start
        phenotype = self.phenotype() if converged else None
        return GrowthResult(converged=converged, iterations_used=iterations,
                            phenotype=phenotype, energy_trace=trace, final_state=self)


def init_organism(genome: Genome, width: int, height: int, chemicals: int) -> Organism:
    """Compile the genome and place one clone per cell, all zeroed."""
    net = compile_genome(genome)
    return Organism(net, width, height, chemicals)
