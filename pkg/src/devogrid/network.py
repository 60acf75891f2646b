"""Executable sigmoid network controllers compiled from genomes.

A Network holds dense weight matrices: weights[i, j] is the connection
from neuron j to neuron i (0 meaning no connection) and input_weights[i, j]
feeds external input slot j into neuron i. The last input slot is a
constant-1 bias. Two evaluation semantics exist: a synchronous per-neuron
update for recurrent nets and a single complete pass in topological order
for feedforward nets. Batch variants evaluate many independent state rows
against the same weights, which is how the grid simulator runs every cell
of an organism at once.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .neat import FEEDFORWARD, RECURRENT, Genome


def sigmoid(x: float) -> float:
    """Logistic 1/(1+exp(-x)); saturates cleanly for large |x|."""
    return float(expit(x))


class Network:
    """Fixed-weight controller with a mutable activation vector.

    output_ids lists the neuron indices read as outputs; index 0 is the
    differentiation output, the following entries the chemical outputs.
    """

    def __init__(self, kind: str, n_neurons: int, n_inputs: int,
                 weights: np.ndarray, input_weights: np.ndarray,
                 output_ids: list[int]):
        if kind not in (FEEDFORWARD, RECURRENT):
            raise ValueError(f"unknown network kind {kind!r}")
        self.kind = kind
        self.n_neurons = n_neurons
        self.n_inputs = n_inputs  # includes the trailing bias slot
        self.weights = np.asarray(weights, dtype=np.float64)
        self.input_weights = np.asarray(input_weights, dtype=np.float64)
        if self.weights.shape != (n_neurons, n_neurons):
            raise ValueError("weights must be (n_neurons, n_neurons)")
        if self.input_weights.shape != (n_neurons, n_inputs):
            raise ValueError("input_weights must be (n_neurons, n_inputs)")
        self.output_ids = list(output_ids)
        self.activations = np.zeros(n_neurons)
        self.topo_order = self._topological_order() if kind == FEEDFORWARD else None
        self.topo_layers = self._layers() if kind == FEEDFORWARD else None
        self._wt = np.ascontiguousarray(self.weights.T)
        self._zt = np.ascontiguousarray(self.input_weights.T)

    def _topological_order(self) -> list[int]:
        """Kahn's algorithm over nonzero weights; zero weight means no edge."""
        n = self.n_neurons
        indeg = [0] * n
        succs: list[list[int]] = [[] for _ in range(n)]
        rows, cols = np.nonzero(self.weights)
        for dst, src in zip(rows.tolist(), cols.tolist()):
            succs[src].append(dst)
            indeg[dst] += 1
        order = [i for i in range(n) if indeg[i] == 0]
        head = 0
        while head < len(order):
            for dst in succs[order[head]]:
                indeg[dst] -= 1
                if indeg[dst] == 0:
                    order.append(dst)
            head += 1
        if len(order) != n:
            raise ValueError("cycle in a feedforward network")
        return order

    def _layers(self) -> list[np.ndarray]:
        """Topological order grouped by longest-path depth.

        Neurons within one layer never feed each other, so a whole layer can
        be updated with a single matrix product.
        """
        depth = [0] * self.n_neurons
        for i in self.topo_order:
            preds = np.nonzero(self.weights[i])[0]
            if preds.size:
                depth[i] = 1 + max(depth[j] for j in preds.tolist())
        layers = []
        for d in range(max(depth, default=0) + 1):
            members = [i for i in self.topo_order if depth[i] == d]
            if members:
                layers.append(np.array(members, dtype=np.intp))
        return layers

    def reset(self) -> None:
        """Zero every activation (idempotent)."""
        self.activations[:] = 0.0

    def _check_inputs(self, inputs) -> np.ndarray:
        vec = np.asarray(inputs, dtype=np.float64)
        if vec.shape != (self.n_inputs,):
            raise ValueError(f"expected {self.n_inputs} inputs, got shape {vec.shape}")
        return vec

    def step_synchronous(self, inputs) -> np.ndarray:
        """One synchronous update: every neuron reads the pre-step vector."""
        if self.kind != RECURRENT:
            raise ValueError("step_synchronous requires a recurrent network")
        vec = self._check_inputs(inputs)
        self.activations = expit(self.weights @ self.activations + self.input_weights @ vec)
        return self.activations

    def forward_pass(self, inputs) -> np.ndarray:
        """One complete pass: neurons updated once each in topological order.

        Each neuron sees its predecessors' current-pass values, so the
        result depends only on weights and inputs.
        """
        if self.kind != FEEDFORWARD:
            raise ValueError("forward_pass requires a feedforward network")
        vec = self._check_inputs(inputs)
        act = self.activations
        for i in self.topo_order:
            act[i] = expit(self.weights[i] @ act + self.input_weights[i] @ vec)
        return act

    def outputs(self) -> np.ndarray:
        return self.activations[self.output_ids]

    # -- batch evaluation over independent state rows ----------------------

    def step_batch(self, act: np.ndarray, inp: np.ndarray, out: np.ndarray) -> None:
        """Synchronous update of every row of act into out (may not alias)."""
        np.matmul(act, self._wt, out=out)
        out += inp @ self._zt
        expit(out, out=out)

    def forward_batch(self, act: np.ndarray, inp: np.ndarray) -> None:
        """In-place complete pass on every row of act."""
        for i in self.topo_order:
            act[:, i] = expit(act @ self.weights[i] + inp @ self.input_weights[i])


def compile_genome(genome: Genome) -> Network:
    """Turn enabled connection genes into an executable Network.

    Output and hidden nodes become neurons (outputs first, so the
    differentiation output is neuron 0); connections leaving input or bias
    nodes become input weights, with the bias on the last input slot.
    """
    input_ids = genome.input_ids
    slot = {nid: k for k, nid in enumerate(input_ids)}
    slot[genome.bias_id] = len(input_ids)
    n_inputs = len(input_ids) + 1

    neuron_ids = genome.output_ids + genome.hidden_ids
    index = {nid: k for k, nid in enumerate(neuron_ids)}
    n = len(neuron_ids)

    weights = np.zeros((n, n))
    input_weights = np.zeros((n, n_inputs))
    for c in genome.conn_genes:
        if not c.enabled:
            continue
        dst = index[c.dst]
        if c.src in slot:
            input_weights[dst, slot[c.src]] = c.weight
        else:
            weights[dst, index[c.src]] = c.weight
    return Network(kind=genome.kind, n_neurons=n, n_inputs=n_inputs,
                   weights=weights, input_weights=input_weights,
                   output_ids=list(range(len(genome.output_ids))))
