import numpy as np
import pytest
from oracle_tools import (brute_force_trajectory, monolithic_network,
                          random_structured_genome)

import devogrid.neat as neat
from devogrid.growth import GrowthConfig, Organism, init_organism
from devogrid.neat import FEEDFORWARD, RECURRENT
from devogrid.network import compile_genome

EXPECTED_UNIFORM_FITNESS = 0.7499961553248751  # uniform 128 against 2bands


def zero_weight_genome(chemicals=1, kind=FEEDFORWARD):
    """Minimal developmental genome with every weight forced to 0."""
    cfg = neat.NeatConfig(pop_size=2)
    n_in, n_out = 4 * chemicals, chemicals + 1
    reg = neat.InnovationRegistry(n_in, n_out)
    genome = neat.init_population(cfg, n_in, n_out, kind, reg,
                                  np.random.default_rng(0))[0]
    for conn in genome.conn_genes:
        conn.weight = 0.0
    return genome


class TestInitOrganism:
    def test_cell_and_io_counts(self):
        genome = random_structured_genome(0, 8, 3, FEEDFORWARD)
        org = init_organism(genome, 32, 32, 2)
        assert org.act.shape[0] == 1024
        assert org.net.n_inputs == 9   # 4 neighbors x 2 chemicals + bias
        assert len(org.net.output_ids) == 3
        assert org.energy() == 0.0
        assert org.iteration == 0

    def test_fresh_organisms_identical(self):
        genome = random_structured_genome(1, 4, 2, RECURRENT)
        a = init_organism(genome, 5, 4, 1)
        b = init_organism(genome, 5, 4, 1)
        assert np.array_equal(a.act, b.act)
        assert np.array_equal(a.chem, b.chem)

    def test_fresh_phenotype_is_black(self):
        org = init_organism(zero_weight_genome(), 5, 4, 1)
        assert np.all(org.phenotype().levels == 0)

    def test_arity_mismatch_rejected(self):
        genome = random_structured_genome(2, 4, 2, FEEDFORWARD)
        with pytest.raises(ValueError):
            init_organism(genome, 4, 4, 2)  # needs an 8-input genome


class TestGridStep:
    def test_zero_weights_step_to_half(self):
        org = init_organism(zero_weight_genome(), 6, 5, 1)
        org.step()
        assert np.all(org.act == 0.5)
        assert np.all(org.chem == 0.5)
        assert org.iteration == 1

    def test_one_by_one_grid_has_no_neighbors(self):
        # huge chemical weights cannot matter on a 1x1 grid
        genome = zero_weight_genome()
        for conn in genome.conn_genes:
            if conn.src in genome.input_ids:
                conn.weight = 50.0
        org = init_organism(genome, 1, 1, 1)
        for _ in range(5):
            org.step()
        assert np.all(org.act == 0.5)  # only the zero bias weight contributes

    def test_energy_arithmetic(self):
        genome = random_structured_genome(3, 4, 2, RECURRENT, grow_nodes=1, grow_links=0)
        org = init_organism(genome, 2, 2, 1)
        org.act[:] = 0.5
        assert org.energy() == pytest.approx(4 * org.net.n_neurons * 0.25, abs=1e-12)

    def test_energy_invariant_under_transposition(self):
        genome = random_structured_genome(4, 4, 2, RECURRENT)
        a = init_organism(genome, 5, 3, 1)
        a.randomize_state(np.random.default_rng(0))
        b = init_organism(genome, 3, 5, 1)
        n = a.net.n_neurons
        b.act[:] = a.act.reshape(3, 5, n).transpose(1, 0, 2).reshape(15, n)
        assert b.energy() == pytest.approx(a.energy(), abs=1e-12)


class TestOracleEquivalence:
    def test_recurrent_matches_monolithic_network(self):
        for seed, m in [(0, 1), (1, 2)]:
            genome = random_structured_genome(seed, 4 * m, m + 1, RECURRENT)
            org = init_organism(genome, 3, 3, m)
            mono = monolithic_network(genome, 3, 3, m)
            n = org.net.n_neurons
            for step in range(30):
                org.step()
                mono.step_synchronous([1.0])
                grid = org.act.reshape(9 * n)
                assert np.max(np.abs(grid - mono.activations)) <= 1e-12, \
                    f"seed {seed} diverged at step {step}"

    def test_feedforward_matches_brute_force(self):
        for seed, m in [(5, 1), (6, 2)]:
            genome = random_structured_genome(seed, 4 * m, m + 1, FEEDFORWARD)
            org = init_organism(genome, 3, 4, m)
            frames = brute_force_trajectory(genome, 3, 4, m, steps=20)
            n = org.net.n_neurons
            for step, frame in enumerate(frames):
                org.step()
                diff = np.abs(org.act.reshape(4, 3, n) - frame)
                assert diff.max() <= 1e-12, f"seed {seed} diverged at step {step}"

    def test_recurrent_matches_brute_force(self):
        genome = random_structured_genome(7, 4, 2, RECURRENT)
        org = init_organism(genome, 2, 2, 1)
        frames = brute_force_trajectory(genome, 2, 2, 1, steps=15)
        n = org.net.n_neurons
        for frame in frames:
            org.step()
            assert np.abs(org.act.reshape(2, 2, n) - frame).max() <= 1e-12


class TestGrow:
    def test_zero_weight_analytic_trace(self):
        org = init_organism(zero_weight_genome(), 16, 16, 1)
        result = org.grow(GrowthConfig())
        assert result.converged
        assert result.iterations_used == 9  # energy constant from step 1, window 8
        assert np.all(result.phenotype.levels == 128)
        n = org.net.n_neurons
        assert result.energy_trace == [16 * 16 * n * 0.25] * 9

    def test_zero_max_iterations_never_converges(self):
        org = init_organism(zero_weight_genome(), 4, 4, 1)
        result = org.grow(GrowthConfig(max_iterations=0))
        assert not result.converged
        assert result.iterations_used == 0
        assert result.phenotype is None
        assert result.energy_trace == []

    def test_regrow_from_reset_is_identical(self):
        genome = random_structured_genome(8, 4, 2, FEEDFORWARD)
        first = init_organism(genome, 6, 6, 1).grow(GrowthConfig())
        second = init_organism(genome, 6, 6, 1).grow(GrowthConfig())
        assert first.converged == second.converged
        assert first.iterations_used == second.iterations_used
        assert first.energy_trace == second.energy_trace
        if first.converged:
            assert first.phenotype == second.phenotype

    def test_trace_capped_at_max_iterations(self):
        genome = oscillator_genome()
        org = init_organism(genome, 3, 3, 1)
        result = org.grow(GrowthConfig(max_iterations=64))
        assert not result.converged
        assert result.iterations_used == 64
        assert len(result.energy_trace) == 64

    @pytest.mark.parametrize("seed,kind", [(11, FEEDFORWARD), (12, RECURRENT),
                                           (13, FEEDFORWARD), (14, RECURRENT)])
    def test_fast_paths_match_honest_stepping(self, seed, kind):
        # the fixed-point and two-cycle shortcuts must be observationally
        # identical to plain stepping (an observer disables them)
        genome = random_structured_genome(seed, 4, 2, kind)
        cfg = GrowthConfig(max_iterations=200)
        fast = init_organism(genome, 4, 4, 1).grow(cfg)
        honest_org = init_organism(genome, 4, 4, 1)
        honest = honest_org.grow(cfg, observer=lambda t, o: None)
        assert fast.converged == honest.converged
        assert fast.iterations_used == honest.iterations_used
        assert fast.energy_trace == honest.energy_trace
        assert np.array_equal(fast.final_state.act, honest_org.act)
        assert np.array_equal(fast.final_state.chem, honest_org.chem)

    def test_oscillator_fast_path_matches_honest(self):
        genome = oscillator_genome()
        cfg = GrowthConfig(max_iterations=150)
        fast = init_organism(genome, 3, 3, 1).grow(cfg)
        honest_org = init_organism(genome, 3, 3, 1)
        honest = honest_org.grow(cfg, observer=lambda t, o: None)
        assert fast.converged == honest.converged == False
        assert fast.iterations_used == honest.iterations_used == 150
        assert fast.energy_trace == honest.energy_trace
        assert np.array_equal(fast.final_state.act, honest_org.act)

    def test_converged_phenotype_is_a_fixed_point(self):
        genome = random_structured_genome(15, 4, 2, FEEDFORWARD)
        org = init_organism(genome, 5, 5, 1)
        result = org.grow(GrowthConfig())
        if not result.converged:
            pytest.skip("seed produced a non-stabilizing genome")
        before = org.act.copy()
        for _ in range(100):
            prev = org.act.copy()
            org.step()
            assert np.max(np.abs(org.act - prev)) <= 1e-9
        assert org.phenotype() == result.phenotype
        assert np.max(np.abs(org.act - before)) <= 1e-9


def oscillator_genome():
    """Recurrent genome with a strong negative self-loop: exact 2-cycle."""
    g = neat.Genome(
        kind=RECURRENT,
        node_genes=[neat.NodeGene(i, "input") for i in range(4)]
        + [neat.NodeGene(4, "bias"), neat.NodeGene(5, "output"), neat.NodeGene(6, "output")],
        conn_genes=[
            neat.ConnGene(0, 0, 5, 0.0, True),
            neat.ConnGene(1, 1, 5, 0.0, True),
            neat.ConnGene(2, 2, 5, 0.0, True),
            neat.ConnGene(3, 3, 5, 0.0, True),
            neat.ConnGene(4, 4, 6, 10.0, True),   # bias -> chemical output
            neat.ConnGene(5, 6, 6, -20.0, True),  # strong negative self-loop
            neat.ConnGene(6, 4, 5, 0.0, True),
        ],
    )
    neat.check_genome(g)
    return g


class TestPerturbAndRandomize:
    def converged_organism(self, seed=16):
        genome = random_structured_genome(seed, 4, 2, FEEDFORWARD)
        org = init_organism(genome, 5, 5, 1)
        result = org.grow(GrowthConfig())
        assert result.converged
        return org

    def test_zero_sigma_is_identity(self):
        org = self.converged_organism()
        act, chem = org.act.copy(), org.chem.copy()
        org.perturb(0.0, np.random.default_rng(0))
        assert np.array_equal(org.act, act)
        assert np.array_equal(org.chem, chem)

    def test_perturb_reproducible(self):
        a = self.converged_organism()
        b = self.converged_organism()
        a.perturb(1.0, np.random.default_rng(99))
        b.perturb(1.0, np.random.default_rng(99))
        assert np.array_equal(a.act, b.act)
        assert np.array_equal(a.chem, b.chem)

    def test_perturb_refreshes_chemical_buffer(self):
        org = self.converged_organism()
        org.perturb(1.0, np.random.default_rng(1))
        n = org.net.n_neurons
        chem_from_act = org.act.reshape(5, 5, n)[:, :, org.net.output_ids[1]]
        assert np.array_equal(org.chem[:, :, 0], chem_from_act)

    def test_randomize_state_bounds_and_reproducibility(self):
        a = self.converged_organism()
        b = self.converged_organism()
        a.randomize_state(np.random.default_rng(5))
        b.randomize_state(np.random.default_rng(5))
        assert np.array_equal(a.act, b.act)
        assert np.array_equal(a.chem, b.chem)
        assert a.act.min() >= 0.0 and a.act.max() <= 1.0
        assert a.chem.min() >= 0.0 and a.chem.max() <= 1.0


class TestChemicalMap:
    def test_fresh_organism_is_black(self):
        org = init_organism(zero_weight_genome(chemicals=2), 4, 6, 2)
        for k in (1, 2):
            img = org.chemical_map(k)
            assert img.width == 4 and img.height == 6
            assert np.all(img.levels == 0)

    def test_zero_weight_step_gives_mid_gray(self):
        org = init_organism(zero_weight_genome(), 4, 4, 1)
        org.step()
        assert np.all(org.chemical_map(1).levels == 128)

    def test_out_of_range_chemical(self):
        org = init_organism(zero_weight_genome(), 4, 4, 1)
        with pytest.raises(ValueError):
            org.chemical_map(0)
        with pytest.raises(ValueError):
            org.chemical_map(2)


class TestLocality:
    def test_next_state_depends_only_on_neighborhood(self):
        genome = random_structured_genome(20, 4, 2, RECURRENT)
        a = init_organism(genome, 5, 5, 1)
        b = init_organism(genome, 5, 5, 1)
        a.randomize_state(np.random.default_rng(0))
        b.randomize_state(np.random.default_rng(1))
        # make cell (2,2) and its four neighbors' chemicals agree
        r, c = 2, 2
        b.act[r * 5 + c] = a.act[r * 5 + c]
        for dr, dc in [(-1, 0), (0, 1), (1, 0), (0, -1)]:
            b.chem[r + dr, c + dc] = a.chem[r + dr, c + dc]
        a.step()
        b.step()
        assert np.array_equal(a.act[r * 5 + c], b.act[r * 5 + c])
