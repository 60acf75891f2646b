import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracle_tools import random_structured_genome

import devogrid.neat as neat
from devogrid.growth import GrowthConfig
from devogrid.neat import FEEDFORWARD, RECURRENT
from devogrid.patterns import (GrayImage, VARIANTS, check_arity, discretize, evaluate,
                               evaluate_detailed, levels_from_unit, make_target,
                               parse_variant, read_pgm, regression_image, similarity,
                               write_pgm)
from test_growth import oscillator_genome, zero_weight_genome

UNIFORM_VS_2BANDS = 0.7499961553248751


class TestTargets:
    def test_2bands_rows(self):
        img = make_target("2bands", 32, 32)
        assert np.all(img.levels[:16] == 0)
        assert np.all(img.levels[16:] == 255)

    def test_level_counts(self):
        assert len(np.unique(make_target("2bands", 32, 32).levels)) == 2
        assert len(np.unique(make_target("3bands", 32, 32).levels)) == 3

    def test_3bands_layout(self):
        img = make_target("3bands", 30, 30)
        assert np.all(img.levels[:10] == 0)
        assert np.all(img.levels[10:20] == 128)
        assert np.all(img.levels[20:] == 255)

    def test_3bands_remainder_joins_middle(self):
        img = make_target("3bands", 8, 32)
        counts = {level: int((img.levels[:, 0] == level).sum()) for level in (0, 128, 255)}
        assert counts == {0: 10, 128: 12, 255: 10}

    def test_disc_mirror_symmetry(self):
        img = make_target("disc", 32, 32)
        assert np.array_equal(img.levels, img.levels[:, ::-1])
        assert np.array_equal(img.levels, img.levels[::-1, :])
        assert img.levels[16, 16] == 255
        assert img.levels[0, 0] == 0

    def test_halfdiscs_structure(self):
        img = make_target("halfdiscs", 32, 32)
        assert set(np.unique(img.levels)) == {0, 128, 255}
        assert img.levels[0, 16] == 128    # top half-disc
        assert img.levels[31, 16] == 255   # bottom half-disc wins overlaps

    def test_generators_are_deterministic(self):
        for kind in ("2bands", "3bands", "disc", "halfdiscs"):
            assert make_target(kind, 17, 23) == make_target(kind, 17, 23)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            make_target("tartan", 8, 8)

    def test_too_small(self):
        with pytest.raises(ValueError):
            make_target("2bands", 1, 8)


class TestDiscretize:
    def test_endpoints(self):
        assert discretize(0.0) == 0
        assert discretize(1.0) == 255

    def test_half_rounds_up(self):
        assert discretize(0.5) == 128  # 127.5 rounds half-up

    def test_clamping(self):
        assert discretize(1.7) == 255
        assert discretize(-0.3) == 0

    @given(st.floats(min_value=-2, max_value=2))
    @settings(max_examples=100, deadline=None)
    def test_range_and_vector_agreement(self, v):
        level = discretize(v)
        assert 0 <= level <= 255
        assert levels_from_unit(np.array([[v]]))[0, 0] == level

    @given(st.floats(min_value=0, max_value=0.99), st.floats(min_value=0.001, max_value=0.01))
    @settings(max_examples=50, deadline=None)
    def test_monotone(self, v, dv):
        assert discretize(v + dv) >= discretize(v)


class TestSimilarity:
    def test_identical_images(self):
        img = make_target("disc", 16, 16)
        assert similarity(img, img) == 1.0

    def test_maximal_difference(self):
        black = GrayImage(np.zeros((8, 8)))
        white = GrayImage(np.full((8, 8), 255))
        assert similarity(black, white) == 0.0

    def test_uniform_gray_vs_2bands(self):
        uniform = GrayImage(np.full((32, 32), 128))
        target = make_target("2bands", 32, 32)
        assert similarity(uniform, target) == pytest.approx(UNIFORM_VS_2BANDS, abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            similarity(GrayImage(np.zeros((4, 4))), GrayImage(np.zeros((4, 5))))

    @given(st.integers(0, 255), st.integers(0, 255))
    @settings(max_examples=50, deadline=None)
    def test_symmetric_and_bounded(self, a, b):
        img_a = GrayImage(np.full((3, 5), a))
        img_b = GrayImage(np.full((3, 5), b))
        s = similarity(img_a, img_b)
        assert s == similarity(img_b, img_a)
        assert 0.0 <= s <= 1.0
        if a == b:
            assert s == 1.0


class TestVariants:
    def test_exactly_five(self):
        assert sorted(VARIANTS) == ["1-ffwd", "1-recurr", "2-ffwd", "2-recurr", "regression"]

    def test_arities(self):
        v = parse_variant("2-recurr")
        assert (v.n_inputs, v.n_outputs, v.topology) == (8, 3, RECURRENT)
        r = parse_variant("regression")
        assert (r.n_inputs, r.n_outputs, r.topology) == (2, 1, FEEDFORWARD)
        assert r.chemicals == 0

    def test_unknown_variant(self):
        with pytest.raises(ValueError):
            parse_variant("3-ffwd")

    def test_check_arity(self):
        genome = zero_weight_genome()
        check_arity(genome, parse_variant("1-ffwd"))
        with pytest.raises(ValueError):
            check_arity(genome, parse_variant("2-ffwd"))
        with pytest.raises(ValueError):
            check_arity(genome, parse_variant("1-recurr"))


class TestEvaluate:
    def test_zero_weight_genome_scores_uniform_gray(self):
        target = make_target("2bands", 32, 32)
        fit = evaluate(zero_weight_genome(), parse_variant("1-ffwd"), target, GrowthConfig())
        assert fit == pytest.approx(UNIFORM_VS_2BANDS, abs=1e-6)

    def test_non_stabilizing_genome_scores_zero(self):
        genome = oscillator_genome()
        target = make_target("2bands", 8, 8)
        fit, result = evaluate_detailed(genome, parse_variant("1-recurr"), target,
                                        GrowthConfig(max_iterations=128))
        assert fit == 0.0
        assert result is not None and not result.converged

    def test_regression_constant_half(self):
        cfg = neat.NeatConfig(pop_size=2)
        reg = neat.InnovationRegistry(2, 1)
        genome = neat.init_population(cfg, 2, 1, FEEDFORWARD, reg,
                                      np.random.default_rng(0))[0]
        for conn in genome.conn_genes:
            conn.weight = 0.0
        target = make_target("2bands", 32, 32)
        fit, result = evaluate_detailed(genome, parse_variant("regression"), target,
                                        GrowthConfig())
        assert fit == pytest.approx(UNIFORM_VS_2BANDS, abs=1e-6)
        assert result is None  # no growth loop for the regression variant

    def test_regression_uses_coordinates(self):
        # positive weight on the y input splits the image vertically
        cfg = neat.NeatConfig(pop_size=2)
        reg = neat.InnovationRegistry(2, 1)
        genome = neat.init_population(cfg, 2, 1, FEEDFORWARD, reg,
                                      np.random.default_rng(0))[0]
        weights = {(0, 3): 0.0, (1, 3): 60.0, (2, 3): -30.0}  # sharp step at y=0.5
        for conn in genome.conn_genes:
            conn.weight = weights[(conn.src, conn.dst)]
        img = regression_image(genome, 8, 8)
        assert np.all(img.levels[:4] < 10)
        assert np.all(img.levels[4:] > 245)

    def test_deterministic(self):
        genome = random_structured_genome(21, 4, 2, FEEDFORWARD)
        target = make_target("3bands", 12, 12)
        variant = parse_variant("1-ffwd")
        assert evaluate(genome, variant, target, GrowthConfig()) == \
            evaluate(genome, variant, target, GrowthConfig())


class TestPgmIo:
    def test_text_round_trip(self, tmp_path):
        img = make_target("halfdiscs", 13, 9)
        path = tmp_path / "t.pgm"
        write_pgm(img, path, binary=False)
        assert read_pgm(path) == img
        assert path.read_text().startswith("P2\n13 9\n255\n")

    def test_binary_round_trip(self, tmp_path):
        img = make_target("disc", 9, 13)
        path = tmp_path / "t.pgm"
        write_pgm(img, path, binary=True)
        assert read_pgm(path) == img
        assert path.read_bytes().startswith(b"P5\n9 13\n255\n")

    def test_comment_handling(self, tmp_path):
        path = tmp_path / "c.pgm"
        path.write_text("P2\n# a comment\n2 2\n255\n0 128\n255 64\n")
        img = read_pgm(path)
        assert img.levels.tolist() == [[0, 128], [255, 64]]

    def test_rejects_other_maxval(self, tmp_path):
        path = tmp_path / "bad.pgm"
        path.write_text("P2\n2 1\n15\n0 1\n")
        with pytest.raises(ValueError):
            read_pgm(path)
