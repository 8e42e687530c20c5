"""Assignment mechanism: exact pmf, samplers, conditional probabilities, fixed points."""

import numpy as np
import pytest
from scipy.stats import chisquare

from ising_interference import (
    BlockIsingParams,
    ConfigurationError,
    IsingParams,
    TreatmentDraw,
    TreatmentSampler,
    conditional_prob,
    conditional_probs,
    magnetization_log_pmf,
    magnetization_support,
    sample_block_treatments,
    sample_treatments,
    solve_fixed_points,
)
from ising_interference.ising import definetti_mags, definetti_sample
from ising_interference.laws import ks_two_sample

from conftest import brute_force_conditional, brute_force_spin_sum_pmf, enumerate_spins

BETA_GRID = (0.0, 0.5, 1.0, 2.0)
H_GRID = (0.0, 0.3)


def pmf_dict(n, params):
    return dict(zip(magnetization_support(n), np.exp(magnetization_log_pmf(n, params))))


class TestMagnetizationPmf:
    def test_normalization(self):
        for n in (1, 2, 5, 40, 500):
            total = np.exp(magnetization_log_pmf(n, IsingParams(beta=0.7, h=0.2))).sum()
            assert abs(total - 1.0) < 1e-12

    def test_iid_fair_coins(self):
        pmf = pmf_dict(2, IsingParams())
        assert pmf[2] == pytest.approx(0.25, abs=1e-14)
        assert pmf[0] == pytest.approx(0.5, abs=1e-14)
        assert pmf[-2] == pytest.approx(0.25, abs=1e-14)

    def test_two_units_interacting(self):
        # enumeration oracle: weights e^{1/2}, e^{-1/2}, e^{-1/2}, e^{1/2}
        expected = 1.0 / (2.0 + 2.0 * np.exp(-1.0))
        pmf = pmf_dict(2, IsingParams(beta=1.0))
        assert pmf[2] == pytest.approx(0.36552928931500245, abs=1e-12)
        assert pmf[2] == pytest.approx(expected, abs=1e-12)
        assert pmf[-2] == pytest.approx(expected, abs=1e-12)

    def test_matches_enumeration(self):
        params = IsingParams(beta=0.7, h=0.2)
        brute = brute_force_spin_sum_pmf(3, params)
        mine = pmf_dict(3, params)
        for s, p in brute.items():
            assert mine[s] == pytest.approx(p, abs=1e-12)

    def test_total_variation_grid(self):
        for n in range(1, 7):
            for beta in BETA_GRID:
                for h in H_GRID:
                    params = IsingParams(beta=beta, h=h)
                    brute = brute_force_spin_sum_pmf(n, params)
                    mine = pmf_dict(n, params)
                    tv = 0.5 * sum(abs(mine[s] - brute.get(s, 0.0)) for s in mine)
                    assert tv < 1e-12

    def test_symmetry_at_zero_field(self):
        for n in (3, 8, 21):
            pmf = np.exp(magnetization_log_pmf(n, IsingParams(beta=0.8)))
            assert np.array_equal(pmf, pmf[::-1])

    def test_single_unit(self):
        pmf = pmf_dict(1, IsingParams(beta=2.0, h=0.4))
        assert pmf[1] == pytest.approx(np.exp(0.4) / (np.exp(0.4) + np.exp(-0.4)), abs=1e-14)


class TestSampleTreatments:
    def test_independent_pairs(self):
        rng = np.random.default_rng(101)
        sampler = TreatmentSampler(4, IsingParams())
        draws = sampler.draw_t_batch(rng, 100_000)
        both = float(np.mean(draws[:, 0] & draws[:, 1]))
        se = np.sqrt(0.25 * 0.75 / draws.shape[0])
        assert abs(both - 0.25) < 3 * se

    def test_two_unit_spin_sum_frequency(self):
        rng = np.random.default_rng(7)
        sampler = TreatmentSampler(2, IsingParams(beta=1.0))
        sums = sampler.draw_spin_sums(rng, 100_000)
        p2 = float(np.mean(sums == 2))
        target = 0.36552928931500245
        se = np.sqrt(target * (1 - target) / sums.size)
        assert abs(p2 - target) < 3 * se

    def test_low_temperature_concentration(self):
        rng = np.random.default_rng(17)
        sampler = TreatmentSampler(500, IsingParams(beta=2.0))
        mags = sampler.draw_mags(rng, 10_000)
        pi_star = solve_fixed_points(IsingParams(beta=2.0)).pi_plus
        assert abs(np.abs(mags).mean() - pi_star) < 0.02

    def test_exchangeability_given_spin_sum(self):
        # at fixed S = 0 and n = 4, all six treated subsets are equally likely
        rng = np.random.default_rng(3)
        sampler = TreatmentSampler(4, IsingParams(beta=0.9))
        draws = sampler.draw_t_batch(rng, 100_000)
        balanced = draws[draws.sum(axis=1) == 2]
        codes = balanced @ np.array([8, 4, 2, 1])
        _, counts = np.unique(codes, return_counts=True)
        assert counts.size == 6
        assert chisquare(counts).pvalue > 1e-3

    def test_marginal_under_field(self):
        rng = np.random.default_rng(23)
        params = IsingParams(beta=0.5, h=0.3)
        sampler = TreatmentSampler(300, params)
        draws = sampler.draw_t_batch(rng, 4000)
        pi = solve_fixed_points(params).pi
        target = (1 + pi) / 2
        assert abs(draws.mean() - target) < 0.01


class TestBlockSampler:
    def test_single_block_reduces_to_plain(self):
        cfg = BlockIsingParams(sizes=(6,), params=(IsingParams(beta=0.8),))
        rng = np.random.default_rng(4)
        counts = np.zeros(7)
        for _ in range(20_000):
            d = sample_block_treatments(cfg, rng)
            counts[int(d.t.sum())] += 1
        pmf = np.exp(magnetization_log_pmf(6, IsingParams(beta=0.8)))
        expected = pmf * 20_000
        keep = expected >= 5
        assert chisquare(counts[keep], expected[keep] / expected[keep].sum() * counts[keep].sum()).pvalue > 1e-3

    def test_two_noninteracting_blocks_uniform(self):
        cfg = BlockIsingParams(sizes=(2, 2), params=(IsingParams(), IsingParams()))
        rng = np.random.default_rng(5)
        codes = []
        for _ in range(100_000):
            d = sample_block_treatments(cfg, rng)
            codes.append(int(d.t @ np.array([8, 4, 2, 1])))
        _, counts = np.unique(codes, return_counts=True)
        assert counts.size == 16
        assert chisquare(counts).pvalue > 1e-3

    def test_mixed_temperature_blocks(self):
        cfg = BlockIsingParams(sizes=(400, 400),
                               params=(IsingParams(beta=2.0), IsingParams(beta=0.5)))
        rng = np.random.default_rng(6)
        mags1, mags2 = [], []
        for _ in range(300):
            d = sample_block_treatments(cfg, rng)
            mags1.append(d.block_mags[0])
            mags2.append(d.block_mags[1])
        assert abs(np.abs(mags1).mean() - 0.9575040240772688) < 0.03
        assert abs(np.mean(mags2)) < 0.03

    def test_block_metadata(self):
        cfg = BlockIsingParams(sizes=(3, 5), params=(IsingParams(), IsingParams(beta=1.0)))
        d = sample_block_treatments(cfg, np.random.default_rng(0))
        assert d.block_sizes == (3, 5)
        assert d.block_mags.shape == (2,)


class TestConditionalProb:
    def test_balanced_neighborhood(self):
        draw = TreatmentDraw(np.array([1, 0, 1, 0, 1], dtype=np.int8))
        # unit 0: removing its +1 spin leaves sum 0
        assert conditional_prob(0, draw, IsingParams(beta=3.0)) == pytest.approx(0.5, abs=1e-14)

    def test_direct_value(self):
        # m_i = 0.5 at beta = 1: p = (1 + e^{-1})^{-1}
        t = np.array([1] * 7 + [0] * 3, dtype=np.int8)
        draw = TreatmentDraw(t)  # n=10, S=4; a -1 spin sees m_i = 5/10 = 0.5
        p = conditional_prob(9, draw, IsingParams(beta=1.0))
        assert p == pytest.approx(1.0 / (1.0 + np.exp(-1.0)), abs=1e-14)
        assert p == pytest.approx(0.7310585786300049, abs=1e-12)

    def test_equals_tanh_form(self):
        rng = np.random.default_rng(2)
        draw = TreatmentDraw(rng.integers(0, 2, 25).astype(np.int8))
        params = IsingParams(beta=0.8, h=-0.2)
        for i in (0, 7, 24):
            m_i = (draw.spins.sum() - draw.spins[i]) / draw.n
            direct = 0.5 * (np.tanh(params.beta * m_i + params.h) + 1.0)
            assert conditional_prob(i, draw, params) == pytest.approx(direct, abs=1e-14)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(11)
        for n in (2, 4, 6):
            for beta in (0.0, 0.5, 1.0, 2.0):
                for h in (0.0, 0.3):
                    params = IsingParams(beta=beta, h=h)
                    draw = TreatmentDraw(rng.integers(0, 2, n).astype(np.int8))
                    for i in range(n):
                        brute = brute_force_conditional(n, params, draw.spins, i)
                        assert conditional_prob(i, draw, params) == pytest.approx(brute, abs=1e-12)

    def test_monotone_in_neighborhood(self):
        probs = []
        for treated in range(1, 10):
            t = np.zeros(11, dtype=np.int8)
            t[:treated] = 1
            draw = TreatmentDraw(t)
            probs.append(conditional_prob(10, draw, IsingParams(beta=0.7)))
        assert np.all(np.diff(probs) > 0)
        flat = [conditional_prob(10, TreatmentDraw(np.concatenate([np.ones(k, dtype=np.int8), np.zeros(11 - k, dtype=np.int8)])), IsingParams())
                for k in range(1, 10)]
        assert np.allclose(flat, 0.5)


class TestDefinetti:
    def test_zero_interaction_fair(self):
        rng = np.random.default_rng(31)
        draws = [definetti_sample(50, IsingParams(), rng).t.mean() for _ in range(400)]
        assert abs(np.mean(draws) - 0.5) < 0.01

    def test_zero_interaction_field(self):
        rng = np.random.default_rng(37)
        h = 0.4
        p = [definetti_sample(200, IsingParams(h=h), rng).t.mean() for _ in range(200)]
        target = 1.0 / (1.0 + np.exp(-2 * h))  # logistic of 2h
        assert abs(np.mean(p) - target) < 0.01

    @pytest.mark.parametrize("beta", [0.0, 0.5, 1.0])
    def test_agrees_with_exact_sampler(self, beta):
        rng = np.random.default_rng(41)
        m = 10_000
        exact = TreatmentSampler(200, IsingParams(beta=beta)).draw_mags(rng, m)
        latent = definetti_mags(200, IsingParams(beta=beta), rng, m)
        crit = 1.628 * np.sqrt(2.0 / m)
        assert ks_two_sample(exact, latent) < crit


class TestFixedPoints:
    def test_subcritical_zero(self):
        for beta in (0.0, 0.3, 1.0):
            fp = solve_fixed_points(IsingParams(beta=beta))
            assert fp.kind == "unique"
            assert fp.pi == 0.0

    def test_low_temperature_pair(self):
        fp = solve_fixed_points(IsingParams(beta=2.0))
        assert fp.kind == "pair"
        assert fp.pi_plus == pytest.approx(0.9575040240772688, abs=1e-10)
        assert fp.pi_minus == pytest.approx(-fp.pi_plus, abs=1e-14)

    def test_field_root(self):
        fp = solve_fixed_points(IsingParams(beta=1.0, h=0.5))
        assert fp.kind == "unique"
        assert fp.pi == pytest.approx(0.88122536077552, abs=1e-10)

    def test_residuals_and_stability(self):
        for beta in (0.2, 1.0, 1.5, 2.0, 4.0):
            for h in (0.0, 0.3, -0.7):
                fp = solve_fixed_points(IsingParams(beta=beta, h=h))
                for root in fp.stable_roots():
                    assert abs(root - np.tanh(beta * root + h)) <= 1e-12
                if fp.kind == "pair":
                    assert beta / np.cosh(beta * fp.pi_plus) ** 2 < 1.0


class TestValidation:
    def test_negative_beta_rejected(self):
        with pytest.raises(ConfigurationError):
            IsingParams(beta=-0.1)

    def test_non_finite_rejected(self):
        with pytest.raises(ConfigurationError):
            IsingParams(h=np.inf)

    def test_draw_requires_binary(self):
        with pytest.raises(ValueError):
            TreatmentDraw(np.array([0, 2, 1]))

    def test_sample_shapes(self):
        d = sample_treatments(9, IsingParams(beta=0.4), np.random.default_rng(0))
        assert d.t.shape == (9,)
        assert set(np.unique(d.spins)) <= {-1, 1}
        assert d.mag == pytest.approx(d.spins.mean())
