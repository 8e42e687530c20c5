"""Outcome realization, predictand Monte Carlo, and influence-moment oracles."""

import numpy as np
import pytest
import scipy.sparse as sp

from ising_interference import (
    Graph,
    GraphonSpec,
    IsingParams,
    OutcomeSpec,
    TreatmentDraw,
    constant_kernel,
    dgp_preset,
    dump_dataset_csv,
    exposures,
    load_dataset_csv,
    oracle_kappas,
    oracle_tau,
    realize_outcomes,
    simulate_dataset,
    smooth_kernel,
)
from ising_interference.outcomes import OracleKappas, _kernel_weight_moments


def graph_from_dense(a):
    a = np.asarray(a, dtype=np.int8)
    return Graph(n=a.shape[0], adjacency=sp.csr_matrix(a))


class TestRealizeOutcomes:
    def test_direct_only_no_noise(self):
        rng = np.random.default_rng(0)
        spec = dgp_preset("direct-only")
        ds = simulate_dataset(spec, GraphonSpec(rho=0.8), IsingParams(), 40, rng)
        assert np.array_equal(ds.y, ds.draw.t.astype(float))

    def test_hand_computed_small_case(self):
        # path graph 0-1-2-3-4, fixed assignment, zero noise
        a = np.zeros((5, 5), dtype=np.int8)
        for i in range(4):
            a[i, i + 1] = a[i + 1, i] = 1
        g = graph_from_dense(a)
        t = TreatmentDraw(np.array([1, 0, 1, 1, 0], dtype=np.int8))
        spec = OutcomeSpec(f=lambda tt, x: 10.0 * tt + x, noise_sd=0.0)
        ds = realize_outcomes(spec, g, t, np.random.default_rng(1))
        frac = [0.0, 1.0, 0.5, 0.5, 1.0]
        expected = [10 + frac[0], frac[1], 10 + frac[2], 10 + frac[3], frac[4]]
        assert np.allclose(ds.y, expected)

    def test_invariant_reconstruction(self, benchmark_outcome, benchmark_graphon):
        rng = np.random.default_rng(2)
        ds = simulate_dataset(benchmark_outcome, benchmark_graphon, IsingParams(0.5), 120, rng)
        rebuilt = benchmark_outcome.f(ds.draw.t.astype(float), ds.frac_filled()) + ds.eps
        assert np.allclose(ds.y, rebuilt, atol=1e-12)

    def test_treated_mean_benchmark(self, benchmark_outcome, benchmark_graphon):
        # at beta = 0 exposures concentrate at 1/2: treated mean ~ f(1, 1/2) = 3.25
        rng = np.random.default_rng(3)
        means = []
        for _ in range(30):
            ds = simulate_dataset(benchmark_outcome, benchmark_graphon, IsingParams(), 500, rng)
            means.append(ds.y[ds.draw.t == 1].mean())
        assert abs(np.mean(means) - 3.25) < 0.02

    def test_undefined_exposures_filled(self):
        g = graph_from_dense(np.zeros((4, 4)))
        spec = OutcomeSpec(f=lambda tt, x: x, noise_sd=0.0)
        ds = realize_outcomes(spec, g, TreatmentDraw(np.array([1, 0, 1, 0], dtype=np.int8)),
                              np.random.default_rng(4), fill_frac=0.37)
        assert ds.n_undefined == 4
        assert np.allclose(ds.y, 0.37)

    def test_csv_roundtrip(self, tmp_path, benchmark_outcome, benchmark_graphon):
        rng = np.random.default_rng(5)
        ds = simulate_dataset(benchmark_outcome, benchmark_graphon, IsingParams(0.3), 50, rng)
        path = tmp_path / "data.csv"
        dump_dataset_csv(ds, path)
        back = load_dataset_csv(path, ds.graph)
        assert np.array_equal(back.draw.t, ds.draw.t)
        assert np.allclose(back.y, ds.y)
        assert np.allclose(back.traits, ds.traits)


class TestOracleTau:
    def test_pure_direct_effect(self):
        rng = np.random.default_rng(6)
        g = graph_from_dense(1 - np.eye(10, dtype=np.int8))
        est = oracle_tau(dgp_preset("direct-only"), g, IsingParams(), 50, rng)
        assert est.value == pytest.approx(1.0, abs=1e-14)
        assert est.mc_se == pytest.approx(0.0, abs=1e-14)

    def test_no_direct_effect(self):
        rng = np.random.default_rng(7)
        g = graph_from_dense(1 - np.eye(12, dtype=np.int8))
        spec = OutcomeSpec(f=lambda tt, x: 0.0 * tt + x, noise_sd=0.3)
        est = oracle_tau(spec, g, IsingParams(beta=0.8), 60, rng)
        assert est.value == pytest.approx(0.0, abs=1e-14)

    def test_benchmark_value(self, benchmark_outcome, benchmark_graphon):
        rng = np.random.default_rng(8)
        ds = simulate_dataset(benchmark_outcome, benchmark_graphon, IsingParams(), 500, rng)
        est = oracle_tau(benchmark_outcome, ds.graph, IsingParams(), 2000, rng)
        # f(1, 1/2) - f(0, 1/2) = 3.25 up to exposure spread around 1/2
        assert abs(est.value - 3.25) < max(2 * est.mc_se, 0.01)

    def test_noise_cancellation(self, benchmark_graphon):
        rng = np.random.default_rng(9)
        ds = simulate_dataset(dgp_preset("quadratic"), benchmark_graphon, IsingParams(), 80, rng)
        base = dgp_preset("quadratic")
        noisy = OutcomeSpec(f=base.f, fprime=base.fprime, noise_sd=17.0)
        a = oracle_tau(base, ds.graph, IsingParams(), 40, np.random.default_rng(123))
        b = oracle_tau(noisy, ds.graph, IsingParams(), 40, np.random.default_rng(123))
        assert a.value == b.value

    def test_conditional_low_temperature(self, benchmark_graphon):
        rng = np.random.default_rng(10)
        spec = dgp_preset("quadratic")
        ds = simulate_dataset(spec, benchmark_graphon, IsingParams(beta=2.0), 200, rng)
        plus = oracle_tau(spec, ds.graph, IsingParams(beta=2.0), 100, rng, condition="+")
        minus = oracle_tau(spec, ds.graph, IsingParams(beta=2.0), 100, rng, condition="-")
        # treated fraction ~0.98 vs ~0.02: direct effect 1 + (x+1)^2 at x near 0.98 vs 0.02
        assert plus.value > minus.value
        assert abs(plus.value - (1 + 1.98 ** 2)) < 0.1
        assert abs(minus.value - (1 + 1.02 ** 2)) < 0.1

    def test_conditioning_infeasible(self):
        g = graph_from_dense(1 - np.eye(6, dtype=np.int8))
        spec = dgp_preset("direct-only")
        # under a strong positive field, negative magnetization is essentially never drawn
        with pytest.raises(RuntimeError):
            oracle_tau(spec, g, IsingParams(beta=0.5, h=3.0), 200,
                       np.random.default_rng(11), condition="-")


class TestOracleKappas:
    def test_benchmark_values(self, benchmark_outcome):
        kap = oracle_kappas(benchmark_outcome, constant_kernel(0.5))
        # half of f'(1,.5) - f'(0,.5) = 3/2; kappa2 = Var(2 eps) + kappa1^2
        assert kap.kappa1 == pytest.approx(1.5, abs=1e-12)
        assert kap.kappa2 == pytest.approx(4 * 0.05 + 2.25, abs=1e-12)

    def test_zero_noise_constant_kernel(self):
        spec = OutcomeSpec(f=lambda tt, x: tt * (2.0 + 3.0 * x) + x, noise_sd=0.0)
        kap = oracle_kappas(spec, constant_kernel(1.0))
        assert kap.kappa2 == pytest.approx(kap.kappa1 ** 2, abs=1e-12)

    def test_flat_surface(self):
        spec = OutcomeSpec(f=lambda tt, x: 0.0 * tt + 0.0 * x, noise_sd=0.3)
        kap = oracle_kappas(spec)
        assert kap.kappa1 == 0.0
        assert kap.kappa2 == pytest.approx(4 * 0.09, abs=1e-12)

    def test_jensen(self):
        for name in ("quadratic", "smooth-trig", "direct-only"):
            kap = oracle_kappas(dgp_preset(name), smooth_kernel())
            assert kap.kappa2 >= kap.kappa1 ** 2 - 1e-12

    def test_matches_monte_carlo_of_influence(self, benchmark_outcome):
        # MC draw of R - E[R] + Q under the displayed definitions, smooth kernel
        rng = np.random.default_rng(12)
        kernel = smooth_kernel()
        kap = oracle_kappas(benchmark_outcome, kernel)
        m = 1_000_000
        u = rng.random(m)
        eps = rng.normal(0, benchmark_outcome.noise_sd, m)
        # q(u) = E_V[G(u,V)/Gbar(V)] with Gbar(v) = E_U[G(U,v)] = 0.4 + 0.3(0.5 + v)
        nodes = rng.random(200_000)
        def gbar(v):
            return 0.4 + 0.3 * (0.5 + v)
        qvals = np.array([np.mean((0.4 + 0.3 * (uu + nodes)) / gbar(nodes)) for uu in u[:2000]])
        d = benchmark_outcome.deriv(1.0, 0.5) - benchmark_outcome.deriv(0.0, 0.5)
        q = 0.5 * d * qvals
        r_centered = 2.0 * eps[:2000]
        psi = r_centered + q
        k1_mc, k2_mc = psi.mean(), (psi ** 2).mean()
        se1 = psi.std() / np.sqrt(psi.size)
        se2 = (psi ** 2).std() / np.sqrt(psi.size)
        assert abs(k1_mc - kap.kappa1) < 3 * se1
        assert abs(k2_mc - kap.kappa2) < 3 * se2

    def test_hajek_variance_matches_kappa(self, benchmark_outcome, benchmark_graphon):
        # physical check: n Var(tau_hat - tau) ~ kappa2 at beta = 0
        from ising_interference.estimators import hajek
        rng = np.random.default_rng(13)
        kap = oracle_kappas(benchmark_outcome, benchmark_graphon.kernel)
        n, reps = 500, 200
        diffs = []
        for _ in range(reps):
            ds = simulate_dataset(benchmark_outcome, benchmark_graphon, IsingParams(), n, rng)
            tau = oracle_tau(benchmark_outcome, ds.graph, IsingParams(), 400, rng)
            diffs.append(hajek(ds.draw, ds.y) - tau.value)
        nvar = n * np.var(diffs, ddof=1)
        se = nvar * np.sqrt(2.0 / (reps - 1))
        assert abs(nvar - kap.kappa2) < 3 * se

    def test_field_regime_prefactors(self):
        spec = OutcomeSpec(f=lambda tt, x: tt * x * x, noise_sd=0.2)
        pi = 0.4
        kap = oracle_kappas(spec, constant_kernel(1.0), pi=pi)
        x0 = 0.7
        d = 2 * x0  # f'(1,x)-f'(0,x) = 2x
        var_r = 4 * 0.04 / (1 - pi * pi) ** 2
        # derivative comes from the finite-difference fallback here
        assert kap.kappa1 == pytest.approx(0.5 * d, abs=1e-9)
        assert kap.kappa2 == pytest.approx(var_r + 0.25 * d * d, abs=1e-9)

    def test_kernel_weight_moments_constant(self):
        eq, eq2 = _kernel_weight_moments(constant_kernel(0.7))
        assert eq == pytest.approx(1.0, abs=1e-10)
        assert eq2 == pytest.approx(1.0, abs=1e-10)

    def test_invalid_moments_rejected(self):
        with pytest.raises(ValueError):
            OracleKappas(kappa1=2.0, kappa2=1.0)


class TestPresets:
    def test_quadratic_surface(self):
        spec = dgp_preset("quadratic")
        assert spec.f(1.0, 0.5) == pytest.approx(3.25)
        assert spec.f(0.0, 0.9) == 0.0
        assert spec.deriv(1.0, 0.5) == pytest.approx(3.0)
        assert spec.noise_sd == pytest.approx(np.sqrt(0.05))

    def test_unknown_name(self):
        with pytest.raises(KeyError):
            dgp_preset("nope")

    def test_finite_difference_fallback(self):
        spec = OutcomeSpec(f=lambda tt, x: tt * np.exp(x), noise_sd=0.0)
        assert spec.deriv(1.0, 0.3) == pytest.approx(np.exp(0.3), rel=1e-8)
