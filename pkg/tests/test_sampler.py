import io

import numpy as np
import pytest
from scipy import stats

from timber_reuse.errors import ValidationError
from timber_reuse.grading import assign_levels
from timber_reuse.model import LogPosterior, ModelSpec, natural_parameters, tau2_conditional_logp
from timber_reuse.nuts import SamplerConfig
from timber_reuse.sampler import ThresholdUpdate, run_sampler, tau2_grid, tau2_grid_update
from timber_reuse.specimens import build_features, residual_performances

SPEC = ModelSpec(n_features=2)


def _toy(rng, n=20):
    R = rng.uniform(0.6, 1.05, n)
    X = rng.normal(size=(n, 2))
    return R, X


class TestGridUpdate:
    def test_flat_target_is_uniform(self, rng):
        R, X = _toy(rng)
        grid = tau2_grid(SPEC, 151)
        tau2 = 0.75
        idx = []
        for _ in range(10000):
            tau2 = tau2_grid_update(tau2, np.zeros(3), np.zeros((3, 2)), R, X, SPEC, rng, grid)
            idx.append(int(np.argmin(np.abs(grid - tau2))))
        counts = np.bincount(idx, minlength=151)
        assert stats.chisquare(counts).pvalue > 0.01

    def test_absorbing_cell(self, rng):
        R = np.array([0.705, 0.71, 0.84, 0.95])
        X = np.zeros((4, 2))
        alpha, beta = np.array([0.0, 50.0, -50.0]), np.zeros((3, 2))
        tau2 = 0.8
        trace = []
        for _ in range(2000):
            tau2 = tau2_grid_update(tau2, alpha, beta, R, X, SPEC, rng)
            trace.append(tau2)
        assert all(t <= 0.705 for t in trace[1000:])

    def test_support_confined(self, rng):
        R, X = _toy(rng)
        grid = tau2_grid(SPEC, 151)
        a, b = rng.normal(size=3), rng.normal(size=(3, 2))
        tau2 = 0.8
        for _ in range(500):
            tau2 = tau2_grid_update(tau2, a, b, R, X, SPEC, rng, grid)
            assert 0.70 <= tau2 <= 0.85 and np.isclose(grid, tau2).any()

    def test_grid_spacing(self):
        grid = tau2_grid(SPEC, 151)
        assert grid[0] == 0.70 and grid[-1] == 0.85
        np.testing.assert_allclose(np.diff(grid), 0.001, atol=1e-12)


class TestThresholdUpdate:
    def test_table_matches_conditional(self, rng):
        R, X = _toy(rng, 40)
        grid = tau2_grid(SPEC, 151)
        lp = LogPosterior(X, assign_levels(R, 0.9, 0.75), SPEC)
        upd = ThresholdUpdate(R, X, SPEC, lp, grid, 0.75)
        theta = rng.normal(size=SPEC.dim)
        a, b = natural_parameters(theta, SPEC)
        brute = np.array([tau2_conditional_logp(t, R, X, a, b, SPEC) for t in grid])
        table = upd.conditional_table(theta)
        np.testing.assert_allclose(table - table[0], brute - brute[0], atol=1e-10)

    def test_flat_sweep_is_uniform(self, rng):
        R, X = _toy(rng)
        grid = tau2_grid(SPEC, 151)
        lp = LogPosterior(X, assign_levels(R, 0.9, 0.75), SPEC)
        upd = ThresholdUpdate(R, X, SPEC, lp, grid, 0.75, n_proposals=1)
        theta = np.zeros(SPEC.dim)
        idx = []
        for _ in range(10000):
            upd(theta, rng)
            idx.append(upd.idx)
        assert stats.chisquare(np.bincount(idx, minlength=151)).pvalue > 0.01

    def test_labels_follow_tau2(self, rng):
        R, X = _toy(rng)
        grid = tau2_grid(SPEC, 151)
        lp = LogPosterior(X, assign_levels(R, 0.9, 0.75), SPEC)
        upd = ThresholdUpdate(R, X, SPEC, lp, grid, 0.75)
        theta = rng.normal(size=SPEC.dim)
        for _ in range(50):
            upd(theta, rng)
            np.testing.assert_array_equal(lp.labels, assign_levels(R, 0.9, upd.tau2))


class TestRunSampler:
    def test_minimal_run(self, rng):
        R, X = _toy(rng)
        draws = run_sampler(R, X, SPEC, SamplerConfig(n_chains=1, n_warmup=100, n_draws=1, seed=2))
        assert draws.n_total == 1 and draws.stacked().shape == (1, SPEC.dim)
        assert 0.70 <= draws.tau2()[0] <= 0.85

    def test_too_few_rows(self):
        with pytest.raises(ValidationError):
            run_sampler([0.8, 0.9], np.zeros((2, 2)), SPEC, SamplerConfig(n_warmup=100, n_draws=1))

    def test_serial_and_parallel_identical(self, replica_records):
        R = residual_performances(replica_records)
        fm = build_features(replica_records)
        config = SamplerConfig(n_chains=2, n_warmup=120, n_draws=60, seed=4)
        a = run_sampler(R, fm, SPEC, config, n_jobs=1)
        b = run_sampler(R, fm, SPEC, config, n_jobs=2)
        for ca, cb in zip(a.chains, b.chains):
            np.testing.assert_array_equal(ca.draws, cb.draws)
            np.testing.assert_array_equal(ca.tau2_draws, cb.tau2_draws)
            np.testing.assert_array_equal(ca.energy, cb.energy)

    def test_chains_differ_and_names(self, replica_records):
        R = residual_performances(replica_records)
        fm = build_features(replica_records)
        draws = run_sampler(R, fm, SPEC, SamplerConfig(n_chains=2, n_warmup=100, n_draws=20, seed=8))
        assert not np.array_equal(draws.chains[0].draws, draws.chains[1].draws)
        names = list(draws.named_parameters())
        assert names[:3] == ["alpha[1]", "alpha[2]", "alpha[3]"]
        assert "beta[3,orientation]" in names and names[-2:] == ["tau_hs", "tau2"]
        assert len(names) == len(set(names))
        buf = io.StringIO()
        draws.write_csv(buf)
        lines = buf.getvalue().splitlines()
        assert lines[0].startswith("chain,draw,alpha[1]") and lines[0].endswith("energy,divergent,tree_depth")
        assert len(lines) == 1 + 40

    def test_reference_mode_skips_pinned(self, replica_records):
        R = residual_performances(replica_records)
        fm = build_features(replica_records)
        spec = ModelSpec(n_features=2, reference_class=True)
        draws = run_sampler(R, fm, spec, SamplerConfig(n_chains=1, n_warmup=100, n_draws=5, seed=1))
        names = draws.named_parameters()
        assert "alpha[1]" not in names and "beta[1,group]" not in names
