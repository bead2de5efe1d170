import numpy as np
import pytest

from mfconformal import ScenarioSpec, StudyConfig, coverage_ci, run_study, size_quartiles
from mfconformal.harness import ReplicationError, _replication


def small_config(**overrides):
    scenario = ScenarioSpec(
        study=1, scenario=1, n=20, covariate_set=2, coeff_seed=7, grid_points=50
    )
    base = dict(scenario=scenario, l=9, n_reps=20, alpha=0.10,
                modulation="sigma", master_seed=3)
    base.update(overrides)
    return StudyConfig(**base)


class TestCoverageCI:
    def test_all_hits(self):
        assert coverage_ci(10, 10) == (1.0, 1.0, 1.0)

    def test_no_hits(self):
        assert coverage_ci(0, 10) == (0.0, 0.0, 0.0)

    def test_reproduces_published_interval_shape(self):
        # 4472/5000 rounds to the 0.894 [0.886, 0.903] pattern.
        p, lo, hi = coverage_ci(4472, 5000)
        assert round(p, 3) == 0.894
        assert round(lo, 3) == 0.886
        assert round(hi, 3) == 0.903

    def test_formula(self):
        p, lo, hi = coverage_ci(80, 100)
        half = 1.96 * np.sqrt(0.8 * 0.2 / 100)
        assert lo == pytest.approx(0.8 - half) and hi == pytest.approx(0.8 + half)

    def test_invalid(self):
        with pytest.raises(ValueError):
            coverage_ci(5, 0)
        with pytest.raises(ValueError):
            coverage_ci(11, 10)


class TestSizeQuartiles:
    def test_three_values_interpolated(self):
        assert size_quartiles([1.0, 2.0, 3.0]) == (1.5, 2.0, 2.5)

    def test_constant(self):
        assert size_quartiles([4.2] * 7) == (4.2, 4.2, 4.2)

    def test_matches_sort_based_oracle(self):
        rng = np.random.default_rng(2)
        sizes = rng.uniform(0, 10, size=41)
        q1, med, q3 = size_quartiles(sizes)
        srt = np.sort(sizes)

        def rank_interp(q):
            pos = q * (srt.size - 1)
            lo = int(np.floor(pos))
            frac = pos - lo
            return srt[lo] * (1 - frac) + srt[min(lo + 1, srt.size - 1)] * frac

        assert q1 == pytest.approx(rank_interp(0.25))
        assert med == pytest.approx(rank_interp(0.50))
        assert q3 == pytest.approx(rank_interp(0.75))

    def test_empty(self):
        with pytest.raises(ValueError):
            size_quartiles([])


class TestRunStudy:
    def test_single_noiseless_replication(self):
        scenario = ScenarioSpec(
            study=1, scenario=1, n=20, covariate_set=1, coeff_seed=1,
            grid_points=50, error_scale=0.0,
        )
        cfg = StudyConfig(scenario=scenario, l=9, n_reps=1, alpha=0.10,
                          modulation="s0", master_seed=0)
        rep = run_study(cfg)
        assert rep.coverage in (0.0, 1.0)
        assert rep.size_median >= 0.0
        assert rep.n_reps == 1

    def test_theoretical_coverage_fields(self):
        rep = run_study(small_config(n_reps=2))
        assert rep.theoretical_coverage == 0.9
        rep = run_study(small_config(n_reps=2, l=10))
        assert rep.theoretical_coverage == pytest.approx(10 / 11)
        rep = run_study(small_config(n_reps=2, l=10, mode="smoothed"))
        assert rep.theoretical_coverage == pytest.approx(0.9)

    def test_parallel_equals_serial(self):
        serial = run_study(small_config(n_reps=16, workers=1, keep_sizes=True))
        parallel = run_study(small_config(n_reps=16, workers=2, keep_sizes=True))
        assert serial.hits == parallel.hits
        assert serial.sizes == parallel.sizes
        assert serial.coverage == parallel.coverage

    def test_deterministic_across_runs(self):
        a = run_study(small_config(n_reps=10, keep_sizes=True))
        b = run_study(small_config(n_reps=10, keep_sizes=True))
        assert a.sizes == b.sizes and a.hits == b.hits

    def test_size_equals_two_radius(self):
        cfg = small_config(n_reps=3, keep_sizes=True)
        rep = run_study(cfg)
        for rep_idx in range(3):
            _, size, infinite = _replication(cfg, rep_idx)
            assert not infinite
            assert size in rep.sizes

    def test_failures_abort_with_index(self, monkeypatch):
        import mfconformal.harness as hm

        real = hm._replication

        def flaky(cfg, rep):
            if rep == 3:
                raise RuntimeError("boom")
            return real(cfg, rep)

        monkeypatch.setattr(hm, "_replication", flaky)
        with pytest.raises(ReplicationError, match="replication 3"):
            run_study(small_config(n_reps=5))

    def test_skip_failures_counts_them(self, monkeypatch):
        import mfconformal.harness as hm

        real = hm._replication

        def flaky(cfg, rep):
            if rep in (1, 4):
                raise RuntimeError("boom")
            return real(cfg, rep)

        monkeypatch.setattr(hm, "_replication", flaky)
        rep = run_study(small_config(n_reps=6, skip_failures=True))
        assert rep.n_failed == 2
        assert rep.n_reps == 4

    def test_cub_requires_split_mode(self):
        with pytest.raises(ValueError):
            small_config(method="cub", mode="smoothed")

    def test_infeasible_alpha_counts_infinite(self):
        rep = run_study(small_config(n_reps=3, alpha=0.05))  # < 1/10
        assert rep.n_infinite == 3
        assert rep.coverage == 1.0


class TestRecordsAndInvariants:
    def test_keep_records(self):
        rep = run_study(small_config(n_reps=5, keep_records=True))
        assert len(rep.records) == 5
        assert [r.rep for r in rep.records] == list(range(5))
        assert all(r.size is not None and not r.infinite for r in rep.records)

    @pytest.mark.parametrize(
        "n,l,alpha",
        [(40, 19, 0.25), (110, 99, 0.10)],
    )
    def test_coverage_invariant_at_other_calibration_sizes(self, n, l, alpha):
        # Empirical coverage stays within 3 binomial standard errors of
        # 1 - floor((l+1) alpha)/(l+1) at N=2000.
        scenario = ScenarioSpec(
            study=1, scenario=1, n=n, covariate_set=2, coeff_seed=7
        )
        cfg = StudyConfig(scenario=scenario, l=l, n_reps=2000, alpha=alpha,
                          modulation="sigma", master_seed=77)
        rep = run_study(cfg)
        p = rep.theoretical_coverage
        tol = 3 * np.sqrt(p * (1 - p) / 2000)
        assert abs(rep.coverage - p) <= tol
