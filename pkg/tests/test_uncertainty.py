"""Tests for bootstrap standard errors of equating."""

import numpy as np
import pytest

from keq.core import (
    Categorical,
    CovariateSpace,
    Dataset,
    KeqError,
    ScoreScale,
    ValidationError,
)
from keq.equate import GkePipelineConfig
from keq.uncertainty import (
    BootstrapConfig,
    PipelineSpec,
    bootstrap_replicates,
    bootstrap_see,
)

SPACE = CovariateSpace((Categorical("g", (0, 1)),))


def mean_shift_pipeline(p_data, q_data):
    """Trivial equating oracle: shift every score by the mean difference."""
    shift = q_data.scores.mean() - p_data.scores.mean()
    return p_data.scale.points.astype(float) + shift


def sample_dataset(rng, n, p=0.5, scale=ScoreScale(0, 30)):
    scores = rng.binomial(scale.max, p, size=n)
    return Dataset(scale, SPACE, scores, {"g": rng.integers(0, 2, size=n)})


class TestBootstrapSee:
    def test_degenerate_data_gives_exactly_zero(self):
        # Every person identical: each resample reproduces the dataset, so
        # the replicate vectors coincide and the SEE is exactly zero.
        scale = ScoreScale(0, 10)
        p = Dataset(scale, SPACE, np.full(40, 6), {"g": np.ones(40, dtype=int)})
        q = Dataset(scale, SPACE, np.full(40, 8), {"g": np.ones(40, dtype=int)})
        result = bootstrap_see(p, q, mean_shift_pipeline, BootstrapConfig(25, seed=3))
        assert np.all(result.see == 0.0)
        assert result.n_failed == 0

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(0)
        p = sample_dataset(rng, 150)
        q = sample_dataset(rng, 150, p=0.55)
        pipeline = PipelineSpec("EG", config=GkePipelineConfig(presmooth=None))
        r1 = bootstrap_see(p, q, pipeline, BootstrapConfig(20, seed=9))
        r2 = bootstrap_see(p, q, pipeline, BootstrapConfig(20, seed=9))
        assert np.array_equal(r1.see, r2.see)
        assert np.array_equal(r1.replicates, r2.replicates)

    def test_split_ranges_pool_to_full_run(self):
        rng = np.random.default_rng(1)
        p = sample_dataset(rng, 120)
        q = sample_dataset(rng, 120, p=0.6)
        pipeline = PipelineSpec("EG", config=GkePipelineConfig(presmooth=None))
        config = BootstrapConfig(16, seed=5)
        full, _ = bootstrap_replicates(p, q, pipeline, config)
        first, _ = bootstrap_replicates(p, q, pipeline, config, start=0, stop=8)
        second, _ = bootstrap_replicates(p, q, pipeline, config, start=8, stop=16)
        assert np.array_equal(np.vstack(full), np.vstack(first + second))

    def test_parallel_threads_reproduce_serial_result(self):
        rng = np.random.default_rng(3)
        p = sample_dataset(rng, 100)
        q = sample_dataset(rng, 100, p=0.6)
        pipeline = PipelineSpec("EG", config=GkePipelineConfig(presmooth=None))
        config = BootstrapConfig(12, seed=2)
        serial = bootstrap_see(p, q, pipeline, config, threads=1)
        parallel = bootstrap_see(p, q, pipeline, config, threads=2)
        assert np.array_equal(serial.replicates, parallel.replicates)
        assert np.array_equal(serial.see, parallel.see)

    def test_positive_see_on_sampled_data(self):
        rng = np.random.default_rng(2)
        p = sample_dataset(rng, 200)
        q = sample_dataset(rng, 200, p=0.6)
        pipeline = PipelineSpec("EG", config=GkePipelineConfig(presmooth=None))
        result = bootstrap_see(p, q, pipeline, BootstrapConfig(30, seed=1))
        mid = slice(8, 23)
        assert np.all(result.see[mid] > 0)

    def test_failure_cap(self):
        scale = ScoreScale(0, 10)
        p = Dataset(scale, SPACE, np.full(30, 5), {"g": np.zeros(30, dtype=int)})

        calls = {"n": 0}

        def flaky(p_data, q_data):
            calls["n"] += 1
            if calls["n"] % 2 == 0:
                raise ValidationError("synthetic failure")
            return np.zeros(scale.n_points)

        with pytest.raises(KeqError, match="bootstrap replicates failed"):
            bootstrap_see(p, p, flaky, BootstrapConfig(20, seed=0))

    def test_few_failures_are_skipped(self):
        scale = ScoreScale(0, 10)
        p = Dataset(scale, SPACE, np.full(30, 5), {"g": np.zeros(30, dtype=int)})
        calls = {"n": 0}

        def occasionally_flaky(p_data, q_data):
            calls["n"] += 1
            if calls["n"] == 1:
                raise ValidationError("synthetic failure")
            return np.full(scale.n_points, float(calls["n"] % 3))

        result = bootstrap_see(p, p, occasionally_flaky, BootstrapConfig(40, seed=0))
        assert result.n_failed == 1
        assert result.replicates.shape[0] == 39

    def test_replicate_count_validation(self):
        with pytest.raises(ValidationError):
            BootstrapConfig(1)

    def test_sequential_pipeline_spec_needs_covariate(self):
        with pytest.raises(ValidationError):
            PipelineSpec("sequential GKE")
        with pytest.raises(ValidationError):
            PipelineSpec("nonsense")
