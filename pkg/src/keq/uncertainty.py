"""Standard error of equating via the nonparametric bootstrap.

Each replicate resamples both populations' person records with
replacement (independent streams per population), reruns the complete
pipeline — presmoothing, bandwidth selection and, for sequential
equating, the covariate-equating step — and the SEE at each score point
is the sample standard deviation of the replicate equated values.
Replicates are keyed by (seed, replicate index), so any partition of the
index range (including parallel execution) reproduces the same matrix.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import Dataset, KeqError, ValidationError, substream
from .equate import (
    EgInput,
    GkePipelineConfig,
    NecInput,
    equate_gke,
    equate_sequential,
)

__all__ = ["BootstrapConfig", "PipelineSpec", "BootstrapResult",
           "bootstrap_replicates", "bootstrap_see"]

MAX_FAILURE_FRACTION = 0.05


@dataclass(frozen=True)
class BootstrapConfig:
    replicates: int = 400
    seed: int = 0

    def __post_init__(self):
        if self.replicates < 2:
            raise ValidationError("need at least 2 bootstrap replicates")


@dataclass(frozen=True)
class PipelineSpec:
    """Which equating pipeline each bootstrap replicate reruns.

    ``method`` is "EG", "GKE" (NEC design) or "sequential GKE";
    sequential equating also names the covariate to equate first.
    """

    method: str = "GKE"
    covariate: str | None = None
    config: GkePipelineConfig = field(default_factory=GkePipelineConfig)

    def __post_init__(self):
        if self.method not in ("EG", "GKE", "sequential GKE"):
            raise ValidationError(f"unknown pipeline method {self.method!r}")
        if self.method == "sequential GKE" and not self.covariate:
            raise ValidationError("sequential pipeline needs a covariate name")

    def run(self, p_data: Dataset, q_data: Dataset) -> np.ndarray:
        if self.method == "EG":
            table = equate_gke(EgInput.from_datasets(p_data, q_data), self.config)
        elif self.method == "GKE":
            nec = NecInput.from_datasets(p_data, q_data, omega=self.config.omega)
            table = equate_gke(nec, self.config)
        else:
            table = equate_sequential(p_data, q_data, self.covariate, self.config)
        return table.equated


@dataclass(frozen=True)
class BootstrapResult:
    see: np.ndarray
    replicates: np.ndarray  # (successful replicates) x (score points)
    n_failed: int
    failures: tuple = ()


def bootstrap_replicates(p_data: Dataset, q_data: Dataset, pipeline,
                         config: BootstrapConfig, start: int = 0,
                         stop: int | None = None):
    """Replicate equated-score vectors for replicate indices [start, stop).

    ``pipeline`` is a :class:`PipelineSpec` or any callable of
    ``(p_data, q_data)`` returning the equated vector.  Replicate ``b``
    always consumes the streams keyed (seed, b), so disjoint index ranges
    pool into exactly the matrix a single full run would produce.
    """
    stop = config.replicates if stop is None else stop
    run = pipeline.run if isinstance(pipeline, PipelineSpec) else pipeline
    rows, failures = [], []
    for b in range(start, stop):
        p_idx = substream(config.seed, b, 0).integers(0, p_data.n, p_data.n)
        q_idx = substream(config.seed, b, 1).integers(0, q_data.n, q_data.n)
        try:
            rows.append(np.asarray(run(p_data.take(p_idx), q_data.take(q_idx)),
                                   dtype=float))
        except KeqError as exc:
            failures.append((b, str(exc)))
    return rows, failures


def bootstrap_see(p_data: Dataset, q_data: Dataset, pipeline,
                  config: BootstrapConfig | None = None,
                  threads: int = 1) -> BootstrapResult:
    """Bootstrap SEE at every source score point.

    Deterministic given (data, pipeline, config) for any ``threads``.
    Replicates whose pipeline fails are skipped; more than 5% failures
    is an error.
    """
    config = config or BootstrapConfig()
    if threads > 1:
        bounds = np.linspace(0, config.replicates, threads + 1, dtype=int)
        rows, failures = [], []
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [
                pool.submit(bootstrap_replicates, p_data, q_data, pipeline,
                            config, int(a), int(b))
                for a, b in zip(bounds, bounds[1:]) if a < b
            ]
            for fut in futures:
                chunk_rows, chunk_failures = fut.result()
                rows.extend(chunk_rows)
                failures.extend(chunk_failures)
    else:
        rows, failures = bootstrap_replicates(p_data, q_data, pipeline, config)
    if len(failures) > MAX_FAILURE_FRACTION * config.replicates:
        raise KeqError(
            f"{len(failures)} of {config.replicates} bootstrap replicates failed; "
            f"first: replicate {failures[0][0]}: {failures[0][1]}"
        )
    if len(rows) < 2:
        raise KeqError("fewer than 2 successful bootstrap replicates")
    matrix = np.vstack(rows)
    see = matrix.std(axis=0, ddof=1)
    # Identical replicate columns must yield exactly zero, not rounding fuzz.
    see[np.ptp(matrix, axis=0) == 0.0] = 0.0
    return BootstrapResult(see, matrix, len(failures), tuple(failures))
