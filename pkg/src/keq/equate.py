"""Equating pipelines.

``equate_gke`` runs the full kernel-equating pipeline (presmoothing,
target-population score probabilities, continuization, equating) for the
EG and NEC designs.  ``equate_sequential`` first equates a score-like
covariate between the populations, replaces the covariate by its equated
values, and then runs the main equating on the transformed data.
``equate_chain`` executes a multi-step plan of EG/NEC equatings onto a
single baseline form, composing the per-step maps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    Binned,
    CovariateSpace,
    Dataset,
    EquatingTable,
    JointProbabilityTable,
    KeqError,
    ScoreDistribution,
    ScoreScale,
    ValidationError,
    tabulate_counts,
)
from .continuize import ContinuizedCdf, continuize, inverse_cdf, kernel_cdf
from .presmooth import LoglinearSpec, presmooth_counts
from .probmix import eg_probs, nec_target_probs

__all__ = [
    "GkePipelineConfig",
    "EgInput",
    "NecInput",
    "EquatingMap",
    "ComposedMap",
    "PlanError",
    "ChainStep",
    "ChainPlan",
    "ChainResult",
    "equate_gke",
    "equate_covariate",
    "equate_sequential",
    "equate_chain",
    "apply_equating",
]

# Continuized CDF values are clipped into this open interval before
# inversion so that zero-probability scale ends cannot underflow out of
# the inverse CDF's domain.
_P_CLIP = 1e-12


class PlanError(KeqError):
    """A chain plan failed validation (cycle, missing dataset, bad reference)."""


@dataclass(frozen=True)
class GkePipelineConfig:
    """Knobs for one equating run.

    ``presmooth=None`` means pass-through (raw empirical tables).
    ``omega=None`` derives the mixture weight from relative sample sizes.
    Explicit bandwidths override the penalty-based selection.
    """

    presmooth: LoglinearSpec | None = field(default_factory=LoglinearSpec)
    kpen: float = 1.0
    omega: float | None = None
    bandwidth_x: float | None = None
    bandwidth_y: float | None = None
    presmooth_tol: float = 1e-8
    presmooth_max_iter: int = 100


@dataclass(frozen=True)
class EgInput:
    """Equivalent-groups design: two marginal score distributions."""

    x_dist: ScoreDistribution
    y_dist: ScoreDistribution
    x_counts: np.ndarray | None = None
    y_counts: np.ndarray | None = None

    @classmethod
    def from_datasets(cls, x_data: Dataset, y_data: Dataset) -> "EgInput":
        xc = np.bincount(x_data.scale.index_of(x_data.scores),
                         minlength=x_data.scale.n_points)
        yc = np.bincount(y_data.scale.index_of(y_data.scores),
                         minlength=y_data.scale.n_points)
        return cls(x_data.score_distribution(), y_data.score_distribution(), xc, yc)


@dataclass(frozen=True)
class NecInput:
    """Nonequivalent groups with covariates: joint tables plus mixture weight."""

    p: JointProbabilityTable
    q: JointProbabilityTable
    omega: float
    p_counts: np.ndarray | None = None
    q_counts: np.ndarray | None = None

    def __post_init__(self):
        if not 0.0 <= self.omega <= 1.0:
            raise ValidationError(f"omega {self.omega} outside [0, 1]")
        if self.p.covariates != self.q.covariates:
            raise ValidationError("populations do not share a covariate space")

    @classmethod
    def from_datasets(cls, p_data: Dataset, q_data: Dataset,
                      omega: float | None = None) -> "NecInput":
        if p_data.covariates != q_data.covariates:
            raise ValidationError("populations do not share a covariate space")
        pc = tabulate_counts(p_data)
        qc = tabulate_counts(q_data)
        if omega is None:
            omega = p_data.n / (p_data.n + q_data.n)
        p = JointProbabilityTable(p_data.scale, p_data.covariates, pc / p_data.n)
        q = JointProbabilityTable(q_data.scale, q_data.covariates, qc / q_data.n)
        return cls(p, q, omega, pc, qc)


@dataclass(frozen=True)
class EquatingMap:
    """Functional equating map x -> target-scale value.

    Inputs clamp to the source scale ends; the source CDF value is pushed
    through the inverse of the target CDF.
    """

    source_cdf: ContinuizedCdf
    target_cdf: ContinuizedCdf

    def __call__(self, value):
        scalar = np.ndim(value) == 0
        v = np.atleast_1d(np.asarray(value, dtype=float))
        scale = self.source_cdf.dist.scale
        v = np.clip(v, scale.min, scale.max)
        p = np.clip(kernel_cdf(self.source_cdf, v), _P_CLIP, 1.0 - _P_CLIP)
        out = np.array([inverse_cdf(self.target_cdf, pi) for pi in p])
        return float(out[0]) if scalar else out


@dataclass(frozen=True)
class ComposedMap:
    """Left-to-right composition of equating maps."""

    maps: tuple

    def __call__(self, value):
        out = value
        for m in self.maps:
            out = m(out)
        return out


def _evaluate_unique(mapping, values: np.ndarray) -> np.ndarray:
    """Apply a map to an array, evaluating each distinct value once."""
    uniq, inverse = np.unique(np.asarray(values, dtype=float), return_inverse=True)
    return np.asarray(mapping(uniq))[inverse]


def apply_equating(table_or_map, value):
    """Evaluate an equating at arbitrary (real) points.

    Functional maps evaluate exactly; serialized tables interpolate
    linearly between score points and clamp at the scale ends.
    """
    if isinstance(table_or_map, EquatingTable):
        pts = table_or_map.source_scale.points.astype(float)
        out = np.interp(value, pts, table_or_map.equated)
        return float(out) if np.ndim(value) == 0 else out
    return table_or_map(value)


def _presmooth_marginal(counts: np.ndarray, dist: ScoreDistribution,
                        config: GkePipelineConfig):
    no_cov = CovariateSpace(())
    fit = presmooth_counts(
        np.asarray(counts).reshape(-1, 1), dist.scale, no_cov, config.presmooth,
        tol=config.presmooth_tol, max_iter=config.presmooth_max_iter,
    )
    return fit.fitted_probs.score_marginal(), fit


def _fit_summary(fit) -> dict:
    return {
        "converged": fit.converged,
        "iterations": fit.iterations,
        "deviance": fit.deviance,
        **({"warning": fit.warning} if fit.warning else {}),
    }


def _target_probs(design_input, config: GkePipelineConfig):
    """Presmooth (when configured) and derive (r, s) plus diagnostics."""
    diag: dict = {}
    if isinstance(design_input, EgInput):
        x_dist, y_dist = design_input.x_dist, design_input.y_dist
        if config.presmooth is not None:
            if design_input.x_counts is None or design_input.y_counts is None:
                raise ValidationError(
                    "presmoothing requires counts; build the input from datasets "
                    "or configure pass-through"
                )
            x_dist, fx = _presmooth_marginal(design_input.x_counts, x_dist, config)
            y_dist, fy = _presmooth_marginal(design_input.y_counts, y_dist, config)
            diag["presmooth"] = {"x": _fit_summary(fx), "y": _fit_summary(fy)}
        r, s = eg_probs(x_dist, y_dist)
        return r, s, diag
    if isinstance(design_input, NecInput):
        p, q = design_input.p, design_input.q
        if config.presmooth is not None:
            if design_input.p_counts is None or design_input.q_counts is None:
                raise ValidationError(
                    "presmoothing requires counts; build the input from datasets "
                    "or configure pass-through"
                )
            fp = presmooth_counts(design_input.p_counts, p.scale, p.covariates,
                                  config.presmooth, tol=config.presmooth_tol,
                                  max_iter=config.presmooth_max_iter)
            fq = presmooth_counts(design_input.q_counts, q.scale, q.covariates,
                                  config.presmooth, tol=config.presmooth_tol,
                                  max_iter=config.presmooth_max_iter)
            p, q = fp.fitted_probs, fq.fitted_probs
            diag["presmooth"] = {"p": _fit_summary(fp), "q": _fit_summary(fq)}
        r, s = nec_target_probs(p, q, design_input.omega)
        diag["omega"] = design_input.omega
        return r, s, diag
    raise ValidationError(f"unsupported design input {type(design_input).__name__}")


def equate_gke(design_input, config: GkePipelineConfig | None = None,
               method: str | None = None) -> EquatingTable:
    """Kernel equating of the source form onto the target form's scale.

    Returns the equated value at every source score point; the exact
    functional map is attached as ``.mapping`` for evaluation at
    non-integer points and for chain composition.
    """
    config = config or GkePipelineConfig()
    r, s, diag = _target_probs(design_input, config)
    if r.variance <= 0:
        raise ValidationError("source distribution degenerate")
    if s.variance <= 0:
        raise ValidationError("target distribution degenerate")
    f = continuize(r, kpen=config.kpen, h=config.bandwidth_x)
    g = continuize(s, kpen=config.kpen, h=config.bandwidth_y)
    diag["h_x"] = f.h
    diag["h_y"] = g.h
    mapping = EquatingMap(f, g)
    equated = mapping(r.scale.points.astype(float))
    if method is None:
        method = "GKE" if isinstance(design_input, NecInput) else "EG"
    return EquatingTable(r.scale, equated, see=None, method=method,
                         diagnostics=diag, mapping=mapping)


# ---------------------------------------------------------------------------
# Sequential equating: covariate first, then the primary scores
# ---------------------------------------------------------------------------

def _covariate_subdataset(data: Dataset, covariate: str,
                          others: tuple[str, ...], scale) -> Dataset:
    sub_space = CovariateSpace(
        tuple(v for v in data.covariates.variables if v.name in others)
    )
    return Dataset(scale, sub_space, np.round(data.columns[covariate]).astype(int),
                   {name: data.columns[name] for name in others})


def equate_covariate(p_data: Dataset, q_data: Dataset, covariate: str,
                     other_covariates: tuple[str, ...] | None = None,
                     config: GkePipelineConfig | None = None):
    """Equate a score-like covariate from the second population onto the first.

    The covariate plays the score role in a nested equating run (NEC with
    the remaining covariates, or EG when there are none); the returned
    map sends second-population covariate values onto the first
    population's covariate scale.  The transformed dataset carries the
    real-valued equated covariate in place of the original column.

    The nested run's mixture weight is the complement of the main run's
    (the source role is played by the second population), which under the
    sample-size default is simply n_second / (n_first + n_second).
    """
    config = config or GkePipelineConfig()
    for data, label in ((p_data, "first"), (q_data, "second")):
        var = next((v for v in data.covariates.variables if v.name == covariate), None)
        if var is None:
            raise ValidationError(f"unknown covariate {covariate!r} in {label} dataset")
        if not isinstance(var, Binned):
            raise ValidationError(
                f"covariate {covariate!r} must be a binned (score-like) variable"
            )
        values = np.asarray(data.columns[covariate], dtype=float)
        if not np.all(values == np.round(values)):
            raise ValidationError(f"covariate {covariate!r} not integer-valued")
    if other_covariates is None:
        other_covariates = tuple(
            v.name for v in p_data.covariates.variables if v.name != covariate
        )

    lo = int(min(p_data.columns[covariate].min(), q_data.columns[covariate].min()))
    hi = int(max(p_data.columns[covariate].max(), q_data.columns[covariate].max()))
    cov_scale = ScoreScale(lo, hi)
    p_sub = _covariate_subdataset(p_data, covariate, other_covariates, cov_scale)
    q_sub = _covariate_subdataset(q_data, covariate, other_covariates, cov_scale)

    # Roles swap: the second population is the source of the covariate map.
    if other_covariates:
        omega_cov = (1.0 - config.omega) if config.omega is not None else None
        nested = NecInput.from_datasets(q_sub, p_sub, omega=omega_cov)
    else:
        nested = EgInput.from_datasets(q_sub, p_sub)
    table = equate_gke(nested, config)
    mapping = table.mapping
    transformed = _evaluate_unique(mapping, q_data.columns[covariate])
    return mapping, q_data.with_column(covariate, transformed)


def equate_sequential(p_data: Dataset, q_data: Dataset, covariate: str,
                      config: GkePipelineConfig | None = None,
                      covariate_map=None) -> EquatingTable:
    """Two-step equating: align the covariate, then equate the main scores.

    ``covariate_map`` overrides the nested covariate equating with an
    arbitrary callable (identity reproduces plain GKE on the same data).
    """
    config = config or GkePipelineConfig()
    if covariate_map is None:
        covariate_map, q_trans = equate_covariate(p_data, q_data, covariate,
                                                  config=config)
    else:
        q_trans = q_data.with_column(
            covariate, _evaluate_unique(covariate_map, q_data.columns[covariate])
        )
    shift = np.asarray(q_trans.columns[covariate], dtype=float) - np.asarray(
        q_data.columns[covariate], dtype=float
    )
    nec = NecInput.from_datasets(p_data, q_trans, omega=config.omega)
    table = equate_gke(nec, config, method="sequential GKE")
    table.diagnostics["covariate_equating"] = {
        "covariate": covariate,
        "mean_shift": float(shift.mean()),
        "mean_abs_shift": float(np.abs(shift).mean()),
    }
    return table


# ---------------------------------------------------------------------------
# Multi-step chains onto a baseline form
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChainStep:
    """One equating edge: source form onto target form's scale.

    ``equated_covariates`` maps a covariate column name to the step ids
    whose maps are composed (in order) and applied to that column of the
    source dataset before tabulation; ``target_equated_covariates`` does
    the same for the target dataset.
    """

    source: str
    target: str
    design: str = "eg"
    covariates: tuple[str, ...] = ()
    equated_covariates: dict = field(default_factory=dict)
    target_equated_covariates: dict = field(default_factory=dict)
    omega: float | None = None
    id: str | None = None

    def __post_init__(self):
        if self.design not in ("eg", "nec"):
            raise PlanError(f"unknown design {self.design!r} (expected eg or nec)")
        if self.design == "nec" and not self.covariates:
            raise PlanError(f"step {self.source}->{self.target}: nec needs covariates")
        object.__setattr__(self, "covariates", tuple(self.covariates))
        for attr in ("equated_covariates", "target_equated_covariates"):
            raw = getattr(self, attr)
            norm = {c: (ids,) if isinstance(ids, str) else tuple(ids)
                    for c, ids in raw.items()}
            object.__setattr__(self, attr, norm)
        if self.id is None:
            object.__setattr__(self, "id", f"{self.source}->{self.target}")


@dataclass(frozen=True)
class ChainPlan:
    baseline: str
    steps: tuple[ChainStep, ...]

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        ids = [s.id for s in self.steps]
        if len(set(ids)) != len(ids):
            raise PlanError("duplicate step ids")
        sources = [s.source for s in self.steps]
        if len(set(sources)) != len(sources):
            dup = next(s for s in sources if sources.count(s) > 1)
            raise PlanError(f"form {dup!r} is the source of more than one step")
        if self.baseline in sources:
            raise PlanError("baseline form cannot be equated away")
        # Paths must be acyclic; auxiliary sub-chains (e.g. steps that
        # only align a covariate's forms) may dead-end away from the
        # baseline and simply produce no composed table.
        nxt = {s.source: s.target for s in self.steps}
        for start in sources:
            seen = set()
            node = start
            while node != self.baseline and node in nxt:
                if node in seen:
                    raise PlanError(f"cycle in plan involving {node!r}")
                seen.add(node)
                node = nxt[node]

    def path_to_baseline(self, form: str) -> list[ChainStep]:
        by_source = {s.source: s for s in self.steps}
        path = []
        node = form
        while node != self.baseline and node in by_source:
            step = by_source[node]
            path.append(step)
            node = step.target
        return path


@dataclass(frozen=True)
class ChainResult:
    step_tables: dict
    composed_tables: dict
    composed_maps: dict


def _ordered_steps(plan: ChainPlan) -> list[ChainStep]:
    """Steps in an order where every referenced step runs first."""
    by_id = {s.id: s for s in plan.steps}
    refs = {}
    for s in plan.steps:
        deps = []
        for mapping in (s.equated_covariates, s.target_equated_covariates):
            for step_ids in mapping.values():
                deps.extend(step_ids)
        for d in deps:
            if d not in by_id:
                raise PlanError(f"step {s.id!r} references unknown step {d!r}")
            if d == s.id:
                raise PlanError(f"step {s.id!r} references itself")
        refs[s.id] = deps
    ordered, done, visiting = [], set(), set()

    def visit(step_id):
        if step_id in done:
            return
        if step_id in visiting:
            raise PlanError(f"cyclic step references involving {step_id!r}")
        visiting.add(step_id)
        for d in refs[step_id]:
            visit(d)
        visiting.discard(step_id)
        done.add(step_id)
        ordered.append(by_id[step_id])

    for s in plan.steps:
        visit(s.id)
    return ordered


def _subset_for_step(data: Dataset, step: ChainStep, replacements: dict) -> Dataset:
    for col, maps in replacements.items():
        values = np.asarray(data.columns[col], dtype=float)
        for m in maps:
            values = _evaluate_unique(m, values)
        data = data.with_column(col, values)
    keep = CovariateSpace(
        tuple(v for v in data.covariates.variables if v.name in step.covariates)
    )
    return Dataset(data.scale, keep, data.scores,
                   {n: data.columns[n] for n in keep.names})


def equate_chain(plan: ChainPlan, datasets: dict,
                 config: GkePipelineConfig | None = None) -> ChainResult:
    """Execute a chain plan: per-step tables plus composed maps onto baseline."""
    config = config or GkePipelineConfig()
    needed = {plan.baseline} | {s.source for s in plan.steps} | {s.target for s in plan.steps}
    missing = sorted(n for n in needed if n not in datasets)
    if missing:
        raise PlanError(f"missing datasets: {', '.join(missing)}")

    step_tables: dict = {}
    step_maps: dict = {}
    for step in _ordered_steps(plan):
        src_maps = {c: [step_maps[i] for i in ids]
                    for c, ids in step.equated_covariates.items()}
        tgt_maps = {c: [step_maps[i] for i in ids]
                    for c, ids in step.target_equated_covariates.items()}
        src = _subset_for_step(datasets[step.source], step, src_maps)
        tgt = _subset_for_step(datasets[step.target], step, tgt_maps)
        if step.design == "eg":
            table = equate_gke(EgInput.from_datasets(src, tgt), config, method="EG")
        else:
            nec = NecInput.from_datasets(src, tgt, omega=step.omega)
            table = equate_gke(nec, config, method="GKE")
        step_tables[step.id] = table
        step_maps[step.id] = table.mapping

    composed_tables: dict = {}
    composed_maps: dict = {}
    for step in plan.steps:
        path = plan.path_to_baseline(step.source)
        if not path or path[-1].target != plan.baseline:
            continue  # auxiliary sub-chain; no composition onto the baseline
        cmap = ComposedMap(tuple(step_maps[s.id] for s in path))
        scale = datasets[step.source].scale
        composed_maps[step.source] = cmap
        composed_tables[step.source] = EquatingTable(
            scale, cmap(scale.points.astype(float)), method="chain",
            diagnostics={"path": [s.id for s in path]}, mapping=cmap,
        )
    return ChainResult(step_tables, composed_tables, composed_maps)
