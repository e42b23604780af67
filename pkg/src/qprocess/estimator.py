"""Ratio estimator of the structural parameter and its variance study.

The Lotka-Nagaev-type estimate (W(t+1) - E_1 W(1)) / (W(t) - 1) is unbiased
for beta; replicates observed at W(t) = 1 leave it undefined (zero
denominator) and are excluded and counted.  Two independent routes to its
variance are provided: the exact reweighted series over the conditioned
transition law, and the Monte Carlo sample variance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import AllExcluded, TruncationTooSevere, UndefinedAtOne
from .gf import (
    DEFAULT_ODE_TOL,
    qprocess_mean,
    qprocess_p11,
    qprocess_transition_tables,
)
from .models import BranchingModel
from .simulate import DEFAULT_STATE_CAP, sample_states

MIN_REPLICATES = 1000


@dataclass(frozen=True)
class EstimatorReport:
    """Monte Carlo summary of the ratio estimator at a single time.

    All statistics are computed over the used (non-excluded) replicates.
    The ``*_with_excluded_as_limit`` fields additionally count each
    excluded replicate as contributing the algebraic limit value beta of
    the estimator's 0/0 form; both readings are reported, no intent is
    guessed.  The limit-convention variance is the empirical counterpart
    of the exact series (which sums over start states >= 2 only), while
    ``sample_variance`` is conditional on the replicate being usable.
    ``theorem_normalization`` is (t/2) * sample_variance when beta = 1 and
    the raw sample variance otherwise.
    """

    t: float
    n_total: int
    n_excluded: int
    mean_estimate: float
    sample_variance: float
    se_mean: float
    var_se_jackknife: float
    mean_with_excluded_as_limit: float
    variance_with_excluded_as_limit: float
    var_limit_se_jackknife: float
    expected_exclusion_prob: float
    theorem_normalization: float
    exact_series_variance: float | None = None

    @property
    def n_used(self) -> int:
        return self.n_total - self.n_excluded

    @property
    def exclusion_fraction(self) -> float:
        return self.n_excluded / self.n_total

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "n_total": self.n_total,
            "n_excluded": self.n_excluded,
            "n_used": self.n_used,
            "exclusion_fraction": self.exclusion_fraction,
            "mean_estimate": self.mean_estimate,
            "sample_variance": self.sample_variance,
            "se_mean": self.se_mean,
            "var_se_jackknife": self.var_se_jackknife,
            "mean_with_excluded_as_limit": self.mean_with_excluded_as_limit,
            "variance_with_excluded_as_limit": self.variance_with_excluded_as_limit,
            "var_limit_se_jackknife": self.var_limit_se_jackknife,
            "expected_exclusion_prob": self.expected_exclusion_prob,
            "theorem_normalization": self.theorem_normalization,
            "exact_series_variance": self.exact_series_variance,
        }


@dataclass(frozen=True)
class VarianceSeries:
    """Exact-series variance of the estimator with truncation accounting."""

    t: float
    value: float
    remainder_bound: float
    n_terms: int
    truncation_mass: float


@dataclass(frozen=True)
class ConvergenceRow:
    t: float
    normalized_variance: float
    stderr: float
    method: str


def lotka_nagaev_estimate(w_t: int, w_t1: int, m: BranchingModel) -> float:
    """(W(t+1) - E_1 W(1)) / (W(t) - 1); undefined when W(t) = 1."""
    if w_t < 1 or w_t1 < 1:
        raise ValueError("conditioned-process states are >= 1")
    if w_t == 1:
        raise UndefinedAtOne("estimator denominator W(t) - 1 vanishes")
    return (w_t1 - qprocess_mean(m, 1, 1.0)) / (w_t - 1.0)


def _step_variances(m: BranchingModel, i_arr: np.ndarray) -> np.ndarray:
    """Closed-form one-step variances of the conditioned process, vectorized.

    Same closed form as :func:`qprocess_variance` at t = 1; linear in the
    start state, which the series remainder bound relies on.
    """
    from numpy.polynomial import polynomial as npoly

    i_arr = np.asarray(i_arr, dtype=float)
    f3q = float(npoly.polyval(m.q, npoly.polyder(m.a, 3)))
    if m.is_critical:
        return m.b * i_arr + f3q + m.b**2 / 2.0
    w = m.beta
    v = 1.0 - w
    spine = (
        m.gamma * v
        + m.q**2 * f3q * (w * w - 1.0) / (2.0 * m.ln_beta)
        + m.gamma**2 * v * v / 2.0
    )
    return spine + (i_arr - 1.0) * (1.0 + m.gamma) * w * v


def _jackknife_se_of_variance(x: np.ndarray) -> float:
    """Leave-one-out jackknife standard error of the sample variance."""
    n = x.size
    if n < 3:
        return float("nan")
    xc = x - x.mean()
    s1 = xc.sum()
    s2 = np.dot(xc, xc)
    loo_mean = (s1 - xc) / (n - 1)
    loo_ss = s2 - xc**2 - (n - 1) * loo_mean**2
    s2_i = loo_ss / (n - 2)
    return float(math.sqrt((n - 1) / n * np.sum((s2_i - s2_i.mean()) ** 2)))


def collect_estimates(m: BranchingModel, i0: int, t: float, n_reps: int,
                      master_seed, cap: int = DEFAULT_STATE_CAP):
    """Per-replicate estimates over n_reps conditioned paths.

    Simulates to horizon t+1 and evaluates the estimator on each replicate
    with W(t) >= 2.  Returns (estimates, n_excluded) in replicate order.
    """
    if t <= 1.0:
        raise ValueError("t must exceed 1, got %r" % t)
    if n_reps < MIN_REPLICATES:
        raise ValueError(
            "n_reps must be at least %d, got %d" % (MIN_REPLICATES, n_reps)
        )
    states = sample_states(m, "qprocess", i0, [t, t + 1.0], n_reps, master_seed, cap)
    w_t = states[:, 0].astype(float)
    w_t1 = states[:, 1].astype(float)
    used = w_t >= 2.0
    n_excluded = int(n_reps - used.sum())
    if n_excluded == n_reps:
        raise AllExcluded("every replicate had W(t) = 1")
    step_mean = qprocess_mean(m, 1, 1.0)
    return (w_t1[used] - step_mean) / (w_t[used] - 1.0), n_excluded


def report_from_estimates(m: BranchingModel, t: float, n_reps: int,
                          est: np.ndarray, n_excluded: int) -> EstimatorReport:
    """Aggregate per-replicate estimates into a deterministic report."""
    n_used = est.size
    mean = float(est.mean())
    var = float(est.var(ddof=1)) if n_used > 1 else 0.0
    se_mean = math.sqrt(var / n_used) if n_used > 1 else float("nan")
    mean_limit = (est.sum() + n_excluded * m.beta) / n_reps
    ext = np.concatenate([est, np.full(n_excluded, m.beta)])
    var_limit = float(ext.var(ddof=1))
    norm = (t / 2.0) * var if m.is_critical else var
    return EstimatorReport(
        t=float(t),
        n_total=int(n_reps),
        n_excluded=n_excluded,
        mean_estimate=mean,
        sample_variance=var,
        se_mean=se_mean,
        var_se_jackknife=_jackknife_se_of_variance(est),
        mean_with_excluded_as_limit=float(mean_limit),
        variance_with_excluded_as_limit=var_limit,
        var_limit_se_jackknife=_jackknife_se_of_variance(ext),
        expected_exclusion_prob=float(qprocess_p11(m, t)),
        theorem_normalization=float(norm),
    )


def mc_study(m: BranchingModel, i0: int, t: float, n_reps: int, master_seed,
             cap: int = DEFAULT_STATE_CAP) -> EstimatorReport:
    """Monte Carlo study of the estimator over n_reps conditioned paths.

    Aggregation uses order-independent reductions, so the report depends
    only on (model, i0, t, n_reps, master_seed).
    """
    est, n_excluded = collect_estimates(m, i0, t, n_reps, master_seed, cap)
    return report_from_estimates(m, t, n_reps, est, n_excluded)


def with_series_variance(report: EstimatorReport,
                         series: VarianceSeries) -> EstimatorReport:
    return replace(report, exact_series_variance=series.value)


def _series_from_table(m: BranchingModel, tab) -> VarianceSeries:
    k = np.arange(1, tab.probs.size - 1, dtype=float)
    terms = tab.probs[2:] / k**2 * _step_variances(m, k + 1.0)
    trunc = max(tab.truncation_mass, 0.0)
    k_next = k[-1] + 1.0
    remainder = trunc * float(_step_variances(m, np.array([k_next + 1.0]))[0]) / k_next**2
    return VarianceSeries(
        t=tab.t,
        value=float(terms.sum()),
        remainder_bound=float(remainder),
        n_terms=int(k.size),
        truncation_mass=tab.truncation_mass,
    )


def exact_variance_series(m: BranchingModel, t: float,
                          J_max: int | None = None,
                          ode_tol: float = DEFAULT_ODE_TOL,
                          trunc_bound: float = 1e-8) -> VarianceSeries:
    """Exact estimator variance: the reweighted series over the conditioned
    transition law at time t, with one-step variances in closed form.

    The remainder beyond the truncated table is bounded by
    truncation_mass * sup_{k > K} Var_{k+1}(one step)/k**2 (the supremum
    sits at k = K+1 since the ratio decreases in k).
    """
    if t <= 1.0:
        raise ValueError("t must exceed 1, got %r" % t)
    # the series applies its own, stricter truncation bound below
    tab = qprocess_transition_tables(
        m, 1, [t], J_max=J_max, ode_tol=ode_tol, drift_tol=float("inf")
    )[0]
    if max(tab.truncation_mass, 0.0) > trunc_bound:
        raise TruncationTooSevere(
            "conditioned-table truncation mass %g exceeds %g; increase J_max"
            % (tab.truncation_mass, trunc_bound)
        )
    return _series_from_table(m, tab)


def theorem_convergence_table(m: BranchingModel, t_grid, method: str = "series",
                              n_reps: int | None = None, master_seed=None,
                              i0: int = 1, J_max: int | None = None,
                              ode_tol: float = DEFAULT_ODE_TOL,
                              cap: int = DEFAULT_STATE_CAP) -> list[ConvergenceRow]:
    """Normalized estimator variance along a time grid.

    Emits (t/2) * Var for beta = 1 and the raw variance for beta < 1, by
    either the exact series (stderr = normalized remainder bound) or Monte
    Carlo (stderr = normalized jackknife error).  Monte Carlo rows for grid
    entry k draw from sub-seed (master_seed, spawn_key=(10000 + k,)).
    """
    ts = [float(t) for t in t_grid]
    if not ts:
        raise ValueError("t_grid must not be empty")
    if any(t <= 1.0 for t in ts):
        raise ValueError("all t_grid entries must exceed 1")
    scale = (lambda t: t / 2.0) if m.is_critical else (lambda t: 1.0)
    rows = []
    if method == "series":
        tabs = qprocess_transition_tables(m, 1, ts, J_max=J_max, ode_tol=ode_tol)
        for tab in tabs:
            s = _series_from_table(m, tab)
            rows.append(
                ConvergenceRow(
                    t=s.t,
                    normalized_variance=scale(s.t) * s.value,
                    stderr=scale(s.t) * s.remainder_bound,
                    method="series",
                )
            )
    elif method == "monte_carlo":
        if n_reps is None or master_seed is None:
            raise ValueError("monte_carlo method needs n_reps and master_seed")
        for k, t in enumerate(ts):
            sub_seed = np.random.SeedSequence(
                int(master_seed), spawn_key=(10000 + k,)
            )
            rep = mc_study(m, i0, t, n_reps, sub_seed, cap=cap)
            # limit-convention variance: the like-for-like counterpart of
            # the series rows, which also assign excluded starts zero spread
            rows.append(
                ConvergenceRow(
                    t=t,
                    normalized_variance=scale(t) * rep.variance_with_excluded_as_limit,
                    stderr=scale(t) * rep.var_limit_se_jackknife,
                    method="monte_carlo",
                )
            )
    else:
        raise ValueError("method must be 'series' or 'monte_carlo', got %r" % method)
    return rows
