"""Deterministic numerics: generating functions, transition tables, moments.

Transition probabilities of the branching system are obtained by integrating
the truncated Kolmogorov forward system; the conditioned-process law is the
reweighting probs[j] = j * q**(j-i) / (i * beta**t) * P_ij(t).  The
population generating function follows the flow d(phi)/dt = f(phi), which
also yields a cancellation-free route to the 1 -> 1 transition probability
of the conditioned process at large times.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy import sparse
from scipy.integrate import quad, solve_ivp

from .errors import (
    NormalizationDrift,
    NotDefinedForCritical,
    OdeFailure,
    TruncationTooSevere,
)
from .models import (
    SINGULARITY_WINDOW,
    BranchingModel,
    harris_sevastyanov,
    kolmogorov_constant,
)

DEFAULT_ODE_TOL = 1e-10


@dataclass(frozen=True)
class TransitionTable:
    """Truncated transition probability vector at a fixed time.

    probs[j] approximates the probability of being in state j at time t
    when starting from ``base_state``; truncation_mass = 1 - sum(probs)
    accounts for paths that left the truncated window.
    """

    t: float
    base_state: int
    probs: np.ndarray
    truncation_mass: float

    @property
    def j(self) -> np.ndarray:
        return np.arange(self.probs.size)

    def mean(self) -> float:
        return float(np.sum(self.j * self.probs))

    def second_moment(self) -> float:
        return float(np.sum(self.j.astype(float) ** 2 * self.probs))


@dataclass(frozen=True)
class MomentPair:
    mean: float
    variance: float


def default_j_max(m: BranchingModel, t: float, i: int = 1) -> int:
    """Truncation bound sized to the conditioned-process mean growth."""
    return max(m.k_max, int(np.ceil(20.0 * (i + m.b * max(t, 0.0)))))


def _solve(fun, t_span, y0, t_eval=None, **kw):
    sol = solve_ivp(fun, t_span, y0, t_eval=t_eval, **kw)
    if not sol.success:
        raise OdeFailure(sol.message)
    return sol


def population_gf(m: BranchingModel, t: float, x: float,
                  ode_tol: float = DEFAULT_ODE_TOL) -> float:
    """Generating function of the population size at time t, start state 1.

    Solves d(phi)/ds = f(phi), phi(0) = x.  Monotone nondecreasing in x,
    with fixed points at x = q and x = 1.
    """
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1], got %r" % x)
    if t < 0.0:
        raise ValueError("t must be nonnegative, got %r" % t)
    if t == 0.0:
        return float(x)
    sol = _solve(
        lambda s, y: npoly.polyval(y, m.a),
        (0.0, t),
        [float(x)],
        method="DOP853",
        rtol=ode_tol,
        atol=min(ode_tol * 1e-3, 1e-13),
    )
    return float(min(max(sol.y[0, -1], 0.0), 1.0))


def _forward_generator(m: BranchingModel, n: int) -> sparse.csc_matrix:
    """Transpose of the truncated rate matrix, flows into states < n only."""
    a = m.a
    rows, cols, vals = [], [], []
    for i in range(1, n):
        rows.append(i)
        cols.append(i)
        vals.append(i * a[1])
        rows.append(i)
        cols.append(i - 1)
        vals.append(i * a[0])
        for k in range(2, m.k_max + 1):
            j = i + k - 1
            if j < n and a[k] != 0.0:
                rows.append(i)
                cols.append(j)
                vals.append(i * a[k])
    gen = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return sparse.csc_matrix(gen.T)


def transition_prob_tables(m: BranchingModel, times, J_max: int | None = None,
                           ode_tol: float = DEFAULT_ODE_TOL,
                           max_truncation: float | None = None):
    """Single-particle transition tables at several times from one solve.

    Integrates the truncated forward system dP/dt = P Q with an implicit
    stiff solver and the exact sparse Jacobian.  Entries are conditioned on
    the path never leaving the truncated window; the leaked probability is
    reported as truncation_mass.
    """
    times = [float(t) for t in times]
    if any(t < 0.0 for t in times):
        raise ValueError("times must be nonnegative")
    t_pos = sorted({t for t in times if t > 0.0})
    if J_max is None:
        J_max = default_j_max(m, max(times))
    if J_max < m.k_max:
        raise ValueError("J_max must be at least k_max=%d" % m.k_max)
    n = J_max + 1

    solved = {}
    if t_pos:
        gen_t = _forward_generator(m, n)
        p0 = np.zeros(n)
        p0[1] = 1.0
        sol = _solve(
            lambda s, y: gen_t @ y,
            (0.0, t_pos[-1]),
            p0,
            t_eval=t_pos,
            method="BDF",
            jac=gen_t,
            rtol=ode_tol,
            atol=1e-30,
        )
        for k, t in enumerate(t_pos):
            solved[t] = np.clip(sol.y[:, k], 0.0, 1.0)

    out = []
    for t in times:
        if t == 0.0:
            probs = np.zeros(n)
            probs[1] = 1.0
        else:
            probs = solved[t]
        trunc = float(1.0 - probs.sum())
        if max_truncation is not None and trunc > max_truncation:
            raise TruncationTooSevere(
                "truncation mass %g exceeds declared bound %g at t=%g "
                "(J_max=%d)" % (trunc, max_truncation, t, J_max)
            )
        out.append(TransitionTable(t, 1, probs, trunc))
    return out


def transition_probs(m: BranchingModel, t: float, J_max: int | None = None,
                     ode_tol: float = DEFAULT_ODE_TOL,
                     max_truncation: float | None = None) -> TransitionTable:
    """Single-particle transition table P_1j(t) for j = 0..J_max."""
    return transition_prob_tables(m, [t], J_max, ode_tol, max_truncation)[0]


def i_fold_transition_tables(m: BranchingModel, i: int, times,
                             J_max: int | None = None,
                             ode_tol: float = DEFAULT_ODE_TOL):
    """i-fold convolution tables at several times from one forward solve."""
    if i < 1:
        raise ValueError("base state must be >= 1, got %r" % i)
    if J_max is None:
        J_max = default_j_max(m, max(times), i)
    out = []
    for base in transition_prob_tables(m, times, J_max=J_max, ode_tol=ode_tol):
        probs = base.probs
        for _ in range(i - 1):
            probs = np.convolve(probs, base.probs)[: J_max + 1]
        out.append(TransitionTable(base.t, i, probs, float(1.0 - probs.sum())))
    return out


def i_fold_transition(m: BranchingModel, i: int, t: float,
                      J_max: int | None = None,
                      ode_tol: float = DEFAULT_ODE_TOL) -> TransitionTable:
    """Transition table from start state i: i-fold convolution of the base table."""
    return i_fold_transition_tables(m, i, [t], J_max=J_max, ode_tol=ode_tol)[0]


def qprocess_transition_tables(m: BranchingModel, i: int, times,
                               J_max: int | None = None,
                               ode_tol: float = DEFAULT_ODE_TOL,
                               drift_tol: float = 1e-6):
    """Conditioned-process tables at several times from one forward solve."""
    out = []
    for tab in i_fold_transition_tables(m, i, times, J_max=J_max, ode_tol=ode_tol):
        j = np.arange(tab.probs.size, dtype=float)
        with np.errstate(divide="ignore"):
            weight = j * m.q ** (j - i) / (i * np.exp(tab.t * m.ln_beta))
        probs = weight * tab.probs
        probs[0] = 0.0
        trunc = float(1.0 - probs.sum())
        if abs(trunc) > drift_tol:
            raise NormalizationDrift(
                "conditioned table sums to %.12g (drift %g > %g) at i=%d t=%g"
                % (probs.sum(), abs(trunc), drift_tol, i, tab.t)
            )
        out.append(TransitionTable(tab.t, i, probs, trunc))
    return out


def qprocess_transition_probs(m: BranchingModel, i: int, t: float,
                              J_max: int | None = None,
                              ode_tol: float = DEFAULT_ODE_TOL,
                              drift_tol: float = 1e-6) -> TransitionTable:
    """Transition table of the conditioned process from start state i.

    probs[j] = j * q**(j-i) / (i * beta**t) * P_ij(t); the j = 0 entry is
    identically zero.  Raises NormalizationDrift when the truncated sum
    strays from 1 beyond ``drift_tol``.
    """
    return qprocess_transition_tables(
        m, i, [t], J_max=J_max, ode_tol=ode_tol, drift_tol=drift_tol
    )[0]


def qprocess_gf(m: BranchingModel, i: int, t: float, x: float,
                ode_tol: float = DEFAULT_ODE_TOL) -> float:
    """Generating function of the conditioned process at time t, start i.

    Couples the population-gf flow started at q*x with the quadrature of
    the drift integrand along it, sharing one adaptive grid:

        value = x * (phi(t)/q)**(i-1) * exp(I(t)),
        phi' = f(phi),  I' = f'(phi) - f'(q).
    """
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1], got %r" % x)
    if t < 0.0:
        raise ValueError("t must be nonnegative, got %r" % t)
    if i < 1:
        raise ValueError("base state must be >= 1, got %r" % i)
    if t == 0.0 or x == 0.0:
        return float(x) ** i
    fpq = m.ln_beta

    def rhs(s, y):
        return [npoly.polyval(y[0], m.a), m.f_prime(y[0]) - fpq]

    sol = _solve(
        rhs,
        (0.0, t),
        [m.q * x, 0.0],
        method="DOP853",
        rtol=ode_tol,
        atol=min(ode_tol * 1e-3, 1e-13),
    )
    phi_t, integral = sol.y[0, -1], sol.y[1, -1]
    val = x * (phi_t / m.q) ** (i - 1) * np.exp(integral)
    return float(min(max(val, 0.0), 1.0))


def qprocess_p11(m: BranchingModel, times, ode_tol: float = 1e-12):
    """Return probability of the 1 -> 1 transition of the conditioned process.

    Evaluated as exp(int_0^t [f'(phi(s; 0)) - f'(q)] ds), the x -> 0 limit
    of qprocess_gf(t; x)/x.  The exponential form keeps full relative
    accuracy even when the probability itself is far below double-epsilon
    times the table norm, which the forward system cannot guarantee.
    Scalar in, float out; sequence in, array out (any order, repeats fine).
    """
    t_arr = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(t_arr < 0.0):
        raise ValueError("times must be nonnegative")
    uniq = np.unique(t_arr)
    fpq = m.ln_beta

    def rhs(s, y):
        return [npoly.polyval(y[0], m.a), m.f_prime(y[0]) - fpq]

    vals = np.ones_like(uniq)
    pos = uniq > 0.0
    if np.any(pos):
        sol = _solve(
            rhs,
            (0.0, uniq[pos][-1]),
            [0.0, 0.0],
            t_eval=uniq[pos],
            method="DOP853",
            rtol=ode_tol,
            atol=1e-14,
        )
        vals[pos] = np.exp(sol.y[1])
    result = vals[np.searchsorted(uniq, t_arr)]
    if np.isscalar(times) or np.ndim(times) == 0:
        return float(result[0])
    return result


def qprocess_p11_limit(m: BranchingModel, quad_tol: float = 1e-12) -> float:
    """Long-time constant of the 1 -> 1 transition probability.

    2/(b*a_0) for the critical case (where t**2 * p11(t) converges), and
    |ln beta| * A / a_0 with the Kolmogorov constant A otherwise.
    """
    if m.is_critical:
        return float(2.0 / (m.b * m.a[0]))
    return float(abs(m.ln_beta) * kolmogorov_constant(m, quad_tol) / m.a[0])


def qprocess_mean(m: BranchingModel, i: int, t: float) -> float:
    """Closed-form mean of the conditioned process at time t from state i."""
    if i < 1:
        raise ValueError("base state must be >= 1, got %r" % i)
    if t < 0.0:
        raise ValueError("t must be nonnegative, got %r" % t)
    bt = np.exp(t * m.ln_beta)
    if m.is_critical:
        return float((i - 1) * bt + m.b * t + 1.0)
    return float((i - 1) * bt + 1.0 + m.gamma * (1.0 - bt))


def qprocess_variance(m: BranchingModel, i: int, t: float) -> float:
    """Closed-form variance of the conditioned process at time t from state i.

    Obtained by differentiating the product form of the generating function
    twice at x = 1: the process from state i is the immortal line plus i-1
    independent ordinary (transformed) branching populations, so the
    variance is the immortal-line variance plus (i-1) population variances.
    Verified against reweighted transition tables and simulation.
    """
    if i < 1:
        raise ValueError("base state must be >= 1, got %r" % i)
    if t < 0.0:
        raise ValueError("t must be nonnegative, got %r" % t)
    f3q = float(npoly.polyval(m.q, npoly.polyder(m.a, 3)))
    if m.is_critical:
        return float(m.b * t * i + f3q * t + (m.b * t) ** 2 / 2.0)
    w = np.exp(t * m.ln_beta)
    v = 1.0 - w
    spine = (
        m.gamma * v
        + m.q**2 * f3q * (w * w - 1.0) / (2.0 * m.ln_beta)
        + m.gamma**2 * v * v / 2.0
    )
    return float(spine + (i - 1) * (1.0 + m.gamma) * w * v)


def qprocess_moments(m: BranchingModel, i: int, t: float) -> MomentPair:
    return MomentPair(qprocess_mean(m, i, t), qprocess_variance(m, i, t))


def stationary_gf_factor(m: BranchingModel, x: float,
                         quad_tol: float = 1e-10) -> float:
    """Long-run factor of the conditioned-process generating function.

    For beta < 1 the generating function started at 1 converges to
    x * factor(x); factor(x) = exp(int_x^1 [g'(s) - g'(1)]/g(s) ds) with g
    the transformed (subcritical) generating polynomial.  Near x = 1,
    factor(x) ~ 1 - gamma*(1 - x).
    """
    if m.is_critical:
        raise NotDefinedForCritical("factor requires beta < 1")
    if not 0.0 < x <= 1.0:
        raise ValueError("x must lie in (0, 1], got %r" % x)
    if x == 1.0:
        return 1.0
    sub = harris_sevastyanov(m)
    da = npoly.polyder(sub.a)
    lnb = m.ln_beta
    d2 = sub.f_double_prime(1.0)
    d3 = npoly.polyval(1.0, npoly.polyder(sub.a, 3))
    lim = d2 / lnb  # = -gamma
    slope = d3 / (2.0 * lnb) - d2 * d2 / (2.0 * lnb * lnb)

    def integrand(s):
        if abs(s - 1.0) < SINGULARITY_WINDOW:
            return lim + slope * (s - 1.0)
        return (npoly.polyval(s, da) - lnb) / npoly.polyval(s, sub.a)

    val, _ = quad(
        integrand,
        x,
        1.0,
        epsabs=quad_tol,
        epsrel=quad_tol,
        limit=200,
        points=(1.0 - SINGULARITY_WINDOW,) if x < 1.0 - SINGULARITY_WINDOW else None,
    )
    return float(np.exp(val))
