"""Exact event-driven simulation of the branching system and its
conditioned (never-extinct) counterpart.

Reproducibility contract: replicate r of a run with master seed s draws all
of its randomness from PCG64 seeded with SeedSequence(s, spawn_key=(r,)),
consumed in a fixed order (one exponential then one uniform per event, in
geometrically growing blocks).  Results are therefore bit-identical
regardless of replicate execution order or worker count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import StateOverflow, TimeOutOfRange
from .models import BranchingModel

DEFAULT_STATE_CAP = 10**6

# randomness is pre-drawn in blocks; the first block is small because short
# horizons dominate some studies, later blocks double up to a cap
_FIRST_BLOCK = 32
_MAX_BLOCK = 4096


def replicate_stream(master_seed, replicate_index: int) -> np.random.Generator:
    """The documented stream-splitting function for parallel replicates.

    Stream r is PCG64 seeded with SeedSequence(master_seed, spawn_key=(r,)).
    ``master_seed`` may be an int or a SeedSequence (whose spawn key is
    extended), so nested derivations stay collision-free.
    """
    idx = int(replicate_index)
    if isinstance(master_seed, np.random.SeedSequence):
        ss = np.random.SeedSequence(
            entropy=master_seed.entropy,
            spawn_key=tuple(master_seed.spawn_key) + (idx,),
        )
    else:
        ss = np.random.SeedSequence(int(master_seed), spawn_key=(idx,))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class Trajectory:
    """Piecewise-constant sample path, right-continuous.

    ``states[k]`` is the state immediately after the jump at
    ``jump_times[k]``.  When ``overflowed`` is set, the path is truncated:
    ``horizon`` is the time of the jump that would have exceeded the state
    cap, and the path is only known strictly before it.
    """

    initial_state: int
    jump_times: np.ndarray
    states: np.ndarray
    horizon: float
    overflowed: bool = False


def state_at(traj: Trajectory, times) -> np.ndarray:
    """Evaluate the path at the given times (right-continuous convention).

    At a jump time the post-jump state is returned.  Times outside
    [0, horizon] raise TimeOutOfRange; on an overflowed trajectory the
    state at or beyond the truncation time is unknown and raises
    StateOverflow.
    """
    ts = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(ts < 0.0) or np.any(ts > traj.horizon):
        raise TimeOutOfRange(
            "times must lie within [0, %g]" % traj.horizon
        )
    if traj.overflowed and np.any(ts >= traj.horizon):
        raise StateOverflow(
            "trajectory truncated at t=%g by the state cap" % traj.horizon
        )
    idx = np.searchsorted(traj.jump_times, ts, side="right")
    full = np.concatenate([[traj.initial_state], traj.states])
    out = full[idx]
    if np.isscalar(times) or np.ndim(times) == 0:
        return int(out[0])
    return out


class QProcessRates:
    """State-dependent jump rates of the conditioned process.

    From state i: rate (i-1)*a_0/q down to i-1 (zero at i = 1, so state 0
    is unreachable) and rate (i+m)*q**m*a_{m+1} up to i+m for each m >= 1
    with a_{m+1} > 0.  The total exit rate equals i*(-a_1) + ln(beta);
    matching the short-time expansion of the conditioned transition law is
    checked by the distributional test suite rather than assumed.
    """

    __slots__ = ("down_coef", "up_offsets", "up_coefs", "lam", "ln_beta")

    def __init__(self, m: BranchingModel):
        self.down_coef = float(m.a[0] / m.q)
        offsets, coefs = [], []
        for k in range(2, m.k_max + 1):
            if m.a[k] > 0.0:
                offsets.append(k - 1)
                coefs.append(float(m.q ** (k - 1) * m.a[k]))
        self.up_offsets = tuple(offsets)
        self.up_coefs = tuple(coefs)
        self.lam = float(-m.a[1])
        self.ln_beta = float(m.ln_beta)

    def jump_rates(self, i: int):
        """(offsets, rates) out of state i; offsets are state increments."""
        if i < 1:
            raise ValueError("conditioned process states start at 1")
        offs = (-1,) + self.up_offsets
        rates = ((i - 1) * self.down_coef,) + tuple(
            (i + mm) * c for mm, c in zip(self.up_offsets, self.up_coefs)
        )
        return offs, rates

    def total_rate(self, i: int) -> float:
        return float(sum(self.jump_rates(i)[1]))


def _mbs_jump_table(m: BranchingModel):
    """Per-particle jump offsets and cumulative rate thresholds (state-free)."""
    offs = [-1]
    cums = [float(m.a[0])]
    acc = float(m.a[0])
    for k in range(2, m.k_max + 1):
        if m.a[k] > 0.0:
            offs.append(k - 1)
            acc += float(m.a[k])
            cums.append(acc)
    return tuple(offs), tuple(cums), acc  # acc == -a_1 up to rounding


def _mbs_path(m, i0, horizon, rng, cap, sample_times=None, out=None):
    """One exact branching-system path; returns (times, states, overflowed).

    With ``sample_times`` given, fills ``out`` with the state at each time
    instead of recording jumps.
    """
    offs, cums, lam = _mbs_jump_table(m)
    n_kinds = len(offs)
    sampling = sample_times is not None
    si = 0
    n_s = len(sample_times) if sampling else 0
    times, states = [], []
    i = int(i0)
    t = 0.0
    exps = rng.standard_exponential(_FIRST_BLOCK).tolist()
    unifs = rng.random(_FIRST_BLOCK).tolist()
    ne = nu = 0
    overflowed = False
    while True:
        if i == 0:
            break
        if ne == len(exps):
            exps = rng.standard_exponential(min(2 * len(exps), _MAX_BLOCK)).tolist()
            ne = 0
        tn = t + exps[ne] / (i * lam)
        ne += 1
        if sampling:
            while si < n_s and sample_times[si] < tn:
                out[si] = i
                si += 1
            if si >= n_s:
                return times, states, overflowed, t
        if tn > horizon:
            break
        if nu == len(unifs):
            unifs = rng.random(min(2 * len(unifs), _MAX_BLOCK)).tolist()
            nu = 0
        u = unifs[nu] * lam
        nu += 1
        kind = 0
        while kind < n_kinds - 1 and u >= cums[kind]:
            kind += 1
        i_new = i + offs[kind]
        if i_new > cap:
            overflowed = True
            t = tn
            break
        t = tn
        i = i_new
        times.append(t)
        states.append(i)
    if sampling:
        if overflowed:
            raise StateOverflow(
                "state cap %d exceeded at t=%g before all sample times" % (cap, t)
            )
        while si < n_s:  # absorbed at 0 for the rest of the horizon
            out[si] = i
            si += 1
    return times, states, overflowed, t


def _qprocess_path(m, i0, horizon, rng, cap, sample_times=None, out=None):
    """One exact conditioned-process path; same contract as _mbs_path."""
    r = QProcessRates(m)
    c_down = r.down_coef
    ups = tuple(zip(r.up_offsets, r.up_coefs))
    sampling = sample_times is not None
    si = 0
    n_s = len(sample_times) if sampling else 0
    times, states = [], []
    i = int(i0)
    t = 0.0
    exps = rng.standard_exponential(_FIRST_BLOCK).tolist()
    unifs = rng.random(_FIRST_BLOCK).tolist()
    ne = nu = 0
    overflowed = False
    while True:
        down = (i - 1) * c_down
        total = down
        for mm, c in ups:
            total += (i + mm) * c
        if ne == len(exps):
            exps = rng.standard_exponential(min(2 * len(exps), _MAX_BLOCK)).tolist()
            ne = 0
        tn = t + exps[ne] / total
        ne += 1
        if sampling:
            while si < n_s and sample_times[si] < tn:
                out[si] = i
                si += 1
            if si >= n_s:
                return times, states, overflowed, t
        if tn > horizon:
            break
        if nu == len(unifs):
            unifs = rng.random(min(2 * len(unifs), _MAX_BLOCK)).tolist()
            nu = 0
        u = unifs[nu] * total
        nu += 1
        if u < down:
            i_new = i - 1
        else:
            acc = down
            i_new = i
            for mm, c in ups:
                acc += (i + mm) * c
                if u < acc:
                    i_new = i + mm
                    break
            else:
                i_new = i + ups[-1][0]  # guard against rounding at the top edge
        if i_new > cap:
            overflowed = True
            t = tn
            break
        t = tn
        i = i_new
        times.append(t)
        states.append(i)
    if sampling and overflowed:
        raise StateOverflow(
            "state cap %d exceeded at t=%g before all sample times" % (cap, t)
        )
    return times, states, overflowed, t


def _as_trajectory(i0, horizon, times, states, overflowed, t_end):
    return Trajectory(
        initial_state=int(i0),
        jump_times=np.asarray(times, dtype=float),
        states=np.asarray(states, dtype=np.int64),
        horizon=float(t_end) if overflowed else float(horizon),
        overflowed=overflowed,
    )


def simulate_mbs(m: BranchingModel, i0: int, horizon: float,
                 stream: np.random.Generator,
                 cap: int = DEFAULT_STATE_CAP) -> Trajectory:
    """Exact path of the branching system: from state i, exponential holding
    time with rate i*(-a_1), then one particle dies (prob a_0/(-a_1)) or
    branches into k (prob a_k/(-a_1)); absorbing at 0."""
    if i0 < 1:
        raise ValueError("initial state must be >= 1")
    if horizon <= 0.0:
        raise ValueError("horizon must be positive")
    times, states, over, t_end = _mbs_path(m, i0, horizon, stream, cap)
    return _as_trajectory(i0, horizon, times, states, over, t_end)


def simulate_qprocess(m: BranchingModel, i0: int, horizon: float,
                      stream: np.random.Generator,
                      cap: int = DEFAULT_STATE_CAP) -> Trajectory:
    """Exact path of the conditioned process; never visits state 0."""
    if i0 < 1:
        raise ValueError("initial state must be >= 1")
    if horizon <= 0.0:
        raise ValueError("horizon must be positive")
    times, states, over, t_end = _qprocess_path(m, i0, horizon, stream, cap)
    return _as_trajectory(i0, horizon, times, states, over, t_end)


def sample_states(m: BranchingModel, process: str, i0: int, sample_times,
                  n_reps: int, master_seed,
                  cap: int = DEFAULT_STATE_CAP) -> np.ndarray:
    """States of n_reps independent replicates at the given sorted times.

    Returns an (n_reps, len(sample_times)) int array.  Replicate r uses
    :func:`replicate_stream`(master_seed, r); nothing else about the run
    affects its draws, so any execution order gives identical output.
    """
    ts = [float(t) for t in sample_times]
    if sorted(ts) != ts or (ts and ts[0] < 0.0):
        raise ValueError("sample times must be sorted and nonnegative")
    if n_reps < 1:
        raise ValueError("n_reps must be positive")
    driver = {"mbs": _mbs_path, "qprocess": _qprocess_path}.get(process)
    if driver is None:
        raise ValueError("process must be 'mbs' or 'qprocess', got %r" % process)
    horizon = ts[-1] if ts else 0.0
    res = np.empty((n_reps, len(ts)), dtype=np.int64)
    for rep in range(n_reps):
        rng = replicate_stream(master_seed, rep)
        driver(m, i0, horizon, rng, cap, sample_times=ts, out=res[rep])
    return res
