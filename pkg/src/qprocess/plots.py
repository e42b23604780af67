"""Figure rendering for the report-producing commands.

Every figure-writing command also writes the underlying numbers as CSV;
the figures are a convenience view, saved as PNG next to the data.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_RC = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_p11_convergence(ts, values, limit, critical: bool, path) -> None:
    """Scaled 1->1 transition probability against its long-time constant."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        label = "t^2 * p11(t)" if critical else "p11(t)"
        ax.plot(ts, values, "o-", label=label)
        ax.axhline(limit, color="crimson", ls="--", label="limit %.6g" % limit)
        ax.set_xlabel("t")
        ax.set_ylabel(label)
        ax.legend()
        _save(fig, path)


def plot_variance_normalization(rows, critical: bool, path) -> None:
    """Normalized estimator variance rows (series and/or Monte Carlo)."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        by_method: dict[str, list] = {}
        for r in rows:
            by_method.setdefault(r.method, []).append(r)
        for method, rr in sorted(by_method.items()):
            ts = [r.t for r in rr]
            vs = [r.normalized_variance for r in rr]
            es = [r.stderr for r in rr]
            ax.errorbar(ts, vs, yerr=es, fmt="o-", capsize=3, label=method)
        if critical:
            ax.axhline(1.0, color="crimson", ls="--", label="limit 1")
        ax.set_xlabel("t")
        ax.set_ylabel("(t/2) * variance" if critical else "variance")
        ax.legend()
        _save(fig, path)


def plot_estimate_histogram(estimates, beta, mean_estimate, path) -> None:
    """Distribution of per-replicate estimates with the target value marked."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        ax.hist(np.asarray(estimates), bins=80, density=True, alpha=0.75)
        ax.axvline(beta, color="crimson", ls="--", label="beta = %.6g" % beta)
        ax.axvline(mean_estimate, color="k", ls=":", label="mean estimate")
        ax.set_xlabel("estimate")
        ax.set_ylabel("density")
        ax.legend()
        _save(fig, path)


def plot_trajectories(trajs, horizon, path) -> None:
    """Step plot of a handful of sample paths."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        for k, tr in enumerate(trajs):
            ts = np.concatenate([[0.0], tr.jump_times, [tr.horizon]])
            ss = np.concatenate([[tr.initial_state], tr.states,
                                 [tr.states[-1] if tr.states.size else tr.initial_state]])
            ax.step(ts, ss, where="post", alpha=0.8, lw=1.2,
                    label="replicate %d" % k if len(trajs) <= 8 else None)
        ax.set_xlabel("time")
        ax.set_ylabel("state")
        ax.set_xlim(0.0, horizon)
        if len(trajs) <= 8:
            ax.legend()
        _save(fig, path)
