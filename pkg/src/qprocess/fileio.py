"""Text formats: model files, experiment configs, CSV/JSON outputs.

Model files hold one ``a<k> = value`` line per intensity index plus an
optional ``tol`` line; experiment configs are flat ``key = value`` text.
Both accept ``#`` comments and blank lines.  All writers emit fully
reproducible bytes (no timestamps, repr-precision floats).
"""

from __future__ import annotations

import hashlib
import json
import re
from pathlib import Path

import numpy as np

from .errors import InvalidIntensities
from .models import BranchingModel, IntensityVector, build_model

_MODEL_KEY = re.compile(r"^a_?(\d+)$")


class ModelFileError(ValueError):
    """Malformed model or config file; message carries the line number."""


def _iter_kv_lines(text: str, path: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ModelFileError(
                "%s, line %d: expected 'key = value', got %r" % (path, lineno, raw)
            )
        key, val = (part.strip() for part in line.split("=", 1))
        yield lineno, key, val


def parse_model_text(text: str, path: str = "<string>") -> tuple[list[float], float]:
    """Parse model text into (intensity list, balance tolerance)."""
    entries: dict[int, tuple[float, int]] = {}
    tol = 1e-9
    for lineno, key, val in _iter_kv_lines(text, path):
        mk = _MODEL_KEY.match(key)
        if mk:
            k = int(mk.group(1))
            if k in entries:
                raise ModelFileError(
                    "%s, line %d: duplicate intensity a%d (first on line %d)"
                    % (path, lineno, k, entries[k][1])
                )
            try:
                entries[k] = (float(val), lineno)
            except ValueError:
                raise ModelFileError(
                    "%s, line %d: cannot parse %r as a number" % (path, lineno, val)
                ) from None
        elif key == "tol":
            try:
                tol = float(val)
            except ValueError:
                raise ModelFileError(
                    "%s, line %d: cannot parse %r as a number" % (path, lineno, val)
                ) from None
        else:
            raise ModelFileError(
                "%s, line %d: unknown key %r (expected a<k> or tol)"
                % (path, lineno, key)
            )
    if not entries:
        raise ModelFileError("%s: no intensity lines found" % path)
    for required in (0, 1):
        if required not in entries:
            raise ModelFileError("%s: missing required intensity a%d" % (path, required))
    k_top = max(entries)
    a = [entries.get(k, (0.0, 0))[0] for k in range(k_top + 1)]
    return a, tol


def load_model(path, tol: float | None = None) -> BranchingModel:
    """Read a model file and build the validated model.

    Constraint violations are re-raised with the offending file named.
    """
    p = Path(path)
    a, file_tol = parse_model_text(p.read_text(), str(p))
    try:
        return build_model(IntensityVector(a, tol=tol if tol is not None else file_tol))
    except (InvalidIntensities, ValueError) as exc:
        raise type(exc)("%s: %s" % (p, exc)) from None


def parse_config_text(text: str, path: str = "<string>") -> dict[str, str]:
    """Flat key = value experiment config; values stay as strings."""
    out: dict[str, str] = {}
    for lineno, key, val in _iter_kv_lines(text, path):
        if key in out:
            raise ModelFileError("%s, line %d: duplicate key %r" % (path, lineno, key))
        out[key] = val
    return out


def load_config(path) -> dict[str, str]:
    p = Path(path)
    return parse_config_text(p.read_text(), str(p))


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_table_csv(path, table) -> None:
    """Transition table as ``j,prob`` rows under a commented header."""
    lines = [
        "# t=%s, base_state=%d, truncation_mass=%s"
        % (_fmt(table.t), table.base_state, _fmt(table.truncation_mass)),
        "j,prob",
    ]
    for j, prob in enumerate(table.probs):
        lines.append("%d,%s" % (j, _fmt(prob)))
    Path(path).write_text("\n".join(lines) + "\n")


def write_convergence_csv(path, rows) -> None:
    """Convergence rows as ``t,normalized_variance,stderr,method``."""
    lines = ["t,normalized_variance,stderr,method"]
    for r in rows:
        lines.append(
            "%s,%s,%s,%s" % (_fmt(r.t), _fmt(r.normalized_variance), _fmt(r.stderr), r.method)
        )
    Path(path).write_text("\n".join(lines) + "\n")


def write_report_json(path, report) -> None:
    Path(path).write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    )


def write_trajectory_csv(path, traj) -> None:
    """One replicate as ``time,state`` rows, starting at time 0."""
    lines = ["time,state", "%s,%d" % (_fmt(0.0), traj.initial_state)]
    for t, s in zip(traj.jump_times, traj.states):
        lines.append("%s,%d" % (_fmt(t), s))
    Path(path).write_text("\n".join(lines) + "\n")


def write_manifest(out_dir, command: str, version: str, model_path,
                   model_text: str, parameters: dict, outputs: list[str]) -> Path:
    """Record inputs, seeds and tool version next to a command's outputs."""
    manifest = {
        "tool": "qprocess",
        "version": version,
        "command": command,
        "model_file": str(model_path),
        "model_sha256": hashlib.sha256(model_text.encode()).hexdigest(),
        "parameters": parameters,
        "outputs": sorted(outputs),
    }
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path
