"""File formats: MDP and experiment documents (JSON) and CSV tables.

MDP documents hold ``n_states``, ``n_actions``, ``gamma``, ``transitions``
indexed ``[a][i][j]`` and either ``rewards`` indexed ``[i][a][j]`` or a
per-state ``state_rewards`` vector. Floats are written with Python's
shortest round-trip representation, so reading a written file gives back
bit-identical tensors. CSV tables render floats with 17 significant digits.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .bounds import BOUND_IDS
from .harness import ExperimentSpec, GeneratorSpec
from .mdp import Mdp
from .seminorms import span_inf
from .solvers import IterationTrace, NoiseModel, SolverConfig, stop_threshold

__all__ = [
    "InputError",
    "mdp_to_dict",
    "mdp_from_dict",
    "read_mdp",
    "write_mdp",
    "experiment_from_dict",
    "experiment_to_dict",
    "read_experiment",
    "format_float",
    "write_csv",
    "trace_rows",
    "csv_text",
    "TRACE_FIELDS",
    "SWEEP_FIELDS",
]

TRACE_FIELDS = (
    "k",
    "lambda",
    "gamma",
    "seed",
    "max_norm_loss",
    "span_inf_loss",
    "span_inf_bellman_residual",
    "span_inf_policy_bellman_residual",
    "stop_flag",
)
SWEEP_FIELDS = ("lambda", "outer_iterations", "inner_iterations", "final_loss")


class InputError(ValueError):
    """A file or argument that cannot be turned into a valid object."""


# ------------------------------------------------------------------ MDP files


def mdp_to_dict(mdp: Mdp, state_rewards: bool = False) -> dict:
    """Document form of ``mdp``.

    With ``state_rewards=True`` the reward tensor must not depend on the
    action or the successor, and is stored as one value per state.
    """
    doc = dict(
        n_states=mdp.n_states,
        n_actions=mdp.n_actions,
        gamma=float(mdp.gamma),
        transitions=mdp.transitions.tolist(),
    )
    if state_rewards:
        r = mdp.rewards[:, 0, 0]
        if not np.array_equal(mdp.rewards, np.broadcast_to(r[:, None, None], mdp.rewards.shape)):
            raise ValueError("rewards vary with the action or successor; cannot store per state")
        doc["state_rewards"] = r.tolist()
    else:
        doc["rewards"] = mdp.rewards.tolist()
    return doc


def _array(doc, key, ndim):
    try:
        x = np.array(doc[key], dtype=float)
    except KeyError:
        raise InputError(f"missing key {key!r}") from None
    except (TypeError, ValueError) as exc:
        raise InputError(f"{key}: not a numeric array ({exc})") from None
    if x.ndim != ndim:
        raise InputError(f"{key}: expected a {ndim}-D array, got {x.ndim}-D")
    return x


def mdp_from_dict(doc: dict) -> Mdp:
    """Parse and validate an MDP document.

    Raises
    ------
    InputError
        Naming the violated invariant (missing key, shape mismatch, rows
        not summing to one, discount out of range...).
    """
    if not isinstance(doc, dict):
        raise InputError("MDP document must be an object")
    p = _array(doc, "transitions", 3)
    if ("rewards" in doc) == ("state_rewards" in doc):
        raise InputError("exactly one of 'rewards' and 'state_rewards' is required")
    try:
        gamma = float(doc["gamma"])
    except KeyError:
        raise InputError("missing key 'gamma'") from None
    except (TypeError, ValueError):
        raise InputError("gamma must be a number") from None
    for key, got in (("n_actions", p.shape[0]), ("n_states", p.shape[1])):
        if key in doc and int(doc[key]) != got:
            raise InputError(f"{key}={doc[key]} does not match transitions of shape {p.shape}")
    try:
        if "state_rewards" in doc:
            return Mdp.from_state_rewards(p, _array(doc, "state_rewards", 1), gamma)
        return Mdp(p, _array(doc, "rewards", 3), gamma)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def write_mdp(mdp: Mdp, path, state_rewards: bool = False) -> None:
    Path(path).write_text(json.dumps(mdp_to_dict(mdp, state_rewards), indent=1) + "\n")


def _load_json(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None


def read_mdp(path) -> Mdp:
    return mdp_from_dict(_load_json(path))


# ---------------------------------------------------------- experiment files


def _build(cls, doc, where):
    if not isinstance(doc, dict):
        raise InputError(f"{where} must be an object")
    try:
        return cls(**doc)
    except TypeError as exc:
        raise InputError(f"{where}: {exc}") from None
    except ValueError as exc:
        raise InputError(f"{where}: {exc}") from None


def experiment_from_dict(doc: dict) -> ExperimentSpec:
    """Parse an experiment document.

    Keys mirror :class:`ExperimentSpec`; ``generator``, ``noise`` and
    ``solver`` are nested objects (``generator`` may also be the string
    ``"counterexample"``) and ``checks`` may be ``"all"``.
    """
    if not isinstance(doc, dict):
        raise InputError("experiment document must be an object")
    doc = dict(doc)
    gen = doc.get("generator", {})
    if gen != "counterexample":
        doc["generator"] = _build(GeneratorSpec, gen, "generator")
    doc["noise"] = _build(NoiseModel, doc.get("noise", {}), "noise")
    doc["solver"] = _build(SolverConfig, doc.get("solver", {"max_iterations": 60, "stop_rule": "none"}), "solver")
    checks = doc.get("checks", ())
    doc["checks"] = tuple(BOUND_IDS) if checks == "all" else tuple(checks)
    try:
        return ExperimentSpec(**doc)
    except KeyError as exc:
        raise InputError(exc.args[0]) from None
    except (TypeError, ValueError) as exc:
        raise InputError(str(exc)) from None


def experiment_to_dict(spec: ExperimentSpec) -> dict:
    doc = asdict(spec)
    if spec.generator == "counterexample":
        doc["generator"] = "counterexample"
    doc["lambdas"] = list(spec.lambdas)
    doc["gammas"] = list(spec.gammas)
    doc["checks"] = list(spec.checks)
    return doc


def read_experiment(path) -> ExperimentSpec:
    return experiment_from_dict(_load_json(path))


# ---------------------------------------------------------------- CSV tables


def format_float(x) -> str:
    """17 significant digits for floats, plain text for everything else."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return str(x)


def write_csv(rows, fields, out) -> None:
    """Write ``rows`` (dicts) with a header; ``out`` is a path or a text stream."""
    if isinstance(out, (str, Path)):
        with open(out, "w", newline="") as fh:
            write_csv(rows, fields, fh)
        return
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(fields)
    for row in rows:
        writer.writerow([format_float(row[f]) for f in fields])


def trace_rows(trace: IterationTrace, seed: int) -> list[dict]:
    """One row per iterate in the trace table layout."""
    threshold = stop_threshold(trace.mdp.gamma, trace.config.stop_epsilon)
    rows = []
    for rec in trace.records:
        span_b = span_inf(rec.b)
        rows.append(
            {
                "k": rec.k,
                "lambda": float(trace.lam),
                "gamma": float(trace.mdp.gamma),
                "seed": int(seed),
                "max_norm_loss": math.nan if rec.loss is None else float(np.max(np.abs(rec.loss))),
                "span_inf_loss": math.nan if rec.loss is None else span_inf(rec.loss),
                "span_inf_bellman_residual": span_b,
                "span_inf_policy_bellman_residual": (
                    math.nan if rec.b_policy is None else span_inf(rec.b_policy)
                ),
                "stop_flag": int(span_b <= threshold),
            }
        )
    return rows


def csv_text(rows, fields) -> str:
    buf = io.StringIO()
    write_csv(rows, fields, buf)
    return buf.getvalue()
