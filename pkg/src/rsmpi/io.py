"""JSON model files and CSV trace export.

Floats are written with 17 significant digits so files round-trip exactly
and identical inputs produce byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ParameterError
from .model import MdpModel, format_policy
from .mpi import MpiTrace
from .transform import TransformedMdp

MPI_COLUMNS = ["iter", "u", "l", "u_minus_l", "policy", "lambda_tilde_policy", "min_value_entry"]
APPROX_COLUMNS = MPI_COLUMNS + ["epsilon_ratio_max", "eval_ratio_min", "eval_ratio_max"]


def format_float(x: float) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise ParameterError(f"cannot serialize non-finite value {x!r}")
    return format(x, ".17g")


def _encode(obj: Any, indent: int = 0) -> str:
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}  {json.dumps(str(k))}: {_encode(v, indent + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        if obj and isinstance(obj[0], (list, tuple, dict)):
            inner = [f"{pad}  {_encode(v, indent + 1)}" for v in obj]
            return "[\n" + ",\n".join(inner) + "\n" + pad + "]"
        return "[" + ", ".join(_encode(v, indent + 1) for v in obj) + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(obj)
    return json.dumps(obj)


def dumps(obj: Any) -> str:
    """Deterministic JSON text with 17-significant-digit floats."""
    return _encode(obj) + "\n"


def model_to_dict(model: MdpModel) -> dict:
    out = {
        "n_states": model.n_states,
        "n_actions": model.n_actions,
        "transition": model.transition,
        "cost": model.cost,
        "cost_lo": model.cost_lo,
        "cost_hi": model.cost_hi,
    }
    if model.labels is not None:
        out["labels"] = list(model.labels)
    return out


def model_from_dict(data: dict) -> MdpModel:
    try:
        n, m = int(data["n_states"]), int(data["n_actions"])
        P = np.array(data["transition"], dtype=float)
        c = np.array(data["cost"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParameterError(f"malformed model file: {exc}") from None
    if P.shape != (n, m, n) or c.shape != (n, m):
        raise ParameterError(f"model arrays have shapes {P.shape}, {c.shape}; expected ({n}, {m}, {n}), ({n}, {m})")
    return MdpModel(P, c, data.get("cost_lo"), data.get("cost_hi"), data.get("labels"))


def save_model(model: MdpModel, path: str | Path) -> None:
    Path(path).write_text(dumps(model_to_dict(model)), encoding="utf-8")


def load_model(path: str | Path) -> MdpModel:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParameterError(f"{path}: invalid JSON ({exc})") from None
    return model_from_dict(data)


def transformed_to_dict(tmdp: TransformedMdp) -> dict:
    return {
        "n_states": tmdp.n_states,
        "n_actions": tmdp.n_actions,
        "transition": tmdp.q,
        "cost": tmdp.d,
        "alpha": tmdp.alpha,
        "kappa": tmdp.kappa,
        "source_digest": tmdp.source_digest,
        "cost_hi": tmdp.cost_hi,
    }


def transformed_from_dict(data: dict) -> TransformedMdp:
    q = np.array(data["transition"], dtype=float)
    d = np.array(data["cost"], dtype=float)
    q.setflags(write=False)
    d.setflags(write=False)
    return TransformedMdp(q, d, float(data["alpha"]), float(data["kappa"]),
                          str(data["source_digest"]), float(data["cost_hi"]))


def _opt(x: float | None) -> str:
    return "" if x is None else format_float(x)


def trace_rows(trace: MpiTrace, approx: bool = False) -> list[list[str]]:
    rows = []
    for r in trace.records:
        row = [str(r.index), format_float(r.u), format_float(r.l), format_float(r.u - r.l),
               format_policy(r.policy), _opt(r.policy_lambda_tilde), format_float(r.value.w.min())]
        if approx:
            row += [_opt(r.improvement_ratio_max), _opt(r.eval_ratio_min), _opt(r.eval_ratio_max)]
        rows.append(row)
    return rows


def trace_csv(trace: MpiTrace, approx: bool = False) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(APPROX_COLUMNS if approx else MPI_COLUMNS)
    writer.writerows(trace_rows(trace, approx))
    return buf.getvalue()


def write_trace_csv(trace: MpiTrace, path: str | Path, approx: bool = False) -> None:
    Path(path).write_text(trace_csv(trace, approx), encoding="utf-8")
