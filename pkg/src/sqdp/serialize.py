"""Instance/report JSON serialization and delimited output.

All numeric output is written with 17 significant digits so cross-run diffs
are meaningful. Matrices are serialized as nested lists of rows (row-major).
The exact schemas are documented in docs/formats.md.
"""

from __future__ import annotations

import csv
import json
import math
import os

import numpy as np

from .errors import InvalidInstanceError
from .model import (
    Box,
    ConstraintSetS1,
    ConstraintSetS2,
    MspInstance,
    QuadraticInequality,
    QuadraticStageCost,
    Simplex,
    StageData,
)

_INF_ENC = "inf"  # JSON has no infinities; box bounds use the strings "inf"/"-inf"


def _fmt_float(v: float) -> str:
    if math.isnan(v):
        raise ValueError("cannot serialize NaN")
    if math.isinf(v):
        return f'"{_INF_ENC}"' if v > 0 else f'"-{_INF_ENC}"'
    return format(v, ".17g")


def _encode(obj, indent: int) -> str:
    pad = " " * indent
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist(), indent)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}  {json.dumps(str(k))}: {_encode(v, indent + 2)}'
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        flat = all(isinstance(v, (int, float, np.integer, np.floating)) for v in obj)
        if flat:
            return "[" + ", ".join(_encode(v, 0) for v in obj) + "]"
        items = [f"{pad}  {_encode(v, indent + 2)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_json(obj) -> str:
    """Render a JSON document with 17-significant-digit floats."""
    return _encode(obj, 0) + "\n"


def dump_json(obj, path: str) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_json(obj))


def write_csv(path: str, header, rows) -> None:
    """Write delimited output, formatting floats with 17 significant digits."""
    def cell(v):
        if v is None:
            return ""
        if isinstance(v, (float, np.floating)):
            return format(float(v), ".17g")
        return v

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([cell(v) for v in row])


# ---------------------------------------------------------------------------
# Instance schema
# ---------------------------------------------------------------------------

def _dec_float(v, where):
    if v == _INF_ENC:
        return math.inf
    if v == "-" + _INF_ENC:
        return -math.inf
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        raise InvalidInstanceError(where, f"expected a number, got {v!r}")
    return float(v)


def _need(doc, key, where):
    if not isinstance(doc, dict) or key not in doc:
        raise InvalidInstanceError(f"{where}.{key}" if where else key, "missing field")
    return doc[key]


def _base_set_to_dict(base_set):
    if isinstance(base_set, Simplex):
        return {"type": "simplex"}
    return {"type": "box",
            "lower": [float(v) for v in base_set.lower],
            "upper": [float(v) for v in base_set.upper]}


def _base_set_from_dict(doc, where):
    kind = _need(doc, "type", where)
    if kind == "simplex":
        return Simplex()
    if kind == "box":
        lower = [_dec_float(v, f"{where}.lower") for v in _need(doc, "lower", where)]
        upper = [_dec_float(v, f"{where}.upper") for v in _need(doc, "upper", where)]
        return Box(lower=np.array(lower), upper=np.array(upper))
    raise InvalidInstanceError(f"{where}.type", f"unknown base set {kind!r}")


def instance_to_dict(instance: MspInstance) -> dict:
    stages = []
    for stage in instance.stages:
        cons = stage.constraints
        cons_doc = {
            "A": cons.A.tolist(),
            "B": cons.B.tolist(),
            "b": cons.b.tolist(),
            "base_set": _base_set_to_dict(cons.base_set),
        }
        if isinstance(cons, ConstraintSetS2):
            cons_doc["g"] = [{"Q": g.Q.tolist(), "q": g.q.tolist(), "r": g.r}
                             for g in cons.g]
        stages.append({
            "costs": [{"H": c.H.tolist(), "c": c.c.tolist(), "d": c.d, "alpha": c.alpha}
                      for c in stage.costs],
            "constraints": cons_doc,
            "noise": {"xis": stage.xis.tolist(), "probs": stage.probs.tolist()},
        })
    return {"T": instance.T, "n": instance.n, "x0": instance.x0.tolist(), "stages": stages}


def instance_from_dict(doc: dict) -> MspInstance:
    T = _need(doc, "T", "")
    n = _need(doc, "n", "")
    if not isinstance(T, int) or not isinstance(n, int):
        raise InvalidInstanceError("T/n", "must be integers")
    x0 = _need(doc, "x0", "")
    stage_docs = _need(doc, "stages", "")
    if not isinstance(stage_docs, list):
        raise InvalidInstanceError("stages", "must be a list")
    stages = []
    for i, sdoc in enumerate(stage_docs):
        where = f"stages[{i}]"
        costs = []
        for j, cdoc in enumerate(_need(sdoc, "costs", where)):
            cw = f"{where}.costs[{j}]"
            try:
                costs.append(QuadraticStageCost(
                    n=n,
                    H=np.array(_need(cdoc, "H", cw), dtype=float),
                    c=np.array(_need(cdoc, "c", cw), dtype=float),
                    d=_dec_float(_need(cdoc, "d", cw), f"{cw}.d"),
                    alpha=_dec_float(_need(cdoc, "alpha", cw), f"{cw}.alpha"),
                ))
            except InvalidInstanceError:
                raise
            except Exception as exc:
                raise InvalidInstanceError(cw, str(exc)) from exc
        cdoc = _need(sdoc, "constraints", where)
        cw = f"{where}.constraints"
        try:
            base_set = _base_set_from_dict(_need(cdoc, "base_set", cw), f"{cw}.base_set")
            kwargs = dict(
                A=np.array(_need(cdoc, "A", cw), dtype=float).reshape(-1, n),
                B=np.array(_need(cdoc, "B", cw), dtype=float).reshape(-1, n),
                b=np.array(_need(cdoc, "b", cw), dtype=float),
                base_set=base_set,
            )
            if "g" in cdoc:
                comps = tuple(
                    QuadraticInequality(Q=np.array(g["Q"], dtype=float),
                                        q=np.array(g["q"], dtype=float),
                                        r=float(g["r"]))
                    for g in cdoc["g"])
                constraints = ConstraintSetS2(g=comps, **kwargs)
            else:
                constraints = ConstraintSetS1(**kwargs)
        except InvalidInstanceError:
            raise
        except Exception as exc:
            raise InvalidInstanceError(cw, str(exc)) from exc
        ndoc = _need(sdoc, "noise", where)
        nw = f"{where}.noise"
        try:
            stages.append(StageData(
                costs=tuple(costs),
                constraints=constraints,
                xis=np.array(_need(ndoc, "xis", nw), dtype=float),
                probs=np.array(_need(ndoc, "probs", nw), dtype=float),
            ))
        except InvalidInstanceError:
            raise
        except Exception as exc:
            raise InvalidInstanceError(nw, str(exc)) from exc
    try:
        return MspInstance(T=T, n=n, x0=np.array(x0, dtype=float), stages=tuple(stages))
    except Exception as exc:
        raise InvalidInstanceError("", str(exc)) from exc


def load_instance(path: str) -> MspInstance:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise InvalidInstanceError(path, f"cannot read: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidInstanceError(path, f"malformed JSON: {exc}") from exc
    return instance_from_dict(doc)


def save_instance(instance: MspInstance, path: str) -> None:
    dump_json(instance_to_dict(instance), path)


def dump_qp(problem, path: str) -> None:
    """Debug dump of one QP in the instance matrix conventions."""
    doc = {
        "P": problem.P.tolist(),
        "q": problem.q.tolist(),
        "r": problem.r,
        "Aeq": problem.Aeq.tolist(),
        "beq": problem.beq.tolist(),
        "lb": problem.lb.tolist(),
        "ub": problem.ub.tolist(),
    }
    dump_json(doc, path)


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path
