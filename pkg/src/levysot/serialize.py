"""JSON (de)serialization for triplets, families, marginals and instances.

Triplet documents:

    {"b": [..], "c": [[..]],
     "F": {"atoms": [{"x": [..], "w": ..}],
           "pieces": [{"lo": .., "hi": .., "density": "<expr in x>", "nodes": ..}]}}

Family documents parametrize the same shape with expression strings over named
parameters; atoms whose weight evaluates to 0 are dropped, so rate parameters
may reach the lower edge of their box.

Instance documents:

    {"mu0": {..}, "mu1": {..}, "family": {..}, "cost": "<expr in t, x, params>",
     "solver": {optional overrides}}
"""

from __future__ import annotations

import json
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .exprs import ExpressionError, compile_expr
from .measures import DEFAULT_QUAD_NODES, DensityPiece, LevyMeasure
from .transport import CostFunction, Marginal, TransportInstance
from .triplets import LevyTriplet, ThetaFamily


class SchemaError(ValueError):
    """A JSON document does not match the expected layout."""


def _require(doc: Mapping[str, Any], key: str, context: str):
    if key not in doc:
        raise SchemaError(f"{context}: missing key {key!r}")
    return doc[key]


# ---------------------------------------------------------------------------
# triplets


def _density_from_expr(source: str) -> Callable[[np.ndarray], np.ndarray]:
    fn = compile_expr(source, ("x",))

    def density(x):
        return np.asarray(fn(x=np.asarray(x, float)), float)

    density.source = source  # kept for round-trip serialization
    return density


def piece_from_dict(doc: Mapping[str, Any]) -> DensityPiece:
    return DensityPiece(
        lo=float(_require(doc, "lo", "piece")),
        hi=float(_require(doc, "hi", "piece")),
        density=_density_from_expr(str(_require(doc, "density", "piece"))),
        nodes=int(doc.get("nodes", DEFAULT_QUAD_NODES)),
    )


def measure_from_dict(doc: Mapping[str, Any], dimension: int) -> LevyMeasure:
    atoms = tuple(
        (np.atleast_1d(np.asarray(a["x"], float)), float(a["w"]))
        for a in doc.get("atoms", ())
    )
    pieces = tuple(piece_from_dict(p) for p in doc.get("pieces", ()))
    return LevyMeasure(dimension=dimension, atoms=atoms, density_pieces=pieces)


def measure_to_dict(F: LevyMeasure) -> dict:
    pieces = []
    for p in F.density_pieces:
        source = getattr(p.density, "source", None)
        if source is None:
            raise SchemaError(
                "density piece is not expression-backed; cannot serialize"
            )
        pieces.append({"lo": p.lo, "hi": p.hi, "density": source, "nodes": p.nodes})
    return {
        "atoms": [{"x": list(map(float, loc)), "w": w} for loc, w in F.atoms],
        "pieces": pieces,
    }


def triplet_from_dict(doc: Mapping[str, Any]) -> LevyTriplet:
    b = np.atleast_1d(np.asarray(_require(doc, "b", "triplet"), float))
    c = np.atleast_2d(np.asarray(_require(doc, "c", "triplet"), float))
    F = measure_from_dict(doc.get("F", {}), dimension=b.size)
    return LevyTriplet(b=b, c=c, F=F)


def triplet_to_dict(t: LevyTriplet) -> dict:
    return {
        "b": list(map(float, t.b)),
        "c": [list(map(float, row)) for row in t.c],
        "F": measure_to_dict(t.F),
    }


# ---------------------------------------------------------------------------
# families


def _wrap_density(fn, names: Sequence[str], values: np.ndarray):
    params = dict(zip(names, values))
    return lambda x: np.asarray(fn(x=np.asarray(x, float), **params), float)


def family_from_dict(doc: Mapping[str, Any]) -> ThetaFamily:
    box = tuple(
        (float(lo), float(hi)) for lo, hi in _require(doc, "box", "family")
    )
    names = tuple(doc.get("params", [f"p{i}" for i in range(len(box))]))
    if len(names) != len(box):
        raise SchemaError("family: params must match the box length")

    b_exprs = [compile_expr(str(e), names) for e in _require(doc, "b", "family")]
    c_rows = [
        [compile_expr(str(e), names) for e in row]
        for row in _require(doc, "c", "family")
    ]
    F_doc = doc.get("F", {})
    atom_specs = []
    for a in F_doc.get("atoms", ()):
        locs = [compile_expr(str(e), names) for e in np.atleast_1d(a["x"])]
        atom_specs.append((locs, compile_expr(str(a["w"]), names)))
    piece_specs = []
    for p in F_doc.get("pieces", ()):
        piece_specs.append(
            (
                float(p["lo"]),
                float(p["hi"]),
                compile_expr(str(p["density"]), ("x",) + tuple(names)),
                int(p.get("nodes", DEFAULT_QUAD_NODES)),
            )
        )
    dimension = len(b_exprs)

    def triplet_map(p: np.ndarray) -> LevyTriplet:
        env = dict(zip(names, map(float, p)))
        b = np.array([float(e(**env)) for e in b_exprs])
        c = np.array([[float(e(**env)) for e in row] for row in c_rows])
        atoms = []
        for locs, w_expr in atom_specs:
            w = float(w_expr(**env))
            if w > 0:
                atoms.append((np.array([float(e(**env)) for e in locs]), w))
        pieces = tuple(
            DensityPiece(lo, hi, _wrap_density(fn, names, np.asarray(p, float)), nodes)
            for lo, hi, fn, nodes in piece_specs
        )
        return LevyTriplet(
            b=b, c=c, F=LevyMeasure(dimension, tuple(atoms), pieces)
        )

    blocks = doc.get("blocks")
    return ThetaFamily(
        parameter_box=box,
        triplet_map=triplet_map,
        structural_tag=doc.get("structural_tag", "general"),
        blocks={k: tuple(v) for k, v in blocks.items()} if blocks else None,
    )


# ---------------------------------------------------------------------------
# triplet sequences


def sequence_from_dict(doc: Mapping[str, Any]):
    """Build a TripletSequence from expressions in the index variable n."""
    from .limits import DEFAULT_N_SCHEDULE, TripletSequence

    b_exprs = [compile_expr(str(e), ("n",)) for e in _require(doc, "b", "sequence")]
    c_rows = [
        [compile_expr(str(e), ("n",)) for e in row]
        for row in _require(doc, "c", "sequence")
    ]
    atom_specs = []
    for a in doc.get("F", {}).get("atoms", ()):
        locs = [compile_expr(str(e), ("n",)) for e in np.atleast_1d(a["x"])]
        atom_specs.append((locs, compile_expr(str(a["w"]), ("n",))))
    dimension = len(b_exprs)

    def index_map(n: int) -> LevyTriplet:
        b = np.array([float(e(n=n)) for e in b_exprs])
        c = np.array([[float(e(n=n)) for e in row] for row in c_rows])
        atoms = []
        for locs, w_expr in atom_specs:
            w = float(w_expr(n=n))
            if w > 0:
                atoms.append((np.array([float(e(n=n)) for e in locs]), w))
        return LevyTriplet(b=b, c=c, F=LevyMeasure(dimension, tuple(atoms)))

    schedule = tuple(doc.get("n_schedule", DEFAULT_N_SCHEDULE))
    return TripletSequence(index_map, schedule)


def param_map_from_exprs(exprs: Sequence[str]) -> Callable[[int], np.ndarray]:
    fns = [compile_expr(str(e), ("n",)) for e in exprs]
    return lambda n: np.array([float(fn(n=n)) for fn in fns])


# ---------------------------------------------------------------------------
# marginals, costs, instances


def marginal_from_dict(doc: Mapping[str, Any]) -> Marginal:
    kind = _require(doc, "kind", "marginal")
    if kind == "point-mass":
        return Marginal.point(float(_require(doc, "location", "marginal")))
    if kind == "gaussian":
        return Marginal.gaussian(
            float(_require(doc, "mean", "marginal")),
            float(_require(doc, "variance", "marginal")),
        )
    if kind == "grid-density":
        return Marginal.discrete(
            _require(doc, "points", "marginal"), _require(doc, "weights", "marginal")
        )
    raise SchemaError(f"marginal: unknown kind {kind!r}")


def marginal_to_dict(m: Marginal) -> dict:
    if m.kind == "point-mass":
        return {"kind": m.kind, "location": m.location}
    if m.kind == "gaussian":
        return {"kind": m.kind, "mean": m.mean, "variance": m.variance}
    return {
        "kind": m.kind,
        "points": list(map(float, m.points)),
        "weights": list(map(float, m.weights)),
    }


def cost_from_expr(source: str, param_names: Sequence[str]) -> CostFunction:
    names = tuple(param_names)
    fn = compile_expr(source, ("t", "x") + names)

    def evaluator(t: float, x: np.ndarray, p: np.ndarray) -> np.ndarray:
        x = np.asarray(x, float)
        p = np.asarray(p, float)
        if p.ndim == 1:
            env = {name: float(v) for name, v in zip(names, p)}
        else:
            env = {name: p[..., i] for i, name in enumerate(names)}
        out = fn(t=t, x=x, **env)
        return np.broadcast_to(np.asarray(out, float), x.shape).copy()

    ev = CostFunction(evaluator)
    object.__setattr__(ev, "source", source)
    return ev


def instance_from_dict(doc: Mapping[str, Any]) -> TransportInstance:
    fam_doc = _require(doc, "family", "instance")
    fam = family_from_dict(fam_doc)
    names = tuple(
        fam_doc.get("params", [f"p{i}" for i in range(len(fam.parameter_box))])
    )
    cost = cost_from_expr(str(_require(doc, "cost", "instance")), names)
    return TransportInstance(
        mu0=marginal_from_dict(_require(doc, "mu0", "instance")),
        mu1=marginal_from_dict(_require(doc, "mu1", "instance")),
        fam=fam,
        cost=cost,
    )


# ---------------------------------------------------------------------------
# file helpers


def load_json(path) -> Any:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(
                f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: "
                f"{exc.msg}"
            ) from exc


def to_jsonable(obj: Any) -> Any:
    """Recursively convert numpy containers into JSON-friendly values."""
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {k: to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, (bool, int, float, str)) or obj is None:
        return obj
    if hasattr(obj, "__dataclass_fields__"):
        return {
            k: to_jsonable(getattr(obj, k)) for k in obj.__dataclass_fields__
        }
    return str(obj)
