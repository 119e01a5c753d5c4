"""Command-line interface: config ingestion, orchestration, report emission.

Subcommands: check-theta, limit-analyze, simulate, solve-transport, reproduce.
All structured output is JSON; tabular output is CSV.  Files are written
atomically (write to a temporary sibling, then rename) and echo the seed used,
so reruns with identical inputs are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from typing import Any, Iterable, List, Mapping, Optional, Sequence

import numpy as np

from . import fixtures
from .exprs import ExpressionError
from .limits import (
    DEFAULT_DELTA_SCHEDULE,
    LimitStructure,
    closedness_probe,
    default_u_grid,
    diffusion_creation_diagnostic,
    exponent_limit_profile,
    limit_triplet_identify,
)
from .measures import QuadratureError
from .montecarlo import (
    JumpIntensityError,
    SimulationConfig,
    cf_distance,
    constant_schedule,
    convergence_experiment,
    marginal_cdf,
    marginal_ks,
    simulate_paths,
)
from .serialize import (
    SchemaError,
    family_from_dict,
    instance_from_dict,
    load_json,
    param_map_from_exprs,
    sequence_from_dict,
    to_jsonable,
    triplet_from_dict,
    triplet_to_dict,
)
from .transport import (
    CFLError,
    DualAscentConfig,
    HJBGridConfig,
    PrimalConfig,
    StateDependentCostError,
    duality_report,
    solve_hjb,
)
from .triplets import (
    box_independence_check,
    family_condition_b,
    family_condition_j,
    martingale_residual,
)

OUTPUT_DIR_ENV = "LEVYSOT_OUT"

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2

_NUMERICAL_ERRORS = (
    CFLError,
    QuadratureError,
    JumpIntensityError,
    StateDependentCostError,
    FloatingPointError,
    np.linalg.LinAlgError,
)

# valid --set key prefixes per command; a key is accepted when it equals a
# listed path or extends one (nested documents)
_OVERRIDE_KEYS = {
    "check-theta": ("family", "delta_schedule", "resolution", "samples"),
    "limit-analyze": (
        "sequence",
        "u_grid",
        "delta_schedule",
        "structure",
        "family",
        "use_u_map",
        "param_map",
    ),
    "simulate": ("triplet", "x0", "config", "target", "u_grid", "sequence"),
    "solve-transport": ("mu0", "mu1", "family", "cost", "solver"),
    "reproduce": (),
}


class ValidationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# output helpers


def _atomic_write(path: str, data: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(data)
    os.replace(tmp, path)


def write_json(path: str, doc: Any) -> None:
    _atomic_write(path, json.dumps(to_jsonable(doc), indent=2, sort_keys=True) + "\n")


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    _atomic_write(path, buf.getvalue())


def _fmt(v: Any) -> Any:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


# ---------------------------------------------------------------------------
# overrides


def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(doc: dict, pairs: Sequence[str], command: str) -> dict:
    valid = _OVERRIDE_KEYS[command]
    for pair in pairs:
        if "=" not in pair:
            raise ValidationError(f"--set expects key=value, got {pair!r}")
        key, raw = pair.split("=", 1)
        head = key.split(".", 1)[0]
        if head not in valid:
            raise ValidationError(
                f"unknown override key {key!r}; valid keys start with: "
                + ", ".join(sorted(valid))
            )
        target = doc
        parts = key.split(".")
        for part in parts[:-1]:
            target = target.setdefault(part, {})
            if not isinstance(target, dict):
                raise ValidationError(f"cannot descend into {part!r} in {key!r}")
        target[parts[-1]] = _parse_value(raw)
    return doc


# ---------------------------------------------------------------------------
# commands


def cmd_check_theta(doc: dict, out: str, seed: Optional[int]) -> int:
    fam_doc = doc.get("family", doc)
    fam = family_from_dict(fam_doc)
    deltas = doc.get("delta_schedule", list(DEFAULT_DELTA_SCHEDULE))
    resolution = int(doc.get("resolution", 9))
    samples = int(doc.get("samples", 16))
    bound = family_condition_b(fam, resolution)
    cond_j = family_condition_j(fam, deltas, resolution)
    independent = box_independence_check(fam, samples, seed or 0)
    residuals = [
        {
            "params": p.tolist(),
            "residual": martingale_residual(fam.at(p)).tolist(),
        }
        for p in fam.corners()
    ]
    report = {
        "seed": seed,
        "condition_b": {
            "sup_estimate": bound.sup_estimate,
            "finite": bound.finite_flag,
            "resolution": bound.resolution,
            "note": bound.note,
        },
        "condition_j": {
            "verdict": cond_j.verdict,
            "profile": [list(pair) for pair in cond_j.profile],
        },
        "box_independence": independent,
        "martingale_residuals_at_corners": residuals,
    }
    write_json(os.path.join(out, "check_theta.json"), report)
    return EXIT_OK


def _u_grid_from_doc(doc: Any) -> np.ndarray:
    if doc is None:
        return default_u_grid()
    if isinstance(doc, Mapping):
        return default_u_grid(float(doc.get("extent", 2.0)), int(doc.get("count", 42)))
    return np.asarray(doc, dtype=float)


def cmd_limit_analyze(doc: dict, out: str, seed: Optional[int]) -> int:
    seq = sequence_from_dict(doc.get("sequence", doc))
    u_grid = _u_grid_from_doc(doc.get("u_grid"))
    deltas = doc.get("delta_schedule", list(DEFAULT_DELTA_SCHEDULE))
    structure = LimitStructure(tuple(doc.get("structure", {}).get("atoms", ())))
    profile = exponent_limit_profile(seq, u_grid)
    diffusion = diffusion_creation_diagnostic(seq, deltas)
    identified, fit_residual = limit_triplet_identify(profile, structure)
    report = {
        "seed": seed,
        "condition_b_bound": seq.condition_b_bound(),
        "diffusion_increment": diffusion.estimate,
        "verdict": diffusion.verdict,
        "identified_triplet": triplet_to_dict(identified),
        "fit_residual": fit_residual,
        "extrapolation_error": max(e.error_estimate for e in profile.entries),
    }
    if "family" in doc:
        fam = family_from_dict(doc["family"])
        pm_doc = doc.get("param_map")
        probe = closedness_probe(
            fam,
            seq,
            bool(doc.get("use_u_map", False)),
            structure,
            u_grid,
            param_map=param_map_from_exprs(pm_doc) if pm_doc else None,
        )
        report["closedness"] = {
            "limit_in_set": probe.limit_in_set,
            "distance": probe.distance,
            "witness_params": None
            if probe.witness_params is None
            else probe.witness_params.tolist(),
        }
    write_json(os.path.join(out, "limit_report.json"), report)
    write_csv(
        os.path.join(out, "exponent_profile.csv"),
        ("u", "n", "re_psi", "im_psi"),
        (
            (e.u, n, v.real, v.imag)
            for e in profile.entries
            for n, v in zip(profile.n_schedule, e.values)
        ),
    )
    from .triplets import small_jump_second_moment

    write_csv(
        os.path.join(out, "small_jump_profile.csv"),
        ("delta", "n", "small_jump_mass"),
        (
            (d, n, small_jump_second_moment(seq.index_map(n).F, d))
            for d in deltas
            for n in seq.n_schedule
        ),
    )
    return EXIT_OK


def cmd_simulate(doc: dict, out: str, seed: Optional[int]) -> int:
    cfg_doc = dict(doc.get("config", {}))
    if seed is not None:
        cfg_doc["seed"] = seed
    cfg = SimulationConfig(**cfg_doc)
    report: dict = {"seed": cfg.seed, "config": cfg_doc}
    if "sequence" in doc:
        seq = sequence_from_dict(doc["sequence"])
        target = triplet_from_dict(doc["target"])
        u_grid = _u_grid_from_doc(doc.get("u_grid"))
        conv = convergence_experiment(seq, target, cfg, u_grid)
        report["convergence"] = {
            "n_schedule": list(conv.n_schedule),
            "ks": list(conv.ks_distances),
            "cf_distance": list(conv.cf_distances),
        }
        bundle = simulate_paths(
            constant_schedule(seq.index_map(seq.n_schedule[-1])), 0.0, cfg
        )
    else:
        t = triplet_from_dict(doc.get("triplet", doc))
        x0 = float(doc.get("x0", 0.0))
        bundle = simulate_paths(constant_schedule(t), x0, cfg)
        terminal = bundle.terminal
        report["terminal"] = {
            "mean": float(terminal.mean()),
            "variance": float(terminal.var(ddof=1)) if terminal.size > 1 else 0.0,
        }
        reference = marginal_cdf(t, cfg.horizon, x0)
        if reference is not None:
            report["terminal"]["ks"] = marginal_ks(terminal, reference)
        if "target" in doc:
            target = triplet_from_dict(doc["target"])
            u_grid = _u_grid_from_doc(doc.get("u_grid"))
            report["terminal"]["cf_distance_to_target"] = cf_distance(
                terminal, target, cfg.horizon, u_grid
            )
    write_json(os.path.join(out, "simulate_report.json"), report)
    write_csv(
        os.path.join(out, "paths.csv"),
        ("path_id", "t", "value"),
        (
            (i, t, bundle.values[i, k])
            for i in range(bundle.values.shape[0])
            for k, t in enumerate(bundle.time_grid)
        ),
    )
    return EXIT_OK


def _primal_config(doc: Mapping[str, Any]) -> PrimalConfig:
    kwargs: dict = {}
    if "n_steps" in doc:
        kwargs["n_steps"] = int(doc["n_steps"])
    if "u_extent" in doc or "u_count" in doc:
        kwargs["u_grid"] = np.linspace(
            -float(doc.get("u_extent", 5.0)),
            float(doc.get("u_extent", 5.0)),
            int(doc.get("u_count", 41)),
        )
    if "rho_schedule" in doc:
        kwargs["rho_schedule"] = tuple(float(r) for r in doc["rho_schedule"])
    return PrimalConfig(**kwargs)


def _dual_config(doc: Mapping[str, Any]) -> DualAscentConfig:
    grid_keys = ("x_min", "x_max", "n_x", "n_t", "pad", "drift_stencil")
    grid = HJBGridConfig(**{k: doc[k] for k in grid_keys if k in doc})
    kwargs: dict = {"grid": grid}
    for key in ("bound", "gtol", "max_iterations", "smoothing"):
        if key in doc:
            kwargs[key] = doc[key]
    return DualAscentConfig(**kwargs)


def cmd_solve_transport(doc: dict, out: str, seed: Optional[int]) -> int:
    inst = instance_from_dict(doc)
    inst.validate()
    solver = doc.get("solver", {})
    mc_doc = solver.get("mc", {})
    report = duality_report(
        inst,
        primal_cfg=_primal_config(solver.get("primal", {})),
        dual_cfg=_dual_config(solver.get("dual", {})),
        mc_paths=int(mc_doc.get("n_paths", 100_000)),
        mc_seed=seed if seed is not None else int(mc_doc.get("seed", 0)),
    )
    doc_out = to_jsonable(report)
    doc_out["seed"] = seed if seed is not None else int(mc_doc.get("seed", 0))
    write_json(os.path.join(out, "duality_report.json"), doc_out)
    k = report.control_schedule.shape[0]
    write_csv(
        os.path.join(out, "schedule.csv"),
        ("t",) + tuple(f"theta_{i}" for i in range(report.control_schedule.shape[1])),
        ((j / k, *report.control_schedule[j]) for j in range(k)),
    )
    write_csv(
        os.path.join(out, "dual_potential.csv"),
        ("x", "lambda1"),
        zip(report.dual_x_grid, report.dual_potential),
    )
    vg = solve_hjb(inst, report.dual_potential, _dual_config(solver.get("dual", {})).grid)
    lo, hi = vg.report_slice
    write_csv(
        os.path.join(out, "value_surface.csv"),
        ("t", "x", "v"),
        (
            (t, vg.x_grid[i], vg.values[k, i])
            for k, t in enumerate(vg.t_grid)
            for i in range(lo, hi)
        ),
    )
    return EXIT_OK


def cmd_reproduce(out: str, seed: Optional[int]) -> int:
    rows: List[dict] = []

    # 1. shrinking-jump sequence: diffusion created, limit escapes the family
    seq = sequence_from_dict(fixtures.shrinking_jump_sequence_doc())
    fam_jump = family_from_dict(fixtures.pure_jump_family_doc())
    diffusion = diffusion_creation_diagnostic(seq)
    probe_jump = closedness_probe(
        fam_jump,
        seq,
        use_u_map=False,
        param_map=param_map_from_exprs(fixtures.pure_jump_param_map_exprs()),
    )
    ok1 = (
        abs(diffusion.estimate - 1.0) <= 1e-6
        and diffusion.verdict == "diffusion-created"
        and probe_jump.limit_in_set == "no"
    )
    rows.append(
        {
            "fixture": "shrinking-jump sequence",
            "passed": ok1,
            "detail": f"diffusion estimate {diffusion.estimate:.8f}, "
            f"membership {probe_jump.limit_in_set}",
        }
    )

    # 2. pinned-variance family: the modified limit stays inside
    fam_pinned = family_from_dict(fixtures.pinned_variance_family_doc())
    probe_pinned = closedness_probe(
        fam_pinned,
        seq,
        use_u_map=True,
        param_map=param_map_from_exprs(fixtures.pinned_variance_param_map_exprs()),
    )
    ok2 = probe_pinned.limit_in_set == "yes"
    rows.append(
        {
            "fixture": "pinned-variance family",
            "passed": ok2,
            "detail": f"membership {probe_pinned.limit_in_set}, "
            f"distance {probe_pinned.distance:.3g}",
        }
    )

    # 3. Gaussian transport instance: duality gap closes
    doc = fixtures.gaussian_instance_doc()
    inst = instance_from_dict(doc)
    solver = doc["solver"]
    report = duality_report(
        inst,
        dual_cfg=_dual_config(solver["dual"]),
        mc_paths=int(solver["mc"]["n_paths"]),
        mc_seed=seed if seed is not None else int(solver["mc"]["seed"]),
    )
    ok3 = (
        abs(report.primal_value - 1.0) <= 1e-3
        and report.dual_value >= 0.95
        and report.gap <= 0.06
    )
    rows.append(
        {
            "fixture": "gaussian transport",
            "passed": ok3,
            "detail": f"primal {report.primal_value:.4f}, "
            f"dual {report.dual_value:.4f}, gap {report.gap:.4f}",
        }
    )

    width = max(len(r["fixture"]) for r in rows)
    for r in rows:
        status = "PASS" if r["passed"] else "FAIL"
        print(f"{r['fixture']:<{width}}  {status}  {r['detail']}")
    write_json(
        os.path.join(out, "reproduce_report.json"), {"seed": seed, "fixtures": rows}
    )
    return EXIT_OK if all(r["passed"] for r in rows) else EXIT_NUMERICAL


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="levysot",
        description="Levy-triplet diagnostics and semimartingale transport",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("check-theta", "limit-analyze", "simulate", "solve-transport"):
        p = sub.add_parser(name)
        p.add_argument("--input", required=True, help="JSON input document")
        _common_args(p)
    _common_args(sub.add_parser("reproduce"))
    return parser


def _common_args(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--out",
        default=None,
        help=f"output directory (default: ${OUTPUT_DIR_ENV} or current dir)",
    )
    p.add_argument("--seed", type=int, default=None)
    p.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override an input-document entry (repeatable, dotted paths)",
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    out = args.out or os.environ.get(OUTPUT_DIR_ENV) or "."
    try:
        os.makedirs(out, exist_ok=True)
        if args.command == "reproduce":
            if args.overrides:
                raise ValidationError("reproduce accepts no --set overrides")
            return cmd_reproduce(out, args.seed)
        doc = load_json(args.input)
        if not isinstance(doc, dict):
            raise SchemaError(f"{args.input}: top-level JSON must be an object")
        doc = apply_overrides(doc, args.overrides, args.command)
        handler = {
            "check-theta": cmd_check_theta,
            "limit-analyze": cmd_limit_analyze,
            "simulate": cmd_simulate,
            "solve-transport": cmd_solve_transport,
        }[args.command]
        return handler(doc, out, args.seed)
    except (SchemaError, ExpressionError, ValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, TypeError, KeyError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
