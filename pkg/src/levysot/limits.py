"""Sequence diagnostics: exponent limits, diffusion-creation detection,
limit-triplet identification and closedness probes for triplet families.

The double limit "lim over delta of limsup over n" is approximated by the max
over the tail of the n-schedule and a power-law extrapolation over delta; both
surrogates are recorded in the returned reports.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import lsq_linear, minimize

from .measures import LevyMeasure, truncate_scalar
from .triplets import (
    FeatureMapConfig,
    LevyTriplet,
    ThetaFamily,
    condition_b_value,
    levy_exponent,
    measure_features,
    modified_triplet,
    small_jump_second_moment,
)

DEFAULT_N_SCHEDULE = (10, 100, 1_000, 10_000, 100_000)
DEFAULT_DELTA_SCHEDULE = (0.5, 0.25, 0.1, 0.05, 0.02, 0.01)
TOL_D = 1e-3
DIFFUSION_FAIL_FACTOR = 10.0
TAIL_LENGTH = 3
MEMBERSHIP_TOL = 1e-6


def default_u_grid(extent: float = 2.0, count: int = 42) -> np.ndarray:
    """Symmetric frequency grid on [-extent, extent] avoiding 0."""
    u = np.linspace(-extent, extent, count)
    return u[np.abs(u) > 1e-12]


@dataclass(frozen=True)
class TripletSequence:
    """A sequence n -> (b_n, c_n, F_n) evaluated along a fixed n-schedule."""

    index_map: Callable[[int], LevyTriplet]
    n_schedule: Tuple[int, ...] = DEFAULT_N_SCHEDULE

    def __post_init__(self):
        sched = tuple(int(n) for n in self.n_schedule)
        if any(b <= a for a, b in zip(sched, sched[1:])) or sched[0] < 1:
            raise ValueError("n_schedule must be increasing positive integers")
        object.__setattr__(self, "n_schedule", sched)

    def triplets(self):
        return [self.index_map(n) for n in self.n_schedule]

    def condition_b_bound(self) -> float:
        """Max of the boundedness functional over the schedule (recorded bound)."""
        return max(condition_b_value(t) for t in self.triplets())


@dataclass(frozen=True)
class FrequencyLimit:
    u: float
    values: Tuple[complex, ...]
    limit: complex
    error_estimate: float
    cauchy: bool


@dataclass(frozen=True)
class ExponentProfile:
    n_schedule: Tuple[int, ...]
    entries: Tuple[FrequencyLimit, ...]

    @property
    def u_grid(self) -> np.ndarray:
        return np.array([e.u for e in self.entries])

    @property
    def limits(self) -> np.ndarray:
        return np.array([e.limit for e in self.entries])


def exponent_limit_profile(seq: TripletSequence, u_grid) -> ExponentProfile:
    """Evaluate psi_n on the schedule and extrapolate the pointwise limit."""
    u_grid = np.atleast_1d(np.asarray(u_grid, dtype=float))
    if u_grid.size == 0:
        raise ValueError("u_grid must be nonempty")
    triplets = seq.triplets()
    entries = []
    for u in u_grid:
        vals = [levy_exponent(t, u) for t in triplets]
        if not all(np.isfinite(v) for v in vals):
            raise RuntimeError(f"non-finite exponent at u={u}")
        diffs = np.abs(np.diff(vals))
        err = float(diffs[-1]) if diffs.size else 0.0
        cauchy = bool(np.all(np.diff(diffs) <= max(1e-12, 0.5 * diffs[0]))) if diffs.size > 1 else True
        entries.append(FrequencyLimit(float(u), tuple(vals), vals[-1], err, cauchy))
    return ExponentProfile(seq.n_schedule, tuple(entries))


@dataclass(frozen=True)
class DiffusionReport:
    estimate: float
    verdict: str  # purely-discontinuous-limit | diffusion-created | inconclusive
    profile: Tuple[Tuple[float, float], ...]  # (delta, tail sup of T * mass)


def diffusion_creation_diagnostic(
    seq: TripletSequence,
    delta_schedule: Sequence[float] = DEFAULT_DELTA_SCHEDULE,
    horizon: float = 1.0,
) -> DiffusionReport:
    """Numerical surrogate for the small-jump double-limit criterion."""
    deltas = [float(d) for d in delta_schedule]
    if any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("delta_schedule must be strictly decreasing")
    tail = seq.triplets()[-TAIL_LENGTH:]
    profile = []
    for d in deltas:
        sup = max(horizon * small_jump_second_moment(t.F, d) for t in tail)
        profile.append((d, float(sup)))
    estimate = _extrapolate_delta_profile(profile)
    if estimate <= TOL_D:
        verdict = "purely-discontinuous-limit"
    elif estimate >= DIFFUSION_FAIL_FACTOR * TOL_D:
        verdict = "diffusion-created"
    else:
        verdict = "inconclusive"
    return DiffusionReport(float(estimate), verdict, tuple(profile))


def _extrapolate_delta_profile(profile) -> float:
    """Value at the smallest delta, corrected by a fitted power-law decay."""
    values = np.array([v for _, v in profile])
    deltas = np.array([d for d, _ in profile])
    last = values[-1]
    if last <= 0.0:
        return 0.0
    if np.any(values <= 0.0):
        return float(last)
    slope = np.polyfit(np.log(deltas), np.log(values), 1)[0]
    if slope > 0.2:
        # decaying profile: the delta -> 0 limit of A * delta^p is 0
        return 0.0
    return float(last)


@dataclass(frozen=True)
class LimitStructure:
    """Candidate parametric form for the limit: drift + diffusion + fixed atoms."""

    atom_locations: Tuple[float, ...] = ()


def limit_triplet_identify(
    profile: ExponentProfile, structure: LimitStructure = LimitStructure()
) -> Tuple[LevyTriplet, float]:
    """Least-squares fit of a one-dimensional exponent to the extrapolated limit.

    The exponent is affine in (b, c, atom weights) for fixed atom locations, so
    the fit is linear with sign constraints c >= 0 and weights >= 0.
    """
    u = profile.u_grid
    target = profile.limits
    locs = np.asarray(structure.atom_locations, dtype=float)
    n_params = 2 + locs.size
    if 2 * u.size < n_params:
        raise ValueError("underdetermined fit: fewer frequencies than parameters")
    # columns: b, c, w_1..w_k; rows: Re then Im of psi on the grid
    a_re = np.zeros((u.size, n_params))
    a_im = np.zeros((u.size, n_params))
    a_im[:, 0] = u
    a_re[:, 1] = -0.5 * u**2
    for j, y in enumerate(locs):
        a_re[:, 2 + j] = np.cos(u * y) - 1.0
        a_im[:, 2 + j] = np.sin(u * y) - u * truncate_scalar(y)
    A = np.vstack([a_re, a_im])
    rhs = np.concatenate([target.real, target.imag])
    params = np.linalg.lstsq(A, rhs, rcond=None)[0]
    if np.any(params[1:] < -1e-9):
        # sign constraints active: solve the bounded problem instead
        lb = np.full(n_params, -np.inf)
        lb[1:] = 0.0
        sol = lsq_linear(A, rhs, bounds=(lb, np.full(n_params, np.inf)), tol=1e-14)
        params = sol.x
    params[1:] = np.maximum(params[1:], 0.0)
    F = (
        LevyMeasure.from_atoms(*[(y, w) for y, w in zip(locs, params[2:]) if w > 0])
        if np.any(params[2:] > 0)
        else LevyMeasure.zero(1)
    )
    fitted = LevyTriplet.scalar(params[0], max(params[1], 0.0), F)
    model = A @ params
    resid_c = (model[: u.size] - target.real) + 1j * (model[u.size :] - target.imag)
    residual = float(np.max(np.abs(resid_c)))
    return fitted, residual


@dataclass(frozen=True)
class ClosednessReport:
    limit_in_set: str  # yes | no | inconclusive
    witness_params: Optional[np.ndarray]
    witness_triplet: Optional[LevyTriplet]
    distance: float
    identified: Optional[LevyTriplet]
    fit_residual: float


_PROBE_FEATURES = FeatureMapConfig(m_max=3, u_grid=(np.array([0.5]), np.array([1.0]), np.array([2.0])))
IDENTIFICATION_RESIDUAL_CAP = 0.1


def _triplet_distance(s: LevyTriplet, t: LevyTriplet) -> float:
    return float(
        np.linalg.norm(s.b - t.b)
        + np.linalg.norm(s.c - t.c, "fro")
        + np.linalg.norm(
            measure_features(s.F, _PROBE_FEATURES) - measure_features(t.F, _PROBE_FEATURES)
        )
    )


def project_to_family(
    fam: ThetaFamily,
    target: LevyTriplet,
    use_u_map: bool = False,
    scan_resolution: int = 17,
) -> Tuple[np.ndarray, float]:
    """Nearest family member (optionally through the modified-triplet map).

    Constrained least squares over the parameter box: a coarse scan in a
    normalized unit box followed by Nelder-Mead polish from the best cells.
    """
    lows = np.array([lo for lo, _ in fam.parameter_box])
    highs = np.array([hi for _, hi in fam.parameter_box])
    span = np.where(highs > lows, highs - lows, 1.0)

    def objective(s):
        p = lows + np.clip(s, 0.0, 1.0) * span
        t = fam.at(p)
        if use_u_map:
            t = modified_triplet(t)
        return _triplet_distance(t, target)

    n_params = len(lows)
    axes = [np.linspace(0.0, 1.0, scan_resolution)] * n_params
    scan = np.array(np.meshgrid(*axes, indexing="ij")).reshape(n_params, -1).T
    values = np.array([objective(s) for s in scan])
    order = np.argsort(values)
    best_s, best_v = scan[order[0]], float(values[order[0]])
    for idx in order[:3]:
        if best_v <= 0.1 * MEMBERSHIP_TOL:
            break
        res = minimize(
            objective,
            scan[idx],
            method="Nelder-Mead",
            options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 600},
        )
        if res.fun < best_v:
            best_s, best_v = np.clip(res.x, 0.0, 1.0), float(res.fun)
    return lows + best_s * span, best_v


def closedness_probe(
    fam: ThetaFamily,
    seq: TripletSequence,
    use_u_map: bool,
    structure: LimitStructure = LimitStructure(),
    u_grid=None,
    param_map: Optional[Callable[[int], np.ndarray]] = None,
) -> ClosednessReport:
    """Identify the sequence limit and test whether it stays in the family.

    With ``use_u_map`` the modified-triplet map is applied to both the
    identified limit and the family before the membership test.  When
    ``param_map`` gives the family parameters of each scheduled triplet, the
    membership precheck uses that inversion; otherwise it projects onto the
    box.  The membership tolerance widens with the extrapolation error of the
    exponent profile, since the identified limit is only that accurate.
    """
    u_grid = default_u_grid() if u_grid is None else np.asarray(u_grid, float)
    # precheck: the scheduled triplets must (numerically) lie in the family
    for n in (seq.n_schedule[0], seq.n_schedule[-1]):
        if param_map is not None:
            dist = _triplet_distance(fam.at(param_map(n)), seq.index_map(n))
        else:
            _, dist = project_to_family(fam, seq.index_map(n))
        if dist > 1e-8:
            return ClosednessReport("inconclusive", None, None, float(dist), None, np.inf)
    profile = exponent_limit_profile(seq, u_grid)
    try:
        identified, fit_residual = limit_triplet_identify(profile, structure)
    except ValueError:
        return ClosednessReport("inconclusive", None, None, np.inf, None, np.inf)
    if fit_residual > IDENTIFICATION_RESIDUAL_CAP:
        return ClosednessReport(
            "inconclusive", None, None, np.inf, identified, fit_residual
        )
    target = modified_triplet(identified) if use_u_map else identified
    params, dist = project_to_family(fam, target, use_u_map=use_u_map)
    witness = fam.at(params)
    extrapolation_error = max(e.error_estimate for e in profile.entries)
    tol = MEMBERSHIP_TOL + 3.0 * (extrapolation_error + fit_residual)
    verdict = "yes" if dist <= tol else "no"
    return ClosednessReport(verdict, params, witness, float(dist), identified, fit_residual)
