"""Monte Carlo sampling of one-dimensional Levy-type paths and marginal
statistics (empirical characteristic functions, Kolmogorov-Smirnov distances).

Randomness comes from the counter-based Philox generator with one substream
per path, keyed as seed XOR path_index, so results are reproducible and do not
depend on how paths are chunked across workers.  Jumps above the threshold eps
are sampled as compound Poisson; jumps below it are either dropped or replaced
by a centered Gaussian matching their variance rate (Asmussen-Rosinski
substitution).  Compound-Poisson increments from {eps < |x| <= 1} are centered
by their mean, matching the unit-ball truncation convention of the triplets.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .measures import LevyMeasure
from .triplets import LevyTriplet, levy_exponent
from .limits import TripletSequence

MAX_EXPECTED_JUMPS = 1e8


class JumpIntensityError(RuntimeError):
    """Expected number of sampled jumps per path exceeds the overflow cap."""


@dataclass(frozen=True)
class SimulationConfig:
    horizon: float = 1.0
    n_steps: int = 1
    n_paths: int = 10_000
    seed: int = 0
    small_jump_threshold: float = 1e-3
    gaussian_compensation: bool = True

    def __post_init__(self):
        if self.horizon <= 0 or self.n_steps < 1 or self.n_paths < 1:
            raise ValueError("horizon, n_steps, n_paths must be positive")
        if not 0.0 <= self.small_jump_threshold <= 1.0:
            raise ValueError("small_jump_threshold must lie in [0, 1]")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 bits")


@dataclass(frozen=True)
class PathBundle:
    time_grid: np.ndarray
    values: np.ndarray  # (n_paths, n_steps + 1)
    jump_log: Optional[Tuple[Tuple[Tuple[float, float], ...], ...]] = None

    @property
    def terminal(self) -> np.ndarray:
        return self.values[:, -1]


@dataclass(frozen=True)
class _StepModel:
    """Per-step sampling data derived from one triplet."""

    drift: float
    diffusion_std: float  # per unit sqrt(time)
    jump_locations: np.ndarray  # sampled discretely, |x| > eps
    jump_intensities: np.ndarray
    compensator: float  # mean rate of compensated jumps in (eps, 1]
    small_std: float  # Gaussian substitution std per unit sqrt(time)


def _build_step_model(t: LevyTriplet, eps: float, compensate_small: bool) -> _StepModel:
    if t.dimension != 1:
        raise NotImplementedError("path simulation is implemented for d = 1")
    locs: List[float] = []
    lams: List[float] = []
    small_var = 0.0
    comp = 0.0
    for loc, w in t.F.atoms:
        x = float(loc[0])
        if abs(x) > eps:
            locs.append(x)
            lams.append(w)
            if abs(x) <= 1.0:
                comp += w * x
        else:
            small_var += w * x * x
    for piece in t.F.density_pieces:
        xq, wq = piece.quad()
        for x, w in zip(xq, wq):
            if w <= 0:
                continue
            if abs(x) > eps:
                locs.append(float(x))
                lams.append(float(w))
                if abs(x) <= 1.0:
                    comp += w * x
            else:
                small_var += w * x * x
    return _StepModel(
        drift=float(t.b[0]),
        diffusion_std=math.sqrt(max(float(t.c[0, 0]), 0.0)),
        jump_locations=np.array(locs),
        jump_intensities=np.array(lams),
        compensator=float(comp),
        small_std=math.sqrt(small_var) if compensate_small else 0.0,
    )


def constant_schedule(t: LevyTriplet) -> Callable[[float], LevyTriplet]:
    return lambda _t: t


def piecewise_schedule(
    times: Sequence[float], triplets: Sequence[LevyTriplet]
) -> Callable[[float], LevyTriplet]:
    """Left-continuous piecewise-constant schedule on [times[k], times[k+1])."""
    times = np.asarray(times, dtype=float)
    trips = list(triplets)
    if times.size != len(trips):
        raise ValueError("times and triplets must have equal length")

    def schedule(t: float) -> LevyTriplet:
        k = int(np.searchsorted(times, t, side="right") - 1)
        return trips[max(0, min(k, len(trips) - 1))]

    return schedule


def _simulate_chunk(
    paths: Sequence[int],
    models: Sequence[_StepModel],
    dt: float,
    x0: float,
    seed: int,
    gaussian_compensation: bool,
    record_jumps: bool,
    time_grid: np.ndarray,
):
    n_steps = len(models)
    out = np.empty((len(paths), n_steps + 1))
    logs = [] if record_jumps else None
    for row, i in enumerate(paths):
        rng = np.random.Generator(np.random.Philox(key=seed ^ i))
        x = x0
        out[row, 0] = x
        log: List[Tuple[float, float]] = []
        normals = rng.standard_normal(n_steps)
        small = rng.standard_normal(n_steps) if gaussian_compensation else None
        for k, m in enumerate(models):
            dx = m.drift * dt + m.diffusion_std * math.sqrt(dt) * normals[k]
            if m.jump_locations.size:
                counts = rng.poisson(m.jump_intensities * dt)
                dx += float(counts @ m.jump_locations) - m.compensator * dt
                if record_jumps:
                    for loc, cnt in zip(m.jump_locations, counts):
                        for _ in range(int(cnt)):
                            log.append((float(time_grid[k + 1]), float(loc)))
            if small is not None and m.small_std > 0.0:
                dx += m.small_std * math.sqrt(dt) * small[k]
            x += dx
            out[row, k + 1] = x
        if record_jumps:
            logs.append(tuple(log))
    return out, logs


def simulate_paths(
    schedule: Callable[[float], LevyTriplet] | LevyTriplet,
    x0: float,
    cfg: SimulationConfig,
    n_workers: int = 1,
    record_jumps: bool = False,
) -> PathBundle:
    """Sample paths under a piecewise-constant triplet schedule.

    Deterministic given the config seed, independently of ``n_workers``.
    """
    if isinstance(schedule, LevyTriplet):
        schedule = constant_schedule(schedule)
    dt = cfg.horizon / cfg.n_steps
    time_grid = np.linspace(0.0, cfg.horizon, cfg.n_steps + 1)
    eps = cfg.small_jump_threshold
    models = [
        _build_step_model(schedule(float(time_grid[k])), eps, cfg.gaussian_compensation)
        for k in range(cfg.n_steps)
    ]
    expected_jumps = sum(float(np.sum(m.jump_intensities)) * dt for m in models)
    if expected_jumps > MAX_EXPECTED_JUMPS:
        raise JumpIntensityError(
            f"expected jumps per path {expected_jumps:.3g} exceeds {MAX_EXPECTED_JUMPS:.0e}"
        )

    all_paths = range(cfg.n_paths)
    if n_workers <= 1:
        values, logs = _simulate_chunk(
            all_paths, models, dt, float(x0), cfg.seed,
            cfg.gaussian_compensation, record_jumps, time_grid,
        )
    else:
        chunks = np.array_split(np.arange(cfg.n_paths), n_workers)
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(
                pool.map(
                    lambda idx: _simulate_chunk(
                        idx, models, dt, float(x0), cfg.seed,
                        cfg.gaussian_compensation, record_jumps, time_grid,
                    ),
                    [c for c in chunks if c.size],
                )
            )
        values = np.vstack([r[0] for r in results])
        logs = None
        if record_jumps:
            logs = []
            for r in results:
                logs.extend(r[1])
    return PathBundle(time_grid, values, tuple(logs) if record_jumps else None)


def empirical_cf(samples: np.ndarray, u_grid) -> np.ndarray:
    """(1/N) sum of e^{i u X} per frequency."""
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("samples must be nonempty")
    u = np.atleast_1d(np.asarray(u_grid, dtype=float))
    return np.exp(1j * np.outer(u, samples)).mean(axis=1)


def cf_distance(samples, t: LevyTriplet, horizon: float, u_grid) -> float:
    """Sup over the grid of |empirical cf - exp(T psi)|; 0 on an empty grid."""
    u = np.atleast_1d(np.asarray(u_grid, dtype=float))
    if u.size == 0:
        return 0.0
    emp = empirical_cf(samples, u)
    model = np.array([np.exp(horizon * levy_exponent(t, ui)) for ui in u])
    return float(np.max(np.abs(emp - model)))


def marginal_ks(samples, reference_cdf: Callable[[np.ndarray], np.ndarray]) -> float:
    """Two-sided Kolmogorov-Smirnov statistic against a reference CDF."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    cdf = np.asarray(reference_cdf(x), dtype=float)
    upper = np.arange(1, n + 1) / n - cdf
    lower = cdf - np.arange(0, n) / n
    return float(max(upper.max(), lower.max()))


def gaussian_cdf(mean: float, variance: float) -> Callable[[np.ndarray], np.ndarray]:
    if variance <= 0:
        return lambda x: (np.asarray(x, float) >= mean).astype(float)
    return lambda x: stats.norm.cdf(x, loc=mean, scale=math.sqrt(variance))


def marginal_cdf(t: LevyTriplet, horizon: float, x0: float = 0.0):
    """Closed-form terminal CDF for Gaussian or small atomic-jump triplets.

    Supported: no jumps (Gaussian), or c = 0 with at most 3 atoms (compound
    Poisson via enumeration of jump counts).  Returns None otherwise.
    """
    if t.dimension != 1:
        return None
    b, c = float(t.b[0]), float(t.c[0, 0])
    if not t.F.is_atomic:
        return None
    atoms = [(float(loc[0]), w) for loc, w in t.F.atoms]
    if not atoms:
        return gaussian_cdf(x0 + b * horizon, c * horizon)
    if c != 0.0 or len(atoms) > 3:
        return None
    # compensated drift: compound Poisson shifted by b*T minus the truncation
    # compensator of each atom
    shift = x0 + b * horizon
    for x, w in atoms:
        if abs(x) <= 1.0:
            shift -= w * x * horizon

    supports = []
    for x, w in atoms:
        lam = w * horizon
        kmax = int(stats.poisson.ppf(1.0 - 1e-12, lam)) + 1
        ks = np.arange(kmax + 1)
        supports.append((x * ks, stats.poisson.pmf(ks, lam)))
    points = np.array([0.0])
    probs = np.array([1.0])
    for vals, pmf in supports:
        points = (points[:, None] + vals[None, :]).ravel()
        probs = (probs[:, None] * pmf[None, :]).ravel()
    order = np.argsort(points)
    points, probs = points[order] + shift, probs[order]
    cum = np.cumsum(probs)

    def cdf(x):
        idx = np.searchsorted(points, np.asarray(x, dtype=float), side="right")
        return np.where(idx > 0, cum[np.maximum(idx - 1, 0)], 0.0)

    return cdf


@dataclass(frozen=True)
class ConvergenceReport:
    n_schedule: Tuple[int, ...]
    cf_distances: Tuple[float, ...]
    ks_distances: Tuple[Optional[float], ...]
    decreasing_cf: bool
    decreasing_ks: Optional[bool]
    final_cf: float
    final_ks: Optional[float]


def convergence_experiment(
    seq: TripletSequence,
    target: LevyTriplet,
    cfg: SimulationConfig,
    u_grid,
) -> ConvergenceReport:
    """Simulate terminal marginals along the sequence and compare to a target law."""
    cdf = marginal_cdf(target, cfg.horizon)
    cfs, kss = [], []
    for n in seq.n_schedule:
        bundle = simulate_paths(seq.index_map(n), 0.0, replace(cfg, seed=cfg.seed + n))
        term = bundle.terminal
        cfs.append(cf_distance(term, target, cfg.horizon, u_grid))
        kss.append(marginal_ks(term, cdf) if cdf is not None else None)
    dec_cf = bool(np.all(np.diff(cfs) < 0))
    dec_ks = bool(np.all(np.diff([k for k in kss]) < 0)) if cdf is not None else None
    return ConvergenceReport(
        seq.n_schedule, tuple(cfs), tuple(kss), dec_cf, dec_ks, cfs[-1],
        kss[-1] if cdf is not None else None,
    )
