"""Jump-intensity measures and the canonical truncation function.

A measure is represented by finitely many atoms plus piecewise densities on
intervals bounded away from zero (one-dimensional pieces).  Integrals against
the density pieces use Gauss-Legendre quadrature with per-piece node counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence, Tuple

import numpy as np

DEFAULT_QUAD_NODES = 64

# cap on the numerically verified integral of |x|^2 ∧ 1 for density pieces
DEFAULT_MASS_CAP = 1e8


class QuadratureError(RuntimeError):
    """A density evaluated to a non-finite value on a quadrature node."""


@lru_cache(maxsize=64)
def _leggauss(n: int) -> Tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(n)


def gauss_legendre_nodes(lo: float, hi: float, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for Gauss-Legendre quadrature on [lo, hi]."""
    x, w = _leggauss(n)
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    return mid + half * x, half * w


@dataclass(frozen=True)
class TruncationRule:
    """Projection of jumps onto the closed unit ball: h(x) = x * min(1, 1/|x|)."""

    dimension: int
    rule: str = "canonical-ball-projection"

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        if self.rule != "canonical-ball-projection":
            raise ValueError(f"unknown truncation rule {self.rule!r}")

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        scalar_input = x.ndim == 0
        if scalar_input:
            if self.dimension != 1:
                raise ValueError("scalar input requires dimension 1")
            x = x[None]
        if x.shape[-1] != self.dimension:
            raise ValueError(
                f"dimension mismatch: expected {self.dimension}, got shape {x.shape}"
            )
        norm = np.linalg.norm(x, axis=-1, keepdims=True)
        scale = np.where(norm > 1.0, 1.0 / np.maximum(norm, 1e-300), 1.0)
        out = x * scale
        return out[0] if scalar_input else out


def truncation_apply(rule: TruncationRule, x) -> np.ndarray:
    """Apply the unit-ball projection truncation to a jump vector."""
    return rule.apply(np.asarray(x, dtype=float))


def truncate_scalar(y: float) -> float:
    """Scalar form of the canonical truncation (d = 1)."""
    return y if abs(y) <= 1.0 else float(np.sign(y))


@dataclass(frozen=True)
class DensityPiece:
    """A density on an interval [lo, hi] that excludes a neighborhood of 0."""

    lo: float
    hi: float
    density: Callable[[np.ndarray], np.ndarray]
    nodes: int = DEFAULT_QUAD_NODES

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")
        if self.lo < 0.0 < self.hi:
            raise ValueError("density piece must not straddle 0")
        if self.nodes < 8:
            raise ValueError("quadrature node count must be >= 8 per piece")

    def quad(self, lo: float | None = None, hi: float | None = None):
        """Quadrature nodes/weights for the piece, optionally clipped."""
        a = self.lo if lo is None else max(self.lo, lo)
        b = self.hi if hi is None else min(self.hi, hi)
        if b <= a:
            return np.empty(0), np.empty(0)
        x, w = gauss_legendre_nodes(a, b, self.nodes)
        f = np.asarray(self.density(x), dtype=float)
        if not np.all(np.isfinite(f)):
            bad = x[~np.isfinite(f)][0]
            raise QuadratureError(
                f"density non-finite at x={bad:.6g} on piece [{self.lo}, {self.hi}]"
            )
        return x, w * f


@dataclass(frozen=True)
class LevyMeasure:
    """Atoms plus piecewise densities away from zero.

    Atom locations are nonzero d-vectors with positive weights; density pieces
    are one-dimensional (supported only for dimension 1).
    """

    dimension: int
    atoms: Tuple[Tuple[np.ndarray, float], ...] = ()
    density_pieces: Tuple[DensityPiece, ...] = ()
    mass_cap: float = DEFAULT_MASS_CAP

    def __post_init__(self):
        norm_atoms = []
        for loc, w in self.atoms:
            loc = np.atleast_1d(np.asarray(loc, dtype=float))
            if loc.shape != (self.dimension,):
                raise ValueError(f"atom location {loc} has wrong dimension")
            if np.linalg.norm(loc) == 0.0:
                raise ValueError("no atom at 0 allowed")
            if not w > 0:
                raise ValueError("atom weights must be positive")
            loc.setflags(write=False)
            norm_atoms.append((loc, float(w)))
        object.__setattr__(self, "atoms", tuple(norm_atoms))
        if self.density_pieces and self.dimension != 1:
            raise ValueError("density pieces are supported only in dimension 1")
        # finiteness of ∫ |x|^2 ∧ 1 dF, checked numerically against the cap
        mass = self.integrate(lambda x: np.minimum(_sqnorm(x), 1.0))
        if not np.isfinite(mass) or mass > self.mass_cap:
            raise ValueError(f"∫|x|^2∧1 dF = {mass} exceeds cap {self.mass_cap}")

    @staticmethod
    def zero(dimension: int = 1) -> "LevyMeasure":
        return LevyMeasure(dimension=dimension)

    @staticmethod
    def from_atoms(*pairs, dimension: int = 1) -> "LevyMeasure":
        """Build an atomic measure from (location, weight) pairs (d = 1 scalars ok)."""
        atoms = tuple((np.atleast_1d(np.asarray(x, float)), float(w)) for x, w in pairs)
        return LevyMeasure(dimension=dimension, atoms=atoms)

    @property
    def is_atomic(self) -> bool:
        return not self.density_pieces

    def integrate(self, g: Callable[[np.ndarray], np.ndarray]) -> float:
        """∫ g(x) F(dx); g takes a (n, d) array of locations and returns (n,)."""
        total = 0.0
        if self.atoms:
            locs = np.stack([loc for loc, _ in self.atoms])
            ws = np.array([w for _, w in self.atoms])
            total += float(np.dot(ws, np.asarray(g(locs), dtype=float)))
        for piece in self.density_pieces:
            x, w = piece.quad()
            if x.size:
                vals = np.asarray(g(x[:, None]), dtype=float)
                if not np.all(np.isfinite(vals)):
                    raise QuadratureError(
                        f"integrand non-finite on piece [{piece.lo}, {piece.hi}]"
                    )
                total += float(np.dot(w, vals))
        return total

    def integrate_ball(self, g, radius: float) -> float:
        """∫_{|x| <= radius} g(x) F(dx)."""
        total = 0.0
        for loc, w in self.atoms:
            if np.linalg.norm(loc) <= radius:
                total += w * float(np.asarray(g(loc[None, :]), dtype=float)[0])
        for piece in self.density_pieces:
            x, w = piece.quad(lo=-radius, hi=radius)
            if x.size:
                total += float(np.dot(w, np.asarray(g(x[:, None]), dtype=float)))
        return total

    def integrate_complex(self, g) -> complex:
        re = self.integrate(lambda x: np.real(g(x)))
        im = self.integrate(lambda x: np.imag(g(x)))
        return complex(re, im)

    def scaled(self, factor: float) -> "LevyMeasure":
        if factor < 0:
            raise ValueError("scaling factor must be nonnegative")
        if factor == 0:
            return LevyMeasure.zero(self.dimension)
        atoms = tuple((loc, w * factor) for loc, w in self.atoms)
        pieces = tuple(
            DensityPiece(p.lo, p.hi, _scale_density(p.density, factor), p.nodes)
            for p in self.density_pieces
        )
        return LevyMeasure(self.dimension, atoms, pieces, self.mass_cap)

    def combined(self, other: "LevyMeasure") -> "LevyMeasure":
        if other.dimension != self.dimension:
            raise ValueError("dimension mismatch")
        return LevyMeasure(
            self.dimension,
            self.atoms + other.atoms,
            self.density_pieces + other.density_pieces,
            max(self.mass_cap, other.mass_cap),
        )

    def state_key(self):
        """Hashable snapshot used for bit-identity comparisons."""
        atom_key = tuple(
            (loc.tobytes(), w) for loc, w in self.atoms
        )
        piece_key = tuple(
            (p.lo, p.hi, p.nodes, tuple(np.asarray(p.density(_probe(p)), float)))
            for p in self.density_pieces
        )
        return (self.dimension, atom_key, piece_key)


def _probe(piece: DensityPiece) -> np.ndarray:
    return np.linspace(piece.lo, piece.hi, 5)


def _scale_density(density, factor):
    return lambda x: factor * np.asarray(density(x), dtype=float)


def _sqnorm(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.sum(x * x, axis=-1)
