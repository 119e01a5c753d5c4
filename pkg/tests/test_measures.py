import numpy as np
import pytest

from levysot.measures import (
    DensityPiece,
    LevyMeasure,
    QuadratureError,
    TruncationRule,
    gauss_legendre_nodes,
    truncate_scalar,
)


def test_truncation_identity_inside_ball():
    rule = TruncationRule(1)
    x = np.array([[0.3], [-0.9], [1.0]])
    assert np.allclose(rule.apply(x), x)


def test_truncation_projects_outside_ball():
    rule = TruncationRule(2)
    x = np.array([3.0, 4.0])
    out = rule.apply(x)
    assert np.isclose(np.linalg.norm(out), 1.0)
    assert np.allclose(out, x / 5.0)


def test_truncate_scalar():
    assert truncate_scalar(0.5) == 0.5
    assert truncate_scalar(-3.0) == -1.0
    assert truncate_scalar(1.0) == 1.0


def test_truncation_rejects_bad_rule():
    with pytest.raises(ValueError):
        TruncationRule(1, rule="smooth-cutoff")
    with pytest.raises(ValueError):
        TruncationRule(0)


def test_gauss_legendre_exact_on_polynomials():
    x, w = gauss_legendre_nodes(1.0, 2.0, 16)
    # degree-5 polynomial integrated exactly
    assert np.isclose(np.dot(w, x**5), (2.0**6 - 1.0) / 6.0, rtol=1e-13)


def test_density_piece_validation():
    unit = lambda x: np.ones_like(x)
    with pytest.raises(ValueError):
        DensityPiece(2.0, 1.0, unit)
    with pytest.raises(ValueError):
        DensityPiece(-1.0, 1.0, unit)  # straddles 0
    with pytest.raises(ValueError):
        DensityPiece(1.0, 2.0, unit, nodes=4)


def test_density_piece_quadrature_error():
    piece = DensityPiece(1.0, 2.0, lambda x: 1.0 / (x - x))
    with pytest.raises(QuadratureError):
        piece.quad()


def test_atom_validation():
    with pytest.raises(ValueError):
        LevyMeasure.from_atoms((0.0, 1.0))
    with pytest.raises(ValueError):
        LevyMeasure.from_atoms((0.5, 0.0))
    with pytest.raises(ValueError):
        LevyMeasure(dimension=1, atoms=((np.array([1.0, 2.0]), 1.0),))


def test_atomic_integration():
    F = LevyMeasure.from_atoms((0.5, 2.0), (-1.5, 3.0))
    total = F.integrate(lambda x: x[..., 0] ** 2)
    assert np.isclose(total, 2.0 * 0.25 + 3.0 * 2.25)


def test_density_integration_matches_closed_form():
    F = LevyMeasure(
        dimension=1,
        density_pieces=(DensityPiece(1.0, 2.0, lambda x: np.ones_like(x)),),
    )
    assert np.isclose(F.integrate(lambda x: x[..., 0]), 1.5, rtol=1e-12)


def test_mass_cap_enforced():
    with pytest.raises(ValueError):
        LevyMeasure(dimension=1, atoms=((np.array([2.0]), 1e9),))


def test_integrate_ball_includes_boundary():
    F = LevyMeasure.from_atoms((0.5, 2.0), (0.8, 1.0))
    val = F.integrate_ball(lambda x: np.ones(x.shape[0]), 0.5)
    assert np.isclose(val, 2.0)


def test_scaled_and_combined():
    F = LevyMeasure.from_atoms((0.5, 2.0))
    G = F.scaled(3.0)
    assert np.isclose(G.integrate(lambda x: np.ones(x.shape[0])), 6.0)
    assert F.scaled(0.0).is_atomic and not F.scaled(0.0).atoms
    H = F.combined(LevyMeasure.from_atoms((1.0, 1.0)))
    assert len(H.atoms) == 2
    with pytest.raises(ValueError):
        F.scaled(-1.0)


def test_state_key_distinguishes_measures():
    F = LevyMeasure.from_atoms((0.5, 2.0))
    G = LevyMeasure.from_atoms((0.5, 2.0))
    H = LevyMeasure.from_atoms((0.5, 2.5))
    assert F.state_key() == G.state_key()
    assert F.state_key() != H.state_key()
