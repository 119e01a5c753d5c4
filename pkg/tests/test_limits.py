import numpy as np
import pytest

from levysot import fixtures
from levysot.limits import (
    LimitStructure,
    TripletSequence,
    closedness_probe,
    default_u_grid,
    diffusion_creation_diagnostic,
    exponent_limit_profile,
    limit_triplet_identify,
    project_to_family,
)
from levysot.measures import LevyMeasure
from levysot.serialize import family_from_dict, sequence_from_dict
from levysot.triplets import LevyTriplet, ThetaFamily, levy_exponent


def shrinking_jump_sequence() -> TripletSequence:
    return sequence_from_dict(fixtures.shrinking_jump_sequence_doc())


def test_schedule_validation():
    with pytest.raises(ValueError):
        TripletSequence(lambda n: None, (10, 10, 100))
    with pytest.raises(ValueError):
        TripletSequence(lambda n: None, (0, 10))


def test_condition_b_bound_along_schedule():
    assert np.isclose(shrinking_jump_sequence().condition_b_bound(), 1.0)


def test_profile_on_constant_sequence_is_exact():
    t = LevyTriplet.scalar(0.3, 1.2)
    seq = TripletSequence(lambda n: t, (10, 100, 1000))
    profile = exponent_limit_profile(seq, np.array([0.7, 1.9]))
    for entry in profile.entries:
        assert entry.limit == levy_exponent(t, entry.u)
        assert entry.error_estimate == 0.0
        assert entry.cauchy


def test_diffusion_diagnostic_verdicts():
    created = diffusion_creation_diagnostic(shrinking_jump_sequence())
    assert created.verdict == "diffusion-created"
    assert abs(created.estimate - 1.0) < 1e-9

    cp = TripletSequence(
        lambda n: LevyTriplet.scalar(0.0, 0.0, LevyMeasure.from_atoms((0.5, 2.0))),
        (10, 100, 1000),
    )
    pure = diffusion_creation_diagnostic(cp)
    assert pure.verdict == "purely-discontinuous-limit"
    assert pure.estimate == 0.0
    with pytest.raises(ValueError):
        diffusion_creation_diagnostic(cp, delta_schedule=(0.1, 0.2))


def test_limit_identification_recovers_known_triplet():
    target = LevyTriplet.scalar(0.4, 0.9, LevyMeasure.from_atoms((0.5, 1.5)))
    seq = TripletSequence(lambda n: target, (10, 100))
    profile = exponent_limit_profile(seq, default_u_grid())
    fitted, resid = limit_triplet_identify(profile, LimitStructure((0.5,)))
    assert resid < 1e-10
    assert np.isclose(fitted.b[0], 0.4, atol=1e-8)
    assert np.isclose(fitted.c[0, 0], 0.9, atol=1e-8)
    assert np.isclose(fitted.F.atoms[0][1], 1.5, atol=1e-8)


def test_limit_identification_underdetermined():
    profile = exponent_limit_profile(
        TripletSequence(lambda n: LevyTriplet.scalar(0.0, 1.0), (10, 100)),
        np.array([1.0]),
    )
    with pytest.raises(ValueError):
        limit_triplet_identify(profile, LimitStructure((0.5, 0.7, 0.9)))


def test_project_to_family_recovers_member():
    fam = ThetaFamily(
        parameter_box=((0.0, 4.0),),
        triplet_map=lambda p: LevyTriplet.scalar(0.0, float(p[0])),
    )
    params, dist = project_to_family(fam, LevyTriplet.scalar(0.0, 2.5))
    assert dist < 1e-8
    assert np.isclose(params[0], 2.5, atol=1e-6)


def test_closedness_probe_inconclusive_outside_family():
    # scheduled triplets carry drift the family cannot produce
    fam = ThetaFamily(
        parameter_box=((0.0, 4.0),),
        triplet_map=lambda p: LevyTriplet.scalar(0.0, float(p[0])),
    )
    seq = TripletSequence(lambda n: LevyTriplet.scalar(1.0, 1.0), (10, 100))
    report = closedness_probe(fam, seq, use_u_map=False)
    assert report.limit_in_set == "inconclusive"


def test_closedness_probe_member_limit_is_yes():
    fam = ThetaFamily(
        parameter_box=((0.0, 4.0),),
        triplet_map=lambda p: LevyTriplet.scalar(0.0, float(p[0])),
    )
    seq = TripletSequence(
        lambda n: LevyTriplet.scalar(0.0, 2.0 + 1.0 / n), (10, 100, 1000, 10000)
    )
    report = closedness_probe(fam, seq, use_u_map=False)
    assert report.limit_in_set == "yes"
    assert np.isclose(report.witness_params[0], 2.0, atol=1e-2)
