import json
import math

import numpy as np
import pytest
from shapely.geometry import LineString

from escapekit.errors import PreconditionError, ResolutionError
from escapekit.geometry import Polyline
from escapekit.lemmas import (
    SyntheticTract,
    family_tract,
    fat_control_tract,
    proximity_check,
    run_campaign,
    run_control,
    run_trial,
    separation_check,
    separation_check_exact,
    serpentine_tract,
    strip_tract,
)
from escapekit.models import TWO_PI


@pytest.fixture(scope="module")
def hook():
    """Lower lane from x=14 back to x=3, U-turn up, upper lane out to the truncation."""
    line = LineString([(14, 0), (3, 0), (3, 2.5), (20, 2.5)])
    poly = line.buffer(0.5, cap_style="flat", join_style="mitre")
    return SyntheticTract.from_polygon(poly, 20.0, {"kind": "hook"})


def test_strip_is_convex_case():
    t = strip_tract(1.0)
    for z in (5 + 0j, 12 + 0.3j, 19 - 0.4j):
        v = separation_check(t, z, 4.0)
        assert v.in_unbounded and v.contained and v.stable
        assert separation_check_exact(t, z, 4.0) == (True, True)


def test_hook_far_end(hook):
    v = separation_check(hook, 12 + 2.5j, 8.0)
    assert v.in_unbounded and v.contained
    assert separation_check_exact(hook, 12 + 2.5j, 8.0) == (True, True)


def test_hook_finger(hook):
    v = separation_check(hook, 11 + 0j, 8.0)
    assert not v.in_unbounded
    assert v.consistent
    assert separation_check_exact(hook, 11 + 0j, 8.0)[0] is False


def test_hook_is_a_tract(hook):
    assert hook.period_disjoint
    assert hook.max_vertical_chord() < TWO_PI
    assert hook.neck_width() == pytest.approx(1.0, abs=0.05)


def test_resolution_error(hook):
    with pytest.raises(ResolutionError):
        separation_check(hook, 12 + 2.5j, 8.0, step=0.8)


def test_separation_preconditions(hook):
    with pytest.raises(PreconditionError):
        separation_check(hook, 5 + 2.5j, 8.0)
    with pytest.raises(PreconditionError):
        separation_check(hook, 12 + 1.2j, 8.0)


def test_family_tract_polygon(quarter):
    t = family_tract(quarter)
    assert t.period_disjoint
    v = separation_check(t, 10 + 0j, 2.0)
    assert v.in_unbounded and v.contained


@pytest.mark.parametrize("trial", range(8))
def test_grid_agrees_with_exact_oracle(trial):
    res = run_trial(trial, seed=42)
    for z, v in res.separation:
        assert (v.in_unbounded, v.contained) == separation_check_exact(res.tract, z, res.R)


@pytest.mark.parametrize("seed", range(20))
def test_serpentines_are_tracts(seed):
    t = serpentine_tract(np.random.default_rng(seed))
    assert t.period_disjoint
    assert t.max_vertical_chord() < TWO_PI
    assert 0.5 <= t.params["height"] <= 2.0
    assert 1 <= t.params["turns"] <= 4
    assert t.polygon.is_valid


def test_proximity_shifted_curve():
    t = strip_tract(1.0)
    c0 = Polyline(np.linspace(1, 20, 100) - 0.25j, 20.0)
    v = proximity_check(t, c0, c0.translated(0.5j))
    assert v.sup_0 == pytest.approx(0.5) and v.sup_1 == pytest.approx(0.5)
    assert v.holds


def test_proximity_identical():
    t = strip_tract(1.0)
    c0 = Polyline(np.linspace(1, 20, 100) + 0.1j, 20.0)
    v = proximity_check(t, c0, c0)
    assert v.sup_0 == 0 and v.sup_1 == 0


def test_proximity_far_parallel_curve(hook):
    spine = Polyline(np.array([13.9 + 0j, 3 + 0j, 3 + 2.5j, 20 + 2.5j]), 20.0)
    tail = Polyline(np.array([17 + 2.5j, 20 + 2.5j]), 20.0)
    v = proximity_check(hook, spine, tail)
    # the spine wanders far from the short tail, but the tail stays close to the spine
    assert v.sup_0 > TWO_PI
    assert v.sup_1 == pytest.approx(0, abs=1e-12)
    assert v.holds


def test_proximity_curve_leaving_tract():
    t = strip_tract(1.0)
    c0 = Polyline(np.linspace(1, 20, 10) + 0j, 20.0)
    with pytest.raises(PreconditionError):
        proximity_check(t, c0, c0.translated(2j))
    with pytest.raises(PreconditionError):
        proximity_check(t, c0, Polyline(np.array([1 + 0j, 10 + 0j]), 20.0))


def test_control_has_power():
    ctl = run_control()
    assert not ctl.period_disjoint
    assert fat_control_tract().max_vertical_chord() > TWO_PI
    assert not ctl.separation.consistent
    assert not ctl.proximity.holds
    assert ctl.violations == 2


def test_trials_are_reproducible():
    a, b = run_trial(3, seed=9), run_trial(3, seed=9)
    assert a.to_dict() == b.to_dict()


def test_small_campaign_report():
    rep = run_campaign(trials=6, seed=1, threads=2)
    assert rep.passed
    data = json.loads(json.dumps(rep.to_dict()))
    assert data["trials"] == 6
    assert data["control"]["violations"] >= 1
    assert all("tract" not in r for r in data["results"])
