import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from escapekit.errors import PreconditionError
from escapekit.models import TWO_PI, EntireModel, LogTransform, TractLabel
from escapekit.symbolic import (
    ExternalAddress,
    OrbitRecord,
    OrbitStep,
    Verdict,
    VerdictKind,
    anchor_from_address,
    backward_extend_address,
    first_compliant_index,
    forward_address,
    growth_defect,
    plane_orbit,
    track_orbit,
)

QUARTER = LogTransform(EntireModel.exponential(0.25), 2.0)


def test_real_seed_escapes_monotonically(quarter):
    rec = track_orbit(quarter, 50 + 0j, 10)
    assert rec.verdict.kind is VerdictKind.ESCAPING
    re = rec.re_parts
    assert np.all(np.diff(re) > 0)


def test_attracting_fixed_point_lift_is_bounded(quarter):
    # fixed point of f_K: attracting point of the unscaled map divided by K
    p = 0.25
    for _ in range(200):
        p = 0.25 * math.exp(p)
    rec = track_orbit(quarter, cmath.log(p / quarter.scale_K), 20)
    assert rec.verdict.kind is VerdictKind.BOUNDED


def test_short_horizon_inconclusive(quarter):
    assert track_orbit(quarter, 3 + 0j, 1).verdict.kind is VerdictKind.INCONCLUSIVE
    with pytest.raises(PreconditionError):
        track_orbit(quarter, 20 + 0j, 0)


def test_overflow_steps_are_unlabelled(quarter):
    rec = track_orbit(quarter, 3 + 0j, 10)
    assert rec.steps[-1].overflow and rec.steps[-1].tract is None
    assert rec.verdict.overflow


def test_real_seed_has_constant_address(quarter):
    addr = forward_address(track_orbit(quarter, 0.5 + 0j, 10))
    assert set(addr.labels) == {TractLabel(0, 0)}
    assert len(addr) == 4


def test_vertical_translate_changes_only_first_branch(quarter):
    a = forward_address(track_orbit(quarter, 0.5 + 0j, 10))
    b = forward_address(track_orbit(quarter, 0.5 + TWO_PI * 1j, 10))
    assert b[0] == TractLabel(0, 1)
    assert a.labels[1:] == b.labels[1:]


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=0.1, max_value=40), st.floats(min_value=-1.4, max_value=1.4), st.integers(-3, 3))
def test_translate_equivariance(x, y, k):
    w = complex(x, y)
    a = track_orbit(QUARTER, w, 30)
    b = track_orbit(QUARTER, w + TWO_PI * k * 1j, 30)
    assert a.verdict.kind == b.verdict.kind
    if a.verdict.escaping:
        fa, fb = forward_address(a), forward_address(b)
        assert fb[0] == fa[0].shifted(k)
        assert fa.labels[1:] == fb.labels[1:]


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=0.1, max_value=40), st.floats(min_value=-1.4, max_value=1.4))
def test_shift_equivariance(x, y):
    w = complex(x, y)
    a = track_orbit(QUARTER, w, 30)
    if not a.verdict.escaping or len(forward_address(a)) < 2:
        return
    fw = a.steps[1].point
    b = track_orbit(QUARTER, fw, 29)
    assert b.verdict.escaping
    assert forward_address(b) == forward_address(a).shift()


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=0.1, max_value=40), st.floats(min_value=-1.4, max_value=1.4))
def test_growth_past_threshold(x, y):
    # far out F(w) ~ K e^w, so Re F >= 2 Re w - C with C = 0 for this model
    rec = track_orbit(QUARTER, complex(x, y), 30, escape_re=10)
    if rec.verdict.escaping:
        assert growth_defect(rec) <= 0.0


def test_missing_label_is_precondition_error():
    steps = (OrbitStep(60 + 0j, None, 60.0), OrbitStep(70 + 0j, None, 70.0))
    rec = OrbitRecord(60 + 0j, steps, Verdict(VerdictKind.ESCAPING, 1))
    with pytest.raises(PreconditionError, match="backward_extend_address"):
        forward_address(rec)


def test_non_escaping_has_no_address(quarter):
    with pytest.raises(PreconditionError):
        forward_address(track_orbit(quarter, -5 + 0j, 10))


def test_address_parsing_and_shift():
    a = ExternalAddress.parse("0:0 0:1", horizon=5)
    assert a.tokens() == ["0:0", "0:1", "0:0", "0:1", "0:0"]
    assert ExternalAddress.parse("0:0,0:1") == ExternalAddress.parse("0:0 0:1")
    assert a.shift(2).tokens() == ["0:0", "0:1", "0:0"]
    with pytest.raises(ValueError):
        ExternalAddress.parse("zero")


def test_anchor_orbit_follows_address(quarter):
    addr = ExternalAddress.parse("0:1 0:-1 0:0", 12)
    rec = anchor_from_address(quarter, addr)
    assert rec.verdict.escaping
    assert [s.tract for s in rec.steps[:12]] == list(addr.labels)
    for j in range(11):
        lab = addr[j]
        img = quarter.evaluate_array(rec.steps[j].point, lab.base, lab.branch)
        assert abs(img - rec.steps[j + 1].point) <= 1e-9 * abs(img)


def test_first_compliant_index(quarter):
    rec = track_orbit(quarter, 0.5 + 0j, 10)
    pts = [s.point for s in rec.steps if not s.overflow]
    labels = forward_address(rec).labels
    assert first_compliant_index(quarter, pts, labels) == 0


# backward extension ---------------------------------------------------------------


@pytest.fixture(scope="module")
def wandering():
    """A plane orbit that starts outside the tracts and then runs out along the real axis."""
    lt = LogTransform(EntireModel.exponential(0.25), 4.0)
    z0 = lt.plane_preimage_near(0.9, 0.6 + 1.5j)
    return lt, plane_orbit(lt, z0, 3)


def test_backward_extension_independent_of_pullback_depth(wandering):
    lt, orbit = wandering
    assert lt.tract_label(cmath.log(orbit[0])) is None
    found = {str(backward_extend_address(lt, orbit, 1, pullback_from=k).address) for k in (1, 2, 3)}
    assert len(found) == 1


def test_backward_extension_far_tails_push_forward(wandering):
    """Each far tail maps into the next level's pulled-back ray, which runs far out."""
    lt, orbit = wandering
    ext = backward_extend_address(lt, orbit, 1, pullback_from=3)
    for i, z in enumerate(ext.far_tails):
        assert lt.tract_label(cmath.log(z)) is not None
        assert abs(z) > 10
    assert ext.address.labels[2:] == (TractLabel(0, 0), TractLabel(0, 0))


def test_backward_extension_k0_zero_matches_forward(quarter):
    orbit = plane_orbit(quarter, cmath.exp(3), 1)
    ext = backward_extend_address(quarter, orbit, 0)
    fwd = forward_address(track_orbit(quarter, 3 + 0j, 10))
    assert ext.address == fwd


def test_backward_extension_rejects_non_orbit(quarter):
    with pytest.raises(PreconditionError):
        backward_extend_address(quarter, [cmath.exp(3), 5 + 0j], 0)
    with pytest.raises(PreconditionError):
        backward_extend_address(quarter, [cmath.exp(3)], 2)
