import math

import numpy as np
import pytest

from escapekit.errors import PreconditionError
from escapekit.models import EntireModel, LogTransform
from escapekit.normalization import (
    certificates_pass,
    choose_rescaling,
    normalize,
    postsingular_orbit,
    rescaled_iterate,
    verify_W_preimage,
)


def attracting_fixed_point(lam):
    """Oracle: the real fixed point of lam * e^x below 1, by bisection on a monotone function."""
    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if lam * math.exp(mid) - mid > 0:
            lo = mid
        else:
            hi = mid
    return lo


def test_quarter_converges_to_fixed_point():
    rep = postsingular_orbit(EntireModel.exponential(0.25), 200, 1e-9)
    assert rep.all_converged and not rep.unbounded_evidence
    assert rep.orbits[0][1] == pytest.approx(0.25)
    assert rep.orbits[0][-1] == pytest.approx(attracting_fixed_point(0.25), abs=1e-8)
    assert rep.bound_radius < 0.5


def test_lambda_one_is_unbounded():
    rep = postsingular_orbit(EntireModel.exponential(1.0))
    assert rep.unbounded_evidence
    with pytest.raises(PreconditionError):
        choose_rescaling(EntireModel.exponential(1.0), rep)


def test_cosh_small_parameter_converges():
    for a in (0.1, 0.2, 0.3):
        rep = postsingular_orbit(EntireModel.cosh(a))
        assert rep.all_converged and len(rep.orbits) == 2


def test_unconverged_report_is_rejected():
    # 3 steps are not enough to settle
    rep = postsingular_orbit(EntireModel.exponential(0.25), horizon=3)
    assert not rep.all_converged
    with pytest.raises(PreconditionError):
        choose_rescaling(EntireModel.exponential(0.25), rep)


def test_quarter_normalization():
    norm = normalize(EntireModel.exponential(0.25))
    assert norm.tried_scales[0] == 1.0
    # K = 1 already puts P inside the disk; the expansion bound forces a doubling
    lt1 = LogTransform(EntireModel.exponential(0.25), 1.0)
    assert norm.report.rescaled_radius(1.0) < 0.5
    assert lt1.expansion_bound() < 2
    assert norm.transform.scale_K == 2.0
    assert norm.rescaled_radius < 0.5
    assert norm.expansion.analytic_bound >= 2


@pytest.mark.parametrize("model", [EntireModel.exponential(0.25), EntireModel.exponential(0.1),
                                   EntireModel.cosh(0.2), EntireModel.cosh(0.3)])
def test_certificates_monotone_under_doubling(model):
    norm = normalize(model)
    rep = norm.report
    K = norm.transform.scale_K
    for _ in range(3):
        K *= 2
        assert certificates_pass(LogTransform(model, K), rep)


def test_rescaled_postsingular_orbit_in_half_disk():
    norm = normalize(EntireModel.exponential(0.25))
    K = norm.transform.scale_K
    for orb in norm.report.orbits:
        assert np.all(np.abs(orb) / K <= 0.5)


def test_conjugacy_consistency():
    rng = np.random.default_rng(0)
    for model in (EntireModel.exponential(0.25), EntireModel.cosh(0.3)):
        K = 2.0
        for z in rng.uniform(-1, 1, 10) + 1j * rng.uniform(-1, 1, 10):
            for n in range(1, 11):
                lhs = rescaled_iterate(model, K, z, n)
                w = K * z
                for _ in range(n):
                    w = model(w)
                rhs = w / K
                assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(rhs))


def test_w_preimage_sampling():
    lt = normalize(EntireModel.exponential(0.25)).transform
    assert verify_W_preimage(lt, 10_000)


def test_w_preimage_fault_injection():
    """A transform whose tract inequality is mis-thresholded must be caught."""

    class Mislabelled(LogTransform):
        @property
        def tract_threshold(self):
            return super().tract_threshold / 50

    lt = Mislabelled(EntireModel.exponential(0.25), 2.0)
    check = verify_W_preimage(lt, 10_000)
    assert not check
    assert abs(lt.rescaled(np.exp(check.witness))) <= 1


def test_w_preimage_zero_samples():
    lt = LogTransform(EntireModel.exponential(0.25), 2.0)
    assert verify_W_preimage(lt, 0)
