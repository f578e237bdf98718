"""Postsingular orbits and the rescaling that normalizes a model.

The recipe: iterate every singular value until it settles, rescale by
``z -> K z`` so the rescaled postsingular set sits well inside the unit
disk, then keep doubling ``K`` until the logarithmic transform is
expanding (``|F'| >= 2``) on its tracts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from escapekit.errors import ConfigurationError, PreconditionError
from escapekit.models import (
    EntireModel,
    EscapedByOverflow,
    ExpansionCertificate,
    LogTransform,
    TractLabel,
    certify_expansion,
    evaluate_model,
)

UNBOUNDED_MODULUS = 1e100
SETTLE_RUN = 20
DISK_MARGIN = 0.5
MAX_SCALE = 2.0 ** 60


@dataclass(frozen=True)
class PostsingularReport:
    orbits: tuple
    converged: tuple
    unbounded: tuple
    bound_radius: float
    horizon: int
    settle_tol: float

    @property
    def all_converged(self):
        return all(self.converged)

    @property
    def unbounded_evidence(self):
        return any(self.unbounded)

    def rescaled_radius(self, K):
        return self.bound_radius / K

    def to_dict(self):
        return {
            "orbits": [[[z.real, z.imag] for z in orb] for orb in self.orbits],
            "converged": list(self.converged),
            "unbounded": list(self.unbounded),
            "bound_radius": self.bound_radius,
            "horizon": self.horizon,
            "settle_tol": self.settle_tol,
        }


def postsingular_orbit(model: EntireModel, horizon=200, settle_tol=1e-9) -> PostsingularReport:
    """Forward orbits of the singular values up to ``horizon`` steps.

    An orbit counts as converged once ``SETTLE_RUN`` consecutive steps move
    less than ``settle_tol``; iteration stops there. An orbit leaving the
    disk of radius 1e100 (or overflowing) is flagged unbounded.
    """
    if horizon < 1:
        raise PreconditionError("horizon must be at least 1")
    orbits, converged, unbounded = [], [], []
    for sv in model.singular_values:
        z = complex(sv)
        pts = [z]
        run = 0
        done = blew_up = False
        for _ in range(horizon):
            nxt = evaluate_model(model, z)
            if isinstance(nxt, EscapedByOverflow) or not np.isfinite(nxt) or abs(nxt) > UNBOUNDED_MODULUS:
                blew_up = True
                break
            run = run + 1 if abs(nxt - z) < settle_tol else 0
            z = nxt
            pts.append(z)
            if run >= SETTLE_RUN:
                done = True
                break
        orbits.append(np.array(pts))
        converged.append(done)
        unbounded.append(blew_up)
    bound = max(float(np.abs(o).max()) for o in orbits)
    return PostsingularReport(tuple(orbits), tuple(converged), tuple(unbounded), bound, horizon, settle_tol)


@dataclass(frozen=True)
class WPreimageCheck:
    ok: bool
    checked: int
    witness: complex = None

    def __bool__(self):
        return self.ok


def verify_W_preimage(lt: LogTransform, samples=10_000, rng=0) -> WPreimageCheck:
    """Check on sampled tract points that ``|f_K(exp w)| > 1``."""
    if samples <= 0:
        return WPreimageCheck(True, 0)
    rng = np.random.default_rng(rng)
    labels = [TractLabel(b, m) for b in lt.bases for m in (-1, 0, 1)]
    per = -(-samples // len(labels))
    checked = 0
    for label in labels:
        n = min(per, samples - checked)
        if n <= 0:
            break
        w = lt.sample_tract_points(n, rng, label=label)
        with np.errstate(over="ignore"):
            mod = np.abs(lt.rescaled(np.exp(w)))
        bad = ~(mod > 1.0)
        checked += n
        if bad.any():
            return WPreimageCheck(False, checked, complex(w[np.argmax(bad)]))
    return WPreimageCheck(True, checked)


@dataclass(frozen=True)
class Normalization:
    transform: LogTransform
    report: PostsingularReport
    expansion: ExpansionCertificate
    tried_scales: tuple

    @property
    def rescaled_radius(self):
        return self.report.rescaled_radius(self.transform.scale_K)

    def to_dict(self):
        lt = self.transform
        return {
            "transform": {
                **lt.to_dict(),
                "attraction_threshold": lt.attraction_threshold,
                "tract_threshold": lt.tract_threshold,
                "tract_inf_re": lt.tract_inf_re(),
            },
            "certificates": {
                "postsingular_radius_rescaled": self.rescaled_radius,
                "disk_margin": DISK_MARGIN,
                "expansion_bound": self.expansion.analytic_bound,
                "expansion_min_sampled": self.expansion.min_observed,
            },
            "tried_scales": list(self.tried_scales),
            "postsingular": self.report.to_dict(),
        }


def certificates_pass(lt: LogTransform, report: PostsingularReport, samples=2000):
    """Both certificates at this scale: disk containment and expansion."""
    if report.rescaled_radius(lt.scale_K) > DISK_MARGIN:
        return False
    if lt.expansion_bound() < 2.0:
        return False
    return bool(verify_W_preimage(lt, samples))


def choose_rescaling(model: EntireModel, report: PostsingularReport, samples=2000) -> Normalization:
    """Doubling search for ``K`` starting at ``max(1, 2 * bound_radius)``."""
    if report.unbounded_evidence:
        raise PreconditionError("a singular orbit is unbounded; the model is outside the supported class")
    if not report.all_converged:
        raise PreconditionError("singular orbits have not settled; boundedness is inconclusive")
    K = max(1.0, 2.0 * report.bound_radius)
    tried = []
    while K <= MAX_SCALE:
        tried.append(K)
        lt = LogTransform(model, K)
        if certificates_pass(lt, report, samples):
            cert = certify_expansion(lt, samples)
            return Normalization(lt, report, cert, tuple(tried))
        K *= 2.0
    raise ConfigurationError(f"no certified scale up to {MAX_SCALE:g}")


def normalize(model: EntireModel, horizon=200, settle_tol=1e-9, samples=2000) -> Normalization:
    return choose_rescaling(model, postsingular_orbit(model, horizon, settle_tol), samples)


def rescaled_iterate(model: EntireModel, K, z, n):
    """``f_K^n(z)`` by direct iteration of ``f_K(z) = f(K z) / K``."""
    lt = LogTransform(model, K)
    z = complex(z)
    for _ in range(n):
        z = complex(lt.rescaled(z))
    return z


__all__ = [
    "Normalization",
    "PostsingularReport",
    "WPreimageCheck",
    "certificates_pass",
    "choose_rescaling",
    "normalize",
    "postsingular_orbit",
    "rescaled_iterate",
    "verify_W_preimage",
]

