"""Explicit entire families with closed-form logarithmic transforms.

Two families are modelled:

* exponential  ``f(z) = lam * exp(z)``, singular value ``0``;
* cosh         ``f(z) = a * cosh(z)``, critical values ``+a, -a``.

A :class:`LogTransform` fixes a rescaling ``f_K(z) = f(K z) / K`` and
provides the lift ``F`` with ``exp(F(w)) = f_K(exp(w))`` on the tracts
``{w : |f_K(exp w)| > 1}``. Every tract is a horizontal strip of height
at most ``pi`` that opens to the right; tracts are labelled by a base
index and the ``2 pi i`` translate ("branch") they sit in.

``F`` takes the same value on all translates of a point, so the label
only selects the domain, never the value.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from escapekit.errors import CertificationError, DomainError, ModelFileError

TWO_PI = 2.0 * math.pi
LN2 = math.log(2.0)

# Beyond this real part of an exponent, double precision exp overflows soon.
OVERFLOW_EXPONENT = 700.0


class Family(str, enum.Enum):
    EXPONENTIAL = "exponential"
    COSH = "cosh"


@dataclass(frozen=True)
class EscapedByOverflow:
    """Returned instead of a value when the exponent is too large to evaluate."""

    exponent_re: float

    def __bool__(self):
        return False


@dataclass(frozen=True)
class EntireModel:
    family: Family
    parameter: complex
    singular_values: tuple = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        p = complex(self.parameter)
        if p == 0 or not np.isfinite(p):
            raise ValueError(f"parameter must be finite and nonzero, got {p}")
        object.__setattr__(self, "parameter", p)
        if self.family is Family.EXPONENTIAL:
            sv = (0j,)
        else:
            sv = (p, -p)
        object.__setattr__(self, "singular_values", sv)

    @classmethod
    def exponential(cls, lam):
        return cls(Family.EXPONENTIAL, lam)

    @classmethod
    def cosh(cls, a):
        return cls(Family.COSH, a)

    def __call__(self, z):
        return evaluate_model(self, z)

    def evaluate_array(self, z):
        """Vectorized ``f``; overflowing entries become ``inf``."""
        z = np.asarray(z, dtype=complex)
        with np.errstate(over="ignore", invalid="ignore"):
            if self.family is Family.EXPONENTIAL:
                out = self.parameter * np.exp(z)
                bad = z.real > OVERFLOW_EXPONENT
            else:
                out = self.parameter * np.cosh(z)
                bad = np.abs(z.real) > OVERFLOW_EXPONENT
        return np.where(bad, np.inf, out)

    def escape_coordinate(self, z):
        """Quantity whose growth signals escape: ``Re z`` or ``|Re z|``."""
        if self.family is Family.EXPONENTIAL:
            return np.real(z)
        return np.abs(np.real(z))


def evaluate_model(model: EntireModel, z):
    """``f(z)`` for the family, or :class:`EscapedByOverflow`."""
    z = complex(z)
    if model.family is Family.EXPONENTIAL:
        if z.real > OVERFLOW_EXPONENT:
            return EscapedByOverflow(z.real)
        return model.parameter * complex(np.exp(z))
    if abs(z.real) > OVERFLOW_EXPONENT:
        return EscapedByOverflow(z.real)
    return model.parameter * complex(np.cosh(z))


@dataclass(frozen=True, order=True)
class TractLabel:
    base: int = 0
    branch: int = 0

    def __str__(self):
        return f"{self.base}:{self.branch}"

    @classmethod
    def parse(cls, token):
        try:
            base, branch = token.split(":")
            return cls(int(base), int(branch))
        except ValueError:
            raise ValueError(f"bad tract token {token!r}; expected 'base:branch'") from None

    def shifted(self, k=1):
        return TractLabel(self.base, self.branch + k)


def _log_cosh_right(v, c):
    """``c + log cosh v`` continued from the real axis, for ``Re v > 0``."""
    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
        return v + c - LN2 + np.log1p(np.exp(-2.0 * v))


@dataclass(frozen=True)
class LogTransform:
    """Logarithmic transform of the rescaled map ``f_K(z) = f(K z) / K``.

    ``attraction_threshold`` is the real part beyond which ``|F'| >= 2``
    holds on the tracts (the analytic certificate may hold everywhere).
    """

    model: EntireModel
    scale_K: float
    attraction_threshold: float = field(init=False)

    def __post_init__(self):
        K = float(self.scale_K)
        if not K > 0 or not math.isfinite(K):
            raise ValueError(f"scale_K must be positive, got {self.scale_K}")
        object.__setattr__(self, "scale_K", K)
        object.__setattr__(self, "attraction_threshold", self._attraction_threshold())

    # basic constants --------------------------------------------------------

    @property
    def family(self):
        return self.model.family

    @property
    def constant(self) -> complex:
        """``Log(parameter / K)``, the additive constant of ``F``."""
        return complex(np.log(self.model.parameter / self.scale_K))

    @property
    def ratio(self) -> float:
        """``K / |parameter|``; tracts are proper only when it exceeds 1."""
        return self.scale_K / abs(self.model.parameter)

    @property
    def tract_threshold(self) -> float:
        """Exponential family: tracts are ``{Re exp(w) > tract_threshold}``.

        Cosh family: tracts are ``{|cosh(K exp w)| > tract_threshold}``.
        """
        if self.family is Family.EXPONENTIAL:
            return math.log(self.ratio) / self.scale_K
        return self.ratio

    @property
    def bases(self):
        return (0,) if self.family is Family.EXPONENTIAL else (0, 1)

    def tracts_proper(self):
        return self.ratio > 1.0

    def spine_im(self, label: TractLabel) -> float:
        """Imaginary part of the horizontal line the tract is asymptotic to."""
        return math.pi * label.base + TWO_PI * label.branch

    def expansion_bound(self) -> float:
        """Analytic lower bound for ``|F'|`` over all tracts (0 if tracts are improper)."""
        if not self.tracts_proper():
            return 0.0
        if self.family is Family.EXPONENTIAL:
            return math.log(self.ratio)
        r = self.ratio
        return math.acosh(r) * math.sqrt(1.0 - 1.0 / (r * r))

    def tract_inf_re(self) -> float:
        """Infimum of ``Re w`` over the tracts."""
        if not self.tracts_proper():
            return -math.inf
        if self.family is Family.EXPONENTIAL:
            return math.log(self.tract_threshold)
        return math.log(math.acosh(self.ratio) / self.scale_K)

    def _attraction_threshold(self):
        K = self.scale_K
        if self.family is Family.EXPONENTIAL:
            return math.log(2.0 / K)
        r = self.scale_K / abs(self.model.parameter)
        if r <= 1.0:
            return math.inf
        return math.log(2.0 / (K * math.sqrt(1.0 - 1.0 / (r * r))))

    # the rescaled map in plane coordinates --------------------------------

    def rescaled(self, z):
        """``f_K(z) = f(K z) / K``; ``inf`` on overflow."""
        with np.errstate(invalid="ignore"):
            return self.model.evaluate_array(self.scale_K * np.asarray(z, dtype=complex)) / self.scale_K

    def plane_lift(self, z):
        """``F(log z)``, single valued on the plane tracts (``Re z != 0`` for cosh)."""
        z = np.asarray(z, dtype=complex)
        u = self.scale_K * z
        if self.family is Family.EXPONENTIAL:
            return u + self.constant
        return _log_cosh_right(np.where(u.real >= 0, u, -u), self.constant)

    def plane_preimage_near(self, y, near):
        """The preimage of ``y`` under ``f_K`` closest to ``near``."""
        K = self.scale_K
        y = complex(y)
        if self.family is Family.EXPONENTIAL:
            base = complex(np.log(y * K / self.model.parameter)) / K
            n = round((near - base).imag * K / TWO_PI)
            return base + 1j * TWO_PI * n / K
        s = y * K / self.model.parameter
        u0 = complex(np.arccosh(s))
        best = None
        for sign in (1.0, -1.0):
            cand = sign * u0 / K
            n = round((near - cand).imag * K / TWO_PI)
            for k in (n - 1, n, n + 1):
                z = cand + 1j * TWO_PI * k / K
                if best is None or abs(z - near) < abs(best - near):
                    best = z
        return best

    def plane_branch_gap(self, y):
        """Distance between the two nearest distinct ``f_K`` preimages of ``y``.

        Small values mean ``y`` is close to a critical value.
        """
        K = self.scale_K
        if self.family is Family.EXPONENTIAL:
            return TWO_PI / K
        u0 = complex(np.arccosh(complex(y) * K / self.model.parameter))
        d = abs(2 * u0 - round((2 * u0).imag / TWO_PI) * TWO_PI * 1j)
        return min(TWO_PI, d) / K

    # the logarithmic transform ----------------------------------------------

    def _reduce(self, w, base, branch):
        """``K exp(w)`` rotated into the base-0, branch-0 frame."""
        shift = np.pi * np.asarray(base) + TWO_PI * np.asarray(branch)
        with np.errstate(over="ignore"):
            return self.scale_K * np.exp(np.asarray(w, dtype=complex) - 1j * shift)

    def evaluate_array(self, w, base=0, branch=0):
        """Vectorized ``F``; entries with ``Re w > 700`` become ``nan``."""
        w = np.asarray(w, dtype=complex)
        if self.family is Family.EXPONENTIAL:
            with np.errstate(over="ignore", invalid="ignore"):
                out = self._reduce(w, base, branch) + self.constant
        else:
            out = _log_cosh_right(self._reduce(w, base, branch), self.constant)
        return np.where(w.real > OVERFLOW_EXPONENT, np.nan + 0j, out)

    def derivative_array(self, w, base=0, branch=0):
        w = np.asarray(w, dtype=complex)
        if self.family is Family.EXPONENTIAL:
            return self._reduce(w, base, branch)
        v = self._reduce(w, base, branch)
        return v * np.tanh(v)

    def evaluate(self, w, label: Optional[TractLabel] = None):
        """``F(w)`` on the tract named by ``label`` (found automatically if omitted)."""
        w = complex(w)
        found = self.tract_label(w)
        if label is None:
            label = found
        if found is None or found.base != label.base or found.branch != label.branch:
            near = found if found is not None else self.nearest_label(w)
            raise DomainError(f"{w} is not in tract {label}; nearest tract is {near}")
        if w.real > OVERFLOW_EXPONENT:
            return EscapedByOverflow(w.real)
        return complex(self.evaluate_array(w, label.base, label.branch))

    def derivative(self, w, label: Optional[TractLabel] = None):
        label = label or self.nearest_label(w)
        return complex(self.derivative_array(complex(w), label.base, label.branch))

    def inverse_array(self, zeta, base=0, branch=0):
        """Preimages of ``zeta`` (in the right half-plane) in the tract ``base:branch``."""
        zeta = np.asarray(zeta, dtype=complex)
        K = self.scale_K
        if self.family is Family.EXPONENTIAL:
            return np.log((zeta - self.constant) / K) + 1j * TWO_PI * np.asarray(branch)
        eta = zeta - self.constant
        v = _solve_log_cosh(eta)
        shift = np.pi * np.asarray(base) + TWO_PI * np.asarray(branch)
        return np.log(v / K) + 1j * shift

    def inverse_branch(self, zeta, label: TractLabel = TractLabel()):
        zeta = complex(zeta)
        if not zeta.real > 0:
            raise DomainError(f"{zeta} is not in the right half-plane")
        self._check_label(label)
        return complex(self.inverse_array(zeta, label.base, label.branch))

    def _check_label(self, label):
        if label.base not in self.bases:
            raise DomainError(f"tract base {label.base} does not exist for the {self.family.value} family")

    # tract membership ----------------------------------------------------

    def labels_array(self, w):
        """Return ``(inside, base, branch)`` arrays for the points ``w``."""
        w = np.asarray(w, dtype=complex)
        x, y = w.real, w.imag
        m0 = np.round(y / TWO_PI)
        phi = y - TWO_PI * m0
        if not self.tracts_proper():
            # improper tracts are reported as empty
            z = np.zeros(w.shape, dtype=bool)
            return z, np.zeros(w.shape, int), m0.astype(int)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if self.family is Family.EXPONENTIAL:
                base = np.zeros(w.shape, dtype=int)
                branch = m0.astype(int)
                cphi = np.cos(phi)
                inside = (cphi > 0) & (x + np.log(np.where(cphi > 0, cphi, 1.0)) > math.log(self.tract_threshold))
                return inside, base, branch
            right = np.abs(phi) < np.pi / 2
            base = np.where(right, 0, 1)
            branch = np.where(right | (phi >= np.pi / 2), m0, m0 - 1).astype(int)
            psi = phi - np.where(right, 0.0, np.where(phi >= np.pi / 2, np.pi, -np.pi))
            cpsi = np.cos(psi)
            log_re_v = math.log(self.scale_K) + x + np.log(np.where(cpsi > 0, cpsi, 1e-300))
            huge = log_re_v > 6.0
            safe_w = np.where(huge | (x > OVERFLOW_EXPONENT), 0.0, w)
            re_F = self.evaluate_array(safe_w, base, branch).real
            inside = (cpsi > 0) & np.where(huge, True, re_F > 0)
            return inside, base, branch

    def tract_label(self, w) -> Optional[TractLabel]:
        inside, base, branch = self.labels_array(complex(w))
        if not bool(inside):
            return None
        return TractLabel(int(base), int(branch))

    def in_tract(self, w, label: Optional[TractLabel] = None) -> bool:
        found = self.tract_label(w)
        if found is None:
            return False
        return label is None or found == label

    def nearest_label(self, w) -> TractLabel:
        """Label of the tract strip whose spine line is nearest in ``Im``."""
        y = complex(w).imag
        if self.family is Family.EXPONENTIAL:
            return TractLabel(0, int(round(y / TWO_PI)))
        k = int(round(y / math.pi))
        return TractLabel(k % 2, (k - k % 2) // 2)

    # sampling -------------------------------------------------------------

    def sample_tract_points(self, n, rng=None, label: TractLabel = TractLabel(), boundary_fraction=0.5):
        """Random points of one tract, a fraction of them crowded near the boundary."""
        rng = np.random.default_rng(rng)
        if n <= 0:
            return np.empty(0, dtype=complex)
        nb = int(round(n * boundary_fraction))
        u = np.concatenate([10.0 ** rng.uniform(-12, -1, nb), 10.0 ** rng.uniform(-1, 2.5, n - nb)])
        K = self.scale_K
        if self.family is Family.EXPONENTIAL:
            y = rng.uniform(-0.999, 0.999, n) * (np.pi / 2)
            t = self.tract_threshold
            x = np.minimum(np.log(t * (1.0 + u) / np.cos(y)), max(6.5, math.log(t) + 3.0))
            # after capping x, pull y back inside the tract at that real part
            y_max = np.arccos(np.minimum(t * np.exp(-x), 1.0)) * (1.0 - 1e-9)
            w = x + 1j * np.clip(y, -y_max, y_max)
        else:
            r = self.ratio
            s = np.concatenate([rng.uniform(-1.5, 1.5, n // 2), rng.uniform(-40, 40, n - n // 2)])
            xb = np.arcsinh(np.sqrt(r * r - np.cos(s) ** 2))
            v = xb * (1.0 + u) + 1j * s
            w = np.log(v / K)
        return w + 1j * self.spine_im(label)

    def sample_tract_boundary(self, n, label: TractLabel = TractLabel(), im_extent=None):
        """Points on the boundary curve of one tract (closed form per family)."""
        K = self.scale_K
        if self.family is Family.EXPONENTIAL:
            y = np.linspace(-1, 1, n) * (np.pi / 2) * 0.9999
            w = np.log(self.tract_threshold / np.cos(y)) + 1j * y
        else:
            r = self.ratio
            extent = 60.0 if im_extent is None else im_extent
            s = np.linspace(-extent, extent, n)
            v = np.arcsinh(np.sqrt(r * r - np.cos(s) ** 2)) + 1j * s
            w = np.log(v / K)
        return w + 1j * self.spine_im(label)

    # serialization ---------------------------------------------------------

    def to_dict(self):
        return {
            "family": self.family.value,
            "parameter": [self.model.parameter.real, self.model.parameter.imag],
            "scale_K": self.scale_K,
        }


def _solve_log_cosh(eta):
    """Solve ``v - log 2 + log1p(exp(-2 v)) = eta`` with ``Re v > 0``.

    The left side is the continuous logarithm of ``cosh v`` on the right
    half of the tract, so candidates come from ``arccosh(exp(eta))`` and the
    ``2 pi i`` ambiguity is resolved by evaluating that logarithm.
    """
    eta = np.asarray(eta, dtype=complex)
    far = eta.real > 300
    safe = np.where(far, 0.0, eta)
    with np.errstate(over="ignore", invalid="ignore"):
        v0 = np.arccosh(np.exp(safe))
        v0 = np.where(v0.real < 0, -v0, v0)
        g0 = v0 - LN2 + np.log1p(np.exp(-2.0 * v0))
        k = np.round((g0 - safe).imag / TWO_PI)
        v = v0 - 1j * TWO_PI * k
        v = np.where(far, eta + LN2, v)
        # Newton polish, g'(v) = tanh(v)
        for _ in range(2):
            g = v - LN2 + np.log1p(np.exp(-2.0 * v))
            v = v - (g - eta) / np.tanh(v)
    return v


# model description files -------------------------------------------------


def load_model_file(path):
    """Read ``{family, parameter: [re, im], scale_K}``; returns ``(model, scale_K or None)``."""
    with open(path) as fh:
        text = fh.read()
    return parse_model_json(text)


def parse_model_json(text):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFileError(exc.msg, line=exc.lineno) from None
    if not isinstance(data, dict):
        raise ModelFileError("model description must be a JSON object", line=1)

    def line_of(key):
        for i, line in enumerate(text.splitlines(), 1):
            if f'"{key}"' in line:
                return i
        return None

    try:
        family = Family(data["family"])
    except KeyError:
        raise ModelFileError("missing 'family'", line=1) from None
    except ValueError:
        raise ModelFileError(f"unknown family {data['family']!r}", line=line_of("family")) from None
    par = data.get("parameter")
    if not (isinstance(par, list) and len(par) == 2 and all(isinstance(v, (int, float)) for v in par)):
        raise ModelFileError("'parameter' must be [re, im]", line=line_of("parameter"))
    try:
        model = EntireModel(family, complex(par[0], par[1]))
    except ValueError as exc:
        raise ModelFileError(str(exc), line=line_of("parameter")) from None
    K = data.get("scale_K")
    if K is not None and not (isinstance(K, (int, float)) and K > 0):
        raise ModelFileError("'scale_K' must be a positive number", line=line_of("scale_K"))
    return model, (None if K is None else float(K))


def model_to_json(model: EntireModel, scale_K=None):
    return json.dumps(
        {"family": model.family.value, "parameter": [model.parameter.real, model.parameter.imag], "scale_K": scale_K},
        indent=2,
    )


def expansion_witness(lt: LogTransform):
    """A point of the (possibly improper) tract set where ``|F'| < 2``, if one is easy to name."""
    K = lt.scale_K
    if lt.family is Family.EXPONENTIAL:
        t = lt.tract_threshold
        x = math.log(max(t, 1e-3 / K) * 1.000001) if t > 0 else math.log(0.5 / K)
        return complex(x, 0.0)
    r = lt.ratio
    x = math.acosh(r) * 1.000001 if r > 1 else 0.5
    return complex(math.log(x / K), 0.0)


@dataclass(frozen=True)
class ExpansionCertificate:
    analytic_bound: float
    min_observed: float
    witness: complex
    samples: int

    @property
    def certified(self):
        return self.analytic_bound >= 2.0


def certify_expansion(lt: LogTransform, samples=10_000, rng=0) -> ExpansionCertificate:
    """Certify ``|F'| >= 2`` on all tracts; raise :class:`CertificationError` otherwise."""
    bound = lt.expansion_bound()
    if not lt.tracts_proper():
        w = expansion_witness(lt)
        raise CertificationError(
            f"tracts are not proper (K/|parameter| = {lt.ratio:.4g} <= 1)",
            witness=w,
            value=abs(lt.derivative(w)),
        )
    if samples > 0:
        pts = lt.sample_tract_points(samples, rng)
        d = np.abs(lt.derivative_array(pts))
        i = int(np.argmin(d))
        min_obs, witness = float(d[i]), complex(pts[i])
    else:
        witness = expansion_witness(lt)
        min_obs = math.inf
    if bound < 2.0:
        w = expansion_witness(lt)
        raise CertificationError(
            f"analytic expansion bound {bound:.6g} < 2 at K={lt.scale_K}",
            witness=w,
            value=abs(lt.derivative(w)),
        )
    if min_obs < 2.0 - 1e-12:
        raise CertificationError(f"sampled |F'| = {min_obs:.6g} < 2", witness=witness, value=min_obs)
    return ExpansionCertificate(bound, min_obs, witness, samples)
