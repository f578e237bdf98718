"""Orbits, escape verdicts and external addresses.

Forward addresses are read off a tracked orbit of ``F``. For plane orbits
of ``f_K`` whose first few points are not in any tract, labels for the
early indices are recovered by pulling a ray back along the orbit and
asking which tract the far end of the pulled-back ray ends up in.
"""

from __future__ import annotations

import cmath
import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from escapekit.errors import ContinuationError, DomainError, PreconditionError
from escapekit.models import OVERFLOW_EXPONENT, LogTransform, TractLabel

DEFAULT_ESCAPE_RE = 50.0
CONTINUATION_SUBSTEPS = 32


class VerdictKind(str, enum.Enum):
    ESCAPING = "escaping"
    BOUNDED = "bounded"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class Verdict:
    kind: VerdictKind
    horizon: int
    overflow: bool = False

    @property
    def escaping(self):
        return self.kind is VerdictKind.ESCAPING

    def __str__(self):
        extra = ", overflow" if self.overflow else ""
        return f"{self.kind.value}({self.horizon}{extra})"


@dataclass(frozen=True)
class OrbitStep:
    point: complex
    tract: Optional[TractLabel]
    re_part: float
    overflow: bool = False


@dataclass(frozen=True)
class OrbitRecord:
    seed: complex
    steps: tuple
    verdict: Verdict
    escape_re: float = DEFAULT_ESCAPE_RE

    @property
    def points(self):
        return np.array([s.point for s in self.steps])

    @property
    def re_parts(self):
        return np.array([s.re_part for s in self.steps])

    def threshold_index(self):
        """First index whose real part exceeds ``escape_re`` (or ``None``)."""
        for i, s in enumerate(self.steps):
            if s.re_part > self.escape_re:
                return i
        return None

    def to_dict(self):
        return {
            "seed": [self.seed.real, self.seed.imag],
            "verdict": self.verdict.kind.value,
            "horizon": self.verdict.horizon,
            "overflow": self.verdict.overflow,
            "steps": [
                {
                    "point": [s.point.real, s.point.imag],
                    "tract": None if s.tract is None else str(s.tract),
                    "overflow": s.overflow,
                }
                for s in self.steps
            ],
        }


@dataclass(frozen=True)
class ExternalAddress:
    """Finite truncation ``T_0 T_1 ... T_{n-1}`` of an external address."""

    labels: tuple

    def __post_init__(self):
        labels = tuple(self.labels)
        if not labels:
            raise ValueError("an address needs at least one label")
        object.__setattr__(self, "labels", labels)

    @property
    def horizon(self):
        return len(self.labels)

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, i):
        return self.labels[i]

    def shift(self, k=1) -> "ExternalAddress":
        """The shift map applied ``k`` times (drops leading labels)."""
        return ExternalAddress(self.labels[k:])

    def tokens(self):
        return [str(t) for t in self.labels]

    def __str__(self):
        return " ".join(self.tokens())

    @classmethod
    def parse(cls, text, horizon=None):
        """Parse ``"0:0 0:1"`` or ``"0:0,0:1"``; with ``horizon`` the tokens repeat periodically."""
        toks = [t for t in text.replace(",", " ").split() if t]
        labels = [TractLabel.parse(t) for t in toks]
        if horizon is not None:
            labels = [labels[i % len(labels)] for i in range(horizon)]
        return cls(tuple(labels))

    @classmethod
    def constant(cls, label: TractLabel, horizon):
        return cls((label,) * horizon)


def track_orbit(lt: LogTransform, seed, horizon, escape_re=DEFAULT_ESCAPE_RE) -> OrbitRecord:
    """Iterate ``F`` from ``seed`` for up to ``horizon`` steps while in tracts.

    Escaping: some real part passes ``escape_re`` and the real parts grow
    strictly from there on, either for at least one further recorded step
    or up to a point past the overflow exponent. Such a point is recorded
    without a tract label, since its imaginary part is mostly rounding
    noise. Bounded: a point left the tracts. Anything else, including
    ``horizon < 2``, is inconclusive.
    """
    if horizon < 1:
        raise PreconditionError("horizon must be at least 1")
    seed = complex(seed)
    w = seed
    steps = []
    overflow = exited = False
    for n in range(horizon + 1):
        if w.real > OVERFLOW_EXPONENT:
            # the imaginary part is rounding noise at this size, so no tract test
            steps.append(OrbitStep(w, None, w.real, True))
            overflow = True
            break
        label = lt.tract_label(w)
        steps.append(OrbitStep(w, label, w.real))
        if label is None:
            exited = True
            break
        if n == horizon:
            break
        w = complex(lt.evaluate_array(w, label.base, label.branch))
    last = len(steps) - 1
    if exited:
        verdict = Verdict(VerdictKind.BOUNDED, last)
    else:
        verdict = Verdict(_escape_kind(steps, escape_re, horizon, overflow), last, overflow)
    return OrbitRecord(seed, tuple(steps), verdict, escape_re)


def _escape_kind(steps, escape_re, horizon, overflow):
    if horizon < 2:
        return VerdictKind.INCONCLUSIVE
    re = [s.re_part for s in steps]
    start = next((i for i, r in enumerate(re) if r > escape_re), None)
    if start is None:
        return VerdictKind.INCONCLUSIVE
    tail = re[start:]
    if any(b <= a for a, b in zip(tail, tail[1:])):
        return VerdictKind.INCONCLUSIVE
    if len(tail) < 2 and not overflow:
        return VerdictKind.INCONCLUSIVE
    return VerdictKind.ESCAPING


def growth_defect(record: OrbitRecord):
    """``max(2 re[n] - re[n+1])`` over steps past the escape threshold.

    Expansion ``|F'| >= 2`` far out makes this bounded above by a
    model-dependent constant; ``-inf`` when there are no such steps.
    """
    i = record.threshold_index()
    if i is None:
        return -math.inf
    re = record.re_parts[i:]
    if re.size < 2:
        return -math.inf
    return float(np.max(2 * re[:-1] - re[1:]))


def forward_address(record: OrbitRecord) -> ExternalAddress:
    """Tract labels visited by an escaping orbit."""
    if not record.verdict.escaping:
        raise PreconditionError(f"orbit verdict is {record.verdict}; an escaping orbit is required")
    steps = [s for s in record.steps if not s.overflow]
    missing = [i for i, s in enumerate(steps) if s.tract is None]
    if missing:
        raise PreconditionError(
            f"step {missing[0]} is not in a tract; use backward_extend_address for plane orbits"
        )
    return ExternalAddress(tuple(s.tract for s in steps))


# anchors built by pulling back along an address ------------------------------


def anchor_from_address(lt: LogTransform, address: ExternalAddress, far_re=8.0, extra=12,
                        escape_re=DEFAULT_ESCAPE_RE) -> OrbitRecord:
    """An escaping orbit with the given address, computed backwards.

    The last point is the spine point of the last tract at real part
    ``far_re``; earlier points are inverse-branch images, so they are
    accurate even where forward iteration would amplify rounding. The
    record then continues forward for up to ``extra`` steps.
    """
    labels = address.labels
    n = len(labels)
    pts = [complex(far_re, lt.spine_im(labels[-1]))]
    if not lt.in_tract(pts[0], labels[-1]):
        raise DomainError(f"spine point {pts[0]} is not in tract {labels[-1]}")
    for j in range(n - 2, -1, -1):
        pts.append(lt.inverse_branch(pts[-1], labels[j]))
    pts.reverse()
    for j, (z, lab) in enumerate(zip(pts, labels)):
        if lt.tract_label(z) != lab:
            raise DomainError(f"pulled-back point {j} = {z} is not in tract {lab}")
    tail = track_orbit(lt, pts[-1], max(extra, 2), escape_re)
    steps = tuple(OrbitStep(z, lab, z.real) for z, lab in zip(pts[:-1], labels[:-1])) + tail.steps
    v = tail.verdict
    verdict = Verdict(v.kind, v.horizon + n - 1, v.overflow)
    return OrbitRecord(pts[0], steps, verdict, escape_re)


def first_compliant_index(lt: LogTransform, points, labels, reach=40.0, samples=200):
    """Smallest ``j0`` such that every ``points[i]``, ``i >= j0``, lies in the
    unbounded component of ``T_i`` intersected with the right half-plane.

    Membership is tested by the horizontal ray heuristic: the ray from the
    point to real part ``+reach`` must stay inside ``T_i`` and ``Re > 0``.
    """
    j0 = len(points)
    for i in range(len(points) - 1, -1, -1):
        z, lab = complex(points[i]), labels[i]
        ray = z + np.linspace(0.0, reach, samples)
        inside, base, branch = lt.labels_array(ray)
        ok = z.real > 0 and inside.all() and (base == lab.base).all() and (branch == lab.branch).all()
        if not ok:
            break
        j0 = i
    return j0


# backward extension for plane orbits ---------------------------------------


def _log_ray(z, log_re_to, step=0.5):
    """Plane points ``z * exp(t)`` for ``t`` up to ``log|.| = log_re_to``, sampled geometrically."""
    lz = cmath.log(z)
    t_max = max(log_re_to - lz.real, step)
    ts = np.arange(0.0, t_max + step, step)
    return [cmath.exp(lz + t) for t in ts]


def _pull_back_path(lt: LogTransform, path, start, substeps=CONTINUATION_SUBSTEPS):
    """Continue the ``f_K`` inverse branch along ``path`` starting from ``start``."""
    out = [start]
    prev = start
    for a, b in zip(path[:-1], path[1:]):
        la, lb = cmath.log(a), cmath.log(b)
        d = lb - la
        d = complex(d.real, d.imag - 2 * math.pi * round(d.imag / (2 * math.pi)))
        for s in range(1, substeps + 1):
            y = cmath.exp(la + d * (s / substeps))
            nxt = lt.plane_preimage_near(y, prev)
            gap = lt.plane_branch_gap(y)
            if abs(nxt - prev) > 0.25 * gap:
                raise ContinuationError(
                    f"inverse-branch continuation is ambiguous near {y} (branch gap {gap:.3e}); "
                    "the orbit passes too close to the postsingular set",
                    residual=abs(nxt - prev),
                )
            prev = nxt
        out.append(prev)
    return out


@dataclass(frozen=True)
class BackwardExtension:
    address: ExternalAddress
    k0: int
    pullback_from: int
    far_tails: tuple


def backward_extend_address(lt: LogTransform, plane_orbit: Sequence[complex], k0: int, pullback_from=None,
                            far_log_re=60.0, branch_choice=0) -> BackwardExtension:
    """External address of a plane orbit of ``f_K`` whose points lie in tracts from ``k0`` on.

    A horizontal ray in logarithmic coordinates is started at step
    ``k = pullback_from`` (default ``k0``) and pulled back along the orbit
    one step at a time, extending each pulled-back piece by another
    horizontal ray so its far end stays far out. The label at index ``j``
    is the tract absorbing the far end at that level; for ``j > k`` the
    labels come from the orbit itself. ``branch_choice`` selects the
    ``2 pi i`` translate of the first tract, which is otherwise arbitrary.
    """
    z = [complex(p) for p in plane_orbit]
    n = len(z)
    k = k0 if pullback_from is None else pullback_from
    if not 0 <= k0 <= k < n:
        raise PreconditionError(f"need 0 <= k0 <= pullback_from < {n}")
    for i in range(n - 1):
        fz = complex(lt.rescaled(z[i]))
        if not abs(fz - z[i + 1]) <= 1e-8 * max(1.0, abs(z[i + 1])):
            raise PreconditionError(f"plane orbit is not an orbit of f_K at step {i}")
    for i in range(k0, n):
        if lt.tract_label(cmath.log(z[i])) is None:
            raise PreconditionError(f"orbit point {i} = {z[i]} is not in a tract")

    far = [None] * (k + 1)
    path = _log_ray(z[k], far_log_re)
    far[k] = path[-1]
    for i in range(k - 1, -1, -1):
        pulled = _pull_back_path(lt, path, z[i])
        far[i] = pulled[-1]
        if lt.tract_label(cmath.log(far[i])) is None:
            raise ContinuationError(f"far end {far[i]} of the pulled-back ray at step {i} is not in a tract")
        if i > 0:
            path = pulled + _log_ray(pulled[-1], far_log_re)[1:]

    labels = []
    w0 = cmath.log(far[0]) + 2j * math.pi * branch_choice
    lab0 = lt.tract_label(w0)
    if lab0 is None:
        raise ContinuationError(f"far end {far[0]} at step 0 does not lift into a tract")
    labels.append(lab0)
    for i in range(1, n):
        src = far[i - 1] if i <= k else z[i - 1]
        lab = lt.tract_label(complex(lt.plane_lift(src)))
        if lab is None:
            raise ContinuationError(f"no tract label at step {i}")
        labels.append(lab)
    return BackwardExtension(ExternalAddress(tuple(labels)), k0, k, tuple(far))


def plane_orbit(lt: LogTransform, z0, n):
    """``z0, f_K(z0), ..., f_K^n(z0)``."""
    pts = [complex(z0)]
    for _ in range(n):
        pts.append(complex(lt.rescaled(pts[-1])))
    return pts
