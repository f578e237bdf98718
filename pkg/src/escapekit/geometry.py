"""Plane and hyperbolic geometry: disks, half-planes, truncated polylines.

Points are plain Python ``complex`` numbers; curves are numpy complex
arrays wrapped in :class:`Polyline`.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.spatial import cKDTree

from escapekit.config import get_tolerance
from escapekit.errors import DomainError, NumericError, PreconditionError


def as_point(z) -> complex:
    """Coerce to ``complex`` and reject non-finite coordinates."""
    if isinstance(z, (list, tuple)) and len(z) == 2:
        z = complex(float(z[0]), float(z[1]))
    z = complex(z)
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise DomainError(f"non-finite point {z!r}")
    return z


@dataclass(frozen=True)
class Disk:
    center: complex
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", as_point(self.center))
        if not self.radius > 0:
            raise ValueError(f"disk radius must be positive, got {self.radius}")

    def contains(self, z, tol=0.0):
        """Strict interior test, shrunk inward by ``tol``."""
        return np.abs(np.asarray(z) - self.center) < self.radius - tol

    def boundary_distance(self, z):
        return np.abs(np.abs(np.asarray(z) - self.center) - self.radius)


@dataclass(frozen=True)
class HalfPlane:
    """The domain ``{Re z > threshold}``."""

    threshold: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.threshold):
            raise ValueError("half-plane threshold must be finite")

    def contains(self, z):
        return np.real(z) > self.threshold


@dataclass(frozen=True, eq=False)
class Polyline:
    """Ordered points approximating an unbounded curve truncated at ``truncation_re``.

    Everything to the right of ``truncation_re`` is represented only
    implicitly; statements about the curve hold up to that truncation.
    """

    points: np.ndarray
    truncation_re: float

    def __post_init__(self):
        pts = np.array(self.points, dtype=complex).ravel()
        if pts.size < 2:
            raise ValueError("a polyline needs at least two points")
        if not np.all(np.isfinite(pts)):
            raise DomainError("polyline contains non-finite points")
        steps = np.abs(np.diff(pts))
        if np.any(steps == 0):
            raise ValueError("consecutive polyline points must be distinct")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "truncation_re", float(self.truncation_re))

    @classmethod
    def from_points(cls, points, truncation_re=None):
        """Build from any point sequence, dropping consecutive duplicates."""
        pts = np.asarray(points, dtype=complex).ravel()
        keep = np.ones(pts.size, dtype=bool)
        keep[1:] = pts[1:] != pts[:-1]
        pts = pts[keep]
        if truncation_re is None:
            truncation_re = float(pts[-1].real)
        return cls(pts, truncation_re)

    def __len__(self):
        return self.points.size

    def __eq__(self, other):
        if not isinstance(other, Polyline):
            return NotImplemented
        return (
            self.truncation_re == other.truncation_re
            and self.points.shape == other.points.shape
            and bool(np.all(self.points == other.points))
        )

    __hash__ = None

    @property
    def start(self) -> complex:
        return complex(self.points[0])

    @property
    def end(self) -> complex:
        return complex(self.points[-1])

    def reaches_truncation(self, tol=None):
        return self.end.real >= self.truncation_re - get_tolerance(tol)

    def segment_lengths(self):
        return np.abs(np.diff(self.points))

    def length(self):
        return float(self.segment_lengths().sum())

    def max_gap(self):
        return float(self.segment_lengths().max())

    def translated(self, offset) -> "Polyline":
        return Polyline(self.points + complex(offset), self.truncation_re + complex(offset).real)

    def sample(self, n) -> np.ndarray:
        """``n`` points spaced evenly in arclength, endpoints included."""
        if n <= 0:
            return np.empty(0, dtype=complex)
        if n == 1:
            return self.points[:1].copy()
        cum = np.concatenate([[0.0], np.cumsum(self.segment_lengths())])
        s = np.linspace(0.0, cum[-1], n)
        idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, self.points.size - 2)
        t = (s - cum[idx]) / (cum[idx + 1] - cum[idx])
        return self.points[idx] + t * (self.points[idx + 1] - self.points[idx])

    def densified(self, spacing) -> np.ndarray:
        """Vertices plus evenly inserted points so no gap exceeds ``spacing``."""
        out = [self.points[:1]]
        for a, b in zip(self.points[:-1], self.points[1:]):
            k = max(1, int(math.ceil(abs(b - a) / spacing)))
            out.append(a + (b - a) * np.arange(1, k + 1) / k)
        return np.concatenate(out)

    # serialization ------------------------------------------------------

    def to_dict(self):
        return {
            "points": [[float(z.real), float(z.imag)] for z in self.points],
            "truncation_re": self.truncation_re,
        }

    @classmethod
    def from_dict(cls, data):
        pts = np.array([complex(re, im) for re, im in data["points"]])
        return cls(pts, data["truncation_re"])

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["re", "im"])
        for z in self.points:
            writer.writerow([repr(float(z.real)), repr(float(z.imag))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text, truncation_re=None):
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if [h.strip() for h in header] != ["re", "im"]:
            raise ValueError(f"expected header 're,im', got {header!r}")
        pts = [complex(float(r), float(i)) for r, i in reader]
        return cls.from_points(pts, truncation_re)


# distances -------------------------------------------------------------


def _segment_distances(p, a, d, dd):
    t = np.clip(((p - a) * d.conj()).real / dd, 0.0, 1.0)
    return np.abs(p - (a + t * d))


def _brute_distance(p, v, chunk):
    a = v[:-1]
    d = v[1:] - a
    dd = (d * d.conj()).real
    dd = np.where(dd == 0, 1.0, dd)
    out = np.empty(p.size)
    rows = max(1, chunk // a.size)
    for lo in range(0, p.size, rows):
        out[lo:lo + rows] = _segment_distances(p[lo:lo + rows, None], a, d, dd).min(axis=1)
    return out


def points_to_segments_distance(points, vertices, chunk=4_000_000, window=8):
    """Distance from each of ``points`` to the polyline through ``vertices``.

    Large inputs use a k-d tree: each point is compared with the segments
    around its nearest vertex, and the answer is accepted only when every
    vertex that could belong to a closer segment lies in that window.
    Remaining points fall back to the exhaustive computation.
    """
    p = np.atleast_1d(np.asarray(points, dtype=complex)).ravel()
    v = np.asarray(vertices, dtype=complex).ravel()
    if v.size == 0:
        raise PreconditionError("empty polyline")
    if v.size == 1:
        return np.abs(p - v[0])
    if p.size * v.size <= 250_000:
        return _brute_distance(p, v, chunk)

    a = v[:-1]
    d = v[1:] - a
    dd = (d * d.conj()).real
    dd = np.where(dd == 0, 1.0, dd)
    nseg = a.size
    xy = np.column_stack([v.real, v.imag])
    tree = cKDTree(xy)
    _, nearest = tree.query(np.column_stack([p.real, p.imag]))
    offsets = np.arange(-window, window)
    seg = np.clip(nearest[:, None] + offsets, 0, nseg - 1)
    out = _segment_distances(p[:, None], a[seg], d[seg], dd[seg]).min(axis=1)

    # the closest segment has an endpoint within out + half the longest segment
    reach = out + 0.5 * float(np.sqrt(dd.max()))
    vid = nearest[:, None] + np.arange(-window + 1, window)
    valid = (vid >= 0) & (vid < v.size)
    near_v = np.abs(p[:, None] - v[np.clip(vid, 0, v.size - 1)]) <= reach[:, None] * (1 - 1e-12)
    in_window = np.count_nonzero(valid & near_v, axis=1)
    total = tree.query_ball_point(np.column_stack([p.real, p.imag]), reach, return_length=True)
    unsure = np.nonzero(total > in_window)[0]
    if unsure.size:
        # a nearby vertex outside the window: check those points exhaustively
        out[unsure] = _brute_distance(p[unsure], v, chunk)
    return out


def point_to_polyline_distance(p, c: Polyline) -> float:
    """Euclidean distance from ``p`` to the union of the segments of ``c``."""
    return float(points_to_segments_distance(as_point(p), c.points)[0])


def directed_hausdorff(a: Polyline, b: Polyline, spacing=None) -> float:
    """sup over points of ``a`` of the distance to ``b``.

    With ``spacing`` the points of ``a`` are densified first; otherwise
    only its vertices are used.
    """
    pts = a.points if spacing is None else a.densified(spacing)
    return float(points_to_segments_distance(pts, b.points).max())


def hausdorff_distance(a: Polyline, b: Polyline, spacing=None) -> float:
    return max(directed_hausdorff(a, b, spacing), directed_hausdorff(b, a, spacing))


# hyperbolic geometry -----------------------------------------------------


def hyperbolic_distance_halfplane(a, b, h: HalfPlane = HalfPlane()) -> float:
    """Hyperbolic distance in ``{Re z > h.threshold}`` (density ``|dz| / (Re z - t)``)."""
    a, b = as_point(a), as_point(b)
    xa = a.real - h.threshold
    xb = b.real - h.threshold
    if not (xa > 0 and xb > 0):
        raise DomainError(f"points {a}, {b} not inside {{Re z > {h.threshold}}}")
    # 2 asinh form avoids cancellation in arccosh(1 + small)
    return 2.0 * math.asinh(abs(a - b) / (2.0 * math.sqrt(xa * xb)))


@dataclass(frozen=True)
class ConformalMap:
    """A conformal isomorphism from the right half-plane onto some domain.

    ``inverse`` is optional; without it preimages are found by Newton's
    method started at ``guess(z)`` (default ``1``).
    """

    forward: Callable[[complex], complex]
    inverse: Optional[Callable[[complex], complex]] = None
    derivative: Optional[Callable[[complex], complex]] = None
    guess: Optional[Callable[[complex], complex]] = None

    def preimage(self, z, tol=1e-13, max_iter=80) -> complex:
        if self.inverse is not None:
            return complex(self.inverse(z))
        zeta = complex(self.guess(z)) if self.guess is not None else 1.0 + 0j
        residual = abs(self.forward(zeta) - z)
        for _ in range(max_iter):
            r = self.forward(zeta) - z
            residual = abs(r)
            if residual <= tol * max(1.0, abs(z)):
                return zeta
            if self.derivative is not None:
                dphi = self.derivative(zeta)
            else:
                h = 1e-7 * max(1.0, abs(zeta))
                dphi = (self.forward(zeta + h) - self.forward(zeta - h)) / (2 * h)
            if dphi == 0 or not np.isfinite(dphi):
                break
            step = r / dphi
            # damp steps that would leave the half-plane
            while (zeta - step).real <= 0 and abs(step) > 1e-300:
                step /= 2
            zeta = zeta - step
        raise NumericError(f"preimage of {z} did not converge (residual {residual:.3e})", residual)


IDENTITY_MAP = ConformalMap(forward=lambda z: z, inverse=lambda z: z)


def hyperbolic_distance_via_map(a, b, map_to_domain: ConformalMap) -> float:
    """Hyperbolic distance in the image domain, via preimages in the half-plane."""
    a, b = as_point(a), as_point(b)
    if a == b:
        return 0.0
    pa = map_to_domain.preimage(a)
    pb = map_to_domain.preimage(b)
    return hyperbolic_distance_halfplane(pa, pb, HalfPlane(0.0))


def segment_circle_crossing(p, q, center, radius):
    """Point on segment ``[p, q]`` where it meets the circle, for ``p`` inside and ``q`` outside."""
    d = q - p
    f = p - center
    a = (d * d.conjugate()).real
    b = 2 * (f * d.conjugate()).real
    c = (f * f.conjugate()).real - radius * radius
    disc = max(b * b - 4 * a * c, 0.0)
    t = (-b + math.sqrt(disc)) / (2 * a)
    return p + min(max(t, 0.0), 1.0) * d
