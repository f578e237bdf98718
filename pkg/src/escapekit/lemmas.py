"""Numerical checks of two topological facts about tracts.

Separation: if ``z`` lies in the unbounded component ``U`` of
``{Re > R}`` inside a tract ``T``, then the unbounded component of ``T``
minus the vertical segment ``(z - 2 pi i, z + 2 pi i)`` is contained in
``U``.

Proximity: of two unbounded connected sets in a tract, one lies within
``2 pi`` of the other.

Tracts are polygons truncated at ``truncation_re``; "unbounded" means
"touching the truncation edge". Components are found by flood fill on a
grid (``scipy.ndimage.label``, 4-connectivity).
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import shapely
from scipy import ndimage
from shapely.geometry import LineString, Point, Polygon, box
from shapely import affinity
from shapely.ops import split, substring

from escapekit.errors import PreconditionError, ResolutionError
from escapekit.geometry import Polyline, points_to_segments_distance
from escapekit.models import TWO_PI, LogTransform, TractLabel

GRID_FRACTION = 32
MIN_CELLS_PER_NECK = 2
PROXIMITY_BOUND = TWO_PI


@dataclass(frozen=True, eq=False)
class SyntheticTract:
    """A tract approximated by a polygon cut off at ``Re = truncation_re``."""

    boundary: Polyline
    truncation_re: float
    period_disjoint: bool
    params: dict = field(default_factory=dict)

    @classmethod
    def from_polygon(cls, polygon: Polygon, truncation_re, params=None):
        if not polygon.is_valid or polygon.geom_type != "Polygon" or len(polygon.interiors):
            raise PreconditionError("tract polygon must be a simple polygon without holes")
        ring = np.array(polygon.exterior.coords)
        pts = ring[:, 0] + 1j * ring[:, 1]
        boundary = Polyline.from_points(pts, truncation_re)
        shifted = affinity.translate(polygon, 0.0, TWO_PI)
        disjoint = not polygon.intersects(shifted)
        return cls(boundary, float(truncation_re), disjoint, dict(params or {}))

    @property
    def polygon(self) -> Polygon:
        def make():
            poly = Polygon(np.column_stack([self.boundary.points.real, self.boundary.points.imag]))
            shapely.prepare(poly)
            return poly

        return self._cached("_poly", make)

    def contains(self, z):
        z = np.asarray(z, dtype=complex)
        return shapely.contains_xy(self.polygon, z.real, z.imag)

    def max_vertical_chord(self, samples=512):
        """Longest vertical segment inside the tract, over sampled abscissae."""
        x0, y0, x1, y1 = self.polygon.bounds
        best = 0.0
        for x in np.linspace(x0, x1, samples + 2)[1:-1]:
            cut = self.polygon.intersection(LineString([(x, y0 - 1), (x, y1 + 1)]))
            for g in getattr(cut, "geoms", [cut]):
                if g.geom_type == "LineString":
                    best = max(best, g.length)
        return best

    def _cached(self, key, make):
        """Memoize derived data; the tract itself never changes."""
        cache = self.__dict__.setdefault("_cache", {})
        if key not in cache:
            cache[key] = make()
        return cache[key]

    def neck_width(self, samples=1500):
        """Smallest distance between boundary points far apart along the boundary.

        A pair counts when its boundary arc (the shorter way round) is more
        than twice its Euclidean distance. Convex shapes have no such pairs;
        their neck is the diameter of the largest inscribed circle.
        """
        return self._cached(("_neck", samples), lambda: self._neck_width(samples))

    def _neck_width(self, samples):
        ring = self.boundary.points
        if ring[0] != ring[-1]:
            ring = np.append(ring, ring[0])
        pts = Polyline(ring, self.truncation_re).sample(samples + 1)[:-1]
        steps = np.abs(np.diff(np.append(pts, pts[0])))
        arc = np.concatenate([[0.0], np.cumsum(steps)])
        perim = arc[-1]
        arc = arc[:-1]
        best = math.inf
        for lo in range(0, pts.size, 256):
            d = np.abs(pts[lo:lo + 256, None] - pts[None, :])
            a = np.abs(arc[lo:lo + 256, None] - arc[None, :])
            a = np.minimum(a, perim - a)
            far = a > 2 * d
            if far.any():
                best = min(best, float(d[far].min()))
        if not math.isfinite(best):
            circle = shapely.maximum_inscribed_circle(self.polygon)
            best = 2 * circle.length
        return best

    def to_dict(self):
        return {
            "boundary": self.boundary.to_dict()["points"],
            "truncation_re": self.truncation_re,
            "period_disjoint": self.period_disjoint,
            "params": self.params,
        }


# generators ------------------------------------------------------------------


def strip_tract(height=1.0, re_from=0.0, truncation_re=20.0, center_im=0.0) -> SyntheticTract:
    poly = box(re_from, center_im - height / 2, truncation_re, center_im + height / 2)
    return SyntheticTract.from_polygon(poly, truncation_re, {"kind": "strip", "height": height})


def serpentine_centerline(rng, truncation_re=20.0, height=None, turns=None, min_gap=0.5):
    """Random piecewise-horizontal path with ``turns`` U-turns ending at ``truncation_re``.

    Returns ``(coords, height, turns)``.
    """
    h = float(rng.uniform(0.5, 2.0)) if height is None else float(height)
    n = int(rng.integers(1, 5)) if turns is None else int(turns)
    # the last lane must head right, so the first lane heads right iff n is even
    direction = 1 if n % 2 == 0 else -1
    x = float(rng.uniform(1.0, 4.0)) if direction > 0 else float(rng.uniform(13.0, 17.0))
    y = 0.0
    coords = [(x, y)]
    for _ in range(n):
        if direction > 0:
            x = float(rng.uniform(max(x + 3.0, 9.0), 18.0))
        else:
            x = float(rng.uniform(1.0, min(x - 3.0, 10.0)))
        coords.append((x, y))
        y += float(rng.choice([-1.0, 1.0]) * rng.uniform(h + min_gap, h + min_gap + 2.5))
        coords.append((x, y))
        direction = -direction
    coords.append((truncation_re, y))
    return coords, h, n


def serpentine_tract(rng, truncation_re=20.0, max_attempts=200, min_gap=0.5) -> SyntheticTract:
    """A random serpentine tract, disjoint from its ``2 pi i`` translates.

    Draws are rejected until the buffered path is a simple polygon whose
    lanes keep at least ``min_gap`` apart and which misses its translate.
    """
    for attempt in range(max_attempts):
        coords, h, n = serpentine_centerline(rng, truncation_re, min_gap=min_gap)
        line = LineString(coords)
        poly = line.buffer(h / 2, cap_style="flat", join_style="mitre")
        # right-angle mitre joins keep the area at length * height unless lanes overlap
        fat = line.buffer(h / 2 + min_gap / 2, cap_style="flat", join_style="mitre")
        if not line.is_simple or poly.geom_type != "Polygon" or len(poly.interiors):
            continue
        if abs(poly.area - line.length * h) > 1e-9 * poly.area:
            continue
        if fat.geom_type != "Polygon" or abs(fat.area - line.length * (h + min_gap)) > 1e-9 * fat.area:
            continue
        params = {"kind": "serpentine", "height": h, "turns": n, "centerline": [list(c) for c in coords],
                  "attempts": attempt + 1}
        tract = SyntheticTract.from_polygon(poly, truncation_re, params)
        if tract.period_disjoint:
            return tract
    raise PreconditionError(f"no admissible serpentine after {max_attempts} attempts")


def fat_control_tract(height=20.0, truncation_re=20.0) -> SyntheticTract:
    """A rectangle taller than ``2 pi``; overlaps its translate, so it is not a tract."""
    poly = box(0.0, -height / 2, truncation_re, height / 2)
    return SyntheticTract.from_polygon(poly, truncation_re, {"kind": "control", "height": height})


def family_tract(lt: LogTransform, label: TractLabel = TractLabel(), truncation_re=20.0, samples=2001) -> SyntheticTract:
    """Polygon of one tract of ``lt`` cut off at ``truncation_re``."""
    w = lt.sample_tract_boundary(samples, label)
    w = w[w.real < truncation_re]
    ys = w.imag
    coords = [(truncation_re, ys[0])] + [(p.real, p.imag) for p in w] + [(truncation_re, ys[-1])]
    poly = Polygon(coords)
    if not poly.is_valid:
        poly = shapely.make_valid(poly)
    return SyntheticTract.from_polygon(poly, truncation_re, {"kind": "family", "label": str(label)})


# grid flood fill --------------------------------------------------------------


@dataclass
class _Grid:
    xs: np.ndarray
    ys: np.ndarray
    inside: np.ndarray
    step: float

    def cell(self, z):
        ix = int(math.floor((z.real - (self.xs[0] - self.step / 2)) / self.step))
        iy = int(math.floor((z.imag - (self.ys[0] - self.step / 2)) / self.step))
        if not (0 <= ix < self.xs.size and 0 <= iy < self.ys.size):
            raise PreconditionError(f"{z} is outside the grid")
        return iy, ix


def _grid(t: SyntheticTract, step) -> _Grid:
    x0, y0, x1, y1 = t.polygon.bounds
    ncol = max(2, int(math.ceil((t.truncation_re - x0) / step)))
    xs = t.truncation_re - step * (np.arange(ncol)[::-1] + 0.5)
    ys = np.arange(y0 - step, y1 + step, step) + step / 2
    X, Y = np.meshgrid(xs, ys)
    return _Grid(xs, ys, shapely.contains_xy(t.polygon, X, Y), step)


def _end_labels(labels):
    """Component labels touching the truncation edge (last grid column)."""
    ends = np.unique(labels[:, -1])
    return ends[ends > 0]


@dataclass(frozen=True)
class SeparationVerdict:
    in_unbounded: bool
    contained: bool
    step: float
    stable: Optional[bool] = None
    convention: str = "unbounded = component touching the truncation edge"

    @property
    def consistent(self):
        """The implication predicted by the lemma."""
        return (not self.in_unbounded) or self.contained

    def to_dict(self):
        return {
            "in_unbounded": self.in_unbounded,
            "contained": self.contained,
            "consistent": self.consistent,
            "step": self.step,
            "stable": self.stable,
            "convention": self.convention,
        }


def _separation_on_grid(g: _Grid, z, R):
    iz = g.cell(z)
    if not g.inside[iz]:
        raise PreconditionError(f"{z} is not inside the tract at grid step {g.step:.3g}")
    right = g.inside & (g.xs[None, :] > R)
    lab_a, _ = ndimage.label(right)
    ends_a = _end_labels(lab_a)
    in_u = bool(lab_a[iz] > 0 and np.isin(lab_a[iz], ends_a))

    cut = g.inside.copy()
    rows = np.abs(g.ys - z.imag) < TWO_PI
    cut[rows, iz[1]] = False
    lab_b, _ = ndimage.label(cut)
    ends_b = _end_labels(lab_b)
    tilde = np.isin(lab_b, ends_b)
    contained = bool(np.all(np.isin(lab_a[tilde], ends_a) & (lab_a[tilde] > 0)))
    return in_u, contained


def default_step(t: SyntheticTract):
    return t.neck_width() / GRID_FRACTION


def separation_check(t: SyntheticTract, z, R, step=None, stability=True) -> SeparationVerdict:
    """Grid test of the separation property at one point.

    ``stability`` repeats the classification with twice the step and
    records whether the verdict changed.
    """
    z = complex(z)
    if not z.real > R:
        raise PreconditionError(f"need Re z > R, got {z.real} <= {R}")
    if not t.contains(z):
        raise PreconditionError(f"{z} is not in the tract")
    neck = t.neck_width()
    step = neck / GRID_FRACTION if step is None else float(step)
    if step > neck / MIN_CELLS_PER_NECK:
        raise ResolutionError(f"grid step {step:.3g} cannot resolve the neck width {neck:.3g}; refine the grid")
    a, b = _separation_on_grid(t._cached(("_grid", step), lambda: _grid(t, step)), z, R)
    stable = None
    if stability and 2 * step <= neck / MIN_CELLS_PER_NECK:
        coarse = t._cached(("_grid", 2 * step), lambda: _grid(t, 2 * step))
        stable = _separation_on_grid(coarse, z, R) == (a, b)
    return SeparationVerdict(a, b, step, stable)


def separation_check_exact(t: SyntheticTract, z, R):
    """Same predicate computed with exact polygon operations (an oracle for tests)."""
    z = complex(z)
    poly = t.polygon
    x0, y0, x1, y1 = poly.bounds
    edge = LineString([(t.truncation_re, y0 - 1), (t.truncation_re, y1 + 1)])
    right = poly.intersection(box(R, y0 - 1, t.truncation_re + 1, y1 + 1))
    parts = list(getattr(right, "geoms", [right]))
    unbounded = [p for p in parts if p.distance(edge) < 1e-9]
    U = shapely.union_all(unbounded)
    in_u = bool(U.intersects(Point(z.real, z.imag)))
    seg = LineString([(z.real, z.imag - TWO_PI), (z.real, z.imag + TWO_PI)])
    pieces = list(split(poly, seg).geoms)
    tilde = shapely.union_all([p for p in pieces if p.distance(edge) < 1e-9])
    contained = tilde.difference(U).area <= 1e-9 * max(tilde.area, 1.0)
    return in_u, bool(contained)


# proximity ----------------------------------------------------------------------


@dataclass(frozen=True)
class ProximityVerdict:
    sup_0: float
    sup_1: float
    tolerance: float
    bound: float = PROXIMITY_BOUND

    @property
    def holds(self):
        return min(self.sup_0, self.sup_1) <= self.bound + self.tolerance

    def to_dict(self):
        return {"sup_0": self.sup_0, "sup_1": self.sup_1, "bound": self.bound,
                "tolerance": self.tolerance, "holds": self.holds}


def proximity_check(t: SyntheticTract, c0: Polyline, c1: Polyline, mesh=0.05) -> ProximityVerdict:
    """One-sided sup distances between two curves reaching the truncation.

    Curves are densified to spacing ``mesh``; that spacing is also the
    tolerance of the verdict.
    """
    pts = []
    for name, c in (("c0", c0), ("c1", c1)):
        d = c.densified(mesh)
        inside = t.contains(d) | (np.abs(d.real - t.truncation_re) < 1e-9)
        if not inside.all():
            bad = complex(d[np.argmin(inside)])
            raise PreconditionError(f"{name} leaves the tract at {bad}")
        if not c.end.real >= t.truncation_re - 1e-9:
            raise PreconditionError(f"{name} does not reach the truncation Re = {t.truncation_re}")
        pts.append(d)
    s0 = float(points_to_segments_distance(pts[0], c1.points).max())
    s1 = float(points_to_segments_distance(pts[1], c0.points).max())
    return ProximityVerdict(s0, s1, mesh)


def _offset_tail(line: LineString, start, offset, truncation_re):
    """Sub-path of ``line`` from arclength ``start`` shifted sideways by ``offset``."""
    sub = substring(line, start, line.length)
    if offset:
        sub = sub.offset_curve(offset, join_style="mitre")
    c = np.array(sub.coords)
    pts = c[:, 0] + 1j * c[:, 1]
    return Polyline.from_points(pts, truncation_re)


# campaign ---------------------------------------------------------------------------


@dataclass
class TrialResult:
    trial: int
    seed: list
    tract: SyntheticTract
    R: float
    separation: list
    proximity: list
    separation_failures: int = 0
    proximity_failures: int = 0
    unstable: int = 0

    def to_dict(self, with_geometry=False):
        out = {
            "trial": self.trial,
            "seed": self.seed,
            "R": self.R,
            "params": {k: v for k, v in self.tract.params.items() if k != "centerline"},
            "separation": [dict(v.to_dict(), z=[z.real, z.imag]) for z, v in self.separation],
            "proximity": [v.to_dict() for v in self.proximity],
            "separation_failures": self.separation_failures,
            "proximity_failures": self.proximity_failures,
            "unstable": self.unstable,
        }
        if with_geometry:
            out["tract"] = self.tract.to_dict()
        return out


def _sample_lane_points(coords, R, n, rng, truncation_re, margin):
    """Points on horizontal lanes of the path with real part in ``(R, truncation_re)``.

    A lane is drawn uniformly first, so short fingers are sampled as often
    as the long final lane. ``margin`` keeps points off the lane ends.
    """
    lanes = []
    for (xa, ya), (xb, yb) in zip(coords[:-1], coords[1:]):
        if ya != yb:
            continue
        lo = max(min(xa, xb) + margin, R + margin)
        hi = min(max(xa, xb) - margin, truncation_re - margin) if max(xa, xb) < truncation_re \
            else truncation_re - margin
        if hi > lo:
            lanes.append((lo, hi, ya))
    if not lanes:
        return []
    out = []
    for _ in range(n):
        lo, hi, y = lanes[int(rng.integers(len(lanes)))]
        out.append(complex(float(rng.uniform(lo, hi)), y))
    return out


def run_trial(trial, seed=0, points=10, curve_pairs=3, truncation_re=20.0) -> TrialResult:
    rng = np.random.default_rng([seed, trial])
    tract = serpentine_tract(rng, truncation_re)
    line = LineString(tract.params["centerline"])
    h = tract.params["height"]
    xs = [c[0] for c in tract.params["centerline"][:-1]]
    R = float(rng.uniform(min(xs), max(xs)))
    sep = []
    for z in _sample_lane_points(tract.params["centerline"], R, points, rng, truncation_re, h / 2):
        sep.append((z, separation_check(tract, z, R)))
    prox = []
    for k in range(curve_pairs):
        s0 = float(rng.uniform(0, line.length * 0.9))
        # one pair per trial starts the second curve only on the last lane
        s1 = line.length - float(rng.uniform(0.5, 5.0)) if k == 0 else float(rng.uniform(0, line.length * 0.9))
        o0, o1 = rng.uniform(-0.35 * h, 0.35 * h, 2)
        c0 = _offset_tail(line, s0, float(o0), truncation_re)
        c1 = _offset_tail(line, max(s1, 0.0), float(o1), truncation_re)
        prox.append(proximity_check(tract, c0, c1))
    res = TrialResult(trial, [int(seed), int(trial)], tract, R, sep, prox)
    res.separation_failures = sum(not v.consistent for _, v in sep)
    res.proximity_failures = sum(not v.holds for v in prox)
    res.unstable = sum(v.stable is False for _, v in sep)
    return res


@dataclass
class ControlResult:
    separation: SeparationVerdict
    proximity: ProximityVerdict
    period_disjoint: bool

    @property
    def violations(self):
        return int(not self.separation.consistent) + int(not self.proximity.holds)

    def to_dict(self):
        return {
            "period_disjoint": self.period_disjoint,
            "separation": self.separation.to_dict(),
            "proximity": self.proximity.to_dict(),
            "violations": self.violations,
        }


def run_control(truncation_re=20.0) -> ControlResult:
    """The fat rectangle: both predicates are expected to fail on it."""
    t = fat_control_tract(truncation_re=truncation_re)
    sep = separation_check(t, complex(10.0, 0.0), 5.0, step=0.25, stability=False)
    c0 = Polyline(np.array([0.5 - 8j, truncation_re - 8j]), truncation_re)
    c1 = Polyline(np.array([0.5 + 8j, truncation_re + 8j]), truncation_re)
    return ControlResult(sep, proximity_check(t, c0, c1), t.period_disjoint)


@dataclass
class CampaignReport:
    trials: list
    control: ControlResult
    seed: int
    runtime: float

    @property
    def separation_counterexamples(self):
        return [t for t in self.trials if t.separation_failures]

    @property
    def proximity_counterexamples(self):
        return [t for t in self.trials if t.proximity_failures]

    @property
    def passed(self):
        return (not self.separation_counterexamples and not self.proximity_counterexamples
                and self.control.violations >= 1)

    def to_dict(self):
        bad = {id(t) for t in self.separation_counterexamples + self.proximity_counterexamples}
        return {
            "seed": self.seed,
            "trials": len(self.trials),
            "runtime_s": self.runtime,
            "separation_counterexamples": len(self.separation_counterexamples),
            "proximity_counterexamples": len(self.proximity_counterexamples),
            "unstable_classifications": sum(t.unstable for t in self.trials),
            "control": self.control.to_dict(),
            "passed": self.passed,
            "results": [t.to_dict(with_geometry=id(t) in bad) for t in self.trials],
        }


def run_campaign(trials=200, seed=0, points=10, threads=1, truncation_re=20.0) -> CampaignReport:
    start = time.perf_counter()

    def one(i):
        return run_trial(i, seed, points, truncation_re=truncation_re)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(trials)))
    else:
        results = [one(i) for i in range(trials)]
    control = run_control(truncation_re)
    return CampaignReport(results, control, int(seed), time.perf_counter() - start)
