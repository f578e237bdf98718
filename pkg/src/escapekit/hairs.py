"""Approximate hairs by repeated pullback along an external address.

For an anchor orbit ``z_j`` with address ``T_0 T_1 ...`` the curve at
index ``j`` and depth ``k`` is the unbounded piece of
``F_{T_j}^{-1}(curve_{j+1}^{k-1})`` left after cutting away the disk
``D(z_j, 2 pi)``. Depth 0 is a horizontal tail of ``T_j`` starting on the
circle. All curves are truncated at a common real part ``R``; the part of
a target beyond ``R`` is taken to continue horizontally, and the pullback
contracts whatever error that makes.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from escapekit.errors import DegenerateCutError, DomainError, NumericError, PreconditionError
from escapekit.geometry import Disk, Polyline, hausdorff_distance, points_to_segments_distance, segment_circle_crossing
from escapekit.models import TWO_PI, LogTransform, TractLabel
from escapekit.symbolic import (
    DEFAULT_ESCAPE_RE,
    ExternalAddress,
    OrbitRecord,
    first_compliant_index,
    track_orbit,
)

DISK_RADIUS = TWO_PI
DEFAULT_MESH = 0.1
DEFAULT_RE_MAX = 60.0
# the far tail is written as K * exp(u), so u must stay clear of overflow
RE_MAX_LIMIT = 600.0
MAX_REFINE_ROUNDS = 40


def seed_tail_curve(lt: LogTransform, label: TractLabel, re_from, re_to, n_points, offset=0.0) -> Polyline:
    """Horizontal segment ``[re_from, re_to]`` at height ``spine + offset`` inside one tract."""
    if not re_from < re_to:
        raise PreconditionError(f"need re_from < re_to, got {re_from} >= {re_to}")
    if n_points < 2:
        raise PreconditionError("a tail curve needs at least two points")
    y = lt.spine_im(label) + offset
    pts = np.linspace(re_from, re_to, int(n_points)) + 1j * y
    inside, base, branch = lt.labels_array(pts)
    ok = inside & (base == label.base) & (branch == label.branch)
    if not ok.all():
        bad = complex(pts[np.argmin(ok)])
        raise DomainError(f"tail point {bad} is outside tract {label}")
    return Polyline(pts, re_to)


def _ray_preimages(lt, label, y, u_from, u_to, mesh):
    """Far points ``K e^u + i y`` of a horizontal line and their ``label`` preimages.

    The preimage of such a point has real part close to ``u``, which runs
    from ``u_from`` to ``u_to`` in steps of ``mesh / 4``.
    """
    if u_to <= u_from:
        return np.empty(0, complex), np.empty(0, complex)
    us = np.arange(u_from, u_to + mesh / 4, mesh / 4)
    zeta = lt.scale_K * np.exp(us) + 1j * y
    return zeta, lt.inverse_array(zeta, label.base, label.branch)


def _thin(points, spacing):
    """Keep the first point of every arclength bin of width ``spacing``; ends are kept."""
    if points.size <= 2:
        return points
    s = np.concatenate([[0.0], np.cumsum(np.abs(np.diff(points)))])
    bins = np.floor(s / spacing)
    keep = np.ones(points.size, dtype=bool)
    keep[1:] = bins[1:] != bins[:-1]
    keep[-1] = True
    if keep.sum() > 2 and s[-1] - s[np.nonzero(keep)[0][-2]] < 1e-9 * spacing:
        keep[np.nonzero(keep)[0][-2]] = False
    return points[keep]


def _refine(lt, zeta, pre, label, mesh):
    """Insert preimages of target midpoints until no preimage gap exceeds ``mesh``."""
    for _ in range(MAX_REFINE_ROUNDS):
        gaps = np.abs(np.diff(pre))
        bad = np.nonzero(gaps > mesh)[0]
        if bad.size == 0:
            return zeta, pre
        mids = 0.5 * (zeta[bad] + zeta[bad + 1])
        mid_pre = lt.inverse_array(mids, label.base, label.branch)
        zeta = np.insert(zeta, bad + 1, mids)
        pre = np.insert(pre, bad + 1, mid_pre)
    raise NumericError(f"mesh refinement did not reach spacing {mesh}", float(np.abs(np.diff(pre)).max()))


def _truncate_at(pre, re_max):
    """Cut the curve at the first crossing of ``Re = re_max``."""
    above = np.nonzero(pre.real >= re_max)[0]
    if above.size == 0:
        return pre
    i = int(above[0])
    if i == 0:
        raise DegenerateCutError(f"pulled-back curve starts beyond the truncation Re = {re_max}")
    a, b = pre[i - 1], pre[i]
    t = (re_max - a.real) / (b.real - a.real)
    return np.append(pre[:i], a + t * (b - a))


def cut_at_disk(points, disk: Disk):
    """Keep the part after the last point strictly inside ``disk``, starting on its circle."""
    inside = disk.contains(points)
    if inside.all():
        raise DegenerateCutError(
            f"the whole curve lies inside the disk around {disk.center}; "
            "address and anchor orbit do not match"
        )
    idx = np.nonzero(inside)[0]
    if idx.size == 0:
        return points, False
    i = int(idx[-1])
    cross = segment_circle_crossing(complex(points[i]), complex(points[i + 1]), disk.center, disk.radius)
    rest = points[i + 1:]
    if abs(rest[0] - cross) == 0:
        return rest, True
    return np.concatenate([[cross], rest]), True


def pullback_step(lt: LogTransform, target: Polyline, label: TractLabel, cut_disk: Disk,
                  mesh=DEFAULT_MESH, extend=True, re_max: Optional[float] = None) -> Polyline:
    """One pullback of ``target`` through the inverse branch into ``label``.

    With ``extend`` the part of the target beyond its truncation is taken
    to be the horizontal ray from its last point, so the pulled-back curve
    again reaches ``re_max`` (defaults to the target's truncation).
    """
    if np.any(target.points.real <= 0):
        raise PreconditionError("target curve leaves the right half-plane")
    re_max = target.truncation_re if re_max is None else float(re_max)
    zeta = np.array(target.points)
    pre = lt.inverse_array(zeta, label.base, label.branch)
    # refine to half the mesh so thinning to mesh / 8 keeps every gap below mesh
    zeta, pre = _refine(lt, zeta, pre, label, mesh / 2)
    if extend:
        y = target.end.imag
        far, far_pre = _ray_preimages(lt, label, y, pre[-1].real + mesh / 4, re_max + mesh, mesh)
        keep = far.real > zeta[-1].real
        if keep.any():
            zeta = np.concatenate([zeta, far[keep]])
            pre = np.concatenate([pre, far_pre[keep]])
            zeta, pre = _refine(lt, zeta, pre, label, mesh / 2)
    pre = _truncate_at(pre, re_max)
    pre, _ = cut_at_disk(pre, cut_disk)
    pre = _thin(pre, mesh / 8)
    return Polyline.from_points(pre, re_max)


@dataclass(frozen=True)
class HairApproximation:
    address: ExternalAddress
    depth_K: int
    curves: tuple
    anchor_orbit: tuple
    j0: int = 0
    disk_radius: float = DISK_RADIUS
    mesh: float = DEFAULT_MESH
    re_max: float = DEFAULT_RE_MAX
    spine_offset: float = 0.0
    history: tuple = field(default=(), repr=False)
    deltas: tuple = ()

    @property
    def indices(self):
        return range(self.j0, self.j0 + len(self.curves))

    def curve(self, j) -> Polyline:
        return self.curves[j - self.j0]

    def disk(self, j) -> Disk:
        return Disk(self.anchor_orbit[j], self.disk_radius)

    def to_dict(self):
        return {
            "address": self.address.tokens(),
            "depth": self.depth_K,
            "j0": self.j0,
            "mesh": self.mesh,
            "re_max": self.re_max,
            "disk_radius": self.disk_radius,
            "anchor_orbit": [[z.real, z.imag] for z in self.anchor_orbit],
            "deltas": list(self.deltas),
            "curves": [dict(c.to_dict(), j=j) for j, c in zip(self.indices, self.curves)],
        }


def _initial_curve(lt, label, center, re_max, mesh, offset):
    """Depth-0 curve: the horizontal tail of ``label`` from the circle around ``center``."""
    y = lt.spine_im(label) + offset
    xs = np.linspace(lt.tract_inf_re(), re_max, 4001)
    inside, base, branch = lt.labels_array(xs + 1j * y)
    ok = inside & (base == label.base) & (branch == label.branch)
    if not ok[-1]:
        raise PreconditionError(f"height {y} does not run out to infinity in tract {label}")
    bad = np.nonzero(~ok)[0]
    start = xs[bad[-1] + 1] if bad.size else xs[0]
    dy = y - center.imag
    if abs(dy) < DISK_RADIUS:
        start = max(start, center.real + math.sqrt(DISK_RADIUS ** 2 - dy * dy))
    if start >= re_max:
        raise PreconditionError(f"disk around {center} reaches past the truncation {re_max}")
    n = max(2, int(math.ceil((re_max - start) / mesh)) + 1)
    return seed_tail_curve(lt, label, start, re_max, n, offset)


def build_hair(lt: LogTransform, address: ExternalAddress, anchor: OrbitRecord, depth_K: int,
               re_max=DEFAULT_RE_MAX, mesh=DEFAULT_MESH, spine_offset=0.0, j0=None, threads=1) -> HairApproximation:
    """Pull tail curves back ``depth_K`` times along ``address``.

    Curves exist for ``j0 <= j <= horizon - 1 - depth_K``. ``history``
    keeps the first curve at every depth and ``deltas[k]`` is the Hausdorff
    distance between depths ``k`` and ``k + 1``.
    """
    n = address.horizon
    if depth_K < 0:
        raise PreconditionError("depth must be nonnegative")
    if depth_K > n - 1:
        raise PreconditionError(f"depth {depth_K} needs an address horizon of at least {depth_K + 1}, got {n}")
    if len(anchor.steps) < n:
        raise PreconditionError(f"anchor orbit has {len(anchor.steps)} points, address needs {n}")
    if not anchor.verdict.escaping:
        raise PreconditionError(f"anchor verdict is {anchor.verdict}; an escaping orbit is required")
    z = tuple(complex(s.point) for s in anchor.steps[:n])
    for j, (p, lab) in enumerate(zip(z, address.labels)):
        if anchor.steps[j].tract != lab:
            raise PreconditionError(f"anchor point {j} = {p} lies in {anchor.steps[j].tract}, address says {lab}")
    far = max(p.real for p in z) + 2 * DISK_RADIUS
    re_max = max(float(re_max), far)
    if re_max > RE_MAX_LIMIT:
        raise PreconditionError(
            f"anchor orbit reaches Re {far - 2 * DISK_RADIUS:.1f}; use a shorter horizon (truncation must stay below {RE_MAX_LIMIT})"
        )
    if j0 is None:
        j0 = first_compliant_index(lt, z, address.labels)
    last = n - 1 - depth_K
    if j0 > last:
        raise PreconditionError(f"first compliant index {j0} leaves no curves at depth {depth_K}")

    labels = address.labels
    disks = [Disk(p, DISK_RADIUS) for p in z]
    level = {j: _initial_curve(lt, labels[j], z[j], re_max, mesh, spine_offset) for j in range(j0, n)}
    history = [level[j0]]

    def step(j):
        return j, pullback_step(lt, level[j + 1], labels[j], disks[j], mesh, True, re_max)

    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for k in range(1, depth_K + 1):
            js = range(j0, n - k)
            results = pool.map(step, js) if pool else map(step, js)
            level = dict(results)
            history.append(level[j0])
    finally:
        if pool:
            pool.shutdown()

    deltas = tuple(hausdorff_distance(a, b, mesh / 4) for a, b in zip(history[:-1], history[1:]))
    curves = tuple(level[j] for j in range(j0, last + 1))
    return HairApproximation(address, depth_K, curves, z, j0, DISK_RADIUS, mesh, re_max, spine_offset,
                             tuple(history), deltas)


# properties of a built hair -----------------------------------------------


def anchor_distances(hair: HairApproximation):
    """Distance from ``z_j`` to ``curves[j]`` for every computed ``j``."""
    return np.array([
        points_to_segments_distance(hair.anchor_orbit[j], hair.curve(j).points)[0] for j in hair.indices
    ])


def disk_penetration(hair: HairApproximation):
    """Largest depth by which a retained point lies inside its disk (``<= 0`` means none)."""
    worst = -math.inf
    for j in hair.indices:
        d = np.abs(hair.curve(j).points - hair.anchor_orbit[j])
        worst = max(worst, float(np.max(hair.disk_radius - d)))
    return worst


def boundary_contact(hair: HairApproximation):
    """Per-curve minimum distance of the points to the circle ``|w - z_j| = 2 pi``."""
    return np.array([
        float(hair.disk(j).boundary_distance(hair.curve(j).points).min()) for j in hair.indices
    ])


def forward_inclusion_residual(lt: LogTransform, hair: HairApproximation):
    """Largest distance from ``F(curves[j])`` to ``curves[j+1]``.

    Only image points left of the next curve's truncation are compared.
    """
    worst = 0.0
    for j in list(hair.indices)[:-1]:
        lab = hair.address[j]
        img = lt.evaluate_array(hair.curve(j).points, lab.base, lab.branch)
        nxt = hair.curve(j + 1)
        img = img[np.isfinite(img) & (img.real <= nxt.truncation_re)]
        if img.size:
            worst = max(worst, float(points_to_segments_distance(img, nxt.points).max()))
    return worst


# merge test -----------------------------------------------------------------


def _sym_sup(a: Polyline, b: Polyline, spacing):
    return hausdorff_distance(a, b, spacing)


@dataclass(frozen=True)
class MergeReport:
    distances: tuple
    bounds: tuple
    merged: bool
    depth: int
    ratios: tuple

    @property
    def final_distance(self):
        return self.distances[-1]

    def to_dict(self):
        return {
            "depth": self.depth,
            "merged": self.merged,
            "distances": list(self.distances),
            "bounds": list(self.bounds),
            "ratios": list(self.ratios),
        }


def merge_bound(depth, mesh):
    """``2^(1 - depth) pi`` plus twice the mesh bound."""
    return 2.0 ** (1 - depth) * math.pi + 2 * mesh


def merge_test(lt: LogTransform, hair_a: HairApproximation, hair_b: HairApproximation) -> MergeReport:
    """Compare the first curves of two hairs with the same address at every depth.

    The distance at a depth is the larger of the two one-sided sups. The
    hairs are declared merged when the final distance is within
    :func:`merge_bound` of zero.
    """
    if hair_a.address != hair_b.address:
        raise PreconditionError("hairs have different addresses")
    if hair_a.j0 != hair_b.j0:
        raise PreconditionError("hairs start at different indices")
    mesh = max(hair_a.mesh, hair_b.mesh)
    depth = min(len(hair_a.history), len(hair_b.history)) - 1
    dist = tuple(_sym_sup(hair_a.history[k], hair_b.history[k], mesh / 4) for k in range(depth + 1))
    bounds = tuple(merge_bound(k, mesh) for k in range(depth + 1))
    ratios = tuple(b / a if a > 0 else 0.0 for a, b in zip(dist[:-1], dist[1:]))
    return MergeReport(dist, bounds, dist[-1] <= bounds[-1], depth, ratios)


# escape audit -----------------------------------------------------------------


@dataclass(frozen=True)
class EscapeAudit:
    samples: int
    escaping: int
    min_margin: float
    failures: tuple = ()

    @property
    def fraction(self):
        return 1.0 if self.samples == 0 else self.escaping / self.samples

    def to_dict(self):
        return {
            "samples": self.samples,
            "escaping": self.escaping,
            "fraction": self.fraction,
            "min_margin": self.min_margin,
            "failures": [[z.real, z.imag] for z in self.failures],
        }


def escape_audit(lt: LogTransform, hair: HairApproximation, sample_count=200, horizon=40,
                 escape_re=DEFAULT_ESCAPE_RE) -> EscapeAudit:
    """Track points spread along the first curve and count escaping verdicts.

    The margin of an orbit is the smallest ratio ``re[n+1] / re[n]`` over
    steps beyond the escape threshold.
    """
    if sample_count <= 0:
        return EscapeAudit(0, 0, math.inf)
    pts = hair.curves[0].sample(sample_count)
    ok = 0
    margin = math.inf
    failures = []
    for p in pts:
        rec = track_orbit(lt, complex(p), horizon, escape_re)
        if rec.verdict.escaping:
            ok += 1
            re = rec.re_parts[rec.threshold_index():]
            if re.size > 1:
                margin = min(margin, float(np.min(re[1:] / re[:-1])))
        else:
            failures.append(complex(p))
    return EscapeAudit(int(sample_count), ok, margin, tuple(failures))


# disjoint type ------------------------------------------------------------------


@dataclass(frozen=True)
class DisjointTypeCertificate:
    inf_re: float
    margin: float
    samples: int

    @property
    def certified(self):
        return self.inf_re > self.margin

    def to_dict(self):
        return {"inf_re": self.inf_re, "margin": self.margin, "certified": self.certified, "samples": self.samples}


def certify_disjoint_type(lt: LogTransform, samples=4001, margin=0.1) -> DisjointTypeCertificate:
    """Sampled infimum of ``Re`` over tract boundaries, compared to ``margin``."""
    inf_re = math.inf
    for base in lt.bases:
        w = lt.sample_tract_boundary(samples, TractLabel(base, 0))
        inf_re = min(inf_re, float(np.min(w.real)))
    return DisjointTypeCertificate(inf_re, float(margin), int(samples))
