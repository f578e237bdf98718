"""Escape-time images as binary PPM (P6) files.

Pixels are coloured by the first iteration whose escape coordinate passes
the threshold; non-escaping pixels are black. Rows are independent, so
they are split into blocks and rendered on a thread pool; block results
are written back in row order, which keeps the output bit-exact.
"""

from __future__ import annotations

import enum
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from escapekit.errors import PreconditionError
from escapekit.models import OVERFLOW_EXPONENT, EntireModel, Family, LogTransform, load_model_file

MAX_SIDE = 16384
DEFAULT_ESCAPE = 50.0
NON_ESCAPING = -1
HAIR_COLOR = (255, 255, 255)
DISK_COLOR = (255, 64, 160)


def _build_palette():
    """256 colours ramping dark blue -> cyan -> yellow -> red, integer arithmetic only."""
    stops = [(0, (16, 16, 96)), (85, (32, 200, 220)), (170, (250, 230, 60)), (255, (200, 30, 20))]
    pal = np.zeros((256, 3), dtype=np.uint8)
    for (k0, c0), (k1, c1) in zip(stops[:-1], stops[1:]):
        for k in range(k0, k1 + 1):
            pal[k] = [a + (b - a) * (k - k0) // (k1 - k0) for a, b in zip(c0, c1)]
    return pal


PALETTE = _build_palette()
BAND_STEP = 23


class RenderMode(str, enum.Enum):
    PLANE = "plane"
    LOG = "log"
    HAIR = "hair"


@dataclass(frozen=True)
class RenderJob:
    model_path: Optional[str]
    center: complex
    width: float
    height: float
    px_w: int
    px_h: int
    horizon: int
    mode: RenderMode = RenderMode.PLANE
    output_path: Optional[str] = None
    escape_re: float = DEFAULT_ESCAPE

    def __post_init__(self):
        object.__setattr__(self, "mode", RenderMode(self.mode))
        object.__setattr__(self, "center", complex(self.center))
        if not (self.width > 0 and self.height > 0):
            raise ValueError("window width and height must be positive")
        for side in (self.px_w, self.px_h):
            if not (isinstance(side, (int, np.integer)) and 1 <= side <= MAX_SIDE):
                raise ValueError(f"resolution must be between 1 and {MAX_SIDE} per side")
        if self.horizon < 0:
            raise ValueError("horizon must be nonnegative")

    # pixel <-> plane

    @property
    def pixel_size(self):
        return self.width / self.px_w, self.height / self.px_h

    def pixel_to_plane(self, col, row):
        """Centre of pixel ``(col, row)``; row 0 is the top of the image."""
        col = np.asarray(col, dtype=float)
        row = np.asarray(row, dtype=float)
        x = self.center.real + self.width * ((col + 0.5) / self.px_w - 0.5)
        y = self.center.imag + self.height * (0.5 - (row + 0.5) / self.px_h)
        return x + 1j * y

    def plane_to_pixel(self, z):
        """Fractional pixel coordinates ``(col, row)`` whose centre is at integer values."""
        z = np.asarray(z, dtype=complex)
        col = ((z.real - self.center.real) / self.width + 0.5) * self.px_w - 0.5
        row = (0.5 - (z.imag - self.center.imag) / self.height) * self.px_h - 0.5
        return col, row


@dataclass
class RenderResult:
    pixels: np.ndarray
    escape_index: np.ndarray
    runtime: float

    @property
    def escaping_fraction(self):
        return float(np.mean(self.escape_index >= 0))

    def stats(self):
        return {
            "width": int(self.pixels.shape[1]),
            "height": int(self.pixels.shape[0]),
            "escaping_fraction": self.escaping_fraction,
            "runtime_s": self.runtime,
        }

    def to_ppm(self) -> bytes:
        h, w, _ = self.pixels.shape
        return f"P6\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(self.pixels).tobytes()

    def save(self, path):
        Path(path).write_bytes(self.to_ppm())


def read_ppm(data: bytes) -> np.ndarray:
    """Parse the P6 files written here (no comments in the header)."""
    parts = data.split(b"\n", 3)
    if parts[0] != b"P6" or parts[2] != b"255":
        raise ValueError("not a binary 8-bit PPM")
    w, h = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w, 3)


def colorize(escape_index):
    out = np.zeros(escape_index.shape + (3,), dtype=np.uint8)
    esc = escape_index >= 0
    out[esc] = PALETTE[(escape_index[esc] * BAND_STEP) % 256]
    return out


# kernels ----------------------------------------------------------------------------


def _plane_kernel(model: EntireModel, z, horizon, escape_re):
    out = np.full(z.shape, NON_ESCAPING, dtype=np.int32)
    idx = np.arange(z.size)
    zz = z.ravel().copy()
    flat = out.ravel()
    for n in range(1, horizon + 1):
        zz = model.evaluate_array(zz)
        coord = np.abs(zz.real) if model.family is Family.COSH else zz.real
        # overflowed entries are inf, and inf > escape_re
        esc = ~(coord <= escape_re)
        if esc.any():
            flat[idx[esc]] = n
            keep = ~esc
            zz, idx = zz[keep], idx[keep]
        if zz.size == 0:
            break
    return out


def _log_kernel(lt: LogTransform, w, horizon, escape_re):
    out = np.full(w.shape, NON_ESCAPING, dtype=np.int32)
    idx = np.arange(w.size)
    ww = w.ravel().copy()
    flat = out.ravel()
    for n in range(1, horizon + 1):
        inside, base, branch = lt.labels_array(ww)
        big = ww.real > OVERFLOW_EXPONENT
        keep = inside | big
        ww, idx, base, branch, big = ww[keep], idx[keep], base[keep], branch[keep], big[keep]
        nxt = lt.evaluate_array(ww, base, branch)
        esc = big | ~(nxt.real <= escape_re)
        if esc.any():
            flat[idx[esc]] = n
            keep = ~esc
            ww, idx = nxt[keep], idx[keep]
        else:
            ww = nxt
        if ww.size == 0:
            break
    return out


def _load(job: RenderJob, model=None, lt=None):
    if model is None and lt is None:
        if job.model_path is None:
            raise PreconditionError("render job has no model")
        model, K = load_model_file(job.model_path)
        if job.mode is not RenderMode.PLANE:
            if K is None:
                from escapekit.normalization import normalize

                lt = normalize(model).transform
            else:
                lt = LogTransform(model, K)
    if lt is not None and model is None:
        model = lt.model
    if job.mode is not RenderMode.PLANE and lt is None:
        raise PreconditionError("log-plane rendering needs a scale K")
    return model, lt


def render_escape_time(job: RenderJob, model: Optional[EntireModel] = None, lt: Optional[LogTransform] = None,
                       threads=1, block_rows=32) -> RenderResult:
    """Render the escape-time layer of ``job``.

    The model comes from ``job.model_path`` unless ``model`` (plane mode)
    or ``lt`` (log modes) is passed directly.
    """
    model, lt = _load(job, model, lt)
    start = time.perf_counter()
    cols = np.arange(job.px_w)
    blocks = [(r, min(r + block_rows, job.px_h)) for r in range(0, job.px_h, block_rows)]

    def run(block):
        r0, r1 = block
        z = job.pixel_to_plane(cols[None, :], np.arange(r0, r1)[:, None])
        if job.mode is RenderMode.PLANE:
            return _plane_kernel(model, z, job.horizon, job.escape_re)
        return _log_kernel(lt, z, job.horizon, job.escape_re)

    esc = np.empty((job.px_h, job.px_w), dtype=np.int32)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, blocks))
    else:
        parts = [run(b) for b in blocks]
    for (r0, r1), part in zip(blocks, parts):
        esc[r0:r1] = part
    result = RenderResult(colorize(esc), esc, time.perf_counter() - start)
    if job.output_path and job.mode is not RenderMode.HAIR:
        result.save(job.output_path)
    return result


# hair overlay -------------------------------------------------------------------------


def _polyline_pixels(job: RenderJob, points):
    """Pixels hit by a polyline, sampled at a quarter pixel."""
    pts = np.asarray(points, dtype=complex)
    if pts.size == 0:
        return np.empty((0, 2), dtype=int)
    step = 0.25 * min(job.pixel_size)
    seg = np.diff(pts)
    counts = np.maximum(1, np.ceil(np.abs(seg) / step).astype(int))
    parts = [pts[:1]]
    for a, d, k in zip(pts[:-1], seg, counts):
        parts.append(a + d * (np.arange(1, k + 1) / k))
    dense = np.concatenate(parts)
    col, row = job.plane_to_pixel(dense)
    col = np.rint(col).astype(int)
    row = np.rint(row).astype(int)
    ok = (col >= 0) & (col < job.px_w) & (row >= 0) & (row < job.px_h)
    return np.unique(np.column_stack([row[ok], col[ok]]), axis=0)


def _circle(center, radius, job):
    n = max(64, int(math.ceil(2 * math.pi * radius / (0.25 * min(job.pixel_size)))))
    return center + radius * np.exp(2j * np.pi * np.arange(n + 1) / n)


@dataclass
class OverlayAudit:
    curve_pixels: int
    on_escaping: int
    near_boundary: int

    @property
    def strict_fraction(self):
        return 1.0 if self.curve_pixels == 0 else self.on_escaping / self.curve_pixels

    @property
    def fraction(self):
        """Share of curve pixels that are escaping or next to an escaping pixel."""
        if self.curve_pixels == 0:
            return 1.0
        return (self.on_escaping + self.near_boundary) / self.curve_pixels

    def to_dict(self):
        return {
            "curve_pixels": self.curve_pixels,
            "on_escaping": self.on_escaping,
            "near_boundary": self.near_boundary,
            "strict_fraction": self.strict_fraction,
            "fraction": self.fraction,
        }


@dataclass
class OverlayResult:
    base: RenderResult
    pixels: np.ndarray
    audit: OverlayAudit

    def to_ppm(self):
        return RenderResult(self.pixels, self.base.escape_index, self.base.runtime).to_ppm()

    def save(self, path):
        Path(path).write_bytes(self.to_ppm())


def render_hair_overlay(job: RenderJob, hair, lt: Optional[LogTransform] = None, threads=1,
                        base: Optional[RenderResult] = None) -> OverlayResult:
    """Draw hair curves and their disks over the log-plane escape-time layer.

    ``hair`` may be ``None`` or have no curves, in which case the base image
    is returned unchanged.
    """
    if job.mode is RenderMode.PLANE:
        raise PreconditionError("hair overlays live in logarithmic coordinates; use mode 'log' or 'hair'")
    if base is None:
        base = render_escape_time(job, lt=lt, threads=threads)
    pixels = base.pixels.copy()
    esc = base.escape_index >= 0
    curve_px = []
    if hair is not None:
        for j in hair.indices:
            circle = _circle(hair.anchor_orbit[j], hair.disk_radius, job)
            rc = _polyline_pixels(job, circle)
            pixels[rc[:, 0], rc[:, 1]] = DISK_COLOR
        for c in hair.curves:
            rc = _polyline_pixels(job, c.points)
            curve_px.append(rc)
            pixels[rc[:, 0], rc[:, 1]] = HAIR_COLOR
    if curve_px:
        rc = np.unique(np.concatenate(curve_px), axis=0)
        on = esc[rc[:, 0], rc[:, 1]]
        padded = np.pad(esc, 1)
        near = np.zeros(len(rc), dtype=bool)
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                near |= padded[rc[:, 0] + 1 + dr, rc[:, 1] + 1 + dc]
        audit = OverlayAudit(len(rc), int(on.sum()), int((~on & near).sum()))
    else:
        audit = OverlayAudit(0, 0, 0)
    result = OverlayResult(base, pixels, audit)
    if job.output_path:
        result.save(job.output_path)
    return result
