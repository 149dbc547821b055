"""Synthetic dirty apertures: random dots and scratch polylines on a disk.

An aperture is sampled as a parametric defect list (ApertureSpec) and then
rasterized to a square transmission grid in [0, 1]. The clean disk transmits
1 inside its radius and 0 outside; each defect attenuates the cells it covers
by (1 - opacity), and overlapping defects compose multiplicatively.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

# The disk occupies 1/margin of the grid half-width so defects near the rim
# stay inside the array.
GRID_MARGIN = 1.1

SUPERSAMPLE_OFFSETS = (-0.25, 0.25)  # 2x2 coverage samples per cell


def grid_disk_radius(grid_size: int) -> float:
    """Radius of the aperture disk in grid cells, shared with the phase grids."""
    return grid_size / (2.0 * GRID_MARGIN)


@dataclass(frozen=True)
class Dot:
    center: tuple[float, float]  # (u, v) aperture px
    radius: float
    opacity: float


@dataclass(frozen=True)
class Polyline:
    vertices: tuple[tuple[float, float], ...]
    width: float
    opacity: float


@dataclass
class ApertureSpec:
    disk_radius_px: float
    dots: list[Dot] = field(default_factory=list)
    polylines: list[Polyline] = field(default_factory=list)

    def validate(self) -> None:
        bound = self.disk_radius_px
        for d in self.dots:
            if d.radius < 0 or not 0.0 <= d.opacity <= 1.0:
                raise ValueError(f"invalid dot {d}")
            if abs(d.center[0]) > bound or abs(d.center[1]) > bound:
                raise ValueError(f"dot center outside bounding square: {d}")
        for p in self.polylines:
            if p.width < 0 or not 0.0 <= p.opacity <= 1.0:
                raise ValueError(f"invalid polyline width/opacity: {p}")
            if abs(p.vertices[0][0]) > bound or abs(p.vertices[0][1]) > bound:
                raise ValueError(f"polyline start outside bounding square: {p}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ApertureSpec":
        raw = json.loads(text)
        return cls(
            disk_radius_px=float(raw["disk_radius_px"]),
            dots=[Dot(tuple(d["center"]), d["radius"], d["opacity"]) for d in raw["dots"]],
            polylines=[
                Polyline(tuple(tuple(v) for v in p["vertices"]), p["width"], p["opacity"])
                for p in raw["polylines"]
            ],
        )


@dataclass
class ApertureConfig:
    """Defect sampling distributions. Defaults are the full-scale values."""

    disk_radius_px: float = 3000.0
    dot_count_mean: float = 30.0
    dot_count_std: float = 5.0
    dot_radius_max_mean: float = 100.0
    dot_radius_max_std: float = 50.0
    polyline_count_mean: float = 30.0
    polyline_count_std: float = 5.0
    segments_min: int = 1
    segments_max: int = 16
    line_width_max_mean: float = 20.0
    line_width_max_std: float = 5.0
    # "square": uniform over the disk's bounding square; "disk": uniform over
    # the disk itself.
    placement: str = "square"
    # Polyline vertices step by U(-step_frac*R, step_frac*R) per axis.
    step_frac: float = 0.5


DESK_APERTURE = ApertureConfig(disk_radius_px=750.0)
PAPER_APERTURE = ApertureConfig(disk_radius_px=3000.0)
DESK_GRID = 2048
PAPER_GRID = 8192


def _count(rng: np.random.Generator, mean: float, std: float) -> int:
    return max(0, int(round(rng.normal(mean, std))))


def _position(rng: np.random.Generator, radius: float, placement: str) -> tuple[float, float]:
    if placement == "disk":
        r = radius * np.sqrt(rng.uniform())
        theta = rng.uniform(0.0, 2.0 * np.pi)
        return (float(r * np.cos(theta)), float(r * np.sin(theta)))
    u, v = rng.uniform(-radius, radius, size=2)
    return (float(u), float(v))


def sample_aperture_spec(seed: int, cfg: ApertureConfig | None = None) -> ApertureSpec:
    """Draw a random defective aperture. The same seed reproduces the spec.

    Dot count and polyline count ~ N(30, 5^2) (rounded, clamped at 0); the
    per-aperture maximum dot radius ~ N(100, 50^2) and maximum line width
    ~ N(20, 5^2), with individual sizes uniform up to those maxima; each
    polyline has U{1..16} segments chained end to end; opacities ~ U(0, 1).
    """
    cfg = cfg or ApertureConfig()
    rng = np.random.default_rng(seed)
    R = cfg.disk_radius_px

    n_d = _count(rng, cfg.dot_count_mean, cfg.dot_count_std)
    r_d_max = max(0.0, rng.normal(cfg.dot_radius_max_mean, cfg.dot_radius_max_std))
    dots = []
    for _ in range(n_d):
        center = _position(rng, R, cfg.placement)
        radius = rng.uniform(0.0, r_d_max)
        opacity = rng.uniform()
        dots.append(Dot(center, float(radius), float(opacity)))

    n_p = _count(rng, cfg.polyline_count_mean, cfg.polyline_count_std)
    w_p_max = max(0.0, rng.normal(cfg.line_width_max_mean, cfg.line_width_max_std))
    polylines = []
    step = cfg.step_frac * R
    for _ in range(n_p):
        n_l = int(rng.integers(cfg.segments_min, cfg.segments_max + 1))
        verts = [_position(rng, R, cfg.placement)]
        for _ in range(n_l):
            du, dv = rng.uniform(-step, step, size=2)
            verts.append((verts[-1][0] + float(du), verts[-1][1] + float(dv)))
        width = rng.uniform(0.0, w_p_max)
        opacity = rng.uniform()
        polylines.append(Polyline(tuple(verts), float(width), float(opacity)))

    return ApertureSpec(disk_radius_px=R, dots=dots, polylines=polylines)


def _segment_covered(us, vs, a, b, half_width):
    """Boolean coverage of the capsule around segment a-b, at sample coords."""
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    seg2 = dx * dx + dy * dy
    px = us - ax
    py = vs - ay
    if seg2 <= 0.0:
        d2 = px * px + py * py
    else:
        t = np.clip((px * dx + py * dy) / seg2, 0.0, 1.0)
        ex = px - t * dx
        ey = py - t * dy
        d2 = ex * ex + ey * ey
    return d2 <= half_width * half_width


def rasterize_aperture(spec: ApertureSpec, grid_size: int) -> np.ndarray:
    """Rasterize ``spec`` to a (grid_size, grid_size) float32 transmission grid.

    Aperture coordinates scale by grid_disk_radius(grid_size)/disk_radius_px so
    the disk fits with a 1.1x margin. Coverage uses 2x2 supersampling per cell;
    within a subsample the value is disk * prod(1 - opacity) over covering
    defects, and the four subsamples are averaged.
    """
    if grid_size < 64:
        raise ValueError(f"grid_size must be >= 64, got {grid_size}")
    R_grid = grid_disk_radius(grid_size)
    scale = R_grid / spec.disk_radius_px

    centers = np.arange(grid_size, dtype=np.float64) + 0.5 - grid_size / 2.0
    acc = np.zeros((grid_size, grid_size), dtype=np.float64)

    for oy in SUPERSAMPLE_OFFSETS:
        for ox in SUPERSAMPLE_OFFSETS:
            # Sample coordinates in aperture pixels.
            us = (centers + ox) / scale
            vs = (centers + oy) / scale
            plane = np.where(
                us[None, :] ** 2 + vs[:, None] ** 2 < spec.disk_radius_px**2, 1.0, 0.0
            )
            for dot in spec.dots:
                _stamp_dot(plane, us, vs, dot)
            for poly in spec.polylines:
                _stamp_polyline(plane, us, vs, poly)
            acc += plane

    return (acc / 4.0).astype(np.float32)


def _bbox_slices(us, vs, u_lo, u_hi, v_lo, v_hi):
    j0, j1 = np.searchsorted(us, [u_lo, u_hi])
    i0, i1 = np.searchsorted(vs, [v_lo, v_hi])
    return slice(i0, min(i1 + 1, len(vs))), slice(j0, min(j1 + 1, len(us)))


def _stamp_dot(plane, us, vs, dot: Dot) -> None:
    if dot.radius <= 0 or dot.opacity <= 0:
        return
    cu, cv = dot.center
    r = dot.radius
    si, sj = _bbox_slices(us, vs, cu - r, cu + r, cv - r, cv + r)
    if si.start >= si.stop or sj.start >= sj.stop:
        return
    du = us[sj] - cu
    dv = vs[si] - cv
    covered = du[None, :] ** 2 + dv[:, None] ** 2 <= r * r
    plane[si, sj][covered] *= 1.0 - dot.opacity


def _stamp_polyline(plane, us, vs, poly: Polyline) -> None:
    if poly.width <= 0 or poly.opacity <= 0:
        return
    hw = poly.width / 2.0
    # One multiplicative hit per polyline: union coverage over its segments,
    # each evaluated only inside its own bounding box.
    xs = [p[0] for p in poly.vertices]
    ys = [p[1] for p in poly.vertices]
    si, sj = _bbox_slices(us, vs, min(xs) - hw, max(xs) + hw, min(ys) - hw, max(ys) + hw)
    if si.start >= si.stop or sj.start >= sj.stop:
        return
    covered = np.zeros((si.stop - si.start, sj.stop - sj.start), dtype=bool)
    for a, b in zip(poly.vertices[:-1], poly.vertices[1:]):
        ti, tj = _bbox_slices(
            us, vs,
            min(a[0], b[0]) - hw, max(a[0], b[0]) + hw,
            min(a[1], b[1]) - hw, max(a[1], b[1]) + hw,
        )
        if ti.start >= ti.stop or tj.start >= tj.stop:
            continue
        uu = us[tj][None, :]
        vv = vs[ti][:, None]
        local = covered[ti.start - si.start : ti.stop - si.start, tj.start - sj.start : tj.stop - sj.start]
        local |= _segment_covered(uu, vv, a, b, hw)
    plane[si, sj][covered] *= 1.0 - poly.opacity
