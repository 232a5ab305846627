"""Synthetic test surfaces with exact normals and curvatures.

Three implicit shapes are provided: the ellipsoid, the torus and the sphube
(a superquadric that morphs from the sphere ``s=0`` toward the cube ``s=1``).
Point clouds are drawn from a 2-D Halton sequence (bases 2 and 3) in each
shape's parameter rectangle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import qmc

from .errors import DomainError, GeometryError, ParseError


@dataclass(frozen=True)
class ImplicitSurface:
    kind: str
    params: tuple[float, ...]

    def __post_init__(self):
        p = self.params
        if self.kind == "ellipsoid":
            if len(p) != 3 or min(p) <= 0:
                raise DomainError("ellipsoid needs a, b, c > 0")
        elif self.kind == "torus":
            if len(p) != 2 or not p[0] > p[1] > 0:
                raise DomainError("torus needs R > r > 0")
        elif self.kind == "sphube":
            if len(p) != 2 or not (0 <= p[0] <= 1 and p[1] > 0):
                raise DomainError("sphube needs 0 <= s <= 1 and r > 0")
        else:
            raise DomainError(f"unknown surface kind {self.kind!r}")

    @property
    def label(self) -> str:
        return f"{self.kind}(" + ",".join(f"{v:g}" for v in self.params) + ")"

    # -- implicit function and its derivatives, vectorized over rows --------

    def value(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        x, y, z = pts[..., 0], pts[..., 1], pts[..., 2]
        if self.kind == "ellipsoid":
            a, b, c = self.params
            return x**2 / a**2 + y**2 / b**2 + z**2 / c**2 - 1.0
        if self.kind == "torus":
            R, r = self.params
            return (R - np.sqrt(x**2 + y**2)) ** 2 + z**2 - r**2
        s, r = self.params
        al, be = s**2 / r**2, s**4 / r**4
        x2, y2, z2 = x * x, y * y, z * z
        return x2 + y2 + z2 - al * (x2 * y2 + y2 * z2 + x2 * z2) + be * x2 * y2 * z2 - r**2

    def gradient(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        x, y, z = pts[..., 0], pts[..., 1], pts[..., 2]
        if self.kind == "ellipsoid":
            a, b, c = self.params
            g = [2 * x / a**2, 2 * y / b**2, 2 * z / c**2]
        elif self.kind == "torus":
            R, _ = self.params
            rho = np.sqrt(x**2 + y**2)
            g = [2 * x * (1 - R / rho), 2 * y * (1 - R / rho), 2 * z]
        else:
            s, r = self.params
            al, be = s**2 / r**2, s**4 / r**4
            x2, y2, z2 = x * x, y * y, z * z
            g = [
                2 * x * (1 - al * (y2 + z2) + be * y2 * z2),
                2 * y * (1 - al * (x2 + z2) + be * x2 * z2),
                2 * z * (1 - al * (x2 + y2) + be * x2 * y2),
            ]
        return np.stack(g, axis=-1)

    def hessian(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        x, y, z = pts[..., 0], pts[..., 1], pts[..., 2]
        H = np.zeros(pts.shape[:-1] + (3, 3))
        if self.kind == "ellipsoid":
            a, b, c = self.params
            H[..., 0, 0], H[..., 1, 1], H[..., 2, 2] = 2 / a**2, 2 / b**2, 2 / c**2
        elif self.kind == "torus":
            R, _ = self.params
            rho = np.sqrt(x**2 + y**2)
            H[..., 0, 0] = 2 * (1 - R / rho) + 2 * R * x * x / rho**3
            H[..., 1, 1] = 2 * (1 - R / rho) + 2 * R * y * y / rho**3
            H[..., 0, 1] = H[..., 1, 0] = 2 * R * x * y / rho**3
            H[..., 2, 2] = 2.0
        else:
            s, r = self.params
            al, be = s**2 / r**2, s**4 / r**4
            c = (x, y, z)
            sq = (x * x, y * y, z * z)
            for i in range(3):
                j, k = (i + 1) % 3, (i + 2) % 3
                H[..., i, i] = 2 - 2 * al * (sq[j] + sq[k]) + 2 * be * sq[j] * sq[k]
                H[..., i, j] = H[..., j, i] = 4 * c[i] * c[j] * (be * sq[k] - al)
        return H

    def unit_normal(self, pts) -> np.ndarray:
        g = self.gradient(pts)
        n = np.linalg.norm(g, axis=-1, keepdims=True)
        if np.any(n == 0):
            raise GeometryError("vanishing gradient: singular point of the surface")
        return g / n


def ellipsoid(a: float = 0.85, b: float = 0.35, c: float = 0.5) -> ImplicitSurface:
    return ImplicitSurface("ellipsoid", (float(a), float(b), float(c)))


def torus(R: float = 1.0, r: float = 0.2) -> ImplicitSurface:
    return ImplicitSurface("torus", (float(R), float(r)))


def sphube(s: float = 0.9, r: float = 1.0) -> ImplicitSurface:
    return ImplicitSurface("sphube", (float(s), float(r)))


def make_surface(kind: str, params=None) -> ImplicitSurface:
    factories = {"ellipsoid": ellipsoid, "torus": torus, "sphube": sphube}
    if kind not in factories:
        raise DomainError(f"unknown surface kind {kind!r}")
    return factories[kind](*(params or ()))


@dataclass
class PointCloud:
    points: np.ndarray
    normals: np.ndarray | None = None
    source: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=float).reshape(-1, 3)
        if self.normals is not None:
            self.normals = np.ascontiguousarray(self.normals, dtype=float).reshape(-1, 3)
            if len(self.normals) != len(self.points):
                raise DomainError("normals and points differ in length")

    def __len__(self) -> int:
        return len(self.points)


def implicit_value(surface: ImplicitSurface, p) -> float | np.ndarray:
    return surface.value(p)


def _halton_unit(n: int) -> np.ndarray:
    return qmc.Halton(d=2, scramble=False).random(n)


def _sphere_directions(uv: np.ndarray) -> np.ndarray:
    theta = np.arccos(1.0 - 2.0 * uv[:, 0])
    phi = 2.0 * np.pi * uv[:, 1]
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=1)


def _sphube_radius(surface: ImplicitSurface, dirs: np.ndarray) -> np.ndarray:
    s, r = surface.params
    # F is not monotone along rays for large s, so bracket the first sign change
    grid = np.linspace(0.0, 2.0 * r, 257)[1:]
    vals = surface.value(grid[None, :, None] * dirs[:, None, :])
    pos = vals > 0
    if not np.all(pos.any(axis=1)):
        raise GeometryError("sphube ray bracket failed")
    first = np.argmax(pos, axis=1)
    hi = grid[first]
    lo = np.where(first > 0, grid[np.maximum(first - 1, 0)], 0.0)
    # bisection to machine resolution; F(lo d) <= 0 < F(hi d)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        up = surface.value(mid[:, None] * dirs) > 0
        hi = np.where(up, mid, hi)
        lo = np.where(up, lo, mid)
        if np.all(hi - lo <= 4 * np.finfo(float).eps * hi):
            break
    return 0.5 * (lo + hi)


def halton_sample(surface: ImplicitSurface, n: int) -> PointCloud:
    """Deterministic low-discrepancy sample of ``n`` surface points."""
    if n < 1:
        raise DomainError("sample size must be positive")
    uv = _halton_unit(n)
    if surface.kind == "ellipsoid":
        a, b, c = surface.params
        pts = _sphere_directions(uv) * np.array([a, b, c])
    elif surface.kind == "torus":
        R, r = surface.params
        u, v = 2 * np.pi * uv[:, 0], 2 * np.pi * uv[:, 1]
        ring = R + r * np.cos(v)
        pts = np.stack([ring * np.cos(u), ring * np.sin(u), r * np.sin(v)], axis=1)
    else:
        d = _sphere_directions(uv)
        pts = _sphube_radius(surface, d)[:, None] * d
    return PointCloud(pts, surface.unit_normal(pts), source=f"halton:{surface.label}:{n}")


def exact_frame(surface: ImplicitSurface, p, orientation_ref=None):
    """Analytic normal and principal curvatures at a surface point."""
    from .differential import frame_from_derivatives

    p = np.asarray(p, dtype=float)
    if abs(surface.value(p)) > 1e-8:
        raise DomainError("point is not on the surface")
    g = surface.gradient(p)
    if np.linalg.norm(g) == 0:
        raise GeometryError("vanishing gradient")
    return frame_from_derivatives(g, surface.hessian(p), orientation_ref)


def fill_distance(cloud: PointCloud | np.ndarray, probe: PointCloud | np.ndarray) -> float:
    """Largest distance from a probe point to its nearest cloud point."""
    a = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, float)
    b = probe.points if isinstance(probe, PointCloud) else np.asarray(probe, float)
    if len(a) == 0 or len(b) == 0:
        raise DomainError("fill distance needs nonempty point sets")
    d, _ = cKDTree(a).query(b, k=1)
    return float(np.max(d))


def add_noise(cloud: PointCloud, sigma: float, seed: int = 0) -> PointCloud:
    if sigma < 0:
        raise DomainError("sigma must be nonnegative")
    if sigma == 0:
        return replace(cloud, points=cloud.points.copy(), normals=None)
    rng = np.random.default_rng(seed)
    pts = cloud.points + rng.normal(0.0, sigma, size=cloud.points.shape)
    return PointCloud(pts, None, source=f"{cloud.source}+noise({sigma:g},{seed})")


def cube_cloud(n: int = 30000, edge: float = 1.0, seed: int = 0) -> PointCloud:
    """Uniform random points on the faces of an origin-centred cube."""
    if n < 6:
        raise DomainError("need at least one point per face")
    rng = np.random.default_rng(seed)
    half = 0.5 * edge
    counts = [n // 6 + (1 if i < n % 6 else 0) for i in range(6)]
    pts, nrm = [], []
    for face, m in enumerate(counts):
        axis, sign = face // 2, (1.0 if face % 2 == 0 else -1.0)
        q = rng.uniform(-half, half, size=(m, 3))
        q[:, axis] = sign * half
        e = np.zeros(3)
        e[axis] = sign
        pts.append(q)
        nrm.append(np.tile(e, (m, 1)))
    return PointCloud(np.vstack(pts), np.vstack(nrm), source=f"cube:{edge:g}:{n}:{seed}")


def cube_distance(points, edge: float = 1.0) -> np.ndarray:
    """Unsigned distance from each point to the surface of the cube."""
    q = np.abs(np.asarray(points, dtype=float)) - 0.5 * edge
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
    inside = np.minimum(np.max(q, axis=-1), 0.0)
    return np.abs(outside + inside)


# -- XYZ text format -------------------------------------------------------

def read_xyz(path) -> PointCloud:
    pts, nrm = [], []
    width = None
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            fields = s.split()
            if len(fields) not in (3, 6):
                raise ParseError(f"expected 3 or 6 fields, got {len(fields)}", lineno)
            if width is not None and len(fields) != width:
                raise ParseError("inconsistent field count", lineno)
            width = len(fields)
            try:
                vals = [float(f) for f in fields]
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
            if not all(np.isfinite(vals)):
                raise ParseError("non-finite value", lineno)
            pts.append(vals[:3])
            if width == 6:
                nrm.append(vals[3:])
    if not pts:
        raise ParseError(f"no points in {path}")
    normals = np.array(nrm) if width == 6 else None
    return PointCloud(np.array(pts), normals, source=str(Path(path).name))


def write_xyz(cloud: PointCloud, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        if cloud.source:
            fh.write(f"# {cloud.source}\n")
        if cloud.normals is None:
            for p in cloud.points:
                fh.write("%r %r %r\n" % tuple(float(v) for v in p))
        else:
            for p, n in zip(cloud.points, cloud.normals):
                fh.write("%r %r %r %r %r %r\n" % tuple(float(v) for v in (*p, *n)))

