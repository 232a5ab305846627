"""Local stencils, PCA normals and ghost points."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial import cKDTree

from .errors import DomainError, GeometryError

BRUTE_FORCE_MAX = 256
GHOST_NEIGHBORS = 5
LEVEL_C = 1.0


class NeighborIndex:
    """k-nearest-neighbour queries with ties broken by point index.

    Uses a k-d tree for clouds above ``BRUTE_FORCE_MAX`` points and an
    exhaustive sort below.  The index is read-only after construction.
    """

    def __init__(self, points: np.ndarray):
        self.points = np.ascontiguousarray(points, dtype=float)
        self.n = len(self.points)
        self._tree = cKDTree(self.points) if self.n > BRUTE_FORCE_MAX else None

    def knn(self, centers, k: int) -> np.ndarray:
        """Indices (len(centers), k) of the k nearest cloud points of each center."""
        centers = np.atleast_1d(np.asarray(centers, dtype=int))
        if k < 1 or k > self.n:
            raise DomainError(f"stencil size {k} outside 1..{self.n}")
        q = self.points[centers]
        if self._tree is None:
            d2 = ((q[:, None, :] - self.points[None, :, :]) ** 2).sum(-1)
            idx = np.broadcast_to(np.arange(self.n), d2.shape)
            order = np.lexsort((idx, d2), axis=-1)
            return order[:, :k]
        kq = min(k + 1, self.n)
        dist, idx = self._tree.query(q, k=kq)
        dist, idx = dist.reshape(len(q), kq), idx.reshape(len(q), kq)
        out = np.empty((len(q), k), dtype=int)
        for row in range(len(q)):
            d, ix = dist[row], idx[row]
            if kq > k and d[k - 1] == d[k]:
                # boundary tie: collect every point at the cut radius
                ball = np.array(self._tree.query_ball_point(q[row], d[k - 1] * (1 + 1e-15)))
                dd = ((self.points[ball] - q[row]) ** 2).sum(-1)
                ix = ball[np.lexsort((ball, dd))]
            else:
                ix = ix[np.lexsort((ix, d))]
            out[row] = ix[:k]
        return out


@dataclass
class Stencil:
    center_index: int
    neighbor_indices: np.ndarray
    points: np.ndarray
    ghost_plus: np.ndarray | None = None
    ghost_minus: np.ndarray | None = None
    offset_h: float | None = None
    level_constant_C: float = LEVEL_C
    pca_normal: np.ndarray | None = None
    normal: np.ndarray | None = None

    @property
    def size(self) -> int:
        return len(self.points)

    @property
    def center(self) -> np.ndarray:
        return self.points[0]

    @property
    def nodes(self) -> np.ndarray:
        """Constraint set: stencil points followed by the two ghosts."""
        if self.ghost_plus is None:
            return self.points
        return np.vstack([self.points, self.ghost_plus, self.ghost_minus])

    @property
    def rhs(self) -> np.ndarray:
        C, h = self.level_constant_C, self.offset_h
        b = np.full(self.size + (2 if self.ghost_plus is not None else 0), C)
        if self.ghost_plus is not None:
            b[-2], b[-1] = C + h, C - h
        return b


def knn_stencil(cloud_points: np.ndarray, center_index: int, k: int,
                index: NeighborIndex | None = None) -> Stencil:
    """Stencil of the k nearest neighbours of a point, the point itself first."""
    pts = getattr(cloud_points, "points", cloud_points)
    index = index or NeighborIndex(pts)
    nbr = index.knn([center_index], k)[0]
    if nbr[0] != center_index:
        # a duplicate at zero distance with a lower index would come first
        raise GeometryError("cloud contains duplicate points")
    return Stencil(int(center_index), nbr, index.points[nbr].copy())


def ghost_offset(stencil: Stencil, m: int = GHOST_NEIGHBORS) -> float:
    """Mean distance from the point of interest to its m nearest neighbours."""
    d = np.linalg.norm(stencil.points[1:] - stencil.center, axis=1)
    if len(d) == 0:
        raise GeometryError("stencil has no neighbours")
    return float(np.mean(np.sort(d)[:m]))


def pca_normal(stencil: Stencil | np.ndarray) -> np.ndarray:
    """Unit eigenvector of the smallest covariance eigenvalue (sign arbitrary)."""
    pts = stencil.points if isinstance(stencil, Stencil) else np.asarray(stencil, float)
    if len(pts) < 3:
        raise GeometryError("PCA normal needs at least 3 points")
    c = pts - pts.mean(axis=0)
    w, v = np.linalg.eigh(c.T @ c)
    if w[1] <= 1e-12 * max(w[2], np.finfo(float).tiny):
        raise GeometryError("degenerate stencil: points are (nearly) collinear")
    return v[:, 0]


def orient_normal(raw, reference) -> np.ndarray:
    raw = np.asarray(raw, dtype=float)
    return raw if float(np.dot(raw, reference)) >= 0.0 else -raw


def attach_ghosts(stencil: Stencil, normal, h: float, C: float = LEVEL_C) -> Stencil:
    if not h > 0:
        raise DomainError("ghost offset must be positive")
    n = np.asarray(normal, dtype=float)
    p0 = stencil.center
    gp, gm = p0 + h * n, p0 - h * n
    scale = max(1.0, float(np.max(np.abs(stencil.points))))
    for g in (gp, gm):
        if np.min(np.linalg.norm(stencil.points - g, axis=1)) <= 1e-12 * scale:
            raise GeometryError("ghost point coincides with a stencil point")
    return replace(stencil, ghost_plus=gp, ghost_minus=gm, offset_h=float(h),
                   level_constant_C=float(C), normal=n)


def global_ghost_set(points: np.ndarray, normals: np.ndarray, h: float,
                     C: float = LEVEL_C) -> tuple[np.ndarray, np.ndarray]:
    """The 3n-point set P, P+h n, P-h n with level values C, C+h, C-h."""
    points = np.asarray(points, float)
    normals = np.asarray(normals, float)
    nodes = np.vstack([points, points + h * normals, points - h * normals])
    n = len(points)
    b = np.concatenate([np.full(n, C), np.full(n, C + h), np.full(n, C - h)])
    return nodes, b
