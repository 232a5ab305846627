"""Constraint and norm matrices for the RBF, HRBF and KRBF trial spaces.

Every trial space is a list of column blocks.  Each block knows how to
evaluate its basis functions, their gradients and Hessians at arbitrary
points, so the constraint matrix ``A`` and every later point evaluation go
through the same code.

Column blocks:

* ``radial``  -- ``Phi_{tau,3}(|x - p_j|)`` for centers ``p_j``
* ``hermite`` -- ``d/dp_k Phi_{tau,3}(|x - p|)`` at ``p = p_j``, ``k = 0, 1, 2``
* ``axis``    -- ``Phi_{tau,1}(|x_a - c_j|)`` for 1-D centers ``c_j`` on axis ``a``
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import block_diag
from scipy.spatial.distance import pdist

from .errors import DomainError, GeometryError
from .kernel import MaternKernel, psi
from .stencil import Stencil

CONFIGS = ("original", "regrid", "stretch", "stretch_regrid")
CONFIG_ALIASES = {"1": "original", "2": "regrid", "3": "stretch", "4": "stretch_regrid"}


@dataclass(frozen=True)
class CenterConfig:
    mode: str = "stretch_regrid"
    reference_length: float | None = None  # None: twice the stencil diameter

    def __post_init__(self):
        mode = CONFIG_ALIASES.get(str(self.mode), self.mode)
        if mode not in CONFIGS:
            raise DomainError(f"unknown center configuration {self.mode!r}")
        object.__setattr__(self, "mode", mode)

    @property
    def number(self) -> int:
        return CONFIGS.index(self.mode) + 1


@dataclass
class Block:
    kind: str  # radial | hermite | axis
    kernel: MaternKernel
    centers: np.ndarray  # (n, 3) for radial/hermite, (n,) for axis
    axis: int | None = None
    scale: float = 1.0  # axis blocks act on t = scale * (x_axis - origin)
    origin: float = 0.0

    @property
    def size(self) -> int:
        return len(self.centers) * (3 if self.kind == "hermite" else 1)

    def _offsets(self, X: np.ndarray) -> np.ndarray:
        t = self.scale * (X[:, self.axis] - self.origin)
        return t[:, None] - self.centers[None, :]

    # Each evaluator takes X of shape (m, 3) and returns arrays whose last
    # axis runs over this block's columns.

    def values(self, X: np.ndarray) -> np.ndarray:
        n = self.kernel.order
        if self.kind == "axis":
            u = self._offsets(X)
            return psi(n, np.abs(u))
        d = X[:, None, :] - self.centers[None, :, :]
        r = np.sqrt((d * d).sum(-1))
        if self.kind == "radial":
            return psi(n, r)
        # columns ordered (x-derivatives of all centers, then y, then z)
        p1 = psi(n - 1, r)
        return np.concatenate([d[..., k] * p1 for k in range(3)], axis=1)

    def gradients(self, X: np.ndarray) -> np.ndarray:
        """Shape (m, 3, ncols)."""
        n = self.kernel.order
        m = len(X)
        if self.kind == "axis":
            u = self._offsets(X)
            g = np.zeros((m, 3, len(self.centers)))
            g[:, self.axis, :] = -self.scale * u * psi(n - 1, np.abs(u))
            return g
        d = X[:, None, :] - self.centers[None, :, :]
        r = np.sqrt((d * d).sum(-1))
        p1 = psi(n - 1, r)
        if self.kind == "radial":
            return -np.transpose(d, (0, 2, 1)) * p1[:, None, :]
        p2 = psi(n - 2, r)
        cols = []
        for k in range(3):
            gk = -d * (d[..., k] * p2)[..., None]  # (m, n, 3)
            gk[..., k] += p1
            cols.append(np.transpose(gk, (0, 2, 1)))
        return np.concatenate(cols, axis=2)

    def hessians(self, X: np.ndarray) -> np.ndarray:
        """Shape (m, 3, 3, ncols)."""
        n = self.kernel.order
        m = len(X)
        eye = np.eye(3)
        if self.kind == "axis":
            u = self._offsets(X)
            H = np.zeros((m, 3, 3, len(self.centers)))
            H[:, self.axis, self.axis, :] = self.scale**2 * (
                -psi(n - 1, np.abs(u)) + u * u * psi(n - 2, np.abs(u)))
            return H
        d = X[:, None, :] - self.centers[None, :, :]
        r = np.sqrt((d * d).sum(-1))
        p1, p2 = psi(n - 1, r), psi(n - 2, r)
        dd = d[..., :, None] * d[..., None, :]  # (m, n, 3, 3)
        if self.kind == "radial":
            H = -eye * p1[..., None, None] + dd * p2[..., None, None]
            return np.transpose(H, (0, 2, 3, 1))
        p3 = psi(n - 3, r)
        cols = []
        for k in range(3):
            dk = d[..., k]
            # -(delta_jk d_i + delta_ij d_k + delta_ik d_j) psi_{n-2} + d_i d_j d_k psi_{n-3}
            T = dd * (dk * p3)[..., None, None]
            T -= eye * (dk * p2)[..., None, None]
            sym = np.zeros_like(T)
            sym[..., :, k] += d
            sym[..., k, :] += d
            T -= sym * p2[..., None, None]
            cols.append(np.transpose(T, (0, 2, 3, 1)))
        return np.concatenate(cols, axis=3)


@dataclass
class TrialSpaceAssembly:
    kind: str
    blocks: list[Block]
    nodes: np.ndarray
    A: np.ndarray
    K: np.ndarray
    K_blocks: list[np.ndarray] | None = None
    meta: dict = field(default_factory=dict)

    @property
    def M(self) -> int:
        return self.A.shape[1]

    def values(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.concatenate([b.values(X) for b in self.blocks], axis=-1)

    def gradients(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.concatenate([b.gradients(X) for b in self.blocks], axis=-1)

    def hessians(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.concatenate([b.hessians(X) for b in self.blocks], axis=-1)


def _nodes(stencil_or_nodes) -> np.ndarray:
    if isinstance(stencil_or_nodes, Stencil):
        return stencil_or_nodes.nodes
    return np.atleast_2d(np.asarray(stencil_or_nodes, dtype=float))


def _check_distinct(nodes: np.ndarray) -> None:
    if len(nodes) > 1 and np.min(pdist(nodes)) == 0.0:
        raise GeometryError("duplicate interpolation points")


def assemble_rbf(stencil, kernel: MaternKernel) -> TrialSpaceAssembly:
    if kernel.dim != 3:
        raise DomainError("RBF trial space needs a 3-D kernel")
    nodes = _nodes(stencil)
    _check_distinct(nodes)
    block = Block("radial", kernel, nodes)
    A = block.values(nodes)  # symmetric bitwise: (a-b)**2 == (b-a)**2
    return TrialSpaceAssembly("rbf", [block], nodes, A, A, [A])


def assemble_hrbf(stencil, kernel: MaternKernel) -> TrialSpaceAssembly:
    if kernel.dim != 3:
        raise DomainError("HRBF trial space needs a 3-D kernel")
    kernel.require_order(1)
    nodes = _nodes(stencil)
    _check_distinct(nodes)
    radial = Block("radial", kernel, nodes)
    hermite = Block("hermite", kernel, nodes)
    n = len(nodes)
    A11 = radial.values(nodes)
    A12 = hermite.values(nodes)
    # mixed block: <d/dp_a Phi(., p_i), d/dp_b Phi(., p_j)> = grad_a of hermite column at p_i
    G = hermite.gradients(nodes)  # (n, 3, 3n)
    K22 = np.transpose(G, (1, 0, 2)).reshape(3 * n, 3 * n)
    K22 = 0.5 * (K22 + K22.T)
    A = np.hstack([A11, A12])
    K = np.block([[A11, A12], [A12.T, K22]])
    return TrialSpaceAssembly("hrbf", [radial, hermite], nodes, A, K, None)


def stencil_diameter(points: np.ndarray) -> float:
    return float(np.max(pdist(points))) if len(points) > 1 else 0.0


def project_centers(stencil, axis: int, config: CenterConfig,
                    reference_length: float | None = None) -> np.ndarray:
    """1-D trial centers on ``axis`` (0, 1 or 2) for one KRBF family."""
    nodes = _nodes(stencil)
    if axis not in (0, 1, 2):
        raise DomainError("axis must be 0, 1 or 2")
    proj = nodes[:, axis].copy()
    if config.mode == "original":
        return proj
    lo, hi = float(proj.min()), float(proj.max())
    width = hi - lo
    if not width > 0:
        raise GeometryError(f"zero-width projection on axis {axis}")
    if config.mode == "regrid":
        return np.linspace(lo, hi, len(proj))
    L = reference_length or config.reference_length
    if L is None:
        surf = stencil.points if isinstance(stencil, Stencil) else nodes
        L = 2.0 * stencil_diameter(surf)
    start = float(proj.mean()) - 0.5 * L
    if config.mode == "stretch":
        return start + (proj - lo) * (L / width)
    return np.linspace(start, start + L, len(proj))


def axis_block(stencil, axis: int, config: CenterConfig, kernel1: MaternKernel) -> Block:
    c = project_centers(stencil, axis, config)
    if config.mode in ("original", "stretch"):
        # coincident projections would give identical columns
        c = _dedup(c)
    return Block("axis", kernel1, c, axis=axis)


def _dedup(c: np.ndarray) -> np.ndarray:
    _, first = np.unique(c, return_index=True)
    return c[np.sort(first)]


def assemble_krbf(stencil, kernel3: MaternKernel, kernel1: MaternKernel | None = None,
                  config: CenterConfig | None = None) -> TrialSpaceAssembly:
    config = config or CenterConfig()
    if kernel1 is None:
        kernel1 = MaternKernel(kernel3.tau, 1)
    if kernel3.dim != 3 or kernel1.dim != 1 or kernel1.tau != kernel3.tau:
        raise DomainError("KRBF needs Phi_{tau,3} and Phi_{tau,1} with a shared tau")
    nodes = _nodes(stencil)
    _check_distinct(nodes)
    blocks = [Block("radial", kernel3, nodes)]
    for a in range(3):
        blocks.append(axis_block(stencil, a, config, kernel1))
    A = np.hstack([b.values(nodes) for b in blocks])
    K_blocks = [A[:, : len(nodes)].copy()]
    for b in blocks[1:]:
        K_blocks.append(psi(kernel1.order, np.abs(b.centers[:, None] - b.centers[None, :])))
    K = block_diag(*K_blocks)
    return TrialSpaceAssembly("krbf", blocks, nodes, A, K, K_blocks,
                              meta={"config": config.mode})


def assemble(kind: str, stencil, tau: int, config: CenterConfig | None = None) -> TrialSpaceAssembly:
    k3 = MaternKernel(tau, 3)
    if kind == "rbf":
        return assemble_rbf(stencil, k3)
    if kind == "hrbf":
        return assemble_hrbf(stencil, k3)
    if kind == "krbf":
        return assemble_krbf(stencil, k3, MaternKernel(tau, 1), config)
    raise DomainError(f"unknown trial space {kind!r}")
