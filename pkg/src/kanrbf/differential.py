"""Evaluate fitted implicit functions and extract surface frames."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError
from .trialspace import TrialSpaceAssembly

GRAD_FLOOR = 1e-10
NORMAL_MODE_RTOL = 1e-4


@dataclass
class SurfaceFrame:
    normal: np.ndarray
    kappa1: float = math.nan
    kappa2: float = math.nan
    dir1: np.ndarray | None = None
    dir2: np.ndarray | None = None
    discarded: float = math.nan  # eigenvalue of the removed normal mode
    flag: str = ""

    @property
    def gaussian(self) -> float:
        return self.kappa1 * self.kappa2

    @property
    def mean(self) -> float:
        return 0.5 * (self.kappa1 + self.kappa2)


@dataclass
class FittedImplicit:
    assembly: TrialSpaceAssembly
    lam: np.ndarray

    def eval_f(self, x) -> float:
        return float(self.assembly.values(x)[0] @ self.lam)

    def eval_grad(self, x) -> np.ndarray:
        return self.assembly.gradients(x)[0] @ self.lam

    def eval_hessian(self, x) -> np.ndarray:
        for b in self.assembly.blocks:
            b.kernel.require_order(3 if b.kind == "hermite" else 2)
        H = self.assembly.hessians(x)[0] @ self.lam
        return 0.5 * (H + H.T)


def eval_f(fit: FittedImplicit, x) -> float:
    return fit.eval_f(x)


def eval_grad(fit: FittedImplicit, x) -> np.ndarray:
    return fit.eval_grad(x)


def eval_hessian(fit: FittedImplicit, x) -> np.ndarray:
    return fit.eval_hessian(x)


def frame_from_derivatives(grad, hess, orientation_ref=None) -> SurfaceFrame:
    """Normal and principal curvatures from the shape operator
    ``S = -P H P / |grad|`` with ``P`` the tangent projector.

    The eigenpair whose eigenvector is most aligned with the normal is
    discarded; the two remaining eigenvalues are the curvatures, sorted
    descending.
    """
    g = np.asarray(grad, dtype=float)
    gn = float(np.linalg.norm(g))
    if not gn > GRAD_FLOOR:
        raise GeometryError("vanishing gradient: degenerate level set")
    n = g / gn
    if orientation_ref is not None and float(n @ orientation_ref) < 0:
        n = -n
    if hess is None:
        return SurfaceFrame(n)
    # curvature sign follows the gradient direction, not the flipped normal
    P = np.eye(3) - np.outer(n, n)
    S = -(P @ np.asarray(hess, dtype=float) @ P) / gn
    S = 0.5 * (S + S.T)
    w, V = np.linalg.eigh(S)
    drop = int(np.argmax(np.abs(V.T @ n)))
    keep = [i for i in range(3) if i != drop]
    (k2, v2), (k1, v1) = sorted(((w[i], V[:, i]) for i in keep), key=lambda t: t[0])
    frame = SurfaceFrame(n, float(k1), float(k2), v1, v2, float(w[drop]))
    if abs(w[drop]) > NORMAL_MODE_RTOL * max(abs(k1), abs(k2), 1.0):
        frame.flag = "normal-mode"
    return frame


def surface_frame(fit: FittedImplicit, x, orientation_ref=None, curvature: bool = True) -> SurfaceFrame:
    x = np.asarray(x, dtype=float)
    g = fit.eval_grad(x)
    H = fit.eval_hessian(x) if curvature else None
    return frame_from_derivatives(g, H, orientation_ref)


def normal_error(estimated, exact) -> float | np.ndarray:
    d = np.asarray(estimated, dtype=float) - np.asarray(exact, dtype=float)
    return np.linalg.norm(d, axis=-1) if d.ndim > 1 else float(np.linalg.norm(d))


def max_error(errors) -> float:
    e = np.asarray(errors, dtype=float)
    e = e[np.isfinite(e)]
    return float(e.max()) if e.size else math.nan


def rms_error(errors) -> float:
    e = np.asarray(errors, dtype=float)
    e = e[np.isfinite(e)]
    return float(np.sqrt(np.mean(e * e))) if e.size else math.nan
