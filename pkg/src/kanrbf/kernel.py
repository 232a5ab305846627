"""Matern-Sobolev kernels ``r**nu * K_nu(r)`` for half-integer ``nu``.

For ``nu = n + 1/2`` the modified Bessel function has a finite expansion, so
every kernel here is ``sqrt(pi/2) * exp(-r) * p_n(r)`` with ``p_n`` a
polynomial of degree ``n``.  Writing ``psi_n`` for that function, the
derivative identity ``d/dr [r**nu K_nu] = -r**nu K_{nu-1}`` becomes

    psi_n'(r) = -r * psi_{n-1}(r)

which gives all radial derivatives needed downstream without any
cancellation near ``r = 0``:

    grad  Phi(x)   = -x psi_{n-1}(|x|)
    hess  Phi(x)   = -I psi_{n-1}(|x|) + x x^T psi_{n-2}(|x|)

``psi_{-1}(r) = sqrt(pi/2) exp(-r) / r`` is singular at the origin but only
ever appears multiplied by at least two displacement components, whose
product vanishes there; :func:`psi` returns 0 at ``r = 0`` for that order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import DomainError, SmoothnessError

SQRT_HALF_PI = math.sqrt(math.pi / 2.0)
SUPPORTED_NU = tuple(Fraction(2 * n + 1, 2) for n in range(5))  # 1/2 .. 9/2


@lru_cache(maxsize=None)
def _poly_coeffs(n: int) -> np.ndarray:
    # descending powers of r, ready for Horner evaluation
    return np.array(
        [
            math.factorial(n + k) / (math.factorial(k) * math.factorial(n - k)) / 2.0**k
            for k in range(n + 1)
        ]
    )


def psi(n: int, r):
    """``r**(n+1/2) K_{n+1/2}(r)`` evaluated elementwise for ``n >= -1``."""
    r = np.asarray(r, dtype=float)
    if n >= 0:
        c = _poly_coeffs(n)
        acc = np.full_like(r, c[0])
        for ck in c[1:]:
            acc = acc * r + ck
        return SQRT_HALF_PI * np.exp(-r) * acc
    if n == -1:
        safe = np.where(r > 0.0, r, 1.0)
        return np.where(r > 0.0, SQRT_HALF_PI * np.exp(-safe) / safe, 0.0)
    raise SmoothnessError(f"radial order {n} is not supported")


@dataclass(frozen=True)
class MaternKernel:
    """Sobolev kernel of smoothness ``tau`` in ambient dimension ``dim``."""

    tau: int
    dim: int = 3

    def __post_init__(self):
        if self.dim not in (1, 3):
            raise DomainError(f"dimension must be 1 or 3, got {self.dim}")
        if Fraction(2 * self.tau - self.dim, 2) not in SUPPORTED_NU:
            raise DomainError(
                f"(tau={self.tau}, d={self.dim}) gives nu={self.nu}, "
                f"supported orders are 1/2 .. 9/2"
            )

    @property
    def nu(self) -> float:
        return self.tau - self.dim / 2.0

    @property
    def order(self) -> int:
        """Index ``n`` with ``nu = n + 1/2``."""
        return self.tau - (self.dim + 1) // 2

    def value(self, r):
        return psi(self.order, r)

    def phi1_over_r(self, r):
        """``phi'(r) / r``; finite at 0 only when ``nu > 1``."""
        r = np.asarray(r, dtype=float)
        if self.order < 1:
            if np.any(r == 0.0):
                raise SmoothnessError(f"phi'(r)/r is singular at r=0 for nu={self.nu}")
            return -psi(-1, r)
        return -psi(self.order - 1, r)

    def phi2(self, r):
        """Second radial derivative ``phi''(r)``."""
        if self.order < 1:
            raise SmoothnessError(f"phi'' is not available for nu={self.nu}")
        r = np.asarray(r, dtype=float)
        return -psi(self.order - 1, r) + r * r * psi(self.order - 2, r)

    def require_order(self, derivatives: int) -> None:
        """Raise unless derivatives up to ``derivatives`` are continuous at 0."""
        # grad needs n >= 1, hessian n >= 1, third derivatives n >= 2
        need = {0: 0, 1: 1, 2: 1, 3: 2}[derivatives]
        if self.order < need:
            raise SmoothnessError(
                f"kernel (tau={self.tau}, d={self.dim}) is too rough for "
                f"derivative order {derivatives}"
            )


def _check_r(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if not np.all(np.isfinite(r)) or np.any(r < 0.0):
        raise DomainError("kernel argument must be finite and nonnegative")
    return r


def eval(kernel: MaternKernel, r):  # noqa: A001 - mirrors the public operation name
    return kernel.value(_check_r(r))


def eval_phi1_over_r(kernel: MaternKernel, r):
    return kernel.phi1_over_r(_check_r(r))


def eval_phi2(kernel: MaternKernel, r):
    return kernel.phi2(_check_r(r))


def value_at_zero(kernel: MaternKernel) -> float:
    """Analytic limit ``2**(nu-1) Gamma(nu)``."""
    return 2.0 ** (kernel.nu - 1.0) * math.gamma(kernel.nu)


def dimension_shift_check(tau: int, r=None, rtol: float = 1e-12) -> bool:
    """Check ``Phi_{tau+1,3} == Phi_{tau,1}`` on a sample grid of radii."""
    if r is None:
        r = np.linspace(0.0, 10.0, 101)
    try:
        k3 = MaternKernel(tau + 1, 3)
        k1 = MaternKernel(tau, 1)
    except DomainError:
        return False
    a, b = k3.value(r), k1.value(r)
    return bool(np.all(np.abs(a - b) <= rtol * np.abs(b)))


def gram(kernel: MaternKernel, x: np.ndarray, y: np.ndarray | None = None) -> np.ndarray:
    """Kernel matrix ``Phi(|x_i - y_j|)`` for point arrays of shape (n, d)."""
    x = np.atleast_2d(x)
    y = x if y is None else np.atleast_2d(y)
    r = np.sqrt(((x[:, None, :] - y[None, :, :]) ** 2).sum(-1))
    return kernel.value(r)
