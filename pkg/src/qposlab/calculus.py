"""Spectral periodic calculus for scalar potentials and Hermitian form fields.

Derivatives use the trigonometric-interpolant (FFT) convention with

    d/dz_j = (d/dx_j - i d/dy_j) / 2,      d/dz_bar_j = (d/dx_j + i d/dy_j) / 2,

so on the unit torus ``d^2/dz dz_bar cos(2 pi x) = -pi^2 cos(2 pi x)``.
Fields store numpy arrays broadcastable to the full grid shape; an axis of
length one means "constant along that coordinate" and spectral derivatives
along such axes vanish identically, which both is exact and keeps storage
proportional to the coordinates a problem actually activates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ModelError, NumericsError
from .geometry import TorusModel

__all__ = [
    "PotentialField",
    "HermitianFormField",
    "complex_hessian",
    "fd_complex_hessian",
    "c2_norm",
    "weighted_series_combine",
    "hermitian_det",
    "form_top_density",
]

_MEAN_ZERO_TOL = 1e-12


def _check_grid_values(torus: TorusModel, values: np.ndarray, what: str) -> np.ndarray:
    v = np.asarray(values)
    if v.ndim != torus.ndim_real:
        raise ModelError(
            f"{what} must have one axis per real coordinate ({torus.ndim_real}), got shape {v.shape}"
        )
    for a, size in enumerate(v.shape):
        if size not in (1, torus.grid_size):
            raise ModelError(
                f"{what} axis {a} has length {size}; must be 1 (constant) or grid_size={torus.grid_size}"
            )
    return v


@dataclass(frozen=True)
class PotentialField:
    """Real scalar function sampled on the torus grid.

    ``values`` broadcasts to ``torus.shape``; ``mean_zero`` flags the gauge
    used by the Monge-Ampere solver.
    """

    torus: TorusModel
    values: np.ndarray
    mean_zero: bool = False

    def __post_init__(self):
        v = _check_grid_values(self.torus, np.asarray(self.values, dtype=np.float64), "potential values")
        object.__setattr__(self, "values", v)
        if self.mean_zero and abs(float(np.mean(v))) > _MEAN_ZERO_TOL:
            raise ModelError("field flagged mean_zero has |mean| > 1e-12")

    @classmethod
    def constant(cls, torus: TorusModel, value: float = 0.0) -> "PotentialField":
        return cls(torus, np.full((1,) * torus.ndim_real, float(value)))

    @classmethod
    def zero(cls, torus: TorusModel) -> "PotentialField":
        return cls(torus, np.zeros((1,) * torus.ndim_real), mean_zero=True)

    def mean(self) -> float:
        # Constant (length-one) axes carry uniform weight, so the plain mean
        # of the stored values equals the mean over the full grid.
        return float(np.mean(self.values))

    def normalized(self) -> "PotentialField":
        return PotentialField(self.torus, self.values - self.mean(), mean_zero=True)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def __add__(self, other):
        if isinstance(other, PotentialField):
            _require_same_torus(self, other)
            return PotentialField(self.torus, self.values + other.values)
        return PotentialField(self.torus, self.values + float(other))

    def __sub__(self, other):
        if isinstance(other, PotentialField):
            _require_same_torus(self, other)
            return PotentialField(self.torus, self.values - other.values)
        return PotentialField(self.torus, self.values - float(other))

    def __rmul__(self, scalar):
        return PotentialField(self.torus, float(scalar) * self.values)


def _require_same_torus(a, b):
    if a.torus != b.torus:
        raise ModelError("fields live on different torus models")


@dataclass(frozen=True)
class HermitianFormField:
    """Pointwise Hermitian n x n matrix field on the torus grid.

    ``values`` has shape ``(*grid_broadcast, n, n)`` complex.
    """

    torus: TorusModel
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.complex128)
        n = self.torus.n
        if v.ndim != self.torus.ndim_real + 2 or v.shape[-2:] != (n, n):
            raise ModelError(f"form field must end in ({n},{n}) matrix axes, got shape {v.shape}")
        _check_grid_values(self.torus, v[..., 0, 0], "form field grid part")
        scale = max(1.0, float(np.max(np.abs(v))))
        if np.max(np.abs(v - v.conj().swapaxes(-1, -2))) > 1e-12 * scale:
            raise ModelError("form field is not pointwise Hermitian within 1e-12")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_constant(cls, torus: TorusModel, matrix) -> "HermitianFormField":
        m = np.asarray(matrix, dtype=np.complex128)
        if m.shape != (torus.n, torus.n):
            raise ModelError(f"constant form matrix must be {torus.n} x {torus.n}, got {m.shape}")
        return cls(torus, m.reshape((1,) * torus.ndim_real + m.shape))

    def __add__(self, other):
        if isinstance(other, HermitianFormField):
            _require_same_torus(self, other)
            return HermitianFormField(self.torus, self.values + other.values)
        raise TypeError("can only add HermitianFormField to HermitianFormField")

    def min_eigenvalue(self) -> float:
        return float(np.min(np.linalg.eigvalsh(self.values)[..., 0]))

    def det(self) -> np.ndarray:
        return hermitian_det(self.values)


def hermitian_det(mats: np.ndarray) -> np.ndarray:
    """Batched determinant of Hermitian 1..3 matrices, by cofactor expansion.

    Closed-form expansion keeps integer/rational inputs exact in floats and
    avoids pivoting noise; the result is returned as the real part.
    """
    m = np.asarray(mats)
    k = m.shape[-1]
    if k == 1:
        return m[..., 0, 0].real.copy()
    if k == 2:
        return (m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]).real
    if k == 3:
        return (
            m[..., 0, 0] * (m[..., 1, 1] * m[..., 2, 2] - m[..., 1, 2] * m[..., 2, 1])
            - m[..., 0, 1] * (m[..., 1, 0] * m[..., 2, 2] - m[..., 1, 2] * m[..., 2, 0])
            + m[..., 0, 2] * (m[..., 1, 0] * m[..., 2, 1] - m[..., 1, 1] * m[..., 2, 0])
        ).real
    raise ModelError(f"determinants implemented for sizes 1..3, got {k}")


def form_top_density(form: HermitianFormField) -> np.ndarray:
    """Density of the form's top wedge against Lebesgue measure on [0,1)^{2n}.

    For a constant class this integrates to the same number as the repeated
    intersection pairing: n! * 2^n * det(A).
    """
    n = form.torus.n
    return math.factorial(n) * (2.0**n) * hermitian_det(form.values)


def _dz_symbols(torus: TorusModel, shape: tuple[int, ...]) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Fourier multipliers of d/dz_j and d/dz_bar_j, sliced to a stored shape.

    Along axes where the field is constant (stored length one) only the zero
    mode exists, so the corresponding wavenumber array collapses to [0]; the
    derivative along such an axis is identically zero, exactly.
    """
    kappa = list(torus.wavenumbers())
    for a, size in enumerate(shape):
        if size == 1:
            kappa[a] = np.zeros((1,) * torus.ndim_real)
    dz, dzbar = [], []
    for j in range(torus.n):
        kx, ky = kappa[2 * j], kappa[2 * j + 1]
        dz.append(np.pi * (ky + 1j * kx))
        dzbar.append(np.pi * (-ky + 1j * kx))
    return dz, dzbar


def complex_hessian(phi: PotentialField) -> HermitianFormField:
    """Pointwise complex Hessian d^2 phi / dz_j dz_bar_k via FFT multipliers."""
    v = phi.values
    if not np.all(np.isfinite(v)):
        raise NumericsError("potential has non-finite values; cannot differentiate")
    torus = phi.torus
    n = torus.n
    vhat = np.fft.fftn(v)
    dz, dzbar = _dz_symbols(torus, v.shape)
    out = np.empty(v.shape + (n, n), dtype=np.complex128)
    for j in range(n):
        for k in range(j, n):
            entry = np.fft.ifftn(vhat * dz[j] * dzbar[k])
            out[..., j, k] = entry
            if k != j:
                out[..., k, j] = np.conj(entry)
    # Hermitian symmetrisation scrubs FFT round-off; diagonals become real.
    out = 0.5 * (out + out.conj().swapaxes(-1, -2))
    return HermitianFormField(torus, out)


def _fd_first(v: np.ndarray, axis: int, h: float, order: int) -> np.ndarray:
    if v.shape[axis] == 1:
        return np.zeros_like(v)
    up1, dn1 = np.roll(v, -1, axis), np.roll(v, 1, axis)
    if order == 2:
        return (up1 - dn1) / (2.0 * h)
    up2, dn2 = np.roll(v, -2, axis), np.roll(v, 2, axis)
    return (-up2 + 8.0 * up1 - 8.0 * dn1 + dn2) / (12.0 * h)


def _fd_second(v: np.ndarray, axis: int, h: float, order: int) -> np.ndarray:
    if v.shape[axis] == 1:
        return np.zeros_like(v)
    up1, dn1 = np.roll(v, -1, axis), np.roll(v, 1, axis)
    if order == 2:
        return (up1 - 2.0 * v + dn1) / h**2
    up2, dn2 = np.roll(v, -2, axis), np.roll(v, 2, axis)
    return (-up2 + 16.0 * up1 - 30.0 * v + 16.0 * dn1 - dn2) / (12.0 * h**2)


def fd_complex_hessian(phi: PotentialField, order: int = 2) -> HermitianFormField:
    """Periodic central-difference complex Hessian (order 2 or 4).

    Independent of the spectral path: mixed entries compose one-dimensional
    first-derivative stencils (which commute exactly, so Hermitian symmetry is
    structural), diagonal entries use the dedicated second-derivative stencil.
    A stencil touches at most two cells per axis, which callers use to keep
    evaluations away from masked regions.
    """
    if order not in (2, 4):
        raise ModelError(f"finite-difference order must be 2 or 4, got {order}")
    v = phi.values
    if not np.all(np.isfinite(v)):
        raise NumericsError("potential has non-finite values; cannot differentiate")
    torus = phi.torus
    n = torus.n
    h = 1.0 / torus.grid_size
    out = np.zeros(v.shape + (n, n), dtype=np.complex128)
    for j in range(n):
        xj, yj = 2 * j, 2 * j + 1
        out[..., j, j] = 0.25 * (_fd_second(v, xj, h, order) + _fd_second(v, yj, h, order))
        for k in range(j + 1, n):
            xk, yk = 2 * k, 2 * k + 1
            dxx = _fd_first(_fd_first(v, xj, h, order), xk, h, order)
            dyy = _fd_first(_fd_first(v, yj, h, order), yk, h, order)
            dxy = _fd_first(_fd_first(v, xj, h, order), yk, h, order)
            dyx = _fd_first(_fd_first(v, yj, h, order), xk, h, order)
            entry = 0.25 * ((dxx + dyy) + 1j * (dxy - dyx))
            out[..., j, k] = entry
            out[..., k, j] = np.conj(entry)
    return HermitianFormField(torus, out)


def c2_norm(phi: PotentialField) -> float:
    """Sup over the grid of the absolute-entry sum of the complex Hessian."""
    hess = complex_hessian(phi)
    return float(np.max(np.sum(np.abs(hess.values), axis=(-2, -1))))


def weighted_series_combine(phis: list[PotentialField], terms: int) -> PotentialField:
    """Truncated weighted series  sum_{i=1..terms} phi_i / (2^i A_i),

    with ``A_i = max(c2_norm(phi_i), 1e-12)``.  The weights make the summands'
    Hessian contributions geometrically dominated, so partial sums converge
    in C^2 as ``terms`` grows.
    """
    if not phis:
        raise ModelError("weighted_series_combine needs at least one potential")
    if not 1 <= terms <= len(phis):
        raise ModelError(f"terms must be in 1..{len(phis)}, got {terms}")
    torus = phis[0].torus
    acc = np.zeros((1,) * torus.ndim_real)
    for i, phi in enumerate(phis[:terms], start=1):
        _require_same_torus(phis[0], phi)
        weight = (2.0**i) * max(c2_norm(phi), 1e-12)
        acc = acc + phi.values / weight
    return PotentialField(torus, acc)


def poisson_solve(torus: TorusModel, rhs: np.ndarray) -> np.ndarray:
    """Mean-zero spectral solution of  d^2 phi / dz dz_bar = rhs  (n = 1).

    Used as the exact linear path of the Monge-Ampere solver in one complex
    dimension and as an independent oracle in tests.
    """
    if torus.n != 1:
        raise ModelError("poisson_solve is the n=1 path")
    rhs = np.asarray(rhs, dtype=np.float64)
    dz, dzbar = _dz_symbols(torus, rhs.shape)
    symbol = np.broadcast_to((dz[0] * dzbar[0]).real, rhs.shape)  # -pi^2 |kappa|^2 <= 0
    rhat = np.fft.fftn(rhs - np.mean(rhs))
    phihat = np.divide(rhat, symbol, out=np.zeros_like(rhat), where=symbol != 0)
    phi = np.fft.ifftn(phihat).real
    return phi - np.mean(phi)
