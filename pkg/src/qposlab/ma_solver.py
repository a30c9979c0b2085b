"""Complex Monge-Ampere solver on the flat torus.

Solves, in the mean-zero gauge for the unknown potential ``phi``,

    det( W + dd_bar(phi) ) = e^c * f         pointwise on the grid,

where ``W = H_0 + dd_bar(psi_0)`` is the (pointwise positive) background form
and ``f`` the prescribed density.  The additive constant ``c`` is the
det-weighted mean of the log residual; it absorbs the one-dimensional
cokernel of the linearised operator and converges to zero with resolution
for compatible data.

Newton direction: the linearisation of ``log det`` is the form-weighted trace
``tr(M^{-1} dd_bar(delta))``.  Multiplying by ``det M`` and using the Kahler
divergence identity turns it into

    A(delta) = sum_{j,k} d/dz_bar_j ( adj(M)_{jk}  d delta / dz_k ),

which is exactly self-adjoint and negative semidefinite for the spectral
derivatives used here, so conjugate gradients applies verbatim.  A
constant-coefficient version of ``A`` built from the grid-mean of ``adj(M)``
preconditions the solve diagonally in Fourier space.  Steps are halved until
pointwise positivity of ``W + dd_bar(phi)`` is preserved and the sup residual
does not increase.

In one complex dimension the equation is linear in ``phi`` and is solved in a
single exact spectral step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .calculus import (
    HermitianFormField,
    PotentialField,
    _dz_symbols,
    complex_hessian,
    form_top_density,
    hermitian_det,
    poisson_solve,
)
from .errors import ModelError, NonConvergence, NumericsError, StepFailure
from .geometry import ConstantHermitianClass, KahlerClass, TorusModel, dk_constant

__all__ = ["MAProblem", "MASolveResult", "compatibility_check", "solve_ma", "ma_for_dk"]


@dataclass(frozen=True)
class MAProblem:
    """A discrete Monge-Ampere problem.

    ``target_density`` is the density of the prescribed positive (n,n)-form
    against the flat Lebesgue volume of [0,1)^{2n}; for a constant class ``A``
    the corresponding density is ``n! * 2^n * det(A)``.
    """

    torus: TorusModel
    background: ConstantHermitianClass
    target_density: np.ndarray
    background_potential: PotentialField | None = None
    tol: float = 1e-9
    max_iter: int = 50
    compat_factor: float | None = None

    def __post_init__(self):
        if self.background.n != self.torus.n:
            raise ModelError("background class size does not match torus dimension")
        f = np.asarray(self.target_density, dtype=np.float64)
        if f.ndim == 0:
            f = f.reshape((1,) * self.torus.ndim_real)
        if f.ndim != self.torus.ndim_real:
            raise ModelError("target density must have one axis per real coordinate")
        object.__setattr__(self, "target_density", f)
        if self.background_potential is not None and self.background_potential.torus != self.torus:
            raise ModelError("background potential lives on a different torus")
        if self.tol <= 0 or self.max_iter < 1:
            raise ModelError("tol must be positive and max_iter >= 1")

    def background_form(self) -> HermitianFormField:
        base = HermitianFormField.from_constant(self.torus, self.background.matrix)
        if self.background_potential is None:
            return base
        return base + complex_hessian(self.background_potential)


@dataclass(frozen=True)
class MASolveResult:
    phi: PotentialField
    residual: float
    iterations: int
    positivity_margin: float
    log_constant: float
    residual_history: tuple[float, ...] = field(default_factory=tuple)


def compatibility_check(problem: MAProblem) -> MAProblem:
    """Rescale the target density so its total mass matches the background form.

    The equation only constrains the density up to the free constant, and a
    solution requires equal masses; the applied factor is recorded on the
    returned problem (``compat_factor``).
    """
    f = problem.target_density
    if np.min(f) <= 0:
        raise ModelError("target density must be strictly positive")
    background_mass = float(np.mean(form_top_density(problem.background_form())))
    if background_mass <= 0:
        raise ModelError("background form has non-positive total volume")
    factor = background_mass / float(np.mean(f))
    return replace(problem, target_density=f * factor, compat_factor=factor)


def _herm_adjugate(m: np.ndarray) -> np.ndarray:
    """Batched adjugate of Hermitian 1..3 matrices (Hermitian PSD for PD input)."""
    k = m.shape[-1]
    if k == 1:
        return np.ones_like(m)
    if k == 2:
        out = np.empty_like(m)
        out[..., 0, 0] = m[..., 1, 1]
        out[..., 1, 1] = m[..., 0, 0]
        out[..., 0, 1] = -m[..., 0, 1]
        out[..., 1, 0] = -m[..., 1, 0]
        return out
    if k == 3:
        out = np.empty_like(m)
        for i in range(3):
            for j in range(3):
                r = [a for a in range(3) if a != j]
                c = [b for b in range(3) if b != i]
                minor = m[..., r[0], c[0]] * m[..., r[1], c[1]] - m[..., r[0], c[1]] * m[..., r[1], c[0]]
                out[..., i, j] = (-1) ** (i + j) * minor
        return out
    raise ModelError(f"adjugate implemented for sizes 1..3, got {k}")


class _NewtonOperator:
    """The SPD operator  u -> -sum_j d/dz_bar_j(adj_jk d u/dz_k)  and its preconditioner."""

    def __init__(self, torus: TorusModel, adj: np.ndarray, shape: tuple[int, ...]):
        self.torus = torus
        self.n = torus.n
        self.adj = adj
        self.shape = shape
        self.dz, self.dzbar = _dz_symbols(torus, shape)
        mean_adj = np.mean(adj.reshape(-1, self.n, self.n), axis=0)
        symbol = np.zeros(shape, dtype=np.complex128)
        for j in range(self.n):
            for k in range(self.n):
                symbol = symbol + mean_adj[j, k] * np.conj(self.dz[j]) * self.dz[k]
        self.symbol = np.ascontiguousarray(np.broadcast_to(symbol.real, shape))
        self.active = self.symbol > 0  # modes the operator can reach

    def apply(self, u: np.ndarray) -> np.ndarray:
        uhat = np.fft.fftn(u)
        grads = [np.fft.ifftn(uhat * self.dz[k]) for k in range(self.n)]
        acc = np.zeros(self.shape, dtype=np.complex128)
        for j in range(self.n):
            vj = np.zeros(self.shape, dtype=np.complex128)
            for k in range(self.n):
                vj = vj + self.adj[..., j, k] * grads[k]
            acc = acc + np.fft.fftn(vj) * self.dzbar[j]
        return -np.fft.ifftn(acc).real

    def precondition(self, r: np.ndarray) -> np.ndarray:
        rhat = np.fft.fftn(r)
        out = np.divide(rhat, self.symbol, out=np.zeros_like(rhat), where=self.active)
        return np.fft.ifftn(out).real

    def project(self, r: np.ndarray) -> np.ndarray:
        """Restrict to the modes the operator can reach (drops DC/Nyquist)."""
        return np.fft.ifftn(np.fft.fftn(r) * self.active).real


def _pcg(op: _NewtonOperator, b: np.ndarray, rtol: float, max_cg: int = 400) -> np.ndarray:
    b = op.project(b)
    bnorm = float(np.sqrt(np.sum(b * b)))
    x = np.zeros_like(b)
    if bnorm == 0:
        return x
    r = b.copy()
    z = op.precondition(r)
    p = z.copy()
    rz = float(np.sum(r * z))
    for _ in range(max_cg):
        ap = op.apply(p)
        pap = float(np.sum(p * ap))
        if pap <= 0:
            break  # numerically lost positivity; return best-so-far direction
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        if float(np.sqrt(np.sum(r * r))) <= rtol * bnorm:
            break
        z = op.precondition(r)
        rz_new = float(np.sum(r * z))
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x


def _state(wvals: np.ndarray, phi: np.ndarray, torus: TorusModel, fvals: np.ndarray):
    """Current form, determinant, compensating constant and sup residual."""
    hess = complex_hessian(PotentialField(torus, phi)).values
    m = wvals + hess
    min_eig = float(np.min(np.linalg.eigvalsh(m)[..., 0]))
    if min_eig <= 0:
        return m, None, None, None, min_eig
    det = hermitian_det(m)
    rho = np.log(det) - np.log(fvals)
    c = float(np.sum(det * rho) / np.sum(det))
    rinf = float(np.max(np.abs(np.exp(rho - c) - 1.0)))
    return m, det, rho - c, rinf, min_eig


def solve_ma(problem: MAProblem, initial_guess: PotentialField | None = None) -> MASolveResult:
    """Damped-Newton solve in the mean-zero gauge.

    Requires :func:`compatibility_check` to have been applied.  The residual
    reported is ``sup | det(W + dd_bar phi) / (e^c F) - 1 |`` with the
    compensating constant ``c``; for compatible data ``|c|`` is at the
    spectral-truncation level and the plain ratio against ``F`` satisfies the
    same bound up to that term.
    """
    if problem.compat_factor is None:
        raise ModelError("run compatibility_check before solve_ma")
    torus = problem.torus
    n = torus.n
    fscale = math.factorial(n) * 2.0**n
    f = problem.target_density / fscale
    if np.min(f) <= 0:
        raise ModelError("target density must be strictly positive")

    wform = problem.background_form()
    if float(np.min(np.linalg.eigvalsh(wform.values)[..., 0])) <= 0:
        raise ModelError("background form is not positive definite at every grid point")
    wvals = wform.values

    shape = np.broadcast_shapes(wvals.shape[:-2], f.shape)
    if initial_guess is not None:
        if initial_guess.torus != torus:
            raise ModelError("initial guess lives on a different torus")
        shape = np.broadcast_shapes(shape, initial_guess.values.shape)
    f = np.broadcast_to(f, shape)

    if n == 1:
        # det is linear in the Hessian: one exact spectral Poisson step.
        w = np.broadcast_to(wvals[..., 0, 0].real, shape)
        c = math.log(float(np.mean(w)) / float(np.mean(f)))
        phi = poisson_solve(torus, np.exp(c) * f - w)
        _, _, _, rinf, min_eig = _state(wvals, phi, torus, f)
        if rinf is None or rinf > problem.tol:
            raise NonConvergence(
                f"linear n=1 solve left residual {rinf}, above tol {problem.tol}", residual=rinf
            )
        return MASolveResult(
            phi=PotentialField(torus, phi, mean_zero=True),
            residual=rinf,
            iterations=1,
            positivity_margin=min_eig,
            log_constant=c,
            residual_history=(rinf,),
        )

    if initial_guess is not None:
        phi = np.broadcast_to(initial_guess.values - initial_guess.mean(), shape).copy()
    else:
        phi = np.zeros(shape)

    m, det, rho_c, rinf, min_eig = _state(wvals, phi, torus, f)
    if min_eig <= 0:
        raise ModelError("initial guess destroys pointwise positivity of the background form")
    history = [rinf]

    for iteration in range(1, problem.max_iter + 1):
        if rinf <= problem.tol:
            return MASolveResult(
                phi=PotentialField(torus, phi - np.mean(phi), mean_zero=True),
                residual=rinf,
                iterations=iteration - 1,
                positivity_margin=min_eig,
                log_constant=float(np.sum(det * (np.log(det) - np.log(f))) / np.sum(det)),
                residual_history=tuple(history),
            )
        adj = _herm_adjugate(m)
        op = _NewtonOperator(torus, adj, shape)
        # A(delta) = -b with A negative semidefinite, i.e. op(delta) = b for op = -A.
        b = det * rho_c
        delta = _pcg(op, b, rtol=float(np.clip(1e-2 * rinf, 1e-14, 0.45)))

        alpha = 1.0
        accepted = False
        while alpha >= 2.0**-30:
            trial = phi + alpha * delta
            m_t, det_t, rho_c_t, rinf_t, min_eig_t = _state(wvals, trial, torus, f)
            if min_eig_t > 0 and rinf_t <= rinf * (1 + 1e-12) + 1e-15:
                phi, m, det, rho_c, rinf, min_eig = trial, m_t, det_t, rho_c_t, rinf_t, min_eig_t
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            raise StepFailure(
                f"Newton step rejected down to 2^-30 damping at residual {rinf:.3e}"
            )
        history.append(rinf)

    if rinf <= problem.tol:
        return MASolveResult(
            phi=PotentialField(torus, phi - np.mean(phi), mean_zero=True),
            residual=rinf,
            iterations=problem.max_iter,
            positivity_margin=min_eig,
            log_constant=float(np.sum(det * (np.log(det) - np.log(f))) / np.sum(det)),
            residual_history=tuple(history),
        )
    raise NonConvergence(
        f"no convergence in {problem.max_iter} Newton iterations (residual {rinf:.3e})",
        residual=rinf,
    )


def ma_for_dk(
    line_class,
    kahler,
    k: int,
    psi0: PotentialField | None = None,
    torus: TorusModel | None = None,
    tol: float = 1e-9,
    max_iter: int = 50,
) -> MASolveResult:
    """Monge-Ampere solve with shifted background ``H + kG`` and constant target
    density ``D_k * (k omega)^n``.

    At the solution the pointwise determinant ratio realises the volume ratio
    D_k, so the relative eigenvalues of the evolved form against ``k omega``
    multiply to D_k at every grid point.
    """
    if torus is None:
        if psi0 is None:
            raise ModelError("ma_for_dk needs a torus (directly or via psi0)")
        torus = psi0.torus
    H = ConstantHermitianClass(np.asarray(line_class.matrix if hasattr(line_class, "matrix") else line_class))
    G = np.asarray(kahler.matrix if hasattr(kahler, "matrix") else kahler)
    n = torus.n
    dk = dk_constant(H.matrix, G, k)
    shifted = ConstantHermitianClass(H.matrix + k * G)
    density = dk * math.factorial(n) * 2.0**n * hermitian_det((k * G)[None, ...])[0]
    target = np.full((1,) * torus.ndim_real, density)
    problem = MAProblem(
        torus=torus,
        background=shifted,
        target_density=target,
        background_potential=psi0,
        tol=tol,
        max_iter=max_iter,
    )
    return solve_ma(compatibility_check(problem))
