"""Quadratic vector equation for block-Wigner-type matrices.

For every community ``l`` the limiting resolvent diagonal ``M_l(z)`` solves

    -1 / M_l(z) = z + sum_m Q2[l, m] * alpha[m] * M_m(z),    Im z > 0,

and ``sum_l alpha_l M_l(z)`` is the Stieltjes transform of the limiting
spectral distribution. All solvers here are vectorised over arrays of ``z``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blockmodel import BlockModelParams
from .errors import QveConvergenceError, ValidationError

__all__ = [
    "QveSolution",
    "SupportEstimate",
    "crude_edge",
    "lsd_density",
    "qve_residual",
    "solve_qve",
    "spectral_edge",
    "stieltjes_total",
]

TOL = 1e-12
DAMPING = 0.5
MAX_ITER = 10_000
_STALL_WINDOW = 100
_STALL_RATIO = 0.9


@dataclass(frozen=True)
class QveSolution:
    """Solution ``M`` at point(s) ``z``; ``M`` has shape ``z.shape + (K,)``."""

    z: np.ndarray
    M: np.ndarray
    residual: float

    def __getitem__(self, idx):
        z = self.z[idx]
        return QveSolution(z=z, M=self.M[idx], residual=self.residual)

    def reshape(self, *shape):
        K = self.M.shape[-1]
        return QveSolution(z=self.z.reshape(shape), M=self.M.reshape(shape + (K,)),
                           residual=self.residual)


@dataclass(frozen=True)
class SupportEstimate:
    edge: float
    margin: float
    crude: float


def _coupling(params: BlockModelParams) -> np.ndarray:
    # S[l, m] = Q2[l, m] * alpha[m]
    return params.Q2 * params.alpha[None, :]


def qve_residual(params: BlockModelParams, z, M) -> np.ndarray:
    """Pointwise ``max_l |1/M_l + z + (Q2 alpha M)_l|``."""
    z = np.asarray(z, dtype=complex)
    F = 1.0 / M + z[..., None] + M @ _coupling(params).T
    return np.max(np.abs(F), axis=-1)


def _fixed_point(S, z, M, tol, theta, max_iter):
    """Damped fixed point on flat arrays; returns (M, converged, residual)."""
    M = M.copy()
    active = np.arange(z.shape[0])
    converged = np.zeros(z.shape[0], dtype=bool)
    res = np.full(z.shape[0], np.inf)
    checkpoint = None
    for it in range(max_iter):
        if active.size == 0:
            break
        Ma, za = M[active], z[active]
        Ma = (1 - theta) * Ma + theta * (-1.0 / (za[:, None] + Ma @ S.T))
        M[active] = Ma
        r = np.max(np.abs(1.0 / Ma + za[:, None] + Ma @ S.T), axis=-1)
        res[active] = r
        done = r <= tol
        converged[active[done]] = True
        if (it + 1) % _STALL_WINDOW == 0:
            if checkpoint is not None:
                stalled = r > _STALL_RATIO * checkpoint
                done |= stalled
            checkpoint = r
            keep = ~done
            active, checkpoint = active[keep], checkpoint[keep]
        elif done.any():
            keep = ~done
            active = active[keep]
            if checkpoint is not None:
                checkpoint = checkpoint[keep]
    return M, converged, res


def _newton(S, z, M, tol, max_iter=60):
    """Complex Newton on F(M) = 1/M + z + S M with backtracking."""
    M = M.copy()
    K = S.shape[0]

    def F(Mx, zx):
        return 1.0 / Mx + zx[:, None] + Mx @ S.T

    res = np.max(np.abs(F(M, z)), axis=-1)
    for _ in range(max_iter):
        todo = res > tol
        if not todo.any():
            break
        Mt, zt = M[todo], z[todo]
        Ft = F(Mt, zt)
        J = S[None, :, :] - np.einsum("ij,bi->bij", np.eye(K), 1.0 / Mt**2)
        try:
            step = np.linalg.solve(J, Ft[..., None])[..., 0]
        except np.linalg.LinAlgError:
            break
        rt = res[todo]
        t = np.ones(Mt.shape[0])
        newM = Mt - step
        newr = np.max(np.abs(F(newM, zt)), axis=-1)
        for _ in range(30):
            bad = ~(np.isfinite(newr) & (newr < rt) & np.all(newM.imag > 0, axis=-1))
            if not bad.any():
                break
            t[bad] *= 0.5
            newM[bad] = Mt[bad] - t[bad, None] * step[bad]
            newr[bad] = np.max(np.abs(F(newM[bad], zt[bad])), axis=-1)
        improved = np.isfinite(newr) & (newr < rt)
        if not improved.any():
            break
        idx = np.flatnonzero(todo)[improved]
        M[idx] = newM[improved]
        res[idx] = newr[improved]
    return M, res


def _continuation(S, z, tol, theta):
    """Track the solution from Im z = eta0 down to the target Im z."""
    eta_target = z.imag
    eta = np.maximum(eta_target, 1.0)
    zc = z.real + 1j * eta
    M, conv, _ = _fixed_point(S, zc, -1.0 / zc[:, None] * np.ones(S.shape[0]), tol, theta, MAX_ITER)
    M, res = _newton(S, zc, M, tol)
    while np.any(eta > eta_target):
        eta = np.maximum(eta * 0.5, eta_target)
        zc = z.real + 1j * eta
        M, res = _newton(S, zc, M, tol)
    return M, res


def solve_qve(params: BlockModelParams, z, *, tol: float = TOL, damping: float = DAMPING,
              max_iter: int = MAX_ITER) -> QveSolution:
    """Solve the QVE at one point or an array of points off the real axis.

    For ``Im z < 0`` the solution is the conjugate of the one at ``conj(z)``.
    The damped fixed point runs first; points where it stalls fall back to
    Newton, and, if that lands off the upper half-plane, to continuation in
    ``Im z``.

    Raises
    ------
    ValidationError
        If any ``z`` lies on the real axis.
    QveConvergenceError
        If some point misses ``tol``; carries the worst residual.
    """
    z = np.asarray(z, dtype=complex)
    shape = z.shape
    zf = z.ravel()
    if np.any(zf.imag == 0) or not np.all(np.isfinite(zf)):
        raise ValidationError("solve_qve requires finite z with Im z != 0")
    flip = zf.imag < 0
    zu = np.where(flip, np.conj(zf), zf)
    S = _coupling(params)
    K = params.K

    M0 = (-1.0 / zu)[:, None] * np.ones(K)
    M, conv, res = _fixed_point(S, zu, M0, tol, damping, max_iter)
    todo = ~conv
    if todo.any():
        Mn, rn = _newton(S, zu[todo], M[todo], tol)
        M[todo], res[todo] = Mn, rn
    bad = (res > tol) | np.any(M.imag <= 0, axis=-1)
    if bad.any():
        Mc, rc = _continuation(S, zu[bad], tol, damping)
        M[bad], res[bad] = Mc, rc
    bad = (res > tol) | np.any(M.imag <= 0, axis=-1)
    if bad.any():
        worst = float(np.max(res[bad]))
        raise QveConvergenceError(
            f"QVE did not converge at {int(bad.sum())} point(s); worst residual {worst:.3e}",
            residual=worst)
    M = np.where(flip[:, None], np.conj(M), M)
    return QveSolution(z=zf.reshape(shape), M=M.reshape(shape + (K,)),
                       residual=float(res.max()) if res.size else 0.0)


def stieltjes_total(params: BlockModelParams, z):
    """Limiting Stieltjes transform ``sum_l alpha_l M_l(z)``."""
    sol = solve_qve(params, z)
    s = sol.M @ params.alpha
    return s if np.ndim(s) else complex(s)


def lsd_density(params: BlockModelParams, x, eta: float = 1e-6):
    """Density of the limiting spectral distribution at ``x`` via ``x + i*eta``.

    Negative round-off is clamped to zero.
    """
    if not eta > 0:
        raise ValidationError("eta must be positive")
    x = np.asarray(x, dtype=float)
    s = stieltjes_total(params, x + 1j * eta)
    d = np.maximum(np.imag(s) / np.pi, 0.0)
    return d if np.ndim(d) else float(d)


def crude_edge(params: BlockModelParams) -> float:
    """Upper bound ``2 sqrt(max_k sum_l alpha_l Q2_kl)`` on the support edge."""
    return 2.0 * float(np.sqrt(np.max(_coupling(params).sum(axis=1))))


def spectral_edge(params: BlockModelParams, margin: float = 0.0, *, eta: float = 1e-9,
                  threshold: float = 1e-6, points: int = 400) -> SupportEstimate:
    """Bound the (symmetric) support of the limiting spectral distribution.

    The density is scanned inward from the crude bound on a uniform grid; the
    first point with density above ``threshold`` plus one grid step gives the
    refined edge, which never exceeds the crude bound.
    """
    if margin < 0:
        raise ValidationError("margin must be non-negative")
    crude = crude_edge(params)
    h = crude / points
    xs = crude - h * np.arange(points)
    dens = lsd_density(params, xs, eta)
    hit = np.flatnonzero(dens >= threshold)
    refined = crude if hit.size == 0 else min(crude, xs[hit[0]] + h)
    return SupportEstimate(edge=float(refined + margin), margin=float(margin), crude=crude)
