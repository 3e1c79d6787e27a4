"""K x K kernel systems for the CLT mean and covariance functions.

Every function broadcasts over leading batch dimensions: a ``QveSolution``
may hold ``z`` of any shape, and mixed-argument kernels broadcast the two
solutions against each other (e.g. ``z1`` of shape ``(N, 1)`` against ``z2``
of shape ``(1, N)`` yields ``(N, N)`` batches of K x K matrices).

Indexing follows the block traces of the resolvent: ``X[l, m]`` is the
normalized trace of ``G T_l G T_m`` at one point, ``Xtilde`` the same with
``G(z1)`` and ``G(z2)``, and ``W[l, m, r]`` that of
``G(z1) T_l G(z2) T_m G(z2) T_r``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blockmodel import BlockModelParams
from .errors import ContourTooCloseError
from .qve import QveSolution, solve_qve

__all__ = [
    "COND_LIMIT",
    "KernelMatrices",
    "co1",
    "co2",
    "cov_kernel",
    "g1tg2t_closed_form",
    "g1tg2t_matrix",
    "gtgt_closed_form",
    "gtgt_matrix",
    "kernel_set",
    "mean_kernel",
    "mean_vector",
    "w_tensor",
]

COND_LIMIT = 1e12


def _z(sol):
    return np.asarray(sol.z, dtype=complex)[..., None, None]


def _diag_embed(v):
    K = v.shape[-1]
    return v[..., :, None] * np.eye(K)


def _checked_solve(A, B, what):
    """Solve ``A X = B`` batched, refusing ill-conditioned systems."""
    cond = np.linalg.cond(A)
    worst = float(np.max(cond)) if np.size(cond) else 0.0
    if not np.isfinite(worst) or worst > COND_LIMIT:
        raise ContourTooCloseError(
            f"{what}: condition number {worst:.3e} exceeds {COND_LIMIT:.0e}; "
            "contour too close to the spectrum", condition=worst)
    return np.linalg.solve(A, B)


def co1(params: BlockModelParams, sol: QveSolution) -> np.ndarray:
    """``Co1[k, l] = Q2[k, l] alpha_k M_k / z - delta_kl / (z M_k)``."""
    M = sol.M
    if np.any(M == 0):
        raise ContourTooCloseError("M_k(z) vanished")
    z = _z(sol)
    aM = params.alpha * M
    return params.Q2 * aM[..., :, None] / z - _diag_embed(1.0 / M) / z


def co2(params: BlockModelParams, sol1: QveSolution, sol2: QveSolution) -> np.ndarray:
    """``Co2[k, l] = Q2[k, l] alpha_k M_k(z2) / z1 - delta_kl / (z1 M_k(z1))``."""
    if np.any(sol1.M == 0):
        raise ContourTooCloseError("M_k(z1) vanished")
    z1 = _z(sol1)
    aM2 = params.alpha * sol2.M
    return params.Q2 * aM2[..., :, None] / z1 - _diag_embed(1.0 / sol1.M) / z1


def gtgt_matrix(params: BlockModelParams, sol: QveSolution) -> np.ndarray:
    """Solve ``Co1 X = -(1/z) Diag(alpha M)`` for the symmetric matrix ``X(z)``."""
    rhs = -_diag_embed(params.alpha * sol.M) / _z(sol)
    return _checked_solve(co1(params, sol), rhs, "Co1")


def gtgt_closed_form(params: BlockModelParams, sol: QveSolution) -> np.ndarray:
    """``X = -(Q2 - Diag(1 / (alpha M^2)))^{-1}`` by explicit inversion."""
    D = _diag_embed(1.0 / (params.alpha * sol.M**2))
    return -np.linalg.inv(params.Q2 - D)


def g1tg2t_matrix(params: BlockModelParams, sol1: QveSolution, sol2: QveSolution) -> np.ndarray:
    """Solve ``Co2 Xt = -(1/z1) Diag(alpha M(z2))`` for the mixed matrix."""
    A = co2(params, sol1, sol2)
    rhs = -_diag_embed(params.alpha * sol2.M) / _z(sol1)
    rhs = np.broadcast_to(rhs, A.shape)
    return _checked_solve(A, rhs, "Co2")


def g1tg2t_closed_form(params: BlockModelParams, sol1: QveSolution,
                       sol2: QveSolution) -> np.ndarray:
    D = _diag_embed(1.0 / (params.alpha * sol1.M * sol2.M))
    return -np.linalg.inv(params.Q2 - D)


def mean_vector(params: BlockModelParams, sol: QveSolution, X: np.ndarray,
                Q4: np.ndarray | None = None) -> np.ndarray:
    """Subleading block traces ``Y(z)``; ``Mean(z) = Y.sum(-1)``.

    ``Q4`` overrides the model's fourth cumulants (used to isolate the
    fourth-cumulant contribution).
    """
    Q2 = params.Q2
    Q4 = params.Q4 if Q4 is None else np.asarray(Q4, dtype=float)
    z = np.asarray(sol.z, dtype=complex)[..., None]
    M, a = sol.M, params.alpha
    QX_diag = np.einsum("lk,...kl->...l", Q2, X)
    aM2 = a * M**2
    rhs = (-QX_diag + 2.0 * np.diag(Q2) * aM2 - aM2 * (aM2 @ Q4.T)) / z
    return _checked_solve(co1(params, sol), rhs[..., None], "Co1")[..., 0]


def w_tensor(params: BlockModelParams, sol1: QveSolution, sol2: QveSolution,
             X2: np.ndarray, Xt: np.ndarray) -> np.ndarray:
    """Third-order tensor ``W[l, m, r]`` from K^2 solves sharing one matrix.

    For each ``(l, m)`` the vector ``W[l, m, :]`` solves
    ``z1 Co2 w = -sum_k Q2[r, k] Xt[l, k] X2[m, r] - delta_rl X2[l, m]``.
    """
    K = params.K
    A = _z(sol1) * co2(params, sol1, sol2)
    QXt = np.einsum("rk,...lk->...rl", params.Q2, Xt)          # [r, l]
    X2T = np.swapaxes(X2, -1, -2)                                # [r, m]
    rhs = -QXt[..., :, :, None] * X2T[..., :, None, :]           # [r, l, m]
    rhs = rhs - np.eye(K)[:, :, None] * X2[..., None, :, :]      # delta_rl X2[l, m]
    batch = np.broadcast_shapes(A.shape[:-2], rhs.shape[:-3])
    A = np.broadcast_to(A, batch + (K, K))
    rhs = np.broadcast_to(rhs, batch + (K, K, K)).reshape(batch + (K, K * K))
    sol = _checked_solve(A, rhs, "z1*Co2").reshape(batch + (K, K, K))
    return np.moveaxis(sol, -3, -1)                              # [l, m, r]


def cov_kernel(params: BlockModelParams, sol1: QveSolution, sol2: QveSolution,
               X2: np.ndarray, Xt: np.ndarray, W: np.ndarray):
    """Block covariance matrix ``Z(z1, z2)`` and ``Cov = sum(Z)``.

    ``Xt`` is accepted for signature symmetry with the other kernels; the
    ``Z`` system only sees it through ``W``.
    """
    del Xt
    Q2, Q4, a = params.Q2, params.Q4, params.alpha
    M1 = sol1.M[..., :, None]       # M_l(z1) as a column
    M2 = sol2.M
    # -sum_k 2 Q2[l, k] W[l, m, k]
    t1 = -2.0 * np.einsum("lk,...lmk->...lm", Q2, W)
    t2 = 2.0 * np.diag(Q2)[:, None] * M1 * X2
    # sum_k Q4[l, k] alpha_k M_k(z1) M_k(z2)
    s = (a * sol1.M * M2) @ Q4.T
    t3 = -(M1 * s[..., :, None]) * X2
    # alpha_l M_l(z1) M_l(z2) sum_k Q4[l, k] M_k(z1) X2[k, m]
    B = np.einsum("lk,...k,...km->...lm", Q4, sol1.M, X2)
    t4 = -(a * sol1.M * M2)[..., :, None] * B
    rhs = t1 + t2 + t3 + t4
    A = _z(sol1) * co1(params, sol1)
    batch = np.broadcast_shapes(A.shape[:-2], rhs.shape[:-2])
    K = params.K
    Z = _checked_solve(np.broadcast_to(A, batch + (K, K)),
                       np.broadcast_to(rhs, batch + (K, K)), "z1*Co1")
    return Z, Z.sum(axis=(-2, -1))


def mean_kernel(params: BlockModelParams, sol: QveSolution):
    """``Mean(z)`` for every point held by ``sol``."""
    X = gtgt_matrix(params, sol)
    return mean_vector(params, sol, X).sum(axis=-1)


def cov_grid(params: BlockModelParams, sol1: QveSolution, sol2: QveSolution):
    """``Cov(z1, z2)`` broadcast over the batch shapes of both solutions."""
    X2 = gtgt_matrix(params, sol2)
    Xt = g1tg2t_matrix(params, sol1, sol2)
    W = w_tensor(params, sol1, sol2, X2, Xt)
    return cov_kernel(params, sol1, sol2, X2, Xt, W)[1]


@dataclass(frozen=True)
class KernelMatrices:
    z1: complex
    z2: complex
    co1_z1: np.ndarray
    co1_z2: np.ndarray
    co2: np.ndarray
    X_z1: np.ndarray
    X_z2: np.ndarray
    Xtilde: np.ndarray
    W: np.ndarray
    Y_z1: np.ndarray
    Z: np.ndarray

    @property
    def mean(self) -> complex:
        return complex(self.Y_z1.sum())

    @property
    def cov(self) -> complex:
        return complex(self.Z.sum())


def kernel_set(params: BlockModelParams, z1: complex, z2: complex) -> KernelMatrices:
    """All kernel objects at a single pair ``(z1, z2)``."""
    s1, s2 = solve_qve(params, z1), solve_qve(params, z2)
    X1, X2 = gtgt_matrix(params, s1), gtgt_matrix(params, s2)
    Xt = g1tg2t_matrix(params, s1, s2)
    W = w_tensor(params, s1, s2, X2, Xt)
    Z, _ = cov_kernel(params, s1, s2, X2, Xt, W)
    return KernelMatrices(
        z1=complex(z1), z2=complex(z2), co1_z1=co1(params, s1), co1_z2=co1(params, s2),
        co2=co2(params, s1, s2), X_z1=X1, X_z2=X2, Xtilde=Xt, W=W,
        Y_z1=mean_vector(params, s1, X1), Z=Z)
