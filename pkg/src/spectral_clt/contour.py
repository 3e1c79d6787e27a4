"""Contour quadrature for the CLT mean, covariance and centering integrals.

All integrals run over a circle centred at the origin that encloses the
limiting spectrum. The integrands are analytic near the circle, so the
periodic trapezoid rule converges geometrically in the node count.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from . import cltkernels as ck
from .blockmodel import BlockModelParams
from .errors import ContourTooCloseError, QuadratureError, ValidationError
from .qve import QveSolution, solve_qve, spectral_edge

__all__ = [
    "ContourQuadrature",
    "KernelGrid",
    "TestFunction",
    "TheoryResult",
    "build_contour",
    "circle_contour",
    "cov_lss",
    "eval_testfn",
    "kernel_grid",
    "lsd_integral",
    "mean_lss",
    "parse_testfn",
    "register_testfn",
    "theory",
]

DEFAULT_NODES = 512
MAX_NODES = 4096
CONVERGENCE_TOL = 1e-8
IMAG_TOL = 1e-8
_CHUNK_ELEMENTS = 2_000_000

_USER_FUNCTIONS: dict[str, Callable] = {}


@dataclass(frozen=True)
class TestFunction:
    """An analytic test function: a polynomial, ``exp``, or a registered name."""

    __test__ = False  # not a pytest class

    kind: str
    coefficients: tuple = ()
    name: str = ""

    @property
    def label(self) -> str:
        if self.kind == "poly":
            return "poly:" + ",".join(_fmt_coef(c) for c in self.coefficients)
        if self.kind == "exp":
            return "exp"
        return f"user:{self.name}"

    def __str__(self):
        return self.label

    def __call__(self, z):
        return eval_testfn(self, z)


def _fmt_coef(c):
    c = complex(c)
    if c.imag == 0:
        r = c.real
        return str(int(r)) if r == int(r) else repr(r)
    return repr(c)


def poly(*coefficients) -> TestFunction:
    """Polynomial ``c0 + c1 z + c2 z^2 + ...``."""
    coefs = tuple(coefficients)
    if not coefs or not all(np.isfinite(complex(c)) for c in coefs):
        raise ValidationError("polynomial needs finite coefficients")
    return TestFunction("poly", coefs)


def monomial(k: int) -> TestFunction:
    return poly(*([0] * k + [1]))


EXP = TestFunction("exp")


def register_testfn(name: str, fn: Callable) -> TestFunction:
    """Make an analytic callable available as ``user:<name>``."""
    _USER_FUNCTIONS[name] = fn
    return TestFunction("user", name=name)


def parse_testfn(spec: str, *, real_only: bool = True) -> TestFunction:
    """Parse ``poly:c0,c1,...``, ``exp`` or ``user:<name>``."""
    spec = spec.strip()
    if spec == "exp":
        return EXP
    if spec.startswith("poly:"):
        body = spec[5:]
        try:
            coefs = [complex(t.strip().replace("i", "j")) for t in body.split(",")]
        except ValueError as exc:
            raise ValidationError(f"bad polynomial spec {spec!r}") from exc
        if real_only:
            if any(c.imag != 0 for c in coefs):
                raise ValidationError("only real coefficients are accepted here")
            coefs = [c.real for c in coefs]
        return poly(*coefs)
    if spec.startswith("user:"):
        name = spec[5:]
        if name not in _USER_FUNCTIONS:
            raise ValidationError(f"unknown user function {name!r}")
        return TestFunction("user", name=name)
    raise ValidationError(f"cannot parse test function {spec!r}")


def eval_testfn(f: TestFunction, z):
    """Evaluate ``f`` at complex ``z`` (Horner for polynomials)."""
    z = np.asarray(z, dtype=complex)
    if f.kind == "poly":
        out = np.zeros_like(z)
        for c in reversed(f.coefficients):
            out = out * z + c
    elif f.kind == "exp":
        out = np.exp(z)
    elif f.kind == "user":
        try:
            fn = _USER_FUNCTIONS[f.name]
        except KeyError:
            raise ValidationError(f"unknown user function {f.name!r}") from None
        out = np.asarray(fn(z), dtype=complex)
    else:
        raise ValidationError(f"unknown test function kind {f.kind!r}")
    return out if out.ndim else complex(out)


@dataclass(frozen=True, eq=False)
class ContourQuadrature:
    """Equispaced circle nodes with trapezoid weights folded into ``tangents``.

    Nodes sit at angles ``2 pi (j + 1/2) / N`` so none lies on the real axis
    and the node set is closed under conjugation.
    """

    radius: float
    N: int
    nodes: np.ndarray
    tangents: np.ndarray
    center: float = 0.0
    shape: str = "circle"

    def subsample(self) -> "ContourQuadrature":
        return ContourQuadrature(self.radius, self.N // 2, self.nodes[::2],
                                 2.0 * self.tangents[::2])


def circle_contour(radius: float, N: int = DEFAULT_NODES) -> ContourQuadrature:
    if N < 2 or N & (N - 1):
        raise ValidationError(f"node count must be a power of two, got {N}")
    if not radius > 0:
        raise ValidationError("radius must be positive")
    theta = 2.0 * np.pi * (np.arange(N) + 0.5) / N
    nodes = radius * np.exp(1j * theta)
    tangents = 1j * nodes * (2.0 * np.pi / N)
    for a in (nodes, tangents):
        a.setflags(write=False)
    return ContourQuadrature(float(radius), N, nodes, tangents)


def _check_conditioning(params, contour):
    sols = solve_qve(params, contour.nodes)
    ck.gtgt_matrix(params, sols)
    for rows in _row_chunks(params.K, contour.N, params.K * params.K):
        s1 = sols[rows].reshape(-1, 1)
        s2 = sols.reshape(1, -1)
        cond = np.linalg.cond(ck.co2(params, s1, s2))
        worst = float(np.max(cond))
        if not np.isfinite(worst) or worst > ck.COND_LIMIT:
            raise ContourTooCloseError(f"Co2 condition {worst:.3e}", condition=worst)


def build_contour(params: BlockModelParams, nodes: int = DEFAULT_NODES, safety: float = 0.0,
                  max_attempts: int = 8) -> ContourQuadrature:
    """Circle of radius ``max(1.2 edge + 0.5, edge + safety)``, grown by 25%
    per attempt until every kernel system on it is well conditioned."""
    if nodes < 64 or nodes & (nodes - 1):
        raise ValidationError("nodes must be a power of two >= 64")
    if safety < 0:
        raise ValidationError("safety must be non-negative")
    edge = spectral_edge(params).edge
    radius = max(1.2 * edge + 0.5, edge + safety)
    last = None
    for _ in range(max_attempts):
        contour = circle_contour(radius, nodes)
        try:
            _check_conditioning(params, contour)
            return contour
        except ContourTooCloseError as exc:
            last = exc
            radius *= 1.25
    raise ContourTooCloseError(
        f"no well-conditioned contour after {max_attempts} attempts (last: {last})")


def _row_chunks(K, N, per_pair):
    size = max(1, min(N, _CHUNK_ELEMENTS // max(1, N * per_pair)))
    for start in range(0, N, size):
        yield slice(start, min(N, start + size))


@dataclass(frozen=True, eq=False)
class KernelGrid:
    """Kernels sampled on a contour: Stieltjes transform and ``Mean`` at the
    nodes, ``Cov`` on all node pairs (computed lazily)."""

    params: BlockModelParams
    contour: ContourQuadrature
    sols: QveSolution
    stieltjes: np.ndarray
    mean: np.ndarray
    _cov: list = field(default_factory=list, repr=False)

    @property
    def cov(self) -> np.ndarray:
        if not self._cov:
            self._cov.append(_cov_matrix(self.params, self.sols))
        return self._cov[0]

    def subsample(self) -> "KernelGrid":
        grid = KernelGrid(self.params, self.contour.subsample(), self.sols[::2],
                          self.stieltjes[::2], self.mean[::2])
        if self._cov:
            grid._cov.append(self._cov[0][::2, ::2])
        return grid


def _cov_matrix(params, sols):
    N, K = sols.z.shape[0], params.K
    X = ck.gtgt_matrix(params, sols)
    out = np.empty((N, N), dtype=complex)
    s2 = sols.reshape(1, -1)
    X2 = X[None]
    for rows in _row_chunks(K, N, K**3 + K * K):
        s1 = sols[rows].reshape(-1, 1)
        Xt = ck.g1tg2t_matrix(params, s1, s2)
        W = ck.w_tensor(params, s1, s2, X2, Xt)
        out[rows] = ck.cov_kernel(params, s1, s2, X2, Xt, W)[1]
    return out


@lru_cache(maxsize=32)
def _kernel_grid_cached(params, radius, N):
    contour = circle_contour(radius, N)
    sols = solve_qve(params, contour.nodes)
    return KernelGrid(params, contour, sols, sols.M @ params.alpha,
                      ck.mean_kernel(params, sols))


def kernel_grid(params: BlockModelParams, contour: ContourQuadrature) -> KernelGrid:
    """Kernels on ``contour``; cached per (params, radius, N)."""
    return _kernel_grid_cached(params, contour.radius, contour.N)


def _real(value, what, scale=1.0):
    if abs(value.imag) > IMAG_TOL * max(1.0, scale):
        raise QuadratureError(f"{what}: imaginary residual {value.imag:.3e} too large")
    return float(value.real)


def _mean_sum(grid, f):
    fz = eval_testfn(f, grid.contour.nodes)
    return -np.sum(grid.mean * fz * grid.contour.tangents) / (2j * np.pi)


def _lsd_sum(grid, f):
    fz = eval_testfn(f, grid.contour.nodes)
    return -np.sum(grid.stieltjes * fz * grid.contour.tangents) / (2j * np.pi)


def _cov_sum(grid, f, g):
    t = grid.contour.tangents
    a = eval_testfn(f, grid.contour.nodes) * t
    b = eval_testfn(g, grid.contour.nodes) * t
    return -(a @ grid.cov @ b) / (4.0 * np.pi**2)


def _converged(params, contour, integrand, what, max_nodes=MAX_NODES):
    """Evaluate on ``contour``, doubling N until it agrees with its half-rule."""
    c = contour
    while True:
        grid = kernel_grid(params, c)
        fine = integrand(grid)
        coarse = integrand(grid.subsample())
        if abs(fine - coarse) <= CONVERGENCE_TOL * max(1.0, abs(fine)):
            return fine, c.N
        if c.N >= max_nodes:
            raise QuadratureError(
                f"{what}: not converged at N={c.N} (|diff|={abs(fine - coarse):.3e})")
        c = circle_contour(c.radius, 2 * c.N)


def mean_lss(f: TestFunction, params: BlockModelParams, contour: ContourQuadrature) -> float:
    """Asymptotic mean ``M(f)`` of the centred linear spectral statistic."""
    v, _ = _converged(params, contour, lambda g: _mean_sum(g, f), "mean")
    return _real(v, "mean", abs(v))


def cov_lss(f: TestFunction, g: TestFunction, params: BlockModelParams,
            contour: ContourQuadrature) -> float:
    """Asymptotic covariance ``V(f, g)``."""
    v, _ = _converged(params, contour, lambda grid: _cov_sum(grid, f, g), "covariance")
    return _real(v, "covariance", abs(v))


def lsd_integral(f: TestFunction, params: BlockModelParams, contour: ContourQuadrature) -> float:
    """``int f dmu_inf`` through the limiting Stieltjes transform."""
    v, _ = _converged(params, contour, lambda g: _lsd_sum(g, f), "lsd integral")
    return _real(v, "lsd integral", abs(v))


@dataclass(frozen=True)
class TheoryResult:
    f: str
    mean: float
    variance: float
    centering: float
    nodes_used: int
    radius: float

    def lss_mean(self, n: int) -> float:
        """Predicted ``E L_n(f) = n * int f dmu + M(f)``."""
        return n * self.centering + self.mean


def theory(f: TestFunction, params: BlockModelParams, nodes: int = DEFAULT_NODES,
           contour: ContourQuadrature | None = None) -> TheoryResult:
    """Mean, variance and centering of ``L_n(f)`` with one shared contour."""
    contour = build_contour(params, nodes) if contour is None else contour
    m, n1 = _converged(params, contour, lambda g: _mean_sum(g, f), "mean")
    v, n2 = _converged(params, contour, lambda g: _cov_sum(g, f, f), "covariance")
    c, n3 = _converged(params, contour, lambda g: _lsd_sum(g, f), "lsd integral")
    return TheoryResult(f=f.label, mean=_real(m, "mean", abs(m)),
                        variance=_real(v, "covariance", abs(v)),
                        centering=_real(c, "lsd integral", abs(c)),
                        nodes_used=max(n1, n2, n3), radius=contour.radius)


def dump_kernels(params: BlockModelParams, contour: ContourQuadrature):
    """Rows ``(z1, z2, Mean(z1), Cov(z1, z2))`` over all node pairs; the mean
    column is only meaningful on the diagonal and is repeated per ``z1``."""
    grid = kernel_grid(params, contour)
    z = contour.nodes
    cov = grid.cov
    for i in range(contour.N):
        for j in range(contour.N):
            yield z[i], z[j], grid.mean[i], cov[i, j]

