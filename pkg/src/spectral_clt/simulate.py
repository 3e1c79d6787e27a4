"""Monte Carlo sampling of SBM spectra and empirical LSS summaries.

Randomness is counter based: replicate ``r`` of master seed ``s`` draws from
a Philox stream keyed by ``(s, r)``, and within a replicate the upper-triangle
entries ``(i, j), i < j`` consume the stream in row-major order. Replicates
therefore never depend on scheduling, and each one runs single-threaded, so
results are bit-identical for any worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats
from threadpoolctl import threadpool_limits

from .blockmodel import SbmSpec, membership
from .contour import TestFunction, eval_testfn
from .errors import ValidationError

__all__ = [
    "AdjacencyMatrix",
    "LssSampleSet",
    "SummaryStats",
    "lss",
    "monte_carlo",
    "monte_carlo_many",
    "qq_normal",
    "qq_two_sample",
    "renormalize_empirical",
    "renormalize_true",
    "replicate_rng",
    "sample_sbm",
    "summarize",
    "symmetric_eigenvalues",
    "thread_count",
    "two_sample_compare",
]

TRUE_P = "true_p"
EMPIRICAL_P = "empirical_p"
RENORMALIZATIONS = (TRUE_P, EMPIRICAL_P)
THREADS_ENV = "SPECTRAL_CLT_THREADS"


def thread_count(threads: int | None = None) -> int:
    """Worker count: explicit value, else ``$SPECTRAL_CLT_THREADS``, else CPUs."""
    if threads is None:
        env = os.environ.get(THREADS_ENV)
        threads = int(env) if env else (os.cpu_count() or 1)
    if threads < 1:
        raise ValidationError("thread count must be >= 1")
    return threads


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    if not 0 <= seed < 2**64 or not 0 <= replicate < 2**64:
        raise ValidationError("seed and replicate index must fit in 64 bits")
    return np.random.Generator(np.random.Philox(key=(int(replicate) << 64) | int(seed)))


@dataclass(frozen=True, eq=False)
class AdjacencyMatrix:
    A: np.ndarray
    seed: int
    replicate: int = 0


def _prob_matrix(spec: SbmSpec) -> np.ndarray:
    sigma = membership(spec.sizes)
    return spec.Ptilde[np.ix_(sigma, sigma)]


def sample_sbm(spec: SbmSpec, seed: int, replicate: int = 0) -> AdjacencyMatrix:
    """Symmetric 0/1 adjacency with zero diagonal and independent upper entries."""
    n = spec.n
    rng = replicate_rng(seed, replicate)
    iu = np.triu_indices(n, 1)
    u = rng.random(iu[0].size)
    sigma = membership(spec.sizes)
    upper = u < spec.Ptilde[sigma[iu[0]], sigma[iu[1]]]
    A = np.zeros((n, n), dtype=np.int8)
    A[iu] = upper
    A += A.T
    return AdjacencyMatrix(A=A, seed=seed, replicate=replicate)


def _as_array(A):
    return A.A if isinstance(A, AdjacencyMatrix) else np.asarray(A)


def renormalize_true(A, spec: SbmSpec) -> np.ndarray:
    """``H_ij = (A_ij - p_ij) / sqrt(n)`` off the diagonal, zero on it."""
    A = _as_array(A)
    n = A.shape[0]
    H = (A - _prob_matrix(spec)) / np.sqrt(n)
    np.fill_diagonal(H, 0.0)
    return H


def block_estimates(A, sizes) -> np.ndarray:
    """Empirical block connection probabilities ``p_hat[k, l]``."""
    A = _as_array(A)
    sizes = np.asarray(sizes, dtype=int)
    if A.shape[0] != sizes.sum():
        raise ValidationError("adjacency size does not match community sizes")
    if np.any(sizes < 2):
        raise ValidationError("every community needs at least 2 nodes (N_kk = 0 otherwise)")
    E = np.zeros((A.shape[0], sizes.size))
    E[np.arange(A.shape[0]), membership(sizes)] = 1.0
    S = E.T @ A.astype(float) @ E
    N = np.outer(sizes, sizes).astype(float)
    N[np.diag_indices_from(N)] -= sizes
    return S / N


def renormalize_empirical(A, sizes) -> np.ndarray:
    """``Hhat_ij = (A_ij - p_hat_{sigma(i) sigma(j)}) / sqrt(n)`` off the diagonal."""
    A = _as_array(A)
    n = A.shape[0]
    p_hat = block_estimates(A, sizes)
    sigma = membership(sizes)
    H = (A - p_hat[np.ix_(sigma, sigma)]) / np.sqrt(n)
    np.fill_diagonal(H, 0.0)
    return H


def symmetric_eigenvalues(M: np.ndarray) -> np.ndarray:
    """Ascending eigenvalues of a real symmetric matrix (LAPACK ``syevd``)."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValidationError("matrix must be square")
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    if M.size and np.max(np.abs(M - M.T)) > 1e-12 * scale:
        raise ValidationError("matrix is not symmetric")
    return np.linalg.eigvalsh(M)


def lss(eigs, f: TestFunction) -> float:
    """``sum_i f(lambda_i)``."""
    vals = eval_testfn(f, np.asarray(eigs, dtype=float))
    return float(np.sum(np.real(vals)))


@dataclass(frozen=True, eq=False)
class LssSampleSet:
    model_id: str
    renormalization: str
    f: str
    values: np.ndarray
    seed: int
    n: int

    def __len__(self):
        return self.values.size


def _replicate(spec, fs, whichs, seed, r):
    adj = sample_sbm(spec, seed, r)
    out = {}
    for which in whichs:
        H = renormalize_true(adj, spec) if which == TRUE_P else renormalize_empirical(adj, spec.sizes)
        eigs = symmetric_eigenvalues(H)
        for f in fs:
            out[which, f.label] = lss(eigs, f)
    return out


def monte_carlo_many(spec: SbmSpec, fs, N_r: int, whichs=RENORMALIZATIONS, seed: int = 0,
                     threads: int | None = None, model_id: str = "") -> dict:
    """Replicates of several LSS and renormalizations sharing each sampled graph.

    Returns a dict keyed by ``(which, f.label)``.
    """
    if N_r < 2:
        raise ValidationError("N_r must be at least 2")
    whichs = tuple(whichs)
    for w in whichs:
        if w not in RENORMALIZATIONS:
            raise ValidationError(f"unknown renormalization {w!r}")
    fs = tuple(fs)
    workers = thread_count(threads)
    with threadpool_limits(limits=1):
        if workers == 1:
            rows = [_replicate(spec, fs, whichs, seed, r) for r in range(N_r)]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                rows = list(pool.map(lambda r: _replicate(spec, fs, whichs, seed, r), range(N_r)))
    out = {}
    for w in whichs:
        for f in fs:
            vals = np.array([row[w, f.label] for row in rows])
            out[w, f.label] = LssSampleSet(model_id=model_id, renormalization=w, f=f.label,
                                           values=vals, seed=seed, n=spec.n)
    return out


def monte_carlo(spec: SbmSpec, f: TestFunction, N_r: int, which: str = TRUE_P, seed: int = 0,
                threads: int | None = None, model_id: str = "") -> LssSampleSet:
    """``N_r`` replicates of ``L_n(f)`` under one renormalization."""
    return monte_carlo_many(spec, [f], N_r, [which], seed, threads, model_id)[which, f.label]


def qq_normal(values) -> np.ndarray:
    """Pairs (normal quantile, standardized order statistic)."""
    x = np.asarray(values, dtype=float)
    sd = x.std(ddof=1)
    z = np.sort((x - x.mean()) / sd)
    probs = (np.arange(1, x.size + 1) - 0.5) / x.size
    return np.column_stack([stats.norm.ppf(probs), z])


def qq_two_sample(a, b, *, resample: bool = False) -> np.ndarray:
    """Quantile pairs of two samples, both standardized by ``a``'s mean and std.

    Unequal lengths are rejected unless ``resample`` is set, in which case
    both samples are interpolated onto a common probability grid.
    """
    a = np.asarray(getattr(a, "values", a), dtype=float)
    b = np.asarray(getattr(b, "values", b), dtype=float)
    if a.size != b.size and not resample:
        raise ValidationError(f"sample lengths differ ({a.size} vs {b.size})")
    mu, sd = a.mean(), a.std(ddof=1)
    if resample and a.size != b.size:
        m = min(a.size, b.size)
        probs = (np.arange(1, m + 1) - 0.5) / m
        qa, qb = np.quantile(a, probs), np.quantile(b, probs)
    else:
        qa, qb = np.sort(a), np.sort(b)
    return np.column_stack([(qa - mu) / sd, (qb - mu) / sd])


@dataclass(frozen=True, eq=False)
class SummaryStats:
    mean: float
    variance: float
    std: float
    ks: float
    qq: np.ndarray
    degenerate: bool
    theory_mean: float | None = None
    theory_var: float | None = None

    @property
    def abs_diff_mean(self):
        return None if self.theory_mean is None else abs(self.mean - self.theory_mean)

    @property
    def abs_diff_var(self):
        return None if self.theory_var is None else abs(self.variance - self.theory_var)


def summarize(samples, theory_mean: float | None = None,
              theory_var: float | None = None) -> SummaryStats:
    """Empirical moments plus normality diagnostics of standardized samples.

    Samples whose spread is at round-off level are flagged ``degenerate``;
    their KS statistic is NaN and their qq array is empty.
    """
    x = np.asarray(getattr(samples, "values", samples), dtype=float)
    if x.size == 0:
        raise ValidationError("no samples to summarize")
    mean = float(x.mean())
    var = float(x.var(ddof=1)) if x.size > 1 else 0.0
    std = float(np.sqrt(var))
    degenerate = std <= 1e-10 * max(1.0, abs(mean))
    if degenerate:
        ks, qq = float("nan"), np.empty((0, 2))
    else:
        ks = float(stats.kstest((x - mean) / std, "norm").statistic)
        qq = qq_normal(x)
    return SummaryStats(mean=mean, variance=var, std=std, ks=ks, qq=qq, degenerate=degenerate,
                        theory_mean=theory_mean, theory_var=theory_var)


def two_sample_compare(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic."""
    a = np.asarray(getattr(a, "values", a), dtype=float)
    b = np.asarray(getattr(b, "values", b), dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValidationError("both samples must be non-empty")
    return float(stats.ks_2samp(a, b).statistic)
