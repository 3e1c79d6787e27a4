"""Block-Wigner-type model parameters and their construction from SBMs.

Communities are contiguous index blocks in the order ``0..K-1``; block
proportions are always derived from the integer community sizes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError

__all__ = [
    "BlockModelParams",
    "SbmSpec",
    "bernoulli_cumulants",
    "block_params",
    "community_of",
    "load_model",
    "membership",
    "model_from_dict",
    "model_to_dict",
    "as_block_params",
    "example_sbm",
    "sbm_spec",
    "sbm_to_block_params",
    "sizes_from_alpha",
    "validate_params",
]

_SYM_TOL = 1e-12


def _frozen(a, dtype=float):
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class BlockModelParams:
    """Full specification of a block-Wigner-type model.

    ``Q2``, ``Q3`` and ``Q4`` hold the 2nd, 3rd and 4th cumulants of
    ``sqrt(n) * H_ij`` for ``i`` in community ``k`` and ``j`` in ``l``.
    """

    K: int
    sizes: tuple
    alpha: np.ndarray
    Q2: np.ndarray
    Q3: np.ndarray
    Q4: np.ndarray

    @property
    def n(self) -> int:
        return int(sum(self.sizes))

    def key(self):
        """Hashable fingerprint, used for caching theory results."""
        return (self.K, tuple(self.sizes), self.Q2.tobytes(), self.Q3.tobytes(),
                self.Q4.tobytes())

    def __eq__(self, other):
        if not isinstance(other, BlockModelParams):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self):
        return hash(self.key())


@dataclass(frozen=True, eq=False)
class SbmSpec:
    """Stochastic block model: community sizes and connection probabilities."""

    K: int
    sizes: tuple
    Ptilde: np.ndarray

    @property
    def n(self) -> int:
        return int(sum(self.sizes))

    def key(self):
        return (self.K, tuple(self.sizes), self.Ptilde.tobytes())

    def __eq__(self, other):
        if not isinstance(other, SbmSpec):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self):
        return hash(self.key())


def _check_sizes(K, sizes):
    if not isinstance(K, (int, np.integer)) or isinstance(K, bool) or K < 1:
        raise ValidationError(f"K must be a positive integer, got {K!r}")
    if len(sizes) != K:
        raise ValidationError(f"expected {K} community sizes, got {len(sizes)}")
    for s in sizes:
        if int(s) != s or s < 1:
            raise ValidationError(f"community sizes must be positive integers, got {sizes!r}")


def _check_square(name, Q, K):
    if Q.shape != (K, K):
        raise ValidationError(f"{name} must be {K}x{K}, got shape {Q.shape}")
    if not np.all(np.isfinite(Q)):
        raise ValidationError(f"{name} has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(Q))))
    if np.max(np.abs(Q - Q.T)) > _SYM_TOL * scale:
        raise ValidationError(f"{name} not symmetric")


def block_params(sizes, Q2, Q3=None, Q4=None) -> BlockModelParams:
    """Build and validate parameters from sizes and cumulant matrices.

    Missing ``Q3``/``Q4`` default to zero matrices.
    """
    sizes = tuple(int(s) for s in sizes)
    K = len(sizes)
    Q2 = np.atleast_2d(np.asarray(Q2, dtype=float))
    zeros = np.zeros((K, K))
    Q3 = zeros if Q3 is None else np.atleast_2d(np.asarray(Q3, dtype=float))
    Q4 = zeros if Q4 is None else np.atleast_2d(np.asarray(Q4, dtype=float))
    n = sum(sizes)
    alpha = np.array(sizes, dtype=float) / n if n > 0 else np.zeros(K)
    raw = BlockModelParams(K=K, sizes=sizes, alpha=_frozen(alpha), Q2=_frozen(Q2),
                           Q3=_frozen(Q3), Q4=_frozen(Q4))
    return validate_params(raw)


def validate_params(raw: BlockModelParams) -> BlockModelParams:
    """Return ``raw`` unchanged if every model invariant holds.

    Raises
    ------
    ValidationError
        Naming the first violated invariant.
    """
    K = raw.K
    _check_sizes(K, raw.sizes)
    alpha = np.asarray(raw.alpha, dtype=float)
    if alpha.shape != (K,):
        raise ValidationError(f"alpha must have length {K}")
    if abs(alpha.sum() - 1.0) > 1e-12:
        raise ValidationError(f"alpha must sum to 1, sums to {alpha.sum()!r}")
    # alpha_k == 1 only for the single-community model
    if np.any(alpha <= 0) or np.any(alpha > 1) or (K > 1 and np.any(alpha >= 1)):
        raise ValidationError("alpha entries must lie in (0, 1)")
    expected = np.array(raw.sizes, dtype=float) / sum(raw.sizes)
    if np.max(np.abs(alpha - expected)) > 1e-12:
        raise ValidationError("alpha must equal sizes / n")
    for name in ("Q2", "Q3", "Q4"):
        _check_square(name, np.asarray(getattr(raw, name), dtype=float), K)
    if np.any(np.asarray(raw.Q2) <= 0):
        raise ValidationError("Q2 entries must be positive")
    return raw


def membership(sizes) -> np.ndarray:
    """Community index of every node, as an int array of length ``n``."""
    return np.repeat(np.arange(len(sizes)), np.asarray(sizes, dtype=int))


def community_of(i: int, sizes) -> int:
    """Zero-based community index of node ``i`` under contiguous blocks."""
    n = int(sum(sizes))
    if not 0 <= i < n:
        raise ValidationError(f"node index {i} out of range [0, {n})")
    bounds = np.cumsum(sizes)
    return int(np.searchsorted(bounds, i, side="right"))


def bernoulli_cumulants(p):
    """Cumulants 2..4 of ``A - p`` for ``A ~ Bernoulli(p)``."""
    p = np.asarray(p, dtype=float)
    v = p * (1.0 - p)
    return v, v * (1.0 - 2.0 * p), v * (1.0 - 6.0 * v)


def _make_sbm(sizes, Ptilde) -> SbmSpec:
    sizes = tuple(int(s) for s in sizes)
    K = len(sizes)
    _check_sizes(K, sizes)
    P = np.atleast_2d(np.asarray(Ptilde, dtype=float))
    _check_square("Ptilde", P, K)
    if np.any(P <= 0) or np.any(P >= 1):
        raise ValidationError("Ptilde entries must lie strictly inside (0, 1)")
    return SbmSpec(K=K, sizes=sizes, Ptilde=_frozen(P))


def sbm_spec(sizes, Ptilde) -> SbmSpec:
    """Validated SBM specification."""
    return _make_sbm(sizes, Ptilde)


def sbm_to_block_params(spec: SbmSpec) -> BlockModelParams:
    """Cumulant parameters of the oracle renormalization ``(A - p) / sqrt(n)``."""
    k2, k3, k4 = bernoulli_cumulants(spec.Ptilde)
    return block_params(spec.sizes, k2, k3, k4)


def sizes_from_alpha(alpha, n: int) -> tuple:
    """Integer sizes summing to ``n`` with proportions close to ``alpha``.

    Uses largest-remainder rounding.
    """
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha <= 0) or abs(alpha.sum() - 1.0) > 1e-9:
        raise ValidationError("alpha must be positive and sum to 1")
    raw = alpha * n
    base = np.floor(raw).astype(int)
    short = n - base.sum()
    order = np.argsort(-(raw - base), kind="stable")
    base[order[:short]] += 1
    return tuple(int(s) for s in base)


def example_sbm(p: float, q: float, sizes) -> SbmSpec:
    """Two-level SBM with ``p`` on the diagonal and ``q`` elsewhere."""
    K = len(sizes)
    P = (p - q) * np.eye(K) + q * np.ones((K, K))
    return _make_sbm(sizes, P)


def model_from_dict(d: dict):
    """Parse a model JSON object into ``BlockModelParams`` or ``SbmSpec``."""
    d = {str(k).lower(): v for k, v in d.items()}
    if "sizes" not in d:
        raise ValidationError("model requires 'sizes'")
    sizes = d["sizes"]
    if "k" in d and int(d["k"]) != len(sizes):
        raise ValidationError(f"k={d['k']} does not match {len(sizes)} sizes")
    if "ptilde" in d:
        return _make_sbm(sizes, d["ptilde"])
    if "q2" not in d:
        raise ValidationError("model requires either 'ptilde' or 'q2'")
    return block_params(sizes, d["q2"], d.get("q3"), d.get("q4"))


def model_to_dict(model) -> dict:
    if isinstance(model, SbmSpec):
        return {"k": model.K, "sizes": list(model.sizes), "ptilde": model.Ptilde.tolist()}
    return {"k": model.K, "sizes": list(model.sizes), "q2": model.Q2.tolist(),
            "q3": model.Q3.tolist(), "q4": model.Q4.tolist()}


def load_model(path):
    """Read a model file; raises ``ValidationError`` on bad content."""
    text = Path(path).read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(d, dict):
        raise ValidationError(f"{path}: model must be a JSON object")
    return model_from_dict(d)


def as_block_params(model) -> BlockModelParams:
    """Accept either model kind and return cumulant parameters."""
    if isinstance(model, SbmSpec):
        return sbm_to_block_params(model)
    return model
