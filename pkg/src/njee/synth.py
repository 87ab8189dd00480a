"""Synthetic data generators and exact brute-force information oracles.

Generators cover the benchmark families (uniform, Zipf, geometric, a
Zipf/geometric mixture, discrete Laplace, correlated Gaussian pairs, coupled
Markov chains); oracles compute entropy, MI, CMI and transfer entropy by
direct summation over small joint tables. Everything is seeded and pure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtri

from .discrete import DiscreteSample
from .rng import make_rng

_KINDS = ("uniform", "zipf", "geometric", "zipf_geometric_mixture", "discrete_laplace")


@dataclass(frozen=True)
class DistributionSpec:
    """A parametric discrete distribution with a computable exact mass function."""

    kind: str
    alphabet_size: int
    alpha: float | None = None
    p: float | None = None
    sigma: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if self.alphabet_size < 1:
            raise ValueError("alphabet_size must be positive")
        if self.kind in ("zipf", "zipf_geometric_mixture"):
            if self.alpha is None or self.alpha <= 0:
                raise ValueError("zipf exponent alpha must be positive")
        if self.kind in ("geometric", "zipf_geometric_mixture"):
            if self.p is None or not 0 < self.p < 1:
                raise ValueError("geometric parameter p must lie in (0, 1)")
        if self.kind == "discrete_laplace":
            if self.sigma is None or self.sigma <= 0:
                raise ValueError("discrete Laplace rate sigma must be positive")

    def pmf(self) -> np.ndarray:
        """Normalized probability vector over {0, ..., alphabet_size-1}."""
        k = self.alphabet_size
        if self.kind == "uniform":
            mass = np.full(k, 1.0 / k)
        elif self.kind == "zipf":
            mass = (np.arange(1, k + 1, dtype=np.float64)) ** (-self.alpha)
        elif self.kind == "geometric":
            mass = (1.0 - self.p) ** np.arange(k, dtype=np.float64) * self.p
        elif self.kind == "zipf_geometric_mixture":
            zipf = (np.arange(1, k + 1, dtype=np.float64)) ** (-self.alpha)
            geom = (1.0 - self.p) ** np.arange(k, dtype=np.float64) * self.p
            mass = 0.5 * zipf / zipf.sum() + 0.5 * geom / geom.sum()
        else:  # discrete_laplace; symbols interleave 0, +1, -1, +2, -2, ...
            idx = np.arange(k)
            magnitude = (idx + 1) // 2
            mass = np.exp(-self.sigma * magnitude)
        total = mass.sum()
        if not np.isfinite(total) or total <= 0:
            raise ValueError("degenerate mass function")
        return mass / total

    def exact_entropy(self) -> float:
        """-sum p ln p by direct summation; the estimation ground truth."""
        p = self.pmf()
        p = p[p > 0]
        return float(-(p * np.log(p)).sum())


def uniform_spec(alphabet_size: int) -> DistributionSpec:
    return DistributionSpec("uniform", alphabet_size)


def zipf_spec(alpha: float, alphabet_size: int) -> DistributionSpec:
    return DistributionSpec("zipf", alphabet_size, alpha=alpha)


def geometric_spec(p: float, alphabet_size: int) -> DistributionSpec:
    return DistributionSpec("geometric", alphabet_size, p=p)


def mixture_spec(
    alphabet_size: int, alpha: float = 1.0, p: float | None = None
) -> DistributionSpec:
    """Equal-weight Zipf/geometric mixture; p defaults to 2/alphabet_size."""
    if p is None:
        p = 2.0 / alphabet_size
    return DistributionSpec("zipf_geometric_mixture", alphabet_size, alpha=alpha, p=p)


def discrete_laplace_spec(sigma: float, tail_mass: float = 1e-12) -> DistributionSpec:
    """Two-sided geometric decay exp(-sigma*|x|), truncated once the remaining
    tail mass drops below `tail_mass` and relabeled onto 0, +1, -1, +2, ...
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    # per-side tail beyond magnitude M is e^{-sigma(M+1)} / (1 - e^{-sigma})
    q = np.exp(-sigma)
    max_magnitude = int(np.ceil(np.log(tail_mass * (1 - q) / 2.0) / np.log(q))) + 1
    return DistributionSpec(
        "discrete_laplace", 2 * max_magnitude + 1, sigma=sigma
    )


def sample_univariate(
    spec: DistributionSpec, n: int, seed: int
) -> tuple[np.ndarray, float]:
    """i.i.d. sample by inverse-CDF plus the exact entropy of the spec."""
    if n < 1:
        raise ValueError("n must be >= 1")
    pmf = spec.pmf()
    cdf = np.cumsum(pmf)
    cdf[-1] = 1.0
    u = make_rng(seed).random(n)
    values = np.searchsorted(cdf, u, side="right").astype(np.int64)
    return values, spec.exact_entropy()


@dataclass(frozen=True)
class GaussianPairSpec:
    """d independent correlated standard-normal pairs, quantized per coordinate
    into equiprobable bins at standard-normal quantiles."""

    dim: int
    rho: float
    bins_per_dim: int = 8
    quantile_edges: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not abs(self.rho) < 1:
            raise ValueError("|rho| must be < 1")
        if self.bins_per_dim < 2:
            raise ValueError("bins_per_dim must be >= 2")
        edges = ndtri(np.arange(1, self.bins_per_dim) / self.bins_per_dim)
        object.__setattr__(self, "quantile_edges", tuple(float(e) for e in edges))

    @property
    def true_mi(self) -> float:
        """Pre-quantization MI: -(d/2) ln(1 - rho^2)."""
        return -0.5 * self.dim * np.log(1.0 - self.rho**2)


def rho_for_mi(target_mi: float, dim: int) -> float:
    """Correlation giving a prescribed Gaussian MI: rho^2 = 1 - e^(-2 MI / d)."""
    if target_mi < 0:
        raise ValueError("target MI must be nonnegative")
    return float(np.sqrt(1.0 - np.exp(-2.0 * target_mi / dim)))


def sample_gaussian_continuous(
    spec: GaussianPairSpec, n: int, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Raw correlated pairs (n, d each) before any quantization."""
    rng = make_rng(seed)
    x = rng.standard_normal((n, spec.dim))
    noise = rng.standard_normal((n, spec.dim))
    y = spec.rho * x + np.sqrt(1.0 - spec.rho**2) * noise
    return x, y


def quantize_at_edges(matrix: np.ndarray, edges: Sequence[float]) -> np.ndarray:
    """Bin every entry by the shared monotone edge list (len(edges)+1 bins)."""
    return np.searchsorted(np.asarray(edges), matrix, side="left").astype(np.int64)


def quantize_equiprobable(matrix: np.ndarray, bins: int) -> np.ndarray:
    """Per-column empirical-quantile binning into `bins` near-equal-mass bins."""
    if bins < 2:
        raise ValueError("bins must be >= 2")
    out = np.empty(matrix.shape, dtype=np.int64)
    qs = np.arange(1, bins) / bins
    for j in range(matrix.shape[1]):
        edges = np.quantile(matrix[:, j], qs)
        out[:, j] = np.searchsorted(edges, matrix[:, j], side="left")
    return out


def sample_gaussian_pair(
    spec: GaussianPairSpec, n: int, seed: int
) -> tuple[DiscreteSample, DiscreteSample, float]:
    """Quantized correlated pair sample plus the analytic pre-quantization MI."""
    if n < 1:
        raise ValueError("n must be >= 1")
    x, y = sample_gaussian_continuous(spec, n, seed)
    xq = quantize_at_edges(x, spec.quantile_edges)
    yq = quantize_at_edges(y, spec.quantile_edges)
    sizes = (spec.bins_per_dim,) * spec.dim
    return DiscreteSample(xq, sizes), DiscreteSample(yq, sizes), float(spec.true_mi)


def draw_invertible_matrix(
    dim: int, seed: int, max_attempts: int = 100, min_abs_det: float = 1e-9
) -> np.ndarray:
    """Standard-normal (dim, dim) matrix, redrawn until numerically invertible."""
    rng = make_rng(seed)
    for _ in range(max_attempts):
        w = rng.standard_normal((dim, dim))
        if abs(np.linalg.det(w)) > min_abs_det:
            return w
    raise RuntimeError(f"no invertible matrix found in {max_attempts} attempts")


def cubic_transform(y: np.ndarray, seed: int) -> np.ndarray:
    """Element-wise cube of W @ y per row, with W a seeded invertible mixing
    matrix. Invertible, so population MI with any other variable is unchanged."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 2:
        raise ValueError("y must be an (n, d) matrix")
    w = draw_invertible_matrix(y.shape[1], seed)
    return (y @ w.T) ** 3


@dataclass(frozen=True)
class JointTable:
    """A full joint probability array over a small discrete product space."""

    probabilities: np.ndarray
    axis_labels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        probs = np.array(self.probabilities, dtype=np.float64)
        if probs.size > 2**20:
            raise ValueError("joint table too large (over 2^20 cells)")
        if probs.size == 0:
            raise ValueError("joint table must be nonempty")
        if probs.min() < 0:
            raise ValueError("probabilities must be nonnegative")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must sum to 1 within 1e-12")
        if self.axis_labels is not None and len(self.axis_labels) != probs.ndim:
            raise ValueError("one axis label per table dimension required")
        probs.flags.writeable = False
        object.__setattr__(self, "probabilities", probs)

    @property
    def ndim(self) -> int:
        return self.probabilities.ndim

    def marginal(self, axes: Sequence[int]) -> np.ndarray:
        """Marginal table over `axes`, in the order given."""
        axes = _check_axes(self, axes)
        drop = tuple(a for a in range(self.ndim) if a not in axes)
        marg = self.probabilities.sum(axis=drop) if drop else self.probabilities
        kept = [a for a in range(self.ndim) if a in axes]
        order = [kept.index(a) for a in axes]
        return np.transpose(marg, order) if order != list(range(len(axes))) else marg

    def sample(self, n: int, seed: int) -> np.ndarray:
        """(n, ndim) array of cell coordinates drawn i.i.d. from the table."""
        if n < 1:
            raise ValueError("n must be >= 1")
        flat = self.probabilities.reshape(-1)
        cdf = np.cumsum(flat)
        cdf[-1] = 1.0
        u = make_rng(seed).random(n)
        idx = np.searchsorted(cdf, u, side="right")
        return np.column_stack(np.unravel_index(idx, self.probabilities.shape)).astype(np.int64)


def _check_axes(table: JointTable, axes: Sequence[int]) -> tuple[int, ...]:
    axes = tuple(int(a) for a in axes)
    if len(set(axes)) != len(axes):
        raise ValueError("duplicate axis")
    if any(a < 0 or a >= table.ndim for a in axes):
        raise ValueError("axis out of range")
    return axes


def _entropy_of(probs: np.ndarray) -> float:
    p = probs.reshape(-1)
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def oracle_entropy(table: JointTable, axes: Sequence[int]) -> float:
    """Exact entropy of the marginal over `axes`, by direct summation."""
    axes = _check_axes(table, axes)
    if not axes:
        raise ValueError("at least one axis required")
    return _entropy_of(table.marginal(axes))


def oracle_mi(table: JointTable, x_axes: Sequence[int], y_axes: Sequence[int]) -> float:
    """Exact I(X;Y) = H(X) + H(Y) - H(X,Y) over disjoint axis groups."""
    x_axes = _check_axes(table, x_axes)
    y_axes = _check_axes(table, y_axes)
    if set(x_axes) & set(y_axes):
        raise ValueError("x and y axes overlap")
    return (
        oracle_entropy(table, x_axes)
        + oracle_entropy(table, y_axes)
        - oracle_entropy(table, x_axes + y_axes)
    )


def oracle_cmi(
    table: JointTable,
    x_axes: Sequence[int],
    y_axes: Sequence[int],
    z_axes: Sequence[int],
) -> float:
    """Exact I(X;Y|Z) = H(X,Z) + H(Y,Z) - H(Z) - H(X,Y,Z)."""
    x_axes = _check_axes(table, x_axes)
    y_axes = _check_axes(table, y_axes)
    z_axes = _check_axes(table, z_axes)
    groups = (set(x_axes), set(y_axes), set(z_axes))
    if groups[0] & groups[1] or groups[0] & groups[2] or groups[1] & groups[2]:
        raise ValueError("axis groups overlap")
    return (
        oracle_entropy(table, x_axes + z_axes)
        + oracle_entropy(table, y_axes + z_axes)
        - (oracle_entropy(table, z_axes) if z_axes else 0.0)
        - oracle_entropy(table, x_axes + y_axes + z_axes)
    )


def coupled_markov_table(coupling: float) -> JointTable:
    """Stationary joint of (X_t, Y_t, Y_{t+1}) for the coupled binary process."""
    if not 0 <= coupling <= 1:
        raise ValueError("coupling must lie in [0, 1]")
    probs = np.empty((2, 2, 2))
    for x in (0, 1):
        for y in (0, 1):
            for y_next in (0, 1):
                p_next = coupling * (1.0 if y_next == x else 0.0) + (1 - coupling) * 0.5
                probs[x, y, y_next] = 0.25 * p_next
    return JointTable(probs, axis_labels=("x_t", "y_t", "y_next"))


def coupled_markov(
    n: int, coupling: float, seed: int
) -> tuple[np.ndarray, np.ndarray, float]:
    """Binary source X (i.i.d. fair) driving Y: Y_{t+1} copies X_t with
    probability `coupling`, otherwise a fresh fair coin. Returns both series
    and the exact transfer entropy from the stationary joint."""
    if n < 2:
        raise ValueError("need at least 2 time steps")
    table = coupled_markov_table(coupling)
    true_te = oracle_cmi(table, x_axes=(0,), y_axes=(2,), z_axes=(1,))
    rng = make_rng(seed)
    x = rng.integers(0, 2, size=n)
    copy_mask = rng.random(n) < coupling
    noise = rng.integers(0, 2, size=n)
    y = np.empty(n, dtype=np.int64)
    y[0] = rng.integers(0, 2)
    y[1:] = np.where(copy_mask[1:], x[:-1], noise[1:])
    return x.astype(np.int64), y, float(true_te)
