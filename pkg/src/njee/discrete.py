"""Discrete sample containers, base-b digit decomposition, and classical
count-based entropy estimators (plug-in, Miller-Madow, Chao-Shen).

All estimates are in nats.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np


@dataclass(frozen=True)
class DiscreteSample:
    """n observations of a d-component discrete vector.

    ``data`` is an (n, d) integer matrix; column m takes values in
    {0, ..., alphabet_sizes[m]-1}. Instances are immutable: the array is
    copied on construction and marked read-only.
    """

    data: np.ndarray
    alphabet_sizes: tuple[int, ...]

    def __post_init__(self) -> None:
        data = np.array(self.data, dtype=np.int64)
        if data.ndim != 2:
            raise ValueError("data must be an (n, d) matrix")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError("need n >= 1 observations and d >= 1 components")
        sizes = tuple(int(a) for a in self.alphabet_sizes)
        if len(sizes) != data.shape[1]:
            raise ValueError("one alphabet size per column required")
        if any(a < 1 for a in sizes):
            raise ValueError("alphabet sizes must be positive")
        if data.min() < 0 or np.any(data.max(axis=0) >= np.asarray(sizes)):
            raise ValueError("symbol out of range for its column alphabet")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "alphabet_sizes", sizes)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def column(self, m: int) -> np.ndarray:
        """Column m (0-based)."""
        return self.data[:, m]

    def concat(self, other: "DiscreteSample") -> "DiscreteSample":
        """Column-wise concatenation; row counts must match."""
        if other.n != self.n:
            raise ValueError(f"row count mismatch: {self.n} vs {other.n}")
        return DiscreteSample(
            np.hstack([self.data, other.data]),
            self.alphabet_sizes + other.alphabet_sizes,
        )

    @classmethod
    def from_column(cls, values: Sequence[int], alphabet_size: int) -> "DiscreteSample":
        values = np.asarray(values, dtype=np.int64)
        return cls(values.reshape(-1, 1), (alphabet_size,))


def decompose(values: Sequence[int], alphabet_size: int, base: int = 2) -> DiscreteSample:
    """Split univariate symbols into base-`base` digits, most significant first.

    The result has d = ceil(log_base(alphabet_size)) columns (at least one),
    each over {0, ..., base-1}; `compose` is its exact inverse.
    """
    if base < 2:
        raise ValueError("base must be >= 2")
    if alphabet_size < 1:
        raise ValueError("alphabet_size must be positive")
    values = np.asarray(values, dtype=np.int64)
    if values.ndim != 1:
        raise ValueError("values must be a 1-d sequence")
    if values.size and (values.min() < 0 or values.max() >= alphabet_size):
        raise ValueError("value out of range for the alphabet")
    width = 1
    while base**width < alphabet_size:
        width += 1
    powers = base ** np.arange(width - 1, -1, -1, dtype=np.int64)
    digits = (values[:, None] // powers[None, :]) % base
    return DiscreteSample(digits, (base,) * width)


def compose(sample: DiscreteSample, base: int = 2) -> np.ndarray:
    """Reassemble univariate symbols from their digit columns (MSB first)."""
    if any(a != base for a in sample.alphabet_sizes):
        raise ValueError("every column must have alphabet size equal to base")
    powers = base ** np.arange(sample.d - 1, -1, -1, dtype=np.int64)
    return sample.data @ powers


@dataclass(frozen=True)
class EmpiricalDistribution:
    """Symbol counts of an observed sample: the plug-in distribution."""

    counts: Mapping
    total: int
    support_size: int

    def __post_init__(self) -> None:
        if self.total < 1:
            raise ValueError("total must be >= 1")
        if sum(self.counts.values()) != self.total:
            raise ValueError("counts must sum to total")
        if sum(1 for c in self.counts.values() if c > 0) != self.support_size:
            raise ValueError("support_size must equal the number of nonzero counts")

    @classmethod
    def from_symbols(cls, symbols) -> "EmpiricalDistribution":
        symbols = np.asarray(symbols)
        if symbols.ndim != 1 or symbols.size == 0:
            raise ValueError("symbols must be a nonempty 1-d sequence")
        values, counts = np.unique(symbols, return_counts=True)
        mapping = {v.item(): int(c) for v, c in zip(values, counts)}
        return cls(mapping, int(symbols.size), len(mapping))

    @classmethod
    def from_counts(cls, counts: Mapping) -> "EmpiricalDistribution":
        cleaned = {k: int(c) for k, c in counts.items() if c > 0}
        if any(c < 0 for c in counts.values()):
            raise ValueError("counts must be nonnegative")
        if not cleaned:
            raise ValueError("at least one positive count required")
        return cls(cleaned, sum(cleaned.values()), len(cleaned))

    def frequencies(self) -> np.ndarray:
        """Nonzero counts as an array."""
        return np.asarray([c for c in self.counts.values() if c > 0], dtype=np.int64)


def plugin_entropy(dist: EmpiricalDistribution) -> float:
    """Entropy of the empirical distribution: -sum (c/n) ln (c/n)."""
    p = dist.frequencies() / dist.total
    return float(-(p * np.log(p)).sum() + 0.0)


def miller_madow_entropy(dist: EmpiricalDistribution) -> float:
    """Plug-in entropy plus the (support - 1) / (2n) bias correction."""
    return plugin_entropy(dist) + (dist.support_size - 1) / (2.0 * dist.total)


def chao_shen_entropy(dist: EmpiricalDistribution) -> float:
    """Coverage-adjusted Horvitz-Thompson entropy.

    Sample coverage is estimated as C = 1 - f1/n with f1 the singleton count
    (f1 -> n-1 when every symbol is a singleton, the standard guard); each
    coverage-scaled frequency p = C*c/n then contributes
    -p ln p / (1 - (1-p)^n).
    """
    counts = dist.frequencies()
    n = dist.total
    f1 = int((counts == 1).sum())
    if f1 == n:
        f1 = n - 1
    coverage = 1.0 - f1 / n
    p = coverage * counts / n
    inclusion = 1.0 - (1.0 - p) ** n
    return float(-(p * np.log(p) / inclusion).sum())


def marginal_h1(column: Sequence[int], alphabet_size: int) -> float:
    """Miller-Madow estimate of a single component's marginal entropy.

    This is the chain anchor of the neural joint estimator: the remaining
    components are handled by trained classifiers, the first by a classical
    estimator with a bias guarantee.
    """
    column = np.asarray(column)
    if column.size == 0:
        raise ValueError("column must be nonempty")
    if column.size and (column.min() < 0 or column.max() >= alphabet_size):
        raise ValueError("symbol out of range for the alphabet")
    return miller_madow_entropy(EmpiricalDistribution.from_symbols(column))


@dataclass(frozen=True)
class TermDiagnostics:
    """Training record of one chain term."""

    epochs_run: int
    best_epoch: int
    holdout_ce: float | None = None


@dataclass(frozen=True)
class EntropyEstimate:
    """A joint (or conditional joint) entropy estimate in nats.

    ``component_terms`` holds the per-component contributions whose sum is
    ``value_nats``: for chain-rule methods the marginal term followed by one
    minimized classifier CE per remaining component.
    """

    value_nats: float
    component_terms: tuple[float, ...]
    method: str
    diagnostics: tuple[TermDiagnostics, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "component_terms", tuple(float(t) for t in self.component_terms))
        if abs(self.value_nats - sum(self.component_terms)) > 1e-9:
            raise ValueError("value_nats must equal the sum of component_terms")
        if self.value_nats < -1e-9:
            raise ValueError("entropy estimates are nonnegative")
