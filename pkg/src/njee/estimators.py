"""Chain-rule neural entropy estimators and the information measures built on them.

The joint entropy of a d-component discrete vector is estimated as a classical
marginal estimate for the first component plus one minimized classifier
cross-entropy per remaining component given its prefix; the conditional
variant conditions every term (including the first) on an external variable.
Differences of these estimates yield mutual information, conditional mutual
information and, over lag embeddings, transfer entropy.

Each chain term is an independent training run with its own derived seed, so
terms can be trained concurrently and results are reproducible regardless of
scheduling. Estimates are reported in nats.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .discrete import DiscreteSample, EntropyEstimate, TermDiagnostics, marginal_h1
from .nn import EncodedDataset, TrainConfig, TrainingDivergedError, train_classifier
from .rng import derive_seed, make_rng


@dataclass(frozen=True)
class ChainSpec:
    """One chain-rule decomposition job: which sample's components are
    predicted, what conditions every term, and how the classifiers train."""

    target_sample: DiscreteSample
    conditioning_sample: DiscreteSample | None
    train_config: TrainConfig

    def __post_init__(self) -> None:
        if (
            self.conditioning_sample is not None
            and self.conditioning_sample.n != self.target_sample.n
        ):
            raise ValueError("conditioning rows must match target rows")

    def term_dataset(self, m: int, rows: np.ndarray | None = None) -> EncodedDataset:
        """Encoded dataset for chain term m (1-based): predict component m
        from the conditioning blocks followed by components 1..m-1."""
        target = self.target_sample
        cond = self.conditioning_sample
        cols = []
        sizes: tuple[int, ...] = ()
        if cond is not None:
            cols.append(cond.data)
            sizes += cond.alphabet_sizes
        if m > 1:
            cols.append(target.data[:, : m - 1])
            sizes += target.alphabet_sizes[: m - 1]
        if not cols:
            raise ValueError("term 1 without conditioning has no classifier inputs")
        codes = np.hstack(cols)
        labels = target.column(m - 1)
        if rows is not None:
            codes = codes[rows]
            labels = labels[rows]
        num_classes = max(target.alphabet_sizes[m - 1], 2)
        return EncodedDataset(labels, num_classes, codes=codes, alphabet_sizes=sizes)

    def term_config(self, m: int) -> TrainConfig:
        role = 1 if self.conditioning_sample is None else 2
        return replace(self.train_config, seed=derive_seed(self.train_config.seed, role, m))


def _train_term(spec: ChainSpec, m: int, holdout_fraction: float):
    """Train chain term m; returns (m, min_ce, diagnostics)."""
    config = spec.term_config(m)
    rows = None
    holdout_rows = None
    if holdout_fraction > 0:
        n = spec.target_sample.n
        order = make_rng(config.seed, 9).permutation(n)
        n_holdout = max(1, int(round(holdout_fraction * n)))
        if n_holdout >= n:
            raise ValueError("holdout fraction leaves no training rows")
        holdout_rows = order[:n_holdout]
        rows = order[n_holdout:]
    data = spec.term_dataset(m, rows)
    try:
        model, min_ce, history = train_classifier(data, config)
    except TrainingDivergedError as err:
        raise TrainingDivergedError(f"chain term {m}: {err}") from err
    holdout_ce = None
    if holdout_rows is not None:
        holdout_ce = spec.term_dataset(m, holdout_rows).full_ce(model, config.prob_floor)
    diag = TermDiagnostics(
        epochs_run=len(history),
        best_epoch=int(np.argmin(history)),
        holdout_ce=holdout_ce,
    )
    return m, float(min_ce), diag


def _run_terms(
    spec: ChainSpec, term_indices: list[int], jobs: int, holdout_fraction: float
) -> list[tuple[float, TermDiagnostics]]:
    if jobs > 1 and len(term_indices) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(_train_term, spec, m, holdout_fraction) for m in term_indices
            ]
            results = {m: (ce, diag) for m, ce, diag in (f.result() for f in futures)}
    else:
        results = {}
        for m in term_indices:
            _, ce, diag = _train_term(spec, m, holdout_fraction)
            results[m] = (ce, diag)
    return [results[m] for m in term_indices]


def njee(
    sample: DiscreteSample,
    config: TrainConfig | None = None,
    jobs: int = 1,
    holdout_fraction: float = 0.0,
) -> EntropyEstimate:
    """Joint entropy estimate: marginal term for component 1 plus one
    minimized classifier CE per component m >= 2 given components 1..m-1.

    Trains exactly d-1 classifiers; with d = 1 the estimate degenerates to the
    marginal term alone. A positive ``holdout_fraction`` trains on the
    complement and attaches the held-out CE per term as a diagnostic (the
    reported value stays the in-sample minimum).
    """
    config = config or TrainConfig()
    if sample.n < 2:
        raise ValueError("need at least 2 observations")
    h1 = marginal_h1(sample.column(0), sample.alphabet_sizes[0])
    terms = [h1]
    diagnostics: list[TermDiagnostics] = []
    if sample.d > 1:
        spec = ChainSpec(sample, None, config)
        for ce, diag in _run_terms(spec, list(range(2, sample.d + 1)), jobs, holdout_fraction):
            terms.append(ce)
            diagnostics.append(diag)
    return EntropyEstimate(
        value_nats=float(sum(terms)),
        component_terms=tuple(terms),
        method="njee",
        diagnostics=tuple(diagnostics),
    )


def cnjee(
    target: DiscreteSample,
    conditioning: DiscreteSample,
    config: TrainConfig | None = None,
    jobs: int = 1,
    holdout_fraction: float = 0.0,
) -> EntropyEstimate:
    """Conditional joint entropy estimate: every chain term, including the
    first, is a classifier additionally conditioned on `conditioning`.

    Trains exactly d classifiers, d being the target's component count.
    """
    config = config or TrainConfig()
    if target.n < 2:
        raise ValueError("need at least 2 observations")
    spec = ChainSpec(target, conditioning, config)
    terms: list[float] = []
    diagnostics: list[TermDiagnostics] = []
    for ce, diag in _run_terms(spec, list(range(1, target.d + 1)), jobs, holdout_fraction):
        terms.append(ce)
        diagnostics.append(diag)
    return EntropyEstimate(
        value_nats=float(sum(terms)),
        component_terms=tuple(terms),
        method="cnjee",
        diagnostics=tuple(diagnostics),
    )


@dataclass(frozen=True)
class MiEstimate:
    """Mutual information as a difference of entropy estimates."""

    value_nats: float
    h_x: EntropyEstimate
    h_x_given_y: EntropyEstimate

    def __post_init__(self) -> None:
        if abs(self.value_nats - (self.h_x.value_nats - self.h_x_given_y.value_nats)) > 1e-9:
            raise ValueError("value_nats must equal h_x - h_x_given_y")

    @property
    def clamped(self) -> float:
        """Convenience nonnegative reading; the raw difference may dip below 0."""
        return max(0.0, self.value_nats)


@dataclass(frozen=True)
class CmiEstimate:
    """Conditional mutual information as a difference of conditional entropies."""

    value_nats: float
    h_x_given_z: EntropyEstimate
    h_x_given_yz: EntropyEstimate

    def __post_init__(self) -> None:
        diff = self.h_x_given_z.value_nats - self.h_x_given_yz.value_nats
        if abs(self.value_nats - diff) > 1e-9:
            raise ValueError("value_nats must equal h_x_given_z - h_x_given_yz")

    @property
    def clamped(self) -> float:
        return max(0.0, self.value_nats)


def mi(
    x: DiscreteSample,
    y: DiscreteSample,
    config: TrainConfig | None = None,
    jobs: int = 1,
) -> MiEstimate:
    """I(X;Y) as joint entropy of X minus conditional entropy of X given Y.

    The two sides train disjoint, freshly initialized classifiers (no model
    reuse); the raw difference is reported unclamped.
    """
    if x.n != y.n:
        raise ValueError("x and y must have matching row counts")
    config = config or TrainConfig()
    h_x = njee(x, config, jobs=jobs)
    h_x_given_y = cnjee(x, y, config, jobs=jobs)
    return MiEstimate(
        value_nats=h_x.value_nats - h_x_given_y.value_nats,
        h_x=h_x,
        h_x_given_y=h_x_given_y,
    )


def cmi(
    x: DiscreteSample,
    y: DiscreteSample,
    z: DiscreteSample,
    config: TrainConfig | None = None,
    jobs: int = 1,
) -> CmiEstimate:
    """I(X;Y|Z) as a difference of two conditional entropy estimates, the
    second conditioning on the column concatenation of y and z."""
    if not (x.n == y.n == z.n):
        raise ValueError("x, y and z must have matching row counts")
    config = config or TrainConfig()
    h_x_given_z = cnjee(x, z, config, jobs=jobs)
    h_x_given_yz = cnjee(x, y.concat(z), config, jobs=jobs)
    return CmiEstimate(
        value_nats=h_x_given_z.value_nats - h_x_given_yz.value_nats,
        h_x_given_z=h_x_given_z,
        h_x_given_yz=h_x_given_yz,
    )
