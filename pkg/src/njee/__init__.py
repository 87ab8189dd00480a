"""Neural joint entropy estimation and derived information measures."""

from .discrete import (
    DiscreteSample,
    EmpiricalDistribution,
    EntropyEstimate,
    chao_shen_entropy,
    compose,
    decompose,
    marginal_h1,
    miller_madow_entropy,
    plugin_entropy,
)
from .estimators import CmiEstimate, MiEstimate, cmi, cnjee, mi, njee
from .nn import ClassifierModel, EncodedBatch, EncodedDataset, TrainConfig, train_classifier
from .timeseries import (
    BinnerSpec,
    LagEmbedding,
    SeriesFrame,
    embed,
    rolling_te,
    ternary_bin,
    to_returns,
    transfer_entropy,
)

__version__ = "0.1.0"

__all__ = [
    "BinnerSpec",
    "ClassifierModel",
    "CmiEstimate",
    "DiscreteSample",
    "EmpiricalDistribution",
    "EncodedBatch",
    "EncodedDataset",
    "EntropyEstimate",
    "LagEmbedding",
    "MiEstimate",
    "SeriesFrame",
    "TrainConfig",
    "chao_shen_entropy",
    "cmi",
    "cnjee",
    "compose",
    "decompose",
    "embed",
    "marginal_h1",
    "mi",
    "miller_madow_entropy",
    "njee",
    "plugin_entropy",
    "rolling_te",
    "ternary_bin",
    "to_returns",
    "train_classifier",
    "transfer_entropy",
]
