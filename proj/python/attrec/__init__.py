"""Sequential recommendations from metric embeddings plus self-attention.

Everything lives in the compiled extension; this package just re-exports it.
"""

from ._core import (
    Dataset,
    Model,
    TrainOptions,
    __version__,
    attend,
    hit_ratio_at,
    matmul,
    mean_reciprocal_rank,
    popularity,
    relu,
    row_softmax,
    time_encoding,
    train,
)

__all__ = [
    "Dataset",
    "Model",
    "TrainOptions",
    "__version__",
    "attend",
    "hit_ratio_at",
    "matmul",
    "mean_reciprocal_rank",
    "popularity",
    "relu",
    "row_softmax",
    "time_encoding",
    "train",
]
