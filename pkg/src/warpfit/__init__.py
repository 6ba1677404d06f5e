"""DTW, soft-DTW and an alignment-robust sequence regressor."""

from .align import backtrack, brute_force_dtw, dtw, soft_dtw, soft_dtw_grad
from .estimator import SequenceRegressor
from .evaluation import dtw_score, mse_score
from .seqcore import ParseError, UsageError, pairwise_cost, read_sequence, soft_min, write_sequence

__all__ = [
    "ParseError",
    "SequenceRegressor",
    "UsageError",
    "backtrack",
    "brute_force_dtw",
    "dtw",
    "dtw_score",
    "mse_score",
    "pairwise_cost",
    "read_sequence",
    "soft_dtw",
    "soft_dtw_grad",
    "soft_min",
    "write_sequence",
]

__version__ = "0.1.0"
