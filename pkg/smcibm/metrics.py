"""Error metrics and trial aggregation."""
import math
from typing import Hashable, Mapping, Sequence, Tuple

import numpy as np


def mae(reference: Mapping[Hashable, float], estimate: Mapping[Hashable, float]) -> float:
    """Mean absolute componentwise difference over identical key sets."""
    if set(reference) != set(estimate):
        missing = set(reference) ^ set(estimate)
        raise ValueError(f"Key sets differ; mismatched keys: {sorted(map(str, missing))[:5]}")
    if not reference:
        return 0.0
    return float(np.mean([abs(reference[key] - estimate[key]) for key in reference]))


def mean_and_stderr(values: Sequence[float]) -> Tuple[float, float]:
    """Mean and standard error of the mean, ignoring NaN entries."""
    data = np.asarray([v for v in values if not math.isnan(v)], dtype=np.float64)
    if data.size == 0:
        return math.nan, math.nan
    if data.size == 1:
        return float(data[0]), 0.0
    return float(data.mean()), float(data.std(ddof=1) / math.sqrt(data.size))
