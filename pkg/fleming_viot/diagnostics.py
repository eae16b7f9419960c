"""
Summaries of a rebirth log.
"""
import logging
from typing import Optional

import numpy as np

from utils.exceptions import FlemingViotError

logger = logging.getLogger(__name__)


def fv_jump_time_diagnostic(log: list, t_end: float, s: float = 0.0) -> dict:
    """Event count, smallest gap between consecutive rebirths and rebirths per unit time.

    The series counts events in [s + k, s + k + 1), the last interval being
    truncated at t_end and its count rescaled to a rate.
    """
    times = np.array([event.time for event in log], dtype=float)
    gaps = np.diff(times)
    if gaps.size and not np.all(gaps > 0):
        raise FlemingViotError('Rebirth times must be strictly increasing.', code='unordered_log')

    edges = np.arange(s, t_end, 1.0)
    edges = np.append(edges, t_end) if edges.size else np.array([s, t_end])
    rates = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi <= lo:
            continue
        count = int(np.sum((times >= lo) & (times < hi) if hi < t_end else (times >= lo) & (times <= hi)))
        rates.append({'start': float(lo), 'end': float(hi), 'count': count, 'rate': count / float(hi - lo)})

    return {
        'count': int(times.size),
        'min_gap': float(gaps.min()) if gaps.size else None,
        'rate_per_unit_time': rates,
    }


def rate_stability(diagnostic: dict, start: float, end: float) -> Optional[float]:
    """max/min ratio of the unit-interval rates lying inside [start, end]"""
    rates = [
        row['rate'] for row in diagnostic['rate_per_unit_time']
        if row['start'] >= start and row['end'] <= end
    ]
    if not rates or min(rates) == 0:
        return None
    return max(rates) / min(rates)
