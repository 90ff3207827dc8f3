"""Deterministic pairwise summation.

The association order depends only on the array length, never on how work
was split between threads, so sums are bit-reproducible.
"""
import numpy as np


def pairwise_sum(values) -> float:
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        return 0.0
    while v.size > 1:
        if v.size % 2:
            v = np.append(v, 0.0)
        v = v[0::2] + v[1::2]
    return float(v[0])


def pairwise_sum_rows(values) -> np.ndarray:
    """Pairwise sums down axis 0 of a 2-D array."""
    v = np.asarray(values, dtype=float)
    if v.shape[0] == 0:
        return np.zeros(v.shape[1:])
    while v.shape[0] > 1:
        if v.shape[0] % 2:
            v = np.concatenate([v, np.zeros((1,) + v.shape[1:])])
        v = v[0::2] + v[1::2]
    return v[0]
