"""Inverse-probability weighted aggregation at the UAV and at the BS."""
from __future__ import annotations

import numpy as np

from ..errors import InvalidArgumentError


def _weighted_step(prev: np.ndarray, models: np.ndarray, weights, indicators,
                   probabilities) -> np.ndarray:
    models = np.atleast_2d(np.asarray(models, dtype=float))
    weights = np.asarray(weights, dtype=float)
    indicators = np.asarray(indicators, dtype=float)
    probabilities = np.asarray(probabilities, dtype=float)
    n = len(models)
    if not (weights.shape == indicators.shape == probabilities.shape == (n,)):
        raise InvalidArgumentError("one weight, indicator and probability per model")
    if np.any(probabilities <= 0) or np.any(probabilities > 1):
        raise InvalidArgumentError("success probabilities must lie in (0, 1]")
    coef = weights * indicators / probabilities
    # matrix product sums in device-index order for a given shape
    return prev + coef @ (models - prev)


def uav_aggregate(prev_v: np.ndarray, member_models: np.ndarray, p_over_pu,
                  indicators, p_edge) -> np.ndarray:
    """v <- v + sum_k (p_k/p_u) / P_edge_k * I_k * (w_k - v)."""
    return _weighted_step(np.asarray(prev_v, dtype=float), member_models, p_over_pu,
                          indicators, p_edge)


def bs_aggregate(prev_w: np.ndarray, uav_models: np.ndarray, p_u, indicators,
                 p_back) -> np.ndarray:
    """w <- w + sum_u p_u / P_back_u * I_u * (v_u - w)."""
    return _weighted_step(np.asarray(prev_w, dtype=float), uav_models, p_u, indicators, p_back)
