"""Model combination: count-weighted FedAvg, the FedYogi server step, and
the cross-cluster merge.

All functions are pure; FedYogi threads an explicit state value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from silofed.weights import ShapeMismatchError, WeightVector, linear_combine


@dataclass(frozen=True)
class FedYogiParams:
    eta: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.99
    tau: float = 1e-3

    def __post_init__(self):
        if not (self.eta > 0 and self.tau > 0):
            raise ValueError("eta and tau must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")


@dataclass(frozen=True)
class FedYogiState:
    """First/second moments plus hyperparameters; v stays elementwise >= 0."""

    m: WeightVector
    v: WeightVector
    params: FedYogiParams

    @classmethod
    def fresh(cls, shape, params: FedYogiParams = FedYogiParams()):
        total = sum(r * c for r, c in shape)
        m = WeightVector(np.zeros(total), shape)
        v = WeightVector(np.full(total, params.tau ** 2), shape)
        return cls(m, v, params)


def fedavg(models, counts) -> WeightVector:
    """Count-weighted mean: sum of (n_i / sum n) * w_i, left to right."""
    models = list(models)
    counts = list(counts)
    if not models:
        raise ValueError("fedavg needs at least one model")
    if len(models) != len(counts):
        raise ValueError("models and counts must align")
    if any(c <= 0 for c in counts):
        raise ValueError("counts must be positive")
    total = sum(counts)
    return linear_combine([(w, c / total) for w, c in zip(models, counts)])


def fedyogi_step(state: FedYogiState, current: WeightVector,
                 pseudo_grad: WeightVector):
    """One adaptive server step on the pseudo-gradient delta.

    m <- b1*m + (1-b1)*delta
    v <- v - (1-b2)*delta^2 * sign(v - delta^2)
    x <- x + eta * m / (sqrt(v) + tau)

    Returns (new state, new weights). A zero delta with zero first moment
    is an exact fixed point.
    """
    shape = current.shape
    for w in (state.m, state.v, pseudo_grad):
        if w.shape != shape:
            raise ShapeMismatchError(f"{w.shape} != {shape}")
    p = state.params
    delta = pseudo_grad.values
    d2 = delta * delta
    m = p.beta1 * state.m.values + (1.0 - p.beta1) * delta
    v = state.v.values - (1.0 - p.beta2) * d2 * np.sign(state.v.values - d2)
    x = current.values + p.eta * m / (np.sqrt(v) + p.tau)
    new_state = FedYogiState(WeightVector(m, shape), WeightVector(v, shape), p)
    return new_state, WeightVector(x, shape)


def merge_global(local: WeightVector, selected) -> WeightVector:
    """Uniform average of {local} + selected; selected may be empty.

    Callers wanting bit-determinism must pass `selected` in a canonical
    order (the simulator sorts by content id).
    """
    selected = list(selected)
    k = len(selected) + 1
    return linear_combine([(local, 1.0 / k)] + [(w, 1.0 / k) for w in selected])
