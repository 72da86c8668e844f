"""Numpy reference implementation of the skip-gram SGD epoch.

Semantically identical to the compiled kernel; kept simple on purpose so
it can serve as the correctness reference in backend-agreement tests.
"""

import math

import numpy as np


def sgns_epoch(
    w_in: np.ndarray,
    w_out: np.ndarray,
    centers: np.ndarray,
    contexts: np.ndarray,
    negatives: np.ndarray,
    lr0: float,
    lr_min: float,
    step0: int,
    total_steps: int,
) -> None:
    """One pass of skip-gram negative-sampling SGD, updating in place.

    Pair i trains center `centers[i]` against `contexts[i]` (label 1) and
    `negatives[i]` (label 0). The learning rate decays linearly from lr0 at
    global step 0 to lr_min at step total_steps - 1.
    """
    denom = float(total_steps - 1) if total_steps > 1 else 1.0
    span = lr_min - lr0
    n_neg = negatives.shape[1]
    for i in range(len(centers)):
        lr = lr0 + span * (step0 + i) / denom
        if lr < lr_min:
            lr = lr_min
        u = w_in[centers[i]]
        acc = np.zeros_like(u)
        for t in range(n_neg + 1):
            target = contexts[i] if t == 0 else negatives[i, t - 1]
            label = 1.0 if t == 0 else 0.0
            v = w_out[target]
            x = float(u @ v)
            if x > 50.0:
                x = 50.0
            elif x < -50.0:
                x = -50.0
            g = lr * (label - 1.0 / (1.0 + math.exp(-x)))
            acc += g * v
            v += g * u
        u += acc
