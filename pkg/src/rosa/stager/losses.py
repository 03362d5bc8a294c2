"""Staging losses: weighted focal classification, temporal-change penalty,
minimum-duration penalty and a linear-chain CRF negative log-likelihood."""
from __future__ import annotations

import numpy as np

from ..autodiff import Tensor, log_softmax, logsumexp, softmax

# minimum credible stage duration (s); deeper consolidation for W/R/N3
DEFAULT_T_MIN = np.array([60.0, 60.0, 30.0, 30.0, 60.0])


def focal_loss(logits: Tensor, truth: np.ndarray,
               class_weights: np.ndarray | None = None) -> Tensor:
    """Mean of -w_s (1 - p_s)^2 log p_s over epochs, p = softmax per row."""
    n = logits.shape[0]
    if class_weights is None:
        class_weights = np.ones(logits.shape[1])
    logp = log_softmax(logits, axis=1)
    rows = np.arange(n)
    lp = logp[rows, truth]
    p = lp.exp()
    w = Tensor(class_weights[truth])
    one = Tensor(np.ones(n))
    return (w * (one - p) * (one - p) * lp).sum() * (-1.0 / n)


def change_loss(logits: Tensor) -> Tensor:
    """Mean squared L2 distance between consecutive logit rows."""
    n = logits.shape[0]
    if n < 2:
        return Tensor(0.0)
    d = logits[1:] - logits[:-1]
    return (d * d).sum() / (n - 1)


def duration_loss(logits: Tensor, t_min: np.ndarray | None = None,
                  d: float = 30.0, printed_recurrence: bool = False) -> Tensor:
    """Penalize leaving a stage before its accumulated expected duration
    reaches the per-stage minimum.

    The credit C for stage i carried into epoch n follows
    C_n = p_{n-1} (C_{n-1} + d) + (1 - p_{n-1}) d, starting at zero; with
    ``printed_recurrence`` the second factor uses (1 - C_{n-1}) instead.
    """
    if t_min is None:
        t_min = DEFAULT_T_MIN
    t = Tensor(np.asarray(t_min, dtype=float))
    probs = softmax(logits, axis=1)
    n = logits.shape[0]
    c = Tensor(np.zeros(logits.shape[1]))
    one = Tensor(np.ones(logits.shape[1]))
    total = Tensor(0.0)
    for i in range(n):
        p = probs[i]
        total = total + ((t - c).relu() * (one - p)).sum()
        gate = c if printed_recurrence else p
        c = p * (c + d) + (one - gate) * d
    return total


def crf_score(logits: Tensor, transitions: Tensor, states: np.ndarray) -> Tensor:
    """Path score: sum of chosen logits plus transition scores."""
    n = logits.shape[0]
    score = logits[np.arange(n), states].sum()
    if n > 1:
        score = score + transitions[states[:-1], states[1:]].sum()
    return score


def crf_log_partition(logits: Tensor, transitions: Tensor) -> Tensor:
    """log sum over all state sequences of exp(path score), computed by the
    forward algorithm in log space."""
    alpha = logits[0]
    for i in range(1, logits.shape[0]):
        alpha = logsumexp(alpha.reshape(-1, 1) + transitions, axis=0) + logits[i]
    return logsumexp(alpha)


def crf_loss(logits: Tensor, transitions: Tensor, states: np.ndarray) -> Tensor:
    """Negative log-likelihood of the truth sequence under the chain model."""
    return crf_log_partition(logits, transitions) - crf_score(logits, transitions, states)


def viterbi_decode(logits: np.ndarray, transitions: np.ndarray) -> np.ndarray:
    """Most probable state sequence; ties resolve toward the lower index
    (argmax takes the first maximum)."""
    n, k = logits.shape
    score = logits[0].astype(float).copy()
    back = np.zeros((n, k), dtype=int)
    for i in range(1, n):
        cand = score[:, None] + transitions
        back[i] = np.argmax(cand, axis=0)
        score = cand[back[i], np.arange(k)] + logits[i]
    path = np.zeros(n, dtype=int)
    path[-1] = int(np.argmax(score))
    for i in range(n - 1, 0, -1):
        path[i - 1] = back[i, path[i]]
    return path


def total_loss(focal: Tensor, change: Tensor, duration: Tensor, crf: Tensor,
               alpha: float = 1.0, beta: float = 1.0, gamma: float = 1.0,
               eta: float = 1.0) -> Tensor:
    return focal * alpha + change * beta + duration * gamma + crf * eta
