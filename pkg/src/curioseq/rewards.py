"""Reward assembly: terminal linguistic rewards, temporal-difference returns,
advantage shaping and the policy-gradient surrogate loss."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .kernel import Tensor, add_n, scale
from .metrics import IdfTable, bleu, cider_single
from .policy import RolloutTrace


@dataclass
class RewardTrace:
    """Per-step rewards and shaped advantages for one episode."""

    extrinsic: np.ndarray
    intrinsic: np.ndarray
    q_values: np.ndarray
    advantage: np.ndarray
    bleu4: float
    cider: float


def terminal_reward_vector(reward: float, length: int) -> np.ndarray:
    if length < 1:
        raise ValueError("episode length must be >= 1")
    out = np.zeros(length)
    out[-1] = reward
    return out


def scored_reward(candidate: Sequence[str], references: Sequence[Sequence[str]],
                  idf: IdfTable, bleu_weight: float, cider_weight: float,
                  length: int) -> tuple[np.ndarray, float, float]:
    """Terminal reward vector plus the individual metric values."""
    if length < 1:
        raise ValueError("candidate must be non-empty")
    if candidate:
        bleu4 = bleu([(candidate, references)], max_n=4, mode="sentence")
        cdr = cider_single(candidate, references, idf)
    else:
        bleu4, cdr = 0.0, 0.0
    vec = terminal_reward_vector(bleu_weight * bleu4 + cider_weight * cdr, length)
    return vec, bleu4, cdr


def extrinsic_reward(candidate: Sequence[str], references: Sequence[Sequence[str]],
                     idf: IdfTable, bleu_weight: float = 1.0,
                     cider_weight: float = 2.0,
                     length: int | None = None) -> np.ndarray:
    """Zeros except the final step, which carries the weighted sum of the
    smoothed sentence BLEU-4 and the TF-IDF consensus score of the finished
    sequence. length defaults to the candidate length; pass the episode
    length when control tokens were stripped from the candidate."""
    n = len(candidate) if length is None else length
    vec, _, _ = scored_reward(candidate, references, idf, bleu_weight, cider_weight, n)
    return vec


def td_lambda_q(rewards: Sequence[float], gamma: float, lam: float) -> np.ndarray:
    """Per-step return estimates Q(s_t) mixing truncated j-step returns:

        Q_t = (1 - lam) * sum_{j=0}^{T-t} lam^j G_{t:t+j} + lam^{T-t} G_t

    with G_{t:t+j} the gamma-discounted sum of rewards t..t+j and G_t the
    full-horizon discounted return from t (indices here are 1-based; the
    implementation is 0-based).
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must be in [0, 1]")
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must be in [0, 1]")
    r = np.asarray(rewards, dtype=np.float64)
    t_len = r.shape[0]
    q = np.zeros(t_len)
    for t in range(t_len):
        horizon = t_len - 1 - t
        g = 0.0
        mixed = 0.0
        for j in range(horizon + 1):
            g += (gamma ** j) * r[t + j]
            mixed += (lam ** j) * g
        q[t] = (1.0 - lam) * mixed + (lam ** horizon) * g
    return q


def q_closed_form(r_terminal: float, length: int, gamma: float) -> np.ndarray:
    """The lambda=1 special case with a terminal-only reward:
    Q_t = gamma^(T-t) * r_T."""
    if length < 1:
        raise ValueError("length must be >= 1")
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must be in [0, 1]")
    exponents = np.arange(length - 1, -1, -1, dtype=np.float64)
    return (gamma ** exponents) * r_terminal


def advantages(q_values: np.ndarray, intrinsic: np.ndarray) -> np.ndarray:
    """Shaped per-step weights: the discounted extrinsic return plus the
    intrinsic bonus (additive shaping, no baseline subtraction)."""
    q_values = np.asarray(q_values, dtype=np.float64)
    intrinsic = np.asarray(intrinsic, dtype=np.float64)
    if q_values.shape != intrinsic.shape:
        raise ValueError(f"length mismatch: {q_values.shape} vs {intrinsic.shape}")
    return q_values + intrinsic


def rl_loss(trace: RolloutTrace, advantage: np.ndarray) -> Tensor:
    """Surrogate loss -sum_t A_t log pi(y_t | s_t) whose gradient is the
    advantage-weighted policy gradient. Advantages are constants."""
    advantage = np.asarray(advantage, dtype=np.float64)
    if advantage.shape != (len(trace),):
        raise ValueError(f"advantage length {advantage.shape} != trace length {len(trace)}")
    if not trace.logprob_nodes:
        raise ValueError("trace carries no log-probability nodes (recorded under no_grad?)")
    terms = [scale(node, -float(a)) for node, a in zip(trace.logprob_nodes, advantage)]
    return add_n(terms)
