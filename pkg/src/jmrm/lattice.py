"""Exact joint inference over (intent, slot sequence) pairs.

The joint score of a pair is

    R(y, t) = lam * f_l[y] + sum_i ( f_e(t_i | y) + f_t(t_i | t_{i-1}) )

with f_e the relation-masked slot emissions and f_t the transition mask
(START row for t_0).  The partition function is computed exactly by one
log-space forward pass per intent; marginals come from forward-backward.
Masked configurations carry IEEE -inf, whose exp is exactly 0, so they
contribute exactly zero probability mass and never produce NaN: the
logsumexp below subtracts the max only when it is finite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .masks import NEG_INF, RelationMask, TransitionMask, apply_relation_mask


class InfeasibleGold(ValueError):
    """The gold (intent, slot sequence) pair is masked to -inf."""


class InfeasibleLattice(RuntimeError):
    """No feasible (intent, slot sequence) pair exists; cannot happen with a forced-O mask."""


def logsumexp(a: np.ndarray, axis: int = -1) -> np.ndarray:
    """log(sum(exp(a))) with max-subtraction; all -inf reduces to -inf, never NaN."""
    a = np.asarray(a, dtype=float)
    m = np.max(a, axis=axis, keepdims=True)
    safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - safe), axis=axis))
    return out + np.squeeze(safe, axis=axis)


@dataclass
class JointScoreInputs:
    f_l: np.ndarray  # (Y,)
    f_o: np.ndarray  # (m, T)
    rm: RelationMask
    tm: TransitionMask
    lam: float = 1.0

    def __post_init__(self):
        self.f_l = np.asarray(self.f_l, dtype=float)
        self.f_o = np.asarray(self.f_o, dtype=float)
        y, (m, t) = self.f_l.shape[0], self.f_o.shape
        if self.rm.rm.shape != (y, t):
            raise ValueError(f"relation mask shape {self.rm.rm.shape} != ({y}, {t})")
        if self.tm.trans.shape != (t, t) or self.tm.start.shape != (t,):
            raise ValueError("transition mask shape mismatch")
        if not np.isfinite(self.lam):
            raise ValueError("lam must be finite")

    @property
    def n_intents(self) -> int:
        return self.f_l.shape[0]

    @property
    def n_positions(self) -> int:
        return self.f_o.shape[0]

    @property
    def n_slots(self) -> int:
        return self.f_o.shape[1]


@dataclass
class JointPosterior:
    log_z: float
    intent_marginals: np.ndarray  # (Y,) q(y)
    slot_unary_marginals: np.ndarray  # (Y, m, T) joint P(intent=y, t_i=o)


def joint_score(y: int, t: np.ndarray, jin: JointScoreInputs) -> float:
    """R(y, t); -inf iff any emission or transition factor is masked."""
    t = np.asarray(t, dtype=int)
    if t.shape[0] != jin.n_positions:
        raise ValueError(f"slot sequence length {t.shape[0]} != {jin.n_positions}")
    fe = apply_relation_mask(jin.f_o, jin.rm, y)
    # association mirrors the forward recursion so degenerate one-path
    # lattices give bit-identical scores
    s = jin.tm.start[t[0]] + fe[0, t[0]]
    for i in range(1, t.shape[0]):
        s = s + jin.tm.trans[t[i - 1], t[i]]
        s = s + fe[i, t[i]]
    return float(jin.lam * jin.f_l[y] + s)


def _forward(fe: np.ndarray, tm: TransitionMask) -> np.ndarray:
    """alpha[i, o] = log sum over prefixes ending in o at position i."""
    m, t = fe.shape
    alpha = np.empty((m, t))
    alpha[0] = tm.start + fe[0]
    for i in range(1, m):
        alpha[i] = logsumexp(alpha[i - 1][:, None] + tm.trans, axis=0) + fe[i]
    return alpha


def _backward(fe: np.ndarray, tm: TransitionMask) -> np.ndarray:
    """beta[i, o] = log sum over suffix completions given t_i = o."""
    m, t = fe.shape
    beta = np.empty((m, t))
    beta[m - 1] = 0.0
    for i in range(m - 2, -1, -1):
        beta[i] = logsumexp(tm.trans + (fe[i + 1] + beta[i + 1])[None, :], axis=1)
    return beta


def log_partition(jin: JointScoreInputs) -> JointPosterior:
    """Exact log Z plus intent marginals q(y) and joint unary marginals.

    slot_unary_marginals[y, i, o] is the joint probability of {intent = y
    and t_i = o}; each (y, i) slice sums to q(y), and cells masked by the
    relation mask are exactly zero.
    """
    y_n, m, t_n = jin.n_intents, jin.n_positions, jin.n_slots
    log_joint = np.empty(y_n)
    alphas = []
    betas = []
    for y in range(y_n):
        fe = apply_relation_mask(jin.f_o, jin.rm, y)
        alpha = _forward(fe, jin.tm)
        log_z_slot = logsumexp(alpha[m - 1], axis=0)
        log_joint[y] = jin.lam * jin.f_l[y] + log_z_slot
        alphas.append(alpha)
        betas.append(None if log_z_slot == NEG_INF else (_backward(fe, jin.tm), log_z_slot))
    log_z = float(logsumexp(log_joint, axis=0))
    if log_z == NEG_INF:
        raise InfeasibleLattice("every (intent, slot sequence) pair is masked")
    q = np.exp(log_joint - log_z)
    unary = np.zeros((y_n, m, t_n))
    for y in range(y_n):
        if betas[y] is None:
            continue  # infeasible intent: zero mass
        beta, log_z_slot = betas[y]
        within = np.exp(alphas[y] + beta - log_z_slot)
        unary[y] = q[y] * within
    return JointPosterior(log_z=log_z, intent_marginals=q, slot_unary_marginals=unary)


def nll_loss(
    gold_y: int, gold_t: np.ndarray, jin: JointScoreInputs
) -> tuple[float, JointPosterior]:
    """Cross-entropy of the gold pair: log Z - R(gold); always >= 0."""
    r = joint_score(gold_y, gold_t, jin)
    if r == NEG_INF:
        raise InfeasibleGold(
            f"gold pair (intent {gold_y}, slots {list(np.asarray(gold_t))}) is masked"
        )
    post = log_partition(jin)
    return max(0.0, post.log_z - r), post


def loss_gradients(
    gold_y: int, gold_t: np.ndarray, post: JointPosterior, jin: JointScoreInputs
) -> tuple[np.ndarray, np.ndarray]:
    """Exact gradients of the joint cross-entropy w.r.t. f_l and f_o.

    d L / d f_l[y]    = lam * (q(y) - 1[y = gold])
    d L / d f_o[i][o] = sum_y mu_y(i, o) - 1[gold_t_i = o]
    Masked cells have mu = 0, so they receive zero gradient through the
    partition term.
    """
    gold_t = np.asarray(gold_t, dtype=int)
    d_fl = jin.lam * post.intent_marginals.copy()
    d_fl[gold_y] -= jin.lam
    d_fo = post.slot_unary_marginals.sum(axis=0)
    d_fo[np.arange(gold_t.shape[0]), gold_t] -= 1.0
    return d_fl, d_fo


def _suffix_max(fe: np.ndarray, tm: TransitionMask) -> np.ndarray:
    """sm[i, o] = best completion score from position i+1 on, given t_i = o."""
    m, t = fe.shape
    sm = np.empty((m, t))
    sm[m - 1] = 0.0
    for i in range(m - 2, -1, -1):
        sm[i] = np.max(tm.trans + (fe[i + 1] + sm[i + 1])[None, :], axis=1)
    return sm


def viterbi_decode(jin: JointScoreInputs) -> tuple[int, np.ndarray, float]:
    """Highest-scoring feasible (intent, slot sequence) pair.

    Ties break to the lowest intent id, then the lexicographically smallest
    slot-id sequence; the greedy forward pass below picks, at each
    position, the smallest slot id that still admits an optimal completion
    (np.argmax returns the first maximizer).  The returned score is
    recomputed with joint_score, so it matches it bit-for-bit.
    """
    m = jin.n_positions
    suffix = []
    first_cand = []
    totals = np.empty(jin.n_intents)
    for y in range(jin.n_intents):
        fe = apply_relation_mask(jin.f_o, jin.rm, y)
        sm = _suffix_max(fe, jin.tm)
        cand0 = jin.tm.start + fe[0] + sm[0]
        suffix.append((fe, sm))
        first_cand.append(cand0)
        totals[y] = jin.lam * jin.f_l[y] + np.max(cand0)
    if np.max(totals) == NEG_INF:
        raise InfeasibleLattice("every (intent, slot sequence) pair is masked")
    best_y = int(np.argmax(totals))
    fe, sm = suffix[best_y]
    path = np.empty(m, dtype=int)
    path[0] = int(np.argmax(first_cand[best_y]))
    acc = jin.tm.start[path[0]] + fe[0, path[0]]
    for i in range(1, m):
        cand = acc + jin.tm.trans[path[i - 1]] + fe[i] + sm[i]
        path[i] = int(np.argmax(cand))
        acc = acc + jin.tm.trans[path[i - 1], path[i]] + fe[i, path[i]]
    return best_y, path, joint_score(best_y, path, jin)
