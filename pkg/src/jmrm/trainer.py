"""Episodic training on the joint loss, ablation switches, and evaluation.

Mask switches: i2s_train / msd_train govern the lattice used by the loss,
i2s_eval / msd_eval govern decoding.  A switched-off mask is replaced by an
all-permissive matrix at the same additive convention (every transition
scores 1), so toggling a mask changes feasibility only, never score
calibration.  The four (i2s, msd) train/eval combinations reproduce the
JM / JMI2S / JMMSD / JMRM ablation rows, and eval-only masks on a
mask-free-trained model give the "+RM" configuration.

Query samples whose gold (intent, slot) pair is masked out are skipped
with a counter rather than clamped: clamping would leak query labels into
the support-derived relation mask.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np

from .core import Episode, LabelSpace, Sample
from .encoder import Encoder, encoder_backward, zero_grads
from .lattice import (
    InfeasibleGold,
    JointScoreInputs,
    loss_gradients,
    logsumexp,
    nll_loss,
    viterbi_decode,
)
from .masks import (
    NEG_INF,
    RelationMask,
    TransitionMask,
    all_ones_relation_mask,
    apply_relation_mask,
    build_relation_mask,
    build_transition_mask,
    permissive_transition_mask,
)
from .metrics import EMPTY_METRICS, MetricsSummary, score
from .protonet import (
    Prototypes,
    compute_emissions,
    compute_prototypes,
    similarity_grads,
    similarity_to_protos,
)

logger = logging.getLogger(__name__)

LOSS_MODES = ("joint", "sum_sep", "seq_ce")


@dataclass(frozen=True)
class RunConfig:
    similarity_kind: str = "vpb"
    lam: float = 1.0
    batch_size: int = 4
    learning_rate: float = 1e-5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    max_steps: int = 100
    eval_every: int = 20
    seed: int = 0
    loss_mode: str = "joint"
    i2s_train: bool = True
    msd_train: bool = True
    i2s_eval: bool = True
    msd_eval: bool = True
    force_o_related: bool = True

    def __post_init__(self):
        if not 0 < self.adam_beta1 < 1 or not 0 < self.adam_beta2 < 1:
            raise ValueError("adam betas must lie in (0, 1)")
        if self.adam_eps <= 0:
            raise ValueError("adam_eps must be > 0")
        if self.batch_size < 1 or self.eval_every < 1:
            raise ValueError("batch_size and eval_every must be >= 1")
        if self.max_steps < 0:
            raise ValueError("max_steps must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.loss_mode not in LOSS_MODES:
            raise ValueError(f"unknown loss_mode {self.loss_mode!r}")


def run_config_from_dict(obj: dict) -> RunConfig:
    """Build a RunConfig from a JSON object; 'lambda' is accepted for lam."""
    obj = dict(obj)
    if "lambda" in obj:
        obj["lam"] = obj.pop("lambda")
    known = {f.name for f in fields(RunConfig)}
    unknown = set(obj) - known
    if unknown:
        raise ValueError(f"unknown run config keys: {sorted(unknown)}")
    return RunConfig(**obj)


# --- Adam -------------------------------------------------------------------


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0


def init_adam_state(params: dict[str, np.ndarray]) -> AdamState:
    return AdamState(
        m={k: np.zeros_like(a) for k, a in params.items()},
        v={k: np.zeros_like(a) for k, a in params.items()},
    )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    config: RunConfig,
) -> None:
    """One bias-corrected Adam update, in place."""
    state.t += 1
    b1, b2 = config.adam_beta1, config.adam_beta2
    for name, p in params.items():
        g = grads[name]
        state.m[name] = b1 * state.m[name] + (1 - b1) * g
        state.v[name] = b2 * state.v[name] + (1 - b2) * g * g
        m_hat = state.m[name] / (1 - b1**state.t)
        v_hat = state.v[name] / (1 - b2**state.t)
        p -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_eps)


# --- episode context ---------------------------------------------------------


@dataclass
class EpisodeContext:
    """Support-derived state shared by every query of one episode."""

    episode: Episode
    encoder: Encoder
    protos: Prototypes
    rm_true: RelationMask
    tm_true: TransitionMask
    sup_token_embs: list[np.ndarray]
    intent_members: list[list[int]]  # support indices per intent
    slot_members: list[list[tuple[int, int]]]  # (support index, position) per slot

    @property
    def ls(self) -> LabelSpace:
        return self.episode.label_space


def build_context(episode: Episode, encoder: Encoder, config: RunConfig) -> EpisodeContext:
    ls = episode.label_space
    protos = compute_prototypes(episode.support, ls, encoder)
    intent_members: list[list[int]] = [[] for _ in range(ls.n_intents)]
    slot_members: list[list[tuple[int, int]]] = [[] for _ in range(ls.n_slots)]
    sup_token_embs = []
    for n, sample in enumerate(episode.support):
        sup_token_embs.append(encoder.encode_tokens(sample.tokens))
        intent_members[sample.intent].append(n)
        for i, sid in enumerate(sample.slots):
            slot_members[sid].append((n, i))
    return EpisodeContext(
        episode=episode,
        encoder=encoder,
        protos=protos,
        rm_true=build_relation_mask(episode.support, ls, force_o=config.force_o_related),
        tm_true=build_transition_mask(ls),
        sup_token_embs=sup_token_embs,
        intent_members=intent_members,
        slot_members=slot_members,
    )


def _train_masks(ctx: EpisodeContext, config: RunConfig) -> tuple[RelationMask, TransitionMask]:
    ls = ctx.ls
    rm = ctx.rm_true if config.i2s_train else all_ones_relation_mask(ls.n_intents, ls.n_slots)
    tm = ctx.tm_true if config.msd_train else permissive_transition_mask(ls.n_slots)
    return rm, tm


def _eval_masks(ctx: EpisodeContext, config: RunConfig) -> tuple[RelationMask, TransitionMask]:
    ls = ctx.ls
    rm = ctx.rm_true if config.i2s_eval else all_ones_relation_mask(ls.n_intents, ls.n_slots)
    tm = ctx.tm_true if config.msd_eval else permissive_transition_mask(ls.n_slots)
    return rm, tm


def _softmax_ce(scores: np.ndarray, gold: int) -> tuple[float, np.ndarray]:
    """Cross-entropy of a (possibly -inf-masked) score vector; grad = p - onehot."""
    if scores[gold] == NEG_INF:
        raise InfeasibleGold(f"gold class {gold} is masked in a separate-loss term")
    log_z = logsumexp(scores, axis=0)
    p = np.exp(scores - log_z)
    grad = p.copy()
    grad[gold] -= 1.0
    return float(log_z - scores[gold]), grad


def _loss_and_emission_grads(
    query: Sample, f_l: np.ndarray, f_o: np.ndarray, ctx: EpisodeContext, config: RunConfig
) -> tuple[float, np.ndarray, np.ndarray]:
    """Configured loss plus dL/df_l and dL/df_o."""
    rm, tm = _train_masks(ctx, config)
    gold_y, gold_t = query.intent, np.asarray(query.slots, dtype=int)
    if config.loss_mode == "joint":
        jin = JointScoreInputs(f_l, f_o, rm, tm, config.lam)
        loss, post = nll_loss(gold_y, gold_t, jin)
        d_fl, d_fo = loss_gradients(gold_y, gold_t, post, jin)
        return loss, d_fl, d_fo
    if config.loss_mode == "sum_sep":
        loss, d_fl = _softmax_ce(f_l, gold_y)
        fe = apply_relation_mask(f_o, rm, gold_y)
        d_fo = np.zeros_like(f_o)
        for i in range(f_o.shape[0]):
            token_loss, g = _softmax_ce(fe[i], int(gold_t[i]))
            loss += token_loss
            d_fo[i] = np.where(np.isfinite(fe[i]), g, 0.0)
        return loss, d_fl, d_fo
    # seq_ce: independent intent CE plus a slots-only sequence CE
    loss, d_fl = _softmax_ce(f_l, gold_y)
    jin = JointScoreInputs(
        np.zeros(1),
        f_o,
        RelationMask(rm.rm[gold_y : gold_y + 1], rm.forced_o),
        tm,
        0.0,
    )
    seq_loss, post = nll_loss(0, gold_t, jin)
    _, d_fo = loss_gradients(0, gold_t, post, jin)
    return loss + seq_loss, d_fl, d_fo


def compute_loss(
    query: Sample, ctx: EpisodeContext, config: RunConfig
) -> tuple[float, dict[str, np.ndarray] | None]:
    """Loss of one query sample and, for a trainable encoder, the full
    parameter gradients (including the path through the support-derived
    prototypes).

    Raises InfeasibleGold when the gold configuration has zero probability
    under the training masks; the training loop skips and counts these.
    """
    enc = ctx.encoder
    kind = config.similarity_kind
    q_rows = enc.encode_tokens(query.tokens)
    q_utt = q_rows.mean(axis=0)
    f_l = similarity_to_protos(q_utt, ctx.protos.intent_protos, kind)
    f_o = np.stack([similarity_to_protos(r, ctx.protos.slot_protos, kind) for r in q_rows])

    loss, d_fl, d_fo = _loss_and_emission_grads(query, f_l, f_o, ctx, config)
    if not enc.is_trainable:
        return loss, None

    # chain rule through the similarities
    ds_de_l, ds_dc_l = similarity_grads(q_utt, ctx.protos.intent_protos, kind)
    d_q_utt = ds_de_l.T @ d_fl
    d_c_intent = ds_dc_l * d_fl[:, None]
    d_q_rows = np.empty_like(q_rows)
    d_c_slot = np.zeros_like(ctx.protos.slot_protos)
    for i in range(q_rows.shape[0]):
        ds_de_o, ds_dc_o = similarity_grads(q_rows[i], ctx.protos.slot_protos, kind)
        d_q_rows[i] = ds_de_o.T @ d_fo[i]
        d_c_slot += ds_dc_o * d_fo[i][:, None]

    grads = zero_grads(enc.params)
    encoder_backward(
        enc.params, enc.config, query.tokens, d_rows=d_q_rows, d_utt=d_q_utt, out=grads
    )
    # prototypes are per-class means over the support set
    n_sup = len(ctx.episode.support)
    d_sup_utt = [np.zeros(enc.config.dim) for _ in range(n_sup)]
    d_sup_rows = [np.zeros_like(e) for e in ctx.sup_token_embs]
    for l, members in enumerate(ctx.intent_members):
        share = d_c_intent[l] / len(members)
        for n in members:
            d_sup_utt[n] += share
    for o, members in enumerate(ctx.slot_members):
        share = d_c_slot[o] / len(members)
        for n, i in members:
            d_sup_rows[n][i] += share
    for n, sample in enumerate(ctx.episode.support):
        encoder_backward(
            enc.params, enc.config, sample.tokens,
            d_rows=d_sup_rows[n], d_utt=d_sup_utt[n], out=grads,
        )
    return loss, grads


# --- decoding and evaluation --------------------------------------------------


def predict_episode(
    episode: Episode, encoder: Encoder, config: RunConfig
) -> list[tuple[int, list[int]]]:
    """Decode every query of an episode with the eval-time mask settings.

    With msd_eval on, decoding is a joint Viterbi over the (relation-)
    masked lattice.  With msd_eval off, the intent is the emission argmax
    and slots are per-token argmaxes over the intent-conditioned emissions
    (the classic prototype-pipeline decoder).
    """
    ctx = build_context(episode, encoder, config)
    rm, tm = _eval_masks(ctx, config)
    predictions = []
    for query in episode.query:
        em = compute_emissions(query, ctx.protos, encoder, config.similarity_kind)
        if config.msd_eval:
            jin = JointScoreInputs(em.intent, em.slot, rm, tm, config.lam)
            y, path, _ = viterbi_decode(jin)
        else:
            y = int(np.argmax(em.intent))
            fe = apply_relation_mask(em.slot, rm, y)
            path = np.argmax(fe, axis=1)
        predictions.append((y, [int(o) for o in path]))
    return predictions


def evaluate(
    episodes: Sequence[Episode], encoder: Encoder, config: RunConfig
) -> MetricsSummary:
    """Aggregate metrics over all queries of all episodes; never updates parameters."""
    total = EMPTY_METRICS
    for episode in episodes:
        preds = predict_episode(episode, encoder, config)
        total = total.merged(score(preds, episode.query, episode.label_space))
    return total


# --- training loop -------------------------------------------------------------


@dataclass
class TrainResult:
    encoder: Encoder
    log: list[dict] = field(default_factory=list)
    best_step: int = 0
    best_dev_joint_acc: float | None = None
    skipped_queries: int = 0


def train(
    source_episodes: Sequence[Episode],
    dev_episodes: Sequence[Episode],
    encoder: Encoder,
    config: RunConfig,
) -> TrainResult:
    """Episodic training with Adam; returns the parameters with the best
    dev joint accuracy (ties keep the earlier checkpoint).

    Batches accumulate gradients over batch_size query samples.  Episodes
    are visited in a seeded shuffled order, re-shuffled each pass; the
    whole run is a pure function of (episodes, encoder init, config).
    """
    if len(source_episodes) < 1 or len(dev_episodes) < 1:
        raise ValueError("source and dev episode lists must be non-empty")

    def dev_metrics() -> MetricsSummary:
        return evaluate(dev_episodes, encoder, config)

    result = TrainResult(encoder=encoder.copy())
    first = dev_metrics()
    best_acc = -1.0 if first.joint_acc is None else first.joint_acc
    result.best_dev_joint_acc = first.joint_acc
    result.log.append({"step": 0, "event": "eval", "dev": first.to_dict(), "skipped": 0})

    if not encoder.is_trainable:
        logger.info("encoder is frozen; training is evaluation-only")
        return result
    if config.max_steps == 0:
        return result

    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(0,)))
    params = encoder.params.as_dict()
    state = init_adam_state(params)
    grads_acc = {k: np.zeros_like(v) for k, v in params.items()}
    batch_losses: list[float] = []
    in_batch = 0
    step = 0
    done = False

    def flush_eval(step: int) -> None:
        nonlocal best_acc
        m = dev_metrics()
        acc = -1.0 if m.joint_acc is None else m.joint_acc
        entry = {"step": step, "event": "eval", "dev": m.to_dict(), "skipped": result.skipped_queries}
        result.log.append(entry)
        if acc > best_acc:
            best_acc = acc
            result.encoder = encoder.copy()
            result.best_step = step
            result.best_dev_joint_acc = m.joint_acc

    while not done:
        contributed = 0
        for ep_idx in rng.permutation(len(source_episodes)):
            episode = source_episodes[int(ep_idx)]
            ctx = build_context(episode, encoder, config)
            for query in episode.query:
                try:
                    loss, grads = compute_loss(query, ctx, config)
                except InfeasibleGold:
                    result.skipped_queries += 1
                    continue
                contributed += 1
                batch_losses.append(loss)
                for k in grads_acc:
                    grads_acc[k] += grads[k]
                in_batch += 1
                if in_batch < config.batch_size:
                    continue
                for k in grads_acc:
                    grads_acc[k] /= in_batch
                adam_step(params, grads_acc, state, config)
                step += 1
                result.log.append(
                    {"step": step, "event": "train",
                     "loss": float(np.mean(batch_losses)),
                     "skipped": result.skipped_queries}
                )
                for k in grads_acc:
                    grads_acc[k][:] = 0.0
                batch_losses.clear()
                in_batch = 0
                if step % config.eval_every == 0:
                    flush_eval(step)
                if step >= config.max_steps:
                    done = True
                    break
                # parameters changed: rebuild the episode context
                ctx = build_context(episode, encoder, config)
            if done:
                break
        if contributed == 0:
            logger.warning("no trainable query samples in a full pass; stopping at step %d", step)
            break
    if step % config.eval_every != 0:
        flush_eval(step)
    return result
