"""Pluggable token/utterance embedding functions.

Two kinds:

* ``hashed-frozen``: every token maps to a fixed unit vector drawn from a
  PRNG seeded by a stable hash of (seed, token).  The same surface token
  gets the same vector in every domain, which is what makes token-level
  semantics transferable across domains at desk scale.  No parameters.
* ``trainable``: a token embedding table plus a linear projection over a
  symmetric context-window mean, with exact reverse-mode gradients.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .core import MalformedInput

HASHED_FROZEN = "hashed-frozen"
TRAINABLE = "trainable"

CHECKPOINT_MAGIC = "JMRM-ENC-v1"

UNK_TOKEN = "<unk>"


class FrozenEncoder(RuntimeError):
    """Backward pass requested on the parameter-free hashed encoder."""


@dataclass(frozen=True)
class EncoderConfig:
    kind: str
    dim: int
    context_window: int = 0
    init_scale: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in (HASHED_FROZEN, TRAINABLE):
            raise ValueError(f"unknown encoder kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.context_window < 0:
            raise ValueError("context_window must be >= 0")
        if self.init_scale <= 0:
            raise ValueError("init_scale must be > 0")


@dataclass
class EncoderParams:
    """Trainable parameters: vocabulary-keyed table, projection, bias."""

    vocab: dict[str, int]
    token_table: np.ndarray  # (V, d)
    projection: np.ndarray  # (d, d)
    bias: np.ndarray  # (d,)

    def as_dict(self) -> dict[str, np.ndarray]:
        return {
            "token_table": self.token_table,
            "projection": self.projection,
            "bias": self.bias,
        }

    def copy(self) -> "EncoderParams":
        return EncoderParams(
            vocab=dict(self.vocab),
            token_table=self.token_table.copy(),
            projection=self.projection.copy(),
            bias=self.bias.copy(),
        )


@dataclass
class Encoder:
    """An embedding function: a config plus (for the trainable kind) params."""

    config: EncoderConfig
    params: EncoderParams | None = None

    @property
    def is_trainable(self) -> bool:
        return self.config.kind == TRAINABLE

    def encode_tokens(self, tokens: Sequence[str]) -> np.ndarray:
        return encode_tokens(self.params, self.config, tokens)

    def encode_utterance(self, tokens: Sequence[str]) -> np.ndarray:
        return encode_utterance(self.params, self.config, tokens)

    def copy(self) -> "Encoder":
        return Encoder(self.config, self.params.copy() if self.params else None)


def init_encoder(config: EncoderConfig, vocab: Sequence[str] = ()) -> Encoder:
    """Create an encoder; the trainable kind gets a fresh parameter set.

    The vocabulary keeps first-appearance order (duplicates dropped); row 0
    is the UNK embedding shared by all out-of-vocabulary tokens.
    """
    if config.kind == HASHED_FROZEN:
        return Encoder(config, None)
    ordered = [UNK_TOKEN]
    seen = {UNK_TOKEN}
    for tok in vocab:
        if tok not in seen:
            seen.add(tok)
            ordered.append(tok)
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    d = config.dim
    table = rng.uniform(-config.init_scale, config.init_scale, size=(len(ordered), d))
    projection = np.eye(d) + rng.uniform(-config.init_scale, config.init_scale, size=(d, d))
    params = EncoderParams(
        vocab={tok: i for i, tok in enumerate(ordered)},
        token_table=table,
        projection=projection,
        bias=np.zeros(d),
    )
    return Encoder(config, params)


@lru_cache(maxsize=65536)
def _hashed_unit_vector(token: str, seed: int, dim: int) -> np.ndarray:
    digest = hashlib.blake2b(f"{seed}:{token}".encode("utf-8"), digest_size=8).digest()
    gen = np.random.default_rng(int.from_bytes(digest, "big"))
    v = gen.standard_normal(dim)
    v /= np.linalg.norm(v)
    v.flags.writeable = False
    return v


def _window_means(table_rows: np.ndarray, w: int) -> np.ndarray:
    m = table_rows.shape[0]
    if w == 0:
        return table_rows
    out = np.empty_like(table_rows)
    for i in range(m):
        lo, hi = max(0, i - w), min(m, i + w + 1)
        out[i] = table_rows[lo:hi].mean(axis=0)
    return out


def encode_tokens(
    params: EncoderParams | None, config: EncoderConfig, tokens: Sequence[str]
) -> np.ndarray:
    """Embed each token; returns an (m, dim) matrix."""
    if len(tokens) < 1:
        raise ValueError("tokens must be non-empty")
    if config.kind == HASHED_FROZEN:
        return np.stack([_hashed_unit_vector(t, config.seed, config.dim) for t in tokens])
    assert params is not None
    ids = [params.vocab.get(t, 0) for t in tokens]
    h = _window_means(params.token_table[ids], config.context_window)
    return h @ params.projection.T + params.bias


def encode_utterance(
    params: EncoderParams | None, config: EncoderConfig, tokens: Sequence[str]
) -> np.ndarray:
    """Utterance embedding: the mean of all token embeddings."""
    return encode_tokens(params, config, tokens).mean(axis=0)


def zero_grads(params: EncoderParams) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(arr) for name, arr in params.as_dict().items()}


def encoder_backward(
    params: EncoderParams | None,
    config: EncoderConfig,
    tokens: Sequence[str],
    d_rows: np.ndarray | None = None,
    d_utt: np.ndarray | None = None,
    out: dict[str, np.ndarray] | None = None,
) -> dict[str, np.ndarray]:
    """Accumulate exact gradients of encode_tokens / encode_utterance.

    d_rows is an upstream (m, dim) gradient on the token matrix, d_utt a
    (dim,) gradient on the utterance mean; either may be omitted.  Results
    are summed into ``out`` when given.
    """
    if config.kind != TRAINABLE:
        raise FrozenEncoder("hashed-frozen encoder has no parameters")
    assert params is not None
    m, d = len(tokens), config.dim
    grads = out if out is not None else zero_grads(params)
    total = np.zeros((m, d))
    if d_rows is not None:
        total += d_rows
    if d_utt is not None:
        total += np.asarray(d_utt) / m
    ids = [params.vocab.get(t, 0) for t in tokens]
    h = _window_means(params.token_table[ids], config.context_window)
    grads["projection"] += total.T @ h
    grads["bias"] += total.sum(axis=0)
    dh = total @ params.projection
    w = config.context_window
    for i in range(m):
        lo, hi = max(0, i - w), min(m, i + w + 1)
        share = dh[i] / (hi - lo)
        for j in range(lo, hi):
            grads["token_table"][ids[j]] += share
    return grads


# --- checkpoints -----------------------------------------------------------


def save_encoder(path, encoder: Encoder) -> None:
    """Write a versioned JSON checkpoint (config + vocabulary + matrices)."""
    payload: dict = {
        "magic": CHECKPOINT_MAGIC,
        "config": {
            "kind": encoder.config.kind,
            "dim": encoder.config.dim,
            "context_window": encoder.config.context_window,
            "init_scale": encoder.config.init_scale,
            "seed": encoder.config.seed,
        },
    }
    if encoder.params is not None:
        row_order = sorted(encoder.params.vocab, key=encoder.params.vocab.get)
        payload["vocab"] = row_order
        payload["token_table"] = encoder.params.token_table.tolist()
        payload["projection"] = encoder.params.projection.tolist()
        payload["bias"] = encoder.params.bias.tolist()
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_encoder(path) -> Encoder:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if not isinstance(payload, dict) or payload.get("magic") != CHECKPOINT_MAGIC:
        raise MalformedInput(f"{path}: not a {CHECKPOINT_MAGIC} checkpoint")
    config = EncoderConfig(**payload["config"])
    if config.kind == HASHED_FROZEN:
        return Encoder(config, None)
    vocab = {tok: i for i, tok in enumerate(payload["vocab"])}
    params = EncoderParams(
        vocab=vocab,
        token_table=np.asarray(payload["token_table"], dtype=float),
        projection=np.asarray(payload["projection"], dtype=float),
        bias=np.asarray(payload["bias"], dtype=float),
    )
    return Encoder(config, params)
