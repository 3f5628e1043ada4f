"""Prototype computation, similarity functions, and emission scores.

An intent prototype is the mean utterance embedding of the support samples
sharing that intent; a slot prototype is the mean token embedding over all
support word positions carrying that slot label.  Emission scores are
similarities between query embeddings and prototypes; higher is always
more similar (L2 is the negative squared euclidean distance).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import LabelSpace, Sample
from .encoder import Encoder

COS = "cos"
L2 = "l2"
VPB = "vpb"

SIMILARITY_KINDS = (COS, L2, VPB)


class DegenerateVector(ValueError):
    """Zero-norm vector where the similarity kind requires a direction."""


@dataclass
class Prototypes:
    intent_protos: np.ndarray  # (Y, d)
    slot_protos: np.ndarray  # (T, d)
    intent_counts: np.ndarray  # (Y,)
    slot_counts: np.ndarray  # (T,)


@dataclass
class Emissions:
    intent: np.ndarray  # (Y,)
    slot: np.ndarray  # (m, T)


def compute_prototypes(
    support: Sequence[Sample], ls: LabelSpace, encoder: Encoder
) -> Prototypes:
    """Per-class mean embeddings over the support set.

    Every class of the (episode-local) label space must occur in the
    support set, otherwise its prototype would be undefined.
    """
    y, t, d = ls.n_intents, ls.n_slots, encoder.config.dim
    intent_sum = np.zeros((y, d))
    slot_sum = np.zeros((t, d))
    intent_counts = np.zeros(y, dtype=int)
    slot_counts = np.zeros(t, dtype=int)
    for sample in support:
        rows = encoder.encode_tokens(sample.tokens)
        intent_sum[sample.intent] += rows.mean(axis=0)
        intent_counts[sample.intent] += 1
        for i, sid in enumerate(sample.slots):
            slot_sum[sid] += rows[i]
            slot_counts[sid] += 1
    for l in range(y):
        if intent_counts[l] == 0:
            raise ValueError(f"intent {ls.intents[l]!r} has no support samples")
    for o in range(t):
        if slot_counts[o] == 0:
            raise ValueError(f"slot label {ls.slot_labels[o]!r} has no support occurrences")
    return Prototypes(
        intent_protos=intent_sum / intent_counts[:, None],
        slot_protos=slot_sum / slot_counts[:, None],
        intent_counts=intent_counts,
        slot_counts=slot_counts,
    )


def similarity(e: np.ndarray, c: np.ndarray, kind: str) -> float:
    """Similarity of an embedding to a prototype; higher = more similar.

    cos: e.c / (|e||c|); l2: -|e - c|^2; vpb: e.c/|c| - |c|/2.
    """
    e = np.asarray(e, dtype=float)
    c = np.asarray(c, dtype=float)
    if kind == L2:
        diff = e - c
        return float(-diff @ diff)
    c_norm = np.linalg.norm(c)
    if c_norm == 0.0:
        raise DegenerateVector(f"zero-norm prototype under {kind} similarity")
    if kind == VPB:
        return float(e @ c / c_norm - c_norm / 2.0)
    if kind == COS:
        e_norm = np.linalg.norm(e)
        if e_norm == 0.0:
            raise DegenerateVector("zero-norm embedding under cos similarity")
        return float(e @ c / (e_norm * c_norm))
    raise ValueError(f"unknown similarity kind {kind!r}")


def similarity_to_protos(e: np.ndarray, protos: np.ndarray, kind: str) -> np.ndarray:
    """Vectorized similarity of one embedding against an (n, d) prototype matrix."""
    e = np.asarray(e, dtype=float)
    protos = np.asarray(protos, dtype=float)
    if kind == L2:
        diff = protos - e
        return -(diff * diff).sum(axis=1)
    c_norms = np.linalg.norm(protos, axis=1)
    if np.any(c_norms == 0.0):
        raise DegenerateVector(f"zero-norm prototype under {kind} similarity")
    if kind == VPB:
        return protos @ e / c_norms - c_norms / 2.0
    if kind == COS:
        e_norm = np.linalg.norm(e)
        if e_norm == 0.0:
            raise DegenerateVector("zero-norm embedding under cos similarity")
        return protos @ e / (e_norm * c_norms)
    raise ValueError(f"unknown similarity kind {kind!r}")


def similarity_grads(
    e: np.ndarray, protos: np.ndarray, kind: str
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of similarity_to_protos: (d s_n / d e, d s_n / d c_n).

    Both returned arrays have shape (n, d): row n is the gradient of the
    n-th similarity with respect to e and to the n-th prototype.
    """
    e = np.asarray(e, dtype=float)
    protos = np.asarray(protos, dtype=float)
    if kind == L2:
        diff = e[None, :] - protos
        return -2.0 * diff, 2.0 * diff
    c_norms = np.linalg.norm(protos, axis=1)
    if np.any(c_norms == 0.0):
        raise DegenerateVector(f"zero-norm prototype under {kind} similarity")
    unit_c = protos / c_norms[:, None]
    if kind == VPB:
        ds_de = unit_c
        dots = protos @ e
        ds_dc = (
            e[None, :] / c_norms[:, None]
            - dots[:, None] * protos / (c_norms**3)[:, None]
            - unit_c / 2.0
        )
        return ds_de, ds_dc
    if kind == COS:
        e_norm = np.linalg.norm(e)
        if e_norm == 0.0:
            raise DegenerateVector("zero-norm embedding under cos similarity")
        s = protos @ e / (e_norm * c_norms)
        ds_de = protos / (e_norm * c_norms)[:, None] - s[:, None] * e[None, :] / e_norm**2
        ds_dc = e[None, :] / (e_norm * c_norms)[:, None] - s[:, None] * protos / (c_norms**2)[:, None]
        return ds_de, ds_dc
    raise ValueError(f"unknown similarity kind {kind!r}")


def compute_emissions(
    query: Sample, protos: Prototypes, encoder: Encoder, kind: str
) -> Emissions:
    """Intent emission vector (Y,) and slot emission matrix (m, T) for a query."""
    rows = encoder.encode_tokens(query.tokens)
    utt = rows.mean(axis=0)
    intent = similarity_to_protos(utt, protos.intent_protos, kind)
    slot = np.stack([similarity_to_protos(r, protos.slot_protos, kind) for r in rows])
    return Emissions(intent=intent, slot=slot)
