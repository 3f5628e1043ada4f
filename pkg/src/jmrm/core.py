"""Core domain types, episode file I/O, validation, and BIO span extraction.

A labeled sample is a tokenized utterance with one intent label and one
slot label per token (BIO scheme).  An episode bundles a small labeled
support set with a query set and an episode-local label space.  Label ids
are dense integers in declaration order, so masks and prototype matrices
are index-aligned with the label space.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

logger = logging.getLogger(__name__)

O_LABEL = "O"


class MalformedInput(ValueError):
    """Input file violates the episode/corpus JSON schema; message carries the path."""


class LabelMismatch(ValueError):
    """A sample uses a label that is absent from its declared label space."""


class LengthMismatch(ValueError):
    """Token and slot sequences (or prediction/gold lists) have different lengths."""


class MalformedLabel(ValueError):
    """A slot label name is neither 'O' nor of the form 'B-<type>' / 'I-<type>'."""


def split_slot_label(name: str) -> tuple[str, str | None]:
    """Split a slot label name into (prefix, type).

    Returns ("O", None) for the outside label, ("B", t) or ("I", t) otherwise.
    Raises MalformedLabel for anything else.
    """
    if name == O_LABEL:
        return ("O", None)
    if len(name) > 2 and name[1] == "-" and name[0] in ("B", "I"):
        return (name[0], name[2:])
    raise MalformedLabel(f"slot label {name!r} is not 'O', 'B-<type>' or 'I-<type>'")


@dataclass(frozen=True)
class LabelSpace:
    """Ordered intent and slot label names; the index of a name is its id."""

    intents: tuple[str, ...]
    slot_labels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "intents", tuple(self.intents))
        object.__setattr__(self, "slot_labels", tuple(self.slot_labels))
        if len(self.intents) < 1:
            raise MalformedInput("label space needs at least one intent")
        if len(set(self.intents)) != len(self.intents):
            raise MalformedInput("duplicate intent names in label space")
        if len(set(self.slot_labels)) != len(self.slot_labels):
            raise MalformedInput("duplicate slot label names in label space")
        if O_LABEL not in self.slot_labels:
            raise MalformedInput("label space must contain the 'O' slot label")
        for name in self.slot_labels:
            split_slot_label(name)

    @property
    def n_intents(self) -> int:
        return len(self.intents)

    @property
    def n_slots(self) -> int:
        return len(self.slot_labels)

    @property
    def o_id(self) -> int:
        return self.slot_labels.index(O_LABEL)

    def intent_id(self, name: str) -> int:
        try:
            return self.intents.index(name)
        except ValueError:
            raise LabelMismatch(f"unknown intent {name!r}") from None

    def slot_id(self, name: str) -> int:
        try:
            return self.slot_labels.index(name)
        except ValueError:
            raise LabelMismatch(f"unknown slot label {name!r}") from None

    def slot_kind(self, slot_id: int) -> tuple[str, str | None]:
        """(prefix, type) of the slot label with this id."""
        return split_slot_label(self.slot_labels[slot_id])


@dataclass(frozen=True)
class Sample:
    """One labeled utterance: tokens, an intent id, and per-token slot ids.

    Construction does not validate against a label space; use
    validate_sample to obtain a violation report.
    """

    tokens: tuple[str, ...]
    intent: int
    slots: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "slots", tuple(self.slots))

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class SlotSpan:
    """A typed token span [start, end) extracted from a BIO sequence."""

    slot_type: str
    start: int
    end: int

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise ValueError(f"invalid span bounds [{self.start}, {self.end})")


@dataclass(frozen=True)
class Episode:
    """A support set, a query set, and the episode-local label space."""

    support: tuple[Sample, ...]
    query: tuple[Sample, ...]
    label_space: LabelSpace
    domain_name: str

    def __post_init__(self):
        object.__setattr__(self, "support", tuple(self.support))
        object.__setattr__(self, "query", tuple(self.query))


def validate_sample(sample: Sample, ls: LabelSpace) -> list[str]:
    """Report all invariant violations of a sample against a label space.

    Returns an empty list when the sample is well formed.  BIO-validity of
    the gold slot sequence is NOT a violation (real corpora contain
    annotation noise); anomalies are logged as warnings instead.
    """
    violations: list[str] = []
    if len(sample.tokens) < 1:
        violations.append("empty token sequence")
    if len(sample.slots) != len(sample.tokens):
        violations.append(
            f"length mismatch: {len(sample.tokens)} tokens vs {len(sample.slots)} slots"
        )
    if not 0 <= sample.intent < ls.n_intents:
        violations.append(f"unknown intent id {sample.intent}")
    for i, sid in enumerate(sample.slots):
        if not 0 <= sid < ls.n_slots:
            violations.append(f"unknown slot id {sid} at position {i}")
    if not violations:
        _warn_bio_anomalies(sample.slots, ls)
    return violations


def _warn_bio_anomalies(slots: Sequence[int], ls: LabelSpace) -> None:
    prev_kind, prev_type = "O", None
    for i, sid in enumerate(slots):
        kind, typ = ls.slot_kind(sid)
        if kind == "I" and not (prev_kind in ("B", "I") and prev_type == typ):
            logger.warning(
                "gold BIO anomaly: %s at position %d has no compatible predecessor",
                ls.slot_labels[sid], i,
            )
        prev_kind, prev_type = kind, typ


def bio_spans(slots: Sequence[int], ls: LabelSpace) -> list[SlotSpan]:
    """Extract typed spans from a (possibly invalid) BIO slot id sequence.

    Lenient conlleval semantics: B-X opens a span, I-X of the same type
    extends it, an I-X without a compatible predecessor opens a new span of
    type X, and O closes any open span.
    """
    spans: list[SlotSpan] = []
    open_type: str | None = None
    open_start = 0
    for i, sid in enumerate(slots):
        kind, typ = ls.slot_kind(sid)
        if kind == "I" and typ == open_type:
            continue
        if open_type is not None:
            spans.append(SlotSpan(open_type, open_start, i))
            open_type = None
        if kind != "O":
            open_type, open_start = typ, i
    if open_type is not None:
        spans.append(SlotSpan(open_type, open_start, len(slots)))
    return spans


# --- episode JSON schema -------------------------------------------------
#
# { "episodes": [ { "domain": str, "intents": [str], "slot_labels": [str],
#     "support": [ {"tokens": [str], "intent": str, "slots": [str]} ],
#     "query":   [ {"tokens": [str], "intent": str, "slots": [str]} ] } ] }
#
# UTF-8 encoded; slot label names must match the B-/I-/O grammar; the
# declared label lists must equal exactly the labels used in the support
# set (plus "O", which is always part of a label space).


def _expect(cond: bool, path: str, msg: str) -> None:
    if not cond:
        raise MalformedInput(f"{path}: {msg}")


def _parse_string_list(obj, path: str) -> list[str]:
    _expect(isinstance(obj, list), path, "expected a list")
    for j, item in enumerate(obj):
        _expect(isinstance(item, str), f"{path}[{j}]", "expected a string")
    return list(obj)


def _parse_sample(obj, ls: LabelSpace, path: str) -> Sample:
    _expect(isinstance(obj, dict), path, "expected an object")
    for key in ("tokens", "intent", "slots"):
        _expect(key in obj, path, f"missing key {key!r}")
    tokens = _parse_string_list(obj["tokens"], f"{path}.tokens")
    _expect(len(tokens) >= 1, f"{path}.tokens", "must be non-empty")
    _expect(isinstance(obj["intent"], str), f"{path}.intent", "expected a string")
    slot_names = _parse_string_list(obj["slots"], f"{path}.slots")
    if len(slot_names) != len(tokens):
        raise LengthMismatch(
            f"{path}: {len(tokens)} tokens vs {len(slot_names)} slots"
        )
    intent = ls.intent_id(obj["intent"])
    slots = tuple(ls.slot_id(name) for name in slot_names)
    return Sample(tokens=tuple(tokens), intent=intent, slots=slots)


def _parse_label_space(obj, path: str) -> LabelSpace:
    intents = _parse_string_list(obj["intents"], f"{path}.intents")
    slot_labels = _parse_string_list(obj["slot_labels"], f"{path}.slot_labels")
    for j, name in enumerate(slot_labels):
        try:
            split_slot_label(name)
        except MalformedLabel as exc:
            raise MalformedInput(f"{path}.slot_labels[{j}]: {exc}") from None
    try:
        return LabelSpace(tuple(intents), tuple(slot_labels))
    except MalformedInput as exc:
        raise MalformedInput(f"{path}: {exc}") from None


def _check_episode_local_space(ep: Episode, path: str) -> None:
    used_intents = {ep.label_space.intents[s.intent] for s in ep.support}
    used_slots = {ep.label_space.slot_labels[sid] for s in ep.support for sid in s.slots}
    used_slots.add(O_LABEL)
    declared_intents = set(ep.label_space.intents)
    declared_slots = set(ep.label_space.slot_labels)
    _expect(
        declared_intents == used_intents, path,
        f"declared intents {sorted(declared_intents)} != support intents {sorted(used_intents)}",
    )
    _expect(
        declared_slots == used_slots, path,
        f"declared slot labels {sorted(declared_slots)} != support slot labels {sorted(used_slots)}",
    )


def parse_episodes(data: bytes | str) -> list[Episode]:
    """Parse an episode file (UTF-8 JSON) into validated Episode values."""
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedInput(f"file is not valid UTF-8: {exc}") from None
    try:
        root = json.loads(data)
    except json.JSONDecodeError as exc:
        raise MalformedInput(f"file is not valid JSON: {exc}") from None
    _expect(isinstance(root, dict), "$", "expected a top-level object")
    _expect("episodes" in root, "$", "missing key 'episodes'")
    _expect(isinstance(root["episodes"], list), "$.episodes", "expected a list")

    episodes: list[Episode] = []
    for i, ep_obj in enumerate(root["episodes"]):
        path = f"$.episodes[{i}]"
        _expect(isinstance(ep_obj, dict), path, "expected an object")
        for key in ("domain", "intents", "slot_labels", "support", "query"):
            _expect(key in ep_obj, path, f"missing key {key!r}")
        _expect(isinstance(ep_obj["domain"], str), f"{path}.domain", "expected a string")
        ls = _parse_label_space(ep_obj, path)
        _expect(isinstance(ep_obj["support"], list), f"{path}.support", "expected a list")
        _expect(len(ep_obj["support"]) >= 1, f"{path}.support", "must be non-empty")
        _expect(isinstance(ep_obj["query"], list), f"{path}.query", "expected a list")
        support = tuple(
            _parse_sample(s, ls, f"{path}.support[{j}]")
            for j, s in enumerate(ep_obj["support"])
        )
        query = tuple(
            _parse_sample(s, ls, f"{path}.query[{j}]")
            for j, s in enumerate(ep_obj["query"])
        )
        episode = Episode(support, query, ls, ep_obj["domain"])
        _check_episode_local_space(episode, path)
        episodes.append(episode)
    return episodes


def sample_to_dict(sample: Sample, ls: LabelSpace) -> dict:
    return {
        "tokens": list(sample.tokens),
        "intent": ls.intents[sample.intent],
        "slots": [ls.slot_labels[sid] for sid in sample.slots],
    }


def episode_to_dict(ep: Episode) -> dict:
    return {
        "domain": ep.domain_name,
        "intents": list(ep.label_space.intents),
        "slot_labels": list(ep.label_space.slot_labels),
        "support": [sample_to_dict(s, ep.label_space) for s in ep.support],
        "query": [sample_to_dict(s, ep.label_space) for s in ep.query],
    }


def serialize_episodes(episodes: Iterable[Episode]) -> str:
    """Serialize episodes to the episode JSON schema (stable byte layout)."""
    payload = {"episodes": [episode_to_dict(ep) for ep in episodes]}
    return json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def load_episode_file(path) -> list[Episode]:
    with open(path, "rb") as fh:
        return parse_episodes(fh.read())


def save_episode_file(path, episodes: Iterable[Episode]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_episodes(episodes))
