"""Synthetic corpora and K-shot episode construction.

Generates a small multi-domain corpus set, builds a K-shot support set
with the add-then-prune coverage algorithm, and shows the episode JSON
round trip.
"""

import numpy as np

from jmrm import SynthSpec, build_episode, build_support_set, generate_synthetic
from jmrm.core import parse_episodes, serialize_episodes


def label(ls, sid):
    return ls.slot_labels[sid]


def main():
    spec = SynthSpec(
        n_source_domains=2, n_dev_domains=1, n_target_domains=1,
        samples_per_domain=40, vocab_overlap=0.7, seed=7,
    )
    source, dev, target = generate_synthetic(spec)
    print(f"generated {len(source)} source, {len(dev)} dev, {len(target)} target domains")

    corpus = source[0]
    ls = corpus.label_space
    print(f"\ndomain {corpus.domain_name!r}: {ls.n_intents} intents, "
          f"{ls.n_slots} slot labels, {len(corpus.samples)} samples")
    s = corpus.samples[0]
    print("first sample:")
    for tok, sid in zip(s.tokens, s.slots):
        print(f"  {tok:12s} {label(ls, sid)}")
    print(f"  intent = {ls.intents[s.intent]}")

    rng = np.random.default_rng(0)
    for k in (1, 2, 5):
        support = build_support_set(corpus, k, rng)
        print(f"\nK={k}: support of {len(support)} utterances "
              f"(every intent has >= {k} samples, every slot label >= {k} word occurrences,")
        print("       and removing any single utterance breaks that)")

    episode = build_episode(corpus, 2, 6, rng)
    print(f"\nepisode: |support|={len(episode.support)}, |query|={len(episode.query)}, "
          f"episode-local label space Y={episode.label_space.n_intents}, "
          f"T={episode.label_space.n_slots}")

    text = serialize_episodes([episode])
    assert parse_episodes(text)[0] == episode
    print(f"episode JSON round-trips ({len(text)} bytes)")


if __name__ == "__main__":
    main()
