"""Deterministic synthetic corpora for the embedding pipeline.

``zipf_corpus`` produces a desk-scale text with a Zipfian unigram
distribution and mild topical clustering, enough structure for the pipeline
to chew on.  ``planted_analogy_corpus`` builds a vocabulary of group/form
word pairs whose co-occurrence statistics make analogies exactly solvable:
words sharing a group co-occur in group sentences, words sharing a form
co-occur in form sentences, so embeddings decompose additively into a group
part and a form part.
"""

from __future__ import annotations

import numpy as np

__all__ = ["zipf_corpus", "planted_analogy_corpus", "analogy_quads", "write_corpus"]


def zipf_corpus(n_tokens=200_000, vocab_size=3000, n_topics=20, seed=0):
    """Generate one long text string with Zipf-distributed topical words."""
    rng = np.random.default_rng(seed)
    words = np.array([f"w{i:04d}" for i in range(vocab_size)])
    base = 1.0 / np.arange(1, vocab_size + 1)
    base /= base.sum()
    # Each topic boosts a random slice of the vocabulary.
    topic_boost = np.ones((n_topics, vocab_size))
    for t in range(n_topics):
        member = rng.random(vocab_size) < 0.05
        topic_boost[t, member] = 20.0
    out = []
    produced = 0
    while produced < n_tokens:
        topic = rng.integers(n_topics)
        probs = base * topic_boost[topic]
        probs /= probs.sum()
        length = int(rng.integers(5, 13))
        sentence = rng.choice(words, size=length, p=probs)
        out.append(" ".join(sentence))
        produced += length
    return "\n".join(out) + "\n"


def planted_analogy_corpus(n_groups=20, n_forms=2, sentences_per_context=400, seed=0):
    """Corpus whose word statistics plant an exact analogy structure.

    The vocabulary is one word per (group, form) cell.  Half the sentences
    draw three words from a single group (forms mixed), half draw three
    words from a single form (groups mixed), in a deterministic round-robin
    so every context gets identical mass.
    """
    rng = np.random.default_rng(seed)
    form_names = [chr(ord("x") + f) for f in range(n_forms)]

    def word(g, f):
        return f"g{g:02d}{form_names[f]}"

    sentences = []
    for g in range(n_groups):
        pool = [word(g, f) for f in range(n_forms)]
        for _ in range(sentences_per_context):
            sentences.append(" ".join(rng.choice(pool, size=3)))
    for f in range(n_forms):
        pool = [word(g, f) for g in range(n_groups)]
        for _ in range(sentences_per_context):
            sentences.append(" ".join(rng.choice(pool, size=3)))
    order = rng.permutation(len(sentences))
    return "\n".join(sentences[i] for i in order) + "\n"


def analogy_quads(n_groups=20, n_forms=2):
    """Every ordered pair of distinct groups as (a, a*, b, b*) quads."""
    form_names = [chr(ord("x") + f) for f in range(n_forms)]

    def word(g, f):
        return f"g{g:02d}{form_names[f]}"

    quads = []
    for g1 in range(n_groups):
        for g2 in range(n_groups):
            if g1 == g2:
                continue
            quads.append((word(g1, 0), word(g1, 1), word(g2, 0), word(g2, 1)))
    return quads


def write_corpus(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
