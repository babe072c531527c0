#!/usr/bin/env python3
"""Vocabulary construction and round-trip encoding with special tokens."""

from capfuse.text import build_vocab, decode, encode, normalize_text

corpus = [
    "the tortoise is being cared for",
    "thats really how we choose our tourist it for today",
    "the tortoise walks past the tourist",
]

vocab = build_vocab(corpus, min_count=1)
print(f"vocabulary: {len(vocab)} ids (5 reserved + {len(vocab) - 5} words)")
print("first rows:", [vocab.token_of(i) for i in range(9)])

line = "The   Tortoise [SEP] walks  PAST"
seq = encode(line, vocab)
print(f"\nencode({line!r})")
print("  ids:", seq.ids)
print("  back:", decode(seq, vocab))
print("  normalized input:", normalize_text(line))

unknown = encode("zebra", vocab)
print(f"\nout-of-vocabulary word renders as: {decode(unknown, vocab)!r}")
