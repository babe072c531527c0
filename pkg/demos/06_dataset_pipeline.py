#!/usr/bin/env python3
"""Corpus construction: frame timing, corruption channel, filtering, splits."""

from collections import Counter

from capfuse.data import (NoiseConfig, SampleRecord, filter_by_similarity,
                          frame_midpoint, generate_synthetic, split_dataset)
from capfuse.similarity import CosineEmbeddingProvider

# a video frame represents its sample at the midpoint of its time span
print("frame for [12.0s, 18.0s]:", frame_midpoint(12.0, 18.0), "seconds")

# a corruption channel stands in for a weak ASR decode
noise = NoiseConfig(substitution_rate=0.2, deletion_rate=0.05,
                    insertion_rate=0.05,
                    homophone_table={"plant": ["plan"], "plan": ["plant"]},
                    seed=3)
refs = ["if you plant a little bit", "we plan the harvest today",
        "the garden needs water"]
for record in generate_synthetic(refs, noise, n=6):
    marker = "  (changed)" if record.source != record.reference else ""
    print(f"  {record.reference!r} -> {record.source!r}{marker}")

# caption/reference similarity filtering keeps visually grounded samples
samples = [
    SampleRecord(id="k0", source="x", reference="a tortoise in the garden",
                 caption="a tortoise eating leaves"),
    SampleRecord(id="k1", source="x", reference="stock market update",
                 caption="a man at a desk"),
]
provider = CosineEmbeddingProvider()
kept, dropped = filter_by_similarity(samples, provider, threshold=0.2)
print("\nkept after similarity filter:", [s.id for s in kept])
print("dropped:", [s.id for s in dropped])

# seeded splits are stable and contiguous after a shuffle
corpus = [SampleRecord(id=f"r{i}", source="s", reference="r") for i in range(10)]
assigned = split_dataset(corpus, (0.8, 0.1, 0.1), seed=0)
print("\nsplit counts:", dict(Counter(s.split for s in assigned)))
