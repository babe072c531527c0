#!/usr/bin/env python3
"""Captions as prompts, and the random-caption ablation."""

from capfuse.data import SampleRecord
from capfuse.prompting import (assign_random_captions, build_prompted_source,
                               split_prompted_source)

caption = "the tortoise is being cared for"
source = "thats really how we choose our tourist it for today"
prompted = build_prompted_source(caption, source)
print("prompted source:")
print(" ", prompted)
print("splits back into:", split_prompted_source(prompted))
print("empty caption passes through:", build_prompted_source("", source) == source)

samples = [
    SampleRecord(id="s0", source="a", reference="a", caption="a red barn"),
    SampleRecord(id="s1", source="b", reference="b", caption="two boats"),
    SampleRecord(id="s2", source="c", reference="c", caption="a pine tree"),
    SampleRecord(id="s3", source="d", reference="d", caption="an old clock"),
]
deranged = assign_random_captions(samples, seed=7)
print("\nrandom-caption ablation (no caption stays home):")
for before, after in zip(samples, deranged):
    print(f"  {before.id}: {before.caption!r} -> {after.caption!r}")
