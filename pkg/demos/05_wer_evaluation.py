#!/usr/bin/env python3
"""Word and sentence error rates from edit-distance alignments."""

from capfuse.metrics import corpus_eval, word_edit_distance

examples = [
    ("if you plan a little bit", "if you plant a little bit"),
    ("the cat sat", "the cat sat"),
    ("to the best strings for whatever gucci youre going to restring",
     "to the best strings for whatever the guitar youre going to restring"),
]
for hyp, ref in examples:
    s, d, i = word_edit_distance(hyp, ref)
    print(f"S={s} D={d} I={i}  hyp={hyp!r}")

report = corpus_eval([(str(k), h, r) for k, (h, r) in enumerate(examples)])
print()
print(report.summary())
