#!/usr/bin/env python3
"""End-to-end homophone experiment, small enough to watch.

Builds a corpus whose sources each contain one homophone confusion that
only the caption can resolve, trains a plain corrector and a
caption-prompted one identically, and compares WER. Takes a minute or two.
"""

import numpy as np

from capfuse.data import SampleRecord, split_dataset
from capfuse.metrics import corpus_eval
from capfuse.model import DecodeConfig, EncoderDecoderModel, ModelConfig, generate
from capfuse.prompting import build_prompted_source
from capfuse.text import build_vocab, decode, encode
from capfuse.training import TrainingRecipe, run_training

TRIPLES = [("write", "right", "rite"), ("to", "two", "too"),
           ("pair", "pear", "pare"), ("by", "buy", "bye")]
FILLERS = ["cat", "dog", "tree", "house", "water", "light", "garden",
           "window", "table", "river", "stone", "bird"]
HOMOPHONES = [w for t in TRIPLES for w in t]
PARTNERS = {w: [x for x in t if x != w] for t in TRIPLES for w in t}


def build_corpus(n, seed):
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(n):
        true_word = HOMOPHONES[rng.integers(len(HOMOPHONES))]
        words = list(rng.choice(FILLERS, size=4, replace=False))
        slot = int(rng.integers(5))
        words.insert(slot, true_word)
        heard = list(words)
        heard[slot] = PARTNERS[true_word][rng.integers(2)]
        samples.append(SampleRecord(
            id=f"d{i:04d}", source=" ".join(heard), reference=" ".join(words),
            caption=f"the picture shows {true_word}"))
    return split_dataset(samples, (0.85, 0.05, 0.1), seed=seed + 1)


def train(samples, vocab, use_prompts, seed):
    config = ModelConfig(vocab_size=len(vocab), d_model=48, n_heads=4,
                         n_enc_layers=2, n_dec_layers=2, ffn_dim=96,
                         max_len=24, seed=seed)
    model = EncoderDecoderModel(config)
    examples = []
    for s in samples:
        text = build_prompted_source(s.caption, s.source) if use_prompts else s.source
        examples.append((encode(text, vocab), encode(s.reference, vocab)))
    run_training(model, examples,
                 TrainingRecipe(steps=400, batch_size=32, lr=2e-3, seed=seed))
    return model


def evaluate(model, samples, vocab, use_prompts):
    cfg = DecodeConfig(strategy="greedy", max_decode_len=10)
    pairs = []
    for s in samples:
        text = build_prompted_source(s.caption, s.source) if use_prompts else s.source
        out = decode(generate(model, encode(text, vocab), cfg), vocab)
        pairs.append((s.id, out, s.reference))
    return corpus_eval(pairs)


def main():
    corpus = build_corpus(800, seed=11)
    train_set = [s for s in corpus if s.split == "train"]
    test_set = [s for s in corpus if s.split == "test"]
    vocab = build_vocab([s.source for s in corpus] + [s.reference for s in corpus]
                        + [s.caption for s in corpus])
    print(f"{len(train_set)} train / {len(test_set)} test, vocab {len(vocab)}")

    baseline_wer = corpus_eval(
        [(s.id, s.source, s.reference) for s in test_set]).wer_percent
    print(f"uncorrected WER: {baseline_wer:.2f}")

    print("training plain corrector...")
    plain = train(train_set, vocab, use_prompts=False, seed=1)
    plain_report = evaluate(plain, test_set, vocab, use_prompts=False)
    print(f"  WER {plain_report.wer_percent:.2f}  SER {plain_report.ser_percent:.2f}")

    print("training caption-prompted corrector...")
    prompted = train(train_set, vocab, use_prompts=True, seed=1)
    prompt_report = evaluate(prompted, test_set, vocab, use_prompts=True)
    print(f"  WER {prompt_report.wer_percent:.2f}  SER {prompt_report.ser_percent:.2f}")

    sample = test_set[0]
    cfg = DecodeConfig(strategy="greedy", max_decode_len=10)
    fixed = decode(generate(
        prompted, encode(build_prompted_source(sample.caption, sample.source),
                         vocab), cfg), vocab)
    print("\nexample:")
    print("  heard:    ", sample.source)
    print("  caption:  ", sample.caption)
    print("  corrected:", fixed)
    print("  reference:", sample.reference)


if __name__ == "__main__":
    main()
