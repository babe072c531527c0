"""Toy encoder-decoder transformer for hypothesis correction.

Post-norm layers, sinusoidal positions, strict causal decoding, exact pad
masking (masked attention weights underflow to exactly zero in float64).
An optional gated fusion layer attaches to the encoder output, ahead of
decoder cross-attention. Everything runs on the autograd core at float64;
batches are dense (B x L) arrays padded with PAD.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .checkpoint import load_checkpoint, save_checkpoint
from .fusion import GatedFusionLayer, ImageFeature, zero_feature
from .text import BOS_ID, EOS_ID, PAD_ID, TokenSequence

_MASK_OFF = -1e9  # additive attention mask; exp() underflows to exactly 0.0


@dataclass
class ModelConfig:
    vocab_size: int
    d_model: int = 64
    n_heads: int = 4
    n_enc_layers: int = 2
    n_dec_layers: int = 2
    ffn_dim: int = 128
    max_len: int = 64
    dropout: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError(
                f"d_model {self.d_model} must be divisible by n_heads {self.n_heads}")
        for name in ("vocab_size", "d_model", "n_heads", "n_enc_layers",
                     "n_dec_layers", "ffn_dim", "max_len"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")

    def save(self, path) -> None:
        """Flat key-value file, one ``key = value`` pair per line."""
        with open(path, "w", encoding="utf-8") as fh:
            for name in ("vocab_size", "d_model", "n_heads", "n_enc_layers",
                         "n_dec_layers", "ffn_dim", "max_len", "dropout", "seed"):
                fh.write(f"{name} = {getattr(self, name)}\n")

    @classmethod
    def load(cls, path) -> "ModelConfig":
        fields: Dict[str, float] = {}
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            fields[key.strip()] = float(value.strip())
        ints = {k: int(v) for k, v in fields.items() if k != "dropout"}
        return cls(dropout=fields.get("dropout", 0.0), **ints)


@dataclass
class DecodeConfig:
    strategy: str = "beam"
    beam_size: int = 4
    max_decode_len: int = 40
    length_penalty: float = 1.0

    def __post_init__(self):
        if self.strategy not in ("greedy", "beam"):
            raise ValueError(f"unknown decode strategy {self.strategy!r}")
        if self.beam_size < 1:
            raise ValueError(f"beam_size must be >= 1, got {self.beam_size}")
        if self.strategy == "greedy":
            self.beam_size = 1


def sinusoidal_positions(max_len: int, d_model: int) -> np.ndarray:
    positions = np.arange(max_len, dtype=np.float64)[:, None]
    dims = np.arange(0, d_model, 2, dtype=np.float64)
    angles = positions / np.power(10000.0, dims / d_model)
    table = np.zeros((max_len, d_model))
    table[:, 0::2] = np.sin(angles)
    table[:, 1::2] = np.cos(angles[:, : d_model // 2])
    return table


class EncoderDecoderModel:
    """Transformer encoder-decoder with an optional gated fusion stage."""

    def __init__(self, config: ModelConfig):
        self.config = config
        self.rng = np.random.default_rng(config.seed)
        self.training = False
        self.fusion: Optional[GatedFusionLayer] = None
        self.pos_table = sinusoidal_positions(config.max_len, config.d_model)
        self.params: Dict[str, Tensor] = {}
        self._build_params()

    # -- parameters -----------------------------------------------------

    def _linear(self, name: str, d_in: int, d_out: int) -> None:
        self.params[f"{name}.w"] = ag.parameter((d_in, d_out), self.rng)
        self.params[f"{name}.b"] = ag.parameter(np.zeros(d_out))

    def _layer_norm_params(self, name: str, d: int) -> None:
        self.params[f"{name}.g"] = ag.parameter(np.ones(d))
        self.params[f"{name}.b"] = ag.parameter(np.zeros(d))

    def _attention_params(self, name: str, d: int) -> None:
        for proj in ("q", "k", "v", "o"):
            self._linear(f"{name}.{proj}", d, d)

    def _build_params(self):
        cfg = self.config
        self.params["embed"] = ag.parameter(
            (cfg.vocab_size, cfg.d_model), self.rng, init_scale=cfg.d_model ** -0.5)
        for i in range(cfg.n_enc_layers):
            base = f"enc{i}"
            self._attention_params(f"{base}.self", cfg.d_model)
            self._layer_norm_params(f"{base}.ln1", cfg.d_model)
            self._linear(f"{base}.ffn1", cfg.d_model, cfg.ffn_dim)
            self._linear(f"{base}.ffn2", cfg.ffn_dim, cfg.d_model)
            self._layer_norm_params(f"{base}.ln2", cfg.d_model)
        for i in range(cfg.n_dec_layers):
            base = f"dec{i}"
            self._attention_params(f"{base}.self", cfg.d_model)
            self._layer_norm_params(f"{base}.ln1", cfg.d_model)
            self._attention_params(f"{base}.cross", cfg.d_model)
            self._layer_norm_params(f"{base}.ln2", cfg.d_model)
            self._linear(f"{base}.ffn1", cfg.d_model, cfg.ffn_dim)
            self._linear(f"{base}.ffn2", cfg.ffn_dim, cfg.d_model)
            self._layer_norm_params(f"{base}.ln3", cfg.d_model)
        self._linear("out", cfg.d_model, cfg.vocab_size)

    def attach_fusion(self, layer: GatedFusionLayer) -> None:
        if layer.d_model != self.config.d_model:
            raise ValueError(
                f"fusion width {layer.d_model} does not match model width "
                f"{self.config.d_model}")
        self.fusion = layer

    def named_params(self) -> Dict[str, Tensor]:
        out = dict(self.params)
        if self.fusion is not None:
            out.update(self.fusion.named_params())
        return out

    def state(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_params().items()}

    def load_state(self, state: Dict[str, np.ndarray]) -> None:
        own = self.named_params()
        if own.keys() != state.keys():
            missing = sorted(own.keys() - state.keys())
            extra = sorted(state.keys() - own.keys())
            raise ValueError(f"state mismatch: missing {missing}, unexpected {extra}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ValueError(
                    f"parameter {name!r}: checkpoint shape {arr.shape} vs model "
                    f"shape {p.data.shape}")
            p.data = arr.copy()

    def save_checkpoint(self, path) -> None:
        save_checkpoint(path, self.state())

    def load_checkpoint(self, path) -> None:
        self.load_state(load_checkpoint(path))

    def train(self) -> None:
        self.training = True

    def eval(self) -> None:
        self.training = False

    # -- forward building blocks ----------------------------------------

    def _maybe_dropout(self, x: Tensor) -> Tensor:
        rate = self.config.dropout
        if not self.training or rate == 0.0:
            return x
        keep = self.rng.random(x.shape) >= rate
        mask = keep.astype(np.float64) / (1.0 - rate)
        return ag.mul(x, Tensor(mask))

    def _affine(self, name: str, x: Tensor) -> Tensor:
        return ag.add_bias(ag.matmul(x, self.params[f"{name}.w"]),
                           self.params[f"{name}.b"])

    def _embed(self, ids: np.ndarray) -> Tensor:
        b, length = ids.shape
        if length > self.config.max_len:
            raise ValueError(
                f"sequence length {length} exceeds max_len {self.config.max_len}")
        emb = ag.scale(ag.embedding_lookup(self.params["embed"], ids),
                       math.sqrt(self.config.d_model))
        pos = np.repeat(self.pos_table[None, :length], b, axis=0)
        return self._maybe_dropout(ag.add(emb, Tensor(pos)))

    def _split_heads(self, x: Tensor) -> Tensor:
        b, length, d = x.shape
        h = self.config.n_heads
        return ag.transpose(ag.reshape(x, (b, length, h, d // h)), (0, 2, 1, 3))

    def _merge_heads(self, x: Tensor) -> Tensor:
        b, h, length, dk = x.shape
        return ag.reshape(ag.transpose(x, (0, 2, 1, 3)), (b, length, h * dk))

    def _attention(self, name: str, queries: Tensor, keys_values: Tensor,
                   mask: np.ndarray) -> Tensor:
        q = self._split_heads(self._affine(f"{name}.q", queries))
        k = self._split_heads(self._affine(f"{name}.k", keys_values))
        v = self._split_heads(self._affine(f"{name}.v", keys_values))
        dk = self.config.d_model // self.config.n_heads
        scores = ag.scale(ag.matmul(q, ag.transpose(k, (0, 1, 3, 2))), dk ** -0.5)
        scores = ag.add(scores, Tensor(mask))
        context = ag.matmul(ag.softmax_last_dim(scores), v)
        return self._affine(f"{name}.o", self._merge_heads(context))

    def _key_pad_mask(self, pad: np.ndarray, n_queries: int) -> np.ndarray:
        """(B, h, Q, K) additive mask switching off padded keys."""
        b, n_keys = pad.shape
        mask = np.where(pad, _MASK_OFF, 0.0)[:, None, None, :]
        return np.ascontiguousarray(
            np.broadcast_to(mask, (b, self.config.n_heads, n_queries, n_keys)))

    def _causal_mask(self, pad: np.ndarray) -> np.ndarray:
        b, length = pad.shape
        future = np.triu(np.full((length, length), _MASK_OFF), k=1)
        mask = future[None, None] + np.where(pad, _MASK_OFF, 0.0)[:, None, None, :]
        return np.ascontiguousarray(
            np.broadcast_to(mask, (b, self.config.n_heads, length, length)))

    def encode_batch(self, src: np.ndarray,
                     features: Optional[np.ndarray] = None) -> Tensor:
        """Encoder stack over (B x L) ids; optional fused image features (B x d_img)."""
        pad = src == PAD_ID
        x = self._embed(src)
        mask = self._key_pad_mask(pad, src.shape[1])
        for i in range(self.config.n_enc_layers):
            base = f"enc{i}"
            attn = self._maybe_dropout(self._attention(f"{base}.self", x, x, mask))
            x = ag.layer_norm(ag.add(x, attn),
                              self.params[f"{base}.ln1.g"], self.params[f"{base}.ln1.b"])
            hidden = ag.relu(self._affine(f"{base}.ffn1", x))
            ffn = self._maybe_dropout(self._affine(f"{base}.ffn2", hidden))
            x = ag.layer_norm(ag.add(x, ffn),
                              self.params[f"{base}.ln2.g"], self.params[f"{base}.ln2.b"])
        if self.fusion is not None:
            if features is None:
                features = np.zeros((src.shape[0], self.fusion.d_img))
            h_image = self.fusion.project_image_batch(features, src.shape[1])
            x = self.fusion.fuse(x, h_image)
        return x

    def decode_batch(self, tgt_in: np.ndarray, enc_out: Tensor,
                     src: np.ndarray) -> Tensor:
        """Decoder stack: (B x T) ids against encoder output; returns logits."""
        tgt_pad = tgt_in == PAD_ID
        x = self._embed(tgt_in)
        self_mask = self._causal_mask(tgt_pad)
        cross_mask = self._key_pad_mask(src == PAD_ID, tgt_in.shape[1])
        for i in range(self.config.n_dec_layers):
            base = f"dec{i}"
            attn = self._maybe_dropout(self._attention(f"{base}.self", x, x, self_mask))
            x = ag.layer_norm(ag.add(x, attn),
                              self.params[f"{base}.ln1.g"], self.params[f"{base}.ln1.b"])
            cross = self._maybe_dropout(
                self._attention(f"{base}.cross", x, enc_out, cross_mask))
            x = ag.layer_norm(ag.add(x, cross),
                              self.params[f"{base}.ln2.g"], self.params[f"{base}.ln2.b"])
            hidden = ag.relu(self._affine(f"{base}.ffn1", x))
            ffn = self._maybe_dropout(self._affine(f"{base}.ffn2", hidden))
            x = ag.layer_norm(ag.add(x, ffn),
                              self.params[f"{base}.ln3.g"], self.params[f"{base}.ln3.b"])
        return self._affine("out", x)

    def encode(self, src: TokenSequence,
               image: Optional[ImageFeature] = None) -> Tensor:
        """Single-sequence encoder output with shape (L x d_model)."""
        ids = np.asarray([src.ids], dtype=np.int64)
        features = None
        if self.fusion is not None:
            feat = image if image is not None else zero_feature(self.fusion.d_img)
            features = feat.vector[None, :]
        out = self.encode_batch(ids, features)
        return ag.reshape(out, out.shape[1:])

    # -- training --------------------------------------------------------

    def _pad_batch(self, seqs: Sequence[TokenSequence]) -> np.ndarray:
        width = max(len(s.ids) for s in seqs)
        return np.asarray([s.padded(width) for s in seqs], dtype=np.int64)

    def batch_loss(self, batch: Sequence) -> Tensor:
        """Teacher-forced mean cross entropy; PAD label positions are ignored.

        ``batch`` items are (src, tgt) or (src, tgt, ImageFeature-or-None)
        tuples of TokenSequences that already carry BOS/EOS.
        """
        if not batch:
            raise ValueError("batch_loss: empty batch")
        src = self._pad_batch([item[0] for item in batch])
        tgt = self._pad_batch([item[1] for item in batch])
        features = None
        if self.fusion is not None:
            features = np.zeros((len(batch), self.fusion.d_img))
            for row, item in enumerate(batch):
                if len(item) > 2 and item[2] is not None:
                    features[row] = item[2].vector
        enc_out = self.encode_batch(src, features)
        dec_in = tgt[:, :-1]
        labels = tgt[:, 1:]
        logits = self.decode_batch(dec_in, enc_out, src)
        flat = ag.reshape(logits, (labels.size, self.config.vocab_size))
        return ag.softmax_cross_entropy(flat, labels.reshape(-1), ignore_index=PAD_ID)


def train_step(model: EncoderDecoderModel, batch: Sequence, optimizer) -> float:
    """One forward/backward/update; returns the mean batch loss."""
    model.train()
    optimizer.zero_grad()
    loss = model.batch_loss(batch)
    ag.backward(loss)
    optimizer.step()
    return loss.item()


# -- decoding -------------------------------------------------------------


def _log_softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _normalized(score: float, ids: Sequence[int], alpha: float) -> float:
    generated = max(len(ids) - 1, 1)  # tokens after BOS
    return score / (generated ** alpha)


def generate(model: EncoderDecoderModel, src: TokenSequence, cfg: DecodeConfig,
             image: Optional[ImageFeature] = None) -> TokenSequence:
    """Beam search with length penalty (beam_size=1 is exactly greedy).

    Beams that emit EOS retire from the live set; the best finished
    hypothesis under ``score / generated_len**length_penalty`` wins, with
    ties broken by the lexicographically smaller token-id sequence. Always
    terminates by max_decode_len.
    """
    was_training = model.training
    model.eval()
    try:
        with ag.no_grad():
            result = _beam_search(model, src, cfg, image)
    finally:
        model.training = was_training
    return result


def _beam_search(model, src, cfg, image) -> TokenSequence:
    src_ids = np.asarray([src.ids], dtype=np.int64)
    features = None
    if model.fusion is not None:
        feat = image if image is not None else zero_feature(model.fusion.d_img)
        features = feat.vector[None, :]
    enc_single = model.encode_batch(src_ids, features)

    live: List[Tuple[Tuple[int, ...], float]] = [((BOS_ID,), 0.0)]
    finished: List[Tuple[float, Tuple[int, ...]]] = []
    alpha = cfg.length_penalty
    # decoder input includes BOS, so it may grow to max_len - 1 new tokens
    max_steps = min(cfg.max_decode_len, model.config.max_len - 1)

    for _ in range(max_steps):
        n_live = len(live)
        tgt = np.asarray([ids for ids, _ in live], dtype=np.int64)
        enc_data = np.repeat(enc_single.data, n_live, axis=0)
        src_rep = np.repeat(src_ids, n_live, axis=0)
        logits = model.decode_batch(tgt, Tensor(enc_data), src_rep)
        log_probs = _log_softmax_rows(logits.data[:, -1, :])

        candidates: List[Tuple[float, Tuple[int, ...]]] = []
        for b, (ids, score) in enumerate(live):
            row = log_probs[b]
            for token in range(row.shape[0]):
                candidates.append((score + row[token], ids + (token,)))
        candidates.sort(key=lambda c: (-c[0], c[1]))

        live = []
        for score, ids in candidates[: cfg.beam_size]:
            if ids[-1] == EOS_ID:
                finished.append((_normalized(score, ids, alpha), ids))
            else:
                live.append((ids, score))
        if not live:
            break

    for ids, score in live:  # hit the length cap without EOS
        finished.append((_normalized(score, ids, alpha), ids))
    finished.sort(key=lambda c: (-c[0], c[1]))
    return TokenSequence.of(list(finished[0][1]))
