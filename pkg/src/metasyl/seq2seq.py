"""Embedding + single-layer LSTM encoder/decoder without attention.

The learner maps an underlying form to a syllabified surface form: the
encoder consumes the input one phoneme at a time, its final state seeds
the decoder, and the decoder emits surface tokens (phonemes, syllable
boundaries) until an end-of-sequence token.  Forward passes are written
with the autodiff primitives, so the same code serves plain-numpy
evaluation, gradient training, and the graph-mode passes used for exact
meta-gradients.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Node, ParameterVector
from .phonology import CONSONANTS, MAX_INPUT_LEN, VOWELS

PAD, SOS, EOS, BOUNDARY = "<pad>", "<s>", "</s>", "."


class Vocabulary:
    """Bijective token <-> index map over the fixed surface alphabet."""

    def __init__(self, tokens: tuple[str, ...]):
        self.tokens = tokens
        self.index = {t: i for i, t in enumerate(tokens)}
        if len(self.index) != len(tokens):
            raise ValueError("duplicate tokens in vocabulary")
        self.pad = self.index[PAD]
        self.sos = self.index[SOS]
        self.eos = self.index[EOS]

    @classmethod
    def default(cls) -> "Vocabulary":
        return cls((PAD, SOS, EOS, BOUNDARY) + CONSONANTS + VOWELS)

    def __len__(self) -> int:
        return len(self.tokens)

    def encode(self, text: str) -> list[int]:
        try:
            return [self.index[ch] for ch in text]
        except KeyError as exc:
            raise ValueError(f"token {exc.args[0]!r} not in vocabulary") from None

    def decode(self, ids) -> str:
        return "".join(self.tokens[i] for i in ids)


VOCAB = Vocabulary.default()


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int = 10
    hidden_dim: int = 32
    max_decode_len: int = 4 * MAX_INPUT_LEN + 2

    def __post_init__(self) -> None:
        if min(self.embed_dim, self.hidden_dim, self.max_decode_len) <= 0:
            raise ValueError(f"config fields must be positive: {self}")

    def to_dict(self) -> dict:
        return {
            "embed_dim": self.embed_dim,
            "hidden_dim": self.hidden_dim,
            "max_decode_len": self.max_decode_len,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def init_params(
    config: ModelConfig, rng: np.random.Generator, vocab: Vocabulary = VOCAB
) -> ParameterVector:
    """All blocks uniform in (-1/sqrt(hidden_dim), +1/sqrt(hidden_dim))."""
    v, e, h = len(vocab), config.embed_dim, config.hidden_dim
    scale = 1.0 / np.sqrt(h)
    shapes = {
        "embed": (v, e),
        "enc_wx": (e, 4 * h),
        "enc_wh": (h, 4 * h),
        "enc_b": (4 * h,),
        "dec_wx": (e, 4 * h),
        "dec_wh": (h, 4 * h),
        "dec_b": (4 * h,),
        "out_w": (h, v),
        "out_b": (v,),
    }
    return ParameterVector(
        {name: rng.uniform(-scale, scale, shape) for name, shape in shapes.items()}
    )


def leaf_nodes(params: ParameterVector) -> dict[str, Node]:
    return {name: Node(block) for name, block in params}


def _blocks_of(params) -> dict:
    if isinstance(params, ParameterVector):
        return dict(params)
    return params


def _lstm_step(x, h, c, wx, wh, b, mask=None):
    """One LSTM step over a batch; gate order i, f, g, o.  mask is a
    constant (B, H) 0/1 array freezing state rows past sequence end."""
    z = ad.add(ad.add(ad.matmul(x, wx), ad.matmul(h, wh)), b)
    gi, gf, gg, go = ad.split_cols(z, 4)
    i, f, o = ad.sigmoid(gi), ad.sigmoid(gf), ad.sigmoid(go)
    g = ad.tanh(gg)
    c_new = ad.add(ad.mul(f, c), ad.mul(i, g))
    h_new = ad.mul(o, ad.tanh(c_new))
    if mask is not None:
        keep = 1.0 - mask
        c_new = ad.add(ad.mul(mask, c_new), ad.mul(keep, c))
        h_new = ad.add(ad.mul(mask, h_new), ad.mul(keep, h))
    return h_new, c_new


def _pad_ids(seqs: list[list[int]], pad: int) -> tuple[np.ndarray, np.ndarray]:
    lengths = np.array([len(s) for s in seqs], dtype=np.intp)
    width = max(1, int(lengths.max(initial=0)))
    ids = np.full((len(seqs), width), pad, dtype=np.intp)
    for r, seq in enumerate(seqs):
        ids[r, : len(seq)] = seq
    return ids, lengths


def _encode_batch(ids, lengths, blocks, config: ModelConfig):
    n, width = ids.shape
    h = np.zeros((n, config.hidden_dim))
    c = np.zeros((n, config.hidden_dim))
    for t in range(width):
        if (lengths <= t).all():
            break
        x = ad.gather_rows(blocks["embed"], ids[:, t])
        mask = np.repeat((t < lengths).astype(float)[:, None], config.hidden_dim, axis=1)
        h, c = _lstm_step(x, h, c, blocks["enc_wx"], blocks["enc_wh"], blocks["enc_b"], mask)
    return h, c


def encode(input_str: str, params, config: ModelConfig, vocab: Vocabulary = VOCAB):
    """Final (hidden, cell) state after feeding the input one phoneme at a
    time; an empty input leaves the zero initial state unchanged."""
    blocks = _blocks_of(params)
    ids, lengths = _pad_ids([vocab.encode(input_str)], vocab.pad)
    if len(input_str) == 0:
        z = np.zeros((1, config.hidden_dim))
        return z[0], z[0]
    h, c = _encode_batch(ids, lengths, blocks, config)
    return ad.value_of(h)[0], ad.value_of(c)[0]


def teacher_forced_loss(
    pairs,
    params,
    config: ModelConfig,
    vocab: Vocabulary = VOCAB,
    reduction: str = "mean",
):
    """Cross-entropy of the teacher-forced decoder.

    Each pair contributes the mean cross-entropy over its target tokens
    (the target is the output string plus EOS); reduction 'mean' averages
    the per-pair losses, 'sum' adds them.
    """
    if isinstance(pairs, tuple) and len(pairs) == 2 and isinstance(pairs[0], str):
        pairs = [pairs]
    if reduction not in ("mean", "sum"):
        raise ValueError(f"unknown reduction {reduction!r}")
    if not pairs:
        raise ValueError("teacher_forced_loss needs at least one pair")
    blocks = _blocks_of(params)
    n = len(pairs)
    enc_ids, enc_len = _pad_ids([vocab.encode(x) for x, _ in pairs], vocab.pad)
    tgt_ids, tgt_len = _pad_ids(
        [vocab.encode(y) + [vocab.eos] for _, y in pairs], vocab.pad
    )
    width = tgt_ids.shape[1]
    if width > config.max_decode_len:
        raise ValueError(
            f"target length {width} exceeds max_decode_len {config.max_decode_len}"
        )
    h, c = _encode_batch(enc_ids, enc_len, blocks, config)
    dec_in = np.concatenate(
        [np.full((n, 1), vocab.sos, dtype=np.intp), tgt_ids[:, :-1]], axis=1
    )
    total = None
    for t in range(width):
        x = ad.gather_rows(blocks["embed"], dec_in[:, t])
        h, c = _lstm_step(x, h, c, blocks["dec_wx"], blocks["dec_wh"], blocks["dec_b"])
        logits = ad.add(ad.matmul(h, blocks["out_w"]), blocks["out_b"])
        step_losses = ad.softmax_cross_entropy(logits, tgt_ids[:, t])
        masked = ad.mul(step_losses, (t < tgt_len).astype(float))
        total = masked if total is None else ad.add(total, masked)
    per_pair = ad.mul(total, 1.0 / tgt_len)
    loss = ad.sum_all(per_pair)
    if reduction == "mean":
        loss = ad.mul(loss, 1.0 / n)
    return loss


def decode_batch(
    inputs: list[str], params, config: ModelConfig, vocab: Vocabulary = VOCAB
) -> list[str]:
    """Greedy decoding for a batch: argmax token per step from SOS until EOS
    or the length cap; ties go to the lowest index.  EOS is stripped; a
    capped sequence is returned in full without EOS."""
    blocks = {k: ad.value_of(v) for k, v in _blocks_of(params).items()}
    n = len(inputs)
    if n == 0:
        return []
    enc_ids, enc_len = _pad_ids([vocab.encode(x) for x in inputs], vocab.pad)
    h, c = _encode_batch(enc_ids, enc_len, blocks, config)
    h, c = ad.value_of(h), ad.value_of(c)
    tokens = np.full((n,), vocab.sos, dtype=np.intp)
    done = np.zeros(n, dtype=bool)
    outputs: list[list[int]] = [[] for _ in range(n)]
    for _ in range(config.max_decode_len):
        x = blocks["embed"][tokens]
        h, c = _lstm_step(x, h, c, blocks["dec_wx"], blocks["dec_wh"], blocks["dec_b"])
        logits = h @ blocks["out_w"] + blocks["out_b"]
        tokens = logits.argmax(axis=1)
        for r in range(n):
            if done[r]:
                continue
            if tokens[r] == vocab.eos:
                done[r] = True
            else:
                outputs[r].append(int(tokens[r]))
        if done.all():
            break
    return [vocab.decode(ids) for ids in outputs]


def greedy_decode(
    input_str: str, params, config: ModelConfig, vocab: Vocabulary = VOCAB
) -> str:
    return decode_batch([input_str], params, config, vocab)[0]


def exact_match_accuracy(
    pairs, params, config: ModelConfig, vocab: Vocabulary = VOCAB
) -> float:
    """Fraction of pairs whose greedy decode equals the target exactly."""
    if not pairs:
        return 0.0
    predictions = decode_batch([x for x, _ in pairs], params, config, vocab)
    return float(np.mean([p == y for p, (_, y) in zip(predictions, pairs)]))


def loss_and_grads(
    pairs, params: ParameterVector, config: ModelConfig, vocab: Vocabulary = VOCAB
) -> tuple[float, ParameterVector]:
    leaves = leaf_nodes(params)
    loss = teacher_forced_loss(pairs, leaves, config, vocab)
    grads = ad.backward(loss, list(leaves.values()))
    return float(loss.value), ParameterVector(dict(zip(leaves.keys(), grads)))


# ---------------------------------------------------------------------------
# Optimizers.

def sgd_step(params: ParameterVector, grads: ParameterVector, lr: float) -> ParameterVector:
    return params.sub(grads.scale(lr))


@dataclass(frozen=True)
class AdamState:
    m: ParameterVector
    v: ParameterVector
    t: int = 0
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, params: ParameterVector, lr: float = 0.001, **kw) -> "AdamState":
        return cls(m=params.zeros_like(), v=params.zeros_like(), lr=lr, **kw)


def adam_step(
    params: ParameterVector, grads: ParameterVector, state: AdamState
) -> tuple[ParameterVector, AdamState]:
    """Standard Adam with bias correction."""
    t = state.t + 1
    m = state.m.scale(state.beta1).add(grads.scale(1 - state.beta1))
    v = state.v.zip_with(
        grads, lambda vv, g: state.beta2 * vv + (1 - state.beta2) * g * g
    )
    m_hat = m.scale(1.0 / (1 - state.beta1**t))
    v_hat = v.scale(1.0 / (1 - state.beta2**t))
    update = m_hat.zip_with(v_hat, lambda mm, vv: mm / (np.sqrt(vv) + state.eps))
    return params.sub(update.scale(state.lr)), replace(state, m=m, v=v, t=t)


# ---------------------------------------------------------------------------
# Checkpoints: named float64 blocks + config + optional metadata, bit-exact.

def save_checkpoint(path, params: ParameterVector, config: ModelConfig,
                    extra: dict | None = None) -> None:
    meta = {
        "block_order": params.names(),
        "config": config.to_dict(),
        "extra": extra or {},
    }
    arrays = {f"block:{name}": block for name, block in params}
    np.savez(path, __meta__=np.array(json.dumps(meta, sort_keys=True)), **arrays)


def load_checkpoint(path) -> tuple[ParameterVector, ModelConfig, dict]:
    with np.load(path, allow_pickle=False) as npz:
        meta = json.loads(str(npz["__meta__"]))
        blocks = {name: npz[f"block:{name}"] for name in meta["block_order"]}
    params = ParameterVector(blocks)
    return params, ModelConfig.from_dict(meta["config"]), meta["extra"]
