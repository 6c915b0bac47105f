"""The hierarchical char->word->sentence regressor and the two RNN baselines.

A sentence is encoded bottom-up: each word's characters run through a
character-level bidirectional GRU whose two final states concatenate
into the word vector; the word vectors run through a word-level
bidirectional GRU whose two final states concatenate into the sentence
vector; a one-hidden-layer MLP (ReLU) maps that to a scalar score.

The character one-hot multiplication is realized as a column lookup
into the embedding table, which is mathematically identical.  Both
character directions share the embedding table; the word baseline
likewise shares its lookup table across directions.

Inverted dropout can be applied at two sites during training: to each
embedding vector entering the top-level recurrent encoder (the composed
word vectors here, the lookup vectors in the baselines' word case) and
to the sentence vector entering the MLP.  Inference never applies a
mask.
"""

from collections import OrderedDict
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import kernel
from .data import CharVocab
from .gru import BiRnnParams, BiRnnTrace, birnn_backward, birnn_forward, birnn_output
from .rng import SplitMix64


class ModelKind(str, Enum):
    AVERAGE = "average"
    BI_GRU_CHAR = "bigru-char"
    BI_GRU_WORD = "bigru-word"
    C2W2S4PT = "c2w2s4pt"


TRAINABLE_KINDS = (ModelKind.C2W2S4PT, ModelKind.BI_GRU_CHAR, ModelKind.BI_GRU_WORD)


@dataclass
class DropoutPlan:
    """Training-time dropout configuration; masks come from a shared stream."""

    rate: float
    rng: SplitMix64
    on_words: bool = True
    on_sentence: bool = True

    def __post_init__(self):
        if not (0.0 <= self.rate < 1.0):
            raise ValueError(f"dropout rate must be in [0, 1), got {self.rate}")

    def draw_mask(self, n: int) -> np.ndarray:
        """Inverted-dropout mask: kept entries carry 1/(1-rate), dropped 0."""
        keep = self.rng.uniforms(n) >= self.rate
        return keep.astype(np.float64) / (1.0 - self.rate)


@dataclass
class MlpHead:
    """ReLU hidden layer plus linear output: y = w_hy @ relu(w_eh x + b_h) + b_y."""

    w_eh: np.ndarray  # mlp_dim x in_dim
    b_h: np.ndarray   # mlp_dim
    w_hy: np.ndarray  # 1 x mlp_dim
    b_y: np.ndarray   # shape (1,)

    def __post_init__(self):
        m, _ = self.w_eh.shape
        if self.b_h.shape != (m,):
            raise ValueError(f"b_h shape {self.b_h.shape} != ({m},)")
        if self.w_hy.shape != (1, m):
            raise ValueError(f"w_hy shape {self.w_hy.shape} != (1, {m})")
        if self.b_y.shape != (1,):
            raise ValueError(f"b_y shape {self.b_y.shape} != (1,)")

    @property
    def in_dim(self) -> int:
        return self.w_eh.shape[1]

    def tensors(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict(
            [("w_eh", self.w_eh), ("b_h", self.b_h), ("w_hy", self.w_hy), ("b_y", self.b_y)]
        )


@dataclass
class HeadTrace:
    x_fed: np.ndarray      # input after any dropout mask
    pre_relu: np.ndarray
    h_s: np.ndarray
    y: float


@dataclass
class WordTrace:
    char_ids: list
    birnn: BiRnnTrace
    e_w: np.ndarray
    mask: np.ndarray  # None when no word-site dropout
    x_fed: np.ndarray


@dataclass
class SentenceTrace:
    """Everything the end-to-end backward pass needs."""

    tokens: tuple
    word_traces: list
    word_birnn: BiRnnTrace
    e_s: np.ndarray
    sent_mask: np.ndarray  # None when no sentence-site dropout
    head: HeadTrace = None


@dataclass
class ModelDims:
    char_dim: int = 50
    char_hidden: int = 256
    word_hidden: int = 256
    mlp_dim: int = 256

    def __post_init__(self):
        for name in ("char_dim", "char_hidden", "word_hidden", "mlp_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


@dataclass
class ModelParams:
    """All tensors of the hierarchical model; the shape chain is validated."""

    e_c: np.ndarray  # char_dim x |C|
    char_birnn: BiRnnParams
    word_birnn: BiRnnParams
    head: MlpHead

    def __post_init__(self):
        if self.char_birnn.input_size != self.e_c.shape[0]:
            raise ValueError(
                f"char rnn input {self.char_birnn.input_size} != embedding dim {self.e_c.shape[0]}"
            )
        if self.word_birnn.input_size != 2 * self.char_birnn.hidden_size:
            raise ValueError(
                f"word rnn input {self.word_birnn.input_size} != "
                f"2 * char hidden {self.char_birnn.hidden_size}"
            )
        if self.head.in_dim != 2 * self.word_birnn.hidden_size:
            raise ValueError(
                f"mlp input {self.head.in_dim} != 2 * word hidden {self.word_birnn.hidden_size}"
            )

    def tensors(self) -> "OrderedDict[str, np.ndarray]":
        out = OrderedDict([("e_c", self.e_c)])
        out.update(self.char_birnn.tensors("char_"))
        out.update(self.word_birnn.tensors("word_"))
        out.update(self.head.tensors())
        return out


@dataclass
class CharGruParams:
    """Character-only baseline: one bi-GRU over the whole normalized text."""

    e_c: np.ndarray
    birnn: BiRnnParams
    head: MlpHead

    def __post_init__(self):
        if self.birnn.input_size != self.e_c.shape[0]:
            raise ValueError("char rnn input dim != embedding dim")
        if self.head.in_dim != 2 * self.birnn.hidden_size:
            raise ValueError("mlp input dim != 2 * hidden")

    def tensors(self) -> "OrderedDict[str, np.ndarray]":
        out = OrderedDict([("e_c", self.e_c)])
        out.update(self.birnn.tensors("char_"))
        out.update(self.head.tensors())
        return out


@dataclass
class WordGruParams:
    """Word-only baseline: trainable token lookup plus one bi-GRU."""

    e_w: np.ndarray  # word_dim x |V|
    birnn: BiRnnParams
    head: MlpHead

    def __post_init__(self):
        if self.birnn.input_size != self.e_w.shape[0]:
            raise ValueError("word rnn input dim != embedding dim")
        if self.head.in_dim != 2 * self.birnn.hidden_size:
            raise ValueError("mlp input dim != 2 * hidden")

    def tensors(self) -> "OrderedDict[str, np.ndarray]":
        out = OrderedDict([("e_w", self.e_w)])
        out.update(self.birnn.tensors("word_"))
        out.update(self.head.tensors())
        return out


@dataclass
class FlatTrace:
    """Trace for the single-level baselines."""

    ids: list
    masks: list  # per-position input masks or None
    birnn: BiRnnTrace
    e_s: np.ndarray
    sent_mask: np.ndarray
    head: HeadTrace = None


def embed_chars(vocab: CharVocab, e_c: np.ndarray, word: str) -> list:
    """Column-lookup embedding of each character; unseen chars map to UNK."""
    if not word:
        raise ValueError("cannot embed an empty word")
    return [e_c[:, vocab.id_of(c)] for c in word]


def compose_word(params: ModelParams, vocab: CharVocab, word: str) -> np.ndarray:
    """Word vector: [final fwd char state ; final bwd char state]."""
    return birnn_output(birnn_forward(params.char_birnn, embed_chars(vocab, params.e_c, word)))


def _head_forward(head: MlpHead, x: np.ndarray) -> HeadTrace:
    pre = kernel.matvec(head.w_eh, x) + head.b_h
    h_s = kernel.relu_v(pre)
    y = float(head.w_hy[0] @ h_s) + float(head.b_y[0])
    return HeadTrace(x_fed=x, pre_relu=pre, h_s=h_s, y=y)


def predict(params, e_s: np.ndarray, mask: np.ndarray = None) -> float:
    """MLP head on the sentence vector; mask only during training."""
    head = params.head if hasattr(params, "head") else params
    x = e_s * mask if mask is not None else e_s
    return _head_forward(head, x).y


def _head_backward(head: MlpHead, tr: HeadTrace, d_y: float, grads: dict) -> np.ndarray:
    d_h_s = head.w_hy[0] * d_y
    d_pre = d_h_s * (tr.pre_relu > 0)
    grads["w_hy"] += d_y * tr.h_s[None, :]
    grads["b_y"] += d_y
    grads["w_eh"] += np.outer(d_pre, tr.x_fed)
    grads["b_h"] += d_pre
    return head.w_eh.T @ d_pre


def encode_sentence(params: ModelParams, vocab: CharVocab, tokens,
                    dropout: DropoutPlan = None):
    """Bottom-up encoding; returns (sentence vector, trace).

    Word masks are drawn in token order, then the sentence mask, so the
    dropout stream is consumed deterministically.
    """
    if not tokens:
        raise ValueError("cannot encode an empty token sequence")
    word_traces = []
    xs = []
    for tok in tokens:
        ids = vocab.ids_of(tok)
        cs = [params.e_c[:, i] for i in ids]
        bt = birnn_forward(params.char_birnn, cs)
        e_w = birnn_output(bt)
        mask = None
        x = e_w
        if dropout is not None and dropout.on_words and dropout.rate > 0.0:
            mask = dropout.draw_mask(e_w.shape[0])
            x = e_w * mask
        word_traces.append(WordTrace(char_ids=ids, birnn=bt, e_w=e_w, mask=mask, x_fed=x))
        xs.append(x)
    wt = birnn_forward(params.word_birnn, xs)
    e_s = birnn_output(wt)
    sent_mask = None
    if dropout is not None and dropout.on_sentence and dropout.rate > 0.0:
        sent_mask = dropout.draw_mask(e_s.shape[0])
    return e_s, SentenceTrace(
        tokens=tuple(tokens), word_traces=word_traces, word_birnn=wt,
        e_s=e_s, sent_mask=sent_mask,
    )


def forward_tweet(params: ModelParams, vocab: CharVocab, tokens,
                  dropout: DropoutPlan = None):
    """Full forward pass; returns (score, trace ready for backward_full)."""
    e_s, trace = encode_sentence(params, vocab, tokens, dropout)
    x = e_s * trace.sent_mask if trace.sent_mask is not None else e_s
    trace.head = _head_forward(params.head, x)
    return trace.head.y, trace


def zero_grads(params) -> "OrderedDict[str, np.ndarray]":
    return OrderedDict((k, np.zeros_like(v)) for k, v in params.tensors().items())


def backward_full(params: ModelParams, trace: SentenceTrace, d_y: float,
                  grads: dict = None) -> dict:
    """Exact gradients of the score w.r.t. every tensor, scaled by d_y.

    Embedding gradients land only in the columns of the characters that
    were actually seen.  Pass grads to accumulate across examples.
    """
    if trace.head is None:
        raise ValueError("trace has no head stage; run forward_tweet first")
    if grads is None:
        grads = zero_grads(params)
    d_in = _head_backward(params.head, trace.head, d_y, grads)
    d_e_s = d_in * trace.sent_mask if trace.sent_mask is not None else d_in
    wg, d_xs = birnn_backward(params.word_birnn, trace.word_birnn, d_e_s)
    for k, v in wg.items():
        grads["word_" + k] += v
    for wt, d_x in zip(trace.word_traces, d_xs):
        d_e_w = d_x * wt.mask if wt.mask is not None else d_x
        cg, d_cs = birnn_backward(params.char_birnn, wt.birnn, d_e_w)
        for k, v in cg.items():
            grads["char_" + k] += v
        for cid, d_c in zip(wt.char_ids, d_cs):
            grads["e_c"][:, cid] += d_c
    return grads


def flat_forward(params, ids: list, dropout: DropoutPlan = None,
                 mask_inputs: bool = False):
    """Shared forward for the single-level baselines over embedding ids."""
    if not ids:
        raise ValueError("cannot encode an empty id sequence")
    table = params.e_c if isinstance(params, CharGruParams) else params.e_w
    xs, masks = [], []
    for i in ids:
        v = table[:, i]
        mask = None
        if mask_inputs and dropout is not None and dropout.on_words and dropout.rate > 0.0:
            mask = dropout.draw_mask(v.shape[0])
            v = v * mask
        xs.append(v)
        masks.append(mask)
    bt = birnn_forward(params.birnn, xs)
    e_s = birnn_output(bt)
    sent_mask = None
    if dropout is not None and dropout.on_sentence and dropout.rate > 0.0:
        sent_mask = dropout.draw_mask(e_s.shape[0])
    x = e_s * sent_mask if sent_mask is not None else e_s
    head = _head_forward(params.head, x)
    trace = FlatTrace(ids=list(ids), masks=masks, birnn=bt, e_s=e_s,
                      sent_mask=sent_mask, head=head)
    return head.y, trace


def flat_backward(params, trace: FlatTrace, d_y: float, grads: dict = None) -> dict:
    if grads is None:
        grads = zero_grads(params)
    prefix = "char_" if isinstance(params, CharGruParams) else "word_"
    table_key = "e_c" if isinstance(params, CharGruParams) else "e_w"
    d_in = _head_backward(params.head, trace.head, d_y, grads)
    d_e_s = d_in * trace.sent_mask if trace.sent_mask is not None else d_in
    bg, d_xs = birnn_backward(params.birnn, trace.birnn, d_e_s)
    for k, v in bg.items():
        grads[prefix + k] += v
    for i, mask, d_x in zip(trace.ids, trace.masks, d_xs):
        d_v = d_x * mask if mask is not None else d_x
        grads[table_key][:, i] += d_v
    return grads


def mse_loss(preds, truths) -> float:
    """Mean squared error over paired sequences."""
    if len(preds) != len(truths):
        raise ValueError(f"length mismatch: {len(preds)} predictions vs {len(truths)} truths")
    if len(preds) == 0:
        raise ValueError("mse_loss requires at least one pair")
    p = np.asarray(preds, dtype=np.float64)
    t = np.asarray(truths, dtype=np.float64)
    return float(np.mean((t - p) ** 2))


def _gru_from(tensors: dict, prefix: str):
    from .gru import GruParams

    return GruParams(**{name: tensors[prefix + name]
                        for name in ("w_z", "w_r", "w_h", "u_z", "u_r", "u_h",
                                     "b_z", "b_r", "b_h")})


def build_params(kind: ModelKind, tensors: dict):
    """Reassemble a parameter bundle from named tensors (checkpoint path)."""
    head = MlpHead(w_eh=tensors["w_eh"], b_h=tensors["b_h"],
                   w_hy=tensors["w_hy"], b_y=tensors["b_y"])
    if kind == ModelKind.C2W2S4PT:
        return ModelParams(
            e_c=tensors["e_c"],
            char_birnn=BiRnnParams(_gru_from(tensors, "char_fwd."), _gru_from(tensors, "char_bwd.")),
            word_birnn=BiRnnParams(_gru_from(tensors, "word_fwd."), _gru_from(tensors, "word_bwd.")),
            head=head,
        )
    if kind == ModelKind.BI_GRU_CHAR:
        return CharGruParams(
            e_c=tensors["e_c"],
            birnn=BiRnnParams(_gru_from(tensors, "char_fwd."), _gru_from(tensors, "char_bwd.")),
            head=head,
        )
    if kind == ModelKind.BI_GRU_WORD:
        return WordGruParams(
            e_w=tensors["e_w"],
            birnn=BiRnnParams(_gru_from(tensors, "word_fwd."), _gru_from(tensors, "word_bwd.")),
            head=head,
        )
    raise ValueError(f"kind {kind} has no tensor bundle")


@dataclass
class Regressor:
    """One trainable model: kind, its parameter bundle and its vocabulary."""

    kind: ModelKind
    params: object
    vocab: object  # CharVocab or WordVocab

    def tensors(self) -> "OrderedDict[str, np.ndarray]":
        return self.params.tensors()

    def forward(self, tweet, dropout: DropoutPlan = None):
        """(score, trace) for one tweet (anything with tokens/normalized_text)."""
        if self.kind == ModelKind.C2W2S4PT:
            return forward_tweet(self.params, self.vocab, tweet.tokens, dropout)
        if self.kind == ModelKind.BI_GRU_CHAR:
            ids = self.vocab.ids_of(tweet.normalized_text)
            return flat_forward(self.params, ids, dropout, mask_inputs=False)
        if self.kind == ModelKind.BI_GRU_WORD:
            ids = [self.vocab.id_of(t) for t in tweet.tokens]
            return flat_forward(self.params, ids, dropout, mask_inputs=True)
        raise ValueError(f"kind {self.kind} is not a forward model")

    def backward(self, trace, d_y: float, grads: dict = None) -> dict:
        if self.kind == ModelKind.C2W2S4PT:
            return backward_full(self.params, trace, d_y, grads)
        return flat_backward(self.params, trace, d_y, grads)

    def score(self, tweet) -> float:
        return self.forward(tweet)[0]

    def embedding(self, tweet) -> np.ndarray:
        """Sentence vector fed to the MLP head (inference, no dropout)."""
        if self.kind == ModelKind.C2W2S4PT:
            return encode_sentence(self.params, self.vocab, tweet.tokens)[0]
        _, trace = self.forward(tweet)
        return trace.e_s
