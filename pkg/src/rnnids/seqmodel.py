"""Byte-level multi-layer LSTM language model written directly against numpy.

The model reads a corpus one octet at a time, learns to predict the next
octet, and can then be sampled to produce new sequences resembling the
training data (worm mutants, synthetic signature text).

Gate weights of each layer are kept stacked in the order (i, f, z, o) so a
cell step costs one matrix-vector product per weight matrix; the per-gate
views ``W_i``, ``R_f`` ... are exposed as properties.
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import _kernels
from .errors import (
    EmptyCorpus,
    ModelFormatError,
    ShapeError,
    TooShort,
    TrainingDiverged,
    UnknownToken,
)

GATES = ("i", "f", "z", "o")
MODEL_MAGIC = b"RNNIDS-LSTM\x01"
INIT_SCALE = 0.08
FORGET_BIAS = 1.0
DEFAULT_HIDDEN_CAP = 512
OPTIMIZERS = ("sgd", "adam")


@dataclass(frozen=True)
class TokenCorpus:
    raw: bytes
    vocab: tuple  # token id -> octet value
    name: str = "corpus"

    def __post_init__(self):
        index = {octet: i for i, octet in enumerate(self.vocab)}
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "tokens", self.encode(self.raw))

    def __len__(self):
        return len(self.raw)

    @property
    def vocab_size(self):
        return len(self.vocab)

    def encode(self, data: bytes) -> np.ndarray:
        try:
            return np.array([self._index[b] for b in data], dtype=np.int64)
        except KeyError as exc:
            raise UnknownToken(f"octet 0x{exc.args[0]:02x} not in vocabulary") from None

    def decode(self, ids: Iterable[int]) -> bytes:
        return bytes(self.vocab[int(i)] for i in ids)


def encode_corpus(raw: bytes, name: str = "corpus") -> TokenCorpus:
    """Build a corpus whose vocabulary lists octets in first-occurrence order."""
    raw = bytes(raw)
    if not raw:
        raise EmptyCorpus(f"corpus {name!r} is empty")
    seen = dict.fromkeys(raw)
    return TokenCorpus(raw=raw, vocab=tuple(seen), name=name)


def read_corpus(path) -> TokenCorpus:
    path = Path(path)
    return encode_corpus(path.read_bytes(), name=path.name)


@dataclass(frozen=True)
class LstmConfig:
    batch_size: int = 1
    learning_rate: float = 0.001
    epochs: int = 100
    num_hidden_layers: int = 2
    embedding_size: int = 64
    sequence_length: int = 1
    hidden_size: Optional[int] = None  # None: corpus length, capped at hidden_cap
    hidden_cap: int = DEFAULT_HIDDEN_CAP
    rng_seed: int = 0
    temperature: float = 1.0
    grad_clip: float = 5.0
    optimizer: str = "adam"

    def __post_init__(self):
        for name in ("batch_size", "epochs", "num_hidden_layers", "embedding_size",
                     "sequence_length", "hidden_cap"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.hidden_size is not None and self.hidden_size < 1:
            raise ValueError("hidden_size must be >= 1")
        # learning_rate == 0 is accepted: it freezes the parameters
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if not self.temperature > 0:
            raise ValueError("temperature must be > 0")
        if not self.grad_clip > 0:
            raise ValueError("grad_clip must be > 0")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")

    def resolve_hidden_size(self, corpus_length: int) -> int:
        if self.hidden_size is not None:
            return self.hidden_size
        return max(1, min(corpus_length, self.hidden_cap))


@dataclass
class LstmLayerParams:
    W: np.ndarray  # (4H, D), rows stacked i, f, z, o
    R: np.ndarray  # (4H, H)
    b: np.ndarray  # (4H,)

    def __post_init__(self):
        four_h = self.b.shape[0]
        if four_h % 4 or self.W.shape[0] != four_h or self.R.shape != (four_h, four_h // 4):
            raise ShapeError(
                f"inconsistent layer shapes W{self.W.shape} R{self.R.shape} b{self.b.shape}"
            )

    @classmethod
    def from_gates(cls, **arrays):
        """Assemble a layer from ``W_i`` ... ``b_o`` keyword arrays."""
        W = np.concatenate([np.atleast_2d(arrays[f"W_{g}"]) for g in GATES])
        R = np.concatenate([np.atleast_2d(arrays[f"R_{g}"]) for g in GATES])
        b = np.concatenate([np.ravel(arrays[f"b_{g}"]) for g in GATES])
        return cls(W.astype(np.float64), R.astype(np.float64), b.astype(np.float64))

    @property
    def hidden_size(self):
        return self.R.shape[1]

    @property
    def input_dim(self):
        return self.W.shape[1]

    def gate(self, kind, gate):
        h = self.hidden_size
        k = GATES.index(gate)
        return getattr(self, kind)[k * h:(k + 1) * h]

    W_i = property(lambda self: self.gate("W", "i"))
    W_f = property(lambda self: self.gate("W", "f"))
    W_z = property(lambda self: self.gate("W", "z"))
    W_o = property(lambda self: self.gate("W", "o"))
    R_i = property(lambda self: self.gate("R", "i"))
    R_f = property(lambda self: self.gate("R", "f"))
    R_z = property(lambda self: self.gate("R", "z"))
    R_o = property(lambda self: self.gate("R", "o"))
    b_i = property(lambda self: self.gate("b", "i"))
    b_f = property(lambda self: self.gate("b", "f"))
    b_z = property(lambda self: self.gate("b", "z"))
    b_o = property(lambda self: self.gate("b", "o"))

    def arrays(self):
        return [self.W, self.R, self.b]


@dataclass
class LstmState:
    h: list
    c: list

    @classmethod
    def zeros(cls, sizes):
        return cls([np.zeros(n) for n in sizes], [np.zeros(n) for n in sizes])

    def copy(self):
        return LstmState([x.copy() for x in self.h], [x.copy() for x in self.c])


@dataclass
class LstmModel:
    layers: list
    embedding: np.ndarray  # (V, E)
    out_W: np.ndarray  # (V, H_top)
    out_b: np.ndarray  # (V,)
    vocab: tuple
    config: LstmConfig
    loss_trace: list = field(default_factory=list)

    def __post_init__(self):
        v = len(self.vocab)
        if self.embedding.shape[0] != v or self.out_W.shape[0] != v or self.out_b.shape != (v,):
            raise ShapeError("embedding/output rows must equal vocabulary size")
        expected = self.embedding.shape[1]
        for k, layer in enumerate(self.layers):
            if layer.input_dim != expected:
                raise ShapeError(f"layer {k} expects input {layer.input_dim}, gets {expected}")
            expected = layer.hidden_size
        if self.out_W.shape[1] != expected:
            raise ShapeError("output projection does not match top hidden size")
        self._index = {octet: i for i, octet in enumerate(self.vocab)}

    @property
    def vocab_size(self):
        return len(self.vocab)

    @property
    def hidden_sizes(self):
        return [layer.hidden_size for layer in self.layers]

    def parameters(self):
        """Every parameter array, in the fixed persistence order."""
        params = [self.embedding]
        for layer in self.layers:
            params.extend(layer.arrays())
        params.extend([self.out_W, self.out_b])
        return params

    def token_ids(self, data: bytes):
        try:
            return [self._index[b] for b in data]
        except KeyError as exc:
            raise UnknownToken(f"octet 0x{exc.args[0]:02x} not in model vocabulary") from None

    def initial_state(self):
        return LstmState.zeros(self.hidden_sizes)

    def copy(self):
        return LstmModel(
            layers=[LstmLayerParams(l.W.copy(), l.R.copy(), l.b.copy()) for l in self.layers],
            embedding=self.embedding.copy(),
            out_W=self.out_W.copy(),
            out_b=self.out_b.copy(),
            vocab=self.vocab,
            config=self.config,
            loss_trace=list(self.loss_trace),
        )


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def init_model(vocab, config: LstmConfig, hidden_size: int) -> LstmModel:
    """Uniform(-0.08, 0.08) weights, zero biases except forget gate at 1.0."""
    rng = np.random.default_rng(config.rng_seed)
    v, e, h = len(vocab), config.embedding_size, hidden_size

    def uniform(*shape):
        return rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape)

    embedding = uniform(v, e)
    layers = []
    d = e
    for _ in range(config.num_hidden_layers):
        b = np.zeros(4 * h)
        b[h:2 * h] = FORGET_BIAS
        layers.append(LstmLayerParams(uniform(4 * h, d), uniform(4 * h, h), b))
        d = h
    return LstmModel(layers, embedding, uniform(v, h), np.zeros(v), tuple(vocab), config)


def _cell_forward(params: LstmLayerParams, x, h_prev, c_prev):
    n = params.hidden_size
    a = params.W @ x + params.R @ h_prev + params.b
    i = sigmoid(a[:n])
    f = sigmoid(a[n:2 * n])
    z = np.tanh(a[2 * n:3 * n])
    o = sigmoid(a[3 * n:])
    c = f * c_prev + i * z
    tanh_c = np.tanh(c)
    h = o * tanh_c
    return h, c, (x, h_prev, c_prev, i, f, z, o, tanh_c)


def lstm_cell_step(params: LstmLayerParams, x, h_prev, c_prev):
    """One LSTM time step; returns the new (h, c)."""
    x = np.asarray(x, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    c_prev = np.asarray(c_prev, dtype=np.float64)
    n = params.hidden_size
    if x.shape != (params.input_dim,):
        raise ShapeError(f"x has shape {x.shape}, layer expects ({params.input_dim},)")
    if h_prev.shape != (n,) or c_prev.shape != (n,):
        raise ShapeError(f"state shapes {h_prev.shape}/{c_prev.shape}, expected ({n},)")
    h, c, _ = _cell_forward(params, x, h_prev, c_prev)
    return h, c


def _cell_backward(params, cache, dh, dc_next, grad):
    """Backprop one cell step; ``grad`` is the layer's [W, R, b] accumulator."""
    x, h_prev, c_prev, i, f, z, o, tanh_c = cache
    do = dh * tanh_c
    dc = dc_next + dh * o * (1.0 - tanh_c * tanh_c)
    da = np.concatenate([
        dc * z * i * (1.0 - i),
        dc * c_prev * f * (1.0 - f),
        dc * i * (1.0 - z * z),
        do * o * (1.0 - o),
    ])
    grad[0].add(da, x)
    grad[1].add(da, h_prev)
    grad[2] += da
    return params.W.T @ da, params.R.T @ da, dc * f


def _softmax(logits):
    shifted = logits - logits.max()
    p = np.exp(shifted)
    return p / p.sum()


def _run(model: LstmModel, inputs, targets, state: LstmState, keep_cache=True):
    """Forward ``inputs`` from ``state``; returns (summed NLL, caches, end state)."""
    h = list(state.h)
    c = list(state.c)
    loss = 0.0
    caches = []
    for tok, target in zip(inputs, targets):
        x = model.embedding[tok]
        layer_caches = []
        for k, layer in enumerate(model.layers):
            h[k], c[k], cache = _cell_forward(layer, x, h[k], c[k])
            layer_caches.append(cache)
            x = h[k]
        logits = model.out_W @ x + model.out_b
        shifted = logits - logits.max()
        log_z = math.log(np.exp(shifted).sum())
        loss -= shifted[target] - log_z
        if keep_cache:
            caches.append((tok, target, layer_caches, shifted, log_z, x))
    return loss, caches, LstmState(h, c)


class _LowRank:
    """Matrix gradient kept as ``sum_k outer(a_k, b_k)``."""

    def __init__(self, shape):
        self.shape = shape
        self.a = []
        self.b = []
        self.scale = 1.0

    def add(self, a, b):
        self.a.append(a)
        self.b.append(b)

    def factors(self):
        if not self.a:
            return np.zeros((0, self.shape[0])), np.zeros((0, self.shape[1]))
        return np.asarray(self.a) * self.scale, np.asarray(self.b)

    def __imul__(self, factor):
        self.scale *= factor
        return self

    def dense(self):
        A, B = self.factors()
        return A.T @ B

    def sq_norm(self):
        A, B = self.factors()
        return float(np.sum((A @ A.T) * (B @ B.T)))


def _zero_grads(model):
    grads = [np.zeros_like(model.embedding)]
    for layer in model.layers:
        grads += [_LowRank(layer.W.shape), _LowRank(layer.R.shape), np.zeros_like(layer.b)]
    grads += [_LowRank(model.out_W.shape), np.zeros_like(model.out_b)]
    return grads


def _dense(g):
    return g.dense() if isinstance(g, _LowRank) else g


def _backprop(model: LstmModel, caches, grads, scale=1.0):
    """Accumulate ``scale`` * d(summed NLL)/d(params) over one truncation window."""
    n_layers = len(model.layers)
    g_emb, g_out_W, g_out_b = grads[0], grads[-2], grads[-1]
    g_layers = [grads[1 + 3 * k:4 + 3 * k] for k in range(n_layers)]
    dh_next = [np.zeros(n) for n in model.hidden_sizes]
    dc_next = [np.zeros(n) for n in model.hidden_sizes]
    for tok, target, layer_caches, shifted, log_z, h_top in reversed(caches):
        dlogits = np.exp(shifted - log_z)
        dlogits[target] -= 1.0
        dlogits *= scale
        g_out_W.add(dlogits, h_top)
        g_out_b += dlogits
        dx = model.out_W.T @ dlogits
        for k in range(n_layers - 1, -1, -1):
            dx, dh_next[k], dc_next[k] = _cell_backward(
                model.layers[k], layer_caches[k], dx + dh_next[k], dc_next[k], g_layers[k]
            )
        g_emb[tok] += dx
    return grads


def _windows(n_positions, window):
    for start in range(0, n_positions, window):
        yield start, min(start + window, n_positions)


def _check_length(tokens):
    if len(tokens) < 2:
        raise TooShort("need at least 2 tokens to form a next-token target")


def forward_loss(model: LstmModel, corpus: TokenCorpus):
    """Mean next-token cross-entropy over the whole corpus.

    State threads through the corpus; the returned caches are split at
    ``sequence_length`` boundaries, which is where :func:`loss_gradients`
    truncates backpropagation.
    """
    tokens = corpus.tokens if isinstance(corpus, TokenCorpus) else np.asarray(corpus)
    _check_length(tokens)
    state = model.initial_state()
    total = 0.0
    windows = []
    for start, stop in _windows(len(tokens) - 1, model.config.sequence_length):
        loss, caches, state = _run(model, tokens[start:stop], tokens[start + 1:stop + 1], state)
        total += loss
        windows.append(caches)
    return total / (len(tokens) - 1), windows


def loss_gradients(model: LstmModel, windows):
    """Dense gradients of the mean loss for caches returned by :func:`forward_loss`."""
    n = sum(len(w) for w in windows)
    grads = _zero_grads(model)
    for caches in windows:
        _backprop(model, caches, grads, scale=1.0 / n)
    return [_dense(g) for g in grads]


def _clip(grads, max_norm):
    norm = math.sqrt(sum(
        g.sq_norm() if isinstance(g, _LowRank) else float(np.vdot(g, g)) for g in grads
    ))
    if norm > max_norm:
        factor = max_norm / norm
        for g in grads:
            g *= factor
    return norm


class _Sgd:
    def __init__(self, lr):
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            if isinstance(g, _LowRank):
                A, B = g.factors()
                _kernels.sgd_lowrank(p, A, B, self.lr)
            else:
                p -= self.lr * g


class _Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        lr_t = self.lr * math.sqrt(1 - self.beta2 ** self.t) / (1 - self.beta1 ** self.t)
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if isinstance(g, _LowRank):
                A, B = g.factors()
                _kernels.adam_lowrank(p, m, v, A, B, lr_t, self.beta1, self.beta2, self.eps)
            else:
                _kernels.adam_dense(p, m, v, g, lr_t, self.beta1, self.beta2, self.eps)


def train(corpus: TokenCorpus, config: LstmConfig = LstmConfig(), progress=None) -> LstmModel:
    """Fit a fresh model to ``corpus`` with truncated BPTT.

    Each epoch restarts from the zero state and walks the corpus in windows
    of ``sequence_length`` steps, carrying state across windows. Gradients of
    ``batch_size`` consecutive windows are averaged into one update. The
    per-epoch loss trace records the mean online loss of that epoch.
    """
    tokens = corpus.tokens
    _check_length(tokens)
    model = init_model(corpus.vocab, config, config.resolve_hidden_size(len(tokens)))
    params = model.parameters()
    if config.optimizer == "adam":
        optimizer = _Adam(params, config.learning_rate)
    else:
        optimizer = _Sgd(config.learning_rate)
    n_positions = len(tokens) - 1
    windows = list(_windows(n_positions, config.sequence_length))

    for epoch in range(config.epochs):
        state = model.initial_state()
        epoch_loss = 0.0
        for first in range(0, len(windows), config.batch_size):
            batch = windows[first:first + config.batch_size]
            grads = _zero_grads(model)
            for start, stop in batch:
                loss, caches, state = _run(model, tokens[start:stop], tokens[start + 1:stop + 1], state)
                epoch_loss += loss
                _backprop(model, caches, grads, scale=1.0 / ((stop - start) * len(batch)))
            _clip(grads, config.grad_clip)
            optimizer.step(params, grads)
        mean_loss = epoch_loss / n_positions
        if not math.isfinite(mean_loss) or not all(np.isfinite(p).all() for p in params):
            raise TrainingDiverged(epoch)
        model.loss_trace.append(mean_loss)
        if progress is not None:
            progress(epoch, mean_loss)
    return model


def sample(model: LstmModel, seed_bytes: bytes, length: int, temperature: float = 1.0,
           rng_seed: int = 0) -> bytes:
    """Prime the model with ``seed_bytes`` and draw ``length`` further octets.

    ``temperature == 0`` selects the most likely octet at every step.
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    if temperature < 0:
        raise ValueError("temperature must be >= 0")
    if not seed_bytes:
        raise ValueError("seed_bytes must contain at least one octet")
    ids = model.token_ids(seed_bytes)
    rng = np.random.default_rng(rng_seed)
    state = model.initial_state()
    h, c = state.h, state.c
    out = []
    tok = ids[0]
    pending = ids[1:]
    while len(out) < length:
        x = model.embedding[tok]
        for k, layer in enumerate(model.layers):
            h[k], c[k], _ = _cell_forward(layer, x, h[k], c[k])
            x = h[k]
        if pending:
            tok, pending = pending[0], pending[1:]
            continue
        logits = model.out_W @ x + model.out_b
        if temperature == 0:
            tok = int(np.argmax(logits))
        else:
            tok = int(rng.choice(len(logits), p=_softmax(logits / temperature)))
        out.append(tok)
    return bytes(model.vocab[t] for t in out)


# Persistence ---------------------------------------------------------------
#
# Layout (all integers unsigned little-endian unless noted):
#   magic            12 bytes  b"RNNIDS-LSTM\x01"
#   batch_size u32, learning_rate f64, epochs u32, num_hidden_layers u32,
#   embedding_size u32, sequence_length u32, hidden_size u32 (0 = auto),
#   hidden_cap u32, rng_seed i64, temperature f64, grad_clip f64,
#   optimizer u8 (0 sgd, 1 adam)
#   layer hidden sizes: num_hidden_layers x u32
#   vocab: u16 count, then count octets (token id order)
#   tensors as f64 little-endian, row-major, in this order:
#     embedding (V x E)
#     per layer: W_i W_f W_z W_o (H x D each), R_i R_f R_z R_o (H x H each),
#                b_i b_f b_z b_o (H each)
#     output weight (V x H_top), output bias (V)
#   loss trace: u32 count, then count f64

_CONFIG_STRUCT = struct.Struct("<IdIIIIIIqddB")


def save_model(model: LstmModel, path) -> None:
    Path(path).write_bytes(dump_model(model))


def dump_model(model: LstmModel) -> bytes:
    cfg = model.config
    buf = io.BytesIO()
    buf.write(MODEL_MAGIC)
    buf.write(_CONFIG_STRUCT.pack(
        cfg.batch_size, cfg.learning_rate, cfg.epochs, cfg.num_hidden_layers,
        cfg.embedding_size, cfg.sequence_length, cfg.hidden_size or 0, cfg.hidden_cap,
        cfg.rng_seed, cfg.temperature, cfg.grad_clip, OPTIMIZERS.index(cfg.optimizer),
    ))
    buf.write(struct.pack(f"<{len(model.layers)}I", *model.hidden_sizes))
    buf.write(struct.pack("<H", len(model.vocab)))
    buf.write(bytes(model.vocab))
    for p in model.parameters():
        buf.write(np.ascontiguousarray(p, dtype="<f8").tobytes())
    buf.write(struct.pack("<I", len(model.loss_trace)))
    buf.write(np.asarray(model.loss_trace, dtype="<f8").tobytes())
    return buf.getvalue()


def load_model(path) -> LstmModel:
    return parse_model(Path(path).read_bytes())


def parse_model(data: bytes) -> LstmModel:
    view = memoryview(data)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise ModelFormatError("model file is truncated")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(len(MODEL_MAGIC))) != MODEL_MAGIC:
        raise ModelFormatError("bad magic header; not an rnnids LSTM model")
    fields = _CONFIG_STRUCT.unpack(take(_CONFIG_STRUCT.size))
    (batch, lr, epochs, n_layers, emb, seq, hidden, cap, seed, temp, clip, opt) = fields
    if opt >= len(OPTIMIZERS):
        raise ModelFormatError(f"unknown optimizer code {opt}")
    config = LstmConfig(batch, lr, epochs, n_layers, emb, seq, hidden or None, cap, seed,
                        temp, clip, OPTIMIZERS[opt])
    sizes = struct.unpack(f"<{n_layers}I", take(4 * n_layers))
    (v,) = struct.unpack("<H", take(2))
    vocab = tuple(take(v))

    def tensor(*shape):
        n = int(np.prod(shape))
        return np.frombuffer(take(8 * n), dtype="<f8").astype(np.float64).reshape(shape)

    embedding = tensor(v, emb)
    layers = []
    d = emb
    for h in sizes:
        layers.append(LstmLayerParams(tensor(4 * h, d), tensor(4 * h, h), tensor(4 * h)))
        d = h
    out_W = tensor(v, d)
    out_b = tensor(v)
    (n_trace,) = struct.unpack("<I", take(4))
    trace = tensor(n_trace).tolist()
    if pos != len(view):
        raise ModelFormatError("trailing bytes after model payload")
    return LstmModel(layers, embedding, out_W, out_b, vocab, config, trace)


def with_overrides(config: LstmConfig, **overrides) -> LstmConfig:
    return replace(config, **{k: v for k, v in overrides.items() if v is not None})
