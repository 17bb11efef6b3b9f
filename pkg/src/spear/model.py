"""Frozen transformer encoder with trainable soft prompts and a sigmoid head.

Everything is plain numpy. The forward pass keeps the activations needed by
:func:`backward`, which propagates gradients through the frozen encoder to
the prompt rows and the head without ever forming gradients for frozen
weights.
"""
from __future__ import annotations

import hashlib
import math
from collections import OrderedDict
from dataclasses import asdict, dataclass, fields

import numpy as np

from spear.errors import ConfigError, DataError, NumericError
from spear.series import QuantizedWindow

AGGREGATIONS = ("mean", "max")
LN_EPS = 1e-5
INIT_STD = 0.02
_GELU_C = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 128
    n_bins: int = 100
    prompt_len: int = 20
    max_seq_len: int = 120
    seed: int = 0
    aggregate: str = "mean"
    train_embeddings: bool = False
    final_norm: bool = True
    pos_scale: float = 1.0

    def __post_init__(self):
        for name in ("d_model", "n_heads", "d_ff", "prompt_len", "max_seq_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"model.{name} must be >= 1")
        if self.n_layers < 0:
            raise ConfigError("model.n_layers must be >= 0")
        if self.n_bins < 2:
            raise ConfigError("model.n_bins must be >= 2")
        if self.d_model % self.n_heads:
            raise ConfigError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")
        if self.max_seq_len < self.prompt_len + 1:
            raise ConfigError("max_seq_len must leave room for at least one data position after the prompts")
        if self.aggregate not in AGGREGATIONS:
            raise ConfigError(f"aggregate must be one of {AGGREGATIONS}, got {self.aggregate!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


LAYER_TENSORS = ("ln1_g", "ln1_b", "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo",
                 "ln2_g", "ln2_b", "w1", "b1", "w2", "b2")


def sinusoidal_positions(n_pos: int, d: int) -> np.ndarray:
    pos = np.arange(n_pos, dtype=np.float64)[:, None]
    i = np.arange(0, d, 2, dtype=np.float64)
    angle = pos / np.power(10000.0, i / d)
    pe = np.zeros((n_pos, d), dtype=np.float64)
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle[:, : d // 2])
    return pe


def checksum(arrays) -> str:
    """sha256 over (name, shape, dtype, raw bytes) of each tensor in order."""
    h = hashlib.sha256()
    for name, arr in arrays:
        a = np.ascontiguousarray(arr)
        h.update(name.encode())
        h.update(repr((a.shape, a.dtype.str)).encode())
        h.update(a.tobytes())
    return h.hexdigest()


class SpearModel:
    """Parameters of one model instance.

    ``embedding`` (E, n_bins x d) and ``encoder`` (per-layer tensors) are
    frozen; ``prompts`` (P, m x d), ``head_w`` and ``head_b`` are trainable.
    """

    def __init__(self, config: ModelConfig, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        self.embedding = None
        self.prompts = None
        self.head_w = None
        self.head_b = None
        self.encoder: list[dict] = []
        self.final_ln: dict = {}
        self.positions = (config.pos_scale * sinusoidal_positions(config.max_seq_len, config.d_model)
                          ).astype(self.dtype)

    # -- parameter views ----------------------------------------------------

    def frozen_tensors(self):
        """(name, array) pairs of every frozen tensor in declaration order."""
        out = [] if self.config.train_embeddings else [("embedding", self.embedding)]
        return out + self._encoder_tensors()

    def _encoder_tensors(self):
        out = []
        for i, layer in enumerate(self.encoder):
            out.extend((f"layer{i}.{k}", layer[k]) for k in LAYER_TENSORS)
        out.extend((f"final.{k}", v) for k, v in self.final_ln.items())
        return out

    def trainable_tensors(self):
        out = [("prompts", self.prompts), ("head_w", self.head_w), ("head_b", self.head_b)]
        if self.config.train_embeddings:
            out.append(("embedding", self.embedding))
        return out

    def named_tensors(self):
        """All tensors in checkpoint declaration order."""
        return [("embedding", self.embedding), ("prompts", self.prompts),
                ("head_w", self.head_w), ("head_b", self.head_b)] + self._encoder_tensors()

    def set_tensor(self, name: str, value: np.ndarray) -> None:
        value = np.asarray(value, dtype=self.dtype)
        if name.startswith("final."):
            self.final_ln[name[6:]] = value
        elif "." in name:
            layer, key = name.split(".", 1)
            self.encoder[int(layer[5:])][key] = value
        else:
            setattr(self, name, value)

    def embedding_checksum(self) -> str:
        return checksum([("embedding", self.embedding)])

    def encoder_checksum(self) -> str:
        return checksum([("positions", self.positions)] + self._encoder_tensors())

    def frozen_checksum(self) -> str:
        return checksum(self.frozen_tensors() + [("positions", self.positions)])

    def checksum(self) -> str:
        return checksum(self.named_tensors())

    def astype(self, dtype) -> "SpearModel":
        other = SpearModel(self.config, dtype)
        other.encoder = [{} for _ in self.encoder]
        for name, arr in self.named_tensors():
            other.set_tensor(name, arr)
        return other

    def copy(self) -> "SpearModel":
        return self.astype(self.dtype)


def init_model(config: ModelConfig, dtype=np.float32) -> SpearModel:
    """Seeded N(0, 0.02^2) init; layer-norm gains 1, all biases 0 except projection biases."""
    rng = np.random.default_rng([int(config.seed), 0x1A17])
    d, N, m, f = config.d_model, config.n_bins, config.prompt_len, config.d_ff

    def normal(*shape):
        # drawn in float64 so 32- and 64-bit models share the same values
        return (INIT_STD * rng.standard_normal(shape)).astype(dtype)

    model = SpearModel(config, dtype)
    model.embedding = normal(N, d)
    model.prompts = normal(m, d)
    model.head_w = normal(d)
    model.head_b = np.zeros(1, dtype=dtype)
    for _ in range(config.n_layers):
        layer = {
            "ln1_g": np.ones(d, dtype=dtype), "ln1_b": np.zeros(d, dtype=dtype),
            "wq": normal(d, d), "bq": normal(d),
            "wk": normal(d, d), "bk": normal(d),
            "wv": normal(d, d), "bv": normal(d),
            "wo": normal(d, d), "bo": normal(d),
            "ln2_g": np.ones(d, dtype=dtype), "ln2_b": np.zeros(d, dtype=dtype),
            "w1": normal(d, f), "b1": normal(f),
            "w2": normal(f, d), "b2": normal(d),
        }
        model.encoder.append(layer)
    if config.final_norm and config.n_layers > 0:
        model.final_ln = {"ln_g": np.ones(d, dtype=dtype), "ln_b": np.zeros(d, dtype=dtype)}
    return model


# -- building blocks ----------------------------------------------------------

def _layernorm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * inv
    return xhat * g + b, (xhat, inv)


def _layernorm_back(dy, g, cache):
    xhat, inv = cache
    dxhat = dy * g
    return inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                  - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))


def _gelu(u):
    inner = _GELU_C * (u + 0.044715 * u ** 3)
    t = np.tanh(inner)
    return 0.5 * u * (1.0 + t), t


def _gelu_back(dy, u, t):
    dinner = _GELU_C * (1.0 + 3 * 0.044715 * u * u)
    return dy * (0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * dinner)


def sigmoid(z):
    z = np.asarray(z)
    out = np.empty_like(z, dtype=np.result_type(z, np.float32))
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _check_finite(arr, where):
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite activation in {where}")


# -- forward / backward -------------------------------------------------------

def embed(model: SpearModel, tokens, offset: int | None = None) -> np.ndarray:
    """Rows of E for ``tokens`` plus the positional term of each data position.

    ``tokens`` is (T,) or (B, T); data position t (0-based) sits at sequence
    position m + t, after the prompt block.
    """
    tokens = np.asarray(tokens)
    cfg = model.config
    if tokens.size and (tokens.min() < 0 or tokens.max() >= cfg.n_bins):
        raise DataError(f"token outside vocabulary [0, {cfg.n_bins - 1}]")
    m = cfg.prompt_len if offset is None else offset
    T = tokens.shape[-1]
    if m + T > cfg.max_seq_len:
        raise DataError(f"sequence of {m} prompts + {T} tokens exceeds max_seq_len={cfg.max_seq_len}")
    return model.embedding[tokens] + model.positions[m:m + T]


def assemble_input(prompts, embeddings, mask):
    """Prepend the prompt block; prompts are always unmasked.

    Accepts a single window ((T, d), (T,)) or a batch ((B, T, d), (B, T)).
    """
    embeddings = np.asarray(embeddings)
    mask = np.asarray(mask, dtype=bool)
    m, d = prompts.shape
    if embeddings.shape[:-1] != mask.shape or embeddings.shape[-1] != d:
        raise DataError("embedding and mask shapes are inconsistent")
    if embeddings.ndim == 2:
        S = np.concatenate([prompts, embeddings], axis=0)
        ext = np.concatenate([np.ones(m, dtype=bool), mask])
        return S, ext
    B = embeddings.shape[0]
    S = np.concatenate([np.broadcast_to(prompts, (B, m, d)), embeddings], axis=1)
    ext = np.concatenate([np.ones((B, m), dtype=bool), mask], axis=1)
    return S, ext


def _attention(a, layer, key_bias, H):
    B, S, d = a.shape
    dh = d // H
    q = (a @ layer["wq"] + layer["bq"]).reshape(B, S, H, dh).transpose(0, 2, 1, 3)
    k = (a @ layer["wk"] + layer["bk"]).reshape(B, S, H, dh).transpose(0, 2, 1, 3)
    v = (a @ layer["wv"] + layer["bv"]).reshape(B, S, H, dh).transpose(0, 2, 1, 3)
    scores = (q @ k.transpose(0, 1, 3, 2)) * (1.0 / math.sqrt(dh)) + key_bias
    scores = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(scores)
    attn = e / e.sum(axis=-1, keepdims=True)
    o = (attn @ v).transpose(0, 2, 1, 3).reshape(B, S, d)
    return o @ layer["wo"] + layer["bo"], (q, k, v, attn, o)


def _attention_back(dy, layer, cache, H):
    q, k, v, attn, o = cache
    B, S, d = dy.shape
    dh = d // H
    do = (dy @ layer["wo"].T).reshape(B, S, H, dh).transpose(0, 2, 1, 3)
    dattn = do @ v.transpose(0, 1, 3, 2)
    dv = attn.transpose(0, 1, 3, 2) @ do
    dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
    dscores *= 1.0 / math.sqrt(dh)
    dq = dscores @ k
    dk = dscores.transpose(0, 1, 3, 2) @ q

    def merge(t):
        return t.transpose(0, 2, 1, 3).reshape(B, S, d)

    return merge(dq) @ layer["wq"].T + merge(dk) @ layer["wk"].T + merge(dv) @ layer["wv"].T


class ForwardCache:
    __slots__ = ("tokens", "mask", "ext_mask", "layers", "hidden", "logits", "probs", "scores")


def encoder_forward(S, ext_mask, model: SpearModel, caches: list | None = None):
    """Pre-norm encoder stack; padded keys get -inf attention logits.

    ``S`` is (L, d) or (B, L, d). With ``caches`` (a list) the per-layer
    activations needed for backpropagation are appended to it.
    """
    single = S.ndim == 2
    x = S[None] if single else S
    mask = (ext_mask[None] if single else ext_mask).astype(bool)
    key_bias = np.where(mask, 0.0, -np.inf).astype(x.dtype)[:, None, None, :]
    H = model.config.n_heads
    for i, layer in enumerate(model.encoder):
        a, ln1 = _layernorm(x, layer["ln1_g"], layer["ln1_b"])
        y, att = _attention(a, layer, key_bias, H)
        x1 = x + y
        c, ln2 = _layernorm(x1, layer["ln2_g"], layer["ln2_b"])
        u = c @ layer["w1"] + layer["b1"]
        g, t = _gelu(u)
        x = x1 + g @ layer["w2"] + layer["b2"]
        _check_finite(x, f"encoder layer {i}")
        if caches is not None:
            caches.append((ln1, att, ln2, u, t, g))
    if model.final_ln:
        x, lnf = _layernorm(x, model.final_ln["ln_g"], model.final_ln["ln_b"])
        if caches is not None:
            caches.append(lnf)
    return x[0] if single else x


def encoder_backward(dh, model: SpearModel, caches) -> np.ndarray:
    """Gradient of the loss w.r.t. the encoder input, given dL/dh."""
    H = model.config.n_heads
    dx = dh
    if model.final_ln:
        dx = _layernorm_back(dx, model.final_ln["ln_g"], caches[-1])
        caches = caches[:-1]
    for layer, (ln1, att, ln2, u, t, g) in zip(reversed(model.encoder), reversed(caches)):
        dgu = _gelu_back(dx @ layer["w2"].T, u, t)
        dx1 = dx + _layernorm_back(dgu @ layer["w1"].T, layer["ln2_g"], ln2)
        da = _attention_back(dx1, layer, att, H)
        dx = dx1 + _layernorm_back(da, layer["ln1_g"], ln1)
    return dx


def aggregate(probs, mask, how: str = "mean"):
    """Window score: mean or max of the per-position probabilities over real positions."""
    probs = np.asarray(probs)
    mask = np.asarray(mask, dtype=bool)
    if how == "mean":
        return (probs * mask).sum(axis=-1) / mask.sum(axis=-1)
    if how == "max":
        return np.where(mask, probs, -np.inf).max(axis=-1)
    raise ConfigError(f"unknown aggregation {how!r}")


def classify(h, head_w, head_b, mask, prompt_len: int, how: str = "mean"):
    """Per-position probabilities sigma(W . h_{m+t} + b) and the aggregated window score."""
    data = h[..., prompt_len:, :]
    z = data @ head_w + head_b[0]
    probs = sigmoid(z)
    return probs, aggregate(probs, mask, how)


def forward(model: SpearModel, tokens, mask, keep_cache: bool = False):
    """Batched forward pass. Returns (scores (B,), per-position probs (B, T), cache)."""
    tokens = np.atleast_2d(np.asarray(tokens))
    mask = np.atleast_2d(np.asarray(mask, dtype=bool))
    if not mask.any(axis=1).all():
        raise DataError("every window needs at least one real position")
    cfg = model.config
    emb = embed(model, tokens)
    S, ext = assemble_input(model.prompts, emb, mask)
    caches = [] if keep_cache else None
    h = encoder_forward(S, ext, model, caches)
    probs, scores = classify(h, model.head_w, model.head_b, mask, cfg.prompt_len, cfg.aggregate)
    cache = None
    if keep_cache:
        cache = ForwardCache()
        cache.tokens, cache.mask, cache.ext_mask = tokens, mask, ext
        cache.layers, cache.hidden = caches, h
        cache.probs, cache.scores = probs, scores
    return scores, probs, cache


def backward(model: SpearModel, cache: ForwardCache, dscores=None, dprobs=None,
             trainable=("prompts", "head_w", "head_b")) -> dict:
    """Gradients of the trainable tensors given dL/dscore (B,) or dL/dprob (B, T).

    Frozen tensors never receive a gradient; the encoder is only traversed to
    reach the prompt rows (and the embedding when it is trainable).
    """
    cfg = model.config
    m = cfg.prompt_len
    mask = cache.mask
    probs = cache.probs
    if dprobs is None:
        dscores = np.asarray(dscores, dtype=probs.dtype).reshape(-1, 1)
        if cfg.aggregate == "mean":
            dprobs = dscores * mask / mask.sum(axis=1, keepdims=True)
        else:
            masked = np.where(mask, probs, -np.inf)
            first = masked.argmax(axis=1)
            dprobs = np.zeros_like(probs)
            dprobs[np.arange(len(first)), first] = dscores[:, 0]
    dz = (dprobs * probs * (1.0 - probs) * mask).astype(probs.dtype)
    data = cache.hidden[:, m:, :]
    grads = {}
    if "head_w" in trainable:
        grads["head_w"] = np.einsum("bt,btd->d", dz, data)
    if "head_b" in trainable:
        grads["head_b"] = np.array([dz.sum()], dtype=probs.dtype)
    need_input = "prompts" in trainable or "embedding" in trainable
    if need_input:
        dh = np.zeros_like(cache.hidden)
        dh[:, m:, :] = dz[..., None] * model.head_w
        dS = encoder_backward(dh, model, cache.layers)
        if "prompts" in trainable:
            grads["prompts"] = dS[:, :m, :].sum(axis=0)
        if "embedding" in trainable:
            demb = np.zeros_like(model.embedding)
            np.add.at(demb, cache.tokens, dS[:, m:, :] * mask[..., None])
            grads["embedding"] = demb
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name}")
    return grads


def predict_window(model: SpearModel, window: QuantizedWindow):
    """Score one quantized window; returns (score, per-position probabilities of real positions)."""
    cfg = model.config
    if len(window.tokens) > cfg.max_seq_len - cfg.prompt_len:
        raise DataError(f"window of {len(window.tokens)} tokens does not fit after {cfg.prompt_len} prompts")
    scores, probs, _ = forward(model, window.tokens[None], window.mask[None])
    return float(scores[0]), probs[0][window.mask]
