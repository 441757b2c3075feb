"""Tiny convolutional speaker-embedding network and its training loop.

Architecture: a stack of strided 3x3 conv stages (bias-free), each followed
by ReLU and a channel-attention block, then frequency-collapsed mean+std
statistics pooling over time and a bias-free linear projection to the
embedding. Backward passes are explicit and run in reverse layer order;
training is single-threaded and fully deterministic given the seed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from . import attention
from .errors import ConfigError, DimensionError, FormatError, NumericError
from .features import crop, spec_mask
from .tensor import Parameter, conv2d, conv2d_backward, relu, relu_backward

CKPT_MAGIC = b"FAMC"
CKPT_VERSION = 1


@dataclass
class NetworkConfig:
    in_channels: int = 1
    stages: Tuple[Tuple[int, int, int], ...] = ((16, 3, 2), (32, 3, 2), (64, 3, 2))
    embedding_dim: int = 64
    num_speakers: int = 0
    attention_variant: str = "se"
    attention_k: Tuple[int, ...] = (4, 8, 16)
    aggregation: str = "avg"
    reduction: int = 8

    def __post_init__(self):
        if self.attention_variant not in attention.VARIANTS:
            raise ConfigError(f"unknown attention variant {self.attention_variant!r}")
        if len(self.attention_k) != len(self.stages):
            raise ConfigError(
                f"attention_k has {len(self.attention_k)} entries for "
                f"{len(self.stages)} stages")
        if self.attention_variant == "sfsc":
            for (c_out, _, _), k in zip(self.stages, self.attention_k):
                if c_out % k != 0:
                    raise ConfigError(
                        f"sfsc requires stage channels divisible by k "
                        f"(got C={c_out}, k={k})")


@dataclass
class _Stage:
    conv: Parameter
    stride: int
    pad: int
    block: attention.AttentionBlock


class SpeakerNet:
    """Conv stages with per-stage attention, statistics pooling, projection."""

    def __init__(self, cfg: NetworkConfig, rng=None):
        rng = np.random.default_rng(0) if rng is None else rng
        self.cfg = cfg
        self.stages: List[_Stage] = []
        c_in = cfg.in_channels
        for i, (c_out, kernel, stride) in enumerate(cfg.stages):
            a = 1.0 / np.sqrt(c_in * kernel * kernel)
            conv = Parameter(rng.uniform(-a, a, (c_out, c_in, kernel, kernel)),
                             f"stage{i}.conv.w")
            k = None if cfg.attention_variant == "se" else cfg.attention_k[i]
            block = attention.AttentionBlock(
                cfg.attention_variant, c_out, cfg.reduction, k=k,
                aggregation=cfg.aggregation, rng=rng)
            block.w1.name = f"stage{i}.attn.w1"
            block.w2.name = f"stage{i}.attn.w2"
            self.stages.append(_Stage(conv, stride, kernel // 2, block))
            c_in = c_out
        a = 1.0 / np.sqrt(2 * c_in)
        self.proj = Parameter(rng.uniform(-a, a, (cfg.embedding_dim, 2 * c_in)),
                              "proj.w")

    def parameters(self) -> List[Parameter]:
        out = []
        for st in self.stages:
            out.extend([st.conv, st.block.w1, st.block.w2])
        out.append(self.proj)
        return out


def num_parameters(net: SpeakerNet) -> int:
    return sum(p.size for p in net.parameters())


@dataclass
class _ForwardCache:
    stage_inputs: list = field(default_factory=list)
    stage_pre: list = field(default_factory=list)       # conv output, pre-ReLU
    stage_act: list = field(default_factory=list)       # post-ReLU
    stage_attn: list = field(default_factory=list)      # AttentionState
    fmean: np.ndarray = None                            # (C, T') after freq collapse
    mu: np.ndarray = None
    sd: np.ndarray = None
    diff: np.ndarray = None
    pooled: np.ndarray = None


_STD_EPS = 1e-12


def _forward(net: SpeakerNet, x: np.ndarray, cache: Optional[_ForwardCache]):
    if x.ndim != 3 or x.shape[0] != net.cfg.in_channels:
        raise DimensionError(
            f"forward_embed: expected {net.cfg.in_channels} x F x T input, "
            f"got shape {x.shape}")
    h = x
    for st in net.stages:
        pre = conv2d(h, st.conv.value, st.stride, st.pad)
        act = relu(pre)
        _, y, state = attention.forward(st.block, act, return_state=True)
        if cache is not None:
            cache.stage_inputs.append(h)
            cache.stage_pre.append(pre)
            cache.stage_act.append(act)
            cache.stage_attn.append(state)
        h = y
    fmean = h.mean(axis=1)                    # collapse frequency -> (C, T')
    mu = fmean.mean(axis=1)
    diff = fmean - mu[:, None]
    sd = np.sqrt((diff ** 2).mean(axis=1) + _STD_EPS)
    pooled = np.concatenate([mu, sd])
    emb = net.proj.value @ pooled
    if cache is not None:
        cache.fmean, cache.mu, cache.sd, cache.diff = fmean, mu, sd, diff
        cache.pooled = pooled
    return emb


def forward_embed(net: SpeakerNet, features: np.ndarray) -> np.ndarray:
    """Pure inference path: features (in_channels, F, T) -> embedding."""
    return _forward(net, features, None)


def forward_train(net: SpeakerNet, features: np.ndarray):
    cache = _ForwardCache()
    emb = _forward(net, features, cache)
    return emb, cache


def backward(net: SpeakerNet, cache: _ForwardCache, d_emb: np.ndarray) -> np.ndarray:
    """Accumulate parameter gradients; return the input gradient."""
    net.proj.grad += np.outer(d_emb, cache.pooled)
    d_pooled = net.proj.value.T @ d_emb
    c = cache.mu.size
    dmu, dsd = d_pooled[:c], d_pooled[c:]
    t_len = cache.fmean.shape[1]
    # sd = sqrt(mean(diff^2) + eps):  d diff = diff * dsd / (sd * T')
    ddiff = cache.diff * (dsd / cache.sd)[:, None] / t_len
    dfmean = ddiff - ddiff.mean(axis=1, keepdims=True) + dmu[:, None] / t_len
    f_dim = cache.stage_act[-1].shape[1]
    dh = np.broadcast_to(dfmean[:, None, :] / f_dim,
                         cache.stage_act[-1].shape).copy()
    for st, x_in, pre, state in zip(reversed(net.stages),
                                    reversed(cache.stage_inputs),
                                    reversed(cache.stage_pre),
                                    reversed(cache.stage_attn)):
        d_act, dw1, dw2 = attention.attention_backward(st.block, state, dh)
        st.block.w1.grad += dw1
        st.block.w2.grad += dw2
        d_pre = relu_backward(pre, d_act)
        dh, dw = conv2d_backward(x_in, st.conv.value, d_pre, st.stride, st.pad)
        st.conv.grad += dw
    return dh


# ---------------------------------------------------------------------------
# additive-angular-margin softmax head
# ---------------------------------------------------------------------------

class AamHead:
    """Margin-penalized cosine classifier over speaker classes."""

    def __init__(self, num_speakers: int, embedding_dim: int,
                 margin: float = 0.2, scale: float = 30.0, rng=None):
        if num_speakers < 2:
            raise ConfigError("AamHead needs at least 2 classes")
        rng = np.random.default_rng(0) if rng is None else rng
        a = 1.0 / np.sqrt(embedding_dim)
        self.weight = Parameter(rng.uniform(-a, a, (num_speakers, embedding_dim)),
                                "aam.w")
        self.margin = float(margin)
        self.scale = float(scale)

    def parameters(self):
        return [self.weight]


@dataclass
class AamResult:
    loss: float
    logits: np.ndarray          # margin-penalized, as used by the loss
    cosines: np.ndarray         # raw cos(theta_j), used for accuracy bookkeeping
    grad_emb: np.ndarray
    grad_weight: np.ndarray


def aam_loss(head: AamHead, emb: np.ndarray, label: int) -> AamResult:
    """Cross-entropy over scaled cosines with the target angle shifted by m.

    Target logit is s*cos(theta_y + m), others s*cos(theta_j); embedding and
    class rows are L2-normalized internally. The derivative of the shifted
    cosine w.r.t. cos(theta) is sin(theta+m)/sin(theta); sin(theta) is
    floored at 1e-8 so exactly aligned vectors stay defined.
    """
    n_cls = head.weight.value.shape[0]
    if not 0 <= label < n_cls:
        raise IndexError(f"label {label} out of range for {n_cls} classes")
    norm_e = np.linalg.norm(emb)
    if norm_e == 0.0 or not np.isfinite(norm_e):
        raise NumericError("aam_loss: embedding has zero or non-finite norm")
    e_hat = emb / norm_e
    w = head.weight.value
    w_norms = np.linalg.norm(w, axis=1)
    if np.any(w_norms == 0.0):
        raise NumericError("aam_loss: zero-norm class weight row")
    w_hat = w / w_norms[:, None]

    cos = w_hat @ e_hat
    cy = min(1.0, max(-1.0, float(cos[label])))
    theta = np.arccos(cy)
    phi = np.cos(theta + head.margin)
    logits = head.scale * cos
    logits[label] = head.scale * phi

    shifted = logits - logits.max()
    exp = np.exp(shifted)
    probs = exp / exp.sum()
    loss = float(np.log(exp.sum()) - shifted[label])

    d_logits = probs.copy()
    d_logits[label] -= 1.0
    d_cos = head.scale * d_logits
    d_cos[label] *= np.sin(theta + head.margin) / max(np.sin(theta), 1e-8)

    d_e_hat = w_hat.T @ d_cos
    grad_emb = (d_e_hat - np.dot(d_e_hat, e_hat) * e_hat) / norm_e
    d_w_hat = np.outer(d_cos, e_hat)
    row_proj = np.sum(d_w_hat * w_hat, axis=1, keepdims=True)
    grad_weight = (d_w_hat - row_proj * w_hat) / w_norms[:, None]
    return AamResult(loss=loss, logits=logits, cosines=cos, grad_emb=grad_emb,
                     grad_weight=grad_weight)


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

class Adam:
    """Standard Adam with bias correction; state keyed by parameter identity."""

    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def step(self) -> None:
        self.t += 1
        for i, p in enumerate(self.params):
            g = p.grad
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / (1.0 - self.beta1 ** self.t)
            v_hat = self.v[i] / (1.0 - self.beta2 ** self.t)
            p.value -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainOptions:
    lr: float = 1e-3
    epochs: int = 30
    batch_size: int = 8
    crop_seconds: float = 2.0
    frames_per_second: float = 100.0
    augment: bool = False


@dataclass
class EpochMetrics:
    mean_loss: float
    accuracy: float


def train_epoch(net: SpeakerNet, head: AamHead, examples, opts: TrainOptions,
                optimizer: Adam, rng) -> EpochMetrics:
    """One shuffled pass; per-example backward, Adam step per mini-batch."""
    if not examples:
        raise ConfigError("train_epoch: empty dataset")
    order = rng.permutation(len(examples))
    total_loss = 0.0
    correct = 0
    for start in range(0, len(order), opts.batch_size):
        batch = order[start:start + opts.batch_size]
        optimizer.zero_grad()
        for j in batch:
            label, fm = examples[j]
            fm = crop(fm, opts.crop_seconds, rng, opts.frames_per_second)
            if opts.augment:
                fm = spec_mask(fm, rng)
            emb, cache = forward_train(net, fm.values[None, :, :])
            res = aam_loss(head, emb, label)
            if not np.isfinite(res.loss):
                raise NumericError(f"non-finite loss at example index {int(j)}")
            backward(net, cache, res.grad_emb)
            head.weight.grad += res.grad_weight
            total_loss += res.loss
            correct += int(np.argmax(res.cosines) == label)
        inv = 1.0 / len(batch)
        for p in optimizer.params:
            p.grad *= inv
        optimizer.step()
    n = len(examples)
    return EpochMetrics(mean_loss=total_loss / n, accuracy=correct / n)


def train(net: SpeakerNet, head: AamHead, examples, opts: TrainOptions,
          seed: int = 0, rng=None, log=None) -> List[EpochMetrics]:
    """Run the configured number of epochs; rng (or seed) drives shuffles and crops."""
    optimizer = Adam(net.parameters() + head.parameters(), lr=opts.lr)
    rng = np.random.default_rng(seed) if rng is None else rng
    history = []
    for epoch in range(1, opts.epochs + 1):
        metrics = train_epoch(net, head, examples, opts, optimizer, rng)
        history.append(metrics)
        if log is not None:
            log(f"epoch={epoch} loss={metrics.mean_loss:.6f} acc={metrics.accuracy:.4f}")
    return history


# ---------------------------------------------------------------------------
# checkpoint format: magic, u32 version, length-prefixed config text, then
# per parameter: u32 name length, name, u32 rank, u32 dims..., f64 LE values
# ---------------------------------------------------------------------------

def save_checkpoint(path, config_text: str, params) -> None:
    blob = bytearray(CKPT_MAGIC)
    blob += struct.pack("<I", CKPT_VERSION)
    cfg = config_text.encode("utf-8")
    blob += struct.pack("<I", len(cfg)) + cfg
    for p in params:
        name = p.name.encode("utf-8")
        blob += struct.pack("<I", len(name)) + name
        blob += struct.pack("<I", p.value.ndim)
        blob += struct.pack(f"<{p.value.ndim}I", *p.value.shape)
        blob += p.value.astype("<f8").tobytes(order="C")
    Path(path).write_bytes(bytes(blob))


def load_checkpoint(path):
    """Return (config_text, ordered list of (name, array))."""
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != CKPT_MAGIC:
        raise FormatError(f"{path}: not a checkpoint file (bad magic)")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != CKPT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    (cfg_len,) = struct.unpack_from("<I", raw, 8)
    pos = 12
    config_text = raw[pos:pos + cfg_len].decode("utf-8")
    pos += cfg_len
    entries = []
    while pos < len(raw):
        (name_len,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        name = raw[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (rank,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        dims = struct.unpack_from(f"<{rank}I", raw, pos)
        pos += 4 * rank
        count = int(np.prod(dims)) if rank else 1
        values = np.frombuffer(raw, dtype="<f8", count=count, offset=pos)
        pos += 8 * count
        entries.append((name, values.reshape(dims).astype(np.float64)))
    return config_text, entries


def restore_parameters(params, entries) -> None:
    """Fill parameters in declaration order, verifying names and shapes."""
    if len(params) != len(entries):
        raise FormatError(
            f"checkpoint has {len(entries)} parameters, model has {len(params)}")
    for p, (name, values) in zip(params, entries):
        if p.name != name:
            raise FormatError(f"checkpoint parameter {name!r} where {p.name!r} expected")
        if p.value.shape != values.shape:
            raise FormatError(
                f"checkpoint parameter {name}: shape {values.shape}, "
                f"expected {p.value.shape}")
        p.value = values.copy()
