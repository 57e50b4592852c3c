"""ResNet + contextual-attention spoofing detector, inference only.

Input is a log-mel spectrogram treated as a 1-channel image (freq x time).
Four stages each apply an adapter (3x3 conv, BN, ReLU; stride 2 from stage
two onward) followed by residual blocks whose tail is a contextual attention
unit: a depthwise k x k conv builds a static context, a two-layer 1x1-conv
head turns [static, input] into k^2 window-attention logits, and the
softmaxed logits aggregate a pointwise value map into a dynamic context.
Frequency is mean-reduced, attentive statistics pooling summarizes time,
and a linear head emits (spoof, bonafide) logits.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .ops import (
    attentive_stats_pool,
    batch_norm,
    conv1x1,
    conv2d,
    depthwise_conv2d,
    relu,
    softmax,
)
from .params import ParameterStore

# Channel reduction of the attention head's hidden layer.
ATTN_REDUCTION = 4
# Three stride-2 stages leave T/8 frames; 16 keeps every stage nonempty.
MIN_INPUT_FRAMES = 16


@dataclass(frozen=True)
class DetectorConfig:
    stage_channels: tuple = (32, 64, 128, 256)
    blocks_per_stage: tuple = (2, 2, 2, 2)
    cot_kernel: int = 3
    embedding_dim: int = 512
    n_classes: int = 2
    pool_hidden: int = 128

    def __post_init__(self):
        object.__setattr__(self, "stage_channels", tuple(int(c) for c in self.stage_channels))
        object.__setattr__(self, "blocks_per_stage", tuple(int(b) for b in self.blocks_per_stage))
        if len(self.stage_channels) != 4 or len(self.blocks_per_stage) != 4:
            raise ValueError("config requires exactly four stages")
        if any(c < ATTN_REDUCTION for c in self.stage_channels) or any(
            c % ATTN_REDUCTION for c in self.stage_channels
        ):
            raise ValueError(f"stage channels must be positive multiples of {ATTN_REDUCTION}")
        if any(b < 1 for b in self.blocks_per_stage):
            raise ValueError("blocks_per_stage entries must be >= 1")
        if self.cot_kernel < 1 or self.cot_kernel % 2 == 0:
            raise ValueError("cot_kernel must be odd and >= 1")
        if self.n_classes != 2:
            raise ValueError("detector is a two-class model")
        if self.embedding_dim != 2 * self.stage_channels[-1]:
            raise ValueError("embedding_dim must equal 2 x last stage channels")
        if self.pool_hidden < 1:
            raise ValueError("pool_hidden must be >= 1")

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["stage_channels"] = list(self.stage_channels)
        doc["blocks_per_stage"] = list(self.blocks_per_stage)
        return doc

    @classmethod
    def from_dict(cls, d: dict) -> "DetectorConfig":
        return cls(**d)


@dataclass(frozen=True)
class Logits:
    l_spoof: float
    l_bonafide: float

    def __post_init__(self):
        if not (np.isfinite(self.l_spoof) and np.isfinite(self.l_bonafide)):
            raise ValueError("logits must be finite")


@dataclass(frozen=True)
class Score:
    s: float

    def __post_init__(self):
        if not np.isfinite(self.s):
            raise ValueError("score must be finite")


def score(logits: Logits) -> Score:
    """Detection score: higher favors the spoof hypothesis."""
    return Score(0.5 * (logits.l_spoof - logits.l_bonafide))


def _uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _init_bn(tensors: dict, prefix: str, c: int):
    tensors[f"{prefix}.gamma"] = np.ones(c)
    tensors[f"{prefix}.beta"] = np.zeros(c)
    tensors[f"{prefix}.mean"] = np.zeros(c)
    tensors[f"{prefix}.var"] = np.ones(c)


def _init_block(tensors: dict, prefix: str, cin: int, cout: int, k: int, rng):
    tensors[f"{prefix}.conv1.weight"] = _uniform(rng, (cout, cin, 3, 3), cin * 9)
    tensors[f"{prefix}.conv1.bias"] = np.zeros(cout)
    _init_bn(tensors, f"{prefix}.bn1", cout)
    tensors[f"{prefix}.conv2.weight"] = _uniform(rng, (cout, cout, 3, 3), cout * 9)
    tensors[f"{prefix}.conv2.bias"] = np.zeros(cout)
    _init_bn(tensors, f"{prefix}.bn2", cout)
    hidden = cout // ATTN_REDUCTION
    tensors[f"{prefix}.cot.key.weight"] = _uniform(rng, (cout, k, k), k * k)
    tensors[f"{prefix}.cot.key.bias"] = np.zeros(cout)
    tensors[f"{prefix}.cot.attn1.weight"] = _uniform(rng, (hidden, 2 * cout), 2 * cout)
    tensors[f"{prefix}.cot.attn1.bias"] = np.zeros(hidden)
    tensors[f"{prefix}.cot.attn2.weight"] = _uniform(rng, (k * k, hidden), hidden)
    tensors[f"{prefix}.cot.attn2.bias"] = np.zeros(k * k)
    tensors[f"{prefix}.cot.value.weight"] = _uniform(rng, (cout, cout), cout)
    tensors[f"{prefix}.cot.value.bias"] = np.zeros(cout)
    if cin != cout:
        tensors[f"{prefix}.proj.weight"] = _uniform(rng, (cout, cin), cin)
        tensors[f"{prefix}.proj.bias"] = np.zeros(cout)
        _init_bn(tensors, f"{prefix}.proj_bn", cout)


def init_parameters(cfg: DetectorConfig, seed: int) -> ParameterStore:
    """Deterministic fresh parameters: fan-in-scaled uniform conv/linear
    weights, zero biases, identity batch norm with frozen unit stats."""
    rng = np.random.default_rng(seed)
    tensors: dict = {}
    cin = 1
    for s, (c, n_blocks) in enumerate(zip(cfg.stage_channels, cfg.blocks_per_stage), start=1):
        tensors[f"stage{s}.adapter.conv.weight"] = _uniform(rng, (c, cin, 3, 3), cin * 9)
        tensors[f"stage{s}.adapter.conv.bias"] = np.zeros(c)
        _init_bn(tensors, f"stage{s}.adapter.bn", c)
        for b in range(1, n_blocks + 1):
            _init_block(tensors, f"stage{s}.block{b}", c, c, cfg.cot_kernel, rng)
        cin = c
    d = cfg.stage_channels[-1]
    tensors["pool.w"] = _uniform(rng, (cfg.pool_hidden, d), d)
    tensors["pool.b"] = np.zeros(cfg.pool_hidden)
    tensors["pool.v"] = _uniform(rng, (cfg.pool_hidden,), cfg.pool_hidden)
    tensors["fc.weight"] = _uniform(rng, (cfg.n_classes, cfg.embedding_dim), cfg.embedding_dim)
    tensors["fc.bias"] = np.zeros(cfg.n_classes)
    store = ParameterStore(config=cfg.to_dict())
    for name, value in tensors.items():
        store.add(name, value)
    return store


def init_res_cot_params(cin: int, cout: int, kernel: int, seed: int) -> dict:
    """Standalone parameter dict for one residual block (unit-test helper)."""
    rng = np.random.default_rng(seed)
    tensors: dict = {}
    _init_block(tensors, "block", cin, cout, kernel, rng)
    return {name.removeprefix("block."): np.asarray(v, dtype=np.float32) for name, v in tensors.items()}


class _Sub:
    """Read-only view of a store restricted to one dotted prefix."""

    def __init__(self, store, prefix: str):
        self._store = store
        self._prefix = prefix

    def __getitem__(self, name: str):
        return self._store[f"{self._prefix}.{name}"]

    def __contains__(self, name: str) -> bool:
        return f"{self._prefix}.{name}" in self._store


def adapter_forward(x, params, stride: int = 1):
    """Channel-raising adapter: 3x3 conv -> BN -> ReLU."""
    y = conv2d(x, params["conv.weight"], params["conv.bias"], stride=stride, padding=1)
    y = batch_norm(y, params["bn.gamma"], params["bn.beta"], params["bn.mean"], params["bn.var"])
    return relu(y)


def cot_block_forward(x, params):
    """Contextual attention over a k x k neighbourhood.

    static  = depthwise k x k conv of x
    logits  = 1x1 conv -> ReLU -> 1x1 conv over concat[static, x], one map
              per window offset, shared across channels
    dynamic = softmax(logits)-weighted sum of the 1x1-conv value map over
              the window
    returns   static + dynamic  (shape-preserving)
    """
    key_w = params["key.weight"]
    k = key_w.shape[-1]
    pad = k // 2
    static = depthwise_conv2d(x, key_w, params["key.bias"], padding=pad)
    head = relu(conv1x1(np.concatenate([static, x], axis=0), params["attn1.weight"], params["attn1.bias"]))
    logits = conv1x1(head, params["attn2.weight"], params["attn2.bias"])
    weights = softmax(logits, axis=0)
    values = conv1x1(x, params["value.weight"], params["value.bias"])
    c, f, t = values.shape
    vp = np.pad(values, ((0, 0), (pad, pad), (pad, pad)))
    dynamic = np.zeros_like(values)
    for o in range(k * k):
        di, dj = divmod(o, k)
        dynamic += weights[o][None, :, :] * vp[:, di : di + f, dj : dj + t]
    return static + dynamic


def res_cot_forward(x, params):
    """Residual block with the attention unit before the add and final ReLU.

    Uses an identity shortcut, or a 1x1 projection (+BN) when the block
    changes the channel count.
    """
    y = relu(batch_norm(
        conv2d(x, params["conv1.weight"], params["conv1.bias"], stride=1, padding=1),
        params["bn1.gamma"], params["bn1.beta"], params["bn1.mean"], params["bn1.var"],
    ))
    y = batch_norm(
        conv2d(y, params["conv2.weight"], params["conv2.bias"], stride=1, padding=1),
        params["bn2.gamma"], params["bn2.beta"], params["bn2.mean"], params["bn2.var"],
    )
    y = cot_block_forward(y, _Sub(params, "cot"))
    if "proj.weight" in params:
        shortcut = batch_norm(
            conv1x1(x, params["proj.weight"], params["proj.bias"]),
            params["proj_bn.gamma"], params["proj_bn.beta"],
            params["proj_bn.mean"], params["proj_bn.var"],
        )
    else:
        shortcut = x
    return relu(y + shortcut)



def detector_forward(feat, store: ParameterStore, cfg: DetectorConfig) -> Logits:
    """Full forward pass from a log-mel spectrogram to the two class logits."""
    values = feat.values
    if values.shape[0] < MIN_INPUT_FRAMES:
        raise ValueError(
            f"input has {values.shape[0]} frames; detector needs >= {MIN_INPUT_FRAMES}"
        )
    x = values.T[None, :, :]  # (1, mels, frames)
    for s, n_blocks in enumerate(cfg.blocks_per_stage, start=1):
        x = adapter_forward(x, _Sub(store, f"stage{s}.adapter"), stride=1 if s == 1 else 2)
        for b in range(1, n_blocks + 1):
            x = res_cot_forward(x, _Sub(store, f"stage{s}.block{b}"))
    h = x.mean(axis=1).T  # collapse frequency -> (T', C)
    emb = attentive_stats_pool(h, store["pool.w"], store["pool.b"], store["pool.v"])
    out = store["fc.weight"].astype(np.float64) @ emb + store["fc.bias"].astype(np.float64)
    return Logits(l_spoof=float(out[0]), l_bonafide=float(out[1]))


@dataclass(frozen=True)
class AggregatorConfig:
    """Shape contract for multi-layer representation fusion."""

    n_layers: int
    in_dim: int
    proj_dim: int = 128

    def __post_init__(self):
        if self.n_layers < 1 or self.in_dim < 1 or self.proj_dim < 1:
            raise ValueError("aggregator dims must be >= 1")


def init_aggregator_parameters(cfg: AggregatorConfig, seed: int) -> ParameterStore:
    rng = np.random.default_rng(seed)
    store = ParameterStore(config=asdict(cfg))
    store.add("proj.weight", _uniform(rng, (cfg.n_layers, cfg.proj_dim, cfg.in_dim), cfg.in_dim))
    store.add("proj.bias", np.zeros((cfg.n_layers, cfg.proj_dim)))
    store.add("ln1.gamma", np.ones(cfg.proj_dim))
    store.add("ln1.beta", np.zeros(cfg.proj_dim))
    store.add("layer_logits", np.zeros(cfg.n_layers))
    store.add("ln2.gamma", np.ones(cfg.proj_dim))
    store.add("ln2.beta", np.zeros(cfg.proj_dim))
    return store
