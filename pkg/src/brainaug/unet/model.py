"""The encoder-decoder segmentation network.

Topology per encoder level: (conv3x3 -> BN -> ReLU) x 2, then 2x2 max pool.
Bridge: conv3x3 -> BN -> ReLU. Each decoder level is entered through a stride-2
transposed conv -> BN -> ReLU, concatenated with the matching encoder output,
then (conv3x3 -> BN -> ReLU) x 2. A 1x1 conv maps to class logits, followed by
a channel softmax. Filters double per level from ``base_filters``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ShapeError, StateError
from .layers import BatchNorm, Concat, Conv1x1, Conv3x3, MaxPool2x2, ReLU, Softmax, TransposedConv3x3


@dataclass(frozen=True)
class UNetConfig:
    n_levels: int = 2
    base_filters: int = 8
    n_classes: int = 2
    input_size: tuple = (64, 64)
    seed: int = 0
    bn_momentum: float = 0.99
    bn_eps: float = 1e-3
    dtype: str = "float32"

    def __post_init__(self):
        object.__setattr__(self, "input_size", tuple(self.input_size))
        problems = []
        if self.n_levels < 1:
            problems.append("n_levels must be >= 1")
        if self.base_filters < 1:
            problems.append("base_filters must be >= 1")
        if self.n_classes < 2:
            problems.append("n_classes must be >= 2")
        f = 2 ** self.n_levels
        if any(s % f for s in self.input_size):
            problems.append(f"input_size {self.input_size} not divisible by {f}")
        if self.dtype not in ("float32", "float64"):
            problems.append("dtype must be float32 or float64")
        if problems:
            raise ValueError("; ".join(problems))

    def to_dict(self):
        d = asdict(self)
        d["input_size"] = list(self.input_size)
        return d


def he_normal_init(shape, fan_in, seed, dtype=np.float64):
    """I.i.d. Normal(0, 2 / fan_in) entries."""
    if fan_in < 1:
        raise ValueError("fan_in must be >= 1")
    rng = np.random.default_rng(seed)
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


def _conv_block(prefix, cin, cout, cfg):
    return [
        Conv3x3(f"{prefix}.conv1", cin, cout),
        BatchNorm(f"{prefix}.bn1", cout, cfg.bn_momentum, cfg.bn_eps),
        ReLU(f"{prefix}.relu1"),
        Conv3x3(f"{prefix}.conv2", cout, cout),
        BatchNorm(f"{prefix}.bn2", cout, cfg.bn_momentum, cfg.bn_eps),
        ReLU(f"{prefix}.relu2"),
    ]


def _run(layers, x, params, state, train):
    for layer in layers:
        x = layer.forward(x, params, state, train)
    return x


def _run_back(layers, dy, params, grads):
    for layer in reversed(layers):
        dy = layer.backward(dy, params, grads)
    return dy


class UNet:
    def __init__(self, config: UNetConfig, params=None, state=None):
        self.config = cfg = config
        L, f = cfg.n_levels, cfg.base_filters
        width = [f * 2 ** l for l in range(L + 1)]
        self.enc = [_conv_block(f"enc{l}", 1 if l == 0 else width[l - 1], width[l], cfg) for l in range(L)]
        self.pools = [MaxPool2x2(f"pool{l}") for l in range(L)]
        self.bridge = [
            Conv3x3("bridge.conv", width[L - 1], width[L]),
            BatchNorm("bridge.bn", width[L], cfg.bn_momentum, cfg.bn_eps),
            ReLU("bridge.relu"),
        ]
        self.ups = [
            [
                TransposedConv3x3(f"up{l}.tconv", width[l + 1], width[l]),
                BatchNorm(f"up{l}.bn", width[l], cfg.bn_momentum, cfg.bn_eps),
                ReLU(f"up{l}.relu"),
            ]
            for l in range(L)
        ]
        self.concats = [Concat(f"cat{l}") for l in range(L)]
        self.dec = [_conv_block(f"dec{l}", 2 * width[l], width[l], cfg) for l in range(L)]
        self.head = [Conv1x1("head", width[0], cfg.n_classes), Softmax("softmax")]
        self._forwarded = False

        self.params = self.init_params() if params is None else params
        self.state = self.init_state() if state is None else state
        missing = set(self.init_shapes()) - set(self.params)
        if missing:
            raise StateError(f"parameter set lacks {sorted(missing)}")

    def layers(self):
        seqs = self.enc + [self.pools, self.bridge] + self.ups + self.dec + [self.head]
        return [layer for seq in seqs for layer in seq]

    def init_shapes(self) -> dict:
        shapes = {}
        for layer in self.layers():
            shapes.update(layer.param_shapes())
        return shapes

    def init_params(self) -> dict:
        dtype = np.dtype(self.config.dtype)
        params = {}
        for i, layer in enumerate(self.layers()):
            for name, shape in layer.param_shapes().items():
                if name.endswith(".W"):
                    params[name] = he_normal_init(shape, layer.fan_in(), [self.config.seed, i], dtype)
                elif name.endswith(".gamma"):
                    params[name] = np.ones(shape, dtype)
                else:
                    params[name] = np.zeros(shape, dtype)
        return params

    def init_state(self) -> dict:
        dtype = np.dtype(self.config.dtype)
        state = {}
        for layer in self.layers():
            if isinstance(layer, BatchNorm):
                for name, shape in layer.state_shapes().items():
                    fill = np.ones if name.endswith("running_var") else np.zeros
                    state[name] = fill(shape, dtype)
        return state

    def forward(self, x, mode="eval"):
        """(N, 1, H, W) -> class probabilities (N, C, H, W)."""
        if mode not in ("train", "eval"):
            raise ValueError("mode must be 'train' or 'eval'")
        cfg = self.config
        x = np.asarray(x, dtype=cfg.dtype)
        if x.ndim != 4 or x.shape[1] != 1 or x.shape[2:] != cfg.input_size:
            raise ShapeError(f"expected input (N, 1, {cfg.input_size[0]}, {cfg.input_size[1]}), got {x.shape}")
        train = mode == "train"
        P, S = self.params, self.state
        skips = []
        h = x
        for enc, pool in zip(self.enc, self.pools):
            h = _run(enc, h, P, S, train)
            skips.append(h)
            h = pool.forward(h, P, S, train)
        h = _run(self.bridge, h, P, S, train)
        for l in reversed(range(cfg.n_levels)):
            h = _run(self.ups[l], h, P, S, train)
            h = self.concats[l].forward(h, skips[l])
            h = _run(self.dec[l], h, P, S, train)
        out = _run(self.head, h, P, S, train)
        self._forwarded = True
        return out

    def backward(self, dprobs, return_input_grad=False):
        """Gradients of every parameter given dLoss/dprobs from the last forward call."""
        if not self._forwarded:
            raise StateError("backward called before forward")
        self._forwarded = False
        P = self.params
        grads = {}
        dh = _run_back(self.head, dprobs, P, grads)
        dskips = [None] * self.config.n_levels
        for l in range(self.config.n_levels):
            dh = _run_back(self.dec[l], dh, P, grads)
            dup, dskips[l] = self.concats[l].backward(dh)
            dh = _run_back(self.ups[l], dup, P, grads)
        dh = _run_back(self.bridge, dh, P, grads)
        for l in reversed(range(self.config.n_levels)):
            dh = self.pools[l].backward(dh, P, grads) + dskips[l]
            dh = _run_back(self.enc[l], dh, P, grads)
        if return_input_grad:
            return grads, dh
        return grads
