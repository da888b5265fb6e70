"""The 3D CNN classifier: four 3x3x3 convolutions in two same-width pairs,
a 2x2x2 max pool after each pair, then two dense layers ending in two
logits (index 1 = Suspicious).

    conv(1->f1) relu conv(f1->f2) relu pool
    conv(f2->f3) relu conv(f3->f4) relu pool
    flatten dense(->hidden) relu dense(->2)
"""

import json
import struct
import warnings
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

from .errors import ConfigError, FormatError, ShapeError
from .kernels import (
    AdamState,
    ConvParams,
    adam_step,
    conv3d_backward,
    conv3d_forward,
    dense_backward,
    dense_forward,
    maxpool3d_backward,
    maxpool3d_forward,
    relu,
    relu_backward,
    seeded_rng,
    softmax_cross_entropy,
)

REFERENCE_FILTERS = (32, 32, 64, 64)
REFERENCE_HIDDEN = 512
NUM_CLASSES = 2
LARGE_NETWORK_PARAMS = 50_000_000


class LargeNetworkWarning(UserWarning):
    pass


@dataclass(frozen=True)
class NetworkConfig:
    depth: int
    height: int
    width: int
    filters: Tuple[int, int, int, int] = REFERENCE_FILTERS
    hidden: int = REFERENCE_HIDDEN
    learning_rate: float = 1e-4
    batch_size: int = 8
    epochs: int = 100
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    dtype: str = "float32"
    custom: bool = False

    def __post_init__(self):
        object.__setattr__(self, "filters", tuple(int(f) for f in self.filters))

    @property
    def pooled_extents(self):
        return tuple(e // 2 // 2 for e in (self.depth, self.height, self.width))

    @property
    def flatten_width(self):
        d, h, w = self.pooled_extents
        return self.filters[3] * d * h * w

    def validate(self):
        if not self.custom:
            bad = []
            if self.filters != REFERENCE_FILTERS:
                bad.append("filters")
            if self.hidden != REFERENCE_HIDDEN:
                bad.append("hidden")
            if bad:
                raise ConfigError(f"{bad} differ from the published architecture; set custom=True to override", bad)
        if len(self.filters) != 4 or min(self.filters) < 1 or self.hidden < 1:
            raise ConfigError(f"bad layer widths filters={self.filters} hidden={self.hidden}", ["filters", "hidden"])
        if self.flatten_width <= 0:
            raise ConfigError(
                f"input {self.depth}x{self.height}x{self.width} collapses to zero after two 2x pools; "
                "depth, height and width must each be at least 4",
                ["depth", "height", "width"],
            )
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype}", ["dtype"])
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive", ["batch_size"])
        return self

    def param_shapes(self) -> Dict[str, tuple]:
        f1, f2, f3, f4 = self.filters
        shapes = {}
        for name, cin, cout in (("conv1", 1, f1), ("conv2", f1, f2), ("conv3", f2, f3), ("conv4", f3, f4)):
            shapes[f"{name}.weight"] = (cout, cin, 3, 3, 3)
            shapes[f"{name}.bias"] = (cout,)
        shapes["fc1.weight"] = (self.flatten_width, self.hidden)
        shapes["fc1.bias"] = (self.hidden,)
        shapes["fc2.weight"] = (self.hidden, NUM_CLASSES)
        shapes["fc2.bias"] = (NUM_CLASSES,)
        return shapes

    def param_count(self):
        """Closed form: sum over layers of fan_in * fan_out + fan_out."""
        f1, f2, f3, f4 = self.filters
        conv = sum(27 * cin * cout + cout for cin, cout in ((1, f1), (f1, f2), (f2, f3), (f3, f4)))
        return conv + self.flatten_width * self.hidden + self.hidden + self.hidden * NUM_CLASSES + NUM_CLASSES

    @property
    def input_shape(self):
        return (1, self.depth, self.height, self.width)


@dataclass
class Network:
    config: NetworkConfig
    params: Dict[str, np.ndarray]
    optimizer: AdamState
    training: bool = True

    @property
    def dtype(self):
        return np.dtype(self.config.dtype)

    def parameter_count(self):
        return sum(p.size for p in self.params.values())

    def conv(self, name):
        return ConvParams(self.params[f"{name}.weight"], self.params[f"{name}.bias"])

    def train(self):
        self.training = True
        return self

    def eval(self):
        self.training = False
        return self


def build_network(config: NetworkConfig) -> Network:
    """Fresh network; weights drawn from U(-b, b) with b = sqrt(6 / fan_in)
    (sqrt(3 / fan_in) for the output layer), biases zero."""
    config.validate()
    n_params = config.param_count()
    if n_params > LARGE_NETWORK_PARAMS:
        warnings.warn(
            f"network for {config.width}x{config.height}x{config.depth} input has {n_params:,} parameters",
            LargeNetworkWarning,
            stacklevel=2,
        )
    rng = seeded_rng(config.seed, "init")
    dtype = np.dtype(config.dtype)
    params = {}
    for name, shape in config.param_shapes().items():
        if name.endswith(".bias"):
            params[name] = np.zeros(shape, dtype=dtype)
            continue
        fan_in = int(np.prod(shape[1:])) if name.startswith("conv") else shape[0]
        gain = 3.0 if name.startswith("fc2") else 6.0
        bound = np.sqrt(gain / fan_in)
        params[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
    opt = AdamState(config.learning_rate, config.beta1, config.beta2, config.epsilon)
    return Network(config, params, opt)


def _check_batch(network, x):
    x = np.asarray(x)
    if x.ndim != 5 or x.shape[1:] != network.config.input_shape:
        raise ShapeError(f"batch shape {x.shape} does not match (N, {', '.join(map(str, network.config.input_shape))})")
    return np.ascontiguousarray(x, dtype=network.dtype)


def forward(network: Network, x, keep=False):
    """Logits (N, 2) for a batch (N, 1, D, H, W); with ``keep`` also the cache
    ``backward`` needs."""
    x = _check_batch(network, x)
    p = network.params
    a1 = relu(conv3d_forward(x, network.conv("conv1")))
    a2 = relu(conv3d_forward(a1, network.conv("conv2")))
    p2, i2 = maxpool3d_forward(a2)
    a3 = relu(conv3d_forward(p2, network.conv("conv3")))
    a4 = relu(conv3d_forward(a3, network.conv("conv4")))
    p4, i4 = maxpool3d_forward(a4)
    flat = p4.reshape(len(x), -1)
    a5 = relu(dense_forward(flat, p["fc1.weight"], p["fc1.bias"]))
    logits = dense_forward(a5, p["fc2.weight"], p["fc2.bias"])
    if not keep:
        return logits
    cache = dict(x=x, a1=a1, a2=a2, p2=p2, i2=i2, a3=a3, a4=a4, p4_shape=p4.shape, i4=i4, flat=flat, a5=a5)
    return logits, cache


def backward(network: Network, cache, grad_logits):
    """Parameter gradients given d(loss)/d(logits)."""
    p = network.params
    c = cache
    g = {}
    ga5, g["fc2.weight"], g["fc2.bias"] = dense_backward(c["a5"], p["fc2.weight"], grad_logits)
    gflat, g["fc1.weight"], g["fc1.bias"] = dense_backward(c["flat"], p["fc1.weight"], relu_backward(c["a5"], ga5))
    ga4 = maxpool3d_backward(c["i4"], gflat.reshape(c["p4_shape"]))
    ga3, g["conv4.weight"], g["conv4.bias"] = conv3d_backward(c["a3"], network.conv("conv4"), relu_backward(c["a4"], ga4))
    gp2, g["conv3.weight"], g["conv3.bias"] = conv3d_backward(c["p2"], network.conv("conv3"), relu_backward(c["a3"], ga3))
    ga2 = maxpool3d_backward(c["i2"], gp2)
    ga1, g["conv2.weight"], g["conv2.bias"] = conv3d_backward(c["a1"], network.conv("conv2"), relu_backward(c["a2"], ga2))
    _, g["conv1.weight"], g["conv1.bias"] = conv3d_backward(
        c["x"], network.conv("conv1"), relu_backward(c["a1"], ga1), need_input_grad=False
    )
    return {name: g[name].astype(network.dtype, copy=False) for name in p}


def loss_and_grads(network: Network, x, y):
    logits, cache = forward(network, x, keep=True)
    loss, _, grad_logits = softmax_cross_entropy(logits, y)
    return loss, backward(network, cache, grad_logits)


def predict(network: Network, x, batch_size=32):
    x = np.asarray(x)
    out = [forward(network, x[i:i + batch_size]).argmax(axis=1) for i in range(0, len(x), batch_size)]
    return np.concatenate(out) if out else np.empty(0, dtype=np.int64)


def train_epoch(network: Network, x, y, batch_size=None, rng=None):
    """One shuffled pass with an Adam update per batch; returns the mean batch loss."""
    if not network.training:
        raise RuntimeError("network is in evaluation mode")
    x = np.asarray(x)
    y = np.asarray(y)
    if len(x) != len(y) or len(x) == 0:
        raise ShapeError(f"{len(x)} clips and {len(y)} labels")
    batch_size = batch_size or network.config.batch_size
    order = rng.permutation(len(x)) if rng is not None else np.arange(len(x))
    losses = []
    for start in range(0, len(x), batch_size):
        idx = np.sort(order[start:start + batch_size])
        loss, grads = loss_and_grads(network, x[idx], y[idx])
        adam_step(network.params, grads, network.optimizer)
        losses.append(loss)
    return float(np.mean(losses))


def fit(network: Network, x, y, epochs=None, batch_size=None, seed=None, on_epoch=None):
    """Train for ``epochs`` passes with a shuffle stream derived from the seed."""
    cfg = network.config
    rng = seeded_rng(cfg.seed if seed is None else seed, "shuffle")
    history = []
    for epoch in range(epochs if epochs is not None else cfg.epochs):
        history.append(train_epoch(network, x, y, batch_size or cfg.batch_size, rng))
        if on_epoch is not None:
            on_epoch(epoch, history[-1])
    return history


@dataclass(frozen=True)
class EvalResult:
    """Confusion matrix with Suspicious as the positive class."""

    tp: int
    fn: int
    fp: int
    tn: int

    @property
    def total(self):
        return self.tp + self.fn + self.fp + self.tn

    @property
    def accuracy(self):
        return (self.tp + self.tn) / self.total if self.total else float("nan")

    @property
    def suspicious_accuracy(self):
        n = self.tp + self.fn
        return self.tp / n if n else float("nan")

    @property
    def normal_accuracy(self):
        n = self.tn + self.fp
        return self.tn / n if n else float("nan")

    def __add__(self, other):
        return EvalResult(self.tp + other.tp, self.fn + other.fn, self.fp + other.fp, self.tn + other.tn)

    @classmethod
    def from_predictions(cls, y_true, y_pred):
        y_true = np.asarray(y_true)
        y_pred = np.asarray(y_pred)
        return cls(
            tp=int(np.sum((y_true == 1) & (y_pred == 1))),
            fn=int(np.sum((y_true == 1) & (y_pred == 0))),
            fp=int(np.sum((y_true == 0) & (y_pred == 1))),
            tn=int(np.sum((y_true == 0) & (y_pred == 0))),
        )


def evaluate(network: Network, x, y, batch_size=32) -> EvalResult:
    if len(x) == 0:
        raise ValueError("cannot evaluate on an empty test set")
    was_training = network.training
    network.eval()
    try:
        return EvalResult.from_predictions(y, predict(network, x, batch_size))
    finally:
        network.training = was_training


# -- checkpoints ----------------------------------------------------------------
#
#   b"PCBW" | u32 version | u32 n | n bytes config JSON (UTF-8, sorted keys)
#   | u32 tensor count | per tensor: u16 name length, name, u8 rank,
#     rank x u32 dims, float32 payload
#
# The config JSON also carries the optimizer step count and training flag.

CHECKPOINT_MAGIC = b"PCBW"
CHECKPOINT_VERSION = 1


def _config_doc(network):
    doc = asdict(network.config)
    doc["filters"] = list(doc["filters"])
    return {"network": doc, "step_count": network.optimizer.step_count, "training": network.training}


def encode_checkpoint(network: Network) -> bytes:
    if network.dtype != np.float32:
        raise ConfigError("checkpoints store float32 tensors; cast the network first", ["dtype"])
    tensors = [(f"param/{k}", v) for k, v in network.params.items()]
    opt = network.optimizer
    tensors += [(f"adam.m/{k}", opt.first_moment[k]) for k in network.params if k in opt.first_moment]
    tensors += [(f"adam.v/{k}", opt.second_moment[k]) for k in network.params if k in opt.second_moment]
    cfg = json.dumps(_config_doc(network), sort_keys=True, separators=(",", ":")).encode()
    out = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(cfg)), cfg, struct.pack("<I", len(tensors))]
    for name, arr in tensors:
        raw = name.encode()
        out.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise FormatError(f"truncated {what}: need {n} bytes, {len(self.buf) - self.pos} left", self.pos)
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt, what):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size, what))


def config_mismatch(a: NetworkConfig, b: NetworkConfig):
    return [f.name for f in fields(NetworkConfig) if getattr(a, f.name) != getattr(b, f.name)]


def decode_checkpoint(buf: bytes, expected: Optional[NetworkConfig] = None) -> Network:
    r = _Reader(buf)
    magic = r.take(4, "magic")
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"bad magic {bytes(magic)!r}, expected {CHECKPOINT_MAGIC!r}", 0)
    (version,) = r.unpack("<I", "version")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", 4)
    (n,) = r.unpack("<I", "config length")
    at = r.pos
    try:
        doc = json.loads(r.take(n, "config").decode())
        config = NetworkConfig(**doc["network"])
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"unreadable config: {exc}", at) from None
    if expected is not None:
        diff = config_mismatch(config, expected)
        if diff:
            raise ConfigError(f"checkpoint config differs in {diff}", diff)
    (count,) = r.unpack("<I", "tensor count")
    tensors = {}
    for _ in range(count):
        (ln,) = r.unpack("<H", "name length")
        name = r.take(ln, "tensor name").decode()
        (rank,) = r.unpack("<B", "rank")
        dims = r.unpack(f"<{rank}I", "dims")
        size = int(np.prod(dims)) * 4
        tensors[name] = np.frombuffer(r.take(size, f"payload of {name}"), dtype="<f4").reshape(dims).astype(np.float32)
    if r.pos != len(buf):
        raise FormatError(f"{len(buf) - r.pos} trailing bytes", r.pos)

    shapes = config.param_shapes()
    params = {}
    for k, shape in shapes.items():
        arr = tensors.get(f"param/{k}")
        if arr is None or arr.shape != shape:
            raise FormatError(f"parameter {k} missing or misshapen", at)
        params[k] = arr.astype(config.dtype, copy=False)
    opt = AdamState(config.learning_rate, config.beta1, config.beta2, config.epsilon, int(doc["step_count"]))
    opt.first_moment = {k: tensors[f"adam.m/{k}"] for k in shapes if f"adam.m/{k}" in tensors}
    opt.second_moment = {k: tensors[f"adam.v/{k}"] for k in shapes if f"adam.v/{k}" in tensors}
    return Network(config, params, opt, bool(doc.get("training", True)))


def save_checkpoint(network: Network, path):
    Path(path).write_bytes(encode_checkpoint(network))


def load_checkpoint(path, expected: Optional[NetworkConfig] = None) -> Network:
    return decode_checkpoint(Path(path).read_bytes(), expected)
