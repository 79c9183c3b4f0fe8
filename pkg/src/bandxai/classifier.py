"""A small spectral-spatial CNN written directly in numpy.

Activations are laid out as ``(n, height, width, spectral_length, channels)``
until a ``flatten`` layer, then ``(n, features)``. Parameters are held in
float64 arrays whose values are always representable in float32, so a
float32 checkpoint round-trips bit-exactly.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from bandxai.errors import ConfigError, DataError, NumericalError
from bandxai.hypercube import BandStats, Patch, PatchSet, compute_band_stats

LAYER_KINDS = ("spectral_conv", "spatial_conv", "dense", "relu", "flatten", "softmax")
WEIGHTED_KINDS = ("spectral_conv", "spatial_conv", "dense")
LRP_RULES = ("lrp0", "epsilon", "gamma")
STD_FLOOR = 1e-8


@dataclass(frozen=True)
class LayerSpec:
    """One layer. ``kernel`` is an int for ``spectral_conv`` and an
    ``(kh, kw)`` pair for ``spatial_conv``; ``width`` is the output channel
    count for convolutions and the unit count for ``dense``."""

    kind: str
    kernel: int | tuple[int, int] | None = None
    stride: int = 1
    width: int | None = None
    lrp_rule: str | None = None

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ConfigError(f"unknown layer kind {self.kind!r}")
        if self.lrp_rule is not None and self.lrp_rule not in LRP_RULES:
            raise ConfigError(f"unknown LRP rule {self.lrp_rule!r}")
        if self.kind == "spatial_conv" and self.kernel is not None:
            object.__setattr__(self, "kernel", tuple(int(k) for k in self.kernel))


@dataclass(frozen=True)
class NetworkSpec:
    input_dims: tuple[int, int, int]
    layers: tuple[LayerSpec, ...]
    class_count: int
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "input_dims", tuple(int(d) for d in self.input_dims))
        object.__setattr__(self, "layers", tuple(
            l if isinstance(l, LayerSpec) else LayerSpec(**l) for l in self.layers))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(tuple(d["input_dims"]), tuple(LayerSpec(**l) for l in d["layers"]),
                   int(d["class_count"]), int(d.get("seed", 0)))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    batch_size: int = 64
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0
    early_stop_patience: int | None = None
    momentum: float = 0.9

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.optimizer not in ("adam", "sgd_momentum"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")


# -- layers ------------------------------------------------------------------
#
# Weighted layers expose ``linear`` (the affine map with explicit W, b) and
# ``transpose`` (its adjoint with respect to the input). Backprop and LRP are
# both written in terms of these two.

class _SpectralConv:
    def __init__(self, spec: LayerSpec, in_shape):
        H, W, L, C = in_shape
        self.k, self.s, self.out_c = int(spec.kernel), int(spec.stride), int(spec.width)
        if self.k < 1 or self.s < 1 or self.out_c < 1:
            raise ConfigError("spectral_conv needs positive kernel, stride and width")
        if self.k > L:
            raise ConfigError(f"spectral kernel {self.k} exceeds spectral length {L}")
        self.L_out = (L - self.k) // self.s + 1
        self.in_shape = in_shape
        self.out_shape = (H, W, self.L_out, self.out_c)
        self.param_shapes = {"weight": (self.k, C, self.out_c), "bias": (self.out_c,)}
        self.fan_in = self.k * C

    def _window(self, j):
        return slice(j, j + self.s * (self.L_out - 1) + 1, self.s)

    def linear(self, x, W, b):
        out = np.zeros(x.shape[:3] + (self.L_out, self.out_c))
        for j in range(self.k):
            out += x[:, :, :, self._window(j), :] @ W[j]
        return out + b

    def transpose(self, g, W):
        gx = np.zeros((g.shape[0],) + self.in_shape)
        for j in range(self.k):
            gx[:, :, :, self._window(j), :] += g @ W[j].T
        return gx

    def param_grads(self, x, g):
        axes = ([0, 1, 2, 3], [0, 1, 2, 3])
        gw = np.stack([np.tensordot(x[:, :, :, self._window(j), :], g, axes=axes)
                       for j in range(self.k)])
        return {"weight": gw, "bias": g.sum(axis=(0, 1, 2, 3))}


class _SpatialConv:
    def __init__(self, spec: LayerSpec, in_shape):
        H, W, L, C = in_shape
        self.kh, self.kw = spec.kernel
        self.out_c = int(spec.width)
        if self.kh < 1 or self.kw < 1 or self.out_c < 1:
            raise ConfigError("spatial_conv needs positive kernel and width")
        if self.kh > H or self.kw > W:
            raise ConfigError(f"spatial kernel {spec.kernel} exceeds spatial extent {(H, W)}")
        self.H_out, self.W_out = H - self.kh + 1, W - self.kw + 1
        self.in_shape = in_shape
        self.out_shape = (self.H_out, self.W_out, L, self.out_c)
        self.param_shapes = {"weight": (self.kh, self.kw, C, self.out_c), "bias": (self.out_c,)}
        self.fan_in = self.kh * self.kw * C

    def linear(self, x, W, b):
        out = np.zeros((x.shape[0],) + self.out_shape)
        for i in range(self.kh):
            for j in range(self.kw):
                out += x[:, i:i + self.H_out, j:j + self.W_out] @ W[i, j]
        return out + b

    def transpose(self, g, W):
        gx = np.zeros((g.shape[0],) + self.in_shape)
        for i in range(self.kh):
            for j in range(self.kw):
                gx[:, i:i + self.H_out, j:j + self.W_out] += g @ W[i, j].T
        return gx

    def param_grads(self, x, g):
        axes = ([0, 1, 2, 3], [0, 1, 2, 3])
        gw = np.empty(self.param_shapes["weight"])
        for i in range(self.kh):
            for j in range(self.kw):
                gw[i, j] = np.tensordot(x[:, i:i + self.H_out, j:j + self.W_out], g, axes=axes)
        return {"weight": gw, "bias": g.sum(axis=(0, 1, 2, 3))}


class _Dense:
    def __init__(self, spec: LayerSpec, in_shape):
        if len(in_shape) != 1:
            raise ConfigError("dense layers need a flat input; add a flatten layer first")
        self.out_c = int(spec.width)
        if self.out_c < 1:
            raise ConfigError("dense width must be >= 1")
        self.in_shape = in_shape
        self.out_shape = (self.out_c,)
        self.param_shapes = {"weight": (in_shape[0], self.out_c), "bias": (self.out_c,)}
        self.fan_in = in_shape[0]

    def linear(self, x, W, b):
        return x @ W + b

    def transpose(self, g, W):
        return g @ W.T

    def param_grads(self, x, g):
        return {"weight": x.T @ g, "bias": g.sum(axis=0)}


class _ReLU:
    param_shapes: dict = {}

    def __init__(self, spec, in_shape):
        self.in_shape = self.out_shape = in_shape


class _Flatten:
    param_shapes: dict = {}

    def __init__(self, spec, in_shape):
        self.in_shape = in_shape
        self.out_shape = (int(np.prod(in_shape)),)


_LAYER_CLASSES = {
    "spectral_conv": _SpectralConv,
    "spatial_conv": _SpatialConv,
    "dense": _Dense,
    "relu": _ReLU,
    "flatten": _Flatten,
}


def build_layers(spec: NetworkSpec) -> list:
    """Instantiate the layer chain (softmax excluded) and check that shapes chain."""
    if spec.class_count < 1:
        raise ConfigError("class_count must be >= 1")
    if any(d < 1 for d in spec.input_dims):
        raise ConfigError(f"invalid input dims {spec.input_dims}")
    kinds = [l.kind for l in spec.layers]
    if kinds.count("softmax") != 1 or kinds[-1] != "softmax":
        raise ConfigError("exactly one softmax layer is required, and it must be last")
    h, w, b = spec.input_dims
    shape = (h, w, b, 1)
    layers = []
    for ls in spec.layers[:-1]:
        if ls.kind in ("spectral_conv", "spatial_conv") and len(shape) != 4:
            raise ConfigError(f"{ls.kind} cannot follow flatten")
        if ls.kind == "flatten" and len(shape) != 4:
            raise ConfigError("flatten applied twice")
        layer = _LAYER_CLASSES[ls.kind](ls, shape)
        layers.append(layer)
        shape = layer.out_shape
    if shape != (spec.class_count,):
        raise ConfigError(f"network output shape {shape} does not match {spec.class_count} classes")
    return layers


def preset_spec(name: str, input_dims, class_count: int, seed: int = 0) -> NetworkSpec:
    """Preset architectures.

    ``"shallow"`` is one conv block (spectral conv, spatial conv, ReLU) feeding
    the classifier head. ``"deep"`` stacks three blocks (two spectral, one
    spatial) and adds a hidden dense layer.
    """
    h, w, b = (int(d) for d in input_dims)
    spatial = (min(3, h), min(3, w))
    if name == "shallow":
        layers = [LayerSpec("spectral_conv", kernel=3, stride=1, width=4),
                  LayerSpec("spatial_conv", kernel=spatial, width=4), LayerSpec("relu"),
                  LayerSpec("flatten"), LayerSpec("dense", width=class_count), LayerSpec("softmax")]
    elif name == "deep":
        layers = [LayerSpec("spectral_conv", kernel=3, stride=1, width=8), LayerSpec("relu"),
                  LayerSpec("spectral_conv", kernel=3, stride=1, width=8), LayerSpec("relu"),
                  LayerSpec("spatial_conv", kernel=spatial, width=8), LayerSpec("relu"),
                  LayerSpec("flatten"), LayerSpec("dense", width=32), LayerSpec("relu"),
                  LayerSpec("dense", width=class_count), LayerSpec("softmax")]
    else:
        raise ConfigError(f"unknown network preset {name!r}")
    return rebuild_for_bands(NetworkSpec((h, w, b), tuple(layers), class_count, seed), b)


def rebuild_for_bands(spec: NetworkSpec, bands: int) -> NetworkSpec:
    """Same layer sequence on a ``bands``-deep input.

    Spectral kernels are clamped to the spectral length reaching them; a
    clamped kernel also caps its stride at the new kernel size. Everything
    else is unchanged (dense input sizes are inferred, not stored).
    """
    if bands < 1:
        raise ConfigError("band count must be >= 1")
    h, w, _ = spec.input_dims
    length = bands
    new_layers = []
    for ls in spec.layers:
        if ls.kind == "spectral_conv":
            k, s = int(ls.kernel), int(ls.stride)
            if k > length:
                k = length
                s = min(s, k)
            ls = dataclasses.replace(ls, kernel=k, stride=s)
            length = (length - k) // s + 1
        new_layers.append(ls)
    return NetworkSpec((h, w, bands), tuple(new_layers), spec.class_count, spec.seed)


# -- network -------------------------------------------------------------------

def _f32(a: np.ndarray) -> np.ndarray:
    return np.asarray(a, dtype=np.float32).astype(np.float64)


@dataclass
class Network:
    """Specification, per-layer parameters and the input band standardizer."""

    spec: NetworkSpec
    params: list[dict[str, np.ndarray]]
    standardizer: BandStats
    layers: list = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.layers = build_layers(self.spec)
        if len(self.params) != len(self.layers):
            raise DataError("parameter list does not match the layer chain")
        for layer, p in zip(self.layers, self.params):
            for name, shape in layer.param_shapes.items():
                if name not in p or p[name].shape != shape:
                    raise DataError(f"parameter {name} has wrong shape for {type(layer).__name__}")
                if not np.all(np.isfinite(p[name])):
                    raise DataError("non-finite weights")
        if self.standardizer.band_count != self.spec.input_dims[2]:
            raise DataError("standardizer band count does not match the network input")

    @property
    def class_count(self) -> int:
        return self.spec.class_count

    def copy(self) -> "Network":
        return Network(self.spec, [{k: v.copy() for k, v in p.items()} for p in self.params],
                       self.standardizer)

    def standardize(self, values: np.ndarray) -> np.ndarray:
        """Raw ``(n, h', w', b)`` patches to standardized network input ``(n, h', w', b, 1)``."""
        scale = np.maximum(self.standardizer.std, STD_FLOOR)
        z = (np.asarray(values, dtype=np.float64) - self.standardizer.mean) / scale
        return z[..., None]

    def _check_input(self, values):
        if values.ndim != 4 or tuple(values.shape[1:]) != self.spec.input_dims:
            raise DataError(f"patch shape {values.shape[1:]} does not match network input {self.spec.input_dims}")

    def run(self, x: np.ndarray, keep: bool = False):
        """Run the layer chain on standardized input; returns logits or all activations."""
        acts = [x]
        for layer, p in zip(self.layers, self.params):
            if isinstance(layer, _ReLU):
                x = np.maximum(x, 0.0)
            elif isinstance(layer, _Flatten):
                x = x.reshape(x.shape[0], -1)
            else:
                x = layer.linear(x, p["weight"], p["bias"])
            if keep:
                acts.append(x)
        return acts if keep else x

    def logits(self, values: np.ndarray, standardized: bool = False, batch: int = 2048) -> np.ndarray:
        values = np.asarray(values)
        if standardized:
            if values.ndim == 5:
                values = values[..., 0]
            self._check_input(values)
        else:
            self._check_input(values)
        out = np.empty((values.shape[0], self.class_count))
        for start in range(0, values.shape[0], batch):
            chunk = values[start:start + batch]
            x = chunk[..., None].astype(np.float64) if standardized else self.standardize(chunk)
            out[start:start + batch] = self.run(x)
        if not np.all(np.isfinite(out)):
            raise NumericalError("non-finite activation in forward pass")
        return out

    def predict_proba(self, values: np.ndarray, standardized: bool = False) -> np.ndarray:
        """Softmax confidences for a batch of raw (or standardized) patches."""
        return softmax(self.logits(values, standardized=standardized))


@dataclass(frozen=True)
class ActivationTrace:
    """Post-activation tensors of one forward pass.

    ``activations[0]`` is the standardized input and ``activations[i + 1]``
    the output of layer ``i``; the last entry holds the logits.
    """

    activations: list
    probabilities: np.ndarray

    @property
    def input(self) -> np.ndarray:
        return self.activations[0]

    @property
    def logits(self) -> np.ndarray:
        return self.activations[-1]


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def init_network(spec: NetworkSpec) -> Network:
    """He-normal (fan-in) weights and zero biases, deterministic in ``spec.seed``."""
    layers = build_layers(spec)
    rng = np.random.default_rng(spec.seed)
    params = []
    for layer in layers:
        p = {}
        if "weight" in layer.param_shapes:
            std = math.sqrt(2.0 / layer.fan_in)
            p["weight"] = _f32(rng.standard_normal(layer.param_shapes["weight"]) * std)
            p["bias"] = np.zeros(layer.param_shapes["bias"])
        params.append(p)
    b = spec.input_dims[2]
    return Network(spec, params, BandStats(np.zeros(b), np.ones(b)))


def forward(net: Network, patch: Patch, trace: bool = False):
    """Logits and confidences for one patch, optionally with the activation trace."""
    values = np.asarray(patch.values if isinstance(patch, Patch) else patch)[None]
    net._check_input(values)
    acts = net.run(net.standardize(values), keep=True)
    logits = acts[-1][0]
    if not np.all(np.isfinite(logits)):
        raise NumericalError("non-finite activation in forward pass")
    conf = softmax(logits)
    if trace:
        return logits, conf, ActivationTrace([a[0] for a in acts], conf)
    return logits, conf


def predict(net: Network, patch: Patch) -> int:
    """1-based class id of maximum confidence; ties go to the lowest id."""
    _, conf = forward(net, patch)
    return int(np.argmax(conf)) + 1


def predict_batch(net: Network, values: np.ndarray) -> np.ndarray:
    return np.argmax(net.predict_proba(values), axis=1) + 1


def loss_and_grads(net: Network, x: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy on standardized input ``x`` and its parameter gradients."""
    acts = net.run(x, keep=True)
    logits = acts[-1]
    p = softmax(logits)
    n = x.shape[0]
    y = np.asarray(labels) - 1
    loss = -np.mean(np.log(np.maximum(p[np.arange(n), y], 1e-300)))
    g = p.copy()
    g[np.arange(n), y] -= 1.0
    g /= n
    grads = [dict() for _ in net.layers]
    for i in range(len(net.layers) - 1, -1, -1):
        layer, a_in = net.layers[i], acts[i]
        if isinstance(layer, _ReLU):
            g = g * (a_in > 0)
        elif isinstance(layer, _Flatten):
            g = g.reshape((n,) + layer.in_shape)
        else:
            grads[i] = layer.param_grads(a_in, g)
            if i > 0:
                g = layer.transpose(g, net.params[i]["weight"])
    return loss, grads, p


class _Adam:
    def __init__(self, params, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps, self.t = lr, b1, b2, eps, 0
        self.m = [{k: np.zeros_like(v) for k, v in p.items()} for p in params]
        self.v = [{k: np.zeros_like(v) for k, v in p.items()} for p in params]

    def step(self, params, grads):
        self.t += 1
        c1, c2 = 1 - self.b1 ** self.t, 1 - self.b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            for k in p:
                m[k] = self.b1 * m[k] + (1 - self.b1) * g[k]
                v[k] = self.b2 * v[k] + (1 - self.b2) * g[k] ** 2
                p[k] = _f32(p[k] - self.lr * (m[k] / c1) / (np.sqrt(v[k] / c2) + self.eps))


class _SGDMomentum:
    def __init__(self, params, lr, momentum):
        self.lr, self.mu = lr, momentum
        self.vel = [{k: np.zeros_like(v) for k, v in p.items()} for p in params]

    def step(self, params, grads):
        for p, g, vel in zip(params, grads, self.vel):
            for k in p:
                vel[k] = self.mu * vel[k] - self.lr * g[k]
                p[k] = _f32(p[k] + vel[k])


def train(net: Network, train_set: PatchSet, cfg: TrainConfig):
    """Minibatch training on ``train_set``; returns a new network and per-epoch history.

    The band standardizer is refit on ``train_set``. Patches are put in a
    canonical order (by id, then center) before seeded shuffling, so the
    result does not depend on how the set happens to be stored.
    """
    if len(train_set) == 0:
        raise DataError("training set is empty")
    if train_set.band_count != net.spec.input_dims[2]:
        raise DataError("training patches do not match the network's band count")
    if train_set.labels.max() > net.class_count:
        raise DataError("training labels exceed the network's class count")
    stats = compute_band_stats(train_set)
    net = Network(net.spec, [{k: v.copy() for k, v in p.items()} for p in net.params],
                  BandStats(_f32(stats.mean), _f32(stats.std)))
    order = np.lexsort((train_set.centers[:, 1], train_set.centers[:, 0], train_set.ids))
    x_all = net.standardize(train_set.values[order])
    y_all = train_set.labels[order]
    n = x_all.shape[0]
    opt = (_Adam(net.params, cfg.learning_rate) if cfg.optimizer == "adam"
           else _SGDMomentum(net.params, cfg.learning_rate, cfg.momentum))
    rng = np.random.default_rng(cfg.seed)
    history = []
    best, stale = math.inf, 0
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(n)
        total_loss, correct = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            loss, grads, p = loss_and_grads(net, x_all[idx], y_all[idx])
            if not math.isfinite(loss):
                raise NumericalError(f"training diverged at epoch {epoch}: loss={loss}")
            total_loss += loss * idx.size
            correct += int(np.sum(np.argmax(p, axis=1) + 1 == y_all[idx]))
            opt.step(net.params, grads)
        epoch_loss = total_loss / n
        history.append({"epoch": epoch, "loss": epoch_loss, "train_acc": 100.0 * correct / n})
        if cfg.early_stop_patience is not None:
            if epoch_loss < best - 1e-9:
                best, stale = epoch_loss, 0
            else:
                stale += 1
                if stale >= cfg.early_stop_patience:
                    break
    for p in net.params:
        for v in p.values():
            if not np.all(np.isfinite(v)):
                raise NumericalError("training produced non-finite weights")
    return net, history


def evaluate_accuracy(net: Network, test: PatchSet) -> float:
    """Overall accuracy in percent."""
    if len(test) == 0:
        raise DataError("test set is empty")
    return 100.0 * float(np.mean(predict_batch(net, test.values) == test.labels))


def write_history(history: list[dict], path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["epoch", "loss", "train_acc"])
        for row in history:
            writer.writerow([row["epoch"], repr(float(row["loss"])), repr(float(row["train_acc"]))])


# -- checkpoints -----------------------------------------------------------------

def _tensor_items(net: Network):
    for i, p in enumerate(net.params):
        for name in ("weight", "bias"):
            if name in p:
                yield f"layer{i}.{name}", p[name]
    yield "standardizer.mean", net.standardizer.mean
    yield "standardizer.std", net.standardizer.std


def save_model(net: Network, directory) -> tuple[Path, Path]:
    """Write ``model.json`` (spec, tensor table, sha256) and ``model.bin`` (float32 LE)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    blobs, table, offset = [], [], 0
    for name, arr in _tensor_items(net):
        raw = np.asarray(arr, dtype="<f4").tobytes()
        table.append({"name": name, "shape": list(arr.shape), "offset": offset, "byte_length": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    data = b"".join(blobs)
    manifest = {"spec": net.spec.to_dict(), "tensors": table,
                "checksum": hashlib.sha256(data).hexdigest()}
    bin_path, json_path = directory / "model.bin", directory / "model.json"
    bin_path.write_bytes(data)
    json_path.write_text(json.dumps(manifest, indent=2))
    return json_path, bin_path


def load_model(directory) -> Network:
    directory = Path(directory)
    json_path, bin_path = directory / "model.json", directory / "model.bin"
    if not json_path.is_file() or not bin_path.is_file():
        raise DataError(f"checkpoint files missing in {directory}")
    try:
        manifest = json.loads(json_path.read_text())
        spec = NetworkSpec.from_dict(manifest["spec"])
        table = {t["name"]: t for t in manifest["tensors"]}
        checksum = manifest["checksum"]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"corrupted model manifest: {exc}") from exc
    data = bin_path.read_bytes()
    if hashlib.sha256(data).hexdigest() != checksum:
        raise DataError("model.bin checksum mismatch")

    def tensor(name, shape):
        t = table.get(name)
        if t is None or tuple(t["shape"]) != tuple(shape):
            raise DataError(f"tensor {name} missing or has wrong shape")
        nbytes = int(np.prod(shape, dtype=np.int64)) * 4
        if t["byte_length"] != nbytes or t["offset"] + nbytes > len(data):
            raise DataError(f"tensor {name} has inconsistent byte range")
        arr = np.frombuffer(data, dtype="<f4", count=nbytes // 4, offset=t["offset"])
        return arr.astype(np.float64).reshape(shape)

    layers = build_layers(spec)
    params = [{name: tensor(f"layer{i}.{name}", shape) for name, shape in layer.param_shapes.items()}
              for i, layer in enumerate(layers)]
    b = spec.input_dims[2]
    stats = BandStats(tensor("standardizer.mean", (b,)), tensor("standardizer.std", (b,)))
    return Network(spec, params, stats)
