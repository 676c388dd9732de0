"""The three patch-classification networks: builders, execution, serialization.

A NetworkGraph is an ordered, topologically sorted list of primitive layer
descriptors with named producer->consumer edges, so branch/merge topologies
(parallel conv branches, concatenations, residual adds) are explicit. Graphs
and ParameterSets are immutable values; training returns fresh ParameterSets.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .ops import LayerGradients, RunningStats, ShapeError
from .optim import AdamState, adam_step


@dataclass(frozen=True)
class LayerSpec:
    """One primitive layer: kind, producers, and kind-specific geometry."""

    name: str
    kind: str
    inputs: tuple[str, ...]
    row: str
    out_channels: int | None = None
    kernel: tuple[int, int] | None = None
    padding: str = "valid"
    window: tuple[int, int] | None = None
    rate: float = 0.0


@dataclass(frozen=True)
class NetworkGraph:
    """Ordered layer list plus input geometry; validated on construction."""

    name: str
    layers: tuple[LayerSpec, ...]
    input_shape: tuple[int, int, int]
    class_count: int

    def __post_init__(self):
        seen = {"input"}
        for layer in self.layers:
            if layer.name in seen:
                raise ValueError(f"duplicate layer name {layer.name!r}")
            for src in layer.inputs:
                if src not in seen:
                    raise ValueError(f"layer {layer.name!r} consumes unknown input {src!r}")
            seen.add(layer.name)
        if self.layers[-1].kind != "softmax":
            raise ValueError("terminal layer must be softmax")
        fc = self.layers[-2]
        if fc.kind != "dense" or fc.out_channels != self.class_count:
            raise ValueError("softmax must be fed by a dense layer of class_count width")
        layer_output_shapes(self)  # raises ShapeError on any nonconforming merge


@dataclass
class ParameterSet:
    """Named parameter tensors for one network state (one snapshot)."""

    entries: dict[str, np.ndarray]
    epoch_tag: int = 0

    def copy(self) -> "ParameterSet":
        return ParameterSet({k: v.copy() for k, v in self.entries.items()}, self.epoch_tag)


def layer_output_shapes(graph: NetworkGraph) -> dict[str, tuple[int, ...]]:
    """Per-layer output shapes (batch axis omitted); validates all edges."""
    shapes: dict[str, tuple[int, ...]] = {"input": graph.input_shape}
    for layer in graph.layers:
        ins = [shapes[i] for i in layer.inputs]
        shapes[layer.name] = _infer_shape(layer, ins)
    return shapes


def _infer_shape(layer: LayerSpec, ins: list[tuple[int, ...]]) -> tuple[int, ...]:
    kind = layer.kind
    if kind == "conv":
        h, w, _ = ins[0]
        p, q = layer.kernel
        if layer.padding == "same":
            return (h, w, layer.out_channels)
        if p > h or q > w:
            raise ShapeError(f"{layer.name}: kernel {p}x{q} exceeds input {h}x{w}")
        return (h - p + 1, w - q + 1, layer.out_channels)
    if kind == "maxpool":
        h, w, c = ins[0]
        wh, ww = layer.window
        if h % wh or w % ww:
            raise ShapeError(f"{layer.name}: window {wh}x{ww} does not tile input {h}x{w}")
        return (h // wh, w // ww, c)
    if kind == "gap":
        return (ins[0][2],)
    if kind == "concat":
        base = ins[0]
        for i, s in enumerate(ins[1:], start=1):
            if s[:2] != base[:2]:
                raise ShapeError(f"{layer.name}: input {i} spatial {s[:2]} != {base[:2]}")
        return (*base[:2], sum(s[2] for s in ins))
    if kind == "add":
        if ins[0] != ins[1]:
            raise ShapeError(f"{layer.name}: add requires equal shapes, got {ins[0]} vs {ins[1]}")
        return ins[0]
    if kind in ("bn", "relu", "dropout"):
        return ins[0]
    if kind == "flatten":
        return (int(np.prod(ins[0])),)
    if kind == "dense":
        return (layer.out_channels,)
    if kind == "softmax":
        return ins[0]
    raise ValueError(f"unknown layer kind {kind!r}")


def trace_shapes(graph: NetworkGraph) -> dict[str, tuple[int, ...]]:
    """Output shape per row tag (the last primitive layer of each row)."""
    shapes = layer_output_shapes(graph)
    trace: dict[str, tuple[int, ...]] = {}
    for layer in graph.layers:
        trace[layer.row] = shapes[layer.name]
    return trace


# ---------------------------------------------------------------------------
# Builders


def build_wcrn(input_channels: int, class_count: int) -> NetworkGraph:
    """Wide contextual residual network on 5x5 patches.

    Two parallel conv branches (1x1 and 3x3, 64 maps each) are max-pooled to
    1x1, concatenated to 128 channels, refined by two BN+ReLU+Conv 1x1x128
    stages, and merged back through a residual add before the classifier head.
    """
    layers = (
        LayerSpec("conv1a", "conv", ("input",), "1a", out_channels=64, kernel=(1, 1)),
        LayerSpec("conv1b", "conv", ("input",), "1b", out_channels=64, kernel=(3, 3)),
        LayerSpec("pool2a", "maxpool", ("conv1a",), "2a", window=(5, 5)),
        LayerSpec("pool2b", "maxpool", ("conv1b",), "2b", window=(3, 3)),
        LayerSpec("cat3", "concat", ("pool2a", "pool2b"), "3"),
        LayerSpec("bn4", "bn", ("cat3",), "4"),
        LayerSpec("relu4", "relu", ("bn4",), "4"),
        LayerSpec("conv4", "conv", ("relu4",), "4", out_channels=128, kernel=(1, 1)),
        LayerSpec("bn5", "bn", ("conv4",), "5"),
        LayerSpec("relu5", "relu", ("bn5",), "5"),
        LayerSpec("conv5", "conv", ("relu5",), "5", out_channels=128, kernel=(1, 1)),
        LayerSpec("add6", "add", ("cat3", "conv5"), "6"),
        LayerSpec("flat7", "flatten", ("add6",), "7"),
        LayerSpec("fc7", "dense", ("flat7",), "7", out_channels=class_count),
        LayerSpec("prob7", "softmax", ("fc7",), "7"),
    )
    return NetworkGraph("wcrn", layers, (5, 5, input_channels), class_count)


def build_dccnn(input_channels: int, class_count: int) -> NetworkGraph:
    """Deep contextual CNN on 5x5 patches.

    Three parallel convs (1x1, 3x3, 5x5; 128 maps each) pool/concatenate to
    1x1x384, followed by a 1x1x128 residual stack with two adds and two
    dropout(0.5) stages before the classifier head.
    """
    layers = (
        LayerSpec("conv1a", "conv", ("input",), "1a", out_channels=128, kernel=(1, 1)),
        LayerSpec("conv1b", "conv", ("input",), "1b", out_channels=128, kernel=(3, 3)),
        LayerSpec("conv1c", "conv", ("input",), "1c", out_channels=128, kernel=(5, 5)),
        LayerSpec("pool2a", "maxpool", ("conv1a",), "2a", window=(5, 5)),
        LayerSpec("pool2b", "maxpool", ("conv1b",), "2b", window=(3, 3)),
        LayerSpec("cat3", "concat", ("pool2a", "pool2b", "conv1c"), "3"),
        LayerSpec("relu4", "relu", ("cat3",), "4"),
        LayerSpec("bn4", "bn", ("relu4",), "4"),
        LayerSpec("conv4", "conv", ("bn4",), "4", out_channels=128, kernel=(1, 1)),
        LayerSpec("relu5", "relu", ("conv4",), "5"),
        LayerSpec("bn5", "bn", ("relu5",), "5"),
        LayerSpec("conv5", "conv", ("bn5",), "5", out_channels=128, kernel=(1, 1)),
        LayerSpec("relu6", "relu", ("conv5",), "6"),
        LayerSpec("conv6", "conv", ("relu6",), "6", out_channels=128, kernel=(1, 1)),
        LayerSpec("add7", "add", ("conv4", "conv6"), "7"),
        LayerSpec("relu8", "relu", ("add7",), "8"),
        LayerSpec("conv8", "conv", ("relu8",), "8", out_channels=128, kernel=(1, 1)),
        LayerSpec("relu9", "relu", ("conv8",), "9"),
        LayerSpec("conv9", "conv", ("relu9",), "9", out_channels=128, kernel=(1, 1)),
        LayerSpec("add10", "add", ("add7", "conv9"), "10"),
        LayerSpec("relu11a", "relu", ("add10",), "11"),
        LayerSpec("conv11", "conv", ("relu11a",), "11", out_channels=128, kernel=(1, 1)),
        LayerSpec("relu11b", "relu", ("conv11",), "11"),
        LayerSpec("drop11", "dropout", ("relu11b",), "11", rate=0.5),
        LayerSpec("conv12a", "conv", ("drop11",), "12", out_channels=128, kernel=(1, 1)),
        LayerSpec("relu12", "relu", ("conv12a",), "12"),
        LayerSpec("drop12", "dropout", ("relu12",), "12", rate=0.5),
        LayerSpec("conv12b", "conv", ("drop12",), "12", out_channels=128, kernel=(1, 1)),
        LayerSpec("flat13", "flatten", ("conv12b",), "13"),
        LayerSpec("fc13", "dense", ("flat13",), "13", out_channels=class_count),
        LayerSpec("prob13", "softmax", ("fc13",), "13"),
    )
    return NetworkGraph("dccnn", layers, (5, 5, input_channels), class_count)


def build_hresnet(input_channels: int, class_count: int) -> NetworkGraph:
    """Residual 3x3 network on 7x7 patches with a global-average-pooled head."""
    layers = (
        LayerSpec("conv1", "conv", ("input",), "1", out_channels=64, kernel=(3, 3), padding="same"),
        LayerSpec("bn2", "bn", ("conv1",), "2"),
        LayerSpec("relu2", "relu", ("bn2",), "2"),
        LayerSpec("conv2", "conv", ("relu2",), "2", out_channels=64, kernel=(3, 3), padding="same"),
        LayerSpec("relu3", "relu", ("conv2",), "3"),
        LayerSpec("conv3", "conv", ("relu3",), "3", out_channels=64, kernel=(3, 3), padding="same"),
        LayerSpec("add4", "add", ("conv1", "conv3"), "4"),
        LayerSpec("gap5", "gap", ("add4",), "5"),
        LayerSpec("fc6", "dense", ("gap5",), "6", out_channels=class_count),
        LayerSpec("prob6", "softmax", ("fc6",), "6"),
    )
    return NetworkGraph("hresnet", layers, (7, 7, input_channels), class_count)


BUILDERS = {"wcrn": build_wcrn, "dccnn": build_dccnn, "hresnet": build_hresnet}


# ---------------------------------------------------------------------------
# Parameters


def expected_param_shapes(graph: NetworkGraph) -> dict[str, tuple[int, ...]]:
    """Every entry name a ParameterSet for this graph must carry, with shapes."""
    shapes = layer_output_shapes(graph)
    expected: dict[str, tuple[int, ...]] = {}
    for layer in graph.layers:
        in_shape = shapes[layer.inputs[0]] if layer.inputs else None
        if layer.kind == "conv":
            p, q = layer.kernel
            m = in_shape[2]
            expected[f"{layer.name}.weights"] = (p, q, m, layer.out_channels)
            expected[f"{layer.name}.bias"] = (layer.out_channels,)
        elif layer.kind == "dense":
            expected[f"{layer.name}.weights"] = (in_shape[0], layer.out_channels)
            expected[f"{layer.name}.bias"] = (layer.out_channels,)
        elif layer.kind == "bn":
            c = in_shape[-1]
            for part in ("gamma", "beta", "run_mean", "run_var"):
                expected[f"{layer.name}.{part}"] = (c,)
    return expected


def trainable_names(graph: NetworkGraph) -> list[str]:
    """Entries updated by the optimizer (running stats are state, not trainable)."""
    return [
        name
        for name in expected_param_shapes(graph)
        if not name.endswith((".run_mean", ".run_var"))
    ]


def init_params(graph: NetworkGraph, rng: np.random.Generator) -> ParameterSet:
    """Fan-in-scaled uniform weights, zero biases, identity batch-norm."""
    entries: dict[str, np.ndarray] = {}
    for name, shape in expected_param_shapes(graph).items():
        if name.endswith(".weights"):
            fan_in = int(np.prod(shape[:-1]))
            bound = 1.0 / np.sqrt(fan_in)
            entries[name] = rng.uniform(-bound, bound, size=shape)
        elif name.endswith((".bias", ".beta", ".run_mean")):
            entries[name] = np.zeros(shape)
        else:  # gamma, run_var
            entries[name] = np.ones(shape)
    return ParameterSet(entries)


def check_params(graph: NetworkGraph, params: ParameterSet) -> None:
    expected = expected_param_shapes(graph)
    for name, shape in expected.items():
        arr = params.entries.get(name)
        if arr is None:
            raise ShapeError(f"parameter set is missing entry {name!r}")
        if arr.shape != shape:
            raise ShapeError(f"entry {name!r} has shape {arr.shape}, expected {shape}")
    for name in params.entries:
        if name not in expected:
            raise ShapeError(f"parameter set has unexpected entry {name!r}")


def parameter_count(graph: NetworkGraph, trainable_only: bool = True) -> int:
    shapes = expected_param_shapes(graph)
    names = trainable_names(graph) if trainable_only else list(shapes)
    return sum(int(np.prod(shapes[n])) for n in names)


# ---------------------------------------------------------------------------
# Execution


def _forward(graph, params, batch, mode, rng, keep_cache):
    entries = params.entries
    acts: dict[str, np.ndarray] = {"input": batch}
    caches: dict[str, object] = {}
    stats_updates: dict[str, np.ndarray] = {}
    for layer in graph.layers:
        name, kind = layer.name, layer.kind
        x = acts[layer.inputs[0]] if layer.inputs else None
        if kind == "conv":
            out = ops.conv2d_forward(
                x, entries[f"{name}.weights"], entries[f"{name}.bias"], layer.padding
            )
        elif kind == "bn":
            stats = RunningStats(entries[f"{name}.run_mean"], entries[f"{name}.run_var"])
            out, new_stats, cache = ops.batchnorm_forward(
                x, entries[f"{name}.gamma"], entries[f"{name}.beta"], stats, mode
            )
            if mode == "train":
                stats_updates[f"{name}.run_mean"] = new_stats.mean
                stats_updates[f"{name}.run_var"] = new_stats.var
                caches[name] = cache
        elif kind == "relu":
            out = ops.relu(x)
        elif kind == "maxpool":
            out = ops.maxpool2d(x, layer.window)
        elif kind == "gap":
            out = ops.global_avg_pool(x)
        elif kind == "concat":
            parts = [acts[i] for i in layer.inputs]
            out = ops.concatenate(parts, axis=-1)
            caches[name] = [p.shape[-1] for p in parts]
        elif kind == "add":
            out = ops.residual_add(acts[layer.inputs[0]], acts[layer.inputs[1]])
        elif kind == "dropout":
            if mode == "train":
                if rng is None:
                    raise ValueError("train-mode forward through dropout requires an rng")
                out, mask = ops.dropout_forward(x, layer.rate, rng)
                caches[name] = mask
            else:
                out = x
        elif kind == "flatten":
            out = x.reshape(x.shape[0], -1)
        elif kind == "dense":
            out = ops.dense(x, entries[f"{name}.weights"], entries[f"{name}.bias"])
        elif kind == "softmax":
            out = ops.softmax(x)
        else:
            raise ValueError(f"unknown layer kind {kind!r}")
        acts[name] = out
    if not keep_cache:
        return acts[graph.layers[-1].name], None, stats_updates
    return acts, caches, stats_updates


def forward_batch(
    graph: NetworkGraph,
    params: ParameterSet,
    batch: np.ndarray,
    mode: str = "infer",
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Run the network on (N, H, W, C) patches; returns row-stochastic (N, K)."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 4 or batch.shape[1:] != graph.input_shape:
        raise ShapeError(
            f"batch shape {batch.shape} does not match input {('N',) + graph.input_shape}"
        )
    check_params(graph, params)
    probs, _, _ = _forward(graph, params, batch, mode, rng, keep_cache=False)
    return probs


def _backward(graph, params, acts, caches, labels):
    entries = params.entries
    grad_acts: dict[str, np.ndarray] = {}
    param_grads: dict[str, np.ndarray] = {}

    def send(target: str, grad: np.ndarray) -> None:
        if target in grad_acts:
            grad_acts[target] = grad_acts[target] + grad
        else:
            grad_acts[target] = grad

    for layer in reversed(graph.layers):
        name, kind = layer.name, layer.kind
        if kind == "softmax":
            # Fused with the mean cross-entropy loss.
            send(layer.inputs[0], ops.mean_loss_logit_grad(acts[name], labels))
            continue
        g = grad_acts.pop(name, None)
        if g is None:
            continue
        x = acts[layer.inputs[0]] if layer.inputs else None
        if kind == "conv":
            lg = ops.conv2d_backward(x, entries[f"{name}.weights"], g, layer.padding)
            param_grads[f"{name}.weights"] = lg.parameter_grads["weights"]
            param_grads[f"{name}.bias"] = lg.parameter_grads["bias"]
            send(layer.inputs[0], lg.input_grad)
        elif kind == "bn":
            lg = ops.batchnorm_backward(entries[f"{name}.gamma"], caches[name], g)
            param_grads[f"{name}.gamma"] = lg.parameter_grads["gamma"]
            param_grads[f"{name}.beta"] = lg.parameter_grads["beta"]
            send(layer.inputs[0], lg.input_grad)
        elif kind == "relu":
            send(layer.inputs[0], ops.relu_backward(x, g))
        elif kind == "maxpool":
            send(layer.inputs[0], ops.maxpool2d_backward(x, layer.window, g))
        elif kind == "gap":
            send(layer.inputs[0], ops.global_avg_pool_backward(x, g))
        elif kind == "concat":
            for src, part in zip(layer.inputs, ops.concatenate_backward(g, caches[name])):
                send(src, part)
        elif kind == "add":
            send(layer.inputs[0], g)
            send(layer.inputs[1], g)
        elif kind == "dropout":
            send(layer.inputs[0], ops.dropout_backward(caches[name], layer.rate, g))
        elif kind == "flatten":
            send(layer.inputs[0], g.reshape(acts[layer.inputs[0]].shape))
        elif kind == "dense":
            lg = ops.dense_backward(x, entries[f"{name}.weights"], g)
            param_grads[f"{name}.weights"] = lg.parameter_grads["weights"]
            param_grads[f"{name}.bias"] = lg.parameter_grads["bias"]
            send(layer.inputs[0], lg.input_grad)
    return param_grads, grad_acts.get("input")


def train_step(
    graph: NetworkGraph,
    params: ParameterSet,
    batch: np.ndarray,
    labels: np.ndarray,
    adam_state: AdamState,
    rng: np.random.Generator | None = None,
) -> tuple[ParameterSet, AdamState, float]:
    """One forward/backward/Adam update over a batch; returns mean cross entropy."""
    batch = np.asarray(batch, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.intp)
    if labels.min() < 0 or labels.max() >= graph.class_count:
        raise ValueError(f"labels must lie in [0, {graph.class_count})")
    check_params(graph, params)
    acts, caches, stats_updates = _forward(graph, params, batch, "train", rng, keep_cache=True)
    probs = acts[graph.layers[-1].name]
    loss = float(np.mean(ops.cross_entropy(probs, labels)))
    param_grads, _ = _backward(graph, params, acts, caches, labels)
    trainable = {n: params.entries[n] for n in trainable_names(graph)}
    updated, new_state = adam_step(trainable, param_grads, adam_state)
    entries = dict(params.entries)
    entries.update(updated)
    entries.update(stats_updates)
    return ParameterSet(entries, params.epoch_tag), new_state, loss


# ---------------------------------------------------------------------------
# Snapshot serialization

PARAMS_MAGIC = b"AEDL"
PARAMS_VERSION = 1
_EPOCH_TAG_ENTRY = "__epoch_tag__"


class FormatError(ValueError):
    """Malformed parameter or dataset file."""


def params_to_bytes(params: ParameterSet) -> bytes:
    """Encode: magic, version u16, count u32, then per entry
    name-length u16 + UTF-8 name, rank u8, dims u32 each, little-endian f64 data.
    The epoch tag rides along as a reserved rank-0 entry."""
    chunks = [PARAMS_MAGIC, struct.pack("<HI", PARAMS_VERSION, len(params.entries) + 1)]
    items = list(params.entries.items())
    items.append((_EPOCH_TAG_ENTRY, np.float64(params.epoch_tag)))
    for name, arr in items:
        encoded = name.encode("utf-8")
        arr = np.asarray(arr, dtype=np.float64)
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.astype("<f8").tobytes())
    return b"".join(chunks)


def params_from_bytes(blob: bytes) -> ParameterSet:
    view = memoryview(blob)
    pos = 0

    def take(n: int, what: str) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise FormatError(f"truncated at byte {pos}: expected {n} bytes for {what}")
        out = view[pos : pos + n]
        pos += n
        return out

    if bytes(take(4, "magic")) != PARAMS_MAGIC:
        raise FormatError("bad magic; not a parameter file")
    version, count = struct.unpack("<HI", take(6, "header"))
    if version != PARAMS_VERSION:
        raise FormatError(f"unsupported format version {version}")
    entries: dict[str, np.ndarray] = {}
    epoch_tag = 0
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2, "name length"))
        name = bytes(take(name_len, "name")).decode("utf-8")
        (rank,) = struct.unpack("<B", take(1, "rank"))
        dims = struct.unpack(f"<{rank}I", take(4 * rank, "dims"))
        size = int(np.prod(dims)) if rank else 1
        data = np.frombuffer(take(8 * size, f"data of {name!r}"), dtype="<f8")
        if name == _EPOCH_TAG_ENTRY:
            epoch_tag = int(data[0])
        else:
            entries[name] = data.reshape(dims).astype(np.float64)
    if pos != len(view):
        raise FormatError(f"{len(view) - pos} trailing bytes after entry {count}")
    return ParameterSet(entries, epoch_tag)


def save_params(params: ParameterSet, path) -> None:
    with open(path, "wb") as fh:
        fh.write(params_to_bytes(params))


def load_params(path) -> ParameterSet:
    with open(path, "rb") as fh:
        return params_from_bytes(fh.read())
