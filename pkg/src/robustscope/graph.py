"""Model container loading and DAG execution.

A model container is a directory holding ``manifest.json`` plus one raw
little-endian float32 blob per weighted node (see docs/formats.md). The graph
is validated at load (acyclic, references resolve, shapes consistent) and is
immutable afterwards; forward passes capture activations at requested nodes
and gradients of scalar objectives w.r.t. the input image are computed by
composing per-op VJPs in reverse topological order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as tn
from .errors import GraphError, ShapeError
from .tensor import OpSpec, Tensor

INPUT_NODE = "input"

_WEIGHTED = {"conv2d", "dense"}


@dataclass(frozen=True)
class GraphNode:
    node_id: str
    spec: OpSpec
    inputs: tuple[str, ...]
    weights: Tensor | None = None
    bias: Tensor | None = None


@dataclass
class ActivationStore:
    """Forward results: logits plus the tensors captured at requested nodes."""

    logits: Tensor | None
    captured: dict[str, Tensor]


@dataclass(frozen=True)
class ActivationMap:
    """Signed 2D activation slice with symmetric color-scaling metadata.

    Rendering maps +vmax to red, 0 to white and -vmax to blue.
    """

    model_id: str
    node_id: str
    channel: int
    values: np.ndarray  # [H, W] float32
    vmax: float

    def quantize(self) -> np.ndarray:
        """uint8 encoding: 128 + round(127*v/vmax); odd-symmetric around 128."""
        q = 128.0 + np.round(127.0 * self.values.astype(np.float64) / self.vmax)
        return np.clip(q, 0, 255).astype(np.uint8)

    @staticmethod
    def dequantize(q: np.ndarray, vmax: float) -> np.ndarray:
        return ((q.astype(np.float64) - 128.0) / 127.0 * vmax).astype(np.float32)

    def to_rgb(self) -> np.ndarray:
        """Diverging blue-white-red rendering, uint8 [H, W, 3]."""
        t = np.clip(self.values.astype(np.float64) / self.vmax, -1.0, 1.0)
        rgb = np.empty(self.values.shape + (3,), dtype=np.float64)
        pos = np.maximum(t, 0.0)
        neg = np.maximum(-t, 0.0)
        rgb[..., 0] = 1.0 - neg
        rgb[..., 1] = 1.0 - pos - neg
        rgb[..., 2] = 1.0 - pos
        return np.round(rgb * 255.0).astype(np.uint8)


@dataclass(frozen=True)
class NeuronGroup:
    name: str
    node_id: str
    channels: tuple[int, ...]
    fvis_assets: dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.channels) < 1:
            raise ValueError(f"neuron group {self.name!r} is empty")


@dataclass(frozen=True)
class Objective:
    """Scalar objective for input gradients.

    kind: 'logit' / 'neg_logit' (attr = class index) or 'mean_activation'
    (attr = (node_id, channel)).
    """

    kind: str
    class_index: int | None = None
    node_id: str | None = None
    channel: int | None = None

    @staticmethod
    def logit(class_index: int) -> "Objective":
        return Objective("logit", class_index=class_index)

    @staticmethod
    def neg_logit(class_index: int) -> "Objective":
        return Objective("neg_logit", class_index=class_index)

    @staticmethod
    def mean_activation(node_id: str, channel: int) -> "Objective":
        return Objective("mean_activation", node_id=node_id, channel=channel)


class ModelGraph:
    """Validated, immutable DAG of layer ops with per-node output shapes."""

    def __init__(self, manifest: dict, nodes: dict[str, GraphNode], root: Path):
        self.manifest = manifest
        self.model_id: str = manifest["model_id"]
        self.checkpoint: str = manifest["checkpoint"]
        self.labels: list[str] = list(manifest["labels"])
        self.input_shape: tuple[int, ...] = tuple(manifest["input_shape"])
        norm = manifest.get("normalization", {})
        self.norm_mean = np.asarray(norm.get("mean", [0.0] * self.input_shape[0]), dtype=np.float32)
        self.norm_std = np.asarray(norm.get("std", [1.0] * self.input_shape[0]), dtype=np.float32)
        self.output_node: str = manifest["output"]
        self.nodes = nodes
        self.root = root
        self.order = self._toposort()
        self.shapes = self._infer_shapes(self.input_shape)
        self.groups = self._load_groups()
        self._validate()

    @property
    def key(self) -> str:
        return f"{self.model_id}:{self.checkpoint}"

    # -- validation ---------------------------------------------------------

    def _toposort(self) -> list[str]:
        indeg = {nid: 0 for nid in self.nodes}
        consumers: dict[str, list[str]] = {nid: [] for nid in self.nodes}
        for nid, node in self.nodes.items():
            for src in node.inputs:
                if src == INPUT_NODE:
                    continue
                if src not in self.nodes:
                    raise GraphError(f"node {nid!r} references unknown node {src!r}")
                indeg[nid] += 1
                consumers[src].append(nid)
        ready = sorted(nid for nid, d in indeg.items() if d == 0)
        order: list[str] = []
        while ready:
            nid = ready.pop(0)
            order.append(nid)
            for c in sorted(consumers[nid]):
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
        if len(order) != len(self.nodes):
            cyc = sorted(nid for nid, d in indeg.items() if d > 0)
            raise GraphError(f"cycle detected involving nodes {', '.join(cyc)}")
        return order

    def _infer_shapes(self, input_shape) -> dict[str, tuple[int, ...]]:
        shapes: dict[str, tuple[int, ...]] = {INPUT_NODE: tuple(input_shape)}
        for nid in self.order:
            node = self.nodes[nid]
            ins = [shapes[s] for s in node.inputs]
            try:
                shapes[nid] = _infer_one(node, ins)
            except ShapeError as e:
                raise GraphError(f"node {nid!r}: {e}") from e
        return shapes

    def _validate(self):
        if self.output_node not in self.nodes:
            raise GraphError(f"output node {self.output_node!r} not defined")
        out_shape = self.shapes[self.output_node]
        if out_shape != (len(self.labels),):
            raise GraphError(
                f"output node {self.output_node!r} produces shape {out_shape}, "
                f"expected logit vector of length {len(self.labels)}"
            )
        for g in self.groups:
            if g.node_id not in self.nodes:
                raise GraphError(f"neuron group {g.name!r} references unknown node {g.node_id!r}")
            cmax = self.shapes[g.node_id][0]
            if any(c < 0 or c >= cmax for c in g.channels):
                raise GraphError(f"neuron group {g.name!r} has channel out of range (node has {cmax})")

    def _load_groups(self) -> list[NeuronGroup]:
        path = self.root / "groups.json"
        if not path.exists():
            return []
        raw = json.loads(path.read_text())
        groups = []
        for g in raw:
            groups.append(NeuronGroup(
                name=g["name"],
                node_id=g["node"],
                channels=tuple(int(c) for c in g["channels"]),
                fvis_assets={int(k): v for k, v in g.get("fvis", {}).items()},
            ))
        return groups

    def comparable_with(self, other: "ModelGraph") -> bool:
        """Same node names, op specs and shapes; weights may differ."""
        if set(self.nodes) != set(other.nodes):
            return False
        if self.shapes != other.shapes:
            return False
        for nid, node in self.nodes.items():
            o = other.nodes[nid]
            if node.spec != o.spec or node.inputs != o.inputs:
                return False
        return True

    # -- execution ----------------------------------------------------------

    def normalize(self, image: np.ndarray) -> np.ndarray:
        return (image - self.norm_mean[:, None, None]) / self.norm_std[:, None, None]

    def ancestors_of(self, targets: set[str]) -> set[str]:
        """All nodes needed to compute the given node ids (inclusive)."""
        needed: set[str] = set()
        stack = [t for t in targets if t != INPUT_NODE]
        while stack:
            nid = stack.pop()
            if nid in needed:
                continue
            needed.add(nid)
            stack.extend(s for s in self.nodes[nid].inputs if s != INPUT_NODE)
        return needed

    def _run(self, image: Tensor, needed: set[str] | None) -> dict[str, Tensor]:
        values: dict[str, Tensor] = {INPUT_NODE: Tensor(self.normalize(image.data))}
        for nid in self.order:
            if needed is not None and nid not in needed:
                continue
            node = self.nodes[nid]
            ins = [values[s] for s in node.inputs]
            values[nid] = _apply(node, ins)
        return values

    def forward(self, image: Tensor, capture: set[str] | frozenset[str] = frozenset(),
                need_logits: bool = True) -> ActivationStore:
        """Forward pass over the [0,1] image; capture is a set of node ids.

        With need_logits=False only the ancestors of the capture set run,
        which is what keeps activation-only live views cheap.
        """
        if image.shape != self.input_shape:
            raise ShapeError(f"input shape {image.shape} != model input {self.input_shape}")
        for nid in capture:
            if nid not in self.nodes:
                raise GraphError(f"capture node {nid!r} not in graph")
        targets = set(capture)
        if need_logits:
            targets.add(self.output_node)
        values = self._run(image, self.ancestors_of(targets))
        logits = values.get(self.output_node) if need_logits else None
        return ActivationStore(logits=logits, captured={nid: values[nid] for nid in capture})

    def input_gradient(self, image: Tensor, objective: Objective) -> Tensor:
        """Gradient of the objective w.r.t. the un-normalized [0,1] image."""
        if image.shape != self.input_shape:
            raise ShapeError(f"input shape {image.shape} != model input {self.input_shape}")
        seed_node, seed = self._objective_seed(objective)
        needed = self.ancestors_of({seed_node})
        values = self._run(image, needed)

        grads: dict[str, np.ndarray] = {seed_node: seed(values[seed_node])}
        for nid in reversed(self.order):
            if nid not in grads or nid not in needed:
                continue
            node = self.nodes[nid]
            up = Tensor(grads.pop(nid))
            ins = [values[s] for s in node.inputs]
            for src, g in zip(node.inputs, _vjp(node, ins, up)):
                if src in grads:
                    grads[src] = grads[src] + g.data
                else:
                    grads[src] = g.data
        g_in = grads.get(INPUT_NODE)
        if g_in is None:
            g_in = np.zeros(self.input_shape, dtype=np.float32)
        # chain through normalization: d(normalized)/d(raw) = 1/std
        return Tensor(g_in / self.norm_std[:, None, None])

    def _objective_seed(self, obj: Objective):
        if obj.kind in ("logit", "neg_logit"):
            c = obj.class_index
            if c is None or not (0 <= c < len(self.labels)):
                raise GraphError(f"objective class {c!r} out of range (n={len(self.labels)})")
            sign = 1.0 if obj.kind == "logit" else -1.0

            def seed(t: Tensor) -> np.ndarray:
                g = np.zeros(t.shape, dtype=np.float32)
                g[c] = sign
                return g

            return self.output_node, seed
        if obj.kind == "mean_activation":
            if obj.node_id not in self.nodes:
                raise GraphError(f"objective references unknown node {obj.node_id!r}")
            shape = self.shapes[obj.node_id]
            if len(shape) != 3:
                raise GraphError(f"objective node {obj.node_id!r} is not spatial")
            if not (0 <= obj.channel < shape[0]):
                raise GraphError(f"objective channel {obj.channel} out of range (node has {shape[0]})")

            def seed(t: Tensor) -> np.ndarray:
                g = np.zeros(t.shape, dtype=np.float32)
                g[obj.channel] = 1.0 / (t.shape[1] * t.shape[2])
                return g

            return obj.node_id, seed
        raise GraphError(f"unknown objective kind {obj.kind!r}")


def activation_map(store: ActivationStore, graph: ModelGraph, node_id: str,
                   channel: int, eps: float = 1e-12) -> ActivationMap:
    """2D slice of a captured node at one channel with symmetric vmax."""
    if node_id not in store.captured:
        raise GraphError(f"node {node_id!r} was not captured")
    t = store.captured[node_id]
    if t.data.ndim != 3:
        raise GraphError(f"node {node_id!r} output is not spatial")
    if not (0 <= channel < t.shape[0]):
        raise GraphError(f"channel {channel} out of range (node has {t.shape[0]})")
    values = np.ascontiguousarray(t.data[channel])
    vmax = max(float(np.max(np.abs(values))), eps)
    return ActivationMap(graph.key, node_id, channel, values, vmax)


# ---------------------------------------------------------------------------
# per-node dispatch
# ---------------------------------------------------------------------------

def _infer_one(node: GraphNode, ins: list[tuple[int, ...]]) -> tuple[int, ...]:
    kind, attrs = node.spec.kind, node.spec.attrs
    if kind == "conv2d":
        cout, cin, kh, kw = node.weights.shape
        if len(ins[0]) != 3 or ins[0][0] != cin:
            raise ShapeError(f"conv2d expects [{cin},H,W], got {ins[0]}")
        oh, ow = tn._out_hw(ins[0][1], ins[0][2], kh, kw, attrs["stride"], attrs["padding"])
        return (cout, oh, ow)
    if kind in ("maxpool2d", "avgpool2d"):
        k, s, p = attrs["kernel"], attrs["stride"], attrs["padding"]
        oh, ow = tn._out_hw(ins[0][1], ins[0][2], k, k, s, p)
        return (ins[0][0], oh, ow)
    if kind == "dense":
        feat = int(np.prod(ins[0]))
        if node.weights.shape[1] != feat:
            raise ShapeError(f"dense weights {node.weights.shape} vs {feat} input features")
        return (node.weights.shape[0],)
    if kind == "concat":
        base = ins[0][1:]
        for s in ins[1:]:
            if s[1:] != base:
                raise ShapeError(f"concat spatial dims differ: {s} vs {ins[0]}")
        return (sum(s[0] for s in ins),) + base
    if kind == "add":
        if any(s != ins[0] for s in ins):
            raise ShapeError(f"add shapes differ: {ins}")
        return ins[0]
    if kind == "globalavgpool":
        if len(ins[0]) != 3:
            raise ShapeError(f"globalavgpool expects [C,H,W], got {ins[0]}")
        return (ins[0][0],)
    if kind in ("relu", "softmax"):
        return ins[0]
    raise ShapeError(f"unhandled kind {kind}")


def _apply(node: GraphNode, ins: list[Tensor]) -> Tensor:
    kind, attrs = node.spec.kind, node.spec.attrs
    if kind == "conv2d":
        return tn.conv2d_forward(ins[0], node.weights, node.bias,
                                 attrs["stride"], attrs["padding"])
    if kind == "relu":
        return tn.relu_forward(ins[0])
    if kind == "maxpool2d":
        return tn.maxpool2d_forward(ins[0], attrs["kernel"], attrs["stride"], attrs["padding"])
    if kind == "avgpool2d":
        return tn.avgpool2d_forward(ins[0], attrs["kernel"], attrs["stride"], attrs["padding"])
    if kind == "dense":
        return tn.dense_forward(ins[0], node.weights, node.bias)
    if kind == "concat":
        return tn.concat_forward(ins)
    if kind == "add":
        return tn.add_forward(ins[0], ins[1])
    if kind == "globalavgpool":
        return tn.globalavgpool_forward(ins[0])
    if kind == "softmax":
        return tn.softmax_forward(ins[0])
    raise GraphError(f"unhandled kind {kind}")


def _vjp(node: GraphNode, ins: list[Tensor], up: Tensor) -> list[Tensor]:
    kind, attrs = node.spec.kind, node.spec.attrs
    if kind == "conv2d":
        return [tn.conv2d_vjp(ins[0], node.weights, attrs["stride"], attrs["padding"], up)]
    if kind == "relu":
        return [tn.relu_vjp(ins[0], up)]
    if kind == "maxpool2d":
        return [tn.maxpool2d_vjp(ins[0], attrs["kernel"], attrs["stride"], attrs["padding"], up)]
    if kind == "avgpool2d":
        return [tn.avgpool2d_vjp(ins[0], attrs["kernel"], attrs["stride"], attrs["padding"], up)]
    if kind == "dense":
        return [tn.dense_vjp(ins[0], node.weights, up)]
    if kind == "concat":
        return tn.concat_vjp(ins, up)
    if kind == "add":
        return list(tn.add_vjp(up))
    if kind == "globalavgpool":
        return [tn.globalavgpool_vjp(ins[0], up)]
    raise GraphError(f"gradient through {kind} is not supported")


# ---------------------------------------------------------------------------
# container loading
# ---------------------------------------------------------------------------

def load_model(container_path: str | Path) -> ModelGraph:
    """Load and validate a model container directory."""
    root = Path(container_path)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise GraphError(f"no manifest.json in {root}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as e:
        raise GraphError(f"manifest parse error in {root}: {e}") from e
    for key in ("model_id", "checkpoint", "input_shape", "labels", "nodes", "output"):
        if key not in manifest:
            raise GraphError(f"manifest missing field {key!r}")

    nodes: dict[str, GraphNode] = {}
    for raw in manifest["nodes"]:
        nid = raw["id"]
        if nid in nodes or nid == INPUT_NODE:
            raise GraphError(f"duplicate or reserved node id {nid!r}")
        try:
            spec = OpSpec(raw["op"], dict(raw.get("attrs", {})))
        except ValueError as e:
            raise GraphError(f"node {nid!r}: {e}") from e
        weights = bias = None
        if spec.kind in _WEIGHTED:
            weights = _load_blob(root, raw, "weights", "weight_shape", nid)
            bias = _load_blob(root, raw, "bias", "bias_shape", nid)
        nodes[nid] = GraphNode(nid, spec, tuple(raw["inputs"]), weights, bias)
    return ModelGraph(manifest, nodes, root)


def _load_blob(root: Path, raw: dict, key: str, shape_key: str, nid: str) -> Tensor:
    if key not in raw or shape_key not in raw:
        raise GraphError(f"node {nid!r}: missing {key} reference or {shape_key}")
    path = root / raw[key]
    if not path.exists():
        raise GraphError(f"node {nid!r}: weight blob {raw[key]!r} not found")
    data = np.fromfile(path, dtype="<f4")
    shape = tuple(raw[shape_key])
    if data.size != int(np.prod(shape)):
        raise GraphError(
            f"node {nid!r}: blob {raw[key]!r} has {data.size} elements, "
            f"declared shape {shape} needs {int(np.prod(shape))}"
        )
    try:
        return Tensor.from_external(data, shape)
    except ValueError as e:
        raise GraphError(f"node {nid!r}: {e}") from e
