"""Dense float32 tensor plus the numerical kernels used by the model graph.

Images and activations use channel-major [C, H, W] layout. Every kernel comes
in a forward flavor and, where gradients w.r.t. the input are needed, a
vector-Jacobian product (VJP). There is no autodiff tape: the model graph
composes these VJPs in reverse topological order.

Numerics: public tensors are float32; convolution/dense reductions accumulate
in float64 before casting back. The private ``_*`` kernels are dtype-generic
(they keep the input dtype) so test oracles can drive them end-to-end in
float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ShapeError

OP_KINDS = (
    "conv2d",
    "relu",
    "maxpool2d",
    "avgpool2d",
    "dense",
    "concat",
    "softmax",
    "add",
    "globalavgpool",
)

# attribute name -> minimum legal value, per op kind
_ATTR_SCHEMA = {
    "conv2d": {"stride": 1, "padding": 0},
    "maxpool2d": {"kernel": 1, "stride": 1, "padding": 0},
    "avgpool2d": {"kernel": 1, "stride": 1, "padding": 0},
}


class Tensor:
    """Immutable dense float32 array with contiguous row-major storage."""

    __slots__ = ("data",)

    def __init__(self, data: np.ndarray):
        arr = np.ascontiguousarray(data, dtype=np.float32)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    def __setattr__(self, name, value):
        raise AttributeError("Tensor is immutable")

    @classmethod
    def from_external(cls, data, shape: Sequence[int] | None = None) -> "Tensor":
        """Build a tensor from untrusted data; rejects NaN/Inf and bad shapes."""
        arr = np.asarray(data, dtype=np.float32)
        if shape is not None:
            if arr.size != int(np.prod(shape)):
                raise ShapeError(
                    f"data has {arr.size} elements, shape {tuple(shape)} needs "
                    f"{int(np.prod(shape))}"
                )
            arr = arr.reshape(shape)
        if arr.size and not np.isfinite(arr).all():
            raise ValueError("tensor data contains NaN or Inf")
        return cls(arr)

    @classmethod
    def zeros(cls, shape: Sequence[int]) -> "Tensor":
        return cls(np.zeros(shape, dtype=np.float32))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.shape})"


@dataclass(frozen=True)
class OpSpec:
    """Validated description of one layer op (kind plus its attributes)."""

    kind: str
    attrs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in OP_KINDS:
            raise ValueError(f"unknown op kind {self.kind!r}")
        schema = _ATTR_SCHEMA.get(self.kind, {})
        for name, lo in schema.items():
            if name not in self.attrs:
                raise ValueError(f"{self.kind}: missing attribute {name!r}")
            v = self.attrs[name]
            if not isinstance(v, int) or v < lo:
                raise ValueError(f"{self.kind}: attribute {name}={v!r} must be an int >= {lo}")
        for name in self.attrs:
            if name not in schema:
                raise ValueError(f"{self.kind}: unexpected attribute {name!r}")


# ---------------------------------------------------------------------------
# dtype-generic kernels (arrays in, arrays out, input dtype preserved)
# ---------------------------------------------------------------------------

def _out_hw(h: int, w: int, kh: int, kw: int, stride: int, padding: int) -> tuple[int, int]:
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    if h + 2 * padding < kh or w + 2 * padding < kw or oh < 1 or ow < 1:
        raise ShapeError(
            f"window {kh}x{kw} stride {stride} padding {padding} does not fit "
            f"input {h}x{w}"
        )
    return oh, ow


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, padding: int) -> np.ndarray:
    """[C,H,W] -> [C*kh*kw, OH*OW] patch matrix (copies once at reshape)."""
    c, h, w = x.shape
    oh, ow = _out_hw(h, w, kh, kw, stride, padding)
    if padding:
        x = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    windows = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(1, 2))
    windows = windows[:, ::stride, ::stride]  # [C, OH, OW, kh, kw]
    cols = windows.transpose(0, 3, 4, 1, 2).reshape(c * kh * kw, oh * ow)
    return np.ascontiguousarray(cols)


def _conv2d(x, w, b, stride, padding):
    cin, h, wd = x.shape
    cout, wcin, kh, kw = w.shape
    if wcin != cin:
        raise ShapeError(f"conv2d: input has {cin} channels, weights expect {wcin}")
    if b.shape != (cout,):
        raise ShapeError(f"conv2d: bias shape {b.shape} != ({cout},)")
    oh, ow = _out_hw(h, wd, kh, kw, stride, padding)
    cols = _im2col(x, kh, kw, stride, padding).astype(np.float64)
    wmat = w.reshape(cout, cin * kh * kw).astype(np.float64)
    out = wmat @ cols + b.astype(np.float64)[:, None]
    return out.reshape(cout, oh, ow).astype(x.dtype)


def _conv2d_vjp(x_shape, w, stride, padding, up):
    """Gradient of sum(conv2d(x,...) * up) w.r.t. x, via col2im scatter."""
    cin, h, wd = x_shape
    cout, _, kh, kw = w.shape
    oh, ow = _out_hw(h, wd, kh, kw, stride, padding)
    if up.shape != (cout, oh, ow):
        raise ShapeError(f"conv2d_vjp: upstream shape {up.shape} != {(cout, oh, ow)}")
    wmat = w.reshape(cout, cin * kh * kw).astype(np.float64)
    gcols = wmat.T @ up.reshape(cout, oh * ow).astype(np.float64)  # [C*kh*kw, OH*OW]
    gcols = gcols.reshape(cin, kh, kw, oh, ow)

    hp, wp = h + 2 * padding, wd + 2 * padding
    gpad = np.zeros((cin, hp, wp), dtype=np.float64)
    ys = np.arange(oh) * stride
    xs = np.arange(ow) * stride
    for i in range(kh):
        for j in range(kw):
            gpad[:, ys[0] + i : ys[-1] + i + 1 : stride,
                 xs[0] + j : xs[-1] + j + 1 : stride] += gcols[:, i, j]
    g = gpad[:, padding : padding + h, padding : padding + wd]
    return g.astype(up.dtype)


def _pool_windows(x, kernel, stride, padding, pad_value):
    c, h, w = x.shape
    oh, ow = _out_hw(h, w, kernel, kernel, stride, padding)
    if padding:
        x = np.pad(x, ((0, 0), (padding, padding), (padding, padding)),
                   constant_values=pad_value)
    win = np.lib.stride_tricks.sliding_window_view(x, (kernel, kernel), axis=(1, 2))
    return win[:, ::stride, ::stride], oh, ow


def _maxpool2d(x, kernel, stride, padding):
    win, oh, ow = _pool_windows(x, kernel, stride, padding, -np.inf)
    return win.reshape(x.shape[0], oh, ow, kernel * kernel).max(axis=-1)


def _maxpool2d_vjp(x, kernel, stride, padding, up):
    """Routes each window's upstream value to the first max in row-major scan."""
    c = x.shape[0]
    win, oh, ow = _pool_windows(x, kernel, stride, padding, -np.inf)
    if up.shape != (c, oh, ow):
        raise ShapeError(f"maxpool2d_vjp: upstream shape {up.shape} != {(c, oh, ow)}")
    flat = win.reshape(c, oh, ow, kernel * kernel)
    arg = flat.argmax(axis=-1)  # first occurrence wins
    ki, kj = np.divmod(arg, kernel)
    ys = (np.arange(oh) * stride)[None, :, None] + ki
    xs = (np.arange(ow) * stride)[None, None, :] + kj
    cs = np.broadcast_to(np.arange(c)[:, None, None], arg.shape)
    hp, wp = x.shape[1] + 2 * padding, x.shape[2] + 2 * padding
    gpad = np.zeros((c, hp, wp), dtype=np.float64)
    np.add.at(gpad, (cs.ravel(), ys.ravel(), xs.ravel()), up.astype(np.float64).ravel())
    g = gpad[:, padding : padding + x.shape[1], padding : padding + x.shape[2]]
    return g.astype(up.dtype)


def _avgpool2d(x, kernel, stride, padding):
    win, oh, ow = _pool_windows(x, kernel, stride, padding, 0.0)
    s = win.reshape(x.shape[0], oh, ow, kernel * kernel).astype(np.float64).sum(axis=-1)
    return (s / (kernel * kernel)).astype(x.dtype)


def _avgpool2d_vjp(x_shape, kernel, stride, padding, up):
    c, h, w = x_shape
    oh, ow = _out_hw(h, w, kernel, kernel, stride, padding)
    if up.shape != (c, oh, ow):
        raise ShapeError(f"avgpool2d_vjp: upstream shape {up.shape} != {(c, oh, ow)}")
    hp, wp = h + 2 * padding, w + 2 * padding
    gpad = np.zeros((c, hp, wp), dtype=np.float64)
    frac = up.astype(np.float64) / (kernel * kernel)
    for i in range(kernel):
        for j in range(kernel):
            gpad[:, i : i + oh * stride : stride, j : j + ow * stride : stride] += frac
    return gpad[:, padding : padding + h, padding : padding + w].astype(up.dtype)


def _dense(x, w, b):
    feat = x.reshape(-1)
    if w.ndim != 2 or w.shape[1] != feat.size:
        raise ShapeError(f"dense: weights {w.shape} incompatible with {feat.size} input features")
    if b.shape != (w.shape[0],):
        raise ShapeError(f"dense: bias shape {b.shape} != ({w.shape[0]},)")
    out = w.astype(np.float64) @ feat.astype(np.float64) + b.astype(np.float64)
    return out.astype(x.dtype)


def _dense_vjp(x_shape, w, up):
    if up.shape != (w.shape[0],):
        raise ShapeError(f"dense_vjp: upstream shape {up.shape} != ({w.shape[0]},)")
    g = w.astype(np.float64).T @ up.astype(np.float64)
    return g.reshape(x_shape).astype(up.dtype)


def _concat(parts):
    base = parts[0].shape[1:]
    for p in parts[1:]:
        if p.shape[1:] != base:
            raise ShapeError(
                f"concat: spatial dims differ ({p.shape[1:]} vs {base})"
            )
    return np.concatenate(parts, axis=0)


def _concat_vjp(shapes, up):
    sizes = [s[0] for s in shapes]
    if up.shape[0] != sum(sizes):
        raise ShapeError(f"concat_vjp: upstream has {up.shape[0]} channels, expected {sum(sizes)}")
    splits = np.cumsum(sizes)[:-1]
    return [np.ascontiguousarray(p) for p in np.split(up, splits, axis=0)]


def _softmax(x):
    z = x.astype(np.float64)
    z = z - z.max()
    e = np.exp(z)
    return (e / e.sum()).astype(x.dtype)


# ---------------------------------------------------------------------------
# public Tensor-level ops
# ---------------------------------------------------------------------------

def conv2d_forward(x: Tensor, weights: Tensor, bias: Tensor, stride: int = 1,
                   padding: int = 0) -> Tensor:
    """Cross-correlation convolution with zero padding (no kernel flip)."""
    return Tensor(_conv2d(x.data, weights.data, bias.data, stride, padding))


def conv2d_vjp(x: Tensor, weights: Tensor, stride: int, padding: int,
               upstream: Tensor) -> Tensor:
    return Tensor(_conv2d_vjp(x.shape, weights.data, stride, padding, upstream.data))


def relu_forward(x: Tensor) -> Tensor:
    return Tensor(np.maximum(x.data, 0))


def relu_vjp(x: Tensor, upstream: Tensor) -> Tensor:
    if upstream.shape != x.shape:
        raise ShapeError(f"relu_vjp: upstream shape {upstream.shape} != {x.shape}")
    return Tensor(upstream.data * (x.data > 0))


def maxpool2d_forward(x: Tensor, kernel: int, stride: int, padding: int = 0) -> Tensor:
    return Tensor(_maxpool2d(x.data, kernel, stride, padding))


def maxpool2d_vjp(x: Tensor, kernel: int, stride: int, padding: int,
                  upstream: Tensor) -> Tensor:
    return Tensor(_maxpool2d_vjp(x.data, kernel, stride, padding, upstream.data))


def avgpool2d_forward(x: Tensor, kernel: int, stride: int, padding: int = 0) -> Tensor:
    return Tensor(_avgpool2d(x.data, kernel, stride, padding))


def avgpool2d_vjp(x: Tensor, kernel: int, stride: int, padding: int,
                  upstream: Tensor) -> Tensor:
    return Tensor(_avgpool2d_vjp(x.shape, kernel, stride, padding, upstream.data))


def dense_forward(x: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    """Fully connected layer; input of any shape is flattened row-major."""
    return Tensor(_dense(x.data, weights.data, bias.data))


def dense_vjp(x: Tensor, weights: Tensor, upstream: Tensor) -> Tensor:
    return Tensor(_dense_vjp(x.shape, weights.data, upstream.data))


def concat_forward(parts: Sequence[Tensor]) -> Tensor:
    """Joins along the channel axis; spatial dims must agree."""
    return Tensor(_concat([p.data for p in parts]))


def concat_vjp(parts: Sequence[Tensor], upstream: Tensor) -> list[Tensor]:
    return [Tensor(g) for g in _concat_vjp([p.shape for p in parts], upstream.data)]


def add_forward(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} differ")
    return Tensor(a.data.astype(np.float64) + b.data.astype(np.float64))


def add_vjp(upstream: Tensor) -> tuple[Tensor, Tensor]:
    return upstream, upstream


def globalavgpool_forward(x: Tensor) -> Tensor:
    if x.data.ndim != 3:
        raise ShapeError(f"globalavgpool: expected [C,H,W], got {x.shape}")
    return Tensor(x.data.astype(np.float64).mean(axis=(1, 2)))


def globalavgpool_vjp(x: Tensor, upstream: Tensor) -> Tensor:
    c, h, w = x.shape
    if upstream.shape != (c,):
        raise ShapeError(f"globalavgpool_vjp: upstream shape {upstream.shape} != ({c},)")
    g = np.broadcast_to(upstream.data.astype(np.float64)[:, None, None] / (h * w), x.shape)
    return Tensor(g)


def softmax_forward(x: Tensor) -> Tensor:
    """Numerically stabilized softmax of a logit vector."""
    if x.data.ndim != 1:
        raise ShapeError(f"softmax: expected vector, got {x.shape}")
    return Tensor(_softmax(x.data))


def split_channels(x: Tensor, sizes: Sequence[int]) -> list[Tensor]:
    """Inverse of concat_forward for the given channel sizes."""
    return [Tensor(p) for p in _concat_vjp([(s,) + x.shape[1:] for s in sizes], x.data)]
