"""Test-side helpers that deliberately reuse package internals.

forward_f64 drives the production kernels end-to-end in float64; it is the
function whose finite differences validate the (float32) gradient path.
"""

import numpy as np

from robustscope import tensor as tn
from robustscope.graph import INPUT_NODE, ModelGraph


def forward_f64(g: ModelGraph, image64: np.ndarray) -> dict:
    mean = g.norm_mean.astype(np.float64)[:, None, None]
    std = g.norm_std.astype(np.float64)[:, None, None]
    values = {INPUT_NODE: (np.asarray(image64, dtype=np.float64) - mean) / std}
    for nid in g.order:
        node = g.nodes[nid]
        ins = [values[s] for s in node.inputs]
        kind, attrs = node.spec.kind, node.spec.attrs
        if kind == "conv2d":
            out = tn._conv2d(ins[0], node.weights.data.astype(np.float64),
                             node.bias.data.astype(np.float64),
                             attrs["stride"], attrs["padding"])
        elif kind == "relu":
            out = np.maximum(ins[0], 0)
        elif kind == "maxpool2d":
            out = tn._maxpool2d(ins[0], attrs["kernel"], attrs["stride"], attrs["padding"])
        elif kind == "avgpool2d":
            out = tn._avgpool2d(ins[0], attrs["kernel"], attrs["stride"], attrs["padding"])
        elif kind == "dense":
            out = tn._dense(ins[0], node.weights.data.astype(np.float64),
                            node.bias.data.astype(np.float64))
        elif kind == "concat":
            out = tn._concat(ins)
        elif kind == "add":
            out = ins[0] + ins[1]
        elif kind == "globalavgpool":
            out = ins[0].mean(axis=(1, 2))
        elif kind == "softmax":
            out = tn._softmax(ins[0])
        else:
            raise AssertionError(kind)
        values[nid] = out
    return values
