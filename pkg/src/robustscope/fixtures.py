"""Deterministic desk-scale fixtures: models, meshes, textures, backgrounds.

These are the models and assets the test suite and the demo service run on.
Everything is generated from fixed seeds so results are reproducible across
machines. Weight scales follow He initialization to keep activations O(1).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

MODEL_SEEDS = {"tinynet:std": 11, "tinynet:ft": 12, "fvisnet:std": 21,
               "linear:std": 31, "micronet:std": 41}


def _save_blob(root: Path, name: str, arr: np.ndarray) -> str:
    arr.astype("<f4").tofile(root / name)
    return name


def _conv_node(root, rng, nid, inputs, cin, cout, k, stride=1, padding=0,
               weights=None):
    w = weights if weights is not None else \
        rng.normal(0.0, np.sqrt(2.0 / (cin * k * k)), size=(cout, cin, k, k))
    b = rng.normal(0.0, 0.05, size=cout)
    return {
        "id": nid, "op": "conv2d", "inputs": list(inputs),
        "attrs": {"stride": stride, "padding": padding},
        "weights": _save_blob(root, f"{nid}.w.bin", w),
        "weight_shape": [cout, cin, k, k],
        "bias": _save_blob(root, f"{nid}.b.bin", b),
        "bias_shape": [cout],
    }


def _dense_node(root, rng, nid, inputs, nin, nout, weights=None):
    w = weights if weights is not None else rng.normal(0.0, np.sqrt(2.0 / nin), size=(nout, nin))
    b = rng.normal(0.0, 0.05, size=nout)
    return {
        "id": nid, "op": "dense", "inputs": list(inputs),
        "weights": _save_blob(root, f"{nid}.w.bin", w),
        "weight_shape": [nout, nin],
        "bias": _save_blob(root, f"{nid}.b.bin", b),
        "bias_shape": [nout],
    }


def _plain(nid, op, inputs, **attrs):
    d = {"id": nid, "op": op, "inputs": list(inputs)}
    if attrs:
        d["attrs"] = attrs
    return d


def _gradient_x_kernel(cin: int, k: int) -> np.ndarray:
    """Sobel-style horizontal-gradient filter placed in the kernel center."""
    sob = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64) / 8.0
    w = np.zeros((cin, k, k))
    c = (k - 3) // 2
    w[:, c:c + 3, c:c + 3] = sob
    return w


LABELS8 = ["orb", "block", "ridge", "crest", "plume", "shard", "grain", "husk"]
LABELS5 = LABELS8[:5]


def make_tinynet(out_dir: Path, checkpoint: str) -> Path:
    """224x224 live-loop model: conv tower with one concat block, 8 classes."""
    rng = np.random.default_rng(MODEL_SEEDS[f"tinynet:{checkpoint}"])
    root = out_dir / f"tinynet-{checkpoint}"
    root.mkdir(parents=True, exist_ok=True)

    w1 = rng.normal(0.0, np.sqrt(2.0 / (3 * 49)), size=(16, 3, 7, 7))
    w1[0] = _gradient_x_kernel(3, 7)
    w1[1] = 0.02  # box filter: responds to overall brightness

    nodes = [
        _conv_node(root, rng, "conv1", ["input"], 3, 16, 7, stride=2, padding=3, weights=w1),
        _plain("relu1", "relu", ["conv1"]),
        _plain("pool1", "maxpool2d", ["relu1"], kernel=3, stride=2, padding=1),
        _conv_node(root, rng, "conv2", ["pool1"], 16, 16, 1),
        _plain("relu2", "relu", ["conv2"]),
        _plain("pool2", "maxpool2d", ["relu2"], kernel=2, stride=2, padding=0),
        _conv_node(root, rng, "branch_a", ["pool2"], 16, 16, 3, padding=1),
        _conv_node(root, rng, "branch_b", ["pool2"], 16, 8, 1),
        _plain("mixed", "concat", ["branch_a", "branch_b"]),
        _plain("relu3", "relu", ["mixed"]),
        _plain("gap", "globalavgpool", ["relu3"]),
        _dense_node(root, rng, "fc", ["gap"], 24, 8),
    ]
    manifest = {
        "model_id": "tinynet", "checkpoint": checkpoint,
        "input_shape": [3, 224, 224],
        "normalization": {"mean": [0.45, 0.45, 0.45], "std": [0.25, 0.25, 0.25]},
        "labels": LABELS8,
        "nodes": nodes, "output": "fc",
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1))
    groups = [
        {"name": "edges", "node": "conv1", "channels": [0, 1, 2, 3]},
        {"name": "mixed-probe", "node": "mixed", "channels": [0, 1, 2, 3]},
        {"name": "late-wide", "node": "relu3", "channels": list(range(12))},
    ]
    (root / "groups.json").write_text(json.dumps(groups, indent=1))
    return root


def make_fvisnet(out_dir: Path) -> Path:
    """64x64 model for feature-visualization grids (8 + 24 = 32 channels)."""
    rng = np.random.default_rng(MODEL_SEEDS["fvisnet:std"])
    root = out_dir / "fvisnet-std"
    root.mkdir(parents=True, exist_ok=True)

    w1 = rng.normal(0.0, np.sqrt(2.0 / 27), size=(8, 3, 3, 3))
    w1[0] = _gradient_x_kernel(3, 3)

    nodes = [
        _conv_node(root, rng, "conv1", ["input"], 3, 8, 3, padding=1, weights=w1),
        _plain("relu1", "relu", ["conv1"]),
        _plain("pool1", "maxpool2d", ["relu1"], kernel=2, stride=2, padding=0),
        _conv_node(root, rng, "conv2", ["pool1"], 8, 24, 3, padding=1),
        _plain("relu2", "relu", ["conv2"]),
        _plain("gap", "globalavgpool", ["relu2"]),
        _dense_node(root, rng, "fc", ["gap"], 24, 8),
    ]
    manifest = {
        "model_id": "fvisnet", "checkpoint": "std",
        "input_shape": [3, 64, 64],
        "normalization": {"mean": [0.5, 0.5, 0.5], "std": [0.25, 0.25, 0.25]},
        "labels": LABELS8,
        "nodes": nodes, "output": "fc",
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1))
    groups = [
        {"name": "early", "node": "conv1", "channels": list(range(8))},
        {"name": "late", "node": "conv2", "channels": list(range(24))},
    ]
    (root / "groups.json").write_text(json.dumps(groups, indent=1))
    return root


def make_linear(out_dir: Path) -> Path:
    """Pure linear map (dense on the flattened image): closed-form gradients."""
    rng = np.random.default_rng(MODEL_SEEDS["linear:std"])
    root = out_dir / "linear-std"
    root.mkdir(parents=True, exist_ok=True)
    w = rng.normal(0.0, 0.05, size=(8, 3 * 32 * 32))
    w[np.abs(w) < 1e-4] = 1e-4  # keep signs unambiguous for sign-gradient oracles
    nodes = [_dense_node(root, rng, "fc", ["input"], 3 * 32 * 32, 8, weights=w)]
    manifest = {
        "model_id": "linear", "checkpoint": "std",
        "input_shape": [3, 32, 32],
        "normalization": {"mean": [0.5, 0.5, 0.5], "std": [0.25, 0.25, 0.25]},
        "labels": LABELS8,
        "nodes": nodes, "output": "fc",
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return root


def make_micronet(out_dir: Path) -> Path:
    """16x16 model covering every op kind; small enough for loop oracles."""
    rng = np.random.default_rng(MODEL_SEEDS["micronet:std"])
    root = out_dir / "micronet-std"
    root.mkdir(parents=True, exist_ok=True)
    nodes = [
        _conv_node(root, rng, "conv1", ["input"], 3, 4, 3, padding=1),
        _plain("relu1", "relu", ["conv1"]),
        _plain("pool1", "maxpool2d", ["relu1"], kernel=2, stride=2, padding=0),
        _conv_node(root, rng, "conv2a", ["pool1"], 4, 4, 1),
        _conv_node(root, rng, "conv2b", ["pool1"], 4, 4, 3, padding=1),
        _plain("add2", "add", ["conv2a", "conv2b"]),
        _conv_node(root, rng, "conv2c", ["pool1"], 4, 3, 1),
        _plain("mixed", "concat", ["add2", "conv2c"]),
        _plain("relu2", "relu", ["mixed"]),
        _plain("apool", "avgpool2d", ["relu2"], kernel=2, stride=2, padding=0),
        _plain("gap", "globalavgpool", ["apool"]),
        _dense_node(root, rng, "fc", ["gap"], 7, 5),
    ]
    manifest = {
        "model_id": "micronet", "checkpoint": "std",
        "input_shape": [3, 16, 16],
        "normalization": {"mean": [0.4, 0.45, 0.5], "std": [0.2, 0.25, 0.3]},
        "labels": LABELS5,
        "nodes": nodes, "output": "fc",
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1))
    groups = [{"name": "probe", "node": "conv1", "channels": [0, 1]}]
    (root / "groups.json").write_text(json.dumps(groups, indent=1))
    return root


def make_models(out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return [
        make_tinynet(out, "std"),
        make_tinynet(out, "ft"),
        make_fvisnet(out),
        make_linear(out),
        make_micronet(out),
    ]


# ---------------------------------------------------------------------------
# scene assets
# ---------------------------------------------------------------------------

def _save_png(path: Path, rgb01: np.ndarray):
    from PIL import Image as PILImage
    arr = np.round(np.clip(rgb01, 0, 1) * 255).astype(np.uint8)
    PILImage.fromarray(arr).save(path)


def _checker_texture(n=128, tiles=8):
    yy, xx = np.mgrid[0:n, 0:n]
    mask = ((yy * tiles // n) + (xx * tiles // n)) % 2 == 0
    rgb = np.where(mask[..., None], [0.82, 0.29, 0.24], [0.95, 0.92, 0.86])
    return rgb


def _stripes_texture(n=128, period=16):
    yy = np.mgrid[0:n, 0:n][0]
    mask = (yy // period) % 2 == 0
    return np.where(mask[..., None], [0.16, 0.25, 0.52], [0.93, 0.74, 0.22])


def _speckle_texture(n=128, seed=5):
    rng = np.random.default_rng(seed)
    base = rng.uniform(0, 1, size=(n, n, 3))
    from .image import gaussian_blur
    soft = gaussian_blur(base, 2.5)
    tint = np.array([0.45, 0.55, 0.35])
    return np.clip(0.3 + 0.6 * soft * tint[None, None, :] * 2.0, 0, 1)


def _rings_texture(n=128, period=12):
    yy, xx = np.mgrid[0:n, 0:n]
    r = np.sqrt((yy - n / 2) ** 2 + (xx - n / 2) ** 2)
    mask = (r // period) % 2 == 0
    return np.where(mask[..., None], [0.20, 0.55, 0.55], [0.93, 0.90, 0.80])


def _meadow_background(n=256, seed=6):
    rng = np.random.default_rng(seed)
    t = np.linspace(0, 1, n)[:, None, None]
    sky = np.array([0.55, 0.72, 0.92])
    grass = np.array([0.30, 0.52, 0.24])
    rgb = sky * (1 - t) + grass * t
    rgb = np.broadcast_to(rgb, (n, n, 3)).copy()
    from .image import gaussian_blur
    rgb += gaussian_blur(rng.normal(0, 0.05, size=(n, n, 3)), 3.0)
    return np.clip(rgb, 0, 1)


def _street_background(n=256):
    yy, xx = np.mgrid[0:n, 0:n]
    rgb = np.empty((n, n, 3))
    rgb[:] = 0.62
    rgb[yy > n * 0.55] = 0.35
    dash = ((yy > n * 0.72) & (yy < n * 0.76) & ((xx // 24) % 2 == 0))
    rgb[dash] = [0.9, 0.85, 0.3]
    rgb[yy < n * 0.4] = [0.66, 0.72, 0.8]
    return rgb


def _plasma_background(n=256):
    yy, xx = np.mgrid[0:n, 0:n] / n
    r = 0.5 + 0.5 * np.sin(6.0 * xx + 2.0 * yy)
    g = 0.5 + 0.5 * np.sin(4.0 * yy + 1.0)
    b = 0.5 + 0.5 * np.sin(5.0 * (xx + yy))
    return np.stack([r, g, b], axis=-1) * 0.8 + 0.1


def make_assets(out_dir: str | Path) -> Path:
    """Morphable mesh pairs, textures and backgrounds plus the manifest."""
    from . import mesh as M

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    pairs = {
        "orb": (M.latlong_geometry(24, 32, M.sphere_radius),
                M.latlong_geometry(24, 32, M.cube_radius),
                "checker.png", "stripes.png", (0.62, 0.62, 0.66)),
        "pod": (M.latlong_geometry(24, 32, M.bumpy_radius),
                M.latlong_geometry(24, 32, M.peanut_radius),
                "speckle.png", "rings.png", (0.55, 0.5, 0.45)),
    }
    textures = {
        "checker.png": _checker_texture(),
        "stripes.png": _stripes_texture(),
        "speckle.png": _speckle_texture(),
        "rings.png": _rings_texture(),
    }
    backgrounds = {
        "meadow": _meadow_background(),
        "street": _street_background(),
        "plasma": _plasma_background(),
    }

    manifest = {"meshes": [], "backgrounds": []}
    for name, rgb in textures.items():
        _save_png(out / name, rgb)
    for mesh_id, (base, target, tex, ttex, color) in pairs.items():
        (out / f"{mesh_id}_base.obj").write_text(M.geometry_to_obj(base))
        (out / f"{mesh_id}_target.obj").write_text(M.geometry_to_obj(target))
        manifest["meshes"].append({
            "id": mesh_id,
            "obj": f"{mesh_id}_base.obj",
            "target_obj": f"{mesh_id}_target.obj",
            "texture": tex,
            "target_texture": ttex,
            "base_color": list(color),
        })
    for bg_id, rgb in backgrounds.items():
        _save_png(out / f"{bg_id}.png", rgb)
        manifest["backgrounds"].append({"id": bg_id, "file": f"{bg_id}.png"})
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return out


def make_all(models_dir: str | Path, assets_dir: str | Path):
    make_models(models_dir)
    make_assets(assets_dir)
