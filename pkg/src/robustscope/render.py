"""Software rasterizer: SceneState + mesh + background -> RGB frame.

Pipeline order: vertex morph -> orbit camera transform -> z-buffered
rasterization (vectorized over candidate (triangle, pixel) pairs) -> Lambert
fragment shading with lighting/texture influence -> composite over the
processed background. Color/frequency/spatial/attack stages are applied
afterwards by the perturbation pipeline, not here.

Everything is pure float math with fixed tie-breaks (nearest depth wins,
lowest triangle index on equal depth), so identical inputs give bitwise
identical frames. Yaw and roll are canonicalized mod 360 before any
trigonometry, which makes camera periodicity exact.
"""

from __future__ import annotations

import numpy as np

from .errors import AssetError
from .image import Image, box_downsample, gaussian_blur, luma
from .mesh import Mesh, vertex_normals
from .scene import SceneState

FOV_Y_DEG = 40.0
NEAR, FAR = 0.1, 100.0
BACKGROUND_BLUR_RADIUS_MAX = 12.0  # pixels at blur = 1
MIN_CORNER_W = 0.05
_CHUNK_PAIRS = 400_000


def morph_vertices(mesh: Mesh, t_s: float) -> np.ndarray:
    """Linear morph of vertex positions: (1 - t_s) * base + t_s * target."""
    return mesh.morph_positions(t_s)


def camera_matrices(state: SceneState):
    """View-projection matrix and camera basis for the orbit camera."""
    yaw = np.deg2rad(state.yaw % 360.0)
    pitch = np.deg2rad(state.pitch)
    roll = np.deg2rad(state.roll % 360.0)
    d = np.array([np.cos(pitch) * np.sin(yaw), np.sin(pitch),
                  np.cos(pitch) * np.cos(yaw)])
    target = np.zeros(3)
    eye = target + state.distance * d
    forward = -d
    right0 = np.cross(forward, np.array([0.0, 1.0, 0.0]))
    right0 /= np.linalg.norm(right0)
    up0 = np.cross(right0, forward)
    right = np.cos(roll) * right0 + np.sin(roll) * up0
    up = -np.sin(roll) * right0 + np.cos(roll) * up0
    pan = state.pan_x * right + state.pan_y * up
    eye = eye + pan
    target = target + pan

    view = np.eye(4)
    view[0, :3], view[1, :3], view[2, :3] = right, up, -forward
    view[:3, 3] = -view[:3, :3] @ eye

    f = 1.0 / np.tan(np.deg2rad(FOV_Y_DEG) / 2.0)
    proj = np.zeros((4, 4))
    proj[0, 0] = proj[1, 1] = f
    proj[2, 2] = (FAR + NEAR) / (NEAR - FAR)
    proj[2, 3] = 2.0 * FAR * NEAR / (NEAR - FAR)
    proj[3, 2] = -1.0
    basis = {"right": right, "up": up, "back": -forward, "eye": eye}
    return proj @ view, basis


def light_direction(basis) -> np.ndarray:
    """Directional light fixed relative to the camera (over the shoulder)."""
    l = 0.35 * basis["right"] + 0.45 * basis["up"] + 1.0 * basis["back"]
    return l / np.linalg.norm(l)


def shade_fragment(base_color, texture_sample, lambert_term,
                   lighting_influence: float, texture_influence: float):
    """albedo = mix(base, texture, t_inf); out = albedo * mix(1, lambert, l_inf)."""
    base = np.asarray(base_color, dtype=np.float64)
    tex = np.asarray(texture_sample, dtype=np.float64)
    albedo = base * (1.0 - texture_influence) + tex * texture_influence
    lam = np.asarray(lambert_term, dtype=np.float64)
    shade = (1.0 - lighting_influence) + lighting_influence * lam
    if shade.ndim and albedo.ndim > 1:
        shade = shade[..., None]
    return albedo * shade


def texture_blur_sample(pyramid: list[np.ndarray], u, v, texture_blur: float):
    """Trilinear sample at mip level = texture_blur * (levels - 1)."""
    from .image import sample_bilinear_wrap
    lmax = len(pyramid) - 1
    lv = texture_blur * lmax
    l0 = int(np.floor(lv))
    l0 = min(l0, lmax)
    frac = lv - l0
    s0 = sample_bilinear_wrap(pyramid[l0], np.asarray(u, dtype=np.float64),
                              np.asarray(v, dtype=np.float64))
    if frac <= 0.0 or l0 == lmax:
        return s0
    s1 = sample_bilinear_wrap(pyramid[l0 + 1], np.asarray(u, dtype=np.float64),
                              np.asarray(v, dtype=np.float64))
    return s0 * (1.0 - frac) + s1 * frac


def _sample_mesh_texture(mesh: Mesh, u, v, texture_blur: float, texture_morph: float):
    a = texture_blur_sample(mesh.texture_pyramid, u, v, texture_blur)
    if texture_morph <= 0.0:
        return a
    b = texture_blur_sample(mesh.target_texture_pyramid, u, v, texture_blur)
    if texture_morph >= 1.0:
        return b
    return a * (1.0 - texture_morph) + b * texture_morph


def resize_bilinear_clamp(arr: np.ndarray, height: int, width: int) -> np.ndarray:
    sh, sw = arr.shape[:2]
    ys = np.clip((np.arange(height) + 0.5) * sh / height - 0.5, 0, sh - 1)
    xs = np.clip((np.arange(width) + 0.5) * sw / width - 0.5, 0, sw - 1)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, sh - 1)
    x1 = np.minimum(x0 + 1, sw - 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    a = arr[y0][:, x0].astype(np.float64)
    b = arr[y0][:, x1]
    c = arr[y1][:, x0]
    d = arr[y1][:, x1]
    return (a * (1 - fy) * (1 - fx) + b * (1 - fy) * fx
            + c * fy * (1 - fx) + d * fy * fx)


def process_background(background, blur: float, saturation: float,
                       height: int, width: int) -> np.ndarray:
    """Resize to frame, Gaussian-blur (radius = blur * R_max), desaturate."""
    if isinstance(background, tuple):
        color = np.asarray(background, dtype=np.float64)
        y = float(luma(color.astype(np.float32)))
        color = y + (color - y) * saturation
        out = np.empty((height, width, 3), dtype=np.float64)
        out[:] = color
        return out
    rgb = background.rgb if isinstance(background, Image) else np.asarray(background)
    out = rgb.astype(np.float64)
    if out.shape[:2] != (height, width):
        out = resize_bilinear_clamp(out, height, width)
    if blur > 0.0:
        sigma = blur * BACKGROUND_BLUR_RADIUS_MAX / 3.0
        out = gaussian_blur(out, sigma)
    if saturation != 1.0:
        y = luma(out.astype(np.float32)).astype(np.float64)[..., None]
        out = y + (out - y) * saturation
    return out


def composite_background(foreground: np.ndarray, coverage: np.ndarray,
                         background, background_blur: float,
                         background_saturation: float) -> Image:
    """Foreground over the processed background wherever coverage is set."""
    h, w = coverage.shape
    out = process_background(background, background_blur, background_saturation, h, w)
    out[coverage] = foreground[coverage]
    return Image(np.clip(out, 0.0, 1.0).astype(np.float32))


# ---------------------------------------------------------------------------
# rasterization
# ---------------------------------------------------------------------------

def _rasterize(positions, normals, mesh: Mesh, res: int, view_proj):
    """Z-buffered rasterization; returns per-pixel attribute buffers.

    Works on flattened (triangle, pixel) candidate pairs per chunk, resolves
    the nearest pair per pixel with a stable lexsort (depth, then triangle
    index), then merges chunks through a strict depth test.
    """
    hom = np.concatenate([positions, np.ones((len(positions), 1))], axis=1) @ view_proj.T
    w = hom[:, 3]
    faces = mesh.base.faces
    fw = w[faces]
    valid = (fw > MIN_CORNER_W).all(axis=1)

    ndc = hom[:, :3] / np.where(np.abs(w) > 1e-12, w, 1e-12)[:, None]
    sx = (ndc[:, 0] + 1.0) * 0.5 * res
    sy = (1.0 - ndc[:, 1]) * 0.5 * res
    sz = ndc[:, 2]
    iw = 1.0 / np.where(np.abs(w) > 1e-12, w, 1e-12)

    fx, fy, fz = sx[faces], sy[faces], sz[faces]
    area = ((fx[:, 1] - fx[:, 0]) * (fy[:, 2] - fy[:, 0])
            - (fy[:, 1] - fy[:, 0]) * (fx[:, 2] - fx[:, 0]))
    valid &= np.abs(area) > 1e-12

    x0 = np.maximum(np.ceil(fx.min(axis=1) - 0.5), 0).astype(np.int64)
    x1 = np.minimum(np.floor(fx.max(axis=1) - 0.5), res - 1).astype(np.int64)
    y0 = np.maximum(np.ceil(fy.min(axis=1) - 0.5), 0).astype(np.int64)
    y1 = np.minimum(np.floor(fy.max(axis=1) - 0.5), res - 1).astype(np.int64)
    bw = x1 - x0 + 1
    bh = y1 - y0 + 1
    valid &= (bw > 0) & (bh > 0)
    fidx = np.flatnonzero(valid)
    if fidx.size == 0:
        return None

    # per-corner attributes, pre-divided by w for perspective-correct interp
    fiw = iw[faces]
    uvc = mesh.base.uvs[mesh.base.face_uvs]      # [F,3,2]
    fu = uvc[..., 0] * fiw
    fv = uvc[..., 1] * fiw
    nrm = normals[faces]                          # [F,3,3]
    fn = nrm * fiw[..., None]

    depth_buf = np.full(res * res, np.inf)
    tri_buf = np.full(res * res, -1, dtype=np.int64)
    u_buf = np.zeros(res * res)
    v_buf = np.zeros(res * res)
    n_buf = np.zeros((res * res, 3))

    counts = (bw * bh)[fidx]
    splits = np.cumsum(counts)
    start = 0
    while start < fidx.size:
        stop = start
        acc = 0
        base = splits[start - 1] if start else 0
        while stop < fidx.size and (splits[stop] - base) <= _CHUNK_PAIRS:
            stop += 1
        stop = max(stop, start + 1)
        chunk = fidx[start:stop]
        start = stop

        c_counts = bw[chunk] * bh[chunk]
        total = int(c_counts.sum())
        pair_f = np.repeat(chunk, c_counts)
        offs = np.arange(total) - np.repeat(np.cumsum(c_counts) - c_counts, c_counts)
        pbw = bw[pair_f]
        px = x0[pair_f] + offs % pbw
        py = y0[pair_f] + offs // pbw

        cx = px + 0.5
        cy = py + 0.5
        ax, ay = fx[pair_f, 0], fy[pair_f, 0]
        bx_, by_ = fx[pair_f, 1], fy[pair_f, 1]
        cx_, cy_ = fx[pair_f, 2], fy[pair_f, 2]
        e0 = (cx_ - bx_) * (cy - by_) - (cy_ - by_) * (cx - bx_)
        e1 = (ax - cx_) * (cy - cy_) - (ay - cy_) * (cx - cx_)
        e2 = (bx_ - ax) * (cy - ay) - (by_ - ay) * (cx - ax)
        ar = area[pair_f]
        s = np.sign(ar)
        inside = (e0 * s >= 0) & (e1 * s >= 0) & (e2 * s >= 0)
        if not inside.any():
            continue

        pair_f = pair_f[inside]
        px, py = px[inside], py[inside]
        b0 = e0[inside] / ar[inside]
        b1 = e1[inside] / ar[inside]
        b2 = 1.0 - b0 - b1
        depth = b0 * fz[pair_f, 0] + b1 * fz[pair_f, 1] + b2 * fz[pair_f, 2]
        lin = py * res + px

        order = np.lexsort((pair_f, depth, lin))
        lin_s = lin[order]
        first = np.ones(len(order), dtype=bool)
        first[1:] = lin_s[1:] != lin_s[:-1]
        win = order[first]

        wl = lin[win]
        wd = depth[win]
        better = wd < depth_buf[wl]
        win, wl, wd = win[better], wl[better], wd[better]
        if win.size == 0:
            continue
        wf = pair_f[win]
        wb0, wb1, wb2 = b0[win], b1[win], b2[win]
        piw = wb0 * fiw[wf, 0] + wb1 * fiw[wf, 1] + wb2 * fiw[wf, 2]
        piw = np.where(np.abs(piw) > 1e-15, piw, 1e-15)
        depth_buf[wl] = wd
        tri_buf[wl] = wf
        u_buf[wl] = (wb0 * fu[wf, 0] + wb1 * fu[wf, 1] + wb2 * fu[wf, 2]) / piw
        v_buf[wl] = (wb0 * fv[wf, 0] + wb1 * fv[wf, 1] + wb2 * fv[wf, 2]) / piw
        n_buf[wl] = (wb0[:, None] * fn[wf, 0] + wb1[:, None] * fn[wf, 1]
                     + wb2[:, None] * fn[wf, 2]) / piw[:, None]

    covered = tri_buf >= 0
    if not covered.any():
        return None
    return {
        "covered": covered.reshape(res, res),
        "u": u_buf, "v": v_buf, "n": n_buf, "lin": np.flatnonzero(covered),
    }


def render_frame(state: SceneState, mesh: Mesh, background,
                 resolution: int = 224, supersample: bool = False) -> Image:
    """Render the scene to an RGB image; deterministic for identical inputs.

    background: Image asset or (r, g, b) flat color (already resolved from
    the SceneState by the caller).
    """
    res = resolution * 2 if supersample else resolution
    positions = morph_vertices(mesh, state.shape_morph)
    normals = vertex_normals(positions, mesh.base.faces)
    view_proj, basis = camera_matrices(state)

    raster = _rasterize(positions, normals, mesh, res, view_proj)
    base_color = state.object_color if state.object_color is not None else mesh.base_color

    if raster is None:
        coverage = np.zeros((res, res), dtype=bool)
        fg = np.zeros((res, res, 3))
    else:
        coverage = raster["covered"]
        lin = raster["lin"]
        u = raster["u"][lin]
        v = raster["v"][lin]
        if state.texture_influence > 0.0:
            tex = _sample_mesh_texture(mesh, u, v, state.texture_blur, state.texture_morph)
        else:
            tex = np.zeros((lin.size, 3))
        if state.lighting_influence > 0.0:
            n = raster["n"][lin]
            lens = np.linalg.norm(n, axis=1, keepdims=True)
            n = n / np.where(lens > 1e-12, lens, 1.0)
            lambert = np.maximum(n @ light_direction(basis), 0.0)
        else:
            lambert = np.ones(lin.size)
        shaded = shade_fragment(base_color, tex, lambert,
                                state.lighting_influence, state.texture_influence)
        fg = np.zeros((res * res, 3))
        fg[lin] = shaded
        fg = fg.reshape(res, res, 3)

    img = composite_background(fg, coverage, background,
                               state.background_blur, state.background_saturation)
    if supersample:
        img = Image(np.clip(box_downsample(img.rgb.astype(np.float64)), 0, 1).astype(np.float32))
    return img


def resolve_background(state: SceneState, backgrounds: dict):
    """SceneState.background -> Image asset or flat color tuple."""
    bg = state.background
    if isinstance(bg, tuple):
        return bg
    if bg not in backgrounds:
        raise AssetError(f"unknown background asset {bg!r}")
    return backgrounds[bg]
