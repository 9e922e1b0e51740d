"""Triangle meshes with morph targets, and the text mesh format loader.

The mesh format is the `v` / `vt` / `f` subset of Wavefront OBJ (triangles
only, 1-based `pos/uv` corner indices). A morph pair is two files with
identical vertex/UV counts and identical face index lists; this is validated
at load so shape and texture interpolation stay well-defined.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AssetError
from .image import build_mip_pyramid


@dataclass(frozen=True)
class MeshGeometry:
    positions: np.ndarray  # [N,3] float64
    uvs: np.ndarray        # [M,2] float64
    faces: np.ndarray      # [F,3] int32 position indices
    face_uvs: np.ndarray   # [F,3] int32 uv indices


@dataclass(frozen=True)
class Mesh:
    """Morphable textured mesh: base and target share topology."""

    mesh_id: str
    base: MeshGeometry
    target: MeshGeometry
    texture_pyramid: list[np.ndarray]         # float32 [h,w,3] mip chain
    target_texture_pyramid: list[np.ndarray]
    base_color: tuple[float, float, float]

    def morph_positions(self, t: float) -> np.ndarray:
        """(1-t) * base + t * target, per vertex."""
        if t == 0.0:
            return self.base.positions
        if t == 1.0:
            return self.target.positions
        return (1.0 - t) * self.base.positions + t * self.target.positions


def parse_obj(text: str, name: str = "<mesh>") -> MeshGeometry:
    positions: list[list[float]] = []
    uvs: list[list[float]] = []
    faces: list[list[int]] = []
    face_uvs: list[list[int]] = []
    for ln, line in enumerate(text.splitlines(), start=1):
        parts = line.split("#", 1)[0].split()
        if not parts:
            continue
        tag, args = parts[0], parts[1:]
        if tag == "v":
            if len(args) != 3:
                raise AssetError(f"{name}:{ln}: v needs 3 coordinates")
            positions.append([float(a) for a in args])
        elif tag == "vt":
            if len(args) < 2:
                raise AssetError(f"{name}:{ln}: vt needs 2 coordinates")
            uvs.append([float(args[0]), float(args[1])])
        elif tag == "f":
            if len(args) != 3:
                raise AssetError(f"{name}:{ln}: only triangle faces are supported")
            fi, fuv = [], []
            for a in args:
                comp = a.split("/")
                if len(comp) < 2 or not comp[0] or not comp[1]:
                    raise AssetError(f"{name}:{ln}: face corners must be pos/uv")
                fi.append(int(comp[0]) - 1)
                fuv.append(int(comp[1]) - 1)
            faces.append(fi)
            face_uvs.append(fuv)
        # other tags (vn, o, s, usemtl, ...) are ignored
    if not faces:
        raise AssetError(f"{name}: no faces")
    geo = MeshGeometry(
        positions=np.asarray(positions, dtype=np.float64),
        uvs=np.asarray(uvs, dtype=np.float64),
        faces=np.asarray(faces, dtype=np.int32),
        face_uvs=np.asarray(face_uvs, dtype=np.int32),
    )
    if geo.faces.min() < 0 or geo.faces.max() >= len(positions):
        raise AssetError(f"{name}: face position index out of range")
    if geo.face_uvs.min() < 0 or geo.face_uvs.max() >= len(uvs):
        raise AssetError(f"{name}: face uv index out of range")
    return geo


def validate_morph_pair(base: MeshGeometry, target: MeshGeometry, name: str):
    """Same counts and identical index topology, else morphing is undefined."""
    if len(base.positions) != len(target.positions):
        raise AssetError(
            f"{name}: morph pair vertex counts differ "
            f"({len(base.positions)} vs {len(target.positions)})"
        )
    if len(base.uvs) != len(target.uvs):
        raise AssetError(
            f"{name}: morph pair uv counts differ "
            f"({len(base.uvs)} vs {len(target.uvs)})"
        )
    if base.faces.shape != target.faces.shape or not np.array_equal(base.faces, target.faces):
        raise AssetError(f"{name}: morph pair face topology differs")
    if not np.array_equal(base.face_uvs, target.face_uvs):
        raise AssetError(f"{name}: morph pair uv topology differs")


def build_mesh(mesh_id: str, base: MeshGeometry, target: MeshGeometry | None,
               texture: np.ndarray, target_texture: np.ndarray | None,
               base_color) -> Mesh:
    target = target if target is not None else base
    validate_morph_pair(base, target, mesh_id)
    tex_pyr = build_mip_pyramid(texture)
    tgt_pyr = build_mip_pyramid(target_texture) if target_texture is not None else tex_pyr
    return Mesh(mesh_id, base, target, tex_pyr, tgt_pyr,
                tuple(float(c) for c in base_color))


def load_mesh_pair(mesh_id: str, base_path: Path, target_path: Path | None,
                   texture: np.ndarray, target_texture: np.ndarray | None,
                   base_color) -> Mesh:
    base = parse_obj(base_path.read_text(), base_path.name)
    target = parse_obj(target_path.read_text(), target_path.name) if target_path else None
    return build_mesh(mesh_id, base, target, texture, target_texture, base_color)


def vertex_normals(positions: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Area-weighted vertex normals of the (possibly morphed) positions."""
    p0 = positions[faces[:, 0]]
    p1 = positions[faces[:, 1]]
    p2 = positions[faces[:, 2]]
    fn = np.cross(p1 - p0, p2 - p0)  # length ~ 2*area: weighting for free
    normals = np.zeros_like(positions)
    for c in range(3):
        np.add.at(normals, faces[:, c], fn)
    lens = np.linalg.norm(normals, axis=1, keepdims=True)
    safe = np.where(lens > 1e-12, lens, 1.0)
    normals = normals / safe
    normals[lens[:, 0] <= 1e-12] = (0.0, 0.0, 1.0)
    return normals


# ---------------------------------------------------------------------------
# procedural generation (fixtures and demo assets)
# ---------------------------------------------------------------------------

def latlong_geometry(n_lat: int, n_lon: int, radius_fn) -> MeshGeometry:
    """Lat-long grid over the sphere with a custom radial profile.

    radius_fn(theta, phi) -> scalar radius per direction; all shapes generated
    through the same grid share topology, which is what makes them valid
    morph pairs.
    """
    thetas = np.linspace(0.0, np.pi, n_lat + 1)
    phis = np.linspace(0.0, 2.0 * np.pi, n_lon + 1)
    tt, pp = np.meshgrid(thetas, phis, indexing="ij")
    dirs = np.stack([np.sin(tt) * np.cos(pp), np.cos(tt), np.sin(tt) * np.sin(pp)], axis=-1)
    r = radius_fn(tt, pp)[..., None]
    positions = (dirs * r).reshape(-1, 3)
    us = (pp / (2.0 * np.pi))
    vs = (tt / np.pi)
    uvs = np.stack([us, vs], axis=-1).reshape(-1, 2)
    faces = []
    cols = n_lon + 1
    for i in range(n_lat):
        for j in range(n_lon):
            a = i * cols + j
            b = (i + 1) * cols + j
            faces.append([a, b + 1, b])
            faces.append([a, a + 1, b + 1])
    f = np.asarray(faces, dtype=np.int32)
    return MeshGeometry(positions, uvs, f, f.copy())


def sphere_radius(tt, pp):
    return np.ones_like(tt)


def cube_radius(tt, pp):
    """Radius that projects each direction onto the unit-cube surface."""
    d = np.stack([np.sin(tt) * np.cos(pp), np.cos(tt), np.sin(tt) * np.sin(pp)], axis=-1)
    m = np.abs(d).max(axis=-1)
    return 0.82 / np.maximum(m, 1e-9)


def bumpy_radius(tt, pp):
    return 1.0 + 0.18 * np.sin(3.0 * pp) * np.sin(2.0 * tt)


def peanut_radius(tt, pp):
    return 0.62 + 0.55 * np.cos(tt) ** 2


def geometry_to_obj(geo: MeshGeometry) -> str:
    lines = []
    for p in geo.positions:
        lines.append(f"v {p[0]:.8f} {p[1]:.8f} {p[2]:.8f}")
    for u in geo.uvs:
        lines.append(f"vt {u[0]:.8f} {u[1]:.8f}")
    for f, fu in zip(geo.faces, geo.face_uvs):
        lines.append(f"f {f[0]+1}/{fu[0]+1} {f[1]+1}/{fu[1]+1} {f[2]+1}/{fu[2]+1}")
    return "\n".join(lines) + "\n"
