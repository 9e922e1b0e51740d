"""Asset library: meshes (with morph pairs), textures, backgrounds.

Assets live in a directory with a ``manifest.json`` mapping ids to files
(docs/formats.md). Uploaded meshes are validated and persisted under
``uploads/`` so they survive restarts; everything else is read-only.
"""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .errors import AssetError
from .image import Image
from .mesh import Mesh, build_mesh, parse_obj


def load_png(path: Path) -> np.ndarray:
    with PILImage.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0


class AssetLibrary:
    def __init__(self, asset_dir: str | Path):
        self.root = Path(asset_dir)
        manifest_path = self.root / "manifest.json"
        if not manifest_path.exists():
            raise AssetError(f"no manifest.json in {self.root}")
        manifest = json.loads(manifest_path.read_text())
        self.meshes: dict[str, Mesh] = {}
        self.backgrounds: dict[str, Image] = {}
        for entry in manifest.get("meshes", []):
            self._load_mesh_entry(self.root, entry)
        for entry in manifest.get("backgrounds", []):
            self.backgrounds[entry["id"]] = Image(load_png(self.root / entry["file"]))
        uploads = self.root / "uploads"
        if uploads.exists():
            for sub in sorted(uploads.iterdir()):
                mpath = sub / "mesh.json"
                if mpath.exists():
                    self._load_mesh_entry(sub, json.loads(mpath.read_text()))

    def _load_mesh_entry(self, base_dir: Path, entry: dict):
        mesh_id = entry["id"]
        base = parse_obj((base_dir / entry["obj"]).read_text(), entry["obj"])
        target = None
        if entry.get("target_obj"):
            target = parse_obj((base_dir / entry["target_obj"]).read_text(),
                               entry["target_obj"])
        tex = load_png(base_dir / entry["texture"])
        ttex = load_png(base_dir / entry["target_texture"]) if entry.get("target_texture") else None
        self.meshes[mesh_id] = build_mesh(mesh_id, base, target, tex, ttex,
                                          entry.get("base_color", (0.6, 0.6, 0.6)))

    def get_mesh(self, mesh_id: str) -> Mesh:
        if mesh_id not in self.meshes:
            raise AssetError(f"unknown mesh asset {mesh_id!r}")
        return self.meshes[mesh_id]

    def list_meshes(self) -> list[dict]:
        return [{
            "id": m.mesh_id,
            "vertices": int(len(m.base.positions)),
            "faces": int(len(m.base.faces)),
            "has_morph_target": m.target is not m.base,
        } for m in self.meshes.values()]

    def list_backgrounds(self) -> list[str]:
        return sorted(self.backgrounds)

    def upload_mesh(self, archive: bytes) -> str:
        """Validate and register a zipped mesh pair (mesh.json + files).

        The archive must contain a ``mesh.json`` with the same schema as a
        manifest mesh entry; morph topology is validated before anything is
        persisted.
        """
        try:
            zf = zipfile.ZipFile(io.BytesIO(archive))
        except zipfile.BadZipFile as e:
            raise AssetError(f"not a zip archive: {e}") from e
        names = set(zf.namelist())
        if "mesh.json" not in names:
            raise AssetError("archive is missing mesh.json")
        entry = json.loads(zf.read("mesh.json"))
        for key in ("id", "obj", "texture"):
            if key not in entry:
                raise AssetError(f"mesh.json is missing field {key!r}")
        mesh_id = entry["id"]
        if mesh_id in self.meshes:
            raise AssetError(f"mesh id {mesh_id!r} already exists")
        needed = [entry["obj"], entry["texture"]]
        if entry.get("target_obj"):
            needed.append(entry["target_obj"])
        if entry.get("target_texture"):
            needed.append(entry["target_texture"])
        missing = [n for n in needed if n not in names]
        if missing:
            raise AssetError(f"archive is missing file(s): {', '.join(missing)}")

        def _png(name):
            with PILImage.open(io.BytesIO(zf.read(name))) as im:
                return np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0

        base = parse_obj(zf.read(entry["obj"]).decode(), entry["obj"])
        target = None
        if entry.get("target_obj"):
            target = parse_obj(zf.read(entry["target_obj"]).decode(), entry["target_obj"])
        tex = _png(entry["texture"])
        ttex = _png(entry["target_texture"]) if entry.get("target_texture") else None
        mesh = build_mesh(mesh_id, base, target, tex, ttex,
                          entry.get("base_color", (0.6, 0.6, 0.6)))

        dest = self.root / "uploads" / mesh_id
        dest.mkdir(parents=True, exist_ok=True)
        for name in needed:
            (dest / Path(name).name).write_bytes(zf.read(name))
        entry_out = dict(entry)
        for key in ("obj", "target_obj", "texture", "target_texture"):
            if entry_out.get(key):
                entry_out[key] = Path(entry_out[key]).name
        (dest / "mesh.json").write_text(json.dumps(entry_out, indent=1))
        self.meshes[mesh_id] = mesh
        return mesh_id
