"""Scene state: the complete perturbation parameter vector.

One flat, serializable record carries everything the UI can change: camera,
lighting/texture factors, background, morphs, color, frequency, spatial and
attack-overlay parameters, plus the selected mesh. It is the unit of exchange
between clients and the engine; deltas are merged field-by-field and each
field is range-checked with the field name in the error.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace

from .errors import StateError

# field -> (lo, hi, hi_exclusive); None bound = unchecked
_RANGES = {
    "pitch": (-89.0, 89.0, False),
    "distance": (0.6, 10.0, False),
    "pan_x": (-2.0, 2.0, False),
    "pan_y": (-2.0, 2.0, False),
    "lighting_influence": (0.0, 1.0, False),
    "texture_influence": (0.0, 1.0, False),
    "texture_blur": (0.0, 1.0, False),
    "background_blur": (0.0, 1.0, False),
    "background_saturation": (0.0, 1.0, False),
    "shape_morph": (0.0, 1.0, False),
    "texture_morph": (0.0, 1.0, False),
    "fade_to_black": (0.0, 1.0, False),
    "hue_shift": (0.0, 360.0, True),
    "saturation": (0.0, 1.0, False),
    "contrast": (0.0, 2.0, False),
    "split_sigma": (1e-2, 16.0, False),
    "low_gain": (0.0, 2.0, False),
    "high_gain": (0.0, 2.0, False),
    "attack_alpha": (0.0, 1.0, False),
    "attack_image_fade": (0.0, 1.0, False),
}


@dataclass(frozen=True)
class SceneState:
    # camera
    yaw: float = 0.0
    pitch: float = 15.0
    distance: float = 3.0
    pan_x: float = 0.0
    pan_y: float = 0.0
    roll: float = 0.0
    # scene
    lighting_influence: float = 1.0
    texture_influence: float = 1.0
    texture_blur: float = 0.0
    background: str | tuple[float, float, float] = (0.75, 0.78, 0.8)
    background_blur: float = 0.0
    background_saturation: float = 1.0
    # shape
    mesh: str = "orb"
    shape_morph: float = 0.0
    texture_morph: float = 0.0
    object_color: tuple[float, float, float] | None = None
    # color
    fade_to_black: float = 0.0
    hue_shift: float = 0.0
    saturation: float = 1.0
    contrast: float = 1.0
    # frequency
    split_sigma: float = 2.0
    low_gain: float = 1.0
    high_gain: float = 1.0
    # spatial
    patch_k: int = 1
    shuffle_seed: int = 0
    # attack overlay
    attack_alpha: float = 0.0
    attack_image_fade: float = 0.0

    def __post_init__(self):
        for name, (lo, hi, hi_excl) in _RANGES.items():
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or v != v:
                raise StateError(f"{name}: expected a number, got {v!r}")
            if v < lo or (v >= hi if hi_excl else v > hi):
                bracket = ")" if hi_excl else "]"
                raise StateError(f"{name}: {v} outside [{lo}, {hi}{bracket}")
        if not isinstance(self.patch_k, int) or self.patch_k < 1:
            raise StateError(f"patch_k: {self.patch_k!r} must be an integer >= 1")
        if not isinstance(self.shuffle_seed, int):
            raise StateError(f"shuffle_seed: {self.shuffle_seed!r} must be an integer")
        if isinstance(self.background, (list, tuple)):
            object.__setattr__(self, "background", _color3("background", self.background))
        elif not isinstance(self.background, str):
            raise StateError(f"background: {self.background!r} must be an asset id or [r,g,b]")
        if self.object_color is not None:
            object.__setattr__(self, "object_color", _color3("object_color", self.object_color))
        if not isinstance(self.mesh, str) or not self.mesh:
            raise StateError(f"mesh: {self.mesh!r} must be a mesh asset id")

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        if isinstance(d["background"], tuple):
            d["background"] = list(d["background"])
        if d["object_color"] is not None:
            d["object_color"] = list(d["object_color"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneState":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise StateError(f"unknown scene field(s): {', '.join(sorted(unknown))}")
        return cls(**d)

    def merged(self, delta: dict) -> "SceneState":
        """New state with the delta's fields replacing current values."""
        known = {f.name for f in fields(self)}
        unknown = set(delta) - known
        if unknown:
            raise StateError(f"unknown scene field(s): {', '.join(sorted(unknown))}")
        return replace(self, **delta)

    # -- neutral-stage probes used by the pipeline driver --------------------

    def color_neutral(self) -> bool:
        return (self.fade_to_black == 0.0 and self.hue_shift == 0.0
                and self.saturation == 1.0 and self.contrast == 1.0)

    def frequency_neutral(self) -> bool:
        return self.low_gain == 1.0 and self.high_gain == 1.0

    def spatial_neutral(self) -> bool:
        return self.patch_k == 1


def _color3(name: str, value) -> tuple[float, float, float]:
    if len(value) != 3:
        raise StateError(f"{name}: need exactly 3 components, got {len(value)}")
    out = []
    for v in value:
        if not isinstance(v, (int, float)) or not (0.0 <= v <= 1.0):
            raise StateError(f"{name}: component {v!r} outside [0, 1]")
        out.append(float(v))
    return tuple(out)
