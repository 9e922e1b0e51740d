"""Exception types shared across the engine."""


class ShapeError(ValueError):
    """Tensor/kernel shape mismatch. Message names the offending dimensions."""


class GraphError(ValueError):
    """Model container is structurally invalid (cycle, dangling ref, bad blob)."""


class AssetError(ValueError):
    """Mesh/texture/background asset missing or malformed."""


class StateError(ValueError):
    """Scene state or config field out of its declared range. Names the field."""
