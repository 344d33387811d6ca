"""Flat parameter vectors with named segments."""

from __future__ import annotations

import numpy as np


class ParamLayout:
    """Maps segment names to slices of one flat float64 vector."""

    def __init__(self, shapes: dict[str, tuple[int, ...]]):
        self.shapes = dict(shapes)
        self.offsets: dict[str, int] = {}
        off = 0
        for name, shape in self.shapes.items():
            self.offsets[name] = off
            off += int(np.prod(shape))
        self.size = off

    def view(self, flat: np.ndarray, name: str) -> np.ndarray:
        shape = self.shapes[name]
        off = self.offsets[name]
        return flat[off : off + int(np.prod(shape))].reshape(shape)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.size)

    def names(self) -> list[str]:
        return list(self.shapes)
