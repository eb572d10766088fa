import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))


class ScriptedGen:
    """Stand-in for a numpy Generator with pre-scripted draw values."""

    def __init__(self, uniforms=(), integers=(), exponentials=()):
        self._uniforms = list(uniforms)
        self._integers = list(integers)
        self._exponentials = list(exponentials)
        self.exponential_scales = []

    def uniform(self, low=0.0, high=1.0):
        return self._uniforms.pop(0)

    def integers(self, n):
        return self._integers.pop(0)

    def exponential(self, scale):
        self.exponential_scales.append(scale)
        return self._exponentials.pop(0)


class ScriptedFamily:
    """StreamFamily-alike handing out one scripted generator per patient."""

    def __init__(self, gens):
        self.gens = list(gens)

    def child(self, index):
        return self.gens[index]
