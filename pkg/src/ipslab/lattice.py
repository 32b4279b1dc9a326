"""Periodic torus geometry standing in for Z^d x S.

Sites are indexed row-major over the position with the layer as the
slowest axis, so every layer occupies a contiguous block of ``L**d``
indices.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np


@dataclass(frozen=True)
class Site:
    position: tuple[int, ...]
    layer: int


@dataclass(frozen=True)
class Lattice:
    """A torus of side ``L`` in ``d`` dimensions carrying ``num_layers`` layers."""

    d: int
    L: int
    num_layers: int = 1

    def __post_init__(self):
        for name in ("d", "L", "num_layers"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")

    @property
    def cells(self) -> int:
        """Number of spatial positions, ``L**d``."""
        return self.L ** self.d

    @property
    def size(self) -> int:
        return self.cells * self.num_layers

    def wrap(self, x: Sequence[int]) -> tuple[int, ...]:
        if len(x) != self.d:
            raise ValueError(f"expected a vector of length {self.d}, got {len(x)}")
        return tuple(int(c) % self.L for c in x)

    def displace(self, site: Site, u: Sequence[int]) -> Site:
        if len(u) != self.d:
            raise ValueError(f"expected a displacement of length {self.d}, got {len(u)}")
        return Site(self.wrap([a + b for a, b in zip(site.position, u)]), site.layer)

    def site(self, position: Sequence[int], layer: int = 0) -> Site:
        if not 0 <= layer < self.num_layers:
            raise ValueError(f"layer {layer} outside [0, {self.num_layers})")
        return Site(self.wrap(position), int(layer))

    def index(self, site: Site) -> int:
        idx = 0
        for c in self.wrap(site.position):
            idx = idx * self.L + c
        if not 0 <= site.layer < self.num_layers:
            raise ValueError(f"layer {site.layer} outside [0, {self.num_layers})")
        return site.layer * self.cells + idx

    def site_of(self, index: int) -> Site:
        if not 0 <= index < self.size:
            raise IndexError(f"site index {index} outside [0, {self.size})")
        layer, rest = divmod(int(index), self.cells)
        coords = []
        for _ in range(self.d):
            rest, c = divmod(rest, self.L)
            coords.append(c)
        return Site(tuple(reversed(coords)), layer)

    def sites(self) -> Iterator[Site]:
        for i in range(self.size):
            yield self.site_of(i)

    def positions(self) -> np.ndarray:
        """``(size, d)`` array of positions, in index order."""
        grid = np.indices((self.L,) * self.d).reshape(self.d, -1).T
        return np.tile(grid, (self.num_layers, 1))

    def layers(self) -> np.ndarray:
        return np.repeat(np.arange(self.num_layers), self.cells)

    def min_image(self, u: Sequence[int]) -> tuple[int, ...]:
        """Representative of ``u`` mod L with every coordinate in (-L/2, L/2]."""
        out = []
        for c in u:
            c = int(c) % self.L
            if c > self.L // 2:
                c -= self.L
            out.append(c)
        return tuple(out)
