"""Model parameters and transition rates.

A model is a generator of the form

    L f(eta) = sum_{v,w} p(v,w) eta_v (alpha + s eta_w) [f(eta^{v->w}) - f(eta)]

on the torus surrogate, with ``s = -1`` (exclusion), ``s = +1`` (inclusion)
or ``s = 0`` (independent run-and-tumble particles).  ``ModelSpec`` is the
single source of truth for every rate used elsewhere in the package.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .lattice import Lattice, Site

__all__ = [
    "ModelError",
    "LayerKinetics",
    "ModelSpec",
    "RateTable",
    "nearest_neighbour_pi",
]


class ModelError(ValueError):
    """Invalid model parameters; ``violations`` lists every problem found."""

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


def nearest_neighbour_pi(d: int, rate: float) -> dict[tuple[int, ...], float]:
    """Jump table with ``rate`` towards each of the ``2d`` nearest neighbours."""
    table = {}
    for k in range(d):
        for sign in (1, -1):
            u = [0] * d
            u[k] = sign
            table[tuple(u)] = float(rate)
    return table


@dataclass(frozen=True)
class LayerKinetics:
    """Per-layer jump tables ``pi[sigma][u]``, switch matrix ``c``, velocities.

    ``kappa``, ``lam`` and ``velocity`` only enter the independent (s=0)
    dynamics.
    """

    pi: tuple[Mapping[tuple[int, ...], float], ...]
    c: tuple[tuple[float, ...], ...]
    velocity: tuple[tuple[int, ...], ...] | None = None
    kappa: float = 1.0
    lam: float = 0.0

    def __post_init__(self):
        object.__setattr__(
            self, "pi", tuple({tuple(int(a) for a in u): float(r) for u, r in layer.items()} for layer in self.pi)
        )
        object.__setattr__(self, "c", tuple(tuple(float(x) for x in row) for row in self.c))
        if self.velocity is not None:
            object.__setattr__(self, "velocity", tuple(tuple(int(a) for a in v) for v in self.velocity))
        object.__setattr__(self, "kappa", float(self.kappa))
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def num_layers(self) -> int:
        return len(self.pi)

    def violations(self, d: int | None = None) -> list[str]:
        out = []
        m = self.num_layers
        if m == 0:
            out.append("at least one layer is required")
        for sigma, table in enumerate(self.pi):
            for u, r in table.items():
                if d is not None and len(u) != d:
                    out.append(f"pi[{sigma}]: displacement {u} has length {len(u)}, expected {d}")
                if not any(u):
                    out.append(f"pi[{sigma}]: zero displacement is not a jump")
                if not (math.isfinite(r) and r >= 0):
                    out.append(f"pi[{sigma}][{u}] = {r} must be finite and >= 0")
                neg = tuple(-a for a in u)
                if not math.isclose(table.get(neg, 0.0), r, rel_tol=0, abs_tol=1e-15):
                    out.append(f"pi[{sigma}] not symmetric: pi({u})={r} but pi({neg})={table.get(neg, 0.0)}")
        c = self.c
        if len(c) != m or any(len(row) != m for row in c):
            out.append(f"c must be a {m}x{m} matrix")
        else:
            for a in range(m):
                if c[a][a] != 0:
                    out.append(f"c[{a}][{a}] must be 0")
                for b in range(m):
                    if not (math.isfinite(c[a][b]) and c[a][b] >= 0):
                        out.append(f"c[{a}][{b}] = {c[a][b]} must be finite and >= 0")
                    if b > a and c[a][b] != c[b][a]:
                        out.append(f"c not symmetric: c[{a}][{b}]={c[a][b]} but c[{b}][{a}]={c[b][a]}")
            if not _connected(c):
                out.append("c is not irreducible: the graph of positive switch rates is disconnected")
        return out

    def s0_violations(self, d: int) -> list[str]:
        out = []
        for name, val in (("kappa", self.kappa), ("lambda", self.lam)):
            if not (math.isfinite(val) and val >= 0):
                out.append(f"{name} = {val} must be finite and >= 0")
        if self.velocity is None:
            if self.lam > 0:
                out.append("lambda > 0 requires a velocity map v")
        else:
            if len(self.velocity) != self.num_layers:
                out.append(f"velocity map has {len(self.velocity)} entries for {self.num_layers} layers")
            for sigma, v in enumerate(self.velocity):
                if len(v) != d:
                    out.append(f"v[{sigma}] = {v} has length {len(v)}, expected {d}")
        return out


def _connected(c) -> bool:
    m = len(c)
    seen = {0}
    todo = [0]
    while todo:
        a = todo.pop()
        for b in range(m):
            if b not in seen and c[a][b] > 0:
                seen.add(b)
                todo.append(b)
    return len(seen) == m


@dataclass(frozen=True, eq=False)
class RateTable:
    """Outgoing one-particle rates in CSR layout: the targets of site ``v``
    are ``idx[ptr[v]:ptr[v+1]]`` with rates ``rate[ptr[v]:ptr[v+1]]``."""

    ptr: np.ndarray
    idx: np.ndarray
    rate: np.ndarray

    @property
    def size(self) -> int:
        return len(self.ptr) - 1

    def neighbours(self, v: int) -> tuple[np.ndarray, np.ndarray]:
        a, b = self.ptr[v], self.ptr[v + 1]
        return self.idx[a:b], self.rate[a:b]

    def get(self, v: int, w: int) -> float:
        nb, r = self.neighbours(v)
        hit = np.nonzero(nb == w)[0]
        return float(r[hit[0]]) if len(hit) else 0.0

    def dense(self) -> np.ndarray:
        n = self.size
        out = np.zeros((n, n))
        rows = np.repeat(np.arange(n), np.diff(self.ptr))
        out[rows, self.idx] = self.rate
        return out

    def out_rates(self) -> np.ndarray:
        rows = np.repeat(np.arange(self.size), np.diff(self.ptr))
        return np.bincount(rows, weights=self.rate, minlength=self.size)

    def perturbed(self, v: int, w: int, delta: float) -> "RateTable":
        """Copy with ``p(v, w)`` shifted by ``delta`` (negative controls)."""
        dense = self.dense()
        dense[v, w] += delta
        return RateTable.from_dense(dense)

    @classmethod
    def from_dense(cls, p: np.ndarray) -> "RateTable":
        rows, cols = np.nonzero(p > 0)
        ptr = np.zeros(p.shape[0] + 1, dtype=np.int64)
        np.add.at(ptr, rows + 1, 1)
        return cls(np.cumsum(ptr), cols.astype(np.int64), p[rows, cols].astype(np.float64))


@dataclass(frozen=True)
class ModelSpec:
    kind: int
    alpha: float
    kinetics: LayerKinetics
    lattice: Lattice
    #: negate active-jump velocities (the time-reversed RTP)
    reversed: bool = field(default=False)

    def __post_init__(self):
        problems = []
        if self.kind not in (-1, 0, 1):
            problems.append(f"s must be -1, 0 or +1, got {self.kind!r}")
        alpha = self.alpha
        if self.kind == -1:
            if not (float(alpha).is_integer() and alpha >= 1):
                problems.append(f"exclusion requires a positive integer alpha, got {alpha!r}")
        elif self.kind == 1:
            if not (math.isfinite(alpha) and alpha > 0):
                problems.append(f"inclusion requires alpha > 0, got {alpha!r}")
        elif self.kind == 0 and alpha != 1:
            problems.append(f"independent particles use alpha = 1, got {alpha!r}")
        kin = self.kinetics
        if kin.num_layers != self.lattice.num_layers:
            problems.append(
                f"kinetics has {kin.num_layers} layers but the lattice has {self.lattice.num_layers}"
            )
        problems += kin.violations(self.lattice.d)
        if self.kind == 0:
            problems += kin.s0_violations(self.lattice.d)
        half = self.lattice.L / 2
        for sigma, table in enumerate(kin.pi):
            for u in table:
                if any(abs(a) >= half for a in u):
                    problems.append(f"pi[{sigma}]: displacement {u} not shorter than L/2 = {half}")
        if self.kind == 0 and kin.velocity is not None and kin.lam > 0:
            for sigma, v in enumerate(kin.velocity):
                if any(abs(a) >= half for a in v):
                    problems.append(f"v[{sigma}] = {v} not shorter than L/2 = {half}")
        if problems:
            raise ModelError(problems)
        if self.kind == 0 and float(alpha) == 1.0:
            object.__setattr__(self, "alpha", 1.0)
        elif self.kind == -1:
            object.__setattr__(self, "alpha", int(alpha))
        else:
            object.__setattr__(self, "alpha", float(alpha))

    @property
    def s(self) -> int:
        return self.kind

    @property
    def num_sites(self) -> int:
        return self.lattice.size

    def dual(self) -> "ModelSpec":
        """The dual process: the same model for s=+-1, the time reversal for s=0."""
        if self.kind != 0:
            return self
        return replace(self, reversed=not self.reversed)

    def _active(self, sigma: int, reversed_: bool) -> tuple[int, ...] | None:
        kin = self.kinetics
        if self.kind != 0 or kin.lam == 0 or kin.velocity is None:
            return None
        v = kin.velocity[sigma]
        if not any(v):
            return None
        return tuple(-a for a in v) if reversed_ else v

    def active_velocity(self, sigma: int) -> tuple[int, ...] | None:
        """Displacement of the active jump in layer ``sigma`` (None when absent)."""
        return self._active(sigma, self.reversed)

    def pair_rate(self, src: Site, dst: Site, reversed: bool = False) -> float:
        """``p(src, dst)``; ``reversed`` toggles the direction of active jumps."""
        rev = self.reversed != bool(reversed)
        kin = self.kinetics
        if src.layer != dst.layer:
            if src.position != dst.position:
                return 0.0
            return kin.c[src.layer][dst.layer]
        if src.position == dst.position:
            return 0.0
        u = self.lattice.min_image([b - a for a, b in zip(src.position, dst.position)])
        rate = kin.pi[src.layer].get(u, 0.0)
        if self.kind == 0:
            rate *= kin.kappa
            if self._active(src.layer, rev) == u:
                rate += kin.lam
        return rate

    def transition_rate(self, eta, src: Site, dst: Site) -> float:
        """Rate of ``eta -> eta^{src->dst}``."""
        lat = self.lattice
        n_from = int(eta[lat.index(src)])
        n_to = int(eta[lat.index(dst)])
        if self.kind == -1 and (n_from > self.alpha or n_to > self.alpha):
            raise ValueError(f"occupancy exceeds exclusion capacity alpha={self.alpha}")
        if n_from == 0:
            return 0.0
        return self.pair_rate(src, dst) * n_from * max(self.alpha + self.kind * n_to, 0)

    @cached_property
    def rates(self) -> RateTable:
        """``p(v, w)`` for every ordered site pair with positive rate."""
        lat = self.lattice
        kin = self.kinetics
        ptr = [0]
        idx: list[int] = []
        rate: list[float] = []
        for v in range(lat.size):
            site = lat.site_of(v)
            targets: dict[int, float] = {}
            for u, r in kin.pi[site.layer].items():
                r = r * (kin.kappa if self.kind == 0 else 1.0)
                if r > 0:
                    w = lat.index(lat.displace(site, u))
                    targets[w] = targets.get(w, 0.0) + r
            a = self._active(site.layer, self.reversed)
            if a is not None:
                w = lat.index(lat.displace(site, a))
                targets[w] = targets.get(w, 0.0) + kin.lam
            for sigma2, r in enumerate(kin.c[site.layer]):
                if r > 0:
                    w = lat.index(Site(site.position, sigma2))
                    targets[w] = targets.get(w, 0.0) + r
            for w in sorted(targets):
                if targets[w] > 0:
                    idx.append(w)
                    rate.append(targets[w])
            ptr.append(len(idx))
        return RateTable(np.asarray(ptr, np.int64), np.asarray(idx, np.int64), np.asarray(rate, np.float64))

    def rate_table(self, reversed: bool = False) -> RateTable:
        return self.dual().rates if reversed and self.kind == 0 else self.rates

    @property
    def max_jump_range(self) -> int:
        """Largest coordinate of any spatial displacement."""
        kin = self.kinetics
        best = 0
        for table in kin.pi:
            for u, r in table.items():
                if r > 0:
                    best = max(best, max(abs(a) for a in u))
        if self.kind == 0 and kin.lam > 0 and kin.velocity is not None:
            for v in kin.velocity:
                best = max(best, max((abs(a) for a in v), default=0))
        return best

    @property
    def max_spatial_rate(self) -> float:
        """Largest total rate of spatial jumps of a lone particle."""
        kin = self.kinetics
        best = 0.0
        for sigma, table in enumerate(kin.pi):
            total = sum(table.values())
            if self.kind == 0:
                total = kin.kappa * total + (kin.lam if self._active(sigma, False) is not None else 0.0)
            else:
                total *= self.alpha
            best = max(best, total)
        return best
