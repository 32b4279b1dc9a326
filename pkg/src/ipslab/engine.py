"""Exact event-driven simulation of the forward and dual processes.

Single trajectories go through :func:`simulate`; Monte-Carlo experiments
evolve whole blocks of replicas through :func:`evolve_block`, which hands
the work to the compiled kernel (or its pure-Python twin).  Replicas are
grouped in fixed-size blocks, each with its own random stream, so results
do not depend on how blocks are spread over workers.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import expm

from . import _backend
from .lattice import Site
from .models import ModelSpec

__all__ = [
    "AbsorbingState",
    "Configuration",
    "DualConfiguration",
    "RngStream",
    "BLOCK_SIZE",
    "enumerate_transitions",
    "step",
    "simulate",
    "simulate_dual",
    "evolve_block",
    "map_blocks",
    "single_particle_kernel",
    "one_particle_generator",
]

BLOCK_SIZE = 2048
KERNEL_CAP = 4000


class AbsorbingState(RuntimeError):
    """Raised by :func:`step` when no transition has positive rate."""


def _as_index(model: ModelSpec, v) -> int:
    if isinstance(v, Site):
        return model.lattice.index(v)
    return int(v)


@dataclass(frozen=True, eq=False)
class Configuration:
    """Occupation numbers ``eta_v`` indexed by site."""

    occupancy: np.ndarray

    def __post_init__(self):
        occ = np.asarray(self.occupancy, dtype=np.int64)
        if occ.ndim != 1 or (occ < 0).any():
            raise ValueError("occupancy must be a 1-d array of nonnegative counts")
        object.__setattr__(self, "occupancy", occ)

    @classmethod
    def empty(cls, n_sites: int) -> "Configuration":
        return cls(np.zeros(n_sites, dtype=np.int64))

    @classmethod
    def from_particles(cls, sites: Sequence[int], n_sites: int) -> "Configuration":
        return cls(np.bincount(np.asarray(sites, dtype=np.int64), minlength=n_sites))

    @classmethod
    def from_counts(cls, counts: dict, model: ModelSpec) -> "Configuration":
        occ = np.zeros(model.num_sites, dtype=np.int64)
        for v, k in counts.items():
            occ[_as_index(model, v)] += int(k)
        return cls(occ)

    def particles(self) -> np.ndarray:
        """Site of every particle, in increasing site order."""
        return np.repeat(np.arange(len(self.occupancy)), self.occupancy)

    @property
    def total(self) -> int:
        return int(self.occupancy.sum())

    def validate(self, model: ModelSpec) -> None:
        if len(self.occupancy) != model.num_sites:
            raise ValueError(f"configuration has {len(self.occupancy)} sites, model has {model.num_sites}")
        if model.kind == -1 and (self.occupancy > model.alpha).any():
            raise ValueError(f"occupancy exceeds exclusion capacity alpha={model.alpha}")

    def __eq__(self, other):
        return isinstance(other, Configuration) and np.array_equal(self.occupancy, other.occupancy)

    def __hash__(self):
        return hash(self.occupancy.tobytes())


@dataclass(frozen=True)
class DualConfiguration:
    """Finitely many labeled particles; ``particles[i]`` is the site of label i."""

    particles: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "particles", tuple(int(p) for p in self.particles))

    def __len__(self):
        return len(self.particles)

    def occupancy(self, n_sites: int) -> np.ndarray:
        return np.bincount(np.asarray(self.particles, dtype=np.int64), minlength=n_sites)

    def counts(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for p in self.particles:
            out[p] = out.get(p, 0) + 1
        return out

    def validate(self, model: ModelSpec) -> None:
        if any(not 0 <= p < model.num_sites for p in self.particles):
            raise ValueError("particle outside the lattice")
        if model.kind == -1 and any(k > model.alpha for k in self.counts().values()):
            raise ValueError(f"dual occupancy exceeds exclusion capacity alpha={model.alpha}")


@dataclass(frozen=True)
class RngStream:
    """Named random stream; block ``b`` of stream ``(seed, stream)`` is a
    PCG64 generator keyed by ``SeedSequence(seed, spawn_key=(stream, b))``."""

    seed: int
    stream: int = 0

    def bit_generator(self, block: int = 0) -> np.random.PCG64:
        return np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=(self.stream, block)))

    def generator(self, block: int = 0) -> np.random.Generator:
        return np.random.Generator(self.bit_generator(block))

    def child(self, stream: int) -> "RngStream":
        return RngStream(self.seed, self.stream * 1_000_003 + stream + 1)


def _rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    return np.random.default_rng(rng)


def enumerate_transitions(model: ModelSpec, eta, reversed: bool = False) -> list[tuple[int, int, float]]:
    """Every move ``eta -> eta^{v->w}`` with positive rate, as ``(v, w, rate)``."""
    occ = eta.occupancy if isinstance(eta, Configuration) else np.asarray(eta)
    if model.kind == -1 and (occ > model.alpha).any():
        raise ValueError(f"occupancy exceeds exclusion capacity alpha={model.alpha}")
    table = model.rate_table(reversed)
    s, alpha = model.kind, model.alpha
    out = []
    for v in np.flatnonzero(occ):
        nb, rates = table.neighbours(v)
        for w, p in zip(nb, rates):
            r = p * occ[v] * (alpha + s * occ[w])
            if r > 0:
                out.append((int(v), int(w), float(r)))
    return out


def step(model: ModelSpec, state: Configuration, rng) -> tuple[Configuration, float]:
    """One Gillespie event of the occupancy process."""
    gen = _rng(rng)
    moves = enumerate_transitions(model, state)
    total = math.fsum(r for _, _, r in moves)
    if total <= 0:
        raise AbsorbingState("no transition has positive rate")
    dt = gen.exponential(1.0 / total)
    target = gen.random() * total
    acc = 0.0
    v, w = moves[-1][:2]
    for a, b, r in moves:
        acc += r
        if target < acc:
            v, w = a, b
            break
    occ = state.occupancy.copy()
    occ[v] -= 1
    occ[w] += 1
    return Configuration(occ), dt


def _particles_of(state) -> np.ndarray:
    if isinstance(state, DualConfiguration):
        return np.asarray(state.particles, dtype=np.int64)
    if isinstance(state, Configuration):
        return state.particles().astype(np.int64)
    return np.asarray(state, dtype=np.int64)


def evolve_block(model: ModelSpec, rep_ptr, pos0, times, bit_generator, backend: str | None = None,
                 observer=None) -> tuple[np.ndarray, tuple[int, int]]:
    """Evolve a ragged block of replicas; returns ``(positions[g, particle], stats)``.

    ``rep_ptr``/``pos0`` describe the replicas as in the kernel; the returned
    array holds the labeled positions at each time of ``times``.
    """
    table = model.rates
    times = np.ascontiguousarray(times, dtype=np.float64)
    if (times < 0).any() or (np.diff(times) < 0).any():
        raise ValueError("observation times must be nonnegative and nondecreasing")
    rep_ptr = np.ascontiguousarray(rep_ptr, dtype=np.int64)
    pos0 = np.ascontiguousarray(pos0, dtype=np.int64)
    out = np.empty((len(times), len(pos0)), dtype=np.int64)
    evolve = _backend.get_evolve("python" if observer is not None else backend)
    stats = evolve(table.ptr, table.idx, table.rate, model.kind, float(model.alpha),
                   rep_ptr, pos0, times, bit_generator, out, observer)
    return out, stats


def simulate(model: ModelSpec, state, horizon: float, rng, observer: Callable | None = None,
             backend: str | None = None):
    """Run the process from ``state`` up to time ``horizon``.

    ``observer(t, label, src, dst)`` is called after every jump.  Returns a
    state of the same type as ``state`` (labels are kept for
    ``DualConfiguration``).
    """
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    if hasattr(state, "validate"):
        state.validate(model)
    pos = _particles_of(state)
    if horizon == 0:
        final = pos
    else:
        gen = _rng(rng)
        obs = None if observer is None else (lambda r, t, i, v, w: observer(t, i, v, w))
        out, _ = evolve_block(model, [0, len(pos)], pos, [horizon], gen.bit_generator,
                              backend=backend, observer=obs)
        final = out[0]
    if isinstance(state, DualConfiguration):
        return DualConfiguration(tuple(final))
    if isinstance(state, Configuration):
        return Configuration.from_particles(final, model.num_sites)
    return final


def simulate_dual(model: ModelSpec, xi, horizon: float, rng, observer: Callable | None = None,
                  backend: str | None = None):
    """Run the dual process: the model itself for s=+-1, its time reversal for s=0."""
    if not isinstance(xi, DualConfiguration):
        xi = DualConfiguration(tuple(_particles_of(xi)))
    return simulate(model.dual(), xi, horizon, rng, observer=observer, backend=backend)


def map_blocks(task: Callable[[int, int, np.random.PCG64], object], replicas: int, rng: RngStream,
               workers: int = 1, block_size: int = BLOCK_SIZE) -> list:
    """Run ``task(block, n, bit_generator)`` over fixed-size replica blocks.

    Results come back in block order regardless of ``workers``.
    """
    if replicas < 0:
        raise ValueError("replicas must be >= 0")
    sizes = [min(block_size, replicas - b * block_size) for b in range(-(-replicas // block_size))]

    def run(b):
        return task(b, sizes[b], rng.bit_generator(b))

    if workers <= 1 or len(sizes) <= 1:
        return [run(b) for b in range(len(sizes))]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, range(len(sizes))))


def one_particle_generator(model: ModelSpec, reversed: bool = False) -> np.ndarray:
    """Dense generator of a lone particle (rates ``alpha * p``)."""
    p = model.rate_table(reversed).dense() * model.alpha
    np.fill_diagonal(p, -p.sum(axis=1))
    return p


def single_particle_kernel(model: ModelSpec, t: float, reversed: bool = False,
                           cap: int = KERNEL_CAP) -> np.ndarray:
    """Transition matrix ``p_t(v, w)`` of a lone particle, by matrix exponential."""
    if model.num_sites > cap:
        raise ValueError(f"{model.num_sites} sites exceed the kernel cap of {cap}")
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0:
        return np.eye(model.num_sites)
    return expm(t * one_particle_generator(model, reversed))
