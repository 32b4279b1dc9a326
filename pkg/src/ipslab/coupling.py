"""Coupling constructions and their empirical evaluation.

Two copies of a process are run on one probability space so that each
copy, viewed alone, has the law of the original process, while the pair
tends to merge.  The constructions:

* lone particles (and independent particles pairwise): first the layer
  chains meet and are mirrored, then each spatial axis is Ornstein-coupled
  (independent jumps until the coordinate difference vanishes, mirrored
  jumps afterwards);
* run-and-tumble particles without diffusion: after the layers meet the
  position difference is expanded in a unimodular basis of velocities and
  each coefficient performs a walk of its own;
* exclusion in low dimension: lift to the ladder, where the process is
  capacity-one stirring, and share all stirring clocks except on the bond
  joining the two copies of an unmatched particle;
* inclusion (and exclusion in high dimension): spread out with the true
  dynamics, then try an independent-walker coupling and give up on the
  first collision, doubling the spreading time for the next attempt.

Coupling times are recorded per replica up to a fixed maximal horizon;
fractions on a doubling horizon grid are derived from them afterwards.
"""
from __future__ import annotations

import bisect
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .engine import BLOCK_SIZE, Configuration, RngStream, evolve_block, map_blocks, single_particle_kernel
from .lattice import Site
from .models import ModelSpec

__all__ = [
    "CouplingUnsupported",
    "SpanDeficient",
    "HorizonTooLong",
    "CoupledPair",
    "InternalCoupling",
    "CouplingSchedule",
    "CouplingReport",
    "SpreadReport",
    "unimodular_basis",
    "couple_internal",
    "couple_irw_pair",
    "couple_rtp",
    "couple_irw_configs",
    "couple_sep_once",
    "couple_sip_once",
    "couple_sep",
    "couple_sip",
    "coupling_experiment",
    "spread_estimator",
    "spread_oracle",
]

COUPLING_BLOCK = 64


class CouplingUnsupported(ValueError):
    """The model lacks what a coupling construction needs."""


class SpanDeficient(CouplingUnsupported):
    """Velocities (or jumps) do not generate the integer lattice."""


class HorizonTooLong(ValueError):
    """Requested times are too long for the torus to stand in for Z^d."""


# --------------------------------------------------------------------------
# result types


@dataclass(frozen=True)
class CoupledPair:
    """Final states of two coupled copies plus the stopping-time record.

    ``first[i]``/``second[i]`` are site indices of the i-th matched
    particles.  ``varsigma[i]`` is the layer meeting time of pair ``i``,
    ``tau_parts[i]`` the per-coordinate synchronisation times; unreached
    times are ``inf``.
    """

    first: tuple[int, ...]
    second: tuple[int, ...]
    time: float
    varsigma: tuple[float, ...]
    tau_parts: tuple[tuple[float, ...], ...]
    tau: float
    events: int = 0

    @property
    def coupled(self) -> bool:
        return math.isfinite(self.tau)


@dataclass(frozen=True)
class InternalCoupling:
    varsigma: float
    path1: tuple[tuple[float, int], ...]
    path2: tuple[tuple[float, int], ...]


@dataclass(frozen=True)
class CouplingSchedule:
    """Horizon grid ``h0 * 2**j <= max_horizon`` and the spreading times of retries.

    Attempt ``a`` spreads for ``min(spread0 * 2**a, spread_cap)``; without an
    explicit cap the spreading time stops growing at the torus crossing
    time ``L**2 / rate``, beyond which further spreading gains nothing.
    """

    h0: float = 1.0
    max_horizon: float = 4096.0
    target: float = 0.95
    spread0: float = 1.0
    spread_cap: float | None = None

    def __post_init__(self):
        if not (self.h0 > 0 and self.max_horizon >= self.h0):
            raise ValueError("need 0 < h0 <= max_horizon")
        if not 0 < self.target <= 1:
            raise ValueError("target must lie in (0, 1]")
        if not self.spread0 > 0:
            raise ValueError("spread0 must be > 0")
        if self.spread_cap is not None and not self.spread_cap >= self.spread0:
            raise ValueError("spread_cap must be >= spread0")

    def cap_for(self, model: ModelSpec) -> float:
        if self.spread_cap is not None:
            return self.spread_cap
        rate = model.max_spatial_rate
        return max(self.spread0, model.lattice.L**2 / rate) if rate > 0 else self.spread0

    @property
    def horizons(self) -> tuple[float, ...]:
        out = []
        h = self.h0
        while h <= self.max_horizon * (1 + 1e-12):
            out.append(h)
            h *= 2
        return tuple(out)


@dataclass(frozen=True)
class CouplingReport:
    replicas: int
    horizons: tuple[float, ...]
    fraction: tuple[float, ...]
    se: tuple[float, ...]
    q50: tuple[float, ...]
    q90: tuple[float, ...]
    adaptive_horizon: float
    target: float
    taus: np.ndarray = field(repr=False, compare=False)
    varsigmas: np.ndarray = field(repr=False, compare=False)
    attempts: np.ndarray = field(repr=False, compare=False)

    @property
    def final_fraction(self) -> float:
        return self.fraction[self.horizons.index(self.adaptive_horizon)]

    @property
    def mean_varsigma(self) -> float:
        ok = np.isfinite(self.varsigmas)
        return float(self.varsigmas[ok].mean()) if ok.any() else math.nan

    @property
    def mean_spatial_phase(self) -> float:
        """Mean of ``tau - varsigma`` over replicas where both are finite."""
        ok = np.isfinite(self.taus) & np.isfinite(self.varsigmas)
        return float((self.taus[ok] - self.varsigmas[ok]).mean()) if ok.any() else math.nan

    @classmethod
    def from_times(cls, taus, horizons, target: float, varsigmas=None, attempts=None) -> "CouplingReport":
        taus = np.asarray(taus, dtype=np.float64)
        n = len(taus)
        fr, se, q50, q90 = [], [], [], []
        for h in horizons:
            hit = taus <= h
            f = float(hit.mean()) if n else math.nan
            fr.append(f)
            se.append(math.sqrt(f * (1 - f) / n) if n else math.nan)
            q50.append(float(np.quantile(taus[hit], 0.5)) if hit.any() else math.nan)
            q90.append(float(np.quantile(taus[hit], 0.9)) if hit.any() else math.nan)
        adaptive = horizons[-1]
        for h, f in zip(horizons, fr):
            if f >= target:
                adaptive = h
                break
        fill = np.full(n, math.nan)
        return cls(
            n, tuple(horizons), tuple(fr), tuple(se), tuple(q50), tuple(q90), adaptive, target, taus,
            fill if varsigmas is None else np.asarray(varsigmas, dtype=np.float64),
            np.zeros(n, dtype=np.int64) if attempts is None else np.asarray(attempts, dtype=np.int64),
        )


@dataclass(frozen=True)
class SpreadReport:
    times: tuple[float, ...]
    p_disjoint: tuple[float, ...]
    se: tuple[float, ...]
    replicas: int


# --------------------------------------------------------------------------
# one-particle kinetics and the pair coupler


class _Kinetics:
    """Rates of a lone particle: diffusive jumps, active jumps and layer switches."""

    def __init__(self, model: ModelSpec):
        lat = model.lattice
        kin = model.kinetics
        self.d, self.L, self.m = lat.d, lat.L, lat.num_layers
        self.cells = lat.cells
        scale = kin.kappa if model.kind == 0 else float(model.alpha)
        switch = 1.0 if model.kind == 0 else float(model.alpha)
        self.diff = [[(u, r * scale) for u, r in sorted(table.items()) if r * scale > 0] for table in kin.pi]
        self.act: list[tuple[tuple[int, ...], float] | None] = []
        for sigma in range(self.m):
            v = model.active_velocity(sigma)
            self.act.append(None if v is None else (v, kin.lam))
        self.sw = [[(b, r * switch) for b, r in enumerate(row) if r > 0] for row in kin.c]

    def index(self, x: Sequence[int], layer: int) -> int:
        idx = 0
        for c in x:
            idx = idx * self.L + c
        return layer * self.cells + idx

    def split(self, index: int) -> tuple[list[int], int]:
        layer, rest = divmod(int(index), self.cells)
        x = []
        for _ in range(self.d):
            rest, c = divmod(rest, self.L)
            x.append(c)
        return x[::-1], layer


def _det(mat: list[list[int]]) -> int:
    """Exact integer determinant (Bareiss elimination)."""
    a = [row[:] for row in mat]
    n = len(a)
    sign, prev = 1, 1
    for k in range(n - 1):
        if a[k][k] == 0:
            swap = next((i for i in range(k + 1, n) if a[i][k] != 0), None)
            if swap is None:
                return 0
            a[k], a[swap] = a[swap], a[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) // prev
        prev = a[k][k]
    return sign * a[-1][-1] if n else 1


def unimodular_basis(velocities: Sequence[Sequence[int]], d: int) -> tuple[tuple[int, ...], np.ndarray]:
    """Pick layers whose velocities form a basis of Z^d with determinant +-1.

    Returns ``(layers, inverse)`` where ``inverse`` is the integer inverse of
    the matrix with the chosen velocities as columns.  Raises
    :class:`SpanDeficient` when the velocities generate a proper sublattice
    (index = gcd of the d x d minors != 1) or when no d of them are
    unimodular.
    """
    vel = [tuple(int(a) for a in v) for v in velocities]
    candidates = [i for i, v in enumerate(vel) if any(v)]
    index = 0
    first = None
    for combo in itertools.combinations(candidates, d):
        det = _det([[vel[i][r] for i in combo] for r in range(d)])
        index = math.gcd(index, det)
        if first is None and abs(det) == 1:
            first = combo
    if index != 1:
        what = "a proper sublattice" if index else "a lower-dimensional set"
        raise SpanDeficient(f"velocities {vel} generate {what} of Z^{d} (index {index})")
    if first is None:
        raise SpanDeficient(f"velocities {vel} span Z^{d} but no {d} of them form a unimodular basis")
    B = np.array([[vel[i][r] for i in first] for r in range(d)], dtype=np.int64)
    inv = np.rint(np.linalg.inv(B)).astype(np.int64)
    assert (B @ inv == np.eye(d, dtype=np.int64)).all()
    return first, inv


@dataclass(frozen=True)
class _Rule:
    mode: str  # "ornstein" or "basis"
    basis_layers: tuple[int, ...] = ()
    inverse: np.ndarray | None = None


def _coupling_rule(model: ModelSpec, kin: _Kinetics) -> _Rule:
    d = kin.d
    spatial = {u for layer in kin.diff for u, _ in layer}
    use_basis = model.kind == 0 and (model.kinetics.kappa == 0 or not spatial)
    if not use_basis:
        if any(sum(abs(a) for a in u) != 1 for u in spatial):
            raise CouplingUnsupported("Ornstein coupling needs nearest-neighbour jumps")
        axes = {next(k for k, a in enumerate(u) if a) for u in spatial}
        if len(axes) < d:
            raise SpanDeficient(f"no diffusive jumps along axes {sorted(set(range(d)) - axes)}")
        return _Rule("ornstein")
    vel = model.kinetics.velocity
    if model.kinetics.lam == 0 or vel is None:
        raise SpanDeficient("no diffusion and no active jumps: particles cannot move")
    layers, inv = unimodular_basis(vel, d)
    return _Rule("basis", layers, inv)


def _axis(u) -> int:
    return next(k for k, a in enumerate(u) if a)


class _PairSystem:
    """Several matched particle pairs evolving under the single-particle coupler."""

    def __init__(self, kin: _Kinetics, rule: _Rule, first: Sequence[int], second: Sequence[int], t0: float = 0.0):
        self.kin, self.rule = kin, rule
        n = len(first)
        self.n = n
        self.x = [[None] * n, [None] * n]
        self.l = [[0] * n, [0] * n]
        for i in range(n):
            self.x[0][i], self.l[0][i] = kin.split(first[i])
            self.x[1][i], self.l[1][i] = kin.split(second[i])
        self.t = t0
        self.varsigma = [math.inf] * n
        self.parts = [[math.inf] * kin.d for _ in range(n)]
        self.done = [False] * n
        self.tau = math.inf
        self.events = 0
        self._cache: list[list | None] = [None] * n
        for i in range(n):
            if self.l[0][i] == self.l[1][i]:
                self._meet(i)
        self._check_all()

    # state queries ---------------------------------------------------------
    def sites(self, who: int) -> tuple[int, ...]:
        return tuple(self.kin.index(self.x[who][i], self.l[who][i]) for i in range(self.n))

    def _coords(self, i: int) -> list[int]:
        L = self.kin.L
        diff = [(a - b) % L for a, b in zip(self.x[0][i], self.x[1][i])]
        if self.rule.mode == "ornstein":
            return diff
        return [int(c) % L for c in self.rule.inverse @ np.asarray(diff)]

    def _meet(self, i: int):
        self.varsigma[i] = self.t
        self._sync(i)

    def _sync(self, i: int):
        for k, c in enumerate(self._coords(i)):
            if c == 0 and math.isinf(self.parts[i][k]):
                self.parts[i][k] = self.t
        if all(math.isfinite(p) for p in self.parts[i]):
            self.done[i] = True

    def _check_all(self):
        if math.isinf(self.tau) and all(self.done):
            self.tau = self.t

    # channels --------------------------------------------------------------
    def _pair_channels(self, i: int) -> list[tuple[float, tuple]]:
        kin = self.kin
        out = []
        l1, l2 = self.l[0][i], self.l[1][i]
        if math.isinf(self.varsigma[i]):
            for who, sigma in ((1, l1), (2, l2)):
                for u, r in kin.diff[sigma]:
                    out.append((r, (i, who, 0, u)))
                if kin.act[sigma] is not None:
                    v, lam = kin.act[sigma]
                    out.append((lam, (i, who, 0, v)))
                for b, r in kin.sw[sigma]:
                    out.append((r, (i, who, 1, b)))
            return out
        sigma = l1
        parts = self.parts[i]
        for b, r in kin.sw[sigma]:
            out.append((r, (i, 0, 1, b)))
        if self.rule.mode == "ornstein":
            for u, r in kin.diff[sigma]:
                if math.isfinite(parts[_axis(u)]):
                    out.append((r, (i, 0, 0, u)))
                else:
                    out.append((r, (i, 1, 0, u)))
                    out.append((r, (i, 2, 0, u)))
            if kin.act[sigma] is not None:
                v, lam = kin.act[sigma]
                out.append((lam, (i, 0, 0, v)))
        else:
            for u, r in kin.diff[sigma]:
                out.append((r, (i, 0, 0, u)))
            if kin.act[sigma] is not None:
                v, lam = kin.act[sigma]
                layers = self.rule.basis_layers
                if sigma in layers and math.isinf(parts[layers.index(sigma)]):
                    out.append((lam, (i, 1, 0, v)))
                    out.append((lam, (i, 2, 0, v)))
                else:
                    out.append((lam, (i, 0, 0, v)))
        return out

    def _apply(self, action):
        i, who, kind, payload = action
        L = self.kin.L
        targets = (0, 1) if who == 0 else (who - 1,)
        for c in targets:
            if kind == 0:
                self.x[c][i] = [(a + b) % L for a, b in zip(self.x[c][i], payload)]
            else:
                self.l[c][i] = payload
        self._cache[i] = None
        if math.isinf(self.varsigma[i]):
            if self.l[0][i] == self.l[1][i]:
                self._meet(i)
        elif who != 0 and not self.done[i]:
            self._sync(i)

    def run(self, t_end: float, gen: np.random.Generator, stop_at_tau: bool = True,
            collision: Callable[["_PairSystem"], bool] | None = None,
            observer: Callable | None = None) -> str:
        """Advance to ``t_end``; returns "coupled", "collision" or "horizon"."""
        if math.isfinite(self.tau) and stop_at_tau:
            return "coupled"
        if collision is not None and collision(self):
            return "collision"
        while True:
            rates: list[float] = []
            actions: list[tuple] = []
            for i in range(self.n):
                if self._cache[i] is None:
                    self._cache[i] = self._pair_channels(i)
                for r, a in self._cache[i]:
                    rates.append(r)
                    actions.append(a)
            cum = list(itertools.accumulate(rates))
            total = cum[-1] if cum else 0.0
            if total <= 0:
                self.t = t_end
                return "horizon"
            dt = -math.log1p(-gen.random()) / total
            if self.t + dt > t_end:
                self.t = t_end
                return "horizon"
            self.t += dt
            j = min(bisect.bisect_right(cum, gen.random() * total), len(cum) - 1)
            self._apply(actions[j])
            self.events += 1
            self._check_all()
            if observer is not None:
                observer(self.t, self.sites(0), self.sites(1))
            if math.isfinite(self.tau) and stop_at_tau:
                return "coupled"
            if collision is not None and collision(self):
                return "collision"

    def result(self) -> CoupledPair:
        return CoupledPair(self.sites(0), self.sites(1), self.t, tuple(self.varsigma),
                           tuple(tuple(p) for p in self.parts), self.tau, self.events)


class _Context:
    """Per-model data shared by every replica of an experiment."""

    def __init__(self, model: ModelSpec, need_rule: bool = True):
        self.model = model
        self.kin = _Kinetics(model)
        self.rule = _coupling_rule(model, self.kin) if need_rule else None
        table = model.rates
        rows = np.repeat(np.arange(table.size), np.diff(table.ptr))
        self.adjacent = set(zip(rows.tolist(), table.idx.tolist()))

    def collides(self, sites: Sequence[int]) -> bool:
        for a, b in itertools.combinations(sites, 2):
            if a == b or (a, b) in self.adjacent or (b, a) in self.adjacent:
                return True
        return False


def _gen(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    return np.random.default_rng(rng)


def _index(model: ModelSpec, v) -> int:
    return model.lattice.index(v) if isinstance(v, Site) else int(v)


# --------------------------------------------------------------------------
# single-replica couplings


def couple_internal(model: ModelSpec, sigma1: int, sigma2: int, horizon: float, rng) -> InternalCoupling:
    """Run two layer chains independently until they meet, mirrored afterwards."""
    kin = _Kinetics(model)
    gen = _gen(rng)
    t = 0.0
    a, b = int(sigma1), int(sigma2)
    varsigma = 0.0 if a == b else math.inf
    p1, p2 = [(0.0, a)], [(0.0, b)]
    while True:
        if math.isfinite(varsigma):
            chans = [(r, 0, s) for s, r in kin.sw[a]]
        else:
            chans = [(r, 1, s) for s, r in kin.sw[a]] + [(r, 2, s) for s, r in kin.sw[b]]
        cum = list(itertools.accumulate(r for r, _, _ in chans))
        if not cum or cum[-1] <= 0:
            break
        dt = -math.log1p(-gen.random()) / cum[-1]
        if t + dt > horizon:
            break
        t += dt
        _, who, s = chans[min(bisect.bisect_right(cum, gen.random() * cum[-1]), len(cum) - 1)]
        if who in (0, 1):
            a = s
            p1.append((t, a))
        if who in (0, 2):
            b = s
            p2.append((t, b))
        if math.isinf(varsigma) and a == b:
            varsigma = t
    return InternalCoupling(varsigma, tuple(p1), tuple(p2))


def _run_pairs(ctx: _Context, first, second, horizon, gen, stop_at_tau, observer) -> CoupledPair:
    system = _PairSystem(ctx.kin, ctx.rule, first, second)
    system.run(horizon, gen, stop_at_tau=stop_at_tau, observer=observer)
    return system.result()


def couple_irw_pair(model: ModelSpec, start1, start2, horizon: float, rng, stop_at_tau: bool = True,
                    observer: Callable | None = None, context: _Context | None = None) -> CoupledPair:
    """Layer coupling followed by the per-axis Ornstein coupling of two lone particles.

    A lone particle of any of the three models moves at rates ``alpha * p``
    (``p`` for independent particles).  Active jumps, if present, are shared
    once the layers agree; use :func:`couple_rtp` for models without
    diffusion.
    """
    ctx = context or _Context(model)
    if ctx.rule.mode != "ornstein":
        raise CouplingUnsupported("model has no diffusive part; use couple_rtp")
    return _run_pairs(ctx, [_index(model, start1)], [_index(model, start2)], horizon, _gen(rng),
                      stop_at_tau, observer)


def couple_rtp(model: ModelSpec, start1, start2, horizon: float, rng, stop_at_tau: bool = True,
               observer: Callable | None = None, context: _Context | None = None) -> CoupledPair:
    """Couple two run-and-tumble particles.

    With diffusion (kappa > 0) active jumps are shared after the layers meet
    and the diffusive jumps are Ornstein-coupled.  Without diffusion the
    difference is tracked in a unimodular velocity basis; coefficient ``k``
    moves only while the common layer is the k-th basis layer.
    """
    if model.kind != 0:
        raise ValueError("run-and-tumble coupling needs an independent-particle model (s=0)")
    ctx = context or _Context(model)
    return _run_pairs(ctx, [_index(model, start1)], [_index(model, start2)], horizon, _gen(rng),
                      stop_at_tau, observer)


def _particles(model: ModelSpec, x) -> list[int]:
    if isinstance(x, Configuration):
        return [int(v) for v in x.particles()]
    if hasattr(x, "particles"):
        return [int(v) for v in x.particles]
    return [_index(model, v) for v in x]


def couple_irw_configs(model: ModelSpec, xi1, xi2, horizon: float, rng, stop_at_tau: bool = True,
                       observer: Callable | None = None, context: _Context | None = None) -> CoupledPair:
    """Couple two finite configurations of independent particles pair by pair.

    The i-th particle of ``xi1`` is matched to the i-th particle of
    ``xi2``; configurations are taken as labeled lists, or in increasing
    site order for a :class:`Configuration`.
    """
    first, second = _particles(model, xi1), _particles(model, xi2)
    if len(first) != len(second):
        raise ValueError(f"particle counts differ: {len(first)} vs {len(second)}")
    ctx = context or _Context(model)
    return _run_pairs(ctx, first, second, horizon, _gen(rng), stop_at_tau, observer)


def _same_occupancy(a: Sequence[int], b: Sequence[int]) -> bool:
    return sorted(a) == sorted(b)


def _rematch(ctx: _Context, first: Sequence[int], second: Sequence[int]) -> list[int]:
    """Permutation of ``second`` minimising the summed squared torus distances."""
    n = len(first)
    if n > 6:
        return list(range(n))
    lat = ctx.model.lattice
    x1 = [ctx.kin.split(v)[0] for v in first]
    x2 = [ctx.kin.split(v)[0] for v in second]
    cost = [[sum(c * c for c in lat.min_image([a - b for a, b in zip(p, q)])) for q in x2] for p in x1]
    best, best_perm = None, None
    for perm in itertools.permutations(range(n)):
        c = sum(cost[i][perm[i]] for i in range(n))
        if best is None or c < best:
            best, best_perm = c, perm
    return list(best_perm)


def _evolve(model: ModelSpec, sites: Sequence[int], span: float, gen: np.random.Generator) -> list[int]:
    if span <= 0 or not len(sites):
        return list(sites)
    out, _ = evolve_block(model, [0, len(sites)], np.asarray(sites, dtype=np.int64), [span], gen.bit_generator)
    return out[0].tolist()


@dataclass(frozen=True)
class _Outcome:
    first: tuple[int, ...]
    second: tuple[int, ...]
    tau: float
    attempts: int = 0
    varsigma: float = math.nan


def _finish(model, first, second, t, tau, horizon, gen, stop_at_tau) -> tuple[list[int], list[int]]:
    """After coupling, run the merged copy to the horizon when asked to."""
    if math.isfinite(tau) and not stop_at_tau:
        first = _evolve(model, first, horizon - tau, gen)
        second = list(first)
    return first, second


def couple_sip_once(model: ModelSpec, x1, x2, horizon: float, rng, spread0: float = 1.0,
                    spread_cap: float = math.inf, stop_at_tau: bool = True,
                    context: _Context | None = None) -> _Outcome:
    """Spread-and-retry coupling of two finite configurations (one replica).

    Attempt ``a`` first evolves both copies independently with the true
    dynamics for ``min(spread0 * 2**a, spread_cap)``, rematches particles to nearby partners
    and then runs the independent-walker coupler until every pair has
    merged (success) or two particles of one copy sit on the same or
    neighbouring sites (collision, next attempt).  Before a collision the
    interacting and independent dynamics coincide, so each copy keeps its
    law.
    """
    ctx = context or _Context(model)
    gen = _gen(rng)
    first, second = _particles(model, x1), _particles(model, x2)
    n = len(first)
    if n != len(second):
        raise ValueError(f"particle counts differ: {n} vs {len(second)}")
    if n == 1:
        pair = _run_pairs(ctx, first, second, horizon, gen, stop_at_tau, None)
        varsigma = pair.varsigma[0]
        return _Outcome(pair.first, pair.second, pair.tau, 0, varsigma)
    t = 0.0
    attempts = 0
    tau = 0.0 if _same_occupancy(first, second) else math.inf
    while math.isinf(tau) and t < horizon:
        span = min(spread0 * 2.0**attempts, spread_cap, horizon - t)
        first = _evolve(model, first, span, gen)
        second = _evolve(model, second, span, gen)
        t += span
        if _same_occupancy(first, second):
            tau = t
            break
        if t >= horizon:
            break
        attempts += 1
        perm = _rematch(ctx, first, second)
        second = [second[p] for p in perm]
        system = _PairSystem(ctx.kin, ctx.rule, first, second, t0=t)
        status = system.run(horizon, gen, stop_at_tau=True,
                            collision=lambda s: ctx.collides(s.sites(0)) or ctx.collides(s.sites(1)))
        first, second = list(system.sites(0)), list(system.sites(1))
        t = system.t
        if status == "coupled":
            tau = t
    first, second = _finish(model, first, second, t, tau, horizon, gen, stop_at_tau)
    return _Outcome(tuple(first), tuple(second), tau, attempts)


def _lift(occ: np.ndarray, alpha: int) -> tuple[list[int], dict[int, int]]:
    pos, lab = [], {}
    for v in np.flatnonzero(occ):
        for j in range(int(occ[v])):
            a = int(v) * alpha + j
            lab[a] = len(pos)
            pos.append(a)
    return pos, lab


def _ladder_once(ctx: _Context, occ1: np.ndarray, occ2: np.ndarray, horizon: float,
                 gen: np.random.Generator, stop_at_tau: bool, observer: Callable | None) -> _Outcome:
    model = ctx.model
    alpha = int(model.alpha)
    table = model.rates
    nbrs = [list(zip(*table.neighbours(v))) for v in range(table.size)]
    pos = [None, None]
    lab = [None, None]
    pos[0], lab[0] = _lift(occ1, alpha)
    pos[1], lab[1] = _lift(occ2, alpha)
    cnt = [list(map(int, occ1)), list(map(int, occ2))]
    t = 0.0
    tau = 0.0 if cnt[0] == cnt[1] else math.inf

    def swap(c, a, b):
        la, lb = lab[c].pop(a, None), lab[c].pop(b, None)
        if la is not None:
            lab[c][b] = la
            pos[c][la] = b
        if lb is not None:
            lab[c][a] = lb
            pos[c][lb] = a
        if (la is None) != (lb is None):
            src, dst = (a, b) if la is not None else (b, a)
            cnt[c][src // alpha] -= 1
            cnt[c][dst // alpha] += 1

    while not (stop_at_tau and math.isfinite(tau)):
        bonds: dict[tuple[int, int], float] = {}
        for a in set(lab[0]) | set(lab[1]):
            for w, p in nbrs[a // alpha]:
                for k in range(alpha):
                    b = int(w) * alpha + k
                    bonds[(a, b) if a < b else (b, a)] = p
        special = set()
        for i in range(len(pos[0])):
            a, b = pos[0][i], pos[1][i]
            if a != b:
                special.add((a, b) if a < b else (b, a))
        rates, acts = [], []
        for key, p in bonds.items():
            if key in special:
                rates += [p, p]
                acts += [(key, 1), (key, 2)]
            else:
                rates.append(p)
                acts.append((key, 0))
        cum = list(itertools.accumulate(rates))
        if not cum:
            break
        total = cum[-1]
        dt = -math.log1p(-gen.random()) / total
        if t + dt > horizon:
            break
        t += dt
        (a, b), who = acts[min(bisect.bisect_right(cum, gen.random() * total), len(cum) - 1)]
        if who in (0, 1):
            swap(0, a, b)
        if who in (0, 2):
            swap(1, a, b)
        if math.isinf(tau) and cnt[0] == cnt[1]:
            tau = t
            if not stop_at_tau:
                # merge: copy 2 follows copy 1 from now on
                pos[1], lab[1], cnt[1] = list(pos[0]), dict(lab[0]), list(cnt[0])
        if observer is not None:
            observer(t, tuple(cnt[0]), tuple(cnt[1]))
    return _Outcome(tuple(cnt[0]), tuple(cnt[1]), tau)


def couple_sep_once(model: ModelSpec, x1, x2, horizon: float, rng, route: str = "auto",
                    spread0: float = 1.0, spread_cap: float = math.inf, stop_at_tau: bool = True,
                    observer: Callable | None = None, context: _Context | None = None) -> _Outcome:
    """Couple two exclusion configurations (one replica).

    ``route="ladder"`` (default for d <= 2) lifts both to the ladder and
    runs coupled stirring; the outcome holds occupation vectors.
    ``route="transient"`` (default for d >= 3) uses spread-and-retry with
    collision detection; the outcome holds particle sites.  A single
    particle is coupled exactly like a lone random walker.
    """
    if model.kind != -1:
        raise ValueError("exclusion coupling needs s=-1")
    ctx = context or _Context(model)
    gen = _gen(rng)
    occ1 = x1.occupancy if isinstance(x1, Configuration) else Configuration.from_particles(
        _particles(model, x1), model.num_sites).occupancy
    occ2 = x2.occupancy if isinstance(x2, Configuration) else Configuration.from_particles(
        _particles(model, x2), model.num_sites).occupancy
    for occ in (occ1, occ2):
        if len(occ) != model.num_sites or (occ > model.alpha).any():
            raise ValueError("configuration does not fit the exclusion model")
    if occ1.sum() != occ2.sum():
        raise ValueError(f"particle counts differ: {occ1.sum()} vs {occ2.sum()}")
    if route == "auto":
        route = "ladder" if model.lattice.d <= 2 else "transient"
    if occ1.sum() == 1:
        pair = _run_pairs(ctx, [int(np.flatnonzero(occ1)[0])], [int(np.flatnonzero(occ2)[0])], horizon,
                          gen, stop_at_tau, observer)
        return _Outcome(pair.first, pair.second, pair.tau, 0, pair.varsigma[0])
    if route == "ladder":
        return _ladder_once(ctx, occ1, occ2, horizon, gen, stop_at_tau, observer)
    if route == "transient":
        return couple_sip_once(model, Configuration(occ1), Configuration(occ2), horizon, gen, spread0,
                               spread_cap, stop_at_tau, ctx)
    raise ValueError(f"unknown route {route!r}")


# --------------------------------------------------------------------------
# experiments over many replicas


def _experiment(once: Callable[[np.random.Generator, float], _Outcome], replicas: int, rng,
                schedule: CouplingSchedule, workers: int) -> CouplingReport:
    rng = rng if isinstance(rng, RngStream) else RngStream(int(rng))

    def block(b, n, bitgen):
        gen = np.random.Generator(bitgen)
        rows = []
        for _ in range(n):
            out = once(gen, schedule.max_horizon)
            rows.append((out.tau, out.varsigma, out.attempts))
        return rows

    rows = [r for part in map_blocks(block, replicas, rng, workers, COUPLING_BLOCK) for r in part]
    taus = np.array([r[0] for r in rows], dtype=np.float64)
    return CouplingReport.from_times(taus, schedule.horizons, schedule.target,
                                     [r[1] for r in rows], [r[2] for r in rows])


def couple_sep(model: ModelSpec, x1, x2, replicas: int, rng, schedule: CouplingSchedule | None = None,
               workers: int = 1, route: str = "auto") -> CouplingReport:
    schedule = schedule or CouplingSchedule()
    ctx = _Context(model)
    cap = schedule.cap_for(model)
    return _experiment(lambda g, h: couple_sep_once(model, x1, x2, h, g, route, schedule.spread0, cap, context=ctx),
                       replicas, rng, schedule, workers)


def couple_sip(model: ModelSpec, x1, x2, replicas: int, rng, schedule: CouplingSchedule | None = None,
               workers: int = 1) -> CouplingReport:
    if model.kind != 1:
        raise ValueError("inclusion coupling needs s=+1")
    schedule = schedule or CouplingSchedule()
    ctx = _Context(model)
    cap = schedule.cap_for(model)
    return _experiment(lambda g, h: couple_sip_once(model, x1, x2, h, g, schedule.spread0, cap, context=ctx),
                       replicas, rng, schedule, workers)


def coupling_experiment(model: ModelSpec, x1, x2, replicas: int, rng,
                        schedule: CouplingSchedule | None = None, workers: int = 1,
                        route: str = "auto") -> CouplingReport:
    """Coupling-time distribution for the construction matching the model.

    ``route`` selects the exclusion construction and is ignored otherwise.
    """
    if model.kind == -1:
        return couple_sep(model, x1, x2, replicas, rng, schedule, workers, route)
    if model.kind == 1:
        return couple_sip(model, x1, x2, replicas, rng, schedule, workers)
    schedule = schedule or CouplingSchedule()
    ctx = _Context(model)

    def once(gen, h):
        pair = couple_irw_configs(model, x1, x2, h, gen, context=ctx)
        return _Outcome(pair.first, pair.second, pair.tau, 0, max(pair.varsigma, default=0.0))

    return _experiment(once, replicas, rng, schedule, workers)


# --------------------------------------------------------------------------
# spread-out estimator


def _check_window(model: ModelSpec, times) -> None:
    need = 4 * model.max_jump_range * model.max_spatial_rate * max(times, default=0.0)
    if model.lattice.L < need:
        raise HorizonTooLong(
            f"L={model.lattice.L} is below 4 * range * rate * max(t) = {need:g}; enlarge the torus or shorten t"
        )


def spread_estimator(model: ModelSpec, xi, xi_prime, times, replicas: int, rng, workers: int = 1,
                     block_size: int = BLOCK_SIZE, backend: str | None = None) -> SpreadReport:
    """Probability that the dual configuration started at ``xi`` avoids ``supp(xi_prime)``."""
    times = [float(t) for t in times]
    if any(t < 0 for t in times) or any(b < a for a, b in zip(times, times[1:])):
        raise ValueError("times must be nonnegative and nondecreasing")
    _check_window(model, times)
    rng = rng if isinstance(rng, RngStream) else RngStream(int(rng))
    particles = np.asarray(_particles(model, xi), dtype=np.int64)
    avoid = np.zeros(model.num_sites, dtype=bool)
    avoid[_particles(model, xi_prime)] = True
    n = len(particles)
    if n == 0 or not avoid.any():
        ones = tuple(1.0 for _ in times)
        return SpreadReport(tuple(times), ones, tuple(0.0 for _ in times), replicas)
    dual = model.dual()

    def block(b, reps, bitgen):
        rep_ptr = np.arange(reps + 1, dtype=np.int64) * n
        out, _ = evolve_block(dual, rep_ptr, np.tile(particles, reps), times, bitgen, backend=backend)
        hit = avoid[out].reshape(len(times), reps, n).any(axis=2)
        return (~hit).sum(axis=1)

    counts = np.sum(map_blocks(block, replicas, rng, workers, block_size), axis=0)
    p = counts / replicas
    se = np.sqrt(p * (1 - p) / replicas)
    return SpreadReport(tuple(times), tuple(p.tolist()), tuple(se.tolist()), replicas)


def spread_oracle(model: ModelSpec, start, avoid, times) -> list[float]:
    """Exact avoidance probability for a single dual particle, from the kernel."""
    v = _index(model, start)
    cols = _particles(model, avoid)
    return [1.0 - float(single_particle_kernel(model, t, reversed=True)[v, cols].sum()) for t in times]
