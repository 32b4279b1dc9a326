"""Brute-force verification on small state spaces.

Every identity here is checked by enumerating a finite state space and
building the generator matrix explicitly: generator-level duality,
stationarity of the binomial product measure, constancy of the D-transform
on particle-number sectors, and the ladder projection for exclusion.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .duality import site_weights
from .measures import ProductMeasure, exact_dtransform_site, site_pmf, theta
from .models import ModelSpec, RateTable

__all__ = [
    "CapExceeded",
    "SectorSpace",
    "GeneratorMatrix",
    "build_generator",
    "duality_matrix",
    "exact_generator_duality_residual",
    "exact_stationarity_residual",
    "exact_dtransform_constancy",
    "ladder_projection",
    "ladder_lift",
    "exact_ladder_consistency",
    "DEFAULT_CAP",
]

DEFAULT_CAP = 200_000


class CapExceeded(ValueError):
    """The requested state space is larger than the configured cap."""


@dataclass(frozen=True, eq=False)
class SectorSpace:
    """An enumerated set of occupancy vectors with a two-way index."""

    states: np.ndarray  # (size, n_sites)

    def __post_init__(self):
        object.__setattr__(self, "_index", {s.tobytes(): i for i, s in enumerate(self.states)})

    @property
    def size(self) -> int:
        return len(self.states)

    @property
    def n_sites(self) -> int:
        return self.states.shape[1]

    def index(self, occ) -> int:
        return self._index[np.asarray(occ, dtype=np.int64).tobytes()]

    def __contains__(self, occ) -> bool:
        return np.asarray(occ, dtype=np.int64).tobytes() in self._index

    @classmethod
    def sector(cls, n_sites: int, n: int, capacity: int | None = None,
               cap: int = DEFAULT_CAP) -> "SectorSpace":
        """All configurations of ``n`` particles, at most ``capacity`` per site."""
        if math.comb(n_sites + n - 1, n) > cap:
            raise CapExceeded(f"sector with {n} particles on {n_sites} sites exceeds cap {cap}")
        rows = []
        for combo in itertools.combinations_with_replacement(range(n_sites), n):
            occ = np.bincount(np.asarray(combo, dtype=np.int64), minlength=n_sites)
            if capacity is None or occ.max(initial=0) <= capacity:
                rows.append(occ)
        states = np.array(rows, dtype=np.int64).reshape(len(rows), n_sites)
        return cls(states)

    @classmethod
    def full(cls, n_sites: int, capacity: int, cap: int = DEFAULT_CAP) -> "SectorSpace":
        """Every configuration in ``{0..capacity}^sites``."""
        if (capacity + 1) ** n_sites > cap:
            raise CapExceeded(f"{(capacity + 1) ** n_sites} states exceed cap {cap}")
        states = np.array(list(itertools.product(range(capacity + 1), repeat=n_sites)), dtype=np.int64)
        return cls(states.reshape(-1, n_sites))

    @classmethod
    def for_model(cls, model: ModelSpec, n: int, cap: int = DEFAULT_CAP) -> "SectorSpace":
        capacity = int(model.alpha) if model.kind == -1 else None
        return cls.sector(model.num_sites, n, capacity, cap)


@dataclass(frozen=True, eq=False)
class GeneratorMatrix:
    space: SectorSpace
    Q: sparse.csr_matrix

    def dense(self) -> np.ndarray:
        return self.Q.toarray()

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.Q.sum(axis=1)).ravel()


def _generator(space: SectorSpace, table: RateTable, s: int, alpha: float,
               target_space: SectorSpace | None = None) -> sparse.csr_matrix:
    target_space = target_space or space
    rows, cols, vals = [], [], []
    for i, occ in enumerate(space.states):
        out_total = 0.0
        for v in np.flatnonzero(occ):
            nb, rates = table.neighbours(v)
            for w, p in zip(nb, rates):
                r = p * occ[v] * (alpha + s * occ[w])
                if r <= 0:
                    continue
                nxt = occ.copy()
                nxt[v] -= 1
                nxt[w] += 1
                rows.append(i)
                cols.append(target_space.index(nxt))
                vals.append(r)
                out_total += r
        rows.append(i)
        cols.append(i)
        vals.append(-out_total)
    n = space.size
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n, target_space.size))


def build_generator(model: ModelSpec, space: SectorSpace, reversed: bool = False,
                    table: RateTable | None = None, cap: int = DEFAULT_CAP) -> GeneratorMatrix:
    """Rate matrix of the occupancy process on ``space`` (closed under the dynamics)."""
    if space.size > cap:
        raise CapExceeded(f"{space.size} states exceed cap {cap}")
    table = table if table is not None else model.rate_table(reversed)
    return GeneratorMatrix(space, _generator(space, table, model.kind, model.alpha))


def duality_matrix(model: ModelSpec, dual: SectorSpace, forward: SectorSpace) -> np.ndarray:
    """``D[i, j] = D_s(dual_i, forward_j)``."""
    out = np.ones((dual.size, forward.size))
    for v in range(dual.n_sites):
        col = dual.states[:, v]
        for k in np.unique(col[col > 0]):
            out[col == k, :] *= site_weights(model.kind, model.alpha, int(k), forward.states[:, v])[None, :]
    return out


def exact_generator_duality_residual(model: ModelSpec, n: int, forward_sectors=None,
                                     forward_table: RateTable | None = None,
                                     cap: int = DEFAULT_CAP) -> float:
    """``max |L_dual D(., eta)(xi) - L D(xi, .)(eta)|`` over all enumerated pairs.

    The dual sector holds ``n`` particles; the forward side runs over the
    sectors listed in ``forward_sectors`` (default ``0..n+2``).
    ``forward_table`` replaces the forward rates (negative controls).
    """
    capacity = int(model.alpha) if model.kind == -1 else None
    if forward_sectors is None:
        top = n + 2
        if capacity is not None:
            top = min(top, capacity * model.num_sites)
        forward_sectors = range(top + 1)
    dual_space = SectorSpace.for_model(model, n, cap)
    q_dual = build_generator(model.dual(), dual_space, cap=cap).dense()
    worst = 0.0
    for m in forward_sectors:
        fwd = SectorSpace.for_model(model, m, cap)
        q_fwd = build_generator(model, fwd, table=forward_table, cap=cap).dense()
        D = duality_matrix(model, dual_space, fwd)
        worst = max(worst, float(np.abs(q_dual @ D - D @ q_fwd.T).max(initial=0.0)))
    return worst


def product_weights(measure: ProductMeasure, space: SectorSpace) -> np.ndarray:
    """Product-measure probability of every state of ``space``."""
    top = int(space.states.max(initial=0))
    pmf = np.array([site_pmf(measure, k) for k in range(top + 1)])
    return pmf[space.states].prod(axis=1)


def exact_stationarity_residual(model: ModelSpec, measure: ProductMeasure, cap: int = DEFAULT_CAP) -> float:
    """``max_eta' |sum_eta mu(eta) Q(eta, eta')|`` on the full exclusion state space."""
    if model.kind != -1:
        raise ValueError("stationarity is checked on the full space of exclusion models only")
    if measure.kind != -1 or measure.alpha != model.alpha:
        raise ValueError("measure does not match the model")
    space = SectorSpace.full(model.num_sites, int(model.alpha), cap)
    Q = build_generator(model, space, cap=cap).Q
    mu = product_weights(measure, space)
    return float(np.abs(Q.T @ mu).max())


def exact_dtransform_constancy(model: ModelSpec, n: int, measure: ProductMeasure,
                               cap: int = DEFAULT_CAP) -> float:
    """``max_{xi in sector n} |mu_hat(xi) - theta^n|``.

    For exclusion ``mu_hat`` is summed over the whole state space when it
    fits under ``cap``; otherwise (and for the unbounded models) it is the
    product of truncated single-site sums.
    """
    if measure.kind != model.kind or (model.kind != 0 and measure.alpha != model.alpha):
        raise ValueError("measure does not match the model")
    dual = SectorSpace.for_model(model, n, cap)
    target = theta(measure) ** n
    if model.kind == -1 and (int(model.alpha) + 1) ** model.num_sites <= cap:
        full = SectorSpace.full(model.num_sites, int(model.alpha), cap)
        mu_hat = duality_matrix(model, dual, full) @ product_weights(measure, full)
    else:
        site_vals = {}
        mu_hat = np.ones(dual.size)
        for i, xi in enumerate(dual.states):
            for k in xi[xi > 0]:
                k = int(k)
                if k not in site_vals:
                    site_vals[k] = exact_dtransform_site(measure, k)
                mu_hat[i] *= site_vals[k]
    return float(np.abs(mu_hat - target).max(initial=0.0))


def ladder_projection(eta_prime, alpha: int) -> np.ndarray:
    """Sum the rungs: ``eta(v) = sum_j eta'(v, j)``; ladder site ``(v, j)`` is index ``v*alpha + j``."""
    eta_prime = np.asarray(eta_prime)
    return eta_prime.reshape(eta_prime.shape[:-1] + (-1, alpha)).sum(axis=-1)


def ladder_lift(eta, alpha: int) -> np.ndarray:
    """Canonical lift filling the lowest rungs of every ladder."""
    eta = np.asarray(eta)
    rungs = np.arange(alpha)
    return (rungs[None, :] < eta[:, None]).astype(np.int64).ravel()


def _ladder_generator(model: ModelSpec, space: SectorSpace) -> sparse.csr_matrix:
    alpha = int(model.alpha)
    table = model.rates
    rows, cols, vals = [], [], []
    for i, state in enumerate(space.states):
        total = 0.0
        for a in np.flatnonzero(state):
            v, j = divmod(int(a), alpha)
            nb, rates = table.neighbours(v)
            for w, p in zip(nb, rates):
                for k in range(alpha):
                    b = int(w) * alpha + k
                    if state[b]:
                        continue
                    nxt = state.copy()
                    nxt[a] = 0
                    nxt[b] = 1
                    rows.append(i)
                    cols.append(space.index(nxt))
                    vals.append(p)
                    total += p
        rows.append(i)
        cols.append(i)
        vals.append(-total)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(space.size, space.size))


def exact_ladder_consistency(model: ModelSpec, cap: int = DEFAULT_CAP) -> float:
    """``max |L' (g o proj) - (L g) o proj|`` over all ladder states and observables ``g``.

    The ladder process is capacity-one exclusion on sites ``(v, j)`` where a
    particle at ``(v, j)`` jumps to each empty rung of ``w`` at rate
    ``p(v, w)``.  Taking ``g`` over the indicator basis reduces the check to
    ``Q' P = P Q`` with ``P`` the projection matrix.
    """
    if model.kind != -1:
        raise ValueError("the ladder construction is for exclusion models")
    alpha = int(model.alpha)
    n_ladder = model.num_sites * alpha
    ladder = SectorSpace.full(n_ladder, 1, cap)
    base = SectorSpace.full(model.num_sites, alpha, cap)
    q_ladder = _ladder_generator(model, ladder)
    q_base = build_generator(model, base, cap=cap).Q
    proj = ladder_projection(ladder.states, alpha)
    P = sparse.csr_matrix(
        (np.ones(ladder.size), (np.arange(ladder.size), [base.index(p) for p in proj])),
        shape=(ladder.size, base.size),
    )
    diff = (q_ladder @ P - P @ q_base).toarray()
    return float(np.abs(diff).max(initial=0.0))
