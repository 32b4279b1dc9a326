"""Duality polynomials and Monte-Carlo checks of the duality relation.

Single-site weights::

    d_{-1}(k, n) = n!/(n-k)! * (alpha-k)!/alpha!        (exclusion)
    d_{+1}(k, n) = n!/(n-k)! * Gamma(alpha)/Gamma(alpha+k)  (inclusion)
    d_0(k, n)    = n!/(n-k)!                             (independent)

all vanishing for ``k > n``.  They are evaluated as running products
``prod_{m<k} (n-m)/(alpha-m)`` etc., never through large factorials.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import (
    BLOCK_SIZE,
    Configuration,
    DualConfiguration,
    RngStream,
    evolve_block,
    map_blocks,
    single_particle_kernel,
)
from .models import ModelSpec
from .stats import Moments, merge_all, z_score

__all__ = [
    "DualityReport",
    "single_site_weight",
    "site_weights",
    "as_dual",
    "duality_value",
    "forward_duality_values",
    "dual_duality_values",
    "mc_duality_check",
    "mc_deterministic_duality_check",
]

Z_THRESHOLD = 4.0


@dataclass(frozen=True)
class DualityReport:
    lhs_mean: float
    rhs_mean: float
    lhs_se: float
    rhs_se: float
    z: float
    replicas: int

    def passed(self, threshold: float = Z_THRESHOLD) -> bool:
        return self.z <= threshold

    @classmethod
    def from_moments(cls, lhs: Moments, rhs: Moments | float, replicas: int) -> "DualityReport":
        if isinstance(rhs, Moments):
            rm, rs = float(rhs.mean), float(rhs.se)
        else:
            rm, rs = float(rhs), 0.0
        lm, ls = float(lhs.mean), float(lhs.se)
        return cls(lm, rm, ls, rs, z_score(lm, ls, rm, rs), replicas)


def _factor(s: int, alpha: float, m, n):
    if s == -1:
        return (n - m) / (alpha - m)
    if s == 1:
        return (n - m) / (alpha + m)
    return n - m


def single_site_weight(s: int, alpha: float, k: int, n: int) -> float:
    if k < 0 or n < 0:
        raise ValueError("k and n must be >= 0")
    if s == -1 and k > alpha:
        raise ValueError(f"exclusion weight needs k <= alpha, got k={k}, alpha={alpha}")
    if k > n:
        return 0.0
    out = 1.0
    for m in range(k):
        out *= _factor(s, alpha, m, n)
    return float(out)


def site_weights(s: int, alpha: float, k: int, n) -> np.ndarray:
    """``d_s(k, n)`` for an array of occupations ``n``."""
    n = np.asarray(n, dtype=np.float64)
    if s == -1 and k > alpha:
        raise ValueError(f"exclusion weight needs k <= alpha, got k={k}, alpha={alpha}")
    out = np.ones_like(n)
    for m in range(k):
        out = out * _factor(s, alpha, m, n)
    return np.where(n >= k, out, 0.0)


def _counts(xi, model: ModelSpec | None = None) -> dict[int, int]:
    if isinstance(xi, DualConfiguration):
        return xi.counts()
    if isinstance(xi, Configuration):
        occ = xi.occupancy
        return {int(v): int(occ[v]) for v in np.flatnonzero(occ)}
    if isinstance(xi, dict):
        return {int(v): int(k) for v, k in xi.items() if k}
    occ = np.asarray(xi)
    return {int(v): int(occ[v]) for v in np.flatnonzero(occ)}


def as_dual(xi) -> DualConfiguration:
    """Labeled particle list from a configuration, count dict or occupancy."""
    if isinstance(xi, DualConfiguration):
        return xi
    return DualConfiguration(tuple(v for v, k in sorted(_counts(xi).items()) for _ in range(k)))


def _occupancy(eta) -> np.ndarray:
    return eta.occupancy if isinstance(eta, Configuration) else np.asarray(eta)


def duality_value(model: ModelSpec, xi, eta) -> float:
    """``D_s(xi, eta) = prod_v d_s(xi_v, eta_v)`` over the support of ``xi``."""
    occ = _occupancy(eta)
    out = 1.0
    for v, k in sorted(_counts(xi).items()):
        out *= single_site_weight(model.kind, model.alpha, k, int(occ[v]))
    return out


def forward_duality_values(model: ModelSpec, xi, positions: np.ndarray, rep_ptr: np.ndarray) -> np.ndarray:
    """``D(xi, eta_r)`` for ragged replicas ``eta_r`` given as particle positions."""
    n_rep = len(rep_ptr) - 1
    rid = np.repeat(np.arange(n_rep), np.diff(rep_ptr))
    out = np.ones(n_rep)
    for v, k in sorted(_counts(xi).items()):
        occ_v = np.bincount(rid[positions == v], minlength=n_rep)
        out *= site_weights(model.kind, model.alpha, k, occ_v)
    return out


def dual_duality_values(model: ModelSpec, positions: np.ndarray, eta) -> np.ndarray:
    """``D(xi_r, eta)`` for dual replicas given as an ``(R, n)`` array of positions."""
    occ = _occupancy(eta).astype(np.float64)
    pos = np.sort(np.asarray(positions), axis=1)
    n_rep, n = pos.shape
    out = np.ones(n_rep)
    for j in range(n):
        m = np.zeros(n_rep)
        for i in range(j):
            m += pos[:, i] == pos[:, j]
        out *= _factor(model.kind, model.alpha, m, occ[pos[:, j]])
    return out


def _fixed_block(particles: np.ndarray, n_rep: int) -> tuple[np.ndarray, np.ndarray]:
    n = len(particles)
    return np.arange(n_rep + 1, dtype=np.int64) * n, np.tile(particles, n_rep)


def mc_duality_check(model: ModelSpec, xi, eta, t: float, replicas: int, rng: RngStream | int,
                     workers: int = 1, block_size: int = BLOCK_SIZE,
                     backend: str | None = None) -> DualityReport:
    """Estimate both sides of ``E_eta D(xi, eta(t)) = E_xi D(xi(t), eta)``."""
    rng = rng if isinstance(rng, RngStream) else RngStream(int(rng))
    xi = as_dual(xi)
    eta = eta if isinstance(eta, Configuration) else Configuration(np.asarray(eta))
    xi.validate(model)
    eta.validate(model)
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0 or len(xi) == 0:
        exact = duality_value(model, xi, eta)
        return DualityReport(exact, exact, 0.0, 0.0, 0.0, replicas)

    eta_particles = eta.particles().astype(np.int64)
    xi_particles = np.asarray(xi.particles, dtype=np.int64)
    dual_model = model.dual()

    def forward(block, n, bitgen):
        rep_ptr, pos0 = _fixed_block(eta_particles, n)
        out, _ = evolve_block(model, rep_ptr, pos0, [t], bitgen, backend=backend)
        return Moments.of(forward_duality_values(model, xi, out[0], rep_ptr))

    def dual(block, n, bitgen):
        rep_ptr, pos0 = _fixed_block(xi_particles, n)
        out, _ = evolve_block(dual_model, rep_ptr, pos0, [t], bitgen, backend=backend)
        return Moments.of(dual_duality_values(model, out[0].reshape(n, len(xi_particles)), eta))

    lhs = merge_all(map_blocks(forward, replicas, rng.child(0), workers, block_size))
    rhs = merge_all(map_blocks(dual, replicas, rng.child(1), workers, block_size))
    return DualityReport.from_moments(lhs, rhs, replicas)


def mc_deterministic_duality_check(model: ModelSpec, f, eta, t: float, replicas: int,
                                   rng: RngStream | int, workers: int = 1,
                                   block_size: int = BLOCK_SIZE,
                                   backend: str | None = None) -> DualityReport:
    """Compare ``E prod_v f(v)^{eta_v(t)}`` (Monte Carlo) with ``prod_v f_t(v)^{eta_v}``.

    ``f_t = p_t f`` is computed from the one-particle kernel, so the right
    side carries no sampling error.
    """
    if model.kind != 0:
        raise ValueError("the deterministic dual is defined for independent particles (s=0)")
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (model.num_sites,):
        raise ValueError(f"f must have one value per site ({model.num_sites})")
    if (f < 0).any() or (f > 1).any():
        raise ValueError("f must take values in [0, 1]")
    rng = rng if isinstance(rng, RngStream) else RngStream(int(rng))
    eta = eta if isinstance(eta, Configuration) else Configuration(np.asarray(eta))
    eta.validate(model)
    particles = eta.particles().astype(np.int64)
    f_t = single_particle_kernel(model, t) @ f
    rhs = float(np.prod(f_t[particles]))
    if t == 0:
        return DualityReport(rhs, rhs, 0.0, 0.0, 0.0, replicas)

    def forward(block, n, bitgen):
        rep_ptr, pos0 = _fixed_block(particles, n)
        out, _ = evolve_block(model, rep_ptr, pos0, [t], bitgen, backend=backend)
        vals = f[out[0]].reshape(n, len(particles)).prod(axis=1)
        return Moments.of(vals)

    lhs = merge_all(map_blocks(forward, replicas, rng, workers, block_size))
    return DualityReport.from_moments(lhs, rhs, replicas)
