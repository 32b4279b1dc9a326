"""Invariant product measures and their D-transforms.

Single-site marginals: Binomial(alpha, rho) for exclusion, negative
binomial with shape alpha and success parameter rho for inclusion, and
Poisson(rho) for independent particles.  For all three the D-transform
factorizes as ``theta ** |xi|``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .duality import DualityReport, _counts, forward_duality_values, single_site_weight
from .engine import BLOCK_SIZE, Configuration, RngStream, evolve_block, map_blocks
from .lattice import Lattice
from .models import ModelSpec
from .stats import Moments, merge_all

__all__ = [
    "TruncationError",
    "ProductMeasure",
    "DTransformEstimate",
    "MixingSeries",
    "site_pmf",
    "pmf_table",
    "sample_configuration",
    "sample_occupancies",
    "theta",
    "exact_dtransform_site",
    "mc_invariance_check",
    "mixing_estimator",
]

TAIL = 1e-12


class TruncationError(ArithmeticError):
    """A truncated series could not be bounded below the requested tolerance."""


@dataclass(frozen=True)
class ProductMeasure:
    kind: int
    rho: float
    alpha: float = 1.0

    def __post_init__(self):
        s, rho, alpha = self.kind, self.rho, self.alpha
        if s == -1:
            if not (float(alpha).is_integer() and alpha >= 1):
                raise ValueError(f"binomial marginals need a positive integer alpha, got {alpha}")
            if not 0.0 <= rho <= 1.0:
                raise ValueError(f"rho must lie in [0, 1], got {rho}")
        elif s == 1:
            if not alpha > 0:
                raise ValueError(f"alpha must be > 0, got {alpha}")
            if not 0.0 <= rho < 1.0:
                raise ValueError(f"rho must lie in [0, 1), got {rho}")
        elif s == 0:
            if not (math.isfinite(rho) and rho >= 0.0):
                raise ValueError(f"rho must be >= 0, got {rho}")
        else:
            raise ValueError(f"kind must be -1, 0 or 1, got {s}")

    @classmethod
    def for_model(cls, model: ModelSpec, rho: float) -> "ProductMeasure":
        return cls(model.kind, rho, model.alpha)

    @property
    def mean(self) -> float:
        """Expected occupation of one site."""
        if self.kind == -1:
            return self.alpha * self.rho
        if self.kind == 1:
            return self.alpha * self.rho / (1.0 - self.rho)
        return self.rho


@dataclass(frozen=True)
class DTransformEstimate:
    xi: tuple[int, ...]
    value: float
    se: float = 0.0
    exact: bool = True

    def __post_init__(self):
        if self.exact and self.se != 0:
            raise ValueError("an exact estimate carries no standard error")


@dataclass(frozen=True)
class MixingSeries:
    times: tuple[float, ...]
    cov: tuple[float, ...]
    se: tuple[float, ...]
    replicas: int


def site_pmf(measure: ProductMeasure, n: int) -> float:
    if n < 0:
        raise ValueError("n must be >= 0")
    s, rho, a = measure.kind, measure.rho, measure.alpha
    if s == -1:
        a = int(a)
        if n > a:
            return 0.0
        return math.comb(a, n) * rho**n * (1.0 - rho) ** (a - n)
    if rho == 0.0:
        return 1.0 if n == 0 else 0.0
    if s == 1:
        log_p = math.lgamma(a + n) - math.lgamma(a) - math.lgamma(n + 1) + n * math.log(rho) + a * math.log1p(-rho)
        return math.exp(log_p)
    return math.exp(n * math.log(rho) - rho - math.lgamma(n + 1))


def _pmf_ratio(measure: ProductMeasure, n: int) -> float:
    """``pmf(n+1) / pmf(n)`` for the unbounded marginals."""
    if measure.kind == 1:
        return measure.rho * (measure.alpha + n) / (n + 1)
    return measure.rho / (n + 1)


def _ratio_limit(measure: ProductMeasure) -> float:
    return measure.rho if measure.kind == 1 else 0.0


def pmf_table(measure: ProductMeasure, tail: float = TAIL, max_terms: int = 100_000) -> np.ndarray:
    """Marginal pmf on ``0..N`` with the mass beyond ``N`` below ``tail``."""
    if measure.kind == -1:
        return np.array([site_pmf(measure, n) for n in range(int(measure.alpha) + 1)])
    probs = [site_pmf(measure, 0)]
    n = 0
    while True:
        q = max(_pmf_ratio(measure, n), _ratio_limit(measure))
        nxt = probs[-1] * _pmf_ratio(measure, n)
        if q < 1 and nxt / (1 - q) < tail:
            break
        probs.append(nxt)
        n += 1
        if n > max_terms:
            raise TruncationError(f"pmf tail not below {tail} after {max_terms} terms")
    return np.array(probs)


def sample_occupancies(measure: ProductMeasure, n_sites: int, size: int, rng) -> np.ndarray:
    """``(size, n_sites)`` i.i.d. occupations drawn by inversion of the pmf table."""
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    cdf = np.cumsum(pmf_table(measure))
    u = gen.random((size, n_sites))
    return np.minimum(np.searchsorted(cdf, u, side="right"), len(cdf) - 1).astype(np.int64)


def sample_configuration(measure: ProductMeasure, lattice: Lattice | int, rng) -> Configuration:
    n_sites = lattice.size if isinstance(lattice, Lattice) else int(lattice)
    return Configuration(sample_occupancies(measure, n_sites, 1, rng)[0])


def theta(measure: ProductMeasure) -> float:
    """``int d_s(1, eta_v) dmu``, the one-particle D-transform."""
    if measure.kind == 1:
        return measure.rho / (1.0 - measure.rho)
    return measure.rho


def exact_dtransform_site(measure: ProductMeasure, k: int, tol: float = TAIL,
                          max_terms: int = 100_000) -> float:
    """``int d_s(k, eta_v) dmu`` by summation over the marginal.

    The exclusion sum is finite; otherwise the series is cut once a
    geometric bound on the remainder drops below ``tol``.
    """
    s, a = measure.kind, measure.alpha
    if k < 0:
        raise ValueError("k must be >= 0")
    if s == -1 and k > a:
        raise ValueError(f"k={k} exceeds alpha={a}")
    if k == 0:
        return 1.0
    if s == -1:
        return math.fsum(site_pmf(measure, n) * single_site_weight(s, a, k, n) for n in range(k, int(a) + 1))
    if measure.rho == 0.0:
        return 0.0
    terms = [site_pmf(measure, k) * single_site_weight(s, a, k, k)]
    n = k
    while True:
        step = _pmf_ratio(measure, n) * (n + 1) / (n + 1 - k)
        nxt = terms[-1] * step
        q_next = _pmf_ratio(measure, n + 1) * (n + 2) / (n + 2 - k)
        q = max(q_next, _ratio_limit(measure))
        if q < 1 and nxt / (1 - q) < tol:
            break
        terms.append(nxt)
        n += 1
        if n - k > max_terms:
            raise TruncationError(f"D-transform series not below {tol} after {max_terms} terms")
    return math.fsum(terms)


def _ragged(occ: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n_rep, n_sites = occ.shape
    rep_ptr = np.zeros(n_rep + 1, dtype=np.int64)
    np.cumsum(occ.sum(axis=1), out=rep_ptr[1:])
    pos = np.repeat(np.tile(np.arange(n_sites, dtype=np.int64), n_rep), occ.ravel())
    return rep_ptr, pos


def _check_match(model: ModelSpec, measure: ProductMeasure):
    if measure.kind != model.kind or (model.kind != 0 and measure.alpha != model.alpha):
        raise ValueError("measure does not match the model (kind and alpha must agree)")


def mc_invariance_check(model: ModelSpec, measure: ProductMeasure, xi, t: float, replicas: int,
                        rng: RngStream | int, workers: int = 1, block_size: int = BLOCK_SIZE,
                        backend: str | None = None) -> DualityReport:
    """Monte-Carlo ``E_mu D(xi, eta(t))`` against ``theta ** |xi|``.

    Configurations are sampled from the product measure on the torus, where
    it is exactly invariant, then evolved for time ``t``.
    """
    _check_match(model, measure)
    rng = rng if isinstance(rng, RngStream) else RngStream(int(rng))
    counts = _counts(xi)
    if model.kind == -1 and any(k > model.alpha for k in counts.values()):
        raise ValueError("dual occupancy exceeds exclusion capacity")
    target = theta(measure) ** sum(counts.values())
    if not counts:
        return DualityReport(1.0, 1.0, 0.0, 0.0, 0.0, replicas)

    def block(b, n, bitgen):
        occ = sample_occupancies(measure, model.num_sites, n, np.random.Generator(bitgen))
        rep_ptr, pos = _ragged(occ)
        if t > 0:
            out, _ = evolve_block(model, rep_ptr, pos, [t], bitgen, backend=backend)
            pos = out[0]
        return Moments.of(forward_duality_values(model, counts, pos, rep_ptr))

    lhs = merge_all(map_blocks(block, replicas, rng, workers, block_size))
    return DualityReport.from_moments(lhs, target, replicas)


def mixing_estimator(model: ModelSpec, measure: ProductMeasure, xi, xi_prime, times, replicas: int,
                     rng: RngStream | int, workers: int = 1, block_size: int = BLOCK_SIZE,
                     backend: str | None = None) -> MixingSeries:
    """``cov_mu(D(xi, .), S(t) D(xi', .))`` on a time grid, with standard errors."""
    _check_match(model, measure)
    rng = rng if isinstance(rng, RngStream) else RngStream(int(rng))
    times = np.asarray(times, dtype=np.float64)
    c1, c2 = _counts(xi), _counts(xi_prime)
    if not c1 or not c2:
        zeros = tuple(0.0 for _ in times)
        return MixingSeries(tuple(times.tolist()), zeros, zeros, replicas)

    def block(b, n, bitgen):
        occ = sample_occupancies(measure, model.num_sites, n, np.random.Generator(bitgen))
        rep_ptr, pos = _ragged(occ)
        x = forward_duality_values(model, c1, pos, rep_ptr)
        out, _ = evolve_block(model, rep_ptr, pos, times, bitgen, backend=backend)
        ys = np.stack([forward_duality_values(model, c2, out[g], rep_ptr) for g in range(len(times))], axis=1)
        xs = x[:, None]
        feats = np.stack([np.broadcast_to(xs, ys.shape), ys, xs * ys, np.broadcast_to(xs**2, ys.shape), ys**2,
                          xs**2 * ys, xs * ys**2, xs**2 * ys**2], axis=0)
        return Moments.of(feats, axis=1)

    acc = merge_all(map_blocks(block, replicas, rng, workers, block_size))
    ex, ey, exy, ex2, ey2, ex2y, exy2, ex2y2 = acc.total / acc.count
    cov = exy - ex * ey
    a, b = ex, ey
    fourth = (ex2y2 - 2 * b * ex2y + b * b * ex2 - 2 * a * exy2 + 4 * a * b * exy
              - 2 * a * b * b * ex + a * a * ey2 - 2 * a * a * b * ey + a * a * b * b)
    se = np.sqrt(np.maximum(fourth - cov**2, 0.0) / acc.count)
    return MixingSeries(tuple(times.tolist()), tuple(cov.tolist()), tuple(se.tolist()), replicas)
