"""Small reference models and the default suite of exact checks."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

from .exactcheck import (
    exact_dtransform_constancy,
    exact_generator_duality_residual,
    exact_ladder_consistency,
    exact_stationarity_residual,
    ladder_lift,
    ladder_projection,
)
from .lattice import Lattice
from .measures import ProductMeasure, exact_dtransform_site, theta
from .models import LayerKinetics, ModelSpec, nearest_neighbour_pi

__all__ = ["toy_model", "ExactCase", "exact_suite", "EXACT_THRESHOLD", "CONTROL_THRESHOLD"]

EXACT_THRESHOLD = 1e-10
CONTROL_THRESHOLD = 1e-4


def toy_model(kind: int, alpha: float = 1.0, d: int = 1, L: int = 4, layers: int = 2,
              rates=(0.5, 0.3), switch: float = 0.7, kappa: float = 1.0, lam: float = 0.0,
              velocities=None) -> ModelSpec:
    """Nearest-neighbour model with layer ``k`` jumping at ``rates[k % len(rates)]`` per direction.

    All layers switch into each other at rate ``switch``.  For ``lam > 0``
    the default velocities alternate between ``+e_1`` and ``-e_1``.
    """
    pi = [nearest_neighbour_pi(d, rates[k % len(rates)]) for k in range(layers)]
    c = [[0.0 if a == b else switch for b in range(layers)] for a in range(layers)]
    if velocities is None and lam > 0:
        velocities = [tuple((1 if k % 2 == 0 else -1) if i == 0 else 0 for i in range(d)) for k in range(layers)]
    kin = LayerKinetics(pi=pi, c=c, velocity=velocities, kappa=kappa, lam=lam)
    return ModelSpec(kind, alpha, kin, Lattice(d, L, layers))


@dataclass(frozen=True)
class ExactCase:
    check: str
    instance: str
    run: Callable[[], float]
    threshold: float
    #: "max": pass when residual <= threshold; "min": pass when residual >= threshold
    sense: str = "max"

    def evaluate(self) -> tuple[float, bool]:
        r = float(self.run())
        return r, (r <= self.threshold if self.sense == "max" else r >= self.threshold)


def duality_instances() -> list[tuple[str, ModelSpec]]:
    return [
        ("sep a=1", toy_model(-1, 1)),
        ("sep a=2", toy_model(-1, 2)),
        ("sip a=1", toy_model(1, 1.0)),
        ("sip a=1.5", toy_model(1, 1.5)),
        ("rtp k=1 l=0.8", toy_model(0, kappa=1.0, lam=0.8)),
        ("irw", toy_model(0)),
    ]


def _measure_for(model: ModelSpec) -> ProductMeasure:
    return ProductMeasure.for_model(model, 0.4)


def _site_residual(measure: ProductMeasure) -> float:
    top = int(measure.alpha) if measure.kind == -1 else 4
    top = min(top, 4)
    return max(abs(exact_dtransform_site(measure, k) - theta(measure) ** k) for k in range(top + 1))


def _projection_mismatch(alpha: int = 2, n_sites: int = 3) -> float:
    """Count ladder states whose projection differs from the rung-by-rung sum."""
    bad = 0
    for state in itertools.product((0, 1), repeat=alpha * n_sites):
        direct = [sum(state[v * alpha + j] for j in range(alpha)) for v in range(n_sites)]
        bad += int(ladder_projection(state, alpha).tolist() != direct)
        bad += int(ladder_projection(ladder_lift(direct, alpha), alpha).tolist() != direct)
    return float(bad)


def exact_suite() -> list[ExactCase]:
    """Every exact check on the default small instances, negative controls included."""
    cases: list[ExactCase] = []
    for label, model in duality_instances():
        for n in (1, 2):
            cases.append(ExactCase("generator_duality", f"{label} d=1 L=4 S=2 n={n}",
                                   lambda m=model, n=n: exact_generator_duality_residual(m, n), EXACT_THRESHOLD))
    for label, model in duality_instances():
        bad = model.rates.perturbed(0, 1, 1e-3)
        cases.append(ExactCase("duality_negative_control", f"{label} p(0,1)+1e-3",
                               lambda m=model, b=bad: exact_generator_duality_residual(m, 2, forward_table=b),
                               CONTROL_THRESHOLD, "min"))
    sep3 = toy_model(-1, 1, L=3)
    for rho in (0.0, 0.3, 0.5, 0.8, 1.0):
        cases.append(ExactCase("stationarity", f"sep a=1 d=1 L=3 S=2 rho={rho}",
                               lambda r=rho: exact_stationarity_residual(sep3, ProductMeasure(-1, r, 1)),
                               EXACT_THRESHOLD))
    for label, model in duality_instances():
        meas = _measure_for(model)
        cases.append(ExactCase("dtransform_site", f"{label} rho=0.4 k<=4",
                               lambda m=meas: _site_residual(m), EXACT_THRESHOLD))
        for n in (1, 2, 3):
            cases.append(ExactCase("dtransform_constancy", f"{label} rho=0.4 n={n}",
                                   lambda m=model, mu=meas, n=n: exact_dtransform_constancy(m, n, mu),
                                   EXACT_THRESHOLD))
    for alpha in (1, 2):
        ladder = toy_model(-1, alpha, L=3, layers=1)
        cases.append(ExactCase("ladder_intertwining", f"sep a={alpha} d=1 L=3 S=1",
                               lambda m=ladder: exact_ladder_consistency(m), EXACT_THRESHOLD))
    cases.append(ExactCase("ladder_projection", "a=2 enumerated lifts", _projection_mismatch, 0.0))
    return cases
