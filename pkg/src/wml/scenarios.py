"""Named benchmark scenarios: a domain, an analytic function, and tuning knobs."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigurationError
from .geometry import SurfaceDomain, annulus_domain, build_mesh, disk_domain
from .morse import MorseFunction


def _linear_f() -> MorseFunction:
    return MorseFunction(
        value=lambda x: float(x[0]),
        gradient=lambda x: np.array([1.0, 0.0]),
        hessian=lambda x: np.zeros((2, 2)),
    )


def _saddle_f() -> MorseFunction:
    return MorseFunction(
        value=lambda x: float(x[0] ** 2 - x[1] ** 2),
        gradient=lambda x: np.array([2.0 * x[0], -2.0 * x[1]]),
        hessian=lambda x: np.array([[2.0, 0.0], [0.0, -2.0]]),
    )


def _interior_min_f() -> MorseFunction:
    return MorseFunction(
        value=lambda x: float(0.5 * (x[0] ** 2 + x[1] ** 2) + 0.1 * x[0]),
        gradient=lambda x: np.array([x[0] + 0.1, x[1]]),
        hessian=lambda x: np.eye(2),
    )


def _interior_peak_f() -> MorseFunction:
    return MorseFunction(
        value=lambda x: float(-0.5 * (x[0] ** 2 + x[1] ** 2) + 0.1 * x[0]),
        gradient=lambda x: np.array([-x[0] + 0.1, -x[1]]),
        hessian=lambda x: -np.eye(2),
    )


@dataclass(frozen=True)
class Scenario:
    name: str
    description: str
    f_formula: str
    make_domain: callable
    make_f: callable
    adaptation_radius: float
    grid_density: int
    expected_absolute_counts: tuple  # eigenvalue-cluster sizes per degree
    expected_relative_counts: tuple

    @property
    def domain(self) -> SurfaceDomain:
        return self.make_domain()

    @property
    def f(self) -> MorseFunction:
        return self.make_f()


_REGISTRY = {}


def _register(s: Scenario):
    _REGISTRY[s.name] = s


_register(Scenario(
    name="disk_linear",
    description="unit disk with a linear slope",
    f_formula="f = x",
    make_domain=lambda: disk_domain(1.0),
    make_f=_linear_f,
    adaptation_radius=0.2,
    grid_density=15,
    expected_absolute_counts=(1, 0, 0),
    expected_relative_counts=(0, 0, 1),
))

_register(Scenario(
    name="annulus_linear",
    description="annulus of radii 0.5 and 1 with a linear slope",
    f_formula="f = x",
    make_domain=lambda: annulus_domain(0.5, 1.0),
    make_f=_linear_f,
    adaptation_radius=0.06,
    grid_density=15,
    expected_absolute_counts=(1, 1, 0),
    expected_relative_counts=(0, 1, 1),
))

_register(Scenario(
    name="disk_saddle",
    description="disk of radius 2 with a quadratic saddle at the center",
    f_formula="f = x^2 - y^2",
    make_domain=lambda: disk_domain(2.0),
    make_f=_saddle_f,
    adaptation_radius=0.2,
    grid_density=21,
    expected_absolute_counts=(2, 1, 0),
    expected_relative_counts=(0, 1, 2),
))

_register(Scenario(
    name="disk_interior_min",
    description="unit disk with an interior minimum near the center",
    f_formula="f = (x^2+y^2)/2 + 0.1x",
    make_domain=lambda: disk_domain(1.0),
    make_f=_interior_min_f,
    adaptation_radius=0.1,
    grid_density=15,
    expected_absolute_counts=(1, 0, 0),
    expected_relative_counts=(1, 1, 1),
))

_register(Scenario(
    name="disk_peak",
    description="unit disk with an interior maximum near the center",
    f_formula="f = -(x^2+y^2)/2 + 0.1x",
    make_domain=lambda: disk_domain(1.0),
    make_f=_interior_peak_f,
    adaptation_radius=0.1,
    grid_density=15,
    expected_absolute_counts=(1, 1, 1),
    expected_relative_counts=(0, 0, 1),
))

_register(Scenario(
    name="interval_robin",
    description="one-dimensional model-operator suite (half-line and "
                "oscillator discretizations)",
    f_formula="model potentials",
    make_domain=lambda: None,
    make_f=lambda: None,
    adaptation_radius=0.0,
    grid_density=0,
    expected_absolute_counts=(1,),
    expected_relative_counts=(0,),
))

SURFACE_SCENARIOS = ("disk_linear", "annulus_linear", "disk_saddle",
                     "disk_interior_min")
SHIPPED_SCENARIOS = SURFACE_SCENARIOS + ("interval_robin",)


def get_scenario(name: str) -> Scenario:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise ConfigurationError("unknown scenario %r (known: %s)"
                                 % (name, ", ".join(sorted(_REGISTRY))))


def list_scenarios(filter_text: str = "") -> list[Scenario]:
    return [_REGISTRY[k] for k in sorted(_REGISTRY)
            if filter_text in k and k in SHIPPED_SCENARIOS]


@lru_cache(maxsize=16)
def scenario_mesh(name: str, target_h: float):
    """Meshes keyed by (scenario, resolution); reused across T sweeps."""
    return build_mesh(get_scenario(name).domain, target_h)
