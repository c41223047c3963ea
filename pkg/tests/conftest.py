"""Shared scenario builders for the test suite."""

import numpy as np
import pytest

from hatalloc import NetworkTopology, Scenario
from hatalloc.human import HumanResponseModel
from hatalloc.model import CouplingConstraint, QuadraticCost, SolverOptions


def single_agent_scenario(c=(-1.0,)):
    """One autonomous agent, f(x) = x^2, constraint x + c <= 0."""
    topo = NetworkTopology(("a1",), (), frozenset())
    return Scenario(
        topology=topo,
        dims={"a1": 1},
        costs={"a1": QuadraticCost(np.array([[1.0]]))},
        constraint=CouplingConstraint(
            {"a1": np.array([[1.0]])}, {}, np.array(c, dtype=float)
        ),
        human_models={},
        solver=SolverOptions(),
    )


def path_scenario(attitude=0.5, family="affine", beta=6.0):
    """Two autonomous agents and one human on a triangle.

    Hand-tuned so the linearized flow is well damped (spectral abscissa about
    -0.12 at the default step size) and both constraint rows are active at
    the optimum; long-horizon integration tests rely on this.
    """
    topo = NetworkTopology(
        ("a1", "a2"), ("k1",),
        frozenset({("a1", "k1"), ("k1", "a2"), ("a1", "a2")}),
    )
    model = HumanResponseModel(
        human_id="k1",
        neighbor_ids=("a1", "a2"),
        gains={
            "a1": 1.2 * np.array([[0.4, 0.1], [0.2, 0.3]]),
            "a2": 1.2 * np.array([[0.3, 0.2], [0.1, 0.4]]),
        },
        base=np.array([1.0, 0.8]),
        attitude=attitude,
        family=family,
        sharpness=beta,
    )
    return Scenario(
        topology=topo,
        dims={"a1": 2, "a2": 2, "k1": 2},
        costs={
            "a1": QuadraticCost(np.diag([1.0, 2.0])),
            "a2": QuadraticCost(np.diag([1.5, 1.0])),
            "k1": QuadraticCost(np.diag([0.8, 1.2])),
        },
        constraint=CouplingConstraint(
            a_blocks={
                "a1": 2.5 * np.array([[1.0, 0.5], [-0.3, 0.9]]),
                "a2": 2.5 * np.array([[0.8, 1.2], [0.7, -0.8]]),
            },
            b_blocks={"k1": 2.5 * np.array([[1.1, 0.4], [-0.5, 0.9]])},
            c=np.array([-1.0, 1.0]),
        ),
        human_models={"k1": model},
        solver=SolverOptions(),
    )


@pytest.fixture
def single_agent():
    return single_agent_scenario()


@pytest.fixture
def path_team():
    return path_scenario()
