"""Problem instances: costs, the coupled constraint, and scenario files.

A scenario bundles the interaction graph, per-agent state dimensions and
costs, the shared linear inequality coupling every agent, the human response
models, and solver options. Scenario documents are JSON trees; floats survive
a save/load round trip bit-exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import human as human_mod
from .errors import (
    DimensionMismatchError,
    MissingHumanModelError,
    NotPositiveDefiniteError,
    ScenarioFormatError,
)
from .human import ApproximationSchedule, HumanResponseModel, attitude_preset
from .topology import NetworkTopology, neighbors

SYMMETRY_TOL = 1e-12
MIN_EIGENVALUE = 1e-10


@dataclass(frozen=True)
class QuadraticCost:
    """Cost x^T W x with W symmetric positive definite."""

    weight: np.ndarray

    def __post_init__(self):
        w = np.atleast_2d(np.asarray(self.weight, dtype=float))
        object.__setattr__(self, "weight", w)
        if w.shape[0] != w.shape[1]:
            raise DimensionMismatchError(f"cost weight must be square, got {w.shape}")
        if np.max(np.abs(w - w.T)) > SYMMETRY_TOL:
            raise NotPositiveDefiniteError("cost weight is not symmetric")
        if np.min(np.linalg.eigvalsh(w)) <= MIN_EIGENVALUE:
            raise NotPositiveDefiniteError("cost weight is not positive definite")

    @property
    def dim(self) -> int:
        return self.weight.shape[0]

    def value(self, v: np.ndarray) -> float:
        return float(v @ self.weight @ v)

    def gradient(self, v: np.ndarray) -> np.ndarray:
        return 2.0 * (self.weight @ v)


@dataclass(frozen=True)
class CustomCost:
    """Convex differentiable cost given by callbacks.

    Convexity and gradient correctness are declared contracts; the `check`
    tooling spot-verifies both by sampling.
    """

    dim: int
    value_fn: Callable[[np.ndarray], float]
    gradient_fn: Callable[[np.ndarray], np.ndarray]

    def value(self, v: np.ndarray) -> float:
        return float(self.value_fn(v))

    def gradient(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(self.gradient_fn(v), dtype=float)


CostFunction = QuadraticCost | CustomCost


@dataclass(frozen=True)
class CouplingConstraint:
    """Shared inequality sum_i A_i x_i + sum_k B_k y_k + c <= 0."""

    a_blocks: dict[str, np.ndarray]
    b_blocks: dict[str, np.ndarray]
    c: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float))
        a = {i: np.atleast_2d(np.asarray(m, dtype=float)) for i, m in self.a_blocks.items()}
        b = {k: np.atleast_2d(np.asarray(m, dtype=float)) for k, m in self.b_blocks.items()}
        object.__setattr__(self, "a_blocks", a)
        object.__setattr__(self, "b_blocks", b)
        r = self.c.shape[0]
        if r < 1:
            raise DimensionMismatchError("constraint needs at least one row")
        for agent_id, block in list(a.items()) + list(b.items()):
            if block.shape[0] != r:
                raise DimensionMismatchError(
                    f"constraint block for '{agent_id}' has {block.shape[0]} rows, "
                    f"expected {r}"
                )

    @property
    def rows(self) -> int:
        return self.c.shape[0]


@dataclass(frozen=True)
class SolverOptions:
    """Integrator and bookkeeping knobs for the saddle-point flow."""

    dt: float = 1e-3
    max_time: float = 200.0
    tolerance: float = 1e-6
    offset_split: str = "first_agent"
    record_stride: int = 100
    check_slater: bool = False

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.offset_split not in ("first_agent", "uniform"):
            raise ValueError(f"unknown offset split policy '{self.offset_split}'")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")


class ScenarioLayout:
    """Index bookkeeping for stacked vectors in canonical agent order."""

    def __init__(self, topology: NetworkTopology, dims: dict[str, int], rows: int):
        self.autonomous_ids = topology.autonomous_ids
        self.human_ids = topology.human_ids
        self.node_order = topology.node_order
        self.rows = rows
        self.node_index = {a: i for i, a in enumerate(self.node_order)}
        self.x_offsets: dict[str, int] = {}
        self.y_offsets: dict[str, int] = {}
        off = 0
        for i in self.autonomous_ids:
            self.x_offsets[i] = off
            off += dims[i]
        self.x_dim = off
        off = 0
        for k in self.human_ids:
            self.y_offsets[k] = off
            off += dims[k]
        self.y_dim = off
        self.dims = dict(dims)
        self.block_dim = rows * len(self.node_order)

    def x_slice(self, agent_id: str) -> slice:
        start = self.x_offsets[agent_id]
        return slice(start, start + self.dims[agent_id])

    def y_slice(self, agent_id: str) -> slice:
        start = self.y_offsets[agent_id]
        return slice(start, start + self.dims[agent_id])

    def node_slice(self, agent_id: str) -> slice:
        """Slice of an agent's r-block inside a stacked (z or multiplier) vector."""
        start = self.node_index[agent_id] * self.rows
        return slice(start, start + self.rows)

    def stack_x(self, blocks: dict[str, np.ndarray]) -> np.ndarray:
        return np.concatenate(
            [np.asarray(blocks[i], dtype=float) for i in self.autonomous_ids]
        ) if self.autonomous_ids else np.zeros(0)

    def stack_y(self, blocks: dict[str, np.ndarray]) -> np.ndarray:
        return np.concatenate(
            [np.asarray(blocks[k], dtype=float) for k in self.human_ids]
        ) if self.human_ids else np.zeros(0)

    def stack_nodes(self, blocks: dict[str, np.ndarray]) -> np.ndarray:
        return np.concatenate(
            [np.asarray(blocks[a], dtype=float) for a in self.node_order]
        )

    def unstack_x(self, vec: np.ndarray) -> dict[str, np.ndarray]:
        return {i: np.array(vec[self.x_slice(i)]) for i in self.autonomous_ids}

    def unstack_y(self, vec: np.ndarray) -> dict[str, np.ndarray]:
        return {k: np.array(vec[self.y_slice(k)]) for k in self.human_ids}

    def unstack_nodes(self, vec: np.ndarray) -> dict[str, np.ndarray]:
        return {a: np.array(vec[self.node_slice(a)]) for a in self.node_order}


@dataclass
class Scenario:
    """A fully validated problem instance. Treat as immutable after load."""

    topology: NetworkTopology
    dims: dict[str, int]
    costs: dict[str, CostFunction]
    constraint: CouplingConstraint
    human_models: dict[str, HumanResponseModel]
    solver: SolverOptions = field(default_factory=SolverOptions)
    schedules: dict[str, ApproximationSchedule] = field(default_factory=dict)
    initial_state: dict | None = None

    def __post_init__(self):
        topo = self.topology
        all_ids = set(topo.node_order)
        for agent_id in topo.node_order:
            if agent_id not in self.dims:
                raise ScenarioFormatError(f"agent '{agent_id}' has no declared dim")
            if self.dims[agent_id] < 1:
                raise DimensionMismatchError(f"agent '{agent_id}' has dim < 1")
            if agent_id not in self.costs:
                raise ScenarioFormatError(f"agent '{agent_id}' has no cost")
        extra = set(self.dims) - all_ids
        if extra:
            raise ScenarioFormatError(f"dims declared for unknown agents {sorted(extra)}")

        for agent_id, cost in self.costs.items():
            if cost.dim != self.dims[agent_id]:
                raise DimensionMismatchError(
                    f"cost for '{agent_id}' has dim {cost.dim}, agent dim is "
                    f"{self.dims[agent_id]}"
                )

        con = self.constraint
        if set(con.a_blocks) != set(topo.autonomous_ids):
            raise DimensionMismatchError(
                "constraint a_blocks must cover exactly the autonomous agents"
            )
        if set(con.b_blocks) != set(topo.human_ids):
            raise DimensionMismatchError(
                "constraint b_blocks must cover exactly the human agents"
            )
        for agent_id, block in list(con.a_blocks.items()) + list(con.b_blocks.items()):
            if block.shape[1] != self.dims[agent_id]:
                raise DimensionMismatchError(
                    f"constraint block for '{agent_id}' has {block.shape[1]} "
                    f"columns, agent dim is {self.dims[agent_id]}"
                )

        for k in topo.human_ids:
            if k not in self.human_models:
                raise MissingHumanModelError(f"human '{k}' has no response model")
            model = self.human_models[k]
            auto_nbrs, _ = neighbors(topo, k)
            if tuple(model.neighbor_ids) != tuple(auto_nbrs):
                raise ScenarioFormatError(
                    f"model for '{k}' lists neighbors {list(model.neighbor_ids)}, "
                    f"topology says {auto_nbrs}"
                )
            if model.dim != self.dims[k]:
                raise DimensionMismatchError(
                    f"model for '{k}' outputs dim {model.dim}, agent dim is "
                    f"{self.dims[k]}"
                )
            for j in model.neighbor_ids:
                if model.gains[j].shape[1] != self.dims[j]:
                    raise DimensionMismatchError(
                        f"model for '{k}': gain block for '{j}' has "
                        f"{model.gains[j].shape[1]} columns, agent dim is {self.dims[j]}"
                    )
        extra_models = set(self.human_models) - set(topo.human_ids)
        if extra_models:
            raise ScenarioFormatError(
                f"response models for unknown humans {sorted(extra_models)}"
            )

        self.layout = ScenarioLayout(topo, self.dims, con.rows)

    def with_solver(self, **overrides) -> "Scenario":
        return replace(self, solver=replace(self.solver, **overrides))

    def human_response(
        self, agent_id: str, x_blocks: dict[str, np.ndarray], t: float = 0.0,
        schedule: ApproximationSchedule | None = None,
    ) -> np.ndarray:
        model = self.human_models[agent_id]
        inputs = {j: x_blocks[j] for j in model.neighbor_ids}
        return human_mod.respond(model, inputs, t, schedule)


def stack_dimensions(scenario: Scenario) -> tuple[int, int, int, int, int]:
    """(total autonomous dim, total human dim, constraint rows, m, h)."""
    lay = scenario.layout
    return (
        lay.x_dim,
        lay.y_dim,
        lay.rows,
        len(lay.autonomous_ids),
        len(lay.human_ids),
    )


# ---------------------------------------------------------------------------
# Scenario documents


def _require(cond: bool, msg: str):
    if not cond:
        raise ScenarioFormatError(msg)


def _as_matrix(raw, context: str) -> np.ndarray:
    try:
        mat = np.array(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ScenarioFormatError(f"{context}: not a numeric matrix") from exc
    if mat.ndim == 1:
        mat = mat[None, :]
    _require(mat.ndim == 2, f"{context}: expected a matrix")
    _require(bool(np.all(np.isfinite(mat))), f"{context}: entries must be finite")
    return mat


def _as_vector(raw, context: str) -> np.ndarray:
    try:
        vec = np.array(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ScenarioFormatError(f"{context}: not a numeric vector") from exc
    _require(vec.ndim == 1, f"{context}: expected a flat vector")
    _require(bool(np.all(np.isfinite(vec))), f"{context}: entries must be finite")
    return vec


def _parse_model(human_id: str, doc: dict, neighbor_ids: list[str]) -> HumanResponseModel:
    _require(isinstance(doc, dict), f"model '{human_id}': expected an object")
    family = doc.get("family", human_mod.AFFINE)
    base = _as_vector(doc.get("base"), f"model '{human_id}' base")
    gains_doc = doc.get("gains", {})
    _require(isinstance(gains_doc, dict), f"model '{human_id}': gains must be a map")
    gains = {
        j: _as_matrix(g, f"model '{human_id}' gain for '{j}'")
        for j, g in gains_doc.items()
    }
    attitude_doc = doc.get("attitude")
    _require(isinstance(attitude_doc, dict), f"model '{human_id}': attitude required")
    if "alpha" in attitude_doc:
        alpha = float(attitude_doc["alpha"])
    else:
        alpha = attitude_preset(
            attitude_doc.get("kind", ""), float(attitude_doc.get("magnitude", 0.0))
        )
    kwargs = {}
    if "beta" in doc:
        kwargs["sharpness"] = float(doc["beta"])
    return HumanResponseModel(
        human_id=human_id,
        neighbor_ids=tuple(neighbor_ids),
        gains=gains,
        base=base,
        attitude=alpha,
        family=family,
        **kwargs,
    )


def _parse_schedule(human_id: str, doc: dict) -> ApproximationSchedule:
    delta = doc.get("delta", {})
    gain_deltas = {
        j: _as_matrix(g, f"schedule '{human_id}' gain delta for '{j}'")
        for j, g in delta.get("gains", {}).items()
    }
    base_delta = _as_vector(
        delta.get("base", []), f"schedule '{human_id}' base delta"
    )
    return ApproximationSchedule(
        gain_deltas=gain_deltas,
        base_delta=base_delta,
        settle_time=float(doc.get("settle_time", 0.0)),
    )


def scenario_from_document(doc: dict) -> Scenario:
    """Build and validate a Scenario from a parsed JSON tree."""
    _require(isinstance(doc, dict), "scenario document must be an object")
    for key in ("agents", "edges", "costs", "constraint"):
        _require(key in doc, f"missing top-level key '{key}'")

    autonomous, humans, dims = [], [], {}
    for entry in doc["agents"]:
        _require(
            isinstance(entry, dict) and {"id", "kind", "dim"} <= set(entry),
            "each agent needs id, kind and dim",
        )
        agent_id = str(entry["id"])
        dims[agent_id] = int(entry["dim"])
        kind = entry["kind"]
        if kind == "autonomous":
            autonomous.append(agent_id)
        elif kind == "human":
            humans.append(agent_id)
        else:
            raise ScenarioFormatError(f"agent '{agent_id}': unknown kind '{kind}'")

    edges = frozenset(
        (str(a), str(b)) for a, b in (tuple(e) for e in doc["edges"])
    )
    topo = NetworkTopology(tuple(autonomous), tuple(humans), edges)

    costs: dict[str, CostFunction] = {}
    _require(isinstance(doc["costs"], dict), "'costs' must be a map")
    for agent_id, cost_doc in doc["costs"].items():
        _require(isinstance(cost_doc, dict), f"cost for '{agent_id}': expected object")
        kind = cost_doc.get("type")
        _require(kind == "quadratic", f"cost for '{agent_id}': unknown type '{kind}'")
        try:
            costs[agent_id] = QuadraticCost(
                _as_matrix(cost_doc.get("weight"), f"cost weight for '{agent_id}'")
            )
        except NotPositiveDefiniteError as exc:
            raise NotPositiveDefiniteError(f"cost for '{agent_id}': {exc}") from exc

    con_doc = doc["constraint"]
    constraint = CouplingConstraint(
        a_blocks={
            i: _as_matrix(m, f"a_block for '{i}'")
            for i, m in con_doc.get("a_blocks", {}).items()
        },
        b_blocks={
            k: _as_matrix(m, f"b_block for '{k}'")
            for k, m in con_doc.get("b_blocks", {}).items()
        },
        c=_as_vector(con_doc.get("c"), "constraint offset c"),
    )
    if "rows" in con_doc and int(con_doc["rows"]) != constraint.rows:
        raise DimensionMismatchError(
            f"declared {con_doc['rows']} constraint rows, offset c has {constraint.rows}"
        )

    models = {}
    schedules = {}
    for human_id, model_doc in doc.get("human_models", {}).items():
        auto_nbrs, _ = neighbors(topo, human_id) if human_id in topo.node_order else ([], [])
        models[human_id] = _parse_model(human_id, model_doc, auto_nbrs)
        if "schedule" in model_doc:
            schedules[human_id] = _parse_schedule(human_id, model_doc["schedule"])

    try:
        solver = SolverOptions(**doc.get("solver", {}))
    except TypeError as exc:
        raise ScenarioFormatError(f"solver options: {exc}") from exc

    return Scenario(
        topology=topo,
        dims=dims,
        costs=costs,
        constraint=constraint,
        human_models=models,
        solver=solver,
        schedules=schedules,
        initial_state=doc.get("initial_state"),
    )


def load_scenario(path_or_text, check_slater: bool | None = None) -> Scenario:
    """Load a scenario document from a file path or a JSON string.

    When the Slater flag is set (argument, or `solver.check_slater` in the
    document), a centralized pre-solve certifies strict feasibility.
    """
    if hasattr(path_or_text, "read"):
        doc = json.load(path_or_text)
    else:
        text = str(path_or_text)
        if text.lstrip().startswith("{"):
            doc = json.loads(text)
        else:
            with open(text, "r", encoding="utf-8") as handle:
                doc = json.load(handle)
    scenario = scenario_from_document(doc)
    if check_slater is None:
        check_slater = scenario.solver.check_slater
    if check_slater:
        from .oracle import assert_slater

        assert_slater(scenario)
    return scenario


def serialize_scenario(scenario: Scenario) -> dict:
    """Scenario back to a JSON tree. Custom callback costs cannot be serialized."""
    agents = []
    for i in scenario.topology.autonomous_ids:
        agents.append({"id": i, "kind": "autonomous", "dim": scenario.dims[i]})
    for k in scenario.topology.human_ids:
        agents.append({"id": k, "kind": "human", "dim": scenario.dims[k]})

    costs = {}
    for agent_id, cost in scenario.costs.items():
        if not isinstance(cost, QuadraticCost):
            raise ScenarioFormatError(
                f"cost for '{agent_id}' is not serializable (callback cost)"
            )
        costs[agent_id] = {"type": "quadratic", "weight": cost.weight.tolist()}

    con = scenario.constraint
    doc = {
        "agents": agents,
        "edges": sorted([list(e) for e in scenario.topology.edges]),
        "costs": costs,
        "constraint": {
            "rows": con.rows,
            "a_blocks": {i: m.tolist() for i, m in con.a_blocks.items()},
            "b_blocks": {k: m.tolist() for k, m in con.b_blocks.items()},
            "c": con.c.tolist(),
        },
        "human_models": {},
        "solver": {
            "dt": scenario.solver.dt,
            "max_time": scenario.solver.max_time,
            "tolerance": scenario.solver.tolerance,
            "offset_split": scenario.solver.offset_split,
            "record_stride": scenario.solver.record_stride,
            "check_slater": scenario.solver.check_slater,
        },
    }
    schedules = scenario.schedules
    for k, model in scenario.human_models.items():
        entry = {
            "family": model.family,
            "base": model.base.tolist(),
            "gains": {j: g.tolist() for j, g in model.gains.items()},
            "attitude": {"alpha": model.attitude},
        }
        if model.family == human_mod.SOFTPLUS_AFFINE:
            entry["beta"] = model.sharpness
        if k in schedules:
            sched = schedules[k]
            entry["schedule"] = {
                "delta": {
                    "gains": {j: g.tolist() for j, g in sched.gain_deltas.items()},
                    "base": np.asarray(sched.base_delta, dtype=float).tolist(),
                },
                "settle_time": sched.settle_time,
            }
        doc["human_models"][k] = entry
    if scenario.initial_state is not None:
        doc["initial_state"] = scenario.initial_state
    return doc


def save_scenario(scenario: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(serialize_scenario(scenario), handle, indent=2)
        handle.write("\n")


# ---------------------------------------------------------------------------
# Spot checks used by tests and the `check` command


def midpoint_convexity_gap(cost: CostFunction, rng: np.random.Generator,
                           samples: int = 200, scale: float = 3.0) -> float:
    """Worst violation of f((u+v)/2) <= (f(u)+f(v))/2 over random pairs."""
    worst = -np.inf
    for _ in range(samples):
        u = rng.normal(scale=scale, size=cost.dim)
        v = rng.normal(scale=scale, size=cost.dim)
        gap = cost.value((u + v) / 2) - 0.5 * (cost.value(u) + cost.value(v))
        worst = max(worst, gap)
    return float(worst)


def gradient_consistency_error(cost: CostFunction, rng: np.random.Generator,
                               points: int = 50, step: float = 1e-6) -> float:
    """Max relative error of the declared gradient vs central differences."""
    worst = 0.0
    for _ in range(points):
        v = rng.normal(size=cost.dim)
        grad = cost.gradient(v)
        for idx in range(cost.dim):
            bump = np.zeros(cost.dim)
            bump[idx] = step
            numeric = (cost.value(v + bump) - cost.value(v - bump)) / (2 * step)
            denom = max(1.0, abs(grad[idx]), abs(numeric))
            worst = max(worst, abs(grad[idx] - numeric) / denom)
    return worst
