"""Declarative scenario files: parsing, validation, and closed-loop building.

Scenarios are JSON objects with sections graph / exosystem / plant /
controller and optional cost / sim / outputs sections. Matrices are
row-major nested lists, node indices are 1-based. Unknown keys are
rejected so typos fail loudly. The seed in the sim section governs only
initial-condition sampling; the dynamics themselves are deterministic.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import controller as ctrl
from . import exosystem as exo
from . import plant as plant_mod
from .errors import FlowRegError, ScenarioError
from .graph import Graph, is_connected
from .optimizer import QuadraticCost, QuarticCost
from .regulator import compute_H, rank_feasibility
from .sim import assemble

_SECTIONS = {"graph", "exosystem", "plant", "controller", "cost", "sim", "outputs"}
_DEFAULT_SIM = {"dt": 1e-3, "horizon": 100.0, "record_every": 1, "seed": 0}


@dataclass
class Scenario:
    """Parsed scenario, still declarative (nothing sampled or assembled yet)."""

    graph: Graph
    edge_weights: np.ndarray
    exosystem: exo.ExosystemSpec
    exosystem_w0: np.ndarray | None
    plant: object
    plant_x0: np.ndarray | None
    plant_x0_box: np.ndarray | None
    controller_type: str
    controller_init: str
    controller_gain: np.ndarray | None
    bregman_mode: str
    cost: object | None
    dt: float
    horizon: float
    record_every: int
    seed: int
    csv_path: str | None
    report_path: str | None


@dataclass
class Built:
    """Scenario resolved into runnable pieces."""

    loop: object
    w0: np.ndarray
    x0: np.ndarray
    controller_state0: np.ndarray
    cost: object | None


@dataclass
class Diagnostic:
    name: str
    passed: bool
    message: str = ""


def load(path):
    """Parse a scenario file; raises ScenarioError on malformed input."""
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ScenarioError(f"cannot read scenario file: {err}") from err
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ScenarioError(f"scenario is not valid JSON: {err}") from err
    return from_dict(data)


def from_dict(data):
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a JSON object")
    _reject_unknown(data, _SECTIONS, "scenario")
    for required in ("graph", "exosystem", "plant", "controller"):
        if required not in data:
            raise ScenarioError(f"missing required section {required!r}")

    graph, weights = _parse_graph(data["graph"])
    spec, w0 = _parse_exosystem(data["exosystem"])
    plant, x0, x0_box = _parse_plant(data["plant"], graph)
    ctype, cinit, gain, mode = _parse_controller(data["controller"])
    cost = _parse_cost(data.get("cost"), graph) if "cost" in data else None

    sim_section = dict(_DEFAULT_SIM)
    if "sim" in data:
        _reject_unknown(data["sim"], set(_DEFAULT_SIM), "sim")
        sim_section.update(data["sim"])
    outputs = data.get("outputs", {})
    _reject_unknown(outputs, {"csv", "report"}, "outputs")

    return Scenario(
        graph=graph,
        edge_weights=weights,
        exosystem=spec,
        exosystem_w0=w0,
        plant=plant,
        plant_x0=x0,
        plant_x0_box=x0_box,
        controller_type=ctype,
        controller_init=cinit,
        controller_gain=gain,
        bregman_mode=mode,
        cost=cost,
        dt=float(sim_section["dt"]),
        horizon=float(sim_section["horizon"]),
        record_every=int(sim_section["record_every"]),
        seed=int(sim_section["seed"]),
        csv_path=outputs.get("csv"),
        report_path=outputs.get("report"),
    )


def validate(scenario):
    """Run all module validators; returns a list of Diagnostic rows."""
    rows = [Diagnostic("graph connected", is_connected(scenario.graph))]

    exo_violations = exo.validate(scenario.exosystem)
    rows.append(Diagnostic("exosystem structure", not exo_violations,
                           "; ".join(exo_violations)))

    plant_violations = scenario.plant.validate()
    rows.append(Diagnostic("plant passivity certificate", not plant_violations,
                           "; ".join(plant_violations)))

    parts = plant_mod.stacked_matrices(scenario.plant)
    if parts is not None and scenario.exosystem.kind in (exo.SKEW, exo.CONSTANT):
        A, G, C, _ = parts
        S = _internal_matrix(scenario.exosystem)
        feasible, offending = rank_feasibility(
            A, G, C, S, scenario.graph, scenario.plant.output_dim)
        rows.append(Diagnostic(
            "regulator rank feasibility", feasible,
            "" if feasible else f"offending eigenvalues {offending}"))

    try:
        build(scenario)
        rows.append(Diagnostic("closed loop assembles", True))
    except FlowRegError as err:
        rows.append(Diagnostic("closed loop assembles", False, str(err)))
    return rows


def build(scenario):
    """Sample initial conditions, construct the controller, and assemble the loop."""
    rng = np.random.default_rng(scenario.seed)
    if scenario.exosystem_w0 is not None:
        w0 = scenario.exosystem_w0
    else:
        w0 = exo.sample_initial(scenario.exosystem, rng)
    if scenario.plant_x0 is not None:
        x0 = scenario.plant_x0
    else:
        box = scenario.plant_x0_box
        if box is None:
            x0 = np.zeros(scenario.plant.state_dim)
        else:
            x0 = rng.uniform(box[:, 0], box[:, 1])
    if x0.shape != (scenario.plant.state_dim,):
        raise ScenarioError(
            f"x0 must have {scenario.plant.state_dim} entries, got {x0.shape}")

    controller = _build_controller(scenario)
    loop = assemble(scenario.graph, scenario.exosystem, scenario.plant, controller)

    if scenario.controller_init == "matched":
        if isinstance(controller, ctrl.BregmanEdgeController):
            supply = scenario.plant.supply_map @ w0
            c0 = controller.init_matched(w0, supply=supply)
        else:
            c0 = controller.init_matched(w0)
    else:
        c0 = np.zeros(controller.state_dim)

    return Built(loop=loop, w0=w0, x0=x0, controller_state0=c0, cost=scenario.cost)


def _build_controller(scenario):
    kind = scenario.controller_type
    S = _internal_matrix(scenario.exosystem)
    if kind in ("edge_im", "inventory_routing"):
        gain = scenario.controller_gain
        if gain is None:
            gain = _default_flow_gain(scenario)
        if kind == "edge_im":
            return ctrl.edge_internal_model(S, gain)
        return ctrl.inventory_routing(S, gain)
    if kind == "dual_lq":
        if not isinstance(scenario.cost, QuadraticCost):
            raise ScenarioError("dual_lq controller needs a quadratic cost section")
        weights = scenario.cost.weights
        gain = scenario.controller_gain
        if gain is None:
            gain = compute_H(scenario.graph, weights, _supply_map(scenario)).dual
        return ctrl.DualNodeInternalModel(
            internal_matrix=S, dual_rows=gain,
            edge_weights=weights, graph=scenario.graph)
    if kind == "bregman":
        if scenario.cost is None:
            raise ScenarioError("bregman controller needs a cost section")
        return ctrl.BregmanEdgeController(
            cost=scenario.cost, graph=scenario.graph, mode=scenario.bregman_mode)
    raise ScenarioError(f"unknown controller type {kind!r}")


def _internal_matrix(spec):
    if spec.kind == exo.SKEW:
        return spec.skew_matrix
    if spec.kind == exo.CONSTANT:
        return np.zeros((spec.state_dim, spec.state_dim))
    raise ScenarioError(
        "matrix internal-model controllers need a skew or constant exosystem")


def _supply_map(scenario):
    if not isinstance(scenario.plant, plant_mod.InventoryPlant):
        raise ScenarioError(
            "an explicit controller gain is required for non-inventory plants")
    return scenario.plant.supply_map


def _default_flow_gain(scenario):
    return compute_H(scenario.graph, scenario.edge_weights, _supply_map(scenario)).flow


# section parsers

def _parse_graph(section):
    _reject_unknown(section, {"nodes", "edges", "weights"}, "graph")
    try:
        graph = Graph.from_one_based(int(section["nodes"]),
                                     [tuple(e) for e in section["edges"]])
    except (KeyError, TypeError, ValueError) as err:
        raise ScenarioError(f"bad graph section: {err}") from err
    weights = np.asarray(section.get("weights", np.ones(graph.edge_count)), dtype=float)
    if weights.shape != (graph.edge_count,):
        raise ScenarioError("graph weights must list one value per edge")
    return graph, weights


def _parse_exosystem(section):
    _reject_unknown(section, {"type", "S", "curvature", "dim", "w0", "box"}, "exosystem")
    kind = section.get("type")
    box = section.get("box")
    w0 = np.asarray(section["w0"], dtype=float) if section.get("w0") is not None else None
    try:
        if kind == "skew":
            spec = exo.linear_skew(section["S"], box=box)
        elif kind == "gradient":
            spec = exo.gradient_concave(section["curvature"], box=box)
        elif kind == "constant":
            dim = section.get("dim")
            if dim is None:
                if w0 is None:
                    raise ScenarioError("constant exosystem needs 'dim' or 'w0'")
                dim = w0.shape[0]
            spec = exo.constant(dim, box=box)
        else:
            raise ScenarioError(f"unknown exosystem type {kind!r}")
    except (KeyError, TypeError) as err:
        raise ScenarioError(f"bad exosystem section: {err}") from err
    if w0 is not None and w0.shape != (spec.state_dim,):
        raise ScenarioError(f"w0 must have {spec.state_dim} entries")
    return spec, w0


def _parse_plant(section, graph):
    _reject_unknown(section, {"type", "P", "nodes", "x0"}, "plant")
    kind = section.get("type")
    try:
        if kind == "inventory":
            plant = plant_mod.InventoryPlant(np.asarray(section["P"], dtype=float))
        elif kind == "linear":
            nodes = tuple(
                plant_mod.LinearNode(**{k: np.asarray(v, dtype=float)
                                        for k, v in node.items()})
                for node in section["nodes"])
            plant = plant_mod.LinearPassivePlant(nodes)
        elif kind == "gradient":
            nodes = tuple(
                plant_mod.GradientNonlinearNode(
                    drift=_parse_drift(node["drift"]),
                    C=np.asarray(node["C"], dtype=float),
                    P=np.asarray(node["P"], dtype=float))
                for node in section["nodes"])
            plant = plant_mod.GradientNonlinearPlant(nodes)
        else:
            raise ScenarioError(f"unknown plant type {kind!r}")
    except (KeyError, TypeError) as err:
        raise ScenarioError(f"bad plant section: {err}") from err

    x0 = None
    x0_box = None
    raw_x0 = section.get("x0")
    if isinstance(raw_x0, dict):
        _reject_unknown(raw_x0, {"box"}, "plant.x0")
        x0_box = np.asarray(raw_x0["box"], dtype=float)
        if x0_box.shape != (plant.state_dim, 2):
            raise ScenarioError(f"x0 box must have shape ({plant.state_dim}, 2)")
    elif raw_x0 is not None:
        x0 = np.asarray(raw_x0, dtype=float)
    return plant, x0, x0_box


def _parse_drift(section):
    _reject_unknown(section, {"kind", "curvature", "scale"}, "plant drift")
    kind = section.get("kind")
    if kind == "quadratic":
        return plant_mod.ConcaveQuadraticDrift(np.asarray(section["curvature"], dtype=float))
    if kind == "cubic":
        return plant_mod.CubicDrift()
    if kind == "tanh":
        return plant_mod.TanhDrift(float(section.get("scale", 1.0)))
    raise ScenarioError(f"unknown drift kind {kind!r}")


def _parse_controller(section):
    _reject_unknown(section, {"type", "init", "H", "M", "mode"}, "controller")
    kind = section.get("type")
    if kind not in ("edge_im", "inventory_routing", "dual_lq", "bregman"):
        raise ScenarioError(f"unknown controller type {kind!r}")
    init = section.get("init", "zero")
    if init not in ("zero", "matched"):
        raise ScenarioError(f"controller init must be 'zero' or 'matched', got {init!r}")
    gain = None
    if "M" in section and section["M"] is not None:
        gain = np.asarray(section["M"], dtype=float)
    if "H" in section and section["H"] is not None:
        gain = np.asarray(section["H"], dtype=float)
    mode = section.get("mode", ctrl.DUAL_SIGMA)
    return kind, init, gain, mode


def _parse_cost(section, graph):
    if section is None:
        return None
    _reject_unknown(section, {"type", "weights", "a", "b"}, "cost")
    kind = section.get("type")
    try:
        if kind == "quadratic":
            cost = QuadraticCost(np.asarray(section["weights"], dtype=float))
        elif kind == "quartic":
            cost = QuarticCost(np.asarray(section["a"], dtype=float),
                               np.asarray(section["b"], dtype=float))
        else:
            raise ScenarioError(f"unknown cost type {kind!r}")
    except (KeyError, TypeError, ValueError) as err:
        raise ScenarioError(f"bad cost section: {err}") from err
    if cost.edge_count != graph.edge_count:
        raise ScenarioError("cost must have one component per edge")
    return cost


def _reject_unknown(section, allowed, name):
    if not isinstance(section, dict):
        raise ScenarioError(f"section {name!r} must be an object")
    unknown = set(section) - allowed
    if unknown:
        raise ScenarioError(f"unknown keys in {name!r}: {sorted(unknown)}")
