"""Trace-driven Monte Carlo replay and random layered DAG generation.

Each cross-boundary transfer draws a fresh (queue, rate, power) triple from
the configured distributions; completion times and realized energy are then
recomputed with those draws.  Replications run on independent, index-derived
RNG streams, so reports are reproducible bit for bit.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .energy import (
    OffloadDecision,
    SystemParams,
    TraceExhaustedError,
    slot_table,
)
from .gev import GevParams, gev_sample
from .graph import DataEdge, TaskGraph, TaskModule, topological_order

FAMILIES = ("lognormal", "uniform", "gev", "empirical")


@dataclass(frozen=True)
class DistSpec:
    """Distribution of one traced quantity; `empirical` replays a recording."""

    family: str
    params: dict

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}, expected one of {FAMILIES}")

    def sampler(self, rng: np.random.Generator):
        """Per-run draw callable; empirical replay restarts at each run."""
        if self.family == "lognormal":
            mean, sigma = self.params["mean_log"], self.params["sigma_log"]
            return lambda: float(rng.lognormal(mean, sigma))
        if self.family == "uniform":
            low, high = self.params["low"], self.params["high"]
            return lambda: float(rng.uniform(low, high))
        if self.family == "gev":
            gp = GevParams(self.params["mu"], self.params["sigma"], self.params["xi"])
            return lambda: gev_sample(gp, rng)
        values = list(self.params["values"])
        iterator = iter(values)

        def replay():
            try:
                return float(next(iterator))
            except StopIteration:
                raise TraceExhaustedError("empirical trace exhausted") from None

        return replay


@dataclass(frozen=True)
class TraceModel:
    """Distributions for the six traced quantities plus the stream seed."""

    rate_up: DistSpec
    rate_down: DistSpec
    queue_up_bits: DistSpec
    queue_down_bits: DistSpec
    power_up: DistSpec
    power_down: DistSpec
    rate_floor_bps: float = 1e3
    seed: int = 0

    @classmethod
    def from_dict(cls, data: dict) -> "TraceModel":
        kwargs = {}
        for name in (
            "rate_up",
            "rate_down",
            "queue_up_bits",
            "queue_down_bits",
            "power_up",
            "power_down",
        ):
            spec = data[name]
            kwargs[name] = DistSpec(spec["family"], spec["params"])
        kwargs["rate_floor_bps"] = float(data.get("rate_floor_bps", 1e3))
        kwargs["seed"] = int(data.get("seed", 0))
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path: str | Path) -> "TraceModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class SimRun:
    """One replay: realized energy, completion slots, and per-edge transfers."""

    energy: float
    completion: dict[int, int]
    deadline_met: bool
    transfers: list[tuple[int, int, str, float]]  # (src, dst, direction, seconds)


@dataclass
class SimReport:
    replications: int
    mean_energy: float
    energy_quantiles: dict[str, float]
    deadline_violation_rate: float
    edge_exceedance: dict[str, dict]
    seed: int

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def simulate_execution(
    graph: TaskGraph,
    decision: OffloadDecision,
    model: TraceModel,
    params: SystemParams,
    rng: np.random.Generator,
) -> SimRun:
    """Replay the DAG once: draw per-transfer traces, recompute timing/energy."""
    slots = slot_table(graph, params)
    draw_ru = model.rate_up.sampler(rng)
    draw_rd = model.rate_down.sampler(rng)
    draw_qu = model.queue_up_bits.sampler(rng)
    draw_qd = model.queue_down_bits.sampler(rng)
    draw_pu = model.power_up.sampler(rng)
    draw_pd = model.power_down.sampler(rng)
    floor = model.rate_floor_bps

    coef = params.kappa * params.f_c_hz * params.f_c_hz
    energy_terms = [
        coef * m.workload_cycles for m in graph.modules if decision.is_client(m.id)
    ]
    completion: dict[int, int] = {}
    transfers: list[tuple[int, int, str, float]] = []
    for node in topological_order(graph):
        node_client = decision.is_client(node)
        ready = 0
        for parent in graph.parents[node]:
            parent_client = decision.is_client(parent)
            transfer_slots = 0
            if parent_client != node_client:
                bits = graph.bits(parent, node)
                if parent_client:  # uplink
                    queue = max(draw_qu(), 0.0)
                    rate = max(draw_ru(), floor)
                    power = max(draw_pu(), 0.0)
                    direction = "up"
                else:  # downlink
                    queue = max(draw_qd(), 0.0)
                    rate = max(draw_rd(), floor)
                    power = max(draw_pd(), 0.0)
                    direction = "down"
                seconds = (queue + bits) / rate
                transfer_slots = int(math.ceil(seconds / params.delta_s))
                energy_terms.append(power * bits / rate)
                transfers.append((parent, node, direction, seconds))
            ready = max(ready, completion[parent] + transfer_slots)
        completion[node] = ready + slots.at(node, decision.location[node])

    return SimRun(
        energy=math.fsum(energy_terms),
        completion=completion,
        deadline_met=completion[graph.n_nodes] <= params.deadline_slots,
        transfers=transfers,
    )


def monte_carlo(
    graph: TaskGraph,
    decision: OffloadDecision,
    model: TraceModel,
    params: SystemParams,
    replications: int,
) -> SimReport:
    """Aggregate independent replays; per-edge exceedance is measured against
    the planning quantiles z_up/z_down (in slot units)."""
    if replications < 1:
        raise ValueError(f"replications must be >= 1, got {replications}")
    z_up_seconds = params.z_up_slots * params.delta_s
    z_down_seconds = params.z_down_slots * params.delta_s

    energies = np.empty(replications)
    violations = 0
    exceed_counts: dict[tuple[int, int, str], list[int]] = {}
    for r in range(replications):
        rng = np.random.default_rng([model.seed, r])
        run = simulate_execution(graph, decision, model, params, rng)
        energies[r] = run.energy
        if not run.deadline_met:
            violations += 1
        for src, dst, direction, seconds in run.transfers:
            key = (src, dst, direction)
            counts = exceed_counts.setdefault(key, [0, 0])
            counts[0] += 1
            threshold = z_up_seconds if direction == "up" else z_down_seconds
            if seconds > threshold:
                counts[1] += 1

    quantiles = {
        "p50": float(np.quantile(energies, 0.50)),
        "p90": float(np.quantile(energies, 0.90)),
        "p99": float(np.quantile(energies, 0.99)),
    }
    exceedance = {
        f"{src}->{dst}": {
            "direction": direction,
            "events": counts[0],
            "exceedances": counts[1],
            "rate": counts[1] / counts[0],
        }
        for (src, dst, direction), counts in sorted(exceed_counts.items())
    }
    return SimReport(
        replications=replications,
        mean_energy=float(energies.mean()),
        energy_quantiles=quantiles,
        deadline_violation_rate=violations / replications,
        edge_exceedance=exceedance,
        seed=model.seed,
    )


@dataclass(frozen=True)
class LayeredDagSpec:
    """Shape and weight distributions for random layer-by-layer DAGs."""

    n_nodes: int
    edge_prob: float
    width_min: int = 1
    width_max: int = 5
    workload_scale: float = 1e6
    bit_scale: float = 1.2e4

    def __post_init__(self):
        if self.n_nodes < 2:
            raise ValueError("need at least 2 nodes")
        if not 0.0 < self.edge_prob <= 1.0:
            raise ValueError("edge probability must lie in (0, 1]")
        if not 1 <= self.width_min <= self.width_max:
            raise ValueError("bad layer width range")


def _half_normal_int(rng: np.random.Generator, scale: float) -> int:
    return max(1, int(math.ceil(abs(rng.normal(0.0, scale)))))


def gen_layered_dag(spec: LayeredDagSpec, rng: np.random.Generator) -> TaskGraph:
    """Random layered DAG: adjacent-layer edges with probability p, then
    minimal repair edges so every node is reachable from 1 and reaches N."""
    n = spec.n_nodes
    workloads = {node: _half_normal_int(rng, spec.workload_scale) for node in range(1, n + 1)}
    if n == 2:
        modules = [TaskModule(i, workloads[i]) for i in (1, 2)]
        return TaskGraph(modules, [DataEdge(1, 2, _half_normal_int(rng, spec.bit_scale))])

    interior = list(range(2, n))
    layers: list[list[int]] = [[1]]
    idx = 0
    while idx < len(interior):
        width = int(rng.integers(spec.width_min, spec.width_max + 1))
        layers.append(interior[idx : idx + width])
        idx += width
    layers.append([n])

    edge_set: set[tuple[int, int]] = set()
    for upper, lower in zip(layers, layers[1:]):
        for src in upper:
            for dst in lower:
                if rng.random() < spec.edge_prob:
                    edge_set.add((src, dst))

    # Repair pass: orphaned nodes get one parent from the previous layer,
    # childless nodes one child in the next layer.
    parents: dict[int, int] = {node: 0 for node in range(1, n + 1)}
    children: dict[int, int] = {node: 0 for node in range(1, n + 1)}
    for src, dst in edge_set:
        children[src] += 1
        parents[dst] += 1
    for depth in range(1, len(layers)):
        prev = layers[depth - 1]
        for node in layers[depth]:
            if parents[node] == 0:
                src = prev[int(rng.integers(0, len(prev)))]
                if (src, node) not in edge_set:
                    edge_set.add((src, node))
                    children[src] += 1
                    parents[node] += 1
    for depth in range(len(layers) - 2, -1, -1):
        nxt = layers[depth + 1]
        for node in layers[depth]:
            if children[node] == 0:
                dst = nxt[int(rng.integers(0, len(nxt)))]
                if (node, dst) not in edge_set:
                    edge_set.add((node, dst))
                    children[node] += 1
                    parents[dst] += 1

    edges = [
        DataEdge(src, dst, _half_normal_int(rng, spec.bit_scale))
        for src, dst in sorted(edge_set)
    ]
    modules = [TaskModule(node, workloads[node]) for node in range(1, n + 1)]
    return TaskGraph(modules, edges)
