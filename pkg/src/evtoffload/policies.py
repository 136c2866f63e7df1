"""Exact offloading policies for purely sequential and purely parallel DAGs.

A chain's optimum crosses the device/server boundary at most once, so
enumerating contiguous offload windows is exhaustive.  A fan's optimum
decomposes per node into a local-versus-transfer threshold; with a binding
deadline the threshold rule falls back to the general solver.
"""
from __future__ import annotations

from dataclasses import dataclass

from . import colgen
from .energy import (
    CLIENT,
    SERVER,
    InfeasibleError,
    OffloadDecision,
    SystemParams,
    worst_case_expected_energy,
)
from .graph import TaskGraph
from .oracle import earliest_completion


@dataclass(frozen=True)
class ChainInstance:
    """TaskGraph whose edges form exactly the path 1 -> 2 -> ... -> N."""

    graph: TaskGraph

    def __post_init__(self):
        if not is_chain(self.graph):
            raise ValueError("graph is not a sequential chain")


@dataclass(frozen=True)
class FanInstance:
    """TaskGraph where node 1 feeds every interior node and they feed node N."""

    graph: TaskGraph

    def __post_init__(self):
        if not is_fan(self.graph):
            raise ValueError("graph is not a parallel fan")


def is_chain(graph: TaskGraph) -> bool:
    n = graph.n_nodes
    if n < 2:
        return False
    expected = {(i, i + 1) for i in range(1, n)}
    return {(e.src, e.dst) for e in graph.edges} == expected


def is_fan(graph: TaskGraph) -> bool:
    n = graph.n_nodes
    if n < 3:
        return False
    expected = {(1, i) for i in range(2, n)} | {(i, n) for i in range(2, n)}
    return {(e.src, e.dst) for e in graph.edges} == expected


def solve_sequential(chain: ChainInstance, params: SystemParams) -> OffloadDecision:
    """Best contiguous offload window [u, v] (or none) on a chain.

    Enumerates all O(N^2) windows plus the all-local choice, schedules each
    with the earliest-completion recurrence, and keeps the cheapest feasible
    one; ties stay with the earliest window enumerated (all-local first).
    """
    graph = chain.graph
    n = graph.n_nodes
    windows: list[tuple[int, int] | None] = [None]
    windows += [(u, v) for u in range(2, n) for v in range(u, n)]

    best_decision = None
    best_psi = None
    for window in windows:
        location = {node: CLIENT for node in graph.node_ids}
        if window is not None:
            for node in range(window[0], window[1] + 1):
                location[node] = SERVER
        schedule = earliest_completion(graph, location, params)
        if not schedule.feasible:
            continue
        decision = OffloadDecision(location=location, slot=schedule.slots)
        psi = worst_case_expected_energy(graph, decision, params).psi
        if best_psi is None or psi < best_psi:
            best_psi = psi
            best_decision = decision
    if best_decision is None:
        raise InfeasibleError("no offload window (including all-local) meets the deadline")
    return best_decision


def solve_parallel(fan: FanInstance, params: SystemParams) -> OffloadDecision:
    """Threshold policy on a fan: offload every node whose local energy
    exceeds its unavoidable transfer energy.

    The threshold compares kappa*omega*f_c^2 against o_in*theta_up +
    o_out*theta_down, consistent with the psi objective.  If the resulting
    schedule misses the deadline the general column-generation solver takes
    over, since the threshold rule ignores timing.
    """
    graph = fan.graph
    n = graph.n_nodes
    coef = params.kappa * params.f_c_hz * params.f_c_hz
    location = {node: CLIENT for node in graph.node_ids}
    for node in graph.interior_ids():
        local = coef * graph.workload(node)
        transfer = graph.bits(1, node) * params.theta_up + graph.bits(node, n) * params.theta_down
        if local > transfer:
            location[node] = SERVER

    schedule = earliest_completion(graph, location, params)
    if schedule.feasible:
        return OffloadDecision(location=location, slot=schedule.slots)
    return colgen.solve(graph, params).decision
