"""Column-generation solver for the offloading problem.

The restricted master fixes execution locations and is a pure feasibility
check, so upper bounds come from re-evaluating the energy objective.  The
schedule starts from the serial all-local assignment and is updated
incrementally: an admitted column places its node at the completion slot
chosen by pricing and leaves every other slot untouched, which is what
preserves the slack the pricing windows need.

Dual prices for the pricing step come from a compact phase-one LP over
relaxed completion times (dense simplex, Bland's rule); when that LP prices
every dependency row at zero - which it provably does whenever a feasible
schedule exists - tightness-weighted heuristic prices take over.

Pricing follows the reduced-cost form

    zeta_n = sum_m c_m o_mn theta_u + sum_k c_k o_nk theta_d
             - sum_m pi_mn b_mn - sum_k pi_nk b_nk

scanned exactly over every feasible completion slot of the candidate.  A
column is admitted only if it strictly lowers the energy objective;
otherwise it is blacklisted for later rounds.  An admission that breaks
master feasibility is rolled back when the next master check signals it.

Bound bookkeeping: r_underbar records the pricing value of each round, but
psi_lower is held at a provable combinatorial floor on psi (see
`attribution_lower_bound`) because the textbook update
psi_upper + K * r_underbar is only heuristic here and can overshoot the
true optimum.  The solver labels an exit as optimal only when the full
candidate grid prices nonnegative, no single relocation lowers the energy,
and the upper bound meets that combinatorial floor - a sound certificate,
unlike the raw nonnegative-pricing test.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .energy import (
    CLIENT,
    SERVER,
    InfeasibleError,
    OffloadDecision,
    EnergyReport,
    SystemParams,
    check_constraints,
    slot_table,
    worst_case_expected_energy,
)
from .graph import GraphValidationError, TaskGraph, topological_order, validate_graph
from .simplex import OPTIMAL, solve_standard_form

DUAL_TOL = 1e-12
CERT_REL_TOL = 1e-12

EXIT_NO_COLUMN = "no_column"
EXIT_PRICING_NONNEG = "pricing_nonneg"
EXIT_RATIO = "ratio"


class RmpInfeasible(Exception):
    """The current schedule violates the master constraints: reject the
    most recently added column."""


class NoFeasibleSlotError(Exception):
    """A candidate's completion-slot window is empty."""


@dataclass
class PricedColumn:
    node: int
    reduced_cost: float
    t_min: int
    t_max: int
    slot: int


@dataclass
class IterationRecord:
    index: int
    psi_upper: float
    psi_lower: float
    r_underbar: float
    admitted_node: int | None


@dataclass(frozen=True)
class Bounds:
    psi_lower: float
    psi_upper: float


@dataclass
class SolverState:
    """Mutable solve-loop state: locations, schedule, prices and bounds."""

    graph: TaskGraph
    params: SystemParams
    server_set: set[int] = field(default_factory=set)
    blacklist: set[int] = field(default_factory=set)
    schedule: dict[int, int] = field(default_factory=dict)
    duals: dict[tuple[int, int], float] = field(default_factory=dict)
    psi_upper: float = math.inf
    psi_lower: float = 0.0
    r_underbar: float = math.inf
    iterations: int = 0
    k_const: int = 0

    def location(self, node: int) -> str:
        return SERVER if node in self.server_set else CLIENT

    def location_map(self) -> dict[int, str]:
        return {n: self.location(n) for n in self.graph.node_ids}

    def decision(self) -> OffloadDecision:
        return OffloadDecision(location=self.location_map(), slot=dict(self.schedule))


@dataclass
class SolveResult:
    decision: OffloadDecision
    report: EnergyReport
    bounds: Bounds
    iterations: int
    log: list[IterationRecord]
    exit_reason: str
    full_grid_nonneg: bool
    optimal_certified: bool
    epsilon: float


def initial_rmp(graph: TaskGraph, params: SystemParams) -> SolverState:
    """All-local starting state with the serial one-module-at-a-time schedule.

    Serializing the whole application is what leaves slack between
    independent branches for later pricing windows.
    """
    slots = slot_table(graph, params)
    order = topological_order(graph)
    total = sum(slots.client[n] for n in order)
    if total > params.deadline_slots:
        raise InfeasibleError(
            f"deadline too tight for local execution ({total} > {params.deadline_slots} slots)"
        )
    schedule: dict[int, int] = {}
    clock = 0
    for node in order:
        clock += slots.client[node]
        schedule[node] = clock
    state = SolverState(graph=graph, params=params)
    state.schedule = schedule
    state.psi_upper = worst_case_expected_energy(graph, state.decision(), params).psi
    state.psi_lower = 0.0
    state.k_const = max(graph.n_nodes - 2, 0)
    return state


def _dependency_need(
    graph: TaskGraph, location: dict[int, str], params: SystemParams, slots
) -> dict[tuple[int, int], int]:
    """Required slot gap per edge: transfer quantile plus head execution."""
    need: dict[tuple[int, int], int] = {}
    for e in graph.edges:
        src_client = location[e.src] == CLIENT
        dst_client = location[e.dst] == CLIENT
        if src_client and not dst_client:
            transfer = params.z_up_slots
        elif not src_client and dst_client:
            transfer = params.z_down_slots
        else:
            transfer = 0
        need[(e.src, e.dst)] = transfer + slots.at(e.dst, location[e.dst])
    return need


def phase_one_duals(
    graph: TaskGraph,
    location: dict[int, str],
    params: SystemParams,
    simplex_budget: int = 250_000,
) -> dict[tuple[int, int], float] | None:
    """Dependency-row duals of the phase-one LP, or None when over budget.

    The LP relaxes each completion time to tau_n in [1, T], adds a
    nonnegative violation variable to every dependency row and the deadline
    row, and minimizes total violation.  Whenever the fixed locations admit
    a feasible schedule its optimum is 0 and the all-zero dual vector is
    optimal, so skipping the mechanical pivoting above the size budget
    returns an equally valid (zero) multiplier vector.
    """
    n = graph.n_nodes
    n_edges = len(graph.edges)
    slots = slot_table(graph, params)
    need = _dependency_need(graph, location, params, slots)
    horizon = float(params.deadline_slots - 1)

    rows = n_edges + 1 + n
    cols_total = 2 * n + 2 * n_edges + 2
    if rows * cols_total > simplex_budget:
        return None

    node_col = {node: i for i, node in enumerate(graph.node_ids)}
    viol_t = n + 2 * n_edges
    surp_t = n + 2 * n_edges + 1

    # Column layout: [u_1..u_N | v_e, s_e per edge | v_T, s_T | w_1..w_N]
    a_mat = np.zeros((rows, cols_total + n))
    b_vec = np.zeros(rows)
    c_vec = np.zeros(cols_total + n)
    basis: list[int] = []

    edges = sorted(graph.edges, key=lambda e: (e.src, e.dst))
    for i, e in enumerate(edges):
        viol = n + 2 * i
        surp = n + 2 * i + 1
        a_mat[i, node_col[e.dst]] = 1.0
        a_mat[i, node_col[e.src]] = -1.0
        a_mat[i, viol] = 1.0
        a_mat[i, surp] = -1.0
        b_vec[i] = float(need[(e.src, e.dst)])
        c_vec[viol] = 1.0
        basis.append(viol)

    row_t = n_edges
    a_mat[row_t, node_col[n]] = 1.0
    a_mat[row_t, viol_t] = -1.0
    a_mat[row_t, surp_t] = 1.0
    b_vec[row_t] = horizon
    c_vec[viol_t] = 1.0
    basis.append(surp_t)

    for i, node in enumerate(graph.node_ids):
        row = n_edges + 1 + i
        w = cols_total + i
        a_mat[row, node_col[node]] = 1.0
        a_mat[row, w] = 1.0
        b_vec[row] = horizon
        basis.append(w)

    result = solve_standard_form(c_vec, a_mat, b_vec, basis)
    if result.status != OPTIMAL:
        return None
    return {
        (e.src, e.dst): max(float(result.duals[i]), 0.0) for i, e in enumerate(edges)
    }


def tightness_duals(
    graph: TaskGraph,
    location: dict[int, str],
    schedule: dict[int, int],
    params: SystemParams,
) -> dict[tuple[int, int], float]:
    """Heuristic prices 1/(1 + slack) per dependency edge, normalized to sum 1."""
    slots = slot_table(graph, params)
    need = _dependency_need(graph, location, params, slots)
    weights = {}
    for e in graph.edges:
        gap = schedule[e.dst] - schedule[e.src]
        slack = max(gap - need[(e.src, e.dst)], 0)
        weights[(e.src, e.dst)] = 1.0 / (1.0 + slack)
    total = math.fsum(weights.values())
    if total <= 0:
        return {key: 0.0 for key in weights}
    return {key: w / total for key, w in weights.items()}


def solve_rmp(
    state: SolverState,
    graph: TaskGraph,
    params: SystemParams,
    simplex_budget: int = 250_000,
) -> tuple[float, dict[tuple[int, int], float], dict[int, int]]:
    """Feasibility-check the current schedule; refresh the bound and duals.

    Raises RmpInfeasible when the schedule violates any master constraint,
    which tells the caller to reject the most recently added column.
    """
    violations = check_constraints(graph, state.decision(), params)
    if violations:
        raise RmpInfeasible(violations[0].detail)
    state.psi_upper = worst_case_expected_energy(graph, state.decision(), params).psi

    location = state.location_map()
    duals = phase_one_duals(graph, location, params, simplex_budget)
    if duals is None:
        duals = {}
    if not duals or max(duals.values()) <= DUAL_TOL:
        duals = tightness_duals(graph, location, state.schedule, params)
    state.duals = duals
    return state.psi_upper, duals, dict(state.schedule)


def feasible_slot_range(
    node: int, state: SolverState, graph: TaskGraph, params: SystemParams
) -> tuple[int, int]:
    """Completion-slot window for moving `node` to the server.

    Every slot in the window keeps all constraints touching the node
    satisfied with the rest of the schedule unchanged.
    """
    slots = slot_table(graph, params)
    exec_server = slots.server[node]
    t_min = 0
    for parent in graph.parents[node]:
        transfer = params.z_up_slots if state.location(parent) == CLIENT else 0
        t_min = max(t_min, state.schedule[parent] + transfer)
    t_min = max(t_min + exec_server, 1)

    t_max = params.deadline_slots
    for child in graph.children[node]:
        loc = state.location(child)
        transfer = params.z_down_slots if loc == CLIENT else 0
        t_max = min(t_max, state.schedule[child] - transfer - slots.at(child, loc))
    if t_min > t_max:
        raise NoFeasibleSlotError(f"node {node} has no feasible completion slot")
    return t_min, t_max


def reduced_cost(
    node: int, slot: int, state: SolverState, graph: TaskGraph, params: SystemParams
) -> float:
    """zeta for moving `node` to the server, completing at `slot`."""
    if node in state.server_set or node in (1, graph.n_nodes):
        raise ValueError(f"node {node} is not a pricing candidate")
    curve = _zeta_curve(node, np.array([slot], dtype=float), state, graph, params)
    return float(curve[0])


def _zeta_curve(
    node: int,
    t_arr: np.ndarray,
    state: SolverState,
    graph: TaskGraph,
    params: SystemParams,
) -> np.ndarray:
    slots = slot_table(graph, params)
    exec_server = slots.server[node]
    transfer = 0.0
    par_sum = 0.0
    par_off = 0.0
    for parent in graph.parents[node]:
        bits = graph.bits(parent, node)
        if state.location(parent) == CLIENT:
            transfer += bits * params.theta_up
        pi = state.duals.get((parent, node), 0.0)
        par_sum += pi
        par_off += pi * (state.schedule[parent] + exec_server)
    chi_sum = 0.0
    chi_off = 0.0
    for child in graph.children[node]:
        bits = graph.bits(node, child)
        loc = state.location(child)
        if loc == CLIENT:
            transfer += bits * params.theta_down
        pi = state.duals.get((node, child), 0.0)
        chi_sum += pi
        chi_off += pi * (state.schedule[child] - slots.at(child, loc))
    # zeta(t) = transfer - sum_m pi (t - slot_m - Es) - sum_k pi (slot_k - t - Ek)
    return transfer - (par_sum * t_arr - par_off) - (chi_off - chi_sum * t_arr)


def solve_td(
    node: int, state: SolverState, graph: TaskGraph, params: SystemParams
) -> tuple[int, float]:
    """Exact completion-slot choice: scan every slot in the feasible window.

    Returns the minimizing slot (smallest on ties) and its zeta value.  The
    scan is exact over the 1-sparse slot vector, so no rounding step is
    needed after an LP relaxation.
    """
    t_min, t_max = feasible_slot_range(node, state, graph, params)
    t_arr = np.arange(t_min, t_max + 1, dtype=float)
    zeta = _zeta_curve(node, t_arr, state, graph, params)
    idx = int(np.argmin(zeta))
    return t_min + idx, float(zeta[idx])


def solve_cs(candidates: list[tuple[int, float]]) -> int | None:
    """Column selection: the most negative reduced cost, ties to smallest id."""
    if not candidates:
        return None
    return min(candidates, key=lambda item: (item[1], item[0]))[0]


def _price_all(
    state: SolverState, graph: TaskGraph, params: SystemParams
) -> list[PricedColumn]:
    columns = []
    for node in graph.interior_ids():
        if node in state.server_set or node in state.blacklist:
            continue
        try:
            t_min, t_max = feasible_slot_range(node, state, graph, params)
        except NoFeasibleSlotError:
            continue
        slot, zeta = solve_td(node, state, graph, params)
        columns.append(PricedColumn(node, zeta, t_min, t_max, slot))
    return columns


def solve_npp(
    state: SolverState,
    graph: TaskGraph,
    params: SystemParams,
    max_iter: int = 20,
) -> tuple[PricedColumn | None, float]:
    """Price every candidate at its best slot, then select and stabilize.

    Alternates column selection over the candidate table with the exact
    slot choice for the incumbent until the pricing value stops changing
    (or max_iter).  Returns (best column, r_underbar); (None, 0.0) when no
    candidate has a feasible slot.
    """
    table = _price_all(state, graph, params)
    if not table:
        return None, 0.0
    pairs = [(col.node, col.reduced_cost) for col in table]
    by_node = {col.node: col for col in table}
    incumbent = solve_cs(pairs)
    r_value = by_node[incumbent].reduced_cost
    for _ in range(max_iter):
        slot, zeta = solve_td(incumbent, state, graph, params)
        col = by_node[incumbent]
        col.slot, col.reduced_cost = slot, zeta
        if zeta == r_value:
            break
        r_value = zeta
    return by_node[incumbent], r_value


def delta_psi(
    node: int, state: SolverState, graph: TaskGraph, params: SystemParams
) -> float:
    """Exact objective change from relocating `node` to the server."""
    change = -params.kappa * graph.workload(node) * params.f_c_hz * params.f_c_hz
    for parent in graph.parents[node]:
        bits = graph.bits(parent, node)
        if state.location(parent) == CLIENT:
            change += bits * params.theta_up
        else:
            change -= bits * params.theta_down
    for child in graph.children[node]:
        bits = graph.bits(node, child)
        if state.location(child) == CLIENT:
            change += bits * params.theta_down
        else:
            change -= bits * params.theta_up
    return change


def attribution_lower_bound(graph: TaskGraph, params: SystemParams) -> float:
    """Provable lower bound on psi over all assignments, deadline ignored.

    Charge each node the cheaper of running locally or the transfer cost it
    can never avoid when offloaded: traffic from the (always local) entry
    node and to the (always local) final node.  Every assignment pays at
    least this much, so the bound is safe to clamp psi_lower with.
    """
    coef = params.kappa * params.f_c_hz * params.f_c_hz
    n_last = graph.n_nodes
    terms = []
    for m in graph.modules:
        local = coef * m.workload_cycles
        if m.id == 1 or m.id == n_last:
            terms.append(local)
            continue
        pinned = 0.0
        if 1 in graph.parents[m.id]:
            pinned += graph.bits(1, m.id) * params.theta_up
        if n_last in graph.children[m.id]:
            pinned += graph.bits(m.id, n_last) * params.theta_down
        terms.append(min(local, pinned))
    return math.fsum(terms)


def _grid_verification(
    state: SolverState, graph: TaskGraph, params: SystemParams
) -> tuple[bool, bool]:
    """(all zeta >= 0 over the full grid, no single relocation helps).

    Ignores the blacklist: this is the full candidate grid of the pricing
    problem.
    """
    grid_nonneg = True
    stationary = True
    for node in graph.interior_ids():
        if node in state.server_set:
            continue
        if delta_psi(node, state, graph, params) < 0:
            stationary = False
        try:
            t_min, t_max = feasible_slot_range(node, state, graph, params)
        except NoFeasibleSlotError:
            continue
        t_arr = np.arange(t_min, t_max + 1, dtype=float)
        zeta = _zeta_curve(node, t_arr, state, graph, params)
        if float(zeta.min()) < 0.0:
            grid_nonneg = False
    return grid_nonneg, stationary


def solve(
    graph: TaskGraph,
    params: SystemParams,
    epsilon: float | None = None,
    simplex_budget: int = 250_000,
    npp_max_iter: int = 20,
) -> SolveResult:
    """Run the epsilon-bounded column-generation loop.

    Each round: check the master and refresh bound + duals, price one
    column, update the bound pair, test the three exit conditions, then
    either admit the column at its chosen slot or blacklist it.  At most
    N - 2 admissions can ever happen, so the loop terminates.
    """
    eps = params.epsilon if epsilon is None else epsilon
    if not 0.0 <= eps < 1.0:
        raise ValueError(f"epsilon must lie in [0, 1), got {eps}")
    violations = validate_graph(graph)
    if violations:
        raise GraphValidationError(violations)

    state = initial_rmp(graph, params)
    psi_floor = attribution_lower_bound(graph, params)
    log: list[IterationRecord] = []
    exit_reason = EXIT_NO_COLUMN
    dirty = True
    cached: list[PricedColumn] = []
    last_admission: tuple[int, int] | None = None
    round_idx = 0
    max_rounds = 2 * graph.n_nodes + 8

    while True:
        round_idx += 1
        if round_idx > max_rounds:  # pragma: no cover - structural guard
            raise RuntimeError("column generation failed to terminate")
        if dirty:
            try:
                solve_rmp(state, graph, params, simplex_budget)
            except RmpInfeasible:
                if last_admission is None:
                    raise
                node, prev_slot = last_admission
                state.server_set.discard(node)
                state.schedule[node] = prev_slot
                state.iterations -= 1
                state.blacklist.add(node)
                solve_rmp(state, graph, params, simplex_budget)
            last_admission = None
            cached = _price_all(state, graph, params)
            dirty = False
        else:
            cached = [col for col in cached if col.node not in state.blacklist]

        column = None
        r_scan = 0.0
        if cached:
            column = min(cached, key=lambda col: (col.reduced_cost, col.node))
            r_scan = column.reduced_cost

        # The scan pricing value is recorded as r_underbar, but the lower
        # bound comes from the provable combinatorial floor: the heuristic
        # psi_upper + K*r_underbar can overshoot the true optimum, which
        # would break the bound sandwich.
        state.r_underbar = r_scan
        state.psi_lower = max(0.0, min(psi_floor, state.psi_upper))

        if column is None:
            exit_reason = EXIT_NO_COLUMN
        elif r_scan >= 0.0:
            exit_reason = EXIT_PRICING_NONNEG
        elif state.psi_upper <= (1.0 + eps) * state.psi_lower:
            exit_reason = EXIT_RATIO
        else:
            node = column.node
            admitted: int | None = None
            if delta_psi(node, state, graph, params) < 0.0:
                last_admission = (node, state.schedule[node])
                state.server_set.add(node)
                state.schedule[node] = column.slot
                state.iterations += 1
                admitted = node
                dirty = True
            else:
                state.blacklist.add(node)
            log.append(
                IterationRecord(
                    round_idx, state.psi_upper, state.psi_lower, r_scan, admitted
                )
            )
            continue

        log.append(
            IterationRecord(round_idx, state.psi_upper, state.psi_lower, r_scan, None)
        )
        break

    grid_nonneg, stationary = _grid_verification(state, graph, params)
    bound_tight = state.psi_upper <= psi_floor * (1.0 + CERT_REL_TOL) + 1e-300
    certified = (
        exit_reason == EXIT_PRICING_NONNEG and grid_nonneg and stationary and bound_tight
    )
    if certified:
        state.psi_lower = state.psi_upper

    decision = state.decision()
    report = worst_case_expected_energy(graph, decision, params)
    residual = check_constraints(graph, decision, params)
    if residual:  # pragma: no cover - structural guard
        raise RuntimeError(f"solver produced an infeasible decision: {residual[0].detail}")
    return SolveResult(
        decision=decision,
        report=report,
        bounds=Bounds(psi_lower=state.psi_lower, psi_upper=state.psi_upper),
        iterations=state.iterations,
        log=log,
        exit_reason=exit_reason,
        full_grid_nonneg=grid_nonneg,
        optimal_certified=certified,
        epsilon=eps,
    )


def decision_export_dict(result: SolveResult, extra: dict | None = None) -> dict:
    nodes = [
        {
            "id": node,
            "location": result.decision.location[node],
            "slot": result.decision.slot[node],
        }
        for node in sorted(result.decision.location)
    ]
    data = {
        "psi": result.report.psi,
        "psi_lower": result.bounds.psi_lower,
        "psi_upper": result.bounds.psi_upper,
        "epsilon": result.epsilon,
        "iterations": result.iterations,
        "exit_reason": result.exit_reason,
        "optimal_certified": result.optimal_certified,
        "nodes": nodes,
    }
    if extra:
        data.update(extra)
    return data


def write_decision_json(path: str | Path, result: SolveResult, extra: dict | None = None) -> None:
    Path(path).write_text(
        json.dumps(decision_export_dict(result, extra), indent=2, sort_keys=True) + "\n"
    )


def write_iteration_log(path: str | Path, log: list[IterationRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "psi_upper", "psi_lower", "r_underbar", "admitted_node"])
        for rec in log:
            writer.writerow(
                [
                    rec.index,
                    repr(rec.psi_upper),
                    repr(rec.psi_lower),
                    repr(rec.r_underbar),
                    "" if rec.admitted_node is None else rec.admitted_node,
                ]
            )
