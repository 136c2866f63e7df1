"""Objective, constraints and unit conversion for the offloading problem.

All timing arithmetic is in integer slots of length delta_s; the worst-case
transfer-time quantiles (seconds) are converted once to whole slots.  The
energy unit is whatever kappa*cycles*Hz^2 and theta*bits imply for the given
config; nothing here asserts Joules.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from fractions import Fraction
from pathlib import Path

from .graph import TaskGraph

CLIENT = "client"
SERVER = "server"


class InfeasibleError(Exception):
    """The instance admits no feasible schedule."""


class TraceExhaustedError(Exception):
    """A realized-trace replay ran out of recorded transfer events."""


@dataclass(frozen=True)
class SystemParams:
    """Device, server and channel constants plus derived slot quantities.

    Defaults mirror the reference experiment settings: a 1.5 GHz client,
    2.4 GHz server VM, 1 ms slots with a 5000-slot deadline, and worst-case
    transfer quantiles/energy coefficients fitted at eps_m = 0.1.
    """

    f_c_hz: float = 1.5e9
    f_s_hz: float = 2.4e9
    kappa: float = 1e-24
    delta_s: float = 1e-3
    deadline_slots: int = 5000
    eps_m_up: float = 0.1
    eps_m_down: float = 0.1
    z_up_s: float = 0.349
    z_down_s: float = 0.107
    theta_up: float = 4.81e-4
    theta_down: float = 1.11e-5
    epsilon: float = 0.03
    seed: int = 12345
    block_size_k: int = 1500

    def __post_init__(self):
        positive = {
            "f_c_hz": self.f_c_hz,
            "f_s_hz": self.f_s_hz,
            "kappa": self.kappa,
            "delta_s": self.delta_s,
            "z_up_s": self.z_up_s,
            "z_down_s": self.z_down_s,
            "theta_up": self.theta_up,
            "theta_down": self.theta_down,
        }
        for name, value in positive.items():
            if not value > 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.deadline_slots < 1:
            raise ValueError(f"deadline_slots must be >= 1, got {self.deadline_slots}")
        for name, value in (("eps_m_up", self.eps_m_up), ("eps_m_down", self.eps_m_down)):
            if not 0.0 < value < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {value}")
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in [0, 1), got {self.epsilon}")
        if self.block_size_k < 1:
            raise ValueError(f"block_size_k must be >= 1, got {self.block_size_k}")

    @property
    def z_up_slots(self) -> int:
        return exact_ceil_div(self.z_up_s, self.delta_s)

    @property
    def z_down_slots(self) -> int:
        return exact_ceil_div(self.z_down_s, self.delta_s)

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_json(cls, path: str | Path) -> "SystemParams":
        data = json.loads(Path(path).read_text())
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def replace(self, **kwargs) -> "SystemParams":
        merged = asdict(self)
        merged.update(kwargs)
        return SystemParams(**merged)


def exact_ceil_div(numer: float, denom: float) -> int:
    # Exact rational ceiling of the float quotient; avoids 999.999->1001 drift.
    return int(math.ceil(Fraction(numer) / Fraction(denom)))


def exec_slots(workload_cycles: int, freq_hz: float, delta_s: float) -> int:
    """Whole slots needed to run `workload_cycles` at `freq_hz`: 0 for empty work."""
    if freq_hz <= 0:
        raise ValueError(f"frequency must be positive, got {freq_hz}")
    if workload_cycles < 0:
        raise ValueError(f"workload must be nonnegative, got {workload_cycles}")
    if workload_cycles == 0:
        return 0
    return int(math.ceil(Fraction(workload_cycles) / (Fraction(freq_hz) * Fraction(delta_s))))


@dataclass(frozen=True)
class SlotTable:
    """Per-node execution slot counts on each side, precomputed once."""

    client: dict[int, int]
    server: dict[int, int]

    def at(self, node: int, location: str) -> int:
        return self.client[node] if location == CLIENT else self.server[node]


def slot_table(graph: TaskGraph, params: SystemParams) -> SlotTable:
    # Cached on the graph: it is immutable after construction and the exact
    # Fraction ceilings are not cheap enough for the solver's hot loops.
    key = (params.f_c_hz, params.f_s_hz, params.delta_s)
    cache = getattr(graph, "_slot_table_cache", None)
    if cache is None:
        cache = {}
        object.__setattr__(graph, "_slot_table_cache", cache)
    table = cache.get(key)
    if table is None:
        client = {
            m.id: exec_slots(m.workload_cycles, params.f_c_hz, params.delta_s)
            for m in graph.modules
        }
        server = {
            m.id: exec_slots(m.workload_cycles, params.f_s_hz, params.delta_s)
            for m in graph.modules
        }
        table = SlotTable(client=client, server=server)
        cache[key] = table
    return table


@dataclass
class OffloadDecision:
    """Per-node execution location and completion slot.

    `location[n]` is "client" or "server"; `slot[n]` is the slot in which
    node n finishes.  Slot 0 is only reachable for zero-workload sources
    (the init module completing instantly at the time origin).
    """

    location: dict[int, str]
    slot: dict[int, int]

    def is_client(self, node: int) -> bool:
        return self.location[node] == CLIENT

    def server_set(self) -> set[int]:
        return {n for n, loc in self.location.items() if loc == SERVER}

    def copy(self) -> "OffloadDecision":
        return OffloadDecision(dict(self.location), dict(self.slot))


@dataclass(frozen=True)
class EnergyReport:
    """Worst-case expected energy and its decomposition; psi == sum of parts."""

    psi: float
    local_exec_energy: float
    uplink_energy: float
    downlink_energy: float


def worst_case_expected_energy(
    graph: TaskGraph, decision: OffloadDecision, params: SystemParams
) -> EnergyReport:
    """Psi: local execution energy plus expected worst-case transfer energy.

    Location-only: completion slots never enter the objective.
    """
    coef = params.kappa * params.f_c_hz * params.f_c_hz
    local_terms = [
        coef * m.workload_cycles for m in graph.modules if decision.is_client(m.id)
    ]
    up_terms = []
    down_terms = []
    for e in graph.edges:
        src_client = decision.is_client(e.src)
        dst_client = decision.is_client(e.dst)
        if src_client and not dst_client:
            up_terms.append(e.bits * params.theta_up)
        elif not src_client and dst_client:
            down_terms.append(e.bits * params.theta_down)
    local = math.fsum(local_terms)
    up = math.fsum(up_terms)
    down = math.fsum(down_terms)
    return EnergyReport(
        psi=local + up + down,
        local_exec_energy=local,
        uplink_energy=up,
        downlink_energy=down,
    )


def dependency_bound_upload(
    graph: TaskGraph, decision: OffloadDecision, m: int, n: int, params: SystemParams
) -> int:
    """Slack available to an uplink transfer on edge (m, n), in slots.

    slot(n) - slot(m) - server execution slots of n; the uplink constraint
    is z_up_slots <= this bound.
    """
    return (
        decision.slot[n]
        - decision.slot[m]
        - exec_slots(graph.workload(n), params.f_s_hz, params.delta_s)
    )


def dependency_bound_download(
    graph: TaskGraph, decision: OffloadDecision, m: int, n: int, params: SystemParams
) -> int:
    """Slack available to a downlink transfer on edge (m, n), in slots."""
    return (
        decision.slot[n]
        - decision.slot[m]
        - exec_slots(graph.workload(n), params.f_c_hz, params.delta_s)
    )


@dataclass(frozen=True)
class Violation:
    kind: str
    subject: tuple
    detail: str

    def key(self) -> tuple:
        return (self.kind, self.subject)


def check_constraints(
    graph: TaskGraph, decision: OffloadDecision, params: SystemParams
) -> list[Violation]:
    """Every violated scheduling constraint of the decision; empty iff feasible."""
    violations: list[Violation] = []
    n_last = graph.n_nodes
    slots = slot_table(graph, params)

    for pinned in (1, n_last):
        if not decision.is_client(pinned):
            violations.append(
                Violation("endpoint-location", (pinned,), f"node {pinned} must run at the client")
            )

    if decision.slot[n_last] > params.deadline_slots:
        violations.append(
            Violation(
                "deadline",
                (n_last,),
                f"node {n_last} completes at slot {decision.slot[n_last]} > T={params.deadline_slots}",
            )
        )

    for node in graph.node_ids:
        t = decision.slot[node]
        if t < 0 or t > params.deadline_slots:
            violations.append(
                Violation("slot-range", (node,), f"slot {t} outside 0..{params.deadline_slots}")
            )
        if not graph.parents[node]:
            need = slots.at(node, decision.location[node])
            if t < need:
                violations.append(
                    Violation(
                        "source-exec",
                        (node,),
                        f"source node {node} completes at slot {t} before its {need}-slot execution",
                    )
                )

    for e in graph.edges:
        src_client = decision.is_client(e.src)
        dst_client = decision.is_client(e.dst)
        if src_client and not dst_client:
            required = params.z_up_slots
        elif not src_client and dst_client:
            required = params.z_down_slots
        else:
            required = 0
        bound = (
            decision.slot[e.dst]
            - decision.slot[e.src]
            - slots.at(e.dst, decision.location[e.dst])
        )
        if bound < required:
            violations.append(
                Violation(
                    "dependency",
                    (e.src, e.dst),
                    f"edge {e.src}->{e.dst} needs {required} transfer slots but has bound {bound}",
                )
            )
    return violations


@dataclass
class RealizedTraces:
    """Recorded (rate, power) pairs consumed per cross-boundary transfer.

    Events are consumed in canonical edge order, ascending (src, dst),
    uplink and downlink streams separately.
    """

    up: list[tuple[float, float]]
    down: list[tuple[float, float]]


def realized_energy(
    graph: TaskGraph, decision: OffloadDecision, traces: RealizedTraces, params: SystemParams
) -> float:
    """Energy actually spent under recorded rates/powers for each transfer."""
    coef = params.kappa * params.f_c_hz * params.f_c_hz
    total = math.fsum(
        coef * m.workload_cycles for m in graph.modules if decision.is_client(m.id)
    )
    up_idx = 0
    down_idx = 0
    transfer_terms = []
    for e in sorted(graph.edges, key=lambda e: (e.src, e.dst)):
        src_client = decision.is_client(e.src)
        dst_client = decision.is_client(e.dst)
        if src_client and not dst_client:
            if up_idx >= len(traces.up):
                raise TraceExhaustedError(f"uplink trace exhausted at edge {e.src}->{e.dst}")
            rate, power = traces.up[up_idx]
            up_idx += 1
            transfer_terms.append(power * e.bits / rate)
        elif not src_client and dst_client:
            if down_idx >= len(traces.down):
                raise TraceExhaustedError(f"downlink trace exhausted at edge {e.src}->{e.dst}")
            rate, power = traces.down[down_idx]
            down_idx += 1
            transfer_terms.append(power * e.bits / rate)
    return total + math.fsum(transfer_terms)
