"""Trace-driven orchestration of elastic transitions under a chosen strategy.

A trace is an initial pool plus an ordered stream of joins and leaves.  The
engine applies each event, keeps the live allocation a valid TAS throughout,
and measures every transition's waste by set arithmetic (closed forms are
assertions elsewhere, never the source of truth here).  The zero-waste
strategy tracks its history as a transition tree: leaves descend to a child
state, joins climb back to the parent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

from . import cyclic as cyc
from .core import (
    ElasticEvent,
    EtallocError,
    InfeasibleTransitionError,
    TaskAllocation,
    require_valid,
    tas_from_document,
    tas_to_document,
    transition_waste,
)
from .zero_waste import (
    best_effort_leave,
    hall_feasible_for_leaver,
    zero_waste_join,
    zero_waste_leave,
)

__all__ = [
    "STRATEGIES",
    "ElasticTrace",
    "EventRecord",
    "SimulationReport",
    "TraceRunner",
    "TreeNode",
    "TransitionTree",
    "run_trace",
    "build_transition_tree",
    "tree_navigate",
    "full_tree_node_count",
    "compare_strategies",
    "trace_to_document",
    "trace_from_document",
    "report_to_document",
    "report_rows",
]

STRATEGIES = ("cyclic", "shifted_cyclic", "zero_waste", "zero_waste_with_fallback")
_ALIASES = {"shifted": "shifted_cyclic", "zero_waste_fallback": "zero_waste_with_fallback"}


@dataclass(frozen=True)
class ElasticTrace:
    """Initial pool parameters plus the ordered elastic events to apply.

    ``n_min``/``n_max`` are optional hard bounds on the active machine count;
    the redundancy is always a lower bound.  ``seed_allocation`` overrides the
    default cyclic starting TAS (for the shifted strategy it is assumed to be
    shifted-cyclic with ``initial_shift``).
    """

    initial_machines: int
    redundancy: int
    n_tasks: int
    strategy: str = "cyclic"
    events: tuple[ElasticEvent, ...] = ()
    n_max: int | None = None
    n_min: int | None = None
    seed_allocation: TaskAllocation | None = None
    initial_shift: int = 0
    label_policy: str = "fresh"

    def __post_init__(self):
        object.__setattr__(self, "strategy",
                           _ALIASES.get(self.strategy, self.strategy))
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")
        if self.label_policy not in ("fresh", "reuse"):
            raise ValueError("label_policy must be 'fresh' or 'reuse'")
        object.__setattr__(self, "events", tuple(self.events))
        low = self.n_min if self.n_min is not None else self.redundancy
        count = self.initial_machines
        if not low <= count <= (self.n_max or count):
            raise ValueError(
                f"initial machine count {count} outside [{low}, {self.n_max}]")
        for i, event in enumerate(self.events):
            count += 1 if event.kind == "join" else -1
            if count < low:
                raise ValueError(
                    f"event {i} drives the pool below the lower bound {low}")
            if self.n_max is not None and count > self.n_max:
                raise ValueError(
                    f"event {i} drives the pool above the declared bound {self.n_max}")


@dataclass(frozen=True)
class EventRecord:
    """What one applied event did: who moved, what it cost, how it was handled."""

    index: int
    kind: str
    machine: int | None
    waste: int
    load_change: int
    feasible: bool
    degraded: bool = False
    shift: int | None = None


@dataclass(frozen=True)
class SimulationReport:
    strategy: str
    records: tuple[EventRecord, ...]
    cumulative_waste: int
    infeasible_count: int
    machine_stats: dict[int, tuple[int, int]]  # label -> (abandoned, acquired)
    final: TaskAllocation
    aborted: str | None = None


class TraceRunner:
    """Stepwise engine for one trace; :func:`run_trace` drives it end to end.

    Exposes ``allocation`` and ``apply`` so callers that interleave other work
    between events (e.g. the coded-computation loop) can drive it directly.
    """

    def __init__(self, trace: ElasticTrace):
        self.trace = trace
        self.strategy = trace.strategy
        n0, l, f = trace.initial_machines, trace.redundancy, trace.n_tasks
        if trace.seed_allocation is not None:
            alloc = trace.seed_allocation
            require_valid(alloc, "seed allocation")
            if (alloc.n_machines, alloc.redundancy, alloc.n_tasks) != (n0, l, f):
                raise ValueError("seed allocation disagrees with trace parameters")
        else:
            alloc = cyc.cyclic_allocation(range(1, n0 + 1), l, f, trace.initial_shift)
        self.allocation = alloc
        self.shift = trace.initial_shift
        self._history: list[tuple[TaskAllocation, int]] = []  # (state, departed label)
        self._ever_used = max(alloc.machine_ids)
        self._records: list[EventRecord] = []
        self._stats: dict[int, list[int]] = {m: [0, 0] for m in alloc.machine_ids}

    @property
    def records(self) -> tuple[EventRecord, ...]:
        return tuple(self._records)

    def _lower_bound(self) -> int:
        t = self.trace
        return t.n_min if t.n_min is not None else t.redundancy

    def _assign_label(self) -> int:
        if self.trace.label_policy == "reuse":
            active = set(self.allocation.machine_ids)
            label = 1
            while label in active:
                label += 1
        else:
            label = self._ever_used + 1
        self._ever_used = max(self._ever_used, label)
        return label

    def apply(self, event: ElasticEvent) -> EventRecord:
        index = len(self._records)
        alloc = self.allocation
        n = alloc.n_machines
        if event.kind == "leave":
            if event.machine not in alloc.task_sets:
                raise EtallocError(f"event {index}: machine {event.machine} is not active")
            if n - 1 < self._lower_bound():
                raise EtallocError(
                    f"event {index}: leave would drop below {self._lower_bound()} machines")
        else:
            if self.trace.n_max is not None and n + 1 > self.trace.n_max:
                raise EtallocError(
                    f"event {index}: join would exceed the declared bound {self.trace.n_max}")
        handler = {
            "cyclic": self._step_cyclic,
            "shifted_cyclic": self._step_shifted,
            "zero_waste": self._step_zero_waste,
            "zero_waste_with_fallback": self._step_zero_waste,
        }[self.strategy]
        record, new_alloc = handler(index, event)
        for m in alloc.machine_ids:
            if m in new_alloc.task_sets:
                old_set, new_set = alloc.task_sets[m], new_alloc.task_sets[m]
                stats = self._stats.setdefault(m, [0, 0])
                stats[0] += len(old_set - new_set)
                stats[1] += len(new_set - old_set)
        for m in new_alloc.machine_ids:
            self._stats.setdefault(m, [0, 0])
        self.allocation = new_alloc
        self._records.append(record)
        return record

    def _step_cyclic(self, index: int, event: ElasticEvent) -> tuple[EventRecord, TaskAllocation]:
        alloc, l, f = self.allocation, self.trace.redundancy, self.trace.n_tasks
        if event.kind == "leave":
            labels = [m for m in alloc.machine_ids if m != event.machine]
            machine = event.machine
        else:
            machine = event.machine if event.machine is not None else self._assign_label()
            labels = list(alloc.machine_ids) + [machine]
        new_alloc = cyc.cyclic_allocation(labels, l, f)
        outcome = transition_waste(alloc, new_alloc)
        return EventRecord(index, event.kind, machine, outcome.total_waste,
                           outcome.necessary_load_change, feasible=True), new_alloc

    def _step_shifted(self, index: int, event: ElasticEvent) -> tuple[EventRecord, TaskAllocation]:
        alloc, l, f = self.allocation, self.trace.redundancy, self.trace.n_tasks
        n = alloc.n_machines
        if event.kind == "leave":
            machine = event.machine
            position = alloc.position(machine)
            labels = [m for m in alloc.machine_ids if m != machine]
            if n > l + 1:
                params, _ = cyc.optimal_shift_leave(n, l, f, self.shift, position)
                new_shift = params.shift
            else:
                new_shift = self.shift  # at N-1 = L every set is full, any shift is waste-free
        else:
            machine = event.machine if event.machine is not None else self._assign_label()
            labels = list(alloc.machine_ids) + [machine]
            if n > l:
                params, _ = cyc.optimal_shift_join(n, l, f, self.shift)
                new_shift = params.shift
            else:
                new_shift = self.shift
        new_alloc = cyc.cyclic_allocation(labels, l, f, new_shift)
        outcome = transition_waste(alloc, new_alloc)
        self.shift = new_shift
        return EventRecord(index, event.kind, machine, outcome.total_waste,
                           outcome.necessary_load_change, feasible=True,
                           shift=new_shift), new_alloc

    def _step_zero_waste(self, index: int, event: ElasticEvent) -> tuple[EventRecord, TaskAllocation]:
        alloc = self.allocation
        if event.kind == "leave":
            machine = event.machine
            outcome = zero_waste_leave(alloc, machine)
            if outcome is None:
                if self.strategy != "zero_waste_with_fallback":
                    witness = None
                    if alloc.n_machines <= 16:
                        witness = hall_feasible_for_leaver(alloc, machine).witness
                    raise InfeasibleTransitionError(
                        f"event {index}: no zero-waste transition when machine "
                        f"{machine} leaves; violating machine subset: {witness}",
                        witness=witness, event_index=index)
                outcome = best_effort_leave(alloc, machine)
                self._history.append((alloc, machine))
                return EventRecord(index, "leave", machine, outcome.total_waste,
                                   outcome.necessary_load_change, feasible=False,
                                   degraded=True), outcome.new_alloc
            self._history.append((alloc, machine))
            return EventRecord(index, "leave", machine, outcome.total_waste,
                               outcome.necessary_load_change, feasible=True), outcome.new_alloc
        if self._history:
            parent, departed = self._history.pop()
            outcome = transition_waste(alloc, parent)
            return EventRecord(index, "join", departed, outcome.total_waste,
                               outcome.necessary_load_change, feasible=True), parent
        machine = event.machine if event.machine is not None else self._assign_label()
        outcome = zero_waste_join(alloc, machine)
        return EventRecord(index, "join", machine, outcome.total_waste,
                           outcome.necessary_load_change, feasible=True), outcome.new_alloc

    def report(self) -> SimulationReport:
        records = self.records
        return SimulationReport(
            strategy=self.strategy,
            records=records,
            cumulative_waste=sum(r.waste for r in records),
            infeasible_count=sum(1 for r in records if not r.feasible),
            machine_stats={m: (a, b) for m, (a, b) in sorted(self._stats.items())},
            final=self.allocation)


def run_trace(trace: ElasticTrace, strategy: str | None = None) -> SimulationReport:
    """Apply every event of the trace and return the full accounting.

    The live allocation validates after every event; waste is measured, never
    predicted.  The zero-waste strategy without fallback raises on an
    infeasible leave, naming the event and a Hall witness.
    """
    if strategy is not None:
        trace = replace(trace, strategy=_ALIASES.get(strategy, strategy))
    runner = TraceRunner(trace)
    for event in trace.events:
        runner.apply(event)
    return runner.report()


def compare_strategies(trace: ElasticTrace,
                       strategies: Sequence[str] = ("cyclic", "shifted_cyclic", "zero_waste"),
                       ) -> dict[str, SimulationReport]:
    """Run the same trace under several strategies and collect their reports.

    Never raises for per-strategy trouble: zero-waste infeasibility is absorbed
    by the best-effort fallback and counted, and a strategy whose preconditions
    fail mid-trace is reported as aborted with the failing event noted.
    """
    results: dict[str, SimulationReport] = {}
    for name in strategies:
        resolved = _ALIASES.get(name, name)
        run_as = "zero_waste_with_fallback" if resolved == "zero_waste" else resolved
        runner = TraceRunner(replace(trace, strategy=run_as))
        aborted = None
        for event in trace.events:
            try:
                runner.apply(event)
            except EtallocError as exc:
                aborted = str(exc)
                break
        report = runner.report()
        results[name] = replace(report, strategy=resolved, aborted=aborted)
    return results


@dataclass
class TreeNode:
    """One state of the zero-waste transition tree: who is active and with what tasks."""

    allocation: TaskAllocation
    parent: "TreeNode | None" = None
    leaver_from_parent: int | None = None
    children: dict[int, "TreeNode"] = field(default_factory=dict)

    @property
    def path(self) -> tuple[int, ...]:
        node, out = self, []
        while node.parent is not None:
            out.append(node.leaver_from_parent)
            node = node.parent
        return tuple(reversed(out))

    @property
    def depth(self) -> int:
        return len(self.path)


@dataclass
class TransitionTree:
    """Lazily grown tree of zero-waste states between n_min and the root size.

    Children are keyed by the leaving machine's label and memoized per ordered
    removal sequence; the same subset reached in a different order is a
    different node because the intermediate allocations differ.
    """

    root: TreeNode
    n_min: int

    @property
    def n_max(self) -> int:
        return self.root.allocation.n_machines

    def child(self, node: TreeNode, leaver: int) -> TreeNode:
        """The state after ``leaver`` departs from ``node``, expanding on demand."""
        if node.allocation.n_machines <= self.n_min:
            raise EtallocError(
                f"cannot leave below n_min={self.n_min} (node {node.path})")
        if leaver in node.children:
            return node.children[leaver]
        if leaver not in node.allocation.task_sets:
            raise ValueError(f"machine {leaver} is not active at node {node.path}")
        outcome = zero_waste_leave(node.allocation, leaver)
        if outcome is None:
            raise InfeasibleTransitionError(
                f"no zero-waste transition at node {node.path} for leaver {leaver}",
                witness=hall_feasible_for_leaver(node.allocation, leaver).witness
                if node.allocation.n_machines <= 16 else None)
        child = TreeNode(allocation=outcome.new_alloc, parent=node,
                         leaver_from_parent=leaver)
        node.children[leaver] = child
        return child

    def expand_fully(self) -> int:
        """Build every node down to n_min; returns the total node count."""
        count = 0
        stack = [self.root]
        while stack:
            node = stack.pop()
            count += 1
            if node.allocation.n_machines > self.n_min:
                for leaver in sorted(node.allocation.machine_ids):
                    stack.append(self.child(node, leaver))
        return count

    def iter_nodes(self) -> Iterable[TreeNode]:
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(node.children.values())


def build_transition_tree(root_alloc: TaskAllocation, n_min: int) -> TransitionTree:
    """Root a transition tree at a validated allocation; children grow on demand."""
    require_valid(root_alloc, "root allocation")
    if not root_alloc.redundancy <= n_min <= root_alloc.n_machines:
        raise ValueError(
            f"n_min={n_min} outside [{root_alloc.redundancy}, {root_alloc.n_machines}]")
    return TransitionTree(root=TreeNode(allocation=root_alloc), n_min=n_min)


def tree_navigate(tree: TransitionTree, node: TreeNode, event: ElasticEvent) -> TreeNode:
    """Follow one elastic event through the tree: leave descends, join ascends."""
    if event.kind == "leave":
        return tree.child(node, event.machine)
    if node.parent is None:
        raise EtallocError("cannot join at the root of the transition tree")
    return node.parent


def full_tree_node_count(n_max: int, n_min: int) -> int:
    """Closed-form node count of a fully expanded tree: one root plus all ordered
    removal sequences of length up to n_max - n_min."""
    total, product = 1, 1
    for height in range(1, n_max - n_min + 1):
        product *= n_max - (height - 1)
        total += product
    return total


def trace_to_document(trace: ElasticTrace) -> dict:
    doc = {
        "initial": {
            "n0": trace.initial_machines,
            "l": trace.redundancy,
            "f": trace.n_tasks,
            "strategy": trace.strategy,
            "nmax": trace.n_max,
            "nmin": trace.n_min,
        },
        "events": [
            {"kind": e.kind, **({"machine": e.machine} if e.machine is not None else {})}
            for e in trace.events
        ],
    }
    if trace.seed_allocation is not None:
        doc["initial"]["seed_tas"] = tas_to_document(trace.seed_allocation)
    if trace.initial_shift:
        doc["initial"]["shift"] = trace.initial_shift
    if trace.label_policy != "fresh":
        doc["initial"]["label_policy"] = trace.label_policy
    return doc


def trace_from_document(doc: Mapping) -> ElasticTrace:
    initial = doc["initial"]
    seed = initial.get("seed_tas")
    return ElasticTrace(
        initial_machines=int(initial["n0"]),
        redundancy=int(initial["l"]),
        n_tasks=int(initial["f"]),
        strategy=initial.get("strategy", "cyclic"),
        events=tuple(ElasticEvent(e["kind"], e.get("machine")) for e in doc["events"]),
        n_max=initial.get("nmax"),
        n_min=initial.get("nmin"),
        seed_allocation=tas_from_document(seed) if seed else None,
        initial_shift=int(initial.get("shift", 0)),
        label_policy=initial.get("label_policy", "fresh"))


def report_to_document(report: SimulationReport) -> dict:
    return {
        "strategy": report.strategy,
        "cumulative_waste": report.cumulative_waste,
        "infeasible_count": report.infeasible_count,
        "aborted": report.aborted,
        "events": [
            {"index": r.index, "kind": r.kind, "machine": r.machine, "waste": r.waste,
             "delta": r.load_change, "feasible": r.feasible, "degraded": r.degraded,
             **({"shift": r.shift} if r.shift is not None else {})}
            for r in report.records
        ],
        "machines": {str(m): {"abandoned": a, "acquired": b}
                     for m, (a, b) in report.machine_stats.items()},
        "final": tas_to_document(report.final),
    }


def report_rows(report: SimulationReport) -> list[str]:
    """Flat tabular export: event_index kind machine waste delta feasible."""
    rows = ["index\tkind\tmachine\twaste\tdelta\tfeasible"]
    for r in report.records:
        rows.append(f"{r.index}\t{r.kind}\t{r.machine}\t{r.waste}\t{r.load_change}"
                    f"\t{str(r.feasible).lower()}")
    return rows


def report_to_json(report: SimulationReport) -> str:
    return json.dumps(report_to_document(report), indent=2) + "\n"
