"""Core types for elastic task allocation: allocations, events, and the waste metric.

An (N, L, F) task allocation scheme (TAS) assigns each of F tasks to exactly L
of N machines while keeping every machine at exactly L*F/N tasks.  When one
machine joins or leaves, the set sizes must change by the necessary load change
|L*F/N - L*F/N'|; anything a surviving machine abandons or takes on beyond that
is transition waste.  Everything in this module is a pure function over
immutable values.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "EtallocError",
    "AllocationError",
    "DivisibilityError",
    "InfeasibleTransitionError",
    "TaskAllocation",
    "ElasticEvent",
    "TransitionOutcome",
    "ValidationReport",
    "mod_interval",
    "validate_tas",
    "incidence_matrix",
    "necessary_load_change",
    "transition_waste",
    "padded_task_count",
    "tas_to_document",
    "tas_from_document",
    "tas_to_json",
    "tas_from_json",
]


class EtallocError(Exception):
    """Base class for errors raised by this package."""


class AllocationError(EtallocError):
    """An allocation failed validation where a valid TAS was required."""

    def __init__(self, message: str, violations: Sequence[str] = ()):
        super().__init__(message)
        self.violations = tuple(violations)


class DivisibilityError(EtallocError, ValueError):
    """An integrality precondition (e.g. N | LF) does not hold."""


class InfeasibleTransitionError(EtallocError):
    """A zero-waste transition was requested but none exists.

    ``witness`` holds a set of machine labels violating the Hall-style
    counting condition, when one was computed.
    """

    def __init__(self, message: str, witness: tuple[int, ...] | None = None,
                 event_index: int | None = None):
        super().__init__(message)
        self.witness = witness
        self.event_index = event_index


def mod_interval(start: int, end: int, modulus: int) -> frozenset[int]:
    """The set {start, start+1, ..., end} with every element reduced mod ``modulus``.

    ``end`` is inclusive and may exceed ``modulus``; the result is capped at the
    full residue set.  This is the single source of modular interval arithmetic
    for the cyclic constructions, so closed-form waste formulas (pure integer
    arithmetic) never share a code path with the set-based oracle.
    """
    if modulus <= 0:
        raise ValueError(f"modulus must be positive, got {modulus}")
    if end < start - 1:
        raise ValueError(f"empty-or-negative interval [{start}, {end}]")
    count = min(end - start + 1, modulus)
    return frozenset((start + i) % modulus for i in range(count))


@dataclass(frozen=True)
class TaskAllocation:
    """An ordered assignment of task indices to labelled machines.

    ``machine_ids`` carries the allocation order: position ``i`` (1-based
    ``i+1``) is what the cyclic constructions index machines by.  Labels are
    global and survive departures; positions are recomputed per allocation.
    Construction only enforces well-formedness; the TAS axioms themselves are
    checked by :func:`validate_tas`.
    """

    n_machines: int
    redundancy: int
    n_tasks: int
    machine_ids: tuple[int, ...]
    task_sets: dict[int, frozenset[int]] = field(repr=False)

    def __post_init__(self):
        if self.n_machines != len(self.machine_ids):
            raise ValueError(
                f"n_machines={self.n_machines} but {len(self.machine_ids)} machine ids given")
        if len(set(self.machine_ids)) != len(self.machine_ids):
            raise ValueError("machine ids must be distinct")
        if set(self.task_sets) != set(self.machine_ids):
            raise ValueError("task_sets keys must match machine_ids")
        if self.redundancy <= 0 or self.n_tasks <= 0 or self.n_machines <= 0:
            raise ValueError("n_machines, redundancy and n_tasks must be positive")
        object.__setattr__(
            self, "task_sets",
            {m: frozenset(int(t) for t in self.task_sets[m]) for m in self.machine_ids})
        for m, tasks in self.task_sets.items():
            bad = [t for t in tasks if not 0 <= t < self.n_tasks]
            if bad:
                raise ValueError(f"machine {m} holds out-of-range task indices {sorted(bad)}")

    @classmethod
    def from_sets(cls, sets: Sequence[Iterable[int]], redundancy: int, n_tasks: int,
                  machine_ids: Sequence[int] | None = None) -> "TaskAllocation":
        """Build an allocation from per-machine task sets, labelling 1..N by default."""
        ids = tuple(machine_ids) if machine_ids is not None else tuple(range(1, len(sets) + 1))
        return cls(
            n_machines=len(ids),
            redundancy=redundancy,
            n_tasks=n_tasks,
            machine_ids=ids,
            task_sets={m: frozenset(s) for m, s in zip(ids, sets)},
        )

    def task_set(self, machine: int) -> frozenset[int]:
        return self.task_sets[machine]

    def position(self, machine: int) -> int:
        """1-based position of ``machine`` in the allocation order."""
        return self.machine_ids.index(machine) + 1

    @property
    def load(self) -> int:
        """The balanced per-machine task count L*F/N (may be fractional pre-validation)."""
        return self.redundancy * self.n_tasks // self.n_machines

    def sets_in_order(self) -> tuple[frozenset[int], ...]:
        return tuple(self.task_sets[m] for m in self.machine_ids)


@dataclass(frozen=True)
class ElasticEvent:
    """A single join or leave.  Leaves name an active machine; join labels are assigned."""

    kind: str
    machine: int | None = None

    def __post_init__(self):
        if self.kind not in ("join", "leave"):
            raise ValueError(f"event kind must be 'join' or 'leave', got {self.kind!r}")
        if self.kind == "leave" and self.machine is None:
            raise ValueError("leave events must name the leaving machine")

    @classmethod
    def join(cls, machine: int | None = None) -> "ElasticEvent":
        return cls("join", machine)

    @classmethod
    def leave(cls, machine: int) -> "ElasticEvent":
        return cls("leave", machine)


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of checking the TAS axioms; violations are data, not exceptions."""

    ok: bool
    violations: tuple[str, ...] = ()


@dataclass(frozen=True)
class TransitionOutcome:
    """Waste accounting for one elastic transition.

    ``per_machine_waste`` covers exactly the machines present in both
    allocations; ``necessary_load_change`` is the unavoidable per-machine
    size change.
    """

    old_alloc: TaskAllocation
    new_alloc: TaskAllocation
    per_machine_waste: dict[int, int]
    total_waste: int
    necessary_load_change: int


def validate_tas(alloc: TaskAllocation) -> ValidationReport:
    """Check the two TAS axioms plus the parameter constraints they presume.

    Axioms: every task index appears in exactly ``redundancy`` task sets, and
    every machine holds exactly ``redundancy * n_tasks / n_machines`` tasks.
    Also reports L <= N <= L*F and N | L*F violations, which the axioms
    implicitly require.
    """
    n, l, f = alloc.n_machines, alloc.redundancy, alloc.n_tasks
    violations: list[str] = []
    if not l <= n:
        violations.append(f"parameters: redundancy {l} exceeds machine count {n}")
    if not n <= l * f:
        violations.append(f"parameters: machine count {n} exceeds redundancy*tasks {l * f}")
    if (l * f) % n != 0:
        violations.append(
            f"parameters: machine count {n} does not divide redundancy*tasks {l * f}")
    else:
        load = l * f // n
        for m in alloc.machine_ids:
            size = len(alloc.task_sets[m])
            if size != load:
                violations.append(
                    f"load balancing: machine {m} holds {size} tasks, expected {load}")
    coverage = [0] * f
    for m in alloc.machine_ids:
        for t in alloc.task_sets[m]:
            coverage[t] += 1
    for t, c in enumerate(coverage):
        if c != l:
            violations.append(f"redundancy: task {t} covered by {c} machines, expected {l}")
    return ValidationReport(ok=not violations, violations=tuple(violations))


def require_valid(alloc: TaskAllocation, context: str = "allocation") -> None:
    """Raise :class:`AllocationError` unless ``alloc`` passes :func:`validate_tas`."""
    report = validate_tas(alloc)
    if not report.ok:
        raise AllocationError(
            f"{context} is not a valid ({alloc.n_machines},{alloc.redundancy},"
            f"{alloc.n_tasks}) TAS: {report.violations[0]}"
            + (f" (+{len(report.violations) - 1} more)" if len(report.violations) > 1 else ""),
            report.violations)


def incidence_matrix(alloc: TaskAllocation) -> np.ndarray:
    """The F-by-N 0/1 matrix with a one where a task lies in a machine's set.

    Rows are tasks, columns follow the allocation's machine order.  Row weight
    is the redundancy, column weight the balanced load.
    """
    require_valid(alloc)
    mat = np.zeros((alloc.n_tasks, alloc.n_machines), dtype=int)
    for col, m in enumerate(alloc.machine_ids):
        for t in alloc.task_sets[m]:
            mat[t, col] = 1
    return mat


def necessary_load_change(n_from: int, n_to: int, redundancy: int, n_tasks: int) -> int:
    """|L*F/n_from - L*F/n_to| for a pool-size change of one machine."""
    if abs(n_from - n_to) != 1:
        raise ValueError(f"pool sizes must differ by one, got {n_from} -> {n_to}")
    lf = redundancy * n_tasks
    for name, value in (("n_from", n_from), ("n_to", n_to)):
        if value <= 0 or lf % value != 0:
            raise DivisibilityError(
                f"{name}={value} does not divide redundancy*tasks={lf}")
    return abs(lf // n_from - lf // n_to)


def transition_waste(old: TaskAllocation, new: TaskAllocation,
                     leaver: int | None = None) -> TransitionOutcome:
    """Measure the waste of a one-machine transition by direct set arithmetic.

    For every machine present in both allocations, waste is the size of the
    symmetric difference of its two task sets, less the necessary load change.
    The machine label sets must differ by exactly one label (the joiner or the
    leaver); pass ``leaver`` to cross-check the inferred direction.
    """
    require_valid(old, "old allocation")
    require_valid(new, "new allocation")
    if (old.redundancy, old.n_tasks) != (new.redundancy, new.n_tasks):
        raise ValueError("allocations disagree on redundancy or task count")
    old_ids, new_ids = set(old.machine_ids), set(new.machine_ids)
    gone, came = old_ids - new_ids, new_ids - old_ids
    if not ((len(gone), len(came)) in ((1, 0), (0, 1))):
        raise ValueError(
            f"machine label sets must differ by exactly one label; "
            f"left={sorted(gone)} joined={sorted(came)}")
    if gone:
        actual_leaver = next(iter(gone))
        if leaver is not None and leaver != actual_leaver:
            raise ValueError(f"leaver {leaver} given but machine {actual_leaver} left")
    elif leaver is not None:
        raise ValueError(f"leaver {leaver} given but the transition is a join")
    delta = necessary_load_change(old.n_machines, new.n_machines,
                                  old.redundancy, old.n_tasks)
    per_machine: dict[int, int] = {}
    for m in old.machine_ids:
        if m not in new_ids:
            continue
        w = len(old.task_sets[m] ^ new.task_sets[m]) - delta
        # |S ^ S'| >= ||S| - |S'|| = delta for balanced allocations.
        assert w >= 0, f"negative waste {w} at machine {m}"
        per_machine[m] = w
    return TransitionOutcome(
        old_alloc=old,
        new_alloc=new,
        per_machine_waste=per_machine,
        total_waste=sum(per_machine.values()),
        necessary_load_change=delta,
    )


def padded_task_count(n_tasks: int, n_low: int, n_high: int) -> int:
    """Smallest F' >= n_tasks divisible by N(N+1) for every N in [n_low, n_high].

    Padding with dummy tasks up to F' makes every join transition in the range
    well defined; it is always the caller's explicit choice.
    """
    if not 1 <= n_low <= n_high:
        raise ValueError(f"need 1 <= n_low <= n_high, got [{n_low}, {n_high}]")
    step = math.lcm(*(n * (n + 1) for n in range(n_low, n_high + 1)))
    return ((n_tasks + step - 1) // step) * step


def tas_to_document(alloc: TaskAllocation) -> dict:
    """Serializable form: machines in allocation order, task lists ascending."""
    return {
        "n_machines": alloc.n_machines,
        "redundancy": alloc.redundancy,
        "n_tasks": alloc.n_tasks,
        "machines": [
            {"id": m, "tasks": sorted(alloc.task_sets[m])} for m in alloc.machine_ids
        ],
    }


def tas_from_document(doc: Mapping) -> TaskAllocation:
    machines = doc["machines"]
    return TaskAllocation(
        n_machines=int(doc["n_machines"]),
        redundancy=int(doc["redundancy"]),
        n_tasks=int(doc["n_tasks"]),
        machine_ids=tuple(int(entry["id"]) for entry in machines),
        task_sets={int(entry["id"]): frozenset(int(t) for t in entry["tasks"])
                   for entry in machines},
    )


def tas_to_json(alloc: TaskAllocation) -> str:
    return json.dumps(tas_to_document(alloc), indent=2) + "\n"


def tas_from_json(text: str) -> TaskAllocation:
    return tas_from_document(json.loads(text))
