"""Zero-waste transitions: greedy donation on joins, matching on leaves.

A leave admits a zero-waste transition exactly when the leaver's tasks can be
spread over the survivors so that each survivor takes exactly the necessary
load change, never a task it already holds.  That is a perfect Delta-matching
of the transition graph, decided here by integral max flow; the Hall-style
counting conditions double as an independent oracle and as witnesses when no
matching exists.
"""

from __future__ import annotations

import heapq
import itertools
import random
from dataclasses import dataclass

from .core import (
    DivisibilityError,
    TaskAllocation,
    TransitionOutcome,
    require_valid,
    transition_waste,
)

__all__ = [
    "TransitionGraph",
    "DeltaMatching",
    "HallResult",
    "zero_waste_join",
    "build_transition_graph",
    "hall_feasible_for_leaver",
    "hall_feasible_all_leavers",
    "find_delta_matching",
    "zero_waste_leave",
    "best_effort_leave",
    "random_tas",
]

_MAX_ENUMERATION_MACHINES = 20


@dataclass(frozen=True)
class TransitionGraph:
    """Bipartite graph between surviving machines and the leaver's tasks.

    ``neighbors[u]`` holds the leaver tasks machine ``u`` does not already own.
    ``delta`` is the required per-machine intake, or None when it is not an
    integer (in which case no balanced (N-1)-allocation exists at all).
    """

    leaver: int
    left: tuple[int, ...]
    right: tuple[int, ...]
    neighbors: dict[int, frozenset[int]]
    delta: int | None

    def edges(self) -> list[tuple[int, int]]:
        return [(u, v) for u in self.left for v in sorted(self.neighbors[u])]


@dataclass(frozen=True)
class DeltaMatching:
    """Assignment of every right-side task to one machine, each machine used delta times."""

    assignment: dict[int, int]
    delta: int

    def check(self, graph: TransitionGraph) -> None:
        """Raise if this matching does not satisfy the perfect Delta-matching invariants."""
        if set(self.assignment) != set(graph.right):
            raise ValueError("matching does not cover the task side exactly once")
        intake: dict[int, int] = {u: 0 for u in graph.left}
        for task, machine in self.assignment.items():
            if task not in graph.neighbors[machine]:
                raise ValueError(f"pair (machine {machine}, task {task}) is not an edge")
            intake[machine] += 1
        bad = {u: c for u, c in intake.items() if c != self.delta}
        if bad:
            raise ValueError(f"machines with intake != {self.delta}: {bad}")


@dataclass(frozen=True)
class HallResult:
    """Feasibility verdict plus, when infeasible, a violating machine subset."""

    feasible: bool
    witness: tuple[int, ...] | None = None


def zero_waste_join(alloc: TaskAllocation, new_machine: int) -> TransitionOutcome:
    """Donate disjoint task slices from every machine to a newcomer; waste is zero.

    Machines donate in ascending label order, lowest task index first, each
    giving up exactly L*F/(N(N+1)) tasks none of which were donated before.
    Every machine always has enough undonated tasks for this to go through.
    """
    require_valid(alloc)
    n, l, f = alloc.n_machines, alloc.redundancy, alloc.n_tasks
    if new_machine in alloc.task_sets:
        raise ValueError(f"machine {new_machine} is already active")
    if (l * f) % (n * (n + 1)) != 0:
        raise DivisibilityError(
            f"zero-waste join needs N(N+1) | L*F: {n * (n + 1)} does not divide {l * f}")
    share = l * f // (n * (n + 1))
    donated: set[int] = set()
    new_sets = {}
    for m in sorted(alloc.machine_ids):
        gift = sorted(alloc.task_sets[m] - donated)[:share]
        assert len(gift) == share, f"machine {m} ran out of donatable tasks"
        donated.update(gift)
        new_sets[m] = alloc.task_sets[m] - set(gift)
    new_sets[new_machine] = frozenset(donated)
    new_alloc = TaskAllocation(
        n_machines=n + 1, redundancy=l, n_tasks=f,
        machine_ids=alloc.machine_ids + (new_machine,), task_sets=new_sets)
    outcome = transition_waste(alloc, new_alloc)
    assert outcome.total_waste == 0
    return outcome


def build_transition_graph(alloc: TaskAllocation, leaver: int) -> TransitionGraph:
    """Graph whose edges pair each survivor with the leaver tasks it could absorb."""
    require_valid(alloc)
    if leaver not in alloc.task_sets:
        raise ValueError(f"machine {leaver} is not active")
    n, l, f = alloc.n_machines, alloc.redundancy, alloc.n_tasks
    leaving_tasks = alloc.task_sets[leaver]
    left = tuple(m for m in alloc.machine_ids if m != leaver)
    neighbors = {u: leaving_tasks - alloc.task_sets[u] for u in left}
    delta = (l * f) // (n * (n - 1)) if n > 1 and (l * f) % (n * (n - 1)) == 0 else None
    return TransitionGraph(
        leaver=leaver, left=left, right=tuple(sorted(leaving_tasks)),
        neighbors=neighbors, delta=delta)


def hall_feasible_for_leaver(alloc: TaskAllocation, leaver: int) -> HallResult:
    """Counting condition for one leaver, by explicit subset enumeration.

    Feasible iff every nonempty survivor subset J can jointly absorb |J| times
    the per-machine intake from the leaver's tasks.  Exponential in N; this is
    the small-N oracle the flow matcher is checked against.
    """
    graph = build_transition_graph(alloc, leaver)
    if graph.delta is None:
        raise DivisibilityError(
            "per-machine intake is not an integer: N(N-1) must divide L*F")
    if alloc.n_machines > _MAX_ENUMERATION_MACHINES:
        raise ValueError("subset enumeration is limited to small machine counts; "
                         "use find_delta_matching for larger allocations")
    survivors = sorted(graph.left)
    for size in range(1, len(survivors) + 1):
        for subset in itertools.combinations(survivors, size):
            absorbable = frozenset().union(*(graph.neighbors[u] for u in subset))
            if len(absorbable) < size * graph.delta:
                return HallResult(feasible=False, witness=subset)
    return HallResult(feasible=True)


def hall_feasible_all_leavers(alloc: TaskAllocation) -> HallResult:
    """Intersection bound deciding zero-waste leaves for every possible leaver.

    Feasible iff every set I of 2..L machines has |common tasks| at most
    (N - |I|) times the per-machine intake.  Singletons meet the bound with
    equality and more than L sets share no task, so only 2 <= |I| <= L is
    checked.  A violating I is returned as witness.
    """
    require_valid(alloc)
    n, l, f = alloc.n_machines, alloc.redundancy, alloc.n_tasks
    if n <= 1 or (l * f) % (n * (n - 1)) != 0:
        raise DivisibilityError(
            f"per-machine intake is not an integer: {n * (n - 1)} must divide {l * f}")
    delta = (l * f) // (n * (n - 1))
    machines = sorted(alloc.machine_ids)
    for size in range(2, min(l, n) + 1):
        for subset in itertools.combinations(machines, size):
            common = frozenset.intersection(*(alloc.task_sets[m] for m in subset))
            if len(common) > (n - size) * delta:
                return HallResult(feasible=False, witness=subset)
    return HallResult(feasible=True)


class _Dinic:
    """Integral max flow; deterministic for a fixed edge insertion order."""

    def __init__(self, n_nodes: int):
        self.n = n_nodes
        self.head: list[list[int]] = [[] for _ in range(n_nodes)]
        self.to: list[int] = []
        self.cap: list[int] = []

    def add_edge(self, u: int, v: int, capacity: int) -> int:
        idx = len(self.to)
        self.head[u].append(idx)
        self.to.append(v)
        self.cap.append(capacity)
        self.head[v].append(idx + 1)
        self.to.append(u)
        self.cap.append(0)
        return idx

    def max_flow(self, source: int, sink: int) -> int:
        flow = 0
        while True:
            level = [-1] * self.n
            level[source] = 0
            queue = [source]
            for u in queue:
                for idx in self.head[u]:
                    v = self.to[idx]
                    if self.cap[idx] > 0 and level[v] < 0:
                        level[v] = level[u] + 1
                        queue.append(v)
            if level[sink] < 0:
                return flow
            it = [0] * self.n

            def dfs(u: int, pushed: int) -> int:
                if u == sink:
                    return pushed
                while it[u] < len(self.head[u]):
                    idx = self.head[u][it[u]]
                    v = self.to[idx]
                    if self.cap[idx] > 0 and level[v] == level[u] + 1:
                        got = dfs(v, min(pushed, self.cap[idx]))
                        if got > 0:
                            self.cap[idx] -= got
                            self.cap[idx ^ 1] += got
                            return got
                    it[u] += 1
                return 0

            while True:
                pushed = dfs(source, 1 << 60)
                if pushed == 0:
                    break
                flow += pushed


def find_delta_matching(graph: TransitionGraph) -> DeltaMatching | None:
    """Perfect Delta-matching of a transition graph via max flow, or None.

    Network: source -> machine (capacity delta) -> task (capacity 1) -> sink
    (capacity 1).  A perfect matching exists iff the max flow saturates every
    task, which by Hall's condition is exactly when the counting oracle passes.
    """
    if graph.delta is None:
        raise DivisibilityError("matching needs an integral per-machine intake")
    need = graph.delta * len(graph.left)
    if need != len(graph.right):
        return DeltaMatching(assignment={}, delta=graph.delta) if not graph.right else None
    if not graph.right:
        return DeltaMatching(assignment={}, delta=graph.delta)
    machine_node = {u: 1 + i for i, u in enumerate(graph.left)}
    task_node = {v: 1 + len(graph.left) + j for j, v in enumerate(graph.right)}
    sink = 1 + len(graph.left) + len(graph.right)
    net = _Dinic(sink + 1)
    for u in graph.left:
        net.add_edge(0, machine_node[u], graph.delta)
    edge_index: dict[int, tuple[int, int]] = {}
    for u in graph.left:
        for v in sorted(graph.neighbors[u]):
            edge_index[net.add_edge(machine_node[u], task_node[v], 1)] = (u, v)
    for v in graph.right:
        net.add_edge(task_node[v], sink, 1)
    if net.max_flow(0, sink) != len(graph.right):
        return None
    assignment = {v: u for idx, (u, v) in edge_index.items() if net.cap[idx] == 0}
    matching = DeltaMatching(assignment=assignment, delta=graph.delta)
    matching.check(graph)
    return matching


def zero_waste_leave(alloc: TaskAllocation, leaver: int) -> TransitionOutcome | None:
    """Reassign the leaver's tasks so every survivor only grows; None if impossible.

    On success the survivors' new sets are supersets of their old ones and the
    measured waste is exactly zero.  Infeasibility coincides with the Hall
    counting condition failing for this leaver.
    """
    graph = build_transition_graph(alloc, leaver)
    if graph.delta is None:
        raise DivisibilityError(
            "zero-waste leave needs N(N-1) | L*F for an integral per-machine intake")
    matching = find_delta_matching(graph)
    if matching is None:
        return None
    extra: dict[int, set[int]] = {u: set() for u in graph.left}
    for task, machine in matching.assignment.items():
        extra[machine].add(task)
    new_alloc = TaskAllocation(
        n_machines=alloc.n_machines - 1,
        redundancy=alloc.redundancy,
        n_tasks=alloc.n_tasks,
        machine_ids=tuple(m for m in alloc.machine_ids if m != leaver),
        task_sets={u: alloc.task_sets[u] | extra[u] for u in graph.left})
    outcome = transition_waste(alloc, new_alloc, leaver=leaver)
    assert outcome.total_waste == 0
    return outcome


class _MinCostFlow:
    """Successive shortest augmenting paths with Dijkstra potentials."""

    def __init__(self, n_nodes: int):
        self.n = n_nodes
        self.head: list[list[int]] = [[] for _ in range(n_nodes)]
        self.to: list[int] = []
        self.cap: list[int] = []
        self.cost: list[int] = []

    def add_edge(self, u: int, v: int, capacity: int, cost: int) -> int:
        idx = len(self.to)
        self.head[u].append(idx)
        self.to.append(v)
        self.cap.append(capacity)
        self.cost.append(cost)
        self.head[v].append(idx + 1)
        self.to.append(u)
        self.cap.append(0)
        self.cost.append(-cost)
        return idx

    def min_cost_flow(self, source: int, sink: int, amount: int) -> int:
        """Push ``amount`` units at minimum cost; raises if that much cannot flow."""
        potential = [0] * self.n
        total_cost = 0
        remaining = amount
        while remaining > 0:
            dist = [None] * self.n
            parent_edge = [-1] * self.n
            dist[source] = 0
            heap = [(0, source)]
            while heap:
                d, u = heapq.heappop(heap)
                if dist[u] is not None and d > dist[u]:
                    continue
                for idx in self.head[u]:
                    if self.cap[idx] <= 0:
                        continue
                    v = self.to[idx]
                    nd = d + self.cost[idx] + potential[u] - potential[v]
                    if dist[v] is None or nd < dist[v]:
                        dist[v] = nd
                        parent_edge[v] = idx
                        heapq.heappush(heap, (nd, v))
            if dist[sink] is None:
                raise ValueError(f"network cannot carry {amount} units")
            for v in range(self.n):
                if dist[v] is not None:
                    potential[v] += dist[v]
            push = remaining
            v = sink
            while v != source:
                idx = parent_edge[v]
                push = min(push, self.cap[idx])
                v = self.to[idx ^ 1]
            v = sink
            while v != source:
                idx = parent_edge[v]
                self.cap[idx] -= push
                self.cap[idx ^ 1] += push
                total_cost += push * self.cost[idx]
                v = self.to[idx ^ 1]
            remaining -= push
        return total_cost


def best_effort_leave(alloc: TaskAllocation, leaver: int) -> TransitionOutcome:
    """Minimum-waste (not necessarily zero) reallocation after a leave.

    Solves the transportation problem that keeps as many existing
    (machine, task) pairs as possible subject to the TAS axioms at N-1
    machines, via min-cost flow.  This is a fallback outside any zero-waste
    guarantee; callers should flag its use.
    """
    require_valid(alloc)
    if leaver not in alloc.task_sets:
        raise ValueError(f"machine {leaver} is not active")
    n, l, f = alloc.n_machines, alloc.redundancy, alloc.n_tasks
    if n - 1 < l:
        raise ValueError(f"cannot keep redundancy {l} with {n - 1} machines")
    if (l * f) % (n - 1) != 0:
        raise DivisibilityError(
            f"no balanced allocation on {n - 1} machines: {n - 1} does not divide {l * f}")
    survivors = tuple(m for m in alloc.machine_ids if m != leaver)
    load = l * f // (n - 1)
    task_node = {t: 1 + t for t in range(f)}
    machine_node = {m: 1 + f + i for i, m in enumerate(survivors)}
    sink = 1 + f + len(survivors)
    net = _MinCostFlow(sink + 1)
    for t in range(f):
        net.add_edge(0, task_node[t], l, 0)
    edge_of: dict[int, tuple[int, int]] = {}
    for t in range(f):
        for m in survivors:
            keep = t in alloc.task_sets[m]
            edge_of[net.add_edge(task_node[t], machine_node[m], 1, 0 if keep else 1)] = (t, m)
    for m in survivors:
        net.add_edge(machine_node[m], sink, load, 0)
    net.min_cost_flow(0, sink, l * f)
    new_sets: dict[int, set[int]] = {m: set() for m in survivors}
    for idx, (t, m) in edge_of.items():
        if net.cap[idx] == 0:
            new_sets[m].add(t)
    new_alloc = TaskAllocation(
        n_machines=n - 1, redundancy=l, n_tasks=f,
        machine_ids=survivors,
        task_sets={m: frozenset(s) for m, s in new_sets.items()})
    return transition_waste(alloc, new_alloc, leaver=leaver)


def random_tas(n_machines: int, redundancy: int, n_tasks: int,
               rng: random.Random, max_attempts: int = 50) -> TaskAllocation:
    """Random column-regular allocation for property tests.

    Deals a shuffled multiset of L copies of every task into N equal hands,
    then repairs duplicate-holding hands by random pairwise swaps (each
    admissible swap strictly shrinks the duplicate excess, so repair
    terminates).  The caller owns the seeded ``rng`` so runs are reproducible.
    """
    n, l, f = n_machines, redundancy, n_tasks
    if not 0 < l <= n:
        raise ValueError(f"need 0 < redundancy <= machine count, got L={l}, N={n}")
    if (l * f) % n != 0:
        raise DivisibilityError(f"machine count {n} does not divide {l * f}")
    if l == n:
        # full replication is the only valid shape
        return TaskAllocation.from_sets([frozenset(range(f))] * n,
                                        redundancy=l, n_tasks=f)
    load = l * f // n
    pool = [t for t in range(f) for _ in range(l)]
    for _ in range(max_attempts):
        rng.shuffle(pool)
        hands = [pool[i * load:(i + 1) * load] for i in range(n)]
        swap_budget = 50 * n * load
        while swap_budget > 0:
            holder = next((i for i, hand in enumerate(hands)
                           if len(set(hand)) != load), None)
            if holder is None:
                return TaskAllocation.from_sets(
                    [frozenset(hand) for hand in hands], redundancy=l, n_tasks=f)
            seen: set[int] = set()
            slot = next(k for k, t in enumerate(hands[holder])
                        if t in seen or seen.add(t))
            duplicate = hands[holder][slot]
            held = set(hands[holder])
            while swap_budget > 0:
                swap_budget -= 1
                other = rng.randrange(n)
                k = rng.randrange(load)
                candidate = hands[other][k]
                if (other != holder and candidate not in held
                        and duplicate not in hands[other]):
                    hands[other][k], hands[holder][slot] = duplicate, candidate
                    break
    raise RuntimeError(
        f"could not repair a random deal for (N={n}, L={l}, F={f}); "
        f"seed state exhausted after {max_attempts} attempts")
