"""Dataflow-graph node fusion and cache-miss-driven priority assignment.

Parallel dataflow applications commonly have more nodes than the hardware
has threads; the resulting oversubscription causes task switching that
evicts and reloads cache state.  Fusing neighbouring nodes shrinks the
task count.  Two nodes are fusable when they execute at the same rate, are
connected by an unconditionally triggered edge, and no alternate directed
path runs between them (fusing such a pair would close a cycle).

The fusion pass greedily merges the eligible pair with the highest
combined interference weight until the node count fits the thread budget
or no eligible pair remains.  Rates are exact rationals so the same-rate
test never suffers rounding.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from .interference_math import CodeHeatmap

UNCONDITIONAL = "unconditional"
CONDITIONAL = "conditional"


def as_rate(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value)
    if isinstance(value, float):
        try:
            return Fraction(repr(value))
        except ValueError:
            return Fraction(value)
    raise TypeError(f"cannot interpret {value!r} as a rate")


@dataclass(frozen=True)
class DFNode:
    """Dataflow node; ``members`` lists the original nodes folded into it."""

    id: str
    rate: Fraction
    weight: float = 0.0
    members: frozenset[str] = field(default=frozenset())

    def __post_init__(self) -> None:
        object.__setattr__(self, "rate", as_rate(self.rate))
        if self.rate <= 0:
            raise ValueError(f"node {self.id!r}: rate must be positive")
        if not (0 <= self.weight <= 1):
            raise ValueError(f"node {self.id!r}: weight must lie in [0, 1]")
        if not self.members:
            object.__setattr__(self, "members", frozenset([self.id]))


@dataclass(frozen=True)
class DFEdge:
    src: str
    dst: str
    trigger: str = UNCONDITIONAL

    def __post_init__(self) -> None:
        if self.trigger not in (UNCONDITIONAL, CONDITIONAL):
            raise ValueError(f"trigger must be unconditional or conditional, got {self.trigger!r}")


@dataclass(frozen=True)
class DataflowGraph:
    nodes: tuple[DFNode, ...]
    edges: tuple[DFEdge, ...]

    def __post_init__(self) -> None:
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ValueError("node ids must be unique")
        known = set(ids)
        for edge in self.edges:
            if edge.src not in known or edge.dst not in known:
                raise ValueError(f"edge {edge.src!r}->{edge.dst!r} references unknown nodes")
            if edge.src == edge.dst:
                raise ValueError(f"self-loop on node {edge.src!r}")

    def node(self, node_id: str) -> DFNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise ValueError(f"unknown node id: {node_id!r}")

    def successors(self, node_id: str) -> list[str]:
        return sorted({e.dst for e in self.edges if e.src == node_id})


@dataclass(frozen=True)
class Merge:
    first: str
    second: str
    fused: str


@dataclass(frozen=True)
class FusionPlan:
    """Ordered merge sequence plus whether the thread budget was reached."""

    merges: tuple[Merge, ...]
    thread_budget: int
    final_node_count: int

    @property
    def budget_met(self) -> bool:
        return self.final_node_count <= self.thread_budget


def _reachable(edges: Iterable[DFEdge], start: str, goal: str) -> bool:
    adjacency: dict[str, list[str]] = {}
    for e in edges:
        adjacency.setdefault(e.src, []).append(e.dst)
    stack = [start]
    seen = {start}
    while stack:
        node = stack.pop()
        if node == goal:
            return True
        for nxt in adjacency.get(node, ()):
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return False


def eligible(u: str, v: str, g: DataflowGraph) -> bool:
    """True when u and v can be fused.

    Requires equal rates, a direct unconditionally triggered edge in either
    direction, and no alternate directed path between the pair; an
    alternate path would turn into a cycle through the fused node.
    """
    if u == v:
        raise ValueError("cannot fuse a node with itself")
    nu, nv = g.node(u), g.node(v)
    if nu.rate != nv.rate:
        return False
    direct = [e for e in g.edges if {e.src, e.dst} == {u, v}]
    if not any(e.trigger == UNCONDITIONAL for e in direct):
        return False
    rest = [e for e in g.edges if {e.src, e.dst} != {u, v}]
    if _reachable(rest, u, v) or _reachable(rest, v, u):
        return False
    return True


def _fresh_id(u: str, v: str, taken: set[str]) -> str:
    name = f"{u}+{v}"
    while name in taken:
        name += "'"
    return name


def _merge_nodes(g: DataflowGraph, u: str, v: str) -> tuple[DataflowGraph, str]:
    nu, nv = g.node(u), g.node(v)
    taken = {n.id for n in g.nodes}
    fused_id = _fresh_id(u, v, taken)
    fused = DFNode(
        id=fused_id,
        rate=nu.rate,
        weight=max(nu.weight, nv.weight),
        members=nu.members | nv.members,
    )
    nodes = tuple(n for n in g.nodes if n.id not in (u, v)) + (fused,)

    # re-target edges, drop the internal ones, collapse parallel duplicates
    # (a conditional trigger wins when mixed parallel edges collapse)
    remapped: dict[tuple[str, str], str] = {}
    for e in g.edges:
        src = fused_id if e.src in (u, v) else e.src
        dst = fused_id if e.dst in (u, v) else e.dst
        if src == dst:
            continue
        key = (src, dst)
        if key in remapped:
            if e.trigger == CONDITIONAL:
                remapped[key] = CONDITIONAL
        else:
            remapped[key] = e.trigger
    edges = tuple(
        DFEdge(src=s, dst=d, trigger=t) for (s, d), t in sorted(remapped.items())
    )
    return DataflowGraph(nodes=nodes, edges=edges), fused_id


def fuse_pass(
    g: DataflowGraph,
    thread_budget: int,
    heatmap: CodeHeatmap | None = None,
) -> tuple[DataflowGraph, FusionPlan]:
    """Shrink the graph toward the thread budget by greedy pair fusion.

    The eligible pair with the highest combined weight is merged first
    (ties broken by the lexicographically smallest id pair); the fused node
    keeps the common rate, the union of members and the maximum weight.
    Stops at the budget or at a fixpoint; an unreached budget is reported
    in the plan rather than raised.
    """
    if thread_budget < 1:
        raise ValueError("thread_budget must be at least 1")
    if heatmap is not None:
        nodes = tuple(
            replace(n, weight=heatmap.weight_of(n.id, default=n.weight)) for n in g.nodes
        )
        g = DataflowGraph(nodes=nodes, edges=g.edges)

    merges: list[Merge] = []
    while len(g.nodes) > thread_budget:
        best: tuple[float, str, str] | None = None
        by_id = {n.id: n for n in g.nodes}
        seen_pairs = set()
        for edge in g.edges:
            a, b = sorted((edge.src, edge.dst))
            if (a, b) in seen_pairs:
                continue
            seen_pairs.add((a, b))
            if not eligible(a, b, g):
                continue
            combined = by_id[a].weight + by_id[b].weight
            if best is None or combined > best[0] or (
                combined == best[0] and (a, b) < (best[1], best[2])
            ):
                best = (combined, a, b)
        if best is None:
            break
        _, u, v = best
        g, fused_id = _merge_nodes(g, u, v)
        merges.append(Merge(first=u, second=v, fused=fused_id))

    return g, FusionPlan(
        merges=tuple(merges),
        thread_budget=thread_budget,
        final_node_count=len(g.nodes),
    )


def assign_priorities(threads: Sequence[tuple[str, int]]) -> list[str]:
    """Order thread ids by cache-miss count, worst first.

    Higher miss counts get higher priority; ties fall back to ascending id
    so the ordering is total and deterministic.
    """
    ids = [tid for tid, _ in threads]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate thread ids")
    for tid, count in threads:
        if count < 0:
            raise ValueError(f"thread {tid!r}: cache-miss count must be non-negative")
    return [tid for tid, _ in sorted(threads, key=lambda tc: (-tc[1], tc[0]))]


# ---------------------------------------------------------------------------
# Serialization


def graph_to_dict(g: DataflowGraph) -> dict:
    return {
        "nodes": [
            {
                "id": n.id,
                "rate": str(n.rate),
                "weight": n.weight,
                "members": sorted(n.members),
            }
            for n in g.nodes
        ],
        "edges": [{"src": e.src, "dst": e.dst, "trigger": e.trigger} for e in g.edges],
    }


def graph_from_dict(doc: dict) -> DataflowGraph:
    nodes = tuple(
        DFNode(
            id=n["id"],
            rate=as_rate(n["rate"]),
            weight=float(n.get("weight", 0.0)),
            members=frozenset(n["members"]) if n.get("members") else frozenset(),
        )
        for n in doc["nodes"]
    )
    edges = tuple(
        DFEdge(src=e["src"], dst=e["dst"], trigger=e.get("trigger", UNCONDITIONAL))
        for e in doc.get("edges", ())
    )
    return DataflowGraph(nodes=nodes, edges=edges)


def fusion_result_to_dict(g: DataflowGraph, plan: FusionPlan) -> dict:
    doc = graph_to_dict(g)
    doc["merges"] = [
        {"first": m.first, "second": m.second, "fused": m.fused} for m in plan.merges
    ]
    doc["thread_budget"] = plan.thread_budget
    doc["final_node_count"] = plan.final_node_count
    doc["budget_met"] = plan.budget_met
    return doc


def load_graph(path: str | Path) -> DataflowGraph:
    with open(path, "r", encoding="utf-8") as fh:
        return graph_from_dict(json.load(fh))


def save_graph(g: DataflowGraph, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(graph_to_dict(g), fh, indent=2)
        fh.write("\n")
