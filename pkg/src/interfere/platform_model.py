"""Typed hardware resource graphs and the interference calculus over them.

A platform is described as a graph of resources classified as Initiators
(request originators: cores, DMA engines, prefetchers), Transporters
(routing fabric: caches, buses) and Targets (endpoints: memories, device
slaves).  A transaction is a simple Initiator-to-Target path through the
link graph.  Two or more transactions interfere when their paths share a
resource directly, or when contention on a shared resource propagates to a
resource on some path through a coupling edge (cache inclusivity, snoop
coherency, prefetcher reactions).

All structures are immutable after construction; every operation here is a
pure function over them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from importlib import resources as importlib_resources
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence


class ResourceKind(Enum):
    INITIATOR = "Initiator"
    TRANSPORTER = "Transporter"
    TARGET = "Target"


class CouplingReason(Enum):
    INCLUSIVITY = "inclusivity"
    COHERENCY_SNOOP = "coherency_snoop"
    PREFETCH = "prefetch"


@dataclass(frozen=True)
class Resource:
    """One hardware resource node."""

    id: str
    name: str
    kind: ResourceKind


@dataclass(frozen=True)
class Link:
    """Directed edge of the resource graph (JSON keys ``from``/``to``)."""

    src: str
    dst: str


@dataclass(frozen=True)
class Coupling:
    """Induced-effect edge: contention at ``source`` disturbs ``affected``."""

    source: str
    affected: str
    reason: CouplingReason


@dataclass(frozen=True)
class PlatformModel:
    resources: tuple[Resource, ...]
    links: tuple[Link, ...]
    couplings: tuple[Coupling, ...] = ()

    @cached_property
    def resource_by_id(self) -> dict[str, Resource]:
        return {r.id: r for r in self.resources}

    @cached_property
    def successors(self) -> dict[str, tuple[str, ...]]:
        """Adjacency with deterministically sorted neighbour lists."""
        adj: dict[str, list[str]] = {r.id: [] for r in self.resources}
        for link in self.links:
            if link.src in adj and link.dst in self.resource_by_id:
                adj[link.src].append(link.dst)
        return {rid: tuple(sorted(set(nbrs))) for rid, nbrs in adj.items()}

    def kind_of(self, resource_id: str) -> ResourceKind:
        try:
            return self.resource_by_id[resource_id].kind
        except KeyError:
            raise ValueError(f"unknown resource id: {resource_id!r}") from None


@dataclass(frozen=True)
class Transaction:
    """A simple Initiator-to-Target path, labelled for reporting."""

    id: str
    path: tuple[str, ...]


@dataclass(frozen=True)
class InterferenceVerdict:
    """Outcome of the interference calculus for one transaction combination.

    ``shared`` holds resources directly on two or more paths; ``coupled``
    holds (resource, reason) pairs reached from a shared resource through a
    coupling edge and lying on some path of the combination.
    """

    combination: tuple[str, ...]
    shared: tuple[str, ...]
    coupled: tuple[tuple[str, str], ...]
    interference_free: bool


# ---------------------------------------------------------------------------
# Validation


def validate_model(model: PlatformModel) -> list[str]:
    """Check every structural invariant; return one diagnostic per violation.

    An empty list means the model is well formed.  Diagnostics name the
    violated invariant and the offending resource/link/coupling ids.
    """
    diags: list[str] = []
    seen: set[str] = set()
    for res in model.resources:
        if res.id in seen:
            diags.append(f"duplicate resource id: {res.id!r}")
        seen.add(res.id)
        if not isinstance(res.kind, ResourceKind):
            diags.append(f"resource {res.id!r} has invalid kind: {res.kind!r}")

    ids = {r.id for r in model.resources}
    for link in model.links:
        if link.src not in ids:
            diags.append(f"link references missing resource: {link.src!r}")
        if link.dst not in ids:
            diags.append(f"link references missing resource: {link.dst!r}")
        if link.dst in ids and model.resource_by_id[link.dst].kind is ResourceKind.INITIATOR:
            diags.append(f"link {link.src!r}->{link.dst!r} terminates at an Initiator")
        if link.src in ids and model.resource_by_id[link.src].kind is ResourceKind.TARGET:
            diags.append(f"link {link.src!r}->{link.dst!r} originates at a Target")

    for coup in model.couplings:
        if coup.source not in ids:
            diags.append(f"coupling references missing resource: {coup.source!r}")
        if coup.affected not in ids:
            diags.append(f"coupling references missing resource: {coup.affected!r}")
        if coup.source == coup.affected:
            diags.append(f"coupling source equals affected resource: {coup.source!r}")
        if not isinstance(coup.reason, CouplingReason):
            diags.append(
                f"coupling {coup.source!r}->{coup.affected!r} has invalid reason: {coup.reason!r}"
            )

    initiators = [r.id for r in model.resources if r.kind is ResourceKind.INITIATOR]
    targets = {r.id for r in model.resources if r.kind is ResourceKind.TARGET}
    if not initiators:
        diags.append("model has no Initiator")
    if not targets:
        diags.append("model has no Target")

    if initiators and targets and not diags:
        if not any(_paths_exist(model, init, targets) for init in initiators):
            diags.append("no Initiator-to-Target path exists in the link graph")

    return diags


def _paths_exist(model: PlatformModel, start: str, targets: set[str]) -> bool:
    stack = [start]
    visited = {start}
    while stack:
        node = stack.pop()
        if node in targets:
            return True
        for nxt in model.successors.get(node, ()):
            if nxt not in visited:
                visited.add(nxt)
                stack.append(nxt)
    return False


# ---------------------------------------------------------------------------
# Transaction enumeration


def transaction_id(path: Sequence[str]) -> str:
    return ">".join(path)


def enumerate_transactions(
    model: PlatformModel, initiator: str, target: str | None = None
) -> list[Transaction]:
    """Enumerate every simple Initiator-to-Target path from ``initiator``.

    Paths are returned in lexicographic order of their resource-id
    sequences, which makes the enumeration deterministic.  When ``target``
    is given only paths ending there are returned.
    """
    if model.kind_of(initiator) is not ResourceKind.INITIATOR:
        raise ValueError(f"resource {initiator!r} is not an Initiator")
    if target is not None and model.kind_of(target) is not ResourceKind.TARGET:
        raise ValueError(f"resource {target!r} is not a Target")

    paths: list[tuple[str, ...]] = []
    stack: list[str] = [initiator]
    on_path = {initiator}

    def walk(node: str) -> None:
        kind = model.resource_by_id[node].kind
        if kind is ResourceKind.TARGET:
            if target is None or node == target:
                paths.append(tuple(stack))
            return  # Targets have no outgoing links by invariant
        for nxt in model.successors.get(node, ()):
            if nxt in on_path:
                continue
            stack.append(nxt)
            on_path.add(nxt)
            walk(nxt)
            stack.pop()
            on_path.remove(nxt)

    walk(initiator)
    paths.sort()
    return [Transaction(id=transaction_id(p), path=p) for p in paths]


def _check_transaction(model: PlatformModel, txn: Transaction) -> None:
    if not txn.path:
        raise ValueError(f"transaction {txn.id!r} has an empty path")
    if len(set(txn.path)) != len(txn.path):
        raise ValueError(f"transaction {txn.id!r} repeats a resource (not a simple path)")
    if model.kind_of(txn.path[0]) is not ResourceKind.INITIATOR:
        raise ValueError(f"transaction {txn.id!r} does not start at an Initiator")
    if model.kind_of(txn.path[-1]) is not ResourceKind.TARGET:
        raise ValueError(f"transaction {txn.id!r} does not end at a Target")
    for a, b in zip(txn.path, txn.path[1:]):
        if b not in model.successors.get(a, ()):
            raise ValueError(f"transaction {txn.id!r} uses missing link {a!r}->{b!r}")


# ---------------------------------------------------------------------------
# Interference calculus


def interference_channels(
    model: PlatformModel, transactions: Iterable[Transaction]
) -> InterferenceVerdict:
    """Decide whether a combination of transactions can interfere.

    Directly shared resources are those appearing on at least two distinct
    paths.  Coupled resources extend the verdict one hop further: for each
    coupling whose source is shared, the affected resource is flagged when
    it lies on any path of the combination.  Coupling propagation depth is
    exactly one; chains of couplings are not followed.
    """
    txns = sorted(transactions, key=lambda t: t.id)
    if len(txns) < 2:
        raise ValueError("interference calculus needs a combination of at least 2 transactions")
    for txn in txns:
        _check_transaction(model, txn)

    count: dict[str, int] = {}
    for txn in txns:
        for rid in set(txn.path):
            count[rid] = count.get(rid, 0) + 1
    shared = {rid for rid, n in count.items() if n >= 2}
    on_some_path = set(count)

    coupled = {
        (coup.affected, coup.reason.value)
        for coup in model.couplings
        if coup.source in shared and coup.affected in on_some_path
    }

    return InterferenceVerdict(
        combination=tuple(t.id for t in txns),
        shared=tuple(sorted(shared)),
        coupled=tuple(sorted(coupled)),
        interference_free=not shared and not coupled,
    )


def pairwise_channel_report(
    model: PlatformModel, transactions: Sequence[Transaction]
) -> list[InterferenceVerdict]:
    """Interference verdict for every unordered transaction pair.

    Pairs are ordered by transaction id so the report is deterministic.
    """
    if len(transactions) < 2:
        raise ValueError("pairwise report needs at least 2 transactions")
    txns = sorted(transactions, key=lambda t: t.id)
    return [interference_channels(model, pair) for pair in combinations(txns, 2)]


# ---------------------------------------------------------------------------
# Serialization

_KIND_BY_VALUE = {k.value: k for k in ResourceKind}
_REASON_BY_VALUE = {r.value: r for r in CouplingReason}


def model_to_dict(model: PlatformModel) -> dict:
    return {
        "resources": [
            {"id": r.id, "name": r.name, "kind": r.kind.value} for r in model.resources
        ],
        "links": [{"from": l.src, "to": l.dst} for l in model.links],
        "couplings": [
            {"source": c.source, "affected": c.affected, "reason": c.reason.value}
            for c in model.couplings
        ],
    }


def model_from_dict(doc: dict) -> PlatformModel:
    try:
        resources = tuple(
            Resource(id=r["id"], name=r.get("name", r["id"]), kind=_KIND_BY_VALUE[r["kind"]])
            for r in doc["resources"]
        )
    except KeyError as exc:
        raise ValueError(f"bad resource entry in model document: {exc}") from None
    links = tuple(Link(src=l["from"], dst=l["to"]) for l in doc.get("links", ()))
    try:
        couplings = tuple(
            Coupling(
                source=c["source"],
                affected=c["affected"],
                reason=_REASON_BY_VALUE[c["reason"]],
            )
            for c in doc.get("couplings", ())
        )
    except KeyError as exc:
        raise ValueError(f"bad coupling entry in model document: {exc}") from None
    return PlatformModel(resources=resources, links=links, couplings=couplings)


def load_model(path: str | Path) -> PlatformModel:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


def save_model(model: PlatformModel, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=2)
        fh.write("\n")


def load_rpi4_model() -> PlatformModel:
    """Load the bundled Raspberry Pi 4 (BCM2711) reference model.

    The model is a best-effort reconstruction from public documentation of
    the board, the BCM2711 SoC and the Cortex-A72 cluster: four cores with
    private L1 instruction/data caches and a merged two-level TLB block, a
    shared L2 subsystem (unified cache, snoop control unit, prefetcher),
    the AMBA interconnect, LPDDR4 memory, and the VideoCore iGPU as a
    conservative composite device behind a single shared port.
    """
    ref = importlib_resources.files("interfere.data").joinpath("rpi4.json")
    with ref.open("r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
