"""Static cgroup-v2 hierarchy planning from an interference matrix.

The planner walks every unordered task pair in ascending index order and,
whenever the pair's worst-case slowdown factor exceeds the threshold
theta, moves both tasks out of the root cgroup into dedicated per-task
sub-groups with the freezer controller enabled.  Tasks without any
high-contention partner stay in the root group.  A monitor can then
serialize contending tasks by freezing one of the groups; the plan itself
is static and computed before deployment.

Plans can be exported as JSON, rendered to an idempotent POSIX shell
script, or applied directly to a cgroup-v2 mount (dry-run by default).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .interference_math import InterferenceMatrix

CONTROLLERS = ("cpu", "cpuset", "freezer")

DEFAULT_MOUNT = "/sys/fs/cgroup"
ROOT_GROUP = "root"


@dataclass(frozen=True)
class TaskSpec:
    """Deployable task: a binary plus scheduling metadata."""

    id: str
    executable: str = ""
    criticality: str = "best_effort"
    core_affinity: tuple[int, ...] | None = None
    period_ms: float | None = None
    deadline_ms: float | None = None

    def __post_init__(self) -> None:
        if self.criticality not in ("critical", "best_effort"):
            raise ValueError(f"criticality must be critical or best_effort, got {self.criticality!r}")
        if self.core_affinity is not None and any(c < 0 for c in self.core_affinity):
            raise ValueError("core affinity indices must be non-negative")


@dataclass(frozen=True)
class PlannerConfig:
    theta: float = 1.5
    consolidate: bool = False

    def __post_init__(self) -> None:
        if self.theta <= 1:
            raise ValueError(f"theta must exceed 1, got {self.theta}")


@dataclass(frozen=True)
class CgroupGroup:
    """One node of the planned hierarchy."""

    name: str
    members: tuple[str, ...]
    controllers: tuple[str, ...] = ()
    cpuset: tuple[int, ...] | None = None
    freezer: bool = False

    def __post_init__(self) -> None:
        if not re.fullmatch(r"[A-Za-z0-9._-]+", self.name):
            raise ValueError(f"group name is not filesystem-safe: {self.name!r}")
        unknown = set(self.controllers) - set(CONTROLLERS)
        if unknown:
            raise ValueError(f"unknown controllers: {sorted(unknown)}")
        if self.freezer and "freezer" not in self.controllers:
            raise ValueError(f"group {self.name!r} flags freezer without the controller")


@dataclass(frozen=True)
class CgroupPlan:
    """Root group plus planner-created sub-groups; a partition of the tasks."""

    root: CgroupGroup
    groups: tuple[CgroupGroup, ...]

    def __post_init__(self) -> None:
        names = [self.root.name] + [g.name for g in self.groups]
        if len(set(names)) != len(names):
            raise ValueError("group names must be unique")
        seen: set[str] = set()
        for group in (self.root, *self.groups):
            overlap = seen & set(group.members)
            if overlap:
                raise ValueError(f"tasks assigned to multiple groups: {sorted(overlap)}")
            seen.update(group.members)

    @property
    def all_tasks(self) -> frozenset[str]:
        tasks = set(self.root.members)
        for g in self.groups:
            tasks.update(g.members)
        return frozenset(tasks)

    def group_of(self, task: str) -> CgroupGroup:
        for group in (self.root, *self.groups):
            if task in group.members:
                return group
        raise ValueError(f"task {task!r} is not in the plan")


def _safe_name(task_id: str, taken: set[str]) -> str:
    base = re.sub(r"[^A-Za-z0-9._-]", "_", task_id) or "task"
    name = base
    suffix = 1
    while name in taken or name == ROOT_GROUP:
        suffix += 1
        name = f"{base}-{suffix}"
    taken.add(name)
    return name


# ---------------------------------------------------------------------------
# Planning


def plan(
    tasks: Sequence[TaskSpec],
    matrix: InterferenceMatrix,
    config: PlannerConfig = PlannerConfig(),
) -> CgroupPlan:
    """Build the static hierarchy forbidding co-execution of contending pairs.

    Every unordered pair (ascending index order) whose interference factor
    exceeds ``config.theta`` gets both tasks moved into their own
    freezer-enabled sub-groups; everything else stays in root.  With
    ``consolidate`` set, mutually non-contending conflicted tasks share
    sub-groups instead (greedy colouring of the conflict graph); the
    default keeps one group per conflicting task.
    """
    ids = [t.id for t in tasks]
    if len(set(ids)) != len(ids):
        raise ValueError("task ids must be unique")
    if set(ids) != set(matrix.tasks):
        raise ValueError("matrix must be indexed by exactly the given task ids")
    by_id = {t.id: t for t in tasks}
    order = list(matrix.tasks)

    conflicted: dict[str, set[str]] = {}
    n = len(order)
    for i in range(n):
        for j in range(i + 1, n):
            if matrix.entries[i][j] > config.theta:
                conflicted.setdefault(order[i], set()).add(order[j])
                conflicted.setdefault(order[j], set()).add(order[i])

    taken: set[str] = set()
    if config.consolidate:
        assignment = _colour_conflicts(order, conflicted)
        buckets: dict[int, list[str]] = {}
        for task in order:
            if task in conflicted:
                buckets.setdefault(assignment[task], []).append(task)
        named = [(f"grp{colour}", members) for colour, members in sorted(buckets.items())]
    else:
        named = [(task, [task]) for task in order if task in conflicted]

    groups = []
    for raw_name, members in named:
        name = _safe_name(raw_name, taken)
        cores: set[int] = set()
        for member in members:
            affinity = by_id[member].core_affinity
            if affinity:
                cores.update(affinity)
        controllers = ["freezer"]
        if cores:
            controllers.append("cpuset")
        groups.append(
            CgroupGroup(
                name=name,
                members=tuple(members),
                controllers=tuple(sorted(controllers)),
                cpuset=tuple(sorted(cores)) if cores else None,
                freezer=True,
            )
        )

    root_members = tuple(t for t in order if t not in conflicted)
    root = CgroupGroup(name=ROOT_GROUP, members=root_members)
    return CgroupPlan(root=root, groups=tuple(groups))


def _colour_conflicts(order: Sequence[str], conflicted: dict[str, set[str]]) -> dict[str, int]:
    colours: dict[str, int] = {}
    for task in order:
        if task not in conflicted:
            continue
        used = {colours[nbr] for nbr in conflicted[task] if nbr in colours}
        colour = 0
        while colour in used:
            colour += 1
        colours[task] = colour
    return colours


def verify(
    plan_: CgroupPlan, matrix: InterferenceMatrix, theta: float
) -> tuple[bool, list[tuple[str, str, str]]]:
    """Check that no contending pair can co-execute under the plan.

    Returns (ok, violations); each violation names the pair and what is
    wrong (same group, or freezer missing on a side).  Raises if the plan
    does not cover exactly the matrix's tasks.
    """
    if theta <= 1:
        raise ValueError(f"theta must exceed 1, got {theta}")
    if plan_.all_tasks != set(matrix.tasks):
        raise ValueError("plan does not cover exactly the matrix's tasks")

    violations: list[tuple[str, str, str]] = []
    order = matrix.tasks
    for i in range(len(order)):
        for j in range(i + 1, len(order)):
            if matrix.entries[i][j] <= theta:
                continue
            a, b = order[i], order[j]
            ga, gb = plan_.group_of(a), plan_.group_of(b)
            if ga.name == gb.name:
                violations.append((a, b, f"both reside in group {ga.name!r}"))
                continue
            for task, group in ((a, ga), (b, gb)):
                if not group.freezer:
                    violations.append((a, b, f"group {group.name!r} of {task!r} lacks freezer"))
    return (not violations, violations)


# ---------------------------------------------------------------------------
# Realization: shell script and filesystem actions


@dataclass(frozen=True)
class Action:
    """One filesystem step: kind is ``mkdir`` or ``write``."""

    kind: str
    path: str
    content: str | None = None


def plan_actions(plan_: CgroupPlan, mount_point: str | Path = DEFAULT_MOUNT) -> list[Action]:
    """Ordered mkdir/write actions realizing the plan under a cgroup-v2 mount.

    Shared backend of :func:`emit_script` and :func:`apply`; a plan with no
    sub-groups needs no actions.
    """
    mount = str(mount_point).rstrip("/")
    if not mount:
        raise ValueError("mount point must be a non-empty path")
    actions: list[Action] = []
    needed = sorted({c for g in plan_.groups for c in g.controllers})
    for controller in needed:
        actions.append(
            Action("write", f"{mount}/cgroup.subtree_control", f"+{controller}")
        )
    for group in plan_.groups:
        actions.append(Action("mkdir", f"{mount}/{group.name}"))
        if group.cpuset is not None:
            actions.append(
                Action(
                    "write",
                    f"{mount}/{group.name}/cpuset.cpus",
                    ",".join(str(c) for c in group.cpuset),
                )
            )
    return actions


def emit_script(plan_: CgroupPlan, mount_point: str | Path = DEFAULT_MOUNT) -> str:
    """Render the plan as a deterministic POSIX shell script.

    The script creates group directories, delegates the needed controllers
    through the root's ``cgroup.subtree_control``, writes cpuset core
    lists, and documents task attachment and freezer toggling as comments
    (attachment needs live pids, freezing is the monitor's decision).
    """
    mount = str(mount_point).rstrip("/")
    if not mount:
        raise ValueError("mount point must be a non-empty path")
    by_path: dict[str, CgroupGroup] = {f"{mount}/{g.name}": g for g in plan_.groups}
    members_by_group = {g.name: g.members for g in plan_.groups}

    lines = [
        "#!/bin/sh",
        "# Static cgroup-v2 hierarchy generated by interfere.",
        f'# cgroup-v2 mount point: {mount}',
        "set -eu",
        "",
    ]
    actions = plan_actions(plan_, mount)
    if not actions:
        lines.append("# no contending task pairs: every task remains in the root cgroup")
        lines.append("")
        return "\n".join(lines)

    for action in actions:
        if action.kind == "write" and action.path.endswith("cgroup.subtree_control"):
            lines.append(f'echo "{action.content}" > "{action.path}"')
        elif action.kind == "mkdir":
            group = by_path[action.path]
            lines.append("")
            lines.append(f"# group {group.name!r}: tasks {', '.join(group.members)}")
            lines.append(f'mkdir -p "{action.path}"')
            if group.freezer:
                lines.append("# suspend/resume this group with:")
                lines.append(f'#   echo 1 > "{action.path}/cgroup.freeze"')
                lines.append(f'#   echo 0 > "{action.path}/cgroup.freeze"')
            for member in group.members:
                lines.append(f"# attach task {member!r}:")
                lines.append(f'#   echo "$PID_OF_{re.sub(r"[^A-Za-z0-9_]", "_", member)}" > "{action.path}/cgroup.procs"')
        elif action.kind == "write":
            lines.append(f'echo "{action.content}" > "{action.path}"')
    if plan_.root.members:
        lines.append("")
        lines.append(f"# remaining in root: {', '.join(plan_.root.members)}")
    lines.append("")
    return "\n".join(lines)


@dataclass(frozen=True)
class ActionResult:
    action: Action
    status: str  # planned | ok | failed | skipped
    category: str | None = None
    detail: str | None = None


@dataclass(frozen=True)
class ApplyReport:
    ok: bool
    results: tuple[ActionResult, ...]


def apply(
    plan_: CgroupPlan,
    mount_point: str | Path = DEFAULT_MOUNT,
    dry_run: bool = True,
) -> ApplyReport:
    """Realize the plan on a live cgroup-v2 filesystem, or preview it.

    With ``dry_run`` (the default) the ordered action list is returned
    untouched with status ``planned``.  Live mode performs the writes
    sequentially, stopping at the first failure; failures carry a category:
    ``not_cgroup2`` (mount lacks cgroup.controllers), ``missing_controller``
    (controller not offered by the root), ``permission``, or ``io_error``.
    """
    actions = plan_actions(plan_, mount_point)
    if dry_run:
        return ApplyReport(
            ok=True,
            results=tuple(ActionResult(a, "planned") for a in actions),
        )

    mount = Path(str(mount_point))
    results: list[ActionResult] = []

    controllers_file = mount / "cgroup.controllers"
    try:
        available = set(_read_text(controllers_file).split())
    except FileNotFoundError:
        return ApplyReport(
            ok=False,
            results=tuple(
                [
                    ActionResult(
                        Action("write", str(controllers_file)),
                        "failed",
                        "not_cgroup2",
                        f"{controllers_file} does not exist; not a cgroup-v2 mount",
                    )
                ]
                + [ActionResult(a, "skipped") for a in actions]
            ),
        )
    except PermissionError as exc:
        return ApplyReport(
            ok=False,
            results=tuple(
                [ActionResult(Action("write", str(controllers_file)), "failed", "permission", str(exc))]
                + [ActionResult(a, "skipped") for a in actions]
            ),
        )

    needed = {c for g in plan_.groups for c in g.controllers}
    missing = needed - available
    if missing:
        return ApplyReport(
            ok=False,
            results=tuple(
                [
                    ActionResult(
                        Action("write", str(controllers_file)),
                        "failed",
                        "missing_controller",
                        f"controllers not offered by the mount: {sorted(missing)}",
                    )
                ]
                + [ActionResult(a, "skipped") for a in actions]
            ),
        )

    failed = False
    for idx, action in enumerate(actions):
        if failed:
            results.append(ActionResult(action, "skipped"))
            continue
        try:
            if action.kind == "mkdir":
                Path(action.path).mkdir(parents=False, exist_ok=True)
            else:
                _write_text(Path(action.path), action.content or "")
            results.append(ActionResult(action, "ok"))
        except PermissionError as exc:
            results.append(ActionResult(action, "failed", "permission", str(exc)))
            failed = True
        except OSError as exc:
            results.append(ActionResult(action, "failed", "io_error", str(exc)))
            failed = True
    return ApplyReport(ok=not failed, results=tuple(results))


def _read_text(path: Path) -> str:
    # isolated for fault injection in tests
    return path.read_text(encoding="utf-8")


def _write_text(path: Path, content: str) -> None:
    # isolated for fault injection in tests
    path.write_text(content, encoding="utf-8")


# ---------------------------------------------------------------------------
# Serialization


def _group_to_dict(group: CgroupGroup) -> dict:
    return {
        "name": group.name,
        "members": list(group.members),
        "controllers": list(group.controllers),
        "cpuset": list(group.cpuset) if group.cpuset is not None else None,
        "freezer": group.freezer,
    }


def _group_from_dict(doc: dict) -> CgroupGroup:
    return CgroupGroup(
        name=doc["name"],
        members=tuple(doc["members"]),
        controllers=tuple(doc.get("controllers", ())),
        cpuset=tuple(doc["cpuset"]) if doc.get("cpuset") is not None else None,
        freezer=bool(doc.get("freezer", False)),
    )


def plan_to_dict(plan_: CgroupPlan) -> dict:
    return {
        "root": _group_to_dict(plan_.root),
        "groups": [_group_to_dict(g) for g in plan_.groups],
    }


def plan_from_dict(doc: dict) -> CgroupPlan:
    return CgroupPlan(
        root=_group_from_dict(doc["root"]),
        groups=tuple(_group_from_dict(g) for g in doc["groups"]),
    )


def load_plan(path: str | Path) -> CgroupPlan:
    with open(path, "r", encoding="utf-8") as fh:
        return plan_from_dict(json.load(fh))


def save_plan(plan_: CgroupPlan, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(plan_to_dict(plan_), fh, indent=2)
        fh.write("\n")


def tasks_from_dict(doc: dict | list) -> list[TaskSpec]:
    entries = doc["tasks"] if isinstance(doc, dict) else doc
    tasks = []
    for entry in entries:
        tasks.append(
            TaskSpec(
                id=entry["id"],
                executable=entry.get("executable", ""),
                criticality=entry.get("criticality", "best_effort"),
                core_affinity=tuple(entry["core_affinity"])
                if entry.get("core_affinity") is not None
                else None,
                period_ms=entry.get("period_ms"),
                deadline_ms=entry.get("deadline_ms"),
            )
        )
    return tasks


def load_tasks(path: str | Path) -> list[TaskSpec]:
    with open(path, "r", encoding="utf-8") as fh:
        return tasks_from_dict(json.load(fh))
