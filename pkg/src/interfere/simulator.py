"""Deterministic discrete-event simulation of contention and freezer protection.

Periodic victim tasks execute a fixed amount of work per job; synthetic
aggressor tasks burn a fraction of each of their periods generating memory
traffic.  While at least one unfrozen aggressor is active, a victim's work
rate drops to 1/delta, where delta is the worst pairwise slowdown factor
from the interference matrix.  In protected mode a monitor polls aggressor
cgroup CPU usage over a sliding window and freezes a group when usage
exceeds the threshold while a victim job is pending, thawing it at the
first poll with no pending victim work.

Three standard modes reproduce the protection experiment: ``solo`` (victim
alone), ``interference`` (no mitigation) and ``protected`` (monitor plus
cgroup plan).  All times are exact rationals and event stepping is
continuous, so identical scenarios yield bit-identical results.

Tasks on the same core split it equally while both have pending work; the
default calibration pins every task to its own core so contention is
purely through memory.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .cgroup_planner import CgroupPlan, PlannerConfig, TaskSpec, plan as build_plan
from .cgroup_planner import plan_from_dict, plan_to_dict
from .interference_math import InterferenceMatrix, matrix_from_dict, matrix_to_dict

VICTIM = "victim"
AGGRESSOR = "aggressor"

MODES = ("solo", "interference", "protected")

DEFAULT_MAX_EVENTS = 1_000_000


class SimulationError(RuntimeError):
    pass


def as_ms(value) -> Fraction:
    """Convert a time or ratio input to an exact Fraction.

    Accepts int, Fraction, strings like "2.5" or "1/3", and floats (their
    shortest decimal repr is used when it parses exactly).
    """
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
    raise TypeError(f"cannot interpret {value!r} as a time value")


def format_ms(value: Fraction) -> str:
    """Exact decimal rendering when the denominator is 2^a 5^b, else num/den."""
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    den = value.denominator
    e2 = e5 = 0
    while den % 2 == 0:
        den //= 2
        e2 += 1
    while den % 5 == 0:
        den //= 5
        e5 += 1
    if den != 1:
        return f"{value.numerator}/{value.denominator}"
    exp = max(e2, e5)
    scaled = value.numerator * 2 ** (exp - e2) * 5 ** (exp - e5)
    digits = str(abs(scaled)).rjust(exp + 1, "0")
    sign = "-" if scaled < 0 else ""
    return f"{sign}{digits[:-exp]}.{digits[-exp:]}"


@dataclass(frozen=True)
class SimTask:
    """One periodic task of the scenario."""

    id: str
    role: str
    period: Fraction
    relative_deadline: Fraction
    isolation_exec: Fraction | None = None
    phase: Fraction = Fraction(0)
    core: int = 0
    group: str | None = None
    busy_fraction: Fraction | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "period", as_ms(self.period))
        object.__setattr__(self, "relative_deadline", as_ms(self.relative_deadline))
        object.__setattr__(self, "phase", as_ms(self.phase))
        if self.isolation_exec is not None:
            object.__setattr__(self, "isolation_exec", as_ms(self.isolation_exec))
        if self.busy_fraction is not None:
            object.__setattr__(self, "busy_fraction", as_ms(self.busy_fraction))
        if self.role not in (VICTIM, AGGRESSOR):
            raise ValueError(f"role must be victim or aggressor, got {self.role!r}")
        if self.period <= 0:
            raise ValueError(f"task {self.id!r}: period must be positive")
        if self.phase < 0:
            raise ValueError(f"task {self.id!r}: phase must be non-negative")
        if self.role == VICTIM:
            if not (0 < self.relative_deadline <= self.period):
                raise ValueError(
                    f"victim {self.id!r}: need 0 < relative_deadline <= period"
                )
            if self.isolation_exec is None or self.isolation_exec <= 0:
                raise ValueError(f"victim {self.id!r}: isolation_exec must be positive")
        else:
            if self.busy_fraction is None or not (0 < self.busy_fraction <= 1):
                raise ValueError(
                    f"aggressor {self.id!r}: busy_fraction must lie in (0, 1]"
                )


@dataclass(frozen=True)
class MonitorConfig:
    """Cgroup usage poller settings."""

    poll_interval: Fraction = Fraction(50)
    usage_threshold: Fraction = Fraction(3, 10)
    window: Fraction | None = None
    monitor_core: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "poll_interval", as_ms(self.poll_interval))
        object.__setattr__(self, "usage_threshold", as_ms(self.usage_threshold))
        window = self.poll_interval if self.window is None else as_ms(self.window)
        object.__setattr__(self, "window", window)
        if self.poll_interval <= 0:
            raise ValueError("poll_interval must be positive")
        if not (0 < self.usage_threshold < 1):
            raise ValueError("usage_threshold must lie strictly between 0 and 1")
        if self.window <= 0:
            raise ValueError("window must be positive")


@dataclass(frozen=True)
class Scenario:
    tasks: tuple[SimTask, ...]
    mode: str
    interference: InterferenceMatrix | None = None
    job_count: int = 100
    monitor: MonitorConfig | None = None
    plan: CgroupPlan | None = None
    max_events: int = DEFAULT_MAX_EVENTS

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.job_count < 1:
            raise ValueError("job_count must be at least 1")
        ids = [t.id for t in self.tasks]
        if len(set(ids)) != len(ids):
            raise ValueError("task ids must be unique")
        victims = [t for t in self.tasks if t.role == VICTIM]
        if not victims:
            raise ValueError("scenario needs at least one victim task")
        if self.mode == "solo" and len(self.tasks) != 1:
            raise ValueError("solo mode must contain exactly the victim")
        aggressors = [t for t in self.tasks if t.role == AGGRESSOR]
        if aggressors and self.interference is None:
            raise ValueError("aggressor tasks need an interference matrix")
        if self.interference is not None:
            missing = set(ids) - set(self.interference.tasks)
            if missing:
                raise ValueError(f"interference matrix misses tasks: {sorted(missing)}")
        if self.mode == "protected":
            if self.monitor is None or self.plan is None:
                raise ValueError("protected mode requires monitor config and cgroup plan")
            for victim in victims:
                vg = self.group_of(victim.id)
                for agg in aggressors:
                    if self.group_of(agg.id) == vg:
                        raise ValueError(
                            f"protected mode: victim {victim.id!r} and aggressor "
                            f"{agg.id!r} share group {vg!r}"
                        )

    def group_of(self, task_id: str) -> str:
        if self.plan is not None:
            return self.plan.group_of(task_id).name
        task = next(t for t in self.tasks if t.id == task_id)
        return task.group or task.id


@dataclass(frozen=True)
class JobRecord:
    task: str
    index: int
    release: Fraction
    start: Fraction
    completion: Fraction
    exec_time: Fraction
    deadline_met: bool


@dataclass(frozen=True)
class SimResult:
    scenario: Scenario
    records: tuple[JobRecord, ...]
    freeze_intervals: dict[str, tuple[tuple[Fraction, Fraction], ...]]
    end_time: Fraction

    def records_of(self, task_id: str) -> list[JobRecord]:
        return [r for r in self.records if r.task == task_id]


# ---------------------------------------------------------------------------
# Engine internals


class _VictimState:
    def __init__(self, task: SimTask, job_count: int):
        self.task = task
        self.job_count = job_count
        self.next_index = 0
        self.queue: list[tuple[int, Fraction]] = []
        self.current: dict | None = None
        self.completed = 0
        self.rate = Fraction(1)

    def next_release(self) -> Fraction | None:
        if self.next_index >= self.job_count:
            return None
        return self.task.phase + self.task.period * self.next_index

    @property
    def pending(self) -> bool:
        return self.current is not None or bool(self.queue)

    @property
    def done(self) -> bool:
        return self.completed >= self.job_count


class _AggressorState:
    def __init__(self, task: SimTask, group: str):
        self.task = task
        self.group = group
        self.period_index = 0
        self.release: Fraction | None = None
        self.remaining = Fraction(0)
        self.active = False
        self.rate = Fraction(1)

    def next_boundary(self) -> Fraction:
        return self.task.phase + self.task.period * self.period_index

    @property
    def has_work(self) -> bool:
        return self.remaining > 0


class _GroupTracker:
    """Busy and freeze bookkeeping for one aggressor cgroup."""

    def __init__(self, name: str):
        self.name = name
        self.frozen = False
        self.busy_since: Fraction | None = None
        self.busy_intervals: list[tuple[Fraction, Fraction]] = []
        self.freeze_since: Fraction | None = None
        self.freeze_intervals: list[tuple[Fraction, Fraction]] = []
        self.active_members = 0

    def set_busy(self, busy: bool, now: Fraction) -> None:
        if busy and self.busy_since is None:
            self.busy_since = now
        elif not busy and self.busy_since is not None:
            if now > self.busy_since:
                self.busy_intervals.append((self.busy_since, now))
            self.busy_since = None

    def busy_in(self, lo: Fraction, hi: Fraction, now: Fraction) -> Fraction:
        total = Fraction(0)
        intervals = list(self.busy_intervals)
        if self.busy_since is not None:
            intervals.append((self.busy_since, now))
        for start, end in intervals:
            overlap = min(end, hi) - max(start, lo)
            if overlap > 0:
                total += overlap
        return total

    def freeze(self, now: Fraction) -> None:
        if not self.frozen:
            self.frozen = True
            self.freeze_since = now

    def thaw(self, now: Fraction) -> None:
        if self.frozen:
            self.frozen = False
            if self.freeze_since is not None and now > self.freeze_since:
                self.freeze_intervals.append((self.freeze_since, now))
            self.freeze_since = None

    def close(self, now: Fraction) -> None:
        self.set_busy(False, now)
        if self.frozen and self.freeze_since is not None and now > self.freeze_since:
            self.freeze_intervals.append((self.freeze_since, now))
            self.freeze_since = None


def run(scenario: Scenario) -> SimResult:
    """Simulate until every victim has completed ``job_count`` jobs.

    Event kinds are victim releases and completions, aggressor period
    boundaries and work exhaustion, and monitor polls.  Ties at one
    timestamp are processed as completions, then releases and period
    boundaries, then the poll, so a job finishing exactly at a poll no
    longer counts as pending while one released at the poll instant does.
    Aggressor work left over at a period boundary is discarded, and
    aggressor jobs still running when the last victim job completes are
    not recorded.
    """
    tasks = scenario.tasks
    matrix = scenario.interference
    victims = [
        _VictimState(t, scenario.job_count) for t in tasks if t.role == VICTIM
    ]
    include_aggressors = scenario.mode != "solo"
    groups: dict[str, _GroupTracker] = {}
    aggressors: list[_AggressorState] = []
    if include_aggressors:
        for t in tasks:
            if t.role != AGGRESSOR:
                continue
            group = scenario.group_of(t.id)
            groups.setdefault(group, _GroupTracker(group))
            aggressors.append(_AggressorState(t, group))

    monitor = scenario.monitor if scenario.mode == "protected" else None
    next_poll = Fraction(0) if monitor else None

    slowdown: dict[tuple[str, str], Fraction] = {}
    if matrix is not None:
        for v in victims:
            for a in aggressors:
                slowdown[(v.task.id, a.task.id)] = as_ms(
                    matrix.factor(v.task.id, a.task.id)
                )

    records: list[JobRecord] = []
    now = Fraction(0)
    events = 0

    def refresh_rates() -> None:
        core_load: dict[int, int] = {}
        for v in victims:
            if v.current is not None:
                core_load[v.task.core] = core_load.get(v.task.core, 0) + 1
        for a in aggressors:
            a.active = a.has_work and not groups[a.group].frozen
            if a.active:
                core_load[a.task.core] = core_load.get(a.task.core, 0) + 1
        for a in aggressors:
            a.rate = Fraction(1, core_load[a.task.core]) if a.active else Fraction(0)
            groups[a.group].set_busy(
                any(x.active for x in aggressors if x.group == a.group), now
            )
        for v in victims:
            if v.current is None:
                continue
            share = Fraction(1, core_load[v.task.core])
            worst = Fraction(1)
            for a in aggressors:
                if not a.active:
                    continue
                delta = slowdown.get((v.task.id, a.task.id), Fraction(1))
                if delta > worst:
                    worst = delta
            v.rate = share / worst

    def start_job(v: _VictimState, index: int, release: Fraction) -> None:
        v.current = {
            "index": index,
            "release": release,
            "start": now,
            "remaining": v.task.isolation_exec,
        }

    refresh_rates()

    while not all(v.done for v in victims):
        events += 1
        if events > scenario.max_events:
            raise SimulationError(
                f"event budget exceeded ({scenario.max_events}); "
                "the scenario does not converge"
            )

        candidates: list[Fraction] = []
        for v in victims:
            release = v.next_release()
            if release is not None:
                candidates.append(release)
            if v.current is not None and v.rate > 0:
                candidates.append(now + v.current["remaining"] / v.rate)
        for a in aggressors:
            candidates.append(a.next_boundary())
            if a.active and a.rate > 0:
                candidates.append(now + a.remaining / a.rate)
        if next_poll is not None:
            candidates.append(next_poll)
        t_next = min(candidates)
        dt = t_next - now
        if dt < 0:
            raise SimulationError("event time went backwards; internal error")

        if dt > 0:
            for v in victims:
                if v.current is not None and v.rate > 0:
                    v.current["remaining"] -= v.rate * dt
            for a in aggressors:
                if a.active and a.rate > 0:
                    a.remaining -= a.rate * dt
        now = t_next

        # 1. completions
        for v in victims:
            job = v.current
            if job is not None and job["remaining"] == 0:
                records.append(
                    JobRecord(
                        task=v.task.id,
                        index=job["index"],
                        release=job["release"],
                        start=job["start"],
                        completion=now,
                        exec_time=now - job["start"],
                        deadline_met=now <= job["release"] + v.task.relative_deadline,
                    )
                )
                v.completed += 1
                v.current = None
                if v.queue:
                    index, release = v.queue.pop(0)
                    start_job(v, index, release)
        for a in aggressors:
            if a.release is not None and a.remaining == 0:
                records.append(
                    JobRecord(
                        task=a.task.id,
                        index=a.period_index - 1,
                        release=a.release,
                        start=a.release,
                        completion=now,
                        exec_time=now - a.release,
                        deadline_met=now <= a.release + a.task.relative_deadline,
                    )
                )
                a.release = None

        # 2. releases and period boundaries
        for v in victims:
            while True:
                release = v.next_release()
                if release is None or release != now:
                    break
                v.next_index += 1
                if v.current is None:
                    start_job(v, v.next_index - 1, release)
                else:
                    v.queue.append((v.next_index - 1, release))
        for a in aggressors:
            if a.next_boundary() == now:
                a.remaining = a.task.busy_fraction * a.task.period
                a.release = now
                a.period_index += 1

        # 3. monitor poll
        if next_poll is not None and next_poll == now:
            pending = any(v.pending for v in victims)
            for tracker in groups.values():
                if not pending:
                    tracker.thaw(now)
                elif not tracker.frozen:
                    usage = tracker.busy_in(now - monitor.window, now, now)
                    if usage / monitor.window > monitor.usage_threshold:
                        tracker.freeze(now)
            next_poll = next_poll + monitor.poll_interval

        refresh_rates()

    for tracker in groups.values():
        tracker.close(now)

    return SimResult(
        scenario=scenario,
        records=tuple(sorted(records, key=lambda r: (r.task, r.index))),
        freeze_intervals={
            name: tuple(tr.freeze_intervals) for name, tr in groups.items()
        },
        end_time=now,
    )


# ---------------------------------------------------------------------------
# Metrics and exports


@dataclass(frozen=True)
class MissRatio:
    task: str
    misses: int
    jobs: int

    @property
    def ratio(self) -> Fraction:
        return Fraction(self.misses, self.jobs) if self.jobs else Fraction(0)


def miss_ratio(result: SimResult, task_id: str) -> MissRatio:
    """Deadline misses over completed jobs for one task, as exact counts."""
    records = result.records_of(task_id)
    if not records and task_id not in {t.id for t in result.scenario.tasks}:
        raise ValueError(f"unknown task id: {task_id!r}")
    misses = sum(1 for r in records if not r.deadline_met)
    return MissRatio(task=task_id, misses=misses, jobs=len(records))


def cdf(result: SimResult, task_id: str) -> list[tuple[Fraction, Fraction]]:
    """Execution-time CDF sample points (one step per distinct time)."""
    records = result.records_of(task_id)
    if not records:
        raise ValueError(f"no job records for task {task_id!r}")
    times = sorted(r.exec_time for r in records)
    n = len(times)
    points: list[tuple[Fraction, Fraction]] = []
    for i, t in enumerate(times):
        if i + 1 < n and times[i + 1] == t:
            continue
        points.append((t, Fraction(i + 1, n)))
    return points


def export_results(result: SimResult) -> str:
    """Job records as CSV: task,job,release_ms,completion_ms,exec_ms,deadline_met."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["task", "job", "release_ms", "completion_ms", "exec_ms", "deadline_met"])
    for rec in result.records:
        writer.writerow(
            [
                rec.task,
                rec.index,
                format_ms(rec.release),
                format_ms(rec.completion),
                format_ms(rec.exec_time),
                "true" if rec.deadline_met else "false",
            ]
        )
    return buf.getvalue()


def export_cdf(result: SimResult, task_id: str) -> str:
    """CDF sample points as CSV: exec_ms,fraction."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["exec_ms", "fraction"])
    for t, fraction in cdf(result, task_id):
        writer.writerow([format_ms(t), format_ms(fraction)])
    return buf.getvalue()


def summary_dict(result: SimResult) -> dict:
    """Per-task miss ratios plus freeze intervals, JSON-ready."""
    tasks = {}
    for task in result.scenario.tasks:
        mr = miss_ratio(result, task.id)
        tasks[task.id] = {
            "jobs": mr.jobs,
            "misses": mr.misses,
            "miss_ratio": float(mr.ratio),
            "miss_ratio_exact": f"{mr.misses}/{mr.jobs}" if mr.jobs else "0/0",
            "max_exec_ms": format_ms(max((r.exec_time for r in result.records_of(task.id)), default=Fraction(0))),
        }
    return {
        "mode": result.scenario.mode,
        "end_time_ms": format_ms(result.end_time),
        "tasks": tasks,
        "freeze_intervals": {
            group: [[format_ms(a), format_ms(b)] for a, b in intervals]
            for group, intervals in result.freeze_intervals.items()
        },
    }


# ---------------------------------------------------------------------------
# Default calibration


@dataclass(frozen=True)
class Calibration:
    """Named parameters of the standard victim/aggressor scenario.

    The victim's phase is one poll interval after the aggressor's so the
    monitor has a full observation window before the first contended job;
    with both phases at zero no poller with a 50 ms interval could react
    before a 30 ms deadline expires.
    """

    victim_exec: Fraction = Fraction(20)
    victim_period: Fraction = Fraction(100)
    victim_deadline: Fraction = Fraction(30)
    victim_phase: Fraction = Fraction(50)
    victim_core: int = 1
    aggressor_period: Fraction = Fraction(200)
    aggressor_deadline: Fraction = Fraction(200)
    aggressor_busy_fraction: Fraction = Fraction(1, 2)
    aggressor_phase: Fraction = Fraction(0)
    aggressor_core: int = 2
    slowdown: Fraction = Fraction(5, 2)
    poll_interval: Fraction = Fraction(50)
    usage_threshold: Fraction = Fraction(3, 10)
    monitor_core: int = 3
    job_count: int = 100


DEFAULT_CALIBRATION = Calibration()


def default_scenario(
    mode: str,
    calibration: Calibration = DEFAULT_CALIBRATION,
    job_count: int | None = None,
) -> Scenario:
    """Standard one-victim/one-aggressor scenario in the requested mode."""
    cal = calibration
    victim = SimTask(
        id="victim",
        role=VICTIM,
        period=cal.victim_period,
        relative_deadline=cal.victim_deadline,
        isolation_exec=cal.victim_exec,
        phase=cal.victim_phase,
        core=cal.victim_core,
    )
    noise = SimTask(
        id="noise",
        role=AGGRESSOR,
        period=cal.aggressor_period,
        relative_deadline=cal.aggressor_deadline,
        busy_fraction=cal.aggressor_busy_fraction,
        phase=cal.aggressor_phase,
        core=cal.aggressor_core,
    )
    matrix = InterferenceMatrix(
        tasks=("victim", "noise"),
        entries=(
            (1.0, float(cal.slowdown)),
            (float(cal.slowdown), 1.0),
        ),
    )
    jobs = job_count if job_count is not None else cal.job_count

    if mode == "solo":
        return Scenario(tasks=(victim,), mode="solo", job_count=jobs)
    if mode == "interference":
        return Scenario(
            tasks=(victim, noise), mode="interference", interference=matrix, job_count=jobs
        )
    if mode == "protected":
        specs = [
            TaskSpec(id="victim", criticality="critical", core_affinity=(cal.victim_core,)),
            TaskSpec(id="noise", core_affinity=(cal.aggressor_core,)),
        ]
        protection = build_plan(specs, matrix, PlannerConfig(theta=1.5))
        monitor = MonitorConfig(
            poll_interval=cal.poll_interval,
            usage_threshold=cal.usage_threshold,
            monitor_core=cal.monitor_core,
        )
        return Scenario(
            tasks=(victim, noise),
            mode="protected",
            interference=matrix,
            job_count=jobs,
            monitor=monitor,
            plan=protection,
        )
    raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


# ---------------------------------------------------------------------------
# Scenario files


def _num(value: Fraction):
    frac = Fraction(value)
    return frac.numerator if frac.denominator == 1 else str(frac)


def scenario_to_dict(scenario: Scenario) -> dict:
    doc: dict = {
        "mode": scenario.mode,
        "job_count": scenario.job_count,
        "tasks": [],
    }
    for t in scenario.tasks:
        entry: dict = {
            "id": t.id,
            "role": t.role,
            "period_ms": _num(t.period),
            "deadline_ms": _num(t.relative_deadline),
            "phase_ms": _num(t.phase),
            "core": t.core,
        }
        if t.isolation_exec is not None:
            entry["exec_ms"] = _num(t.isolation_exec)
        if t.busy_fraction is not None:
            entry["busy_fraction"] = _num(t.busy_fraction)
        if t.group is not None:
            entry["group"] = t.group
        doc["tasks"].append(entry)
    if scenario.interference is not None:
        doc["matrix"] = matrix_to_dict(scenario.interference)
    if scenario.monitor is not None:
        doc["monitor"] = {
            "poll_interval_ms": _num(scenario.monitor.poll_interval),
            "usage_threshold": _num(scenario.monitor.usage_threshold),
            "window_ms": _num(scenario.monitor.window),
            "monitor_core": scenario.monitor.monitor_core,
        }
    if scenario.plan is not None:
        doc["plan"] = plan_to_dict(scenario.plan)
    return doc


def scenario_from_dict(doc: dict, base_dir: str | Path | None = None) -> Scenario:
    """Build a scenario from its JSON document.

    ``matrix`` and ``plan`` may be inline objects or path strings resolved
    against ``base_dir`` (the scenario file's directory).
    """
    base = Path(base_dir) if base_dir is not None else Path(".")

    def resolve(ref, loader):
        if ref is None:
            return None
        if isinstance(ref, str):
            path = Path(ref)
            if not path.is_absolute():
                path = base / path
            with open(path, "r", encoding="utf-8") as fh:
                return loader(json.load(fh, parse_float=Fraction))
        return loader(ref)

    tasks = []
    for entry in doc["tasks"]:
        tasks.append(
            SimTask(
                id=entry["id"],
                role=entry["role"],
                period=as_ms(entry["period_ms"]),
                relative_deadline=as_ms(entry["deadline_ms"]),
                isolation_exec=as_ms(entry["exec_ms"]) if "exec_ms" in entry else None,
                phase=as_ms(entry.get("phase_ms", 0)),
                core=int(entry.get("core", 0)),
                group=entry.get("group"),
                busy_fraction=as_ms(entry["busy_fraction"])
                if "busy_fraction" in entry
                else None,
            )
        )

    monitor = None
    if "monitor" in doc:
        m = doc["monitor"]
        monitor = MonitorConfig(
            poll_interval=as_ms(m.get("poll_interval_ms", 50)),
            usage_threshold=as_ms(m.get("usage_threshold", Fraction(3, 10))),
            window=as_ms(m["window_ms"]) if "window_ms" in m else None,
            monitor_core=int(m.get("monitor_core", 0)),
        )

    def matrix_loader(obj):
        entries = tuple(tuple(float(v) for v in row) for row in obj["entries"])
        return InterferenceMatrix(tasks=tuple(obj["tasks"]), entries=entries)

    return Scenario(
        tasks=tuple(tasks),
        mode=doc["mode"],
        interference=resolve(doc.get("matrix"), matrix_loader),
        job_count=int(doc.get("job_count", 100)),
        monitor=monitor,
        plan=resolve(doc.get("plan"), plan_from_dict),
        max_events=int(doc.get("max_events", DEFAULT_MAX_EVENTS)),
    )


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh, parse_float=Fraction)
    return scenario_from_dict(doc, base_dir=path.parent)


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(scenario), fh, indent=2)
        fh.write("\n")
