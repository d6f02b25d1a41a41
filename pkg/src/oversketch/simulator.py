"""Deterministic model of a serverless worker pool.

Execution happens in waves of stateless tasks. Each task reads blocks from
the shared store, runs a pure function, and writes blocks back. Durations
are sampled, not measured: the simulator never sleeps, and an identical
seed reproduces the trace bit for bit.

Straggling is a two-component mixture. A normal task takes
median * exp(jitter_sigma * Z) seconds; with probability straggler_prob it
instead takes median * M where M is drawn from a bounded, low-skewed law
on [multiplier_low, multiplier_high]:

    M = low + (high - low) * U ** multiplier_power

With the defaults (median 40 s, p = 0.05, [2.5, 9.4], power 8) the profile
reproduces the landmark shape seen on real worker pools: the 95th
percentile sits at ~100 s (2.5x the median) and a handful of tasks in a
few thousand run out to ~375 s. Power 1 recovers a plain uniform
multiplier.

Per-group early termination models result collection: a wave whose groups
each require k completions counts exactly the k fastest tasks per group
(ties broken by task id) and flags the rest as ignored. Ignored tasks
never write, so dropping them cannot perturb downstream reads. The wave
wall-clock is the maximum, over groups, of the k-th smallest sampled
duration.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from typing import Callable, Hashable, Iterable, Mapping, Sequence

import numpy as np

from .store import BYTES_PER_ENTRY, BlockKey, ObjectStore


class ConfigurationError(ValueError):
    """Invalid wave configuration (e.g. threshold exceeding group size)."""


@dataclass(frozen=True)
class StragglerModel:
    median_s: float = 40.0
    straggler_prob: float = 0.05
    multiplier_low: float = 2.5
    multiplier_high: float = 9.4
    multiplier_power: float = 8.0
    jitter_sigma: float = 0.05

    def __post_init__(self) -> None:
        if self.median_s <= 0:
            raise ValueError("median_s must be positive")
        if not 0.0 <= self.straggler_prob <= 1.0:
            raise ValueError("straggler_prob must lie in [0, 1]")
        if not 0 < self.multiplier_low <= self.multiplier_high:
            raise ValueError("need 0 < multiplier_low <= multiplier_high")
        if self.multiplier_power <= 0 or self.jitter_sigma < 0:
            raise ValueError("multiplier_power must be > 0 and jitter_sigma >= 0")

    def without_stragglers(self) -> "StragglerModel":
        return replace(self, straggler_prob=0.0)

    def sample(self, rng: np.random.Generator, size: int | None = None):
        """Draw task durations; always consumes the same number of variates."""
        n = 1 if size is None else size
        is_straggler = rng.random(n) < self.straggler_prob
        base = self.median_s * np.exp(self.jitter_sigma * rng.standard_normal(n))
        span = self.multiplier_high - self.multiplier_low
        mult = self.multiplier_low + span * rng.random(n) ** self.multiplier_power
        out = np.where(is_straggler, self.median_s * mult, base)
        return float(out[0]) if size is None else out


def sample_duration(model: StragglerModel, rng: np.random.Generator) -> float:
    """One duration draw from the model, reproducible per rng state."""
    return model.sample(rng)


@dataclass(frozen=True)
class WorkerTask:
    """One stateless job: read blocks, apply a pure function, write blocks.

    compute receives the fetched payloads in reads order and must return one
    array per entry of writes. It must be deterministic in its inputs; tasks
    in the same wave never read each other's writes.
    """

    task_id: str
    group: Hashable
    reads: tuple[BlockKey, ...]
    compute: Callable[[Sequence[np.ndarray]], Sequence[np.ndarray]]
    writes: tuple[BlockKey, ...]
    flops: int = 0


@dataclass(frozen=True)
class TaskRecord:
    wave: int
    label: str
    task_id: str
    group: Hashable
    duration_s: float
    ignored: bool
    messages: int
    bytes_read: int
    bytes_written: int
    flops: int


@dataclass(frozen=True)
class WaveRecord:
    wave: int
    label: str
    n_tasks: int
    n_ignored: int
    wallclock_s: float
    invocation_s: float


@dataclass
class SimulationTrace:
    tasks: list[TaskRecord] = field(default_factory=list)
    waves: list[WaveRecord] = field(default_factory=list)

    def counted(self) -> list[TaskRecord]:
        return [t for t in self.tasks if not t.ignored]

    @property
    def total_messages(self) -> int:
        return sum(t.messages for t in self.tasks)

    @property
    def total_bytes(self) -> int:
        return sum(t.bytes_read + t.bytes_written for t in self.tasks)

    @property
    def total_flops(self) -> int:
        return sum(t.flops for t in self.tasks)

    @property
    def total_wallclock_s(self) -> float:
        return sum(w.wallclock_s + w.invocation_s for w in self.waves)

    def write_csv(self, fh) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            [
                "wave", "label", "task_id", "group", "duration_s", "ignored",
                "messages", "bytes_read", "bytes_written", "flops",
            ]
        )
        for t in self.tasks:
            writer.writerow(
                [
                    t.wave, t.label, t.task_id, repr(t.group), repr(t.duration_s),
                    int(t.ignored), t.messages, t.bytes_read, t.bytes_written, t.flops,
                ]
            )

    def wave_summaries(self) -> list[dict]:
        return [
            {
                "wave": w.wave,
                "label": w.label,
                "tasks": w.n_tasks,
                "ignored": w.n_ignored,
                "wallclock_s": w.wallclock_s,
                "invocation_s": w.invocation_s,
            }
            for w in self.waves
        ]

    def write_json(self, fh) -> None:
        json.dump(self.wave_summaries(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _required(threshold, group: Hashable, size: int) -> int:
    if threshold is None:
        return size
    if isinstance(threshold, Mapping):
        k = threshold.get(group, size)
    else:
        k = int(threshold)
    if k < 0 or k > size:
        raise ConfigurationError(
            f"completion threshold {k} invalid for group {group!r} of size {size}"
        )
    return k


class Simulator:
    """Single-threaded wave executor with full communication accounting."""

    def __init__(
        self,
        store: ObjectStore | None = None,
        model: StragglerModel | None = None,
        reduction_model: StragglerModel | None = None,
        invocation_s: float = 9.0,
        seed: int = 0,
    ):
        self.store = store if store is not None else ObjectStore()
        self.model = model if model is not None else StragglerModel()
        self.reduction_model = (
            reduction_model
            if reduction_model is not None
            else self.model.without_stragglers()
        )
        self.invocation_s = invocation_s
        self.trace = SimulationTrace()
        self._rng = np.random.default_rng(seed)
        self._id_counter = 0

    def fresh_id(self, prefix: str) -> str:
        self._id_counter += 1
        return f"{prefix}#{self._id_counter}"

    def stage(self, key: BlockKey, payload: np.ndarray) -> None:
        """Host-side upload of input data (counted in store totals, not traced)."""
        self.store.put(key, payload)

    def run_wave(
        self,
        tasks: Sequence[WorkerTask],
        threshold: int | Mapping[Hashable, int] | None = None,
        label: str = "wave",
        model: StragglerModel | None = None,
        drop: Iterable[str] = (),
        invocation_s: float | None = None,
    ) -> WaveRecord:
        """Execute one wave; returns its summary record.

        threshold gives the number of completions required per group (None
        means all). Task ids listed in drop are forced stragglers. Durations
        are sampled in task order, so callers must submit tasks in a
        deterministic order for seed-reproducibility.
        """
        model = model if model is not None else self.model
        wave_id = len(self.trace.waves)
        dropped = set(drop)
        unknown = dropped - {t.task_id for t in tasks}
        if unknown:
            raise ConfigurationError(f"drop names unknown tasks: {sorted(unknown)}")
        wave_writes = {key for t in tasks for key in t.writes}
        for t in tasks:
            clash = wave_writes.intersection(t.reads)
            if clash:
                raise ConfigurationError(
                    f"task {t.task_id} reads keys written in the same wave: "
                    f"{sorted(str(k) for k in clash)}"
                )

        durations = model.sample(self._rng, len(tasks)) if tasks else np.empty(0)

        groups: dict[Hashable, list[int]] = {}
        for idx, task in enumerate(tasks):
            groups.setdefault(task.group, []).append(idx)

        completed: set[int] = set()
        for group, idxs in groups.items():
            avail = [i for i in idxs if tasks[i].task_id not in dropped]
            k = _required(threshold, group, len(avail))
            avail.sort(key=lambda i: (durations[i], tasks[i].task_id))
            completed.update(avail[:k])

        wallclock = 0.0
        n_ignored = 0
        for idx, task in enumerate(tasks):
            if idx in completed:
                blocks = [self.store.get(key) for key in task.reads]
                results = task.compute(blocks)
                if len(results) != len(task.writes):
                    raise RuntimeError(
                        f"task {task.task_id} returned {len(results)} blocks "
                        f"for {len(task.writes)} writes"
                    )
                bytes_read = BYTES_PER_ENTRY * sum(b.size for b in blocks)
                bytes_written = 0
                for key, result in zip(task.writes, results):
                    self.store.put(key, result)
                    bytes_written += BYTES_PER_ENTRY * np.asarray(result).size
                record = TaskRecord(
                    wave=wave_id,
                    label=label,
                    task_id=task.task_id,
                    group=task.group,
                    duration_s=float(durations[idx]),
                    ignored=False,
                    messages=len(task.reads) + len(task.writes),
                    bytes_read=bytes_read,
                    bytes_written=bytes_written,
                    flops=task.flops,
                )
                wallclock = max(wallclock, record.duration_s)
            else:
                n_ignored += 1
                record = TaskRecord(
                    wave=wave_id,
                    label=label,
                    task_id=task.task_id,
                    group=task.group,
                    duration_s=float(durations[idx]),
                    ignored=True,
                    messages=0,
                    bytes_read=0,
                    bytes_written=0,
                    flops=0,
                )
            self.trace.tasks.append(record)

        record = WaveRecord(
            wave=wave_id,
            label=label,
            n_tasks=len(tasks),
            n_ignored=n_ignored,
            wallclock_s=wallclock,
            invocation_s=self.invocation_s if invocation_s is None else invocation_s,
        )
        self.trace.waves.append(record)
        return record
