"""Latency/bandwidth/compute cost model and trace reconciliation.

A worker that sends Q messages, moves K matrix entries, and performs F
FLOPs runs for

    T_worker = alpha * Q + beta * K + gamma * F

and a phase of W equal workers costs W * T_worker worker-seconds. Messages
count distinct store get/put calls (one per block or chunk touched), the
only convention consistent with the simulator traces; closed-form
predictions here use the same convention so that measured and predicted
counts agree as integers, not just asymptotically. Straggler overruns are
deliberately excluded: only counted (non-ignored) tasks enter a report,
and wall-clock effects live in the simulator.

Tile sizes follow the memory budget M (in matrix entries): row/column
chunking fits two chunks via a = M / (2n), square blocking fits two blocks
via b = sqrt(M / 2); both floor to integers and are infeasible at zero.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

from .matrix import matmul_flops
from .simulator import SimulationTrace
from .sketch import sketch_task_flops


class InfeasibleMemoryError(ValueError):
    """Memory budget too small for any valid tile size."""


@dataclass(frozen=True)
class CostParams:
    alpha: float = 0.05  # seconds per store message
    beta: float = 8e-8  # seconds per matrix entry moved (~100 MB/s)
    gamma: float = 2e-11  # seconds per FLOP (~50 GFLOP/s)
    memory: int = 376_000_000  # entries per worker (3008 MB at 8 B/entry)
    price_per_100ms: float = 4.897e-6  # dollars per worker per 100 ms

    def __post_init__(self) -> None:
        if min(self.alpha, self.beta, self.gamma, self.price_per_100ms) <= 0:
            raise ValueError("cost parameters must be strictly positive")
        if self.memory < 1:
            raise ValueError("memory budget must be at least one entry")
        if not (self.alpha > self.beta > self.gamma):
            warnings.warn(
                "expected a latency-dominated regime alpha > beta > gamma; "
                f"got alpha={self.alpha}, beta={self.beta}, gamma={self.gamma}",
                stacklevel=2,
            )

    def effective_delta(self, n: int) -> float:
        """Exponent d such that memory = n**d for this inner dimension."""
        return math.log(self.memory) / math.log(n)

    def naive_chunk(self, n: int) -> int:
        chunk = self.memory // (2 * n)
        if chunk < 1:
            raise InfeasibleMemoryError(
                f"memory budget {self.memory} cannot hold two length-{n} chunks"
            )
        return int(chunk)

    def blocked_size(self) -> int:
        size = int(math.isqrt(self.memory // 2))
        if size < 1:
            raise InfeasibleMemoryError(
                f"memory budget {self.memory} cannot hold two square blocks"
            )
        return size


@dataclass(frozen=True)
class PhaseCost:
    """Aggregate counts for one wave of equal workers."""

    phase: str
    workers: int
    messages: int
    entries: int
    flops: int

    def t_worker(self, params: CostParams) -> float:
        if self.workers == 0:
            return 0.0
        return (
            params.alpha * self.messages
            + params.beta * self.entries
            + params.gamma * self.flops
        ) / self.workers

    def cost(self, params: CostParams) -> float:
        return self.workers * self.t_worker(params)

    def dollars(self, params: CostParams, price: float | None = None) -> float:
        price = params.price_per_100ms if price is None else price
        return self.workers * math.ceil(self.t_worker(params) / 0.1) * price


@dataclass
class CostReport:
    scheme: str
    phases: list[PhaseCost]
    params: CostParams
    divergences: list[str] = field(default_factory=list)

    @property
    def workers(self) -> int:
        return sum(p.workers for p in self.phases)

    @property
    def messages(self) -> int:
        return sum(p.messages for p in self.phases)

    @property
    def entries(self) -> int:
        return sum(p.entries for p in self.phases)

    @property
    def flops(self) -> int:
        return sum(p.flops for p in self.phases)

    @property
    def c_total(self) -> float:
        return sum(p.cost(self.params) for p in self.phases)

    @property
    def t_worker(self) -> float:
        return self.c_total / self.workers if self.workers else 0.0

    @property
    def dollars(self) -> float:
        return sum(p.dollars(self.params) for p in self.phases)

    def phase(self, name: str) -> PhaseCost:
        for p in self.phases:
            if p.phase == name:
                return p
        raise KeyError(f"no phase {name!r} in report for {self.scheme}")


def dollar_cost(report: CostReport, price: float | None = None) -> float:
    """Dollars = sum over phases of W * ceil(T_worker / 100 ms) * price."""
    return sum(p.dollars(report.params, price) for p in report.phases)


def predict_naive(
    m: int, n: int, l: int, params: CostParams, chunk: int | None = None
) -> CostReport:
    a = params.naive_chunk(n) if chunk is None else chunk
    if a < 1:
        raise InfeasibleMemoryError(f"chunk size {a} is infeasible")
    workers = math.ceil(m / a) * math.ceil(l / a)
    phase = PhaseCost(
        phase="compute",
        workers=workers,
        messages=3 * workers,  # two chunk reads and one tile write each
        entries=workers * (2 * a * n + a * a),
        flops=workers * matmul_flops(a, n, a),
    )
    return CostReport("naive", [phase], params)


def predict_blocked(
    m: int, n: int, l: int, params: CostParams, block_size: int | None = None
) -> CostReport:
    b = params.blocked_size() if block_size is None else block_size
    if b < 1:
        raise InfeasibleMemoryError(f"block size {b} is infeasible")
    gm, gn, gl = math.ceil(m / b), math.ceil(n / b), math.ceil(l / b)
    wc = gm * gn * gl
    phases = [
        PhaseCost(
            phase="compute",
            workers=wc,
            messages=3 * wc,
            entries=3 * b * b * wc,
            flops=wc * matmul_flops(b, b, b),
        )
    ]
    if gn > 1:
        wr = gm * gl
        phases.append(
            PhaseCost(
                phase="reduction",
                workers=wr,
                messages=(gn + 1) * wr,  # gn partial reads plus the result write
                entries=(gn + 1) * b * b * wr,
                flops=0,
            )
        )
    return CostReport("blocked", phases, params)


def predict_oversketch(
    m: int,
    n: int,
    l: int,
    block_size: int,
    keep: int,
    spare: int,
    params: CostParams,
) -> CostReport:
    """Counted work for the sketched scheme; spare workers are launched but
    ignored per block, so they contribute tasks, not cost."""
    b = block_size
    count = keep + spare
    gm, gl = math.ceil(m / b), math.ceil(l / b)
    ws = (gm + gl) * count
    wc = gm * gl * keep
    wr = gm * gl
    phases = [
        PhaseCost(
            phase="sketch",
            workers=ws,
            messages=2 * ws,  # one source-block read, one sketched-block write
            entries=ws * (b * n + b * b),
            flops=ws * sketch_task_flops(b, n),
        ),
        PhaseCost(
            phase="compute",
            workers=wc,
            messages=3 * wc,
            entries=3 * b * b * wc,
            flops=wc * matmul_flops(b, b, b),
        ),
        PhaseCost(
            phase="reduction",
            workers=wr,
            messages=(keep + 1) * wr,
            entries=(keep + 1) * b * b * wr,
            flops=0,
        ),
    ]
    return CostReport("oversketch", phases, params)


def predict_coded_naive(
    m: int, n: int, l: int, params: CostParams, chunk: int | None = None
) -> CostReport:
    """Naive accounting with one parity row and column of extra workers.

    Host-side decode cost is not charged to any worker; the simulator
    reports it separately.
    """
    a = params.naive_chunk(n) if chunk is None else chunk
    if a < 1:
        raise InfeasibleMemoryError(f"chunk size {a} is infeasible")
    workers = (math.ceil(m / a) + 1) * (math.ceil(l / a) + 1)
    phase = PhaseCost(
        phase="compute",
        workers=workers,
        messages=3 * workers,
        entries=workers * (2 * a * n + a * a),
        flops=workers * matmul_flops(a, n, a),
    )
    return CostReport("coded", [phase], params)


def measure_costs(
    trace: SimulationTrace,
    params: CostParams,
    expected: CostReport | None = None,
) -> CostReport:
    """Aggregate a trace into per-phase counts and reconcile against a
    prediction when one is supplied (divergences are reported, not raised)."""
    order: list[str] = []
    acc: dict[str, dict[str, int]] = {}
    for task in trace.counted():
        if task.label not in acc:
            order.append(task.label)
            acc[task.label] = {"workers": 0, "messages": 0, "entries": 0, "flops": 0}
        slot = acc[task.label]
        slot["workers"] += 1
        slot["messages"] += task.messages
        slot["entries"] += (task.bytes_read + task.bytes_written) // 8
        slot["flops"] += task.flops

    phases = [PhaseCost(phase=name, **acc[name]) for name in order]
    report = CostReport("measured", phases, params)
    if expected is not None:
        report.divergences = _reconcile(report, expected)
    return report


def _reconcile(measured: CostReport, expected: CostReport) -> list[str]:
    problems = []
    names = [p.phase for p in measured.phases]
    expected_names = [p.phase for p in expected.phases]
    if names != expected_names:
        problems.append(f"phases {names} != predicted {expected_names}")
    for got in measured.phases:
        try:
            want = expected.phase(got.phase)
        except KeyError:
            continue
        for attr in ("workers", "messages", "entries", "flops"):
            g, w = getattr(got, attr), getattr(want, attr)
            if g != w:
                problems.append(f"{got.phase}.{attr}: measured {g} != predicted {w}")
    return problems
