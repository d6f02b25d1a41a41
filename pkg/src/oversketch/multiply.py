"""Distributed multiplication schemes executed as simulator waves.

Four schemes share the store/wave machinery:

* naive      - one worker per output tile, reading a full row chunk of A
               and column chunk of B.
* blocked    - square b x b tiles; a compute wave of one worker per block
               product, then a reduction wave summing partials per output
               block (skipped when the inner dimension is a single block,
               where the scheme coincides with naive).
* oversketch - both operands are sketched to width z = (keep+spare)*b with
               a shared stacked count sketch, then multiplied blockwise;
               each output block needs only `keep` of its keep+spare
               partials, so the slowest workers are ignored per block.
* coded      - the product-code baseline: one parity row chunk on A and one
               parity column chunk on B, with host-side peeling recovery.

FLOP accounting counts block-product multiply-adds only; reduction-phase
additions are excluded so that the total equals 2*m*n*l for the exact
schemes regardless of tiling.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from math import ceil

import numpy as np

from .matrix import (
    BlockedMatrix,
    as_matrix,
    assemble,
    matmul_flops,
    partition,
)
from .simulator import Simulator, WorkerTask
from .sketch import OverSketch, distributed_sketch, make_oversketch, sketch_task_flops
from .store import BlockKey


class InsufficientResultsError(RuntimeError):
    """A block has fewer surviving partials than required (strict mode)."""


class RecoveryFailureError(RuntimeError):
    """The coded scheme cannot reconstruct the lost blocks."""

    def __init__(self, lost: list[tuple[int, int]]):
        super().__init__(f"unrecoverable straggler pattern; lost blocks {lost}")
        self.lost = lost


@dataclass(frozen=True)
class MultiplyPlan:
    """Closed-form task counts per phase for a scheme and shape."""

    scheme: str
    m: int
    n: int
    l: int
    tile: int  # a for row/column chunking, b for square blocks
    keep_count: int | None = None
    spare_count: int | None = None

    def phase_tasks(self) -> dict[str, int]:
        gm = ceil(self.m / self.tile)
        gl = ceil(self.l / self.tile)
        if self.scheme == "naive":
            return {"compute": gm * gl}
        if self.scheme == "coded":
            return {"compute": (gm + 1) * (gl + 1)}
        gn = ceil(self.n / self.tile)
        if self.scheme == "blocked":
            phases = {"compute": gm * gl * gn}
            if gn > 1:
                phases["reduction"] = gm * gl
            return phases
        if self.scheme == "oversketch":
            count = self.keep_count + self.spare_count
            return {
                "sketch": (gm + gl) * count,
                "compute": gm * gl * count,
                "reduction": gm * gl,
            }
        raise ValueError(f"unknown scheme {self.scheme!r}")

    @property
    def workers_launched(self) -> int:
        return sum(self.phase_tasks().values())


def _check_operands(a, b) -> tuple[np.ndarray, np.ndarray]:
    x = as_matrix(a)
    y = as_matrix(b)
    if x.shape[1] != y.shape[0]:
        raise ValueError(f"inner dimensions disagree: {x.shape} x {y.shape}")
    return x, y


def _product_task(blocks):
    x, y = blocks
    return [x @ y]


def _sum_task(blocks):
    return [np.add.reduce(blocks)]


def naive_multiply(a, b, chunk: int, sim: Simulator, memory_budget: int | None = None):
    """Exact product with one worker per chunk x chunk output tile."""
    x, y = _check_operands(a, b)
    if chunk < 1:
        raise ValueError(f"chunk size must be >= 1, got {chunk}")
    m, n = x.shape
    l = y.shape[1]
    if memory_budget is not None and 2 * chunk * n > memory_budget:
        from .costmodel import InfeasibleMemoryError

        raise InfeasibleMemoryError(
            f"per-worker input 2*{chunk}*{n} exceeds memory budget {memory_budget}"
        )
    xp = np.pad(x, ((0, (-m) % chunk), (0, 0)))
    yp = np.pad(y, ((0, 0), (0, (-l) % chunk)))
    gm = xp.shape[0] // chunk
    gl = yp.shape[1] // chunk

    aid, bid, cid = (sim.fresh_id(p) for p in ("A", "B", "C"))
    for i in range(gm):
        sim.stage(BlockKey(aid, i, 0), xp[i * chunk : (i + 1) * chunk, :])
    for j in range(gl):
        sim.stage(BlockKey(bid, 0, j), yp[:, j * chunk : (j + 1) * chunk])

    out = BlockedMatrix(cid, chunk, gm, gl, m, l, sim.store)
    tasks = [
        WorkerTask(
            task_id=f"{cid}:{i},{j}",
            group=(i, j),
            reads=(BlockKey(aid, i, 0), BlockKey(bid, 0, j)),
            compute=_product_task,
            writes=(out.key(i, j),),
            flops=matmul_flops(chunk, n, chunk),
        )
        for i in range(gm)
        for j in range(gl)
    ]
    sim.run_wave(tasks, label="compute")
    return assemble(out)


def blocked_multiply(a, b, block_size: int, sim: Simulator, memory_budget: int | None = None):
    """Exact product with square blocks: compute wave then reduction wave."""
    x, y = _check_operands(a, b)
    if block_size < 1:
        raise ValueError(f"block size must be >= 1, got {block_size}")
    if memory_budget is not None and 2 * block_size * block_size > memory_budget:
        from .costmodel import InfeasibleMemoryError

        raise InfeasibleMemoryError(
            f"per-worker input 2*{block_size}^2 exceeds memory budget {memory_budget}"
        )
    m, l = x.shape[0], y.shape[1]
    xb = partition(x, block_size, sim.store, sim.fresh_id("A"))
    yb = partition(y, block_size, sim.store, sim.fresh_id("B"))
    gm, gn, gl = xb.grid_rows, xb.grid_cols, yb.grid_cols

    cid = sim.fresh_id("C")
    out = BlockedMatrix(cid, block_size, gm, gl, m, l, sim.store)
    flops = matmul_flops(block_size, block_size, block_size)

    if gn == 1:
        # single block column: the compute wave already yields final blocks
        tasks = [
            WorkerTask(
                task_id=f"{cid}:{i},{j},0",
                group=(i, j),
                reads=(xb.key(i, 0), yb.key(0, j)),
                compute=_product_task,
                writes=(out.key(i, j),),
                flops=flops,
            )
            for i in range(gm)
            for j in range(gl)
        ]
        sim.run_wave(tasks, label="compute")
        return assemble(out)

    pid = sim.fresh_id("partial")
    tasks = [
        WorkerTask(
            task_id=f"{cid}:{i},{j},{k}",
            group=(i, j),
            reads=(xb.key(i, k), yb.key(k, j)),
            compute=_product_task,
            writes=(BlockKey(f"{pid}/k{k}", i, j),),
            flops=flops,
        )
        for i in range(gm)
        for j in range(gl)
        for k in range(gn)
    ]
    sim.run_wave(tasks, label="compute")

    reduce_tasks = [
        WorkerTask(
            task_id=f"{cid}:red{i},{j}",
            group=(i, j),
            reads=tuple(BlockKey(f"{pid}/k{k}", i, j) for k in range(gn)),
            compute=_sum_task,
            writes=(out.key(i, j),),
            flops=0,
        )
        for i in range(gm)
        for j in range(gl)
    ]
    sim.run_wave(reduce_tasks, label="reduction", model=sim.reduction_model)
    return assemble(out)


@dataclass
class OverSketchOutcome:
    """Approximate product plus per-block survival bookkeeping."""

    product: np.ndarray
    spec: OverSketch
    keep_per_block: dict[tuple[int, int], int]
    sketch_missing_a: set[tuple[int, int]] = field(default_factory=set)
    sketch_missing_b: set[tuple[int, int]] = field(default_factory=set)

    @property
    def min_keep(self) -> int:
        return min(self.keep_per_block.values())


def oversketch_multiply(
    a,
    b,
    block_size: int,
    keep: int,
    spare: int,
    sim: Simulator,
    seed: int = 0,
    strict: bool = True,
    simulate_sketch: bool = True,
    sketch_allow_ignored: int = 0,
    reduction_invocation_s: float | None = None,
    spec: OverSketch | None = None,
) -> OverSketchOutcome:
    """Approximate product via a shared stacked count sketch.

    Both operands are sketched with the same seed (the estimator needs one
    S on both sides). Each output block is computed by keep+spare workers
    of which only the `keep` fastest are counted; sub-sketch blocks lost
    during a straggler-ignoring sketch phase are treated as already-failed
    workers and consume part of that budget. In strict mode a block left
    with fewer than `keep` usable partials raises; otherwise the block
    gracefully degrades to the partials it has.
    """
    x, y = _check_operands(a, b)
    n = x.shape[1]
    m, l = x.shape[0], y.shape[1]
    if spec is None:
        spec = make_oversketch(n, block_size, keep, spare, seed)
    elif (spec.input_dim, spec.block_size, spec.keep_count, spec.spare_count) != (
        n, block_size, keep, spare
    ):
        raise ValueError("supplied sketch spec disagrees with the requested geometry")
    if spec.width > n:
        warnings.warn(
            f"sketched width {spec.width} is not smaller than the inner "
            f"dimension {n}; sketching will not compress",
            stacklevel=2,
        )

    if simulate_sketch:
        xs, miss_a = distributed_sketch(
            x, spec, sim, side="right", allow_ignored=sketch_allow_ignored
        )
        ys, miss_b = distributed_sketch(
            y, spec, sim, side="left", allow_ignored=sketch_allow_ignored
        )
    else:
        xs = partition(spec.apply_right(x), block_size, sim.store, sim.fresh_id("As"))
        ys = partition(spec.apply_left(y), block_size, sim.store, sim.fresh_id("Bs"))
        miss_a, miss_b = set(), set()

    gm, gl, count = xs.grid_rows, ys.grid_cols, spec.count
    cid = sim.fresh_id("C")
    pid = sim.fresh_id("partial")
    out = BlockedMatrix(cid, block_size, gm, gl, m, l, sim.store)
    flops = matmul_flops(block_size, block_size, block_size)

    tasks = []
    thresholds: dict[tuple[int, int], int] = {}
    keep_per_block: dict[tuple[int, int], int] = {}
    available: dict[tuple[int, int], list[int]] = {}
    for i in range(gm):
        for j in range(gl):
            usable = [
                k for k in range(count) if (i, k) not in miss_a and (k, j) not in miss_b
            ]
            if len(usable) < keep and strict:
                raise InsufficientResultsError(
                    f"block ({i},{j}) has only {len(usable)} usable partials, "
                    f"needs {keep}"
                )
            available[(i, j)] = usable
            keep_per_block[(i, j)] = min(keep, len(usable))
            thresholds[(i, j)] = keep_per_block[(i, j)]
            for k in usable:
                tasks.append(
                    WorkerTask(
                        task_id=f"{cid}:{i},{j},{k}",
                        group=(i, j),
                        reads=(xs.key(i, k), ys.key(k, j)),
                        compute=_product_task,
                        writes=(BlockKey(f"{pid}/k{k}", i, j),),
                        flops=flops,
                    )
                )
    sim.run_wave(tasks, threshold=thresholds, label="compute")

    reduce_tasks = []
    for i in range(gm):
        for j in range(gl):
            survivors = tuple(
                BlockKey(f"{pid}/k{k}", i, j)
                for k in available[(i, j)]
                if BlockKey(f"{pid}/k{k}", i, j) in sim.store
            )
            reduce_tasks.append(
                WorkerTask(
                    task_id=f"{cid}:red{i},{j}",
                    group=(i, j),
                    reads=survivors,
                    compute=_sum_task,
                    writes=(out.key(i, j),),
                    flops=0,
                )
            )
    sim.run_wave(
        reduce_tasks,
        label="reduction",
        model=sim.reduction_model,
        invocation_s=reduction_invocation_s,
    )
    return OverSketchOutcome(
        product=assemble(out),
        spec=spec,
        keep_per_block=keep_per_block,
        sketch_missing_a=miss_a,
        sketch_missing_b=miss_b,
    )


@dataclass
class CodedOutcome:
    product: np.ndarray
    decode_flops: int  # host-side peeling cost, not charged to any worker
    recovered: list[tuple[int, int]]


def coded_naive_multiply(
    a, b, chunk: int, sim: Simulator, stragglers: tuple = ()
) -> CodedOutcome:
    """Product-code baseline: parity row chunk on A, parity column chunk on B.

    stragglers lists (i, j) grid coordinates (parity row r / column c
    included) whose workers are lost. A host-side peeling decoder recovers
    missing blocks from any row or column with a single erasure; patterns
    it cannot peel raise RecoveryFailureError naming the lost data blocks.
    """
    x, y = _check_operands(a, b)
    if chunk < 1:
        raise ValueError(f"chunk size must be >= 1, got {chunk}")
    m, n = x.shape
    l = y.shape[1]
    xp = np.pad(x, ((0, (-m) % chunk), (0, 0)))
    yp = np.pad(y, ((0, 0), (0, (-l) % chunk)))
    r = xp.shape[0] // chunk
    c = yp.shape[1] // chunk

    aid, bid, pid = (sim.fresh_id(p) for p in ("Acoded", "Bcoded", "Pcoded"))
    row_chunks = [xp[i * chunk : (i + 1) * chunk, :] for i in range(r)]
    col_chunks = [yp[:, j * chunk : (j + 1) * chunk] for j in range(c)]
    row_chunks.append(np.add.reduce(row_chunks))  # parity = sum of data chunks
    col_chunks.append(np.add.reduce(col_chunks))
    for i, blk in enumerate(row_chunks):
        sim.stage(BlockKey(aid, i, 0), blk)
    for j, blk in enumerate(col_chunks):
        sim.stage(BlockKey(bid, 0, j), blk)

    tasks = [
        WorkerTask(
            task_id=f"{pid}:{i},{j}",
            group=(i, j),
            reads=(BlockKey(aid, i, 0), BlockKey(bid, 0, j)),
            compute=_product_task,
            writes=(BlockKey(pid, i, j),),
            flops=matmul_flops(chunk, n, chunk),
        )
        for i in range(r + 1)
        for j in range(c + 1)
    ]
    lost = {tuple(sg) for sg in stragglers}
    drop = [f"{pid}:{i},{j}" for (i, j) in sorted(lost)]
    sim.run_wave(tasks, label="compute", drop=drop)

    known: dict[tuple[int, int], np.ndarray] = {}
    for i in range(r + 1):
        for j in range(c + 1):
            key = BlockKey(pid, i, j)
            if key in sim.store:
                known[(i, j)] = sim.store.get(key)
    missing = {(i, j) for i in range(r + 1) for j in range(c + 1)} - set(known)

    # peel: any row or column with exactly one erasure is solvable, because
    # the parity block equals the sum of the data blocks along that line
    decode_flops = 0
    recovered: list[tuple[int, int]] = []
    progress = True
    while missing and progress:
        progress = False
        for i in range(r + 1):
            row_missing = [(i, j) for j in range(c + 1) if (i, j) in missing]
            if len(row_missing) == 1:
                (_, j0) = row_missing[0]
                others = [known[(i, j)] for j in range(c + 1) if j != j0]
                total = np.add.reduce(others)
                # parity satisfies P(i,c) = sum_{j<c} P(i,j)
                known[(i, j0)] = total if j0 == c else 2 * known[(i, c)] - total
                decode_flops += chunk * chunk * c
                missing.discard((i, j0))
                recovered.append((i, j0))
                progress = True
        for j in range(c + 1):
            col_missing = [(i, j) for i in range(r + 1) if (i, j) in missing]
            if len(col_missing) == 1:
                (i0, _) = col_missing[0]
                others = [known[(i, j)] for i in range(r + 1) if i != i0]
                total = np.add.reduce(others)
                known[(i0, j)] = total if i0 == r else 2 * known[(r, j)] - total
                decode_flops += chunk * chunk * r
                missing.discard((i0, j))
                recovered.append((i0, j))
                progress = True

    lost_data = sorted((i, j) for (i, j) in missing if i < r and j < c)
    if lost_data:
        raise RecoveryFailureError(lost_data)

    out = np.zeros((r * chunk, c * chunk))
    for i in range(r):
        for j in range(c):
            out[i * chunk : (i + 1) * chunk, j * chunk : (j + 1) * chunk] = known[(i, j)]
    return CodedOutcome(out[:m, :l], decode_flops, recovered)
