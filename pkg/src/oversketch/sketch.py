"""Count-sketch projections and their straggler-tolerant stacked variant.

A count sketch maps each input coordinate to one uniformly random bucket
with a random sign, so applying it costs time linear in the input. The
stacked variant concatenates keep_count + spare_count independent count
sketches, each of width block_size, scaled by 1/sqrt(keep_count):

    S = (1/sqrt(N)) * (S_1, S_2, ..., S_{N+e})

Because the scale anticipates keeping only N of the N+e sub-sketches, any
e of them can be discarded per output block without re-weighting, and the
estimator A S S^T B stays unbiased. Total sketched width is z = (N+e) * b.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .matrix import BlockedMatrix, as_matrix
from .store import BlockKey

if TYPE_CHECKING:
    from .simulator import Simulator


def _sub_seeds(seed, count: int) -> list[np.random.SeedSequence]:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return ss.spawn(count)


@dataclass(frozen=True)
class CountSketch:
    """One sparse random projection: bucket and sign per input coordinate."""

    input_dim: int
    width: int
    buckets: np.ndarray  # shape (input_dim,), values in [0, width)
    signs: np.ndarray  # shape (input_dim,), values +-1
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.input_dim < 1 or self.width < 1:
            raise ValueError("input_dim and width must be >= 1")
        buckets = np.asarray(self.buckets, dtype=np.int64)
        signs = np.asarray(self.signs, dtype=np.float64)
        if buckets.shape != (self.input_dim,) or signs.shape != (self.input_dim,):
            raise ValueError("bucket/sign maps must have one entry per coordinate")
        if buckets.min() < 0 or buckets.max() >= self.width:
            raise ValueError("bucket values must lie in [0, width)")
        if not np.all(np.abs(signs) == 1.0):
            raise ValueError("signs must be +-1")
        object.__setattr__(self, "buckets", buckets)
        object.__setattr__(self, "signs", signs)

    @classmethod
    def random(cls, input_dim: int, width: int, seed) -> "CountSketch":
        rng = np.random.default_rng(seed)
        buckets = rng.integers(0, width, size=input_dim)
        signs = rng.integers(0, 2, size=input_dim) * 2.0 - 1.0
        plain_seed = seed if isinstance(seed, int) else None
        return cls(input_dim, width, buckets, signs, seed=plain_seed)

    @classmethod
    def from_maps(cls, buckets, signs, width: int) -> "CountSketch":
        buckets = np.asarray(buckets)
        return cls(len(buckets), width, buckets, np.asarray(signs, dtype=np.float64))

    @classmethod
    def identity(cls, dim: int) -> "CountSketch":
        return cls(dim, dim, np.arange(dim), np.ones(dim))

    def apply_right(self, a) -> np.ndarray:
        """A |-> A S: bucket-sum the columns of A with signs. O(size of A)."""
        arr = as_matrix(a)
        if arr.shape[1] != self.input_dim:
            raise ValueError(
                f"matrix has {arr.shape[1]} columns, sketch expects {self.input_dim}"
            )
        out = np.zeros((self.width, arr.shape[0]))
        np.add.at(out, self.buckets, (arr * self.signs).T)
        return np.ascontiguousarray(out.T)

    def apply_left(self, b) -> np.ndarray:
        """B |-> S^T B: bucket-sum the rows of B with signs."""
        arr = as_matrix(b)
        if arr.shape[0] != self.input_dim:
            raise ValueError(
                f"matrix has {arr.shape[0]} rows, sketch expects {self.input_dim}"
            )
        out = np.zeros((self.width, arr.shape[1]))
        np.add.at(out, self.buckets, self.signs[:, None] * arr)
        return out

    def materialize(self) -> np.ndarray:
        """Explicit input_dim x width matrix (test oracle; small dims only)."""
        dense = np.zeros((self.input_dim, self.width))
        dense[np.arange(self.input_dim), self.buckets] = self.signs
        return dense


def make_count_sketch(input_dim: int, width: int, seed) -> CountSketch:
    return CountSketch.random(input_dim, width, seed)


@dataclass(frozen=True)
class OverSketch:
    """Stacked count sketch over-provisioned by spare_count sub-sketches."""

    input_dim: int
    block_size: int
    keep_count: int  # sub-sketches that must survive per output block (N)
    spare_count: int  # straggler allowance per output block (e)
    seed: int | np.random.SeedSequence
    sketches: tuple[CountSketch, ...]

    def __post_init__(self) -> None:
        if self.keep_count < 1 or self.spare_count < 0:
            raise ValueError("need keep_count >= 1 and spare_count >= 0")
        if len(self.sketches) != self.keep_count + self.spare_count:
            raise ValueError("expected keep_count + spare_count sub-sketches")
        for sk in self.sketches:
            if sk.input_dim != self.input_dim or sk.width != self.block_size:
                raise ValueError("sub-sketch dimensions disagree with the spec")

    @classmethod
    def random(
        cls,
        input_dim: int,
        block_size: int,
        keep_count: int,
        spare_count: int,
        seed: int | np.random.SeedSequence,
    ) -> "OverSketch":
        subs = tuple(
            CountSketch.random(input_dim, block_size, s)
            for s in _sub_seeds(seed, keep_count + spare_count)
        )
        return cls(input_dim, block_size, keep_count, spare_count, seed, subs)

    @property
    def count(self) -> int:
        return self.keep_count + self.spare_count

    @property
    def width(self) -> int:
        """Total sketched width z = (N + e) * b."""
        return self.count * self.block_size

    @property
    def keep_dim(self) -> int:
        """Effective sketch dimension after drops, d = N * b."""
        return self.keep_count * self.block_size

    @property
    def scale(self) -> float:
        return 1.0 / np.sqrt(self.keep_count)

    def apply_right(self, a) -> np.ndarray:
        arr = as_matrix(a)
        return np.hstack([self.scale * sk.apply_right(arr) for sk in self.sketches])

    def apply_left(self, b) -> np.ndarray:
        arr = as_matrix(b)
        return np.vstack([self.scale * sk.apply_left(arr) for sk in self.sketches])

    def materialize(self) -> np.ndarray:
        return self.scale * np.hstack([sk.materialize() for sk in self.sketches])

    def to_json(self) -> str:
        if not isinstance(self.seed, int):
            raise ValueError("only integer-seeded sketches serialize to JSON")
        return json.dumps(
            {
                "input_dim": self.input_dim,
                "block_size": self.block_size,
                "keep_count": self.keep_count,
                "spare_count": self.spare_count,
                "seed": self.seed,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "OverSketch":
        spec = json.loads(text)
        return cls.random(
            spec["input_dim"],
            spec["block_size"],
            spec["keep_count"],
            spec["spare_count"],
            spec["seed"],
        )


def make_oversketch(
    input_dim: int, block_size: int, keep_count: int, spare_count: int, seed: int
) -> OverSketch:
    return OverSketch.random(input_dim, block_size, keep_count, spare_count, seed)


def sketch_task_flops(block_size: int, input_dim: int) -> int:
    # one multiply-add per source entry plus the 1/sqrt(N) scaling of the block
    return 2 * block_size * input_dim + block_size * block_size


def distributed_sketch(
    a,
    spec: OverSketch,
    sim: "Simulator",
    side: str = "right",
    matrix_id: str | None = None,
    allow_ignored: int = 0,
) -> tuple[BlockedMatrix, set[tuple[int, int]]]:
    """Sketch a matrix as one simulator wave, one worker per output block.

    side="right" computes A S from row-blocks of A; side="left" computes
    S^T B from column-blocks of B. With allow_ignored > 0 the wave stops
    waiting for that many stragglers per source block; the resulting holes
    are returned as grid coordinates so a downstream multiply can treat
    them as already-failed workers (they consume part of its straggler
    budget).
    """
    from .simulator import WorkerTask  # local import to avoid a cycle

    if side not in ("right", "left"):
        raise ValueError(f"side must be 'right' or 'left', got {side!r}")
    arr = as_matrix(a)
    b = spec.block_size
    scale = spec.scale
    mid = matrix_id or sim.fresh_id("sketch")
    src_id = f"{mid}/src"

    if side == "right":
        if arr.shape[1] != spec.input_dim:
            raise ValueError(
                f"matrix has {arr.shape[1]} columns, sketch expects {spec.input_dim}"
            )
        padded = np.pad(arr, ((0, (-arr.shape[0]) % b), (0, 0)))
        n_src = padded.shape[0] // b
        for i in range(n_src):
            sim.stage(BlockKey(src_id, i, 0), padded[i * b : (i + 1) * b, :])
        out = BlockedMatrix(mid, b, n_src, spec.count, arr.shape[0], spec.width, sim.store)

        def compute(sk: CountSketch):
            return lambda blocks: [scale * sk.apply_right(blocks[0])]

        tasks = [
            WorkerTask(
                task_id=f"{mid}:{i},{j}",
                group=i,
                reads=(BlockKey(src_id, i, 0),),
                compute=compute(spec.sketches[j]),
                writes=(out.key(i, j),),
                flops=sketch_task_flops(b, spec.input_dim),
            )
            for i in range(n_src)
            for j in range(spec.count)
        ]
    else:
        if arr.shape[0] != spec.input_dim:
            raise ValueError(
                f"matrix has {arr.shape[0]} rows, sketch expects {spec.input_dim}"
            )
        padded = np.pad(arr, ((0, 0), (0, (-arr.shape[1]) % b)))
        n_src = padded.shape[1] // b
        for j in range(n_src):
            sim.stage(BlockKey(src_id, 0, j), padded[:, j * b : (j + 1) * b])
        out = BlockedMatrix(mid, b, spec.count, n_src, spec.width, arr.shape[1], sim.store)

        def compute(sk: CountSketch):
            return lambda blocks: [scale * sk.apply_left(blocks[0])]

        tasks = [
            WorkerTask(
                task_id=f"{mid}:{i},{j}",
                group=j,
                reads=(BlockKey(src_id, 0, j),),
                compute=compute(spec.sketches[i]),
                writes=(out.key(i, j),),
                flops=sketch_task_flops(b, spec.input_dim),
            )
            for i in range(spec.count)
            for j in range(n_src)
        ]

    threshold = None if allow_ignored == 0 else spec.count - allow_ignored
    sim.run_wave(tasks, threshold=threshold, label="sketch")
    missing = {
        (key.row, key.col)
        for task in tasks
        for key in task.writes
        if key not in sim.store
    }
    return out, missing
