"""Dense matrices, square-block partitioning, and block-level kernels.

Matrices are plain float64 2-D numpy arrays in row-major order. A
BlockedMatrix is the distributed counterpart: a grid of block_size x
block_size blocks living in an ObjectStore, zero-padded on the bottom/right
when the dense shape is not a multiple of the block size. Padding never
leaks: reassembly always restricts to the original (unpadded) region.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .store import BlockKey, MissingBlockError, ObjectStore


class IncompleteMatrixError(RuntimeError):
    """Assembly found a grid cell with no block in the store."""

    def __init__(self, key: BlockKey):
        super().__init__(f"incomplete matrix: no block stored for {key}")
        self.key = key


def as_matrix(a) -> np.ndarray:
    """Validate and normalize to a 2-D float64 C-order array with finite entries."""
    arr = np.asarray(a, dtype=np.float64, order="C")
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={arr.ndim}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError(f"matrix dimensions must be positive, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix entries must be finite (no NaN/Inf)")
    return arr


def matmul_flops(m: int, n: int, l: int) -> int:
    """FLOP count charged for an m x n by n x l product (2 per multiply-add)."""
    return 2 * m * n * l


def local_multiply(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Exact dense product of two conformable blocks."""
    x = as_matrix(x)
    y = as_matrix(y)
    if x.shape[1] != y.shape[0]:
        raise ValueError(f"dimension mismatch: {x.shape} x {y.shape}")
    return x @ y


@dataclass(frozen=True)
class BlockedMatrix:
    """Grid of block_size x block_size blocks addressed by (row, col) keys."""

    matrix_id: str
    block_size: int
    grid_rows: int
    grid_cols: int
    rows: int  # unpadded logical shape
    cols: int
    store: ObjectStore

    def key(self, i: int, j: int) -> BlockKey:
        if not (0 <= i < self.grid_rows and 0 <= j < self.grid_cols):
            raise ValueError(
                f"block ({i},{j}) outside {self.grid_rows}x{self.grid_cols} grid"
            )
        return BlockKey(self.matrix_id, i, j)

    def keys(self) -> Iterator[BlockKey]:
        for i in range(self.grid_rows):
            for j in range(self.grid_cols):
                yield self.key(i, j)

    def block(self, i: int, j: int) -> np.ndarray:
        return self.store.get(self.key(i, j))

    @property
    def padded_rows(self) -> int:
        return self.grid_rows * self.block_size

    @property
    def padded_cols(self) -> int:
        return self.grid_cols * self.block_size


def pad_to_blocks(a: np.ndarray, block_size: int) -> np.ndarray:
    """Zero-pad bottom/right so both dimensions are multiples of block_size."""
    rows, cols = a.shape
    pr = (-rows) % block_size
    pc = (-cols) % block_size
    if pr == 0 and pc == 0:
        return a
    return np.pad(a, ((0, pr), (0, pc)))


def partition(
    a, block_size: int, store: ObjectStore, matrix_id: str
) -> BlockedMatrix:
    """Split a dense matrix into b x b blocks and write them to the store."""
    arr = as_matrix(a)
    if block_size < 1:
        raise ValueError(f"block size must be >= 1, got {block_size}")
    rows, cols = arr.shape
    padded = pad_to_blocks(arr, block_size)
    grid_rows = padded.shape[0] // block_size
    grid_cols = padded.shape[1] // block_size
    blocked = BlockedMatrix(matrix_id, block_size, grid_rows, grid_cols, rows, cols, store)
    for i in range(grid_rows):
        for j in range(grid_cols):
            store.put(
                blocked.key(i, j),
                padded[
                    i * block_size : (i + 1) * block_size,
                    j * block_size : (j + 1) * block_size,
                ],
            )
    return blocked


def assemble(
    blocked: BlockedMatrix, rows: int | None = None, cols: int | None = None
) -> np.ndarray:
    """Reconstruct the dense matrix (unpadded region) from stored blocks."""
    rows = blocked.rows if rows is None else rows
    cols = blocked.cols if cols is None else cols
    if rows > blocked.padded_rows or cols > blocked.padded_cols:
        raise ValueError(
            f"requested {rows}x{cols} exceeds grid capacity "
            f"{blocked.padded_rows}x{blocked.padded_cols}"
        )
    b = blocked.block_size
    out = np.zeros((blocked.padded_rows, blocked.padded_cols))
    for i in range(blocked.grid_rows):
        for j in range(blocked.grid_cols):
            try:
                out[i * b : (i + 1) * b, j * b : (j + 1) * b] = blocked.block(i, j)
            except MissingBlockError as exc:
                raise IncompleteMatrixError(exc.key) from exc
    return out[:rows, :cols]


def ramp_matrix(rows: int, cols: int) -> np.ndarray:
    """Rank-2 benchmark family: entry (x, y) = x + y with 1-based indices."""
    x = np.arange(1, rows + 1, dtype=np.float64)
    y = np.arange(1, cols + 1, dtype=np.float64)
    return x[:, None] + y[None, :]


# --- flat binary + CSV interchange ------------------------------------------

_HEADER = struct.Struct("<QQ")  # rows, cols as little-endian uint64


def save_matrix(path, a) -> None:
    """Write header (rows, cols as u64 LE) then row-major float64 LE data."""
    arr = as_matrix(a)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(arr.shape[0], arr.shape[1]))
        fh.write(arr.astype("<f8").tobytes(order="C"))


def load_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise ValueError(f"truncated matrix file: {path}")
        rows, cols = _HEADER.unpack(header)
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != rows * cols:
        raise ValueError(
            f"matrix file {path} declares {rows}x{cols} but holds {data.size} entries"
        )
    return as_matrix(data.reshape(rows, cols))


def load_matrix_csv(path) -> np.ndarray:
    return as_matrix(np.loadtxt(path, delimiter=",", ndmin=2))
