"""In-memory object store standing in for cloud storage (S3-like).

Stateless workers never talk to each other; every byte they exchange goes
through one shared store. The store therefore is the single place where
communication is metered: one message per get/put, 8 bytes per float64
entry moved.
"""

from __future__ import annotations

from typing import Iterator, NamedTuple

import numpy as np

BYTES_PER_ENTRY = 8  # float64 payloads throughout


class BlockKey(NamedTuple):
    """Address of one block of a distributed matrix."""

    matrix_id: str
    row: int
    col: int

    def __str__(self) -> str:
        return f"{self.matrix_id}[{self.row},{self.col}]"


class MissingBlockError(KeyError):
    """Get on a key that was never written (or was deleted)."""

    def __init__(self, key: BlockKey):
        super().__init__(str(key))
        self.key = key

    def __str__(self) -> str:
        return f"missing block: {self.key}"


class WriteConflictError(RuntimeError):
    """Second write to a live key; keys are write-once for reproducibility."""

    def __init__(self, key: BlockKey):
        super().__init__(f"write conflict: {key} already written")
        self.key = key


class ObjectStore:
    """Write-once key/value store with transfer counters.

    Counters are cumulative and never decrease. Payloads are frozen
    (non-writeable views) so task functions cannot mutate shared state.
    """

    def __init__(self) -> None:
        self._blobs: dict[BlockKey, np.ndarray] = {}
        self.messages = 0
        self.bytes_read = 0
        self.bytes_written = 0

    def put(self, key: BlockKey, payload: np.ndarray) -> None:
        if key in self._blobs:
            raise WriteConflictError(key)
        block = np.array(payload, dtype=np.float64, order="C")
        block.flags.writeable = False
        self._blobs[key] = block
        self.messages += 1
        self.bytes_written += BYTES_PER_ENTRY * block.size

    def get(self, key: BlockKey) -> np.ndarray:
        try:
            block = self._blobs[key]
        except KeyError:
            raise MissingBlockError(key) from None
        self.messages += 1
        self.bytes_read += BYTES_PER_ENTRY * block.size
        return block

    def delete(self, key: BlockKey) -> None:
        """Drop a key (test/fault-injection helper); counters are untouched."""
        self._blobs.pop(key, None)

    def __contains__(self, key: BlockKey) -> bool:
        return key in self._blobs

    def __len__(self) -> int:
        return len(self._blobs)

    def keys(self) -> Iterator[BlockKey]:
        return iter(self._blobs)
