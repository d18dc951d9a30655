"""Replay queue with wrapping sequence numbers and a reference-only batch buffer.

Each stored frame remembers the sequence number it was pushed with. A batch
is a list of ``(slot, seq)`` references; resolving it hands back the stored
objects themselves. A reference whose slot has since been overwritten is
stale and gets replaced by a fresh draw.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, List, NamedTuple, Optional

import numpy as np


@dataclass
class Transition:
    state: Any
    action: int
    reward: float
    next_state: Any
    done: bool


class BatchEntry(NamedTuple):
    slot: int
    seq: int


class BatchBuffer:
    def __init__(self, queue: "ReplayQueue", entries: List[BatchEntry], rng: np.random.Generator):
        self.queue = queue
        self.entries = entries
        self._rng = rng

    def __len__(self) -> int:
        return len(self.entries)

    def is_valid(self, entry: BatchEntry) -> bool:
        return self.queue.seq_at(entry.slot) == entry.seq

    def resolve(self) -> List[Transition]:
        """Stored transitions for every entry, re-drawing stale references in place."""
        used = {e.slot for e in self.entries if self.is_valid(e)}
        for i, e in enumerate(self.entries):
            if self.is_valid(e):
                continue
            free = [s for s in range(len(self.queue)) if s not in used]
            slot = int(self._rng.choice(free))
            used.add(slot)
            self.entries[i] = BatchEntry(slot, self.queue.seq_at(slot))
        return [self.queue.frame(e.slot) for e in self.entries]


class ReplayQueue:
    def __init__(self, capacity: int = 20_000, modulus: int = 2**32):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        if modulus <= capacity:
            raise ValueError("sequence modulus must exceed capacity")
        self.capacity = capacity
        self.modulus = modulus
        self._frames: List[Optional[Transition]] = [None] * capacity
        self._seqs = np.full(capacity, -1, dtype=np.int64)
        self._head = 0  # next slot to write
        self._size = 0
        self.next_seq = 0

    def __len__(self) -> int:
        return self._size

    def push(self, transition: Transition) -> int:
        seq = self.next_seq
        slot = self._head
        self._frames[slot] = transition
        self._seqs[slot] = seq
        self._head = (slot + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)
        self.next_seq = (seq + 1) % self.modulus
        return seq

    def seq_at(self, slot: int) -> int:
        return int(self._seqs[slot])

    def frame(self, slot: int) -> Transition:
        if not 0 <= slot < self._size:
            raise IndexError(f"slot {slot} is empty")
        return self._frames[slot]

    def sequences(self) -> List[int]:
        """Stored sequence numbers, oldest first."""
        start = (self._head - self._size) % self.capacity
        return [int(self._seqs[(start + i) % self.capacity]) for i in range(self._size)]

    def sample(self, batch_size: int, rng: np.random.Generator) -> BatchBuffer:
        """Uniform draw of ``batch_size`` distinct slots."""
        if batch_size > self._size:
            raise ValueError(f"cannot sample {batch_size} transitions from a queue holding {self._size}")
        slots = rng.choice(self._size, size=batch_size, replace=False)
        return BatchBuffer(self, [BatchEntry(int(s), self.seq_at(int(s))) for s in slots], rng)
