from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from stac.efg import Role


class InsufficientData(RuntimeError):
    pass


@dataclass
class SarsasRecord:
    """One decision of a learner: (s, a, r, s', done) plus the episode signal."""

    state_key: str
    state: np.ndarray  # critic input
    obs: np.ndarray  # actor input
    mask: np.ndarray
    action: int
    reward: float
    next_state_key: str
    next_state: np.ndarray
    next_obs: np.ndarray
    done: bool
    signal: int
    member: Role


FIELDS = ("state", "obs", "mask", "action", "reward", "next_state", "done", "signal")


def stack_records(records: Sequence[SarsasRecord]) -> dict[str, np.ndarray]:
    return {
        "state": np.stack([r.state for r in records]),
        "obs": np.stack([r.obs for r in records]),
        "mask": np.stack([r.mask for r in records]),
        "action": np.array([r.action for r in records], dtype=np.int64),
        "reward": np.array([r.reward for r in records], dtype=float),
        "next_state": np.stack([r.next_state for r in records]),
        "done": np.array([r.done for r in records], dtype=float),
        "signal": np.array([r.signal for r in records], dtype=np.int64),
    }


class _Bucket:
    """Ring of record rows holding whole trajectories, oldest evicted first.

    A trajectory never straddles the end of the ring: if it does not fit in
    the tail, writing wraps to row 0 and the tail rows are dropped.
    """

    def __init__(self, rows: int):
        self.rows = rows
        self.data: dict[str, np.ndarray] | None = None
        self.start = np.zeros(rows, dtype=np.int64)
        self.length = np.zeros(rows, dtype=np.int64)
        self.head = 0  # slot of the oldest trajectory
        self.n = 0
        self.write = 0
        self.records = 0

    def _alloc(self, arrays: dict[str, np.ndarray]) -> None:
        self.data = {f: np.zeros((self.rows,) + a.shape[1:], dtype=a.dtype) for f, a in arrays.items()}

    def _pop(self) -> None:
        self.records -= int(self.length[self.head])
        self.head = (self.head + 1) % self.rows
        self.n -= 1

    def _oldest_start(self) -> int:
        return int(self.start[self.head])

    def add(self, arrays: dict[str, np.ndarray], lo: int, hi: int) -> None:
        m = hi - lo
        if m > self.rows:
            raise ValueError(f"trajectory of {m} records exceeds bucket capacity {self.rows}")
        if self.data is None:
            self._alloc(arrays)
        w = self.write
        if w + m > self.rows:
            # drop whatever still lives in the tail, then wrap
            while self.n and self._oldest_start() >= w:
                self._pop()
            w = 0
        while self.n and w <= self._oldest_start() < w + m:
            self._pop()
        for f, a in arrays.items():
            self.data[f][w:w + m] = a[lo:hi]
        slot = (self.head + self.n) % self.rows
        self.start[slot] = w
        self.length[slot] = m
        self.n += 1
        self.records += m
        self.write = w + m

    def rows_of(self, picks: np.ndarray) -> np.ndarray:
        slots = (self.head + picks) % self.rows
        st, ln = self.start[slots], self.length[slots]
        offs = np.arange(ln.sum()) - np.repeat(np.cumsum(ln) - ln, ln)
        return np.repeat(st, ln) + offs


class ReplayBuffer:
    """Per-signal FIFO buckets of whole trajectories.

    Capacity counts records and is split evenly across signal buckets; the
    oldest trajectory of a bucket is evicted first.
    """

    def __init__(self, n_signals: int, capacity: int = 100_000):
        if capacity < n_signals:
            raise ValueError("capacity smaller than the number of signals")
        self.n_signals = n_signals
        self.capacity = capacity
        self.bucket_capacity = capacity // n_signals
        self.buckets = [_Bucket(self.bucket_capacity) for _ in range(n_signals)]

    def __len__(self) -> int:
        return sum(b.records for b in self.buckets)

    @property
    def counts(self) -> list[int]:
        return [b.records for b in self.buckets]

    def n_trajectories(self, signal: int | None = None) -> int:
        if signal is None:
            return sum(b.n for b in self.buckets)
        return self.buckets[signal].n

    def add(self, trajectory: Sequence[SarsasRecord]) -> None:
        if not trajectory:
            return
        signal = trajectory[0].signal
        if any(r.signal != signal for r in trajectory):
            raise ValueError("a trajectory must carry a single signal")
        self.buckets[signal].add(stack_records(trajectory), 0, len(trajectory))

    def add_arrays(self, arrays: dict[str, np.ndarray], bounds: np.ndarray) -> None:
        """Add several stacked trajectories; trajectory i spans rows bounds[i]:bounds[i+1]."""
        sig = arrays["signal"]
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            if hi > lo:
                self.buckets[int(sig[lo])].add(arrays, int(lo), int(hi))

    def can_sample(self, n: int) -> bool:
        if n % self.n_signals:
            return False
        k = n // self.n_signals
        return all(b.n >= k for b in self.buckets)

    def sample_balanced_batch(self, n: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        """`n // n_signals` trajectories per signal, flattened into records."""
        if n <= 0 or n % self.n_signals:
            raise ValueError(f"batch size {n} is not a positive multiple of {self.n_signals} signals")
        k = n // self.n_signals
        parts = []
        for s, b in enumerate(self.buckets):
            if b.n < k:
                raise InsufficientData(f"signal {s} holds {b.n} < {k} trajectories")
            rows = b.rows_of(np.sort(rng.choice(b.n, size=k, replace=False)))
            parts.append({f: b.data[f][rows] for f in FIELDS})
        if len(parts) == 1:
            return parts[0]
        return {f: np.concatenate([p[f] for p in parts]) for f in FIELDS}


def sample_balanced_batch(buf: ReplayBuffer, n: int, rng: np.random.Generator):
    return buf.sample_balanced_batch(n, rng)
