"""Bounded nearest-neighbour selection.

A neighbour entry is ordered by the pair (distance, instance id); ids are
unique, so the order is total and every top-k set is unique.  That is what
makes the search reproducible: any sequence of offers, in any grouping or
order, yields the same k survivors.

`NeighborMatrix` is the accumulator for the neighbour stage: one bounded
heap per (class, sample) cell, filled from instance blocks and merged
across partitions.
"""

from __future__ import annotations

import heapq
import struct

import numpy as np

from .model import DiffConfig, FeatureRange, InstanceBlock, feature_diffs

__all__ = [
    "NeighborHeap",
    "NeighborMatrix",
    "pack_instance_fields",
    "unpack_instance_fields",
]

_ENTRY_HEAD = struct.Struct("!dqi")  # distance, neighbour id, class id
_CELL_HEAD = struct.Struct("!i")
_MATRIX_HEAD = struct.Struct("!iiii")  # classes, samples, k, features


def pack_instance_fields(iid: int, label: int, values: np.ndarray) -> bytes:
    """id(8) + class id(4) + one big-endian float64 per feature."""
    return struct.pack("!qi", iid, label) + values.astype(">f8").tobytes()


def unpack_instance_fields(buf: bytes, at: int, num_features: int):
    iid, label = struct.unpack_from("!qi", buf, at)
    at += 12
    values = np.frombuffer(buf, dtype=">f8", count=num_features, offset=at).astype(np.float64)
    at += 8 * num_features
    return iid, label, values, at


class NeighborHeap:
    """Keeps the k best entries under ascending (distance, id).

    Internally a heap of (-distance, -id, label, values) tuples, so the
    root is always the current worst; ids are unique, so comparisons never
    reach the array payload.
    """

    __slots__ = ("k", "_heap")

    def __init__(self, k: int):
        self.k = k
        self._heap: list = []

    def __len__(self) -> int:
        return len(self._heap)

    def offer(self, dist: float, iid: int, label: int, values: np.ndarray) -> None:
        item = (-dist, -iid, label, values)
        if len(self._heap) < self.k:
            heapq.heappush(self._heap, item)
        elif item[:2] > self._heap[0][:2]:
            heapq.heapreplace(self._heap, item)

    def worst_key(self):
        """(distance, id) of the current worst, or None while under capacity."""
        if len(self._heap) < self.k:
            return None
        negd, negi = self._heap[0][:2]
        return (-negd, -negi)

    def merge(self, other: "NeighborHeap") -> None:
        for negd, negi, label, values in other._heap:
            self.offer(-negd, -negi, label, values)

    def sorted_entries(self) -> list:
        """Entries as (distance, id, label, values), ascending (distance, id)."""
        items = sorted(self._heap, key=lambda e: e[:2], reverse=True)
        return [(-negd, -negi, label, values) for negd, negi, label, values in items]


class NeighborMatrix:
    """Per (class, sample) bounded heaps over a dataset's instances.

    Cell (C, i) collects the k nearest class-C instances to sample i,
    excluding the sample itself by id.  Filling is associative and
    commutative: partitions can be folded independently and merged.
    """

    def __init__(self, num_classes: int, sample_ids, k: int):
        self.num_classes = num_classes
        self.sample_ids = list(sample_ids)
        self.k = k
        self.grid = [
            [NeighborHeap(k) for _ in self.sample_ids] for _ in range(num_classes)
        ]

    @property
    def num_samples(self) -> int:
        return len(self.sample_ids)

    # -- filling ----------------------------------------------------------

    def offer_instance(
        self,
        iid: int,
        label: int,
        values: np.ndarray,
        sample_values: np.ndarray,
        numeric_mask: np.ndarray,
        ranges: FeatureRange,
        cfg: DiffConfig,
    ) -> None:
        # diff is symmetric, so one call against the sample block suffices
        diffs = feature_diffs(sample_values, values, numeric_mask, ranges, cfg)
        row = self.grid[label]
        for s_idx, sid in enumerate(self.sample_ids):
            if iid == sid:
                continue
            row[s_idx].offer(float(np.sum(diffs[s_idx])), iid, label, values)

    def offer_block(
        self,
        block: InstanceBlock,
        sample_values: np.ndarray,
        numeric_mask: np.ndarray,
        ranges: FeatureRange,
        cfg: DiffConfig,
    ) -> None:
        ids, labels, values = block.ids, block.labels, block.values
        for s_idx, sid in enumerate(self.sample_ids):
            diffs = feature_diffs(values, sample_values[s_idx], numeric_mask, ranges, cfg)
            dists = np.sum(diffs, axis=-1)
            for label in range(self.num_classes):
                sel = np.flatnonzero((labels == label) & (ids != sid))
                if sel.size == 0:
                    continue
                order = np.lexsort((ids[sel], dists[sel]))
                heap = self.grid[label][s_idx]
                for j in sel[order[: self.k]]:
                    heap.offer(float(dists[j]), int(ids[j]), label, values[j])

    def merge(self, other: "NeighborMatrix") -> "NeighborMatrix":
        for c in range(self.num_classes):
            mine, theirs = self.grid[c], other.grid[c]
            for s_idx in range(self.num_samples):
                mine[s_idx].merge(theirs[s_idx])
        return self

    # -- wire format --------------------------------------------------------

    def encode(self, num_features: int) -> bytes:
        parts = [
            _MATRIX_HEAD.pack(self.num_classes, self.num_samples, self.k, num_features)
        ]
        for row in self.grid:
            for heap in row:
                entries = heap.sorted_entries()
                parts.append(_CELL_HEAD.pack(len(entries)))
                for dist, iid, label, vals in entries:
                    parts.append(_ENTRY_HEAD.pack(dist, iid, label))
                    parts.append(vals.astype(">f8").tobytes())
        return b"".join(parts)

    @classmethod
    def decode(cls, buf: bytes, sample_ids) -> "NeighborMatrix":
        num_classes, num_samples, k, a = _MATRIX_HEAD.unpack_from(buf, 0)
        if num_samples != len(sample_ids):
            raise ValueError("sample count mismatch in encoded neighbour matrix")
        out = cls(num_classes, sample_ids, k)
        at = _MATRIX_HEAD.size
        for c in range(num_classes):
            for s_idx in range(num_samples):
                (count,) = _CELL_HEAD.unpack_from(buf, at)
                at += _CELL_HEAD.size
                heap = out.grid[c][s_idx]
                for _ in range(count):
                    dist, iid, label = _ENTRY_HEAD.unpack_from(buf, at)
                    at += _ENTRY_HEAD.size
                    vals = np.frombuffer(buf, dtype=">f8", count=a, offset=at).astype(
                        np.float64
                    )
                    at += 8 * a
                    heap.offer(dist, iid, label, vals)
        return out
