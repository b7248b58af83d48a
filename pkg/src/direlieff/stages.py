"""Named computation stages shared by the local and cluster backends.

A stage bundles the per-partition fold (element-wise `seq` as the semantic
contract, `run_block` as an equivalent vectorized fast path), the driver-side
combiner, and exact byte codecs for its parameters and result.  Backends only
ever refer to stages by name, so nothing callable crosses the wire.

All codecs are big-endian and value-exact: float64 payloads are raw IEEE-754
bytes, never decimal strings, so a result decodes to the identical bits on
any host.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .model import DiffConfig, DiffMode, FeatureRange, InstanceBlock, Schema
from .neighbors import NeighborMatrix, pack_instance_fields, unpack_instance_fields

__all__ = [
    "Stage",
    "FetchParams",
    "NeighborParams",
    "COUNT",
    "RANGES",
    "PRIORS",
    "FETCH",
    "NEIGHBORS",
    "STAGES",
]

_I32 = struct.Struct("!i")
_I64 = struct.Struct("!q")


def _pack_f64(arr: np.ndarray) -> bytes:
    return np.asarray(arr, dtype=np.float64).astype(">f8").tobytes()


def _unpack_f64(buf: bytes, at: int, count: int):
    out = np.frombuffer(buf, dtype=">f8", count=count, offset=at).astype(np.float64)
    return out, at + 8 * count


class Stage:
    """Base stage: subclasses set `name` and override the fold hooks.

    `run_block` defaults to folding `seq` over the block's elements; stages
    that override it with a vectorized path must produce the same result.
    """

    name = ""

    def make_zero(self, schema: Schema, params):
        raise NotImplementedError

    def seq(self, acc, element, params, schema: Schema):
        raise NotImplementedError

    def run_block(self, acc, block, params, schema: Schema, partition_index: int):
        for element in block:
            acc = self.seq(acc, element, params, schema)
        return acc

    def comb(self, a, b):
        raise NotImplementedError

    def encode_params(self, params, schema: Schema) -> bytes:
        return b""

    def decode_params(self, buf: bytes, schema: Schema):
        return None

    def encode_result(self, result, schema: Schema) -> bytes:
        raise NotImplementedError

    def decode_result(self, buf: bytes, schema: Schema, params):
        raise NotImplementedError


class CountStage(Stage):
    name = "count"

    def make_zero(self, schema, params):
        return 0

    def seq(self, acc, element, params, schema):
        return acc + 1

    def run_block(self, acc, block, params, schema, partition_index):
        return acc + len(block)

    def comb(self, a, b):
        return a + b

    def encode_result(self, result, schema):
        return _I64.pack(result)

    def decode_result(self, buf, schema, params):
        return _I64.unpack(buf)[0]


class RangesStage(Stage):
    """Per-feature (min, max) fold; exact because min/max never round."""

    name = "ranges"

    def make_zero(self, schema, params):
        a = schema.num_features
        return (np.full(a, np.inf), np.full(a, -np.inf))

    def seq(self, acc, element, params, schema):
        return (np.minimum(acc[0], element.values), np.maximum(acc[1], element.values))

    def run_block(self, acc, block, params, schema, partition_index):
        if len(block) == 0:
            return acc
        if isinstance(block, InstanceBlock):
            return (
                np.minimum(acc[0], block.values.min(axis=0)),
                np.maximum(acc[1], block.values.max(axis=0)),
            )
        return super().run_block(acc, block, params, schema, partition_index)

    def comb(self, a, b):
        return (np.minimum(a[0], b[0]), np.maximum(a[1], b[1]))

    def encode_result(self, result, schema):
        return _pack_f64(result[0]) + _pack_f64(result[1])

    def decode_result(self, buf, schema, params):
        a = schema.num_features
        mins, at = _unpack_f64(buf, 0, a)
        maxs, _ = _unpack_f64(buf, at, a)
        return (mins, maxs)


class PriorsStage(Stage):
    """Class occurrence counts; integer addition, hence exact."""

    name = "priors"

    def make_zero(self, schema, params):
        return np.zeros(schema.num_classes, dtype=np.int64)

    def seq(self, acc, element, params, schema):
        acc[element.label] += 1
        return acc

    def run_block(self, acc, block, params, schema, partition_index):
        if isinstance(block, InstanceBlock):
            return acc + np.bincount(block.labels, minlength=schema.num_classes)
        return super().run_block(acc, block, params, schema, partition_index)

    def comb(self, a, b):
        return a + b

    def encode_result(self, result, schema):
        return np.asarray(result, dtype=np.int64).astype(">i8").tobytes()

    def decode_result(self, buf, schema, params):
        return np.frombuffer(buf, dtype=">i8").astype(np.int64)


@dataclass(frozen=True)
class FetchParams:
    """Rows to pull, keyed by global partition index.

    picks[p] is a list of (slot, offset): `offset` is the row's position
    inside partition p, `slot` its position in the caller's output list.
    """

    picks: dict


class FetchStage(Stage):
    """Collects specific rows by position; the result is a (slot, instance)
    list the caller reorders by slot."""

    name = "fetch"
    seq = None  # position-based, no element-wise form

    def make_zero(self, schema, params):
        return []

    def run_block(self, acc, block, params, schema, partition_index):
        for slot, offset in params.picks.get(partition_index, ()):
            acc.append((slot, block[offset]))
        return acc

    def comb(self, a, b):
        return a + b

    def encode_params(self, params, schema):
        parts = [_I32.pack(len(params.picks))]
        for pidx in sorted(params.picks):
            picks = params.picks[pidx]
            parts.append(struct.pack("!ii", pidx, len(picks)))
            for slot, offset in picks:
                parts.append(struct.pack("!ii", slot, offset))
        return b"".join(parts)

    def decode_params(self, buf, schema):
        (nparts,) = _I32.unpack_from(buf, 0)
        at = _I32.size
        picks: dict = {}
        for _ in range(nparts):
            pidx, count = struct.unpack_from("!ii", buf, at)
            at += 8
            entries = []
            for _ in range(count):
                entries.append(struct.unpack_from("!ii", buf, at))
                at += 8
            picks[pidx] = entries
        return FetchParams(picks=picks)

    def encode_result(self, result, schema):
        parts = [_I32.pack(len(result))]
        for slot, inst in result:
            parts.append(_I32.pack(slot))
            parts.append(pack_instance_fields(inst.id, inst.label, inst.values))
        return b"".join(parts)

    def decode_result(self, buf, schema, params):
        from .model import Instance

        (count,) = _I32.unpack_from(buf, 0)
        at = _I32.size
        a = schema.num_features
        out = []
        for _ in range(count):
            (slot,) = _I32.unpack_from(buf, at)
            at += _I32.size
            iid, label, values, at = unpack_instance_fields(buf, at, a)
            values.flags.writeable = False
            out.append((slot, Instance(id=iid, label=label, values=values)))
        return out


@dataclass(frozen=True)
class NeighborParams:
    samples: InstanceBlock
    k: int
    ranges: FeatureRange
    cfg: DiffConfig
    numeric_mask: np.ndarray

    @classmethod
    def build(cls, schema: Schema, samples: InstanceBlock, k: int, ranges, cfg) -> "NeighborParams":
        return cls(samples=samples, k=k, ranges=ranges, cfg=cfg, numeric_mask=schema.numeric_mask())


class NeighborsStage(Stage):
    """Fills the per-(class, sample) nearest-neighbour heaps."""

    name = "neighbors"

    def make_zero(self, schema, params):
        return NeighborMatrix(schema.num_classes, params.samples.ids, params.k)

    def seq(self, acc, element, params, schema):
        acc.offer_instance(
            element.id,
            element.label,
            element.values,
            params.samples.values,
            params.numeric_mask,
            params.ranges,
            params.cfg,
        )
        return acc

    def run_block(self, acc, block, params, schema, partition_index):
        if isinstance(block, InstanceBlock):
            acc.offer_block(block, params.samples.values, params.numeric_mask, params.ranges, params.cfg)
            return acc
        return super().run_block(acc, block, params, schema, partition_index)

    def comb(self, a, b):
        return a.merge(b)

    def encode_params(self, params, schema):
        mode = 1 if params.cfg.numeric_mode is DiffMode.RAMP else 0
        head = struct.pack("!iiidd", params.k, mode, len(params.samples), params.cfg.t_eq, params.cfg.t_diff)
        s = params.samples
        return b"".join(
            [
                head,
                s.ids.astype(">i8").tobytes(),
                s.labels.astype(">i4").tobytes(),
                _pack_f64(s.values),
                _pack_f64(params.ranges.mins),
                _pack_f64(params.ranges.maxs),
            ]
        )

    def decode_params(self, buf, schema):
        k, mode, m, t_eq, t_diff = struct.unpack_from("!iiidd", buf, 0)
        at = struct.calcsize("!iiidd")
        a = schema.num_features
        ids = np.frombuffer(buf, dtype=">i8", count=m, offset=at).astype(np.int64)
        at += 8 * m
        labels = np.frombuffer(buf, dtype=">i4", count=m, offset=at).astype(np.int32)
        at += 4 * m
        flat, at = _unpack_f64(buf, at, m * a)
        values = flat.reshape(m, a)
        mins, at = _unpack_f64(buf, at, a)
        maxs, _ = _unpack_f64(buf, at, a)
        mask = schema.numeric_mask()
        cfg = DiffConfig(
            numeric_mode=DiffMode.RAMP if mode else DiffMode.LINEAR, t_eq=t_eq, t_diff=t_diff
        )
        return NeighborParams(
            samples=InstanceBlock(ids, labels, values),
            k=k,
            ranges=FeatureRange(mins, maxs, mask),
            cfg=cfg,
            numeric_mask=mask,
        )

    def encode_result(self, result, schema):
        return result.encode(schema.num_features)

    def decode_result(self, buf, schema, params):
        return NeighborMatrix.decode(buf, params.samples.ids)


COUNT = CountStage()
RANGES = RangesStage()
PRIORS = PriorsStage()
FETCH = FetchStage()
NEIGHBORS = NeighborsStage()

STAGES: dict[str, Stage] = {s.name: s for s in (COUNT, RANGES, PRIORS, FETCH, NEIGHBORS)}
