"""Shared test helpers: randomized mixed-type datasets and cluster workers."""

from __future__ import annotations

import re
import subprocess
import sys

import numpy as np

from direlieff.model import FeatureKind, FeatureMeta, InstanceBlock, Schema


def random_mixed_block(rng: np.random.Generator, n: int, a_num: int, a_nom: int, c: int):
    """A dataset with interleaved numeric/nominal columns and assorted edge
    cases: constant columns, duplicated rows, occasionally absent classes."""
    a = a_num + a_nom
    kinds = np.array([FeatureKind.NUMERIC] * a_num + [FeatureKind.NOMINAL] * a_nom)
    rng.shuffle(kinds)
    values = np.empty((n, a))
    for j, kind in enumerate(kinds):
        if kind is FeatureKind.NUMERIC:
            style = rng.integers(0, 4)
            if style == 0:
                values[:, j] = rng.normal(0.0, rng.uniform(0.1, 50.0), size=n)
            elif style == 1:
                values[:, j] = rng.uniform(-5.0, 5.0, size=n)
            elif style == 2:
                values[:, j] = rng.integers(-3, 4, size=n).astype(float)
            else:
                values[:, j] = float(rng.normal())  # constant: degenerate range
        else:
            levels = int(rng.integers(2, 6))
            values[:, j] = rng.integers(0, levels, size=n).astype(float)

    present = c if rng.random() > 0.2 else int(rng.integers(1, c + 1))
    labels = rng.integers(0, present, size=n).astype(np.int32)

    if n >= 4 and rng.random() < 0.3:
        # duplicated rows: distance-0 candidates with distinct ids
        dup = rng.integers(0, n, size=max(1, n // 10))
        values[dup] = values[dup[0]]
        labels[dup] = labels[dup[0]]

    feats = tuple(
        FeatureMeta(name=f"f{j}", kind=kinds[j], index=j) for j in range(a)
    )
    schema = Schema(features=feats, class_labels=tuple(f"c{ci}" for ci in range(c)))
    block = InstanceBlock(np.arange(n, dtype=np.int64), labels, values)
    return schema, block


def spawn_worker(threads: int = 1):
    """Start a worker subprocess on an ephemeral port; returns (proc, addr)."""
    proc = subprocess.Popen(
        [sys.executable, "-m", "direlieff.cli", "worker", "--port", "0",
         "--threads", str(threads)],
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        text=True,
    )
    line = proc.stdout.readline()
    match = re.match(r"listening (.+):(\d+)", line)
    if not match:
        proc.kill()
        raise RuntimeError(f"worker did not announce a port: {line!r}")
    return proc, (match.group(1), int(match.group(2)))


def reap(procs, timeout: float = 15.0) -> list[int]:
    codes = []
    for proc in procs:
        try:
            codes.append(proc.wait(timeout=timeout))
        except subprocess.TimeoutExpired:
            proc.kill()
            codes.append(proc.wait())
    return codes
