from __future__ import annotations

import numpy as np
import pytest

from demoret.hsc import ExampleRecord


def make_records(n: int, l_kept: int = 3, dim: int = 4, modes=("mean", "eos"),
                 targets: bool = True, seed: int = 0, schemas: int = 2,
                 split: str = "train") -> list[ExampleRecord]:
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        problem = {m: rng.standard_normal((l_kept, dim)).astype(np.float32) for m in modes}
        target = None
        if targets:
            target = {m: rng.standard_normal((l_kept, dim)).astype(np.float32) for m in modes}
        records.append(ExampleRecord(
            id=f"rec{i:04d}",
            schema_id=f"schema{i % schemas}",
            split=split,
            problem_states=problem,
            target_states=target,
        ))
    return records


@pytest.fixture
def records10() -> list[ExampleRecord]:
    return make_records(10)
