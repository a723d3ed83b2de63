"""Dataset input: one JSON object per line.

Required keys: id, schema_id, schema_text, question. Optional: query (the
answer text, needed when target states are requested) and split (train, dev
or test; defaults to train). Anything else is rejected so typos surface
instead of silently dropping a field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import DatasetError

SPLITS = ("train", "dev", "test")

_REQUIRED = ("id", "schema_id", "schema_text", "question")
_OPTIONAL = ("query", "split")


@dataclass(frozen=True)
class DatasetRow:
    id: str
    schema_id: str
    schema_text: str
    question: str
    query: str | None = None
    split: str = "train"


def _parse_row(obj: object, where: str) -> DatasetRow:
    if not isinstance(obj, dict):
        raise DatasetError(f"{where}: expected an object, got {type(obj).__name__}")
    unknown = sorted(set(obj) - set(_REQUIRED) - set(_OPTIONAL))
    if unknown:
        raise DatasetError(f"{where}: unknown keys {unknown}")
    for key in _REQUIRED:
        if key not in obj:
            raise DatasetError(f"{where}: missing key {key!r}")
    for key in obj:
        if not isinstance(obj[key], str):
            raise DatasetError(
                f"{where}: {key!r} must be a string, got {type(obj[key]).__name__}"
            )
    if not obj["id"]:
        raise DatasetError(f"{where}: id is empty")
    if not obj["schema_id"]:
        raise DatasetError(f"{where}: schema_id is empty")
    split = obj.get("split", "train")
    if split not in SPLITS:
        raise DatasetError(f"{where}: split must be one of {SPLITS}, got {split!r}")
    return DatasetRow(
        id=obj["id"],
        schema_id=obj["schema_id"],
        schema_text=obj["schema_text"],
        question=obj["question"],
        query=obj.get("query"),
        split=split,
    )


def read_dataset(path: str) -> list[DatasetRow]:
    """Parse a JSONL dataset file, enforcing unique non-empty ids."""
    rows: list[DatasetRow] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetError(f"{where}: invalid JSON: {e}") from e
            row = _parse_row(obj, where)
            if row.id in seen:
                raise DatasetError(f"{where}: duplicate id {row.id!r}")
            seen.add(row.id)
            rows.append(row)
    if not rows:
        raise DatasetError(f"{path}: dataset is empty")
    return rows
