"""Prompt assembly.

The embedded problem text is exactly the schema followed by the question,
newline-joined, with no instruction boilerplate. Target text depends on the
mode: the query alone, or the full schema/question/query triple.
"""

from __future__ import annotations

from .dataset import DatasetRow

TARGET_MODES = ("none", "query", "problem_query")


def problem_prompt(row: DatasetRow) -> str:
    return "\n".join(part for part in (row.schema_text, row.question) if part)


def target_prompt(row: DatasetRow, mode: str) -> str | None:
    """Target text for a row, or None when the mode is "none".

    Modes that need the query raise KeyError-free: the caller decides how to
    handle rows whose query is missing, so this returns None for those too.
    """
    if mode not in TARGET_MODES:
        raise ValueError(f"target mode must be one of {TARGET_MODES}, got {mode!r}")
    if mode == "none":
        return None
    if row.query is None:
        return None
    if mode == "query":
        return row.query
    return "\n".join(part for part in (row.schema_text, row.question, row.query) if part)
