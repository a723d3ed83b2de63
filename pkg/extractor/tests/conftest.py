from __future__ import annotations

import json
import struct

import numpy as np
import pytest

from hsx.tinymodel import build_tiny_model

SPLIT_NAMES = ("train", "dev", "test")

# ten rows over three schemas; every word is in the tiny model's vocabulary,
# ex-single tokenizes to one token per prompt, ex-copy repeats ex-0's text
ROWS = [
    {"id": "ex-0", "schema_id": "db-users",
     "schema_text": "create table users ( id int , name text , city text )",
     "question": "how many users in each city ?",
     "query": "select city , count ( * ) from users group by city"},
    {"id": "ex-1", "schema_id": "db-users",
     "schema_text": "create table users ( id int , name text , city text )",
     "question": "list all names",
     "query": "select name from users"},
    {"id": "ex-2", "schema_id": "db-users",
     "schema_text": "create table users ( id int , name text , city text )",
     "question": "who in city 3 ?",
     "query": "select name from users where city = 3"},
    {"id": "ex-3", "schema_id": "db-orders",
     "schema_text": "create table orders ( id int , total real , date text )",
     "question": "what is the total of all orders ?",
     "query": "select sum ( total ) from orders"},
    {"id": "ex-4", "schema_id": "db-orders",
     "schema_text": "create table orders ( id int , total real , date text )",
     "question": "find orders with total more than 5",
     "query": "select * from orders where total > 5"},
    {"id": "ex-5", "schema_id": "db-orders",
     "schema_text": "create table orders ( id int , total real , date text )",
     "question": "how many orders ?",
     "query": "select count ( * ) from orders"},
    {"id": "ex-6", "schema_id": "db-items",
     "schema_text": "create table items ( id int , name text , price real )",
     "question": "show the 2 items with max price",
     "query": "select name from items order by price desc limit 2"},
    {"id": "ex-7", "schema_id": "db-items",
     "schema_text": "create table items ( id int , name text , price real )",
     "question": "what is the avg price of items ?",
     "query": "select avg ( price ) from items"},
    {"id": "ex-single", "schema_id": "db-items",
     "schema_text": "items", "question": "", "query": "select"},
    {"id": "ex-copy", "schema_id": "db-users",
     "schema_text": "create table users ( id int , name text , city text )",
     "question": "how many users in each city ?",
     "query": "select city , count ( * ) from users group by city"},
]


@pytest.fixture(scope="session")
def model_dir(tmp_path_factory) -> str:
    path = tmp_path_factory.mktemp("tinymodel") / "model"
    return build_tiny_model(str(path), seed=0)


@pytest.fixture(scope="session")
def write_dataset(tmp_path_factory):
    def _write(rows: list[dict], name: str = "data.jsonl") -> str:
        path = tmp_path_factory.mktemp("dataset") / name
        with open(path, "w", encoding="utf-8") as f:
            for row in rows:
                f.write(json.dumps(row) + "\n")
        return str(path)

    return _write


def _parse_dtrv(path: str):
    """Independent container reader used to check written bytes."""
    with open(path, "rb") as f:
        data = f.read()
    head = "<4sIIHI"
    magic, version, n_records, l_kept, dim = struct.unpack_from(head, data, 0)
    assert magic == b"DTRV" and version == 1
    off = struct.calcsize(head)
    layer_ids = struct.unpack_from(f"<{l_kept}H", data, off)
    off += 2 * l_kept
    pool_mask, has_targets = struct.unpack_from("<BB", data, off)
    off += 2
    modes = tuple(m for m, bit in (("mean", 1), ("eos", 2)) if pool_mask & bit)

    records: dict[str, dict] = {}
    order: list[str] = []
    for _ in range(n_records):
        fields = []
        for _ in range(2):
            (length,) = struct.unpack_from("<I", data, off)
            off += 4
            fields.append(data[off:off + length].decode("utf-8"))
            off += length
        split_code = data[off]
        off += 1

        def block():
            nonlocal off
            a = np.frombuffer(data, dtype="<f4", count=l_kept * dim, offset=off)
            off += l_kept * dim * 4
            return a.reshape(l_kept, dim).copy()

        problem = {m: block() for m in modes}
        target = {m: block() for m in modes} if has_targets else None
        rec_id, schema_id = fields
        records[rec_id] = {
            "schema_id": schema_id,
            "split": SPLIT_NAMES[split_code],
            "problem": problem,
            "target": target,
        }
        order.append(rec_id)
    assert off == len(data), "trailing bytes"
    meta = {
        "n_records": n_records,
        "l_kept": l_kept,
        "dim": dim,
        "layer_ids": layer_ids,
        "modes": modes,
        "has_targets": bool(has_targets),
        "order": order,
    }
    return meta, records


@pytest.fixture(scope="session")
def parse_dtrv():
    return _parse_dtrv
