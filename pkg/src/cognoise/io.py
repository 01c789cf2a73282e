"""File formats: CSV tables, JSON documents and the binary draws layout.

draws.bin layout (all integers little-endian uint32)::

    8 bytes   magic b"CGNDRAW1"
    uint32    n_chains
    uint32    n_draws
    uint32    n_dims
    uint32    byte length L of the name block
    L bytes   UTF-8 parameter names joined by "\\n"
    ...       n_chains * n_draws * n_dims float64 (little-endian), row-major
              in (chain, draw, dim) order

Run metadata lives next to it in meta.json.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import struct
from pathlib import Path

import numpy as np

from .design import SumDecomposition, TrialSpec
from .simulate import CHOICE_COLUMNS, ChoiceDataset

MAGIC = b"CGNDRAW1"
TRIAL_COLUMNS = ("task", "game_id", "repetition", "round", "self_cents", "other_cents",
                 "self_eur", "other_eur", "self1", "self2", "other1", "other2",
                 "self_order", "other_order")


class DataFormatError(ValueError):
    """A file does not follow the expected schema."""


def cents_to_eur(cents: int) -> str:
    """Integer cents as a euro string with exactly two decimals."""
    c = int(cents)
    sign = "-" if c < 0 else ""
    c = abs(c)
    return f"{sign}{c // 100}.{c % 100:02d}"


def eur_to_cents(text: str) -> int:
    text = text.strip()
    sign = -1 if text.startswith("-") else 1
    whole, _, frac = text.lstrip("-").partition(".")
    if len(frac) != 2 or not whole.isdigit() or not frac.isdigit():
        raise DataFormatError(f"bad euro amount {text!r}")
    return sign * (int(whole) * 100 + int(frac))


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return repr(v)
    return str(v)


def write_table(path, columns, rows) -> None:
    """CSV with a header; floats written in shortest round-trip form."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            values = [r[c] for c in columns] if isinstance(r, dict) else r
            w.writerow([_fmt(v) for v in values])


def read_table(path, required=()) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in required if c not in (reader.fieldnames or [])]
        if missing:
            raise DataFormatError(f"{path}: missing columns {missing}")
        return list(reader)


def _order_str(order) -> str:
    return "".join(str(i) for i in order)


def _order_parse(text: str):
    if text not in ("01", "10"):
        raise DataFormatError(f"bad display order {text!r}")
    return (0, 1) if text == "01" else (1, 0)


def write_trials(path, trials) -> None:
    rows = []
    for t in trials:
        d = t.split
        rows.append({
            "task": t.task, "game_id": t.game_id, "repetition": t.repetition, "round": t.round,
            "self_cents": t.self_cents, "other_cents": t.other_cents,
            "self_eur": cents_to_eur(t.self_cents), "other_eur": cents_to_eur(t.other_cents),
            "self1": "" if d is None else d.self1, "self2": "" if d is None else d.self2,
            "other1": "" if d is None else d.other1, "other2": "" if d is None else d.other2,
            "self_order": "" if d is None else _order_str(d.display_order[0]),
            "other_order": "" if d is None else _order_str(d.display_order[1]),
        })
    write_table(path, TRIAL_COLUMNS, rows)


def read_trials(path) -> list[TrialSpec]:
    out = []
    for i, r in enumerate(read_table(path, TRIAL_COLUMNS[:6])):
        try:
            split = None
            if r.get("self1", ""):
                order = (_order_parse(r["self_order"]), _order_parse(r["other_order"]))
                split = SumDecomposition(int(r["self1"]), int(r["self2"]), int(r["other1"]),
                                         int(r["other2"]), order)
            out.append(TrialSpec(r["task"], int(r["game_id"]), int(r["self_cents"]),
                                 int(r["other_cents"]), int(r["repetition"]), int(r["round"]), split))
        except (KeyError, ValueError) as exc:
            raise DataFormatError(f"{path}: row {i + 2}: {exc}") from exc
    return out


def write_choices(path, data: ChoiceDataset) -> None:
    cols = [getattr(data, c) for c in CHOICE_COLUMNS]
    write_table(path, CHOICE_COLUMNS, zip(*cols))


def read_choices(path) -> ChoiceDataset:
    rows = read_table(path, CHOICE_COLUMNS)
    if not rows:
        raise DataFormatError(f"{path}: no records")
    try:
        cols = {c: [r[c] for r in rows] for c in CHOICE_COLUMNS}
        for c in CHOICE_COLUMNS:
            if c not in ("group", "task"):
                cols[c] = [int(v) for v in cols[c]]
        data = ChoiceDataset(**cols)
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc
    if not set(data.group.tolist()) <= {"B", "T"}:
        raise DataFormatError(f"{path}: group must be B or T")
    if not set(data.task.tolist()) <= {"altruism", "number"}:
        raise DataFormatError(f"{path}: task must be altruism or number")
    return data


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def write_draws(path, draws) -> None:
    arr = np.ascontiguousarray(draws.draws, dtype="<f8")
    names = "\n".join(draws.names).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<4I", *arr.shape, len(names)))
        fh.write(names)
        fh.write(arr.tobytes(order="C"))


def read_draws_header(path):
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise DataFormatError(f"{path}: not a draws file")
        c, s, d, n = struct.unpack("<4I", fh.read(16))
        names = fh.read(n).decode("utf-8").split("\n") if n else []
    if len(names) != d:
        raise DataFormatError(f"{path}: {len(names)} names for {d} dimensions")
    return (c, s, d), names, 24 + n


def read_draws(path, meta: dict | None = None, mmap: bool = True):
    """Load a draws file; the array is memory-mapped so blocks stream from disk."""
    from .inference.nuts import PosteriorDraws

    shape, names, offset = read_draws_header(path)
    expected = offset + 8 * int(np.prod(shape))
    if Path(path).stat().st_size != expected:
        raise DataFormatError(f"{path}: size does not match its header")
    if mmap:
        arr = np.memmap(path, dtype="<f8", mode="r", offset=offset, shape=shape)
    else:
        arr = np.fromfile(path, dtype="<f8", offset=offset).reshape(shape)
    return PosteriorDraws(arr, names, dict(meta or {}))


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
