"""Small shared helpers: deterministic seed derivation and CSV emission."""

from __future__ import annotations

import hashlib
from typing import Iterable, Sequence

import numpy as np


def derive_seed(*parts: int) -> int:
    """Stable child seed from integer components (order matters)."""
    entropy = [int(p) & 0xFFFFFFFF for p in parts]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def derive_rng(*parts: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*parts))


def params_digest(params: np.ndarray) -> str:
    """Short stable fingerprint of a parameter vector."""
    arr = np.ascontiguousarray(params, dtype=float)
    return hashlib.sha1(arr.tobytes()).hexdigest()[:12]


def fmt_value(v) -> str:
    """Deterministic text form for CSV cells (shortest round-trip floats)."""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path, schema: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """CSV with a schema-versioned first line; byte-stable given equal rows."""
    lines = [f"# schema={schema}", ",".join(header)]
    for row in rows:
        lines.append(",".join(fmt_value(v) for v in row))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv(path) -> tuple[str, list[str], list[list[str]]]:
    """Inverse of write_csv: (schema, header, rows-as-strings)."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or not lines[0].startswith("# schema="):
        raise ValueError(f"{path} is missing its schema header line")
    schema = lines[0].split("=", 1)[1]
    header = lines[1].split(",")
    rows = [ln.split(",") for ln in lines[2:] if ln]
    return schema, header, rows
