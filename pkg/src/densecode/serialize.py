"""JSON codecs for complex matrices, message sets, and solver reports.

Complex entries are encoded as [re, im] pairs; a matrix is a list of rows.
All dictionaries are emitted with sorted keys so identical inputs produce
byte-identical files.
"""

from __future__ import annotations

import json

import numpy as np


def matrix_to_json(m: np.ndarray) -> list:
    """Encode a complex matrix as nested lists of [re, im] pairs."""
    m = np.asarray(m, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def matrix_from_json(rows: list) -> np.ndarray:
    return np.array([[complex(re, im) for re, im in row] for row in rows])


def matrices_to_json(ms) -> list:
    return [matrix_to_json(m) for m in ms]


def matrices_from_json(items: list) -> list:
    return [matrix_from_json(rows) for rows in items]


def dumps(obj: dict) -> str:
    """Deterministic JSON text: sorted keys, no NaN/Infinity tokens."""
    return json.dumps(obj, sort_keys=True, allow_nan=False, indent=2)


def write_json(path, obj: dict) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(obj))
        fh.write("\n")


def read_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
