"""Per-gate trace export as tab-separated text.

One header line, then one line per gate with the columns in
:data:`TRACE_COLUMNS`:

gate_index
    0-based gate number.
gate_kind
    ``signal``, ``test`` (source on) or ``dark`` (source off).
attack_state
    ``pass``, ``blind``, ``sensitive`` or ``vacuum``.
click
    1 if the detector fired.
in_gate_time
    Arrival time within the gate, in [0, 1] for in-gate light; test gates
    report the test pulse time.
bit
    Bit Bob recorded on a signal-gate click, else -1.
basis_match
    1 if Alice and Bob chose the same basis.
error
    1 if the bit was sifted and wrong.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .session import ATTACK_STATES, GATE_KINDS

TRACE_COLUMNS = (
    "gate_index",
    "gate_kind",
    "attack_state",
    "click",
    "in_gate_time",
    "bit",
    "basis_match",
    "error",
)


def write_trace(trace: dict[str, np.ndarray], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        cols = [trace[c] for c in TRACE_COLUMNS]
        for row in zip(*cols):
            idx, kind, st, click, t, bit, bm, err = row
            w.writerow(
                (
                    int(idx),
                    GATE_KINDS[kind],
                    ATTACK_STATES[st],
                    int(click),
                    f"{float(t):.9g}",
                    int(bit),
                    int(bm),
                    int(err),
                )
            )


def read_trace(path: str | Path) -> list[dict]:
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh, delimiter="\t"):
            for k in ("gate_index", "click", "bit", "basis_match", "error"):
                rec[k] = int(rec[k])
            rec["in_gate_time"] = float(rec["in_gate_time"])
            out.append(rec)
    return out
