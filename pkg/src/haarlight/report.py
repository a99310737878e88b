"""Run reports shared by every command, as plain text and CSV.

Numbers go through ``repr`` in both encodings so the two always agree
digit for digit.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np


def _fmt(value) -> str:
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return " ".join(_fmt(v) for v in value)
    return str(value)


@dataclass
class RunReport:
    command: str
    parameters: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def rows(self):
        yield "command", "name", self.command
        for section in ("parameters", "timings", "results"):
            for key, value in getattr(self, section).items():
                yield section, key, _fmt(value)
        for path in self.outputs:
            yield "outputs", "path", str(path)
        for msg in self.warnings:
            yield "warnings", "message", msg

    def to_text(self) -> str:
        lines = []
        for section, key, value in self.rows():
            if section == "command":
                lines.append(f"command: {value}")
            else:
                lines.append(f"{section}.{key}: {value}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["section", "key", "value"])
        writer.writerows(self.rows())
        return buf.getvalue()

    @staticmethod
    def parse_csv(text: str) -> dict:
        """``{(section, key): value}`` from :meth:`to_csv` output."""
        reader = csv.reader(io.StringIO(text))
        next(reader)
        return {(s, k): v for s, k, v in reader}
