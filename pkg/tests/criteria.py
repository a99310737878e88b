"""Collects one pass/fail line per acceptance criterion for the run summary."""

LINES: dict[int, str] = {}


def record(number: int, title: str, passed: bool, detail: str) -> bool:
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d} {title}: {detail}"
    LINES[number] = line
    print(line)
    return passed
