"""Collects one pass/fail line per acceptance criterion for the terminal summary."""

LINES: list[str] = []


def record(number: int, title: str, ok: bool, elapsed: float, budget: float, detail: str = "") -> str:
    status = "PASS" if ok and elapsed < budget else "FAIL"
    line = f"[{status}] AC{number:<2} {title}: {elapsed:.2f}s (budget {budget:g}s){' | ' + detail if detail else ''}"
    LINES.append(line)
    print(line)
    return line
