import numpy as np

from ewh_nexus.program import ConicProgram


def point(prog: ConicProgram, values: dict[str, float]) -> np.ndarray:
    x = np.zeros(prog.n)
    for name, v in values.items():
        x[prog.index(name)] = v
    return x


def row_slack(prog: ConicProgram, tag: str, values: dict[str, float]) -> float:
    return float(prog.row_slack(point(prog, values))[prog.row(tag)])


def cone_slack(prog: ConicProgram, tag: str, values: dict[str, float]) -> float:
    return float(prog.cone_slack(point(prog, values))[prog.cone(tag)])


def pinned(prog: ConicProgram, values: dict[str, float]) -> ConicProgram:
    return prog.fix({prog.index(k): v for k, v in values.items()})


# one line per acceptance criterion, echoed in the terminal summary by conftest
ACCEPTANCE: list[str] = []


def record(criterion: int, ok: bool, detail: str) -> None:
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} ({detail})"
    ACCEPTANCE.append(line)
    print(line, flush=True)
