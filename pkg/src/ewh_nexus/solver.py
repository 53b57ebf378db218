"""Continuous conic solves (Clarabel interior point) behind the program IR."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import clarabel
import numpy as np
import scipy.sparse as sp

from .program import ConicProgram

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration-limit"

_STATUS = {
    "Solved": OPTIMAL,
    "AlmostSolved": OPTIMAL,
    "PrimalInfeasible": INFEASIBLE,
    "AlmostPrimalInfeasible": INFEASIBLE,
    "DualInfeasible": UNBOUNDED,
    "AlmostDualInfeasible": UNBOUNDED,
}


class SolveError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    feasibility_tol: float = 1e-6
    mip_gap: float = 1e-4
    mip_abs_gap: float = 1e-7
    int_tol: float = 1e-5
    active_tol: float = 1e-6
    time_limit_s: float = math.inf
    node_limit: int = 100_000
    branching: str = "most-fractional"
    dive: str = "nearest"  # "nearest": follow the rounding of the branched value; "down": zero branch first
    rounding: bool = False  # try rounded assignments at the start of every dive
    ipm_tol: float = 1e-9
    ipm_max_iter: int = 200
    dump_dir: Path | None = None

    def __post_init__(self) -> None:
        if min(self.feasibility_tol, self.mip_gap, self.int_tol, self.active_tol, self.ipm_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if self.branching != "most-fractional":
            raise ValueError(f"unsupported branching rule '{self.branching}'")
        if self.dive not in ("nearest", "down"):
            raise ValueError(f"unsupported dive order '{self.dive}'")


@dataclass
class Solution:
    status: str
    x: np.ndarray | None
    objective: float
    row_slack: np.ndarray | None = None
    cone_slack: np.ndarray | None = None
    solve_time: float = 0.0
    iterations: int = 0
    nodes: int = 0
    bound: float = -math.inf
    binaries: dict[str, int] | None = None
    info: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    def slacks(self, prog: ConicProgram) -> dict[str, float]:
        """Inequality slack per tag (rows then cones)."""
        out = {}
        for tag, eq, s in zip(prog.row_tags, prog.is_eq, self.row_slack):
            if not eq:
                out[tag] = float(s)
        out.update(zip(prog.cone_tags, map(float, self.cone_slack)))
        return out


# statuses worth a second attempt with static regularization switched on
_RETRY = {"NumericalError", "InsufficientProgress", "MaxIterations"}


def _settings(cfg: SolverConfig, time_left: float = math.inf, regularize: bool = False) -> clarabel.DefaultSettings:
    s = clarabel.DefaultSettings()
    s.verbose = False
    # static regularization biases iterates on the degenerate faces these
    # programs have (relaxation values above the true optimum were observed)
    s.static_regularization_enable = regularize
    s.tol_gap_abs = cfg.ipm_tol
    s.tol_gap_rel = cfg.ipm_tol
    s.tol_feas = cfg.ipm_tol
    s.max_iter = cfg.ipm_max_iter
    if math.isfinite(time_left):
        s.time_limit = max(time_left, 1e-3)
    return s


def _standard_form(prog: ConicProgram, lb: np.ndarray, ub: np.ndarray):
    """Clarabel data ``A x + s = b`` with the fixed columns eliminated.

    Returns ``None`` when a row becomes constant and violated.
    """
    fixed = lb == ub
    free = np.flatnonzero(~fixed)
    fidx = np.flatnonzero(fixed)
    xf = lb[fidx]
    A = prog.A.tocsc()
    Af, Ar = A[:, fidx], A[:, free]
    rhs = prog.rhs - Af @ xf
    Ar = Ar.tocsr()
    counts = np.diff(Ar.indptr)
    empty = counts == 0
    if np.any(empty):
        r = rhs[empty]
        eq = prog.is_eq[empty]
        if np.any(eq & (np.abs(r) > 1e-9)) or np.any(~eq & (r < -1e-9)):
            return None
    eq_rows = np.flatnonzero(prog.is_eq & ~empty)
    le_rows = np.flatnonzero(~prog.is_eq & ~empty)

    lbf, ubf = lb[free], ub[free]
    up = np.flatnonzero(np.isfinite(ubf))
    lo = np.flatnonzero(np.isfinite(lbf))
    nfree = len(free)
    I_up = sp.csr_matrix((np.ones(len(up)), (np.arange(len(up)), up)), shape=(len(up), nfree))
    I_lo = sp.csr_matrix((-np.ones(len(lo)), (np.arange(len(lo)), lo)), shape=(len(lo), nfree))

    G = prog.G.tocsc()
    Gr = G[:, free]
    h = prog.h + G[:, fidx] @ xf

    blocks = [Ar[eq_rows], Ar[le_rows], I_up, I_lo, -Gr]
    bvec = np.concatenate([rhs[eq_rows], rhs[le_rows], ubf[up], -lbf[lo], h])
    cones = []
    if len(eq_rows):
        cones.append(clarabel.ZeroConeT(len(eq_rows)))
    n_nonneg = len(le_rows) + len(up) + len(lo)
    if n_nonneg:
        cones.append(clarabel.NonnegativeConeT(n_nonneg))
    for k in range(prog.n_cones):
        cones.append(clarabel.SecondOrderConeT(int(prog.cone_ptr[k + 1] - prog.cone_ptr[k])))
    Amat = sp.vstack(blocks, format="csc")
    q = prog.c[free]
    const = float(prog.c[fidx] @ xf) + prog.c0
    return free, fidx, xf, Amat, bvec, cones, q, const


def solve_bounds(
    prog: ConicProgram,
    lb: np.ndarray,
    ub: np.ndarray,
    cfg: SolverConfig,
    time_left: float = math.inf,
) -> Solution:
    """Solve the continuous program with the given variable bounds (binaries relaxed)."""
    t0 = time.perf_counter()
    if np.any(lb > ub):
        return Solution(INFEASIBLE, None, math.inf, solve_time=time.perf_counter() - t0)
    form = _standard_form(prog, lb, ub)
    if form is None:
        return Solution(INFEASIBLE, None, math.inf, solve_time=time.perf_counter() - t0)
    free, fidx, xf, Amat, bvec, cones, q, const = form
    n = len(free)
    x = np.empty(prog.n)
    x[fidx] = xf
    if n == 0:
        iters = 0
        status = INFEASIBLE if prog.violations(x, cfg.feasibility_tol) else OPTIMAL
    else:
        P = sp.csc_matrix((n, n))
        res = clarabel.DefaultSolver(P, q, Amat, bvec, cones, _settings(cfg, time_left)).solve()
        iters = res.iterations
        if str(res.status) in _RETRY:
            left = time_left - (time.perf_counter() - t0)
            if left > 0:
                res = clarabel.DefaultSolver(P, q, Amat, bvec, cones, _settings(cfg, left, True)).solve()
                iters += res.iterations
        status = _STATUS.get(str(res.status), ITERATION_LIMIT)
        x[free] = np.asarray(res.x)
    elapsed = time.perf_counter() - t0
    if status in (INFEASIBLE, UNBOUNDED):
        return Solution(status, None, math.inf if status == INFEASIBLE else -math.inf,
                        solve_time=elapsed, iterations=iters)
    obj = float(prog.c @ x + prog.c0)
    return Solution(
        status,
        x,
        obj,
        row_slack=prog.row_slack(x),
        cone_slack=prog.cone_slack(x),
        solve_time=elapsed,
        iterations=iters,
        bound=obj if status == OPTIMAL else -math.inf,
    )


def solve_continuous(prog: ConicProgram, cfg: SolverConfig | None = None) -> Solution:
    """Solve ``prog`` with every binary relaxed to ``[0, 1]``."""
    cfg = cfg or SolverConfig()
    if cfg.dump_dir is not None:
        dump_cbf(prog, cfg.dump_dir)
    return solve_bounds(prog, prog.lb, prog.ub, cfg, cfg.time_limit_s)


def get_active_set(sol: Solution, prog: ConicProgram, tol: float = 1e-6) -> set[str]:
    """Tags of inequality rows and cones whose slack is within ``tol`` (row-norm scaled)."""
    if not sol.optimal:
        raise SolveError(f"active set requested for a {sol.status} solution")
    row_norm = np.sqrt(np.asarray(prog.A.multiply(prog.A).sum(axis=1)).ravel())
    scale = np.maximum(1.0, row_norm)
    active = {
        tag
        for tag, eq, s, sc in zip(prog.row_tags, prog.is_eq, sol.row_slack, scale)
        if not eq and s <= tol * sc
    }
    if prog.n_cones:
        head = prog.G[prog.cone_ptr[:-1]]
        gscale = np.maximum(1.0, np.sqrt(np.asarray(head.multiply(head).sum(axis=1)).ravel()))
        active |= {t for t, s, sc in zip(prog.cone_tags, sol.cone_slack, gscale) if s <= tol * sc}
    return active


def is_feasible(prog: ConicProgram, x: np.ndarray, tol: float) -> bool:
    return not prog.violations(x, tol)


_dump_counter = 0


def dump_cbf(prog: ConicProgram, directory: Path | str) -> Path:
    """Write ``prog`` in Conic Benchmark Format (one file per call)."""
    global _dump_counter
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    _dump_counter += 1
    path = directory / f"prog_{_dump_counter:05d}.cbf"
    path.write_text(to_cbf(prog))
    return path


def to_cbf(prog: ConicProgram) -> str:
    """CBF v3 text: free variables, rows ``A x - b`` in L=/L-, cones ``G x + h`` in Q."""
    lines = ["VER", "3", "", "OBJSENSE", "MIN", ""]
    lines += ["VAR", f"{prog.n} 1", f"F {prog.n}", ""]
    if prog.n_binaries:
        lines += ["INT", str(prog.n_binaries)] + [str(i) for i in prog.binary_indices] + [""]
    blocks: list[tuple[str, int]] = []
    coo_rows: list[tuple[int, int, float]] = []
    consts: list[tuple[int, float]] = []
    r = 0

    def add_linear(mat: sp.csr_matrix, b: Iterable[float], sign: float, kind: str) -> None:
        nonlocal r
        m = mat.tocoo()
        coo_rows.extend((r + i, j, sign * v) for i, j, v in zip(m.row, m.col, m.data))
        for i, bi in enumerate(b):
            if bi != 0:
                consts.append((r + i, -sign * bi))
        blocks.append((kind, mat.shape[0]))
        r += mat.shape[0]

    eq = np.flatnonzero(prog.is_eq)
    le = np.flatnonzero(~prog.is_eq)
    if len(eq):
        add_linear(prog.A[eq], prog.rhs[eq], 1.0, "L=")
    if len(le):
        add_linear(prog.A[le], prog.rhs[le], 1.0, "L-")
    n = prog.n
    for bounds, sign, kind in ((prog.ub, 1.0, "L-"), (prog.lb, -1.0, "L-")):
        idx = np.flatnonzero(np.isfinite(bounds))
        if len(idx):
            mat = sp.csr_matrix((np.ones(len(idx)), (np.arange(len(idx)), idx)), shape=(len(idx), n))
            add_linear(mat, bounds[idx], sign, kind)
    for k in range(prog.n_cones):
        a, b = prog.cone_ptr[k], prog.cone_ptr[k + 1]
        add_linear(prog.G[a:b], -prog.h[a:b], 1.0, "Q")
    lines += ["CON", f"{r} {len(blocks)}"] + [f"{k} {m}" for k, m in blocks] + [""]
    nz = [(j, float(v)) for j, v in enumerate(prog.c) if v != 0]
    if nz:
        lines += ["OBJACOORD", str(len(nz))] + [f"{j} {v!r}" for j, v in nz] + [""]
    if prog.c0:
        lines += ["OBJBCOORD", repr(float(prog.c0)), ""]
    if coo_rows:
        lines += ["ACOORD", str(len(coo_rows))] + [f"{i} {j} {v!r}" for i, j, v in coo_rows] + [""]
    if consts:
        lines += ["BCOORD", str(len(consts))] + [f"{i} {v!r}" for i, v in consts] + [""]
    return "\n".join(lines)
