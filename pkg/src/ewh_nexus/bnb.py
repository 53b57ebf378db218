"""Branch-and-bound over the conic relaxation.

Depth-first dives on the most fractional binary (lowest index on ties).  By
default a dive follows the rounding of the branched value (near-half values
take the zero branch); the other child is queued.  When a dive ends, the open node with the best bound is resumed.  Fixed
binaries are eliminated from each node relaxation before it is handed to the
conic solver.  An optional rounding heuristic at each dive start can supply
incumbents early.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .program import ConicProgram
from .solver import (
    INFEASIBLE,
    ITERATION_LIMIT,
    OPTIMAL,
    UNBOUNDED,
    Solution,
    SolverConfig,
    dump_cbf,
    solve_bounds,
    solve_continuous,
)

log = logging.getLogger(__name__)


# values this close to one half count as ties and take the zero branch first
_HALF_BAND = 0.1


@dataclass(order=True)
class _Node:
    bound: float
    seq: int
    lb: np.ndarray = field(compare=False)
    ub: np.ndarray = field(compare=False)
    depth: int = field(compare=False, default=0)
    dive_start: bool = field(compare=False, default=True)


def _most_fractional(x: np.ndarray, bins: np.ndarray, int_tol: float) -> int | None:
    frac = np.abs(x[bins] - np.round(x[bins]))
    k = int(np.argmax(frac))  # first maximum -> lowest variable index
    if frac[k] <= int_tol:
        return None
    return int(bins[k])


def solve_micp(prog: ConicProgram, cfg: SolverConfig | None = None) -> Solution:
    """Minimize ``prog`` with its binaries integral.

    Returns an :class:`~ewh_nexus.solver.Solution` whose ``binaries`` maps
    each binary name to 0/1, and whose ``bound`` is the proven lower bound.
    """
    cfg = cfg or SolverConfig()
    if prog.n_binaries == 0:
        return solve_continuous(prog, cfg)
    if cfg.dump_dir is not None:
        dump_cbf(prog, cfg.dump_dir)

    t0 = time.perf_counter()
    deadline = t0 + cfg.time_limit_s
    bins = prog.binary_indices
    groups = _choice_groups(prog)
    counter = itertools.count()
    inc: Solution | None = None
    inc_obj = math.inf
    nodes = 0
    heap: list[_Node] = []

    def cutoff() -> float:
        if inc is None:
            return math.inf
        return inc_obj - max(cfg.mip_abs_gap, cfg.mip_gap * abs(inc_obj))

    def finish(status: str, bound: float) -> Solution:
        elapsed = time.perf_counter() - t0
        if inc is None:
            return Solution(status, None, -math.inf if status == UNBOUNDED else math.inf,
                            solve_time=elapsed, nodes=nodes, bound=bound)
        inc.status = status
        inc.solve_time = elapsed
        inc.nodes = nodes
        inc.bound = min(bound, inc_obj)
        return inc

    lb0 = prog.lb.copy()
    ub0 = prog.ub.copy()
    lb0[bins] = np.maximum(lb0[bins], 0.0)
    ub0[bins] = np.minimum(ub0[bins], 1.0)
    current: _Node | None = _Node(-math.inf, next(counter), lb0, ub0)

    while True:
        if current is None:
            while heap and heap[0].bound >= cutoff():
                heapq.heappop(heap)
            if not heap:
                break
            current = heapq.heappop(heap)
        if nodes >= cfg.node_limit or time.perf_counter() > deadline:
            heapq.heappush(heap, current)
            return finish(ITERATION_LIMIT, min(n.bound for n in heap))

        node, current = current, None
        sol = solve_bounds(prog, node.lb, node.ub, cfg, deadline - time.perf_counter())
        nodes += 1
        if sol.status == UNBOUNDED and nodes == 1:
            return finish(UNBOUNDED, -math.inf)
        if sol.status == ITERATION_LIMIT:
            if time.perf_counter() > deadline:
                heapq.heappush(heap, node)
                return finish(ITERATION_LIMIT, min(n.bound for n in heap))
            continue  # numerically stuck node: dropped
        if sol.status != OPTIMAL or sol.objective >= cutoff():
            continue

        j = _most_fractional(sol.x, bins, cfg.int_tol)
        if j is None:
            cand = _polish(prog, node, sol, bins, cfg, deadline)
            if cand.objective < inc_obj:
                inc, inc_obj = cand, cand.objective
                log.debug("node %d depth %d: incumbent %.10g", nodes, node.depth, inc_obj)
            continue
        if cfg.rounding and node.dive_start:
            for vals in _roundings(sol.x, bins, groups, cfg.int_tol):
                cand = _try_assignment(prog, node, vals, bins, cfg, deadline)
                if cand is not None and cand.objective < cutoff():
                    inc, inc_obj = cand, cand.objective
            if sol.objective >= cutoff():
                continue

        down_ub = node.ub.copy()
        down_ub[j] = 0.0
        up_lb = node.lb.copy()
        up_lb[j] = 1.0
        down = _Node(sol.objective, next(counter), node.lb, down_ub, node.depth + 1)
        up = _Node(sol.objective, next(counter), up_lb, node.ub, node.depth + 1)
        if cfg.dive == "down" or sol.x[j] <= 0.5 + _HALF_BAND:
            current, other = down, up
        else:
            current, other = up, down
        current.dive_start = False
        other.dive_start = True
        heapq.heappush(heap, other)

    if inc is None:
        return finish(INFEASIBLE, math.inf)
    return finish(OPTIMAL, inc_obj)


def _choice_groups(prog: ConicProgram) -> list[tuple[np.ndarray, bool]]:
    """Rows ``sum(b) <= 1`` / ``sum(b) == 1`` over binaries only, with their equality flag."""
    is_bin = np.zeros(prog.n, dtype=bool)
    is_bin[prog.binary_indices] = True
    A = prog.A.tocsr()
    groups = []
    for r in range(A.shape[0]):
        cols = A.indices[A.indptr[r]:A.indptr[r + 1]]
        vals = A.data[A.indptr[r]:A.indptr[r + 1]]
        if len(cols) > 1 and prog.rhs[r] == 1.0 and np.all(vals == 1.0) and np.all(is_bin[cols]):
            groups.append((np.sort(cols), bool(prog.is_eq[r])))
    return groups


def _roundings(x: np.ndarray, bins: np.ndarray, groups, int_tol: float):
    """Candidate assignments: round half up, then round any positive value up.

    Inside a choice group only the largest member (lowest index on ties) may be
    one, so group rows stay satisfied.
    """
    for thresh in (0.5, int_tol):
        vals = np.zeros(len(x))
        vals[bins] = x[bins] >= thresh
        for cols, is_eq in groups:
            k = cols[np.argmax(x[cols])]
            vals[cols] = 0.0
            if is_eq or x[k] >= thresh:
                vals[k] = 1.0
        yield vals[bins]


def _try_assignment(
    prog: ConicProgram, node: _Node, vals: np.ndarray, bins: np.ndarray, cfg: SolverConfig, deadline: float
) -> Solution | None:
    if np.any(vals < node.lb[bins]) or np.any(vals > node.ub[bins]):
        return None
    lb, ub = node.lb.copy(), node.ub.copy()
    lb[bins] = ub[bins] = vals
    sol = solve_bounds(prog, lb, ub, cfg, deadline - time.perf_counter())
    if sol.status != OPTIMAL:
        return None
    sol.binaries = {prog.names[i]: int(v) for i, v in zip(bins, vals)}
    return sol


def _polish(
    prog: ConicProgram, node: _Node, sol: Solution, bins: np.ndarray, cfg: SolverConfig, deadline: float
) -> Solution:
    """Re-solve with the (near-)integral binaries pinned exactly."""
    vals = np.round(sol.x[bins])
    lb, ub = node.lb.copy(), node.ub.copy()
    lb[bins] = ub[bins] = vals
    fixed = solve_bounds(prog, lb, ub, cfg, deadline - time.perf_counter())
    best = fixed if fixed.status == OPTIMAL else sol
    if best is sol:
        best.x = best.x.copy()
        best.x[bins] = vals
    best.binaries = {prog.names[i]: int(v) for i, v in zip(bins, vals)}
    return best


def enumerate_binaries(prog: ConicProgram, cfg: SolverConfig | None = None) -> Solution:
    """Exhaustive reference solver: every binary assignment solved continuously.

    Ties are broken toward the lexicographically smallest assignment.
    """
    cfg = cfg or SolverConfig()
    bins = prog.binary_indices
    best: Solution | None = None
    for combo in itertools.product((0.0, 1.0), repeat=len(bins)):
        fixed = prog.fix(dict(zip(bins.tolist(), combo)))
        sol = solve_continuous(fixed, cfg)
        if sol.status != OPTIMAL:
            continue
        if best is None or sol.objective < best.objective - 1e-9 * max(1.0, abs(best.objective)):
            best = sol
            best.binaries = {prog.names[i]: int(v) for i, v in zip(bins, combo)}
    if best is None:
        return Solution(INFEASIBLE, None, math.inf)
    return best
