"""Solver-agnostic conic program representation.

A :class:`ConicProgram` minimizes ``c @ x + c0`` subject to

* tagged linear rows ``a @ x == b`` or ``a @ x <= b``,
* tagged second-order cones ``||G[1:] @ x + h[1:]||_2 <= G[0] @ x + h[0]``,
* variable bounds ``lb <= x <= ub`` (bounds are never tagged or pruned),
* integrality of the variables flagged binary.

Programs are immutable once built.  :class:`ProgramBuilder` offers an
expression-based API for the constraint builders.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp


class ProgramError(ValueError):
    pass


class Expr:
    """Affine expression ``sum(coef * x[idx]) + const``."""

    __slots__ = ("terms", "const")

    def __init__(self, terms: Mapping[int, float] | None = None, const: float = 0.0):
        self.terms: dict[int, float] = dict(terms) if terms else {}
        self.const = float(const)

    @classmethod
    def lift(cls, value: "Expr | float") -> "Expr":
        return value if isinstance(value, Expr) else cls(const=value)

    @property
    def index(self) -> int:
        (idx,) = self.terms
        return idx

    def __add__(self, other: "Expr | float") -> "Expr":
        other = Expr.lift(other)
        terms = dict(self.terms)
        for k, v in other.terms.items():
            terms[k] = terms.get(k, 0.0) + v
        return Expr(terms, self.const + other.const)

    __radd__ = __add__

    def __neg__(self) -> "Expr":
        return Expr({k: -v for k, v in self.terms.items()}, -self.const)

    def __sub__(self, other: "Expr | float") -> "Expr":
        return self + (-Expr.lift(other))

    def __rsub__(self, other: "Expr | float") -> "Expr":
        return Expr.lift(other) - self

    def __mul__(self, k: float) -> "Expr":
        return Expr({i: k * v for i, v in self.terms.items()}, k * self.const)

    __rmul__ = __mul__

    def value(self, x: np.ndarray) -> float:
        return self.const + sum(v * x[i] for i, v in self.terms.items())

    def __repr__(self) -> str:
        return f"Expr({self.terms}, {self.const})"


def esum(items: Iterable["Expr | float"]) -> Expr:
    total = Expr()
    for it in items:
        total = total + it
    return total


@dataclass(frozen=True, eq=False)
class ConicProgram:
    names: tuple[str, ...]
    lb: np.ndarray
    ub: np.ndarray
    binary: np.ndarray
    c: np.ndarray
    c0: float
    A: sp.csr_matrix
    rhs: np.ndarray
    is_eq: np.ndarray
    row_tags: tuple[str, ...]
    G: sp.csr_matrix
    h: np.ndarray
    cone_ptr: np.ndarray
    cone_tags: tuple[str, ...]
    # set on restricted programs: how to rebuild a vector of the parent program
    parent_size: int | None = None
    keep: np.ndarray | None = None
    fixed_index: np.ndarray | None = None
    fixed_value: np.ndarray | None = None

    @property
    def n(self) -> int:
        return len(self.names)

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    @property
    def n_cones(self) -> int:
        return len(self.cone_tags)

    @property
    def binary_indices(self) -> np.ndarray:
        return np.flatnonzero(self.binary)

    @property
    def n_binaries(self) -> int:
        return int(self.binary.sum())

    @property
    def tags(self) -> tuple[str, ...]:
        return self.row_tags + self.cone_tags

    @property
    def inequality_tags(self) -> tuple[str, ...]:
        return tuple(t for t, eq in zip(self.row_tags, self.is_eq) if not eq) + self.cone_tags

    def index(self, name: str) -> int:
        try:
            return self._name_index()[name]
        except KeyError:
            raise ProgramError(f"unknown variable '{name}'") from None

    def _name_index(self) -> dict[str, int]:
        cache = self.__dict__.get("_names_cache")
        if cache is None:
            cache = {n: i for i, n in enumerate(self.names)}
            object.__setattr__(self, "_names_cache", cache)
        return cache

    def row(self, tag: str) -> int:
        cache = self.__dict__.get("_rows_cache")
        if cache is None:
            cache = {t: i for i, t in enumerate(self.row_tags)}
            object.__setattr__(self, "_rows_cache", cache)
        return cache[tag]

    def cone(self, tag: str) -> int:
        cache = self.__dict__.get("_cones_cache")
        if cache is None:
            cache = {t: i for i, t in enumerate(self.cone_tags)}
            object.__setattr__(self, "_cones_cache", cache)
        return cache[tag]

    def value(self, x: np.ndarray, name: str) -> float:
        return float(x[self.index(name)])

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x + self.c0)

    def lift(self, x: np.ndarray) -> np.ndarray:
        """Map a solution of this (restricted) program to its parent program."""
        if self.parent_size is None:
            return np.asarray(x, dtype=float)
        full = np.empty(self.parent_size)
        full[self.keep] = x
        full[self.fixed_index] = self.fixed_value
        return full

    # -- evaluation -----------------------------------------------------

    def row_activity(self, x: np.ndarray) -> np.ndarray:
        return self.A @ x

    def row_slack(self, x: np.ndarray) -> np.ndarray:
        """``rhs - a @ x`` for every linear row (equalities included)."""
        return self.rhs - self.A @ x

    def cone_slack(self, x: np.ndarray) -> np.ndarray:
        """``(G[0] x + h[0]) - ||G[1:] x + h[1:]||`` per cone."""
        if self.n_cones == 0:
            return np.zeros(0)
        v = self.G @ x + self.h
        heads = v[self.cone_ptr[:-1]]
        sq = v**2
        sq[self.cone_ptr[:-1]] = 0.0
        norms = np.sqrt(np.add.reduceat(sq, self.cone_ptr[:-1]))
        return heads - norms

    def row_scale(self, x: np.ndarray) -> np.ndarray:
        """Magnitude of the terms in each linear row, floored at one."""
        absA = abs(self.A)
        return np.maximum(1.0, np.maximum(np.abs(self.rhs), absA @ np.abs(x)))

    def cone_scale(self, x: np.ndarray) -> np.ndarray:
        if self.n_cones == 0:
            return np.zeros(0)
        v = np.abs(self.G @ x + self.h)
        return np.maximum(1.0, np.maximum.reduceat(v, self.cone_ptr[:-1]))

    def violations(self, x: np.ndarray, tol: float) -> list[str]:
        """Tags (and bound names) violated by more than ``tol`` (scaled by row magnitude)."""
        out = []
        slack = self.row_slack(x)
        scale = self.row_scale(x)
        bad_eq = self.is_eq & (np.abs(slack) > tol * scale)
        bad_le = ~self.is_eq & (slack < -tol * scale)
        out += [self.row_tags[i] for i in np.flatnonzero(bad_eq | bad_le)]
        cs = self.cone_slack(x)
        out += [self.cone_tags[i] for i in np.flatnonzero(cs < -tol * self.cone_scale(x))]
        bscale = np.maximum(1.0, np.abs(x))
        lo = np.isfinite(self.lb) & (x < self.lb - tol * bscale)
        hi = np.isfinite(self.ub) & (x > self.ub + tol * bscale)
        out += [f"bound:{self.names[i]}" for i in np.flatnonzero(lo | hi)]
        return out

    # -- derived programs ----------------------------------------------

    def with_bounds(self, lb: np.ndarray, ub: np.ndarray) -> "ConicProgram":
        return _replace(self, lb=np.asarray(lb, dtype=float), ub=np.asarray(ub, dtype=float))

    def fix(self, assignment: Mapping[int, float]) -> "ConicProgram":
        """Copy with the given variables pinned through their bounds."""
        lb, ub = self.lb.copy(), self.ub.copy()
        for i, v in assignment.items():
            lb[i] = ub[i] = v
        return self.with_bounds(lb, ub)

    def relaxed(self) -> "ConicProgram":
        """Copy with integrality dropped."""
        return _replace(self, binary=np.zeros(self.n, dtype=bool))

    def digest(self) -> str:
        """Stable content hash; equal for byte-identical programs."""
        hsh = hashlib.sha256()
        for arr in (self.lb, self.ub, self.binary, self.c, self.rhs, self.is_eq, self.h, self.cone_ptr):
            hsh.update(np.ascontiguousarray(arr).tobytes())
        for m in (self.A, self.G):
            m = m.tocsr()
            for arr in (m.indptr, m.indices, m.data):
                hsh.update(np.ascontiguousarray(arr).tobytes())
        hsh.update(repr(self.c0).encode())
        for seq in (self.names, self.row_tags, self.cone_tags):
            hsh.update("\x00".join(seq).encode())
        return hsh.hexdigest()

    def summary(self) -> dict[str, int]:
        return {
            "variables": self.n,
            "binaries": self.n_binaries,
            "equalities": int(self.is_eq.sum()),
            "inequalities": int((~self.is_eq).sum()),
            "cones": self.n_cones,
        }


def _replace(prog: ConicProgram, **changes) -> ConicProgram:
    data = {k: v for k, v in prog.__dict__.items() if not k.startswith("_")}
    data.update(changes)
    return ConicProgram(**data)


class ProgramBuilder:
    """Incrementally declares variables and tagged constraints."""

    def __init__(self) -> None:
        self._names: list[str] = []
        self._index: dict[str, int] = {}
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._bin: list[bool] = []
        self._rows: list[tuple[dict[int, float], bool, float]] = []
        self._row_tags: list[str] = []
        self._cones: list[list[Expr]] = []
        self._cone_tags: list[str] = []
        self._tags: set[str] = set()
        self._obj = Expr()

    def var(self, name: str, lb: float = -math.inf, ub: float = math.inf, binary: bool = False) -> Expr:
        if name in self._index:
            raise ProgramError(f"duplicate variable '{name}'")
        if binary:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        if lb > ub:
            raise ProgramError(f"variable '{name}' has lb {lb} > ub {ub}")
        idx = len(self._names)
        self._names.append(name)
        self._index[name] = idx
        self._lb.append(float(lb))
        self._ub.append(float(ub))
        self._bin.append(bool(binary))
        return Expr({idx: 1.0})

    def __getitem__(self, name: str) -> Expr:
        return Expr({self._index[name]: 1.0})

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def _claim(self, tag: str) -> None:
        if tag in self._tags:
            raise ProgramError(f"duplicate constraint tag '{tag}'")
        self._tags.add(tag)

    def _row(self, lhs: Expr, rhs: "Expr | float", eq: bool, tag: str) -> str:
        self._claim(tag)
        e = lhs - rhs
        terms = {k: v for k, v in e.terms.items() if v != 0.0}
        self._rows.append((terms, eq, -e.const))
        self._row_tags.append(tag)
        return tag

    def eq(self, lhs: Expr, rhs: "Expr | float", tag: str) -> str:
        return self._row(lhs, rhs, True, tag)

    def le(self, lhs: "Expr | float", rhs: "Expr | float", tag: str) -> str:
        return self._row(Expr.lift(lhs), rhs, False, tag)

    def ge(self, lhs: "Expr | float", rhs: "Expr | float", tag: str) -> str:
        return self._row(Expr.lift(rhs), lhs, False, tag)

    def soc(self, bound: "Expr | float", members: Sequence["Expr | float"], tag: str) -> str:
        """``||members||_2 <= bound``."""
        self._claim(tag)
        self._cones.append([Expr.lift(bound)] + [Expr.lift(m) for m in members])
        self._cone_tags.append(tag)
        return tag

    def rsoc(self, members: Sequence["Expr | float"], u: "Expr | float", w: "Expr | float", tag: str) -> str:
        """``sum(m**2) <= u * w`` with ``u, w >= 0`` as a standard cone."""
        u, w = Expr.lift(u), Expr.lift(w)
        return self.soc(u + w, [2.0 * Expr.lift(m) for m in members] + [u - w], tag)

    def minimize(self, objective: Expr) -> None:
        self._obj = objective

    def build(self) -> ConicProgram:
        n = len(self._names)
        indptr, indices, data = [0], [], []
        for terms, _, _ in self._rows:
            for k in sorted(terms):
                indices.append(k)
                data.append(terms[k])
            indptr.append(len(indices))
        A = sp.csr_matrix((data, indices, indptr), shape=(len(self._rows), n))
        gptr, gind, gdat, h, cone_ptr = [0], [], [], [], [0]
        for members in self._cones:
            for m in members:
                for k in sorted(m.terms):
                    if m.terms[k] != 0.0:
                        gind.append(k)
                        gdat.append(m.terms[k])
                gptr.append(len(gind))
                h.append(m.const)
            cone_ptr.append(len(h))
        G = sp.csr_matrix((gdat, gind, gptr), shape=(len(h), n))
        c = np.zeros(n)
        for k, v in self._obj.terms.items():
            c[k] = v
        return ConicProgram(
            names=tuple(self._names),
            lb=np.array(self._lb, dtype=float),
            ub=np.array(self._ub, dtype=float),
            binary=np.array(self._bin, dtype=bool),
            c=c,
            c0=self._obj.const,
            A=A,
            rhs=np.array([r[2] for r in self._rows], dtype=float),
            is_eq=np.array([r[1] for r in self._rows], dtype=bool),
            row_tags=tuple(self._row_tags),
            G=G,
            h=np.array(h, dtype=float),
            cone_ptr=np.array(cone_ptr, dtype=np.int64),
            cone_tags=tuple(self._cone_tags),
        )


def restrict(
    prog: ConicProgram,
    assignment: Mapping[int, float] | Mapping[str, float],
    active_tags: Iterable[str],
) -> ConicProgram:
    """Fix binaries to constants and drop inequalities outside ``active_tags``.

    Equalities and variable bounds are always kept.  The fixed columns are
    removed; the result's :meth:`ConicProgram.lift` restores full vectors.
    """
    by_index = {}
    for key, val in assignment.items():
        by_index[prog.index(key) if isinstance(key, str) else int(key)] = float(val)
    bins = set(prog.binary_indices.tolist())
    missing = bins - set(by_index)
    if missing:
        raise ProgramError(f"assignment misses binaries {sorted(prog.names[i] for i in missing)[:5]}")
    active = set(active_tags)
    unknown = active - set(prog.tags)
    if unknown:
        raise ProgramError(f"unknown constraint tags {sorted(unknown)[:5]}")

    fixed_idx = np.array(sorted(by_index), dtype=np.int64)
    fixed_val = np.array([by_index[i] for i in fixed_idx])
    keep_mask = np.ones(prog.n, dtype=bool)
    keep_mask[fixed_idx] = False
    keep = np.flatnonzero(keep_mask)

    row_keep = prog.is_eq | np.array([t in active for t in prog.row_tags], dtype=bool)
    A_fixed = prog.A[:, fixed_idx] @ fixed_val if len(fixed_idx) else np.zeros(prog.n_rows)
    A = prog.A[:, keep].tocsr()
    rhs = prog.rhs - A_fixed
    # rows left without variables are checked here and dropped
    empty = np.diff(A.indptr) == 0
    for i in np.flatnonzero(empty & row_keep):
        ok = abs(rhs[i]) <= 1e-9 if prog.is_eq[i] else rhs[i] >= -1e-9
        if not ok:
            row_keep[i] = True
            break
        row_keep[i] = False
    rows = np.flatnonzero(row_keep)

    cone_sel = [k for k, t in enumerate(prog.cone_tags) if t in active]
    if cone_sel:
        members = np.concatenate([np.arange(prog.cone_ptr[k], prog.cone_ptr[k + 1]) for k in cone_sel])
        sizes = [prog.cone_ptr[k + 1] - prog.cone_ptr[k] for k in cone_sel]
    else:
        members = np.zeros(0, dtype=np.int64)
        sizes = []
    Gsel = prog.G[members]
    h = prog.h[members] + (Gsel[:, fixed_idx] @ fixed_val if len(fixed_idx) else 0.0)
    cone_ptr = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)

    base_size = prog.parent_size if prog.parent_size is not None else prog.n
    if prog.parent_size is not None:
        # compose with an earlier restriction
        parent_keep = prog.keep[keep]
        f_idx = np.concatenate([prog.fixed_index, prog.keep[fixed_idx]])
        f_val = np.concatenate([prog.fixed_value, fixed_val])
    else:
        parent_keep, f_idx, f_val = keep, fixed_idx, fixed_val

    return ConicProgram(
        names=tuple(prog.names[i] for i in keep),
        lb=prog.lb[keep],
        ub=prog.ub[keep],
        binary=np.zeros(len(keep), dtype=bool),
        c=prog.c[keep],
        c0=prog.c0 + float(prog.c[fixed_idx] @ fixed_val),
        A=A[rows],
        rhs=rhs[rows],
        is_eq=prog.is_eq[rows],
        row_tags=tuple(prog.row_tags[i] for i in rows),
        G=Gsel[:, keep].tocsr(),
        h=np.asarray(h, dtype=float),
        cone_ptr=cone_ptr,
        cone_tags=tuple(prog.cone_tags[k] for k in cone_sel),
        parent_size=base_size,
        keep=parent_keep,
        fixed_index=f_idx,
        fixed_value=f_val,
    )
