"""MILP formulations of the VMCP.

Four builders translate an :class:`~vmcp.model.Instance` into a
:class:`MixedIntegerProgram`:

* :func:`build_proposed` -- the compact 2-index formulation (x, y, z).
* :func:`build_extended` -- the same with new VMs, migration budget,
  per-server VM caps and forbidden pairs.
* :func:`build_speitkamp` -- 3-index binary baseline, one column per VM.
* :func:`build_mazumdar` -- 3-index migration-flow baseline.

Column and row names are structured (``x[i,k]``, ``cap[k,r]`` ...) and kept by
an :class:`IndexMap` without materialising strings, so the baselines can be
built at the sizes used in the formulation comparison.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

from .model import Instance, Solution, upper_bound_v, upper_bound_v_new

LE, EQ, GE = "<", "=", ">"
_SENSES = (LE, EQ, GE)
_NAME_RE = re.compile(r"^(\w+)(?:\[([0-9,\s]*)\])?$")


class IndexMap:
    """Bijection between structured names such as ``x[2,7]`` and indices.

    Names are grouped into blocks; each block is a dense n-dimensional array of
    consecutive indices.
    """

    def __init__(self):
        self._blocks: dict[str, tuple[int, tuple[int, ...]]] = {}
        self._order: list[str] = []
        self._size = 0

    def add(self, name: str, shape: Sequence[int] | int = ()) -> np.ndarray:
        if name in self._blocks:
            raise ValueError(f"duplicate block {name!r}")
        shape = (shape,) if isinstance(shape, int) else tuple(int(s) for s in shape)
        self._blocks[name] = (self._size, shape)
        self._order.append(name)
        self._size += int(np.prod(shape, dtype=np.int64))
        return self.block(name)

    def block(self, name: str) -> np.ndarray:
        off, shape = self._blocks[name]
        return np.arange(off, off + int(np.prod(shape, dtype=np.int64))).reshape(shape)

    def has_block(self, name: str) -> bool:
        return name in self._blocks

    @property
    def blocks(self) -> list[str]:
        return list(self._order)

    def __len__(self) -> int:
        return self._size

    def index(self, name: str) -> int:
        m = _NAME_RE.match(name.replace(" ", ""))
        if not m or m.group(1) not in self._blocks:
            raise KeyError(name)
        off, shape = self._blocks[m.group(1)]
        idx = tuple(int(t) for t in m.group(2).split(",")) if m.group(2) else ()
        if len(idx) != len(shape) or any(not 0 <= a < s for a, s in zip(idx, shape)):
            raise KeyError(name)
        return off + (int(np.ravel_multi_index(idx, shape)) if shape else 0)

    def name(self, index: int) -> str:
        if not 0 <= index < self._size:
            raise IndexError(index)
        for blk in self._order:
            off, shape = self._blocks[blk]
            size = int(np.prod(shape, dtype=np.int64))
            if index < off + size:
                if not shape:
                    return blk
                idx = np.unravel_index(index - off, shape)
                return f"{blk}[{','.join(str(int(a)) for a in idx)}]"
        raise IndexError(index)  # pragma: no cover

    def names(self) -> Iterable[str]:
        for blk in self._order:
            off, shape = self._blocks[blk]
            if not shape:
                yield blk
                continue
            for idx in np.ndindex(*shape):
                yield f"{blk}[{','.join(map(str, idx))}]"


VariableMap = IndexMap


class Row(NamedTuple):
    """A single sparse linear constraint ``values . x[indices] (sense) rhs``."""

    indices: np.ndarray
    values: np.ndarray
    sense: str
    rhs: float

    @classmethod
    def from_dict(cls, coefs: dict[int, float], sense: str, rhs: float) -> "Row":
        idx = np.fromiter(coefs.keys(), dtype=np.int64, count=len(coefs))
        val = np.fromiter(coefs.values(), dtype=float, count=len(coefs))
        return cls(idx, val, sense, float(rhs))

    def activity(self, x: np.ndarray) -> float:
        idx = np.asarray(self.indices, dtype=np.int64)
        return float(np.asarray(self.values, dtype=float) @ np.asarray(x)[idx])

    def violation(self, x: np.ndarray) -> float:
        act = self.activity(x)
        if self.sense == LE:
            return act - self.rhs
        if self.sense == GE:
            return self.rhs - act
        return abs(act - self.rhs)


@dataclass(frozen=True, eq=False)
class MixedIntegerProgram:
    """``min c.x + constant`` subject to ``A x (sense) rhs`` and ``lb <= x <= ub``."""

    c: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    integer: np.ndarray
    A: sp.csr_matrix
    sense: np.ndarray
    rhs: np.ndarray
    constant: float = 0.0
    columns: IndexMap | None = None
    rows: IndexMap | None = None
    extra_row_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        n = len(self.c)
        if not (len(self.lb) == len(self.ub) == len(self.integer) == n):
            raise ValueError("column arrays must have equal length")
        if self.A.shape != (len(self.rhs), n) or len(self.sense) != len(self.rhs):
            raise ValueError("constraint matrix shape mismatch")
        if np.any(self.lb > self.ub):
            raise ValueError("lower bound exceeds upper bound")
        if not np.isin(self.sense, _SENSES).all():
            raise ValueError("sense must be one of '<', '=', '>'")

    @classmethod
    def from_rows(cls, c, lb, ub, rows: Sequence[Row], integer=None, constant: float = 0.0) -> "MixedIntegerProgram":
        """A small program assembled from explicit rows (no name maps)."""
        c = np.asarray(c, dtype=float)
        n = len(c)
        integer = np.zeros(n, dtype=bool) if integer is None else np.asarray(integer, dtype=bool)
        empty = cls(c, np.asarray(lb, dtype=float), np.asarray(ub, dtype=float), integer,
                    sp.csr_matrix((0, n)), np.array([], dtype="<U1"), np.array([], dtype=float), float(constant))
        return empty.with_rows(list(rows), [f"r{t}" for t in range(len(rows))])

    @property
    def num_cols(self) -> int:
        return len(self.c)

    @property
    def num_rows(self) -> int:
        return len(self.rhs)

    def row_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.where(self.sense == LE, -np.inf, self.rhs)
        hi = np.where(self.sense == GE, np.inf, self.rhs)
        return lo, hi

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x) + self.constant

    def max_violation(self, x: np.ndarray) -> float:
        """Largest violation of any row or bound at ``x`` (0 when feasible)."""
        x = np.asarray(x, dtype=float)
        worst = 0.0
        if self.num_rows:
            act = self.A @ x
            lo, hi = self.row_bounds()
            worst = max(worst, float(np.max(lo - act, initial=0)), float(np.max(act - hi, initial=0)))
        worst = max(worst, float(np.max(self.lb - x, initial=0)), float(np.max(x - self.ub, initial=0)))
        return worst

    def is_feasible(self, x: np.ndarray, tol: float = 1e-6, *, check_integrality: bool = True) -> bool:
        x = np.asarray(x, dtype=float)
        if check_integrality:
            xi = x[self.integer]
            if np.any(np.abs(xi - np.round(xi)) > tol):
                return False
        return self.max_violation(x) <= tol

    def row_name(self, r: int) -> str:
        base = len(self.rows) if self.rows is not None else 0
        if self.rows is not None and r < base:
            return self.rows.name(r)
        j = r - base
        if j < len(self.extra_row_names):
            return self.extra_row_names[j]
        return f"row{r}"

    def col_name(self, j: int) -> str:
        return self.columns.name(j) if self.columns is not None else f"c{j}"

    def with_rows(self, rows: Sequence[Row], names: Sequence[str] | None = None) -> "MixedIntegerProgram":
        if not rows:
            return self
        data, ind, ptr = [], [], [0]
        for r in rows:
            data.append(np.asarray(r.values, dtype=float))
            ind.append(np.asarray(r.indices, dtype=np.int64))
            ptr.append(ptr[-1] + len(r.indices))
        extra = sp.csr_matrix(
            (np.concatenate(data), np.concatenate(ind), np.array(ptr)), shape=(len(rows), self.num_cols)
        )
        base_extra = self.num_rows - (len(self.rows) if self.rows is not None else 0)
        new_names = list(names) if names is not None else [f"cut{base_extra + t}" for t in range(len(rows))]
        return MixedIntegerProgram(
            self.c, self.lb, self.ub, self.integer,
            sp.vstack([self.A, extra], format="csr"),
            np.concatenate([self.sense, np.array([r.sense for r in rows])]),
            np.concatenate([self.rhs, np.array([r.rhs for r in rows], dtype=float)]),
            self.constant, self.columns, self.rows,
            self.extra_row_names + tuple(new_names),
        )

    def with_bounds(self, cols, lb=None, ub=None) -> "MixedIntegerProgram":
        new_lb, new_ub = self.lb.copy(), self.ub.copy()
        cols = np.asarray(cols, dtype=np.int64)
        if lb is not None:
            new_lb[cols] = lb
        if ub is not None:
            new_ub[cols] = ub
        return MixedIntegerProgram(
            self.c, new_lb, new_ub, self.integer, self.A, self.sense, self.rhs, self.constant,
            self.columns, self.rows, self.extra_row_names,
        )

    def relaxed(self) -> "MixedIntegerProgram":
        return MixedIntegerProgram(
            self.c, self.lb, self.ub, np.zeros(self.num_cols, dtype=bool), self.A, self.sense,
            self.rhs, self.constant, self.columns, self.rows, self.extra_row_names,
        )


class _Builder:
    """Accumulates COO triplets block by block."""

    def __init__(self, cols: IndexMap):
        self.cols = cols
        self.rows = IndexMap()
        self.r: list[np.ndarray] = []
        self.c: list[np.ndarray] = []
        self.v: list[np.ndarray] = []
        self.sense: list[np.ndarray] = []
        self.rhs: list[np.ndarray] = []

    def block(self, name, shape, sense, rhs) -> np.ndarray:
        ids = self.rows.add(name, shape)
        self.sense.append(np.full(ids.size, sense))
        self.rhs.append(np.broadcast_to(np.asarray(rhs, dtype=float), ids.shape).ravel())
        return ids

    def coef(self, rows, cols, vals) -> None:
        rows, cols, vals = np.broadcast_arrays(rows, cols, np.asarray(vals, dtype=float))
        self.r.append(rows.ravel())
        self.c.append(cols.ravel())
        self.v.append(vals.ravel())

    def program(self, c, lb, ub, integer, constant) -> MixedIntegerProgram:
        n, m = len(self.cols), len(self.rows)
        if self.r:
            r, cc, v = np.concatenate(self.r), np.concatenate(self.c), np.concatenate(self.v)
            keep = v != 0
            A = sp.csr_matrix((v[keep], (r[keep], cc[keep])), shape=(m, n))
        else:
            A = sp.csr_matrix((m, n))
        sense = np.concatenate(self.sense) if self.sense else np.array([], dtype="<U1")
        rhs = np.concatenate(self.rhs) if self.rhs else np.array([], dtype=float)
        return MixedIntegerProgram(
            np.asarray(c, dtype=float), np.asarray(lb, dtype=float), np.asarray(ub, dtype=float),
            np.asarray(integer, dtype=bool), A, sense.astype("<U1"), rhs, float(constant), self.cols, self.rows,
        )


def _proposed(inst: Instance, extended: bool) -> tuple[MixedIntegerProgram, IndexMap]:
    nt, ns, nr = inst.num_types, inst.num_servers, inst.num_resources
    u, s, n = inst.demand, inst.capacity, inst.placement
    cols = IndexMap()
    X = cols.add("x", (nt, ns))
    Y = cols.add("y", ns)
    Z = cols.add("z", (nt, ns))
    XN = cols.add("xnew", (nt, ns)) if extended else None

    nc = len(cols)
    c = np.zeros(nc)
    lb = np.zeros(nc)
    ub = np.full(nc, np.inf)
    c[Y] = inst.cost_run
    c[Z] = inst.cost_mig
    ub[X] = upper_bound_v(inst)
    ub[Y] = 1.0
    if extended:
        c[XN] = inst.cost_alloc
        ub[XN] = upper_bound_v_new(inst)
        for i, forb in enumerate(inst.extensions.forbidden):
            ks = sorted(forb)
            ub[X[i, ks]] = 0.0
            ub[XN[i, ks]] = 0.0

    b = _Builder(cols)
    cap = b.block("cap", (ns, nr), LE, 0.0)  # u.x (+ u.xnew) <= s y
    kk, rr, ii = np.meshgrid(np.arange(ns), np.arange(nr), np.arange(nt), indexing="ij")
    b.coef(cap[kk, rr], X[ii, kk], u[ii, rr])
    if extended:
        b.coef(cap[kk, rr], XN[ii, kk], u[ii, rr])
    b.coef(cap, Y[:, None], -s)
    dem = b.block("dem", nt, EQ, inst.d)  # every VM placed
    b.coef(dem[:, None], X, 1.0)
    mig = b.block("mig", (nt, ns), LE, n)  # x - z <= n
    b.coef(mig, X, 1.0)
    b.coef(mig, Z, -1.0)
    if extended:
        e = inst.extensions
        new = b.block("new", nt, EQ, inst.d_new)  # new VMs placed
        b.coef(new[:, None], XN, 1.0)
        bud = b.block("budget", (), LE, float(e.ell))  # migration budget
        b.coef(bud, Z.ravel(), 1.0)
        mcap = b.block("vmcap", ns, LE, np.asarray(e.m, dtype=float))  # VM count cap
        b.coef(mcap[None, :], X, 1.0)
        b.coef(mcap[None, :], XN, 1.0)
    mip = b.program(c, lb, ub, np.ones(nc, dtype=bool), inst.fixed_cost)
    return mip, cols


def build_proposed(inst: Instance) -> tuple[MixedIntegerProgram, IndexMap]:
    """Compact formulation: |K|(|I|+|R|)+|I| rows, |K|(2|I|+1) columns."""
    if inst.extensions is not None:
        raise ValueError("instance has extensions; use build_extended")
    return _proposed(inst, extended=False)


def build_extended(inst: Instance) -> tuple[MixedIntegerProgram, IndexMap]:
    if inst.extensions is None:
        raise ValueError("instance has no extensions; use build_proposed")
    return _proposed(inst, extended=True)


def build_model(inst: Instance) -> tuple[MixedIntegerProgram, IndexMap]:
    """Proposed or extended formulation, whichever fits the instance."""
    return _proposed(inst, extended=inst.extensions is not None)


def build_speitkamp(inst: Instance) -> tuple[MixedIntegerProgram, IndexMap]:
    """One binary column per (VM, server); VM ``v`` of type ``i`` is numbered
    so that the first ``n[i,0]`` sit on server 0, the next ``n[i,1]`` on
    server 1, and so on."""
    nt, ns, nr = inst.num_types, inst.num_servers, inst.num_resources
    u, s, n = inst.demand, inst.capacity, inst.placement
    d = inst.d
    vm_type = np.repeat(np.arange(nt), d)  # type of each individual VM
    home = np.concatenate([np.repeat(np.arange(ns), n[i]) for i in range(nt)]) if d.sum() else np.zeros(0, int)
    nv = int(d.sum())

    cols = IndexMap()
    X = cols.add("x", (nv, ns))
    Z = cols.add("z", (nv, ns))
    Y = cols.add("y", ns)
    nc = len(cols)
    c = np.zeros(nc)
    c[Y] = inst.cost_run
    c[Z] = inst.cost_mig[vm_type, :]
    ub = np.ones(nc)

    b = _Builder(cols)
    cap = b.block("cap", (ns, nr), LE, 0.0)
    for r in range(nr):
        b.coef(cap[:, r][None, :], X, u[vm_type, r][:, None])
    b.coef(cap, Y[:, None], -s)
    asg = b.block("assign", nv, EQ, 1.0)  # each VM exactly once
    b.coef(asg[:, None], X, 1.0)
    nvk = np.zeros((nv, ns))
    nvk[np.arange(nv), home] = 1.0
    mig = b.block("mig", (nv, ns), LE, nvk)  # migrated if moved away from its host
    b.coef(mig, X, 1.0)
    b.coef(mig, Z, -1.0)
    mip = b.program(c, np.zeros(nc), ub, np.ones(nc, dtype=bool), inst.fixed_cost)
    return mip, cols


def build_mazumdar(inst: Instance) -> tuple[MixedIntegerProgram, IndexMap]:
    """Flow formulation with ``z[i,j,k]`` VMs of type i moved from j to k.

    Flows are bounded by the source count ``n[i,j]``; self-flows are fixed to 0.
    """
    nt, ns, nr = inst.num_types, inst.num_servers, inst.num_resources
    u, s, n = inst.demand, inst.capacity, inst.placement
    cols = IndexMap()
    Z = cols.add("z", (nt, ns, ns))
    Y = cols.add("y", ns)
    nc = len(cols)
    c = np.zeros(nc)
    c[Z] = np.broadcast_to(inst.cost_mig[:, None, :], (nt, ns, ns))
    c[Y] = inst.cost_run
    ub = np.zeros(nc)
    ub[Z] = np.broadcast_to(n[:, :, None], (nt, ns, ns))
    ub[Z[:, np.arange(ns), np.arange(ns)]] = 0.0
    ub[Y] = 1.0

    b = _Builder(cols)
    # sum_j z[i,j,k] - z[i,k,j] >= -n[i,k]
    cons = b.block("keep", (nt, ns), GE, -n)
    ii, jj, kk = np.meshgrid(np.arange(nt), np.arange(ns), np.arange(ns), indexing="ij")
    offdiag = jj != kk
    b.coef(cons[ii, kk][offdiag], Z[ii, jj, kk][offdiag], 1.0)
    b.coef(cons[ii, jj][offdiag], Z[ii, jj, kk][offdiag], -1.0)
    # sum_i u[i,r] (n[i,k] + inflow - outflow) <= s[k,r] y[k]
    cap = b.block("cap", (ns, nr), LE, -(n.T @ u))
    for r in range(nr):
        b.coef(cap[kk, r][offdiag], Z[ii, jj, kk][offdiag], u[ii, r][offdiag])
        b.coef(cap[jj, r][offdiag], Z[ii, jj, kk][offdiag], -u[ii, r][offdiag])
    b.coef(cap, Y[:, None], -s)
    mip = b.program(c, np.zeros(nc), ub, np.ones(nc, dtype=bool), inst.fixed_cost)
    return mip, cols


def model_statistics(mip: MixedIntegerProgram) -> tuple[int, int, int]:
    """``(num_constraints, num_variables, num_integer_variables)``."""
    return mip.num_rows, mip.num_cols, int(np.count_nonzero(mip.integer))


def solution_to_vector(inst: Instance, cols: IndexMap, sol: Solution) -> np.ndarray:
    """Map a :class:`Solution` onto the columns of the proposed/extended model."""
    vec = np.zeros(len(cols))
    vec[cols.block("x")] = sol.x
    vec[cols.block("y")] = sol.y
    vec[cols.block("z")] = sol.z
    if cols.has_block("xnew"):
        vec[cols.block("xnew")] = sol.x_new if sol.x_new is not None else 0.0
    return vec


def vector_to_solution(cols: IndexMap, vec: np.ndarray, *, rounded: bool = True) -> Solution:
    vec = np.round(vec).astype(np.int64) if rounded else np.asarray(vec)
    xn = vec[cols.block("xnew")] if cols.has_block("xnew") else None
    return Solution(vec[cols.block("x")], vec[cols.block("y")], vec[cols.block("z")], xn)


def write_mps(mip: MixedIntegerProgram, path) -> None:
    """Write the program in free-format MPS using the structured names.

    Rows are called by their block names (``cap[k,r]``, ``dem[i]``, ...),
    appended rows by ``cutN``; the objective row is ``obj`` and its constant is
    stored as ``-constant`` on the RHS of ``obj`` (the usual MPS convention).
    """
    csc = mip.A.tocsc()
    row_names = [mip.row_name(r) for r in range(mip.num_rows)]
    tag = {LE: "L", EQ: "E", GE: "G"}
    with open(path, "w") as fh:
        fh.write("NAME vmcp\nROWS\n N obj\n")
        for r, nm in enumerate(row_names):
            fh.write(f" {tag[mip.sense[r]]} {nm}\n")
        fh.write("COLUMNS\n")
        in_int = False
        for j in range(mip.num_cols):
            if mip.integer[j] != in_int:
                fh.write(f" MARKER 'MARKER' {'INTORG' if mip.integer[j] else 'INTEND'}\n")
                in_int = bool(mip.integer[j])
            nm = mip.col_name(j)
            if mip.c[j] != 0:
                fh.write(f" {nm} obj {mip.c[j]!r}\n")
            lo, hi = csc.indptr[j], csc.indptr[j + 1]
            for r, v in zip(csc.indices[lo:hi], csc.data[lo:hi]):
                fh.write(f" {nm} {row_names[r]} {v!r}\n")
        if in_int:
            fh.write(" MARKER 'MARKER' INTEND\n")
        fh.write("RHS\n")
        if mip.constant:
            fh.write(f" rhs obj {-mip.constant!r}\n")
        for r in np.flatnonzero(mip.rhs):
            fh.write(f" rhs {row_names[r]} {mip.rhs[r]!r}\n")
        fh.write("BOUNDS\n")
        for j in range(mip.num_cols):
            nm = mip.col_name(j)
            lo, hi = mip.lb[j], mip.ub[j]
            if lo == hi:
                fh.write(f" FX bnd {nm} {lo!r}\n")
                continue
            if lo != 0:
                fh.write(f" LO bnd {nm} {lo!r}\n" if np.isfinite(lo) else f" MI bnd {nm}\n")
            if np.isfinite(hi):
                fh.write(f" UP bnd {nm} {hi!r}\n")
            elif mip.integer[j]:
                fh.write(f" PL bnd {nm}\n")
        fh.write("ENDATA\n")
