"""Domain model for virtual machine consolidation instances.

An :class:`Instance` describes servers, VM types, resources, the current
placement ``n[i, k]`` and the cost coefficients.  A :class:`Solution` holds the
post-consolidation allocation ``x``, activation ``y`` and migration ``z``.
Everything here is independent of any MILP formulation.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np


@dataclass(frozen=True)
class ResourceKind:
    id: int
    name: str


@dataclass(frozen=True)
class VmType:
    id: int
    demand: tuple[int, ...]


@dataclass(frozen=True)
class Server:
    id: int
    capacity: tuple[int, ...]
    p_max: float = 0.0
    p_idle: float = 0.0


@dataclass(frozen=True)
class Extensions:
    """Side constraints: new incoming VMs, migration budget, VM caps, forbidden pairs."""

    d_new: tuple[int, ...]
    ell: int
    m: tuple[int, ...]
    forbidden: tuple[frozenset[int], ...]


@dataclass(frozen=True, eq=False)
class Instance:
    resources: tuple[ResourceKind, ...]
    vm_types: tuple[VmType, ...]
    servers: tuple[Server, ...]
    placement: np.ndarray  # n[i, k]
    cost_run: np.ndarray  # c_run[k]
    cost_alloc: np.ndarray  # c_alloc[i, k]
    cost_mig: np.ndarray  # c_mig[i, k]
    extensions: Extensions | None = None
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("placement", "cost_run", "cost_alloc", "cost_mig"):
            arr = np.array(getattr(self, name), dtype=np.int64 if name == "placement" else float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def num_types(self) -> int:
        return len(self.vm_types)

    @property
    def num_servers(self) -> int:
        return len(self.servers)

    @property
    def num_resources(self) -> int:
        return len(self.resources)

    @property
    def demand(self) -> np.ndarray:
        """``u[i, r]`` as an integer matrix."""
        return np.array([t.demand for t in self.vm_types], dtype=np.int64).reshape(
            self.num_types, self.num_resources
        )

    @property
    def capacity(self) -> np.ndarray:
        """``s[k, r]`` as an integer matrix."""
        return np.array([s.capacity for s in self.servers], dtype=np.int64).reshape(
            self.num_servers, self.num_resources
        )

    @property
    def d(self) -> np.ndarray:
        """Number of currently placed VMs per type."""
        return self.placement.sum(axis=1)

    @property
    def d_new(self) -> np.ndarray:
        if self.extensions is None:
            return np.zeros(self.num_types, dtype=np.int64)
        return np.array(self.extensions.d_new, dtype=np.int64)

    @property
    def fixed_cost(self) -> float:
        """The constant term ``sum c_alloc * n`` of the objective."""
        return float((self.cost_alloc * self.placement).sum())

    def total_vms(self) -> int:
        return int(self.d.sum() + self.d_new.sum())

    def with_extensions(self, ext: Extensions | None) -> "Instance":
        return Instance(
            self.resources, self.vm_types, self.servers, self.placement, self.cost_run,
            self.cost_alloc, self.cost_mig, ext, dict(self.metadata),
        )

    # -- JSON ---------------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "resources": [r.name for r in self.resources],
            "vm_types": [{"id": t.id, "demand": list(t.demand)} for t in self.vm_types],
            "servers": [
                {
                    "id": s.id,
                    "capacity": list(s.capacity),
                    "p_max": s.p_max,
                    "p_idle": s.p_idle,
                    "cost_run": float(self.cost_run[k]),
                }
                for k, s in enumerate(self.servers)
            ],
            "cost_alloc": self.cost_alloc.tolist(),
            "cost_mig": self.cost_mig.tolist(),
            "placement": self.placement.tolist(),
        }
        if self.extensions is not None:
            e = self.extensions
            out["extensions"] = {
                "d_new": list(e.d_new),
                "ell": e.ell,
                "m": list(e.m),
                "forbidden": [sorted(f) for f in e.forbidden],
            }
        if self.metadata:
            out["metadata"] = self.metadata
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Instance":
        resources = tuple(ResourceKind(i, name) for i, name in enumerate(data["resources"]))
        vm_types = tuple(VmType(int(t["id"]), tuple(int(u) for u in t["demand"])) for t in data["vm_types"])
        servers = tuple(
            Server(int(s["id"]), tuple(int(c) for c in s["capacity"]), float(s.get("p_max", 0.0)),
                   float(s.get("p_idle", 0.0)))
            for s in data["servers"]
        )
        ext = None
        if data.get("extensions") is not None:
            e = data["extensions"]
            ext = Extensions(
                d_new=tuple(int(v) for v in e["d_new"]),
                ell=int(e["ell"]),
                m=tuple(int(v) for v in e["m"]),
                forbidden=tuple(frozenset(int(k) for k in f) for f in e["forbidden"]),
            )
        nt, ns = len(vm_types), len(servers)
        return cls(
            resources=resources,
            vm_types=vm_types,
            servers=servers,
            placement=np.array(data["placement"], dtype=np.int64).reshape(nt, ns),
            cost_run=np.array([s["cost_run"] for s in data["servers"]], dtype=float),
            cost_alloc=np.array(data["cost_alloc"], dtype=float).reshape(nt, ns),
            cost_mig=np.array(data["cost_mig"], dtype=float).reshape(nt, ns),
            extensions=ext,
            metadata=dict(data.get("metadata", {})),
        )

    @classmethod
    def from_json(cls, text: str) -> "Instance":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path: str | Path) -> "Instance":
        return cls.from_json(Path(path).read_text())

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())


@dataclass
class Solution:
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    x_new: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x)
        self.y = np.asarray(self.y)
        self.z = np.asarray(self.z)
        if self.x_new is not None:
            self.x_new = np.asarray(self.x_new)


@dataclass
class Report:
    """A list of human-readable problems; empty means the check passed."""

    issues: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def add(self, msg: str) -> None:
        self.issues.append(msg)

    def __bool__(self) -> bool:
        return self.ok

    def __len__(self) -> int:
        return len(self.issues)

    def __iter__(self):
        return iter(self.issues)


ValidationReport = Report
FeasibilityReport = Report


def validate_instance(inst: Instance) -> ValidationReport:
    rep = Report()
    nr, nt, ns = inst.num_resources, inst.num_types, inst.num_servers
    names = [r.name for r in inst.resources]
    if len(set(names)) != len(names):
        rep.add("duplicate resource names")
    if [r.id for r in inst.resources] != list(range(nr)):
        rep.add("resource ids must be 0..|R|-1")
    for t in inst.vm_types:
        if len(t.demand) != nr:
            rep.add(f"VM type {t.id}: demand has length {len(t.demand)}, expected {nr}")
        elif any(u < 0 for u in t.demand):
            rep.add(f"VM type {t.id}: negative demand")
        elif not any(u > 0 for u in t.demand):
            rep.add(f"VM type {t.id}: all demands are zero")
    for s in inst.servers:
        if len(s.capacity) != nr:
            rep.add(f"server {s.id}: capacity has length {len(s.capacity)}, expected {nr}")
        elif any(c < 0 for c in s.capacity):
            rep.add(f"server {s.id}: negative capacity")
        if not (0 <= s.p_idle <= s.p_max):
            rep.add(f"server {s.id}: power values must satisfy 0 <= p_idle <= p_max")
    for name, shape in (("placement", (nt, ns)), ("cost_alloc", (nt, ns)), ("cost_mig", (nt, ns)),
                        ("cost_run", (ns,))):
        arr = getattr(inst, name)
        if arr.shape != shape:
            rep.add(f"{name} has shape {arr.shape}, expected {shape}")
    if not rep.ok:
        return rep
    if (inst.placement < 0).any():
        rep.add("negative placement count")
    for name in ("cost_run", "cost_alloc", "cost_mig"):
        arr = getattr(inst, name)
        if not np.isfinite(arr).all():
            rep.add(f"non-finite cost in {name}")
        elif (arr < 0).any():
            rep.add(f"negative cost in {name}")
    load = inst.placement.T @ inst.demand  # [k, r]
    over = np.argwhere(load > inst.capacity)
    for k, r in over:
        rep.add(
            f"current placement exceeds {inst.resources[r].name} capacity of server "
            f"{inst.servers[k].id} ({load[k, r]} > {inst.capacity[k, r]})"
        )
    e = inst.extensions
    if e is not None:
        if len(e.d_new) != nt or any(v < 0 for v in e.d_new):
            rep.add("extensions.d_new must have one nonnegative entry per VM type")
        if e.ell < 0:
            rep.add("extensions.ell must be nonnegative")
        if len(e.m) != ns or any(v < 0 for v in e.m):
            rep.add("extensions.m must have one nonnegative entry per server")
        if len(e.forbidden) != nt:
            rep.add("extensions.forbidden must have one set per VM type")
        elif any(k < 0 or k >= ns for f in e.forbidden for k in f):
            rep.add("extensions.forbidden references an unknown server")
    return rep


def _max_copies(inst: Instance) -> np.ndarray:
    """``min_r floor(s[k, r] / u[i, r])`` over resources with ``u > 0``; shape ``[i, k]``."""
    u = inst.demand.astype(float)[:, None, :]  # i, 1, r
    s = inst.capacity.astype(float)[None, :, :]  # 1, k, r
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(u > 0, np.floor(s / np.where(u > 0, u, 1.0)), np.inf)
    cap = q.min(axis=2)
    big = np.iinfo(np.int64).max // 4
    return np.where(np.isinf(cap), big, cap).astype(np.int64)


def upper_bound_v(inst: Instance, i: int | None = None, k: int | None = None):
    """Trivial upper bound on ``x[i, k]``: ``min(d_i, min_r floor(s_kr / u_ir))``.

    With no indices, returns the whole ``[i, k]`` matrix.
    """
    v = np.minimum(inst.d[:, None], _max_copies(inst))
    if i is None and k is None:
        return v
    return int(v[i, k])


def upper_bound_v_new(inst: Instance) -> np.ndarray:
    """Same bound for newly arriving VMs (``d_new`` in place of ``d``)."""
    return np.minimum(inst.d_new[:, None], _max_copies(inst))


def evaluate_objective(inst: Instance, sol: Solution) -> float:
    nt, ns = inst.num_types, inst.num_servers
    if sol.x.shape != (nt, ns) or sol.z.shape != (nt, ns) or sol.y.shape != (ns,):
        raise ValueError("solution dimensions do not match the instance")
    val = float(inst.cost_run @ sol.y) + inst.fixed_cost + float((inst.cost_mig * sol.z).sum())
    if inst.extensions is not None and sol.x_new is not None:
        if sol.x_new.shape != (nt, ns):
            raise ValueError("x_new dimensions do not match the instance")
        val += float((inst.cost_alloc * sol.x_new).sum())
    return val


def check_feasibility(inst: Instance, sol: Solution, *, exact_migration: bool = True,
                      tol: float = 1e-6) -> FeasibilityReport:
    """Report every violated constraint of the (extended) VMCP.

    With ``exact_migration`` the migration variables must equal ``(x - n)^+``;
    otherwise only the linear relaxation ``z >= x - n`` is checked, which is
    exactly what the MILP rows enforce.
    """
    rep = Report()
    nt, ns = inst.num_types, inst.num_servers
    if sol.x.shape != (nt, ns) or sol.z.shape != (nt, ns) or sol.y.shape != (ns,):
        raise ValueError("solution dimensions do not match the instance")
    ext = inst.extensions
    xnew = sol.x_new if sol.x_new is not None else np.zeros((nt, ns))
    if ext is None and sol.x_new is not None and np.any(sol.x_new != 0):
        rep.add("x_new given for an instance without extensions")

    def integral(a):
        return np.all(np.abs(a - np.round(a)) <= tol)

    for name, arr in (("x", sol.x), ("z", sol.z), ("x_new", xnew)):
        if not integral(arr):
            rep.add(f"{name} is not integral")
        if (arr < -tol).any():
            rep.add(f"{name} has negative entries")
    if not np.all((np.abs(sol.y) <= tol) | (np.abs(sol.y - 1) <= tol)):
        rep.add("y is not binary")

    u, s = inst.demand, inst.capacity
    load = (sol.x + xnew).T @ u  # k, r
    viol = np.argwhere(load > s * sol.y[:, None] + tol)
    for k, r in viol:
        rep.add(f"capacity violation at server {k} resource {inst.resources[r].name}")

    alloc = sol.x.sum(axis=1)
    for i in np.flatnonzero(np.abs(alloc - inst.d) > tol):
        rep.add(f"demand of type {i} not met ({alloc[i]} != {inst.d[i]})")

    n = inst.placement
    if exact_migration:
        bad = np.argwhere(np.abs(sol.z - np.maximum(sol.x - n, 0)) > tol)
        for i, k in bad:
            rep.add(f"migration of type {i} to server {k} is not (x - n)^+")
    else:
        bad = np.argwhere(sol.x - n > sol.z + tol)
        for i, k in bad:
            rep.add(f"migration link violated for type {i} on server {k}")

    v = upper_bound_v(inst)
    for i, k in np.argwhere(sol.x > v + tol):
        rep.add(f"x[{i},{k}] exceeds its upper bound {v[i, k]}")

    if ext is not None:
        vnew = upper_bound_v_new(inst)
        for i, k in np.argwhere(xnew > vnew + tol):
            rep.add(f"x_new[{i},{k}] exceeds its upper bound {vnew[i, k]}")
        new_alloc = xnew.sum(axis=1)
        for i in np.flatnonzero(np.abs(new_alloc - inst.d_new) > tol):
            rep.add(f"new incoming VMs of type {i} not allocated ({new_alloc[i]} != {inst.d_new[i]})")
        if sol.z.sum() > ext.ell + tol:
            rep.add(f"migration budget exceeded ({sol.z.sum()} > {ext.ell})")
        per_server = (sol.x + xnew).sum(axis=0)
        for k in np.flatnonzero(per_server > np.asarray(ext.m) + tol):
            rep.add(f"server {k} hosts more than {ext.m[k]} VMs")
        for i, forb in enumerate(ext.forbidden):
            for k in sorted(forb):
                if abs(sol.x[i, k]) > tol or abs(xnew[i, k]) > tol:
                    rep.add(f"type {i} placed on forbidden server {k}")
    return rep


def exhaustive_optimum(inst: Instance) -> tuple[float, Solution | None]:
    """Exact optimum of a basic instance by exhaustive enumeration.

    Every integer allocation vector of every server is enumerated; a dynamic
    program over the vector of still-unallocated VMs combines servers.  No LP
    is involved, so this is an independent oracle for tiny instances.
    Returns ``(inf, None)`` when infeasible.
    """
    if inst.extensions is not None:
        raise ValueError("exhaustive_optimum supports basic instances only")
    nt, ns = inst.num_types, inst.num_servers
    d = inst.d
    shape = tuple(int(v) + 1 for v in d)
    u, s, n = inst.demand, inst.capacity, inst.placement
    v = upper_bound_v(inst)

    value = np.full(shape, np.inf)
    value[(0,) * nt] = 0.0
    choices: list[tuple[np.ndarray, list[tuple[tuple[int, ...], float]]]] = []
    for k in range(ns):
        allocs = []
        for a in itertools.product(*(range(int(v[i, k]) + 1) for i in range(nt))):
            a_arr = np.array(a, dtype=np.int64)
            if np.any(a_arr @ u > s[k]):
                continue
            cost = float(inst.cost_run[k]) if a_arr.any() else 0.0
            cost += float(inst.cost_mig[:, k] @ np.maximum(a_arr - n[:, k], 0))
            allocs.append((a, cost))
        new = np.full(shape, np.inf)
        for a, cost in allocs:
            src = tuple(slice(0, shape[i] - a[i]) for i in range(nt))
            dst = tuple(slice(a[i], shape[i]) for i in range(nt))
            np.minimum(new[dst], value[src] + cost, out=new[dst])
        choices.append((value, allocs))
        value = new

    best = float(value[tuple(int(x) for x in d)])
    if not np.isfinite(best):
        return float("inf"), None
    # Walk the tables backwards to recover one optimal allocation.
    x = np.zeros((nt, ns), dtype=np.int64)
    state = tuple(int(t) for t in d)
    target = best
    for k in range(ns - 1, -1, -1):
        prev, allocs = choices[k]
        for a, cost in allocs:
            ps = tuple(state[i] - a[i] for i in range(nt))
            if min(ps) < 0:
                continue
            if abs(prev[ps] + cost - target) <= 1e-9 * max(1.0, abs(target)):
                x[:, k] = a
                state, target = ps, prev[ps]
                break
    y = (x.sum(axis=0) > 0).astype(np.int64)
    z = np.maximum(x - n, 0)
    sol = Solution(x, y, z)
    return best + inst.fixed_cost, sol


def make_instance(
    demand: Sequence[Sequence[int]],
    capacity: Sequence[Sequence[int]],
    placement: Sequence[Sequence[int]],
    cost_run: Sequence[float],
    cost_alloc: Sequence[Sequence[float]],
    cost_mig: Sequence[Sequence[float]] | None = None,
    *,
    resource_names: Sequence[str] | None = None,
    extensions: Extensions | None = None,
) -> Instance:
    """Convenience constructor from plain nested lists."""
    demand = np.asarray(demand, dtype=np.int64)
    capacity = np.asarray(capacity, dtype=np.int64)
    nr = demand.shape[1]
    names = list(resource_names) if resource_names else [f"R{r}" for r in range(nr)]
    cost_alloc = np.asarray(cost_alloc, dtype=float)
    return Instance(
        resources=tuple(ResourceKind(r, names[r]) for r in range(nr)),
        vm_types=tuple(VmType(i, tuple(int(x) for x in row)) for i, row in enumerate(demand)),
        servers=tuple(Server(k, tuple(int(x) for x in row)) for k, row in enumerate(capacity)),
        placement=np.asarray(placement, dtype=np.int64),
        cost_run=np.asarray(cost_run, dtype=float),
        cost_alloc=cost_alloc,
        cost_mig=cost_alloc if cost_mig is None else np.asarray(cost_mig, dtype=float),
        extensions=extensions,
    )
