"""Seeded generator for consolidation test beds.

Servers are filled one at a time: draw a VM type uniformly and a count
uniformly in ``0..max copies that fit an empty server``, keep the draw if the
server still fits it, and stop once the load (max over resources of used
fraction) exceeds ``alpha``.  Costs follow a linear power model with idle
power at 60% of peak.

Every server has its own Philox stream derived from ``(seed, server)``, and
only integer draws are used, so instances are reproducible bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .model import Extensions, Instance, ResourceKind, Server, VmType

RESOURCES = ("CPU", "RAM", "BW")
IDLE_FRACTION = Fraction(3, 5)
MAX_DRAWS = 100_000
GENERATOR_VERSION = 1
_P53 = 1 << 53


@dataclass(frozen=True)
class VmSpec:
    id: int
    cpu: int
    ram: int
    bw: int

    @property
    def demand(self) -> tuple[int, int, int]:
        return (self.cpu, self.ram, self.bw)


@dataclass(frozen=True)
class ServerSpec:
    id: int
    cpu: int
    ram: int
    bw: int
    p_max: int

    @property
    def capacity(self) -> tuple[int, int, int]:
        return (self.cpu, self.ram, self.bw)


_VMS = ((1, 1, 10), (2, 4, 100), (4, 8, 300), (6, 12, 1000), (8, 16, 1200))
_SERVERS = (
    (4, 8, 1000, 180), (8, 16, 1000, 200), (10, 16, 2000, 250), (12, 32, 2000, 250),
    (14, 32, 2000, 280), (14, 32, 2000, 300), (16, 32, 4000, 300), (16, 64, 4000, 350),
    (18, 64, 4000, 380), (18, 64, 4000, 410),
)


def vm_catalog() -> tuple[VmSpec, ...]:
    """The five VM types, ids starting at 1."""
    return tuple(VmSpec(i + 1, *row) for i, row in enumerate(_VMS))


def server_catalog() -> tuple[ServerSpec, ...]:
    """The ten server types, ids starting at 1."""
    return tuple(ServerSpec(k + 1, *row) for k, row in enumerate(_SERVERS))


@dataclass(frozen=True)
class GenParams:
    num_servers: int
    alpha: float
    seed: int = 0
    beta: float | None = None
    eta: float | None = None
    lam: float | None = None
    theta: float | None = None
    # restrict the catalogs (1-based ids); None means all types
    vm_type_ids: tuple[int, ...] | None = None
    server_type_ids: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.num_servers < 0:
            raise ValueError("num_servers must be nonnegative")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        for name in ("beta", "eta", "lam", "theta"):
            p = getattr(self, name)
            if p is not None and not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    @property
    def extended(self) -> bool:
        return any(getattr(self, n) is not None for n in ("beta", "eta", "lam", "theta"))


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


def _bernoulli(rng: np.random.Generator, p: float, size: int) -> np.ndarray:
    threshold = int(Fraction(repr(p)) * _P53)
    return rng.integers(0, _P53, size=size, dtype=np.int64) < threshold


def server_load(u: np.ndarray, s: np.ndarray, counts: np.ndarray) -> float:
    """Max over resources of used / capacity for one server."""
    return float(np.max((counts @ u) / s))


def _fill_server(rng: np.random.Generator, u: np.ndarray, s: np.ndarray, alpha: float) -> tuple[np.ndarray, bool]:
    nt = len(u)
    counts = np.zeros(nt, dtype=np.int64)
    bound = np.min(s[None, :] // u, axis=1)
    used = np.zeros(len(s), dtype=np.int64)
    for _ in range(MAX_DRAWS):
        if np.max(used / s) > alpha:
            return counts, False
        room = s - used
        if not np.any(np.all(u <= room, axis=1)):
            return counts, True
        i = int(rng.integers(0, nt))
        k = int(rng.integers(0, bound[i] + 1))
        if k and np.all(used + k * u[i] <= s):
            counts[i] += k
            used += k * u[i]
    return counts, True


def _catalog_arrays(params: GenParams):
    vms = vm_catalog()
    srv = server_catalog()
    if params.vm_type_ids is not None:
        vms = tuple(vms[i - 1] for i in params.vm_type_ids)
    if params.server_type_ids is not None:
        srv = tuple(srv[i - 1] for i in params.server_type_ids)
    if not vms or not srv:
        raise ValueError("empty catalog selection")
    return vms, srv


def generate_basic(params: GenParams) -> Instance:
    vms, srv = _catalog_arrays(params)
    u = np.array([v.demand for v in vms], dtype=np.int64)
    nt, ns = len(vms), params.num_servers
    kinds = [srv[k % len(srv)] for k in range(ns)]
    placement = np.zeros((nt, ns), dtype=np.int64)
    sigma, saturated = [], []
    for k, sp in enumerate(kinds):
        cap = np.array(sp.capacity, dtype=np.int64)
        counts, sat = _fill_server(_rng(params.seed, 0, k), u, cap, params.alpha)
        placement[:, k] = counts
        sigma.append(server_load(u, cap, counts))
        if sat:
            saturated.append(k)

    # rational arithmetic, rounded once, so costs are the floats nearest the exact values
    p_idle = np.array([float(IDLE_FRACTION * sp.p_max) for sp in kinds])
    cost_alloc = np.array([
        [float((1 - IDLE_FRACTION) * sp.p_max * Fraction(vm.cpu, sp.cpu)) for sp in kinds] for vm in vms
    ]).reshape(nt, ns)
    p_max = np.array([sp.p_max for sp in kinds], dtype=float)
    servers = tuple(
        Server(k, sp.capacity, float(p_max[k]), float(p_idle[k])) for k, sp in enumerate(kinds)
    )
    meta = {
        "generator_version": GENERATOR_VERSION,
        "params": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(params).items()},
        "seed": params.seed,
        "server_types": [sp.id for sp in kinds],
        "vm_types": [v.id for v in vms],
        "sigma": sigma,
        "saturated": saturated,
        "num_vms": int(placement.sum()),
    }
    return Instance(
        resources=tuple(ResourceKind(r, name) for r, name in enumerate(RESOURCES)),
        vm_types=tuple(VmType(i, v.demand) for i, v in enumerate(vms)),
        servers=servers,
        placement=placement,
        cost_run=p_idle.copy(),
        cost_alloc=cost_alloc,
        cost_mig=cost_alloc.copy(),
        metadata=meta,
    )


def max_single_type(inst: Instance) -> np.ndarray:
    """Per server, the largest number of VMs of one type that fit it alone."""
    u, s = inst.demand, inst.capacity
    return np.max(np.min(s[None, :, :] // u[:, None, :], axis=2), axis=0)


def generate_extended(params: GenParams) -> Instance:
    """Basic instance plus new VMs, a migration budget, VM caps and forbidden pairs.

    Parameters left as ``None`` default to 0 (beta, theta), 1 (lam) and
    1 (eta), i.e. the corresponding side constraint does not bind.
    """
    base = generate_basic(params)
    beta = params.beta or 0.0
    eta = 1.0 if params.eta is None else params.eta
    lam = 1.0 if params.lam is None else params.lam
    theta = params.theta or 0.0
    rng = _rng(params.seed, 1)
    nt, ns = base.num_types, base.num_servers

    placement = np.array(base.placement)
    d_new = np.zeros(nt, dtype=np.int64)
    for i in range(nt):
        for k in range(ns):
            c = int(placement[i, k])
            if c:
                moved = int(_bernoulli(rng, beta, c).sum())
                placement[i, k] -= moved
                d_new[i] += moved
    ell = math.floor(Fraction(repr(eta)) * int(placement.sum()))
    m = [math.floor(Fraction(repr(lam)) * int(x)) for x in max_single_type(base)]
    forbid = _bernoulli(rng, theta, nt * ns).reshape(nt, ns)
    forbidden = tuple(frozenset(int(k) for k in np.flatnonzero(forbid[i])) for i in range(nt))

    meta = dict(base.metadata)
    meta["num_vms"] = int(placement.sum())
    meta["num_new_vms"] = int(d_new.sum())
    ext = Extensions(tuple(int(x) for x in d_new), int(ell), tuple(m), forbidden)
    return Instance(
        base.resources, base.vm_types, base.servers, placement, base.cost_run,
        base.cost_alloc, base.cost_mig, ext, meta,
    )


def generate(params: GenParams) -> Instance:
    return generate_extended(params) if params.extended else generate_basic(params)


def adjust_vm_count(inst: Instance, total: int, seed: int = 0) -> Instance:
    """Add or remove single VMs at random until the placement holds ``total`` VMs.

    Additions respect capacities; raises if the target cannot be reached.
    """
    rng = _rng(seed, 2)
    n = np.array(inst.placement)
    u, s = inst.demand, inst.capacity
    nt, ns = n.shape
    while n.sum() > total:
        i, k = np.argwhere(n > 0)[int(rng.integers(0, int((n > 0).sum())))]
        n[i, k] -= 1
    while n.sum() < total:
        used = n.T @ u
        fits = np.argwhere(np.all(used[None, :, :] + u[:, None, :] <= s[None, :, :], axis=2))
        if len(fits) == 0:
            raise ValueError("no room for more VMs")
        i, k = fits[int(rng.integers(0, len(fits)))]
        n[i, k] += 1
    meta = dict(inst.metadata)
    meta["num_vms"] = int(n.sum())
    meta["adjusted_to"] = int(total)
    return Instance(
        inst.resources, inst.vm_types, inst.servers, n, inst.cost_run,
        inst.cost_alloc, inst.cost_mig, inst.extensions, meta,
    )


def instance_loads(inst: Instance) -> np.ndarray:
    """Load of every server under the current placement."""
    u, s = inst.demand, inst.capacity
    return np.max((inst.placement.T @ u) / s, axis=1)


__all__ = [
    "VmSpec", "ServerSpec", "vm_catalog", "server_catalog", "GenParams", "generate_basic",
    "generate_extended", "generate", "adjust_vm_count", "instance_loads", "max_single_type",
    "server_load", "RESOURCES",
]
