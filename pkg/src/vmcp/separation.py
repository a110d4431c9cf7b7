"""Exact separation over integer knapsack hulls.

Given ``X = {x in Z^n : a.x <= b, 0 <= x <= v}`` and a point ``xbar``, find
``pi >= 0`` with ``pi.x <= rhs`` valid on ``X`` and violated at ``xbar``, or
conclude ``xbar in conv(X)``.  The core is a row-generation LP over the
normalised inequality space with a bounded-knapsack oracle; aggregation of
equal weights, projection of variables at their bounds and sequential lifting
wrap around it to keep the master small.

Two adapters map VMCP relaxation points onto knapsack separation: the
per-server sets ``{(x, y) : u_r.x <= s_kr y}`` (by scaling ``x/y``) and the
covering sets ``{y : s_r.y >= demand_r}`` (by complementing ``y``).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Hashable, Mapping, Sequence

import numpy as np

from .formulation import GE, LE, MixedIntegerProgram, Row
from .knapsack import KnapsackSet, ValueFunction, solve_bounded_knapsack
from .lp import LpContext, LpStatus

VIOLATION_TOL = 1e-6
MEMBER_TOL = 1e-9
BOUND_TOL = 1e-9


@dataclass(frozen=True)
class KnapsackCertificate:
    """``pi.x <= rhs`` is valid on ``kset`` and violated at ``point``."""

    kset: KnapsackSet
    pi: np.ndarray
    rhs: float
    point: np.ndarray

    def violation(self) -> float:
        return float(self.pi @ self.point - self.rhs)


@dataclass(frozen=True)
class ValidInequality:
    """``sum(coef * var) <sense> rhs`` with ``sense`` one of ``'<'`` / ``'>'``."""

    coefficients: Mapping[Hashable, float]
    rhs: float
    sense: str = LE
    kind: str = "knapsack"
    certificate: KnapsackCertificate | None = field(default=None, compare=False, repr=False)

    def lhs(self, values: Mapping[Hashable, float] | Sequence[float]) -> float:
        return float(sum(c * values[k] for k, c in self.coefficients.items()))

    def violation(self, values) -> float:
        act = self.lhs(values)
        return act - self.rhs if self.sense == LE else self.rhs - act

    def to_row(self) -> Row:
        keys = list(self.coefficients)
        return Row(
            np.array(keys, dtype=np.int64),
            np.array([self.coefficients[k] for k in keys], dtype=float),
            self.sense,
            float(self.rhs),
        )


class Outcome(enum.Enum):
    MEMBER = "Member"
    CUT = "Cut"
    # the master value exceeds 1 but no inequality beats the violation tolerance
    WEAK = "Weak"


@dataclass
class SeparationOutcome:
    status: Outcome
    cut: ValidInequality | None = None
    iterations: int = 0
    oracle_calls: int = 0
    master_values: list[float] = field(default_factory=list)
    master_rows: list[int] = field(default_factory=list)

    @property
    def member(self) -> bool:
        return self.status is Outcome.MEMBER


def separate_integer_knapsack(kset: KnapsackSet, xbar: Sequence[float], *, max_iterations: int = 100_000) -> SeparationOutcome:
    """Row generation for ``max xbar.pi s.t. pi.h <= 1 (h in U), pi >= 0``.

    ``U`` starts from the bound points ``v_i e_i``; each round the knapsack
    oracle either certifies ``pi.h <= 1`` on all of ``X`` or returns the most
    violated point, which joins ``U``.  On success the cut is ``pi.x <= rhs``
    with ``rhs = max(1, oracle value)``, which is exactly valid even when the
    oracle exceeds 1 by less than the membership tolerance.
    """
    xbar = np.asarray(xbar, dtype=float)
    n = len(kset)
    if xbar.shape != (n,):
        raise ValueError("xbar has the wrong length")
    if n == 0 or np.all(xbar <= BOUND_TOL):
        return SeparationOutcome(Outcome.MEMBER)
    v = kset.v

    # Items with bound 0 must be 0 in X, so any coefficient is valid for them;
    # cap it so the master stays bounded (2/xbar alone already violates by 1).
    ub = np.full(n, math.inf)
    for i in np.flatnonzero(v == 0):
        ub[i] = 2.0 / xbar[i] if xbar[i] > BOUND_TOL else 0.0
    rows = [Row(np.array([i]), np.array([float(v[i])]), LE, 1.0) for i in range(n) if v[i] > 0]
    master = MixedIntegerProgram.from_rows(c=-xbar, lb=np.zeros(n), ub=ub, rows=rows)
    ctx = LpContext(master)
    out = SeparationOutcome(Outcome.MEMBER)
    for _ in range(max_iterations):
        lp = ctx.solve()
        out.iterations += 1
        if lp.status is not LpStatus.OPTIMAL:
            raise RuntimeError(f"separation master LP failed: {lp.status}")
        omega = -lp.objective
        out.master_values.append(omega)
        out.master_rows.append(ctx.num_rows)
        if omega <= 1.0 + MEMBER_TOL:
            out.status = Outcome.MEMBER
            return out
        pi = np.maximum(lp.primal, 0.0)
        h, value = solve_bounded_knapsack(pi, kset)
        out.oracle_calls += 1
        if value <= 1.0 + MEMBER_TOL:
            rhs = max(1.0, value)
            cert = KnapsackCertificate(kset, pi, rhs, xbar.copy())
            if cert.violation() > VIOLATION_TOL:
                out.status = Outcome.CUT
                out.cut = ValidInequality({i: float(pi[i]) for i in range(n)}, rhs, LE, "knapsack", cert)
            else:
                out.status = Outcome.WEAK
            return out
        ctx.add_rows([Row(np.arange(n), h.astype(float), LE, 1.0)])
    raise RuntimeError("row generation did not converge")


@dataclass(frozen=True)
class Aggregation:
    reduced: KnapsackSet
    xbar: np.ndarray
    groups: tuple[tuple[int, ...], ...]  # reduced index -> original indices

    def expand(self, pi_reduced: Sequence[float], n: int) -> np.ndarray:
        pi = np.zeros(n)
        for g, members in enumerate(self.groups):
            pi[list(members)] = pi_reduced[g]
        return pi


def aggregate_equal_coefficients(kset: KnapsackSet, xbar: Sequence[float]) -> Aggregation:
    """Merge items with equal weight into one variable (bounds and values summed)."""
    xbar = np.asarray(xbar, dtype=float)
    groups: dict[int, list[int]] = {}
    for i, a in enumerate(kset.weights):
        groups.setdefault(a, []).append(i)
    members = tuple(tuple(g) for g in groups.values())
    weights = [kset.weights[g[0]] for g in members]
    bounds = [sum(kset.bounds[i] for i in g) for g in members]
    values = np.array([xbar[list(g)].sum() for g in members])
    return Aggregation(KnapsackSet(weights, kset.capacity, bounds), values, members)


@dataclass(frozen=True)
class Projection:
    reduced: KnapsackSet
    xbar: np.ndarray
    n_lower: tuple[int, ...]
    n_upper: tuple[int, ...]
    n_free: tuple[int, ...]
    capacity: int


def project_and_fix(kset: KnapsackSet, xbar: Sequence[float], tol: float = BOUND_TOL) -> Projection:
    """Fix coordinates sitting at 0 or at their bound; project onto the rest.

    Coordinates above their bound are left free: fixing them at the bound
    would discard part of the violation.
    """
    xbar = np.asarray(xbar, dtype=float)
    v = kset.v
    lower, upper, free = [], [], []
    for i in range(len(kset)):
        if xbar[i] <= tol:
            lower.append(i)
        elif abs(xbar[i] - v[i]) <= tol:
            upper.append(i)
        else:
            free.append(i)
    cap = kset.capacity - int(sum(kset.weights[i] * kset.bounds[i] for i in upper))
    if cap < 0:
        raise ValueError("point violates the knapsack row")
    reduced = KnapsackSet([kset.weights[i] for i in free], cap, [kset.bounds[i] for i in free])
    return Projection(reduced, xbar[free], tuple(lower), tuple(upper), tuple(free), cap)


def lift_inequality(
    pi_free: Sequence[float],
    rhs: float,
    kset: KnapsackSet,
    n_lower: Sequence[int],
    n_upper: Sequence[int],
    n_free: Sequence[int],
) -> tuple[np.ndarray, float]:
    """Sequentially lift ``sum_{free} pi x <= rhs`` to all of ``kset``.

    Up-lifts ``n_lower`` then down-lifts ``n_upper``, each in increasing index
    order; every coefficient is the extremal value given the ones before it.
    A lower item heavier than the capacity available at its turn cannot be
    up-lifted yet (its coefficient would be unbounded) and is lifted after
    the upper items, when the full capacity is back.
    """
    n = len(kset)
    a, v = kset.weights, kset.bounds
    pi = np.zeros(n)
    pi[list(n_free)] = pi_free
    active = list(n_free)
    cap = kset.capacity - sum(a[i] * v[i] for i in n_upper)
    rho = float(rhs)

    def value_fn():
        sub = KnapsackSet([a[i] for i in active], kset.capacity, [v[i] for i in active])
        return ValueFunction(pi[active], sub)

    def up_lift(j: int) -> None:
        z = value_fn()
        best = math.inf
        for t in range(1, v[j] + 1):
            if a[j] * t > cap:
                break
            best = min(best, (rho - z(cap - a[j] * t)) / t)
        pi[j] = max(best, 0.0) if math.isfinite(best) else 0.0
        active.append(j)

    deferred = []
    for j in sorted(n_lower):
        if v[j] == 0:
            continue
        if a[j] > cap:
            deferred.append(j)
            continue
        up_lift(j)
    for j in sorted(n_upper):
        z = value_fn()
        best = 0.0
        for t in range(1, v[j] + 1):
            best = max(best, (z(cap + a[j] * t) - rho) / t)
        pi[j] = best
        rho += best * v[j]
        cap += a[j] * v[j]
        active.append(j)
    for j in deferred:
        up_lift(j)
    return pi, rho


def _project_separate_lift(kset: KnapsackSet, xbar: np.ndarray) -> tuple[SeparationOutcome, np.ndarray | None, float]:
    proj = project_and_fix(kset, xbar)
    inner = separate_integer_knapsack(proj.reduced, proj.xbar)
    if inner.status is not Outcome.CUT:
        return inner, None, 0.0
    pi_free = np.array([inner.cut.coefficients[i] for i in range(len(proj.n_free))])
    pi, rhs = lift_inequality(pi_free, inner.cut.rhs, kset, proj.n_lower, proj.n_upper, proj.n_free)
    return inner, pi, rhs


def separate_point(kset: KnapsackSet, xbar: Sequence[float]) -> SeparationOutcome:
    """Aggregate, project, separate, lift and expand.

    A returned cut is over the original items of ``kset`` and carries a
    certificate against ``xbar``.  Merging equal weights keeps cuts valid but
    can hide a violation (the merged hull is larger), so when the merged
    problem finds nothing the point is checked again without merging.
    """
    xbar = np.asarray(xbar, dtype=float)
    n = len(kset)
    if n == 0 or np.all(xbar <= BOUND_TOL):
        return SeparationOutcome(Outcome.MEMBER)
    if np.all(np.abs(xbar - np.round(xbar)) <= BOUND_TOL) and kset.contains(np.round(xbar)):
        return SeparationOutcome(Outcome.MEMBER)
    agg = aggregate_equal_coefficients(kset, xbar)
    out, pi_red, rhs = _project_separate_lift(agg.reduced, agg.xbar)
    pi = agg.expand(pi_red, n) if pi_red is not None else None
    if pi is None or pi @ xbar - rhs <= VIOLATION_TOL:
        if len(agg.reduced) == n:
            if pi is not None:
                out.status, out.cut = Outcome.WEAK, None
            return out
        first = out
        out, pi, rhs = _project_separate_lift(kset, xbar)
        out.iterations += first.iterations
        out.oracle_calls += first.oracle_calls
        if pi is None:
            return out
    cert = KnapsackCertificate(kset, pi, rhs, xbar.copy())
    if cert.violation() <= VIOLATION_TOL:
        out.status, out.cut = Outcome.WEAK, None
        return out
    out.cut = ValidInequality({i: float(pi[i]) for i in range(n)}, rhs, LE, "knapsack", cert)
    return out


def separate_conv_Xy(
    kset: KnapsackSet,
    xstar: Sequence[float],
    ystar: float,
    x_keys: Sequence[Hashable] | None = None,
    y_key: Hashable = "y",
    tol: float = 1e-9,
) -> ValidInequality | None:
    """Cut ``pi.x - pi0 y <= 0`` separating ``(xstar, ystar)`` from the hull of
    ``{(x, y) : a.x <= b y, 0 <= x <= v y, y binary, x integer}``, if any."""
    if ystar <= tol:
        return None
    xstar = np.asarray(xstar, dtype=float)
    xbar = np.clip(xstar / ystar, 0.0, kset.v.astype(float))
    out = separate_point(kset, xbar)
    if out.cut is None:
        return None
    cert = out.cut.certificate
    keys = list(range(len(kset))) if x_keys is None else list(x_keys)
    coefs = {keys[i]: float(cert.pi[i]) for i in range(len(kset)) if cert.pi[i] != 0.0}
    coefs[y_key] = coefs.get(y_key, 0.0) - cert.rhs
    return ValidInequality(coefs, 0.0, LE, "xy", cert)


def separate_conv_Y(
    capacities: Sequence[int],
    required: int,
    ystar: Sequence[float],
    y_keys: Sequence[Hashable] | None = None,
) -> list[ValidInequality]:
    """Cuts for the hull of ``{y binary : capacities.y >= required}``.

    With ``y' = 1 - y`` the set is a binary knapsack with capacity
    ``sum(capacities) - required``; a cut ``alpha.y' <= beta`` becomes
    ``alpha.y >= sum(alpha) - beta``.  Servers that are indispensable on their
    own (capacity larger than the slack) get the fixing cut ``y_k >= 1``.
    """
    s = [int(c) for c in capacities]
    y = np.asarray(ystar, dtype=float)
    keys = list(range(len(s))) if y_keys is None else list(y_keys)
    slack = sum(s) - int(required)
    if slack < 0:
        return []
    cuts: list[ValidInequality] = []
    items = [k for k in range(len(s)) if s[k] > 0]
    forced = [k for k in items if s[k] > slack]
    if forced:
        full = KnapsackSet([s[k] for k in items], slack, [1] * len(items))
        comp_all = np.clip(1.0 - y[items], 0.0, 1.0)
        for j, k in enumerate(items):
            if k in forced and y[k] < 1.0 - VIOLATION_TOL:
                # y'_k <= 0 on the complemented set, i.e. y_k >= 1
                cert = KnapsackCertificate(full, np.eye(len(items))[j], 0.0, comp_all)
                cuts.append(ValidInequality({keys[k]: 1.0}, 1.0, GE, "y-fix", cert))
    items = [k for k in items if s[k] <= slack]
    if not items:
        return cuts
    comp = np.clip(1.0 - y[items], 0.0, 1.0)
    kset = KnapsackSet([s[k] for k in items], slack, [1] * len(items))
    out = separate_point(kset, comp)
    if out.cut is not None:
        cert = out.cut.certificate
        coefs = {keys[items[j]]: float(cert.pi[j]) for j in range(len(items)) if cert.pi[j] != 0.0}
        cuts.append(ValidInequality(coefs, float(cert.pi.sum() - cert.rhs), GE, "y", cert))
    return cuts


class CutPool:
    """Deduplicates inequalities by a normalised coefficient key."""

    def __init__(self, digits: int = 9):
        self.digits = digits
        self._keys: set = set()
        self.cuts: list[ValidInequality] = []

    def _key(self, cut: ValidInequality):
        scale = max((abs(c) for c in cut.coefficients.values()), default=1.0) or 1.0
        items = tuple(sorted((str(k), round(c / scale, self.digits)) for k, c in cut.coefficients.items() if c))
        return cut.sense, items, round(cut.rhs / scale, self.digits)

    def add(self, cut: ValidInequality) -> bool:
        key = self._key(cut)
        if key in self._keys:
            return False
        self._keys.add(key)
        self.cuts.append(cut)
        return True

    def __len__(self) -> int:
        return len(self.cuts)

    def __iter__(self):
        return iter(self.cuts)
