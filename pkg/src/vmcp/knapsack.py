"""Bounded integer knapsack: exact maximisation and lattice-point enumeration.

The optimiser is the separation oracle of the cutting-plane machinery.  Among
optimal solutions it returns the one with the largest item count, and among
those the lexicographically largest, so results are deterministic and favour
"large" points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np

STATE_CAP = 10_000_000


@dataclass(frozen=True)
class KnapsackSet:
    """``{h in Z^n : weights . h <= capacity, 0 <= h <= bounds}``.

    Bounds are clamped to ``capacity // weight`` on construction; an item whose
    bound becomes 0 stays in place and can only take the value 0.
    """

    weights: tuple[int, ...]
    capacity: int
    bounds: tuple[int, ...]

    def __init__(self, weights: Sequence[int], capacity: int, bounds: Sequence[int]):
        w = tuple(int(a) for a in weights)
        v = tuple(int(x) for x in bounds)
        if len(w) != len(v):
            raise ValueError("weights and bounds must have equal length")
        if any(a <= 0 for a in w):
            raise ValueError("weights must be positive integers")
        if capacity < 0 or any(x < 0 for x in v):
            raise ValueError("capacity and bounds must be nonnegative")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "capacity", int(capacity))
        object.__setattr__(self, "bounds", tuple(min(x, int(capacity) // a) for a, x in zip(w, v)))

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def a(self) -> np.ndarray:
        return np.array(self.weights, dtype=np.int64)

    @property
    def v(self) -> np.ndarray:
        return np.array(self.bounds, dtype=np.int64)

    def contains(self, h: Sequence[int]) -> bool:
        h = np.asarray(h)
        return bool(np.all(h >= 0) and np.all(h <= self.v) and h @ self.a <= self.capacity)

    def num_points_upper(self) -> int:
        return math.prod(x + 1 for x in self.bounds)


def _gcd(values) -> int:
    return reduce(math.gcd, (int(x) for x in values), 0)


def _tol(profits: np.ndarray, bounds: np.ndarray) -> float:
    return 1e-9 * max(1.0, float(profits @ bounds))


def solve_bounded_knapsack(profits: Sequence[float], kset: KnapsackSet) -> tuple[np.ndarray, float]:
    """Maximise ``profits . h`` over ``kset``.

    Ties (within a relative 1e-9) go to the larger ``sum(h)``, then to the
    lexicographically largest ``h``.
    """
    p = np.asarray(profits, dtype=float)
    n = len(kset)
    if p.shape != (n,):
        raise ValueError("one profit per item required")
    if np.any(p < 0):
        raise ValueError("profits must be nonnegative")
    if n == 0:
        return np.zeros(0, dtype=np.int64), 0.0
    g = _gcd(kset.weights)
    w = kset.a // g
    cap = kset.capacity // g
    v = kset.v
    if n * (cap + 1) <= STATE_CAP:
        h = _dp(p, w, cap, v)
    else:
        h = _branch_and_bound(p, w, cap, v)
    return h, float(p @ h)


def _dp(p: np.ndarray, w: np.ndarray, cap: int, v: np.ndarray) -> np.ndarray:
    n = len(p)
    tol = _tol(p, v)
    # F[j][c]: best (value, count) using items j.. with capacity c
    F = np.zeros((n + 1, cap + 1))
    C = np.zeros((n + 1, cap + 1), dtype=np.int64)
    for j in range(n - 1, -1, -1):
        best_v = F[j + 1].copy()
        best_c = C[j + 1].copy()
        wj = int(w[j])
        for t in range(1, int(v[j]) + 1):
            shift = t * wj
            if shift > cap:
                break
            cand_v = np.full(cap + 1, -np.inf)
            cand_c = np.zeros(cap + 1, dtype=np.int64)
            cand_v[shift:] = F[j + 1, : cap + 1 - shift] + t * p[j]
            cand_c[shift:] = C[j + 1, : cap + 1 - shift] + t
            better = (cand_v > best_v + tol) | ((cand_v >= best_v - tol) & (cand_c > best_c))
            best_v = np.where(better, cand_v, best_v)
            best_c = np.where(better, cand_c, best_c)
        F[j], C[j] = best_v, best_c

    h = np.zeros(n, dtype=np.int64)
    c = cap
    for j in range(n):
        target_v, target_c = F[j, c], C[j, c]
        wj = int(w[j])
        for t in range(min(int(v[j]), c // wj), -1, -1):
            rest = c - t * wj
            val = t * p[j] + F[j + 1, rest]
            cnt = t + C[j + 1, rest]
            if val >= target_v - tol and cnt >= target_c:
                h[j] = t
                c = rest
                break
    return h


def _branch_and_bound(p: np.ndarray, w: np.ndarray, cap: int, v: np.ndarray) -> np.ndarray:
    """Depth-first search in descending lexicographic order with a fractional
    (LP) bound; the first point reaching the best (value, count) is kept."""
    n = len(p)
    tol = _tol(p, v)
    order_by_ratio = sorted(range(n), key=lambda i: (-p[i] / w[i], i))

    def lp_bound(j: int, room: int) -> float:
        total = 0.0
        for i in order_by_ratio:
            if i < j or room <= 0:
                continue
            take = min(float(v[i]), room / w[i])
            total += take * p[i]
            room -= take * w[i]
        return total

    best = [-1.0, -1, None]
    h = np.zeros(n, dtype=np.int64)

    def dfs(j: int, room: int, val: float, cnt: int) -> None:
        if j == n:
            if val > best[0] + tol or (val >= best[0] - tol and cnt > best[1]):
                best[0], best[1], best[2] = val, cnt, h.copy()
            return
        if val + lp_bound(j, room) < best[0] - tol:
            return
        for t in range(min(int(v[j]), room // int(w[j])), -1, -1):
            h[j] = t
            dfs(j + 1, room - t * int(w[j]), val + t * p[j], cnt + t)
        h[j] = 0

    dfs(0, cap, 0.0, 0)
    return best[2]


class ValueFunction:
    """``c -> max{profits . h : h in kset with capacity replaced by c}``.

    Built once by a forward DP over capacities ``0..kset.capacity``; used by
    sequential lifting, which queries many capacities for the same profits.
    """

    def __init__(self, profits: Sequence[float], kset: KnapsackSet):
        self.p = np.asarray(profits, dtype=float)
        self.kset = kset
        self.g = _gcd(kset.weights) or 1
        cap = kset.capacity // self.g
        self.table: np.ndarray | None = None
        if len(kset) * (cap + 1) <= STATE_CAP:
            w = kset.a // self.g
            t = np.zeros(cap + 1)
            for j in range(len(kset)):
                cur = t.copy()
                for k in range(1, int(kset.bounds[j]) + 1):
                    s = k * int(w[j])
                    if s > cap:
                        break
                    np.maximum(cur[s:], t[: cap + 1 - s] + k * self.p[j], out=cur[s:])
                t = cur
            self.table = t

    def __call__(self, capacity: int) -> float:
        if capacity < 0:
            return -math.inf
        capacity = min(int(capacity), self.kset.capacity)
        if self.table is not None:
            return float(self.table[capacity // self.g])
        sub = KnapsackSet(self.kset.weights, capacity, self.kset.bounds)
        return solve_bounded_knapsack(self.p, sub)[1]


def enumerate_knapsack_points(kset: KnapsackSet, cap: int = 1_000_000) -> np.ndarray:
    """All lattice points of ``kset`` as rows of an integer array."""
    if kset.num_points_upper() > cap:
        raise ValueError(f"box has more than {cap} points")
    pts = np.zeros((1, 0), dtype=np.int64)
    load = np.zeros(1, dtype=np.int64)
    # extend one coordinate at a time, dropping partial points that already overflow
    for a, v in zip(kset.weights, kset.bounds):
        t = np.arange(v + 1, dtype=np.int64)
        new_load = (load[:, None] + a * t[None, :]).ravel()
        keep = new_load <= kset.capacity
        pts = np.hstack([np.repeat(pts, v + 1, axis=0), np.tile(t, len(pts))[:, None]])[keep]
        load = new_load[keep]
    return pts
