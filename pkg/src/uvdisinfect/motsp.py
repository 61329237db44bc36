"""Bi-objective travelling-salesman allocation of surface cells.

Each city carries two planar embeddings; a tour is scored by its closed
Euclidean length in both.  Exact fronts come from enumeration (small n) and
Held-Karp per scalarization; the working solver decomposes the problem into
weighted single-objective tours improved by 2-opt.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numba
import numpy as np

from .geometry import Pose2D
from .world_model import OccupancyGrid, PolygonDictionary, astar_cells

log = logging.getLogger(__name__)

BRUTE_FORCE_CAP = 10
HELD_KARP_CAP = 13
# Interior weights: at exactly 0 or 1 one objective is ignored and its value is
# no better than a random tour's.
DEFAULT_WEIGHT_MARGIN = 0.05


@dataclass(frozen=True, eq=False)
class MotspInstance:
    coords1: np.ndarray
    coords2: np.ndarray

    def __post_init__(self):
        c1 = np.asarray(self.coords1, dtype=float).reshape(-1, 2)
        c2 = np.asarray(self.coords2, dtype=float).reshape(-1, 2)
        if len(c1) < 1:
            raise ValueError("instance needs at least one city")
        if len(c1) != len(c2):
            raise ValueError("both embeddings must have the same number of cities")
        if not (np.all(np.isfinite(c1)) and np.all(np.isfinite(c2))):
            raise ValueError("coordinates must be finite")
        c1.flags.writeable = False
        c2.flags.writeable = False
        object.__setattr__(self, "coords1", c1)
        object.__setattr__(self, "coords2", c2)

    @property
    def n(self) -> int:
        return len(self.coords1)

    @classmethod
    def random(cls, n: int, rng) -> "MotspInstance":
        """Uniform coordinates in the unit square for both embeddings."""
        c = rng.random((n, 4))
        return cls(c[:, :2], c[:, 2:])

    def distance_matrices(self) -> tuple[np.ndarray, np.ndarray]:
        return _dmat(self.coords1), _dmat(self.coords2)


def _dmat(c: np.ndarray) -> np.ndarray:
    diff = c[:, None, :] - c[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


@dataclass(frozen=True)
class Tour:
    order: tuple

    def __post_init__(self):
        order = tuple(int(i) for i in self.order)
        if sorted(order) != list(range(len(order))):
            raise ValueError("tour must visit each city exactly once")
        object.__setattr__(self, "order", order)

    def __len__(self):
        return len(self.order)

    def canonical(self) -> "Tour":
        return Tour(canonical_order(self.order))


def canonical_order(order: Sequence[int]) -> tuple:
    """Rotate to start at city 0 and orient so the second city is below the last."""
    order = list(order)
    if len(order) < 3:
        return tuple(sorted(order)) if len(order) == 2 else tuple(order)
    k = order.index(0)
    order = order[k:] + order[:k]
    if order[1] > order[-1]:
        order = [order[0]] + order[:0:-1]
    return tuple(order)


@dataclass(frozen=True)
class ObjectiveVector:
    f1: float
    f2: float

    def __post_init__(self):
        if not (self.f1 >= 0 and self.f2 >= 0):
            raise ValueError("objective values must be non-negative")

    def as_tuple(self) -> tuple:
        return (self.f1, self.f2)


@dataclass(frozen=True)
class ParetoFront:
    members: tuple  # ((Tour, ObjectiveVector), ...) ascending f1

    def __post_init__(self):
        members = tuple(self.members)
        for (_, a), (_, b) in zip(members, members[1:]):
            if not (a.f1 < b.f1 and a.f2 > b.f2):
                raise ValueError("front members must be mutually non-dominated and sorted by f1")
        object.__setattr__(self, "members", members)

    def __len__(self):
        return len(self.members)

    def objectives(self) -> list[ObjectiveVector]:
        return [o for _, o in self.members]

    def tours(self) -> list[Tour]:
        return [t for t, _ in self.members]


def dominates(a: ObjectiveVector, b: ObjectiveVector) -> bool:
    return a.f1 <= b.f1 and a.f2 <= b.f2 and (a.f1 < b.f1 or a.f2 < b.f2)


def tour_objectives(inst: MotspInstance, tour: Tour) -> ObjectiveVector:
    order = np.asarray(tour.order, dtype=np.int64)
    if len(order) != inst.n:
        raise ValueError(f"tour visits {len(order)} cities, instance has {inst.n}")
    return ObjectiveVector(_closed_length(inst.coords1, order), _closed_length(inst.coords2, order))


def _closed_length(c: np.ndarray, order: np.ndarray) -> float:
    p = c[order]
    seg = p - np.roll(p, -1, axis=0)
    return float(np.sqrt(np.einsum("ij,ij->i", seg, seg)).sum())


def nondominated(pairs: Iterable[tuple[Tour, ObjectiveVector]]) -> ParetoFront:
    """Non-dominated filter; duplicate objective vectors keep the lexicographically smallest tour."""
    ranked = sorted(pairs, key=lambda p: (p[1].f1, p[1].f2, p[0].order))
    kept = []
    best_f2 = math.inf
    for tour, obj in ranked:
        if obj.f2 < best_f2:
            kept.append((tour, obj))
            best_f2 = obj.f2
    return ParetoFront(tuple(kept))


# ---------------------------------------------------------------- exact oracles

def _canonical_permutations(n: int) -> np.ndarray:
    """All tours with city 0 first and order[1] < order[-1], as an (m, n) array."""
    if n <= 2:
        return np.arange(n, dtype=np.int64)[None, :]
    rest = np.array(list(itertools.permutations(range(1, n))), dtype=np.int64)
    rest = rest[rest[:, 0] < rest[:, -1]]
    return np.column_stack([np.zeros(len(rest), np.int64), rest])


def _batch_lengths(c: np.ndarray, perms: np.ndarray) -> np.ndarray:
    p = c[perms]
    seg = p - np.roll(p, -1, axis=1)
    return np.sqrt(np.einsum("mij,mij->mi", seg, seg)).sum(axis=1)


def brute_force_pareto(inst: MotspInstance) -> ParetoFront:
    """Exact front by enumerating every distinct tour (n <= 10)."""
    if inst.n > BRUTE_FORCE_CAP:
        raise ValueError(f"brute force is capped at n={BRUTE_FORCE_CAP}, got {inst.n}")
    perms = _canonical_permutations(inst.n)
    f1 = _batch_lengths(inst.coords1, perms)
    f2 = _batch_lengths(inst.coords2, perms)
    # perms are generated in lexicographic order, so a stable sort keeps the smallest tour first
    idx = np.lexsort((f2, f1))
    kept = []
    best = math.inf
    for i in idx:
        if f2[i] < best:
            kept.append((Tour(tuple(perms[i])), ObjectiveVector(float(f1[i]), float(f2[i]))))
            best = f2[i]
    return ParetoFront(tuple(kept))


def scalarized_weights(inst: MotspInstance, lam: float) -> np.ndarray:
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    d1, d2 = inst.distance_matrices()
    return lam * d1 + (1.0 - lam) * d2


def scalarized_cost(inst: MotspInstance, tour: Tour, lam: float) -> float:
    o = tour_objectives(inst, tour)
    return lam * o.f1 + (1.0 - lam) * o.f2


def scalarized_optimal(inst: MotspInstance, lam: float) -> Tour:
    """Held-Karp optimum of ``lam * f1 + (1 - lam) * f2`` (n <= 13)."""
    n = inst.n
    if n > HELD_KARP_CAP:
        raise ValueError(f"Held-Karp is capped at n={HELD_KARP_CAP}, got {n}")
    if n <= 3:
        return Tour(canonical_order(range(n)))
    w = scalarized_weights(inst, lam)
    m = n - 1                       # cities 1..n-1 mapped to bits 0..m-1
    full = 1 << m
    dp = np.full((full, m), np.inf)
    parent = np.full((full, m), -1, dtype=np.int64)
    for j in range(m):
        dp[1 << j, j] = w[0, j + 1]
    wm = w[1:, 1:]
    for mask in range(1, full):
        cur = dp[mask]
        if not np.isfinite(cur).any():
            continue
        # extend every end city k in mask by every city j not in mask
        for j in range(m):
            bit = 1 << j
            if mask & bit:
                continue
            cand = cur + wm[:, j]
            k = int(np.argmin(cand))
            nxt = mask | bit
            if cand[k] < dp[nxt, j]:
                dp[nxt, j] = cand[k]
                parent[nxt, j] = k
    last = dp[full - 1] + w[1:, 0]
    j = int(np.argmin(last))
    order = []
    mask = full - 1
    while j >= 0:
        order.append(j + 1)
        pj = parent[mask, j]
        mask ^= 1 << j
        j = int(pj)
    order.append(0)
    return Tour(canonical_order(order[::-1]))


# ---------------------------------------------------------------- heuristic

@numba.njit(cache=True)
def _nearest_neighbour(w, start):
    n = w.shape[0]
    seen = np.zeros(n, np.bool_)
    tour = np.empty(n, np.int64)
    tour[0] = start
    seen[start] = True
    cur = start
    for pos in range(1, n):
        best = -1
        bd = np.inf
        for j in range(n):
            if not seen[j] and w[cur, j] < bd:
                bd = w[cur, j]
                best = j
        tour[pos] = best
        seen[best] = True
        cur = best
    return tour


@numba.njit(cache=True)
def _two_opt(w, tour, eps):
    """First-improvement 2-opt in place; returns the number of full passes."""
    n = tour.size
    passes = 0
    improved = True
    while improved:
        improved = False
        passes += 1
        for i in range(n - 2):
            for j in range(i + 2, n):
                if i == 0 and j == n - 1:
                    continue
                a = tour[i]
                b = tour[i + 1]
                c = tour[j]
                d = tour[(j + 1) % n]
                delta = w[a, c] + w[b, d] - w[a, b] - w[c, d]
                if delta < -eps:
                    lo = i + 1
                    hi = j
                    while lo < hi:
                        t = tour[lo]
                        tour[lo] = tour[hi]
                        tour[hi] = t
                        lo += 1
                        hi -= 1
                    improved = True
    return passes


@numba.njit(cache=True)
def _tour_cost(w, tour):
    n = tour.size
    s = 0.0
    for i in range(n):
        s += w[tour[i], tour[(i + 1) % n]]
    return s


def weight_schedule(n_weights: int, margin: float = 0.0) -> np.ndarray:
    """``lambda_k = margin + (1 - 2 margin) k / (n_weights - 1)``."""
    if n_weights < 2:
        raise ValueError("n_weights must be >= 2")
    if not 0.0 <= margin < 0.5:
        raise ValueError("margin must lie in [0, 0.5)")
    return margin + (1.0 - 2.0 * margin) * np.arange(n_weights) / (n_weights - 1)


@dataclass(frozen=True)
class SubproblemResult:
    lam: float
    start: int
    nn_cost: float
    cost: float
    passes: int
    tour: Tour


def solve_subproblems(inst: MotspInstance, n_weights: int, seed: int,
                      margin: float = DEFAULT_WEIGHT_MARGIN) -> list[SubproblemResult]:
    """Nearest-neighbour + 2-opt tour for each weight; starts drawn from ``default_rng(seed)``."""
    if inst.n < 2:
        raise ValueError("decomposition needs at least two cities")
    lams = weight_schedule(n_weights, margin)
    rng = np.random.default_rng(seed)
    starts = rng.integers(0, inst.n, size=len(lams))
    d1, d2 = inst.distance_matrices()
    out = []
    for lam, start in zip(lams, starts):
        w = lam * d1 + (1.0 - lam) * d2
        tour = _nearest_neighbour(w, int(start))
        nn_cost = _tour_cost(w, tour)
        eps = 1e-12 * max(float(w.max()), 1e-300)
        passes = _two_opt(w, tour, eps)
        cost = _tour_cost(w, tour)
        log.debug("lambda=%.4f start=%d nn=%.6g 2opt=%.6g passes=%d", lam, start, nn_cost, cost, passes)
        out.append(SubproblemResult(float(lam), int(start), float(nn_cost), float(cost), int(passes),
                                    Tour(canonical_order(tour.tolist()))))
    return out


def decomposition_solve(inst: MotspInstance, n_weights: int, seed: int,
                        margin: float = DEFAULT_WEIGHT_MARGIN) -> ParetoFront:
    """Approximate front from weighted single-objective subproblems."""
    subs = solve_subproblems(inst, n_weights, seed, margin)
    return nondominated((s.tour, tour_objectives(inst, s.tour)) for s in subs)


# ---------------------------------------------------------------- front quality

def hypervolume(front, reference: ObjectiveVector) -> float:
    """Area dominated by ``front`` inside the box bounded by ``reference``."""
    pts = front.objectives() if isinstance(front, ParetoFront) else list(front)
    pts = [p if isinstance(p, ObjectiveVector) else ObjectiveVector(*p) for p in pts]
    for p in pts:
        if p.f1 > reference.f1 or p.f2 > reference.f2:
            raise ValueError(f"reference {reference.as_tuple()} does not bound member {p.as_tuple()}")
    pts.sort(key=lambda p: (p.f1, p.f2))
    hv = 0.0
    prev_f2 = reference.f2
    for p in pts:
        if p.f2 < prev_f2:
            hv += (reference.f1 - p.f1) * (prev_f2 - p.f2)
            prev_f2 = p.f2
    return hv


def nadir(front: ParetoFront) -> ObjectiveVector:
    objs = front.objectives()
    return ObjectiveVector(max(o.f1 for o in objs), max(o.f2 for o in objs))


def random_tour_mean(inst: MotspInstance, count: int, seed: int) -> ObjectiveVector:
    rng = np.random.default_rng(seed)
    s1 = s2 = 0.0
    for _ in range(count):
        order = rng.permutation(inst.n)
        s1 += _closed_length(inst.coords1, order)
        s2 += _closed_length(inst.coords2, order)
    return ObjectiveVector(s1 / count, s2 / count)


def knee_member(front: ParetoFront) -> tuple[Tour, ObjectiveVector]:
    """Member farthest from the chord joining the front's endpoints (first on ties)."""
    if len(front) == 0:
        raise ValueError("empty front")
    if len(front) <= 2:
        return front.members[0]
    a = np.array(front.members[0][1].as_tuple())
    b = np.array(front.members[-1][1].as_tuple())
    ab = b - a
    norm = float(np.hypot(*ab))
    best, best_d = front.members[0], -1.0
    for m in front.members:
        p = np.array(m[1].as_tuple()) - a
        dist = abs(ab[0] * p[1] - ab[1] * p[0]) / norm
        if dist > best_d:
            best, best_d = m, dist
    return best


# ---------------------------------------------------------------- cell allocation

def cell_instance(dictionary: PolygonDictionary, grid: OccupancyGrid, start: Pose2D,
                  second_embedding=None) -> tuple[list[int], MotspInstance]:
    """Polygon ids (ascending) and the instance whose city ``k`` is polygon ``ids[k]``.

    ``second_embedding`` maps polygon id to a 2-D point for the second
    objective; without it both objectives use the centroid ground coordinates.
    """
    ids = dictionary.ids()
    if not ids:
        raise ValueError("empty polygon dictionary")
    start_rc = grid.world_to_cell(start.x, start.y)
    if not grid.is_free(start_rc):
        raise ValueError("start pose is not on a free cell")
    c1 = []
    for pid in ids:
        cx, cy = dictionary[pid].centroid[:2]
        rc = grid.nearest_free_cell(cx, cy)
        if rc is None or not astar_cells(grid, start_rc, rc)[0]:
            raise ValueError(f"polygon {pid} is unreachable")
        c1.append((cx, cy))
    c1 = np.array(c1)
    c2 = c1 if second_embedding is None else np.array([second_embedding[pid] for pid in ids], dtype=float)
    return ids, MotspInstance(c1, c2)


def plan_cells(dictionary: PolygonDictionary, grid: OccupancyGrid, start: Pose2D,
               n_weights: int = 51, seed: int = 0, second_embedding=None,
               margin: float = DEFAULT_WEIGHT_MARGIN) -> tuple[list[int], ParetoFront]:
    """Visiting order (knee member, rotated to begin nearest ``start``) and the front it came from."""
    ids, inst = cell_instance(dictionary, grid, start, second_embedding)
    if inst.n == 1:
        front = ParetoFront(((Tour((0,)), ObjectiveVector(0.0, 0.0)),))
        return [ids[0]], front
    front = decomposition_solve(inst, n_weights, seed, margin)
    tour, _ = knee_member(front)
    c1 = inst.coords1
    first = int(np.argmin(np.hypot(c1[:, 0] - start.x, c1[:, 1] - start.y)))
    order = list(tour.order)
    k = order.index(first)
    order = order[k:] + order[:k]
    return [ids[i] for i in order], front


def allocate_cells(dictionary: PolygonDictionary, grid: OccupancyGrid, start: Pose2D,
                   n_weights: int = 51, seed: int = 0, second_embedding=None,
                   margin: float = DEFAULT_WEIGHT_MARGIN) -> list[int]:
    """Visiting order of the dictionary's polygons."""
    return plan_cells(dictionary, grid, start, n_weights, seed, second_embedding, margin)[0]
