"""Atom-to-target-site assignment.

``exact_match`` minimizes the summed squared move distance globally;
``block_match`` tiles the plane so each block solves independently (the
parallel, near-constant-latency path); ``decollide`` swaps endpoints to
remove simultaneous-motion near-collisions and shorten the longest move.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree


class MatchingError(ValueError):
    pass


class InsufficientAtomsError(MatchingError):
    def __init__(self, n_atoms: int, n_targets: int):
        self.n_atoms = n_atoms
        self.n_targets = n_targets
        super().__init__(f"{n_atoms} atoms cannot fill {n_targets} targets")


@dataclass(frozen=True)
class SiteLattice:
    """Target sites: (x, y, layer) in expanded pixels."""

    sites: np.ndarray              # (n, 3)
    spacing: float

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.sites, dtype=np.float64))
        if s.shape[1] == 2:
            s = np.column_stack([s, np.zeros(len(s))])
        if s.shape[1] != 3:
            raise MatchingError("sites must be (x, y) or (x, y, layer)")
        if self.spacing <= 0:
            raise MatchingError("spacing must be positive")
        if len(np.unique(s, axis=0)) != len(s):
            raise MatchingError("duplicate sites")
        s.setflags(write=False)
        object.__setattr__(self, "sites", s)

    @property
    def positions(self) -> np.ndarray:
        return self.sites[:, :2]

    @property
    def layers(self) -> np.ndarray:
        return self.sites[:, 2].astype(int)

    @property
    def layer_count(self) -> int:
        return len(np.unique(self.layers))

    def to_text(self) -> str:
        return "".join(f"{x:.6f} {y:.6f} {int(l)}\n" for x, y, l in self.sites)

    @classmethod
    def from_text(cls, text: str, spacing: float) -> "SiteLattice":
        rows = []
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            rows.append((float(parts[0]), float(parts[1]),
                         float(parts[2]) if len(parts) > 2 else 0.0))
        return cls(np.array(rows), spacing)


@dataclass
class Assignment:
    """Injective atom -> target pairing covering every target."""

    atom_index: np.ndarray         # (n_targets,) atom paired with each target
    cost: float                    # sum of squared distances
    longest: float                 # max single-move distance
    collision_flags: list = field(default_factory=list)
    block_times: list | None = None
    tile_times: list | None = None

    @property
    def pairs(self):
        return [(int(a), j) for j, a in enumerate(self.atom_index)]

    def check(self, atoms, targets):
        atoms = np.asarray(atoms, dtype=np.float64)
        targets = np.asarray(targets, dtype=np.float64)
        a = self.atom_index
        if len(a) != len(targets):
            raise MatchingError("assignment does not cover every target")
        if len(np.unique(a)) != len(a):
            raise MatchingError("assignment not injective")
        d2 = ((atoms[a] - targets) ** 2).sum(axis=1)
        if not np.isclose(d2.sum(), self.cost, rtol=1e-12, atol=1e-9):
            raise MatchingError(
                f"stored cost {self.cost} != recomputed {d2.sum()}")
        return True

    def to_csv(self, atoms, targets) -> str:
        atoms = np.asarray(atoms, dtype=np.float64)
        targets = np.asarray(targets, dtype=np.float64)
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["atom_index", "target_index", "d2"])
        for a, j in self.pairs:
            d2 = float(((atoms[a] - targets[j]) ** 2).sum())
            w.writerow([a, j, repr(d2)])
        return buf.getvalue()


def _cost_matrix(atoms, targets):
    atoms = np.asarray(atoms, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    diff = targets[:, None, :] - atoms[None, :, :]
    # squared distances of integer coordinates are exact in float64
    return (diff ** 2).sum(axis=-1)


def _canonicalize(cost, atom_index):
    """Equal-cost exchanges toward the smallest atom-index pairing.

    Deterministic tie-break among optimal assignments: replace an assigned
    atom with a smaller-index unused atom at identical cost, or swap two
    targets' atoms when the exchange keeps the total cost identical and
    lowers the atom index on the earlier target.
    """
    n_targets, n_atoms = cost.shape
    used = np.zeros(n_atoms, dtype=bool)
    used[atom_index] = True
    changed = True
    while changed:
        changed = False
        for j in range(n_targets):
            a = atom_index[j]
            for b in range(a):
                if not used[b] and cost[j, b] == cost[j, a]:
                    atom_index[j] = b
                    used[a], used[b] = False, True
                    changed = True
                    break
        for j1 in range(n_targets):
            for j2 in range(j1 + 1, n_targets):
                a1, a2 = atom_index[j1], atom_index[j2]
                if a2 < a1 and (cost[j1, a2] + cost[j2, a1]
                                == cost[j1, a1] + cost[j2, a2]):
                    atom_index[j1], atom_index[j2] = a2, a1
                    changed = True
    return atom_index


def exact_match(atoms, targets, canonical: bool = True) -> Assignment:
    """Globally minimal sum-of-d^2 assignment of targets to atoms.

    Shortest-augmenting-path rectangular solver on the dense squared-distance
    matrix; requires at least as many atoms as targets.  ``canonical`` applies
    an equal-cost tie-break toward smaller atom indices on small instances;
    it never changes the total cost, only which of several optimal pairings
    is reported.
    """
    atoms = np.atleast_2d(np.asarray(atoms, dtype=np.float64))
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if len(atoms) < len(targets):
        raise InsufficientAtomsError(len(atoms), len(targets))
    cost = _cost_matrix(atoms, targets)
    # per-atom column reduction equalizes solver effort between near and far
    # atoms.  A square assignment uses every column, so subtracting a
    # per-column constant shifts the total by a constant and leaves the
    # optimum unchanged; rectangular instances are first squared with
    # constant dummy rows carrying the complementary offsets, which makes
    # the same identity hold.
    col_min = cost.min(axis=0, keepdims=True)
    if cost.shape[0] == cost.shape[1]:
        rows, cols = linear_sum_assignment(cost - col_min)
    else:
        dummy = np.tile(col_min.max() - col_min,
                        (cost.shape[1] - cost.shape[0], 1))
        rows, cols = linear_sum_assignment(np.vstack([cost - col_min, dummy]))
        rows, cols = rows[:len(targets)], cols[:len(targets)]
    atom_index = np.empty(len(targets), dtype=np.int64)
    atom_index[rows] = cols
    if canonical and len(targets) <= 64:
        atom_index = _canonicalize(cost, atom_index)
    d2 = cost[np.arange(len(targets)), atom_index]
    return Assignment(atom_index=atom_index, cost=float(d2.sum()),
                      longest=float(np.sqrt(d2.max())) if len(d2) else 0.0)


def _block_key(pos, block, offset=(0.0, 0.0)):
    return (int(np.floor((pos[0] + offset[0]) / block)),
            int(np.floor((pos[1] + offset[1]) / block)))


def _flow_balanced_pools(atoms, targets, block):
    """Disjoint per-block atom pools sized to each block's target count.

    Net atom transport between blocks is solved as a min-cost flow on the
    block adjacency graph (a tiny problem: one node per block), then realized
    by handing the atoms nearest the receiving block across each edge.  Global
    surplus drains to a zero-cost sink, i.e. stays home.
    """
    import networkx as nx

    t_blocks: dict[tuple, list] = {}
    for j, t in enumerate(targets):
        t_blocks.setdefault(_block_key(t, block), []).append(j)
    a_blocks: dict[tuple, list] = {}
    for i, a in enumerate(atoms):
        a_blocks.setdefault(_block_key(a, block), []).append(i)

    occupied = set(t_blocks) | set(a_blocks)
    xs = [k[0] for k in occupied]
    ys = [k[1] for k in occupied]
    # include empty cells of the bounding box so flow can route through gaps
    nodes = sorted((x, y)
                   for x in range(min(xs), max(xs) + 1)
                   for y in range(min(ys), max(ys) + 1))
    g = nx.DiGraph()
    for n in nodes:
        g.add_node(n, demand=len(t_blocks.get(n, ())) - len(a_blocks.get(n, ())))
    g.add_node("sink", demand=len(atoms) - len(targets))
    hop_cost = max(1, int(round(block * 100)))
    for n in nodes:
        g.add_edge(n, "sink", weight=0)
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nb = (n[0] + dx, n[1] + dy)
            if nb in g:
                g.add_edge(n, nb, weight=hop_cost)
                g.add_edge(nb, n, weight=hop_cost)
    try:
        flow = nx.min_cost_flow(g)
    except nx.NetworkXUnfeasible as exc:
        raise InsufficientAtomsError(len(atoms), len(targets)) from exc

    pools = {n: list(a_blocks.get(n, ())) for n in nodes}
    for n in t_blocks:
        pools.setdefault(n, [])
    pending = {(u, v): f for u, dest in flow.items() if u != "sink"
               for v, f in dest.items() if f > 0 and v != "sink"}
    while pending:
        progressed = False
        for (u, v), f in sorted(pending.items()):
            n_send = min(f, len(pools[u]))
            if n_send == 0:
                continue
            cx = (v[0] + 0.5) * block
            cy = (v[1] + 0.5) * block
            ranked = sorted(
                ((atoms[i, 0] - cx) ** 2 + (atoms[i, 1] - cy) ** 2, i)
                for i in pools[u])
            for _, i in ranked[:n_send]:
                pools[u].remove(i)
                pools[v].append(i)
            pending[(u, v)] -= n_send
            if pending[(u, v)] == 0:
                del pending[(u, v)]
            progressed = True
        if not progressed:
            raise MatchingError("block transfer did not converge")
    return t_blocks, pools


def _timed_tile(atoms, targets, timing_reps):
    """Solve one tile, timing the solve ``timing_reps`` times (min taken)."""
    best = np.inf
    for _ in range(timing_reps):
        t0 = time.perf_counter()
        sub = exact_match(atoms, targets, canonical=False)
        best = min(best, time.perf_counter() - t0)
    return sub, best


def _refine_pass(atoms, targets, atom_index, block, offset, block_times,
                 tile_times, timing_reps):
    """Re-solve one shifted tiling; cost is monotone non-increasing.

    Each tile's pool is its targets' currently assigned atoms plus the unused
    atoms lying in the tile, so tiles stay disjoint and independently
    solvable.
    """
    used = np.zeros(len(atoms), dtype=bool)
    used[atom_index] = True
    groups: dict[tuple, list] = {}
    spare: dict[tuple, list] = {}
    for j, t in enumerate(targets):
        groups.setdefault(_block_key(t, block, offset), []).append(j)
    for i in np.where(~used)[0]:
        spare.setdefault(_block_key(atoms[i], block, offset), []).append(int(i))
    times = []
    for key, tj in sorted(groups.items()):
        pool = [int(atom_index[j]) for j in tj] + spare.get(key, [])
        sub, dt = _timed_tile(atoms[pool], targets[tj], timing_reps)
        times.append(dt)
        for local_j, j in enumerate(tj):
            atom_index[j] = pool[sub.atom_index[local_j]]
    block_times.append(max(times) if times else 0.0)
    tile_times.append(times)
    return atom_index


def block_match(atoms, targets, block_size: float, seed: int = 0,
                refine_passes: int = 8, timing_reps: int = 1) -> Assignment:
    """Block-decomposed matching: tile the plane, solve each tile exactly.

    Deficit blocks are fed by a coarse min-cost flow over adjacent blocks,
    then each block runs an independent exact match, followed by shifted-
    tiling refinement passes that let assignment chains cross the original
    block boundaries.  All tiles within a pass are independent parallel
    tasks; ``block_times`` records the per-pass critical-path (max tile)
    wall time, initial solve first.

    ``seed`` is accepted for interface stability; the algorithm is
    deterministic by construction.
    """
    atoms = np.atleast_2d(np.asarray(atoms, dtype=np.float64))
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if len(atoms) < len(targets):
        raise InsufficientAtomsError(len(atoms), len(targets))
    if block_size <= 0:
        raise MatchingError("block size must be positive")

    t_blocks, pools = _flow_balanced_pools(atoms, targets, block_size)
    atom_index = np.empty(len(targets), dtype=np.int64)
    block_times: list[float] = []
    tile_times: list[list[float]] = []
    times = []
    for key in sorted(t_blocks):
        tj = t_blocks[key]
        pool = pools[key]
        sub, dt = _timed_tile(atoms[pool], targets[tj], timing_reps)
        times.append(dt)
        for local_j, j in enumerate(tj):
            atom_index[j] = pool[sub.atom_index[local_j]]
    block_times.append(max(times) if times else 0.0)
    tile_times.append(times)

    half = block_size / 2.0
    offsets = ((half, half), (0.0, 0.0), (half, 0.0), (0.0, half))
    for k in range(refine_passes):
        atom_index = _refine_pass(atoms, targets, atom_index, block_size,
                                  offsets[k % 4], block_times, tile_times,
                                  timing_reps)

    d2 = ((atoms[atom_index] - targets) ** 2).sum(axis=1)
    return Assignment(atom_index=atom_index, cost=float(d2.sum()),
                      longest=float(np.sqrt(d2.max())) if len(d2) else 0.0,
                      block_times=block_times, tile_times=tile_times)


def _pair_min_distance(p0, d0, p1, d1):
    """Min over shared tau in [0,1] of |(p0 + tau d0) - (p1 + tau d1)|."""
    dp = p0 - p1
    dv = d0 - d1
    a = float(dv @ dv)
    if a < 1e-30:
        return float(np.sqrt(dp @ dp))
    tau = float(np.clip(-(dp @ dv) / a, 0.0, 1.0))
    v = dp + tau * dv
    return float(np.sqrt(v @ v))


def _colliding_pairs(starts, ends, clearance):
    """Candidate index pairs whose straight-line moves pass within clearance."""
    mids = 0.5 * (starts + ends)
    half = 0.5 * np.sqrt(((ends - starts) ** 2).sum(axis=1))
    reach = half.max() if len(half) else 0.0
    tree = cKDTree(mids)
    cand = tree.query_pairs(2.0 * reach + clearance, output_type="ndarray")
    if len(cand) == 0:
        return []
    ii, jj = cand[:, 0], cand[:, 1]
    dp = starts[ii] - starts[jj]
    dv = (ends[ii] - starts[ii]) - (ends[jj] - starts[jj])
    a = np.einsum("ij,ij->i", dv, dv)
    tau = np.where(a < 1e-30, 0.0,
                   np.clip(-np.einsum("ij,ij->i", dp, dv)
                           / np.maximum(a, 1e-30), 0.0, 1.0))
    v = dp + tau[:, None] * dv
    hit = np.einsum("ij,ij->i", v, v) < clearance * clearance
    return sorted((int(i), int(j)) for i, j in cand[hit])


def decollide(assignment: Assignment, atoms, targets, clearance: float,
              max_passes: int = 10, cost_slack: float = 0.05) -> Assignment:
    """Pairwise endpoint swaps removing near-collisions and long moves.

    A swap is accepted when it removes a simultaneous-motion near-collision
    (minimum pair separation over the shared interpolation parameter below
    ``clearance``), or strictly shortens the longest move, while never pushing
    the total cost beyond ``(1 + cost_slack)`` times the input cost.
    Remaining violations after ``max_passes`` are flagged, not fatal.
    """
    atoms = np.atleast_2d(np.asarray(atoms, dtype=np.float64))
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    atom_index = assignment.atom_index.copy()
    starts = atoms[atom_index].copy()
    ends = targets.copy()
    cost = float(((starts - ends) ** 2).sum())
    budget = (1.0 + cost_slack) * assignment.cost

    def d2(j):
        v = starts[j] - ends[j]
        return float(v @ v)

    for _ in range(max_passes):
        swapped = False
        pairs = _colliding_pairs(starts, ends, clearance)
        for i, j in pairs:
            old = _pair_min_distance(starts[i], ends[i] - starts[i],
                                     starts[j], ends[j] - starts[j])
            if old >= clearance:
                continue    # fixed by an earlier swap this pass
            new = _pair_min_distance(starts[i], ends[j] - starts[i],
                                     starts[j], ends[i] - starts[j])
            old_d2 = d2(i) + d2(j)
            vi = starts[i] - ends[j]
            vj = starts[j] - ends[i]
            new_d2 = float(vi @ vi + vj @ vj)
            if new >= clearance and cost - old_d2 + new_d2 <= budget:
                atom_index[i], atom_index[j] = atom_index[j], atom_index[i]
                starts[[i, j]] = starts[[j, i]]
                cost = cost - old_d2 + new_d2
                swapped = True
        # longest-path reduction among (possibly non-colliding) pairs
        order = np.argsort([-d2(j) for j in range(len(ends))])
        for j in order[:32]:
            dj = d2(int(j))
            for k in range(len(ends)):
                if k == j:
                    continue
                vi = starts[j] - ends[k]
                vj = starts[k] - ends[j]
                new_long = max(float(vi @ vi), float(vj @ vj))
                if new_long < dj and new_long < max(dj, d2(k)):
                    new_total = cost - dj - d2(k) + float(vi @ vi + vj @ vj)
                    sep = _pair_min_distance(
                        starts[j], ends[k] - starts[j],
                        starts[k], ends[j] - starts[k])
                    if new_total <= budget and sep >= clearance:
                        jj, kk = int(j), int(k)
                        atom_index[jj], atom_index[kk] = atom_index[kk], atom_index[jj]
                        starts[[jj, kk]] = starts[[kk, jj]]
                        cost = new_total
                        swapped = True
                        break
        if not swapped:
            break

    flags = _colliding_pairs(starts, ends, clearance)
    d2_all = ((starts - ends) ** 2).sum(axis=1)
    return Assignment(atom_index=atom_index, cost=float(d2_all.sum()),
                      longest=float(np.sqrt(d2_all.max())) if len(d2_all) else 0.0,
                      collision_flags=flags)


def select_reserve(atoms, assignment: Assignment, reserve_count: int,
                   target_positions):
    """Partition atom indices into matched / reserved / discarded.

    The ``reserve_count`` unmatched atoms closest to the target region keep
    their traps on for a later repair round; the rest are turned off.
    """
    atoms = np.atleast_2d(np.asarray(atoms, dtype=np.float64))
    target_positions = np.atleast_2d(np.asarray(target_positions, dtype=np.float64))
    matched = np.sort(assignment.atom_index)
    unmatched = np.setdiff1d(np.arange(len(atoms)), matched)
    if reserve_count > len(unmatched):
        raise MatchingError(
            f"reserve {reserve_count} exceeds {len(unmatched)} unmatched atoms")
    if reserve_count == 0 or len(unmatched) == 0:
        return {"matched": matched, "reserved": unmatched[:0],
                "discarded": unmatched}
    tree = cKDTree(target_positions)
    dist, _ = tree.query(atoms[unmatched])
    order = np.lexsort((unmatched, dist))
    reserved = np.sort(unmatched[order[:reserve_count]])
    discarded = np.sort(unmatched[order[reserve_count:]])
    return {"matched": matched, "reserved": reserved, "discarded": discarded}
