"""Forest-of-quadtrees/octrees mesh on the unit square or cube.

Leaves are stored as (level, morton) pairs in global Z-order.  A single root
tree covers [0,1]^d; the tree id is kept for format compatibility but is
always zero.  All bulk operations are vectorized over numpy int64 arrays.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import LevelCapError

MAX_LEVEL = {2: 29, 3: 19}

_M2 = [
    (16, 0x0000FFFF0000FFFF),
    (8, 0x00FF00FF00FF00FF),
    (4, 0x0F0F0F0F0F0F0F0F),
    (2, 0x3333333333333333),
    (1, 0x5555555555555555),
]
_M3 = [
    (32, 0x1F00000000FFFF),
    (16, 0x1F0000FF0000FF),
    (8, 0x100F00F00F00F00F),
    (4, 0x10C30C30C30C30C3),
    (2, 0x1249249249249249),
]


def _spread(v: np.ndarray, dim: int) -> np.ndarray:
    v = np.asarray(v, dtype=np.int64)
    masks = _M2 if dim == 2 else _M3
    for shift, mask in masks:
        v = (v | (v << shift)) & mask
    return v


def _compact(v: np.ndarray, dim: int) -> np.ndarray:
    v = np.asarray(v, dtype=np.int64)
    if dim == 2:
        v = v & 0x5555555555555555
        v = (v | (v >> 1)) & 0x3333333333333333
        v = (v | (v >> 2)) & 0x0F0F0F0F0F0F0F0F
        v = (v | (v >> 4)) & 0x00FF00FF00FF00FF
        v = (v | (v >> 8)) & 0x0000FFFF0000FFFF
        v = (v | (v >> 16)) & 0xFFFFFFFF
    else:
        v = v & 0x1249249249249249
        v = (v | (v >> 2)) & 0x10C30C30C30C30C3
        v = (v | (v >> 4)) & 0x100F00F00F00F00F
        v = (v | (v >> 8)) & 0x1F0000FF0000FF
        v = (v | (v >> 16)) & 0x1F00000000FFFF
        v = (v | (v >> 32)) & 0x1FFFFF
    return v


def morton_encode(coords: np.ndarray, dim: int) -> np.ndarray:
    """Interleave integer coordinates (..., dim) into Z-order codes."""
    coords = np.asarray(coords, dtype=np.int64)
    code = _spread(coords[..., 0], dim)
    code = code | (_spread(coords[..., 1], dim) << 1)
    if dim == 3:
        code = code | (_spread(coords[..., 2], dim) << 2)
    return code


def morton_decode(code: np.ndarray, dim: int) -> np.ndarray:
    """Inverse of :func:`morton_encode`; returns (..., dim) coordinates."""
    code = np.asarray(code, dtype=np.int64)
    out = np.empty(code.shape + (dim,), dtype=np.int64)
    out[..., 0] = _compact(code, dim)
    out[..., 1] = _compact(code >> 1, dim)
    if dim == 3:
        out[..., 2] = _compact(code >> 2, dim)
    return out


@dataclass(frozen=True)
class CellKey:
    tree: int
    level: int
    morton: int


@dataclass
class Forest:
    """Leaf cells of a single-root forest, sorted by global Z-order."""

    dimension: int
    levels: np.ndarray
    mortons: np.ndarray
    max_level: int = 0

    def __post_init__(self):
        if self.max_level == 0:
            self.max_level = MAX_LEVEL[self.dimension]
        self.levels = np.asarray(self.levels, dtype=np.int64)
        self.mortons = np.asarray(self.mortons, dtype=np.int64)

    # -- basic queries -------------------------------------------------

    @classmethod
    def unit_root(cls, dimension: int) -> "Forest":
        return cls(dimension, np.zeros(1, np.int64), np.zeros(1, np.int64))

    @property
    def n_leaves(self) -> int:
        return len(self.levels)

    def zkeys(self) -> np.ndarray:
        d = self.dimension
        return self.mortons << (d * (self.max_level - self.levels))

    def coords(self) -> np.ndarray:
        """Integer cell coordinates (n, d) at each leaf's own level."""
        return morton_decode(self.mortons, self.dimension)

    def cell_size(self) -> np.ndarray:
        return 0.5 ** self.levels.astype(np.float64)

    def cell_lower(self) -> np.ndarray:
        return self.coords().astype(np.float64) * self.cell_size()[:, None]

    def keys(self) -> list[CellKey]:
        return [CellKey(0, int(l), int(m)) for l, m in zip(self.levels, self.mortons)]

    def check_sorted(self) -> None:
        z = self.zkeys()
        if len(z) > 1 and not np.all(np.diff(z) > 0):
            raise AssertionError("forest leaves are not strictly Z-sorted")

    def is_balanced(self) -> bool:
        return len(_balance_violations(self)) == 0

    # -- lookup --------------------------------------------------------

    def covering_leaf(self, level: np.ndarray, morton: np.ndarray) -> np.ndarray:
        """Leaf index whose cell contains each query cell, or -1.

        A query is covered only by a leaf at the same or a coarser level;
        queries lying inside refined regions return -1.
        """
        d = self.dimension
        level = np.asarray(level, dtype=np.int64)
        morton = np.asarray(morton, dtype=np.int64)
        zq = morton << (d * (self.max_level - level))
        pos = np.searchsorted(self.zkeys(), zq, side="right") - 1
        pos = np.clip(pos, 0, self.n_leaves - 1)
        lv = self.levels[pos]
        shift = d * np.maximum(level - lv, 0)
        ok = (lv <= level) & ((morton >> shift) == self.mortons[pos])
        return np.where(ok, pos, -1)

    def leaf_index(self, level: np.ndarray, morton: np.ndarray) -> np.ndarray:
        """Index of the exact leaf (level, morton), or -1."""
        idx = self.covering_leaf(level, morton)
        good = (idx >= 0) & (self.levels[np.clip(idx, 0, None)] == level)
        return np.where(good, idx, -1)


def refine(forest: Forest, marked) -> Forest:
    """Replace each marked leaf by its 2^d children, preserving Z-order."""
    marked = np.asarray(sorted(set(int(m) for m in np.atleast_1d(np.asarray(marked, dtype=np.int64)))), dtype=np.int64)
    if marked.size == 0:
        return Forest(forest.dimension, forest.levels.copy(), forest.mortons.copy(), forest.max_level)
    if marked.size and (marked.min() < 0 or marked.max() >= forest.n_leaves):
        raise IndexError("marked leaf index out of range")
    over = marked[forest.levels[marked] >= forest.max_level]
    if over.size:
        i = int(over[0])
        raise LevelCapError(0, int(forest.levels[i]), int(forest.mortons[i]), forest.max_level)

    d = forest.dimension
    nchild = 1 << d
    n = forest.n_leaves
    is_marked = np.zeros(n, dtype=bool)
    is_marked[marked] = True
    counts = np.where(is_marked, nchild, 1)
    rep = np.repeat(np.arange(n), counts)
    starts = np.concatenate(([0], np.cumsum(counts)))[:-1]
    rank = np.arange(rep.size) - np.repeat(starts, counts)
    mark_rep = is_marked[rep]
    new_levels = forest.levels[rep] + mark_rep
    new_mortons = np.where(mark_rep, (forest.mortons[rep] << d) + rank, forest.mortons[rep])
    out = Forest(d, new_levels, new_mortons, forest.max_level)
    out.check_sorted()
    return out


def _neighbor_offsets(dim: int, rule: str) -> np.ndarray:
    """Offsets for 'face' adjacency or the full closure ('node')."""
    rng = [-1, 0, 1]
    offs = np.array([(x, y) for x in rng for y in rng] if dim == 2 else
                    [(x, y, z) for x in rng for y in rng for z in rng], dtype=np.int64)
    offs = offs[np.any(offs != 0, axis=1)]
    if rule == "face":
        offs = offs[np.sum(np.abs(offs), axis=1) == 1]
    return offs


def _balance_violations(forest: Forest) -> np.ndarray:
    """Leaf indices of coarse cells violating full 2:1 closure."""
    d = forest.dimension
    coords = forest.coords()
    levels = forest.levels
    offs = _neighbor_offsets(d, "node")
    bad: list[np.ndarray] = []
    cand = np.nonzero(levels >= 2)[0]
    if cand.size == 0:
        return np.empty(0, dtype=np.int64)
    for off in offs:
        q = coords[cand] + off
        side = levels[cand]
        inb = np.all((q >= 0) & (q < (1 << side)[:, None]), axis=1)
        if not inb.any():
            continue
        sel = cand[inb]
        cov = forest.covering_leaf(levels[sel], morton_encode(q[inb], d))
        viol = (cov >= 0) & (forest.levels[np.clip(cov, 0, None)] < levels[sel] - 1)
        if viol.any():
            bad.append(cov[viol])
    if not bad:
        return np.empty(0, dtype=np.int64)
    return np.unique(np.concatenate(bad))


def balance_2to1(forest: Forest) -> Forest:
    """Iterate enforced refinements until the full 2:1 closure holds.

    The closure covers faces and corners in 2D, and faces, edges and corners
    in 3D, so every node-touching leaf pair differs by at most one level.
    """
    out = forest
    while True:
        bad = _balance_violations(out)
        if bad.size == 0:
            break
        out = refine(out, bad)
    out.check_sorted()
    return out


@dataclass
class Partition:
    """Contiguous Z-order slices with balanced element counts."""

    n_subdomains: int
    owner: np.ndarray
    starts: np.ndarray = field(default=None)

    def __post_init__(self):
        self.owner = np.asarray(self.owner, dtype=np.int64)
        if self.starts is None:
            counts = np.bincount(self.owner, minlength=self.n_subdomains)
            self.starts = np.concatenate(([0], np.cumsum(counts)))

    def indices(self, sub: int) -> np.ndarray:
        return np.nonzero(self.owner == sub)[0]

    def counts(self) -> np.ndarray:
        return np.bincount(self.owner, minlength=self.n_subdomains)


def partition_equal(forest: Forest, n_sub: int) -> Partition:
    """Split leaves into n_sub contiguous Z-order slices of near-equal size."""
    n = forest.n_leaves
    if n_sub < 1 or n_sub > n:
        raise ValueError(f"cannot split {n} leaves into {n_sub} subdomains")
    base, extra = divmod(n, n_sub)
    counts = np.full(n_sub, base, dtype=np.int64)
    counts[:extra] += 1
    owner = np.repeat(np.arange(n_sub, dtype=np.int64), counts)
    return Partition(n_sub, owner)


def adjacency_pairs(forest: Forest, rule: str = "face") -> np.ndarray:
    """All adjacent leaf pairs (i, j) under the given rule, both orders."""
    d = forest.dimension
    coords = forest.coords()
    levels = forest.levels
    offs = _neighbor_offsets(d, rule)
    pairs: list[np.ndarray] = []
    idx = np.arange(forest.n_leaves)
    for off in offs:
        q = coords + off
        inb = np.all((q >= 0) & (q < (1 << levels)[:, None]), axis=1)
        if not inb.any():
            continue
        sel = idx[inb]
        cov = forest.covering_leaf(levels[sel], morton_encode(q[inb], d))
        ok = cov >= 0
        if ok.any():
            pairs.append(np.stack([sel[ok], cov[ok]], axis=1))
    if not pairs:
        return np.empty((0, 2), dtype=np.int64)
    p = np.concatenate(pairs)
    return np.concatenate([p, p[:, ::-1]])


@dataclass
class ComponentLabeling:
    """Connected components of each subdomain's restricted dual graph."""

    n_components: np.ndarray          # (n_sub,)
    labels: np.ndarray                # (n_leaves,) component id within owner subdomain

    def component_of(self, leaf: int) -> int:
        return int(self.labels[leaf])


def detect_components(forest: Forest, partition: Partition, rule: str = "face") -> ComponentLabeling:
    """Label each subdomain's dual-graph components under the adjacency rule."""
    pairs = adjacency_pairs(forest, rule)
    same = partition.owner[pairs[:, 0]] == partition.owner[pairs[:, 1]]
    pairs = pairs[same]
    n = forest.n_leaves
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, raw = connected_components(graph, directed=False)
    labels = np.empty(n, dtype=np.int64)
    ncomp = np.zeros(partition.n_subdomains, dtype=np.int64)
    for s in range(partition.n_subdomains):
        li = np.nonzero(partition.owner == s)[0]
        # renumber by first appearance in local Z-order
        _, first = np.unique(raw[li], return_index=True)
        order = {int(raw[li[j]]): k for k, j in enumerate(np.sort(first))}
        labels[li] = [order[int(raw[i])] for i in li]
        ncomp[s] = len(order)
    return ComponentLabeling(ncomp, labels)


def mark_uniform(forest: Forest) -> np.ndarray:
    return np.arange(forest.n_leaves)


def mark_sphere(forest: Forest, radius: float = 0.85) -> np.ndarray:
    """Leaves whose closed cell intersects the sphere |x| = radius."""
    lo = forest.cell_lower()
    hi = lo + forest.cell_size()[:, None]
    dmin = np.linalg.norm(lo, axis=1)
    dmax = np.linalg.norm(hi, axis=1)
    return np.nonzero((dmin <= radius) & (dmax >= radius))[0]


def mark_box(forest: Forest, lo_c: float = 0.26, hi_c: float = 0.28) -> np.ndarray:
    """Leaves whose closed cell intersects the closed box [lo_c, hi_c]^d."""
    lo = forest.cell_lower()
    hi = lo + forest.cell_size()[:, None]
    hit = np.all((lo <= hi_c) & (hi >= lo_c), axis=1)
    return np.nonzero(hit)[0]


def apply_pattern(forest: Forest, pattern: str, count: int = 1) -> Forest:
    """Apply R_U / R_C / R_S refinements, rebalancing after each pass."""
    markers = {"R_U": mark_uniform, "R_C": mark_sphere, "R_S": mark_box}
    if pattern not in markers:
        raise ValueError(f"unknown pattern {pattern!r}")
    out = forest
    for _ in range(count):
        out = balance_2to1(refine(out, markers[pattern](out)))
    return out


# -- serialization -----------------------------------------------------


def save_forest(forest: Forest, path_or_file) -> None:
    close = False
    f = path_or_file
    if isinstance(path_or_file, (str, bytes)):
        f = open(path_or_file, "w")
        close = True
    try:
        f.write(f"{forest.dimension} {forest.max_level} {forest.n_leaves}\n")
        for l, m in zip(forest.levels, forest.mortons):
            f.write(f"0 {l} {m}\n")
    finally:
        if close:
            f.close()


def load_forest(path_or_file) -> Forest:
    close = False
    f = path_or_file
    if isinstance(path_or_file, (str, bytes)):
        f = open(path_or_file)
        close = True
    try:
        dim, max_level, n = map(int, f.readline().split())
        data = np.loadtxt(io.StringIO(f.read()), dtype=np.int64, ndmin=2)
    finally:
        if close:
            f.close()
    if data.shape[0] != n:
        raise ValueError("leaf count does not match header")
    return Forest(dim, data[:, 1], data[:, 2], max_level)


def save_partition(partition: Partition, path_or_file) -> None:
    close = False
    f = path_or_file
    if isinstance(path_or_file, (str, bytes)):
        f = open(path_or_file, "w")
        close = True
    try:
        for i, s in enumerate(partition.owner):
            f.write(f"{i} {s}\n")
    finally:
        if close:
            f.close()


def load_partition(path_or_file) -> Partition:
    data = np.loadtxt(path_or_file, dtype=np.int64, ndmin=2)
    owner = np.empty(data.shape[0], dtype=np.int64)
    owner[data[:, 0]] = data[:, 1]
    return Partition(int(owner.max()) + 1, owner)
