"""Global degree-of-freedom numbering on a balanced forest.

Node points of the tensor Gauss-Lobatto layout of order p are identified
across elements by exact integer keys, one int64 per axis.  A point lying
on a coarser neighbor's closure without being one of that neighbor's node
points carries no degree of freedom: its value is interpolated from the
coarse element's trace.  After resolving these constraints every element
references exactly (p+1)^d global degrees of freedom, with a square
transition matrix mapping referenced values to local nodal values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ForestddError, UnbalancedForestError
from .forest import Forest, morton_encode
from .nodes import SUPPORTED_ORDERS, lagrange_eval, lobatto_points

_INT_FLAG = np.int64(1) << np.int64(62)
_CELL_MASK = (np.int64(1) << np.int64(29)) - np.int64(1)


def local_multi_indices(p: int, d: int) -> np.ndarray:
    """Per-axis 1D node indices of local nodes; axis 0 varies fastest."""
    nloc = (p + 1) ** d
    flat = np.arange(nloc)
    return np.stack([(flat // (p + 1) ** a) % (p + 1) for a in range(d)], axis=1)


def _axis_key(levels, cells, i: int, p: int, lat_scale: int):
    """int64 key of the i-th 1D node of the intervals (levels, cells)."""
    levels = np.asarray(levels, dtype=np.int64)
    cells = np.asarray(cells, dtype=np.int64)
    if i == 0:
        return cells << (lat_scale - levels)
    if i == p:
        return (cells + 1) << (lat_scale - levels)
    if p % 2 == 0 and i == p // 2:
        return ((cells << 1) + 1) << (lat_scale - levels - 1)
    return _INT_FLAG | (levels << 34) | (cells << 3) | np.int64(i)


def _row_index(table: np.ndarray):
    """Lookup callable mapping query rows to row indices of sorted `table`."""
    d = table.shape[1]
    dt = np.dtype([(f"f{a}", np.int64) for a in range(d)])
    tview = np.ascontiguousarray(table).view(dt).ravel()

    def lookup(queries: np.ndarray) -> np.ndarray:
        q = np.ascontiguousarray(queries.reshape(-1, d)).view(dt).ravel()
        pos = np.searchsorted(tview, q)
        pos = np.clip(pos, 0, len(tview) - 1)
        ok = tview[pos] == q
        return np.where(ok, pos, -1)

    return lookup


@dataclass
class DofMap:
    """Element-to-global maps of an order-p nodal space with hanging nodes."""

    dimension: int
    p: int
    n_points: int
    n_dofs: int
    elem_points: np.ndarray            # (N, nloc) point ids
    point_dof: np.ndarray              # (n_points,) dof id or -1 for hanging
    point_coords: np.ndarray           # (n_points, d)
    dof_boundary: np.ndarray           # (n_dofs,) True on the domain boundary
    elem_refs: np.ndarray              # (N, nloc) referenced dof ids
    elem_T: dict = field(default_factory=dict)      # element -> (nloc, nloc) matrix
    expansions: dict = field(default_factory=dict)  # hanging point -> (dof ids, weights)

    @property
    def nloc(self) -> int:
        return (self.p + 1) ** self.dimension

    @property
    def dof_coords(self) -> np.ndarray:
        return self.point_coords[self.point_dof >= 0]

    def has_hanging(self, e: int) -> bool:
        return int(e) in self.elem_T

    def transition(self, e: int) -> np.ndarray:
        """T_j of element e; identity when the element has no hanging node."""
        T = self.elem_T.get(int(e))
        if T is None:
            return np.eye(self.nloc)
        return T

    def element_values(self, e: int, u_dofs: np.ndarray) -> np.ndarray:
        """Local nodal values of the FE function with coefficients u_dofs."""
        vals = u_dofs[self.elem_refs[e]]
        T = self.elem_T.get(int(e))
        return vals if T is None else T @ vals


def enumerate_dofs(forest: Forest, p: int) -> DofMap:
    """Assign global dofs to non-hanging node points of a balanced forest."""
    if p not in SUPPORTED_ORDERS:
        raise ValueError(f"unsupported order {p}")
    if forest.dimension == 3 and p == 3:
        raise ValueError("order 3 is not supported in 3D")
    if not forest.is_balanced():
        raise UnbalancedForestError("enumerate_dofs requires a 2:1 balanced forest")

    d = forest.dimension
    N = forest.n_leaves
    levels = forest.levels
    coords = forest.coords()
    lat_scale = forest.max_level + 1
    nloc = (p + 1) ** d
    multi = local_multi_indices(p, d)
    t_nodes = lobatto_points(p)

    keys = np.empty((N, nloc, d), dtype=np.int64)
    for L in range(nloc):
        for a in range(d):
            keys[:, L, a] = _axis_key(levels, coords[:, a], int(multi[L, a]), p, lat_scale)

    pts, first, inv = np.unique(keys.reshape(-1, d), axis=0,
                                return_index=True, return_inverse=True)
    elem_points = inv.reshape(N, nloc).astype(np.int64)
    n_pts = len(pts)
    rep_elem = (first // nloc).astype(np.int64)
    rep_level = levels[rep_elem]

    is_int = (pts & _INT_FLAG) != 0
    int_level = (pts >> 34) & 63
    int_cell = (pts >> 3) & _CELL_MASK
    int_i = (pts & 7).astype(np.int64)

    gov_found, gov_cell = _governor_search(
        forest, pts, is_int, int_level, int_cell, rep_level, lat_scale, p)

    # point coordinates and boundary flags
    point_coords = np.empty((n_pts, d))
    boundary_pt = np.zeros(n_pts, dtype=bool)
    top = np.int64(1) << np.int64(lat_scale)
    for a in range(d):
        lat = ~is_int[:, a]
        X = pts[:, a]
        point_coords[:, a] = np.where(
            lat,
            X.astype(np.float64) / float(top),
            (int_cell[:, a] + t_nodes[np.clip(int_i[:, a], 0, p)]) / (2.0 ** int_level[:, a]),
        )
        boundary_pt |= lat & ((X == 0) | (X == top))

    hanging = gov_found
    point_dof = np.full(n_pts, -1, dtype=np.int64)
    point_dof[~hanging] = np.arange(int((~hanging).sum()))
    n_dofs = int((~hanging).sum())
    dof_boundary = boundary_pt[~hanging]

    expansions = _build_expansions(
        pts, hanging, gov_cell, rep_level, is_int, int_cell,
        lat_scale, p, t_nodes, point_dof)

    elem_refs, elem_T = _element_transitions(
        elem_points, hanging, point_dof, expansions, nloc)

    return DofMap(d, p, n_pts, n_dofs, elem_points, point_dof, point_coords,
                  dof_boundary, elem_refs, elem_T, expansions)


def _governor_search(forest, pts, is_int, int_level, int_cell, rep_level, lat_scale, p):
    """Find, per point, the coarser leaf whose trace constrains it (if any)."""
    d = forest.dimension
    n_pts = len(pts)
    g = rep_level - 1
    active = rep_level >= 1

    cand_hi = np.zeros((n_pts, d), dtype=np.int64)
    cand_lo = np.zeros((n_pts, d), dtype=np.int64)
    hi_ok = np.zeros((n_pts, d), dtype=bool)
    lo_ok = np.zeros((n_pts, d), dtype=bool)
    gsafe = np.maximum(g, 0)
    ncells = np.int64(1) << gsafe
    for a in range(d):
        lat = ~is_int[:, a]
        shift = lat_scale - gsafe
        X = pts[:, a]
        c_hi = X >> shift
        c_lo = (X - 1) >> shift
        # interior axis: single containing interval
        ishift = np.maximum(int_level[:, a] - gsafe, 0)
        c_int = int_cell[:, a] >> ishift
        cand_hi[:, a] = np.where(lat, c_hi, c_int)
        cand_lo[:, a] = np.where(lat, c_lo, c_int)
        hi_ok[:, a] = active & (cand_hi[:, a] >= 0) & (cand_hi[:, a] < ncells)
        lo_ok[:, a] = active & (cand_lo[:, a] >= 0) & (cand_lo[:, a] < ncells) \
            & (cand_lo[:, a] != cand_hi[:, a])

    best_free = np.full(n_pts, 99, dtype=np.int64)
    gov_found = np.zeros(n_pts, dtype=bool)
    gov_cell = np.zeros((n_pts, d), dtype=np.int64)

    for mask in range(1 << d):
        cell = np.empty((n_pts, d), dtype=np.int64)
        valid = active.copy()
        for a in range(d):
            use_lo = bool(mask & (1 << a))
            if use_lo:
                cell[:, a] = cand_lo[:, a]
                valid &= lo_ok[:, a]
            else:
                cell[:, a] = cand_hi[:, a]
                valid &= hi_ok[:, a]
        if not valid.any():
            continue
        leaf = np.full(n_pts, -1, dtype=np.int64)
        idx = np.nonzero(valid)[0]
        leaf[idx] = forest.leaf_index(gsafe[idx], morton_encode(cell[idx], d))
        exists = leaf >= 0

        member = exists.copy()
        n_free = np.zeros(n_pts, dtype=np.int64)
        for a in range(d):
            lat = ~is_int[:, a]
            shift = lat_scale - gsafe
            span = np.int64(1) << shift
            nm = pts[:, a] - (cell[:, a] << shift)
            m_ax = (nm == 0) | (nm == span)
            if p % 2 == 0:
                m_ax |= (nm << 1) == span
            clamped = (nm == 0) | (nm == span)
            member &= np.where(lat, m_ax, False)
            n_free += np.where(lat & clamped, 0, 1)
        found = exists & ~member
        better = found & (n_free < best_free)
        gov_found |= found
        gov_cell[better] = cell[better]
        best_free[better] = n_free[better]
    return gov_found, gov_cell


def _build_expansions(pts, hanging, gov_cell, rep_level, is_int, int_cell,
                      lat_scale, p, t_nodes, point_dof):
    """Resolve each hanging point into independent dofs with trace weights."""
    d = pts.shape[1]
    hang_ids = np.nonzero(hanging)[0]
    if len(hang_ids) == 0:
        return {}
    lookup = _row_index(pts)

    raw_rows: list[np.ndarray] = []
    raw_w: list[np.ndarray] = []
    raw_slices: list[tuple[int, int]] = []
    total = 0
    for h in hang_ids:
        g = int(rep_level[h]) - 1
        cell = gov_cell[h]
        ax_idx: list[np.ndarray] = []
        ax_w: list[np.ndarray] = []
        for a in range(d):
            if is_int[h, a]:
                b = int(int_cell[h, a]) - 2 * int(cell[a])
                rel = 0.5 * (b + t_nodes[int(pts[h, a] & 7)])
                ax_idx.append(np.arange(p + 1))
                ax_w.append(lagrange_eval(t_nodes, rel)[0])
            else:
                span = 1 << (lat_scale - g)
                nm = int(pts[h, a]) - int(cell[a]) * span
                if nm == 0:
                    ax_idx.append(np.array([0])); ax_w.append(np.array([1.0]))
                elif nm == span:
                    ax_idx.append(np.array([p])); ax_w.append(np.array([1.0]))
                else:
                    ax_idx.append(np.arange(p + 1))
                    ax_w.append(lagrange_eval(t_nodes, nm / span)[0])
        counts = [len(x) for x in ax_idx]
        nq = int(np.prod(counts))
        qrows = np.empty((nq, d), dtype=np.int64)
        qw = np.ones(nq)
        stride = 1
        for a in range(d):
            reps = np.tile(np.repeat(np.arange(counts[a]), stride), nq // (stride * counts[a]))
            qrows[:, a] = [_axis_key(g, int(cell[a]), int(ax_idx[a][r]), p, lat_scale)
                           for r in reps]
            qw *= ax_w[a][reps]
            stride *= counts[a]
        raw_rows.append(qrows)
        raw_w.append(qw)
        raw_slices.append((total, total + nq))
        total += nq

    all_rows = np.concatenate(raw_rows)
    q_pids = lookup(all_rows)
    if (q_pids < 0).any():
        raise ForestddError("hanging-node expansion references a missing node point")

    raw: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for k, h in enumerate(hang_ids):
        lo, hi = raw_slices[k]
        raw[int(h)] = (q_pids[lo:hi], raw_w[k])

    resolved: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def resolve(pid: int, depth: int = 0):
        if point_dof[pid] >= 0:
            return np.array([point_dof[pid]]), np.array([1.0])
        if pid in resolved:
            return resolved[pid]
        if depth > 32:
            raise ForestddError("constraint expansion did not terminate")
        ids, ws = raw[pid]
        acc: dict[int, float] = {}
        for q, w in zip(ids, ws):
            sub_ids, sub_ws = resolve(int(q), depth + 1)
            for sq, sw in zip(sub_ids, sub_ws):
                acc[int(sq)] = acc.get(int(sq), 0.0) + w * float(sw)
        out_ids = np.array(sorted(acc), dtype=np.int64)
        out_ws = np.array([acc[int(i)] for i in out_ids])
        resolved[pid] = (out_ids, out_ws)
        return resolved[pid]

    for h in hang_ids:
        resolve(int(h))
    return resolved


def _element_transitions(elem_points, hanging, point_dof, expansions, nloc):
    """Per-element referenced dofs and transition matrices."""
    N = elem_points.shape[0]
    elem_refs = point_dof[elem_points]
    elem_T: dict[int, np.ndarray] = {}
    has_hang = hanging[elem_points].any(axis=1)
    for e in np.nonzero(has_hang)[0]:
        slots: dict[int, int] = {}
        entries: list[list[tuple[int, float]]] = []
        for L in range(nloc):
            pid = int(elem_points[e, L])
            if point_dof[pid] >= 0:
                ids, ws = np.array([point_dof[pid]]), np.array([1.0])
            else:
                ids, ws = expansions[pid]
            row = []
            for q, w in zip(ids, ws):
                q = int(q)
                if q not in slots:
                    slots[q] = len(slots)
                row.append((slots[q], float(w)))
            entries.append(row)
        if len(slots) != nloc:
            raise ForestddError(
                f"element {e} references {len(slots)} global dofs, expected {nloc}")
        refs = np.empty(nloc, dtype=np.int64)
        for dof, s in slots.items():
            refs[s] = dof
        T = np.zeros((nloc, nloc))
        for L, row in enumerate(entries):
            for s, w in row:
                T[L, s] = w
        elem_refs[e] = refs
        elem_T[int(e)] = T
    return elem_refs, elem_T


def evaluate_in_element(forest: Forest, dofmap: DofMap, e: int,
                        x_phys: np.ndarray, u_dofs: np.ndarray) -> np.ndarray:
    """Evaluate the FE function at physical points inside element e."""
    x_phys = np.atleast_2d(np.asarray(x_phys, dtype=np.float64))
    h = float(forest.cell_size()[e])
    lo = forest.cell_lower()[e]
    xref = (x_phys - lo) / h
    t = lobatto_points(dofmap.p)
    vals = dofmap.element_values(e, u_dofs)
    basis = np.ones((len(xref), dofmap.nloc))
    multi = local_multi_indices(dofmap.p, dofmap.dimension)
    for a in range(dofmap.dimension):
        one_d = lagrange_eval(t, xref[:, a])
        basis *= one_d[:, multi[:, a]]
    return basis @ vals


def dump_dofmap(dofmap: DofMap, path_or_file) -> None:
    """Text dump: per element its referenced dofs and any transition matrix."""
    close = False
    f = path_or_file
    if isinstance(path_or_file, (str, bytes)):
        f = open(path_or_file, "w")
        close = True
    try:
        N = dofmap.elem_refs.shape[0]
        f.write(f"{N} {dofmap.n_dofs} {dofmap.p} {dofmap.dimension}\n")
        for e in range(N):
            f.write(" ".join(str(int(r)) for r in dofmap.elem_refs[e]))
            T = dofmap.elem_T.get(e)
            f.write(" identity\n" if T is None else " T\n")
            if T is not None:
                for row in T:
                    f.write(" ".join(f"{v:.17g}" for v in row) + "\n")
    finally:
        if close:
            f.close()
