"""Interface classification and glob grouping.

A free dof referenced by elements of two or more subdomains is an
interface dof.  Interface dofs are grouped into globs keyed by the full
set of (subdomain, component) pairs referencing them, so disconnected
subdomain components get their own globs.  This module is generic over
"elements": at the fine level they are mesh cells, at coarser BDDC
levels they are subdomains with their coarse dofs as refs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class SubdomainInterface:
    dofs: np.ndarray        # global free dof ids referenced by this subdomain, sorted
    interior: np.ndarray    # local indices into dofs (multiplicity 1)
    gamma: np.ndarray       # local indices into dofs (multiplicity >= 2)
    gamma_pos: np.ndarray   # position of each gamma dof in the global interface array


@dataclass
class InterfaceClassification:
    n_free: int
    gamma_dofs: np.ndarray      # sorted global free dof ids on the interface
    multiplicity: np.ndarray    # number of subdomains sharing each gamma dof
    subs: list[SubdomainInterface]

    @property
    def n_gamma(self) -> int:
        return len(self.gamma_dofs)


def _ref_arrays(elem_refs, owner, n_sub):
    owner = np.asarray(owner, dtype=np.int64)
    if isinstance(elem_refs, np.ndarray):
        flat = elem_refs.reshape(len(owner), -1)
        return [flat[owner == s].ravel() for s in range(n_sub)]
    out = [[] for _ in range(n_sub)]
    for refs, s in zip(elem_refs, owner):
        out[int(s)].append(np.asarray(refs, dtype=np.int64).ravel())
    return [np.concatenate(r) if r else np.empty(0, np.int64) for r in out]


def classify_interface(elem_refs, owner, n_sub: int, free_of_dof: np.ndarray,
                       n_free: int) -> InterfaceClassification:
    """Multiplicity-based interior/interface split of free dofs.

    elem_refs: (N, nloc) array or list of per-element ref arrays (dof ids);
    free_of_dof maps dof id -> free id or -1 for Dirichlet-fixed dofs.
    """
    per_sub = _ref_arrays(elem_refs, owner, n_sub)
    sub_sets = []
    mult = np.zeros(n_free, dtype=np.int64)
    for refs in per_sub:
        free = free_of_dof[refs]
        ids = np.unique(free[free >= 0])
        sub_sets.append(ids)
        mult[ids] += 1
    gamma_dofs = np.nonzero(mult >= 2)[0]
    subs = []
    for ids in sub_sets:
        on_gamma = mult[ids] >= 2
        subs.append(SubdomainInterface(
            dofs=ids,
            interior=np.nonzero(~on_gamma)[0],
            gamma=np.nonzero(on_gamma)[0],
            gamma_pos=np.searchsorted(gamma_dofs, ids[on_gamma]),
        ))
    return InterfaceClassification(n_free, gamma_dofs, mult[gamma_dofs], subs)


@dataclass
class Glob:
    dofs: np.ndarray                       # global free dof ids
    signature: tuple                       # sorted tuple of (subdomain, component)
    kind: str                              # "vertex" | "face" | "edge"


def classify_globs(classification: InterfaceClassification, elem_refs, owner,
                   elem_comp, free_of_dof: np.ndarray) -> list[Glob]:
    """Group interface dofs by their (subdomain, component) signatures."""
    owner = np.asarray(owner, dtype=np.int64)
    elem_comp = np.asarray(elem_comp, dtype=np.int64)
    if isinstance(elem_refs, np.ndarray):
        refs_flat = elem_refs.reshape(len(owner), -1)
        width = refs_flat.shape[1]
        dof = free_of_dof[refs_flat.ravel()]
        sub = np.repeat(owner, width)
        comp = np.repeat(elem_comp, width)
    else:
        dof_l, sub_l, comp_l = [], [], []
        for e, refs in enumerate(elem_refs):
            refs = np.asarray(refs, dtype=np.int64).ravel()
            dof_l.append(free_of_dof[refs])
            sub_l.append(np.full(len(refs), owner[e]))
            comp_l.append(np.full(len(refs), elem_comp[e]))
        dof = np.concatenate(dof_l); sub = np.concatenate(sub_l); comp = np.concatenate(comp_l)

    gamma = classification.gamma_dofs
    pos = np.searchsorted(gamma, np.clip(dof, 0, None))
    pos = np.clip(pos, 0, max(len(gamma) - 1, 0))
    on_gamma = (dof >= 0) & (len(gamma) > 0)
    if len(gamma):
        on_gamma &= gamma[pos] == dof
    trip = np.unique(np.stack([dof[on_gamma], sub[on_gamma], comp[on_gamma]], axis=1), axis=0)

    sig_of: dict[int, list] = {}
    for t in trip:
        sig_of.setdefault(int(t[0]), []).append((int(t[1]), int(t[2])))
    groups: dict[tuple, list[int]] = {}
    for dof_id in sorted(sig_of):
        sig = tuple(sorted(sig_of[dof_id]))
        groups.setdefault(sig, []).append(dof_id)

    globs = []
    for sig, dofs in sorted(groups.items(), key=lambda kv: kv[1][0]):
        if len(dofs) == 1:
            kind = "vertex"
        elif len(sig) == 2:
            kind = "face"
        else:
            kind = "edge"
        globs.append(Glob(np.asarray(dofs, dtype=np.int64), sig, kind))
    return globs
