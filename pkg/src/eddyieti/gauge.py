"""Tree-cotree gauging and the eliminated / primal / remaining DOF split.

The spanning tree is grown in phases over edge classes: the Dirichlet
skeleton, then the wirebasket, then interface faces, then subdomain
interiors.  Within a phase edges are admitted breadth-first from the current
tree, and a union-find structure rejects every edge that would close a cycle.
Each phase therefore leaves a maximal spanning forest of everything admitted
so far.
"""
from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConstructionError, InputError
from .topology import ControlGraph, DofClass, DofKind, PatchGrid, Region

__all__ = [
    "PHASES",
    "SpanningTree",
    "EliminationKind",
    "DofPartition",
    "CouplingMatrices",
    "build_tree",
    "partition_dofs",
    "build_coupling",
    "gauge_fixed_dimension_report",
    "UnionFind",
]

PHASES = (
    ("dirichlet", (DofKind.DIRICHLET,)),
    ("wirebasket", (DofKind.WIREBASKET,)),
    ("face", (DofKind.FACE,)),
    ("interior", (DofKind.INTERIOR,)),
)


class UnionFind:
    def __init__(self, n: int):
        self.parent = np.arange(n)
        self.rank = np.zeros(n, dtype=np.int64)

    def find(self, v: int) -> int:
        root = v
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[v] != root:
            self.parent[v], v = root, self.parent[v]
        return int(root)

    def union(self, u: int, v: int) -> bool:
        ru, rv = self.find(u), self.find(v)
        if ru == rv:
            return False
        if self.rank[ru] < self.rank[rv]:
            ru, rv = rv, ru
        self.parent[rv] = ru
        if self.rank[ru] == self.rank[rv]:
            self.rank[ru] += 1
        return True


@dataclass(frozen=True, eq=False)
class SpanningTree:
    edges: np.ndarray  # tree edge ids in admission order
    phase_of_edge: np.ndarray  # phase index per tree edge
    parent_edge: np.ndarray  # per vertex, tree edge towards the root (-1 at root)
    ordering: str
    log: tuple  # construction log lines

    def contains(self, n_edges: int) -> np.ndarray:
        m = np.zeros(n_edges, dtype=bool)
        m[self.edges] = True
        return m


def build_tree(graph: ControlGraph, ordering: str = "lex") -> SpanningTree:
    """Phase-ordered breadth-first spanning tree of the control graph.

    ``ordering`` is ``"lex"`` (ascending edge and vertex ids) or
    ``"reverse"`` (descending), the latter for gauge-invariance checks.
    """
    if ordering not in ("lex", "reverse"):
        raise InputError(f"unknown tree ordering {ordering!r}")
    if not graph.is_connected():
        raise ConstructionError("cannot span a disconnected control graph")
    rev = ordering == "reverse"
    nv = graph.n_vertices
    uf = UnionFind(nv)
    in_tree = np.zeros(nv, dtype=bool)
    tree, phases, log = [], [], []

    for phase, (name, kinds) in enumerate(PHASES):
        allowed = np.isin(graph.edge_kind, kinds)
        n_before = len(tree)
        candidates = np.flatnonzero(allowed)
        if rev:
            candidates = candidates[::-1]
        touched = np.zeros(nv, dtype=bool)
        touched[graph.edges[candidates].ravel()] = True
        seeds = np.flatnonzero(in_tree & touched)
        queue = deque(seeds[::-1] if rev else seeds)
        roots = deque(np.flatnonzero(touched)[::-1] if rev else np.flatnonzero(touched))
        seen = np.zeros(nv, dtype=bool)
        seen[seeds] = True
        while True:
            while queue:
                v = queue.popleft()
                inc = graph.incident_edges(v)
                inc = inc[allowed[inc]]
                inc = np.sort(inc)[::-1] if rev else np.sort(inc)
                for e in inc:
                    a, b = graph.edges[e]
                    u = b if a == v else a
                    if uf.union(int(v), int(u)):
                        tree.append(int(e))
                        phases.append(phase)
                        in_tree[[v, u]] = True
                        log.append(f"{name} edge={int(e)} {int(v)}->{int(u)}")
                    if not seen[u]:
                        seen[u] = True
                        queue.append(u)
            while roots and seen[roots[0]]:
                roots.popleft()
            if not roots:
                break
            r = roots.popleft()
            seen[r] = True
            queue.append(r)
            log.append(f"{name} root={int(r)}")
        log.append(f"{name} done added={len(tree) - n_before}")

    if len(tree) != nv - 1:
        raise ConstructionError(f"tree has {len(tree)} edges for {nv} vertices")
    tree_arr = np.array(tree, dtype=np.int64)
    parent = _parent_edges(graph, tree_arr)
    return SpanningTree(tree_arr, np.array(phases, dtype=np.int8), parent, ordering, tuple(log))


def _parent_edges(graph: ControlGraph, tree: np.ndarray) -> np.ndarray:
    nv = graph.n_vertices
    adj = [[] for _ in range(nv)]
    for e in tree:
        a, b = graph.edges[e]
        adj[a].append((b, e))
        adj[b].append((a, e))
    parent = np.full(nv, -2, dtype=np.int64)
    parent[0] = -1
    queue = deque([0])
    while queue:
        v = queue.popleft()
        for u, e in adj[v]:
            if parent[u] == -2:
                parent[u] = e
                queue.append(u)
    if np.any(parent == -2):
        raise ConstructionError("tree does not span the graph")
    return parent


class EliminationKind(enum.IntEnum):
    DIRICHLET = 0
    GAUGE = 1


@dataclass(frozen=True, eq=False)
class DofPartition:
    """Per-subdomain E/P/R index sets and the global primal groups.

    ``primal_groups`` lists the glued edge of every primal unknown;
    ``primal_group_of[s]`` gives, for each entry of ``P[s]``, its group.
    """

    E: tuple
    P: tuple
    R: tuple
    e_kind: tuple
    primal_groups: np.ndarray
    primal_group_of: tuple
    tree_mask: np.ndarray

    @property
    def n_subdomains(self) -> int:
        return len(self.R)

    @property
    def n_primal(self) -> int:
        return len(self.primal_groups)


def partition_dofs(tree: SpanningTree, graph: ControlGraph, classes: DofClass, grid: PatchGrid) -> DofPartition:
    """Split every local DOF into eliminated, primal or remaining.

    Precedence: DIRICHLET > PRIMAL > GAUGE > REMAINING.  PRIMAL are tree
    edges on interfaces touching a conductor plus every cotree wirebasket
    edge; GAUGE are the other tree edges inside the insulating region,
    including interfaces between two insulators.  Conductor-interior tree
    DOFs remain.

    The cotree wirebasket edges keep each insulating subdomain's local
    problem nonsingular: the global tree restricted to one subdomain can
    split into pieces joined only through a neighbour's wirebasket.
    """
    in_tree = tree.contains(classes.n_edges)
    kind = classes.edge_kind
    interface = np.isin(kind, (DofKind.FACE, DofKind.WIREBASKET))
    touches_conductor = np.array(
        [any(grid.region_of(s) is Region.CONDUCTOR for s in owners) for owners in classes.edge_owners]
    )
    primal_mask = (in_tree & interface & touches_conductor) | (~in_tree & (kind == DofKind.WIREBASKET))
    primal_edges = np.flatnonzero(primal_mask)
    group_index = {int(g): k for k, g in enumerate(primal_edges)}

    Es, Ps, Rs, kinds, groups = [], [], [], [], []
    for s, l2g in enumerate(classes.local_to_global):
        lk = kind[l2g]
        lt = in_tree[l2g]
        dirichlet = lk == DofKind.DIRICHLET
        primal = primal_mask[l2g]
        gauge = ~dirichlet & ~primal & lt
        if grid.region_of(s) is not Region.INSULATOR:
            gauge[:] = False
        elim = dirichlet | gauge
        remaining = ~(elim | primal)
        E = np.flatnonzero(elim)
        P = np.flatnonzero(primal)
        R = np.flatnonzero(remaining)
        if len(E) + len(P) + len(R) != len(l2g):
            raise ConstructionError(f"unassigned DOFs in subdomain {s}")
        Es.append(E)
        Ps.append(P)
        Rs.append(R)
        kinds.append(np.where(dirichlet[E], EliminationKind.DIRICHLET, EliminationKind.GAUGE).astype(np.int8))
        groups.append(np.array([group_index[int(g)] for g in l2g[P]], dtype=np.int64))
    return DofPartition(tuple(Es), tuple(Ps), tuple(Rs), tuple(kinds), primal_edges, tuple(groups), in_tree)


def _sign_order(owners, grid: PatchGrid):
    # conductor side first so that C/I rows read  a_C - a_I
    return sorted(owners, key=lambda s: (grid.region_of(s) is not Region.CONDUCTOR, s))


@dataclass(frozen=True, eq=False)
class CouplingMatrices:
    """Signed Boolean jump operators and the primal assembly matrices.

    ``B_rr[s]`` is the block acting on ``R[s]``; ``B_pp[s]`` acts on ``P[s]``;
    ``N[s]`` maps the primal unknowns onto ``P[s]``.
    """

    B_rr: tuple
    B_pp: tuple
    N: tuple
    rows: tuple  # (interface pair, glued edge) per B_rr row
    pp_rows: tuple

    @property
    def m_r(self) -> int:
        return self.B_rr[0].shape[0] if self.B_rr else 0

    def stacked_B_rr(self) -> sp.csr_matrix:
        return sp.hstack(self.B_rr, format="csr")

    def stacked_B_pp(self) -> sp.csr_matrix:
        return sp.hstack(self.B_pp, format="csr")

    def stacked_N(self) -> sp.csr_matrix:
        return sp.vstack(self.N, format="csr")


def _jump_rows(edges, classes: DofClass, grid: PatchGrid):
    """Chain constraints over coincident copies, sorted by (interface, edge)."""
    rows = []
    for g in edges:
        owners = _sign_order(classes.edge_owners[g], grid)
        for s, t in zip(owners[:-1], owners[1:]):
            rows.append(((s, t), int(g)))
    rows.sort(key=lambda r: (tuple(sorted(r[0])), r[1]))
    return rows


def _jump_matrix(rows, local_sets, classes: DofClass, n_sub: int):
    positions = []
    for s in range(n_sub):
        l2g = classes.local_to_global[s]
        positions.append({int(l2g[l]): k for k, l in enumerate(local_sets[s])})
    data = [([], [], []) for _ in range(n_sub)]
    for i, ((s, t), g) in enumerate(rows):
        for sub, sign in ((s, 1.0), (t, -1.0)):
            if g not in positions[sub]:
                raise ConstructionError(f"edge {g} is not in the index set of subdomain {sub}")
            r, c, v = data[sub]
            r.append(i)
            c.append(positions[sub][g])
            v.append(sign)
    m = len(rows)
    return tuple(
        sp.csr_matrix((v, (r, c)), shape=(m, len(local_sets[s]))) for s, (r, c, v) in enumerate(data)
    )


def build_coupling(partition: DofPartition, classes: DofClass, grid: PatchGrid) -> CouplingMatrices:
    n_sub = partition.n_subdomains
    kind = classes.edge_kind
    interface = np.isin(kind, (DofKind.FACE, DofKind.WIREBASKET))
    is_primal = np.zeros(len(kind), dtype=bool)
    is_primal[partition.primal_groups] = True
    remaining_iface = np.flatnonzero(interface & ~partition.tree_mask & ~is_primal)
    rows = _jump_rows(remaining_iface, classes, grid)
    B_rr = _jump_matrix(rows, partition.R, classes, n_sub)
    pp_rows = _jump_rows(partition.primal_groups, classes, grid)
    B_pp = _jump_matrix(pp_rows, partition.P, classes, n_sub)

    n_groups = partition.n_primal
    members = np.zeros(n_groups, dtype=int)
    N = []
    for s in range(n_sub):
        grp = partition.primal_group_of[s]
        np.add.at(members, grp, 1)
        N.append(sp.csr_matrix((np.ones(len(grp)), (np.arange(len(grp)), grp)), shape=(len(grp), n_groups)))
    if np.any(members < 2):
        bad = int(partition.primal_groups[np.flatnonzero(members < 2)[0]])
        raise ConstructionError(f"primal group of edge {bad} has members in only one subdomain")
    return CouplingMatrices(B_rr, B_pp, tuple(N), tuple(rows), tuple(pp_rows))


@dataclass(frozen=True)
class DimensionReport:
    n_total: tuple
    n_e: tuple
    n_p: tuple
    n_r: tuple
    pri: int
    m_r: int


def gauge_fixed_dimension_report(partition: DofPartition, coupling: CouplingMatrices | None = None) -> DimensionReport:
    n_e = tuple(len(e) for e in partition.E)
    n_p = tuple(len(p) for p in partition.P)
    n_r = tuple(len(r) for r in partition.R)
    n_total = tuple(a + b + c for a, b, c in zip(n_e, n_p, n_r))
    m_r = coupling.m_r if coupling is not None else 0
    return DimensionReport(n_total, n_e, n_p, n_r, partition.n_primal, m_r)
