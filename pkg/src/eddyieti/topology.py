"""Patch grids on a box, glued DOF numbering, DOF classes and the control graph.

Every patch is one subdomain.  Interface DOFs are matched through the glued
tensor index of their control edge, never through floating-point positions.
Global edges live on the glued scalar vertex grid of shape ``(N_x, N_y, N_z)``;
an edge of direction ``a`` is identified by its lower endpoint.
"""
from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, ConstructionError
from .spline_core import CurlSpace, build_curl_space

__all__ = [
    "Region",
    "DofKind",
    "Patch",
    "PatchGrid",
    "DofClass",
    "ControlGraph",
    "build_patch_grid",
    "build_spaces",
    "classify_dofs",
    "build_control_graph",
    "default_conductor",
]


class Region(enum.Enum):
    CONDUCTOR = "conductor"
    INSULATOR = "insulator"


class DofKind(enum.IntEnum):
    """DOF classes; a larger value wins where classes overlap."""

    INTERIOR = 0
    FACE = 1
    WIREBASKET = 2
    DIRICHLET = 3


@dataclass(frozen=True)
class Patch:
    index: int
    position: tuple  # (px, py, pz)
    box: tuple  # ((x0, x1), (y0, y1), (z0, z1))
    region: Region
    divisions: tuple  # elements per direction


@dataclass(frozen=True)
class PatchGrid:
    domain: tuple
    counts: tuple
    divisions: tuple  # global elements per direction
    patches: tuple

    @property
    def n_patches(self) -> int:
        return len(self.patches)

    def patch_at(self, position) -> Patch:
        px, py, pz = position
        Px, Py, _ = self.counts
        return self.patches[px + Px * (py + Py * pz)]

    def face_neighbors(self):
        """Pairs ``(s, t, axis)`` with s < t sharing a full face normal to ``axis``."""
        pairs = []
        for patch in self.patches:
            for axis in range(3):
                pos = list(patch.position)
                pos[axis] += 1
                if pos[axis] < self.counts[axis]:
                    other = self.patch_at(pos)
                    pairs.append((patch.index, other.index, axis))
        return sorted(pairs)

    def region_of(self, s: int) -> Region:
        return self.patches[s].region

    @property
    def conductors(self) -> list:
        return [p.index for p in self.patches if p.region is Region.CONDUCTOR]

    @property
    def insulators(self) -> list:
        return [p.index for p in self.patches if p.region is Region.INSULATOR]


def default_conductor(center) -> bool:
    """Conductor predicate of the reference experiment: x < 0.5."""
    return center[0] < 0.5


def _is_connected(nodes, pairs) -> bool:
    nodes = set(nodes)
    if len(nodes) <= 1:
        return True
    adj = {n: [] for n in nodes}
    for s, t, _ in pairs:
        if s in nodes and t in nodes:
            adj[s].append(t)
            adj[t].append(s)
    start = min(nodes)
    seen = {start}
    queue = deque([start])
    while queue:
        n = queue.popleft()
        for m in adj[n]:
            if m not in seen:
                seen.add(m)
                queue.append(m)
    return seen == nodes


def build_patch_grid(
    domain=((0.0, 1.0), (0.0, 1.0), (0.0, 1.0)),
    counts=(2, 1, 1),
    conductor=default_conductor,
    divisions=(2, 2, 2),
) -> PatchGrid:
    """Tile ``domain`` with ``counts`` patches and tag each by region.

    ``conductor`` is a predicate on the patch center.  ``divisions`` are
    global element counts per direction and must be divisible by ``counts``.
    """
    counts = tuple(int(c) for c in counts)
    if isinstance(divisions, int):
        divisions = (divisions,) * 3
    divisions = tuple(int(d) for d in divisions)
    if len(counts) != 3 or min(counts) < 1:
        raise ConfigurationError(f"patch counts must be three positive integers, got {counts}")
    if min(divisions) < 1:
        raise ConfigurationError(f"divisions must be positive, got {divisions}")
    for d, c in zip(divisions, counts):
        if d % c:
            raise ConfigurationError(f"divisions {divisions} not divisible by patch counts {counts}")
    domain = tuple((float(lo), float(hi)) for lo, hi in domain)
    if any(not lo < hi for lo, hi in domain):
        raise ConfigurationError(f"degenerate domain {domain}")

    # breakpoints in exact arithmetic so that neighboring boxes share bit-identical ends
    cuts = []
    for (lo, hi), c in zip(domain, counts):
        flo, fhi = Fraction(lo), Fraction(hi)
        cuts.append([float(flo + (fhi - flo) * Fraction(k, c)) for k in range(c + 1)])
    per_patch = tuple(d // c for d, c in zip(divisions, counts))

    patches = []
    Px, Py, Pz = counts
    for pz in range(Pz):
        for py in range(Py):
            for px in range(Px):
                pos = (px, py, pz)
                box = tuple((cuts[d][pos[d]], cuts[d][pos[d] + 1]) for d in range(3))
                center = tuple(0.5 * (lo + hi) for lo, hi in box)
                region = Region.CONDUCTOR if conductor(center) else Region.INSULATOR
                index = px + Px * (py + Py * pz)
                patches.append(Patch(index, pos, box, region, per_patch))
    grid = PatchGrid(domain, counts, divisions, tuple(patches))

    pairs = grid.face_neighbors()
    for nodes, name in ((grid.conductors, "conductor"), (grid.insulators, "insulator")):
        if not _is_connected(nodes, pairs):
            raise ConfigurationError(f"{name} patches do not form a face-connected set")
    return grid


def build_spaces(grid: PatchGrid, p: int) -> list:
    return [build_curl_space(p, patch.divisions, patch.box) for patch in grid.patches]


@dataclass(frozen=True, eq=False)
class DofClass:
    """Classification of glued edges and its per-subdomain view.

    ``edge_kind`` and ``edge_owners`` are indexed by global edge id;
    ``local_to_global[s]`` maps the local DOFs of subdomain ``s`` to edges.
    """

    vertex_dims: tuple
    edge_offsets: tuple
    edge_kind: np.ndarray
    edge_owners: tuple  # per edge: sorted tuple of subdomains containing it
    local_to_global: tuple
    vertex_multiplicity: np.ndarray

    @property
    def n_edges(self) -> int:
        return len(self.edge_kind)

    def local_kind(self, s: int) -> np.ndarray:
        return self.edge_kind[self.local_to_global[s]]

    def interface_id(self, edge: int) -> tuple:
        return self.edge_owners[edge]

    def is_interface(self) -> np.ndarray:
        return np.array([len(o) > 1 for o in self.edge_owners])

    @property
    def global_to_local(self) -> list:
        """Per edge, the list of ``(subdomain, local index)`` pairs."""
        table = [[] for _ in range(self.n_edges)]
        for s, l2g in enumerate(self.local_to_global):
            for l, g in enumerate(l2g):
                table[g].append((s, l))
        return table

    def partners(self, s: int, l: int) -> list:
        g = self.local_to_global[s][l]
        out = []
        for t in self.edge_owners[g]:
            if t != s:
                lt = int(np.flatnonzero(self.local_to_global[t] == g)[0])
                out.append((t, lt))
        return out


def vertex_offsets(grid: PatchGrid, p: int):
    """Glued vertex offset of every patch and the glued vertex grid shape."""
    per = grid.patches[0].divisions
    offsets = []
    for patch in grid.patches:
        offsets.append(tuple(patch.position[d] * (per[d] + p - 1) for d in range(3)))
    dims = tuple(grid.counts[d] * (per[d] + p - 1) + 1 for d in range(3))
    return offsets, dims


def _edge_grid_shapes(dims):
    return [tuple(dims[d] - 1 if d == a else dims[d] for d in range(3)) for a in range(3)]


def _check_conforming(grid: PatchGrid, spaces) -> None:
    for s, t, axis in grid.face_neighbors():
        for d in range(3):
            if d == axis:
                continue
            if spaces[s].kvs[d] != spaces[t].kvs[d]:
                raise ConstructionError(f"non-conforming traces between patches {s} and {t}")
        if spaces[s].box[axis][1] != spaces[t].box[axis][0]:
            raise ConstructionError(f"patches {s} and {t} do not touch")


def classify_dofs(grid: PatchGrid, spaces) -> DofClass:
    """Glue the patch spaces and classify every control edge.

    DIRICHLET: tangential on the domain boundary.  WIREBASKET: shared by two
    or more subdomains with both endpoints shared by at least three.  FACE:
    any other shared edge.  INTERIOR: the rest.
    """
    p = spaces[0].degree
    if any(sp_.degree != p for sp_ in spaces):
        raise ConstructionError("all patches must share one degree")
    _check_conforming(grid, spaces)
    offsets, dims = vertex_offsets(grid, p)
    eshapes = _edge_grid_shapes(dims)
    esizes = [int(np.prod(s)) for s in eshapes]
    eoff = tuple(int(o) for o in np.concatenate([[0], np.cumsum(esizes)]))
    n_edges = eoff[3]

    local_to_global = []
    vmult = np.zeros(dims[::-1], dtype=int)  # (z, y, x)
    for s, space in enumerate(spaces):
        o = offsets[s]
        nx, ny, nz = space.scalar_dims
        vmult[o[2] : o[2] + nz, o[1] : o[1] + ny, o[0] : o[0] + nx] += 1
        l2g = np.empty(space.n_dofs, dtype=np.int64)
        for a, idx in enumerate(space.index_maps()):
            g = idx + np.asarray(o)
            ex, ey, _ = eshapes[a]
            l2g[space.offsets[a] : space.offsets[a + 1]] = eoff[a] + g[:, 0] + ex * (g[:, 1] + ey * g[:, 2])
        local_to_global.append(l2g)

    owners = [[] for _ in range(n_edges)]
    for s, l2g in enumerate(local_to_global):
        for g in l2g:
            owners[g].append(s)
    owners = tuple(tuple(sorted(o)) for o in owners)

    kind = np.full(n_edges, DofKind.INTERIOR, dtype=np.int8)
    vflat = vmult.ravel()
    for a in range(3):
        ex, ey, ez = eshapes[a]
        k, j, i = np.meshgrid(np.arange(ez), np.arange(ey), np.arange(ex), indexing="ij")
        i, j, k = i.ravel(), j.ravel(), k.ravel()
        ids = eoff[a] + i + ex * (j + ey * k)
        idx = (i, j, k)
        on_boundary = np.zeros(len(ids), dtype=bool)
        for d in range(3):
            if d != a:
                on_boundary |= (idx[d] == 0) | (idx[d] == dims[d] - 1)
        v1 = i + dims[0] * (j + dims[1] * k)
        stride = (1, dims[0], dims[0] * dims[1])[a]
        v2 = v1 + stride
        mult = np.array([len(owners[g]) for g in ids])
        wb = (mult >= 2) & (vflat[v1] >= 3) & (vflat[v2] >= 3)
        kk = np.where(mult >= 2, DofKind.FACE, DofKind.INTERIOR)
        kk = np.where(wb, DofKind.WIREBASKET, kk)
        kk = np.where(on_boundary, DofKind.DIRICHLET, kk)
        kind[ids] = kk
    return DofClass(dims, eoff, kind, owners, tuple(local_to_global), vflat)


@dataclass(frozen=True, eq=False)
class ControlGraph:
    """Glued control mesh: scalar control points as vertices, DOFs as edges."""

    n_vertices: int
    edges: np.ndarray  # (n_edges, 2) endpoint vertex ids
    edge_kind: np.ndarray
    edge_regions: tuple  # per edge: frozenset of regions of its owners
    local_to_global: tuple
    adjacency: sp.csr_matrix = field(repr=False)  # vertex x edge incidence (pattern)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def incident_edges(self, v: int) -> np.ndarray:
        a = self.adjacency
        return a.indices[a.indptr[v] : a.indptr[v + 1]]

    def is_connected(self) -> bool:
        seen = np.zeros(self.n_vertices, dtype=bool)
        seen[0] = True
        queue = deque([0])
        while queue:
            v = queue.popleft()
            for e in self.incident_edges(v):
                for u in self.edges[e]:
                    if not seen[u]:
                        seen[u] = True
                        queue.append(u)
        return bool(seen.all())


def build_control_graph(grid: PatchGrid, spaces, classes: DofClass) -> ControlGraph:
    dims = classes.vertex_dims
    eshapes = _edge_grid_shapes(dims)
    n_vertices = int(np.prod(dims))
    ends = np.empty((classes.n_edges, 2), dtype=np.int64)
    for a in range(3):
        ex, ey, ez = eshapes[a]
        k, j, i = np.meshgrid(np.arange(ez), np.arange(ey), np.arange(ex), indexing="ij")
        ids = classes.edge_offsets[a] + (i + ex * (j + ey * k)).ravel()
        v1 = (i + dims[0] * (j + dims[1] * k)).ravel()
        stride = (1, dims[0], dims[0] * dims[1])[a]
        ends[ids, 0] = v1
        ends[ids, 1] = v1 + stride
    regions = tuple(frozenset(grid.region_of(s) for s in o) for o in classes.edge_owners)
    rows = ends.ravel()
    cols = np.repeat(np.arange(classes.n_edges), 2)
    adjacency = sp.csr_matrix(
        (np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n_vertices, classes.n_edges)
    )
    adjacency.sort_indices()
    graph = ControlGraph(n_vertices, ends, classes.edge_kind, regions, classes.local_to_global, adjacency)
    if not graph.is_connected():
        raise ConstructionError("control graph is not connected")
    return graph


def check_tiling(grid: PatchGrid) -> bool:
    """Exact volume check of the tiling in rational arithmetic."""
    total = Fraction(1)
    for lo, hi in grid.domain:
        total *= Fraction(hi) - Fraction(lo)
    acc = Fraction(0)
    for patch in grid.patches:
        v = Fraction(1)
        for lo, hi in patch.box:
            v *= Fraction(hi) - Fraction(lo)
        acc += v
    return acc == total
