"""Implicit Euler time loop, error accumulation and observed orders."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import assembly
from .assembly import DirichletInterpolator
from .errors import InputError
from .gauge import (
    CouplingMatrices,
    DofPartition,
    EliminationKind,
    build_coupling,
    build_tree,
    partition_dofs,
)
from .ietidp import StepSystem, euler_residual, interface_jump, monolithic_solve, solve_step
from .manufactured import CaseConfig, exact_A, exact_B, source_for
from .topology import (
    ControlGraph,
    DofClass,
    PatchGrid,
    Region,
    build_control_graph,
    build_patch_grid,
    build_spaces,
    classify_dofs,
)

log = logging.getLogger(__name__)

__all__ = [
    "Discretization",
    "discretize",
    "MarchState",
    "ErrorReport",
    "consistent_initial",
    "march",
    "observed_order",
]


@dataclass(eq=False)
class Discretization:
    """Everything that depends on the mesh but not on the time step."""

    grid: PatchGrid
    spaces: list
    classes: DofClass
    graph: ControlGraph
    partition: DofPartition
    coupling: CouplingMatrices
    K: list
    M: list  # None on insulators
    case: CaseConfig
    tree: object = None
    interpolators: list = field(default_factory=list)

    @property
    def degree(self) -> int:
        return self.spaces[0].degree

    @property
    def pri(self) -> int:
        return self.partition.n_primal

    def conductors(self):
        return [s for s in range(self.grid.n_patches) if self.grid.region_of(s) is Region.CONDUCTOR]


def discretize(
    p: int,
    divs: int,
    patches=(2, 1, 1),
    case: CaseConfig | None = None,
    tree_order: str = "lex",
) -> Discretization:
    case = case or CaseConfig()
    grid = build_patch_grid(case.domain, patches, case.conductor, divs)
    spaces = build_spaces(grid, p)
    classes = classify_dofs(grid, spaces)
    graph = build_control_graph(grid, spaces, classes)
    tree = build_tree(graph, tree_order)
    partition = partition_dofs(tree, graph, classes, grid)
    coupling = build_coupling(partition, classes, grid)
    K = [assembly.assemble_stiffness(sp_, case.nu) for sp_ in spaces]
    M = [
        assembly.assemble_mass(sp_, case.sigma, region=grid.region_of(s))
        if grid.region_of(s) is Region.CONDUCTOR
        else None
        for s, sp_ in enumerate(spaces)
    ]
    interps = [DirichletInterpolator(sp_, case.domain) for sp_ in spaces]
    return Discretization(grid, spaces, classes, graph, partition, coupling, K, M, case, tree, interps)


@dataclass
class MarchState:
    step: int
    t: float
    a: list
    sum_E: float = 0.0
    sum_B: float = 0.0
    max_B: float = 0.0
    iterations: list = field(default_factory=list)


@dataclass(frozen=True)
class ErrorReport:
    errBa: float
    errEa: float
    iter: float
    pri: int
    max_term: float = 0.0
    sum_term: float = 0.0


def eliminated_values(disc: Discretization, t: float, boundary=exact_A) -> list:
    """Dirichlet data at ``t`` for DIRICHLET DOFs and zero for GAUGE DOFs."""
    out = []
    for s, interp in enumerate(disc.interpolators):
        E = disc.partition.E[s]
        vals = np.zeros(len(E))
        dmask = disc.partition.e_kind[s] == EliminationKind.DIRICHLET
        if np.any(dmask):
            vals[dmask] = interp(boundary, t)[E[dmask]]
        out.append(vals)
    return out


def step_rhs(disc: Discretization, a_prev, t: float, dt: float, sources=None) -> list:
    """Local right-hand sides ``M a^(l) + dt j(t_{l+1})``."""
    f = []
    for s, space in enumerate(disc.spaces):
        J = sources[s] if sources is not None else source_for(disc.grid.region_of(s), disc.case)
        rhs = dt * assembly.assemble_load(space, J, t)
        if disc.M[s] is not None:
            rhs += disc.M[s] @ a_prev[s]
        f.append(rhs)
    return f


def consistent_initial(disc: Discretization, exact=exact_A, curl_exact=exact_B, t: float = 0.0) -> list:
    """Energy projection of the initial field onto the gauged space.

    Solves ``(nu curl a, curl v) + (sigma a, v)_C = (nu B, curl v) + (sigma A, v)_C``
    for the free DOFs with Dirichlet values and zero gauge DOFs imposed.  In
    the insulator this is exactly the algebraic constraint of the
    semi-discrete system, so the first backward difference carries no
    start-up jump.
    """
    f = []
    for s, space in enumerate(disc.spaces):
        rhs = disc.case.nu * assembly.assemble_curl_load(space, curl_exact, t)
        if disc.M[s] is not None:
            rhs += disc.case.sigma * assembly.assemble_load(space, exact, t)
        f.append(rhs)
    a, _, _, _ = monolithic_solve(
        disc.K, disc.M, disc.partition, disc.classes, disc.grid, 1.0, f, eliminated_values(disc, t, exact)
    )
    return a


def march(
    disc: Discretization,
    n_steps: int,
    tol: float = 1e-6,
    max_iter: int = 500,
    mode: str = "ieti",
    exact=exact_A,
    curl_exact=exact_B,
    sources=None,
    initial=None,
    init: str = "energy",
    check=False,
    on_step=None,
) -> ErrorReport:
    """Run the implicit Euler loop on ``(0, T)`` and accumulate both errors.

    ``exact``/``curl_exact`` supply boundary data, the initial field and the
    reference fields; ``sources`` optionally overrides the per-subdomain
    current densities.  ``initial`` gives explicit start coefficients;
    otherwise ``init`` selects the energy projection (default) or the plain
    L2 projection (``"l2"``).  With ``check=True`` every step asserts the momentum
    residual and interface jump bounds.
    """
    if n_steps < 1:
        raise InputError("need at least one time step")
    if mode not in ("ieti", "monolithic"):
        raise InputError(f"unknown mode {mode!r}")
    T = disc.case.T
    dt = T / n_steps
    system = StepSystem(disc.K, disc.M, disc.partition, disc.coupling, dt) if mode == "ieti" else None
    if initial is not None:
        a0 = initial
    elif init == "energy":
        a0 = consistent_initial(disc, exact, curl_exact)
    elif init == "l2":
        a0 = assembly.project_initial(disc.spaces, disc.classes, exact)
    else:
        raise InputError(f"unknown initial projection {init!r}")
    state = MarchState(0, 0.0, [np.array(x, dtype=float) for x in a0])
    cond = disc.conductors()

    exact_E = _electric_field(exact)

    for ell in range(1, n_steps + 1):
        t = ell * dt
        f = step_rhs(disc, state.a, t, dt, sources)
        a_e = eliminated_values(disc, t, exact)
        if mode == "ieti":
            a, _, m, stats = solve_step(system, f, a_e, tol, max_iter)
            iters = stats.iterations
            resid = stats.residual
            if check:
                res = euler_residual(system, a, m, f)
                jump = interface_jump(system, a)
                scale = max(np.abs(np.concatenate(a)).max(), 1e-300)
                if res > 1e-8 or jump > 1e-6 * scale:
                    raise AssertionError(f"step {ell}: residual {res:.2e}, jump {jump:.2e}")
        else:
            a, _, _, _ = monolithic_solve(
                disc.K, disc.M, disc.partition, disc.classes, disc.grid, dt, f, a_e
            )
            iters, resid = 0, 0.0
        eE = sum(
            assembly.l2_error_sq(disc.spaces[s], (a[s] - state.a[s]) / dt, _negate(exact_E), t)
            for s in cond
        )
        eB = sum(
            assembly.l2_error_sq(disc.spaces[s], a[s], curl_exact, t, curl=True)
            for s in range(len(disc.spaces))
        )
        state.sum_E += dt * eE
        state.sum_B += dt * eB
        state.max_B = max(state.max_B, eB)
        state.iterations.append(iters)
        state.a, state.step, state.t = a, ell, t
        log.debug("step %d t=%.6g iterations=%d residual=%.3e", ell, t, iters, resid)
        if on_step is not None:
            on_step(state)

    return ErrorReport(
        errBa=float(np.sqrt(state.max_B + state.sum_B)),
        errEa=float(np.sqrt(state.sum_E)),
        iter=float(sum(state.iterations) / n_steps),
        pri=disc.pri,
        max_term=state.max_B,
        sum_term=state.sum_B,
    )


def _electric_field(A):
    """``-dA/dt`` for a potential sampler; exact for the manufactured one."""
    if A is exact_A:
        return exact_A

    def E(x, y, z, t, h=1e-6):
        return -(np.asarray(A(x, y, z, t + h)) - np.asarray(A(x, y, z, t - h))) / (2 * h)

    return E


def _negate(F):
    def G(x, y, z, t):
        return -np.asarray(F(x, y, z, t))

    return G


def observed_order(errors, params) -> float:
    """Least-squares convergence order from ``errors`` at ``params``.

    ``params`` may be a resolution that grows (number of steps, divisions)
    or a mesh size that shrinks; the order is positive when errors decrease
    as resolution improves.
    """
    e = np.asarray(errors, dtype=float)
    x = np.asarray(params, dtype=float)
    if len(e) < 2 or len(e) != len(x):
        raise InputError("need at least two (error, parameter) pairs")
    if np.any(e <= 0) or np.any(x <= 0):
        raise InputError("errors and parameters must be positive")
    slope = np.polyfit(np.log(x), np.log(e), 1)[0]
    return float(-slope if x[-1] > x[0] else slope)
