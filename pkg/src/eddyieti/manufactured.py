"""Closed-form verification fields on the unit cube.

All samplers follow the ``f(x, y, z, t) -> (3, *shape)`` convention used by
:mod:`eddyieti.assembly`.  The vector potential is divergence free, so
``curl curl A = -lap A = 3 A`` and, with ``dA/dt = -A``, the source is
``(3 nu - sigma) A`` in the conductor and ``3 nu A`` in the insulator.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .topology import Region, default_conductor


@dataclass(frozen=True)
class CaseConfig:
    nu: float = 1.0
    sigma: float = 1.0
    domain: tuple = ((0.0, 1.0), (0.0, 1.0), (0.0, 1.0))
    T: float = 1.0
    conductor: object = field(default=default_conductor, compare=False)

    def __post_init__(self):
        if self.nu <= 0 or self.sigma <= 0:
            raise InputError("material parameters must be positive")
        if self.T <= 0:
            raise InputError("final time must be positive")


def exact_A(x, y, z, t):
    x, y, z = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, y, z)))
    e = np.exp(-t)
    cx, sx = np.cos(x), np.sin(x)
    cy, sy = np.cos(y), np.sin(y)
    cz, sz = np.cos(z), np.sin(z)
    return e * np.stack([sx * cy * cz, -2.0 * cx * sy * cz, cx * cy * sz])


def exact_B(x, y, z, t):
    x, y, z = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, y, z)))
    e = 3.0 * np.exp(-t)
    return e * np.stack([-np.cos(x) * np.sin(y) * np.sin(z), np.zeros_like(x), np.sin(x) * np.sin(y) * np.cos(z)])


def exact_E_C(x, y, z, t, conductor=default_conductor):
    """Electric field ``-dA/dt`` (equal to ``A``); only defined in the conductor."""
    pts = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, y, z)))
    if not np.all(conductor(pts)):
        raise InputError("electric field requested outside the conductor")
    return exact_A(x, y, z, t)


def source_J(x, y, z, t, region: Region, nu: float = 1.0, sigma: float = 1.0):
    factor = 3.0 * nu - sigma if region is Region.CONDUCTOR else 3.0 * nu
    return factor * exact_A(x, y, z, t)


def source_for(region: Region, case: CaseConfig | None = None):
    """Sampler of the source current restricted to one region."""
    case = case or CaseConfig()

    def J(x, y, z, t):
        return source_J(x, y, z, t, region, case.nu, case.sigma)

    return J


def zero_field(x, y, z, t):
    x, y, z = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, y, z)))
    return np.zeros((3,) + x.shape)
