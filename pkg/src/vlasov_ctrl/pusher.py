"""Boris integration of the characteristic system for d = (1, 2).

The characteristics solved per particle are

    dx/dt  = mu_x * v1
    dv1/dt = mu_v * E(t, x) + mu_x * mu_v * v2 * B(t, x)
    dv2/dt =                - mu_x * mu_v * v1 * B(t, x)

realized by the Boris scheme with the 3-vector embedding E = (e, 0, 0),
B = (0, 0, b). The single charge parameter of the textbook pusher splits
here: electric kicks carry mu_v, the magnetic rotation carries mu_x*mu_v,
and the position drift carries mu_x, the unique assignment consistent
with the system above.

The magnetic rotation is exactly orthogonal, so for e = 0 the particle
speed is preserved to rounding regardless of b ("preserves the microscopic
energy").
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import Particle, SpeciesParams, wrap_position


@dataclass(frozen=True)
class LocalFields:
    """Electric and magnetic field values at one particle's position."""

    e: float
    b: float


def _rotate(a, b, r):
    """Boris rotation of (a, b) by the half-angle parameter r.

    v' = v + v x r, v+ = v + v' x s with s = 2r/(1+|r|^2) and r along the
    third axis; algebraically a rotation matrix with unit determinant, so
    its exact inverse is the same map with r -> -r.
    """
    s = 2.0 * r / (1.0 + r * r)
    return a + (b - a * r) * s, b - (a + b * r) * s


def boris_push_arrays(x, v1, v2, e, b, species: SpeciesParams, dt: float, p_max: float):
    """One Boris step for arrays of particles; returns new (x, v1, v2).

    Kick-rotate-kick in velocity, then drift with the updated v1 and
    periodic wrap. ``e`` and ``b`` are the field values already
    interpolated at the particle positions (scalars broadcast).
    """
    half_e = 0.5 * dt * species.mu_v * np.asarray(e, dtype=np.float64)
    r = 0.5 * dt * species.mu_x * species.mu_v * np.asarray(b, dtype=np.float64)

    v1m = v1 + half_e
    v1p, v2p = _rotate(v1m, v2, r)
    v1n = v1p + half_e
    xn = wrap_position(x + species.mu_x * dt * v1n, p_max)
    return xn, v1n, v2p


def boris_push_reverse_arrays(x, v1, v2, field_at, species: SpeciesParams,
                              dt: float, p_max: float):
    """Exact inverse of :func:`boris_push_arrays` over one step of size dt.

    Undoes the drift first (the forward drift used the post-kick velocity,
    which is the current one), evaluates the frozen fields at the recovered
    pre-step position through ``field_at(x) -> (e, b)``, then undoes the
    kicks and the rotation. Composing forward then reverse against the same
    field arrays returns every particle to its start up to rounding, which
    is what the backward (adjoint) transport relies on.
    """
    xp = wrap_position(x - species.mu_x * dt * v1, p_max)
    e, b = field_at(xp)
    half_e = 0.5 * dt * species.mu_v * np.asarray(e, dtype=np.float64)
    r = 0.5 * dt * species.mu_x * species.mu_v * np.asarray(b, dtype=np.float64)

    v1p = v1 - half_e
    v1m, v2m = _rotate(v1p, v2, -r)
    v1o = v1m - half_e
    return xp, v1o, v2m


def boris_push(p: Particle, fields: LocalFields, species: SpeciesParams,
               dt: float, p_max: float) -> Particle:
    """Scalar convenience wrapper around :func:`boris_push_arrays`."""
    x = np.asarray([p.x])
    v1 = np.asarray([p.v1])
    v2 = np.asarray([p.v2])
    xn, v1n, v2n = boris_push_arrays(x, v1, v2, fields.e, fields.b, species, dt, p_max)
    return Particle(float(xn[0]), float(v1n[0]), float(v2n[0]))
