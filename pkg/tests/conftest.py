"""Shared fixtures and independent numerical oracles for the test suite.

The oracles here deliberately avoid the package's mode-calculus paths: they
work from plain embedding formulas and centered finite differences, so they
can catch sign and bookkeeping mistakes in the library.
"""

import math

import numpy as np
import pytest

import nclaplace as nc

TWO_PI = 2.0 * math.pi


def fd_bracket(f, h, z, theta, step=1e-5):
    """{f, h} by finite differences of the evaluated functions."""
    df_dt = (f.evaluate(z, theta + step) - f.evaluate(z, theta - step)) / (2 * step)
    dh_dt = (h.evaluate(z, theta + step) - h.evaluate(z, theta - step)) / (2 * step)
    df_dz = (f.evaluate(z + step, theta) - f.evaluate(z - step, theta)) / (2 * step)
    dh_dz = (h.evaluate(z + step, theta) - h.evaluate(z - step, theta)) / (2 * step)
    return df_dt * dh_dz - df_dz * dh_dt


def embedding_partials(surf, z, theta):
    """Analytic partial derivatives of the embedding, written out plainly."""
    a1, a2, a3 = surf.semi_axes
    if surf.z_interval == (-1.0, 1.0):
        w = math.sqrt(1.0 - z * z)
        dw = -z / w
        du = (a1 * dw * math.cos(theta), a2 * dw * math.sin(theta), a3)
        dt = (-a1 * w * math.sin(theta), a2 * w * math.cos(theta), 0.0)
    else:
        R = a1
        w = math.sqrt(R * R - z * z)
        dw = -z / w
        du = (dw * math.cos(theta), dw * math.sin(theta), 1.0)
        dt = (-w * math.sin(theta), w * math.cos(theta), 0.0)
    return du, dt


def metric_oracle(surf, z, theta):
    """(g11, g12, g22, sqrt(det g)) from the embedding partials."""
    du, dt = embedding_partials(surf, z, theta)
    g11 = sum(a * a for a in du)
    g22 = sum(a * a for a in dt)
    g12 = sum(a * b for a, b in zip(du, dt))
    det = g11 * g22 - g12 * g12
    return g11, g12, g22, math.sqrt(det)


def fd_laplace_oracle(surf, f, z, theta, h=2e-4):
    """Divergence-form Laplace-Beltrami by nested central differences."""

    def flux(zz, tt):
        g11, g12, g22, sq = metric_oracle(surf, zz, tt)
        inv_det = 1.0 / (g11 * g22 - g12 * g12)
        iz_z, iz_t, it_t = g22 * inv_det, -g12 * inv_det, g11 * inv_det
        dfz = (f.evaluate(zz + h, tt) - f.evaluate(zz - h, tt)).real / (2 * h)
        dft = (f.evaluate(zz, tt + h) - f.evaluate(zz, tt - h)).real / (2 * h)
        return sq * (iz_z * dfz + iz_t * dft), sq * (iz_t * dfz + it_t * dft)

    H = 2 * h
    fz_p, _ = flux(z + H, theta)
    fz_m, _ = flux(z - H, theta)
    _, ft_p = flux(z, theta + H)
    _, ft_m = flux(z, theta - H)
    sq = metric_oracle(surf, z, theta)[3]
    return ((fz_p - fz_m) + (ft_p - ft_m)) / (2 * H * sq)


def interior_points(n, seed, zlim=0.9):
    rng = np.random.default_rng(seed)
    zs = rng.uniform(-zlim, zlim, n)
    ts = rng.uniform(0.0, TWO_PI, n)
    return list(zip(zs, ts))


@pytest.fixture(scope="session")
def unit_sphere():
    return nc.sphere()


@pytest.fixture(scope="session")
def prolate_112():
    return nc.spheroid(1.0, 2.0)


@pytest.fixture(scope="session")
def triaxial_123():
    return nc.ellipsoid(1.0, 2.0, 3.0)
