"""Axisymmetric embedded surfaces and their classical differential geometry.

A surface is held as azimuthal Fourier data: each embedding coordinate is a
finite sum  sum_j f_j(z) e^{i j theta}  over integer modes j, with z running
over a closed parameter interval [a, b].  Spheres use the geometric interval
[-R, R]; ellipsoids the normalized interval [-1, 1] with the third coordinate
scaled by the axial semi-axis.

The module provides the unweighted Poisson bracket
{f, h} = d_theta f d_z h - d_z f d_theta h, the area density
sqrt|g| = sqrt({x,y}^2 + {y,z}^2 + {z,x}^2), the bracket form of the
Laplace-Beltrami operator, and surface areas by adaptive quadrature.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import ConsistencyError, DomainError, SingularPointError

TWO_PI = 2.0 * math.pi

#: relative tolerance used when checking that a radicand is nonnegative
RADICAND_TOL = 1e-12

#: area density below which a point counts as a pole (classical evaluation refused)
POLE_DENSITY_FLOOR = 1e-10


@dataclass(frozen=True)
class Profile:
    """One Fourier-mode profile f_j(z).

    Carries analytic first/second derivatives when available; otherwise
    central differences with the declared steps are used.  ``fd_step`` is the
    first-difference step ((b - a) * 1e-6 for the built-in surfaces),
    ``fd_step2`` the wider second-difference step.
    """

    func: Callable
    deriv: Callable | None = None
    deriv2: Callable | None = None
    fd_step: float = 2e-6
    fd_step2: float = 2e-4
    samples: tuple | None = None  # (z points, values) when built from a matrix

    def __call__(self, z):
        return self.func(z)

    def d1(self, z):
        if self.deriv is not None:
            return self.deriv(z)
        h = self.fd_step
        return (self.func(z + h) - self.func(z - h)) / (2.0 * h)

    def d2(self, z):
        if self.deriv2 is not None:
            return self.deriv2(z)
        h = self.fd_step2
        return (self.func(z + h) - 2.0 * self.func(z) + self.func(z - h)) / h**2

    @property
    def analytic(self) -> bool:
        return self.deriv is not None and self.deriv2 is not None


def constant_profile(value) -> Profile:
    c = complex(value)

    def f(z):
        return np.full(np.shape(z), c) if np.ndim(z) else c

    zero = lambda z: np.zeros(np.shape(z)) if np.ndim(z) else 0.0
    return Profile(f, zero, zero)


@dataclass(frozen=True)
class SurfacePoint:
    """A point (z, theta) in parameter coordinates; theta reduced mod 2*pi."""

    z: float
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "z", float(self.z))
        object.__setattr__(self, "theta", float(self.theta) % TWO_PI)


def as_point(p) -> SurfacePoint:
    if isinstance(p, SurfacePoint):
        return p
    z, theta = p
    return SurfacePoint(z, theta)


@dataclass(frozen=True)
class BandLimitedFunction:
    """f(z, theta) = sum over |j| <= max_mode of f_j(z) e^{i j theta}.

    ``modes`` maps the integer mode j to its z-profile.  When ``real_valued``
    is set, profiles satisfy f_{-j}(z) = conj(f_j(z)).
    """

    modes: dict
    z_interval: tuple
    real_valued: bool = True

    @property
    def max_mode(self) -> int:
        return max((abs(j) for j in self.modes), default=0)

    def check_domain(self, z):
        a, b = self.z_interval
        tol = 1e-12 * (b - a)
        zmin, zmax = np.min(z), np.max(z)
        if zmin < a - tol or zmax > b + tol:
            raise DomainError(
                f"z in [{zmin:g}, {zmax:g}] leaves the profile interval [{a:g}, {b:g}]"
            )

    def profile_values(self, j: int, z):
        self.check_domain(z)
        prof = self.modes.get(j)
        if prof is None:
            return np.zeros(np.shape(z), dtype=complex)
        return np.asarray(prof(z), dtype=complex)

    def evaluate(self, z, theta):
        self.check_domain(z)
        acc = 0.0 + 0.0j
        for j in sorted(self.modes):
            acc = acc + self.modes[j](z) * np.exp(1j * j * theta)
        return acc

    def d_z(self, z, theta):
        self.check_domain(z)
        acc = 0.0 + 0.0j
        for j in sorted(self.modes):
            acc = acc + self.modes[j].d1(z) * np.exp(1j * j * theta)
        return acc

    def d_theta(self, z, theta):
        self.check_domain(z)
        acc = 0.0 + 0.0j
        for j in sorted(self.modes):
            acc = acc + (1j * j) * self.modes[j](z) * np.exp(1j * j * theta)
        return acc


def _binary_mode_pairs(f: BandLimitedFunction, h: BandLimitedFunction):
    """Pairs (j1, p1, j2, p2) in a fixed order, grouped by resulting mode."""
    if f.z_interval != h.z_interval:
        raise ValueError("band-limited operands live on different intervals")
    grouped: dict[int, list] = {}
    for j1 in sorted(f.modes):
        for j2 in sorted(h.modes):
            grouped.setdefault(j1 + j2, []).append((j1, f.modes[j1], j2, h.modes[j2]))
    return grouped


def _pole_clamp(interval):
    """Evaluation-point clamp for derived profiles.

    Pulls z inside the open interval by (b-a)*1e-12 so that individually
    divergent factors (profile times derivative at a sqrt-type endpoint) are
    evaluated where every factor is finite; the combined mode profiles are
    smooth, so the induced value error is of the same 1e-12 order.
    """
    a, b = interval
    eta = (b - a) * 1e-12

    def clamp(z):
        return np.clip(z, a + eta, b - eta)

    return clamp


def pointwise_product(f: BandLimitedFunction, h: BandLimitedFunction) -> BandLimitedFunction:
    """Product f*h by exact mode convolution (band limits add)."""
    grouped = _binary_mode_pairs(f, h)
    modes = {}
    step = f.modes[next(iter(f.modes))].fd_step if f.modes else 2e-6
    clamp = _pole_clamp(f.z_interval)
    for k, terms in grouped.items():

        def value(z, terms=terms):
            # plain profile products stay finite at the endpoints: no clamp
            acc = 0.0 + 0.0j
            for _, p1, _, p2 in terms:
                acc = acc + p1(z) * p2(z)
            return acc

        def d1(z, terms=terms):
            z = clamp(z)
            acc = 0.0 + 0.0j
            for _, p1, _, p2 in terms:
                acc = acc + p1.d1(z) * p2(z) + p1(z) * p2.d1(z)
            return acc

        def d2(z, terms=terms):
            z = clamp(z)
            acc = 0.0 + 0.0j
            for _, p1, _, p2 in terms:
                acc = acc + p1.d2(z) * p2(z) + 2.0 * p1.d1(z) * p2.d1(z) + p1(z) * p2.d2(z)
            return acc

        modes[k] = Profile(value, d1, d2, fd_step=step)
    return BandLimitedFunction(modes, f.z_interval, f.real_valued and h.real_valued)


def bracket_function(f: BandLimitedFunction, h: BandLimitedFunction) -> BandLimitedFunction:
    """Unweighted Poisson bracket {f, h} = d_theta f d_z h - d_z f d_theta h.

    Built by mode calculus: d_theta multiplies mode j by i*j, d_z acts on the
    profiles.  The 1/sqrt|g| weight is applied separately by callers.
    """
    grouped = _binary_mode_pairs(f, h)
    modes = {}
    step = f.modes[next(iter(f.modes))].fd_step if f.modes else 2e-6
    clamp = _pole_clamp(f.z_interval)
    for k, terms in grouped.items():

        def value(z, terms=terms):
            z = clamp(z)
            acc = 0.0 + 0.0j
            for j1, p1, j2, p2 in terms:
                acc = acc + (1j * j1) * p1(z) * p2.d1(z) - p1.d1(z) * ((1j * j2) * p2(z))
            return acc

        def d1(z, terms=terms):
            z = clamp(z)
            acc = 0.0 + 0.0j
            for j1, p1, j2, p2 in terms:
                acc = acc + (1j * j1) * (p1.d1(z) * p2.d1(z) + p1(z) * p2.d2(z))
                acc = acc - (1j * j2) * (p1.d2(z) * p2(z) + p1.d1(z) * p2.d1(z))
            return acc

        modes[k] = Profile(value, d1, None, fd_step=step)
    return BandLimitedFunction(modes, f.z_interval, f.real_valued and h.real_valued)


def poisson_bracket(f: BandLimitedFunction, h: BandLimitedFunction, p) -> complex:
    """Evaluate {f, h} at the point p."""
    p = as_point(p)
    return complex(bracket_function(f, h).evaluate(p.z, p.theta))


@dataclass
class SurfaceDescriptor:
    """An axisymmetric surface embedded through (theta, z) -> (x, y, z3).

    ``coord_x``/``coord_y`` carry modes +-1 only for the built-in surfaces;
    ``coord_z`` is the mode-0 third coordinate (identity scaled by the axial
    semi-axis for ellipsoids).
    """

    name: str
    z_interval: tuple
    coord_x: BandLimitedFunction
    coord_y: BandLimitedFunction
    coord_z: BandLimitedFunction
    semi_axes: tuple | None = None
    revolution: bool = True
    _area: float | None = field(default=None, repr=False)
    _brackets: tuple | None = field(default=None, repr=False)

    @property
    def coordinates(self):
        return (self.coord_x, self.coord_y, self.coord_z)

    @property
    def has_analytic_derivatives(self) -> bool:
        """True when every coordinate profile carries closed-form derivatives.

        Surfaces built from bare callables fall back to central differences
        (steps declared on the Profile); reports flag that situation.
        """
        return all(
            prof.analytic for blf in self.coordinates for prof in blf.modes.values()
        )

    @property
    def x_modes(self):
        return self.coord_x.modes

    @property
    def y_modes(self):
        return self.coord_y.modes

    @property
    def z_coordinate(self):
        return self.coord_z.modes[0]

    def coordinate_brackets(self):
        """({x,y}, {y,z}, {z,x}) as band-limited functions, cached."""
        if self._brackets is None:
            x, y, z = self.coordinates
            self._brackets = (
                bracket_function(x, y),
                bracket_function(y, z),
                bracket_function(z, x),
            )
        return self._brackets

    def revolution_profile(self):
        """Radius profile r(zg), r'(zg) and the geometric z-range.

        Only defined for revolution surfaces; used by classical
        Sturm-Liouville references.
        """
        from .errors import NotRevolutionSurfaceError

        if not self.revolution:
            raise NotRevolutionSurfaceError(f"{self.name}: equatorial axes differ")
        if self.semi_axes is None:
            raise NotRevolutionSurfaceError(f"{self.name}: no radius profile available")
        a_eq, _, c_ax = self.semi_axes
        if self.z_interval == (-1.0, 1.0):
            # normalized parametrization: geometric height zg = c*u
            def r(zg):
                return a_eq * np.sqrt(np.clip(1.0 - (zg / c_ax) ** 2, 0.0, None))

            def rp(zg):
                u = zg / c_ax
                return -a_eq * u / (c_ax * np.sqrt(np.clip(1.0 - u * u, 1e-300, None)))

            return r, rp, (-c_ax, c_ax)
        # geometric parametrization (spheres of radius R)
        R = a_eq

        def r(zg):
            return np.sqrt(np.clip(R * R - zg * zg, 0.0, None))

        def rp(zg):
            return -zg / np.sqrt(np.clip(R * R - zg * zg, 1e-300, None))

        return r, rp, self.z_interval


def _sqrt_mode_profiles(rsq_of_z, scale: complex, interval, dsq=None) -> Profile:
    """Profile scale*sqrt(rsq(z)) with analytic derivatives.

    rsq must be a quadratic c0 - c2*z^2 described by (c0, c2): then
    f = s*w, f' = -s*c2*z/w, f'' = -s*c0*c2/w^3 with w = sqrt(c0 - c2 z^2).
    """
    c0, c2 = rsq_of_z
    s = complex(scale)
    step = 1e-6 * (interval[1] - interval[0])

    def w(z):
        return np.sqrt(c0 - c2 * np.asarray(z) ** 2 + 0j).real

    def f(z):
        return s * w(z)

    def d1(z):
        return -s * c2 * np.asarray(z) / w(z)

    def d2(z):
        return -s * c0 * c2 / w(z) ** 3

    return Profile(f, d1, d2, fd_step=step, fd_step2=100 * step)


def _linear_profile(slope: float, interval) -> Profile:
    step = 1e-6 * (interval[1] - interval[0])

    def f(z):
        return slope * np.asarray(z, dtype=float) if np.ndim(z) else slope * z

    def d1(z):
        return np.full(np.shape(z), float(slope)) if np.ndim(z) else float(slope)

    def d2(z):
        return np.zeros(np.shape(z)) if np.ndim(z) else 0.0

    return Profile(f, d1, d2, fd_step=step, fd_step2=100 * step)


def _build_coordinates(interval, rsq, ax: float, ay: float, az: float):
    """x, y, z band-limited coordinates with x = ax*w(z)cos, y = ay*w(z)sin."""
    x = BandLimitedFunction(
        {
            +1: _sqrt_mode_profiles(rsq, ax / 2.0, interval),
            -1: _sqrt_mode_profiles(rsq, ax / 2.0, interval),
        },
        interval,
    )
    y = BandLimitedFunction(
        {
            +1: _sqrt_mode_profiles(rsq, -0.5j * ay, interval),
            -1: _sqrt_mode_profiles(rsq, +0.5j * ay, interval),
        },
        interval,
    )
    z = BandLimitedFunction({0: _linear_profile(az, interval)}, interval)
    return x, y, z


def sphere(radius: float = 1.0) -> SurfaceDescriptor:
    """Round sphere of the given radius on the geometric interval [-R, R]."""
    R = float(radius)
    if R <= 0:
        raise ValueError("radius must be positive")
    interval = (-R, R)
    x, y, z = _build_coordinates(interval, (R * R, 1.0), 1.0, 1.0, 1.0)
    name = "sphere" if R == 1.0 else f"sphere(radius={R:g})"
    return SurfaceDescriptor(name, interval, x, y, z, semi_axes=(R, R, R), revolution=True)


def ellipsoid(a1: float, a2: float, a3: float) -> SurfaceDescriptor:
    """Ellipsoid with semi-axes (a1, a2, a3), normalized interval [-1, 1].

    Embedding: x = a1 sqrt(1-u^2) cos(theta), y = a2 sqrt(1-u^2) sin(theta),
    third coordinate a3*u with u the interval parameter.
    """
    a1, a2, a3 = float(a1), float(a2), float(a3)
    if min(a1, a2, a3) <= 0:
        raise ValueError("semi-axes must be positive")
    interval = (-1.0, 1.0)
    x, y, z = _build_coordinates(interval, (1.0, 1.0), a1, a2, a3)
    name = f"ellipsoid({a1:g},{a2:g},{a3:g})"
    return SurfaceDescriptor(
        name, interval, x, y, z, semi_axes=(a1, a2, a3), revolution=(a1 == a2)
    )


def spheroid(a: float, c: float) -> SurfaceDescriptor:
    """Revolution ellipsoid with equatorial semi-axis a and axial semi-axis c."""
    s = ellipsoid(a, a, c)
    s.name = f"spheroid({a:g},{c:g})"
    return s


def metric_sqrt_det(s: SurfaceDescriptor, p) -> float:
    """Area density sqrt|g| = sqrt({x,y}^2 + {y,z}^2 + {z,x}^2) at p."""
    p = as_point(p)
    radicand = 0.0 + 0.0j
    for b in s.coordinate_brackets():
        v = b.evaluate(p.z, p.theta)
        radicand = radicand + v * v
    if not np.isfinite(radicand):
        raise ConsistencyError(f"non-finite bracket data at z={p.z:g} (pole?)")
    scale = max(1.0, abs(radicand))
    if abs(radicand.imag) > RADICAND_TOL * scale or radicand.real < -RADICAND_TOL * scale:
        raise ConsistencyError(
            f"metric radicand {radicand} not a nonnegative real at z={p.z:g}"
        )
    return math.sqrt(max(radicand.real, 0.0))


def laplace_beltrami_apply(s: SurfaceDescriptor, f: BandLimitedFunction, p) -> float:
    """Bracket form of the Laplace-Beltrami operator applied to f at p.

    Delta f = sum_i (1/sqrt|g|) {x^i, (1/sqrt|g|) {x^i, f}}, with the inner
    bracket computed by mode calculus and the outer derivatives by central
    differences (steps (b-a)*1e-6 in z and 2*pi*1e-6 in theta).  Points where
    the density falls below the pole floor are rejected.
    """
    p = as_point(p)
    rho0 = metric_sqrt_det(s, p)
    if rho0 < POLE_DENSITY_FLOOR:
        raise SingularPointError(f"area density {rho0:g} below pole floor at z={p.z:g}")
    a, b = s.z_interval
    hz = (b - a) * 1e-6
    ht = TWO_PI * 1e-6
    total = 0.0 + 0.0j
    for xi in s.coordinates:
        inner = bracket_function(xi, f)

        def weighted(z, theta, inner=inner):
            return inner.evaluate(z, theta) / metric_sqrt_det(s, SurfacePoint(z, theta))

        dh_dz = (weighted(p.z + hz, p.theta) - weighted(p.z - hz, p.theta)) / (2 * hz)
        dh_dt = (weighted(p.z, p.theta + ht) - weighted(p.z, p.theta - ht)) / (2 * ht)
        total += xi.d_theta(p.z, p.theta) * dh_dz - xi.d_z(p.z, p.theta) * dh_dt
    return float((total / rho0).real)


def surface_area(s: SurfaceDescriptor, rel_tol: float = 1e-10) -> float:
    """Total area integral of sqrt|g| over [a,b] x [0,2*pi), cached."""
    if s._area is not None:
        return s._area
    a, b = s.z_interval
    if s.revolution:
        val, err = integrate.quad(
            lambda z: metric_sqrt_det(s, SurfacePoint(z, 0.0)),
            a,
            b,
            epsabs=0.0,
            epsrel=rel_tol,
            limit=200,
        )
        area = TWO_PI * val
        achieved = TWO_PI * err
    else:
        def ring(z):
            v, _ = integrate.quad(
                lambda t: metric_sqrt_det(s, SurfacePoint(z, t)),
                0.0,
                TWO_PI,
                epsabs=0.0,
                epsrel=rel_tol * 0.1,
                limit=200,
            )
            return v

        area, achieved = integrate.quad(ring, a, b, epsabs=0.0, epsrel=rel_tol, limit=200)
    if achieved > 10 * rel_tol * abs(area):
        import warnings

        warnings.warn(
            f"area quadrature achieved {achieved / abs(area):.2e} relative "
            f"(requested {rel_tol:.1e})"
        )
    s._area = float(area)
    return s._area


def load_surface_config(path) -> SurfaceDescriptor:
    """Load a surface from a key-value or JSON config file.

    Recognized keys: kind (sphere | ellipsoid | spheroid), semi_axes
    (list or comma-separated), radius (spheres).  The z-interval is derived
    automatically ([-1, 1] in the normalized parametrization).
    """
    text = Path(path).read_text()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        data = json.loads(text)
    else:
        data = {}
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"bad config line (expected key = value): {line!r}")
            key, _, value = line.partition("=")
            data[key.strip()] = value.strip()
    kind = str(data.get("kind", "")).lower()
    axes = data.get("semi_axes")
    if isinstance(axes, str):
        axes = [float(t) for t in axes.replace("[", "").replace("]", "").split(",") if t.strip()]
    if kind == "sphere":
        return sphere(float(data.get("radius", 1.0)))
    if kind == "spheroid":
        if axes is None or len(axes) not in (2, 3):
            raise ValueError("spheroid config needs semi_axes = [a, c] or [a, a, c]")
        if len(axes) == 3:
            if axes[0] != axes[1]:
                raise ValueError("spheroid requires equal equatorial semi-axes")
            axes = [axes[0], axes[2]]
        return spheroid(*axes)
    if kind == "ellipsoid":
        if axes is None or len(axes) != 3:
            raise ValueError("ellipsoid config needs semi_axes = [a1, a2, a3]")
        return ellipsoid(*axes)
    raise ValueError(f"unknown surface kind {kind!r}")
