"""Discretization grid, the function-to-matrix map, and its diagnostics.

A band-limited function f becomes the N x N matrix with entry
f_{n-m}(z(n, m)) at position (n, m), where z(n, m) is the midpoint grid
value.  Real-valued functions map to hermitian matrices, products map to
matrix products up to O(1/N), and the scaled commutator approaches the
Poisson bracket.  The module also provides the normalized trace, the
product/bracket defect norms, the inverse read-off of a matrix into mode
samples, and matrix export in a small binary container and JSON.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConsistencyError
from .surface import (
    BandLimitedFunction,
    Profile,
    SurfaceDescriptor,
    bracket_function,
    pointwise_product,
    surface_area,
)

TWO_PI = 2.0 * math.pi

GRID_OFFSETS = ("paper", "symmetric")

#: entrywise hermiticity tolerance for matrices built from real-valued functions
HERMITICITY_TOL = 1e-13


@dataclass(frozen=True)
class QuantizationGrid:
    """Uniform z-grid with N nodes and the matching scale parameter.

    hbar = (b - a) * beta / N exactly as stored.  Node n (1-based) sits at
    a + hbar*n for the default "paper" convention, or a + hbar*(n - 1/2) for
    the boundary-symmetric variant.  Midpoints z(n, m) = z((n + m)/2).
    """

    N: int
    a: float
    b: float
    beta: float = 1.0
    grid_offset: str = "paper"
    hbar: float = field(init=False)

    def __post_init__(self):
        if self.N < 2:
            raise ValueError(f"N must be at least 2, got {self.N}")
        if not self.a < self.b:
            raise ValueError(f"need a < b, got [{self.a}, {self.b}]")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.grid_offset not in GRID_OFFSETS:
            raise ValueError(f"grid_offset must be one of {GRID_OFFSETS}")
        object.__setattr__(self, "hbar", (self.b - self.a) * self.beta / self.N)

    @property
    def _shift(self) -> float:
        return 0.0 if self.grid_offset == "paper" else -0.5

    def node(self, n) -> float:
        """z(n) for 1 <= n <= N."""
        return self.a + self.hbar * (np.asarray(n) + self._shift)

    def nodes(self) -> np.ndarray:
        return self.node(np.arange(1, self.N + 1, dtype=float))

    def pair_value(self, n, m) -> float:
        """Midpoint value z(n, m) = z((n + m) / 2); z(n, n) = z(n)."""
        return self.a + self.hbar * ((np.asarray(n) + np.asarray(m)) / 2.0 + self._shift)

    def offset_pair_values(self, d: int) -> np.ndarray:
        """z(n, n + |d|) along the matrix diagonal at numpy offset d."""
        d = abs(int(d))
        i = np.arange(1, self.N - d + 1, dtype=float)
        return self.pair_value(i, i + d)


def build_grid(N: int, a: float, b: float, beta: float, grid_offset: str = "paper") -> QuantizationGrid:
    """Construct the quantization grid; N >= 2, a < b, beta > 0."""
    return QuantizationGrid(int(N), float(a), float(b), float(beta), grid_offset)


def default_beta(s: SurfaceDescriptor) -> float:
    """Scale parameter making the normalized trace of the identity exact:
    beta = area / (2*pi*(b - a))."""
    a, b = s.z_interval
    return surface_area(s) / (TWO_PI * (b - a))


def quantize(f: BandLimitedFunction, grid: QuantizationGrid) -> np.ndarray:
    """Matrix of f on the grid: entry (n, m) = f_{n-m}(z(n, m)).

    Requires band limit < N; evaluation outside the profile interval raises
    DomainError (possible when beta > 1 pushes the grid past the interval).
    """
    N = grid.N
    if f.max_mode >= N:
        raise ValueError(f"band limit {f.max_mode} must be below N={N}")
    T = np.zeros((N, N), dtype=complex)
    rows = np.arange(N)
    for j in sorted(f.modes):
        d = -j  # mode j populates entries with n - m = j
        zvals = grid.offset_pair_values(d)
        vals = f.profile_values(j, zvals)
        idx = rows[: N - abs(d)]
        if d >= 0:
            T[idx, idx + d] = vals
        else:
            T[idx - d, idx] = vals
    if f.real_valued:
        dev = np.abs(T - T.conj().T).max()
        scale = max(1.0, np.abs(T).max())
        if dev > HERMITICITY_TOL * scale:
            raise ConsistencyError(
                f"matrix of a real-valued function deviates from hermitian by {dev:.2e}"
            )
    return T


@dataclass
class CoordinateMatrices:
    """Quantized embedding coordinates X, Y, Z on a common grid."""

    X: np.ndarray
    Y: np.ndarray
    Z: np.ndarray
    grid: QuantizationGrid
    surface: SurfaceDescriptor


def coordinate_matrices(s: SurfaceDescriptor, grid: QuantizationGrid) -> CoordinateMatrices:
    """Quantize the three embedding coordinates.

    For the built-in surfaces X and Y are tridiagonal with zero diagonal
    (modes +-1 only) and Z is diagonal (axial semi-axis times the nodes).
    Surfaces with further modes simply quantize coordinate by coordinate.
    """
    X = quantize(s.coord_x, grid)
    Y = quantize(s.coord_y, grid)
    Z = quantize(s.coord_z, grid)
    return CoordinateMatrices(X, Y, Z, grid, s)


def trace_functional(F: np.ndarray, grid: QuantizationGrid) -> float:
    """Normalized trace 2*pi*hbar*Tr(F); the imaginary part must be rounding."""
    t = TWO_PI * grid.hbar * np.trace(np.asarray(F))
    t = complex(t)
    if abs(t.imag) > 1e-12 * (1.0 + abs(t.real)):
        raise ConsistencyError(f"trace has non-negligible imaginary part {t.imag:.2e}")
    return float(t.real)


@dataclass(frozen=True)
class AxiomDefects:
    """Operator-norm defects of the product and scaled-commutator identities.

    product_defect  = || T(f)T(g) - T(fg) ||
    bracket_defect  = || [T(f), T(g)]/(i*hbar) - T({f,g}) ||
    Frobenius variants are carried alongside the spectral norms.
    """

    product_defect: float
    bracket_defect: float
    product_defect_fro: float
    bracket_defect_fro: float


def axiom_defects(f: BandLimitedFunction, g: BandLimitedFunction, grid: QuantizationGrid) -> AxiomDefects:
    """Measure both defect norms at the given N.

    fg and {f, g} are formed by exact mode convolution before quantization so
    the defects isolate the discretization error.
    """
    Tf = quantize(f, grid)
    Tg = quantize(g, grid)
    P = Tf @ Tg - quantize(pointwise_product(f, g), grid)
    B = (Tf @ Tg - Tg @ Tf) / (1j * grid.hbar) - quantize(bracket_function(f, g), grid)
    sp = lambda M: float(np.linalg.svd(M, compute_uv=False)[0]) if M.size else 0.0
    fro = lambda M: float(np.linalg.norm(M))
    return AxiomDefects(sp(P), sp(B), fro(P), fro(B))


def norm_bound(f: BandLimitedFunction, grid: QuantizationGrid) -> float:
    """Uniform-boundedness proxy: sum over modes of max_z |f_j(z)| on the grid."""
    total = 0.0
    for j in sorted(f.modes):
        zvals = grid.offset_pair_values(-j)
        total += float(np.abs(np.asarray(f.modes[j](zvals))).max())
    return total


def dequantize(F: np.ndarray, grid: QuantizationGrid, max_mode: int) -> BandLimitedFunction:
    """Read mode samples back off a matrix (left inverse of quantize).

    Mode j is sampled at the points z(n, n+|j|) with the values along the
    corresponding diagonal; profiles interpolate linearly between samples and
    each carries its raw samples in ``Profile.samples``.
    """
    F = np.asarray(F, dtype=complex)
    N = grid.N
    if max_mode >= N:
        raise ValueError(f"max_mode {max_mode} must be below N={N}")
    hermitian = bool(np.abs(F - F.conj().T).max() <= 1e-12 * max(1.0, np.abs(F).max()))
    modes = {}
    step = 1e-6 * (grid.b - grid.a)
    for j in range(-max_mode, max_mode + 1):
        d = -j
        vals = np.diagonal(F, offset=d).copy()
        if not np.abs(vals).max() > 0.0:
            continue
        zpts = grid.offset_pair_values(d)

        def interp(z, zpts=zpts, vals=vals):
            zr = np.interp(z, zpts, vals.real)
            zi = np.interp(z, zpts, vals.imag)
            return zr + 1j * zi

        modes[j] = Profile(interp, fd_step=step, samples=(zpts, vals))
    return BandLimitedFunction(modes, (grid.a, grid.b), real_valued=hermitian)


# ---------------------------------------------------------------------------
# matrix export: binary container and JSON

NCLQ_MAGIC = b"NCLQ"
NCLQ_VERSION = 1
NCLQ_FLAG_HERMITIAN = 1
_HEADER = struct.Struct("<4sIII16x")  # magic, version, N, flags, reserved -> 32 bytes


def write_matrix_binary(path, M: np.ndarray, flags: int | None = None) -> None:
    """Dense binary dump: 32-byte header then row-major complex128 pairs."""
    M = np.ascontiguousarray(np.asarray(M, dtype="<c16"))
    n = M.shape[0]
    if M.shape != (n, n):
        raise ValueError("matrix must be square")
    if flags is None:
        herm = np.abs(M - M.conj().T).max() <= 1e-12 * max(1.0, np.abs(M).max())
        flags = NCLQ_FLAG_HERMITIAN if herm else 0
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(NCLQ_MAGIC, NCLQ_VERSION, n, flags))
        fh.write(M.tobytes())


def read_matrix_binary(path) -> tuple[np.ndarray, int]:
    """Read a binary dump back; returns (matrix, flags)."""
    raw = Path(path).read_bytes()
    magic, version, n, flags = _HEADER.unpack_from(raw)
    if magic != NCLQ_MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    if version != NCLQ_VERSION:
        raise ValueError(f"unsupported version {version}")
    M = np.frombuffer(raw[_HEADER.size :], dtype="<c16", count=n * n).reshape(n, n)
    return M.astype(complex), flags


def write_matrix_json(path, M: np.ndarray) -> None:
    M = np.asarray(M, dtype=complex)
    payload = [[[float(v.real), float(v.imag)] for v in row] for row in M]
    Path(path).write_text(json.dumps(payload))


def read_matrix_json(path) -> np.ndarray:
    payload = json.loads(Path(path).read_text())
    return np.array([[complex(re, im) for re, im in row] for row in payload])


def dump_coordinate_matrices(coords: CoordinateMatrices, out_dir, formats=("binary", "json")) -> list:
    """Write X, Y, Z under out_dir; returns the created paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for label, M in (("X", coords.X), ("Y", coords.Y), ("Z", coords.Z)):
        if "binary" in formats:
            p = out / f"coords_{label}.nclq"
            write_matrix_binary(p, M)
            written.append(p)
        if "json" in formats:
            p = out / f"coords_{label}.json"
            write_matrix_json(p, M)
            written.append(p)
    return written
