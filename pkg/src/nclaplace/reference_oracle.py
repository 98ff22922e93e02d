"""Independent classical references for the spectrum computations.

Provides the closed-form sphere spectrum with multiplicities, a separated
Sturm-Liouville finite-difference solver for surfaces of revolution, and the
greedy clustering used to group near-degenerate numerical eigenvalues.  The
sign convention matches the matrix operator: reported eigenvalues are
nonpositive.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import ResolutionError


@dataclass(frozen=True)
class SpectrumEntry:
    value: float
    multiplicity: int
    source: str  # "analytic" | "sturm_liouville"


@dataclass(frozen=True)
class ClassicalSpectrum:
    """Reference eigenvalues sorted ascending, with multiplicities."""

    entries: tuple
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        values = [e.value for e in self.entries]
        if values != sorted(values):
            raise ValueError("entries must be sorted ascending by value")
        if any(e.multiplicity < 1 for e in self.entries):
            raise ValueError("multiplicities must be >= 1")

    def expanded(self) -> list:
        """Flat eigenvalue list with each value repeated by multiplicity."""
        out = []
        for e in self.entries:
            out.extend([e.value] * e.multiplicity)
        return out

    def lowest(self, n: int) -> list:
        """First n entry values ordered by ascending absolute value."""
        return [e.value for e in sorted(self.entries, key=lambda e: abs(e.value))[:n]]

    def to_json_dict(self) -> dict:
        return {
            "eigenvalues": [
                {"value": e.value, "multiplicity": e.multiplicity, "source": e.source}
                for e in self.entries
            ],
            "metadata": dict(sorted(self.metadata.items())),
        }

    def to_csv_rows(self) -> list:
        rows = [["value", "multiplicity", "source"]]
        for e in self.entries:
            rows.append(["%.15g" % e.value, str(e.multiplicity), e.source])
        return rows


def _sphere_multiplicity(k: int) -> int:
    # dimension of the degree-k harmonic space on the 2-sphere
    n = 2
    lead = math.comb(n + k, k)
    sub = math.comb(n + k - 2, k - 2) if k >= 2 else 0
    return lead - sub


def analytic_sphere_spectrum(k_max: int) -> ClassicalSpectrum:
    """Unit-sphere levels -k(k+1) with multiplicity 2k+1 for k = 0..k_max."""
    if k_max < 0:
        raise ValueError("k_max must be nonnegative")
    entries = [
        SpectrumEntry(-float(k * (k + 1)), _sphere_multiplicity(k), "analytic")
        for k in range(k_max, -1, -1)
    ]
    return ClassicalSpectrum(tuple(entries), {"k_max": k_max})


def _meridian_coefficients(s):
    """Radius and meridian stretch along the colatitude-type angle t in (0, pi).

    Spheres and spheroids trace r(t) = a sin t with axial height c cos t, so
    the meridian line element is sqrt(a^2 cos^2 t + c^2 sin^2 t) dt.  The
    angle coordinate keeps every coefficient smooth and r vanishing linearly
    at the poles, which is what makes the finite differences second order.
    """
    if not s.revolution or s.semi_axes is None:
        from .errors import NotRevolutionSurfaceError

        raise NotRevolutionSurfaceError(f"{s.name}: no separated classical problem available")
    a_eq, _, c_ax = s.semi_axes

    def r(t):
        return a_eq * np.sin(t)

    def stretch(t):
        return np.sqrt((a_eq * np.cos(t)) ** 2 + (c_ax * np.sin(t)) ** 2)

    return r, stretch


def _mode_eigenvalues(r, stretch, n: int, m: int, count: int) -> np.ndarray:
    """Top `count` eigenvalues of one azimuthal band of the revolution problem.

    Cell-centered conservative scheme for
        (1/(r E)) d/dt( (r/E) u' ) - m^2 u / r^2 = lambda u,   E = |d(meridian)/dt|
    on (0, pi).  Flux coefficients p = r/E live on cell faces and vanish at
    the poles, which encodes the bounded-solution endpoint condition; for
    m >= 1 the singular m^2/r^2 potential suppresses u there.  Returns
    eigenvalues sorted descending (nearest zero first).
    """
    h = math.pi / n
    nodes = (np.arange(n) + 0.5) * h
    faces = np.arange(n + 1) * h
    p = np.zeros(n + 1)
    inner = faces[1:-1]
    p[1:-1] = r(inner) / stretch(inner)
    rn = r(nodes)
    w = rn * stretch(nodes)
    diag_t = -(p[1:] + p[:-1]) / h**2 - (m * m) * stretch(nodes) / rn
    off_t = p[1:-1] / h**2
    # similarity-transform the generalized problem T u = lambda W u
    sw = np.sqrt(w)
    diag = diag_t / w
    off = off_t / (sw[:-1] * sw[1:])
    lo = max(n - count, 0)
    vals = eigh_tridiagonal(diag, off, select="i", select_range=(lo, n - 1), eigvals_only=True)
    return vals[::-1]


def revolution_spectrum(
    s,
    m_max: int,
    grid_points: int,
    count: int,
    source: str = "sturm_liouville",
) -> ClassicalSpectrum:
    """Low spectrum of a revolution surface by separated finite differences.

    Solves each azimuthal mode m in [0, m_max] on `grid_points` cells of the
    meridian angle, merges the bands (multiplicity 2 for m >= 1, else 1), and
    keeps entries until `count` eigenvalues are covered with multiplicity.
    A coarse companion solve estimates the discretization error of every kept
    eigenvalue; estimates comparable to the eigenvalue itself raise.
    """
    r, stretch = _meridian_coefficients(s)
    per_mode = max(count, 2)
    fine, coarse = [], []
    for m in range(0, m_max + 1):
        take = min(per_mode, grid_points - 1, grid_points // 2 - 1)
        f = _mode_eigenvalues(r, stretch, grid_points, m, take)
        c = _mode_eigenvalues(r, stretch, grid_points // 2, m, take)
        mult = 1 if m == 0 else 2
        for i in range(len(f)):
            fine.append((f[i], mult, m, i))
            coarse.append(c[i] if i < len(c) else f[i])
    order = sorted(range(len(fine)), key=lambda i: abs(fine[i][0]))
    kept_idx = []
    total = 0
    for i in order:
        if total >= count:
            break
        kept_idx.append(i)
        total += fine[i][1]
    if total < count:
        raise ResolutionError(
            f"bands m <= {m_max} on {grid_points} cells provide only {total} of the "
            f"requested {count} eigenvalues"
        )
    kept = [fine[i] for i in kept_idx]
    # second-order scheme: halving the grid scales the error by ~4, so the
    # fine/coarse difference over 3 estimates the fine-grid error
    err_est = [abs(fine[i][0] - coarse[i]) / 3.0 for i in kept_idx]
    for (v, _, m, _), est in zip(kept, err_est):
        if est > 0.1 * (1.0 + abs(v)):
            raise ResolutionError(
                f"grid of {grid_points} cells leaves eigenvalue {v:.6g} (mode {m}) "
                f"with an estimated error {est:.2e}; refine the grid or request fewer eigenvalues"
            )
    entries = [
        SpectrumEntry(float(v), mult, source)
        for v, mult, _, _ in sorted(kept, key=lambda t: t[0])
    ]
    meta = {
        "grid_points": grid_points,
        "m_max": m_max,
        "max_error_estimate": max(err_est, default=0.0),
        "surface": s.name,
    }
    return ClassicalSpectrum(tuple(entries), meta)


def revolution_spectrum_richardson(
    s,
    m_max: int,
    grid_points_list,
    count: int,
) -> ClassicalSpectrum:
    """Richardson-extrapolated revolution spectrum over increasing grids.

    Per (mode, index) level the two finest grids give the h^2 extrapolation
    lam_f + (lam_f - lam_c)/3; the remaining grids bound the consistency of
    the extrapolation, recorded in the metadata.
    """
    grids = sorted(int(g) for g in grid_points_list)
    if len(grids) < 2:
        raise ValueError("need at least two grid resolutions")
    r, stretch = _meridian_coefficients(s)
    per_mode = max(count, 2)
    per_grid = {}
    for g in grids:
        per_grid[g] = {
            m: _mode_eigenvalues(r, stretch, g, m, per_mode) for m in range(m_max + 1)
        }

    def extrapolate(gc, gf):
        out = {}
        ratio = (gf / gc) ** 2
        for m in range(m_max + 1):
            lc, lf = per_grid[gc][m], per_grid[gf][m]
            n = min(len(lc), len(lf))
            out[m] = lf[:n] + (lf[:n] - lc[:n]) / (ratio - 1.0)
        return out

    best = extrapolate(grids[-2], grids[-1])
    consistency = 0.0
    if len(grids) >= 3:
        alt = extrapolate(grids[-3], grids[-2])
        for m in best:
            n = min(len(best[m]), len(alt[m]))
            if n:
                consistency = max(consistency, float(np.abs(best[m][:n] - alt[m][:n]).max()))
    levels = []
    for m, vals in best.items():
        mult = 1 if m == 0 else 2
        for v in vals:
            levels.append((float(v), mult))
    levels.sort(key=lambda t: abs(t[0]))
    kept, total = [], 0
    for v, mult in levels:
        if total >= count:
            break
        kept.append((v, mult))
        total += mult
    entries = [SpectrumEntry(v, mult, "sturm_liouville") for v, mult in sorted(kept)]
    meta = {
        "grid_points": grids,
        "m_max": m_max,
        "richardson_consistency": consistency,
        "surface": s.name,
    }
    return ClassicalSpectrum(tuple(entries), meta)


def cluster_multiplicities(eigs, gap: float) -> list:
    """Greedy clustering of a sorted eigenvalue list.

    A value joins the current cluster when it lies within `gap` of the
    running cluster mean; returns (mean, multiplicity) pairs in input order.
    """
    clusters = []
    current = []
    for x in eigs:
        if current and abs(x - sum(current) / len(current)) <= gap:
            current.append(x)
        else:
            if current:
                clusters.append((sum(current) / len(current), len(current)))
            current = [x]
    if current:
        clusters.append((sum(current) / len(current), len(current)))
    return clusters


def save_classical_spectrum(spec: ClassicalSpectrum, out_dir, stem: str, formats=("json", "csv")) -> list:
    """Serialize to the same JSON/CSV shapes used by spectrum reports."""
    import csv as _csv
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "json" in formats:
        p = out / f"{stem}.json"
        p.write_text(json.dumps(spec.to_json_dict(), indent=2) + "\n")
        written.append(p)
    if "csv" in formats:
        p = out / f"{stem}.csv"
        with open(p, "w", newline="") as fh:
            for key in sorted(spec.metadata):
                fh.write(f"# {key} = {spec.metadata[key]}\n")
            writer = _csv.writer(fh)
            writer.writerows(spec.to_csv_rows())
        written.append(p)
    return written
