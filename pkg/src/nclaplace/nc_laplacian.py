"""The commutator Laplacian on matrices and its spectrum.

Assembles the quantized area density gamma = sqrt(-sum_{i>j}([X_i,X_j]/hbar)^2),
its regularized inverse, and the operator

    L(F) = -(1/hbar^2) sum_i gamma^{-1} [X_i, gamma^{-1} [X_i, F]]

acting on N x N matrices.  Three spectrum strategies are provided: a dense
N^2 x N^2 superoperator (small N, any surface), a Fourier-offset block
decomposition (revolution surfaces, large N), and a matrix-free shift-invert
iterative solve (theta-dependent metrics at moderate N).
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    ConfigError,
    ConsistencyError,
    DegenerateMetricError,
    DenseSizeError,
    NotRevolutionSurfaceError,
    SolverConvergenceError,
)
from .quantization import CoordinateMatrices, QuantizationGrid, coordinate_matrices
from .reference_oracle import cluster_multiplicities
from .surface import SurfaceDescriptor

DENSE_CAP = 40

#: relative floor under which off-band entries are dropped when sparsifying
SPARSE_DROP_TOL = 1e-15

#: relative off-diagonal mass allowed for gamma in the block decomposition
GAMMA_DIAGONAL_TOL = 1e-10

#: relative leakage allowed outside the source offset when blocks are built
OFFSET_LEAKAGE_TOL = 1e-12


def build_gamma(coords: CoordinateMatrices, hbar: float) -> np.ndarray:
    """Principal square root of S = -([X,Y]^2 + [Y,Z]^2 + [Z,X]^2)/hbar^2.

    S must be hermitian positive semidefinite up to rounding; eigenvalues of S
    below -1e-10*||S|| signal a wrong hbar or broken coordinates.
    """
    mats = [_sparsify(M) for M in (coords.X, coords.Y, coords.Z)]
    S = None
    for A, B in ((mats[0], mats[1]), (mats[1], mats[2]), (mats[2], mats[0])):
        C = (A @ B - B @ A) / hbar
        term = C @ C
        S = term if S is None else S + term
    S = -S.toarray()
    dev = np.abs(S - S.conj().T).max()
    scale = max(np.abs(S).max(), 1e-300)
    if dev > 1e-12 * scale:
        raise ConsistencyError(f"commutator square sum deviates from hermitian by {dev:.2e}")
    S = 0.5 * (S + S.conj().T)
    w, V = np.linalg.eigh(S)
    wmax = max(w.max(), 0.0)
    if w.min() < -1e-10 * max(wmax, 1e-300):
        raise ConsistencyError(
            f"area-density square has eigenvalue {w.min():.3e} below tolerance "
            f"(norm {wmax:.3e}); check hbar and the coordinate matrices"
        )
    gamma = (V * np.sqrt(np.clip(w, 0.0, None))) @ V.conj().T
    return 0.5 * (gamma + gamma.conj().T)


def gamma_inverse(gamma: np.ndarray, epsilon: float, return_truncated: bool = False):
    """Pseudo-inverse through the eigenbasis of gamma.

    Eigenvalues at or above epsilon*max eigenvalue are inverted, the rest
    zeroed.  With everything below threshold the metric is degenerate.
    """
    gamma = np.asarray(gamma)
    w, V = np.linalg.eigh(gamma)
    wmax = w.max()
    if wmax <= 0.0:
        raise DegenerateMetricError("quantized area density has no positive eigenvalues")
    keep = w >= epsilon * wmax
    if not keep.any():
        raise DegenerateMetricError("all eigenvalues below the regularization threshold")
    winv = np.where(keep, 1.0 / np.where(keep, w, 1.0), 0.0)
    inv = (V * winv) @ V.conj().T
    inv = 0.5 * (inv + inv.conj().T)
    truncated = int((~keep).sum())
    return (inv, truncated) if return_truncated else inv


def _sparsify(M, drop_tol: float = SPARSE_DROP_TOL):
    A = np.asarray(M)
    scale = np.abs(A).max()
    if scale > 0:
        A = np.where(np.abs(A) > drop_tol * scale, A, 0.0)
    return sp.csr_matrix(A)


@dataclass
class QuantizedOperatorSet:
    """Everything needed to apply the commutator Laplacian."""

    coords: CoordinateMatrices
    gamma: np.ndarray
    gamma_inv: np.ndarray
    hbar: float
    regularization_epsilon: float
    surface_is_revolution: bool
    gamma_truncated_modes: int = 0
    _sparse: tuple | None = field(default=None, repr=False)

    @property
    def N(self) -> int:
        return self.coords.X.shape[0]

    def sparse_ops(self):
        if self._sparse is None:
            self._sparse = tuple(
                _sparsify(M) for M in (self.coords.X, self.coords.Y, self.coords.Z, self.gamma_inv)
            )
        return self._sparse


def build_operator_set(
    surface: SurfaceDescriptor,
    grid: QuantizationGrid,
    epsilon: float = 1e-12,
) -> QuantizedOperatorSet:
    """Quantize the surface coordinates and assemble gamma and its inverse."""
    coords = coordinate_matrices(surface, grid)
    gamma = build_gamma(coords, grid.hbar)
    inv, truncated = gamma_inverse(gamma, epsilon, return_truncated=True)
    return QuantizedOperatorSet(
        coords=coords,
        gamma=gamma,
        gamma_inv=inv,
        hbar=grid.hbar,
        regularization_epsilon=epsilon,
        surface_is_revolution=surface.revolution,
        gamma_truncated_modes=truncated,
    )


def apply_laplacian(ops: QuantizedOperatorSet, F):
    """Apply L(F) = -(1/hbar^2) sum_i gamma^{-1}[X_i, gamma^{-1}[X_i, F]].

    Accepts dense arrays or scipy sparse matrices and returns the same kind.
    """
    if sp.issparse(F):
        X, Y, Z, G = ops.sparse_ops()
        mats = (X, Y, Z)
    else:
        F = np.asarray(F, dtype=complex)
        mats = (ops.coords.X, ops.coords.Y, ops.coords.Z)
        G = ops.gamma_inv
    out = None
    for Xi in mats:
        inner = G @ (Xi @ F - F @ Xi)
        term = G @ (Xi @ inner - inner @ Xi)
        out = term if out is None else out + term
    return -out / ops.hbar**2


def assemble_dense_superoperator(ops: QuantizedOperatorSet, cap: int = DENSE_CAP) -> np.ndarray:
    """N^2 x N^2 matrix of the Laplacian in row-major vectorization.

    Column j is the vectorized image of the j-th standard basis matrix.
    Refused above the cap; use blocks (revolution) or iterative instead.
    """
    N = ops.N
    if N > cap:
        raise DenseSizeError(
            f"dense superoperator needs N <= {cap} (got {N}); "
            "use the blocks strategy on revolution surfaces or iterative otherwise"
        )
    eye = np.eye(N)
    G = np.kron(ops.gamma_inv, eye)
    total = np.zeros((N * N, N * N), dtype=complex)
    for Xi in (ops.coords.X, ops.coords.Y, ops.coords.Z):
        C = np.kron(Xi, eye) - np.kron(eye, Xi.T)
        total += G @ C @ G @ C
    return -total / ops.hbar**2


@dataclass
class OffsetBlock:
    """Dense restriction of the Laplacian to one matrix diagonal offset.

    The offset counts columns minus rows (numpy diagonal convention); with
    the entry convention T(f)[n, m] = f_{n-m}(...), the offset-k diagonal
    carries azimuthal mode -k.  Offsets +-k appear as separate blocks whose
    low eigenvalues approach each other only in the large-N limit.
    """

    offset: int
    dim: int
    operator: np.ndarray


def _check_gamma_diagonal(ops: QuantizedOperatorSet) -> np.ndarray:
    gamma = ops.gamma
    diag = np.real(np.diagonal(gamma))
    off = gamma - np.diag(np.diagonal(gamma))
    off_mass = np.abs(off).max() if off.size else 0.0
    scale = max(np.abs(diag).max(), 1e-300)
    if off_mass > GAMMA_DIAGONAL_TOL * scale:
        raise NotRevolutionSurfaceError(
            f"gamma carries off-diagonal mass {off_mass:.2e} "
            f"(tolerance {GAMMA_DIAGONAL_TOL:.0e} x {scale:.2e}); "
            "the metric is theta-dependent"
        )
    return diag


def _offset_diag_matrix(v: np.ndarray, k: int, N: int):
    return sp.dia_matrix((np.asarray(v, dtype=complex), 0), shape=(N - abs(k), N - abs(k)))


def _embed_offset(v: np.ndarray, k: int, N: int):
    """Sparse N x N matrix with vector v along diagonal offset k."""
    M = sp.lil_matrix((N, N), dtype=complex)
    idx = np.arange(N - abs(k))
    if k >= 0:
        M[idx, idx + k] = v
    else:
        M[idx - k, idx] = v
    return M.tocsr()


def block_decompose(ops: QuantizedOperatorSet, max_offset: int) -> list[OffsetBlock]:
    """Restrict the Laplacian to matrix diagonals (offsets -K..K).

    Valid when the metric is theta-independent: gamma must be numerically
    diagonal, and the response to an offset-k source must stay on offset k.
    Built by applying the operator to batches of offset-k basis matrices and
    reading off the offset-k component; leakage into other offsets raises.

    The blocks at +k and -k are assembled independently: the operator weights
    the inner commutator by gamma^{-1} from the left, so the two restrictions
    are distinct matrices whose low eigenvalues agree only up to the
    discretization error.
    """
    if not ops.surface_is_revolution:
        raise NotRevolutionSurfaceError("block decomposition requires equal equatorial axes")
    _check_gamma_diagonal(ops)
    N = ops.N
    if not 0 <= max_offset < N:
        raise ValueError(f"need 0 <= K < N, got K={max_offset}")
    X, Y, Z, _ = ops.sparse_ops()
    Ginv = sp.dia_matrix(
        (np.real(np.diagonal(ops.gamma_inv))[None, :], [0]), shape=(N, N)
    ).tocsr()
    restricted = QuantizedOperatorSet(
        coords=ops.coords,
        gamma=ops.gamma,
        gamma_inv=ops.gamma_inv,
        hbar=ops.hbar,
        regularization_epsilon=ops.regularization_epsilon,
        surface_is_revolution=True,
        gamma_truncated_modes=ops.gamma_truncated_modes,
        _sparse=(X, Y, Z, Ginv),
    )
    blocks = []
    stride = 5  # source columns this far apart cannot overlap (support radius 2)
    rng = np.random.default_rng(1234)
    offsets = [0]
    for k in range(1, max_offset + 1):
        offsets.extend([k, -k])
    for k in offsets:
        M = N - abs(k)
        L = np.zeros((M, M))
        for r in range(min(stride, M)):
            cols = np.arange(r, M, stride)
            v = np.zeros(M)
            v[cols] = 1.0
            resp = apply_laplacian(restricted, _embed_offset(v, k, N))
            main = resp.diagonal(k)
            fro = float(spla.norm(resp))
            coo = resp.tocoo()
            off_mask = (coo.col - coo.row) != k
            leak = float(np.linalg.norm(coo.data[off_mask]))
            if leak > OFFSET_LEAKAGE_TOL * max(1.0, fro):
                raise NotRevolutionSurfaceError(
                    f"offset-{k} source leaks {leak:.2e} into other offsets "
                    f"(response norm {fro:.2e}); the operator does not grade by offset"
                )
            for c in cols:
                w0, w1 = max(c - 2, 0), min(c + 3, M)
                L[w0:w1, c] = np.real(main[w0:w1])
            imag = np.abs(np.imag(main)).max() if main.size else 0.0
            if imag > 1e-12 * max(1.0, fro):
                raise ConsistencyError(f"offset-{k} block has imaginary mass {imag:.2e}")
        # cross-check the assembled block against one unstructured application
        vtest = rng.standard_normal(M)
        resp = apply_laplacian(restricted, _embed_offset(vtest, k, N))
        err = np.linalg.norm(resp.diagonal(k) - L @ vtest)
        if err > 1e-10 * max(1.0, float(np.linalg.norm(L @ vtest))):
            raise ConsistencyError(f"offset-{k} block reconstruction off by {err:.2e}")
        blocks.append(OffsetBlock(offset=k, dim=M, operator=L))
    return blocks


@dataclass
class SpectrumReport:
    """Eigenvalues of the commutator Laplacian with diagnostics.

    Entries are sorted by ascending absolute value.  ``blocks[i]`` names the
    offset block an eigenvalue came from (None off the blocks strategy),
    ``cluster_index[i]`` points into ``clusters`` (mean, multiplicity) pairs.
    """

    eigenvalues: list
    residuals: list
    blocks: list
    flagged: list
    cluster_index: list
    clusters: list
    strategy: str
    imaginary_leakage: float
    solver_tolerance: float
    config: dict

    def to_json_dict(self) -> dict:
        return {
            "surface": self.config.get("surface"),
            "N": self.config.get("N"),
            "beta": self.config.get("beta"),
            "hbar": self.config.get("hbar"),
            "strategy": self.strategy,
            "eigenvalues": [
                {
                    "value": v,
                    "residual": r,
                    "block": b,
                    "cluster": c,
                    "flagged": fl,
                }
                for v, r, b, c, fl in zip(
                    self.eigenvalues, self.residuals, self.blocks, self.flagged, self.cluster_index
                )
            ],
            "clusters": [{"mean": m, "multiplicity": mult} for m, mult in self.clusters],
            "imaginary_leakage": self.imaginary_leakage,
            "solver_tolerance": self.solver_tolerance,
            "config": dict(sorted(self.config.items())),
        }

    def to_csv_rows(self) -> list:
        rows = [["value", "residual", "block", "cluster"]]
        for v, r, b, c in zip(self.eigenvalues, self.residuals, self.blocks, self.cluster_index):
            rows.append(
                ["%.15g" % v, "%.15g" % r, "" if b is None else str(b), str(c)]
            )
        return rows

    def save(self, out_dir, stem: str, formats=("json", "csv")) -> list:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        if "json" in formats:
            p = out / f"{stem}.json"
            p.write_text(json.dumps(self.to_json_dict(), indent=2, sort_keys=False) + "\n")
            written.append(p)
        if "csv" in formats:
            p = out / f"{stem}.csv"
            with open(p, "w", newline="") as fh:
                for key in sorted(self.config):
                    fh.write(f"# {key} = {self.config[key]}\n")
                writer = csv.writer(fh)
                writer.writerows(self.to_csv_rows())
            written.append(p)
        return written


def _thread_count() -> int:
    raw = os.environ.get("NCLAPLACE_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _rayleigh_refine(L: np.ndarray, lam: complex, vec: np.ndarray) -> complex:
    """Least-squares eigenvalue for the given vector; never worsens ||Lv - lam v||."""
    denom = np.vdot(vec, vec)
    if denom == 0:
        return lam
    return complex(np.vdot(vec, L @ vec) / denom)


def _select_strategy(ops: QuantizedOperatorSet, strategy: str) -> str:
    if strategy != "auto":
        return strategy
    if ops.surface_is_revolution:
        return "blocks"
    return "dense" if ops.N <= DENSE_CAP else "iterative"


def spectrum(
    ops: QuantizedOperatorSet,
    strategy: str = "auto",
    count: int = 9,
    block_range: int | None = None,
    cluster_gap: float | None = None,
) -> SpectrumReport:
    """The `count` eigenvalues of smallest absolute value, with residuals.

    Strategies: dense (any surface, N <= cap), blocks (revolution surfaces;
    independent per-offset solves over k in [-K, K]), iterative (shift-invert
    around zero).  Residuals are measured by applying the full operator to
    the embedded eigenmatrix.  Eigenvalues whose imaginary part exceeds
    1e-8*(1 + |Re|) are flagged; real parts are reported and the largest
    discarded imaginary part recorded.
    """
    strategy = _select_strategy(ops, strategy)
    N = ops.N
    if count < 1:
        raise ConfigError("count must be positive")
    if strategy == "dense":
        candidates = _dense_candidates(ops, count)
    elif strategy == "blocks":
        K = block_range if block_range is not None else min(N - 1, max(3, int(math.isqrt(count)) + 1))
        candidates = _block_candidates(ops, count, K)
    elif strategy == "iterative":
        candidates = _iterative_candidates(ops, count)
    else:
        raise ConfigError(f"unknown strategy {strategy!r}")

    partial = False
    available = len(candidates)
    if count > available:
        if strategy == "iterative" and available > 0:
            partial = True
            count = available
        else:
            hint = "; widen the block range K" if strategy == "blocks" else ""
            raise ConfigError(
                f"requested {count} eigenvalues, only {available} available{hint}"
            )
    candidates.sort(key=lambda c: (abs(c["value"]), c["value"], c.get("block") or 0))
    kept = candidates[:count]

    values = [c["value"] for c in kept]
    residuals = [_full_residual(ops, c) for c in kept]
    flags = [abs(c["imag"]) > 1e-8 * (1.0 + abs(c["value"])) for c in kept]
    imag_leak = max((abs(c["imag"]) for c in kept), default=0.0)

    gap = cluster_gap if cluster_gap is not None else 10.0 * ops.hbar
    order = sorted(range(len(values)), key=lambda i: values[i])
    clusters = cluster_multiplicities([values[i] for i in order], gap)
    cluster_of = _assign_clusters(values, order, clusters)

    scale = max((abs(c["value"]) for c in candidates), default=1.0)
    tol = 1e-8 * (1.0 + scale)
    bad = [i for i, r in enumerate(residuals) if r > tol]
    if bad:
        if strategy == "iterative":
            # converged subset only: flag the rest instead of failing outright
            partial = True
            for i in bad:
                flags[i] = True
        else:
            worst = max(residuals[i] for i in bad)
            raise SolverConvergenceError(
                f"{len(bad)} residuals exceed the solver tolerance {tol:.2e} (max {worst:.2e})"
            )

    grid = ops.coords.grid
    surf = ops.coords.surface
    config = {
        "surface": surf.name,
        "semi_axes": list(surf.semi_axes) if surf.semi_axes else None,
        "N": N,
        "beta": grid.beta,
        "hbar": grid.hbar,
        "grid_offset": grid.grid_offset,
        "epsilon": ops.regularization_epsilon,
        "strategy": strategy,
        "count": count,
        "block_range": block_range,
        "cluster_gap": gap,
        "gamma_truncated_modes": ops.gamma_truncated_modes,
        "partial": partial,
        "analytic_derivatives": surf.has_analytic_derivatives,
    }
    return SpectrumReport(
        eigenvalues=values,
        residuals=residuals,
        blocks=[c.get("block") for c in kept],
        flagged=flags,
        cluster_index=cluster_of,
        clusters=clusters,
        strategy=strategy,
        imaginary_leakage=imag_leak,
        solver_tolerance=tol,
        config=config,
    )


def _assign_clusters(values, order, clusters) -> list:
    # walk the ascending ordering and hand out cluster ids by multiplicity
    cluster_of = [0] * len(values)
    pos = 0
    for ci, (_, mult) in enumerate(clusters):
        for _ in range(mult):
            cluster_of[order[pos]] = ci
            pos += 1
    return cluster_of


def _dense_candidates(ops: QuantizedOperatorSet, count: int) -> list:
    sup = assemble_dense_superoperator(ops)
    if count > sup.shape[0]:
        raise ConfigError(f"count {count} exceeds superoperator dimension {sup.shape[0]}")
    w, V = sla.eig(sup)
    order = np.argsort(np.abs(w))
    out = []
    for i in order[: min(len(w), count)]:
        lam = _rayleigh_refine(sup, w[i], V[:, i])
        out.append(
            {"value": lam.real, "imag": lam.imag, "block": None, "vec": V[:, i], "kind": "dense"}
        )
    return out


def _solve_block(block: OffsetBlock, take: int) -> list:
    w, V = sla.eig(block.operator)
    order = np.argsort(np.abs(w))[: min(take, block.dim)]
    out = []
    for i in order:
        lam = _rayleigh_refine(block.operator, w[i], V[:, i])
        out.append(
            {
                "value": lam.real,
                "imag": lam.imag,
                "block": block.offset,
                "vec": V[:, i],
                "kind": "block",
            }
        )
    return out


def _block_candidates(ops: QuantizedOperatorSet, count: int, K: int) -> list:
    blocks = block_decompose(ops, K)
    workers = _thread_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            solved = list(pool.map(lambda b: _solve_block(b, count), blocks))
    else:
        solved = [_solve_block(b, count) for b in blocks]
    out = []
    for cands in solved:
        out.extend(cands)
    return out


def _iterative_candidates(ops: QuantizedOperatorSet, count: int, sigma: float = 0.5) -> list:
    N = ops.N
    dim = N * N
    if count > dim - 2:
        raise ConfigError(f"iterative strategy needs count <= {dim - 2}")

    def matvec(x):
        F = x.reshape(N, N)
        return np.asarray(apply_laplacian(ops, F)).reshape(-1)

    op = spla.LinearOperator((dim, dim), matvec=matvec, dtype=complex)

    def solve_shifted(b):
        x, info = spla.lgmres(
            spla.LinearOperator(
                (dim, dim), matvec=lambda v: matvec(v) - sigma * v, dtype=complex
            ),
            b,
            rtol=1e-11,
            atol=0.0,
            maxiter=400,
        )
        if info != 0:
            raise SolverConvergenceError(f"inner shifted solve stalled (info={info})")
        return x

    opinv = spla.LinearOperator((dim, dim), matvec=solve_shifted, dtype=complex)
    try:
        w, V = spla.eigs(op, k=count, sigma=sigma, OPinv=opinv, which="LM", tol=1e-10)
        converged = range(len(w))
    except spla.ArpackNoConvergence as exc:
        w, V = exc.eigenvalues, exc.eigenvectors
        if w is None or len(w) == 0:
            raise SolverConvergenceError("iterative solve produced no converged eigenpairs")
        converged = range(len(w))
    out = []
    for i in converged:
        out.append(
            {
                "value": w[i].real,
                "imag": w[i].imag,
                "block": None,
                "vec": V[:, i],
                "kind": "dense",
            }
        )
    return out


def _full_residual(ops: QuantizedOperatorSet, cand: dict) -> float:
    """||L(F) - lambda F||_F / ||F||_F through the full operator."""
    lam = cand["value"]
    if cand["kind"] == "block":
        k = cand["block"]
        v = cand["vec"]
        F = _embed_offset(v, k, ops.N)
        resid = apply_laplacian(ops, F) - lam * F
        return float(spla.norm(resid) / np.linalg.norm(v))
    F = np.asarray(cand["vec"]).reshape(ops.N, ops.N)
    resid = apply_laplacian(ops, F) - lam * F
    return float(np.linalg.norm(resid) / np.linalg.norm(F))


def convergence_study(
    surface: SurfaceDescriptor,
    N_list,
    count: int,
    reference=None,
    beta: float = 1.0,
    grid_offset: str = "paper",
    strategy: str = "auto",
    block_range: int | None = None,
    epsilon: float = 1e-12,
) -> list:
    """Cluster-level eigenvalue errors against a classical reference.

    Returns one row per (N, cluster): dict with keys N, hbar, cluster,
    lambda, reference, abs_error, fitted_order.  The reference defaults to
    the analytic unit-sphere spectrum or the Sturm-Liouville solver for other
    revolution surfaces; a ClassicalSpectrum can be passed explicitly.
    """
    from .quantization import build_grid
    from .reference_oracle import analytic_sphere_spectrum, revolution_spectrum

    N_list = sorted(int(n) for n in N_list)
    if len(N_list) < 2:
        raise ConfigError("convergence study needs at least two values of N")
    if reference is None:
        if surface.semi_axes == (1.0, 1.0, 1.0):
            reference = analytic_sphere_spectrum(max(8, count))
        elif surface.revolution:
            reference = revolution_spectrum(surface, m_max=count, grid_points=4000, count=count)
        else:
            raise ConfigError("no classical reference available for this surface")

    a, b = surface.z_interval
    runs = []
    for N in N_list:
        grid = build_grid(N, a, b, beta, grid_offset)
        ops = build_operator_set(surface, grid, epsilon)
        rep = spectrum(ops, strategy=strategy, count=count, block_range=block_range)
        runs.append((N, grid.hbar, rep))

    # cluster the reference with the finest run's gap so levels line up
    gap_finest = 10.0 * runs[-1][1]
    ref_expanded = sorted(sorted(reference.expanded(), key=abs)[:count])
    ref_clusters = cluster_multiplicities(ref_expanded, gap_finest)
    ref_values = sorted((m for m, _ in ref_clusters), key=abs)

    rows = []
    n_clusters = min(len(ref_values), min(len(r[2].clusters) for r in runs))
    prev_err = {}
    for idx, (N, hbar, rep) in enumerate(runs):
        means = sorted((m for m, _ in rep.clusters), key=abs)
        for ci in range(n_clusters):
            lam = means[ci]
            ref = ref_values[ci]
            err = abs(lam - ref)
            order = None
            if idx > 0 and ci in prev_err and err > 0 and prev_err[ci][1] > 0:
                n_prev = prev_err[ci][0]
                order = math.log(prev_err[ci][1] / err) / math.log(N / n_prev)
            rows.append(
                {
                    "N": N,
                    "hbar": hbar,
                    "cluster": ci,
                    "lambda": lam,
                    "reference": ref,
                    "abs_error": err,
                    "fitted_order": order,
                }
            )
            prev_err[ci] = (N, err)
    return rows
