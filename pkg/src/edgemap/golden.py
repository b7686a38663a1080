"""Ground-truth engines: sparse nodal IR-drop solve and lumped
finite-difference thermal solves (static and backward-Euler transient).

Both analyses assemble the same kind of system, G*V = J, over one node
per die tile. For IR drop, branch conductances between 4-neighbors are
the unit sheet conductance scaled by the harmonic mean of the two tiles'
PDN densities, tiles sink P/VDD, and pad tiles are eliminated as
Dirichlet nodes held at VDD. For the thermal model every tile couples
laterally to its neighbors and vertically to ambient, with tile power as
the heat injection.

The default solver is a hand-rolled Jacobi-preconditioned conjugate
gradient; a dense Cholesky path is kept as an independent oracle for
testing at desk scale.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConvergenceError, DataError, NotSpdError
from .gridio import GridMap, GridSequence


@dataclass(frozen=True)
class SolverOptions:
    method: str = "cg_jacobi"
    tol: float = 1e-10
    max_iter: int = None  # defaults to 20*n at solve time

    def __post_init__(self):
        if self.method not in ("cg_jacobi", "dense_direct"):
            raise ValueError(f"unknown solver method {self.method!r}")
        if not 0 < self.tol < 1:
            raise ValueError("tol must lie in (0, 1)")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass(frozen=True)
class ConductanceSystem:
    """Sparse SPD system over the die's unknown nodes.

    node_index maps tile (row, col) to its unknown index, -1 for
    Dirichlet (pad) tiles; dirichlet maps pad tiles to their fixed value.
    """

    n: int
    G: sp.csr_matrix
    J: np.ndarray
    node_index: np.ndarray  # (rows, cols) int32
    dirichlet: dict
    rows: int
    cols: int


def _neighbors(r, c, rows, cols):
    if r > 0:
        yield r - 1, c
    if r + 1 < rows:
        yield r + 1, c
    if c > 0:
        yield r, c - 1
    if c + 1 < cols:
        yield r, c + 1


def build_ir_system(power, density, pads, chip):
    """Assemble the power-grid nodal system.

    Branch conductance between neighboring tiles a, b is
    g_unit * 2*d_a*d_b/(d_a+d_b); each tile sinks P_tile/VDD; pad tiles
    are folded out as Dirichlet nodes at VDD.
    """
    rows, cols = power.rows, power.cols
    if (density.rows, density.cols) != (rows, cols):
        raise ValueError("power and density grids must share dims")
    if not pads.pads:
        raise ValueError("at least one pad required")
    dens = density.values
    if np.any(dens <= 0):
        raise DataError("disconnected PDN: zero-density tile")

    node_index = np.full((rows, cols), -1, dtype=np.int32)
    dirichlet = {}
    for (r, c) in pads.pads:
        if not (0 <= r < rows and 0 <= c < cols):
            raise ValueError(f"pad ({r}, {c}) outside the die")
        dirichlet[(r, c)] = chip.vdd_volts
    n = 0
    for r in range(rows):
        for c in range(cols):
            if (r, c) not in dirichlet:
                node_index[r, c] = n
                n += 1

    g_unit = chip.unit_sheet_conductance_s
    diag = np.zeros(n)
    J = np.zeros(n)
    off_i, off_j, off_v = [], [], []
    for r in range(rows):
        for c in range(cols):
            i = node_index[r, c]
            if i < 0:
                continue
            J[i] -= power.values[r, c] / chip.vdd_volts
            for (rn, cn) in _neighbors(r, c, rows, cols):
                g = g_unit * 2.0 * dens[r, c] * dens[rn, cn] / (dens[r, c] + dens[rn, cn])
                diag[i] += g
                j = node_index[rn, cn]
                if j >= 0:
                    if j > i:  # stamp each off-diagonal pair once
                        off_i.extend((i, j))
                        off_j.extend((j, i))
                        off_v.extend((-g, -g))
                else:
                    J[i] += g * dirichlet[(rn, cn)]
    G = sp.csr_matrix((np.concatenate([diag, off_v]),
                       (np.concatenate([np.arange(n), off_i]),
                        np.concatenate([np.arange(n), off_j]))),
                      shape=(n, n))
    return ConductanceSystem(n, G, J, node_index, dirichlet, rows, cols)


def build_thermal_system(power, chip):
    """Assemble the lumped thermal system: lateral tile-to-tile
    conductances plus a per-tile coupling to ambient on the diagonal;
    J is the tile power and the solution is the rise over ambient."""
    rows, cols = power.rows, power.cols
    n = rows * cols
    node_index = np.arange(n, dtype=np.int32).reshape(rows, cols)
    g_lat = chip.lateral_thermal_conductance_w_per_c
    g_amb = chip.ambient_thermal_conductance_w_per_c
    diag = np.full(n, g_amb)
    J = power.values.reshape(-1).astype(np.float64).copy()
    off_i, off_j, off_v = [], [], []
    for r in range(rows):
        for c in range(cols):
            i = node_index[r, c]
            for (rn, cn) in _neighbors(r, c, rows, cols):
                diag[i] += g_lat
                j = node_index[rn, cn]
                if j > i:
                    off_i.extend((i, j))
                    off_j.extend((j, i))
                    off_v.extend((-g_lat, -g_lat))
    G = sp.csr_matrix((np.concatenate([diag, off_v]),
                       (np.concatenate([np.arange(n), off_i]),
                        np.concatenate([np.arange(n), off_j]))),
                      shape=(n, n))
    return ConductanceSystem(n, G, J, node_index, {}, rows, cols)


def check_spd_structure(sys):
    """Exact symmetry plus weak diagonal dominance with positive diagonal."""
    G = sys.G
    if (G != G.T).nnz != 0:
        return False
    diag = G.diagonal()
    if np.any(diag <= 0):
        return False
    offsum = np.abs(G).sum(axis=1).A1 - np.abs(diag)
    return bool(np.all(diag + 1e-12 * np.abs(diag) >= offsum))


def _solve_cg_jacobi(G, J, tol, max_iter):
    """Jacobi-preconditioned conjugate gradient for SPD systems.

    Terminates on ||G v - J|| <= tol * ||J||, verified against the true
    (recomputed) residual; raises on iteration exhaustion or detected
    indefiniteness.
    """
    n = J.shape[0]
    norm_j = np.linalg.norm(J)
    if norm_j == 0.0:
        return np.zeros(n)
    diag = G.diagonal()
    if np.any(diag <= 0):
        raise NotSpdError("nonpositive diagonal entry in system matrix")
    inv_diag = 1.0 / diag
    x = np.zeros(n)
    r = J.copy()
    z = inv_diag * r
    p = z.copy()
    rz = float(r @ z)
    target = tol * norm_j
    for it in range(max_iter):
        Gp = G @ p
        pGp = float(p @ Gp)
        if pGp <= 0.0:
            raise NotSpdError("negative curvature encountered in CG")
        alpha = rz / pGp
        x += alpha * p
        r -= alpha * Gp
        if np.linalg.norm(r) <= target:
            true_r = J - G @ x
            if np.linalg.norm(true_r) <= target:
                return x
            r = true_r
        z = inv_diag * r
        rz_new = float(r @ z)
        beta = rz_new / rz
        rz = rz_new
        p = z + beta * p
    residual = np.linalg.norm(J - G @ x) / norm_j
    raise ConvergenceError(
        f"CG failed to reach tol {tol:g} within {max_iter} iterations "
        f"(relative residual {residual:.3e})", residual=residual)


def _solve_dense_cholesky(G, J):
    """Dense Cholesky; desk-scale oracle only."""
    A = np.asarray(G.todense(), dtype=np.float64)
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as e:
        raise NotSpdError(f"dense Cholesky failed: {e}") from e
    y = np.linalg.solve(L, J)
    return np.linalg.solve(L.T, y)


def solve(sys, opts=None):
    """Solve G*V = J for the system's unknown node values."""
    opts = opts or SolverOptions()
    max_iter = opts.max_iter if opts.max_iter is not None else 20 * max(sys.n, 1)
    if sys.n == 0:
        return np.zeros(0)
    if opts.method == "dense_direct":
        return _solve_dense_cholesky(sys.G, sys.J)
    return _solve_cg_jacobi(sys.G, sys.J, opts.tol, max_iter)


def ir_drop_map(power, density, pads, chip, opts=None):
    """Per-tile voltage drop VDD - V; pad tiles report 0."""
    sys = build_ir_system(power, density, pads, chip)
    v = solve(sys, opts)
    drops = np.zeros((sys.rows, sys.cols))
    mask = sys.node_index >= 0
    drops[mask] = chip.vdd_volts - v[sys.node_index[mask]]
    return GridMap(sys.rows, sys.cols, power.pixel_size_um, "ir_drop", drops)


def temperature_map(power, chip, opts=None):
    """Static temperature map: ambient plus the solved rise."""
    sys = build_thermal_system(power, chip)
    rise = solve(sys, opts)
    values = chip.ambient_c + rise.reshape(sys.rows, sys.cols)
    return GridMap(sys.rows, sys.cols, power.pixel_size_um, "temperature", values)


def solve_transient_thermal(seq, chip, opts=None):
    """Backward-Euler integration of C dT/dt + K T' = P.

    Each step solves (C/dt I + K) T'_{k+1} = (C/dt) T'_k + P_{k+1} with
    T'_0 = 0 (ambient equilibrium); output frames are temperatures at
    the same dt as the input power sequence.
    """
    first = seq.frames[0]
    base = build_thermal_system(first, chip)
    c_over_dt = chip.thermal_capacitance_j_per_c / seq.dt_seconds
    A = (base.G + c_over_dt * sp.identity(base.n, format="csr")).tocsr()
    rise = np.zeros(base.n)
    out = []
    for frame in seq.frames:
        J = c_over_dt * rise + frame.values.reshape(-1)
        step = ConductanceSystem(base.n, A, J, base.node_index, {},
                                 base.rows, base.cols)
        rise = solve(step, opts)
        values = chip.ambient_c + rise.reshape(base.rows, base.cols)
        out.append(GridMap(base.rows, base.cols, first.pixel_size_um,
                           "temperature", values))
    return GridSequence(tuple(out), seq.dt_seconds)
