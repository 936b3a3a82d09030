"""Discretized sub-Markovian generator, principal eigenpairs and spectral gap.

The generator ``L f = (1/2) f'' - (1/2) V' f'`` with absorption at both
endpoints is discretized in divergence form,

    L_h f_i = e^{V_i} [ e^{-V_{i+1/2}} (f_{i+1} - f_i)
                        - e^{-V_{i-1/2}} (f_i - f_{i-1}) ] / (2 h^2),

with Dirichlet rows at the two ends and midpoint potentials evaluated
exactly.  The construction makes the operator symmetric under the weighted
inner product with gamma = exp(-V), so conjugating by sqrt(gamma) yields a
symmetric tridiagonal matrix whose two lowest eigenvalues are computed by
inverse iteration (with deflation for the second one).

The principal eigenvector eta is stored with the normalization
``gamma(eta^2) = gamma(eta)``, i.e. the quasi-stationary distribution
``alpha = eta * gamma`` integrates eta to one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded

from .grid_measure import Grid1D, GridMeasure, quadrature
from .potential import PotentialSpec, evaluate

__all__ = [
    "TridiagonalOperator",
    "EigenPair",
    "ProductEigenPair",
    "ConvergenceError",
    "assemble_generator",
    "tridiag_apply",
    "principal_eigenpair",
    "spectral_gap",
    "eigen_residual",
    "qsd_from_eigen",
    "tensor_eigen",
    "IdentityResiduals",
    "integral_identity_residual",
    "save_eigen_json",
    "save_eigen_csv",
]


class ConvergenceError(RuntimeError):
    """Raised when an eigensolve fails to converge or returns a bad vector."""


@dataclass(frozen=True)
class TridiagonalOperator:
    """Tridiagonal discretization of the absorbed generator on a grid.

    ``gamma_weights`` holds exp(-(V - v_shift)) at the nodes; the shift by
    ``v_shift = min V`` guards against overflow and only rescales gamma, which
    leaves every normalized quantity unchanged.
    """

    grid: Grid1D
    diag: np.ndarray = field(repr=False)
    off_upper: np.ndarray = field(repr=False)
    off_lower: np.ndarray = field(repr=False)
    gamma_weights: np.ndarray = field(repr=False)
    v_shift: float = 0.0


@dataclass(frozen=True)
class EigenPair:
    """Principal eigenvalue/eigenvector pair of the discretized generator."""

    lambda0: float
    eta: np.ndarray = field(repr=False)
    lambda1: float = None
    normalization: str = "alpha(eta) = 1"


@dataclass(frozen=True)
class ProductEigenPair:
    """Tensor eigenpair: product eigenfunction, summed eigenvalue."""

    factors: tuple[EigenPair, ...]
    lambda0_total: float


def assemble_generator(spec: PotentialSpec, grid: Grid1D) -> TridiagonalOperator:
    """Assemble the divergence-form discretization of (1/2)(Lap - V' d/dx)."""
    v_nodes, _, _ = evaluate(spec, grid.nodes)
    v_nodes = np.asarray(v_nodes, dtype=float)
    if not np.all(np.isfinite(v_nodes)):
        raise ValueError("potential is not finite on the grid interior")
    mids = np.concatenate(([grid.x_min + 0.5 * grid.h], grid.nodes + 0.5 * grid.h))
    v_mids, _, _ = evaluate(spec, mids)
    v_mids = np.asarray(v_mids, dtype=float)

    shift = float(v_nodes.min())
    vn = v_nodes - shift
    vm = v_mids - shift

    scale = 1.0 / (2.0 * grid.h**2)
    # coefficients e^{V_i - V_{i +/- 1/2}} stay O(1); no overflow possible
    left = scale * np.exp(vn - vm[:-1])   # couples node i to i-1 (and boundary)
    right = scale * np.exp(vn - vm[1:])   # couples node i to i+1 (and boundary)
    if not (np.all(np.isfinite(left)) and np.all(np.isfinite(right))):
        raise ValueError("potential variation overflows the stencil weights")

    diag = -(left + right)
    off_upper = right[:-1]
    off_lower = left[1:]
    gamma = np.exp(-vn)
    return TridiagonalOperator(
        grid=grid,
        diag=diag,
        off_upper=off_upper,
        off_lower=off_lower,
        gamma_weights=gamma,
        v_shift=shift,
    )


def tridiag_apply(diag: np.ndarray, upper: np.ndarray, lower: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Apply a tridiagonal matrix given by its three bands."""
    out = diag * f
    out[:-1] += upper * f[1:]
    out[1:] += lower * f[:-1]
    return out


def apply_operator(op: TridiagonalOperator, f: np.ndarray) -> np.ndarray:
    """Apply the discretized generator to a grid function."""
    return tridiag_apply(op.diag, op.off_upper, op.off_lower, np.asarray(f, dtype=float))


def _symmetrized_bands(op: TridiagonalOperator) -> tuple[np.ndarray, np.ndarray]:
    """Bands (diag, off) of M = -S, the sqrt(gamma)-conjugated positive matrix."""
    m_diag = -op.diag
    m_off = -np.sqrt(op.off_upper * op.off_lower)
    return m_diag, m_off


def _inverse_iteration(
    m_diag: np.ndarray,
    m_off: np.ndarray,
    deflate: np.ndarray = None,
    tol: float = 1e-13,
    max_iter: int = 500,
) -> tuple[float, np.ndarray]:
    """Smallest eigenpair of the SPD tridiagonal matrix M by inverse iteration.

    With ``deflate`` given (a unit vector), iterates orthogonally to it and
    returns the second-smallest pair instead.
    """
    n = m_diag.size
    ab = np.zeros((2, n))
    ab[0, 1:] = m_off
    ab[1, :] = m_diag
    chol = cholesky_banded(ab, lower=False)

    if deflate is None:
        x = np.ones(n)
    else:
        # a symmetry-free (but deterministic) start: an even start vector on a
        # symmetric operator would never pick up an odd second eigenvector
        x = np.random.default_rng(180451).standard_normal(n)
        x -= (deflate @ x) * deflate
    x /= np.linalg.norm(x)
    rq_old = math.inf
    best = (math.inf, math.nan, None)  # (residual, rq, vector)
    stalled = 0
    for _ in range(max_iter):
        y = cho_solve_banded((chol, False), x)
        if deflate is not None:
            y -= (deflate @ y) * deflate
        y /= np.linalg.norm(y)
        my = tridiag_apply(m_diag, m_off, m_off, y)
        rq = float(y @ my)
        resid = float(np.max(np.abs(my - rq * y)))
        x = y
        if resid < best[0]:
            best = (resid, rq, y)
            stalled = 0
        else:
            stalled += 1
        # iterate past Rayleigh-quotient convergence until the residual hits
        # the matvec roundoff floor (it cannot improve once it stagnates)
        if abs(rq - rq_old) < tol * max(1.0, abs(rq)) and stalled >= 3:
            return best[1], best[2]
        rq_old = rq
    raise ConvergenceError(f"inverse iteration did not converge in {max_iter} steps")


def principal_eigenpair(op: TridiagonalOperator, tol: float = 1e-13, max_iter: int = 500) -> EigenPair:
    """Smallest eigenvalue lambda0 > 0 of -L_h with its positive eigenvector.

    The eigenvector is transformed back from the symmetrized problem and
    normalized so that gamma(eta^2) = gamma(eta), i.e. alpha(eta) = 1.
    """
    m_diag, m_off = _symmetrized_bands(op)
    lam0, u = _inverse_iteration(m_diag, m_off, tol=tol, max_iter=max_iter)
    if not lam0 > 0.0:
        raise ConvergenceError(f"principal eigenvalue is not positive: {lam0}")
    if u[u.size // 2] < 0.0:
        u = -u
    if np.any(u <= 0.0):
        raise ConvergenceError(
            "sign-changing principal eigenvector (discretization fault?)"
        )
    eta = u / np.sqrt(op.gamma_weights)
    g_eta = quadrature(eta * op.gamma_weights, op.grid)
    g_eta2 = quadrature(eta**2 * op.gamma_weights, op.grid)
    eta = eta * (g_eta / g_eta2)
    return EigenPair(lambda0=lam0, eta=eta)


def spectral_gap(op: TridiagonalOperator, tol: float = 1e-13, max_iter: int = 500) -> tuple[float, float]:
    """Two smallest eigenvalues (lambda0, lambda1) of -L_h."""
    m_diag, m_off = _symmetrized_bands(op)
    lam0, u0 = _inverse_iteration(m_diag, m_off, tol=tol, max_iter=max_iter)
    lam1, _ = _inverse_iteration(m_diag, m_off, deflate=u0, tol=tol, max_iter=max_iter)
    if not lam1 > lam0:
        raise ConvergenceError(f"degenerate spectrum: lambda1={lam1} <= lambda0={lam0}")
    return lam0, lam1


def eigen_residual(op: TridiagonalOperator, eigen: EigenPair) -> float:
    """Sup-norm residual ||L_h eta + lambda0 eta|| / ||eta||."""
    r = apply_operator(op, eigen.eta) + eigen.lambda0 * eigen.eta
    return float(np.max(np.abs(r)) / np.max(np.abs(eigen.eta)))


def qsd_from_eigen(eigen: EigenPair, spec: PotentialSpec, grid: Grid1D) -> GridMeasure:
    """Quasi-stationary distribution alpha = eta * gamma as a grid measure."""
    v, _, _ = evaluate(spec, grid.nodes)
    v = np.asarray(v, dtype=float)
    weights = np.exp(-(v - v.min()))
    return GridMeasure(grid, eigen.eta * weights)


def tensor_eigen(factors) -> ProductEigenPair:
    """Combine per-coordinate eigenpairs into the tensor eigenpair."""
    factors = tuple(factors)
    if not factors:
        raise ValueError("tensor_eigen needs at least one factor")
    total = float(sum(f.lambda0 for f in factors))
    return ProductEigenPair(factors=factors, lambda0_total=total)


@dataclass(frozen=True)
class IdentityResiduals:
    """Relative residuals of the integral identities satisfied by eta.

    For a process on (0, x_max) coming down from infinity, with
    s(u) = int_0^u exp(V) the scale function and gamma = exp(-V) dx:

    * ``kernel``:  eta(x) = 2 lambda0 int (s(x) ^ s(y)) eta(y) gamma(dy),
    * ``first_derivative``:  exp(-V) eta' = 2 lambda0 int_x^xmax eta dgamma,
    * ``second_derivative``: (exp(-V) eta')' = -2 lambda0 exp(-V) eta,

    each evaluated by quadrature/central differences and scaled by the sup of
    the left-hand side.  Residuals are taken over nodes to the left of the
    truncation margin, where the artificial Dirichlet layer at x_max has not
    contaminated eta.
    """

    kernel: float
    first_derivative: float
    second_derivative: float


def integral_identity_residual(
    eigen: EigenPair,
    spec: PotentialSpec,
    grid: Grid1D,
    boundary_margin: float = 0.15,
) -> IdentityResiduals:
    """Check the kernel and derivative identities of a CDFI eigenpair.

    Raises if the grid does not start at 0 (the identities characterize
    eigenfunctions of processes on (0, infinity) absorbed at 0).
    """
    if grid.x_min != 0.0:
        raise ValueError(
            "integral identity requires the domain (0, x_max); "
            f"got x_min = {grid.x_min}"
        )
    if not 0.0 <= boundary_margin < 1.0:
        raise ValueError("boundary_margin must lie in [0, 1)")
    eta = np.asarray(eigen.eta, dtype=float)
    lam0 = eigen.lambda0
    h = grid.h
    v, _, _ = evaluate(spec, grid.nodes)
    w = np.exp(-np.asarray(v, dtype=float))
    ev = np.exp(np.asarray(v, dtype=float))
    if not np.all(np.isfinite(ev)):
        raise ValueError(
            "exp(V) overflows on this grid; shrink x_max (the gamma tail "
            "is negligible long before the scale function overflows)"
        )

    v0 = float(evaluate(spec, 0.0)[0])
    # scale function s(x) = int_0^x exp(V) by cumulative trapezoid from 0
    increments = np.empty(grid.n)
    increments[0] = 0.5 * h * (math.exp(v0) + ev[0])
    increments[1:] = 0.5 * h * (ev[:-1] + ev[1:])
    s = np.cumsum(increments)

    ew = eta * w
    # sum_{j <= i} s_j ew_j  and  sum_{j > i} ew_j, both O(n); the tail sums
    # are accumulated from the right so that relative accuracy survives the
    # huge dynamic range of the scale function
    lower = np.cumsum(s * ew)
    upper = np.concatenate((np.cumsum(ew[::-1])[-2::-1], [0.0]))
    kernel = 2.0 * lam0 * h * (lower + s * upper)

    keep = grid.nodes <= grid.x_max - boundary_margin * (grid.x_max - grid.x_min)
    if not np.any(keep):
        raise ValueError("boundary margin leaves no nodes to check")
    sup_eta = float(np.max(np.abs(eta)))
    res_kernel = float(np.max(np.abs(eta - kernel)[keep]) / sup_eta)

    # first-derivative identity: w eta' = 2 lambda0 int_x^xmax eta dgamma
    etap = np.empty(grid.n)
    etap[1:-1] = (eta[2:] - eta[:-2]) / (2.0 * h)
    etap[0] = (-3.0 * eta[0] + 4.0 * eta[1] - eta[2]) / (2.0 * h)
    etap[-1] = (3.0 * eta[-1] - 4.0 * eta[-2] + eta[-3]) / (2.0 * h)
    lhs1 = w * etap
    tail = h * (0.5 * ew + np.concatenate((np.cumsum(ew[::-1])[-2::-1], [0.0])))
    rhs1 = 2.0 * lam0 * tail
    res_d1 = float(np.max(np.abs(lhs1 - rhs1)[keep]) / np.max(np.abs(lhs1)))

    # divergence-form second derivative against the true gamma weights
    mids = np.concatenate(([0.5 * h], grid.nodes + 0.5 * h))
    w_mid = np.exp(-np.asarray(evaluate(spec, mids)[0], dtype=float))
    eta_ext = np.concatenate(([0.0], eta, [0.0]))
    flux = w_mid * np.diff(eta_ext) / h
    lhs2 = np.diff(flux) / h
    rhs2 = -2.0 * lam0 * w * eta
    res_d2 = float(np.max(np.abs(lhs2 - rhs2)[keep]) / np.max(np.abs(rhs2)))

    return IdentityResiduals(
        kernel=res_kernel,
        first_derivative=res_d1,
        second_derivative=res_d2,
    )


def save_eigen_json(eigen: EigenPair, path) -> None:
    """Write eigenvalue metadata as JSON {lambda0, lambda1, normalization}."""
    import json

    payload = {
        "lambda0": eigen.lambda0,
        "lambda1": eigen.lambda1,
        "normalization": eigen.normalization,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def save_eigen_csv(eigen: EigenPair, grid: Grid1D, path) -> None:
    """Write the eigenvector as CSV ``x,eta`` with 17 significant digits."""
    lines = ["x,eta"]
    for x, e in zip(grid.nodes, eigen.eta):
        lines.append(f"{x:.17g},{e:.17g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
