"""The identity-shift family M(rho) = M0 + rho * Id.

Given a square base matrix M0, this module evaluates singular-value
trajectories over a rho grid, the analytic derivative of simple non-zero
singular values, the extreme eigenvalues tau_under/tau_over of M0^T + M0 that
control quadratic growth, and the four condition-number bounds for M0 + Id.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .linalg import (
    as_matrix,
    condition_number_from_singvals,
    default_zero_tol,
    fmt17,
    singular_values,
    svd,
    sym_eig,
)

DEFAULT_GAP_TOL = 1e-8
FD_STEP = 1e-6


@dataclass(frozen=True)
class IdShiftFamily:
    """A base matrix M0 with the derived quantities of the family M0 + rho*Id.

    tau_under/tau_over are the extreme eigenvalues of M0^T + M0; s1_0 and sn_0
    the extreme singular values of M0.
    """

    M0: np.ndarray
    n: int
    tau_under: float
    tau_over: float
    s1_0: float
    sn_0: float


@dataclass(frozen=True)
class SvTrajectory:
    """Singular values (and optional analytic derivatives) along a rho grid.

    ``s`` has one column per grid point, sorted descending; ``ds`` carries
    NaN wherever the derivative is undefined (multiple or zero value).
    """

    rho_grid: np.ndarray
    s: np.ndarray
    ds: np.ndarray | None


@dataclass(frozen=True)
class KappaBounds:
    """The four upper bounds on kappa(M0 + Id), with applicability flags.

    Inapplicable bounds are reported as NaN with the flag cleared, never as
    silent numbers.
    """

    via_opnorm_tight: float
    via_opnorm_simple: float
    via_tau_tight: float
    via_tau_simple: float
    applicable_opnorm: bool
    applicable_tau: bool


def make_family(m0) -> IdShiftFamily:
    """Build an IdShiftFamily from a square base matrix."""
    M0 = as_matrix(m0, "M0")
    if M0.shape[0] != M0.shape[1]:
        raise ValueError(f"identity shift needs a square matrix, got {M0.shape}")
    eig = sym_eig(M0.T + M0)
    s = singular_values(M0)
    return IdShiftFamily(
        M0=M0,
        n=M0.shape[0],
        tau_under=float(eig.lam[-1]),
        tau_over=float(eig.lam[0]),
        s1_0=float(s[0]),
        sn_0=float(s[-1]),
    )


def shifted(fam: IdShiftFamily, rho: float) -> np.ndarray:
    return fam.M0 + float(rho) * np.eye(fam.n)


def _check_grid(rho_grid) -> np.ndarray:
    grid = np.asarray(rho_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("rho grid must be a non-empty 1-D sequence")
    if np.any(np.diff(grid) < 0):
        raise ValueError("rho grid must be sorted ascending")
    if float(grid[-1]) > 1.0 or float(grid[0]) < 0.0:
        warnings.warn("rho grid leaves [0, 1]; theory is stated there", stacklevel=3)
    return grid


def sv_trajectory(fam: IdShiftFamily, rho_grid, with_derivatives: bool = False) -> SvTrajectory:
    """Singular values of M0 + rho*Id for every rho in the grid."""
    grid = _check_grid(rho_grid)
    s = np.empty((fam.n, grid.size))
    ds = np.full((fam.n, grid.size), np.nan) if with_derivatives else None
    for k, rho in enumerate(grid):
        if with_derivatives:
            res = svd(shifted(fam, float(rho)))
            s[:, k] = res.s
            vals, defined = _derivative_from_svd(res)
            ds[:, k] = np.where(defined, vals, np.nan)
        else:
            s[:, k] = singular_values(shifted(fam, float(rho)))
    return SvTrajectory(rho_grid=grid, s=s, ds=ds)


def _simple_and_nonzero(s: np.ndarray, gap_tol: float) -> tuple[np.ndarray, np.ndarray]:
    scale = max(1.0, float(s[0]))
    n = s.size
    gaps_ok = np.ones(n, dtype=bool)
    for i in range(n):
        others = np.abs(np.delete(s, i) - s[i])
        if others.size and float(np.min(others)) < gap_tol * scale:
            gaps_ok[i] = False
    nonzero = s > default_zero_tol((n, n)) * scale
    return gaps_ok, nonzero


def _derivative_from_svd(res, gap_tol: float = DEFAULT_GAP_TOL) -> tuple[np.ndarray, np.ndarray]:
    simple, nonzero = _simple_and_nonzero(res.s, gap_tol)
    defined = simple & nonzero
    vals = np.full(res.s.size, np.nan)
    for i in np.nonzero(defined)[0]:
        vals[i] = float(res.V[:, i] @ res.U[:, i])
    return vals, defined


def sv_derivative(
    fam: IdShiftFamily, rho: float, gap_tol: float = DEFAULT_GAP_TOL
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic derivative of each singular value of M0 + rho*Id.

    Where s_i is simple and non-zero the derivative equals the inner product
    of the i-th right and left singular vectors (the cosine of the angle
    between them), hence always lies in [-1, 1].  Elsewhere the value is
    undefined and flagged.  Returns ``(values, defined)``, with NaN at
    undefined slots.
    """
    return _derivative_from_svd(svd(shifted(fam, float(rho))), gap_tol)


def multiplicity_gaps(
    fam: IdShiftFamily, rho_grid, gap_tol: float = DEFAULT_GAP_TOL
) -> np.ndarray:
    """Grid points where the family numerically has multiple or vanishing
    singular values.

    A point is flagged when the minimal pairwise gap falls below
    ``gap_tol * max(1, s_1)`` or when the smallest singular value falls below
    the zero threshold.
    """
    grid = _check_grid(rho_grid)
    flagged = []
    for rho in grid:
        s = singular_values(shifted(fam, float(rho)))
        scale = max(1.0, float(s[0]))
        min_gap = float(np.min(np.abs(np.diff(s)))) if s.size > 1 else np.inf
        if min_gap < gap_tol * scale or float(s[-1]) < default_zero_tol((fam.n, fam.n)) * scale:
            flagged.append(float(rho))
    return np.asarray(flagged)


def weyl_interval(fam: IdShiftFamily, rho: float) -> tuple[float, float]:
    """Additive-perturbation interval [rho - s1(M0), rho + s1(M0)] that
    contains every singular value of M0 + rho*Id."""
    return float(rho) - fam.s1_0, float(rho) + fam.s1_0


def wasem_interval(fam: IdShiftFamily, rho: float) -> tuple[float, float]:
    """Squared-singular-value sandwich for M0 + rho*Id.

    Returns (lower_sq, upper_sq) with

        lower_sq <= s_n(rho)^2 <= s_1(rho)^2 <= upper_sq

    where lower_sq = max(0, s_n(0)^2 + rho*tau_under + rho^2) and
    upper_sq = s_1(0)^2 + rho*tau_over + rho^2.  Holds with no hypothesis on
    M0; the lower bound is clipped at zero since squares are non-negative.
    """
    rho = float(rho)
    lower = max(0.0, fam.sn_0 ** 2 + rho * fam.tau_under + rho * rho)
    upper = fam.s1_0 ** 2 + rho * fam.tau_over + rho * rho
    return lower, upper


def kappa_bounds_id(fam: IdShiftFamily) -> KappaBounds:
    """The four upper bounds on kappa(M0 + Id).

    The operator-norm pair needs s1(M0) < 1; the tau pair needs
    tau_under > -1.  Inapplicable bounds come back NaN with their flag False.
    """
    s1, sn = fam.s1_0, fam.sn_0
    tu, to = fam.tau_under, fam.tau_over
    applicable_opnorm = s1 < 1.0
    applicable_tau = tu > -1.0
    if applicable_opnorm:
        via_opnorm_tight = float(np.sqrt(1.0 + to + s1 * s1) / (1.0 - s1))
        via_opnorm_simple = float((1.0 + s1) / (1.0 - s1))
    else:
        via_opnorm_tight = via_opnorm_simple = float("nan")
    if applicable_tau:
        via_tau_tight = float(np.sqrt((1.0 + to + s1 * s1) / (1.0 + tu + sn * sn)))
        via_tau_simple = float((1.0 + s1) / np.sqrt(1.0 + tu))
    else:
        via_tau_tight = via_tau_simple = float("nan")
    return KappaBounds(
        via_opnorm_tight=via_opnorm_tight,
        via_opnorm_simple=via_opnorm_simple,
        via_tau_tight=via_tau_tight,
        via_tau_simple=via_tau_simple,
        applicable_opnorm=applicable_opnorm,
        applicable_tau=applicable_tau,
    )


def kappa_shifted(fam: IdShiftFamily, rho: float = 1.0) -> float:
    """Condition number of M0 + rho*Id."""
    s = singular_values(shifted(fam, rho))
    return condition_number_from_singvals(s, default_zero_tol((fam.n, fam.n)))


def trajectory_to_csv(traj: SvTrajectory) -> str:
    """CSV dump: header "rho,s1,...,sn,ds1,...,dsn", NA for undefined ds."""
    n = traj.s.shape[0]
    header = ["rho"] + [f"s{i + 1}" for i in range(n)] + [f"ds{i + 1}" for i in range(n)]
    lines = [",".join(header)]
    for k, rho in enumerate(traj.rho_grid):
        cells = [fmt17(rho)] + [fmt17(v) for v in traj.s[:, k]]
        if traj.ds is None:
            cells += ["NA"] * n
        else:
            cells += ["NA" if np.isnan(v) else fmt17(v) for v in traj.ds[:, k]]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
