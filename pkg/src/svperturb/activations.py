"""Diagonal activation masks and their effect on singular values.

A mask is a diagonal matrix with m entries equal to the activation slope eta
and n - m entries equal to 1: the exact local action of max(t, eta*t) on one
region.  eta = -1 is the absolute value (orthogonal, spectrum-preserving),
eta = 0 the ReLU (a coordinate projection), 0 < eta < 1 the leaky ReLU.

The hard-bound functions turn an entrywise weight bound |W[i,j]| <= c of a
residual multi-layer into certified condition-number bounds, each guarded by
the hypothesis it needs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import HypothesisError
from .linalg import (
    as_matrix,
    condition_number_from_singvals,
    default_zero_tol,
    singular_values,
)


def _valid_eta(eta: float) -> bool:
    return eta == -1.0 or 0.0 <= eta < 1.0


@dataclass(frozen=True)
class ActivationMask:
    """Diagonal mask with entries eta at ``indices`` and 1 elsewhere."""

    n: int
    eta: float
    indices: tuple[int, ...]

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("mask dimension must be positive")
        if not _valid_eta(self.eta):
            raise ValueError(f"activation slope must be -1 or in [0, 1), got {self.eta}")
        idx = tuple(int(i) for i in self.indices)
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("mask indices must be strictly increasing")
        if idx and (idx[0] < 0 or idx[-1] >= self.n):
            raise ValueError("mask indices out of range")
        object.__setattr__(self, "indices", idx)

    @property
    def m(self) -> int:
        return len(self.indices)

    def diagonal(self) -> np.ndarray:
        d = np.ones(self.n)
        if self.indices:
            d[list(self.indices)] = self.eta
        return d

    def matrix(self) -> np.ndarray:
        return np.diag(self.diagonal())

    def trace(self) -> float:
        return self.m * self.eta + (self.n - self.m)


def identity_mask(n: int, eta: float = 0.0) -> ActivationMask:
    return ActivationMask(n=n, eta=eta, indices=())


def mask_from_preactivation(pre: np.ndarray, eta: float) -> ActivationMask:
    """Mask realized by max(t, eta*t) at a pre-activation vector.

    Tie rule: an exact zero gets slope eta (the output is identical either
    way; pinning the rule keeps region signatures reproducible).
    """
    pre = np.asarray(pre, dtype=float)
    idx = tuple(int(i) for i in np.nonzero(pre <= 0.0)[0])
    return ActivationMask(n=pre.size, eta=float(eta), indices=idx)


def random_mask(rng: np.random.Generator, n: int, m: int, eta: float) -> ActivationMask:
    """Uniformly random member of D(m, n, eta)."""
    if not 0 <= m <= n:
        raise ValueError(f"need 0 <= m <= n, got m={m}, n={n}")
    idx = tuple(sorted(int(i) for i in rng.choice(n, size=m, replace=False)))
    return ActivationMask(n=n, eta=float(eta), indices=idx)


def apply_mask(d: ActivationMask, m_mat, side: str) -> np.ndarray:
    """DM for side="left", MD for side="right"."""
    M = as_matrix(m_mat)
    diag = d.diagonal()
    if side == "left":
        if M.shape[0] != d.n:
            raise ValueError(f"left mask of size {d.n} cannot act on {M.shape}")
        return diag[:, None] * M
    if side == "right":
        if M.shape[1] != d.n:
            raise ValueError(f"right mask of size {d.n} cannot act on {M.shape}")
        return M * diag[None, :]
    raise ValueError(f"side must be 'left' or 'right', got {side!r}")


def abs_invariance_check(m_mat, d: ActivationMask) -> float:
    """Largest deviation of the spectra of MD and DM from that of M.

    A sign mask (eta = -1) is orthogonal, so the deviation is pure numerical
    noise; the contract is <= 1e-10 * max(1, s_1(M)).
    """
    if d.eta != -1.0:
        raise ValueError("absolute-value invariance needs a sign mask (eta = -1)")
    M = as_matrix(m_mat)
    s = singular_values(M)
    dev_right = np.max(np.abs(s - singular_values(apply_mask(d, M, "right"))))
    dev_left = np.max(np.abs(s - singular_values(apply_mask(d, M, "left"))))
    return float(max(dev_right, dev_left))


@dataclass(frozen=True)
class ReluIdentities:
    """Trace and spectrum comparisons between M and MD for a ReLU mask.

    trace_lhs is the drop in the sum of squared singular values, which must
    equal trace_rhs, the squared mass of the zeroed columns; singval_diff_sq
    is bounded by column_mass (= trace_rhs).
    """

    trace_lhs: float
    trace_rhs: float
    singval_diff_sq: float
    column_mass: float


def relu_identities(m_mat, d: ActivationMask) -> ReluIdentities:
    if d.eta != 0.0:
        raise ValueError("ReLU identities need eta = 0")
    M = as_matrix(m_mat)
    s = singular_values(M)
    st = singular_values(apply_mask(d, M, "right"))
    trace_lhs = float(np.sum(s ** 2) - np.sum(st ** 2))
    cols = list(d.indices)
    trace_rhs = float(np.sum(M[:, cols] ** 2)) if cols else 0.0
    singval_diff_sq = float(np.sum((s - st) ** 2))
    return ReluIdentities(
        trace_lhs=trace_lhs,
        trace_rhs=trace_rhs,
        singval_diff_sq=singval_diff_sq,
        column_mass=trace_rhs,
    )


@dataclass(frozen=True)
class ProductEntryBound:
    """Masked product D_p W_p ... D_1 W_1 with its entrywise bound check."""

    product: np.ndarray
    max_entry: float
    hypothesis_ok: bool


def product_entry_bound(ws, ds, c: float) -> ProductEntryBound:
    """Form the masked product and report its largest absolute entry.

    Under |W_i[j,k]| <= c, c <= 1/n and |eta| <= 1 the product inherits the
    entry bound c.  A violated hypothesis is flagged, not raised; the product
    is still returned (the bound contract is then void).
    """
    if len(ws) != len(ds) or not ws:
        raise ValueError("need equally many (non-zero) weight matrices and masks")
    n = as_matrix(ws[0]).shape[0]
    hypothesis_ok = c <= 1.0 / n
    prod = None
    for w, d in zip(ws, ds):
        W = as_matrix(w)
        if W.shape != (n, n) or d.n != n:
            raise ValueError("all factors must be square of one common size")
        if float(np.max(np.abs(W))) > c * (1.0 + 1e-12):
            hypothesis_ok = False
        if abs(d.eta) > 1.0:
            hypothesis_ok = False
        layer = apply_mask(d, W, "left")
        prod = layer if prod is None else layer @ prod
    return ProductEntryBound(
        product=prod, max_entry=float(np.max(np.abs(prod))), hypothesis_ok=hypothesis_ok
    )


@dataclass(frozen=True)
class HardBoundReport:
    """One certified condition-number bound with its checked hypothesis."""

    name: str
    eta: float
    c: float
    n: int
    m: int
    bound_value: float
    applicable: bool
    hypothesis: str


def _report(name, eta, c, n, m, value, ok, hypothesis) -> HardBoundReport:
    return HardBoundReport(
        name=name,
        eta=eta,
        c=c,
        n=n,
        m=m,
        bound_value=float(value) if ok else float("nan"),
        applicable=bool(ok),
        hypothesis=hypothesis,
    )


def hard_bounds(c: float, n: int, m: int, eta: float) -> list[HardBoundReport]:
    """Deterministic bounds on kappa(M(1) D) for entrywise-bounded weights.

    M(1) = D_p W_p ... D_1 W_1 + Id with all |W_i[j,k]| <= c <= 1/n, and
    D in D(m, n, eta) acting on the right.  Each report carries the
    hypothesis that was checked; inapplicability is data, not an error.
    """
    if c <= 0.0 or n < 1:
        raise ValueError("need c > 0 and n >= 1")
    if not 0 <= m <= n:
        raise ValueError(f"need 0 <= m <= n, got m={m}")
    if not _valid_eta(eta):
        raise ValueError(f"activation slope must be -1 or in [0, 1), got {eta}")
    cn = c * n
    base_ok = cn < 1.0
    reports: list[HardBoundReport] = []
    if eta == -1.0:
        reports.append(
            _report(
                "abs_orthogonal", eta, c, n, m,
                (1.0 + cn) / (1.0 - cn) if base_ok else np.nan,
                base_ok, "c*n < 1",
            )
        )
    elif eta == 0.0:
        ok1 = base_ok and 2.0 * cn < 1.0 / (1.0 + n)
        reports.append(
            _report(
                "relu_trace", eta, c, n, m,
                (1.0 + cn) / np.sqrt(1.0 - 2.0 * cn * (1.0 + n)) if ok1 else np.nan,
                ok1, "2*c*n < 1/(1+n)",
            )
        )
        ok2 = base_ok and np.sqrt(m / n) < 1.0 - cn
        reports.append(
            _report(
                "relu_small_m", eta, c, n, m,
                (1.0 + cn) / (1.0 - cn - np.sqrt(m / n)) if ok2 else np.nan,
                ok2, "c*n < 1 and m <= n*(1-c*n)^2 (strictly)",
            )
        )
        ok3 = base_ok and 2.0 * cn < 1.0 / (1.0 + 2.0 * m)
        reports.append(
            _report(
                "relu_diff", eta, c, n, m,
                (1.0 + cn) / np.sqrt(1.0 - 2.0 * cn * (1.0 + 2.0 * m)) if ok3 else np.nan,
                ok3, "2*c*n < 1/(1+2m)",
            )
        )
    else:
        gap = (1.0 - cn) ** 2 - 4.0 * (1.0 - eta) * np.sqrt(m)
        ok1 = base_ok and n >= 5 and gap > 0.0
        reports.append(
            _report(
                "leaky_sqrt_m", eta, c, n, m,
                (1.0 + cn) / np.sqrt(gap) if ok1 else np.nan,
                ok1, "n >= 5 and (1-c*n)^2 > 4*(1-eta)*sqrt(m)",
            )
        )
        den = 1.0 - cn - (1.0 - eta) * m * (3.0 * c + 1.0)
        ok2 = base_ok and den > 0.0
        reports.append(
            _report(
                "leaky_linear_m", eta, c, n, m,
                (1.0 + cn) / den if ok2 else np.nan,
                ok2, "1 - c*n > (1-eta)*m*(3c+1)",
            )
        )
    return reports


@dataclass(frozen=True)
class HardBoundCheck:
    """Measured kappa against a hard-bound report; passed is None when the
    report was inapplicable."""

    kappa: float
    passed: bool | None


def residual_product(ws, ds_inner) -> np.ndarray:
    """M(1) = D_p W_p ... D_1 W_1 + Id."""
    prod = product_entry_bound(ws, ds_inner, c=np.inf).product
    return prod + np.eye(prod.shape[0])


def verify_hard_bound(ws, ds_inner, d_outer: ActivationMask, report: HardBoundReport) -> HardBoundCheck:
    """Measure kappa(M(1) D) for one realization and compare to a report."""
    m1 = residual_product(ws, ds_inner)
    s = singular_values(apply_mask(d_outer, m1, "right"))
    kappa = condition_number_from_singvals(s, default_zero_tol(m1.shape))
    passed = bool(kappa <= report.bound_value + 1e-9) if report.applicable else None
    return HardBoundCheck(kappa=kappa, passed=passed)


def hard_bound_trials(
    reports: list[HardBoundReport],
    n: int,
    c: float,
    eta: float,
    m: int,
    trials: int,
    master_seed: int,
    depth: int = 1,
) -> list[tuple[HardBoundReport, float, int]]:
    """Monte-Carlo verification: Uniform(+-c) weights, uniform random masks.

    For each report returns (report, max measured kappa, violation count)
    over ``trials`` independent realizations of a depth-``depth`` residual
    product with inner masks of random size and an outer mask in D(m, n, eta).
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    results = []
    for rep in reports:
        max_kappa = 0.0
        violations = 0
        for t in range(trials):
            rng = np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(t,)))
            ws = [rng.uniform(-c, c, size=(n, n)) for _ in range(depth)]
            ds = [random_mask(rng, n, int(rng.integers(0, n + 1)), eta) for _ in range(depth)]
            d_outer = random_mask(rng, n, m, eta)
            check = verify_hard_bound(ws, ds, d_outer, rep)
            max_kappa = max(max_kappa, check.kappa)
            if check.passed is False:
                violations += 1
        results.append((rep, max_kappa, violations))
    return results
