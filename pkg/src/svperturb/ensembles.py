"""Scaled random-matrix ensembles and the high-probability bound experiments.

Entries are iid Gaussian or Uniform[-sqrt(3), sqrt(3)] (zero mean, unit
variance); the bound experiments scale by sigma_n = 1/(r*sqrt(8n)) with
r > 1.  Per-trial randomness is derived from (master_seed, trial_index)
through a splittable seed sequence, so trials can run in any order or in
parallel and still reproduce bit-identically.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from . import HypothesisError
from .activations import apply_mask, random_mask
from .linalg import condition_number_from_singvals, default_zero_tol, singular_values

DISTRIBUTIONS = ("gaussian", "uniform")


@dataclass(frozen=True)
class EnsembleSpec:
    """Parameters of one scaled-ensemble experiment."""

    n: int
    dist: str
    r: float
    trials: int
    master_seed: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("dimension must be positive")
        if self.dist not in DISTRIBUTIONS:
            raise ValueError(f"dist must be one of {DISTRIBUTIONS}, got {self.dist!r}")
        if not self.r > 1.0:
            raise HypothesisError("scale parameter r must exceed 1")
        if self.trials < 1:
            raise ValueError("need at least one trial")

    @property
    def sigma_n(self) -> float:
        return 1.0 / (self.r * np.sqrt(8.0 * self.n))


def trial_rng(master_seed: int, trial_index: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for one (trial, stream) pair."""
    return np.random.default_rng(
        np.random.SeedSequence(master_seed, spawn_key=(trial_index, stream))
    )


def _raw_square(rng: np.random.Generator, n: int, dist: str) -> np.ndarray:
    if dist == "gaussian":
        return rng.standard_normal((n, n))
    half = np.sqrt(3.0)
    return rng.uniform(-half, half, size=(n, n))


def sample_scaled(spec: EnsembleSpec, trial_index: int) -> np.ndarray:
    """The scaled matrix W_1 = sigma_n * K_n of one trial."""
    if not 0 <= trial_index < spec.trials:
        raise ValueError(f"trial index {trial_index} outside 0..{spec.trials - 1}")
    rng = trial_rng(spec.master_seed, trial_index, stream=0)
    return spec.sigma_n * _raw_square(rng, spec.n, spec.dist)


def _run_indexed(fn, count: int, threads: int) -> list:
    if threads <= 1:
        return [fn(i) for i in range(count)]
    out = [None] * count
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for i, val in enumerate(pool.map(fn, range(count))):
            out[i] = val
    return out


# --- Tracy-Widom edge statistics ---------------------------------------------


@dataclass(frozen=True)
class EdgeStats:
    """Normalized edge samples of the unscaled ensemble K_n.

    z / z_tilde renormalize the extreme eigenvalues of K_n^T + K_n;
    y renormalizes s_1(K_n)^2 (Gaussian ensembles only, else None);
    tau_ratio collects tau_over / (sqrt(2) * s_1), which concentrates near 1.
    """

    z_samples: np.ndarray
    z_tilde_samples: np.ndarray
    y_samples: np.ndarray | None
    tau_ratio_samples: np.ndarray


def edge_stats(spec: EnsembleSpec, threads: int = 1) -> EdgeStats:
    n = spec.n
    if n < 2:
        raise ValueError("edge statistics need n >= 2")
    root8n = np.sqrt(8.0 * n)
    n16 = float(n) ** (1.0 / 6.0)
    mu_n = (np.sqrt(n - 1.0) + np.sqrt(n)) ** 2
    q_n = np.sqrt(mu_n) * (1.0 / np.sqrt(n - 1.0) + 1.0 / np.sqrt(n)) ** (1.0 / 3.0)
    gaussian = spec.dist == "gaussian"

    def one(t: int):
        rng = trial_rng(spec.master_seed, t, stream=0)
        k_mat = _raw_square(rng, n, spec.dist)
        eig = np.linalg.eigvalsh(k_mat.T + k_mat)
        t_hi, t_lo = float(eig[-1]), float(eig[0])
        s1 = float(np.linalg.svd(k_mat, compute_uv=False)[0])
        z = (t_hi - root8n) * n16
        z_tilde = (-t_lo - root8n) * n16
        y = (s1 * s1 - mu_n) / q_n if gaussian else np.nan
        return z, z_tilde, y, t_hi / (np.sqrt(2.0) * s1)

    rows = np.array(_run_indexed(one, spec.trials, threads))
    return EdgeStats(
        z_samples=rows[:, 0],
        z_tilde_samples=rows[:, 1],
        y_samples=rows[:, 2] if gaussian else None,
        tau_ratio_samples=rows[:, 3],
    )


# --- absolute-value experiment ------------------------------------------------


@dataclass(frozen=True)
class BoundTrialRecord:
    """One trial of the sign-mask bound experiment.

    Bounds follow the two families: via_tau (tight/simple, needs
    tau_under > -1) and via_s1 (tight/simple, needs s1 < 1);
    ``bound_tight``/``bound_simple`` are the via_tau pair, the tightest for
    these ensembles.  The ratio_* fields are the three efficiency ratios
    (each >= 1 outside exceptional events).
    """

    kappa_measured: float
    bound_tight: float
    bound_simple: float
    bound_s1_tight: float
    bound_s1_simple: float
    s1_w: float
    sn_w: float
    tau_under: float
    tau_over: float
    ratio_smallest: float
    ratio_largest: float
    ratio_kappa: float
    exception_flags: frozenset[str] = field(default_factory=frozenset)


TRIAL_COLUMNS = (
    "trial,kappa_measured,bound_tight,bound_simple,bound_s1_tight,bound_s1_simple,"
    "s1_w,sn_w,tau_under,tau_over,ratio_smallest,ratio_largest,ratio_kappa,exception_flags"
)


def abs_bound_experiment(spec: EnsembleSpec, m: int, threads: int = 1) -> list[BoundTrialRecord]:
    """Sign-masked bound experiment: M0 = D1 W1, kappa((M0 + Id) D).

    Per trial, W1 is the scaled sample, D1 and D are uniformly random sign
    masks in D(m, n, -1), and the record holds the measured condition number,
    both bound families evaluated from M0's quantities, the three efficiency
    ratios, and the exceptional-event flags (never silently dropped).
    """
    n = spec.n
    if not 0 <= m <= n:
        raise ValueError(f"need 0 <= m <= n, got m={m}")
    ztol = default_zero_tol((n, n))

    def one(t: int) -> BoundTrialRecord:
        w1 = sample_scaled(spec, t)
        rng = trial_rng(spec.master_seed, t, stream=1)
        d1 = random_mask(rng, n, m, -1.0)
        d = random_mask(rng, n, m, -1.0)
        m0 = apply_mask(d1, w1, "left")
        s = singular_values(m0)
        s1, sn = float(s[0]), float(s[-1])
        tau = np.linalg.eigvalsh(m0.T + m0)
        tau_under, tau_over = float(tau[0]), float(tau[-1])
        shifted = m0 + np.eye(n)
        s_shift = singular_values(apply_mask(d, shifted, "right"))
        kappa = condition_number_from_singvals(s_shift, ztol)

        flags = set()
        if s1 >= 1.0:
            flags.add("s1_ge_1")
        if tau_under <= -1.0:
            flags.add("tau_le_neg1")

        if tau_under > -1.0:
            bound_tight = float(np.sqrt((s1 * s1 + tau_over + 1.0) / (tau_under + 1.0)))
            bound_simple = float((s1 + 1.0) / np.sqrt(tau_under + 1.0))
        else:
            bound_tight = bound_simple = float("nan")
        if s1 < 1.0:
            bound_s1_tight = float(np.sqrt(s1 * s1 + tau_over + 1.0) / (1.0 - s1))
            bound_s1_simple = float((1.0 + s1) / (1.0 - s1))
        else:
            bound_s1_tight = bound_s1_simple = float("nan")

        lower_sq = sn * sn + tau_under + 1.0
        upper_sq = s1 * s1 + tau_over + 1.0
        s_unmasked = singular_values(shifted)
        sn_shift_sq = float(s_unmasked[-1]) ** 2
        s1_shift_sq = float(s_unmasked[0]) ** 2
        ratio_smallest = sn_shift_sq / lower_sq if lower_sq > 0.0 else float("nan")
        ratio_largest = upper_sq / s1_shift_sq
        ratio_kappa = bound_tight / kappa if np.isfinite(bound_tight) else float("nan")
        return BoundTrialRecord(
            kappa_measured=kappa,
            bound_tight=bound_tight,
            bound_simple=bound_simple,
            bound_s1_tight=bound_s1_tight,
            bound_s1_simple=bound_s1_simple,
            s1_w=s1,
            sn_w=sn,
            tau_under=tau_under,
            tau_over=tau_over,
            ratio_smallest=ratio_smallest,
            ratio_largest=ratio_largest,
            ratio_kappa=ratio_kappa,
            exception_flags=frozenset(flags),
        )

    return _run_indexed(one, spec.trials, threads)


# --- ReLU experiment -----------------------------------------------------------


@dataclass(frozen=True)
class ReluTrialRecord:
    kappa_measured: float
    s1_w: float
    bound_fixed: float
    bound_via_s1: float
    bound_region_uniform: float
    exception_flags: frozenset[str] = field(default_factory=frozenset)


@dataclass(frozen=True)
class ReluExperimentResult:
    """ReLU bound experiment: kappa((D1 W1 + Id) D) against the two
    probabilistic bounds and the region-uniform C/c bound."""

    records: list[ReluTrialRecord]
    nu: float
    violations_fixed: int
    violations_via_s1: int
    violations_region_uniform: int
    allowed_failure_probability: float


def relu_nu(m: int, m_tilde: int, n: int) -> float:
    """Combined activity nu = m + m_tilde - m*m_tilde/n of the two masks."""
    return m + m_tilde - m * m_tilde / n


def relu_bound_experiment(
    spec: EnsembleSpec,
    m: int,
    m_tilde: int,
    theta: float,
    r_prime: float,
    threads: int = 1,
) -> ReluExperimentResult:
    """Per-trial kappa((D1 W1 + Id) D) for ReLU masks vs the stated bounds.

    Hypotheses (checked, with a named refusal on violation): Gaussian
    entries; 4 < theta <= 2*sqrt(n); m + m_tilde >= 1; and at least one of
    r > 2 + 2*nu + theta (fixed-constant bound) or r > r' + r'*nu + theta
    with r' > 1 (via-s1 bound).
    """
    n = spec.n
    if spec.dist != "gaussian":
        raise HypothesisError("the ReLU high-probability bound is stated for Gaussian entries")
    if not 0 <= m <= n or not 0 <= m_tilde <= n:
        raise ValueError("mask sizes must lie in [0, n]")
    if m + m_tilde < 1:
        raise HypothesisError("need m + m_tilde >= 1")
    if not (4.0 < theta <= 2.0 * np.sqrt(n)):
        raise HypothesisError(f"need 4 < theta <= 2*sqrt(n) = {2.0 * np.sqrt(n):.6g}")
    if not r_prime > 1.0:
        raise HypothesisError("need r' > 1")
    nu = relu_nu(m, m_tilde, n)
    fixed_ok = spec.r > 2.0 + 2.0 * nu + theta
    via_s1_ok = spec.r > r_prime + r_prime * nu + theta
    if not (fixed_ok or via_s1_ok):
        raise HypothesisError(
            "need r > 2 + 2*nu + theta or r > r' + r'*nu + theta; "
            f"got r={spec.r}, nu={nu}, theta={theta}, r'={r_prime}"
        )
    bound_fixed = (
        2.0 * (1.0 + 1.0 / spec.r) / (1.0 - (2.0 + 2.0 * nu + theta) / spec.r)
        if fixed_ok
        else float("nan")
    )
    region_ok = spec.r > 2.0 + 2.0 * n + theta
    if region_ok:
        c_region = (1.0 - (2.0 + 2.0 * n + theta) / spec.r) / 2.0
        bound_region = (1.0 + 1.0 / spec.r) / c_region
    else:
        bound_region = float("nan")
    denom_s1 = 1.0 - (r_prime + r_prime * nu + theta) / spec.r
    ztol = default_zero_tol((n, n))

    def one(t: int) -> ReluTrialRecord:
        w1 = sample_scaled(spec, t)
        rng = trial_rng(spec.master_seed, t, stream=1)
        d1 = random_mask(rng, n, m_tilde, 0.0)
        d = random_mask(rng, n, m, 0.0)
        shifted = apply_mask(d1, w1, "left") + np.eye(n)
        s_masked = singular_values(apply_mask(d, shifted, "right"))
        kappa = condition_number_from_singvals(s_masked, ztol)
        s_w = singular_values(w1)
        s1 = float(s_w[0])
        bound_via_s1 = 2.0 * (1.0 + s1) / denom_s1 if via_s1_ok else float("nan")

        flags = set()
        if s1 >= 1.0:
            flags.add("s1_ge_1")
        tau = np.linalg.eigvalsh(w1.T + w1)
        if -float(tau[0]) > r_prime / spec.r:
            flags.add("tau_exceeds_rprime")
        # growth sandwich for W1 + Id (the only probabilistic ingredient left)
        s_shift = singular_values(w1 + np.eye(n))
        lo = float(s_w[-1]) ** 2 + float(tau[0]) + 1.0
        hi = s1 * s1 + float(tau[-1]) + 1.0
        slack = 1e-9
        if not (0.0 < lo <= float(s_shift[-1]) ** 2 + slack and float(s_shift[0]) ** 2 <= hi + slack):
            flags.add("growth_sandwich_failed")
        return ReluTrialRecord(
            kappa_measured=kappa,
            s1_w=s1,
            bound_fixed=bound_fixed,
            bound_via_s1=bound_via_s1,
            bound_region_uniform=bound_region,
            exception_flags=frozenset(flags),
        )

    records = _run_indexed(one, spec.trials, threads)
    viol_fixed = sum(
        1 for rec in records if np.isfinite(rec.bound_fixed) and rec.kappa_measured > rec.bound_fixed
    )
    viol_s1 = sum(
        1 for rec in records if np.isfinite(rec.bound_via_s1) and rec.kappa_measured > rec.bound_via_s1
    )
    viol_region = sum(
        1
        for rec in records
        if np.isfinite(rec.bound_region_uniform) and rec.kappa_measured > rec.bound_region_uniform
    )
    return ReluExperimentResult(
        records=records,
        nu=nu,
        violations_fixed=viol_fixed,
        violations_via_s1=viol_s1,
        violations_region_uniform=viol_region,
        allowed_failure_probability=2.0 * float(np.exp(-theta * theta / 2.0)),
    )


# --- asymptotics and the kappa/n law -------------------------------------------


def asymptotic_constants(r: float) -> tuple[float, float]:
    """Distributional limits of the two condition-number bounds.

    Returns (via_tau_limit, via_s1_limit):
        sqrt((r^2 + r + 1/2) / (r^2 - r))   and
        sqrt(r^2 + r + 1/2) / (r - 1/sqrt(2)).
    """
    if not r > 1.0:
        raise HypothesisError("asymptotic constants need r > 1")
    num = r * r + r + 0.5
    return (
        float(np.sqrt(num / (r * r - r))),
        float(np.sqrt(num) / (r - 1.0 / np.sqrt(2.0))),
    )


def kappa_over_n_density(t: float) -> float:
    """Limit density of kappa/n for square Gaussian matrices."""
    if t <= 0.0:
        return 0.0
    return (2.0 * t + 4.0) / t ** 3 * np.exp(-2.0 / t - 2.0 / t ** 2)


def kappa_over_n_cdf_at(xs: np.ndarray, rel_tol: float = 1e-8) -> np.ndarray:
    """CDF of the kappa/n limit law at sorted points, by adaptive quadrature."""
    xs = np.asarray(xs, dtype=float)
    if np.any(np.diff(xs) < 0):
        raise ValueError("evaluation points must be sorted")
    out = np.empty(xs.size)
    acc, prev = 0.0, 0.0
    for i, x in enumerate(xs):
        if x > prev:
            acc += quad(kappa_over_n_density, prev, x, epsrel=rel_tol, limit=200)[0]
            prev = float(x)
        out[i] = acc
    return out


@dataclass(frozen=True)
class EdelmanResult:
    kappa_over_n_samples: np.ndarray
    ks_distance: float
    density_integral: float


def edelman_check(n: int, trials: int, seed: int, threads: int = 1) -> EdelmanResult:
    """Sample kappa(W)/n for Gaussian W and compare to the limit law.

    The reference CDF comes from adaptive quadrature of the density; the
    returned KS distance is the usual sup-difference against the empirical
    CDF.  density_integral is the quadrature of the density over (0, inf),
    a self-check that must equal 1.
    """
    ztol = default_zero_tol((n, n))

    def one(t: int) -> float:
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(t,)))
        s = singular_values(rng.standard_normal((n, n)))
        return condition_number_from_singvals(s, ztol) / n

    samples = np.array(_run_indexed(one, trials, threads))
    xs = np.sort(samples)
    cdf = kappa_over_n_cdf_at(xs)
    hi = np.arange(1, trials + 1) / trials
    lo = np.arange(0, trials) / trials
    ks = float(max(np.max(np.abs(hi - cdf)), np.max(np.abs(lo - cdf))))
    total = quad(kappa_over_n_density, 0.0, np.inf, epsrel=1e-10, limit=400)[0]
    return EdelmanResult(kappa_over_n_samples=samples, ks_distance=ks, density_integral=float(total))


# --- residual link improvement --------------------------------------------------


@dataclass(frozen=True)
class ResidualImprovement:
    """Fraction of trials where the residual link did not hurt conditioning."""

    fraction_improved: float
    fraction_condition_holds: float
    counterexamples_given_condition: int
    trials: int


def residual_improves(spec: EnsembleSpec, m: int, threads: int = 1) -> ResidualImprovement:
    """Compare kappa(D1 W1 D) against kappa((D1 W1 + Id) D) with sign masks.

    Also tracks the sufficient condition s1(M0) < 1 and
    kappa(M0) >= (1 + s1)/(1 - s1), under which the improvement is certain;
    counterexamples under the condition are counted (expected: zero).
    """
    n = spec.n
    ztol = default_zero_tol((n, n))

    def one(t: int) -> tuple[bool, bool, bool]:
        w1 = sample_scaled(spec, t)
        rng = trial_rng(spec.master_seed, t, stream=1)
        d1 = random_mask(rng, n, m, -1.0)
        d = random_mask(rng, n, m, -1.0)
        m0 = apply_mask(d1, w1, "left")
        s_conv = singular_values(apply_mask(d, m0, "right"))
        s_res = singular_values(apply_mask(d, m0 + np.eye(n), "right"))
        kappa_res = condition_number_from_singvals(s_res, ztol)
        if float(s_conv[0]) == 0.0:
            # zero product: conv-side kappa undefined, improvement vacuous
            return True, False, False
        kappa_conv = condition_number_from_singvals(s_conv, ztol)
        improved = kappa_conv >= kappa_res
        s1 = float(singular_values(m0)[0])
        cond = s1 < 1.0 and kappa_conv >= (1.0 + s1) / (1.0 - s1)
        return improved, cond, (cond and not improved)

    rows = _run_indexed(one, spec.trials, threads)
    improved = sum(1 for a, _, _ in rows if a)
    cond = sum(1 for _, b, _ in rows if b)
    bad = sum(1 for _, _, c in rows if c)
    return ResidualImprovement(
        fraction_improved=improved / spec.trials,
        fraction_condition_holds=cond / spec.trials,
        counterexamples_given_condition=bad,
        trials=spec.trials,
    )
