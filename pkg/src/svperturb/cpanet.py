"""Continuous piecewise-affine networks and their local quadratic loss shape.

A layer computes phi(W z + b) + rho * z with phi(t) = max(t, eta * t)
applied coordinatewise.  Around any probe input the trained layer plus the
stack behind it collapse to an exact affine map; the trailing stack's matrix
takes the form M(rho) = D_p W_p ... D_1 W_1 + rho * Id, where rho is the
strength of a skip connection bypassing the whole trailing stack.  Because
that skip adds the trained layer's output after the stack, the activation
masks (the region) do not depend on rho; rho enters the analysis only
through M(rho).

The local quadratic shape of the squared-error loss in the trained layer's
weights is carried by the block matrix Q = diag(z) (x) (M D), whose singular
values factor as s_i(MD) * |z[j]|.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import NumericalError
from .activations import ActivationMask, apply_mask, mask_from_preactivation
from .linalg import (
    as_matrix,
    condition_number_from_singvals,
    default_zero_tol,
    singular_values,
)

Q_MATERIALIZE_MAX = 12  # Q is n^2 x n^2; keep the direct-SVD cross-check desk-sized


@dataclass(frozen=True)
class CpaLayer:
    """One affine-plus-activation layer, with an optional skip of strength rho."""

    W: np.ndarray
    b: np.ndarray
    eta: float
    rho: float = 0.0

    def __post_init__(self):
        W = as_matrix(self.W, "layer weights")
        b = np.asarray(self.b, dtype=float)
        if b.ndim != 1 or b.size != W.shape[0]:
            raise ValueError(f"bias of length {b.size} does not match weights {W.shape}")
        if not np.all(np.isfinite(b)):
            raise ValueError("bias contains non-finite entries")
        if self.rho != 0.0 and W.shape[0] != W.shape[1]:
            raise ValueError("a skip connection needs a square layer")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)

    @property
    def in_dim(self) -> int:
        return self.W.shape[1]

    @property
    def out_dim(self) -> int:
        return self.W.shape[0]


def layer_forward(layer: CpaLayer, z) -> tuple[np.ndarray, ActivationMask]:
    """Evaluate one layer and record the activation mask it realizes."""
    z = np.asarray(z, dtype=float)
    if z.shape != (layer.in_dim,):
        raise ValueError(f"input of shape {z.shape} does not match layer {layer.W.shape}")
    pre = layer.W @ z + layer.b
    mask = mask_from_preactivation(pre, layer.eta)
    z_next = mask.diagonal() * pre
    if layer.rho != 0.0:
        z_next = z_next + layer.rho * z
    return z_next, mask


@dataclass(frozen=True)
class CpaNetwork:
    """An ordered stack of CPA layers with compatible dimensions."""

    layers: tuple[CpaLayer, ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ValueError("network needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.out_dim != b.in_dim:
                raise ValueError(
                    f"layer output {a.out_dim} does not feed layer input {b.in_dim}"
                )
        object.__setattr__(self, "layers", layers)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def forward(self, x) -> np.ndarray:
        z = np.asarray(x, dtype=float)
        for layer in self.layers:
            z, _ = layer_forward(layer, z)
        return z

    def masks(self, x) -> list[ActivationMask]:
        z = np.asarray(x, dtype=float)
        out = []
        for layer in self.layers:
            z, mask = layer_forward(layer, z)
            out.append(mask)
        return out


def signature_of(masks) -> str:
    """Region signature: one bit per unit ('1' slope one, '0' slope eta),
    layers separated by '|'."""
    parts = []
    for mask in masks:
        bits = ["1"] * mask.n
        for i in mask.indices:
            bits[i] = "0"
        parts.append("".join(bits))
    return "|".join(parts)


@dataclass(frozen=True)
class LocalLinearization:
    """Exact affine form y = M_rho @ D @ W @ z + B at a probe point.

    ``z`` is the input reaching the trained layer, ``D`` its mask, ``Ds`` the
    masks of the trailing layers, ``M0`` the plain trailing product
    D_p W_p ... D_1 W_1, and M_rho = M0 + rho * Id.  ``region_signature``
    encodes every mask decision from the trained layer on.
    """

    z: np.ndarray
    D: ActivationMask
    Ds: tuple[ActivationMask, ...]
    M0: np.ndarray
    M_rho: np.ndarray
    rho: float
    B: np.ndarray
    region_signature: str


def _stack_with_long_skip(net: CpaNetwork, trained_index: int, x, rho: float) -> np.ndarray:
    """Reference output: plain trailing stack plus rho times the trained
    layer's output (the skip bypasses the whole trailing stack)."""
    z = np.asarray(x, dtype=float)
    for layer in net.layers[:trained_index]:
        z, _ = layer_forward(layer, z)
    x_hat, _ = layer_forward(net.layers[trained_index], z)
    cur = x_hat
    for layer in net.layers[trained_index + 1 :]:
        pre = layer.W @ cur + layer.b
        cur = mask_from_preactivation(pre, layer.eta).diagonal() * pre
    if rho != 0.0:
        cur = cur + rho * x_hat
    return cur


def linearize(net: CpaNetwork, trained_index: int, x, rho: float | None = None) -> LocalLinearization:
    """Exact local linearization of the trained layer plus trailing stack.

    Preceding layers run with their own per-layer semantics to produce the
    probe input z.  Trailing layers propagate plainly for mask recording;
    their skip strengths are pooled into the single stack-level rho (pass
    ``rho`` to override, e.g. for an analytic sweep).  The returned affine
    form is verified against a reference forward evaluation.
    """
    if not 0 <= trained_index < len(net.layers):
        raise ValueError(f"trained index {trained_index} outside the layer stack")
    trailing = net.layers[trained_index + 1 :]
    if rho is None:
        rho = float(sum(layer.rho for layer in trailing))
    z = np.asarray(x, dtype=float)
    for layer in net.layers[:trained_index]:
        z, _ = layer_forward(layer, z)

    trained = net.layers[trained_index]
    pre = trained.W @ z + trained.b
    d_mask = mask_from_preactivation(pre, trained.eta)
    x_hat = d_mask.diagonal() * pre
    if trained.rho != 0.0:
        x_hat = x_hat + trained.rho * z

    n = trained.out_dim
    m0 = np.eye(n)
    b_trail = np.zeros(n)
    masks = []
    cur = x_hat
    for layer in trailing:
        pre_k = layer.W @ cur + layer.b
        mask_k = mask_from_preactivation(pre_k, layer.eta)
        dw = apply_mask(mask_k, layer.W, "left")
        m0 = dw @ m0
        b_trail = dw @ b_trail + mask_k.diagonal() * layer.b
        cur = mask_k.diagonal() * pre_k
        masks.append(mask_k)

    if rho != 0.0:
        if m0.shape[0] != n:
            raise ValueError("a trailing-stack skip needs the stack to map the trained layer's space to itself")
        m_rho = m0 + rho * np.eye(n)
    else:
        m_rho = m0
    trained_offset = d_mask.diagonal() * trained.b
    if trained.rho != 0.0:
        trained_offset = trained_offset + trained.rho * z
    offsets = m_rho @ trained_offset + b_trail
    y_lin = m_rho @ (d_mask.diagonal() * (trained.W @ z)) + offsets
    y_ref = _stack_with_long_skip(net, trained_index, x, rho)
    scale = max(1.0, float(np.max(np.abs(y_ref))))
    if float(np.max(np.abs(y_lin - y_ref))) > 1e-9 * scale:
        raise NumericalError("local linearization failed to reconstruct the network output")
    return LocalLinearization(
        z=z,
        D=d_mask,
        Ds=tuple(masks),
        M0=m0,
        M_rho=m_rho,
        rho=rho,
        B=offsets,
        region_signature=signature_of([d_mask] + masks),
    )


# --- the Q factor ---------------------------------------------------------------


@dataclass(frozen=True)
class QFactor:
    """Spectrum of Q = diag(z) (x) (MD) in factored form.

    factored_s holds the products s_i(MD) * |z[j]| sorted descending;
    kappa_layers and kappa_data are the two factors of kappa(Q).
    """

    MD: np.ndarray
    z: np.ndarray
    factored_s: np.ndarray
    kappa_layers: float
    kappa_data: float


def materialize_q(md, z) -> np.ndarray:
    """The n^2 x n^2 block-diagonal matrix diag(z) (x) (MD)."""
    MD = as_matrix(md, "MD")
    z = np.asarray(z, dtype=float)
    return np.kron(np.diag(z), MD)


def _validate_q_small(MD: np.ndarray, z: np.ndarray, factored: np.ndarray) -> None:
    # Cross-check the factored spectrum against a direct SVD of Q, and the
    # quadratic form against column-sum evaluations; both desk-sized only.
    q_mat = materialize_q(MD, z)
    direct = singular_values(q_mat)
    scale = max(1.0, float(direct[0]))
    if float(np.max(np.abs(direct - factored))) > 1e-9 * scale:
        raise NumericalError("factored Q spectrum disagrees with the direct SVD")
    n = MD.shape[0]
    rng = np.random.default_rng(0)
    qtq = q_mat.T @ q_mat
    for _ in range(10):
        w_mat = rng.standard_normal((n, n))
        w_flat = w_mat.T.ravel()  # column-major flattening pairs Q's blocks with W's columns
        lhs = float(w_flat @ qtq @ w_flat)
        rhs = float(sum(z[j] ** 2 * np.sum((MD @ w_mat[:, j]) ** 2) for j in range(n)))
        if abs(lhs - rhs) > 1e-9 * max(1.0, abs(lhs)):
            raise NumericalError("Q quadratic form disagrees with its per-column evaluation")
        # single-column perturbations: the full squared-residual identity
        j = int(rng.integers(0, n))
        w_col = np.zeros((n, n))
        w_col[:, j] = w_mat[:, j]
        lhs_col = float(np.sum((MD @ w_col @ z) ** 2))
        w_col_flat = w_col.T.ravel()
        rhs_col = float(w_col_flat @ qtq @ w_col_flat)
        if abs(lhs_col - rhs_col) > 1e-9 * max(1.0, abs(lhs_col)):
            raise NumericalError("Q quadratic form disagrees on a single-column update")


def build_q(md, z) -> QFactor:
    """Factored spectrum of Q = diag(z) (x) (MD) for a square MD.

    For n <= 12 the factorization is cross-checked against the materialized
    matrix (direct SVD plus quadratic-form evaluations).
    """
    MD = as_matrix(md, "MD")
    if MD.shape[0] != MD.shape[1]:
        raise ValueError(f"the Q factorization needs a square matrix, got {MD.shape}")
    zv = np.asarray(z, dtype=float)
    n = MD.shape[0]
    if zv.shape != (n,):
        raise ValueError(f"feature vector of shape {zv.shape} does not match {MD.shape}")
    if not np.all(np.isfinite(zv)):
        raise ValueError("feature vector contains non-finite entries")
    s = singular_values(MD)
    factored = np.sort(np.outer(np.abs(zv), s).ravel(), kind="stable")[::-1]
    if n <= Q_MATERIALIZE_MAX:
        _validate_q_small(MD, zv, factored)
    ztol = default_zero_tol((n, n))
    kappa_layers = condition_number_from_singvals(s, ztol)
    abs_z = np.sort(np.abs(zv), kind="stable")[::-1]
    kappa_data = condition_number_from_singvals(abs_z, ztol)
    return QFactor(MD=MD, z=zv, factored_s=factored, kappa_layers=kappa_layers, kappa_data=kappa_data)


def q_condition_number(q: QFactor) -> float:
    """kappa of the factored spectrum (zeros discarded)."""
    return condition_number_from_singvals(
        q.factored_s, default_zero_tol((q.factored_s.size, 1))
    )


def data_factor(md, z) -> tuple[float, float, float]:
    """kappa(Q) split into its layer and data factors.

    Returns (kappa_q, kappa_layers, kappa_data) with
    kappa_q = kappa_layers * kappa_data; zero features and zero singular
    values are discarded per the condition-number definition.
    """
    q = build_q(md, z)
    return q.kappa_layers * q.kappa_data, q.kappa_layers, q.kappa_data


# --- mini-batches ----------------------------------------------------------------


@dataclass(frozen=True)
class BatchQResult:
    """Per-block spectra of the batch quadratic form and their bounds.

    block_singvals[i, j] is the i-th singular value of feature block j;
    upper/lower bounds come from the batch-averaged extreme singular values;
    kappa_bound multiplies the supplied spectral extremes with the
    root-mean-square feature spread.
    """

    block_singvals: np.ndarray
    upper_bounds: np.ndarray
    lower_bounds: np.ndarray
    zbar: np.ndarray
    kappa_bound: float


def batch_q(mds, zs, c_upper: float | None = None, c_lower: float | None = None) -> BatchQResult:
    """Spectrum of the mini-batch quadratic form from per-sample (MD, z).

    Block j is A_j = (1/G) sum_g z_g[j]^2 (M_g D_g)^T (M_g D_g); its
    eigenvalue square roots are the batch singular values s_{i,j}.  The
    spectral extremes (c_upper, c_lower) for the kappa bound default to the
    observed max s_1 / min s_n over the batch.
    """
    if not mds or len(mds) != len(zs):
        raise ValueError("need equally many (at least one) MD matrices and feature vectors")
    mats = [as_matrix(m, "MD") for m in mds]
    n = mats[0].shape[0]
    if any(m.shape != (n, n) for m in mats):
        raise ValueError("all MD matrices must be square of one common size")
    zarr = np.asarray(zs, dtype=float)
    if zarr.shape != (len(mats), n):
        raise ValueError(f"feature array of shape {zarr.shape} does not match G={len(mats)}, n={n}")
    g_count = len(mats)

    s_extremes = np.array([[singular_values(m)[0], singular_values(m)[-1]] for m in mats])
    if c_upper is None:
        c_upper = float(np.max(s_extremes[:, 0]))
    if c_lower is None:
        c_lower = float(np.min(s_extremes[:, 1]))

    gram = [m.T @ m for m in mats]
    block_singvals = np.empty((n, n))
    upper = np.empty((n, n))
    lower = np.empty((n, n))
    for j in range(n):
        a_j = sum(zarr[g, j] ** 2 * gram[g] for g in range(g_count)) / g_count
        lam = np.linalg.eigvalsh(a_j)[::-1]
        block_singvals[:, j] = np.sqrt(np.clip(lam, 0.0, None))
        upper[:, j] = np.sqrt(np.sum(zarr[:, j] ** 2 * s_extremes[:, 0] ** 2) / g_count)
        lower[:, j] = np.sqrt(np.sum(zarr[:, j] ** 2 * s_extremes[:, 1] ** 2) / g_count)

    zbar = np.sqrt(np.mean(zarr ** 2, axis=0))
    nonzero = zbar[zbar > 0.0]
    if nonzero.size == 0 or c_lower <= 0.0:
        kappa_bound = float("inf")
    else:
        kappa_bound = (c_upper / c_lower) * float(np.max(zbar) / np.min(nonzero))
    return BatchQResult(
        block_singvals=block_singvals,
        upper_bounds=upper,
        lower_bounds=lower,
        zbar=zbar,
        kappa_bound=kappa_bound,
    )


# --- loss --------------------------------------------------------------------------


@dataclass(frozen=True)
class LossEval:
    loss: float
    region_signature: str


def loss_eval(net: CpaNetwork, trained_index: int, x, y) -> LossEval:
    """Squared-error loss at a probe point plus the region signature there."""
    y = np.asarray(y, dtype=float)
    y_hat = net.forward(x)
    if y.shape != y_hat.shape:
        raise ValueError(f"target of shape {y.shape} does not match output {y_hat.shape}")
    diff = y - y_hat
    loss = float(diff @ diff)
    expanded = float(y @ y - 2.0 * (y @ y_hat) + y_hat @ y_hat)
    if abs(loss - expanded) > 1e-12 * max(1.0, abs(loss)):
        raise NumericalError("squared-loss expansion self-check failed")
    masks = net.masks(x)[trained_index:]
    return LossEval(loss=loss, region_signature=signature_of(masks))


# --- the toy-network experiment ------------------------------------------------------


FIG9_ETA = 0.1
FIG9_WIDTH = 6
FIG9_IN = 2
FIG9_TRAINED_INDEX = 1


def toy_target(x) -> np.ndarray:
    """Six summary statistics of the 2-d input: the coordinates, their mean,
    max, min, and the Euclidean norm."""
    x = np.asarray(x, dtype=float)
    return np.array([x[0], x[1], float(np.mean(x)), float(np.max(x)), float(np.min(x)), float(np.linalg.norm(x))])


def toy_network(rng: np.random.Generator) -> tuple[CpaNetwork, np.ndarray]:
    """The four-layer leaky-ReLU toy network with standard-normal weights,
    biases and input.  The second layer is the trained one; the layer after
    it carries the adjustable skip (swept analytically)."""
    dims = [(FIG9_WIDTH, FIG9_IN)] + [(FIG9_WIDTH, FIG9_WIDTH)] * 3
    layers = []
    for out_d, in_d in dims:
        w_mat = rng.standard_normal((out_d, in_d))
        b_vec = rng.standard_normal(out_d)
        layers.append(CpaLayer(W=w_mat, b=b_vec, eta=FIG9_ETA, rho=0.0))
    x = rng.standard_normal(FIG9_IN)
    return CpaNetwork(layers=tuple(layers)), x


@dataclass(frozen=True)
class Fig9Run:
    rho_grid: np.ndarray
    s1_q: np.ndarray
    s_star_q: np.ndarray
    kappa_q: np.ndarray
    ratio_profiles: dict[float, np.ndarray]  # rho -> s1/s_i over the factored spectrum
    region_signature: str
    network: CpaNetwork
    probe: np.ndarray
    target: np.ndarray


def fig9_run(seed_seq: np.random.SeedSequence, rho_grid: np.ndarray, profile_rhos) -> Fig9Run:
    rng = np.random.default_rng(seed_seq)
    net, x = toy_network(rng)
    base = linearize(net, FIG9_TRAINED_INDEX, x, rho=0.0)
    signature = base.region_signature
    n_sq = FIG9_WIDTH * FIG9_WIDTH
    s1 = np.empty(rho_grid.size)
    s_star = np.empty(rho_grid.size)
    kappa = np.empty(rho_grid.size)
    profiles: dict[float, np.ndarray] = {}
    for k, rho in enumerate(rho_grid):
        lin = linearize(net, FIG9_TRAINED_INDEX, x, rho=float(rho))
        if lin.region_signature != signature:
            raise NumericalError("region signature changed along the analytic rho sweep")
        md = apply_mask(lin.D, lin.M_rho, "right")
        q = build_q(md, lin.z)
        ztol = default_zero_tol((n_sq, 1))
        nonzero = q.factored_s[q.factored_s > ztol * q.factored_s[0]]
        s1[k] = q.factored_s[0]
        s_star[k] = nonzero[-1]
        kappa[k] = s1[k] / s_star[k]
        if any(abs(float(rho) - p) < 1e-12 for p in profile_rhos):
            profiles[float(rho)] = q.factored_s[0] / nonzero
    return Fig9Run(
        rho_grid=rho_grid,
        s1_q=s1,
        s_star_q=s_star,
        kappa_q=kappa,
        ratio_profiles=profiles,
        region_signature=signature,
        network=net,
        probe=x,
        target=toy_target(x),
    )


@dataclass(frozen=True)
class Fig9Result:
    runs: tuple[Fig9Run, ...]
    rho_grid: np.ndarray
    profile_rhos: tuple[float, ...]


def fig9_experiment(master_seed: int, rho_grid=None, runs: int = 8) -> Fig9Result:
    """Seeded runs of the toy-network rho sweep.

    For every run the network, probe input and target are drawn fresh; the
    activation masks are recorded once per probe and the trailing stack's
    skip strength is swept analytically through M(rho), so the region
    signature is constant along the sweep by construction (and asserted).
    """
    if rho_grid is None:
        rho_grid = np.linspace(0.0, 1.0, 21)
    grid = np.asarray(rho_grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise ValueError("rho grid must contain at least two points")
    quartiles = [grid[0], grid[grid.size // 3], grid[(2 * grid.size) // 3], grid[-1]]
    profile_rhos = tuple(dict.fromkeys(float(v) for v in quartiles))
    run_list = [
        fig9_run(np.random.SeedSequence(master_seed, spawn_key=(k,)), grid, profile_rhos)
        for k in range(runs)
    ]
    return Fig9Result(runs=tuple(run_list), rho_grid=grid, profile_rhos=profile_rhos)
