"""Dense deterministic linear algebra.

Everything operates on finite real matrices held as 2-D numpy arrays with
row-major semantics.  Decompositions are LAPACK-backed through numpy and are
post-processed into a deterministic form: singular values and eigenvalues are
sorted descending with a stable sort, and singular-vector signs follow a fixed
convention so repeated calls are bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EPS = 2.0 ** -52


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and return ``a`` as a finite 2-D float array."""
    m = np.asarray(a, dtype=float)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {m.shape}")
    if m.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def frobenius_norm(a) -> float:
    """sqrt of the sum of squared entries."""
    return float(np.sqrt(np.sum(as_matrix(a) ** 2)))


@dataclass(frozen=True)
class SvdResult:
    """Singular value decomposition A = U @ diag(s) @ V.T.

    ``s`` is sorted descending; columns of ``U`` are the left singular
    vectors, columns of ``V`` the right ones, both orthonormal.
    """

    s: np.ndarray
    U: np.ndarray
    V: np.ndarray


@dataclass(frozen=True)
class SymEigResult:
    """Symmetric eigendecomposition N = Q @ diag(lam) @ Q.T, lam descending."""

    lam: np.ndarray
    Q: np.ndarray


def _fix_signs(U: np.ndarray, V: np.ndarray) -> None:
    # Vector pairs are unique only up to a simultaneous sign flip; pin the
    # largest-magnitude entry of each left vector to be positive.
    for i in range(U.shape[1]):
        k = int(np.argmax(np.abs(U[:, i])))
        if U[k, i] < 0.0:
            U[:, i] *= -1.0
            V[:, i] *= -1.0


def svd(a) -> SvdResult:
    """Full SVD with deterministic ordering and sign convention."""
    A = as_matrix(a)
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    U = np.ascontiguousarray(U)
    V = np.ascontiguousarray(Vt.T)
    # LAPACK already emits descending order; keep it stable for exact ties.
    order = np.argsort(-s, kind="stable")
    s, U, V = s[order], U[:, order], V[:, order]
    _fix_signs(U, V)
    return SvdResult(s=s, U=U, V=V)


def singular_values(a) -> np.ndarray:
    """Singular values only, sorted descending."""
    s = np.linalg.svd(as_matrix(a), compute_uv=False)
    return s[np.argsort(-s, kind="stable")]


def sym_eig(n_mat) -> SymEigResult:
    """Eigendecomposition of a symmetric matrix, eigenvalues descending."""
    N = as_matrix(n_mat)
    if N.shape[0] != N.shape[1]:
        raise ValueError(f"sym_eig needs a square matrix, got {N.shape}")
    scale = max(1.0, float(np.max(np.abs(N))))
    if float(np.max(np.abs(N - N.T))) > 1e-12 * scale:
        raise ValueError("sym_eig input is not symmetric within 1e-12 relative asymmetry")
    lam, Q = np.linalg.eigh(0.5 * (N + N.T))
    order = np.argsort(-lam, kind="stable")
    lam = lam[order]
    Q = np.ascontiguousarray(Q[:, order])
    for i in range(Q.shape[1]):
        k = int(np.argmax(np.abs(Q[:, i])))
        if Q[k, i] < 0.0:
            Q[:, i] *= -1.0
    return SymEigResult(lam=lam, Q=Q)


def default_zero_tol(shape) -> float:
    """Relative threshold below which a singular value counts as zero.

    s_i <= tol * s_1 is treated as zero; the factor 1e3 is a safety margin on
    top of the dimension-scaled machine epsilon.
    """
    return 1e3 * max(shape) * EPS


def condition_number(a, zero_tol: float | None = None) -> float:
    """Ratio of the largest singular value to the smallest non-zero one.

    Zero singular values (relative threshold ``zero_tol * s_1``) are
    discarded.  Raises ``ValueError`` for an all-zero matrix, where the
    condition number is undefined.
    """
    A = as_matrix(a)
    if zero_tol is None:
        zero_tol = default_zero_tol(A.shape)
    s = singular_values(A)
    s1 = float(s[0])
    nonzero = s[s > zero_tol * s1] if s1 > 0.0 else s[:0]
    if nonzero.size == 0:
        raise ValueError("undefined condition number: matrix has no non-zero singular value")
    return float(s1 / nonzero[-1])


def condition_number_from_singvals(s: np.ndarray, zero_tol: float) -> float:
    """Condition number from an already-computed descending singular value vector."""
    s1 = float(s[0])
    nonzero = s[s > zero_tol * s1] if s1 > 0.0 else s[:0]
    if nonzero.size == 0:
        raise ValueError("undefined condition number: matrix has no non-zero singular value")
    return float(s1 / nonzero[-1])


# --- text format -------------------------------------------------------------
#
# First line "rows cols", then one line per row of space-separated decimals
# printed with 17 significant digits (exact round trip for doubles).


def fmt17(x: float) -> str:
    return format(float(x), ".17g")


def matrix_to_text(a) -> str:
    A = as_matrix(a)
    rows, cols = A.shape
    lines = [f"{rows} {cols}"]
    for row in A:
        lines.append(" ".join(fmt17(v) for v in row))
    return "\n".join(lines) + "\n"


def matrix_from_text(text: str) -> np.ndarray:
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty matrix text")
    try:
        rows, cols = (int(tok) for tok in lines[0].split())
    except Exception as exc:
        raise ValueError(f"bad matrix header {lines[0]!r}") from exc
    if len(lines) - 1 != rows:
        raise ValueError(f"expected {rows} data rows, got {len(lines) - 1}")
    data = []
    for ln in lines[1:]:
        vals = [float(tok) for tok in ln.split()]
        if len(vals) != cols:
            raise ValueError(f"expected {cols} values per row, got {len(vals)}")
        data.append(vals)
    return as_matrix(np.array(data))


def write_matrix(path, a) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(matrix_to_text(a))


def read_matrix(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        return matrix_from_text(fh.read())
