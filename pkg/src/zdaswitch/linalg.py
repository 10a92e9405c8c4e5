"""Numerical kernels: null spaces, subspace algebra, matrix exponentials and
invariant zeros of the Rosenbrock system pencil.

Every rank decision goes through a :class:`RankPolicy` so the same cutoff is
applied consistently by the attacker-side synthesis and the defender-side
observability recursion.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Sequence

import numpy as np
import scipy.linalg


class InvalidInputError(ValueError):
    """Raised when an operation receives malformed numerical input."""


@dataclass(frozen=True)
class RankPolicy:
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise InvalidInputError("rel_tol must be positive")
        if not self.abs_tol >= 0:
            raise InvalidInputError("abs_tol must be non-negative")

    def cutoff(self, scale: float) -> float:
        """Singular values at or below this are treated as zero."""
        return max(self.rel_tol * scale, self.abs_tol)


DEFAULT_POLICY = RankPolicy()


def _as_finite(M, name: str = "matrix", ndim: int = 2) -> np.ndarray:
    arr = np.asarray(M)
    if not np.iscomplexobj(arr):
        arr = arr.astype(float)
    if arr.ndim == 1 and ndim == 2:
        arr = arr.reshape(1, -1)
    if arr.ndim != ndim:
        raise InvalidInputError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return arr


class Subspace:
    """Linear subspace of R^d (or C^d) held as an orthonormal basis.

    The basis is stored column-wise in ``basis`` with shape ``(ambient_dim, dim)``.
    Construct through :meth:`from_vectors` when the input is not already
    orthonormal.
    """

    __slots__ = ("ambient_dim", "basis")

    def __init__(self, ambient_dim: int, basis=None):
        if ambient_dim < 1:
            raise InvalidInputError("ambient_dim must be positive")
        if basis is None:
            basis = np.zeros((ambient_dim, 0))
        basis = np.asarray(basis)
        if basis.ndim != 2 or basis.shape[0] != ambient_dim:
            raise InvalidInputError(
                f"basis must have shape ({ambient_dim}, k), got {basis.shape}")
        if basis.shape[1] > ambient_dim:
            raise InvalidInputError("more basis vectors than ambient dimension")
        self.ambient_dim = int(ambient_dim)
        self.basis = basis

    @classmethod
    def zero(cls, ambient_dim: int) -> "Subspace":
        return cls(ambient_dim)

    @classmethod
    def full(cls, ambient_dim: int) -> "Subspace":
        return cls(ambient_dim, np.eye(ambient_dim))

    @classmethod
    def from_vectors(cls, vectors, ambient_dim: int | None = None,
                     policy: RankPolicy = DEFAULT_POLICY) -> "Subspace":
        """Span of the given column vectors, re-orthonormalized by SVD."""
        V = np.asarray(vectors)
        if V.ndim == 1:
            V = V.reshape(-1, 1)
        if ambient_dim is None:
            ambient_dim = V.shape[0]
        if V.shape[1] == 0:
            return cls.zero(ambient_dim)
        V = _as_finite(V, "vectors")
        U, s, _ = np.linalg.svd(V, full_matrices=False)
        scale = max(1.0, float(np.max(np.linalg.norm(V, axis=0))))
        rank = int(np.sum(s > policy.cutoff(scale)))
        return cls(ambient_dim, U[:, :rank])

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.conj().T

    def contains(self, v, tol: float = 1e-8) -> bool:
        v = np.asarray(v).reshape(-1)
        nv = np.linalg.norm(v)
        if nv == 0:
            return True
        resid = v - self.basis @ (self.basis.conj().T @ v)
        return bool(np.linalg.norm(resid) <= tol * nv)

    def map(self, M, policy: RankPolicy = DEFAULT_POLICY) -> "Subspace":
        """Image of the subspace under the square matrix ``M``."""
        M = np.asarray(M)
        return Subspace.from_vectors(M @ self.basis, self.ambient_dim, policy)

    def __repr__(self):
        return f"Subspace(ambient_dim={self.ambient_dim}, dim={self.dim})"


def subspace_distance(U: Subspace, W: Subspace) -> float:
    """Spectral norm of the difference of orthogonal projectors.

    Equals the sine of the largest principal angle for equal dimensions and
    is 1 whenever the dimensions differ.
    """
    if U.ambient_dim != W.ambient_dim:
        raise InvalidInputError("ambient dimensions differ")
    if U.dim != W.dim:
        return 1.0
    if U.dim == 0:
        return 0.0
    return float(np.linalg.norm(U.projector() - W.projector(), 2))


def nullspace_basis(M, policy: RankPolicy = DEFAULT_POLICY) -> Subspace:
    """Orthonormal basis of ker(M) by singular-value thresholding."""
    M = _as_finite(M, "M")
    rows, cols = M.shape
    if rows == 0:
        return Subspace.full(cols)
    if cols == 0:
        raise InvalidInputError("M must have at least one column")
    _, s, Vh = np.linalg.svd(M, full_matrices=True)
    norm = float(s[0]) if s.size else 0.0
    rank = int(np.sum(s > policy.cutoff(norm)))
    return Subspace(cols, Vh[rank:].conj().T)


def subspace_intersection(U: Subspace, W: Subspace,
                          policy: RankPolicy = DEFAULT_POLICY) -> Subspace:
    """U ∩ W from the joint kernel of ``[U_basis, -W_basis]``."""
    if U.ambient_dim != W.ambient_dim:
        raise InvalidInputError(
            f"ambient dimension mismatch: {U.ambient_dim} vs {W.ambient_dim}")
    d = U.ambient_dim
    if U.dim == 0 or W.dim == 0:
        return Subspace.zero(d)
    # both bases are orthonormal, so singular values of [U, -W] lie in [0, sqrt 2]
    # and a pair of directions is shared exactly when a singular value vanishes
    K = np.hstack([U.basis, -W.basis])
    _, s, Vh = np.linalg.svd(K, full_matrices=True)
    s_full = np.zeros(K.shape[1])
    s_full[: s.size] = s
    null_cols = Vh[s_full <= policy.cutoff(1.0) * 10].conj().T
    if null_cols.shape[1] == 0:
        return Subspace.zero(d)
    vecs = U.basis @ null_cols[: U.dim]
    return Subspace.from_vectors(vecs, d, policy)


def matrix_exponential(M, t: float = 1.0) -> np.ndarray:
    """``exp(M t)`` via scipy's scaling-and-squaring Padé algorithm."""
    M = _as_finite(M, "M")
    if M.shape[0] != M.shape[1]:
        raise InvalidInputError("matrix_exponential needs a square matrix")
    if not np.isfinite(t):
        raise InvalidInputError("t must be finite")
    if t == 0:
        return np.eye(M.shape[0], dtype=M.dtype)
    return scipy.linalg.expm(M * t)


class InvariantZero(NamedTuple):
    eta: complex
    state_dir: np.ndarray
    input_dir: np.ndarray
    uncertain: bool = False

    @property
    def attack_input(self) -> np.ndarray:
        """Injection vector ``g`` of the attack signal ``g e^{eta t}``."""
        return -self.input_dir


@dataclass
class PencilZeros:
    """Result of :func:`pencil_zeros`.

    ``degenerate`` is set when the pencil loses column rank for *every*
    ``eta`` (the system is not left invertible). In that case any growth rate
    admits a kernel witness and ``zeros`` only lists isolated zeros found by
    the regular part, which is left empty; use :func:`pencil_kernel` to obtain
    witnesses at a chosen ``eta``.
    """

    zeros: list[InvariantZero] = field(default_factory=list)
    degenerate: bool = False
    normal_rank: int = 0
    n_columns: int = 0

    def __iter__(self) -> Iterator[InvariantZero]:
        return iter(self.zeros)

    def __len__(self) -> int:
        return len(self.zeros)

    def __getitem__(self, i) -> InvariantZero:
        return self.zeros[i]

    def etas(self) -> np.ndarray:
        return np.array([z.eta for z in self.zeros], dtype=complex)


def rosenbrock_matrix(A, B, C, D, eta) -> np.ndarray:
    """``[[eta I - A, B], [-C, D]]``."""
    A, B, C, D = (np.asarray(X) for X in (A, B, C, D))
    n = A.shape[0]
    top = np.hstack([eta * np.eye(n) - A, B])
    bottom = np.hstack([-C, D])
    return np.vstack([top, bottom])


def _check_abcd(A, B, C, D):
    A = _as_finite(A, "A")
    n = A.shape[0]
    if A.shape != (n, n):
        raise InvalidInputError("A must be square")
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B.reshape(n, -1)
    C = np.asarray(C, dtype=float)
    if C.ndim == 1:
        C = C.reshape(-1, n) if C.size else np.zeros((0, n))
    m = B.shape[1]
    D = np.asarray(D, dtype=float)
    if D.ndim == 0 or D.size == C.shape[0] * m:
        D = np.broadcast_to(D, (C.shape[0], m)).copy() if D.ndim == 0 else D.reshape(C.shape[0], m)
    for X, name in ((B, "B"), (C, "C"), (D, "D")):
        _as_finite(X if X.size else np.zeros((1, 1)), name)
    if B.shape[0] != n or C.shape[1] != n or D.shape != (C.shape[0], m):
        raise InvalidInputError(
            f"inconsistent shapes A{A.shape} B{B.shape} C{C.shape} D{D.shape}")
    return A, B, C, D


def _compress_inputs(B, D, policy):
    """Orthonormal V with [B; D] V of full column rank spanning range([B; D])."""
    BD = np.vstack([B, D])
    m = BD.shape[1]
    if m == 0:
        return np.zeros((m, 0))
    _, s, Vh = np.linalg.svd(BD, full_matrices=True)
    norm = float(s[0]) if s.size else 0.0
    rank = int(np.sum(s > policy.cutoff(norm)))
    return Vh[:rank].T


def _kernel_with_gap(P, policy):
    """Kernel basis of P plus the smallest kept / largest dropped singular values."""
    _, s, Vh = np.linalg.svd(P, full_matrices=True)
    cols = P.shape[1]
    s_full = np.zeros(cols)
    s_full[: s.size] = s
    norm = float(s_full[0]) if cols else 0.0
    cut = policy.cutoff(norm)
    mask = s_full <= cut
    kernel = Vh[mask].conj().T
    kept = s_full[~mask]
    smallest_kept = float(kept.min()) if kept.size else np.inf
    largest_dropped = float(s_full[mask].max()) if mask.any() else 0.0
    return kernel, smallest_kept, largest_dropped, cut


def pencil_kernel(A, B, C, D, eta, policy: RankPolicy = DEFAULT_POLICY) -> Subspace:
    """ker of the Rosenbrock matrix at ``eta`` as a subspace of R^(n+m)."""
    A, B, C, D = _check_abcd(A, B, C, D)
    P = rosenbrock_matrix(A, B, C, D, eta)
    kernel, *_ = _kernel_with_gap(P, policy)
    if np.isrealobj(P):
        return Subspace(P.shape[1], kernel.real)
    return Subspace(P.shape[1], kernel)


def _normal_rank(A, B, C, D, policy, rng) -> int:
    # rank at a few random complex points equals the normal rank generically
    scale = 1.0 + np.linalg.norm(A, 2)
    ranks = []
    for _ in range(3):
        s = scale * (rng.standard_normal() + 1j * rng.standard_normal())
        sv = np.linalg.svd(rosenbrock_matrix(A, B, C, D, s), compute_uv=False)
        ranks.append(int(np.sum(sv > policy.cutoff(float(sv[0])) * 10)))
    return max(ranks)


def pencil_zeros(A, B, C, D, policy: RankPolicy = DEFAULT_POLICY,
                 seed: int = 0) -> PencilZeros:
    """Finite invariant zeros of ``(A, B, C, D)`` with kernel witnesses.

    A zero is an ``eta`` at which ``[[eta I - A, B], [-C, D]]`` has a
    nontrivial kernel vector ``[state_dir; input_dir]`` with
    ``state_dir != 0``. The attack input is ``g = -input_dir``.

    Inputs are column-compressed first. Tall pencils (more outputs than
    compressed inputs) are squared by a fixed random row projection of the
    output block; candidate eigenvalues of the squared pencil are kept only
    if the original pencil really loses rank there, which removes the
    spurious eigenvalues the projection introduces.
    """
    A, B, C, D = _check_abcd(A, B, C, D)
    n = A.shape[0]
    rng = np.random.default_rng(seed)
    V = _compress_inputs(B, D, policy)
    Bc, Dc = B @ V, D @ V
    m = Bc.shape[1]
    p = C.shape[0]
    ncols = n + m
    nrank = _normal_rank(A, Bc, C, Dc, policy, rng)
    result = PencilZeros(normal_rank=nrank, n_columns=ncols)
    if nrank < ncols:
        result.degenerate = True
        return result

    M = np.block([[A, -Bc], [C, -Dc]])
    N = np.zeros((n + p, ncols))
    N[:n, :n] = np.eye(n)
    if p > m:
        R = np.linalg.qr(rng.standard_normal((p, m)))[0].T
        W = np.zeros((ncols, n + p))
        W[:n, :n] = np.eye(n)
        W[n:, n:] = R
        M, N = W @ M, W @ N
    alpha, beta = scipy.linalg.eig(M, N, right=False, homogeneous_eigvals=True)
    scale = max(1.0, np.linalg.norm(M, 2))
    candidates = []
    for a, b in zip(alpha, beta):
        if abs(b) <= 1e-10 * max(abs(a), 1.0):
            continue
        eta = a / b
        if abs(eta) > 1e8 * scale:
            continue
        if abs(eta.imag) <= 1e-9 * max(1.0, abs(eta)):
            eta = complex(eta.real, 0.0)
        candidates.append(eta)

    zeros: list[InvariantZero] = []
    for eta in candidates:
        if any(abs(eta - z.eta) <= 1e-7 * max(1.0, abs(eta)) for z in zeros):
            continue
        real = eta.imag == 0.0
        e = eta.real if real else eta
        P = rosenbrock_matrix(A, Bc, C, Dc, e)
        kernel, smallest_kept, largest_dropped, cut = _kernel_with_gap(P, policy)
        if kernel.shape[1] == 0:
            continue
        state = kernel[:n]
        norms = np.linalg.norm(state, axis=0)
        j = int(np.argmax(norms))
        if norms[j] <= 1e-8:
            continue
        vec = kernel[:, j]
        if real:
            vec = vec.real
        vec = vec / np.linalg.norm(vec)
        uncertain = smallest_kept <= 10 * cut or largest_dropped >= cut / 10
        zeros.append(InvariantZero(eta=complex(eta), state_dir=vec[:n],
                                   input_dir=V @ vec[n:], uncertain=bool(uncertain)))
    zeros.sort(key=lambda z: (z.eta.real, z.eta.imag))
    result.zeros = zeros
    return result


def orthonormal_complement(U: Subspace) -> Subspace:
    if U.dim == 0:
        return Subspace.full(U.ambient_dim)
    return nullspace_basis(U.basis.conj().T)


def stacked_kernel(blocks: Sequence[np.ndarray], policy: RankPolicy = DEFAULT_POLICY) -> Subspace:
    """Kernel of ``vstack(blocks)`` with each block row-normalized to unit norm.

    Normalizing blocks leaves the kernel unchanged but keeps high matrix
    powers from swamping the rank decision.
    """
    blocks = [np.asarray(Bk, dtype=float) for Bk in blocks]
    if not blocks:
        raise InvalidInputError("no blocks to stack")
    rows = []
    for Bk in blocks:
        nrm = np.linalg.norm(Bk, 2) if Bk.size else 0.0
        rows.append(Bk / nrm if nrm > 0 else Bk)
    return nullspace_basis(np.vstack(rows), policy)
