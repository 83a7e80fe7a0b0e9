"""Generalized eigenproblem K x = lambda M x via shift-invert iteration.

The operator (K - sigma M)^{-1} M is symmetric in the M inner product, so a
Lanczos process with full M-reorthogonalization applies.  Converged Ritz
pairs are locked (deflated) and the subspace is restarted with the best
remaining Ritz vectors, which also resolves eigenvalue multiplicities: once
one copy of a degenerate pair is locked, the next copy behaves like a simple
eigenvalue of the deflated operator.

The infinite-dimensional zero eigenspace of the curl-curl problem (discrete
gradients) is deemphasized automatically: its shift-invert weight 1/sigma is
small next to 1/(lambda - sigma) for eigenvalues near the shift.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import EigenSolveError, FactorizationError, IdentificationError
from .spaces import HcurlSpace, push_forward_hcurl

__all__ = [
    "Factorization",
    "EigenResult",
    "factorize",
    "shift_invert_lanczos",
    "identify_accelerating_mode",
]

_START_SEED = 20130211


class Factorization:
    """Sparse LU factorization with one step of iterative refinement.

    SuperLU with its fill-reducing column ordering stands in for a custom
    symmetric-indefinite LDLt; the solve contract (backward error < 1e-12
    relative, after refinement) is what the callers rely on.
    """

    def __init__(self, A):
        self.A = sp.csc_matrix(A)
        try:
            self.lu = spla.splu(self.A)
        except RuntimeError as exc:
            raise FactorizationError(str(exc)) from exc
        if not np.all(np.isfinite(self.lu.U.diagonal())):
            raise FactorizationError("singular pivot in sparse factorization")

    def solve(self, b):
        x = self.lu.solve(b)
        r = b - self.A @ x
        x += self.lu.solve(r)
        return x


def factorize(A) -> Factorization:
    """Factor a square sparse operator for repeated solves."""
    return Factorization(A)


@dataclass(frozen=True)
class EigenResult:
    """Converged eigenpairs, ascending by eigenvalue (omega^2)."""

    eigenvalues: np.ndarray       # rad^2/s^2
    eigenvectors: np.ndarray      # (n, k), M-orthonormal
    residuals: np.ndarray         # ||K x - lambda M x||_2 per pair
    sigma: float
    op_count: int

    @property
    def frequencies(self):
        return np.sqrt(np.maximum(self.eigenvalues, 0.0)) / (2.0 * np.pi)


def _m_orthonormalize(v, M, basis, mbasis):
    """Twice-iterated Gram-Schmidt in the M inner product.

    Returns (v_normalized, M @ v_normalized, retained) where ``retained`` is
    the M-norm fraction of the input surviving the projections -- near zero
    when the input already lies in the span of ``basis``.
    """
    w = M @ v
    nrm = np.sqrt(abs(v @ w))
    if nrm == 0.0:
        return None, None, 0.0
    v = v / nrm
    retained = 1.0
    for _ in range(2):
        if basis is not None and basis.shape[1]:
            v = v - basis @ (mbasis.T @ v)
        w = M @ v
        nrm = np.sqrt(abs(v @ w))
        if nrm == 0.0:
            return None, None, 0.0
        v = v / nrm
        retained *= min(nrm, 1.0)
    w = M @ v
    return v, w, retained


def shift_invert_lanczos(K, M, sigma, n_ev, tol=1e-10, max_iter=None,
                         seed=_START_SEED):
    """The n_ev eigenvalues of (K, M) nearest the shift sigma.

    ``tol`` bounds the accepted residual: ||K x - lambda M x||_2 <=
    tol * ||K||_1 * ||x||_2.  ``max_iter`` caps shift-invert applications.
    Raises EigenSolveError (carrying the best residuals) on non-convergence.
    """
    K = sp.csr_matrix(K)
    M = sp.csr_matrix(M)
    n = K.shape[0]
    if n_ev < 1 or n_ev > n:
        raise ValueError("invalid number of requested eigenvalues")
    if max_iter is None:
        max_iter = 400 + 40 * n_ev

    shift = float(sigma)
    fact = None
    for attempt in range(4):
        try:
            fact = factorize(K - shift * M)
            break
        except FactorizationError:
            shift = shift * (1.0 + 1e-3 * (attempt + 1)) + 1e-8
    if fact is None:
        raise FactorizationError("could not factor K - sigma*M near sigma=%g"
                                 % sigma)

    K1 = float(abs(K).sum(axis=0).max())
    rng = np.random.default_rng(seed)
    m = int(min(n, max(2 * n_ev + 12, 24)))
    lock_cap = n_ev + 8

    X = np.zeros((n, 0))          # locked Ritz vectors (M-orthonormal)
    MX = np.zeros((n, 0))
    locked_lam = []
    locked_res = []

    V = np.zeros((n, 0))
    MV = np.zeros((n, 0))
    U = np.zeros((n, 0))          # OP @ V columns
    op_count = 0
    best_residuals = None

    def op(v):
        nonlocal op_count
        op_count += 1
        return fact.solve(M @ v)

    v_next = rng.standard_normal(n)

    while True:
        # grow the active basis to m columns
        while V.shape[1] < m and op_count < max_iter:
            basis = np.hstack([X, V]) if V.shape[1] or X.shape[1] else None
            mbasis = np.hstack([MX, MV]) if basis is not None else None
            v, w, retained = _m_orthonormalize(v_next, M, basis, mbasis)
            if v is None or retained < 1e-10:
                v_next = rng.standard_normal(n)
                continue
            V = np.hstack([V, v[:, None]])
            MV = np.hstack([MV, w[:, None]])
            u = op(v)
            U = np.hstack([U, u[:, None]])
            v_next = u

        # Rayleigh-Ritz in the M inner product
        H = MV.T @ U
        H = 0.5 * (H + H.T)
        theta, S = np.linalg.eigh(H)
        order = np.argsort(-np.abs(theta))

        new_lock = []
        blocked = False
        for t in order:
            if abs(theta[t]) < 1e-300:
                continue
            lam = shift + 1.0 / theta[t]
            y = V @ S[:, t]
            ny = np.linalg.norm(y)
            res = np.linalg.norm(K @ y - lam * (M @ y))
            ok = res <= tol * K1 * ny
            if ok and len(locked_lam) + len(new_lock) < lock_cap:
                new_lock.append((lam, y, res, theta[t]))
            elif not ok and not blocked:
                blocked = True
                first_unconverged = abs(theta[t])
            if len(new_lock) >= lock_cap:
                break
        if not blocked:
            first_unconverged = 0.0

        for lam, y, res, _ in new_lock:
            y2, w2, retained = _m_orthonormalize(y, M, X if X.shape[1] else None,
                                                 MX if X.shape[1] else None)
            if y2 is None or retained < 0.5:
                continue   # duplicate of an already locked vector
            res2 = np.linalg.norm(K @ y2 - lam * (M @ y2))
            if res2 > 10 * tol * K1 * np.linalg.norm(y2):
                continue
            X = np.hstack([X, y2[:, None]])
            MX = np.hstack([MX, w2[:, None]])
            locked_lam.append(lam)
            locked_res.append(res2)

        # can we stop?  need n_ev locked pairs whose shift-invert weight beats
        # every unconverged Ritz value still in flight
        if len(locked_lam) >= n_ev:
            w_locked = np.abs(1.0 / (np.array(locked_lam) - shift))
            sel = np.argsort(-w_locked)[:n_ev]
            if w_locked[sel].min() >= first_unconverged * (1.0 - 1e-9):
                lam = np.array(locked_lam)[sel]
                vecs = X[:, sel]
                res = np.array(locked_res)[sel]
                order2 = np.argsort(lam)
                return EigenResult(lam[order2], vecs[:, order2], res[order2],
                                   shift, op_count)

        if op_count >= max_iter:
            pool = list(zip(locked_lam, locked_res))
            best_residuals = np.array([r for _, r in pool]) if pool else None
            raise EigenSolveError(
                "no convergence after %d operator applications" % op_count,
                best_residuals=best_residuals)

        # thick restart: keep the best unlocked Ritz vectors
        keep = []
        kept = 0
        for t in order:
            if kept >= max(4, n_ev):
                break
            y = V @ S[:, t]
            y2, w2, retained = _m_orthonormalize(
                y, M, X if X.shape[1] else None, MX if X.shape[1] else None)
            if y2 is None or retained < 0.5:
                continue
            keep.append((y2, w2))
            kept += 1
        if keep:
            V = np.column_stack([k[0] for k in keep])
            MV = np.column_stack([k[1] for k in keep])
            U = np.column_stack([op(k[0]) for k in keep])
            v_next = U[:, -1]
        else:
            V = np.zeros((n, 0))
            MV = np.zeros((n, 0))
            U = np.zeros((n, 0))
            v_next = rng.standard_normal(n)


def identify_accelerating_mode(result: EigenResult, space: HcurlSpace,
                               n_samples=100, ratio_threshold=1e3):
    """Index of the lowest mode whose on-axis field is longitudinal.

    Samples E along the geometry's beam axis and requires
    max|Ez| / max(|Ex|, |Ey|) > ratio_threshold.
    """
    geom = space.geometry
    patch_idx = geom.axis_patch if geom.axis_patch is not None else 0
    u0, v0 = geom.axis_uv
    zs = np.linspace(0.0, 1.0, n_samples)
    order = np.argsort(result.eigenvalues)
    for k in order:
        coeffs = result.eigenvectors[:, k]
        vals = np.array([push_forward_hcurl(space, patch_idx,
                                            [u0, v0, z], coeffs) for z in zs])
        ez = np.abs(vals[:, 2]).max()
        et = max(np.abs(vals[:, 0]).max(), np.abs(vals[:, 1]).max(), 1e-300)
        if ez / et > ratio_threshold:
            return int(k)
    raise IdentificationError("no axis-dominant longitudinal mode among the "
                              "%d computed modes" % result.eigenvalues.size)
