"""Glauber dynamics, its spectral gap, and d-Dobrushin interdependence matrices."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NonPositiveScale, StateSpaceTooLarge, ValidationError
from .mrf import JointDistribution, MrfInstance, influence_matrix
from .report import VerificationReport, geq

DEFAULT_STATE_CAP = 2000
JACOBI_MAX_STATES = 128


def jacobi_eigh(S: np.ndarray, tol: float = 1e-15, max_sweeps: int = 100):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues ascending, orthonormal eigenvectors as columns).
    """
    A = np.array(S, dtype=float, copy=True)
    n = A.shape[0]
    V = np.eye(n)
    scale = max(float(np.linalg.norm(A)), 1e-300)
    for _ in range(max_sweeps):
        off = float(np.linalg.norm(A - np.diag(np.diag(A))))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                cp, cq = A[:, p].copy(), A[:, q].copy()
                A[:, p], A[:, q] = c * cp - s * cq, s * cp + c * cq
                rp, rq = A[p, :].copy(), A[q, :].copy()
                A[p, :], A[q, :] = c * rp - s * rq, s * rp + c * rq
                A[p, q] = A[q, p] = 0.0
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p], V[:, q] = c * vp - s * vq, s * vp + c * vq
    w = np.diag(A).copy()
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def symmetric_eigh(S: np.ndarray):
    """Jacobi on small matrices, LAPACK above JACOBI_MAX_STATES."""
    if S.shape[0] <= JACOBI_MAX_STATES:
        return jacobi_eigh(S)
    return np.linalg.eigh(S)


@dataclass
class GlauberChain:
    transition: np.ndarray      # (|T|, |T|) row-stochastic
    stationary: np.ndarray      # pmf over the support
    gap: float
    n_items: int
    states: np.ndarray          # support positions with positive mass (spectral block)
    eigenvalues: np.ndarray = field(repr=False)   # of the symmetrized block, descending
    eigenvectors: np.ndarray = field(repr=False)  # matching columns

    @property
    def n_gap(self) -> float:
        return self.n_items * self.gap

    def second_eigenfunction(self) -> np.ndarray:
        """g* = D^{-1/2} u_2 on the full support (zero where pi = 0)."""
        g = np.zeros(self.stationary.size)
        if self.eigenvectors.shape[1] < 2:
            return g
        u = self.eigenvectors[:, 1]
        g[self.states] = u / np.sqrt(self.stationary[self.states])
        return g


def glauber_chain(dist: JointDistribution, cap: int = DEFAULT_STATE_CAP) -> GlauberChain:
    N, n = dist.size, dist.n
    if N > cap:
        raise StateSpaceTooLarge(f"{N} states exceed the eigensolver cap {cap}")
    sup = dist.support
    P = np.zeros((N, N))
    rows = np.arange(N)
    for i in range(n):
        cond, mass = dist.conditional_table(i)
        flat_cond = cond.reshape(-1)
        ctx = sup.copy()
        ctx[:, i] = 0
        ctx_mass = mass[tuple(ctx.T)]
        dead = ctx_mass <= 0
        for a in range(dist.sizes[i]):
            moved = sup.copy()
            moved[:, i] = a
            y = np.ravel_multi_index(moved.T, dist.sizes)
            np.add.at(P, (rows[~dead], y[~dead]), flat_cond[y[~dead]] / n)
        P[rows[dead], rows[dead]] += 1.0 / n

    pi = dist.pmf
    states = np.flatnonzero(pi > 0)
    sq = np.sqrt(pi[states])
    S = sq[:, None] * P[np.ix_(states, states)] / sq[None, :]
    S = 0.5 * (S + S.T)
    w, U = symmetric_eigh(S)
    w, U = w[::-1], U[:, ::-1]
    gap = 1.0 - w[1] if w.size > 1 else 1.0
    return GlauberChain(P, pi.copy(), float(min(max(gap, 0.0), 1.0)) if w.size > 1 else 1.0,
                        n, states, w, U)


# ------------------------------------------------------------ Dobrushin

@dataclass
class DobrushinMatrix:
    metric_kind: str            # "trivial" or "weighted"
    scales: np.ndarray
    entries: np.ndarray
    spectral_radius: float
    method: str                 # "power" or "eigvals" (fallback)

    def as_dict(self) -> dict:
        return {"metric_kind": self.metric_kind, "scales": self.scales.tolist(),
                "entries": self.entries.tolist(), "spectral_radius": self.spectral_radius,
                "method": self.method}


def spectral_radius(M: np.ndarray, tol: float = 1e-10, max_iter: int = 100_000):
    """Perron root of a nonnegative matrix: (rho, method).

    Power iteration runs on M + I from the all-ones vector; the shift makes
    the Perron root strictly dominant in modulus even for periodic M.  It
    stops when the Collatz-Wielandt bracket closes to ``tol`` or the norm
    estimate stops moving.  If neither happens, the largest eigenvalue
    modulus is used instead.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    if n == 0 or not np.any(M):
        return 0.0, "power"
    B = M + np.eye(n)
    x = np.ones(n) / math.sqrt(n)
    lam, calm = 0.0, 0
    for _ in range(max_iter):
        y = B @ x
        # Collatz-Wielandt bracket: x stays positive because B >= I
        ratio = y / x
        lo, hi = float(ratio.min()), float(ratio.max())
        new = float(np.linalg.norm(y))
        if hi - lo <= tol * max(1.0, hi):
            return max(0.5 * (lo + hi) - 1.0, 0.0), "power"
        # reducible matrices can leave the bracket open; accept a stalled estimate
        calm = calm + 1 if abs(new - lam) <= 1e-15 * new else 0
        if calm >= 50:
            return max(new - 1.0, 0.0), "power"
        x, lam = y / new, new
    return float(np.abs(np.linalg.eigvals(M)).max()), "eigvals"


def d_dobrushin(inst: MrfInstance, dist: JointDistribution, scales=None,
                alpha: np.ndarray | None = None) -> DobrushinMatrix:
    """Entries (v_i / v_j) * alpha_ij for per-item scales v (default all ones)."""
    n = inst.n
    if scales is None:
        v = np.ones(n)
        kind = "trivial"
    else:
        v = np.asarray(scales, dtype=float)
        if v.shape != (n,):
            raise ValidationError(f"need {n} scales", "scales")
        if np.any(~(v > 0)):
            raise NonPositiveScale("every scale v_i must be > 0")
        kind = "trivial" if np.allclose(v, v[0]) else "weighted"
    a = influence_matrix(dist) if alpha is None else alpha
    entries = (v[:, None] / v[None, :]) * a
    rho, method = spectral_radius(entries)
    return DobrushinMatrix(kind, v, entries, rho, method)


def verify_gap_inequality(chain: GlauberChain, matrices) -> VerificationReport:
    """n * gamma >= 1 - rho_d for each supplied interdependence matrix."""
    rep = VerificationReport()
    for k, mat in enumerate(matrices):
        rep.add(geq(f"n_gamma_vs_dobrushin[{mat.metric_kind}:{k}]", chain.n_gap,
                    1.0 - mat.spectral_radius, abs_tol=1e-8, rel_tol=0.0,
                    note=f"rho by {mat.method}"))
    return rep


# ----------------------------------------------------- sampling, mixing

def sample_chain(chain: GlauberChain, seed: int, steps: int, start: int) -> np.ndarray:
    N = chain.transition.shape[0]
    if not 0 <= start < N:
        raise ValidationError(f"start must be in [0, {N})", "start")
    rng = np.random.default_rng(seed)
    cum = np.cumsum(chain.transition, axis=1)
    traj = np.empty(steps + 1, dtype=np.int64)
    traj[0] = x = start
    for k in range(1, steps + 1):
        x = int(np.searchsorted(cum[x], rng.random() * cum[x, -1], side="right"))
        x = min(x, N - 1)
        traj[k] = x
    return traj


def tv_curve(chain: GlauberChain, start: int, horizon: int) -> np.ndarray:
    """TV distance to stationarity after 0..horizon steps from a point mass."""
    N = chain.transition.shape[0]
    if not 0 <= start < N:
        raise ValidationError(f"start must be in [0, {N})", "start")
    mu = np.zeros(N)
    mu[start] = 1.0
    out = np.empty(horizon + 1)
    for k in range(horizon + 1):
        out[k] = 0.5 * np.abs(mu - chain.stationary).sum()
        mu = mu @ chain.transition
    return out
