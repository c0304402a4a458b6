"""Least-squares identification of MIMO FIR models.

Every engine decouples the M output channels: they share one regression
matrix (built from the inputs) and are solved independently. Columns of the
regression follow the flat model layout ``P*l + p`` (lag-major), so the
regressors for a model with ``l`` taps are exactly the leading ``P*l``
columns of any longer model. The order-recursive engine relies on that.

Windows
-------
``covariance``       rows n = L-1 .. T-1, only measured samples (default).
``prewindowed``      rows n = 0 .. T-1, x(n) = 0 for n < 0.
``autocorrelation``  rows n = 0 .. T+L-2, x and d zero outside 0 .. T-1;
                     the normal matrix is then block Toeplitz and equals
                     the one assembled from sample correlations.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .mimo_core import MimoFirModel, ScalarStream, mimo_apply
from .signals import MultichannelSignal

METHODS = ("block-ls", "rls", "order-recursive", "wiener")
WINDOWS = ("covariance", "prewindowed", "autocorrelation")


class RankDeficiencyError(np.linalg.LinAlgError):
    """Normal equations are singular (or not positive definite) with zero ridge."""

    def __init__(self, message, rank=None, size=None):
        self.rank = rank
        self.size = size
        super().__init__(message)


@dataclass(frozen=True)
class IdentConfig:
    taps: int
    method: str = "block-ls"
    ridge: float = 0.0
    forgetting: float = 1.0
    window: str = "covariance"

    def __post_init__(self):
        if int(self.taps) != self.taps or self.taps < 1:
            raise ValueError(f"taps must be an integer >= 1, got {self.taps}")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if not self.ridge >= 0:
            raise ValueError(f"ridge must be >= 0, got {self.ridge}")
        if not 0 < self.forgetting <= 1:
            raise ValueError(f"forgetting factor must lie in (0, 1], got {self.forgetting}")
        if self.window not in WINDOWS:
            raise ValueError(f"unknown window {self.window!r}; choose from {', '.join(WINDOWS)}")


@dataclass(frozen=True)
class ErrorTable:
    abs_error: np.ndarray
    max_error: float
    argmax: tuple
    output_mse: Optional[np.ndarray] = None


@dataclass(frozen=True)
class IdentReport:
    model: MimoFirModel
    rss: np.ndarray
    samples: int
    method: str = "block-ls"
    reference: Optional[MimoFirModel] = None
    errors: Optional[ErrorTable] = None
    trajectory: Optional[np.ndarray] = field(default=None, repr=False)

    def with_reference(self, reference: MimoFirModel) -> "IdentReport":
        return replace(self, reference=reference, errors=report_errors(self.model, reference))

    def rows(self, snr=None):
        """Rows ``(snr, m, p, l, true, estimated, abs_error)``; blanks when unknown."""
        h = self.model.coefficients
        for (m, p, l), est in np.ndenumerate(h):
            true = err = None
            if self.reference is not None:
                true = float(self.reference.coefficients[m, p, l])
                err = float(self.errors.abs_error[m, p, l])
            yield snr, m, p, l, true, float(est), err

    def residual_rows(self):
        for m, r in enumerate(self.rss):
            yield m, float(r), self.samples


def report_errors(estimated: MimoFirModel, reference: MimoFirModel, x=None, d=None) -> ErrorTable:
    """Per-coefficient absolute error; output MSE per channel when held-out (x, d) given."""
    if estimated.coefficients.shape != reference.coefficients.shape:
        raise ValueError(
            f"model shapes differ: {estimated.coefficients.shape} vs {reference.coefficients.shape}"
        )
    err = np.abs(estimated.coefficients - reference.coefficients)
    idx = np.unravel_index(int(np.argmax(err)), err.shape)
    mse = None
    if x is not None and d is not None:
        y = mimo_apply(estimated, x)
        mse = np.mean((d.data - y.data) ** 2, axis=1)
    return ErrorTable(err, float(err[idx]), tuple(int(i) for i in idx), mse)


def _check_data(x: MultichannelSignal, d: MultichannelSignal, taps: int):
    if x.length != d.length:
        raise ValueError(f"input length {x.length} != output length {d.length}")
    need = taps + x.channels * taps
    if x.length < need:
        raise ValueError(f"need at least L + P*L = {need} samples, got {x.length}")


def _window_rows(T: int, L: int, window: str) -> range:
    if window == "covariance":
        return range(L - 1, T)
    if window == "prewindowed":
        return range(0, T)
    return range(0, T + L - 1)


def regression(x: np.ndarray, d: np.ndarray, taps: int, window: str = "covariance"):
    """Regression matrix (rows, P*L) and targets (M, rows) for the given window."""
    x = np.atleast_2d(x)
    d = np.atleast_2d(d)
    P, T = x.shape
    rows = _window_rows(T, taps, window)
    xp = np.concatenate([np.zeros((P, taps - 1)), x, np.zeros((P, taps - 1))], axis=1)
    n = np.arange(rows.start, rows.stop)
    # column P*l + p  <-  x_p(n - l), padded offset taps-1
    lag = np.repeat(np.arange(taps), P)
    ch = np.tile(np.arange(P), taps)
    phi = xp[ch[None, :], n[:, None] - lag[None, :] + taps - 1]
    dp = np.concatenate([d, np.zeros((d.shape[0], taps - 1))], axis=1)
    return phi, dp[:, n]


def _cholesky(R: np.ndarray, ridge: float):
    n = R.shape[0]
    if ridge == 0:
        rank = np.linalg.matrix_rank(R)
        if rank < n:
            raise RankDeficiencyError(
                f"normal matrix is rank deficient: rank {rank} < {n} unknowns "
                "(input not persistently exciting for this order); use ridge > 0",
                rank=rank,
                size=n,
            )
    try:
        return cho_factor(R, lower=True)
    except np.linalg.LinAlgError:
        raise RankDeficiencyError(
            f"normal matrix of size {n} is not positive definite", rank=np.linalg.matrix_rank(R), size=n
        ) from None


def _solve_normal(R: np.ndarray, rhs: np.ndarray, ridge: float) -> np.ndarray:
    R = R + ridge * np.eye(R.shape[0])
    return cho_solve(_cholesky(R, ridge), rhs)


def _finish(flat, phi, D, P, method, reference=None, trajectory=None):
    model = MimoFirModel.from_flat(flat, P)
    rss = np.sum((D - flat @ phi.T) ** 2, axis=1)
    rep = IdentReport(model, rss, phi.shape[0], method, trajectory=trajectory)
    return rep.with_reference(reference) if reference is not None else rep


def block_ls_identify(x: MultichannelSignal, d: MultichannelSignal, cfg: IdentConfig, reference=None) -> IdentReport:
    """Batch LS, ``min sum_n (d_m(n) - h_m . phi(n))^2 + ridge * |h_m|^2`` per output."""
    _check_data(x, d, cfg.taps)
    phi, D = regression(x.data, d.data, cfg.taps, cfg.window)
    flat = _solve_normal(phi.T @ phi, phi.T @ D.T, cfg.ridge).T
    return _finish(flat, phi, D, x.channels, "block-ls", reference)


def identify_siso(z: ScalarStream, w: ScalarStream, cfg: IdentConfig, reference=None) -> IdentReport:
    """Block LS posed on the serialized streams.

    Regressor for output block n holds ``z[P*(n-l) + P-1-p]`` at column
    ``P*l + p``; targets are ``w[M*n + M-1-m]``. Equivalent to
    :func:`block_ls_identify` on the deserialized channels.
    """
    P, M = z.block, w.block
    T = len(z) // P
    if len(w) // M != T:
        raise ValueError(f"streams cover {T} and {len(w) // M} blocks")
    L = cfg.taps
    if T < L + P * L:
        raise ValueError(f"need at least L + P*L = {L + P * L} blocks, got {T}")
    rows = np.array(_window_rows(T, L, cfg.window))
    zp = np.concatenate([np.zeros(P * (L - 1)), z.samples, np.zeros(P * (L - 1))])
    wp = np.concatenate([w.samples, np.zeros(M * (L - 1))])
    lag = np.repeat(np.arange(L), P)
    ch = np.tile(np.arange(P), L)
    phi = zp[P * (rows[:, None] - lag[None, :] + L - 1) + P - 1 - ch[None, :]]
    D = wp[M * rows[None, :] + M - 1 - np.arange(M)[:, None]]
    flat = _solve_normal(phi.T @ phi, phi.T @ D.T, cfg.ridge).T
    return _finish(flat, phi, D, P, "block-ls", reference)


def rls_identify(
    x: MultichannelSignal,
    d: MultichannelSignal,
    cfg: IdentConfig,
    reference=None,
    return_trajectory: bool = False,
) -> IdentReport:
    """Exponentially weighted RLS over the same rows as the block solver.

    Starts from h = 0 and inverse correlation ``I / ridge``, so at
    ``forgetting == 1`` the final model is the ridge LS solution for the
    window. Each step is a gain-vector and rank-one update; the gain is
    shared across output channels, which update with scalar errors.
    """
    _check_data(x, d, cfg.taps)
    if cfg.ridge <= 0:
        raise ValueError("rls needs ridge > 0 (initial inverse correlation is I / ridge)")
    lam = cfg.forgetting
    phi, D = regression(x.data, d.data, cfg.taps, cfg.window)
    n_rows, K = phi.shape
    M = D.shape[0]
    Pinv = np.eye(K) / cfg.ridge
    W = np.zeros((M, K))
    traj = np.empty((n_rows, M, K)) if return_trajectory else None
    for t in range(n_rows):
        u = phi[t]
        Pu = Pinv @ u
        g = Pu / (lam + u @ Pu)
        e = D[:, t] - W @ u
        W += np.outer(e, g)
        Pinv -= np.outer(g, Pu)
        if lam != 1.0:
            Pinv /= lam
        if traj is not None:
            traj[t] = W
    if traj is not None:
        traj = traj.reshape(n_rows, M, cfg.taps, x.channels).transpose(0, 1, 3, 2)
    return _finish(W, phi, D, x.channels, "rls", reference, traj)


def _chol_downdate(Lc: np.ndarray, v: np.ndarray) -> None:
    """In place: Lc Lc^T  <-  Lc Lc^T - v v^T (Lc lower triangular)."""
    v = v.copy()
    n = v.size
    for k in range(n):
        r2 = Lc[k, k] ** 2 - v[k] ** 2
        if r2 <= 0:
            raise RankDeficiencyError("order recursion lost positive definiteness on downdate", size=n)
        r = np.sqrt(r2)
        c = r / Lc[k, k]
        s = v[k] / Lc[k, k]
        Lc[k, k] = r
        if k + 1 < n:
            Lc[k + 1 :, k] = (Lc[k + 1 :, k] - s * v[k + 1 :]) / c
            v[k + 1 :] = c * v[k + 1 :] - s * Lc[k + 1 :, k]


def order_recursive_identify(
    x: MultichannelSignal, d: MultichannelSignal, cfg: IdentConfig, reference=None
) -> list[IdentReport]:
    """LS-optimal models for every order 1..L from one growing factorization.

    Order l+1 reuses the Cholesky factor of order l: under the covariance
    window the row ``n = l-1`` leaves the cost (rank-one downdate), then the
    P new lag-l columns are bordered on. The extra work per order is a pair
    of triangular solves plus a P x P factorization, so all L solutions cost
    about as much as the order-L solve alone.

    ``reference`` (taps >= 1) is compared against each order after
    truncating or zero-padding it to that order.
    """
    _check_data(x, d, cfg.taps)
    P, T = x.data.shape
    L, ridge = cfg.taps, cfg.ridge
    # widest regression (prewindowed rows 0..T+L-2); per-order windows are row slices of it
    phi_all, D_all = regression(x.data, d.data, L, "autocorrelation")
    covariance = cfg.window == "covariance"

    def first_row(l):
        return l - 1 if covariance else 0

    def end_row(l):
        return T + l - 1 if cfg.window == "autocorrelation" else T

    Lc = np.zeros((0, 0))
    rhs = np.zeros((0, D_all.shape[0]))
    reports = []
    for l in range(1, L + 1):
        k0, k1 = P * (l - 1), P * l
        start = first_row(l)
        if l > 1:
            for n in range(first_row(l - 1), start):
                _chol_downdate(Lc, phi_all[n, :k0])
                rhs -= np.outer(phi_all[n, :k0], D_all[:, n])
        rows = slice(start, end_row(l))
        old = phi_all[rows, :k0]
        new = phi_all[rows, k0:k1]
        B = old.T @ new
        C = new.T @ new + ridge * np.eye(P)
        S = solve_triangular(Lc, B, lower=True) if k0 else np.zeros((0, P))
        schur = C - S.T @ S
        if ridge == 0 and np.linalg.matrix_rank(schur) < P:
            raise RankDeficiencyError(
                f"normal matrix becomes rank deficient at order {l} (new lag-{l - 1} columns are dependent)",
                size=k1,
            )
        try:
            L22 = np.linalg.cholesky(schur)
        except np.linalg.LinAlgError:
            raise RankDeficiencyError(f"normal matrix is not positive definite at order {l}", size=k1) from None
        grown = np.zeros((k1, k1))
        grown[:k0, :k0] = Lc
        grown[k0:, :k0] = S.T
        grown[k0:, k0:] = L22
        Lc = grown
        rhs = np.vstack([rhs, new.T @ D_all[:, rows].T])
        y = solve_triangular(Lc, rhs, lower=True)
        flat = solve_triangular(Lc.T, y, lower=False).T
        ref = _fit_taps(reference, l) if reference is not None else None
        reports.append(_finish(flat, phi_all[rows, :k1], D_all[:, rows], P, "order-recursive", ref))
    return reports


def _fit_taps(model: MimoFirModel, taps: int) -> MimoFirModel:
    h = model.coefficients[:, :, :taps]
    if h.shape[2] < taps:
        h = np.concatenate([h, np.zeros(h.shape[:2] + (taps - h.shape[2],))], axis=2)
    return MimoFirModel(h)


@dataclass(frozen=True)
class CorrelationData:
    """Second-order statistics for the given-statistics solver.

    ``rxx[p, q, L-1 + tau] = r_{x_p x_q}(tau) = E[x_p(n) x_q(n - tau)]`` for
    ``|tau| < L``; ``rdx[m, p, tau] = E[d_m(n) x_p(n - tau)]`` for
    ``0 <= tau < L``.
    """

    rxx: np.ndarray
    rdx: np.ndarray

    def __post_init__(self):
        rxx = np.array(self.rxx, dtype=float)
        rdx = np.array(self.rdx, dtype=float)
        if rxx.ndim != 3 or rxx.shape[0] != rxx.shape[1] or rxx.shape[2] % 2 == 0:
            raise ValueError(f"rxx must be (P, P, 2L-1), got {rxx.shape}")
        P, _, W = rxx.shape
        L = (W + 1) // 2
        if rdx.ndim != 3 or rdx.shape[1:] != (P, L):
            raise ValueError(f"rdx must be (M, {P}, {L}), got {rdx.shape}")
        mirrored = rxx.transpose(1, 0, 2)[:, :, ::-1]
        scale = max(float(np.max(np.abs(rxx))), 1e-300)
        if np.max(np.abs(rxx - mirrored)) > 1e-12 * scale:
            raise ValueError("rxx violates r_pq(tau) = r_qp(-tau)")
        object.__setattr__(self, "rxx", rxx)
        object.__setattr__(self, "rdx", rdx)

    @property
    def inputs(self) -> int:
        return self.rxx.shape[0]

    @property
    def outputs(self) -> int:
        return self.rdx.shape[0]

    @property
    def taps(self) -> int:
        return self.rdx.shape[2]

    def matrix(self) -> np.ndarray:
        """(P*L, P*L) input correlation, entry (P*l1+p1, P*l2+p2) = r_{p1 p2}(l2 - l1)."""
        P, L = self.inputs, self.taps
        l1 = np.repeat(np.arange(L), P)
        p1 = np.tile(np.arange(P), L)
        tau = l1[None, :] - l1[:, None]
        return self.rxx[p1[:, None], p1[None, :], L - 1 + tau]

    def cross(self) -> np.ndarray:
        """(M, P*L) cross-correlation vectors in flat model layout."""
        return self.rdx.transpose(0, 2, 1).reshape(self.outputs, -1)

    @classmethod
    def from_signals(cls, x: MultichannelSignal, d: MultichannelSignal, taps: int, normalize: bool = True):
        """Sample correlations with zero extension outside the record (biased, /T)."""
        if x.length != d.length:
            raise ValueError(f"input length {x.length} != output length {d.length}")
        T = x.length
        L = taps
        X, Dd = x.data, d.data

        def corr(a, b, tau):
            if tau >= 0:
                return np.dot(a[tau:], b[: T - tau])
            return np.dot(a[: T + tau], b[-tau:])

        P, M = X.shape[0], Dd.shape[0]
        rxx = np.zeros((P, P, 2 * L - 1))
        for p in range(P):
            for q in range(P):
                for tau in range(-(L - 1), L):
                    rxx[p, q, L - 1 + tau] = corr(X[p], X[q], tau)
        rdx = np.zeros((M, P, L))
        for m in range(M):
            for p in range(P):
                for tau in range(L):
                    rdx[m, p, tau] = corr(Dd[m], X[p], tau)
        if normalize and T:
            rxx /= T
            rdx /= T
        return cls(rxx, rdx)

    @classmethod
    def from_model(cls, input_corr: np.ndarray, model: MimoFirModel, taps: int):
        """Statistics of ``d = model(x)`` given input correlations.

        ``input_corr`` is (P, P, 2S+1) centred at lag 0 with
        ``S >= model.taps + taps - 2``.
        """
        input_corr = np.asarray(input_corr, dtype=float)
        P = model.inputs
        S = (input_corr.shape[2] - 1) // 2
        K = model.taps
        if S < K + taps - 2:
            raise ValueError(f"input correlations need lags up to {K + taps - 2}, have {S}")
        rxx = input_corr[:, :, S - (taps - 1) : S + taps]
        h = model.coefficients
        rdx = np.zeros((model.outputs, P, taps))
        # E[d_m(n) x_p(n - tau)] = sum_q sum_k h[m,q,k] r_{qp}(tau - k)
        for tau in range(taps):
            for k in range(K):
                rdx[:, :, tau] += h[:, :, k] @ input_corr[:, :, S + tau - k]
        return cls(rxx, rdx)


def wiener_identify(corr: CorrelationData, outputs: int, inputs: int, taps: int, ridge: float = 0.0) -> MimoFirModel:
    """Solve ``R h_m = r_m`` for every output from supplied statistics."""
    if (corr.outputs, corr.inputs, corr.taps) != (outputs, inputs, taps):
        raise ValueError(
            f"correlation data is for {corr.outputs}x{corr.inputs}, L={corr.taps}; "
            f"requested {outputs}x{inputs}, L={taps}"
        )
    flat = _solve_normal(corr.matrix(), corr.cross().T, ridge).T
    return MimoFirModel.from_flat(flat, inputs)


def wiener_from_data(x: MultichannelSignal, d: MultichannelSignal, cfg: IdentConfig, reference=None) -> IdentReport:
    """Given-statistics solve on sample correlations; equals block LS with the autocorrelation window."""
    _check_data(x, d, cfg.taps)
    corr = CorrelationData.from_signals(x, d, cfg.taps, normalize=True)
    model = wiener_identify(corr, d.channels, x.channels, cfg.taps, cfg.ridge / max(x.length, 1))
    phi, D = regression(x.data, d.data, cfg.taps, "autocorrelation")
    return _finish(model.flat(), phi, D, x.channels, "wiener", reference)


def identify(x: MultichannelSignal, d: MultichannelSignal, cfg: IdentConfig, reference=None) -> IdentReport:
    """Dispatch on ``cfg.method``; order-recursive returns its highest order."""
    if cfg.method == "block-ls":
        return block_ls_identify(x, d, cfg, reference)
    if cfg.method == "rls":
        return rls_identify(x, d, cfg, reference)
    if cfg.method == "order-recursive":
        return order_recursive_identify(x, d, cfg, reference)[-1]
    return wiener_from_data(x, d, cfg, reference)
