"""Coefficient maps between synthesis banks, MIMO models and LPTV systems.

All maps here are index permutations (or zero embeddings); none does
arithmetic on the coefficients.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mimo_core import MimoFirModel
from .multirate import SynthesisFilterBank


def _bank_index(M: int, L: int):
    """Index arrays (filter j, tap M*k + M-1-i) feeding h[i, j, k]."""
    i, j, k = np.ogrid[:M, :M, :L]
    return np.broadcast_arrays(j, M * k + (M - 1 - i))


def bank_to_mimo(bank: SynthesisFilterBank) -> MimoFirModel:
    """``h[i, j, k] = f_j(M*k + M-1-i)``: branch i of the bank as output i of the model."""
    M, N = bank.filters.shape
    rows, cols = _bank_index(M, N // M)
    return MimoFirModel(bank.filters[rows, cols])


def mimo_to_bank(model: MimoFirModel) -> SynthesisFilterBank:
    M, P, L = model.coefficients.shape
    if M != P:
        raise ValueError(
            f"model is {M}x{P}; only square models map to a synthesis bank. "
            "Use pad_to_square() to embed it in an lcm(M, P) square model first."
        )
    f = np.zeros((M, M * L))
    rows, cols = _bank_index(M, L)
    f[rows, cols] = model.coefficients
    return SynthesisFilterBank(f)


def pad_to_square(model: MimoFirModel) -> MimoFirModel:
    """Embed an M x P model in a Q x Q model, Q = lcm(M, P), zeros elsewhere."""
    M, P, L = model.coefficients.shape
    Q = math.lcm(M, P)
    if Q == M == P:
        return model
    h = np.zeros((Q, Q, L))
    h[:M, :P] = model.coefficients
    return MimoFirModel(h)


@dataclass(frozen=True)
class LptvSystem:
    """Period-M SISO system ``y(n) = sum_k g_{n mod M}(k) x(n-k)``.

    ``kernels`` is an (M, K) array, row r the kernel used at phase r.
    """

    kernels: np.ndarray

    def __post_init__(self):
        g = np.array(self.kernels, dtype=float)
        if g.ndim == 1:
            g = g[None, :]
        if g.ndim != 2 or min(g.shape) < 1:
            raise ValueError(f"expected (period, taps) kernels, got shape {g.shape}")
        g.setflags(write=False)
        object.__setattr__(self, "kernels", g)

    @property
    def period(self) -> int:
        return self.kernels.shape[0]

    def apply(self, x) -> np.ndarray:
        """Direct time-domain simulation, zero prewindow."""
        x = np.asarray(x, dtype=float).ravel()
        M, K = self.kernels.shape
        y = np.zeros(x.size)
        for n in range(x.size):
            g = self.kernels[n % M]
            k = np.arange(min(K, n + 1))
            y[n] = np.dot(g[k], x[n - k])
        return y


def lptv_to_mimo(sys: LptvSystem) -> MimoFirModel:
    """Block a period-M LPTV system into an M x M LTI model.

    Blocks follow the serialize convention: within block n, channel c holds
    sample ``M*n + M-1-c``. Output channel m (phase ``M-1-m``) picks up
    ``g_phase(k)`` on input sample ``M*n + phase - k``, which lives in channel
    ``M-1 - (t mod M)`` at lag ``-(t // M)``, ``t = phase - k``.
    """
    M, K = sys.kernels.shape
    L = (K - 1 + M - 1) // M + 1
    h = np.zeros((M, M, L))
    for m in range(M):
        phase = M - 1 - m
        for k in range(K):
            t = phase - k
            h[m, M - 1 - (t % M), -(t // M)] = sys.kernels[phase, k]
    return MimoFirModel(h)
