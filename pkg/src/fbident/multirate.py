"""Upsampling and the M-channel synthesis filter bank, direct and polyphase.

Index conventions
-----------------
Filter ``i`` of the bank has taps ``f_i(0..N-1)`` with ``N`` a multiple of
``M``. Its type-II polyphase component ``k`` holds taps
``f_i(p*M + M-1-k)`` for ``p = 0..N/M-1``. Branch ``k`` of the polyphase
structure produces output samples ``y[n*M + M-1-k]``: the block for low-rate
time ``n`` is written phase ``M-1`` first, matching :func:`fbident.mimo_core.serialize`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signals import MultichannelSignal


def _as_1d(x) -> np.ndarray:
    if isinstance(x, MultichannelSignal):
        if x.channels != 1:
            raise ValueError(f"expected a single-channel signal, got {x.channels} channels")
        return np.asarray(x.data[0])
    return np.asarray(x, dtype=float).ravel()


@dataclass(frozen=True)
class FirFilter:
    coefficients: np.ndarray

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=float).ravel()
        if c.size < 1:
            raise ValueError("an FIR filter needs at least one tap")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    def __len__(self):
        return self.coefficients.size


@dataclass(frozen=True)
class SynthesisFilterBank:
    """M equal-length FIR filters stored as an (M, N) array.

    Filters are zero-padded on construction so that N is a multiple of M.
    """

    filters: np.ndarray

    def __post_init__(self):
        f = np.array(self.filters, dtype=float)
        if f.ndim == 1:
            f = f[None, :]
        if f.ndim != 2 or f.shape[0] < 1 or f.shape[1] < 1:
            raise ValueError(f"expected (bands, taps) with both >= 1, got shape {f.shape}")
        M, N = f.shape
        pad = (-N) % M
        if pad:
            f = np.hstack([f, np.zeros((M, pad))])
        f.setflags(write=False)
        object.__setattr__(self, "filters", f)

    @classmethod
    def from_filters(cls, filters) -> "SynthesisFilterBank":
        coeffs = [FirFilter(getattr(f, "coefficients", f)).coefficients for f in filters]
        n = max(c.size for c in coeffs)
        return cls(np.array([np.pad(c, (0, n - c.size)) for c in coeffs]))

    @property
    def bands(self) -> int:
        return self.filters.shape[0]

    @property
    def taps(self) -> int:
        return self.filters.shape[1]

    def __eq__(self, other):
        if not isinstance(other, SynthesisFilterBank):
            return NotImplemented
        return self.filters.shape == other.filters.shape and bool(np.array_equal(self.filters, other.filters))

    __hash__ = None


@dataclass(frozen=True)
class PolyphaseMatrix:
    """``components[i, k]`` is the type-II polyphase component k of filter i."""

    components: np.ndarray

    def __post_init__(self):
        c = np.array(self.components, dtype=float)
        if c.ndim != 3 or c.shape[0] != c.shape[1] or c.shape[0] < 1 or c.shape[2] < 1:
            raise ValueError(f"expected an (M, M, N/M) array, got shape {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "components", c)

    @property
    def bands(self) -> int:
        return self.components.shape[0]

    def __eq__(self, other):
        if not isinstance(other, PolyphaseMatrix):
            return NotImplemented
        return self.components.shape == other.components.shape and bool(
            np.array_equal(self.components, other.components)
        )

    __hash__ = None


def upsample(x, M: int) -> np.ndarray:
    """Insert M-1 zeros after every sample."""
    if M < 1:
        raise ValueError(f"upsampling factor must be >= 1, got {M}")
    x = _as_1d(x)
    y = np.zeros(x.size * M)
    y[::M] = x
    return y


def _polyphase_index(M: int, N: int) -> np.ndarray:
    """idx[k, p] = p*M + M-1-k, the filter tap feeding component k, tap p."""
    p = np.arange(N // M)
    k = np.arange(M)
    return p[None, :] * M + (M - 1 - k)[:, None]


def type2_polyphase(bank: SynthesisFilterBank) -> PolyphaseMatrix:
    M, N = bank.filters.shape
    return PolyphaseMatrix(bank.filters[:, _polyphase_index(M, N)])


def polyphase_reassemble(pp: PolyphaseMatrix) -> SynthesisFilterBank:
    M, _, Lp = pp.components.shape
    f = np.zeros((M, M * Lp))
    f[:, _polyphase_index(M, M * Lp)] = pp.components
    return SynthesisFilterBank(f)


def _check_inputs(bank_bands: int, inputs: MultichannelSignal):
    if inputs.channels != bank_bands:
        raise ValueError(f"bank has {bank_bands} bands but inputs have {inputs.channels} channels")


def synth_direct(bank: SynthesisFilterBank, inputs: MultichannelSignal) -> np.ndarray:
    """Sum of each band filter applied to its M-fold upsampled input, length T*M."""
    M = bank.bands
    _check_inputs(M, inputs)
    n_out = inputs.length * M
    y = np.zeros(n_out)
    if n_out == 0:
        return y
    for i in range(M):
        y += np.convolve(upsample(inputs.data[i], M), bank.filters[i])[:n_out]
    return y


def branch_outputs(pp: PolyphaseMatrix, inputs: MultichannelSignal) -> np.ndarray:
    """Low-rate branch outputs ``y_k(n) = sum_l sum_j F_{j,k}(l) x_j(n-l)``.

    Returns an (M, T) array. Accumulation runs lag-major, input-minor, the
    same order as :func:`fbident.mimo_core.mimo_apply`.
    """
    M = pp.bands
    _check_inputs(M, inputs)
    x = inputs.data
    T = inputs.length
    out = np.zeros((M, T))
    for lag in range(min(pp.components.shape[2], T)):
        for j in range(M):
            out[:, lag:] += pp.components[j, :, lag, None] * x[j, None, : T - lag]
    return out


def interleave(branches: np.ndarray) -> np.ndarray:
    """Commutator: ``y[n*M + M-1-k] = branches[k, n]``."""
    return np.ascontiguousarray(branches[::-1].T).ravel()


def synth_polyphase(bank: SynthesisFilterBank, inputs: MultichannelSignal) -> np.ndarray:
    """Polyphase (low-rate) evaluation of the synthesis bank; equals :func:`synth_direct`."""
    _check_inputs(bank.bands, inputs)
    return interleave(branch_outputs(type2_polyphase(bank), inputs))
