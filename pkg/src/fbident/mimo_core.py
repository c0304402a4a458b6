"""MIMO FIR models and the lossless commutator serialization to SISO form.

A model maps P input channels to M output channels through an (M, P, L) tap
tensor ``h[m, p, l]``, the coefficient of ``x_p(n-l)`` in ``y_m(n)``. The
per-output flat sequence is ``h_m(P*l + p) = h[m, p, l]``, so tap matrix
``H(l) = h[:, :, l]`` multiplies the input block at lag ``l``.

Streams start at index 0: a C-channel signal serializes to
``s[C*n + j] = x_{C-1-j}(n)``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .signals import CsvFormatError, MultichannelSignal


@dataclass(frozen=True)
class MimoFirModel:
    coefficients: np.ndarray

    def __post_init__(self):
        h = np.array(self.coefficients, dtype=float)
        if h.ndim != 3 or min(h.shape) < 1:
            raise ValueError(f"expected an (outputs, inputs, taps) tensor, got shape {h.shape}")
        if not np.all(np.isfinite(h)):
            raise ValueError("model coefficients must be finite")
        h.setflags(write=False)
        object.__setattr__(self, "coefficients", h)

    @classmethod
    def zeros(cls, outputs: int, inputs: int, taps: int) -> "MimoFirModel":
        return cls(np.zeros((outputs, inputs, taps)))

    @classmethod
    def diagonal(cls, rows) -> "MimoFirModel":
        """Square model with ``rows[i]`` on the i -> i path and zeros elsewhere."""
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        M, L = rows.shape
        h = np.zeros((M, M, L))
        h[np.arange(M), np.arange(M)] = rows
        return cls(h)

    @classmethod
    def from_tap_matrices(cls, mats) -> "MimoFirModel":
        """Build from ``[H(0), H(1), ...]``, each an (M, P) matrix."""
        return cls(np.stack([np.atleast_2d(m) for m in mats], axis=-1))

    @property
    def outputs(self) -> int:
        return self.coefficients.shape[0]

    @property
    def inputs(self) -> int:
        return self.coefficients.shape[1]

    @property
    def taps(self) -> int:
        return self.coefficients.shape[2]

    def tap_matrix(self, lag: int) -> np.ndarray:
        return self.coefficients[:, :, lag]

    def flat(self) -> np.ndarray:
        """(M, P*L) array with column ``P*l + p`` holding ``h[m, p, l]``."""
        M, P, L = self.coefficients.shape
        return self.coefficients.transpose(0, 2, 1).reshape(M, L * P)

    @classmethod
    def from_flat(cls, flat, inputs: int) -> "MimoFirModel":
        flat = np.atleast_2d(flat)
        M = flat.shape[0]
        return cls(flat.reshape(M, -1, inputs).transpose(0, 2, 1))

    def __eq__(self, other):
        if not isinstance(other, MimoFirModel):
            return NotImplemented
        return self.coefficients.shape == other.coefficients.shape and bool(
            np.array_equal(self.coefficients, other.coefficients)
        )

    __hash__ = None


@dataclass(frozen=True)
class ScalarStream:
    samples: np.ndarray
    block: int

    def __post_init__(self):
        s = np.array(self.samples, dtype=float).ravel()
        if self.block < 1:
            raise ValueError("block must be >= 1")
        if s.size % self.block:
            raise ValueError(f"stream length {s.size} is not divisible by block {self.block}")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return self.samples.size


def _accumulate(h: np.ndarray, blocks_in: np.ndarray, blocks_out: np.ndarray):
    """``blocks_out[m, n] += sum_l sum_p h[m, p, l] * blocks_in[p, n - l]``.

    Both arguments may be strided views into serialized streams; the
    element-wise operation order (lag outer, input inner) is fixed so every
    caller produces bit-identical sums.
    """
    M, P, L = h.shape
    T = blocks_in.shape[1]
    for lag in range(min(L, T)):
        for p in range(P):
            blocks_out[:, lag:] += h[:, p, lag, None] * blocks_in[p, None, : T - lag]


def mimo_apply(model: MimoFirModel, x: MultichannelSignal) -> MultichannelSignal:
    """``y_m(n) = sum_l sum_p h[m, p, l] x_p(n-l)`` with zero prewindow."""
    if x.channels != model.inputs:
        raise ValueError(f"model expects {model.inputs} input channels, signal has {x.channels}")
    y = np.zeros((model.outputs, x.length))
    _accumulate(model.coefficients, x.data, y)
    return MultichannelSignal(y)


def serialize(x: MultichannelSignal) -> ScalarStream:
    return ScalarStream(np.ascontiguousarray(x.data[::-1].T).ravel(), block=x.channels)


def deserialize(s: ScalarStream, channels: int) -> MultichannelSignal:
    if channels < 1:
        raise ValueError("channels must be >= 1")
    n = len(s)
    if n % channels:
        raise ValueError(f"stream length {n} is not divisible by {channels} channels")
    return MultichannelSignal(s.samples.reshape(n // channels, channels).T[::-1])


def _stream_blocks(buf: np.ndarray, block: int) -> np.ndarray:
    """View ``v[c, n] = buf[block*n + block-1-c]`` (no copy)."""
    return buf.reshape(-1, block)[:, ::-1].T


def siso_apply(model: MimoFirModel, z: ScalarStream) -> ScalarStream:
    """Run the model directly on a serialized input stream.

    The output block at low-rate time n, ``[w(Mn) ... w(Mn-M+1)]``, is
    ``sum_l H(l) [z(Pn - Pl) ... z(Pn - Pl - P+1)]`` (indices shifted so the
    stream starts at 0). Nothing is deserialized; the accumulation reads and
    writes the streams through strided views.
    """
    if z.block != model.inputs:
        raise ValueError(f"stream block {z.block} does not match model inputs {model.inputs}")
    T = len(z) // z.block
    w = np.zeros(T * model.outputs)
    _accumulate(model.coefficients, _stream_blocks(z.samples, z.block), _stream_blocks(w, model.outputs))
    return ScalarStream(w, block=model.outputs)


def write_model_csv(model: MimoFirModel, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["m", "p", "l", "h"])
        for (m, p, l), v in np.ndenumerate(model.coefficients):
            w.writerow([m, p, l, repr(float(v))])


def read_model_csv(path) -> MimoFirModel:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["m", "p", "l", "h"]:
        raise CsvFormatError("expected header m,p,l,h", row=0)
    entries = {}
    for i, row in enumerate(rows[1:], start=1):
        if len(row) != 4:
            raise CsvFormatError(f"expected 4 cells, found {len(row)}", row=i)
        try:
            key = tuple(int(c) for c in row[:3])
        except ValueError:
            raise CsvFormatError("non-integer index", row=i) from None
        if min(key) < 0:
            raise CsvFormatError("negative index", row=i)
        try:
            entries[key] = float(row[3])
        except ValueError:
            raise CsvFormatError(f"non-numeric coefficient {row[3]!r}", row=i, column=3) from None
    if not entries:
        raise CsvFormatError("model file has no coefficients", row=1)
    shape = tuple(max(k[d] for k in entries) + 1 for d in range(3))
    if len(entries) != shape[0] * shape[1] * shape[2]:
        raise CsvFormatError(f"incomplete tensor: {len(entries)} entries for shape {shape}")
    h = np.zeros(shape)
    for k, v in entries.items():
        h[k] = v
    return MimoFirModel(h)
