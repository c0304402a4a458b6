"""Multichannel test signals: AR excitation, measurement noise, CSV I/O."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.signal import lfilter


class CsvFormatError(ValueError):
    """Malformed signal/model CSV. Carries the offending row (and column)."""

    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


@dataclass(frozen=True)
class MultichannelSignal:
    """C channels of equal length T, stored as a read-only (C, T) float array."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=float)
        if arr.ndim == 1:
            arr = arr[None, :]
        if arr.ndim != 2:
            raise ValueError(f"expected a (channels, samples) array, got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise ValueError("a signal needs at least one channel")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def length(self) -> int:
        return self.data.shape[1]

    def __getitem__(self, c):
        return self.data[c]

    def __eq__(self, other):
        if not isinstance(other, MultichannelSignal):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))

    __hash__ = None


@dataclass(frozen=True)
class ArSpec:
    """AR process with conjugate pole pairs ``(radius, angle)``.

    Each pair contributes the factor ``(1 - p q)(1 - conj(p) q)`` to the
    denominator, ``p = radius * exp(1j * angle)``, so a pair always yields a
    real second-order section.
    """

    poles: Sequence[tuple[float, float]] = ()
    drive_variance: float = 1.0
    seed: int = 0
    burn_in: int = 0

    def __post_init__(self):
        poles = tuple((float(r), float(t)) for r, t in self.poles)
        for r, _ in poles:
            if not (0.0 <= r < 1.0):
                raise ValueError(f"unstable AR requested: pole radius {r} must satisfy 0 <= r < 1")
        if not self.drive_variance > 0:
            raise ValueError("drive_variance must be positive")
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        object.__setattr__(self, "poles", poles)

    def denominator(self) -> np.ndarray:
        a = np.array([1.0])
        for r, theta in self.poles:
            section = np.array([1.0, -2.0 * r * math.cos(theta), r * r])
            a = np.convolve(a, section)
        return a


@dataclass(frozen=True)
class NoiseSpec:
    snr: float
    seed: int = 0

    def __post_init__(self):
        if not self.snr > 0:
            raise ValueError(f"snr must be > 0 (linear power ratio), got {self.snr}")


def ar_generate(spec: ArSpec, length: int) -> MultichannelSignal:
    """Drive the all-pole filter ``1/A(q)`` with seeded white Gaussian noise.

    Zero initial conditions; ``spec.burn_in`` leading samples are generated
    and dropped.
    """
    if length < 0:
        raise ValueError("length must be >= 0")
    rng = np.random.default_rng(spec.seed)
    drive = math.sqrt(spec.drive_variance) * rng.standard_normal(length + spec.burn_in)
    x = lfilter([1.0], spec.denominator(), drive)
    return MultichannelSignal(x[spec.burn_in:])


def ar_autocorrelation(spec: ArSpec, max_lag: int) -> np.ndarray:
    """Exact autocorrelation ``E[x(n) x(n-k)]`` for k = 0..max_lag (stationary process).

    Solves the Yule-Walker equations for the first ``order + 1`` lags and
    extends them with the AR recursion.
    """
    a = spec.denominator()
    p = len(a) - 1
    n = max(p, max_lag) + 1
    # sum_j a_j r(|k - j|) = sigma^2 delta_k for k = 0..p
    A = np.zeros((p + 1, p + 1))
    for k in range(p + 1):
        for j in range(p + 1):
            A[k, abs(k - j)] += a[j]
    rhs = np.zeros(p + 1)
    rhs[0] = spec.drive_variance
    r = np.zeros(n)
    r[: p + 1] = np.linalg.solve(A, rhs)
    for k in range(p + 1, n):
        r[k] = -sum(a[j] * r[k - j] for j in range(1, p + 1))
    return r[: max_lag + 1]


def add_noise(signal: MultichannelSignal, noise: NoiseSpec) -> MultichannelSignal:
    """White Gaussian measurement noise, per channel at power ``mean(x**2) / snr``."""
    if signal.length == 0:
        raise ValueError("cannot add noise to an empty signal")
    power = np.mean(signal.data**2, axis=1)
    dead = np.flatnonzero(power == 0)
    if dead.size:
        raise ValueError(f"channel {int(dead[0])} is all zero; noise variance power/snr is undefined")
    rng = np.random.default_rng(noise.seed)
    w = rng.standard_normal(signal.data.shape)
    return MultichannelSignal(signal.data + np.sqrt(power / noise.snr)[:, None] * w)


def stack(*signals: MultichannelSignal) -> MultichannelSignal:
    return MultichannelSignal(np.vstack([s.data for s in signals]))


def write_csv(signal: MultichannelSignal, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"ch{c}" for c in range(signal.channels)])
        for row in signal.data.T:
            w.writerow([repr(float(v)) for v in row])


def read_csv(path) -> MultichannelSignal:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0]:
        raise CsvFormatError("missing header row (expected ch0,ch1,...)", row=0)
    header = [h.strip() for h in rows[0]]
    for j, h in enumerate(header):
        if h != f"ch{j}":
            raise CsvFormatError(f"bad header cell {h!r}, expected 'ch{j}'", row=0, column=j)
    C = len(header)
    data = np.empty((len(rows) - 1, C))
    for i, row in enumerate(rows[1:], start=1):
        if len(row) != C:
            raise CsvFormatError(f"expected {C} cells, found {len(row)}", row=i)
        for j, cell in enumerate(row):
            try:
                data[i - 1, j] = float(cell)
            except ValueError:
                raise CsvFormatError(f"non-numeric cell {cell!r}", row=i, column=j) from None
    return MultichannelSignal(data.T.reshape(C, -1))
