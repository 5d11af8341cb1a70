"""Dense real-valued functions on Z_N: expectations, shifts, transforms.

All expectations are normalized averages over Z_N, never raw sums, so
every downstream quantity stays O(1) as N grows. Functions are real;
complex numbers appear only inside Spectrum. The discrete transform is
a chirp (Bluestein) reduction to a power-of-two convolution, so any
modulus works, prime moduli included.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

GRID_MAGIC = b"GTF1"


class ModulusMismatchError(ValueError):
    """Two grid functions live on different Z_N."""


@dataclass(frozen=True)
class GridFunction:
    """A function Z_N -> R stored as a dense float64 vector.

    Instances are immutable: the backing array is copied on construction
    and marked read-only, so every operation on them is pure.
    """

    modulus: int
    values: np.ndarray

    def __post_init__(self):
        if self.modulus < 1:
            raise ValueError(f"modulus must be positive, got {self.modulus}")
        vals = np.array(self.values, dtype=np.float64, copy=True).reshape(-1)
        if vals.shape[0] != self.modulus:
            raise ValueError(
                f"expected {self.modulus} values, got {vals.shape[0]}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, modulus: int, value: float) -> "GridFunction":
        return cls(modulus, np.full(modulus, float(value)))

    @classmethod
    def delta(cls, modulus: int, point: int = 0) -> "GridFunction":
        vals = np.zeros(modulus)
        vals[point % modulus] = 1.0
        return cls(modulus, vals)

    @classmethod
    def indicator(cls, modulus: int, points) -> "GridFunction":
        vals = np.zeros(modulus)
        vals[np.asarray(points, dtype=np.int64) % modulus] = 1.0
        return cls(modulus, vals)

    def _coerce(self, other):
        if isinstance(other, GridFunction):
            if other.modulus != self.modulus:
                raise ModulusMismatchError(
                    f"moduli differ: {self.modulus} vs {other.modulus}"
                )
            return other.values
        return float(other)

    def __add__(self, other):
        return GridFunction(self.modulus, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return GridFunction(self.modulus, self.values - self._coerce(other))

    def __rsub__(self, other):
        return GridFunction(self.modulus, self._coerce(other) - self.values)

    def __mul__(self, other):
        return GridFunction(self.modulus, self.values * self._coerce(other))

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(self.modulus, -self.values)


def random_gridfunction(modulus: int, seed: int, low: float = -1.0,
                        high: float = 1.0) -> GridFunction:
    """Uniform i.i.d. values in [low, high), reproducible per seed."""
    rng = np.random.default_rng(seed)
    return GridFunction(modulus, rng.uniform(low, high, modulus))


def expectation(f: GridFunction) -> float:
    """E(f | Z_N), the arithmetic mean of the values."""
    return float(f.values.mean())


def shift(f: GridFunction, t: int) -> GridFunction:
    """The translate x -> f(x + t), index arithmetic mod N."""
    return GridFunction(f.modulus, np.roll(f.values, -(int(t) % f.modulus)))


def inner(f: GridFunction, g: GridFunction) -> float:
    """<f, g> = E(f g | Z_N)."""
    if f.modulus != g.modulus:
        raise ModulusMismatchError(
            f"moduli differ: {f.modulus} vs {g.modulus}"
        )
    return float((f.values * g.values).mean())


@dataclass(frozen=True)
class Spectrum:
    """Normalized Fourier coefficients: coefficient(xi) = E_x f(x) e(-x xi / N)."""

    modulus: int
    coefficients: np.ndarray

    def __post_init__(self):
        coeffs = np.array(self.coefficients, dtype=np.complex128,
                          copy=True).reshape(-1)
        if coeffs.shape[0] != self.modulus:
            raise ValueError(
                f"expected {self.modulus} coefficients, got {coeffs.shape[0]}"
            )
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("spectrum coefficients must be finite")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coefficients", coeffs)


def _next_pow2(n: int) -> int:
    return 1 << (n - 1).bit_length()


def _czt(x: np.ndarray, sign: int) -> np.ndarray:
    """Length-N transform X_k = sum_m x_m exp(sign 2 pi i m k / N).

    Power-of-two lengths go straight to the radix-2 FFT. Every other
    length is reduced to a power-of-two cyclic convolution with chirp
    factors exp(sign pi i m^2 / N). The chirp phase is built from
    m^2 mod 2N in exact integer arithmetic, which keeps the argument
    reduction lossless for any N of interest.
    """
    n = x.shape[0]
    if n == 1:
        return x.astype(np.complex128)
    if n & (n - 1) == 0:
        return np.fft.fft(x) if sign < 0 else np.fft.ifft(x) * n
    m = np.arange(n, dtype=np.int64)
    half_phase = (m * m) % (2 * n)
    w = np.exp((1j * np.pi * sign / n) * half_phase)
    a = x * w
    size = _next_pow2(2 * n - 1)
    b = np.zeros(size, dtype=np.complex128)
    b[:n] = np.conjugate(w)
    b[size - n + 1:] = np.conjugate(w[1:][::-1])
    conv = np.fft.ifft(np.fft.fft(a, size) * np.fft.fft(b))
    return w * conv[:n]


def dft(f: GridFunction) -> Spectrum:
    """Spectrum of f, coefficient(xi) = E_x f(x) e(-x xi / N)."""
    coeffs = _czt(f.values.astype(np.complex128), -1) / f.modulus
    return Spectrum(f.modulus, coeffs)


def idft(s: Spectrum) -> GridFunction:
    """Inverse transform; recovers the original real function."""
    vals = _czt(np.asarray(s.coefficients, dtype=np.complex128), +1)
    return GridFunction(s.modulus, vals.real)


def autocorrelation(f: GridFunction) -> GridFunction:
    """C(h) = E_x f(x) f(x+h), computed through the spectrum in O(N log N).

    By the correlation theorem C(h) = sum_xi |fhat(xi)|^2 e(h xi / N)
    with the normalized coefficients used here.
    """
    power = np.abs(dft(f).coefficients) ** 2
    vals = _czt(power.astype(np.complex128), +1)
    return GridFunction(f.modulus, vals.real)


def save_gridfunction(f: GridFunction, path) -> None:
    """Binary cache: magic GTF1, u64 little-endian N, N little-endian f64."""
    with open(path, "wb") as fh:
        fh.write(GRID_MAGIC)
        fh.write(struct.pack("<Q", f.modulus))
        fh.write(f.values.astype("<f8").tobytes())


def load_gridfunction(path) -> GridFunction:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != GRID_MAGIC:
            raise ValueError(f"bad magic {magic!r} in {path}")
        (modulus,) = struct.unpack("<Q", fh.read(8))
        raw = fh.read(8 * modulus)
        if len(raw) != 8 * modulus:
            raise ValueError(f"truncated grid file {path}")
        vals = np.frombuffer(raw, dtype="<f8")
    return GridFunction(int(modulus), vals)
