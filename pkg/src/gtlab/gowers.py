"""Uniformity norms of every order, dual functions, and the cube inequality.

The order-d norm of f is the 2^d-th root of the average of the product
of f over the vertices of a d-dimensional combinatorial cube

    cube mean = E_{x, t_1..t_d} prod_{omega in {0,1}^d} f(x + omega . t)

Three independent evaluation routes are provided and cross-checked in
the test suite: the closed cube formula (direct), the one-dimensional
recursion through products f * f_t (recursive), and for order 2 the
fourth-power sum of the Fourier coefficients (fft). A seeded Monte
Carlo estimator covers sizes beyond the exact-operation budget.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import InfeasibleSizeError
from .zn_core import GridFunction, _czt, dft, expectation

# Ceiling on inner operations for any exact cube evaluation.
EXACT_OP_BUDGET = 10 ** 9
# Exact evaluation fans out 2^d factors per cube; orders above 5 must sample.
MAX_EXACT_ORDER = 5
# Cube averages are sums of squares analytically; anything below this is a bug.
NEGATIVE_NOISE_FLOOR = -1e-12


def _require_same_modulus(fs):
    moduli = {f.modulus for f in fs}
    if len(moduli) != 1:
        raise ValueError(f"all functions must share one modulus, got {moduli}")
    return moduli.pop()


def _check_direct_budget(N: int, d: int) -> None:
    if d < 1:
        raise ValueError(f"norm order must be >= 1, got {d}")
    if d > MAX_EXACT_ORDER:
        raise InfeasibleSizeError(
            f"exact evaluation is capped at order {MAX_EXACT_ORDER}, got {d}"
        )
    ops = (N ** (d + 1)) * (2 ** d)
    if ops > EXACT_OP_BUDGET:
        raise InfeasibleSizeError(
            f"direct order-{d} cube at N={N} needs ~{ops:.2e} operations "
            f"(budget {EXACT_OP_BUDGET:.0e}); use the sampled estimator"
        )


def _root_of_cube_mean(mean: float, d: int) -> float:
    """2^d-th root with the tiny-negative clamp.

    The cube mean is a sum of squares analytically; floating point can
    dip just below zero near vanishing norms. Dips beyond the noise
    floor indicate a genuine bug and abort.
    """
    if mean < 0.0:
        if mean < NEGATIVE_NOISE_FLOOR:
            raise ArithmeticError(
                f"cube mean {mean} negative beyond numerical noise (order {d})"
            )
        mean = 0.0
    return mean ** (1.0 / (1 << d))


def _direct_cube_mean(vertex_values, d: int) -> float:
    """Literal enumeration of the cube average.

    vertex_values maps each vertex bitmask (bit i is omega_{i+1}) to its
    value vector. The first d-1 shift coordinates are enumerated in an
    outer loop; the last coordinate and the base point are materialized
    as a full plane so the summation really performs N^{d+1} work.
    """
    n = vertex_values[0].shape[0]
    ar = np.arange(n)
    if d == 1:
        low, high = vertex_values[0], vertex_values[1]
        total = 0.0
        for t in range(n):
            total += float((low * np.roll(high, -t)).sum())
        return total / n ** 2

    idx = (ar[:, None] + ar[None, :]) % n
    total = 0.0
    top_bit = 1 << (d - 1)
    low_masks = [m for m in range(1 << d) if not m & top_bit]
    high_masks = [m for m in range(1 << d) if m & top_bit]
    for t_outer in product(range(n), repeat=d - 1):
        offsets = {}
        for mask in range(1 << (d - 1)):
            s = 0
            for i in range(d - 1):
                if mask & (1 << i):
                    s += t_outer[i]
            offsets[mask] = s % n
        low = np.ones(n)
        for mask in low_masks:
            low = low * np.roll(vertex_values[mask], -offsets[mask])
        high = np.ones(n)
        for mask in high_masks:
            high = high * np.roll(vertex_values[mask], -offsets[mask & ~top_bit])
        plane = low[None, :] * high[idx]
        total += float(plane.sum())
    return total / n ** (d + 1)


def gowers_norm_direct(f: GridFunction, d: int) -> float:
    """Order-d norm straight from the closed cube formula."""
    _check_direct_budget(f.modulus, d)
    vertex_values = [f.values] * (1 << d)
    mean = _direct_cube_mean(vertex_values, d)
    return _root_of_cube_mean(mean, d)


def _recursive_cube_power(vals: np.ndarray, d: int) -> float:
    """norm(f)^(2^d) through the recursion over products f * f_t."""
    if d == 1:
        m = float(vals.mean())
        return m * m
    n = vals.shape[0]
    total = 0.0
    for t in range(n):
        total += _recursive_cube_power(vals * np.roll(vals, -t), d - 1)
    return total / n


def gowers_norm_recursive(f: GridFunction, d: int) -> float:
    """Order-d norm through the one-dimensional recursion."""
    if d < 1:
        raise ValueError(f"norm order must be >= 1, got {d}")
    if d == 1:
        return abs(expectation(f))
    n = f.modulus
    if n ** d > EXACT_OP_BUDGET:
        raise InfeasibleSizeError(
            f"recursive order-{d} norm at N={n} exceeds the exact budget"
        )
    return _root_of_cube_mean(_recursive_cube_power(f.values, d), d)


def gowers_norm_u2_fft(f: GridFunction) -> float:
    """Order-2 norm as the l^4 norm of the Fourier coefficients."""
    coeffs = dft(f).coefficients
    return float((np.abs(coeffs) ** 4).sum()) ** 0.25


def gowers_norm_sampled(f: GridFunction, d: int, samples: int,
                        seed: int) -> tuple[float, float]:
    """Unbiased Monte Carlo estimate of norm(f)^(2^d) with standard error.

    Uniform (x, t) draws, deterministic per seed. The returned estimate
    is of the 2^d-power mean; take max(estimate, 0)^(1/2^d) for a norm.
    """
    if d < 1:
        raise ValueError(f"norm order must be >= 1, got {d}")
    if samples < 1000:
        raise ValueError(f"need at least 1000 samples, got {samples}")
    n = f.modulus
    vals = f.values
    rng = np.random.default_rng(seed)
    xs = rng.integers(0, n, size=samples)
    ts = rng.integers(0, n, size=(samples, d))
    prod_vals = np.ones(samples)
    for mask in range(1 << d):
        omega = np.array([(mask >> i) & 1 for i in range(d)], dtype=np.int64)
        s = (xs + ts @ omega) % n
        prod_vals = prod_vals * vals[s]
    estimate = float(prod_vals.mean())
    stderr = float(prod_vals.std(ddof=1) / np.sqrt(samples))
    return estimate, stderr


def gowers_norm(f: GridFunction, d: int, samples: int = 200_000,
                seed: int = 0) -> float:
    """Best evaluation route for the given size.

    Order 1 is |E(f)|, order 2 goes through the spectrum at any size,
    order 3 uses the recursion with a spectral base while it stays
    exact-feasible, and everything else falls back to sampling.
    """
    if d == 1:
        return abs(expectation(f))
    if d == 2:
        return gowers_norm_u2_fft(f)
    n = f.modulus
    if d == 3 and n <= 2048:
        vals = f.values
        total = 0.0
        for t in range(n):
            g = (vals * np.roll(vals, -t)).astype(np.complex128)
            coeffs = _czt(g, -1) / n
            total += float((np.abs(coeffs) ** 4).sum())
        return _root_of_cube_mean(total / n, 3)
    if (n ** (d + 1)) * (2 ** d) <= EXACT_OP_BUDGET and d <= MAX_EXACT_ORDER:
        return gowers_norm_direct(f, d)
    estimate, _ = gowers_norm_sampled(f, d, samples, seed)
    return max(estimate, 0.0) ** (1.0 / (1 << d))


def dual_function(f: GridFunction, k: int, samples: int | None = None,
                  seed: int = 0) -> GridFunction:
    """The order-k dual: Df(x) = E_t prod over nonzero vertices of f(x + omega . t).

    Exact mode enumerates the first k-1 shift coordinates and averages
    the last one in closed form (the innermost factor group is a full
    cube product whose shift average does not depend on x). Beyond the
    exact budget, pass a sample count for a per-point Monte Carlo
    average over shared t draws, deterministic per seed.
    """
    if k < 1:
        raise ValueError(f"need k >= 1, got {k}")
    n = f.modulus
    vals = f.values
    if samples is None:
        ops = (n ** k) * (2 ** k)
        if ops > EXACT_OP_BUDGET:
            raise InfeasibleSizeError(
                f"exact dual at N={n}, k={k} needs ~{ops:.2e} operations; "
                f"pass a sample count instead"
            )
        acc = np.zeros(n)
        for t_outer in product(range(n), repeat=k - 1):
            nonzero_prod = np.ones(n)
            for mask in range(1, 1 << (k - 1)):
                s = 0
                for i in range(k - 1):
                    if mask & (1 << i):
                        s += t_outer[i]
                nonzero_prod = nonzero_prod * np.roll(vals, -(s % n))
            cube_mean = float((vals * nonzero_prod).mean())
            acc += nonzero_prod * cube_mean
        return GridFunction(n, acc / n ** (k - 1))
    if samples < 1:
        raise ValueError(f"need a positive sample count, got {samples}")
    rng = np.random.default_rng(seed)
    acc = np.zeros(n)
    for _ in range(samples):
        t = rng.integers(0, n, size=k)
        prod_vals = np.ones(n)
        for mask in range(1, 1 << k):
            s = 0
            for i in range(k):
                if mask & (1 << i):
                    s += int(t[i])
            prod_vals = prod_vals * np.roll(vals, -(s % n))
        acc += prod_vals
    return GridFunction(n, acc / samples)


@dataclass(frozen=True)
class CubeInequalityCheck:
    lhs: float
    rhs: float
    holds: bool


def csg_check(fs, d: int, tolerance: float = 1e-9) -> CubeInequalityCheck:
    """Cauchy-Schwarz cube inequality with one function per vertex.

    fs lists 2^d functions ordered by vertex bitmask (bit i is the i-th
    cube coordinate). lhs is the absolute mixed cube mean, rhs the
    product of the individual order-d norms.
    """
    if len(fs) != (1 << d):
        raise ValueError(f"need {1 << d} functions for order {d}, got {len(fs)}")
    n = _require_same_modulus(fs)
    _check_direct_budget(n, d)
    lhs = abs(_direct_cube_mean([f.values for f in fs], d))
    rhs = 1.0
    for f in fs:
        rhs *= gowers_norm_recursive(f, d)
    return CubeInequalityCheck(lhs=lhs, rhs=rhs, holds=lhs <= rhs + tolerance)
