"""Progression expectations, interval selection, lifting, and prime AP search."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import arith
from .errors import InfeasibleSizeError, LiftRejected
from .gowers import gowers_norm
from .zn_core import GridFunction

AP_OP_BUDGET = 10 ** 10
VON_NEUMANN_SLACK = 0.2


@dataclass(frozen=True)
class APWitness:
    """An arithmetic progression a, a+t, ..., a+kt with positive difference."""

    start: int
    diff: int
    length: int
    terms: tuple

    def __post_init__(self):
        if self.length < 2:
            raise ValueError("a progression needs at least two terms")
        if self.diff <= 0:
            raise ValueError("difference must be positive")
        expected = tuple(self.start + i * self.diff for i in range(self.length))
        if tuple(self.terms) != expected:
            raise ValueError(f"terms {self.terms} do not match {expected}")


def _check_family(fs, k):
    if k is None:
        k = len(fs) - 1
    if len(fs) != k + 1 or k < 1:
        raise ValueError(f"need k+1 functions for k={k}, got {len(fs)}")
    moduli = {f.modulus for f in fs}
    if len(moduli) != 1:
        raise ValueError(f"all functions must share one modulus, got {moduli}")
    return moduli.pop(), k


def ap_expectation(fs, k: int | None = None) -> float:
    """E over (x, t) in Z_N^2 of f_0(x) f_1(x+t) ... f_k(x+kt), exactly.

    This is the functional positivity rests on, so there is no sampled
    mode here; the N^2 double average is always evaluated in full.
    """
    n, k = _check_family(fs, k)
    if n * n * k > AP_OP_BUDGET:
        raise InfeasibleSizeError(
            f"progression expectation at N={n}, k={k} exceeds the budget"
        )
    values = [f.values for f in fs]
    total = 0.0
    for t in range(n):
        prod_vals = values[0]
        for j in range(1, k + 1):
            prod_vals = prod_vals * np.roll(values[j], -(j * t) % n)
        total += float(prod_vals.sum())
    return total / (n * n)


def diagonal_contribution(fs, k: int | None = None) -> float:
    """The t = 0 slice of the double average: (1/N^2) sum_x prod_j f_j(x)."""
    n, k = _check_family(fs, k)
    prod_vals = fs[0].values
    for j in range(1, k + 1):
        prod_vals = prod_vals * fs[j].values
    return float(prod_vals.sum()) / (n * n)


@dataclass(frozen=True)
class VonNeumannCheck:
    lhs: float
    bound: float
    holds: bool
    min_norm: float
    slack: float


def von_neumann_check(fs, nu: GridFunction, k: int | None = None,
                      slack: float = VON_NEUMANN_SLACK) -> VonNeumannCheck:
    """Test |AP expectation| <= 2^(k+1) min_j norm_k(f_j) + slack.

    Requires |f_j| <= 1 + nu pointwise, the admissibility hypothesis of
    the inequality. The slack is the finite-N budget standing in for
    the vanishing error term; lhs, bound and slack are all reported so
    a violation is attributable.
    """
    n, k = _check_family(fs, k)
    if nu.modulus != n:
        raise ValueError("weight modulus differs from the family's")
    envelope = 1.0 + nu.values
    for j, f in enumerate(fs):
        if np.any(np.abs(f.values) > envelope):
            raise ValueError(f"function {j} violates |f| <= 1 + nu")
    lhs = abs(ap_expectation(fs, k))
    min_norm = min(gowers_norm(f, k) for f in fs)
    bound = 2 ** (k + 1) * min_norm + slack
    return VonNeumannCheck(lhs=lhs, bound=bound, holds=lhs <= bound,
                           min_norm=min_norm, slack=slack)


def select_interval(f: GridFunction, delta: float) -> tuple[int, int]:
    """A third of [0, N) on which the restricted mean is at least delta/3.

    [0, N) is cut into three near-equal intervals (each shorter than
    N/2 once N >= 3); by pigeonhole the best one carries a third of the
    mean. Ties go to the leftmost interval.
    """
    n = f.modulus
    if float(f.values.mean()) < delta:
        raise ValueError(
            f"mean {float(f.values.mean())} is below the required {delta}"
        )
    bounds = [0, n // 3, (2 * n) // 3, n]
    best = None
    best_sum = -math.inf
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        seg = float(f.values[lo:hi].sum())
        if seg > best_sum:
            best, best_sum = (lo, hi), seg
    return best


def lift_ap(x: int, t: int, k: int, modulus: int,
            interval: tuple[int, int]) -> APWitness:
    """Lift a mod-N progression inside a short interval to the integers.

    The residues x + j t mod N must all fall in the interval, whose
    length must stay below N/2; then the representative difference of
    absolute value below N/2 is unique and the residues themselves form
    a genuine integer progression. The witness is returned in ascending
    order. Degenerate or straddling inputs are rejected with a reason.
    """
    lo, hi = interval
    if not (0 <= lo < hi <= modulus):
        raise ValueError(f"malformed interval [{lo}, {hi}) in Z_{modulus}")
    if (hi - lo) * 2 >= modulus:
        raise ValueError(
            f"interval length {hi - lo} must be below N/2 = {modulus / 2}"
        )
    if k < 1:
        raise ValueError(f"need k >= 1, got {k}")
    t = int(t) % modulus
    if t == 0:
        raise LiftRejected("difference is 0 mod N")
    residues = [(int(x) + j * t) % modulus for j in range(k + 1)]
    for r in residues:
        if not (lo <= r < hi):
            raise LiftRejected(f"residue {r} falls outside [{lo}, {hi})")
    t_signed = t if 2 * t < modulus else t - modulus
    if 2 * abs(t_signed) >= modulus:
        raise LiftRejected(f"difference {t} has no representative below N/2")
    for j in range(k):
        if residues[j + 1] - residues[j] != t_signed:
            raise AssertionError("short interval failed to force the lift")
    if t_signed > 0:
        terms = tuple(residues)
        return APWitness(start=terms[0], diff=t_signed, length=k + 1,
                         terms=terms)
    terms = tuple(reversed(residues))
    return APWitness(start=terms[0], diff=-t_signed, length=k + 1, terms=terms)


def find_prime_aps(limit: int, length: int, mode: str = "first",
                   sieve: arith.SieveTables | None = None):
    """Search arithmetic progressions of primes up to limit.

    mode "first" returns the lexicographically smallest (start, diff)
    witness, or None when no progression of the requested length exists
    below the limit. mode "count" returns the number of (start, diff)
    pairs with diff >= 1 whose terms are all prime and at most limit.
    """
    if length < 2:
        raise ValueError(f"need length >= 2, got {length}")
    if mode not in ("first", "count"):
        raise ValueError(f"mode must be 'first' or 'count', got {mode!r}")
    if sieve is None:
        sieve = arith.build_sieve(limit)
    sieve.require(limit)
    k = length - 1
    is_prime = sieve.is_prime
    starts = np.nonzero(is_prime[: limit + 1])[0]
    if mode == "first":
        for a in starts:
            a = int(a)
            for t in range(1, (limit - a) // k + 1):
                if all(is_prime[a + j * t] for j in range(1, k + 1)):
                    terms = tuple(a + j * t for j in range(k + 1))
                    return APWitness(start=a, diff=t, length=length,
                                     terms=terms)
        return None
    total = 0
    for a in starts:
        a = int(a)
        t_max = (limit - a) // k
        if t_max < 1:
            continue
        ts = np.arange(1, t_max + 1, dtype=np.int64)
        ok = np.ones(t_max, dtype=bool)
        for j in range(1, k + 1):
            ok &= is_prime[a + j * ts]
        total += int(ok.sum())
    return total
