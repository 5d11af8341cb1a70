"""Elementary number theory: sieve tables, Chebyshev bracket, W-trick parameters."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import CoverageError, SieveMemoryError

SIEVE_MAGIC = b"GTS1"

# ~18 bytes per entry transiently (bool + int8 + two int64 arrays)
BYTES_PER_ENTRY = 18
DEFAULT_MEMORY_BUDGET = 6 * 1024 ** 3

# Chebyshev bracket constants. The lower one is safe for x >= 17
# (pi(x) > x/log x there); the upper one for every x >= 2, since
# pi(x) * log(x) / x peaks at about 1.2551 near x = 113.
CHEBYSHEV_LOWER = 0.9
CHEBYSHEV_UPPER = 1.26

# Default smallness cutoff is clamped to [2, 4.5]: below 2 the primorial
# degenerates to 1 and no residue class exists, above 4.5 the primorial
# would outgrow the desk-scale sieve range.
W_CUTOFF_MIN = 2.0
W_CUTOFF_CAP = 4.5


@dataclass(frozen=True)
class SieveTables:
    """Primality, Mobius and Euler phi tables covering 0..limit inclusive."""

    limit: int
    is_prime: np.ndarray
    mobius: np.ndarray
    phi: np.ndarray

    def require(self, needed: int) -> None:
        if self.limit < needed:
            raise CoverageError(
                f"sieve covers up to {self.limit}, need {needed}"
            )

    def primes(self, upto: int | None = None) -> np.ndarray:
        upto = self.limit if upto is None else upto
        self.require(upto)
        return np.nonzero(self.is_prime[: upto + 1])[0]

    def mu(self, n: int) -> int:
        if n < 1:
            raise ValueError("Mobius function is defined for n >= 1")
        self.require(n)
        return int(self.mobius[n])

    def euler_phi(self, n: int) -> int:
        if n < 1:
            raise ValueError("Euler phi is defined for n >= 1")
        self.require(n)
        return int(self.phi[n])


def build_sieve(limit: int,
                memory_budget: int = DEFAULT_MEMORY_BUDGET) -> SieveTables:
    """Sieve primality, mu and phi up to limit (inclusive).

    One pass over the primes p <= sqrt(limit) fills everything: each
    number's residual cofactor after dividing out small primes is either
    1 or a single large prime, which fixes the remaining mu sign and phi
    factor. Memory use is checked up front and reported, never silent.
    """
    if limit < 2:
        raise ValueError(f"sieve limit must be >= 2, got {limit}")
    need = (limit + 1) * BYTES_PER_ENTRY
    if need > memory_budget:
        raise SieveMemoryError(
            f"sieve to {limit} needs about {need / 2**30:.2f} GiB, "
            f"budget is {memory_budget / 2**30:.2f} GiB"
        )
    size = limit + 1
    is_prime = np.ones(size, dtype=bool)
    is_prime[:2] = False
    root = math.isqrt(limit)
    for p in range(2, root + 1):
        if is_prime[p]:
            is_prime[p * p:: p] = False

    mobius = np.ones(size, dtype=np.int8)
    mobius[0] = 0
    phi = np.arange(size, dtype=np.int64)
    rem = np.arange(size, dtype=np.int64)
    for p in range(2, root + 1):
        if not is_prime[p]:
            continue
        sl = slice(p, None, p)
        mobius[sl] *= -1
        sq = p * p
        if sq <= limit:
            mobius[sq::sq] = 0
        block = phi[sl]
        block //= p
        block *= p - 1
        r = rem[sl]
        r //= p
        while True:
            again = (r % p) == 0
            if not again.any():
                break
            r[again] //= p
    large = rem > 1
    mobius[large] *= -1
    phi[large] //= rem[large]
    phi[large] *= rem[large] - 1
    del rem
    phi[0] = 0
    return SieveTables(limit, is_prime, mobius, phi)


def chebyshev_check(x: int, sieve: SieveTables | None = None):
    """pi(x) by sieve plus the elementary bracket (c1 x/log x, c2 x/log x)."""
    if x < 2:
        raise ValueError(f"need x >= 2, got {x}")
    if sieve is None:
        sieve = build_sieve(x)
    sieve.require(x)
    pi_x = int(sieve.is_prime[: x + 1].sum())
    lx = math.log(x)
    return pi_x, CHEBYSHEV_LOWER * x / lx, CHEBYSHEV_UPPER * x / lx


_MR_WITNESSES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def is_prime_int(n: int) -> bool:
    """Deterministic Miller-Rabin, exact for all n < 3.3e24."""
    if n < 2:
        return False
    for p in _MR_WITNESSES:
        if n % p == 0:
            return n == p
    d = n - 1
    r = 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in _MR_WITNESSES:
        x = pow(a, d, n)
        if x == 1 or x == n - 1:
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def next_prime_at_least(n: int) -> int:
    """Smallest prime >= n (n >= 2)."""
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    if n == 2:
        return 2
    candidate = n if n % 2 == 1 else n + 1
    while not is_prime_int(candidate):
        candidate += 2
    return candidate


@dataclass(frozen=True)
class WTrickParams:
    """Parameters of the small-prime reduction n -> W n + b."""

    k: int
    N: int
    w: float
    W: int
    alpha: float
    R: float
    b: int

    def __post_init__(self):
        if math.gcd(self.b, self.W) != 1:
            raise ValueError(f"b={self.b} must be coprime to W={self.W}")
        if not (1 <= self.b < self.W):
            raise ValueError(f"b={self.b} must lie in [1, W={self.W})")

    @property
    def coverage(self) -> int:
        """Largest integer the sieve must reach: W*N + W."""
        return self.W * self.N + self.W


def default_smallness_cutoff(N: int) -> float:
    return min(max(math.log(math.log(N)), W_CUTOFF_MIN), W_CUTOFF_CAP)


def primorial_upto(w: float) -> int:
    prod = 1
    p = 2
    while p <= w:
        if is_prime_int(p):
            prod *= p
        p += 1
    return prod


def plan_wtrick(n_target: int, alpha: float, w_override: float | None = None):
    """Resolve (N, w, W, R) before a residue class is chosen."""
    if n_target < 100:
        raise ValueError(f"need n_target >= 100, got {n_target}")
    if not (0.0 < alpha <= 0.25):
        raise ValueError(f"alpha must lie in (0, 1/4], got {alpha}")
    N = next_prime_at_least(n_target)
    w = float(w_override) if w_override is not None else default_smallness_cutoff(N)
    if w < 2:
        raise ValueError(f"cutoff w={w} leaves no small primes; need w >= 2")
    W = primorial_upto(w)
    R = float(N) ** alpha
    return N, w, W, R


def mean_prime_log_weight(N: int, W: int, R: float, b: int,
                          sieve: SieveTables) -> float:
    """E over n in [0,N) of phi(W)/W * log(Wn+b) on primes Wn+b >= R."""
    top = W * (N - 1) + b
    sieve.require(top)
    points = W * np.arange(N, dtype=np.int64) + b
    keep = sieve.is_prime[points] & (points >= R)
    if not keep.any():
        return 0.0
    total = float(np.log(points[keep].astype(np.float64)).sum())
    return (sieve.phi[W] / W) * total / N


def choose_residue(N: int, W: int, R: float, sieve: SieveTables) -> int:
    """Residue b in [1, W), coprime to W, maximizing the prime-log mean.

    Ties break to the smallest b.
    """
    best_b = None
    best_mean = -math.inf
    for b in range(1, W):
        if math.gcd(b, W) != 1:
            continue
        mean = mean_prime_log_weight(N, W, R, b, sieve)
        if mean > best_mean:
            best_b, best_mean = b, mean
    if best_b is None:
        raise ValueError(f"no residue coprime to W={W}")
    return best_b


def make_wtrick_params(k: int, n_target: int, alpha: float,
                       w_override: float | None = None,
                       sieve: SieveTables | None = None) -> WTrickParams:
    """Full parameter set: N prime, cutoff w, primorial W, R = N^alpha, residue b."""
    if k < 1:
        raise ValueError(f"need k >= 1, got {k}")
    N, w, W, R = plan_wtrick(n_target, alpha, w_override)
    coverage = W * N + W
    if sieve is None:
        sieve = build_sieve(coverage)
    sieve.require(coverage)
    b = choose_residue(N, W, R, sieve)
    return WTrickParams(k=k, N=N, w=w, W=W, alpha=alpha, R=R, b=b)


def save_sieve(sieve: SieveTables, path) -> None:
    """Disk cache: magic GTS1, u64 limit, packed primality bits, mu bytes, phi u64.

    Primality is packed little-endian both across bytes and within each
    byte (bit i of byte j is entry 8j + i).
    """
    with open(path, "wb") as fh:
        fh.write(SIEVE_MAGIC)
        fh.write(struct.pack("<Q", sieve.limit))
        fh.write(np.packbits(sieve.is_prime, bitorder="little").tobytes())
        fh.write(sieve.mobius.astype(np.int8).tobytes())
        fh.write(sieve.phi.astype("<u8").tobytes())


def load_sieve(path) -> SieveTables:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != SIEVE_MAGIC:
            raise ValueError(f"bad magic {magic!r} in {path}")
        (limit,) = struct.unpack("<Q", fh.read(8))
        size = int(limit) + 1
        nbytes = (size + 7) // 8
        bits = np.frombuffer(fh.read(nbytes), dtype=np.uint8)
        is_prime = np.unpackbits(bits, bitorder="little")[:size].astype(bool)
        mobius = np.frombuffer(fh.read(size), dtype=np.int8).copy()
        phi = np.frombuffer(fh.read(8 * size), dtype="<u8").astype(np.int64)
    return SieveTables(int(limit), is_prime, mobius, phi)
