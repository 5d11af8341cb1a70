"""The pseudorandom prime weight and its numerical verifiers.

The construction restricts to the progression W n + b (W a primorial of
small primes, b coprime to W), forms the smoothly truncated divisor sum

    lam(m) = sum over d | m of mu(d) * chi(log d / log R),   R = N^alpha,

and squares and rescales it into the weight

    nu(n) = phi(W)/W * log R * lam(W n + b)^2.

The prime-supported companion f carries phi(W)/W * log(W n + b) on the
primes W n + b >= R. The verifiers below test, at finite N, the three
properties the weight is designed for: mean close to 1 (with an
independent divisor-pair oracle for the same mean), the linear-forms
condition, and the correlation condition with a constructive bound
tau(h) = max(pair correlation, 1). Every verifier emits measured
values so trends across several N can be reported; none of them claims
an asymptotic statement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import integrate

from . import arith
from .errors import InfeasibleSizeError, QuadratureError
from .zn_core import GridFunction, autocorrelation

# Family-shape ceilings for the linear-forms condition. These are
# engineering defaults sized for the AP families used here, not derived
# quantities.
MAX_FORMS = 9
MAX_VARIABLES = 5
ENTRY_BOUND = 10
MAX_CORRELATION_ORDER = 6

EXHAUSTIVE_FORMS_LIMIT = 10 ** 7
ORACLE_PAIR_BUDGET = 10 ** 7


@dataclass(frozen=True)
class SmoothCutoff:
    """The normalized bump chi(x) = c exp(-1/(1-x^2)) on (-1, 1).

    c is fixed so that the integral of chi'(x)^2 over [0, inf) equals 1,
    which is exactly the normalization that drives the weight's mean to
    1 in the large-N limit.
    """

    normalization: float

    def chi(self, x):
        arr = np.asarray(x, dtype=np.float64)
        out = np.zeros_like(arr)
        inside = np.abs(arr) < 1.0
        xi = arr[inside]
        out[inside] = self.normalization * np.exp(-1.0 / (1.0 - xi * xi))
        if arr.ndim == 0:
            return float(out)
        return out

    def chi_prime(self, x):
        arr = np.asarray(x, dtype=np.float64)
        out = np.zeros_like(arr)
        inside = np.abs(arr) < 1.0
        xi = arr[inside]
        u = 1.0 - xi * xi
        out[inside] = (
            self.normalization * np.exp(-1.0 / u) * (-2.0 * xi) / (u * u)
        )
        if arr.ndim == 0:
            return float(out)
        return out

    @property
    def at_zero(self) -> float:
        return self.normalization * math.exp(-1.0)


def _bump_derivative_squared(x):
    u = 1.0 - x * x
    return 4.0 * x * x * np.exp(-2.0 / u) / u ** 4


def make_cutoff() -> SmoothCutoff:
    """Normalize the bump by adaptive quadrature of the derivative square."""
    integral, err = integrate.quad(
        _bump_derivative_squared, 0.0, 1.0, epsabs=1e-13, epsrel=1e-13, limit=200
    )
    if not math.isfinite(integral) or integral <= 0 or err > 1e-9:
        raise QuadratureError(
            f"cutoff normalization failed: integral={integral}, err={err}"
        )
    return SmoothCutoff(normalization=1.0 / math.sqrt(integral))


@dataclass(frozen=True)
class WeightRecipe:
    """Everything needed to build the weight: parameters, cutoff, sieve."""

    wtrick: arith.WTrickParams
    cutoff: SmoothCutoff
    k: int
    sieve: arith.SieveTables

    def __post_init__(self):
        self.sieve.require(self.wtrick.coverage)
        if self.wtrick.R <= self.wtrick.W:
            raise ValueError(
                f"R = N^alpha = {self.wtrick.R:.4f} must exceed the primorial "
                f"W = {self.wtrick.W}; raise alpha or lower the cutoff w"
            )


def make_recipe(k: int, n_target: int, alpha: float = 0.1,
                w_override: float | None = None,
                sieve: arith.SieveTables | None = None,
                cutoff: SmoothCutoff | None = None) -> WeightRecipe:
    if k < 1:
        raise ValueError(f"need k >= 1, got {k}")
    N, w, W, R = arith.plan_wtrick(n_target, alpha, w_override)
    coverage = W * N + W
    if sieve is None:
        sieve = arith.build_sieve(coverage)
    sieve.require(coverage)
    b = arith.choose_residue(N, W, R, sieve)
    params = arith.WTrickParams(k=k, N=N, w=w, W=W, alpha=alpha, R=R, b=b)
    if cutoff is None:
        cutoff = make_cutoff()
    return WeightRecipe(wtrick=params, cutoff=cutoff, k=k, sieve=sieve)


def lambda_table(recipe: WeightRecipe) -> np.ndarray:
    """lam(W n + b) for n in [0, N), built by sieving over the divisors.

    For each squarefree d below the truncation R the congruence
    W n = -b (mod d) marks the points it divides; d sharing a prime
    with W can never divide W n + b because b is coprime to W. This is
    O(R log R + sum over d of N/d) instead of per-point divisor loops.
    """
    p = recipe.wtrick
    sieve = recipe.sieve
    sieve.require(p.coverage)
    log_r = math.log(p.R)
    table = np.zeros(p.N)
    top = int(math.floor(p.R))
    for d in range(1, top + 1):
        mu = int(sieve.mobius[d])
        if mu == 0:
            continue
        if math.gcd(d, p.W) != 1:
            continue
        chi_val = recipe.cutoff.chi(math.log(d) / log_r)
        if chi_val == 0.0:
            continue
        start = (-p.b * pow(p.W, -1, d)) % d if d > 1 else 0
        table[start::d] += mu * chi_val
    return table


def build_nu(recipe: WeightRecipe,
             lam: np.ndarray | None = None) -> GridFunction:
    """nu(n) = phi(W)/W * log R * lam(W n + b)^2, nonnegative by construction."""
    p = recipe.wtrick
    if lam is None:
        lam = lambda_table(recipe)
    factor = (recipe.sieve.phi[p.W] / p.W) * math.log(p.R)
    return GridFunction(p.N, factor * lam * lam)


def build_f(recipe: WeightRecipe) -> GridFunction:
    """phi(W)/W * log(W n + b) on primes W n + b >= R, zero elsewhere."""
    p = recipe.wtrick
    sieve = recipe.sieve
    top = p.W * (p.N - 1) + p.b
    sieve.require(top)
    points = p.W * np.arange(p.N, dtype=np.int64) + p.b
    keep = sieve.is_prime[points] & (points >= p.R)
    vals = np.where(keep, (sieve.phi[p.W] / p.W) * np.log(points), 0.0)
    return GridFunction(p.N, vals)


def domination_constant(recipe: WeightRecipe,
                        f: GridFunction | None = None,
                        nu: GridFunction | None = None) -> float:
    """Smallest c with f <= c * nu pointwise, as a literal float inequality.

    On the support of f the weight is bounded away from zero (there the
    divisor sum collapses to chi(0)), so the ratio is finite. The max
    ratio is nudged up by ulps until c * nu really dominates f in
    floating point.
    """
    if f is None:
        f = build_f(recipe)
    if nu is None:
        nu = build_nu(recipe)
    support = f.values > 0
    if not support.any():
        return 0.0
    if np.any(nu.values[support] == 0.0):
        raise ArithmeticError(
            "weight vanished on a prime point; the divisor sum should "
            "equal chi(0) there"
        )
    c = float(np.max(f.values[support] / nu.values[support]))
    while np.any(f.values > c * nu.values):
        c = math.nextafter(c, math.inf)
    return c


def mean_nu_divisor_oracle(recipe: WeightRecipe,
                           pair_budget: int = ORACLE_PAIR_BUDGET) -> float:
    """Independent estimate of E(nu) from the divisor-pair expansion.

    Expanding lam^2 and averaging the divisibility indicators gives

        E(nu) ~ C * sum over squarefree d, d' < R of
                mu(d) mu(d') chi(log d / log R) chi(log d' / log R) * e(d, d')

    with C = phi(W)/W * log R, where e(d, d') is 0 when any prime <= w
    divides lcm(d, d') and 1/lcm(d, d') otherwise. The wraparound error
    dropped here is R^2/N * O(1). The pair sum is folded over d <-> d'
    symmetry.
    """
    p = recipe.wtrick
    sieve = recipe.sieve
    log_r = math.log(p.R)
    ds = []
    weights = []
    for d in range(1, int(math.floor(p.R)) + 1):
        mu = int(sieve.mobius[d])
        if mu == 0 or math.gcd(d, p.W) != 1:
            continue
        chi_val = recipe.cutoff.chi(math.log(d) / log_r)
        if chi_val == 0.0:
            continue
        ds.append(d)
        weights.append(mu * chi_val)
    count = len(ds)
    if count * count > pair_budget:
        raise InfeasibleSizeError(
            f"divisor oracle needs {count * count} pairs, budget {pair_budget}"
        )
    total = 0.0
    for i in range(count):
        di, wi = ds[i], weights[i]
        total += wi * wi / di
        for j in range(i + 1, count):
            dj, wj = ds[j], weights[j]
            lcm = di * dj // math.gcd(di, dj)
            total += 2.0 * wi * wj / lcm
    constant = (sieve.phi[p.W] / p.W) * log_r
    return constant * total


@dataclass(frozen=True)
class LinearFormFamily:
    """Affine forms psi_i(x) = offsets[i] + sum_j matrix[i, j] x_j over Z_N^t."""

    matrix: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=np.int64, copy=True)
        if mat.ndim != 2 or mat.shape[0] < 1 or mat.shape[1] < 1:
            raise ValueError("matrix must be a nonempty 2-d integer array")
        offs = np.array(self.offsets, dtype=np.int64, copy=True).reshape(-1)
        if offs.shape[0] != mat.shape[0]:
            raise ValueError("one offset per form is required")
        if np.abs(mat).max() > ENTRY_BOUND:
            raise ValueError(
                f"matrix entries must stay within |entry| <= {ENTRY_BOUND}"
            )
        for i, row in enumerate(mat):
            if not row.any():
                raise ValueError(f"form {i} has a zero coefficient vector")
        m = mat.shape[0]
        for i in range(m):
            for j in range(i + 1, m):
                a, b = mat[i], mat[j]
                if np.array_equal(a[:, None] * b[None, :],
                                  b[:, None] * a[None, :]):
                    raise ValueError(
                        f"forms {i} and {j} have parallel coefficient vectors"
                    )
        mat.setflags(write=False)
        offs.setflags(write=False)
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "offsets", offs)

    @property
    def form_count(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def variable_count(self) -> int:
        return int(self.matrix.shape[1])


def ap_form_family(k: int) -> LinearFormFamily:
    """The progression family psi_j(x, t) = x + j t for j = 0..k."""
    if k < 1:
        raise ValueError(f"need k >= 1, got {k}")
    matrix = np.array([[1, j] for j in range(k + 1)], dtype=np.int64)
    offsets = np.zeros(k + 1, dtype=np.int64)
    return LinearFormFamily(matrix=matrix, offsets=offsets)


def verify_linear_forms(nu: GridFunction, family: LinearFormFamily,
                        samples: int = 200_000, seed: int = 0,
                        exhaustive_limit: int = EXHAUSTIVE_FORMS_LIMIT
                        ) -> tuple[float, float]:
    """Estimate E over x in Z_N^t of the product of nu over the forms.

    Exhaustive (stderr 0) while N^t stays within the limit, otherwise a
    seeded Monte Carlo average with its standard error.
    """
    if family.form_count > MAX_FORMS:
        raise ValueError(f"at most {MAX_FORMS} forms supported")
    if family.variable_count > MAX_VARIABLES:
        raise ValueError(f"at most {MAX_VARIABLES} variables supported")
    if samples < 10_000:
        raise ValueError(f"need at least 10000 samples, got {samples}")
    n = nu.modulus
    t = family.variable_count
    vals = nu.values
    if n ** t <= exhaustive_limit:
        grids = np.indices((n,) * t, dtype=np.int64).reshape(t, -1)
        prod_vals = np.ones(grids.shape[1])
        for i in range(family.form_count):
            idx = (family.offsets[i] + family.matrix[i] @ grids) % n
            prod_vals = prod_vals * vals[idx]
        return float(prod_vals.mean()), 0.0
    rng = np.random.default_rng(seed)
    xs = rng.integers(0, n, size=(samples, t))
    prod_vals = np.ones(samples)
    for i in range(family.form_count):
        idx = (family.offsets[i] + xs @ family.matrix[i]) % n
        prod_vals = prod_vals * vals[idx]
    estimate = float(prod_vals.mean())
    stderr = float(prod_vals.std(ddof=1) / math.sqrt(samples))
    return estimate, stderr


@dataclass(frozen=True)
class CorrelationReport:
    """Outcome of the correlation-condition check at one modulus."""

    modulus: int
    q: int
    trials: int
    violations: int
    violation_rate: float
    worst_margin: float
    tau_moments: dict


def verify_correlations(nu: GridFunction, q: int, trials: int = 500,
                        seed: int = 0,
                        q_max: int = MAX_CORRELATION_ORDER) -> CorrelationReport:
    """Check shifted products against the constructive pairwise bound.

    The bound candidate is tau(h) = max(C(h), 1) with C the pair
    correlation of nu. For each random shift tuple the product mean is
    compared against the sum of tau over the pairwise differences; the
    report carries the violation rate and the moments of tau up to
    power 4. Failure is a report outcome, not an exception.
    """
    if q < 2 or q > q_max:
        raise ValueError(f"need 2 <= q <= {q_max}, got {q}")
    if trials < 100:
        raise ValueError(f"need at least 100 trials, got {trials}")
    n = nu.modulus
    vals = nu.values
    corr = autocorrelation(nu).values
    tau = np.maximum(corr, 1.0)
    moments = {p: float((tau ** p).mean()) for p in (1, 2, 3, 4)}
    rng = np.random.default_rng(seed)
    violations = 0
    worst = -math.inf
    for _ in range(trials):
        shifts = rng.integers(0, n, size=q)
        prod_vals = np.ones(n)
        for h in shifts:
            prod_vals = prod_vals * np.roll(vals, -int(h))
        lhs = float(prod_vals.mean())
        rhs = 0.0
        for i in range(q):
            for j in range(i + 1, q):
                rhs += float(tau[(int(shifts[i]) - int(shifts[j])) % n])
        margin = lhs - rhs
        worst = max(worst, margin)
        # allow float dust on the comparison itself
        if margin > 1e-9:
            violations += 1
    return CorrelationReport(
        modulus=n, q=q, trials=trials, violations=violations,
        violation_rate=violations / trials, worst_margin=worst,
        tau_moments=moments,
    )


# ---------------------------------------------------------------------------
# weight cache: grid binaries plus a plain-text sidecar header


def cache_stem(k: int, N: int, alpha: float, w: float) -> str:
    return f"weight_k{k}_N{N}_a{alpha!r}_w{w!r}"


def save_weight(cache_dir, recipe: WeightRecipe, nu: GridFunction,
                f: GridFunction, c: float) -> dict:
    from .zn_core import save_gridfunction

    p = recipe.wtrick
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    stem = cache_stem(p.k, p.N, p.alpha, p.w)
    save_gridfunction(nu, cache_dir / f"{stem}.nu.gtf")
    save_gridfunction(f, cache_dir / f"{stem}.f.gtf")
    meta = {
        "k": p.k, "N": p.N, "alpha": p.alpha, "w": p.w, "W": p.W,
        "R": p.R, "b": p.b, "c": c,
        "chi_norm": recipe.cutoff.normalization,
    }
    lines = [f"{key}={value!r}" for key, value in meta.items()]
    (cache_dir / f"{stem}.meta").write_text("\n".join(lines) + "\n")
    return meta


def load_weight(cache_dir, recipe: WeightRecipe):
    """Cache lookup validated against the recipe; None forces a rebuild.

    Hits are accepted only when every identifying header field (k, N,
    alpha, w, b) matches the freshly derived parameters.
    """
    from .zn_core import load_gridfunction

    p = recipe.wtrick
    cache_dir = Path(cache_dir)
    stem = cache_stem(p.k, p.N, p.alpha, p.w)
    meta_path = cache_dir / f"{stem}.meta"
    nu_path = cache_dir / f"{stem}.nu.gtf"
    f_path = cache_dir / f"{stem}.f.gtf"
    if not (meta_path.exists() and nu_path.exists() and f_path.exists()):
        return None
    meta = {}
    for line in meta_path.read_text().splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition("=")
        meta[key] = value
    expected = {
        "k": repr(p.k), "N": repr(p.N), "alpha": repr(p.alpha),
        "w": repr(p.w), "b": repr(p.b),
    }
    for key, value in expected.items():
        if meta.get(key) != value:
            return None
    nu = load_gridfunction(nu_path)
    f = load_gridfunction(f_path)
    if nu.modulus != p.N or f.modulus != p.N:
        return None
    return nu, f, float(meta["c"])
