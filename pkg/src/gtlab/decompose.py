"""Partition-based decomposition of weighted functions.

A sigma-algebra on Z_N is a partition; conditional expectation averages
over its atoms. The decomposition writes a function f dominated by a
weight nu as

    (1 - 1_Omega) f = g + h,   g = (1 - 1_Omega) E(f | B),
                               h = (1 - 1_Omega) (f - E(f | B)),

where the partition B is generated by level sets of dual functions and
Omega collects the atoms whose (1 + nu)-mass is too small to average
reliably. The iteration refines B until the residual h has small
order-k uniformity norm. Termination is forced by an energy increment:
every refinement must grow the squared L^2 mass of the kept conditional
expectation by an explicit step, which this implementation asserts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (BoundaryBudgetError, EnergyIncrementError,
                     InfeasibleSizeError, MaxIterationsError)
from .gowers import dual_function, gowers_norm
from .zn_core import GridFunction, save_gridfunction

ALPHA_CANDIDATES = 20
BOUNDARY_BUDGET_FACTOR = 10.0
HARD_ITERATION_CAP = 1000


@dataclass(frozen=True)
class Partition:
    """A partition of Z_N as per-point atom labels 0..atom_count-1."""

    modulus: int
    atom_label: np.ndarray
    atom_count: int

    def __post_init__(self):
        labels = np.array(self.atom_label, dtype=np.int64, copy=True).reshape(-1)
        if labels.shape[0] != self.modulus:
            raise ValueError(
                f"expected {self.modulus} labels, got {labels.shape[0]}"
            )
        if labels.min() < 0 or labels.max() >= self.atom_count:
            raise ValueError("labels must lie in [0, atom_count)")
        present = np.bincount(labels, minlength=self.atom_count)
        if (present == 0).any():
            raise ValueError("every atom label must be nonempty")
        labels.setflags(write=False)
        object.__setattr__(self, "atom_label", labels)

    @classmethod
    def from_labels(cls, labels) -> "Partition":
        labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        _, inverse = np.unique(labels, return_inverse=True)
        count = int(inverse.max()) + 1
        return cls(labels.shape[0], inverse.astype(np.int64), count)

    @classmethod
    def trivial(cls, modulus: int) -> "Partition":
        return cls(modulus, np.zeros(modulus, dtype=np.int64), 1)

    @classmethod
    def discrete(cls, modulus: int) -> "Partition":
        return cls(modulus, np.arange(modulus, dtype=np.int64), modulus)

    def atom_sizes(self) -> np.ndarray:
        return np.bincount(self.atom_label, minlength=self.atom_count)


def common_refinement(a: Partition, b: Partition) -> Partition:
    """Joint labeling: two points share an atom iff they do in both parents."""
    if a.modulus != b.modulus:
        raise ValueError("partitions live on different Z_N")
    combined = a.atom_label * b.atom_count + b.atom_label
    return Partition.from_labels(combined)


def conditional_expectation(f: GridFunction, partition: Partition) -> GridFunction:
    """E(f | B): on each atom, the average of f over that atom."""
    if f.modulus != partition.modulus:
        raise ValueError("function and partition moduli differ")
    labels = partition.atom_label
    sums = np.bincount(labels, weights=f.values, minlength=partition.atom_count)
    sizes = np.bincount(labels, minlength=partition.atom_count)
    if (sizes == 0).any():
        raise ArithmeticError("empty atom; the partition invariant is broken")
    return GridFunction(f.modulus, (sums / sizes)[labels])


def build_level_partition(duals, eps: float, k: int, sigma: float,
                          nu: GridFunction, rng: np.random.Generator,
                          candidates: int = ALPHA_CANDIDATES,
                          budget_factor: float = BOUNDARY_BUDGET_FACTOR):
    """Joint level-set partition of the dual functions, with bad atoms.

    Atoms are intersections over the duals of the half-open level cells

        width * (n + alpha) <= F(x) < width * (n + 1 + alpha),

    with width = eps^(2^(k+1)). The grid offset alpha is chosen among
    random candidates in (0, 1] to minimize the (1 + nu)-mass of the
    boundary fringe (points within sigma * width of a cell edge); the
    winner must keep that mass within budget_factor * sigma. Atoms of
    (1 + nu)-mass below sqrt(sigma) are flagged bad and their union is
    returned as the exceptional set.

    Returns (partition, omega_indicator, alpha).
    """
    if not duals:
        raise ValueError("need at least one dual function")
    if not (0.0 < sigma < 0.5):
        raise ValueError(f"sigma must lie in (0, 1/2), got {sigma}")
    if eps <= 0.0:
        raise ValueError(f"eps must be positive, got {eps}")
    n = duals[0].modulus
    if nu.modulus != n or any(d.modulus != n for d in duals):
        raise ValueError("duals and weight must share one modulus")
    width = eps ** (2 ** (k + 1))
    stack = np.stack([d.values for d in duals]) / width
    one_plus_nu = 1.0 + nu.values

    alphas = 1.0 - rng.random(candidates)
    best_alpha = None
    best_mass = math.inf
    for alpha in alphas:
        frac = stack - alpha
        dist = np.abs(frac - np.rint(frac))
        fringe = (dist <= sigma).any(axis=0)
        mass = float((one_plus_nu * fringe).mean())
        if mass < best_mass:
            best_alpha, best_mass = float(alpha), mass
    if best_mass > budget_factor * sigma:
        raise BoundaryBudgetError(
            f"no grid offset kept the boundary mass within "
            f"{budget_factor} * sigma = {budget_factor * sigma:.3e}; "
            f"best was {best_mass:.3e} (consider raising sigma)",
            best_mass=best_mass,
        )

    levels = np.floor(stack - best_alpha).astype(np.int64)
    # canonicalize per dual and fold pairwise so joint codes stay < N^2
    partition = Partition.from_labels(levels[0])
    for row in levels[1:]:
        partition = common_refinement(partition, Partition.from_labels(row))

    atom_mass = np.bincount(partition.atom_label, weights=one_plus_nu,
                            minlength=partition.atom_count) / n
    bad = atom_mass < math.sqrt(sigma)
    omega = GridFunction(n, bad[partition.atom_label].astype(np.float64))

    # every dual varies by less than one cell width inside an atom
    for d in duals:
        approx = conditional_expectation(d, partition)
        sup = float(np.max(np.abs(d.values - approx.values)))
        if sup > width + 1e-12:
            raise ArithmeticError(
                f"level partition failed the width guarantee: {sup} > {width}"
            )
    return partition, omega, best_alpha


@dataclass(frozen=True)
class DecompositionResult:
    """Final partition, exceptional set, components, and diagnostics."""

    partition: Partition
    omega: GridFunction
    g: GridFunction
    h: GridFunction
    iterations: int
    energy: tuple
    alphas: tuple
    nu_omega_mass: float
    conditional_sup: float
    residual_norm: float

    def report_text(self) -> str:
        lines = [
            f"iterations={self.iterations}",
            f"atoms={self.partition.atom_count}",
            f"omega_points={int(self.omega.values.sum())}",
            f"nu_omega_mass={self.nu_omega_mass!r}",
            f"conditional_sup={self.conditional_sup!r}",
            f"residual_norm={self.residual_norm!r}",
            "energy=" + ",".join(repr(e) for e in self.energy),
            "alphas=" + ",".join(repr(a) for a in self.alphas),
        ]
        return "\n".join(lines) + "\n"

    def write(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "report.txt").write_text(self.report_text())
        rows = ["iteration,energy"]
        rows += [f"{i + 1},{e!r}" for i, e in enumerate(self.energy)]
        (directory / "energy.csv").write_text("\n".join(rows) + "\n")
        save_gridfunction(self.g, directory / "g.gtf")
        save_gridfunction(self.h, directory / "h.gtf")
        save_gridfunction(self.omega, directory / "omega.gtf")


def _exact_split(target: np.ndarray, base: np.ndarray):
    """(g, h) with g + h == target bitwise and g within one ulp of base.

    h = target - base can land a rounding step off, and at tie points no
    h at all sums with base exactly to target (round-to-even skips the
    target when its mantissa is odd). Correction rounds fix the former;
    shifting base itself by one ulp breaks the remaining ties. The ulp
    perturbation of g is far below every tolerance g participates in.
    """
    g = base.copy()
    h = target - g
    for attempt in range(12):
        defect = target - (g + h)
        stuck = defect != 0.0
        if not stuck.any():
            return g, h
        if attempt < 2:
            h = h + defect
        else:
            goal = np.where(defect[stuck] > 0.0, np.inf, -np.inf)
            g[stuck] = np.nextafter(g[stuck], goal)
            h[stuck] = target[stuck] - g[stuck]
    raise ArithmeticError("could not realize g + h == (1 - omega) f exactly")


def _resolve_sigma(sigma_schedule, eps: float, k: int):
    if sigma_schedule is None:
        value = eps ** (2 ** (k + 2))
        return lambda _: value
    if callable(sigma_schedule):
        return sigma_schedule
    value = float(sigma_schedule)
    return lambda _: value


def decompose(f: GridFunction, nu: GridFunction, k: int, eps: float,
              sigma_schedule=None, max_iter: int | None = None,
              rng: np.random.Generator | None = None,
              norm_samples: int = 200_000,
              dual_samples: int = 2000) -> DecompositionResult:
    """Iterated energy-increment decomposition of f under the weight nu.

    Starting from the trivial partition, each round splits off the
    residual h = (1 - 1_Omega)(f - E(f | B)) and stops once its order-k
    norm drops to eps. Otherwise the partition is rebuilt from the
    level sets of the duals of every residual produced so far, the bad
    atoms are excised, and the round repeats. The kept conditional
    L^2 energy must grow by at least eps^(2^(k+1)) / 4 per non-final
    round; a violation raises instead of looping silently.
    """
    if f.modulus != nu.modulus:
        raise ValueError("function and weight moduli differ")
    if not np.all(f.values >= 0.0) or not np.all(f.values <= nu.values):
        raise ValueError("need 0 <= f <= nu pointwise")
    if eps <= 0.0:
        raise ValueError(f"eps must be positive, got {eps}")
    if k < 1:
        raise ValueError(f"need k >= 1, got {k}")
    n = f.modulus
    if rng is None:
        rng = np.random.default_rng(0)
    sigma_of = _resolve_sigma(sigma_schedule, eps, k)
    increment = eps ** (2 ** (k + 1)) / 4.0
    if max_iter is None:
        mean_square = float((f.values ** 2).mean())
        max_iter = 1 + math.ceil(4.0 * mean_square / eps ** (2 ** (k + 1)))
    max_iter = min(max_iter, HARD_ITERATION_CAP)

    partition = Partition.trivial(n)
    omega = GridFunction.constant(n, 0.0)
    residuals = [f]
    energies = []
    alphas = []
    for iteration in range(1, max_iter + 1):
        conditional = conditional_expectation(f, partition)
        keep = 1.0 - omega.values
        g_vals, h_vals = _exact_split(keep * f.values, keep * conditional.values)
        energy = float((g_vals ** 2).mean())
        if energies and energy - energies[-1] + 1e-12 < increment:
            raise EnergyIncrementError(
                f"iteration {iteration}: energy grew by "
                f"{energy - energies[-1]:.3e}, required {increment:.3e}"
            )
        energies.append(energy)
        h = GridFunction(n, h_vals)
        residual_norm = gowers_norm(h, k, samples=norm_samples,
                                    seed=int(rng.integers(2 ** 32)))
        if residual_norm <= eps:
            nu_omega_mass = float((nu.values * omega.values).mean())
            centered = conditional_expectation(
                GridFunction(n, nu.values - 1.0), partition
            )
            conditional_sup = float(np.max(np.abs(keep * centered.values)))
            return DecompositionResult(
                partition=partition, omega=omega,
                g=GridFunction(n, g_vals), h=h,
                iterations=iteration, energy=tuple(energies),
                alphas=tuple(alphas), nu_omega_mass=nu_omega_mass,
                conditional_sup=conditional_sup,
                residual_norm=residual_norm,
            )
        residuals.append(h)
        duals = []
        for r in residuals:
            try:
                duals.append(dual_function(r, k))
            except InfeasibleSizeError:
                duals.append(dual_function(r, k, samples=dual_samples,
                                           seed=int(rng.integers(2 ** 32))))
        partition, omega, alpha = build_level_partition(
            duals, eps, k, sigma_of(iteration), nu, rng
        )
        alphas.append(alpha)
    raise MaxIterationsError(
        f"no residual of order-{k} norm <= {eps} within {max_iter} iterations"
    )
