"""gtlab: uniformity norms, pseudorandom prime weights, and progressions on Z_N."""

from .arith import (SieveTables, WTrickParams, build_sieve, chebyshev_check,
                    choose_residue, is_prime_int, load_sieve,
                    make_wtrick_params, next_prime_at_least, save_sieve)
from .decompose import (DecompositionResult, Partition, build_level_partition,
                        common_refinement, conditional_expectation, decompose)
from .gowers import (csg_check, dual_function, gowers_norm,
                     gowers_norm_direct, gowers_norm_recursive,
                     gowers_norm_sampled, gowers_norm_u2_fft)
from .progressions import (APWitness, ap_expectation, diagonal_contribution,
                           find_prime_aps, lift_ap, select_interval,
                           von_neumann_check)
from .weight import (CorrelationReport, LinearFormFamily, SmoothCutoff,
                     WeightRecipe, ap_form_family, build_f, build_nu,
                     domination_constant, lambda_table, make_cutoff,
                     make_recipe, mean_nu_divisor_oracle, verify_correlations,
                     verify_linear_forms)
from .zn_core import (GridFunction, Spectrum, autocorrelation, dft,
                      expectation, idft, inner, load_gridfunction,
                      random_gridfunction, save_gridfunction, shift)

__version__ = "1.0.0"
