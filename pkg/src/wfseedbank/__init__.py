"""Wright-Fisher diffusion with a seed bank or two islands: simulation, dual chain, moments, boundaries."""
from .boundary import (BoundaryVerdict, EmpiricalConfig, McKeanCertificate, NoCertificateError,
                       classification_report, classify_boundaries, fl16_corner_check, mckean_certificate)
from .dual import (DEAD, absorption_probability, build_truncated_generator, dual_rates, simulate_dual,
                   transient_dual_expectation, transient_dual_expectations)
from .model import (DiffusionState, ModelParams, MonomialCombo, SeedBank, diffusion_amplitude, drift,
                    drift_k, generator_on_monomial, load_params, validate_params)
from .moments import (MomentTable, boundary_atom_estimate, finite_time_moments, reversibility_defect,
                      stationarity_residual, stationary_moments, stationary_moments_oracle)
from .sde import (estimate_moment, estimate_moments, hitting_experiment, hitting_sequence,
                  simulate_ensemble, simulate_path, simulate_path_k)
from .sdde import deviation_report, pathwise_deviation, simulate_sdde_lift, simulate_sdde_quadrature
from .streams import Stream

__version__ = "0.1.0"
