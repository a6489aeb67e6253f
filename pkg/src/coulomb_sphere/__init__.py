"""Momentum-space Coulomb problem as free motion on the unit sphere S^3."""

__version__ = "0.1.0"

from .errors import (CollisionError, CoincidentPointError, ConvergenceError,
                     CoulombSphereError, InvalidInputError, PointAtInfinityError,
                     PoleProximityError, ResolutionError)
from .geometry import (EV_PER_UNIT, EnergyContext, SpherePoint4, invariant_angle,
                       measure_density, metric_factor, project, total_measure, unproject)
from .harmonics import (QuantumNumbers, SpinLabel, addition_theorem_residual,
                        clebsch_gordan, hyperspherical_Y, legendre4, s3_quadrature,
                        su2_from_sphere, wigner_D)
from .spectral import (RTermVariant, SeriesResult, SpectrumEntry, find_poles,
                       fixed_energy_amplitude, fixed_energy_amplitude_between,
                       fixed_energy_amplitude_cesaro, level_spacing_report,
                       no_measure_factor_spectrum, pseudotime_amplitude, spectrum)
from .sliced import (ModeCoefficients, SliceConfig, compose_slices, discrimination_report,
                     extract_spectrum, kernel_to_modes, short_time_kernel)
from .eikonal import (MomentumPath, eikonal_action, eikonal_along_orbit, minimize_eikonal,
                      simulate_kepler)
