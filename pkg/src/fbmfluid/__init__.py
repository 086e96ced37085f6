"""Fractional-noise driven bipolar fluid: fBm calculus, stochastic
convolutions, a spectral Galerkin solver and pullback experiments."""
from .errors import (ConfigurationError, DivergenceError, DomainError, EmbeddingError,
                     FactorizationError, FbmFluidError, NumericalError, QuadratureError)
from .hurst import HurstParam
from .fbm import (FbmPath, SampledFunction, StepFunction, TimeGrid, covariance_R, generate_fbm,
                  kernel_KH, kstar_apply, kstar_l2_norm_sq, sample_fbm, twisted_inner,
                  wiener_integral)
from .noise import (ConvolutionSample, ModeSpectrum, NoiseAssumption, check_assumption,
                    convolve_field, mean_square_It, mean_square_Z, stationary_Z)
from .galerkin import GridWorkspace, PhysParams, SpectralField, norm_sobolev
from .mild import FixedPointConfig, Trajectory, evolve_v, picard_solve, pullback_solve
from .attractor import attraction_test, condition_check, ergodic_average, estimate_absorption
from .manifest import RunManifest

__version__ = "0.1.0"
