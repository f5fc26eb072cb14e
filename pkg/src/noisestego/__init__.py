"""Steganography in diffusion initial noise.

Embed bits into a standard-Gaussian noise tensor via keyed orthogonal
projection, generate through a probability-flow ODE sampler, and recover
the bits by implicit (backward-Euler) inversion plus latent gradient
refinement, with a channel-attack and bit-error-rate evaluation harness.
"""

from .attacks import AttackSpec, apply_attack
from .codec import (StegoKey, bit_error_rate, bits_to_bytes, bits_to_signed_gaussian,
                    bytes_to_bits, embed, extract, generate_orthogonal, max_blocks)
from .config import CodecSpec, OracleSpec, PipelineConfig
from .errors import (CapacityError, ConfigurationError, ConvergenceError,
                     DivergenceError, StegoError)
from .latent_opt import OptimizerConfig, optimize_latent
from .models import (GaussianOracle, LatentCodec, MixtureOracle, ZeroPredictor,
                     build_codec, gaussian_oracle, mixture_oracle)
from .pipeline import (EvalReport, convergence_study, embed_and_generate,
                       gaussianity_test, receive_and_extract, run_evaluation)
from .schedule import NoiseSchedule, build_schedule, log_snr_step
from .solvers import (InversionResult, SolverConfig, Trajectory,
                      invert_backward_euler_first_order,
                      invert_backward_euler_second_order,
                      invert_naive_first_order, invert_naive_second_order,
                      sample_first_order, sample_second_order)

__version__ = "0.1.0"
