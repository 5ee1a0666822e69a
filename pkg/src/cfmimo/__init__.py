"""Downlink user scheduling and beamforming for user-centric cell-free MIMO."""

from .beamforming import (OptimConfig, OptimizerResult, conjugate_init,
                          enforce_power_cap, extract_schedule, pair_powers,
                          rrh_powers, update_alpha)
from .channel import (ChannelSet, PilotAssignment, TrainingConfig,
                      assign_pilots_hac, assign_pilots_random,
                      draw_small_scale, dft_pilot_matrix, mmse_estimate, nmse,
                      pilot_reuse_factor, simulate_uplink_training,
                      true_channels)
from .coherent import (evaluate_rates_coherent, optimize_coherent,
                       update_beamformers, update_beta, update_gamma,
                       weighted_sum_rate)
from .config import SimConfig, config_from_dict, parse_config
from .geometry import (GeometryConfig, GeometryError, LargeScaleState,
                       NetworkRealization, build_large_scale, draw_shadowing,
                       form_clusters, generate_layout, path_loss_db,
                       path_loss_linear, pairwise_wrapped_distances,
                       wrapped_distance)
from .noncoherent import (evaluate_rates_noncoherent, optimize_noncoherent,
                          update_beamformers_nc, update_beta_nc,
                          update_gamma_nc, weighted_sum_rate_nc)
from .simulation import (EvalMode, FairnessState, SimMetrics,
                         compare_baselines, jain_index, run_simulation,
                         update_fairness)
from .topology import PairTable

__version__ = "0.1.0"
