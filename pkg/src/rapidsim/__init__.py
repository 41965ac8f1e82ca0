"""Cooperative mmWave beam training with ray-intercept fusion across base stations."""
from .channel import codebook, generate_channel, project_virtual, steering
from .evaluation import ExperimentConfig, achievable_rate, coverage_counts, run_experiment
from .fusion import fuse_network, pair_beam_probability, radial_posterior, select_beams, share_rays
from .geometry import NetworkDeployment, build_intercept_table, conditional_aod, solve_intercept
from .measurement import assemble_cs, draw_schedule, es_schedule, observe
from .sparse_recovery import RecoveryConfig, dominant_entries, recover

__version__ = "0.1.0"
