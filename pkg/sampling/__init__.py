"""
Module with the ancestral, Langevin and ancestral Langevin samplers
"""

from .samplers import (SamplerConfig, ChainRecord, ancestral_sample, langevin_step, langevin_chain,
                       ancestral_langevin_sample, noise_initialized_sample, reparameterized_draw, predict)
