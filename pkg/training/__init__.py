"""
Module with the joint training of the energy model, the generator and the encoder
"""

from .objectives import ebm_grad, kl_diag_gaussian_to_prior, vae_loss, VaeLoss, regression_loss
from .optim import AdamConfig, AdamState, adam_step, apply_adam, clip_by_global_norm
from .trainer import (TrainConfig, LossReport, TrainState, train_iteration, conditional_train_iteration,
                      train_loop)
