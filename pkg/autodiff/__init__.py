"""
Module with the minimal reverse-mode differentiation engine for small dense networks
"""

from .network import DenseNet, LayerSpec
from .tensors import ParamStore, as_tensor, as_batch
