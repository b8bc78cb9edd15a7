"""
Commands of the command-line interface, one module per group of related commands
"""

from .evaluation import check, evaluate_checkpoint
from .sampling import predict, sample
from .sweep import sweep
from .testbed import testbed
from .training import train, train_cond
