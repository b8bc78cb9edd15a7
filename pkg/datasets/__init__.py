"""
Module with the synthetic datasets
"""

from .synthetic import Dataset, make_dataset, dataset_generate, paired_dataset
