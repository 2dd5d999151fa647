"""Continuous time Bayesian network classifiers: learning, inference, clustering and evaluation."""

from .data import Dataset, NodeIndexing, PartitionSpec, Trajectory, load_dataset, load_partition
from .estimation import Hyperparameters, collect_statistics, encode, estimate_parameters
from .model import CtbncModel, CtbnNode, ModelSchema, OneVsRestEnsemble, parse_ctbn, write_ctbn

__version__ = "0.1.0"
