"""Modularity-aware graph autoencoders (GAE / VGAE) for joint link prediction and community detection."""

__version__ = "0.1.0"

from .communities import Partition, build_operator, louvain, membership_matrix, modularity, sparsify
from .encoders import EncoderConfig, Embedding, Weights
from .graph import EdgeSplit, Graph, Operator, from_edges, generate_sbm, load_edge_list, split_edges, symmetric_normalize
from .metrics import ami, ap, ari, auc, evaluate, kmeans
from .objectives import LossConfig, LossValue
from .selection import GridSpec, dual_score, grid_search
from .training import TrainConfig, TrainedModel, gradient_check, train, train_reference

__all__ = [
    "EdgeSplit", "Embedding", "EncoderConfig", "Graph", "GridSpec", "LossConfig", "LossValue", "Operator",
    "Partition", "TrainConfig", "TrainedModel", "Weights", "ami", "ap", "ari", "auc", "build_operator",
    "dual_score", "evaluate", "from_edges", "generate_sbm", "gradient_check", "grid_search", "kmeans",
    "load_edge_list", "louvain", "membership_matrix", "modularity", "sparsify", "split_edges",
    "symmetric_normalize", "train", "train_reference",
]
