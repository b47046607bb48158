"""Fair graph embeddings through emulated graph modification.

A two-layer graph autoencoder is trained for link reconstruction while
extra tensors (a global feature offset, a low-rank offset from added nodes,
or learned edge weights) are trained to pull each node's similarity-weighted
group mix toward the population mix.
"""
from .errors import (CapacityError, DivergenceError, FairEGMError, InvalidArgumentError, ParseError,
                     SchemaError, UnknownParameterError, UnsupportedOperationError)
from .graph import Graph, SplitResult, normalize_adjacency, sample_negative_edges, sensitive_distribution, \
    train_test_split
from .losses import augmented_loss, group_similarity, link_divergence, pos_weight, reconstruction_loss
from .metrics import MetricsRecord, SummaryRecord, auroc, dp_at_k, edge_features, f1, fit_classifier, summarize
from .model import GraphInputs, ModelParams, Variant, cfo_rank_witness, decode_block, forward, init_params
from .training import Adam, AdamState, TrainConfig, TrainHistory, adam_step, joint_train

__version__ = "0.1.0"
