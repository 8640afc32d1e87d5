"""Two-level graph neural network with subgraph detection and PNG pair synthesis."""

from .generated import GeneratedGraph, TransformMatrix, build_generated_graph, transform_aggregate, transform_aggregate_max
from .graph import (Dataset, Graph, IngestionError, OracleBudgetError, is_isomorphic_small, load_tu_dataset, wl_equivalent,
                    wl_refine, write_tu_dataset)
from .model import (TlgnnConfig, TlgnnParameters, attention_report, cross_validate, forward, merge_levels,
                    node_level_layer, subgraph_level_layer, train)
from .png import PngPair, check_png, generate_spng, pair_separation_score
from .subgraphs import Kind, SubgraphRecord, brute_force_subgraphs, enumerate_subgraphs

__version__ = "0.1.0"
