"""Node classification in heterogeneous information networks via meta-path
contexts: PathSim neighbor filtering, object/context bipartite convolution,
semantic attention across meta-paths, and a joint supervised + contrastive
objective, on a self-contained float64 autodiff core.
"""

from .hin import Hin, HinFormatError, Split, load_hin, load_split, one_hot_fallback_features
from .metapaths import MetaPath, NeighborIndex, count_paths, enumerate_instances, pathsim, top_k_neighbors
from .contexts import (
    ContextGraph,
    build_context_graph,
    context_feature,
    corrupt_features,
    instance_embedding,
    load_embeddings,
    structural_embeddings,
)
from .model import ConchModel, ForwardResult, ModelConfig
from .pipeline import MetricsReport, PipelineError, RunConfig, evaluate, prepare, train
from .synth import gen_synthetic

__version__ = "0.1.0"

__all__ = [
    "Hin",
    "HinFormatError",
    "Split",
    "load_hin",
    "load_split",
    "one_hot_fallback_features",
    "MetaPath",
    "NeighborIndex",
    "count_paths",
    "enumerate_instances",
    "pathsim",
    "top_k_neighbors",
    "ContextGraph",
    "build_context_graph",
    "context_feature",
    "corrupt_features",
    "instance_embedding",
    "load_embeddings",
    "structural_embeddings",
    "ConchModel",
    "ForwardResult",
    "ModelConfig",
    "MetricsReport",
    "PipelineError",
    "RunConfig",
    "evaluate",
    "prepare",
    "train",
    "gen_synthetic",
    "__version__",
]
