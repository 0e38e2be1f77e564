"""Bandwidth-adaptive spatiotemporal correspondence identification.

Two agents embed their object-observation sequences as spatiotemporal graphs,
exchange a bandwidth-limited subset of node embeddings plus one pooled graph
embedding per agent, and match covisible objects across views. The heavy
lifting lives in the C++ core; this package re-exports its surface.
"""

from ._core import (
    Dataset,
    MetricsReport,
    ModelConfig,
    ModelParameters,
    ObjectObservation,
    SceneConfig,
    SceneEmbedding,
    ScenePair,
    SpatioTemporalGraph,
    __version__,
    build_graph,
    embed_scene,
    evaluate_scene,
    generate_dataset,
    generate_scene,
    load_dataset,
    save_dataset,
    train_model,
)

__all__ = [
    "Dataset",
    "MetricsReport",
    "ModelConfig",
    "ModelParameters",
    "ObjectObservation",
    "SceneConfig",
    "SceneEmbedding",
    "ScenePair",
    "SpatioTemporalGraph",
    "__version__",
    "build_graph",
    "embed_scene",
    "evaluate_scene",
    "generate_dataset",
    "generate_scene",
    "load_dataset",
    "save_dataset",
    "train_model",
]
