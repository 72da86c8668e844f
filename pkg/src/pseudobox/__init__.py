"""Class-agnostic 3D pseudo-box generation from posed RGB-D and 2D masks.

The pipeline lifts per-frame 2D instance masks to 3D partial segments,
connects overlapping segments into a graph, embeds the graph nodes,
clusters the embeddings into whole objects, optionally refines them with
a mesh over-segmentation, and emits filtered axis-aligned bounding boxes.
"""

__version__ = "0.1.0"

from ._kernels import backend_name
from .errors import (
    ConfigError,
    DomainError,
    GeometryError,
    LoadError,
    PipelineError,
    PseudoboxError,
)
from .pipeline import PipelineConfig, load_config, run_classify, run_eval, run_pipeline

__all__ = [
    "__version__",
    "backend_name",
    "PseudoboxError",
    "ConfigError",
    "LoadError",
    "GeometryError",
    "DomainError",
    "PipelineError",
    "PipelineConfig",
    "load_config",
    "run_pipeline",
    "run_eval",
    "run_classify",
]
