"""
Utility functions for geostable.

- serialization: versioned checkpoint containers and JSON report documents
- visualization: confidence maps, channel responses, curves and the loss surface as files
"""

from .serialization import (
    CHECKPOINT_FORMAT,
    SERIALIZATION_VERSION,
    deserialize_checkpoint,
    from_json,
    load_checkpoint,
    save_checkpoint,
    serialize_checkpoint,
    to_json,
)
from .visualization import (
    plot_curve,
    plot_curves,
    plot_loss_surface,
    render_fields,
    save_heatmap,
    top_variance_channels,
)

__all__ = [
    "CHECKPOINT_FORMAT",
    "SERIALIZATION_VERSION",
    "deserialize_checkpoint",
    "from_json",
    "load_checkpoint",
    "save_checkpoint",
    "serialize_checkpoint",
    "to_json",
    "plot_curve",
    "plot_curves",
    "plot_loss_surface",
    "render_fields",
    "save_heatmap",
    "top_variance_channels",
]
