"""
Model module.

Dense descriptor network: a fully convolutional trunk, unit-norm descriptor
fields, positive inverse-confidence fields and bilinear reads from both.
"""

from .backbone import BackboneContract, TinyBackbone, build_tiny_backbone
from .fields import (
    ConfidenceField,
    DenseDescriptorField,
    descriptor_at,
    descriptors_at,
    sample_grid,
    sigma_at,
)
from .net import (
    CONFIDENCE_BIAS,
    DescriptorNet,
    NetOutput,
    build_descriptor_net,
    describe,
    image_to_tensor,
    images_to_tensor,
    output_fields,
    parameter_count,
    snapshot,
)

__all__ = [
    "BackboneContract",
    "TinyBackbone",
    "build_tiny_backbone",
    "ConfidenceField",
    "DenseDescriptorField",
    "descriptor_at",
    "descriptors_at",
    "sample_grid",
    "sigma_at",
    "CONFIDENCE_BIAS",
    "DescriptorNet",
    "NetOutput",
    "build_descriptor_net",
    "describe",
    "image_to_tensor",
    "images_to_tensor",
    "output_fields",
    "parameter_count",
    "snapshot",
]
