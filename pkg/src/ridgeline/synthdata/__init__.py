"""Synthetic fingerprint data: generation, degradation, classical enhancement,
SSL view augmentation, and dataset manifests."""

from .augment import AugmentPolicy, augment_view
from .classical import (
    FrequencyMap,
    classical_enhance,
    estimate_frequency,
    estimate_orientation,
    gabor_enhance,
)
from .degradation import (
    DegradationRecipe,
    DegradationStep,
    degrade,
    random_recipe,
)
from .generation import (
    OrientationField,
    gen_impression,
    gen_master_print,
    gen_orientation_field,
    rotate_image,
    stripe_pattern,
    wrapped_angle_diff,
)
from .manifest import (
    GenerationConfig,
    Manifest,
    SampleRecord,
    assign_identity_splits,
    build_dataset,
    load_manifest,
    save_manifest,
    split_counts,
)

__all__ = [
    "AugmentPolicy",
    "DegradationRecipe",
    "DegradationStep",
    "FrequencyMap",
    "GenerationConfig",
    "Manifest",
    "OrientationField",
    "SampleRecord",
    "assign_identity_splits",
    "augment_view",
    "build_dataset",
    "classical_enhance",
    "degrade",
    "estimate_frequency",
    "estimate_orientation",
    "gabor_enhance",
    "gen_impression",
    "gen_master_print",
    "gen_orientation_field",
    "load_manifest",
    "random_recipe",
    "rotate_image",
    "save_manifest",
    "split_counts",
    "stripe_pattern",
    "wrapped_angle_diff",
]
