"""Smartphone red-reflex screening toolkit: synthetic data, pupil/reflex
pipeline, image-property statistics, classifier head, interpretability, and
the screening service."""

__version__ = "0.1.0"

from .core import (  # noqa: F401
    DatasetManifest,
    EyeRecord,
    ManifestEntry,
    PupilCrop,
    RgbImage,
    load_manifest,
    load_png,
    mirror_left_eyes,
    save_manifest,
    save_png,
    split_dataset,
)
from .imaging import (  # noqa: F401
    GrayImage,
    KsResult,
    PropertyVector,
    compute_properties,
    ks_two_sample,
    property_class_report,
    to_grayscale,
)
