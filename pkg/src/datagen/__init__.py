from datagen.generator import (
    AugmentConfig,
    GenConfig,
    Sample,
    apply_illumination,
    augment_illumination,
    dataset_stats,
    generate_dataset,
    generate_sample,
    split_ids,
)
from datagen.images import (
    DirectorySource,
    ProceduralSource,
    load_image,
    make_source,
    procedural_image,
    save_image,
    source_from_description,
)
from datagen.overlap import calibrate_rho, mean_overlap, overlap_preset
from datagen.store import DatasetStore, build_dataset

__all__ = [
    "AugmentConfig",
    "DatasetStore",
    "DirectorySource",
    "GenConfig",
    "ProceduralSource",
    "Sample",
    "apply_illumination",
    "augment_illumination",
    "build_dataset",
    "calibrate_rho",
    "dataset_stats",
    "generate_dataset",
    "generate_sample",
    "load_image",
    "make_source",
    "mean_overlap",
    "overlap_preset",
    "procedural_image",
    "save_image",
    "source_from_description",
    "split_ids",
]
