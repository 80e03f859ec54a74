"""Dataset modalities, negative sampling, temporal split and standardization."""

from firedanger.sampling.dataset import (
    RecordIndex,
    SampleRecord,
    SplitConfig,
    collect_positives,
    days_in_years,
    record_at,
    sample_negatives,
    select_records,
    split_by_time,
)
from firedanger.sampling.extract import (
    MODALITIES,
    PATCH,
    WINDOW_DAYS,
    Extractor,
    ModalityShape,
    extract_pixel,
    extract_spatial,
    extract_spatiotemporal,
    extract_temporal,
    feature_names,
    modality_shape,
)
from firedanger.sampling.samples_io import SampleSet, load_samples, read_samples_header, save_sample_set, write_samples
from firedanger.sampling.standardize import (
    StandardizationStats,
    StandardizedView,
    apply_standardization,
    fit_standardization,
    standardize_record,
    stats_for_modality,
)

__all__ = [
    "MODALITIES",
    "PATCH",
    "WINDOW_DAYS",
    "Extractor",
    "ModalityShape",
    "RecordIndex",
    "SampleRecord",
    "SampleSet",
    "SplitConfig",
    "StandardizationStats",
    "StandardizedView",
    "apply_standardization",
    "collect_positives",
    "days_in_years",
    "extract_pixel",
    "extract_spatial",
    "extract_spatiotemporal",
    "extract_temporal",
    "feature_names",
    "fit_standardization",
    "load_samples",
    "modality_shape",
    "read_samples_header",
    "record_at",
    "sample_negatives",
    "save_sample_set",
    "select_records",
    "split_by_time",
    "standardize_record",
    "stats_for_modality",
    "write_samples",
]
