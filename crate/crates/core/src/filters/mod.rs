//! Selection of synthetic rows: transfer-based detection and distance filtering.

mod distance;
mod transfer;

pub use distance::{
    apply_policy, augment_images, augment_rows, candidate_distances, filter_candidates,
    filter_candidates_with, retained_count, Augmented, DistanceMetric, FilterOptions, FilterPolicy,
    FilterReport, Provenance, DEFAULT_K_NEAREST,
};
pub use transfer::{
    adapt, adaptability, batch_split, detect_transferable, detect_with_losses, dual_source_select,
    transferable_pool, two_step_transfer_fit, Detection, IterationRecord, PoolSelection,
    RhoSummary, SelectReport, TransferConfig, DETECTION_FOLDS,
};
