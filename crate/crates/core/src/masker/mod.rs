//! Keyword and context masking, the regularized objective and the training
//! drivers.

mod mask;
mod train;

pub use mask::{
    apply_mask, mer_loss, mkr_loss, sample_context_mask, sample_keyword_mask, MaskKind, MaskPlan,
    MaskedDocument,
};
pub use train::{
    attention_keywords, build_sample, epoch_means, total_loss, train_masker, train_masker_from,
    train_vanilla, StepLog, TrainConfig, TrainedModel,
};
