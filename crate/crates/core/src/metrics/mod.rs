//! Accuracy, agreement, simplifier analyses, timing and CSV emission.

mod analysis;
mod records;
mod table;
mod timer;

pub use analysis::{
    attention_export, average_agreement, logit_delta_stats, teacher_preservation, topk_accuracy,
    AgreementInput, AttentionExport, DeltaStats, Preservation,
};
pub use records::{EpochMetrics, RunMetrics};
pub use table::{fmt_sig9, CsvTable};
pub use timer::{batch_timer, median, Timing};
