//! Source-separation quality (SDR, SIR, SAR) and paired significance tests.

mod bss;
mod stats;

pub use bss::{bss_decompose, bss_eval, BssResult, Decomposition, CAP_DB, DEFAULT_FILTER_LEN, RIDGE};
pub use stats::{bonferroni, wilcoxon_signed_rank, PMethod, SignificanceReport, EXACT_MAX_N};
