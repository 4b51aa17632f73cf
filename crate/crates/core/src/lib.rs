//! Structured local-global attention for long webpage inputs.
//!
//! The crate is `no_std` (with `alloc`) and holds everything that is pure
//! computation: a small dense numeric substrate, attention pattern
//! descriptors and masks, block-sparse forward kernels, the approximate FLOP
//! accounting, and the webpage data model together with the per-task
//! sequence builders. File formats, dataset pipelines and the command line
//! live in the `prefix-global` companion crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod cost;
mod error;
pub mod kernel;
pub mod matrix;
pub mod page;
pub mod pattern;
pub mod sequence;
pub mod taskpipe;
pub mod text;

pub use cost::{accounted_pairs, compare, CostComparison, CostReport, LengthGroup};
pub use error::{Error, Reason, Result};
pub use kernel::{sparse_attention, tglobal_attention, AttentionInputs, KernelStats, TransientProjection};
pub use matrix::{dense_attention, matmul, row_softmax, Matrix, MASKED};
pub use page::{classify_section, is_content_section, ImageRef, Mime, Page, Section, SectionClass, Split};
pub use pattern::{build_mask, render_mask, AttentionMask, AttentionPattern, MaskGrid, PatternKind};
pub use sequence::{
    build_image_caption_input, build_page_description_input, build_section_summarization_input, PageDescPrefix,
    SequenceBuilder, SlotContent, SlotOrigin, Task, TaskExample, TokenSlot, PREFIX_BUDGET,
};
pub use taskpipe::{
    assign_split, build_dataset, corpus_stats, filter_image_caption, filter_page_description, filter_section_summarization,
    CorpusStats, DatasetBuilder, Distribution, FilterReport, StatsAccumulator, Verdict,
};
pub use text::{sentence_count, split_first_sentence, tokenize, SimpleTokenizer, Tokenizer};
