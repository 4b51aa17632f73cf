//! Task eligibility filters, split assignment, dataset construction and
//! corpus statistics.
//!
//! Everything here works on in-memory pages; reading and writing JSONL is
//! the companion crate's job.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Reason};
use crate::page::{is_content_section, ImageRef, Mime, Page, SectionClass, Split};
use crate::sequence::{PageDescPrefix, SequenceBuilder, Task, TaskExample};

/// Default minimum number of content sections for page description.
pub const MIN_CONTENT_SECTIONS: usize = 2;
/// Minimum sentences in a summarization target section.
pub const MIN_SUMMARY_SENTENCES: usize = 5;
/// Minimum words in a captioning reference description.
pub const MIN_REFERENCE_WORDS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Eligible,
    Reject(Reason),
}

impl Verdict {
    pub fn is_eligible(self) -> bool {
        self == Verdict::Eligible
    }
}

pub fn filter_page_description(p: &Page) -> Verdict {
    filter_page_description_with(p, MIN_CONTENT_SECTIONS)
}

/// Page-description filter with an explicit content-section threshold.
pub fn filter_page_description_with(p: &Page, min_content_sections: usize) -> Verdict {
    if p.url.to_ascii_lowercase().contains("list_of") {
        Verdict::Reject(Reason::ListHeavy)
    } else if p.raw_description.trim().is_empty() {
        Verdict::Reject(Reason::MissingDescription)
    } else if p.content_sections().count() < min_content_sections {
        Verdict::Reject(Reason::TooFewContentSections)
    } else {
        Verdict::Eligible
    }
}

pub fn filter_section_summarization(p: &Page, idx: usize) -> Verdict {
    let Some(s) = p.section(idx) else {
        return Verdict::Reject(Reason::OutOfRange);
    };
    if idx == 0 {
        Verdict::Reject(Reason::Root)
    } else if s.has_table_or_list {
        Verdict::Reject(Reason::TableOrList)
    } else if s.sentence_count() < MIN_SUMMARY_SENTENCES {
        Verdict::Reject(Reason::TooShort)
    } else {
        Verdict::Eligible
    }
}

pub fn filter_image_caption(img: &ImageRef) -> Verdict {
    if !img.in_quality_set {
        Verdict::Reject(Reason::NotInQualitySet)
    } else if img.mime == Mime::Other {
        Verdict::Reject(Reason::Mime)
    } else if img.reference_desc.split_whitespace().count() < MIN_REFERENCE_WORDS {
        Verdict::Reject(Reason::ShortReference)
    } else {
        Verdict::Eligible
    }
}

/// 64-bit FNV-1a over the bytes, finished with the SplitMix64 mixer.
pub fn stable_hash(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in s.as_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

/// Deterministic 90/5/5 split keyed by page URL.
pub fn assign_split(url: &str) -> Split {
    let u = (stable_hash(url) >> 11) as f64 / (1u64 << 53) as f64;
    if u < 0.90 {
        Split::Train
    } else if u < 0.95 {
        Split::Val
    } else {
        Split::Test
    }
}

/// Candidate and rejection accounting for one dataset build.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterReport {
    pub task: Task,
    /// Records read, malformed ones included.
    pub pages_in: u64,
    /// Pages, sections or images examined (one per record for malformed input).
    pub candidates: u64,
    pub examples_out: u64,
    pub rejections: BTreeMap<Reason, u64>,
    pub per_split: BTreeMap<Split, u64>,
}

impl FilterReport {
    pub fn new(task: Task) -> Self {
        Self {
            task,
            pages_in: 0,
            candidates: 0,
            examples_out: 0,
            rejections: BTreeMap::new(),
            per_split: BTreeMap::new(),
        }
    }

    pub fn reject(&mut self, reason: Reason) {
        self.candidates += 1;
        *self.rejections.entry(reason).or_default() += 1;
    }

    pub fn accept(&mut self, split: Split) {
        self.candidates += 1;
        self.examples_out += 1;
        *self.per_split.entry(split).or_default() += 1;
    }

    pub fn rejected(&self) -> u64 {
        self.rejections.values().sum()
    }

    /// Adds another report's counts. Associative and commutative.
    pub fn merge(&mut self, other: &FilterReport) {
        self.pages_in += other.pages_in;
        self.candidates += other.candidates;
        self.examples_out += other.examples_out;
        for (&r, &n) in &other.rejections {
            *self.rejections.entry(r).or_default() += n;
        }
        for (&s, &n) in &other.per_split {
            *self.per_split.entry(s).or_default() += n;
        }
    }
}

/// Builds one task's examples from pages.
#[derive(Clone, Copy)]
pub struct DatasetBuilder<'t> {
    pub task: Task,
    pub min_content_sections: usize,
    pub page_prefix: PageDescPrefix,
    pub sequence: SequenceBuilder<'t>,
}

impl DatasetBuilder<'static> {
    pub fn new(task: Task) -> Self {
        Self {
            task,
            min_content_sections: MIN_CONTENT_SECTIONS,
            page_prefix: PageDescPrefix::default(),
            sequence: SequenceBuilder::default(),
        }
    }
}

impl<'t> DatasetBuilder<'t> {
    /// All examples of one page in canonical order (section, then image),
    /// with a report covering just this page.
    pub fn process_page(&self, page: &Page) -> (Vec<TaskExample>, FilterReport) {
        let mut report = FilterReport::new(self.task);
        report.pages_in = 1;
        let mut out = Vec::new();
        let mut record = |built: Result<TaskExample, Error>, report: &mut FilterReport| match built {
            Ok(ex) => {
                report.accept(page.split);
                out.push(ex);
            }
            Err(Error::Ineligible(reason)) => report.reject(reason),
            Err(_) => report.reject(Reason::ParseError),
        };
        match self.task {
            Task::PageDescription => match filter_page_description_with(page, self.min_content_sections) {
                Verdict::Reject(reason) => report.reject(reason),
                Verdict::Eligible => {
                    let built = self.sequence.page_description(page, self.task.image_cap(), self.page_prefix);
                    record(built, &mut report);
                }
            },
            Task::SectionSummarization => {
                for idx in 0..page.sections().len() {
                    match filter_section_summarization(page, idx) {
                        Verdict::Reject(reason) => report.reject(reason),
                        Verdict::Eligible => {
                            let built = self.sequence.section_summarization(page, idx, self.task.image_cap());
                            record(built, &mut report);
                        }
                    }
                }
            }
            Task::ImageCaptioning => {
                for s in page.sections() {
                    for (pos, img) in s.images.iter().enumerate() {
                        match filter_image_caption(img) {
                            Verdict::Reject(reason) => report.reject(reason),
                            Verdict::Eligible => record(self.sequence.image_caption(page, s.index, pos), &mut report),
                        }
                    }
                }
            }
        }
        (out, report)
    }

    /// Streams a corpus through the filter and builders. `corpus` yields a
    /// page or the reason a record could not be read; every example is
    /// handed to `sink` in canonical order as soon as it is built.
    pub fn build(
        &self,
        corpus: impl IntoIterator<Item = Result<Page, Reason>>,
        mut sink: impl FnMut(TaskExample, Split),
    ) -> FilterReport {
        let mut report = FilterReport::new(self.task);
        for item in corpus {
            match item {
                Ok(page) => {
                    let (examples, page_report) = self.process_page(&page);
                    report.merge(&page_report);
                    for ex in examples {
                        sink(ex, page.split);
                    }
                }
                Err(reason) => {
                    report.pages_in += 1;
                    report.reject(reason);
                }
            }
        }
        report
    }
}

/// [`DatasetBuilder::build`] with default settings.
pub fn build_dataset(
    corpus: impl IntoIterator<Item = Result<Page, Reason>>,
    task: Task,
    sink: impl FnMut(TaskExample, Split),
) -> FilterReport {
    DatasetBuilder::new(task).build(corpus, sink)
}

/// Summary of a per-page count.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Distribution {
    pub median: u64,
    pub mean: f64,
    pub max: u64,
    pub p90: u64,
}

/// Nearest-rank percentile of sorted values: the `ceil(p·n)`-th smallest.
pub fn nearest_rank(sorted: &[u64], pct: u32) -> u64 {
    if sorted.is_empty() {
        return 0;
    }
    let n = sorted.len() as u64;
    let rank = (pct as u64 * n).div_ceil(100).max(1);
    sorted[(rank - 1) as usize]
}

impl Distribution {
    pub fn of(values: &[u64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let mut sorted = values.to_vec();
        sorted.sort_unstable();
        Self {
            median: nearest_rank(&sorted, 50),
            mean: sorted.iter().sum::<u64>() as f64 / sorted.len() as f64,
            max: *sorted.last().unwrap(),
            p90: nearest_rank(&sorted, 90),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub pages: u64,
    pub sections: u64,
    pub class_counts: BTreeMap<SectionClass, u64>,
    pub content_sections: u64,
    pub total_images: u64,
    pub unique_images: u64,
    pub sections_per_page: Distribution,
    pub images_per_page: Distribution,
}

/// Accumulates [`CorpusStats`] page by page.
#[derive(Debug, Clone, Default)]
pub struct StatsAccumulator {
    class_counts: BTreeMap<SectionClass, u64>,
    content_sections: u64,
    image_urls: BTreeSet<String>,
    sections_per_page: Vec<u64>,
    images_per_page: Vec<u64>,
}

impl StatsAccumulator {
    pub fn add(&mut self, page: &Page) {
        for i in 0..page.sections().len() {
            *self.class_counts.entry(page.classify(i)).or_default() += 1;
        }
        self.content_sections += page.sections().iter().filter(|s| is_content_section(s)).count() as u64;
        let mut images = 0;
        for img in page.images() {
            images += 1;
            if !self.image_urls.contains(&img.url) {
                self.image_urls.insert(img.url.clone());
            }
        }
        self.sections_per_page.push(page.sections().len() as u64);
        self.images_per_page.push(images);
    }

    pub fn finish(self) -> CorpusStats {
        let mut class_counts = self.class_counts;
        for c in SectionClass::ALL {
            class_counts.entry(c).or_default();
        }
        CorpusStats {
            pages: self.sections_per_page.len() as u64,
            sections: self.sections_per_page.iter().sum(),
            class_counts,
            content_sections: self.content_sections,
            total_images: self.images_per_page.iter().sum(),
            unique_images: self.image_urls.len() as u64,
            sections_per_page: Distribution::of(&self.sections_per_page),
            images_per_page: Distribution::of(&self.images_per_page),
        }
    }
}

pub fn corpus_stats<'a>(corpus: impl IntoIterator<Item = &'a Page>) -> CorpusStats {
    let mut acc = StatsAccumulator::default();
    for p in corpus {
        acc.add(p);
    }
    acc.finish()
}
