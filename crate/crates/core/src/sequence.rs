//! Per-task model inputs: an ordered slot sequence whose first `prefix_len`
//! slots are the global prefix and whose remainder is local context.
//!
//! Section structure is marked with a `[S<i>]` token. Each image occupies
//! exactly one slot of the prefix budget. Within a section, material is always emitted
//! as index marker, title, body, then captions.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Reason, Result};
use crate::page::{ImageRef, Page, Section};
use crate::taskpipe::{filter_image_caption, filter_section_summarization, Verdict};
use crate::text::{SimpleTokenizer, Tokenizer};

/// Global prefix size in slots.
pub const PREFIX_BUDGET: usize = 512;
/// Default page-description image count (90th percentile of images per page).
pub const PAGE_DESCRIPTION_IMAGES: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Task {
    PageDescription,
    SectionSummarization,
    ImageCaptioning,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::PageDescription, Task::SectionSummarization, Task::ImageCaptioning];

    pub fn name(self) -> &'static str {
        match self {
            Task::PageDescription => "page_description",
            Task::SectionSummarization => "section_summarization",
            Task::ImageCaptioning => "image_captioning",
        }
    }

    /// Image slots allowed in the prefix.
    pub fn image_cap(self) -> usize {
        match self {
            Task::PageDescription => PAGE_DESCRIPTION_IMAGES,
            _ => 1,
        }
    }
}

impl core::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "page-desc" | "page-description" | "page_description" => Ok(Task::PageDescription),
            "section-summ" | "section-summarization" | "section_summarization" => Ok(Task::SectionSummarization),
            "image-caption" | "image-captioning" | "image_captioning" => Ok(Task::ImageCaptioning),
            other => Err(Error::Pattern(format!("unknown task `{other}`"))),
        }
    }
}

/// Where a slot's material came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SlotOrigin {
    PageUrl,
    PageTitle,
    SectionIndex,
    SectionTitle,
    SectionFirstSentence,
    SectionBody,
    Caption,
    TargetImage,
    ContextImage,
}

impl SlotOrigin {
    pub fn name(self) -> &'static str {
        match self {
            SlotOrigin::PageUrl => "page_url",
            SlotOrigin::PageTitle => "page_title",
            SlotOrigin::SectionIndex => "section_index",
            SlotOrigin::SectionTitle => "section_title",
            SlotOrigin::SectionFirstSentence => "section_first_sentence",
            SlotOrigin::SectionBody => "section_body",
            SlotOrigin::Caption => "caption",
            SlotOrigin::TargetImage => "target_image",
            SlotOrigin::ContextImage => "context_image",
        }
    }

    /// Position of this origin within a section's emission order.
    fn section_rank(self) -> u8 {
        match self {
            SlotOrigin::SectionIndex => 0,
            SlotOrigin::SectionTitle => 1,
            SlotOrigin::SectionFirstSentence | SlotOrigin::SectionBody => 2,
            SlotOrigin::Caption => 3,
            _ => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SlotContent {
    Text(String),
    /// Embedding handle of an image.
    Image(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSlot {
    pub content: SlotContent,
    pub origin: SlotOrigin,
    /// Section the slot was taken from, if any.
    pub section: Option<usize>,
}

impl TokenSlot {
    pub fn text(&self) -> Option<&str> {
        match &self.content {
            SlotContent::Text(t) => Some(t),
            SlotContent::Image(_) => None,
        }
    }

    pub fn is_image(&self) -> bool {
        matches!(self.content, SlotContent::Image(_))
    }
}

/// A built model input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskExample {
    pub task: Task,
    pub slots: Vec<TokenSlot>,
    pub prefix_len: usize,
    pub target_text: String,
    pub source_page_url: String,
}

impl TaskExample {
    pub fn prefix(&self) -> &[TokenSlot] {
        &self.slots[..self.prefix_len]
    }

    pub fn context(&self) -> &[TokenSlot] {
        &self.slots[self.prefix_len..]
    }

    pub fn prefix_images(&self) -> usize {
        self.prefix().iter().filter(|s| s.is_image()).count()
    }

    /// True when the target's token sequence occurs contiguously among the
    /// input text slots. Image slots break runs.
    pub fn leaks_target(&self, tokenizer: &dyn Tokenizer) -> bool {
        let target = tokenizer.tokenize(&self.target_text);
        contains_run(&self.slots, &target)
    }

    /// Section material appears in ascending section order and, within a
    /// section, as index marker, title, body, captions. Checked separately
    /// for the prefix and the context; the target section of summarization
    /// and captioning examples is checked on its own, since its overflow
    /// leads the context.
    pub fn order_preserved(&self) -> bool {
        let target = match self.task {
            Task::PageDescription => None,
            _ => self.prefix().iter().find(|s| s.origin == SlotOrigin::SectionIndex).and_then(|s| s.section),
        };
        [self.prefix(), self.context()].iter().all(|part| {
            let keyed = part
                .iter()
                .filter(|s| s.origin.section_rank() < 4)
                .filter_map(|s| s.section.map(|i| (i, s.origin.section_rank())));
            let (own, rest): (Vec<_>, Vec<_>) = keyed.partition(|&(i, _)| Some(i) == target);
            own.windows(2).all(|w| w[0] <= w[1]) && rest.windows(2).all(|w| w[0] <= w[1])
        })
    }
}

fn contains_run(slots: &[TokenSlot], target: &[String]) -> bool {
    if target.is_empty() {
        return false;
    }
    slots.windows(target.len()).any(|w| w.iter().zip(target).all(|(s, t)| s.text() == Some(t.as_str())))
}

/// What the page-description prefix is made of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PageDescPrefix {
    /// Images, URL, title, then every section's title and first sentence.
    /// Material past the budget is dropped; context holds the remaining
    /// sentences and captions.
    #[default]
    TitlesAndFirstSentences,
    /// Images, URL, title, then all section content flattened in page
    /// order; the first budget slots are global and the rest spill into
    /// context.
    InOrder,
    /// Images, URL, title and section titles only.
    TitlesOnly,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Overflow {
    Drop,
    Spill,
}

struct Slots<'t> {
    tokenizer: &'t dyn Tokenizer,
    slots: Vec<TokenSlot>,
}

impl<'t> Slots<'t> {
    fn new(tokenizer: &'t dyn Tokenizer) -> Self {
        Self { tokenizer, slots: Vec::new() }
    }

    fn text(&mut self, text: &str, origin: SlotOrigin, section: Option<usize>) {
        for tok in self.tokenizer.tokenize(text) {
            self.slots.push(TokenSlot { content: SlotContent::Text(tok), origin, section });
        }
    }

    fn marker(&mut self, s: &Section) {
        self.slots.push(TokenSlot {
            content: SlotContent::Text(format!("[S{}]", s.index)),
            origin: SlotOrigin::SectionIndex,
            section: Some(s.index),
        });
    }

    fn image(&mut self, img: &ImageRef, origin: SlotOrigin, section: usize) {
        self.slots.push(TokenSlot {
            content: SlotContent::Image(img.embedding_key().to_string()),
            origin,
            section: Some(section),
        });
    }

    fn captions(&mut self, img: &ImageRef, section: usize) {
        for c in [&img.alt_text, &img.reference_desc, &img.attribution_desc] {
            self.text(c, SlotOrigin::Caption, Some(section));
        }
    }

    /// Index marker, title, full body and captions of a section.
    fn whole_section(&mut self, s: &Section) {
        self.marker(s);
        self.text(&s.title, SlotOrigin::SectionTitle, Some(s.index));
        self.text(s.first_sentence(), SlotOrigin::SectionFirstSentence, Some(s.index));
        self.text(s.rest_sentences(), SlotOrigin::SectionBody, Some(s.index));
        for img in &s.images {
            self.captions(img, s.index);
        }
    }

    fn page_header(&mut self, p: &Page) {
        self.text(&p.url, SlotOrigin::PageUrl, None);
        self.text(&p.title, SlotOrigin::PageTitle, None);
    }
}

/// Builds task inputs with a given tokenizer and prefix budget.
#[derive(Clone, Copy)]
pub struct SequenceBuilder<'t> {
    tokenizer: &'t dyn Tokenizer,
    budget: usize,
}

impl Default for SequenceBuilder<'static> {
    fn default() -> Self {
        Self { tokenizer: &SimpleTokenizer, budget: PREFIX_BUDGET }
    }
}

impl<'t> SequenceBuilder<'t> {
    pub fn new(tokenizer: &'t dyn Tokenizer) -> Self {
        Self { tokenizer, budget: PREFIX_BUDGET }
    }

    /// Overrides the prefix budget (slots).
    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    pub fn tokenizer(&self) -> &'t dyn Tokenizer {
        self.tokenizer
    }

    fn assemble(
        &self,
        task: Task,
        page: &Page,
        prefix: Slots<'_>,
        context: Slots<'_>,
        overflow: Overflow,
        target_text: &str,
    ) -> Result<TaskExample> {
        let mut slots = prefix.slots;
        let prefix_len = slots.len().min(self.budget);
        if overflow == Overflow::Drop {
            slots.truncate(prefix_len);
        }
        slots.extend(context.slots);
        let ex = TaskExample {
            task,
            slots,
            prefix_len,
            target_text: target_text.trim().to_string(),
            source_page_url: page.url.clone(),
        };
        if ex.leaks_target(self.tokenizer) {
            return Err(Error::Ineligible(Reason::TargetLeak));
        }
        Ok(ex)
    }

    pub fn page_description(&self, p: &Page, max_images: usize, variant: PageDescPrefix) -> Result<TaskExample> {
        let description = p.raw_description.trim();
        if description.is_empty() {
            return Err(Error::Ineligible(Reason::MissingDescription));
        }
        // A section whose body is the description itself contributes no text.
        let sections: Vec<&Section> = p.content_sections().collect();
        let body_usable = |s: &Section| s.body_text.trim() != description;

        let mut prefix = Slots::new(self.tokenizer);
        let mut context = Slots::new(self.tokenizer);
        let images = sections.iter().flat_map(|s| s.images.iter().map(move |img| (s.index, img)));
        for (index, img) in images.take(max_images) {
            prefix.image(img, SlotOrigin::ContextImage, index);
        }
        prefix.page_header(p);

        let overflow = match variant {
            PageDescPrefix::TitlesAndFirstSentences => {
                for s in &sections {
                    prefix.text(&s.title, SlotOrigin::SectionTitle, Some(s.index));
                    if body_usable(s) {
                        prefix.text(s.first_sentence(), SlotOrigin::SectionFirstSentence, Some(s.index));
                    }
                }
                for s in &sections {
                    context.marker(s);
                    if body_usable(s) {
                        context.text(s.rest_sentences(), SlotOrigin::SectionBody, Some(s.index));
                    }
                    for img in &s.images {
                        context.captions(img, s.index);
                    }
                }
                Overflow::Drop
            }
            PageDescPrefix::TitlesOnly => {
                for s in &sections {
                    prefix.text(&s.title, SlotOrigin::SectionTitle, Some(s.index));
                }
                for s in &sections {
                    context.marker(s);
                    if body_usable(s) {
                        context.text(s.first_sentence(), SlotOrigin::SectionFirstSentence, Some(s.index));
                        context.text(s.rest_sentences(), SlotOrigin::SectionBody, Some(s.index));
                    }
                    for img in &s.images {
                        context.captions(img, s.index);
                    }
                }
                Overflow::Drop
            }
            PageDescPrefix::InOrder => {
                for s in &sections {
                    if body_usable(s) {
                        prefix.whole_section(s);
                    } else {
                        prefix.marker(s);
                        prefix.text(&s.title, SlotOrigin::SectionTitle, Some(s.index));
                        for img in &s.images {
                            prefix.captions(img, s.index);
                        }
                    }
                }
                Overflow::Spill
            }
        };
        self.assemble(Task::PageDescription, p, prefix, context, overflow, description)
    }

    pub fn section_summarization(&self, p: &Page, target_index: usize, max_images: usize) -> Result<TaskExample> {
        if let Verdict::Reject(reason) = filter_section_summarization(p, target_index) {
            return Err(Error::Ineligible(reason));
        }
        let target = &p.sections()[target_index];
        let mut prefix = Slots::new(self.tokenizer);
        for img in target.images.iter().take(max_images) {
            prefix.image(img, SlotOrigin::ContextImage, target.index);
        }
        prefix.marker(target);
        prefix.text(&target.title, SlotOrigin::SectionTitle, Some(target.index));
        prefix.text(target.rest_sentences(), SlotOrigin::SectionBody, Some(target.index));
        for img in &target.images {
            prefix.captions(img, target.index);
        }

        let mut context = Slots::new(self.tokenizer);
        context.page_header(p);
        for s in p.content_sections().filter(|s| s.index != target_index) {
            context.whole_section(s);
        }
        self.assemble(Task::SectionSummarization, p, prefix, context, Overflow::Spill, target.first_sentence())
    }

    pub fn image_caption(&self, p: &Page, section_index: usize, image_pos: usize) -> Result<TaskExample> {
        let section = p.section(section_index).ok_or(Error::Ineligible(Reason::OutOfRange))?;
        let image = section.images.get(image_pos).ok_or(Error::Ineligible(Reason::OutOfRange))?;
        if let Verdict::Reject(reason) = filter_image_caption(image) {
            return Err(Error::Ineligible(reason));
        }
        let mut prefix = Slots::new(self.tokenizer);
        prefix.image(image, SlotOrigin::TargetImage, section.index);
        prefix.marker(section);
        prefix.text(&section.title, SlotOrigin::SectionTitle, Some(section.index));
        prefix.text(section.first_sentence(), SlotOrigin::SectionFirstSentence, Some(section.index));
        prefix.text(section.rest_sentences(), SlotOrigin::SectionBody, Some(section.index));
        for (pos, img) in section.images.iter().enumerate() {
            if pos != image_pos {
                prefix.captions(img, section.index);
            }
        }

        let mut context = Slots::new(self.tokenizer);
        context.page_header(p);
        for s in p.content_sections().filter(|s| s.index != section_index) {
            context.whole_section(s);
        }
        self.assemble(Task::ImageCaptioning, p, prefix, context, Overflow::Spill, &image.reference_desc)
    }
}

/// Page-description input with the default title-and-first-sentence prefix.
pub fn build_page_description_input(p: &Page, max_images: usize) -> Result<TaskExample> {
    SequenceBuilder::default().page_description(p, max_images, PageDescPrefix::default())
}

pub fn build_section_summarization_input(p: &Page, target_index: usize, max_images: usize) -> Result<TaskExample> {
    SequenceBuilder::default().section_summarization(p, target_index, max_images)
}

pub fn build_image_caption_input(p: &Page, section_index: usize, image_pos: usize) -> Result<TaskExample> {
    SequenceBuilder::default().image_caption(p, section_index, image_pos)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::page::{Mime, Split};
    use alloc::vec;
    use alloc::vec::Vec;

    fn texts(slots: &[TokenSlot]) -> Vec<&str> {
        slots.iter().map(|s| s.text().unwrap_or("<img>")).collect()
    }

    fn image(n: usize, reference: &str) -> ImageRef {
        let mut img = ImageRef::new(format!("https://img/{n}.jpg"), Mime::Jpeg);
        img.reference_desc = reference.into();
        img.attribution_desc = format!("attr{n}");
        img.in_quality_set = true;
        img.embedding_id = format!("emb{n}");
        img
    }

    fn page(sections: Vec<Section>) -> Page {
        Page::new("http://w/P", "Pg", "The description.", sections, Split::Train).unwrap()
    }

    #[test]
    fn page_description_trace() {
        let p = page(vec![Section::new(0, "A", "a. more a."), Section::new(1, "B", "b. more b.")]);
        let ex = build_page_description_input(&p, 6).unwrap();
        assert_eq!(texts(ex.prefix()), ["http", ":", "/", "/", "w", "/", "P", "Pg", "A", "a", ".", "B", "b", "."]);
        assert_eq!(texts(ex.context()), ["[S0]", "more", "a", ".", "[S1]", "more", "b", "."]);
        assert_eq!(ex.target_text, "The description.");
        assert!(ex.order_preserved());
    }

    #[test]
    fn page_description_budget_is_exact() {
        let long: String = (0..600).map(|i| format!("w{i} ")).collect::<String>() + ".";
        let p = page(vec![Section::new(0, "A", long.as_str()), Section::new(1, "B", "b.")]);
        let ex = build_page_description_input(&p, 6).unwrap();
        assert_eq!(ex.prefix_len, 512);
        assert!(ex.context().iter().all(|s| s.origin != SlotOrigin::SectionFirstSentence));
    }

    #[test]
    fn page_description_image_cap() {
        let imgs: Vec<ImageRef> = (0..9).map(|i| image(i, "a red car")).collect();
        let p = page(vec![Section::new(0, "A", "a.").with_images(imgs[..4].to_vec()), Section::new(1, "B", "b.").with_images(imgs[4..].to_vec())]);
        let ex = build_page_description_input(&p, 6).unwrap();
        assert_eq!(ex.prefix_images(), 6);
        assert_eq!(ex.slots.iter().filter(|s| s.is_image()).count(), 6);
        assert!(ex.prefix()[..6].iter().all(TokenSlot::is_image));
    }

    #[test]
    fn page_description_needs_description() {
        let p = Page::new("u", "T", "  ", vec![Section::new(0, "A", "a.")], Split::Train).unwrap();
        assert_eq!(build_page_description_input(&p, 6), Err(Error::Ineligible(Reason::MissingDescription)));
    }

    #[test]
    fn description_section_is_not_input() {
        let p = page(vec![Section::new(0, "", "The description."), Section::new(1, "B", "b.")]);
        let ex = build_page_description_input(&p, 6).unwrap();
        assert!(!ex.leaks_target(&SimpleTokenizer));
        assert!(!texts(&ex.slots).contains(&"description"));
    }

    #[test]
    fn variants_differ_in_prefix() {
        let p = page(vec![Section::new(0, "A", "a1. a2."), Section::new(1, "B", "b1. b2.")]);
        let b = SequenceBuilder::default();
        let titles = b.page_description(&p, 6, PageDescPrefix::TitlesOnly).unwrap();
        assert_eq!(&texts(titles.prefix())[7..], ["Pg", "A", "B"]);
        let in_order = b.page_description(&p, 6, PageDescPrefix::InOrder).unwrap();
        assert_eq!(&texts(in_order.prefix())[8..], ["[S0]", "A", "a1", ".", "a2", ".", "[S1]", "B", "b1", ".", "b2", "."]);
        assert!(in_order.context().is_empty());
        let small = b.with_budget(10).page_description(&p, 6, PageDescPrefix::InOrder).unwrap();
        assert_eq!(small.prefix_len, 10);
        assert_eq!(small.slots.len(), in_order.slots.len());
    }

    fn five(s: &str) -> String {
        (1..=5).map(|i| format!("{s}{i} x.")).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn summarization_removes_pseudo_summary() {
        let p = page(vec![Section::new(0, "Intro", "r."), Section::new(1, "T", "s1. s2. s3. s4. s5.")]);
        let ex = build_section_summarization_input(&p, 1, 1).unwrap();
        assert_eq!(ex.target_text, "s1.");
        assert_eq!(texts(ex.prefix()), ["[S1]", "T", "s2", ".", "s3", ".", "s4", ".", "s5", "."]);
        assert!(!texts(&ex.slots).contains(&"s1"));
        assert_eq!(texts(ex.context())[..7], ["http", ":", "/", "/", "w", "/", "P"]);
    }

    #[test]
    fn summarization_one_image() {
        let imgs: Vec<ImageRef> = (0..3).map(|i| image(i, "cap")).collect();
        let p = page(vec![Section::new(0, "", "r."), Section::new(1, "T", five("s").as_str()).with_images(imgs)]);
        let ex = build_section_summarization_input(&p, 1, 1).unwrap();
        assert_eq!(ex.prefix_images(), 1);
        assert!(ex.prefix()[0].is_image());
        assert_eq!(ex.slots.iter().filter(|s| s.is_image()).count(), 1);
    }

    #[test]
    fn summarization_lone_target_context_is_header() {
        let p = page(vec![Section::new(0, "", "").with_table_or_list(true), Section::new(1, "T", five("s").as_str())]);
        let ex = build_section_summarization_input(&p, 1, 1).unwrap();
        assert_eq!(texts(ex.context()), ["http", ":", "/", "/", "w", "/", "P", "Pg"]);
    }

    #[test]
    fn summarization_errors() {
        let p = page(vec![Section::new(0, "", five("r").as_str()), Section::new(1, "T", "short.")]);
        assert_eq!(build_section_summarization_input(&p, 0, 1), Err(Error::Ineligible(Reason::Root)));
        assert_eq!(build_section_summarization_input(&p, 1, 1), Err(Error::Ineligible(Reason::TooShort)));
        assert_eq!(build_section_summarization_input(&p, 7, 1), Err(Error::Ineligible(Reason::OutOfRange)));
    }

    #[test]
    fn summarization_spills_past_budget() {
        let body: String = (0..700).map(|i| format!("w{i}. ")).collect();
        let p = page(vec![Section::new(0, "", "r."), Section::new(1, "T", body.as_str())]);
        let ex = build_section_summarization_input(&p, 1, 1).unwrap();
        assert_eq!(ex.prefix_len, 512);
        assert_eq!(ex.context()[0].origin, SlotOrigin::SectionBody);
        assert!(ex.order_preserved());
    }

    #[test]
    fn captioning_uses_non_target_captions() {
        let p = page(vec![Section::new(0, "S", "Body text.").with_images(vec![image(0, "a red car"), image(1, "blue sky above")])]);
        let ex = build_image_caption_input(&p, 0, 0).unwrap();
        let prefix = texts(ex.prefix());
        assert_eq!(ex.prefix()[0].origin, SlotOrigin::TargetImage);
        assert!(prefix.contains(&"sky") && prefix.contains(&"attr1"));
        assert!(!prefix.contains(&"red") && !prefix.contains(&"attr0"));
        assert_eq!(ex.target_text, "a red car");
        assert!(!ex.leaks_target(&SimpleTokenizer));
        assert_eq!(texts(ex.context()), ["http", ":", "/", "/", "w", "/", "P", "Pg"]);
        assert_eq!(ex.slots.iter().filter(|s| s.is_image()).count(), 1);
    }

    #[test]
    fn captioning_errors() {
        let mut low = image(0, "a red car");
        low.in_quality_set = false;
        let p = page(vec![Section::new(0, "S", "x.").with_images(vec![low])]);
        assert_eq!(build_image_caption_input(&p, 0, 0), Err(Error::Ineligible(Reason::NotInQualitySet)));
        assert_eq!(build_image_caption_input(&p, 0, 3), Err(Error::Ineligible(Reason::OutOfRange)));
    }

    #[test]
    fn leaking_caption_is_rejected() {
        let p = page(vec![Section::new(0, "S", "I saw a red car today.").with_images(vec![image(0, "a red car")])]);
        assert_eq!(build_image_caption_input(&p, 0, 0), Err(Error::Ineligible(Reason::TargetLeak)));
    }

    #[test]
    fn builds_are_deterministic() {
        let p = page(vec![Section::new(0, "A", "a. b."), Section::new(1, "B", five("t").as_str()).with_images(vec![image(2, "one two three")])]);
        assert_eq!(build_page_description_input(&p, 6), build_page_description_input(&p, 6));
        assert_eq!(build_section_summarization_input(&p, 1, 1), build_section_summarization_input(&p, 1, 1));
        assert_eq!(build_image_caption_input(&p, 1, 0), build_image_caption_input(&p, 1, 0));
    }
}
