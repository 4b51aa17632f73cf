//! Structured webpage records: pages, sections and images.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::text::{sentence_count, split_first_sentence};

/// Dataset split a page belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl core::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "valid" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Shape(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mime {
    Jpeg,
    Png,
    Other,
}

impl Mime {
    /// Parses `image/jpeg`, `jpeg`, `jpg`, `image/png`, `png`; anything else is `Other`.
    pub fn parse(s: &str) -> Self {
        let s = s.trim();
        let s = s.strip_prefix("image/").unwrap_or(s);
        if s.eq_ignore_ascii_case("jpeg") || s.eq_ignore_ascii_case("jpg") {
            Mime::Jpeg
        } else if s.eq_ignore_ascii_case("png") {
            Mime::Png
        } else {
            Mime::Other
        }
    }
}

/// One image placed in a section.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRef {
    pub url: String,
    pub mime: Mime,
    pub alt_text: String,
    /// Caption shown directly below the image on this page.
    pub reference_desc: String,
    /// Caption attached to the image wherever it appears.
    pub attribution_desc: String,
    /// Image came from the curated caption-quality set.
    pub in_quality_set: bool,
    /// Opaque handle of a precomputed image vector.
    pub embedding_id: String,
}

impl ImageRef {
    pub fn new(url: impl Into<String>, mime: Mime) -> Self {
        Self {
            url: url.into(),
            mime,
            alt_text: String::new(),
            reference_desc: String::new(),
            attribution_desc: String::new(),
            in_quality_set: false,
            embedding_id: String::new(),
        }
    }

    /// Embedding handle, falling back to the URL.
    pub fn embedding_key(&self) -> &str {
        if self.embedding_id.is_empty() {
            &self.url
        } else {
            &self.embedding_id
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Section {
    pub index: usize,
    pub title: String,
    pub body_text: String,
    first_sentence: String,
    rest_sentences: String,
    pub parent_index: Option<usize>,
    pub depth: usize,
    pub images: Vec<ImageRef>,
    pub has_table_or_list: bool,
}

impl Section {
    /// Section with the given body; first/rest sentences are derived from it.
    pub fn new(index: usize, title: impl Into<String>, body_text: impl Into<String>) -> Self {
        let body_text = body_text.into();
        let (first, rest) = split_first_sentence(&body_text);
        Self {
            index,
            title: title.into(),
            first_sentence: first.into(),
            rest_sentences: rest.into(),
            body_text,
            parent_index: None,
            depth: 0,
            images: Vec::new(),
            has_table_or_list: false,
        }
    }

    pub fn with_parent(mut self, parent: usize, depth: usize) -> Self {
        self.parent_index = Some(parent);
        self.depth = depth;
        self
    }

    pub fn with_images(mut self, images: Vec<ImageRef>) -> Self {
        self.images = images;
        self
    }

    pub fn with_table_or_list(mut self, flag: bool) -> Self {
        self.has_table_or_list = flag;
        self
    }

    pub fn first_sentence(&self) -> &str {
        &self.first_sentence
    }

    /// Body text after the first sentence.
    pub fn rest_sentences(&self) -> &str {
        &self.rest_sentences
    }

    pub fn sentence_count(&self) -> usize {
        sentence_count(&self.body_text)
    }

    fn has_text(&self) -> bool {
        !self.body_text.trim().is_empty()
    }
}

/// Section taxonomy by immediate content.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SectionClass {
    /// No immediate content, holds subsections.
    Structural,
    /// No immediate content, no subsections.
    Heading,
    TextOnly,
    ImageOnly,
    Both,
}

impl SectionClass {
    pub const ALL: [SectionClass; 5] = [
        SectionClass::Structural,
        SectionClass::Heading,
        SectionClass::TextOnly,
        SectionClass::ImageOnly,
        SectionClass::Both,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SectionClass::Structural => "structural",
            SectionClass::Heading => "heading",
            SectionClass::TextOnly => "text_only",
            SectionClass::ImageOnly => "image_only",
            SectionClass::Both => "both",
        }
    }
}

pub fn classify_section(s: &Section, has_children: bool) -> SectionClass {
    match (s.has_text(), !s.images.is_empty()) {
        (true, true) => SectionClass::Both,
        (true, false) => SectionClass::TextOnly,
        (false, true) => SectionClass::ImageOnly,
        (false, false) if has_children => SectionClass::Structural,
        (false, false) => SectionClass::Heading,
    }
}

/// Has text or images and carries no table or list.
pub fn is_content_section(s: &Section) -> bool {
    (s.has_text() || !s.images.is_empty()) && !s.has_table_or_list
}

/// A webpage with ordered sections.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Page {
    pub url: String,
    pub title: String,
    pub raw_description: String,
    sections: Vec<Section>,
    pub split: Split,
}

impl Page {
    /// Validates section indexing, parent links and depths.
    pub fn new(
        url: impl Into<String>,
        title: impl Into<String>,
        raw_description: impl Into<String>,
        sections: Vec<Section>,
        split: Split,
    ) -> Result<Self> {
        let url = url.into();
        if url.trim().is_empty() {
            return Err(Error::Shape("page url is empty".into()));
        }
        for (i, s) in sections.iter().enumerate() {
            if s.index != i {
                return Err(Error::Shape(format!("section at position {i} has index {}", s.index)));
            }
            let expected_depth = match s.parent_index {
                None => 0,
                Some(p) if p < i => sections[p].depth + 1,
                Some(p) => {
                    return Err(Error::Shape(format!("section {i} has parent {p} that does not precede it")));
                }
            };
            if s.depth != expected_depth {
                return Err(Error::Shape(format!(
                    "section {i} has depth {} but its parent chain gives {expected_depth}",
                    s.depth
                )));
            }
            if let Some(img) = s.images.iter().find(|img| img.url.trim().is_empty()) {
                return Err(Error::Shape(format!("section {i} has an image without url ({:?})", img.alt_text)));
            }
        }
        Ok(Self { url, title: title.into(), raw_description: raw_description.into(), sections, split })
    }

    pub fn sections(&self) -> &[Section] {
        &self.sections
    }

    pub fn section(&self, i: usize) -> Option<&Section> {
        self.sections.get(i)
    }

    pub fn has_children(&self, i: usize) -> bool {
        self.sections.iter().any(|s| s.parent_index == Some(i))
    }

    pub fn classify(&self, i: usize) -> SectionClass {
        classify_section(&self.sections[i], self.has_children(i))
    }

    /// Content sections in page order.
    pub fn content_sections(&self) -> impl Iterator<Item = &Section> {
        self.sections.iter().filter(|s| is_content_section(s))
    }

    /// All images in page order.
    pub fn images(&self) -> impl Iterator<Item = &ImageRef> {
        self.sections.iter().flat_map(|s| s.images.iter())
    }
}
