//! JSONL corpus format.
//!
//! One page per line. Field names follow the upstream dataset's snake_case schema;
//! sections nest under `sections` and images under `section_images`.
//! Unknown fields are ignored.
//!
//! ```json
//! {"page_url": "...", "page_title": "...", "raw_page_description": "...",
//!  "sections": [{"section_index": 0, "section_title": "", "section_text": "...",
//!                "section_parent_index": null, "section_depth": 0,
//!                "section_contains_table_or_list": false,
//!                "section_images": [{"section_image_url": "...",
//!                                    "section_image_mime_type": "image/jpeg",
//!                                    "section_image_alt_text_desc": "...",
//!                                    "section_image_raw_ref_desc": "...",
//!                                    "section_image_raw_attr_desc": "...",
//!                                    "section_image_in_WIT": true}]}]}
//! ```

use std::collections::HashSet;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use prefix_global_core::page::{ImageRef, Mime, Page, Section, Split};
use prefix_global_core::taskpipe::assign_split;
use prefix_global_core::Reason;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageRecord {
    pub page_url: String,
    #[serde(default)]
    pub page_title: String,
    #[serde(default)]
    pub raw_page_description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
    #[serde(default)]
    pub sections: Vec<SectionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionRecord {
    pub section_index: usize,
    #[serde(default)]
    pub section_title: String,
    #[serde(default)]
    pub section_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub section_raw_1st_sentence: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub section_rest_sentence: Option<String>,
    #[serde(default)]
    pub section_parent_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub section_depth: Option<usize>,
    #[serde(default)]
    pub section_contains_table_or_list: bool,
    #[serde(default)]
    pub section_images: Vec<ImageRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub section_image_url: String,
    #[serde(default)]
    pub section_image_mime_type: String,
    #[serde(default)]
    pub section_image_alt_text_desc: String,
    #[serde(default)]
    pub section_image_raw_ref_desc: String,
    #[serde(default)]
    pub section_image_raw_attr_desc: String,
    #[serde(default, rename = "section_image_in_WIT")]
    pub section_image_in_wit: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub section_image_embedding_id: String,
}

/// Why a line did not yield a page.
#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid page: {0}")]
    Page(#[from] prefix_global_core::Error),
    #[error("stored {field} disagrees with section_text in section {index}")]
    SentenceMismatch { field: &'static str, index: usize },
}

impl PageRecord {
    pub fn into_page(self) -> Result<Page, RecordError> {
        let mut sections: Vec<Section> = Vec::with_capacity(self.sections.len());
        for rec in self.sections {
            let depth = match (rec.section_depth, rec.section_parent_index) {
                (Some(d), _) => d,
                (None, None) => 0,
                (None, Some(p)) => sections.get(p).map_or(usize::MAX, |s| s.depth + 1),
            };
            let mut s = Section::new(rec.section_index, rec.section_title, rec.section_text)
                .with_table_or_list(rec.section_contains_table_or_list)
                .with_images(rec.section_images.into_iter().map(ImageRecord::into_image).collect());
            if let Some(parent) = rec.section_parent_index {
                s = s.with_parent(parent, depth);
            } else {
                s.depth = depth;
            }
            if let Some(first) = &rec.section_raw_1st_sentence {
                if first.trim() != s.first_sentence() {
                    return Err(RecordError::SentenceMismatch { field: "section_raw_1st_sentence", index: s.index });
                }
            }
            if let Some(rest) = &rec.section_rest_sentence {
                if rest.trim() != s.rest_sentences() {
                    return Err(RecordError::SentenceMismatch { field: "section_rest_sentence", index: s.index });
                }
            }
            sections.push(s);
        }
        let split = match self.split.as_deref() {
            Some(name) => name.parse::<Split>()?,
            None => assign_split(&self.page_url),
        };
        Ok(Page::new(self.page_url, self.page_title, self.raw_page_description, sections, split)?)
    }

    pub fn from_page(page: &Page) -> Self {
        Self {
            page_url: page.url.clone(),
            page_title: page.title.clone(),
            raw_page_description: page.raw_description.clone(),
            split: None,
            sections: page
                .sections()
                .iter()
                .map(|s| SectionRecord {
                    section_index: s.index,
                    section_title: s.title.clone(),
                    section_text: s.body_text.clone(),
                    section_raw_1st_sentence: None,
                    section_rest_sentence: None,
                    section_parent_index: s.parent_index,
                    section_depth: Some(s.depth),
                    section_contains_table_or_list: s.has_table_or_list,
                    section_images: s.images.iter().map(ImageRecord::from_image).collect(),
                })
                .collect(),
        }
    }
}

impl ImageRecord {
    fn into_image(self) -> ImageRef {
        ImageRef {
            url: self.section_image_url,
            mime: Mime::parse(&self.section_image_mime_type),
            alt_text: self.section_image_alt_text_desc,
            reference_desc: self.section_image_raw_ref_desc,
            attribution_desc: self.section_image_raw_attr_desc,
            in_quality_set: self.section_image_in_wit,
            embedding_id: self.section_image_embedding_id,
        }
    }

    fn from_image(img: &ImageRef) -> Self {
        Self {
            section_image_url: img.url.clone(),
            section_image_mime_type: match img.mime {
                Mime::Jpeg => "image/jpeg".into(),
                Mime::Png => "image/png".into(),
                Mime::Other => "image/gif".into(),
            },
            section_image_alt_text_desc: img.alt_text.clone(),
            section_image_raw_ref_desc: img.reference_desc.clone(),
            section_image_raw_attr_desc: img.attribution_desc.clone(),
            section_image_in_wit: img.in_quality_set,
            section_image_embedding_id: img.embedding_id.clone(),
        }
    }
}

pub fn parse_page(line: &str) -> Result<Page, RecordError> {
    serde_json::from_str::<PageRecord>(line)?.into_page()
}

/// Reads non-blank lines of a JSONL stream, numbering them from 1.
pub fn lines<R: BufRead>(reader: R) -> impl Iterator<Item = std::io::Result<(usize, String)>> {
    reader
        .lines()
        .enumerate()
        .map(|(i, l)| l.map(|l| (i + 1, l)))
        .filter(|r| r.as_ref().map_or(true, |(_, l)| !l.trim().is_empty()))
}

/// Tracks page URLs already seen in a corpus.
#[derive(Debug, Default)]
pub struct UrlGuard {
    seen: HashSet<String>,
}

impl UrlGuard {
    /// Passes a page through the first time its URL is seen.
    pub fn admit(&mut self, page: Result<Page, Reason>) -> Result<Page, Reason> {
        let page = page?;
        if self.seen.insert(page.url.clone()) {
            Ok(page)
        } else {
            Err(Reason::DuplicateUrl)
        }
    }
}
