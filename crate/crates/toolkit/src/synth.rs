//! Seeded synthetic corpora for load and determinism testing.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{ImageRecord, PageRecord, SectionRecord};

const WORDS: &[&str] = &[
    "river", "stone", "bridge", "valley", "harbor", "market", "tower", "garden", "forest", "island", "village",
    "castle", "railway", "temple", "meadow", "canal", "church", "museum", "school", "library", "founded", "built",
    "named", "located", "known", "early", "later", "northern", "southern", "ancient", "modern", "famous", "large",
    "small", "the", "a", "of", "in", "and", "with", "near", "during", "century", "war", "trade", "population",
];
const TITLES: &[&str] =
    &["History", "Geography", "Economy", "Culture", "Climate", "Transport", "Education", "Sport", "Notes", "Gallery"];
const MIMES: &[&str] = &["image/jpeg", "image/jpeg", "image/png", "image/gif", "image/svg+xml"];

fn sentence(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(4..12);
    let words: Vec<&str> = (0..n).map(|_| *WORDS.choose(rng).expect("nonempty")).collect();
    let mut s = words.join(" ");
    s[..1].make_ascii_uppercase();
    s.push('.');
    s
}

fn text(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> String {
    let sentences = rng.random_range(lo..hi);
    (0..sentences).map(|_| sentence(rng)).collect::<Vec<_>>().join(" ")
}

fn phrase(rng: &mut ChaCha8Rng, max_words: usize) -> String {
    let n = rng.random_range(0..=max_words);
    (0..n).map(|_| *WORDS.choose(rng).expect("nonempty")).collect::<Vec<_>>().join(" ")
}

/// One synthetic page. The same `(seed, n)` always gives the same record.
pub fn page(rng: &mut ChaCha8Rng, n: usize) -> PageRecord {
    let list = rng.random_bool(0.05);
    let title = format!("{} {n}", if list { "List of places" } else { "Place" });
    let page_url = format!("https://en.example.org/wiki/{}", title.replace(' ', "_"));
    let raw_page_description = if rng.random_bool(0.9) { text(rng, 1, 3) } else { String::new() };
    let n_sections = rng.random_range(1..9);
    let mut sections: Vec<SectionRecord> = Vec::with_capacity(n_sections);
    let mut image_no = 0;
    for idx in 0..n_sections {
        let parent = if idx == 0 { None } else { Some(rng.random_range(0..idx)) };
        let depth = parent.map_or(0, |p| sections[p].section_depth.unwrap_or(0) + 1);
        let body = if rng.random_bool(0.8) { text(rng, 1, 9) } else { String::new() };
        let n_images = if rng.random_bool(0.4) { rng.random_range(1..4) } else { 0 };
        let images = (0..n_images)
            .map(|_| {
                image_no += 1;
                // Occasionally reuse an image across pages.
                let url = if rng.random_bool(0.1) {
                    format!("https://img.example.org/shared/{}.jpg", rng.random_range(0..5))
                } else {
                    format!("https://img.example.org/{n}/{image_no}.jpg")
                };
                ImageRecord {
                    section_image_url: url,
                    section_image_mime_type: (*MIMES.choose(rng).expect("nonempty")).into(),
                    section_image_alt_text_desc: phrase(rng, 4),
                    section_image_raw_ref_desc: phrase(rng, 8),
                    section_image_raw_attr_desc: phrase(rng, 6),
                    section_image_in_wit: rng.random_bool(0.8),
                    section_image_embedding_id: String::new(),
                }
            })
            .collect();
        sections.push(SectionRecord {
            section_index: idx,
            section_title: if idx == 0 { String::new() } else { (*TITLES.choose(rng).expect("nonempty")).into() },
            section_text: body,
            section_raw_1st_sentence: None,
            section_rest_sentence: None,
            section_parent_index: parent,
            section_depth: Some(depth),
            section_contains_table_or_list: rng.random_bool(0.1),
            section_images: images,
        });
    }
    PageRecord { page_url, page_title: title, raw_page_description, split: None, sections }
}

/// `pages` JSONL lines, newline-terminated.
pub fn corpus(pages: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::new();
    for n in 0..pages {
        out.push_str(&serde_json::to_string(&page(&mut rng, n)).expect("record serialization cannot fail"));
        out.push('\n');
    }
    out
}
