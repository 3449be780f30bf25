//! Synthetic papers with known figure and table ownership.

use std::collections::BTreeMap;
use std::path::Path;

use paperlens_core::alignment::{align_assets, AlignedDocument};
use paperlens_core::doc_model::{normalize_title, parse_markup, split_pages, SectionTree};
use paperlens_core::ingestion::{Asset, AssetKind, Region};
use paperlens_core::text::estimate_tokens;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;

pub const TOPICS: &[(&str, &[&str])] = &[
    (
        "Introduction",
        &[
            "motivation",
            "problem",
            "challenge",
            "contribution",
            "overview",
            "gap",
        ],
    ),
    (
        "Related Work",
        &[
            "prior",
            "literature",
            "survey",
            "baseline",
            "compare",
            "earlier",
        ],
    ),
    (
        "Model Architecture",
        &[
            "encoder",
            "decoder",
            "layer",
            "residual",
            "embedding",
            "stack",
        ],
    ),
    (
        "Training",
        &[
            "optimizer",
            "schedule",
            "warmup",
            "batch",
            "regularization",
            "dropout",
        ],
    ),
    (
        "Datasets",
        &[
            "corpus",
            "annotation",
            "split",
            "collection",
            "license",
            "samples",
        ],
    ),
    (
        "Experiments",
        &[
            "setup",
            "hardware",
            "benchmark",
            "configuration",
            "runs",
            "seeds",
        ],
    ),
    (
        "Results",
        &[
            "accuracy",
            "score",
            "improvement",
            "outperforms",
            "bleu",
            "gain",
        ],
    ),
    (
        "Ablation Study",
        &[
            "remove",
            "variant",
            "component",
            "contribution",
            "degrades",
            "heads",
        ],
    ),
    (
        "Discussion",
        &[
            "limitation",
            "insight",
            "interpretation",
            "surprising",
            "caveat",
            "future",
        ],
    ),
    (
        "Conclusion",
        &[
            "summary", "conclude", "findings", "closing", "outlook", "final",
        ],
    ),
];

const FILLER: &[&str] = &[
    "the", "we", "this", "paper", "method", "approach", "data", "model", "show", "our",
];

pub struct SyntheticDoc {
    pub markup: String,
    pub page_breaks: Vec<usize>,
    pub assets: Vec<Asset>,
    /// Canonical title of the true owner, parallel to `assets`.
    pub truth: Vec<String>,
    /// Display titles of the content sections in order.
    pub titles: Vec<String>,
}

impl SyntheticDoc {
    pub fn tree(&self) -> SectionTree {
        parse_markup(&self.markup, Some(&self.page_breaks))
    }

    pub fn align(&self) -> AlignedDocument {
        align_assets(self.tree(), self.assets.clone()).unwrap()
    }

    /// True (section, kind) -> ordinals in document order.
    pub fn truth_ordinals(&self) -> BTreeMap<(String, AssetKind), Vec<u32>> {
        let mut out: BTreeMap<(String, AssetKind), Vec<u32>> = BTreeMap::new();
        for (a, t) in self.assets.iter().zip(&self.truth) {
            out.entry((t.clone(), a.kind)).or_default().push(a.ordinal);
        }
        out
    }
}

fn words(rng: &mut StdRng, vocab: &[&str], n: usize) -> String {
    (0..n)
        .map(|_| {
            if rng.gen_bool(0.5) {
                *vocab.choose(rng).unwrap()
            } else {
                *FILLER.choose(rng).unwrap()
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// A paper with a title heading and author block, 3 to 8 content sections
/// each starting on a fresh page, and 0 to 3 assets per section whose page,
/// caption and (usually) an in-text reference point to the owner.
///
/// When `image_dir` is given a small PNG is written for every asset.
pub fn synthetic_doc(
    rng: &mut StdRng,
    image_dir: Option<&Path>,
    max_assets_per_section: usize,
) -> SyntheticDoc {
    let mut topics: Vec<&(&str, &[&str])> = TOPICS.iter().collect();
    topics.shuffle(rng);
    topics.truncate(rng.gen_range(3..=8));

    let mut raw = String::from(
        "# A Synthetic Study of Things\n\nJane Doe, John Smith\nUniversity of Nowhere\n\n",
    );
    let mut assets = Vec::new();
    let mut truth = Vec::new();
    let mut titles = Vec::new();
    let mut page = 1u32;
    let mut ordinals = [0u32; 2];
    for (n, (title, vocab)) in topics.iter().enumerate() {
        raw.push('\u{c}');
        page += 1;
        let first_page = page;
        let span = rng.gen_range(1..=3u32);
        let display = format!("{} {}", n + 1, title);
        titles.push(display.clone());
        let mut cursor = first_page;
        let mut paragraphs = vec![words(rng, vocab, 40)];
        for _ in 0..rng.gen_range(0..=max_assets_per_section) {
            let kind = if rng.gen_bool(0.6) {
                AssetKind::Figure
            } else {
                AssetKind::Table
            };
            let slot = usize::from(kind == AssetKind::Table);
            ordinals[slot] += 1;
            let ordinal = ordinals[slot];
            let label = ordinal.to_string();
            // pages and vertical positions never go backwards, so document
            // order and ordinal order agree
            let asset_page = (first_page + rng.gen_range(0..span)).max(cursor);
            cursor = asset_page;
            let top = 10.0 * assets.len() as f64;
            if rng.gen_bool(0.7) {
                paragraphs.push(format!(
                    "As {} {ordinal} shows, {}.",
                    kind.display(),
                    words(rng, vocab, 8)
                ));
            }
            let caption = format!("{} {ordinal}: {}", kind.display(), words(rng, vocab, 6));
            let file = format!("{}-{ordinal}.png", kind.as_str());
            let image_path = match image_dir {
                Some(dir) => {
                    let path = dir.join(&file);
                    image::RgbImage::from_pixel(
                        4,
                        3,
                        image::Rgb([(ordinal * 20 % 256) as u8, 90, 160]),
                    )
                    .save(&path)
                    .unwrap();
                    path
                }
                None => Path::new("/nonexistent").join(&file),
            };
            assets.push(Asset {
                kind,
                ordinal,
                label,
                caption,
                page: asset_page,
                region: Some(Region {
                    x1: 50.0,
                    y1: top,
                    x2: 500.0,
                    y2: top + 8.0,
                }),
                image_path,
                aligned_section: None,
                section_ordinal: None,
            });
            truth.push(normalize_title(title));
        }
        raw.push_str(&format!("## {display}\n\n{}\n", paragraphs.join("\n\n")));
        for _ in 1..span {
            raw.push('\u{c}');
            page += 1;
            raw.push_str(&words(rng, vocab, 30));
            raw.push('\n');
        }
    }
    let (markup, page_breaks) = split_pages(&raw);
    SyntheticDoc {
        markup,
        page_breaks,
        assets,
        truth,
        titles,
    }
}

/// Prose of roughly `tokens` tokens in paragraphs of a few sentences.
pub fn prose(rng: &mut StdRng, vocab: &[&str], tokens: usize) -> String {
    let mut out = String::new();
    let mut sentence_words = 0;
    let mut sentences = 0;
    while estimate_tokens(&out) < tokens {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(vocab.choose(rng).unwrap());
        sentence_words += 1;
        if sentence_words >= rng.gen_range(8..20) {
            out.push('.');
            sentence_words = 0;
            sentences += 1;
            if sentences % 5 == 0 {
                out.push_str("\n\n");
            }
        }
    }
    out.trim().to_string()
}
