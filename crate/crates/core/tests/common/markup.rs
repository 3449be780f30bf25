//! Random heading markup and a brute-force model of its tree.

use paperlens_core::doc_model::{Section, SectionTree};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;

pub const WORDS: &[&str] = &[
    "attention",
    "model",
    "encoder",
    "layer",
    "results",
    "we",
    "propose",
    "a",
    "novel",
    "training",
    "data",
    "figure",
    "table",
    "loss",
    "$x_i$",
    "#hashtag",
    "50%",
    "(see",
    "below)",
    "transformer",
    "*bold*",
];

pub const TITLES: &[&str] = &[
    "Introduction",
    "Related Work",
    "3.2 Scaled Dot-Product Attention",
    "Results",
    "IV. DISCUSSION",
    "Conclusion",
    "Model Architecture",
    "Why Self-Attention",
    "A. Proofs",
    "Training Data",
];

pub fn sentence(rng: &mut StdRng) -> String {
    let n = rng.gen_range(1..12);
    (0..n)
        .map(|_| *WORDS.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Body lines whose first and last line are non-blank; interior blank lines
/// and fenced blocks (which may hold `#` lines) are allowed.
pub fn body(rng: &mut StdRng) -> String {
    if rng.gen_bool(0.15) {
        return String::new();
    }
    let mut lines = vec![sentence(rng)];
    for _ in 0..rng.gen_range(0..4) {
        match rng.gen_range(0..5) {
            0 => lines.push(String::new()),
            1 => {
                lines.push("```".into());
                lines.push("# comment inside a fence".into());
                lines.push("```".into());
            }
            2 => lines.push("$$\n\\sum_i x_i\n$$".into()),
            _ => {}
        }
        lines.push(sentence(rng));
    }
    lines.join("\n")
}

pub struct GenHeading {
    pub level: u8,
    pub title: String,
    pub body: String,
}

pub fn random_document(rng: &mut StdRng) -> (Option<String>, Vec<GenHeading>) {
    let front = rng
        .gen_bool(0.4)
        .then(|| format!("{}\n{}", sentence(rng), sentence(rng)));
    let n = rng.gen_range(0..14);
    let headings = (0..n)
        .map(|_| GenHeading {
            level: rng.gen_range(1..=6),
            title: TITLES.choose(rng).unwrap().to_string(),
            body: body(rng),
        })
        .collect();
    (front, headings)
}

pub fn render(front: &Option<String>, headings: &[GenHeading]) -> String {
    let mut out = String::new();
    if let Some(f) = front {
        out.push_str(f);
        out.push_str("\n\n");
    }
    for h in headings {
        out.push_str(&"#".repeat(h.level as usize));
        out.push(' ');
        out.push_str(&h.title);
        out.push_str("\n\n");
        out.push_str(&h.body);
        out.push_str("\n\n");
    }
    out
}

/// (title, level, body, parent position) in reading order.
pub fn flatten(tree: &SectionTree) -> Vec<(String, u8, String, Option<usize>)> {
    fn walk(
        sections: &[Section],
        parent: Option<usize>,
        out: &mut Vec<(String, u8, String, Option<usize>)>,
    ) {
        for s in sections {
            let me = out.len();
            out.push((s.title.clone(), s.level, s.body.clone(), parent));
            walk(&s.children, Some(me), out);
        }
    }
    let mut out = Vec::new();
    walk(&tree.root_sections, None, &mut out);
    out
}

/// Brute force: each heading's parent is the nearest earlier heading with a
/// strictly smaller level.
pub fn stack_oracle(
    front: &Option<String>,
    headings: &[GenHeading],
) -> Vec<(String, u8, String, Option<usize>)> {
    let mut out = Vec::new();
    let offset = usize::from(front.is_some());
    if let Some(f) = front {
        out.push(("Front Matter".to_string(), 1, f.clone(), None));
    }
    for (i, h) in headings.iter().enumerate() {
        let parent = (0..i)
            .rev()
            .find(|&j| headings[j].level < h.level)
            .map(|j| j + offset);
        out.push((h.title.clone(), h.level, h.body.clone(), parent));
    }
    out
}
