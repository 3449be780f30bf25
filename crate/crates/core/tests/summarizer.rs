mod common;

use common::synth::{prose, TOPICS};
use common::{recording_gateway, user_text};
use paperlens_core::alignment::align_assets;
use paperlens_core::doc_model::{parse_markup, Section};
use paperlens_core::llm::{MockProvider, Responder};
use paperlens_core::prompt::PromptPack;
use paperlens_core::summarizer::{
    chunk_count, extract_front_matter, summarize_document, summarize_section, SummarizerConfig,
};
use paperlens_core::text::{chunk_by_budget, estimate_tokens};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

const BUDGET: usize = 3500;

#[test]
fn every_stage_one_input_fits_the_budget() {
    let mut rng = StdRng::seed_from_u64(1163);
    let pack = PromptPack::shipped();
    let (gateway, backend) = recording_gateway(MockProvider::offline());
    for _ in 0..4 {
        let mut markup = String::from("# A Long Paper\n\nJane Doe\nUniversity of Somewhere\n\n");
        let mut lengths = Vec::new();
        for (title, vocab) in TOPICS {
            // around 1163 to 1364 tokens per section, with the odd
            // section several times longer
            let mut tokens = rng.gen_range(1163..=1364);
            if rng.gen_bool(0.25) {
                tokens *= rng.gen_range(2..=6);
            }
            let body = prose(&mut rng, vocab, tokens);
            lengths.push(estimate_tokens(&body));
            markup.push_str(&format!("## {title}\n\n{body}\n\n"));
        }
        let doc = align_assets(parse_markup(&markup, None), Vec::new()).unwrap();
        let summary =
            summarize_document(&doc, &pack, &gateway, &SummarizerConfig::default()).unwrap();
        let content: Vec<_> = summary
            .section_summaries
            .iter()
            .filter(|s| s.skipped.is_none())
            .collect();
        assert_eq!(content.len(), TOPICS.len());
        for (s, tokens) in content.iter().zip(&lengths) {
            assert_eq!(
                s.chunk_count,
                tokens.div_ceil(BUDGET),
                "{}",
                s.section_title
            );
        }
        assert!(lengths.iter().any(|&t| t > BUDGET));
    }
    let requests = backend.requests();
    assert!(requests.len() > 40);
    for (_, request) in &requests {
        let tokens = estimate_tokens(&user_text(request));
        assert!(tokens <= BUDGET, "model input of {tokens} tokens");
    }
}

#[test]
fn short_section_is_one_chunk() {
    let mut rng = StdRng::seed_from_u64(1);
    let body = prose(&mut rng, TOPICS[0].1, 1200);
    let provider = MockProvider::default().with_rule(
        None,
        None,
        Responder::Template("SUMMARY({{last_user:5}})".into()),
    );
    let (gateway, _) = recording_gateway(provider);
    let pack = PromptPack::shipped();
    let section = Section::new("1 Introduction", 1, body);
    let config = SummarizerConfig::default();
    let a = summarize_section(&section, "Paper", pack.sections(), &gateway, &config).unwrap();
    let b = summarize_section(&section, "Paper", pack.sections(), &gateway, &config).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.chunk_count, 1);
    assert!(a.summary.starts_with("SUMMARY("), "{}", a.summary);
    assert_eq!(a.template_id, "section.introduction");
}

#[test]
fn eight_thousand_tokens_is_three_chunks() {
    let mut rng = StdRng::seed_from_u64(2);
    let body = prose(&mut rng, TOPICS[2].1, 8000);
    let (gateway, _) = recording_gateway(MockProvider::offline());
    let section = Section::new("3 Method", 1, body);
    let s = summarize_section(
        &section,
        "Paper",
        PromptPack::shipped().sections(),
        &gateway,
        &SummarizerConfig::default(),
    )
    .unwrap();
    assert_eq!(s.chunk_count, 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn chunk_count_is_the_ceiling(words in prop::collection::vec("[a-z]{1,12}[.]?", 0..3000), budget in 50usize..4000) {
        let body = words.join(" ");
        let expected = body.chars().count().div_ceil(4).div_ceil(budget);
        prop_assert_eq!(chunk_count(&body, budget), expected);
        let chunks = chunk_by_budget(&body, budget);
        prop_assert_eq!(chunks.len(), expected);
        for c in chunks {
            prop_assert!(estimate_tokens(c) <= budget);
        }
    }
}

const FIRST: &[&str] = &[
    "Ada", "Grace", "Alan", "Mary-Ann", "Li", "Noam", "Oriol", "Yann", "Fei", "Kaiming",
];
const LAST: &[&str] = &[
    "Lovelace", "Hopper", "Turing", "O'Neil", "Wei", "Shazeer", "Vinyals", "Zhang", "Parmar",
];
const TITLE_WORDS: &[&str] = &[
    "Sparse",
    "Learning",
    "Graphs",
    "Neural",
    "Efficient",
    "Robust",
    "Transformers",
    "Towards",
];
const PLACES: &[&str] = &["Nowhere", "Elsewhere", "Somewhere", "Westbrook", "Eastvale"];

struct GenFront {
    title: String,
    authors: Vec<String>,
    affiliations: Vec<String>,
}

fn gen_front(rng: &mut StdRng) -> GenFront {
    let title = (0..rng.gen_range(3..7))
        .map(|_| *TITLE_WORDS.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ");
    let mut authors: Vec<String> = Vec::new();
    while authors.len() < rng.gen_range(1..=5) {
        let mut name = FIRST.choose(rng).unwrap().to_string();
        if rng.gen_bool(0.3) {
            name.push_str(" Q.");
        }
        name.push(' ');
        name.push_str(LAST.choose(rng).unwrap());
        if !authors.contains(&name) {
            authors.push(name);
        }
    }
    let mut affiliations: Vec<String> = Vec::new();
    for _ in 0..rng.gen_range(1..=3) {
        let place = PLACES.choose(rng).unwrap();
        let aff = match rng.gen_range(0..3) {
            0 => format!("University of {place}"),
            1 => format!("{place} Research"),
            _ => format!("Institute for Studies, {place}"),
        };
        if !affiliations.contains(&aff) {
            affiliations.push(aff);
        }
    }
    GenFront {
        title,
        authors,
        affiliations,
    }
}

fn render_front(rng: &mut StdRng, f: &GenFront) -> String {
    let marked: Vec<String> = f
        .authors
        .iter()
        .enumerate()
        .map(|(i, a)| match rng.gen_range(0..4) {
            0 => format!("{a}^{{{}}}", i + 1),
            1 => format!("{a}*"),
            2 => format!("{a}\u{2020}"),
            _ => a.clone(),
        })
        .collect();
    let mut author_lines = Vec::new();
    for chunk in marked.chunks(rng.gen_range(1..=3)) {
        let line = match chunk {
            [only] => only.clone(),
            [init @ .., last] => format!("{} and {last}", init.join(", ")),
            [] => unreachable!(),
        };
        author_lines.push(line);
    }
    let aff_lines: Vec<String> = f
        .affiliations
        .iter()
        .enumerate()
        .map(|(i, a)| {
            if rng.gen_bool(0.5) {
                format!("{} {a}", i + 1)
            } else {
                a.clone()
            }
        })
        .collect();
    let mut block = author_lines.join("\n");
    block.push('\n');
    block.push_str(&aff_lines.join("\n"));
    if rng.gen_bool(0.5) {
        block.push_str("\n{ada,grace}@example.org");
    }
    if rng.gen_bool(0.5) {
        format!(
            "# {}\n\n{block}\n\n## Abstract\n\nWe study things.\n\n## 1 Introduction\n\nText.",
            f.title
        )
    } else {
        format!("{}\n{block}\n\n# Introduction\n\nText.", f.title)
    }
}

#[test]
fn front_matter_generator_oracle() {
    let mut rng = StdRng::seed_from_u64(30);
    for case in 0..30 {
        let expected = gen_front(&mut rng);
        let markup = render_front(&mut rng, &expected);
        let meta = extract_front_matter(&parse_markup(&markup, None));
        assert_eq!(meta.title, expected.title, "case {case}:\n{markup}");
        assert_eq!(meta.authors, expected.authors, "case {case}:\n{markup}");
        assert_eq!(
            meta.affiliations, expected.affiliations,
            "case {case}:\n{markup}"
        );
        assert!(meta.warnings.is_empty(), "case {case}: {:?}", meta.warnings);
    }
}

#[test]
fn paper_without_front_matter_warns() {
    let meta = extract_front_matter(&parse_markup("# Introduction\n\nWe begin.", None));
    assert!(meta.authors.is_empty());
    assert!(meta.warnings.iter().any(|w| w.contains("authors")));
}
