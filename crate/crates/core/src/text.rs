//! Text measurement and segmentation shared by the parser, summarizer and
//! speech chunker.

use std::collections::BTreeSet;
use std::ops::Range;
use std::sync::LazyLock;

use regex::Regex;

static STOPWORDS: LazyLock<BTreeSet<&'static str>> = LazyLock::new(|| {
    include_str!("../data/stopwords.txt")
        .lines()
        .map(str::trim)
        .filter(|w| !w.is_empty())
        .collect()
});

static PARAGRAPH_BREAK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\n[ \t\r]*\n").unwrap());

/// Provider-independent token proxy: one token per four characters, rounded up.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

/// A token counter that can stand in for [`estimate_tokens`].
///
/// Implementations must be monotone in text length.
pub trait TokenCounter: Send + Sync {
    fn count(&self, text: &str) -> usize;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CharQuarterCounter;

impl TokenCounter for CharQuarterCounter {
    fn count(&self, text: &str) -> usize {
        estimate_tokens(text)
    }
}

pub fn is_stopword(word: &str) -> bool {
    STOPWORDS.contains(word)
}

/// Lowercased alphanumeric tokens with stopwords removed.
pub fn content_tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .filter(|t| !is_stopword(t))
        .collect()
}

/// Jaccard similarity of two token sets; 0 when both are empty.
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Byte ranges of paragraphs, trimmed of surrounding whitespace. Empty
/// paragraphs are dropped.
pub fn paragraph_spans(text: &str) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut start = 0;
    for m in PARAGRAPH_BREAK.find_iter(text) {
        push_trimmed(text, start..m.start(), &mut spans);
        start = m.end();
    }
    push_trimmed(text, start..text.len(), &mut spans);
    spans
}

/// Sentence ranges that tile `text` exactly: every sentence carries its
/// trailing whitespace, so concatenating the slices reproduces the input.
pub fn sentence_tiles(text: &str) -> Vec<Range<usize>> {
    let mut tiles = Vec::new();
    let mut start = 0;
    let mut iter = text.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        if !matches!(c, '.' | '!' | '?') {
            continue;
        }
        let mut end = i + c.len_utf8();
        while let Some(&(j, n)) = iter.peek() {
            if matches!(n, '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}') {
                end = j + n.len_utf8();
                iter.next();
            } else {
                break;
            }
        }
        match iter.peek() {
            Some(&(_, n)) if n.is_whitespace() => {}
            _ => continue,
        }
        while let Some(&(j, n)) = iter.peek() {
            if n.is_whitespace() {
                end = j + n.len_utf8();
                iter.next();
            } else {
                break;
            }
        }
        tiles.push(start..end);
        start = end;
    }
    if start < text.len() {
        tiles.push(start..text.len());
    }
    tiles
}

/// Sentence ranges trimmed of whitespace.
pub fn sentence_spans(text: &str) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    for tile in sentence_tiles(text) {
        push_trimmed(text, tile, &mut spans);
    }
    spans
}

fn word_spans(text: &str) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                spans.push(s..i);
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push(s..text.len());
    }
    spans
}

fn push_trimmed(text: &str, range: Range<usize>, out: &mut Vec<Range<usize>>) {
    let slice = &text[range.clone()];
    let lead = slice.len() - slice.trim_start().len();
    let trimmed = slice.trim();
    if !trimmed.is_empty() {
        let s = range.start + lead;
        out.push(s..s + trimmed.len());
    }
}

fn offset(base: usize, spans: Vec<Range<usize>>) -> impl Iterator<Item = Range<usize>> {
    spans.into_iter().map(move |r| base + r.start..base + r.end)
}

/// Maps byte offsets (at char boundaries) to char offsets.
struct CharIndex {
    by_byte: Vec<usize>,
}

impl CharIndex {
    fn new(text: &str) -> Self {
        let mut by_byte = vec![0; text.len() + 1];
        let mut count = 0;
        for (i, c) in text.char_indices() {
            by_byte[i] = count;
            count += 1;
            for b in 1..c.len_utf8() {
                by_byte[i + b] = count;
            }
        }
        by_byte[text.len()] = count;
        Self { by_byte }
    }

    fn tokens(&self, range: &Range<usize>) -> usize {
        (self.by_byte[range.end] - self.by_byte[range.start]).div_ceil(4)
    }

    fn chars(&self, range: &Range<usize>) -> usize {
        self.by_byte[range.end] - self.by_byte[range.start]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Granularity {
    Paragraph,
    Sentence,
    Word,
    Char,
}

/// Splits `text` into exactly `ceil(estimate_tokens(text) / budget)` chunks,
/// each within `budget` tokens.
///
/// Cuts land on paragraph boundaries when that packing works, then sentence
/// boundaries, then whitespace; a run of text without whitespace longer than
/// the budget is cut by character count. Whitespace at a cut is dropped.
pub fn chunk_by_budget(text: &str, budget: usize) -> Vec<&str> {
    assert!(budget > 0, "token budget must be positive");
    let total = estimate_tokens(text);
    let target = total.div_ceil(budget);
    if target <= 1 {
        return if text.is_empty() {
            Vec::new()
        } else {
            vec![text]
        };
    }
    let index = CharIndex::new(text);
    for level in [
        Granularity::Paragraph,
        Granularity::Sentence,
        Granularity::Word,
        Granularity::Char,
    ] {
        let atoms = atoms(text, level, budget, &index);
        if atoms.len() < target {
            continue;
        }
        let mut groups = greedy_groups(&atoms, budget, &index);
        if groups.len() > target {
            continue;
        }
        while groups.len() < target {
            if !split_largest(&mut groups, &atoms, &index) {
                break;
            }
        }
        if groups.len() == target {
            return groups
                .iter()
                .map(|g| &text[atoms[g.start].start..atoms[g.end - 1].end])
                .collect();
        }
    }
    unreachable!("character-level packing always reaches the target count")
}

fn atoms(text: &str, level: Granularity, budget: usize, index: &CharIndex) -> Vec<Range<usize>> {
    if level == Granularity::Char {
        return text
            .char_indices()
            .map(|(i, c)| i..i + c.len_utf8())
            .collect();
    }
    let seed = match level {
        Granularity::Paragraph => paragraph_spans(text),
        Granularity::Sentence => paragraph_spans(text)
            .into_iter()
            .flat_map(|p| offset(p.start, sentence_spans(&text[p])).collect::<Vec<_>>())
            .collect(),
        _ => word_spans(text),
    };
    let mut out = Vec::with_capacity(seed.len());
    for span in seed {
        refine(text, span, level, budget, index, &mut out);
    }
    out
}

fn refine(
    text: &str,
    span: Range<usize>,
    level: Granularity,
    budget: usize,
    index: &CharIndex,
    out: &mut Vec<Range<usize>>,
) {
    if index.tokens(&span) <= budget {
        out.push(span);
        return;
    }
    let slice = &text[span.clone()];
    match level {
        Granularity::Paragraph => {
            for s in offset(span.start, sentence_spans(slice)) {
                refine(text, s, Granularity::Sentence, budget, index, out);
            }
        }
        Granularity::Sentence => {
            for w in offset(span.start, word_spans(slice)) {
                refine(text, w, Granularity::Word, budget, index, out);
            }
        }
        _ => {
            let max_chars = budget * 4;
            let mut piece_start = span.start;
            let mut count = 0;
            for (i, c) in slice.char_indices() {
                if count == max_chars {
                    out.push(piece_start..span.start + i);
                    piece_start = span.start + i;
                    count = 0;
                }
                count += 1;
                let _ = c;
            }
            out.push(piece_start..span.end);
        }
    }
}

fn greedy_groups(atoms: &[Range<usize>], budget: usize, index: &CharIndex) -> Vec<Range<usize>> {
    let mut groups = Vec::new();
    let mut i = 0;
    while i < atoms.len() {
        let start = atoms[i].start;
        let mut j = i + 1;
        while j < atoms.len() && index.tokens(&(start..atoms[j].end)) <= budget {
            j += 1;
        }
        groups.push(i..j);
        i = j;
    }
    groups
}

fn split_largest(
    groups: &mut Vec<Range<usize>>,
    atoms: &[Range<usize>],
    index: &CharIndex,
) -> bool {
    let span = |g: &Range<usize>| atoms[g.start].start..atoms[g.end - 1].end;
    let Some((pos, _)) = groups
        .iter()
        .enumerate()
        .filter(|(_, g)| g.len() >= 2)
        .max_by_key(|(i, g)| (index.tokens(&span(g)), std::cmp::Reverse(*i)))
    else {
        return false;
    };
    let g = groups[pos].clone();
    let best = (g.start + 1..g.end)
        .min_by_key(|&k| {
            let left = index.tokens(&(atoms[g.start].start..atoms[k - 1].end));
            let right = index.tokens(&(atoms[k].start..atoms[g.end - 1].end));
            left.max(right)
        })
        .expect("group has at least two atoms");
    groups.splice(pos..=pos, [g.start..best, best..g.end]);
    true
}

/// Packs whole sentences into chunks of at most `limit` characters. The
/// chunks tile the input exactly. A sentence longer than the limit is split
/// at whitespace, and a word longer than the limit by character count.
pub fn pack_sentences(text: &str, limit: usize) -> Vec<&str> {
    assert!(limit > 0, "chunk limit must be positive");
    let index = CharIndex::new(text);
    let mut tiles = Vec::new();
    for tile in sentence_tiles(text) {
        if index.chars(&tile) <= limit {
            tiles.push(tile);
        } else {
            split_oversized(text, tile, limit, &index, &mut tiles);
        }
    }
    let mut chunks = Vec::new();
    let mut current: Option<Range<usize>> = None;
    for tile in tiles {
        current = match current {
            None => Some(tile),
            Some(c) if index.chars(&(c.start..tile.end)) <= limit => Some(c.start..tile.end),
            Some(c) => {
                chunks.push(&text[c]);
                Some(tile)
            }
        };
    }
    if let Some(c) = current {
        chunks.push(&text[c]);
    }
    chunks
}

fn split_oversized(
    text: &str,
    tile: Range<usize>,
    limit: usize,
    index: &CharIndex,
    out: &mut Vec<Range<usize>>,
) {
    // Word tiles: each word with its trailing whitespace.
    let slice = &text[tile.clone()];
    let mut starts: Vec<usize> = word_spans(slice)
        .iter()
        .map(|w| tile.start + w.start)
        .collect();
    if starts.first() != Some(&tile.start) {
        starts.insert(0, tile.start);
    }
    for (k, &s) in starts.iter().enumerate() {
        let e = starts.get(k + 1).copied().unwrap_or(tile.end);
        let word = s..e;
        if index.chars(&word) <= limit {
            out.push(word);
            continue;
        }
        let mut piece_start = s;
        let mut count = 0;
        for (i, _) in text[word.clone()].char_indices() {
            if count == limit {
                out.push(piece_start..s + i);
                piece_start = s + i;
                count = 0;
            }
            count += 1;
        }
        out.push(piece_start..e);
    }
}

/// Longest prefix of `text` within `max_tokens`, ending at a paragraph
/// boundary when possible, else a sentence boundary, else a word boundary.
pub fn truncate_to_budget(text: &str, max_tokens: usize) -> &str {
    if estimate_tokens(text) <= max_tokens {
        return text;
    }
    let index = CharIndex::new(text);
    let fits = |end: usize| index.tokens(&(0..end)) <= max_tokens;
    let candidates = [
        paragraph_spans(text),
        sentence_spans(text),
        word_spans(text),
    ];
    for spans in candidates {
        if let Some(end) = spans.iter().map(|s| s.end).take_while(|&e| fits(e)).last() {
            return &text[..end];
        }
    }
    ""
}
