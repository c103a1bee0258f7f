//! Parsing and validation of judge responses.
//!
//! Ranked-list responses are matched line by line against the requested
//! output format; anything that is not entry-shaped (preamble, blank
//! lines, commentary) is skipped. Every failure mode gets its own error
//! kind so the retry layer can log precisely why a response was rejected.

use std::fmt;
use std::sync::LazyLock;

use regex::Regex;

use crate::corpus::{Category, Corpus, PoemId};
use crate::sampler::Batch;
use crate::textnorm::normalize_name;

/// One parsed line of a ranked-list response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankingEntry {
    /// 1-based list position.
    pub position: usize,
    pub author: String,
    pub title: String,
    /// Integer score on the 1-5 scale.
    pub score: u8,
}

/// A fully validated ranked-list response.
///
/// Positions are exactly `1..=k`, `resolved_ids` is a permutation of the
/// batch (in position order), and scores never increase down the list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankingResponse {
    pub entries: Vec<RankingEntry>,
    pub resolved_ids: Vec<PoemId>,
}

/// Why a response was rejected. Every kind is retryable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    /// Fewer entries than the batch size.
    IncompleteList,
    /// The same poem appeared more than once.
    DuplicateEntry,
    /// An entry matched no batch poem, or matched more than one.
    UnknownPoem,
    /// A score outside 1-5.
    OutOfRangeScore,
    /// A score increased from one position to the next.
    NonMonotoneScores,
    /// No ranked entries at all; the judge wrote something else entirely.
    Refusal,
    /// Structurally broken output (bad positions, missing tags, ...).
    Malformed,
    /// A classification answer naming no known category.
    UnknownCategory,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    /// The offending line or a short description of the context.
    pub detail: String,
}

impl ParseError {
    fn new(kind: ParseErrorKind, detail: impl Into<String>) -> ParseError {
        ParseError {
            kind,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.kind, self.detail)
    }
}

impl std::error::Error for ParseError {}

/// `"3. Author - Title : 4"` — position, free text, trailing integer score.
static ENTRY_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(\d+)[.)]\s+(.+)\s*:\s*(-?\d+)\s*$").unwrap());

/// `<category> ... </category>`, case-insensitive, non-greedy.
static CATEGORY_TAG: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?is)<category>\s*(.*?)\s*</category>").unwrap());

/// Parses a ranked-list response against the batch it was produced for.
///
/// Entries are matched to poems by normalized `author - title` text
/// (case-folded, whitespace-collapsed, terminal punctuation stripped);
/// the match must be exact after normalization and unique within the
/// batch. See [`ParseErrorKind`] for the rejection taxonomy.
pub fn parse_ranked_list(
    raw: &str,
    batch: &Batch,
    corpus: &Corpus,
) -> Result<RankingResponse, ParseError> {
    let k = batch.poem_ids.len();

    // Normalized "author - title" lookup for the batch.
    let mut keys: Vec<(String, &PoemId)> = Vec::with_capacity(k);
    for id in &batch.poem_ids {
        let poem = corpus.poem(id).ok_or_else(|| {
            ParseError::new(
                ParseErrorKind::Malformed,
                format!("batch references unknown poem {id}"),
            )
        })?;
        let key = format!(
            "{} - {}",
            normalize_name(&poem.author),
            normalize_name(&poem.title)
        );
        keys.push((key, id));
    }

    let mut entries: Vec<RankingEntry> = Vec::with_capacity(k);
    let mut resolved: Vec<&PoemId> = Vec::with_capacity(k);
    for line in raw.lines() {
        let Some(caps) = ENTRY_LINE.captures(line) else {
            continue; // prose, blank lines, headers
        };
        let position: usize = caps[1].parse().map_err(|_| {
            ParseError::new(ParseErrorKind::Malformed, format!("bad position: {line}"))
        })?;
        let middle = caps[2].trim();
        let score: i64 = caps[3].parse().map_err(|_| {
            ParseError::new(ParseErrorKind::Malformed, format!("bad score: {line}"))
        })?;
        if !(1..=5).contains(&score) {
            return Err(ParseError::new(
                ParseErrorKind::OutOfRangeScore,
                format!("score {score} outside 1-5: {line}"),
            ));
        }

        let needle = normalize_name(middle);
        let mut matches = keys.iter().filter(|(key, _)| *key == needle);
        let id = match (matches.next(), matches.next()) {
            (Some((_, id)), None) => *id,
            (None, _) => {
                return Err(ParseError::new(
                    ParseErrorKind::UnknownPoem,
                    format!("no batch poem matches: {line}"),
                ))
            }
            (Some(_), Some(_)) => {
                return Err(ParseError::new(
                    ParseErrorKind::UnknownPoem,
                    format!("ambiguous entry matches several batch poems: {line}"),
                ))
            }
        };
        if resolved.contains(&id) {
            return Err(ParseError::new(
                ParseErrorKind::DuplicateEntry,
                format!("poem listed twice: {line}"),
            ));
        }

        let poem = corpus.poem(id).expect("resolved from corpus");
        entries.push(RankingEntry {
            position,
            author: poem.author.clone(),
            title: poem.title.clone(),
            score: score as u8,
        });
        resolved.push(id);
    }

    if entries.is_empty() {
        let context = raw
            .lines()
            .map(str::trim)
            .find(|l| !l.is_empty())
            .unwrap_or("<empty response>");
        return Err(ParseError::new(
            ParseErrorKind::Refusal,
            format!("no ranked entries found; response starts: {context}"),
        ));
    }
    if entries.len() < k {
        return Err(ParseError::new(
            ParseErrorKind::IncompleteList,
            format!("found {} of {k} entries", entries.len()),
        ));
    }

    // Order by stated position, then demand exactly 1..=k.
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by_key(|&i| entries[i].position);
    let entries: Vec<RankingEntry> = order.iter().map(|&i| entries[i].clone()).collect();
    let resolved_ids: Vec<PoemId> = order.iter().map(|&i| resolved[i].clone()).collect();
    for (expected, entry) in (1..=k).zip(&entries) {
        if entry.position != expected {
            let positions: Vec<usize> = entries.iter().map(|e| e.position).collect();
            return Err(ParseError::new(
                ParseErrorKind::Malformed,
                format!("positions are not exactly 1..={k}: {positions:?}"),
            ));
        }
    }

    for pair in entries.windows(2) {
        if pair[1].score > pair[0].score {
            return Err(ParseError::new(
                ParseErrorKind::NonMonotoneScores,
                format!(
                    "score rises from {} at position {} to {} at position {}",
                    pair[0].score, pair[0].position, pair[1].score, pair[1].position
                ),
            ));
        }
    }

    Ok(RankingResponse {
        entries,
        resolved_ids,
    })
}

/// Extracts the category from a classification response. The last
/// well-formed `<category>` tag wins, so the judge may think out loud
/// first; matching against the known labels is case-insensitive.
pub fn parse_category(raw: &str) -> Result<Category, ParseError> {
    let Some(caps) = CATEGORY_TAG.captures_iter(raw).last() else {
        return Err(ParseError::new(
            ParseErrorKind::Malformed,
            "no <category> tag in response",
        ));
    };
    let label = caps[1].trim();
    Category::parse_label(label).ok_or_else(|| {
        ParseError::new(
            ParseErrorKind::UnknownCategory,
            format!("not a known category: {label:?}"),
        )
    })
}

/// Renders a validated response back into the exact line format the
/// ranked-list prompt requests; the inverse of [`parse_ranked_list`].
pub fn render_ranking(response: &RankingResponse, corpus: &Corpus) -> String {
    response
        .entries
        .iter()
        .zip(&response.resolved_ids)
        .map(|(entry, id)| {
            let poem = corpus.poem(id).expect("response ids come from the corpus");
            format!(
                "{}. {} - {} : {}",
                entry.position, poem.author, poem.title, entry.score
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Poem;

    fn corpus() -> Corpus {
        let poems = vec![
            ("poem-01", "Ada Aldercroft", "The Quiet Lantern", Category::Good),
            ("poem-02", "Bram Birchwald", "Amber Harbor", Category::Medium),
            ("poem-03", "Cleo Cartwright", "Hollow Orchard", Category::Bad),
        ];
        Corpus::from_poems(
            poems
                .into_iter()
                .map(|(id, author, title, category)| Poem {
                    id: id.into(),
                    author: author.into(),
                    title: title.into(),
                    body: "some body".into(),
                    category,
                })
                .collect(),
        )
        .unwrap()
    }

    fn batch() -> Batch {
        Batch {
            batch_id: 0,
            poem_ids: vec!["poem-01".into(), "poem-02".into(), "poem-03".into()],
        }
    }

    #[test]
    fn parses_a_clean_response() {
        let raw = "1. Bram Birchwald - Amber Harbor : 5\n\
                   2. Ada Aldercroft - The Quiet Lantern : 3\n\
                   3. Cleo Cartwright - Hollow Orchard : 1\n";
        let r = parse_ranked_list(raw, &batch(), &corpus()).unwrap();
        assert_eq!(r.resolved_ids, vec!["poem-02", "poem-01", "poem-03"]);
        assert_eq!(r.entries[0].score, 5);
        assert_eq!(r.entries[2].position, 3);
    }

    #[test]
    fn preamble_and_commentary_are_skipped() {
        let raw = "Here is my ranking of the poems:\n\n\
                   1. Ada Aldercroft - The Quiet Lantern : 4\n\
                   2. Bram Birchwald - Amber Harbor : 4\n\
                   3. Cleo Cartwright - Hollow Orchard : 2\n\n\
                   I hope this helps!";
        let r = parse_ranked_list(raw, &batch(), &corpus()).unwrap();
        assert_eq!(r.entries.len(), 3);
    }

    #[test]
    fn matching_survives_case_whitespace_and_punctuation() {
        let raw = "1. ADA  ALDERCROFT - the quiet lantern. : 5\n\
                   2. bram birchwald - Amber  Harbor : 3\n\
                   3. Cleo Cartwright - hollow orchard! : 1";
        let r = parse_ranked_list(raw, &batch(), &corpus()).unwrap();
        assert_eq!(r.resolved_ids, vec!["poem-01", "poem-02", "poem-03"]);
        // Entries carry the canonical corpus spelling.
        assert_eq!(r.entries[0].author, "Ada Aldercroft");
        assert_eq!(r.entries[0].title, "The Quiet Lantern");
    }

    #[test]
    fn incomplete_lists_are_rejected() {
        let raw = "1. Ada Aldercroft - The Quiet Lantern : 5\n\
                   2. Bram Birchwald - Amber Harbor : 4";
        let err = parse_ranked_list(raw, &batch(), &corpus()).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::IncompleteList);
        assert!(err.detail.contains("2 of 3"));
    }

    #[test]
    fn duplicate_poems_are_rejected() {
        let raw = "1. Ada Aldercroft - The Quiet Lantern : 5\n\
                   2. Ada Aldercroft - The Quiet Lantern : 4\n\
                   3. Cleo Cartwright - Hollow Orchard : 1";
        let err = parse_ranked_list(raw, &batch(), &corpus()).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::DuplicateEntry);
    }

    #[test]
    fn hallucinated_poems_are_rejected() {
        let raw = "1. Tom Smith - Some Poem : 5\n\
                   2. Bram Birchwald - Amber Harbor : 4\n\
                   3. Cleo Cartwright - Hollow Orchard : 1";
        let err = parse_ranked_list(raw, &batch(), &corpus()).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnknownPoem);
        assert!(err.detail.contains("Tom Smith"));
    }

    #[test]
    fn out_of_range_scores_are_rejected() {
        let raw = "1. Ada Aldercroft - The Quiet Lantern : 7\n\
                   2. Bram Birchwald - Amber Harbor : 4\n\
                   3. Cleo Cartwright - Hollow Orchard : 1";
        let err = parse_ranked_list(raw, &batch(), &corpus()).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::OutOfRangeScore);
    }

    #[test]
    fn rising_scores_are_rejected() {
        let raw = "1. Ada Aldercroft - The Quiet Lantern : 3\n\
                   2. Bram Birchwald - Amber Harbor : 5\n\
                   3. Cleo Cartwright - Hollow Orchard : 1";
        let err = parse_ranked_list(raw, &batch(), &corpus()).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::NonMonotoneScores);
    }

    #[test]
    fn refusals_are_detected() {
        let raw = "I'm sorry, but I don't feel able to rank these poems.";
        let err = parse_ranked_list(raw, &batch(), &corpus()).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::Refusal);
        assert!(err.detail.contains("don't feel able"));
    }

    #[test]
    fn gapped_positions_are_malformed() {
        let raw = "1. Ada Aldercroft - The Quiet Lantern : 5\n\
                   2. Bram Birchwald - Amber Harbor : 4\n\
                   4. Cleo Cartwright - Hollow Orchard : 1";
        let err = parse_ranked_list(raw, &batch(), &corpus()).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::Malformed);
    }

    #[test]
    fn shuffled_line_order_is_accepted() {
        let raw = "3. Cleo Cartwright - Hollow Orchard : 1\n\
                   1. Ada Aldercroft - The Quiet Lantern : 5\n\
                   2. Bram Birchwald - Amber Harbor : 4";
        let r = parse_ranked_list(raw, &batch(), &corpus()).unwrap();
        assert_eq!(r.entries[0].position, 1);
        assert_eq!(r.resolved_ids[0], "poem-01");
    }

    #[test]
    fn round_trip_is_identity() {
        let corpus = corpus();
        let raw = "1. Bram Birchwald - Amber Harbor : 4\n\
                   2. Cleo Cartwright - Hollow Orchard : 4\n\
                   3. Ada Aldercroft - The Quiet Lantern : 2";
        let parsed = parse_ranked_list(raw, &batch(), &corpus).unwrap();
        let rendered = render_ranking(&parsed, &corpus);
        assert_eq!(rendered, raw);
        let reparsed = parse_ranked_list(&rendered, &batch(), &corpus).unwrap();
        assert_eq!(parsed, reparsed);
    }

    #[test]
    fn category_tag_parses_case_insensitively() {
        assert_eq!(
            parse_category("<reasoning>solid work</reasoning>\n<category>good</category>"),
            Ok(Category::Good)
        );
        assert_eq!(
            parse_category("<CATEGORY> Medium </CATEGORY>"),
            Ok(Category::Medium)
        );
    }

    #[test]
    fn last_category_tag_wins() {
        let raw = "<category>Good</category> on reflection <category>Bad</category>";
        assert_eq!(parse_category(raw), Ok(Category::Bad));
    }

    #[test]
    fn missing_category_tag_is_malformed() {
        let err = parse_category("definitely a Good poem").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::Malformed);
    }

    #[test]
    fn unknown_category_label_is_rejected() {
        let err = parse_category("<category>Excellent</category>").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnknownCategory);
    }
}
