//! CoNLL corpus ingestion: tokens, documents, BIO mention extraction and
//! context windows.

use std::collections::HashSet;
use std::fmt;
use std::io::BufRead;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_DOC_MARKER: &str = "# newdoc";
pub const DEFAULT_CONTEXT_WINDOW: usize = 256;

const IMPLICIT_DOC_ID: &str = "doc0";
const IMPLICIT_SUBCATEGORY: &str = "unknown";

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: input is not valid UTF-8")]
    Encoding { line: usize },
    #[error("line {line}: malformed NER tag {tag:?}")]
    Tag { line: usize, tag: String },
    #[error("line {line}: expected 2 or 3 whitespace-separated columns, found {found}")]
    Columns { line: usize, found: usize },
    #[error("line {line}: malformed document marker: {reason}")]
    Marker { line: usize, reason: String },
    #[error("line {line}: duplicate document id {id:?}")]
    DuplicateDocument { line: usize, id: String },
    #[error("read failed: {0}")]
    Io(#[from] std::io::Error),
}

/// The eight MIM-GOLD-NER entity types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NeType {
    Person,
    Location,
    Organization,
    Miscellaneous,
    Date,
    Time,
    Money,
    Percent,
}

impl NeType {
    pub const ALL: [NeType; 8] = [
        NeType::Person,
        NeType::Location,
        NeType::Organization,
        NeType::Miscellaneous,
        NeType::Date,
        NeType::Time,
        NeType::Money,
        NeType::Percent,
    ];

    /// Only these four types are linked to the knowledge base.
    pub fn is_linkable(self) -> bool {
        matches!(
            self,
            NeType::Person | NeType::Location | NeType::Organization | NeType::Miscellaneous
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NeType::Person => "Person",
            NeType::Location => "Location",
            NeType::Organization => "Organization",
            NeType::Miscellaneous => "Miscellaneous",
            NeType::Date => "Date",
            NeType::Time => "Time",
            NeType::Money => "Money",
            NeType::Percent => "Percent",
        }
    }
}

impl fmt::Display for NeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NeType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NeType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown entity type {s:?}"))
    }
}

/// A parsed BIO tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BioTag {
    Outside,
    Begin(NeType),
    Inside(NeType),
}

impl FromStr for BioTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "O" {
            return Ok(BioTag::Outside);
        }
        let (prefix, name) = s
            .split_once('-')
            .ok_or_else(|| format!("tag {s:?} is neither O nor B-/I-"))?;
        let ne_type = name.parse()?;
        match prefix {
            "B" => Ok(BioTag::Begin(ne_type)),
            "I" => Ok(BioTag::Inside(ne_type)),
            _ => Err(format!("tag {s:?} has prefix other than B or I")),
        }
    }
}

impl fmt::Display for BioTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BioTag::Outside => f.write_str("O"),
            BioTag::Begin(t) => write!(f, "B-{t}"),
            BioTag::Inside(t) => write!(f, "I-{t}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub ner_tag: String,
    pub morph_tag: Option<String>,
    pub index: usize,
}

impl Token {
    /// Tags are validated during parsing, so this only fails on hand-built tokens.
    pub fn bio(&self) -> BioTag {
        self.ner_tag.parse().unwrap_or(BioTag::Outside)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub subcategory: String,
    pub sentences: Vec<Vec<Token>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub id: String,
    pub doc_id: String,
    pub sentence_index: usize,
    pub token_span: Range<usize>,
    pub surface: String,
    pub ne_type: NeType,
    pub left_context: String,
    pub right_context: String,
    pub morph_tags: Vec<Option<String>>,
}

impl Mention {
    pub fn mention_id(doc_id: &str, sentence_index: usize, start: usize) -> String {
        format!("{doc_id}:{sentence_index}:{start}")
    }
}

#[derive(Debug, Clone)]
pub struct ParseOptions {
    /// Comment prefix that starts a document, followed by `id = <id> subcat = <name>`.
    pub doc_marker: String,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            doc_marker: DEFAULT_DOC_MARKER.to_string(),
        }
    }
}

struct DocBuilder {
    docs: Vec<Document>,
    seen: HashSet<String>,
    sentence: Vec<Token>,
}

impl DocBuilder {
    fn end_sentence(&mut self) {
        if self.sentence.is_empty() {
            return;
        }
        if self.docs.is_empty() {
            self.docs.push(Document {
                id: IMPLICIT_DOC_ID.to_string(),
                subcategory: IMPLICIT_SUBCATEGORY.to_string(),
                sentences: Vec::new(),
            });
        }
        let sentence = std::mem::take(&mut self.sentence);
        self.docs.last_mut().unwrap().sentences.push(sentence);
    }
}

/// Parses a CoNLL stream with the default document marker.
pub fn parse_conll(input: &[u8]) -> Result<Vec<Document>, ParseError> {
    parse_conll_with(input, &ParseOptions::default())
}

pub fn parse_conll_with(input: &[u8], options: &ParseOptions) -> Result<Vec<Document>, ParseError> {
    parse_conll_reader(input, options)
}

pub fn parse_conll_reader<R: BufRead>(
    mut reader: R,
    options: &ParseOptions,
) -> Result<Vec<Document>, ParseError> {
    let mut builder = DocBuilder {
        docs: Vec::new(),
        seen: HashSet::new(),
        sentence: Vec::new(),
    };
    let mut raw = Vec::new();
    let mut line_no = 0;
    loop {
        raw.clear();
        if reader.read_until(b'\n', &mut raw)? == 0 {
            break;
        }
        line_no += 1;
        let line = std::str::from_utf8(&raw).map_err(|_| ParseError::Encoding { line: line_no })?;
        let line = line.trim_end_matches(['\n', '\r']);

        if line.trim().is_empty() {
            builder.end_sentence();
            continue;
        }
        if let Some(rest) = line.strip_prefix(options.doc_marker.as_str()) {
            builder.end_sentence();
            let (id, subcategory) = parse_marker(rest, line_no)?;
            if !builder.seen.insert(id.clone()) {
                return Err(ParseError::DuplicateDocument { line: line_no, id });
            }
            builder.docs.push(Document {
                id,
                subcategory,
                sentences: Vec::new(),
            });
            continue;
        }
        if line.starts_with('#') {
            continue;
        }

        let columns: Vec<&str> = line.split_whitespace().collect();
        if !(2..=3).contains(&columns.len()) {
            return Err(ParseError::Columns {
                line: line_no,
                found: columns.len(),
            });
        }
        if columns[1].parse::<BioTag>().is_err() {
            return Err(ParseError::Tag {
                line: line_no,
                tag: columns[1].to_string(),
            });
        }
        let index = builder.sentence.len();
        builder.sentence.push(Token {
            surface: columns[0].to_string(),
            ner_tag: columns[1].to_string(),
            morph_tag: columns.get(2).map(|s| s.to_string()),
            index,
        });
    }
    builder.end_sentence();
    Ok(builder.docs)
}

fn parse_marker(rest: &str, line: usize) -> Result<(String, String), ParseError> {
    let words: Vec<&str> = rest.split_whitespace().collect();
    let mut id = None;
    let mut subcategory = None;
    let mut i = 0;
    while i < words.len() {
        if i + 2 >= words.len() {
            return Err(ParseError::Marker {
                line,
                reason: format!("dangling field {:?}", words[i]),
            });
        }
        if words[i + 1] != "=" {
            return Err(ParseError::Marker {
                line,
                reason: format!("expected `=` after {:?}", words[i]),
            });
        }
        match words[i] {
            "id" => id = Some(words[i + 2].to_string()),
            "subcat" => subcategory = Some(words[i + 2].to_string()),
            _ => {}
        }
        i += 3;
    }
    let id = id.ok_or_else(|| ParseError::Marker {
        line,
        reason: "missing id".into(),
    })?;
    let subcategory = subcategory.ok_or_else(|| ParseError::Marker {
        line,
        reason: "missing subcat".into(),
    })?;
    Ok((id, subcategory))
}

/// Writes documents back out in the format `parse_conll_with` reads.
pub fn write_conll(docs: &[Document], options: &ParseOptions) -> String {
    let mut out = String::new();
    for doc in docs {
        out.push_str(&format!(
            "{} id = {} subcat = {}\n",
            options.doc_marker, doc.id, doc.subcategory
        ));
        for sentence in &doc.sentences {
            for token in sentence {
                out.push_str(&token.surface);
                out.push(' ');
                out.push_str(&token.ner_tag);
                if let Some(morph) = &token.morph_tag {
                    out.push(' ');
                    out.push_str(morph);
                }
                out.push('\n');
            }
            out.push('\n');
        }
    }
    out
}

/// Token spans of the mentions in one sentence, with their types.
///
/// A `B-` tag always opens a mention; an `I-` tag extends the open mention
/// only when it has the same type, and otherwise opens a new one.
pub fn bio_spans(tags: &[BioTag]) -> Vec<(Range<usize>, NeType)> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, NeType)> = None;
    for (i, tag) in tags.iter().enumerate() {
        match *tag {
            BioTag::Outside => {
                if let Some((start, t)) = open.take() {
                    spans.push((start..i, t));
                }
            }
            BioTag::Begin(t) => {
                if let Some((start, prev)) = open.take() {
                    spans.push((start..i, prev));
                }
                open = Some((i, t));
            }
            BioTag::Inside(t) => match open {
                Some((_, prev)) if prev == t => {}
                _ => {
                    if let Some((start, prev)) = open.take() {
                        spans.push((start..i, prev));
                    }
                    open = Some((i, t));
                }
            },
        }
    }
    if let Some((start, t)) = open {
        spans.push((start..tags.len(), t));
    }
    spans
}

pub fn extract_mentions(doc: &Document, window_chars: usize) -> Vec<Mention> {
    let mut mentions = Vec::new();
    for (sentence_index, sentence) in doc.sentences.iter().enumerate() {
        let tags: Vec<BioTag> = sentence.iter().map(Token::bio).collect();
        for (span, ne_type) in bio_spans(&tags) {
            let (left_context, right_context) = build_context(sentence, span.clone(), window_chars);
            let tokens = &sentence[span.clone()];
            mentions.push(Mention {
                id: Mention::mention_id(&doc.id, sentence_index, span.start),
                doc_id: doc.id.clone(),
                sentence_index,
                surface: join_surfaces(tokens.iter()),
                ne_type,
                left_context,
                right_context,
                morph_tags: tokens.iter().map(|t| t.morph_tag.clone()).collect(),
                token_span: span,
            });
        }
    }
    mentions
}

pub fn extract_all(docs: &[Document], window_chars: usize) -> Vec<Mention> {
    docs.iter()
        .flat_map(|doc| extract_mentions(doc, window_chars))
        .collect()
}

pub fn filter_linkable(mentions: Vec<Mention>) -> Vec<Mention> {
    mentions
        .into_iter()
        .filter(|m| m.ne_type.is_linkable())
        .collect()
}

/// Left and right sentence context around `span`, each capped at
/// `window_chars` characters on word boundaries. The word adjacent to the
/// mention is always kept, even when it alone exceeds the budget.
pub fn build_context(
    sentence: &[Token],
    span: Range<usize>,
    window_chars: usize,
) -> (String, String) {
    let window_chars = window_chars.max(1);
    let left = take_words(sentence[..span.start].iter().rev(), window_chars);
    let right = take_words(sentence[span.end..].iter(), window_chars);
    let left: Vec<&str> = left.into_iter().rev().collect();
    (left.join(" "), right.join(" "))
}

fn take_words<'a>(tokens: impl Iterator<Item = &'a Token>, budget: usize) -> Vec<&'a str> {
    let mut words = Vec::new();
    let mut used = 0;
    for token in tokens {
        let len = token.surface.chars().count();
        let cost = if words.is_empty() { len } else { len + 1 };
        if !words.is_empty() && used + cost > budget {
            break;
        }
        used += cost;
        words.push(token.surface.as_str());
    }
    words
}

fn join_surfaces<'a>(tokens: impl Iterator<Item = &'a Token>) -> String {
    tokens
        .map(|t| t.surface.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sentence(words: &[(&str, &str)]) -> Vec<Token> {
        words
            .iter()
            .enumerate()
            .map(|(index, (s, t))| Token {
                surface: s.to_string(),
                ner_tag: t.to_string(),
                morph_tag: None,
                index,
            })
            .collect()
    }

    fn doc(sentences: Vec<Vec<Token>>) -> Document {
        Document {
            id: "d".into(),
            subcategory: "books".into(),
            sentences,
        }
    }

    #[test]
    fn two_token_sentence() {
        let docs = parse_conll(b"Barack B-Person\nObama I-Person\n\n").unwrap();
        assert_eq!(docs.len(), 1);
        assert_eq!(docs[0].sentences.len(), 1);
        let tags: Vec<_> = docs[0].sentences[0]
            .iter()
            .map(|t| t.ner_tag.as_str())
            .collect();
        assert_eq!(tags, ["B-Person", "I-Person"]);
    }

    #[test]
    fn empty_input() {
        assert!(parse_conll(b"").unwrap().is_empty());
    }

    #[test]
    fn markers_split_documents() {
        let input = "# newdoc id = a subcat = books\nJón B-Person\n\n# newdoc id = b subcat = blogs\nÍsland B-Location\n";
        let docs = parse_conll(input.as_bytes()).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[1].id, "b");
        assert_eq!(docs[1].subcategory, "blogs");
        assert_eq!(docs[1].sentences[0][0].surface, "Ísland");
    }

    #[test]
    fn custom_marker() {
        let options = ParseOptions {
            doc_marker: "#DOC".into(),
        };
        let docs = parse_conll_with(b"#DOC id = x subcat = news\nA O\n", &options).unwrap();
        assert_eq!(docs[0].id, "x");
    }

    #[test]
    fn morph_column_kept_opaque() {
        let docs = parse_conll("Reykjavík B-Location nven-s\n".as_bytes()).unwrap();
        assert_eq!(docs[0].sentences[0][0].morph_tag.as_deref(), Some("nven-s"));
    }

    #[test]
    fn bad_tag_reports_line() {
        let err = parse_conll(b"a O\nb X-Person\n").unwrap_err();
        assert!(matches!(err, ParseError::Tag { line: 2, .. }), "{err}");
        let err = parse_conll(b"a B-Animal\n").unwrap_err();
        assert!(matches!(err, ParseError::Tag { line: 1, .. }));
    }

    #[test]
    fn bad_encoding_reports_line() {
        let err = parse_conll(b"a O\n\xff\xfe O\n").unwrap_err();
        assert!(matches!(err, ParseError::Encoding { line: 2 }));
    }

    #[test]
    fn column_count_checked() {
        assert!(matches!(
            parse_conll(b"lonely\n").unwrap_err(),
            ParseError::Columns { line: 1, found: 1 }
        ));
    }

    #[test]
    fn duplicate_document_rejected() {
        let input = b"# newdoc id = a subcat = x\nA O\n# newdoc id = a subcat = y\n";
        assert!(matches!(
            parse_conll(input).unwrap_err(),
            ParseError::DuplicateDocument { line: 3, .. }
        ));
    }

    #[test]
    fn marker_missing_subcat() {
        assert!(matches!(
            parse_conll(b"# newdoc id = a\n").unwrap_err(),
            ParseError::Marker { .. }
        ));
    }

    #[test]
    fn merge_b_i() {
        let d = doc(vec![sentence(&[
            ("Barack", "B-Person"),
            ("Obama", "I-Person"),
        ])]);
        let m = extract_mentions(&d, 64);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].surface, "Barack Obama");
        assert_eq!(m[0].token_span, 0..2);
    }

    #[test]
    fn adjacent_b_splits() {
        let d = doc(vec![sentence(&[
            ("Akureyri", "B-Location"),
            ("Ísafjörður", "B-Location"),
        ])]);
        let m = extract_mentions(&d, 64);
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].token_span, 0..1);
        assert_eq!(m[1].token_span, 1..2);
    }

    #[test]
    fn orphan_inside_opens_mention() {
        let d = doc(vec![sentence(&[
            ("x", "O"),
            ("Hekla", "I-Location"),
            ("hf", "I-Organization"),
        ])]);
        let m = extract_mentions(&d, 64);
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].ne_type, NeType::Location);
        assert_eq!(m[1].ne_type, NeType::Organization);
    }

    #[test]
    fn filter_keeps_four_types() {
        let mk = |t| Mention {
            id: format!("{t}"),
            doc_id: "d".into(),
            sentence_index: 0,
            token_span: 0..1,
            surface: "x".into(),
            ne_type: t,
            left_context: String::new(),
            right_context: String::new(),
            morph_tags: vec![None],
        };
        let kept = filter_linkable(vec![
            mk(NeType::Person),
            mk(NeType::Date),
            mk(NeType::Location),
        ]);
        let types: Vec<_> = kept.iter().map(|m| m.ne_type).collect();
        assert_eq!(types, [NeType::Person, NeType::Location]);
        assert!(filter_linkable(vec![]).is_empty());
        let excluded = vec![
            mk(NeType::Money),
            mk(NeType::Percent),
            mk(NeType::Time),
            mk(NeType::Date),
        ];
        assert!(filter_linkable(excluded).is_empty());
    }

    #[test]
    fn context_at_sentence_start_is_empty() {
        let s = sentence(&[("Obama", "B-Person"), ("spoke", "O")]);
        let (left, right) = build_context(&s, 0..1, 64);
        assert_eq!(left, "");
        assert_eq!(right, "spoke");
    }

    #[test]
    fn context_keeps_one_word_minimum() {
        let s = sentence(&[
            ("Vaðlaheiðargöng", "O"),
            ("X", "B-Location"),
            ("Eyjafjallajökull", "O"),
        ]);
        let (left, right) = build_context(&s, 1..2, 1);
        assert_eq!(left, "Vaðlaheiðargöng");
        assert_eq!(right, "Eyjafjallajökull");
    }

    #[test]
    fn context_never_contains_mention() {
        let s = sentence(&[("a", "O"), ("Jón", "B-Person"), ("b", "O")]);
        let (left, right) = build_context(&s, 1..2, 256);
        assert_eq!((left.as_str(), right.as_str()), ("a", "b"));
    }
}
