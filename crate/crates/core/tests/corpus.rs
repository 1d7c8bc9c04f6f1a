mod common;

use std::ops::Range;

use elboot_core::corpus::{
    bio_spans, build_context, extract_all, filter_linkable, parse_conll, parse_conll_with,
    write_conll, BioTag, Document, NeType, ParseError, ParseOptions, Token,
};
use proptest::prelude::*;

/// Quadratic reference scanner: for every start position, decide whether a
/// mention begins there, then walk forward to find where it ends.
fn brute_force_spans(tags: &[BioTag]) -> Vec<(Range<usize>, NeType)> {
    let mut out = Vec::new();
    for start in 0..tags.len() {
        let (starts, ty) = match tags[start] {
            BioTag::Outside => (false, None),
            BioTag::Begin(t) => (true, Some(t)),
            BioTag::Inside(t) => {
                let continues = start > 0
                    && match tags[start - 1] {
                        BioTag::Begin(p) | BioTag::Inside(p) => p == t,
                        BioTag::Outside => false,
                    };
                (!continues, Some(t))
            }
        };
        if !starts {
            continue;
        }
        let ty = ty.unwrap();
        let mut end = start + 1;
        while end < tags.len() && tags[end] == BioTag::Inside(ty) {
            end += 1;
        }
        out.push((start..end, ty));
    }
    out
}

fn tag_strategy() -> impl Strategy<Value = BioTag> {
    let ty = prop::sample::select(NeType::ALL.to_vec());
    prop_oneof![
        2 => Just(BioTag::Outside),
        1 => ty.clone().prop_map(BioTag::Begin),
        1 => ty.prop_map(BioTag::Inside),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn bio_spans_match_brute_force(tags in prop::collection::vec(tag_strategy(), 0..=50)) {
        prop_assert_eq!(bio_spans(&tags), brute_force_spans(&tags));
    }
}

fn token_strategy() -> impl Strategy<Value = String> {
    prop::sample::select(vec![
        "Halldór",
        "Laxness",
        "í",
        "Reykjavík",
        "og",
        "Þór",
        "ÆÖ",
        "x",
        ".",
        "1902",
        "Jón",
        "Sigurðsson",
        "fór",
        "til",
        "Akureyrar",
    ])
    .prop_map(str::to_string)
}

fn sentence_strategy() -> impl Strategy<Value = Vec<Token>> {
    prop::collection::vec(
        (
            token_strategy(),
            tag_strategy(),
            prop::option::of("[a-z]{2,6}"),
        ),
        1..20,
    )
    .prop_map(|words| {
        words
            .into_iter()
            .enumerate()
            .map(|(index, (surface, tag, morph))| Token {
                surface,
                ner_tag: tag.to_string(),
                morph_tag: morph,
                index,
            })
            .collect()
    })
}

fn docs_strategy() -> impl Strategy<Value = Vec<Document>> {
    prop::collection::vec(
        (
            prop::sample::select(vec!["news", "blogs", "adjudications", "books"]),
            prop::collection::vec(sentence_strategy(), 0..5),
        ),
        1..5,
    )
    .prop_map(|docs| {
        docs.into_iter()
            .enumerate()
            .map(|(i, (sub, sentences))| Document {
                id: format!("doc-{i}"),
                subcategory: sub.to_string(),
                sentences,
            })
            .collect()
    })
}

/// Reference context builder: among all suffixes (prefixes on the right)
/// of the neighbouring words, take the longest whose joined length fits,
/// but never fewer than one word.
fn context_oracle(sentence: &[Token], span: Range<usize>, window: usize) -> (String, String) {
    let window = window.max(1);
    let left: Vec<&str> = sentence[..span.start]
        .iter()
        .map(|t| t.surface.as_str())
        .collect();
    let right: Vec<&str> = sentence[span.end..]
        .iter()
        .map(|t| t.surface.as_str())
        .collect();
    let mut best_left = String::new();
    for k in 1..=left.len() {
        let cand = left[left.len() - k..].join(" ");
        if k == 1 || cand.chars().count() <= window {
            best_left = cand;
        } else {
            break;
        }
    }
    let mut best_right = String::new();
    for k in 1..=right.len() {
        let cand = right[..k].join(" ");
        if k == 1 || cand.chars().count() <= window {
            best_right = cand;
        } else {
            break;
        }
    }
    (best_left, best_right)
}

proptest! {
    #[test]
    fn write_then_parse_round_trips(docs in docs_strategy()) {
        let options = ParseOptions::default();
        let text = write_conll(&docs, &options);
        let parsed = parse_conll_with(text.as_bytes(), &options).unwrap();
        // documents without sentences survive as empty documents
        prop_assert_eq!(parsed, docs);
    }

    #[test]
    fn context_matches_oracle(
        sentence in sentence_strategy(),
        a in 0usize..20,
        b in 0usize..20,
        window in 0usize..40,
    ) {
        let n = sentence.len();
        let (s, e) = (a.min(b) % n, (a.max(b) % n) + 1);
        let span = s.min(e - 1)..e;
        prop_assert_eq!(
            build_context(&sentence, span.clone(), window),
            context_oracle(&sentence, span, window)
        );
    }

    #[test]
    fn mentions_reference_their_tokens(docs in docs_strategy()) {
        for m in extract_all(&docs, 256) {
            let doc = docs.iter().find(|d| d.id == m.doc_id).unwrap();
            let sentence = &doc.sentences[m.sentence_index];
            let words: Vec<&str> = sentence[m.token_span.clone()].iter().map(|t| t.surface.as_str()).collect();
            prop_assert_eq!(m.surface.clone(), words.join(" "));
            prop_assert_eq!(m.morph_tags.len(), m.token_span.len());
            prop_assert_eq!(&m.id, &format!("{}:{}:{}", m.doc_id, m.sentence_index, m.token_span.start));
        }
    }
}

/// Independent line-level reading of the sample file: count sentences and
/// B-/orphan-I starts without going through the parser.
#[test]
fn sample_corpus_matches_line_oracle() {
    let text = common::read_fixture("sample.conll");
    let mut sentences = 0;
    let mut in_sentence = false;
    let mut starts = 0;
    let mut prev = "O".to_string();
    for line in text.lines() {
        if line.trim().is_empty() || line.starts_with('#') {
            if in_sentence {
                sentences += 1;
            }
            in_sentence = false;
            prev = "O".into();
            continue;
        }
        in_sentence = true;
        let tag = line.split('\t').nth(1).unwrap().to_string();
        let begins =
            tag.starts_with("B-") || (tag.starts_with("I-") && prev.get(2..) != tag.get(2..));
        if begins {
            starts += 1;
        }
        prev = tag;
    }
    if in_sentence {
        sentences += 1;
    }

    let docs = parse_conll(text.as_bytes()).unwrap();
    assert_eq!(docs.len(), 2);
    assert_eq!(docs[1].subcategory, "adjudications");
    assert_eq!(
        docs.iter().map(|d| d.sentences.len()).sum::<usize>(),
        sentences
    );
    let all = extract_all(&docs, 256);
    assert_eq!(all.len(), starts);
    let linkable = filter_linkable(all);
    let surfaces: Vec<&str> = linkable.iter().map(|m| m.surface.as_str()).collect();
    assert_eq!(
        surfaces,
        [
            "Halldór Laxness",
            "Reykjavík",
            "Björk",
            "Sigur Rós",
            "Mersault",
            "Landsbankinn"
        ]
    );
    assert_eq!(
        linkable[0].right_context,
        "fæddist í Reykjavík 23. apríl 1902 ."
    );
    assert_eq!(
        linkable[0].morph_tags,
        [Some("nken-s".to_string()), Some("nken-s".to_string())]
    );
}

#[test]
fn parse_errors_report_lines() {
    let bad_tag = "# newdoc id = a subcat = news\nJón\tB-Persona\n";
    assert!(matches!(
        parse_conll(bad_tag.as_bytes()),
        Err(ParseError::Tag { line: 2, .. })
    ));
    let columns = "Jón\tB-Person\tx\ty\n";
    assert!(matches!(
        parse_conll(columns.as_bytes()),
        Err(ParseError::Columns { line: 1, found: 4 })
    ));
    let encoding = b"J\xf3n\tB-Person\n";
    assert!(matches!(
        parse_conll(encoding),
        Err(ParseError::Encoding { line: 1 })
    ));
    let dup = "# newdoc id = a subcat = x\nA\tO\n\n# newdoc id = a subcat = y\nB\tO\n";
    assert!(matches!(
        parse_conll(dup.as_bytes()),
        Err(ParseError::DuplicateDocument { line: 4, .. })
    ));
    let marker = "# newdoc id = a subcat\nA\tO\n";
    assert!(matches!(
        parse_conll(marker.as_bytes()),
        Err(ParseError::Marker { line: 1, .. })
    ));
}

#[test]
fn empty_and_untagged_input() {
    assert!(parse_conll(b"").unwrap().is_empty());
    let docs = parse_conll("Hér\tO\ner\tO\n".as_bytes()).unwrap();
    assert_eq!(docs.len(), 1);
    assert_eq!(docs[0].subcategory, "unknown");
    assert!(extract_all(&docs, 256).is_empty());
}

#[test]
fn custom_doc_marker() {
    let options = ParseOptions {
        doc_marker: "#DOC".into(),
    };
    let text = "#DOC id = x subcat = blogs\nÞór\tB-Person\n";
    let docs = parse_conll_with(text.as_bytes(), &options).unwrap();
    assert_eq!(docs[0].id, "x");
    assert_eq!(docs[0].subcategory, "blogs");
}
