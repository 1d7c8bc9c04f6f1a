mod common;

use std::sync::Arc;
use std::time::Duration;

use elboot_core::candidate::CandidateSource;
use elboot_core::clock::{Clock, ManualClock};
use elboot_core::net::{
    Fetcher, FixtureReply, FixtureTransport, RateLimiter, ResponseCache, DEFAULT_TTL,
};
use elboot_core::wapis::{build_search_url, HostStatus, SearchQuery, WikiSearch};
use proptest::prelude::*;

/// RFC 3986 encoding of a query component, written out byte by byte.
fn encode_oracle(text: &str) -> String {
    let mut out = String::new();
    for b in text.bytes() {
        if b.is_ascii_alphanumeric() || b"-._~".contains(&b) {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

fn golden() -> Vec<(String, String, usize, String)> {
    common::read_fixture("wapis_golden.tsv")
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            (f[0].into(), f[1].into(), f[2].parse().unwrap(), f[3].into())
        })
        .collect()
}

#[test]
fn search_urls_match_golden_file() {
    let rows = golden();
    assert_eq!(rows.len(), 50);
    for (text, host, limit, url) in &rows {
        assert_eq!(&build_search_url(text, host, *limit), url, "{text}");
    }
    assert!(rows[0].3.contains("search=Halld%C3%B3r%20Laxness&limit=10"));
}

proptest! {
    #[test]
    fn search_url_encoding_matches_oracle(text in "\\PC{1,30}", limit in 1usize..100) {
        let url = build_search_url(&text, "is.wikipedia.org", limit);
        let expected = format!(
            "https://is.wikipedia.org/w/api.php?action=opensearch&search={}&limit={limit}&namespace=0&format=json",
            encode_oracle(&text)
        );
        prop_assert_eq!(url, expected);
    }
}

#[test]
fn recorded_search_keeps_host_order() {
    let env = common::recorded();
    let hosts = common::default_hosts();
    let mut checked = 0;
    for (text, _, _, _) in golden() {
        let query = SearchQuery::new(text.clone(), hosts.clone(), 10).unwrap();
        let result = env.search.search(&query);
        assert_eq!(result.per_host_status.len(), 2);
        assert_eq!(result.per_host_status[0].0, "is.wikipedia.org");
        let langs: Vec<&str> = result
            .candidates
            .iter()
            .map(|c| c.language.as_str())
            .collect();
        let first_en = langs.iter().position(|l| *l == "en").unwrap_or(langs.len());
        assert!(
            langs[first_en..].iter().all(|l| *l == "en"),
            "{text}: {langs:?}"
        );
        assert!(result
            .candidates
            .iter()
            .all(|c| c.source == CandidateSource::Search));
        checked += 1;
    }
    assert_eq!(checked, 50);
}

#[test]
fn reykjavik_recorded() {
    let env = common::recorded();
    let query = SearchQuery::new("Reykjavík", common::default_hosts(), 10).unwrap();
    let result = env.search.search(&query);
    let got: Vec<(&str, &str)> = result
        .candidates
        .iter()
        .map(|c| (c.language.as_str(), c.title.as_str()))
        .collect();
    assert_eq!(
        got,
        [
            ("is", "Reykjavík"),
            ("en", "Reykjavík"),
            ("en", "Reykjavík Airport")
        ]
    );
}

#[test]
fn misspelling_has_no_icelandic_match() {
    let env = common::recorded();
    let query = SearchQuery::new("Mersault", common::default_hosts(), 10).unwrap();
    let result = env.search.search(&query);
    assert!(result.candidates.iter().all(|c| c.language == "en"));
    assert!(!result.candidates.iter().any(|c| c.title == "Mersault"));
    assert_eq!(result.candidates[0].title, "Meursault");
}

#[test]
fn failing_hosts_are_reported_not_fatal() {
    let env = common::recorded();
    let hosts = common::default_hosts();
    // fixture row 11 has a 503 on en, row 23 a timeout on is
    let rows = golden();
    let r = env
        .search
        .search(&SearchQuery::new(rows[11].0.clone(), hosts.clone(), 10).unwrap());
    assert_eq!(r.per_host_status[1].1, HostStatus::HttpError(503));
    assert!(!r.candidates.is_empty());
    let r = env
        .search
        .search(&SearchQuery::new(rows[23].0.clone(), hosts, 10).unwrap());
    assert_eq!(r.per_host_status[0].1, HostStatus::Timeout);
    assert!(!r.all_failed());
}

#[test]
fn cached_queries_do_not_refetch() {
    let env = common::recorded();
    let query = SearchQuery::new("Björk", common::default_hosts(), 10).unwrap();
    let first = env.search.search(&query);
    let calls = env.transport.calls().len();
    let second = env.search.search(&query);
    assert_eq!(first, second);
    assert_eq!(env.transport.calls().len(), calls);
}

#[test]
fn rate_limit_on_virtual_clock() {
    let clock = Arc::new(ManualClock::new(0));
    let dyn_clock: Arc<dyn Clock> = clock.clone();
    let transport = Arc::new(FixtureTransport::with_clock(dyn_clock.clone()));
    let limiter = Arc::new(RateLimiter::new(2.0, 1, dyn_clock.clone()));
    let search = WikiSearch::new(
        Fetcher::new(transport.clone(), limiter, dyn_clock.clone()),
        Arc::new(ResponseCache::in_memory(DEFAULT_TTL, dyn_clock)),
    );
    let hosts = vec!["is.wikipedia.org".to_string()];
    for i in 0..10 {
        let text = format!("Nafn {i}");
        transport.insert(
            build_search_url(&text, "is.wikipedia.org", 10),
            FixtureReply::ok(format!("[\"{text}\",[],[],[]]")),
        );
        search.search(&SearchQuery::new(text, hosts.clone(), 10).unwrap());
    }
    let stamps: Vec<i64> = transport
        .stamped_calls()
        .into_iter()
        .map(|(_, t)| t)
        .collect();
    assert_eq!(stamps.len(), 10);
    for w in stamps.windows(2) {
        assert!(w[1] - w[0] >= 500, "{stamps:?}");
    }
    // ten calls at 2/s take 4.5 s of virtual time and no wall time
    assert_eq!(stamps[9] - stamps[0], 4_500);
}

#[test]
fn retries_until_success() {
    let clock: Arc<dyn Clock> = Arc::new(ManualClock::new(0));
    let transport = Arc::new(FixtureTransport::new());
    let url = build_search_url("Hekla", "is.wikipedia.org", 10);
    transport.script(
        url.clone(),
        vec![
            FixtureReply::status(503, ""),
            FixtureReply::Timeout,
            FixtureReply::ok("[\"Hekla\",[\"Hekla\"],[\"\"],[\"\"]]"),
        ],
    );
    let search = WikiSearch::new(
        Fetcher::new(
            transport.clone(),
            Arc::new(RateLimiter::new(100.0, 1, clock.clone())),
            clock.clone(),
        ),
        Arc::new(ResponseCache::in_memory(Duration::from_secs(60), clock)),
    );
    let r = search.search(&SearchQuery::new("Hekla", vec!["is.wikipedia.org".into()], 10).unwrap());
    assert_eq!(r.candidates.len(), 1);
    assert_eq!(transport.calls().len(), 3);
}

#[test]
fn query_validation() {
    assert!(SearchQuery::new("", common::default_hosts(), 10).is_err());
    assert!(SearchQuery::new("x", vec![], 10).is_err());
    assert!(SearchQuery::new("x", common::default_hosts(), 0).is_err());
    let q = SearchQuery::new("  Þór  ", common::default_hosts(), 10).unwrap();
    assert_eq!(q.text(), "  Þór  ");
}
