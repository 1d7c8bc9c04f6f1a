//! Coverage statistics over a finalized store: the overall partition,
//! model accuracy, and per-key breakdowns.
//!
//! Counts are exact integers and shares exact rationals; rounding to one
//! decimal (half-up) happens only for display.

mod render;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::workflow::{Store, WorkflowRecord, WorkflowState};

pub use render::{render_breakdown, render_coverage, RenderFormat};

pub const DEFAULT_MIN_COUNT: usize = 5;
pub const OTHER_KEY: &str = "other";
pub const UNTAGGED_KEY: &str = "untagged";
pub const NO_MORPH_KEY: &str = "_";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("store is not finalized")]
    NotFinalized,
    #[error("unknown dimension {0:?}")]
    UnknownDimension(String),
    #[error("unknown measure {0:?}")]
    UnknownMeasure(String),
    #[error("unknown format {0:?}")]
    UnknownFormat(String),
}

/// A non-negative fraction with a non-zero denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    pub fn new(num: u64, den: u64) -> Option<Self> {
        (den > 0).then_some(Ratio { num, den })
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// The percentage in tenths, rounded half-up: 466/1000 -> 466.
    pub fn percent_tenths(self) -> u64 {
        let num = self.num as u128 * 2_000 + self.den as u128;
        (num / (2 * self.den as u128)) as u64
    }

    /// One-decimal percentage string, e.g. "46.6".
    pub fn display_percent(self) -> String {
        let tenths = self.percent_tenths();
        format!("{}.{}", tenths / 10, tenths % 10)
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub total: u64,
    pub model_labeled: u64,
    pub search_labeled: u64,
    pub unlabeled: u64,
    /// Model-accepted labels that the search round also found.
    pub wapis_overlap: u64,
    /// Everything the search round confirmed: overlap plus search-only labels.
    pub wapis_total: u64,
}

impl CoverageReport {
    pub fn from_counts(
        model_labeled: u64,
        search_labeled: u64,
        unlabeled: u64,
        wapis_overlap: u64,
    ) -> Self {
        CoverageReport {
            total: model_labeled + search_labeled + unlabeled,
            model_labeled,
            search_labeled,
            unlabeled,
            wapis_overlap,
            wapis_total: wapis_overlap + search_labeled,
        }
    }

    fn share(&self, count: u64) -> Option<Ratio> {
        Ratio::new(count, self.total)
    }

    pub fn model_share(&self) -> Option<Ratio> {
        self.share(self.model_labeled)
    }

    pub fn search_share(&self) -> Option<Ratio> {
        self.share(self.search_labeled)
    }

    pub fn unlabeled_share(&self) -> Option<Ratio> {
        self.share(self.unlabeled)
    }

    pub fn overlap_share(&self) -> Option<Ratio> {
        self.share(self.wapis_overlap)
    }

    pub fn wapis_share(&self) -> Option<Ratio> {
        self.share(self.wapis_total)
    }

    /// Model plus search labels over all mentions.
    pub fn combined_share(&self) -> Option<Ratio> {
        self.share(self.model_labeled + self.search_labeled)
    }

    pub fn model_accuracy(&self) -> Option<Ratio> {
        model_accuracy(self)
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        if self.model_labeled + self.search_labeled + self.unlabeled != self.total {
            return Err("partition does not sum to total".into());
        }
        if self.wapis_total != self.wapis_overlap + self.search_labeled {
            return Err("wapis_total != overlap + search".into());
        }
        if self.wapis_overlap > self.model_labeled {
            return Err("overlap exceeds model labels".into());
        }
        Ok(())
    }
}

fn tally(store: &Store, treat_open_as_unlabeled: bool) -> CoverageReport {
    let mut model = 0;
    let mut search = 0;
    let mut unlabeled = 0;
    let mut overlap = 0;
    for r in store.records() {
        match r.state {
            WorkflowState::ModelAccepted => {
                model += 1;
                if r.overlap == Some(true) {
                    overlap += 1;
                }
            }
            WorkflowState::SearchAccepted => search += 1,
            WorkflowState::Unlabeled => unlabeled += 1,
            _ if treat_open_as_unlabeled => unlabeled += 1,
            _ => {}
        }
    }
    CoverageReport::from_counts(model, search, unlabeled, overlap)
}

pub fn coverage(store: &Store) -> Result<CoverageReport, StatsError> {
    if !store.is_finalized() {
        return Err(StatsError::NotFinalized);
    }
    Ok(tally(store, false))
}

/// The report the store would give if it were finalized now.
pub fn provisional_coverage(store: &Store) -> CoverageReport {
    tally(store, true)
}

/// Model labels over all labels; `None` when nothing is labeled.
pub fn model_accuracy(report: &CoverageReport) -> Option<Ratio> {
    Ratio::new(
        report.model_labeled,
        report.model_labeled + report.search_labeled,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    LabelLanguage,
    Subcategory,
    NeType,
    MorphTag,
    UnlabeledCategory,
    UnlabeledFactor,
}

impl Dimension {
    pub const ALL: [Dimension; 6] = [
        Dimension::LabelLanguage,
        Dimension::Subcategory,
        Dimension::NeType,
        Dimension::MorphTag,
        Dimension::UnlabeledCategory,
        Dimension::UnlabeledFactor,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::LabelLanguage => "label_language",
            Dimension::Subcategory => "subcategory",
            Dimension::NeType => "ne_type",
            Dimension::MorphTag => "morph_tag",
            Dimension::UnlabeledCategory => "unlabeled_category",
            Dimension::UnlabeledFactor => "unlabeled_factor",
        }
    }
}

impl FromStr for Dimension {
    type Err = StatsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Dimension::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| StatsError::UnknownDimension(s.to_string()))
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    /// Labeled items of a key over all items of that key.
    CoverageShare,
    /// Items of a key over the dimension's denominator.
    CompositionShare,
}

impl FromStr for Measure {
    type Err = StatsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "coverage_share" => Ok(Measure::CoverageShare),
            "composition_share" => Ok(Measure::CompositionShare),
            _ => Err(StatsError::UnknownMeasure(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BreakdownRow {
    pub key: String,
    pub count: u64,
    pub model: u64,
    pub search: u64,
    pub unlabeled: u64,
    pub share: Ratio,
    /// Set for subcategories whose sources are anonymized, where surface
    /// forms can match unrelated wiki pages.
    pub skew_warning: bool,
}

#[derive(Debug, Clone, Default)]
pub struct BreakdownOptions {
    pub skew_subcategories: BTreeSet<String>,
}

#[derive(Clone, Copy)]
enum Outcome {
    Model,
    Search,
    Unlabeled,
}

fn outcome(r: &WorkflowRecord) -> Outcome {
    match r.state {
        WorkflowState::ModelAccepted => Outcome::Model,
        WorkflowState::SearchAccepted => Outcome::Search,
        _ => Outcome::Unlabeled,
    }
}

/// Items per key for one dimension, plus the composition denominator.
/// Morph tags count tokens; everything else counts mentions.
fn items(store: &Store, dimension: Dimension) -> (Vec<(String, Outcome)>, u64) {
    let records = store.records();
    let mut out = Vec::new();
    let denominator = match dimension {
        Dimension::LabelLanguage => {
            for r in records {
                if let Some(label) = r.label() {
                    out.push((label.language.clone(), outcome(r)));
                }
            }
            out.len() as u64
        }
        Dimension::Subcategory => {
            out.extend(records.iter().map(|r| (r.subcategory.clone(), outcome(r))));
            out.len() as u64
        }
        Dimension::NeType => {
            out.extend(
                records
                    .iter()
                    .map(|r| (r.mention.ne_type.to_string(), outcome(r))),
            );
            out.len() as u64
        }
        Dimension::MorphTag => {
            for r in records {
                for tag in &r.mention.morph_tags {
                    let key = tag.clone().unwrap_or_else(|| NO_MORPH_KEY.to_string());
                    out.push((key, outcome(r)));
                }
            }
            out.len() as u64
        }
        Dimension::UnlabeledCategory => {
            for r in records
                .iter()
                .filter(|r| r.state == WorkflowState::Unlabeled)
            {
                let key = r
                    .unlabeled_tag
                    .as_ref()
                    .map(|t| t.category.to_string())
                    .unwrap_or_else(|| UNTAGGED_KEY.to_string());
                out.push((key, Outcome::Unlabeled));
            }
            out.len() as u64
        }
        Dimension::UnlabeledFactor => {
            let mut unlabeled = 0;
            for r in records
                .iter()
                .filter(|r| r.state == WorkflowState::Unlabeled)
            {
                unlabeled += 1;
                match &r.unlabeled_tag {
                    None => out.push((UNTAGGED_KEY.to_string(), Outcome::Unlabeled)),
                    Some(tag) if tag.factors.is_empty() => {
                        out.push(("none".to_string(), Outcome::Unlabeled))
                    }
                    Some(tag) => out.extend(
                        tag.factors
                            .iter()
                            .map(|f| (f.to_string(), Outcome::Unlabeled)),
                    ),
                }
            }
            // a mention may carry several factors; shares are per unlabeled mention
            unlabeled
        }
    };
    (out, denominator)
}

pub fn breakdown(
    store: &Store,
    dimension: Dimension,
    measure: Measure,
    options: &BreakdownOptions,
) -> Result<Vec<BreakdownRow>, StatsError> {
    if !store.is_finalized() {
        return Err(StatsError::NotFinalized);
    }
    let (items, denominator) = items(store, dimension);
    let mut by_key: BTreeMap<String, [u64; 3]> = BTreeMap::new();
    for (key, o) in items {
        let counts = by_key.entry(key).or_default();
        counts[o as usize] += 1;
    }
    let mut rows: Vec<BreakdownRow> = by_key
        .into_iter()
        .map(|(key, [model, search, unlabeled])| {
            let count = model + search + unlabeled;
            let share = match measure {
                Measure::CoverageShare => Ratio::new(model + search, count),
                Measure::CompositionShare => Ratio::new(count, denominator),
            }
            .expect("non-empty key has a positive denominator");
            BreakdownRow {
                skew_warning: dimension == Dimension::Subcategory
                    && options.skew_subcategories.contains(&key),
                key,
                count,
                model,
                search,
                unlabeled,
                share,
            }
        })
        .collect();
    sort_rows(&mut rows);
    Ok(rows)
}

fn sort_rows(rows: &mut [BreakdownRow]) {
    rows.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.key.cmp(&b.key)));
}

/// Folds rows with `count < min_count` into one `other` row. Shares are
/// recombined exactly, so this only changes presentation.
pub fn collapse_small(
    rows: &[BreakdownRow],
    min_count: u64,
    measure: Measure,
) -> Vec<BreakdownRow> {
    let (keep, small): (Vec<_>, Vec<_>) = rows.iter().cloned().partition(|r| r.count >= min_count);
    if small.is_empty() {
        return keep;
    }
    let mut other = BreakdownRow {
        key: OTHER_KEY.to_string(),
        count: 0,
        model: 0,
        search: 0,
        unlabeled: 0,
        share: small[0].share,
        skew_warning: false,
    };
    for r in &small {
        other.count += r.count;
        other.model += r.model;
        other.search += r.search;
        other.unlabeled += r.unlabeled;
        other.skew_warning |= r.skew_warning;
    }
    other.share = match measure {
        Measure::CoverageShare => Ratio {
            num: other.model + other.search,
            den: other.count,
        },
        Measure::CompositionShare => Ratio {
            num: small.iter().map(|r| r.share.num).sum(),
            den: small[0].share.den,
        },
    };
    let mut rows = keep;
    rows.push(other);
    rows
}
