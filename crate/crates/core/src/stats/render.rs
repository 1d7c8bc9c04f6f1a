use std::io::{self, Write};
use std::str::FromStr;

use serde_json::json;

use super::{BreakdownRow, CoverageReport, Ratio, StatsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderFormat {
    Tsv,
    JsonLines,
    /// Two columns, `key` and `value` (one-decimal percent), for plotting tools.
    PlotData,
}

impl FromStr for RenderFormat {
    type Err = StatsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tsv" => Ok(RenderFormat::Tsv),
            "json-lines" | "jsonl" => Ok(RenderFormat::JsonLines),
            "plot-data" => Ok(RenderFormat::PlotData),
            _ => Err(StatsError::UnknownFormat(s.to_string())),
        }
    }
}

fn percent(r: Option<Ratio>) -> String {
    r.map(Ratio::display_percent).unwrap_or_default()
}

fn coverage_rows(report: &CoverageReport) -> Vec<(&'static str, u64, Option<Ratio>)> {
    vec![
        (
            "total",
            report.total,
            Ratio::new(report.total, report.total),
        ),
        ("model_labeled", report.model_labeled, report.model_share()),
        (
            "search_labeled",
            report.search_labeled,
            report.search_share(),
        ),
        ("unlabeled", report.unlabeled, report.unlabeled_share()),
        (
            "wapis_overlap",
            report.wapis_overlap,
            report.overlap_share(),
        ),
        ("wapis_total", report.wapis_total, report.wapis_share()),
        (
            "combined_coverage",
            report.model_labeled + report.search_labeled,
            report.combined_share(),
        ),
        (
            "model_accuracy",
            report.model_labeled,
            report.model_accuracy(),
        ),
    ]
}

/// Columns: `metric`, `count`, `percent`. Percentages are of `total`,
/// except `model_accuracy`, which is model labels over all labels.
pub fn render_coverage<W: Write>(
    report: &CoverageReport,
    format: RenderFormat,
    mut out: W,
) -> io::Result<()> {
    let rows = coverage_rows(report);
    match format {
        RenderFormat::Tsv => {
            writeln!(out, "metric\tcount\tpercent")?;
            for (metric, count, share) in rows {
                writeln!(out, "{metric}\t{count}\t{}", percent(share))?;
            }
        }
        RenderFormat::JsonLines => {
            for (metric, count, share) in rows {
                let line = json!({
                    "metric": metric,
                    "count": count,
                    "percent": percent(share),
                    "numerator": share.map(|r| r.num),
                    "denominator": share.map(|r| r.den),
                });
                writeln!(out, "{line}")?;
            }
        }
        RenderFormat::PlotData => {
            writeln!(out, "key\tvalue")?;
            for (metric, _, share) in rows {
                writeln!(out, "{metric}\t{}", percent(share))?;
            }
        }
    }
    Ok(())
}

pub const BREAKDOWN_HEADER: &str = "key\tcount\tmodel\tsearch\tunlabeled\tshare\tskew_warning";

pub fn render_breakdown<W: Write>(
    rows: &[BreakdownRow],
    format: RenderFormat,
    mut out: W,
) -> io::Result<()> {
    match format {
        RenderFormat::Tsv => {
            writeln!(out, "{BREAKDOWN_HEADER}")?;
            for r in rows {
                writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    r.key,
                    r.count,
                    r.model,
                    r.search,
                    r.unlabeled,
                    r.share.display_percent(),
                    r.skew_warning
                )?;
            }
        }
        RenderFormat::JsonLines => {
            for r in rows {
                let line = json!({
                    "key": r.key,
                    "count": r.count,
                    "model": r.model,
                    "search": r.search,
                    "unlabeled": r.unlabeled,
                    "share": r.share.display_percent(),
                    "share_numerator": r.share.num,
                    "share_denominator": r.share.den,
                    "skew_warning": r.skew_warning,
                });
                writeln!(out, "{line}")?;
            }
        }
        RenderFormat::PlotData => {
            writeln!(out, "key\tvalue")?;
            for r in rows {
                writeln!(out, "{}\t{}", r.key, r.share.display_percent())?;
            }
        }
    }
    Ok(())
}
