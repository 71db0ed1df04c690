//! Descriptive drift diagnostics across year buckets.

mod svg;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::types::YearBucket;

/// Upper edge of the stay-relative histograms; later hours go to an
/// overflow bin so that counts are conserved.
pub const MAX_STAY_HOUR: usize = 240;
pub const DAYTIME_START_HOUR: u32 = 9;
pub const DAYTIME_END_HOUR: u32 = 17;
pub const DEFAULT_TOP_N: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketSeries {
    pub bucket: YearBucket,
    pub bins: Vec<String>,
    pub counts: Vec<u64>,
    /// Counts divided by their total; `None` when the series is empty.
    pub normalized: Option<Vec<f64>>,
    /// Counts divided by the number of stays in the bucket, when known.
    pub per_stay: Option<Vec<f64>>,
}

impl BucketSeries {
    fn new(bucket: YearBucket, bins: Vec<String>, counts: Vec<u64>, n_stays: Option<u64>) -> Self {
        let total: u64 = counts.iter().sum();
        let normalized = (total > 0).then(|| counts.iter().map(|&c| c as f64 / total as f64).collect());
        let per_stay = n_stays
            .filter(|&n| n > 0)
            .map(|n| counts.iter().map(|&c| c as f64 / n as f64).collect());
        Self {
            bucket,
            bins,
            counts,
            normalized,
            per_stay,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }
}

fn stay_hour_bins() -> Vec<String> {
    (0..MAX_STAY_HOUR)
        .map(|h| h.to_string())
        .chain([format!("{MAX_STAY_HOUR}+")])
        .collect()
}

fn stay_hour_bin(hour: f64) -> usize {
    if hour.is_nan() || hour < 0.0 {
        0
    } else {
        (hour.floor() as usize).min(MAX_STAY_HOUR)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OnsetDistribution {
    pub series: Vec<BucketSeries>,
    pub means: [Option<f64>; 4],
    /// Buckets without any positive stay.
    pub empty_buckets: Vec<YearBucket>,
}

/// Histogram of onset hours of positive stays, per bucket.
pub fn onset_distribution(onsets: impl IntoIterator<Item = (YearBucket, f64)>) -> OnsetDistribution {
    let mut counts = vec![vec![0u64; MAX_STAY_HOUR + 1]; 4];
    let mut sums = [0.0f64; 4];
    let mut ns = [0u64; 4];
    for (b, t) in onsets {
        counts[b.index()][stay_hour_bin(t)] += 1;
        sums[b.index()] += t;
        ns[b.index()] += 1;
    }
    let series: Vec<BucketSeries> = YearBucket::ALL
        .into_iter()
        .zip(counts)
        .map(|(b, c)| BucketSeries::new(b, stay_hour_bins(), c, Some(ns[b.index()])))
        .collect();
    let means = std::array::from_fn(|i| (ns[i] > 0).then(|| sums[i] / ns[i] as f64));
    let empty_buckets = YearBucket::ALL.into_iter().filter(|b| ns[b.index()] == 0).collect();
    OnsetDistribution {
        series,
        means,
        empty_buckets,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SpecimenChangeRow {
    pub specimen_type: String,
    pub counts: [u64; 4],
    pub change: i64,
    /// Whole percent, rounded half away from zero; +100 when the first
    /// bucket is zero and the last is not.
    pub pct_change: i64,
}

impl SpecimenChangeRow {
    pub fn from_counts(specimen_type: impl Into<String>, counts: [u64; 4]) -> Self {
        let first = counts[0] as i64;
        let change = counts[3] as i64 - first;
        let pct_change = if first == 0 {
            if change > 0 {
                100
            } else {
                0
            }
        } else {
            let num = 100 * change;
            let q = (2 * num.abs() + first) / (2 * first);
            num.signum() * q
        };
        Self {
            specimen_type: specimen_type.into(),
            counts,
            change,
            pct_change,
        }
    }
}

pub fn format_signed(v: i64) -> String {
    if v > 0 {
        format!("+{v}")
    } else {
        v.to_string()
    }
}

/// Per-specimen sample counts by bucket, sorted by absolute change
/// (descending, then by name) and truncated to `top_n`.
pub fn specimen_change_table<'a>(
    samples: impl IntoIterator<Item = (YearBucket, &'a str)>,
    top_n: usize,
) -> Vec<SpecimenChangeRow> {
    let mut counts: BTreeMap<&str, [u64; 4]> = BTreeMap::new();
    for (b, spec) in samples {
        counts.entry(spec).or_default()[b.index()] += 1;
    }
    let mut rows: Vec<SpecimenChangeRow> = counts
        .into_iter()
        .map(|(s, c)| SpecimenChangeRow::from_counts(s, c))
        .collect();
    rows.sort_by(|a, b| {
        b.change
            .abs()
            .cmp(&a.change.abs())
            .then_with(|| a.specimen_type.cmp(&b.specimen_type))
    });
    rows.truncate(top_n);
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HourOfDay {
    pub series: Vec<BucketSeries>,
    /// Fraction of samples drawn in [9, 17) wall-clock hours; `None` for an
    /// empty bucket.
    pub daytime_share: [Option<f64>; 4],
}

pub fn hour_of_day_histogram(samples: impl IntoIterator<Item = (YearBucket, u32)>) -> HourOfDay {
    let mut counts = vec![vec![0u64; 24]; 4];
    for (b, h) in samples {
        counts[b.index()][(h % 24) as usize] += 1;
    }
    let daytime_share = std::array::from_fn(|i| {
        let total: u64 = counts[i].iter().sum();
        let day: u64 = counts[i][DAYTIME_START_HOUR as usize..DAYTIME_END_HOUR as usize].iter().sum();
        (total > 0).then(|| day as f64 / total as f64)
    });
    let bins: Vec<String> = (0..24).map(|h| h.to_string()).collect();
    let series = YearBucket::ALL
        .into_iter()
        .zip(counts)
        .map(|(b, c)| BucketSeries::new(b, bins.clone(), c, None))
        .collect();
    HourOfDay {
        series,
        daytime_share,
    }
}

/// Antibiotic orders by hours into the stay. Orders before ICU admission
/// fall in the first bin.
pub fn antibiotics_trend(
    orders: impl IntoIterator<Item = (YearBucket, f64)>,
    stays_per_bucket: Option<[u64; 4]>,
) -> Vec<BucketSeries> {
    let mut counts = vec![vec![0u64; MAX_STAY_HOUR + 1]; 4];
    for (b, h) in orders {
        counts[b.index()][stay_hour_bin(h)] += 1;
    }
    YearBucket::ALL
        .into_iter()
        .zip(counts)
        .map(|(b, c)| BucketSeries::new(b, stay_hour_bins(), c, stays_per_bucket.map(|s| s[b.index()])))
        .collect()
}

/// Largest absolute difference between any two buckets' normalized curves.
pub fn sup_distance(series: &[BucketSeries]) -> f64 {
    let curves: Vec<&Vec<f64>> = series.iter().filter_map(|s| s.normalized.as_ref()).collect();
    let mut d: f64 = 0.0;
    for (i, a) in curves.iter().enumerate() {
        for b in &curves[i + 1..] {
            for (x, y) in a.iter().zip(b.iter()) {
                d = d.max((x - y).abs());
            }
        }
    }
    d
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftReport {
    pub onset: OnsetDistribution,
    pub specimen_changes: Vec<SpecimenChangeRow>,
    pub hour_of_day: HourOfDay,
    pub antibiotics: Vec<BucketSeries>,
}

#[derive(Debug, thiserror::Error)]
#[error("{path}: {source}")]
pub struct ReportError {
    pub path: String,
    #[source]
    pub source: std::io::Error,
}

fn fmt_f(v: f64) -> String {
    format!("{v:.6}")
}

fn series_csv(series: &BucketSeries, bin_header: &str) -> String {
    let mut out = format!("{bin_header},count,normalized,per_stay\n");
    for (i, bin) in series.bins.iter().enumerate() {
        let norm = series.normalized.as_ref().map_or(String::new(), |n| fmt_f(n[i]));
        let per = series.per_stay.as_ref().map_or(String::new(), |n| fmt_f(n[i]));
        let _ = writeln!(out, "{bin},{},{norm},{per}", series.counts[i]);
    }
    out
}

fn long_csv(series: &[BucketSeries], bin_header: &str) -> String {
    let mut out = format!("bucket,{bin_header},count,normalized,per_stay\n");
    for s in series {
        for (i, bin) in s.bins.iter().enumerate() {
            let norm = s.normalized.as_ref().map_or(String::new(), |n| fmt_f(n[i]));
            let per = s.per_stay.as_ref().map_or(String::new(), |n| fmt_f(n[i]));
            let _ = writeln!(out, "{},{bin},{},{norm},{per}", s.bucket.as_str(), s.counts[i]);
        }
    }
    out
}

pub fn specimen_changes_csv(rows: &[SpecimenChangeRow]) -> String {
    let mut out = String::from("specimen_type");
    for b in YearBucket::ALL {
        let _ = write!(out, ",{}", b.as_str());
    }
    out.push_str(",change,pct_change\n");
    for r in rows {
        let name = if r.specimen_type.contains([',', '"', '\n']) {
            format!("\"{}\"", r.specimen_type.replace('"', "\"\""))
        } else {
            r.specimen_type.clone()
        };
        let _ = writeln!(
            out,
            "{name},{},{},{},{},{},{}%",
            r.counts[0],
            r.counts[1],
            r.counts[2],
            r.counts[3],
            format_signed(r.change),
            format_signed(r.pct_change)
        );
    }
    out
}

fn summary_md(report: &DriftReport) -> String {
    let mut out = String::from("# Drift report\n\n");
    let n_series = report.onset.series.iter().filter(|s| !s.is_empty()).count()
        + report.hour_of_day.series.iter().filter(|s| !s.is_empty()).count()
        + report.antibiotics.iter().filter(|s| !s.is_empty()).count();
    if n_series == 0 && report.specimen_changes.is_empty() {
        out.push_str("No input events: zero non-empty series.\n");
        return out;
    }
    out.push_str("## Sepsis onset\n\n| Bucket | Positives | Mean onset (h) |\n|---|---|---|\n");
    for (s, m) in report.onset.series.iter().zip(report.onset.means) {
        let mean = m.map_or("n/a".to_string(), |m| format!("{m:.2}"));
        let _ = writeln!(out, "| {} | {} | {mean} |", s.bucket.as_str(), s.total());
    }
    if !report.onset.empty_buckets.is_empty() {
        let names: Vec<&str> = report.onset.empty_buckets.iter().map(|b| b.as_str()).collect();
        let _ = writeln!(out, "\nBuckets without positives: {}", names.join(", "));
    }
    out.push_str("\n## Microbiology sampling by hour of day\n\n| Bucket | Samples | Daytime share (9-17h) |\n|---|---|---|\n");
    for (s, d) in report.hour_of_day.series.iter().zip(report.hour_of_day.daytime_share) {
        let share = d.map_or("n/a".to_string(), |d| format!("{d:.3}"));
        let _ = writeln!(out, "| {} | {} | {share} |", s.bucket.as_str(), s.total());
    }
    out.push_str("\n## Antibiotic orders\n\n| Bucket | Orders |\n|---|---|\n");
    for s in &report.antibiotics {
        let _ = writeln!(out, "| {} | {} |", s.bucket.as_str(), s.total());
    }
    let _ = writeln!(
        out,
        "\nLargest difference between normalized antibiotic curves: {:.4}",
        sup_distance(&report.antibiotics)
    );
    out.push_str("\n## Specimen types with the largest change\n\n| Specimen type |");
    for b in YearBucket::ALL {
        let _ = write!(out, " {} |", b.as_str());
    }
    out.push_str(" Change | % Change |\n|---|---|---|---|---|---|---|\n");
    for r in &report.specimen_changes {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {}% |",
            r.specimen_type,
            r.counts[0],
            r.counts[1],
            r.counts[2],
            r.counts[3],
            format_signed(r.change),
            format_signed(r.pct_change)
        );
    }
    out
}

/// Output file names written by [`emit_report`].
pub fn report_files() -> Vec<String> {
    let mut names: Vec<String> = YearBucket::ALL
        .iter()
        .map(|b| format!("onset_hist_{}.csv", b.as_str()))
        .collect();
    names.extend(
        [
            "onset_hist.svg",
            "specimen_changes.csv",
            "specimen_changes.svg",
            "microbio_hour_of_day.csv",
            "microbio_hour_of_day.svg",
            "antibiotics_trend.csv",
            "antibiotics_trend.svg",
            "summary.md",
        ]
        .map(String::from),
    );
    names
}

/// Write every CSV, SVG and the summary page; returns the written paths.
pub fn emit_report(report: &DriftReport, out_dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    let err = |p: &Path| {
        let path = p.display().to_string();
        move |source| ReportError { path, source }
    };
    fs::create_dir_all(out_dir).map_err(err(out_dir))?;
    let mut files: Vec<(String, String)> = Vec::new();
    for s in &report.onset.series {
        files.push((format!("onset_hist_{}.csv", s.bucket.as_str()), series_csv(s, "hour")));
    }
    files.push((
        "onset_hist.svg".into(),
        svg::line_chart("Sepsis onset hour by year bucket", "hours since ICU admission", "share of positives", &report.onset.series),
    ));
    files.push(("specimen_changes.csv".into(), specimen_changes_csv(&report.specimen_changes)));
    files.push(("specimen_changes.svg".into(), svg::specimen_bars(&report.specimen_changes)));
    files.push(("microbio_hour_of_day.csv".into(), long_csv(&report.hour_of_day.series, "hour_of_day")));
    files.push((
        "microbio_hour_of_day.svg".into(),
        svg::line_chart("Cultures drawn by hour of day", "hour of day", "share of samples", &report.hour_of_day.series),
    ));
    files.push(("antibiotics_trend.csv".into(), long_csv(&report.antibiotics, "hour")));
    files.push((
        "antibiotics_trend.svg".into(),
        svg::line_chart("Antibiotic orders by hour of stay", "hours since ICU admission", "share of orders", &report.antibiotics),
    ));
    files.push(("summary.md".into(), summary_md(report)));

    let mut written = Vec::with_capacity(files.len());
    for (name, body) in files {
        let p = out_dir.join(name);
        fs::write(&p, body).map_err(err(&p))?;
        written.push(p);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use YearBucket::*;

    #[test]
    fn table_six_rows() {
        let swab = SpecimenChangeRow::from_counts("SWAB", [92304, 79169, 68363, 39677]);
        assert_eq!((swab.change, swab.pct_change), (-52627, -57));
        let mrsa = SpecimenChangeRow::from_counts("MRSA SCREEN", [39086, 34375, 14766, 5657]);
        assert_eq!((mrsa.change, mrsa.pct_change), (-33429, -86));
        let lyme = SpecimenChangeRow::from_counts("Blood (LYME)", [0, 4, 2414, 3815]);
        assert_eq!((lyme.change, lyme.pct_change), (3815, 100));
        let flat = SpecimenChangeRow::from_counts("X", [7, 1, 2, 7]);
        assert_eq!((flat.change, flat.pct_change), (0, 0));
        // Recomputed from counts rather than the printed -30%.
        let pleural = SpecimenChangeRow::from_counts("PLEURAL FLUID", [7560, 7560, 8834, 9826]);
        assert_eq!((pleural.change, pleural.pct_change), (2266, 30));
    }

    #[test]
    fn half_percent_rounds_away_from_zero() {
        assert_eq!(SpecimenChangeRow::from_counts("a", [200, 0, 0, 201]).pct_change, 1);
        assert_eq!(SpecimenChangeRow::from_counts("a", [200, 0, 0, 199]).pct_change, -1);
        assert_eq!(SpecimenChangeRow::from_counts("a", [1000, 0, 0, 994]).pct_change, -1);
    }

    #[test]
    fn specimen_sorting_and_top_n() {
        let mut samples = Vec::new();
        samples.extend(std::iter::repeat_n((Y2008, "A"), 10));
        samples.extend(std::iter::repeat_n((Y2017, "B"), 4));
        samples.extend(std::iter::repeat_n((Y2008, "C"), 4));
        samples.push((Y2011, "D"));
        let rows = specimen_change_table(samples, 3);
        let names: Vec<&str> = rows.iter().map(|r| r.specimen_type.as_str()).collect();
        assert_eq!(names, ["A", "B", "C"]);
        assert_eq!(rows[1].pct_change, 100);
    }

    #[test]
    fn single_onset() {
        let d = onset_distribution([(Y2011, 10.0)]);
        assert_eq!(d.means[1], Some(10.0));
        assert_eq!(d.series[1].counts.iter().filter(|&&c| c > 0).count(), 1);
        assert_eq!(d.series[1].counts[10], 1);
        assert_eq!(d.empty_buckets, vec![Y2008, Y2014, Y2017]);
        assert!(d.series[0].normalized.is_none());
    }

    #[test]
    fn identical_distributions_identical_series() {
        let ts = [7.5, 9.0, 12.2, 30.0, 240.0];
        let d = onset_distribution(YearBucket::ALL.into_iter().flat_map(|b| ts.map(|t| (b, t))));
        for s in &d.series[1..] {
            assert_eq!(s.normalized, d.series[0].normalized);
        }
        assert_eq!(d.series[0].counts[MAX_STAY_HOUR], 1);
    }

    #[test]
    fn hour_of_day_conservation_and_share() {
        let samples: Vec<(YearBucket, u32)> = (0..24 * 5).map(|i| (Y2014, i % 24)).collect();
        let h = hour_of_day_histogram(samples.clone());
        assert_eq!(h.series[2].total(), samples.len() as u64);
        for p in h.series[2].normalized.as_ref().unwrap() {
            assert!((p - 1.0 / 24.0).abs() < 1e-12);
        }
        assert!((h.daytime_share[2].unwrap() - 8.0 / 24.0).abs() < 1e-12);
        assert_eq!(h.daytime_share[0], None);
        assert!(h.series[0].counts.iter().all(|&c| c == 0));
    }

    #[test]
    fn antibiotics_single_and_empty() {
        let s = antibiotics_trend([(Y2008, 5.4)], Some([2, 0, 0, 0]));
        assert_eq!(s[0].counts[5], 1);
        assert_eq!(s[0].total(), 1);
        assert_eq!(s[0].per_stay.as_ref().unwrap()[5], 0.5);
        assert!(s[1].is_empty());
        assert_eq!(sup_distance(&s), 0.0);
    }

    fn fixture() -> DriftReport {
        let mut micro = Vec::new();
        micro.extend(std::iter::repeat_n((Y2008, "SWAB"), 50));
        micro.extend(std::iter::repeat_n((Y2017, "SWAB"), 20));
        micro.extend(std::iter::repeat_n((Y2011, "URINE"), 9));
        DriftReport {
            onset: onset_distribution([(Y2008, 9.0), (Y2017, 12.0), (Y2017, 13.5)]),
            specimen_changes: specimen_change_table(micro, DEFAULT_TOP_N),
            hour_of_day: hour_of_day_histogram([(Y2008, 10), (Y2017, 3)]),
            antibiotics: antibiotics_trend([(Y2008, 1.0), (Y2011, 2.0)], None),
        }
    }

    #[test]
    fn emit_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        let written = emit_report(&fixture(), &a).unwrap();
        emit_report(&fixture(), &b).unwrap();
        assert_eq!(written.len(), report_files().len());
        for name in report_files() {
            assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name}");
        }
        let svg = fs::read_to_string(a.join("onset_hist.svg")).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        let csv = fs::read_to_string(a.join("specimen_changes.csv")).unwrap();
        assert!(csv.contains("SWAB,50,0,0,20,-30,-60%"));
    }

    #[test]
    fn empty_report_summary() {
        let r = DriftReport {
            onset: onset_distribution([]),
            specimen_changes: specimen_change_table([], 5),
            hour_of_day: hour_of_day_histogram([]),
            antibiotics: antibiotics_trend([], None),
        };
        let dir = tempfile::tempdir().unwrap();
        emit_report(&r, dir.path()).unwrap();
        let s = fs::read_to_string(dir.path().join("summary.md")).unwrap();
        assert!(s.contains("zero non-empty series"));
    }
}
