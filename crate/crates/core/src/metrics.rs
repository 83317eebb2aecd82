//! Word error rate, per-region aggregation and relative-reduction reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditCounts {
    pub sub: usize,
    pub ins: usize,
    pub del: usize,
}

impl EditCounts {
    pub fn total(&self) -> usize {
        self.sub + self.ins + self.del
    }
}

/// Unit-cost Levenshtein alignment. On ties the backtrace prefers
/// match/substitution, then deletion, then insertion.
pub fn edit_distance<T: PartialEq>(reference: &[T], hyp: &[T]) -> EditCounts {
    let (n, m) = (reference.len(), hyp.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        d[i * w] = i;
    }
    for (j, cell) in d.iter_mut().enumerate().take(m + 1) {
        *cell = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = d[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hyp[j - 1]);
            let del = d[(i - 1) * w + j] + 1;
            let ins = d[i * w + j - 1] + 1;
            d[i * w + j] = diag.min(del).min(ins);
        }
    }

    let mut counts = EditCounts::default();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let mismatch = usize::from(reference[i - 1] != hyp[j - 1]);
            if d[(i - 1) * w + j - 1] + mismatch == here {
                counts.sub += mismatch;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[(i - 1) * w + j] + 1 == here {
            counts.del += 1;
            i -= 1;
        } else {
            counts.ins += 1;
            j -= 1;
        }
    }
    counts
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UtteranceWer {
    pub wer: f64,
    /// Empty reference with a non-empty hypothesis; WER is |hyp|/1.
    pub degenerate: bool,
}

pub fn utterance_wer<T: PartialEq>(reference: &[T], hyp: &[T]) -> UtteranceWer {
    let errors = edit_distance(reference, hyp).total();
    if reference.is_empty() {
        return UtteranceWer {
            wer: errors as f64,
            degenerate: !hyp.is_empty(),
        };
    }
    UtteranceWer {
        wer: errors as f64 / reference.len() as f64,
        degenerate: false,
    }
}

/// Whitespace tokenization.
pub fn words(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// One scored utterance routed to a region.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoredUtterance {
    pub region_id: usize,
    pub errors: usize,
    pub ref_words: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WerCount {
    pub errors: usize,
    pub ref_words: usize,
    pub wer: f64,
}

impl WerCount {
    fn from_counts(errors: usize, ref_words: usize) -> Self {
        WerCount {
            errors,
            ref_words,
            wer: errors as f64 / ref_words as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WerStats {
    pub per_region: BTreeMap<usize, WerCount>,
    pub overall: WerCount,
    /// Utterances dropped for having an empty reference.
    pub excluded_utterances: usize,
    /// Regions that had utterances but no reference words.
    pub excluded_regions: Vec<usize>,
}

/// Corpus-level WER (Σ errors / Σ reference words) per region and overall.
pub fn region_wer_stats(items: &[ScoredUtterance]) -> Result<WerStats> {
    let mut acc: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    let mut seen = std::collections::BTreeSet::new();
    let mut excluded_utterances = 0;
    for it in items {
        seen.insert(it.region_id);
        if it.ref_words == 0 {
            excluded_utterances += 1;
            continue;
        }
        let e = acc.entry(it.region_id).or_default();
        e.0 += it.errors;
        e.1 += it.ref_words;
    }
    let excluded_regions: Vec<usize> = seen.into_iter().filter(|r| !acc.contains_key(r)).collect();
    let (errors, refs) = acc.values().fold((0, 0), |(e, r), (a, b)| (e + a, r + b));
    if refs == 0 {
        return Err(Error::contract("no utterance with a non-empty reference"));
    }
    Ok(WerStats {
        per_region: acc
            .into_iter()
            .map(|(k, (e, r))| (k, WerCount::from_counts(e, r)))
            .collect(),
        overall: WerCount::from_counts(errors, refs),
        excluded_utterances,
        excluded_regions,
    })
}

/// Dispersion and level statistics over the region WERs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    /// Population variance.
    pub variance: f64,
    pub mean: f64,
    pub max: f64,
    pub min: f64,
    pub overall: f64,
}

impl WerStats {
    pub fn summary(&self) -> RegionSummary {
        let wers: Vec<f64> = self.per_region.values().map(|c| c.wer).collect();
        let n = wers.len() as f64;
        let mean = wers.iter().sum::<f64>() / n;
        let variance = wers.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / n;
        RegionSummary {
            variance,
            mean,
            max: wers.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            min: wers.iter().copied().fold(f64::INFINITY, f64::min),
            overall: self.overall.wer,
        }
    }

    /// Region with the highest WER (lowest id on ties).
    pub fn worst_region(&self) -> usize {
        let mut best: Option<(usize, f64)> = None;
        for (&r, c) in &self.per_region {
            if best.is_none_or(|(_, w)| c.wer > w) {
                best = Some((r, c.wer));
            }
        }
        best.map(|(r, _)| r).unwrap_or(0)
    }
}

/// Signed relative changes in percent; negative is an improvement
/// (or a smaller variance). `None` when the baseline statistic is zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WerrReport {
    pub variance_rr: Option<f64>,
    pub mean_rr: Option<f64>,
    pub max_rr: Option<f64>,
    pub min_rr: Option<f64>,
    pub overall_rr: Option<f64>,
    /// Change on the region that was worst under the baseline.
    pub baseline_worst_rr: Option<f64>,
}

fn relative(base: f64, cand: f64) -> Option<f64> {
    if base == 0.0 {
        None
    } else {
        Some(100.0 * (cand - base) / base)
    }
}

pub fn werr_report(baseline: &WerStats, candidate: &WerStats) -> Result<WerrReport> {
    if !baseline.per_region.keys().eq(candidate.per_region.keys()) {
        return Err(Error::contract("baseline and candidate cover different region sets"));
    }
    let (b, c) = (baseline.summary(), candidate.summary());
    let worst = baseline.worst_region();
    Ok(WerrReport {
        variance_rr: relative(b.variance, c.variance),
        mean_rr: relative(b.mean, c.mean),
        max_rr: relative(b.max, c.max),
        min_rr: relative(b.min, c.min),
        overall_rr: relative(b.overall, c.overall),
        baseline_worst_rr: relative(baseline.per_region[&worst].wer, candidate.per_region[&worst].wer),
    })
}

/// One line of the relative-reduction table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment: String,
    pub description: String,
    pub data: String,
    pub report: WerrReport,
}

fn cell(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{:.1}", x + 0.0),
        None => "undef".to_string(),
    }
}

pub fn render_table(rows: &[ReportRow]) -> String {
    let headers = [
        "Experiment",
        "Description",
        "Data",
        "variance",
        "mean",
        "max",
        "min",
        "overall",
    ];
    let body: Vec<[String; 8]> = rows
        .iter()
        .map(|r| {
            [
                r.experiment.clone(),
                r.description.clone(),
                r.data.clone(),
                cell(r.report.variance_rr),
                cell(r.report.mean_rr),
                cell(r.report.max_rr),
                cell(r.report.min_rr),
                cell(r.report.overall_rr),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in &body {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[&str]| {
        for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
            if i > 0 {
                out.push_str("  ");
            }
            if i < 3 {
                let _ = write!(out, "{c:<w$}");
            } else {
                let _ = write!(out, "{c:>w$}");
            }
        }
        out.push('\n');
    };
    line(&mut out, &headers);
    let total: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
    out.push_str(&"-".repeat(total));
    out.push('\n');
    for row in &body {
        let refs: Vec<&str> = row.iter().map(String::as_str).collect();
        line(&mut out, &refs);
    }
    out
}

pub fn write_report_csv<W: io::Write>(rows: &[ReportRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "experiment",
        "description",
        "data",
        "variance",
        "mean",
        "max",
        "min",
        "overall",
        "baseline_worst",
    ])?;
    let f = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "undef".into());
    for r in rows {
        w.write_record([
            r.experiment.clone(),
            r.description.clone(),
            r.data.clone(),
            f(r.report.variance_rr),
            f(r.report.mean_rr),
            f(r.report.max_rr),
            f(r.report.min_rr),
            f(r.report.overall_rr),
            f(r.report.baseline_worst_rr),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_region_stats_csv<W: io::Write>(stats: &WerStats, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["region_id", "errors", "ref_words", "wer"])?;
    for (r, c) in &stats.per_region {
        w.write_record([
            r.to_string(),
            c.errors.to_string(),
            c.ref_words.to_string(),
            format!("{}", c.wer),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_region_stats_csv<R: io::Read>(input: R) -> Result<WerStats> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut items = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let parse = |i: usize| -> Result<usize> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Schema(format!("bad region stats row {rec:?}")))
        };
        items.push(ScoredUtterance {
            region_id: parse(0)?,
            errors: parse(1)?,
            ref_words: parse(2)?,
        });
    }
    region_wer_stats(&items)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(regions: &[(usize, usize)]) -> WerStats {
        let items: Vec<ScoredUtterance> = regions
            .iter()
            .enumerate()
            .map(|(i, &(errors, ref_words))| ScoredUtterance {
                region_id: i,
                errors,
                ref_words,
            })
            .collect();
        region_wer_stats(&items).unwrap()
    }

    #[test]
    fn identical_sequences() {
        let s = words("turn on the lights");
        assert_eq!(edit_distance(&s, &s).total(), 0);
    }

    #[test]
    fn deletion_plus_substitution() {
        let r = words("turn on the lights");
        let h = words("turn the light");
        let c = edit_distance(&r, &h);
        assert_eq!(c, EditCounts { sub: 1, ins: 0, del: 1 });
        assert_eq!(utterance_wer(&r, &h).wer, 0.5);
    }

    #[test]
    fn empty_sequences() {
        let e: Vec<&str> = vec![];
        assert_eq!(
            utterance_wer(&e, &e),
            UtteranceWer {
                wer: 0.0,
                degenerate: false
            }
        );
        let h = words("hello there");
        assert_eq!(
            utterance_wer(&e, &h),
            UtteranceWer {
                wer: 2.0,
                degenerate: true
            }
        );
        assert_eq!(edit_distance(&h, &e), EditCounts { sub: 0, ins: 0, del: 2 });
    }

    #[test]
    fn one_region_overall_matches() {
        let s = stats(&[(3, 12)]);
        assert_eq!(s.overall.wer, s.per_region[&0].wer);
    }

    #[test]
    fn two_region_example() {
        let s = stats(&[(1, 10), (3, 10)]);
        assert!((s.per_region[&0].wer - 0.1).abs() < 1e-15);
        assert!((s.per_region[&1].wer - 0.3).abs() < 1e-15);
        assert!((s.overall.wer - 0.2).abs() < 1e-15);
    }

    #[test]
    fn empty_references_are_excluded() {
        let items = [
            ScoredUtterance {
                region_id: 0,
                errors: 1,
                ref_words: 4,
            },
            ScoredUtterance {
                region_id: 0,
                errors: 2,
                ref_words: 0,
            },
            ScoredUtterance {
                region_id: 5,
                errors: 1,
                ref_words: 0,
            },
        ];
        let s = region_wer_stats(&items).unwrap();
        assert_eq!(s.excluded_utterances, 2);
        assert_eq!(s.excluded_regions, vec![5]);
        assert_eq!(s.per_region.len(), 1);
    }

    #[test]
    fn summary_example() {
        let s = stats(&[(1, 10), (2, 10), (3, 10)]);
        let sum = s.summary();
        assert!((sum.mean - 0.2).abs() < 1e-15);
        assert!((sum.variance - 2.0 / 300.0).abs() < 1e-15);
    }

    #[test]
    fn werr_self_is_zero() {
        let s = stats(&[(1, 10), (4, 10), (2, 7)]);
        let r = werr_report(&s, &s).unwrap();
        for v in [
            r.variance_rr,
            r.mean_rr,
            r.max_rr,
            r.min_rr,
            r.overall_rr,
            r.baseline_worst_rr,
        ] {
            assert_eq!(v, Some(0.0));
        }
    }

    #[test]
    fn werr_max_example() {
        let base = stats(&[(10, 100), (20, 100)]);
        let cand = stats(&[(10, 100), (19, 100)]);
        let r = werr_report(&base, &cand).unwrap();
        assert!((r.max_rr.unwrap() + 5.0).abs() < 1e-9);
    }

    #[test]
    fn werr_undefined_on_zero_baseline() {
        let base = stats(&[(0, 10), (0, 10)]);
        let cand = stats(&[(1, 10), (0, 10)]);
        let r = werr_report(&base, &cand).unwrap();
        assert_eq!(r.mean_rr, None);
        assert!(werr_report(&base, &stats(&[(1, 10)])).is_err());
    }

    #[test]
    fn table_has_all_columns() {
        let s = stats(&[(1, 10), (3, 10)]);
        let rows = vec![ReportRow {
            experiment: "Experiment 1".into(),
            description: "Baseline".into(),
            data: "D_p".into(),
            report: werr_report(&s, &s).unwrap(),
        }];
        let t = render_table(&rows);
        for col in ["variance", "mean", "max", "min", "overall"] {
            assert!(t.contains(col));
        }
        assert!(t.lines().nth(2).unwrap().contains("0.0"));
        let mut buf = Vec::new();
        write_report_csv(&rows, &mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("experiment,description,data,variance"));
    }

    #[test]
    fn region_csv_round_trip() {
        let s = stats(&[(1, 10), (3, 11)]);
        let mut buf = Vec::new();
        write_region_stats_csv(&s, &mut buf).unwrap();
        assert_eq!(read_region_stats_csv(buf.as_slice()).unwrap(), s);
    }
}
