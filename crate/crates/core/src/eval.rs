//! Prequalifier-driven test splits, ROC/AUC, cue agreement and reports.
//!
//! Scores everywhere are the probability that an image is real; a cue
//! "detects" an image as generated when its score is below 0.5.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::corpus::{fmt_f64, ManifestEntry};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("band {0} outside (0, 0.5)")]
    BadBand(f64),
    #[error("ROC needs both classes (real {real}, generated {generated})")]
    SingleClass { real: usize, generated: usize },
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("score {0} is not a number")]
    NanScore(f64),
    #[error("agreement table needs at least one generated image")]
    EmptyAgreement,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, EvalError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SplitCategory {
    Easy,
    Unconfident,
    Misclassified,
    Unscored,
}

impl SplitCategory {
    pub const ALL: [SplitCategory; 4] = [Self::Easy, Self::Unconfident, Self::Misclassified, Self::Unscored];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Easy => "easy",
            Self::Unconfident => "unconfident",
            Self::Misclassified => "misclassified",
            Self::Unscored => "unscored",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    pub id: String,
    pub category: SplitCategory,
    /// Prequalifier on the wrong side of 0.5 (ties count as wrong for real images).
    pub wrong_side: bool,
}

/// Assigns each scored entry to Easy, Unconfident or Misclassified.
///
/// Unconfident iff `|s − 0.5| ≤ band`; otherwise Misclassified iff the
/// prequalifier picks the wrong class; otherwise Easy.
pub fn split(entries: &[ManifestEntry], band: f64) -> Result<Vec<SplitAssignment>> {
    if !(band > 0.0 && band < 0.5) {
        return Err(EvalError::BadBand(band));
    }
    Ok(entries
        .iter()
        .map(|e| {
            let (category, wrong_side) = match e.prequalifier_score {
                None => (SplitCategory::Unscored, false),
                Some(s) => {
                    let wrong = (s > 0.5) != e.label.is_real();
                    let cat = if (s - 0.5).abs() <= band {
                        SplitCategory::Unconfident
                    } else if wrong {
                        SplitCategory::Misclassified
                    } else {
                        SplitCategory::Easy
                    };
                    (cat, wrong)
                }
            };
            SplitAssignment {
                id: e.id.clone(),
                category,
                wrong_side,
            }
        })
        .collect())
}

/// Ids belonging to a split.
///
/// With `nested`, the misclassified split is the part of the unconfident
/// split on which the prequalifier picks the wrong class.
pub fn split_members(assignments: &[SplitAssignment], category: SplitCategory, nested: bool) -> Vec<&str> {
    assignments
        .iter()
        .filter(|a| match (category, nested) {
            (SplitCategory::Misclassified, true) => a.category == SplitCategory::Unconfident && a.wrong_side,
            _ => a.category == category,
        })
        .map(|a| a.id.as_str())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// From `(+∞, 0, 0)` to `(−∞, 1, 1)`, one point per distinct score between.
    pub points: Vec<RocPoint>,
    pub auc: f64,
    pub n_real: usize,
    pub n_generated: usize,
}

/// ROC curve of "predict real iff score ≥ threshold".
///
/// The trapezoidal area is accumulated in integers, so it equals the
/// concordance statistic `(2·concordant + ties) / (2·P·N)` exactly.
pub fn roc(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(EvalError::NanScore(*s));
    }
    let p = labels.iter().filter(|l| **l).count();
    let n = labels.len() - p;
    if p == 0 || n == 0 {
        return Err(EvalError::SingleClass { real: p, generated: n });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (pf, nf) = (p as f64, n as f64);
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut twice_area: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]] == t {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        twice_area += (fp - fp0) as u128 * (tp + tp0) as u128;
        points.push(RocPoint {
            threshold: t,
            fpr: fp as f64 / nf,
            tpr: tp as f64 / pf,
        });
    }
    points.push(RocPoint {
        threshold: f64::NEG_INFINITY,
        fpr: 1.0,
        tpr: 1.0,
    });
    Ok(RocCurve {
        points,
        auc: twice_area as f64 / (2 * p as u128 * n as u128) as f64,
        n_real: p,
        n_generated: n,
    })
}

/// Seeded shuffle of `0..n` cut into `(train, test)` with `round(n·train_fraction)` training items.
pub fn holdout_split(n: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let k = ((n as f64) * train_fraction.clamp(0.0, 1.0)).round() as usize;
    let test = idx.split_off(k);
    (idx, test)
}

/// Area under the points with the trapezoid rule in floating point.
pub fn trapezoid_area(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

/// Survival function of the chi-square distribution with one degree of freedom.
pub fn chi2_sf_1dof(chi2: f64) -> f64 {
    if chi2 <= 0.0 {
        1.0
    } else {
        erfc((chi2 / 2.0).sqrt())
    }
}

/// Pearson chi-square for a 2×2 table `[[a, b], [c, d]]` without continuity
/// correction, and its p-value. A zero row or column gives `(0, 1)`.
pub fn chi_square_2x2(t: [[u64; 2]; 2]) -> (f64, f64) {
    let [[a, b], [c, d]] = t.map(|r| r.map(|v| v as f64));
    let n = a + b + c + d;
    let denom = (a + b) * (c + d) * (a + c) * (b + d);
    if denom == 0.0 {
        return (0.0, 1.0);
    }
    let chi2 = n * (a * d - b * c).powi(2) / denom;
    (chi2, chi2_sf_1dof(chi2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgreementTable {
    /// `counts[ls][pf][os]`, index 0 = Yes (detected as generated), 1 = No.
    pub counts: [[[u64; 2]; 2]; 2],
    pub chi2: f64,
    pub p_value: f64,
}

impl AgreementTable {
    pub fn from_counts(counts: [[[u64; 2]; 2]; 2]) -> Self {
        let (chi2, p_value) = chi_square_2x2(Self::margin_ls_pf_of(&counts));
        Self { counts, chi2, p_value }
    }

    fn margin_ls_pf_of(c: &[[[u64; 2]; 2]; 2]) -> [[u64; 2]; 2] {
        std::array::from_fn(|i| std::array::from_fn(|j| c[i][j][0] + c[i][j][1]))
    }

    /// LS × PF counts summed over OS.
    pub fn margin_ls_pf(&self) -> [[u64; 2]; 2] {
        Self::margin_ls_pf_of(&self.counts)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().flatten().sum()
    }

    /// Supplement-style table: one line per Yes/No triple with count and share.
    pub fn to_text(&self) -> String {
        let yn = |i: usize| if i == 0 { "Yes" } else { "No" };
        let total = self.total();
        let mut s = format!("{:<4} {:<4} {:<4} {:>8} {:>8}\n", "LS", "PF", "OS", "count", "share");
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    let c = self.counts[i][j][k];
                    let _ = writeln!(
                        s,
                        "{:<4} {:<4} {:<4} {:>8} {:>7}%",
                        yn(i),
                        yn(j),
                        yn(k),
                        c,
                        percent(c, total)
                    );
                }
            }
        }
        let _ = writeln!(s, "total {total}");
        let _ = writeln!(s, "chi2(LS x PF) {} p {}", fmt_f64(self.chi2), fmt_f64(self.p_value));
        s
    }
}

/// `count / total` as a percentage with two decimals.
pub fn percent(count: u64, total: u64) -> String {
    if total == 0 {
        return "0.00".into();
    }
    format!("{:.2}", 100.0 * count as f64 / total as f64)
}

/// Agreement over generated images given `(ls, pf, os)` scores for each.
pub fn agreement(scores: &[(f64, f64, f64)], threshold: f64) -> Result<AgreementTable> {
    if scores.is_empty() {
        return Err(EvalError::EmptyAgreement);
    }
    let idx = |s: f64| usize::from(s >= threshold);
    let mut counts = [[[0u64; 2]; 2]; 2];
    for &(ls, pf, os) in scores {
        counts[idx(ls)][idx(pf)][idx(os)] += 1;
    }
    Ok(AgreementTable::from_counts(counts))
}

// ---------------------------------------------------------------------------
// Reports

/// Curves for one split, keyed by cue name.
#[derive(Debug, Clone)]
pub struct SplitCurves {
    pub split: String,
    pub curves: Vec<(String, RocCurve)>,
}

pub fn roc_csv(curve: &RocCurve) -> String {
    let mut s = String::from("threshold,fpr,tpr\n");
    for p in &curve.points {
        let _ = writeln!(s, "{},{},{}", fmt_f64(p.threshold), fmt_f64(p.fpr), fmt_f64(p.tpr));
    }
    s
}

fn cues_of(splits: &[SplitCurves]) -> Vec<&str> {
    let mut cues: Vec<&str> = Vec::new();
    for sc in splits {
        for (c, _) in &sc.curves {
            if !cues.contains(&c.as_str()) {
                cues.push(c);
            }
        }
    }
    cues
}

fn find<'a>(sc: &'a SplitCurves, cue: &str) -> Option<&'a RocCurve> {
    sc.curves.iter().find(|(c, _)| c == cue).map(|(_, r)| r)
}

pub fn summary_csv(splits: &[SplitCurves]) -> String {
    let mut s = String::from("cue,split,auc,n_real,n_generated\n");
    for cue in cues_of(splits) {
        for sc in splits {
            if let Some(r) = find(sc, cue) {
                let _ = writeln!(s, "{cue},{},{},{},{}", sc.split, fmt_f64(r.auc), r.n_real, r.n_generated);
            }
        }
    }
    s
}

/// Aligned cue × split AUC table.
pub fn summary_text(splits: &[SplitCurves], band: f64) -> String {
    let cues = cues_of(splits);
    let w = cues.iter().map(|c| c.len()).max().unwrap_or(3).max(3);
    let mut s = format!("AUC by cue and split (unconfident band {band})\n{:<w$}", "cue");
    for sc in splits {
        let _ = write!(s, "  {:>18}", sc.split);
    }
    s.push('\n');
    for cue in cues {
        let _ = write!(s, "{cue:<w$}");
        for sc in splits {
            match find(sc, cue) {
                Some(r) => {
                    let _ = write!(s, "  {:>18}", format!("{:.17}", r.auc));
                }
                None => {
                    let _ = write!(s, "  {:>18}", "-");
                }
            }
        }
        s.push('\n');
    }
    s
}

/// ROC plot of all cues of one split, one polyline per curve.
pub fn roc_svg(sc: &SplitCurves) -> String {
    const SIZE: f64 = 400.0;
    const PAD: f64 = 40.0;
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
    let span = SIZE - 2.0 * PAD;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n"
    );
    let _ = writeln!(
        s,
        "<rect x=\"{PAD}\" y=\"{PAD}\" width=\"{span}\" height=\"{span}\" fill=\"none\" stroke=\"black\"/>"
    );
    let _ = writeln!(
        s,
        "<line x1=\"{PAD}\" y1=\"{}\" x2=\"{}\" y2=\"{PAD}\" stroke=\"#999\" stroke-dasharray=\"4 4\"/>",
        SIZE - PAD,
        SIZE - PAD
    );
    let _ = writeln!(s, "<text x=\"{PAD}\" y=\"24\">{}</text>", xml_escape(&sc.split));
    for (k, (cue, r)) in sc.curves.iter().enumerate() {
        let pts: Vec<String> = r
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", PAD + p.fpr * span, SIZE - PAD - p.tpr * span))
            .collect();
        let color = COLORS[k % COLORS.len()];
        let _ = writeln!(
            s,
            "<polyline fill=\"none\" stroke=\"{color}\" points=\"{}\"><title>{} AUC {:.4}</title></polyline>",
            pts.join(" "),
            xml_escape(cue),
            r.auc
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{} ({:.3})</text>",
            PAD + 0.55 * span,
            SIZE - PAD - 12.0 - 16.0 * k as f64,
            xml_escape(cue),
            r.auc
        );
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportOptions {
    pub svg: bool,
    pub band: f64,
}

/// Writes `roc_<split>_<cue>.csv`, `summary.txt`, `summary.csv`, optional
/// `roc_<split>.svg` and `agreement.txt`. Returns the written paths in order.
pub fn write_report(
    dir: &Path,
    splits: &[SplitCurves],
    agreement: Option<&AgreementTable>,
    opts: &ReportOptions,
) -> Result<Vec<PathBuf>> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| EvalError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut written = Vec::new();
    let mut put = |name: String, body: String| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, body).map_err(io(&p))?;
        written.push(p);
        Ok(())
    };
    for sc in splits {
        for (cue, r) in &sc.curves {
            put(format!("roc_{}_{cue}.csv", sc.split), roc_csv(r))?;
        }
        if opts.svg {
            put(format!("roc_{}.svg", sc.split), roc_svg(sc))?;
        }
    }
    put("summary.txt".into(), summary_text(splits, opts.band))?;
    put("summary.csv".into(), summary_csv(splits))?;
    if let Some(a) = agreement {
        put("agreement.txt".into(), a.to_text())?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;

    fn entry(id: &str, label: Label, score: Option<f64>) -> ManifestEntry {
        ManifestEntry {
            id: id.into(),
            image_path: PathBuf::from(format!("{id}.pgm")),
            label,
            prequalifier_score: score,
            mask_pairs: vec![],
        }
    }

    fn cat(label: Label, s: f64) -> SplitCategory {
        split(&[entry("a", label, Some(s))], 0.1).unwrap()[0].category
    }

    #[test]
    fn split_examples() {
        assert_eq!(cat(Label::Real, 0.97), SplitCategory::Easy);
        assert_eq!(cat(Label::Real, 0.50), SplitCategory::Unconfident);
        assert_eq!(cat(Label::Real, 0.05), SplitCategory::Misclassified);
        assert_eq!(cat(Label::Generated, 0.05), SplitCategory::Easy);
        assert_eq!(cat(Label::Generated, 0.95), SplitCategory::Misclassified);
        let a = split(&[entry("u", Label::Real, None)], 0.1).unwrap();
        assert_eq!(a[0].category, SplitCategory::Unscored);
    }

    #[test]
    fn band_must_be_open_interval() {
        assert!(split(&[], 0.0).is_err());
        assert!(split(&[], 0.5).is_err());
    }

    #[test]
    fn nested_reading() {
        let es = [
            entry("a", Label::Real, Some(0.45)),
            entry("b", Label::Real, Some(0.55)),
            entry("c", Label::Real, Some(0.1)),
        ];
        let a = split(&es, 0.1).unwrap();
        assert_eq!(split_members(&a, SplitCategory::Misclassified, false), vec!["c"]);
        assert_eq!(split_members(&a, SplitCategory::Misclassified, true), vec!["a"]);
        assert_eq!(split_members(&a, SplitCategory::Unconfident, true), vec!["a", "b"]);
    }

    #[test]
    fn roc_examples() {
        let r = roc(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!(r.auc, 1.0);
        let r = roc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
        assert_eq!(r.auc, 0.75);
        let r = roc(&[0.3; 6], &[true, false, true, false, false, true]).unwrap();
        assert_eq!(r.auc, 0.5);
        assert_eq!(r.points.len(), 3);
        assert!(roc(&[0.1, 0.2], &[true, true]).is_err());
    }

    #[test]
    fn roc_points_monotone() {
        let r = roc(&[0.1, 0.4, 0.35, 0.8, 0.4], &[false, false, true, true, true]).unwrap();
        assert_eq!(r.points.first().unwrap().threshold, f64::INFINITY);
        assert_eq!(r.points.last().unwrap().threshold, f64::NEG_INFINITY);
        for w in r.points.windows(2) {
            assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
        }
        assert!((trapezoid_area(&r.points) - r.auc).abs() < 1e-12);
    }

    #[test]
    fn chi_square_examples() {
        let (c, p) = chi_square_2x2([[50, 0], [0, 50]]);
        assert_eq!(c, 100.0);
        assert!(p > 1.4e-23 && p < 1.6e-23, "{p}");
        assert_eq!(chi_square_2x2([[20, 20], [20, 20]]), (0.0, 1.0));
        assert_eq!(chi_square_2x2([[0, 0], [5, 7]]), (0.0, 1.0));
        // 3.841 is the 5% critical value
        let p5 = chi2_sf_1dof(3.841458820694124);
        assert!((p5 - 0.05).abs() < 1e-9, "{p5}");
    }

    #[test]
    fn percentage_mapping() {
        let t = AgreementTable::from_counts([[[10520, 4844], [1033, 725]], [[872, 874], [285, 435]]]);
        assert_eq!(t.total(), 19588);
        assert_eq!(percent(10520, t.total()), "53.71");
        assert!(t.to_text().contains("Yes  Yes  Yes     10520   53.71%"));
    }

    #[test]
    fn agreement_counts() {
        let t = agreement(&[(0.1, 0.2, 0.9), (0.1, 0.2, 0.3), (0.7, 0.2, 0.3)], 0.5).unwrap();
        assert_eq!(t.counts[0][0][1], 1);
        assert_eq!(t.counts[0][0][0], 1);
        assert_eq!(t.counts[1][0][0], 1);
        assert_eq!(t.margin_ls_pf(), [[2, 0], [1, 0]]);
        assert!(agreement(&[], 0.5).is_err());
    }
}
