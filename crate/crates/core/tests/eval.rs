use geoforensics_core::eval::{
    agreement, chi2_sf_1dof, chi_square_2x2, holdout_split, roc, write_report, ReportOptions, SplitCurves,
};
use proptest::prelude::*;
use std::fs;

fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                den += 1.0;
                num += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / den
}

proptest! {
    #[test]
    fn auc_is_concordance(rows in proptest::collection::vec((0u8..8, any::<bool>()), 2..60)) {
        let scores: Vec<f64> = rows.iter().map(|r| r.0 as f64 / 7.0).collect();
        let labels: Vec<bool> = rows.iter().map(|r| r.1).collect();
        prop_assume!(labels.iter().any(|l| *l) && labels.iter().any(|l| !*l));
        let c = roc(&scores, &labels).unwrap();
        prop_assert!((c.auc - pairwise_auc(&scores, &labels)).abs() <= 1e-12);
        prop_assert!(c.points.windows(2).all(|w| w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr));
        let flipped: Vec<f64> = scores.iter().map(|s| 1.0 - s).collect();
        prop_assert!((roc(&flipped, &labels).unwrap().auc - (1.0 - c.auc)).abs() <= 1e-12);
    }

    #[test]
    fn holdout_partitions_indices(n in 1usize..200, f in 0.0f64..1.0, seed in any::<u64>()) {
        let (a, b) = holdout_split(n, f, seed);
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(holdout_split(n, f, seed), (a, b));
    }
}

#[test]
fn auc_examples() {
    let labels = [true, true, false, false];
    assert_eq!(roc(&[0.9, 0.8, 0.2, 0.1], &labels).unwrap().auc, 1.0);
    assert_eq!(roc(&[0.1, 0.2, 0.8, 0.9], &labels).unwrap().auc, 0.0);
    assert_eq!(roc(&[0.5; 4], &labels).unwrap().auc, 0.5);
    assert!(roc(&[0.5, 0.6], &[true, true]).is_err());
}

#[test]
fn chi_square_tail_values() {
    assert!((chi2_sf_1dof(3.841458820694124) - 0.05).abs() < 1e-9);
    assert!((chi2_sf_1dof(6.6348966010212145) - 0.01).abs() < 1e-9);
    assert_eq!(chi2_sf_1dof(0.0), 1.0);
    let (stat, p) = chi_square_2x2([[10, 20], [30, 40]]);
    let expected = 100.0 * (10.0 * 40.0 - 20.0 * 30.0f64).powi(2) / (30.0 * 70.0 * 40.0 * 60.0);
    assert!((stat - expected).abs() < 1e-12);
    assert!((p - chi2_sf_1dof(expected)).abs() < 1e-15);
}

#[test]
fn agreement_counts_cover_every_image() {
    let rows = [(0.1, 0.1, 0.9), (0.9, 0.9, 0.9), (0.2, 0.8, 0.4), (0.4, 0.3, 0.1)];
    let t = agreement(&rows, 0.5).unwrap();
    assert_eq!(t.total(), 4);
    let m = t.margin_ls_pf();
    assert_eq!(m.iter().flatten().sum::<u64>(), 4);
    assert_eq!(m[0][0], 2);
    assert!(agreement(&[], 0.5).is_err());
}

#[test]
fn report_files_match_curves() {
    let labels = [true, false, true, false, true, false];
    let mk = |s: &[f64]| roc(s, &labels).unwrap();
    let splits: Vec<SplitCurves> = ["all", "unconfident"]
        .iter()
        .map(|name| SplitCurves {
            split: name.to_string(),
            curves: vec![
                ("ls".into(), mk(&[0.9, 0.1, 0.8, 0.3, 0.2, 0.7])),
                ("pf".into(), mk(&[0.6, 0.6, 0.6, 0.1, 0.9, 0.2])),
                ("os".into(), mk(&[0.5, 0.4, 0.3, 0.2, 0.1, 0.0])),
            ],
        })
        .collect();
    let dir = tempfile::TempDir::new().unwrap();
    let written = write_report(dir.path(), &splits, None, &ReportOptions { svg: true, band: 0.1 }).unwrap();
    let csvs: Vec<_> = written
        .iter()
        .filter(|p| p.file_name().unwrap().to_str().unwrap().starts_with("roc_") && p.extension().unwrap() == "csv")
        .collect();
    assert_eq!(csvs.len(), 6);

    for sc in &splits {
        let svg = fs::read_to_string(dir.path().join(format!("roc_{}.svg", sc.split))).unwrap();
        assert!(svg.trim_start().starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert_eq!(svg.matches("</polyline>").count(), 3);
    }

    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let mut rows = 0;
    for line in summary.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let sc = splits.iter().find(|s| s.split == f[1]).unwrap();
        let (_, c) = sc.curves.iter().find(|(n, _)| n == f[0]).unwrap();
        assert_eq!(f[2].parse::<f64>().unwrap(), c.auc);
        rows += 1;
    }
    assert_eq!(rows, 6);
}
