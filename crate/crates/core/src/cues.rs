//! Per-image statistical features over segments, perspective fields, vanishing
//! points and shadows, assembled into one fixed-order vector.
//!
//! Missing cue families are encoded by a `*_present` flag of 0 and zeros for
//! every other feature of that family.

use std::collections::HashSet;
use std::f64::consts::PI;

use thiserror::Error;

use crate::lsd::{fold_axial, LineSegment};
use crate::shadowgeom::SHADOW_FEATURES;
use crate::vpfield::{PerspectiveFieldGrid, VpConsistency};

#[derive(Debug, Error, PartialEq)]
pub enum CueError {
    #[error("feature `{0}` supplied by more than one fragment")]
    DuplicateFeature(String),
    #[error("feature `{0}` is not part of the canonical schema")]
    UnknownFeature(String),
    #[error("feature `{0}` is not finite")]
    NonFinite(String),
}

pub const LINE_FEATURES: [&str; 6] = [
    "line_present",
    "line_count",
    "line_len_mean",
    "line_len_max",
    "line_orient_mean",
    "line_orient_concentration",
];

pub const FIELD_FEATURES: [&str; 6] = ["field_present", "lat_mean", "lat_std", "grav_x_mean", "grav_y_mean", "grav_change"];

pub const VP_FEATURES: [&str; 4] = ["vp_present", "vp_inlier_fraction", "vp_median_residual", "vp_count"];

/// The canonical schema: every cue vector and feature cache uses this order.
pub fn schema() -> Vec<&'static str> {
    LINE_FEATURES
        .iter()
        .chain(&FIELD_FEATURES)
        .chain(&VP_FEATURES)
        .chain(&SHADOW_FEATURES)
        .copied()
        .collect()
}

/// Columns of the plain statistical baseline: segment counts and lengths,
/// orientation, latitude/gravity summaries and the number of shadows.
pub const BASELINE_FEATURES: [&str; 9] = [
    "line_count",
    "line_len_mean",
    "line_len_max",
    "line_orient_mean",
    "lat_mean",
    "grav_x_mean",
    "grav_y_mean",
    "grav_change",
    "shadow_n_pairs",
];

/// Columns of the geometric shadow learner.
pub const SHADOW_LEARNER_FEATURES: [&str; 5] = [
    "shadow_n_pairs",
    "shadow_feasible",
    "shadow_circ_variance",
    "shadow_length_dispersion",
    "shadow_interval_width",
];

pub type Fragment = Vec<(&'static str, f64)>;

/// Count, length and axial orientation statistics.
///
/// Sums run over sorted values, so the result is bit-identical under any
/// reordering of `segments`.
pub fn line_stats(segments: &[LineSegment]) -> Fragment {
    let mut lengths: Vec<f64> = segments.iter().map(LineSegment::length).filter(|l| *l > 0.0).collect();
    let mut angles: Vec<f64> = segments.iter().filter_map(|s| s.angle().ok()).collect();
    if angles.is_empty() {
        return LINE_FEATURES.iter().map(|n| (*n, 0.0)).collect();
    }
    lengths.sort_by(f64::total_cmp);
    angles.sort_by(f64::total_cmp);
    let n = angles.len() as f64;
    let len_mean = lengths.iter().sum::<f64>() / lengths.len() as f64;
    let len_max = lengths.last().copied().unwrap_or(0.0);
    let (c, s) = angles
        .iter()
        .fold((0.0, 0.0), |(c, s), a| (c + (2.0 * a).cos(), s + (2.0 * a).sin()));
    let mean = fold_axial(0.5 * s.atan2(c));
    let concentration = (c.hypot(s) / n).clamp(0.0, 1.0);
    vec![
        ("line_present", 1.0),
        ("line_count", segments.len() as f64),
        ("line_len_mean", len_mean),
        ("line_len_max", len_max),
        ("line_orient_mean", mean.min(PI.next_down())),
        ("line_orient_concentration", concentration),
    ]
}

/// Latitude and gravity-vector statistics of a perspective field.
///
/// `grav_change` is the mean Euclidean distance between up vectors of
/// horizontally and vertically adjacent cells.
pub fn field_stats(field: &PerspectiveFieldGrid) -> Fragment {
    let n = field.latitude.len();
    if n == 0 {
        return FIELD_FEATURES.iter().map(|n| (*n, 0.0)).collect();
    }
    let nf = n as f64;
    let lat_mean = field.latitude.iter().sum::<f64>() / nf;
    let lat_std = (field.latitude.iter().map(|l| (l - lat_mean).powi(2)).sum::<f64>() / nf).sqrt();
    let gx = field.up.iter().map(|u| u[0]).sum::<f64>() / nf;
    let gy = field.up.iter().map(|u| u[1]).sum::<f64>() / nf;
    let (gw, gh) = (field.grid_w, field.grid_h);
    let dist = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).hypot(a[1] - b[1]);
    let (mut total, mut pairs) = (0.0, 0usize);
    for j in 0..gh {
        for i in 0..gw {
            let here = field.up[j * gw + i];
            if i + 1 < gw {
                total += dist(here, field.up[j * gw + i + 1]);
                pairs += 1;
            }
            if j + 1 < gh {
                total += dist(here, field.up[(j + 1) * gw + i]);
                pairs += 1;
            }
        }
    }
    let change = if pairs == 0 { 0.0 } else { total / pairs as f64 };
    vec![
        ("field_present", 1.0),
        ("lat_mean", lat_mean),
        ("lat_std", lat_std),
        ("grav_x_mean", gx),
        ("grav_y_mean", gy),
        ("grav_change", change),
    ]
}

pub fn vp_stats(consistency: Option<&VpConsistency>) -> Fragment {
    match consistency {
        None => VP_FEATURES.iter().map(|n| (*n, 0.0)).collect(),
        Some(c) => vec![
            ("vp_present", 1.0),
            ("vp_inlier_fraction", c.inlier_fraction),
            ("vp_median_residual", c.median_residual),
            ("vp_count", c.n_clusters as f64),
        ],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CueVector {
    pub id: String,
    /// Values in [`schema`] order.
    pub values: Vec<f64>,
}

impl CueVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        schema().iter().position(|n| *n == name).map(|i| self.values[i])
    }
}

/// Merges fragments into a full schema-ordered vector; absent features are 0.
pub fn assemble(id: &str, fragments: &[Fragment]) -> Result<CueVector, CueError> {
    let names = schema();
    let mut values = vec![0.0; names.len()];
    let mut seen = HashSet::new();
    for (name, v) in fragments.iter().flatten() {
        if !seen.insert(*name) {
            return Err(CueError::DuplicateFeature(name.to_string()));
        }
        let idx = names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| CueError::UnknownFeature(name.to_string()))?;
        if !v.is_finite() {
            return Err(CueError::NonFinite(name.to_string()));
        }
        values[idx] = *v;
    }
    Ok(CueVector { id: id.to_string(), values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shadowgeom::shadow_features;
    use crate::vpfield::{perspective_field, CameraHypothesis};
    use std::f64::consts::FRAC_PI_2;

    fn get(f: &Fragment, name: &str) -> f64 {
        f.iter().find(|(n, _)| *n == name).unwrap().1
    }

    #[test]
    fn schema_is_unique() {
        let s = schema();
        let set: HashSet<_> = s.iter().collect();
        assert_eq!(set.len(), s.len());
        for n in BASELINE_FEATURES.iter().chain(&SHADOW_LEARNER_FEATURES) {
            assert!(s.contains(n), "{n}");
        }
    }

    #[test]
    fn empty_lines() {
        let f = line_stats(&[]);
        assert!(f.iter().all(|(_, v)| *v == 0.0));
        assert_eq!(f.len(), LINE_FEATURES.len());
    }

    #[test]
    fn parallel_lines_are_concentrated() {
        let segs: Vec<_> = (0..5).map(|k| LineSegment::new(0.0, k as f64, 10.0 + k as f64, k as f64)).collect();
        let f = line_stats(&segs);
        assert_eq!(get(&f, "line_orient_mean"), 0.0);
        assert!((get(&f, "line_orient_concentration") - 1.0).abs() < 1e-15);
        assert_eq!(get(&f, "line_len_max"), 14.0);
        assert_eq!(get(&f, "line_len_mean"), 12.0);
    }

    #[test]
    fn orthogonal_pair_cancels() {
        let segs = [LineSegment::new(0.0, 0.0, 5.0, 0.0), LineSegment::new(0.0, 0.0, 0.0, 5.0)];
        let f = line_stats(&segs);
        // doubled angles (1,0) and (-1,0)
        assert!(get(&f, "line_orient_concentration") < 1e-15);
    }

    #[test]
    fn orientation_mean_wraps() {
        let segs = [
            LineSegment::new(0.0, 0.0, 10.0, -0.5),
            LineSegment::new(0.0, 0.0, 10.0, 0.5),
        ];
        let m = get(&line_stats(&segs), "line_orient_mean");
        assert!(m < 1e-12 || (PI - m) < 1e-12, "{m}");
        let vert = [LineSegment::new(0.0, 0.0, 0.0, 10.0)];
        assert!((get(&line_stats(&vert), "line_orient_mean") - FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn uniform_fields() {
        let cam = CameraHypothesis::fallback((320, 240));
        let f = field_stats(&perspective_field(&cam, (320, 240), (8, 8)));
        assert_eq!(get(&f, "grav_x_mean"), 0.0);
        assert_eq!(get(&f, "grav_y_mean"), -1.0);
        assert_eq!(get(&f, "grav_change"), 0.0);

        let roll = 20f64.to_radians();
        let cam = CameraHypothesis { roll, ..cam };
        let f = field_stats(&perspective_field(&cam, (320, 240), (8, 8)));
        assert!((get(&f, "grav_x_mean") - roll.sin()).abs() < 1e-9);
        assert!(get(&f, "grav_change").abs() < 1e-12);
    }

    #[test]
    fn two_cell_gravity_change() {
        let grid = PerspectiveFieldGrid {
            grid_w: 2,
            grid_h: 1,
            up: vec![[0.0, -1.0], [1.0, 0.0]],
            latitude: vec![0.0, 0.0],
        };
        assert!((get(&field_stats(&grid), "grav_change") - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn assemble_fills_missing_families() {
        let segs = [LineSegment::new(0.0, 0.0, 20.0, 0.0)];
        let v = assemble("a", &[line_stats(&segs), shadow_features(None)]).unwrap();
        assert_eq!(v.values.len(), schema().len());
        assert_eq!(v.get("line_present"), Some(1.0));
        assert_eq!(v.get("shadow_present"), Some(0.0));
        assert_eq!(v.get("field_present"), Some(0.0));

        let cam = CameraHypothesis::fallback((64, 64));
        let full = assemble(
            "b",
            &[
                line_stats(&segs),
                field_stats(&perspective_field(&cam, (64, 64), (8, 8))),
                vp_stats(None),
                shadow_features(None),
            ],
        )
        .unwrap();
        assert_eq!(full.values.len(), schema().len());
    }

    #[test]
    fn assemble_rejects_duplicates() {
        let segs = [LineSegment::new(0.0, 0.0, 20.0, 0.0)];
        let err = assemble("a", &[line_stats(&segs), line_stats(&segs)]).unwrap_err();
        assert_eq!(err, CueError::DuplicateFeature("line_present".into()));
        let err = assemble("a", &[vec![("nope", 1.0)]]).unwrap_err();
        assert_eq!(err, CueError::UnknownFeature("nope".into()));
    }
}
