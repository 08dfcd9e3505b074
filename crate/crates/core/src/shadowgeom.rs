//! Object/shadow geometry: per-pair shadow azimuth and length, and
//! cross-pair feasibility of a single distant light.
//!
//! Each pair constrains the light azimuth to a wedge
//! `[azimuth − half_width, azimuth + half_width]`. The scene is consistent
//! when all wedges share at least one direction. Wedges are narrower than π,
//! so their intersection is empty or a single arc.

use std::f64::consts::{PI, TAU};

use thiserror::Error;

use crate::corpus::BinaryMask;

#[derive(Debug, Error, PartialEq)]
pub enum ShadowError {
    #[error("{0} mask is empty")]
    EmptyMask(&'static str),
    #[error("object and shadow masks have different dimensions")]
    DimensionMismatch,
    #[error("object and shadow masks are identical")]
    Degenerate,
    #[error("no shadow pairs")]
    NoPairs,
    #[error("half width {0} outside (0, π/2)")]
    BadHalfWidth(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShadowPair {
    pub object: BinaryMask,
    pub shadow: BinaryMask,
    pub base_point: (f64, f64),
    pub shadow_centroid: (f64, f64),
    /// Direction from base point to shadow centroid, `(−π, π]`, y down.
    pub azimuth: f64,
    /// Shadow extent along the azimuth over object height.
    pub length_ratio: f64,
}

/// Exact integer coordinate sums relative to an origin.
#[derive(Default)]
struct Sums {
    n: i64,
    sx: i64,
    sy: i64,
}

impl Sums {
    fn add(&mut self, x: i64, y: i64) {
        self.n += 1;
        self.sx += x;
        self.sy += y;
    }

    fn mean(&self) -> (f64, f64) {
        (self.sx as f64 / self.n as f64, self.sy as f64 / self.n as f64)
    }
}

/// Derives base point, shadow centroid, azimuth and length ratio.
///
/// The base point is the centroid of the lowest 10% of the object's occupied
/// rows (at least one row). Centroids use pixel centers. All arithmetic is
/// done relative to the object's bounding-box corner, so translating both
/// masks leaves the azimuth bit-identical.
pub fn derive_pair(object: &BinaryMask, shadow: &BinaryMask) -> Result<ShadowPair, ShadowError> {
    if !shadow.same_dims(object.width(), object.height()) {
        return Err(ShadowError::DimensionMismatch);
    }
    if object.is_empty() {
        return Err(ShadowError::EmptyMask("object"));
    }
    if shadow.is_empty() {
        return Err(ShadowError::EmptyMask("shadow"));
    }
    if object == shadow {
        return Err(ShadowError::Degenerate);
    }

    let mut rows: Vec<usize> = Vec::new();
    let (mut x0, mut y0) = (usize::MAX, usize::MAX);
    for (x, y) in object.set_pixels() {
        if rows.last() != Some(&y) {
            rows.push(y);
        }
        x0 = x0.min(x);
        y0 = y0.min(y);
    }
    let (x0, y0) = (x0 as i64, y0 as i64);
    let height = (rows[rows.len() - 1] - rows[0] + 1) as f64;
    let band = (rows.len() as f64 * 0.1).ceil().max(1.0) as usize;
    let band_top = rows[rows.len() - band];

    let mut base = Sums::default();
    for (x, y) in object.set_pixels().filter(|&(_, y)| y >= band_top) {
        base.add(x as i64 - x0, y as i64 - y0);
    }
    let mut sh = Sums::default();
    for (x, y) in shadow.set_pixels() {
        sh.add(x as i64 - x0, y as i64 - y0);
    }
    let (bx, by) = base.mean();
    let (sx, sy) = sh.mean();
    let azimuth = (sy - by).atan2(sx - bx);
    let (dx, dy) = (azimuth.cos(), azimuth.sin());
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in shadow.set_pixels() {
        let t = (x as i64 - x0) as f64 * dx + (y as i64 - y0) as f64 * dy;
        lo = lo.min(t);
        hi = hi.max(t);
    }
    let extent = hi - lo + 1.0;
    // pixel centers
    let offset = |v: f64, o: i64| v + o as f64 + 0.5;
    Ok(ShadowPair {
        object: object.clone(),
        shadow: shadow.clone(),
        base_point: (offset(bx, x0), offset(by, y0)),
        shadow_centroid: (offset(sx, x0), offset(sy, y0)),
        azimuth,
        length_ratio: extent / height,
    })
}

/// An arc of the circle: `[start, start + width]`, `start ∈ (−π, π]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularInterval {
    pub start: f64,
    pub width: f64,
}

impl AngularInterval {
    pub fn end(&self) -> f64 {
        self.start + self.width
    }

    pub fn contains(&self, a: f64) -> bool {
        (a - self.start).rem_euclid(TAU) <= self.width
    }
}

fn wrap_pi(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(TAU) - PI;
    if r <= -PI {
        PI
    } else {
        r
    }
}

/// Intersection of two arcs whose total length is below 2π.
fn intersect_arcs(a: AngularInterval, b: AngularInterval) -> Option<AngularInterval> {
    let d = (b.start - a.start).rem_euclid(TAU);
    if d <= a.width {
        return Some(AngularInterval {
            start: b.start,
            width: b.width.min(a.width - d),
        });
    }
    let e = (a.start - b.start).rem_euclid(TAU);
    if e <= b.width {
        return Some(AngularInterval {
            start: a.start,
            width: a.width.min(b.width - e),
        });
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShadowVerdict {
    pub feasible: bool,
    pub feasible_interval: Option<AngularInterval>,
    pub circ_variance: f64,
    pub length_dispersion: f64,
    pub n_pairs: usize,
}

/// Wedge-intersection test over pair azimuths plus dispersion statistics.
pub fn feasibility(pairs: &[ShadowPair], half_width: f64) -> Result<ShadowVerdict, ShadowError> {
    let az: Vec<f64> = pairs.iter().map(|p| p.azimuth).collect();
    let lr: Vec<f64> = pairs.iter().map(|p| p.length_ratio).collect();
    feasibility_from(&az, &lr, half_width)
}

/// [`feasibility`] on raw azimuths and length ratios.
pub fn feasibility_from(azimuths: &[f64], length_ratios: &[f64], half_width: f64) -> Result<ShadowVerdict, ShadowError> {
    if azimuths.is_empty() {
        return Err(ShadowError::NoPairs);
    }
    if !(half_width > 0.0 && half_width < PI / 2.0) {
        return Err(ShadowError::BadHalfWidth(half_width));
    }
    let mut acc = Some(AngularInterval {
        start: wrap_pi(azimuths[0] - half_width),
        width: 2.0 * half_width,
    });
    for &a in &azimuths[1..] {
        let wedge = AngularInterval {
            start: wrap_pi(a - half_width),
            width: 2.0 * half_width,
        };
        acc = acc.and_then(|cur| intersect_arcs(cur, wedge));
    }
    let n = azimuths.len() as f64;
    let (c, s) = azimuths
        .iter()
        .fold((0.0, 0.0), |(c, s), a| (c + a.cos(), s + a.sin()));
    let circ_variance = (1.0 - (c / n).hypot(s / n)).clamp(0.0, 1.0);
    let length_dispersion = if length_ratios.len() < 2 {
        0.0
    } else {
        let m = length_ratios.iter().sum::<f64>() / length_ratios.len() as f64;
        let var = length_ratios.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / length_ratios.len() as f64;
        if m > 0.0 {
            var.sqrt() / m
        } else {
            0.0
        }
    };
    Ok(ShadowVerdict {
        feasible: acc.is_some(),
        feasible_interval: acc,
        circ_variance,
        length_dispersion,
        n_pairs: azimuths.len(),
    })
}

pub const SHADOW_FEATURES: [&str; 6] = [
    "shadow_present",
    "shadow_n_pairs",
    "shadow_feasible",
    "shadow_circ_variance",
    "shadow_length_dispersion",
    "shadow_interval_width",
];

/// Shadow cue fragment; `None` (no pairs) yields presence 0 and zeros.
pub fn shadow_features(verdict: Option<&ShadowVerdict>) -> Vec<(&'static str, f64)> {
    let values = match verdict {
        None => [0.0; 6],
        Some(v) => [
            1.0,
            v.n_pairs as f64,
            if v.feasible { 1.0 } else { 0.0 },
            v.circ_variance,
            v.length_dispersion,
            v.feasible_interval.map_or(0.0, |i| i.width),
        ],
    };
    SHADOW_FEATURES.iter().copied().zip(values).collect()
}

/// Dump text: one `azimuth_deg length_ratio` line per pair, then
/// `feasible circ_variance dispersion`.
pub fn dump_text(pairs: &[ShadowPair], verdict: Option<&ShadowVerdict>) -> String {
    let mut s = String::new();
    for p in pairs {
        s.push_str(&format!("{} {}\n", p.azimuth.to_degrees(), p.length_ratio));
    }
    if let Some(v) = verdict {
        s.push_str(&format!(
            "{} {} {}\n",
            u8::from(v.feasible),
            v.circ_variance,
            v.length_dispersion
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect_mask(w: usize, h: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> BinaryMask {
        let mut m = BinaryMask::empty(w, h).unwrap();
        for y in y0..y1 {
            for x in x0..x1 {
                m.set(x, y, true);
            }
        }
        m
    }

    #[test]
    fn horizontal_and_downward_azimuths() {
        // object columns 5..15, rows 71..91: bottom band = rows 89 and 90, centroid (10, 90)
        let obj = rect_mask(64, 128, 5, 71, 15, 91);
        // shadow centered on (30, 90)
        let sh = rect_mask(64, 128, 20, 89, 40, 91);
        let p = derive_pair(&obj, &sh).unwrap();
        assert_eq!(p.base_point, (10.0, 90.0));
        assert_eq!(p.shadow_centroid, (30.0, 90.0));
        assert_eq!(p.azimuth, 0.0);

        let sh = rect_mask(64, 128, 8, 94, 12, 96);
        let p = derive_pair(&obj, &sh).unwrap();
        assert_eq!(p.shadow_centroid, (10.0, 95.0));
        assert_eq!(p.azimuth, PI / 2.0);
    }

    #[test]
    fn length_ratio_by_construction() {
        // object 10 wide, 30 tall; flat shadow strip of length 45 to the right
        let obj = rect_mask(128, 64, 10, 20, 20, 50);
        let sh = rect_mask(128, 64, 20, 47, 65, 50);
        let p = derive_pair(&obj, &sh).unwrap();
        // base band rows 47..50, shadow rows 47..50 -> azimuth exactly 0
        assert_eq!(p.azimuth, 0.0);
        assert!((p.length_ratio - 45.0 / 30.0).abs() < 1e-12);
    }

    #[test]
    fn pair_errors() {
        let a = rect_mask(16, 16, 2, 2, 5, 5);
        let e = BinaryMask::empty(16, 16).unwrap();
        assert_eq!(derive_pair(&e, &a), Err(ShadowError::EmptyMask("object")));
        assert_eq!(derive_pair(&a, &e), Err(ShadowError::EmptyMask("shadow")));
        assert_eq!(derive_pair(&a, &a), Err(ShadowError::Degenerate));
        let other = rect_mask(8, 16, 1, 1, 2, 2);
        assert_eq!(derive_pair(&a, &other), Err(ShadowError::DimensionMismatch));
    }

    #[test]
    fn wedge_intersection_example() {
        let d = f64::to_radians;
        let v = feasibility_from(&[d(10.0), d(15.0)], &[1.0, 1.0], d(20.0)).unwrap();
        assert!(v.feasible);
        let i = v.feasible_interval.unwrap();
        assert!((i.start - d(-5.0)).abs() < 1e-12);
        assert!((i.end() - d(30.0)).abs() < 1e-12);

        let v = feasibility_from(&[d(10.0), d(190.0)], &[1.0, 1.0], d(25.0)).unwrap();
        assert!(!v.feasible && v.feasible_interval.is_none());

        let v = feasibility_from(&[d(123.0)], &[2.0], d(25.0)).unwrap();
        assert!(v.feasible);
        assert!(v.circ_variance.abs() < 1e-15);
        assert_eq!(v.length_dispersion, 0.0);
    }

    #[test]
    fn wedge_across_the_branch_cut() {
        let d = f64::to_radians;
        let v = feasibility_from(&[d(175.0), d(-170.0)], &[1.0, 1.0], d(20.0)).unwrap();
        let i = v.feasible_interval.unwrap();
        assert!((i.width - d(25.0)).abs() < 1e-12);
        assert!(i.contains(PI));
    }

    #[test]
    fn verdict_errors() {
        assert_eq!(feasibility(&[], 0.3), Err(ShadowError::NoPairs));
        assert!(matches!(feasibility_from(&[0.0], &[1.0], 2.0), Err(ShadowError::BadHalfWidth(_))));
    }

    #[test]
    fn features_for_missing_and_consistent() {
        let f = shadow_features(None);
        assert!(f.iter().all(|(_, v)| *v == 0.0));
        let v = feasibility_from(&[0.3, 0.3, 0.3], &[1.0, 1.0, 1.0], 0.4).unwrap();
        let f = shadow_features(Some(&v));
        assert_eq!(f[0], ("shadow_present", 1.0));
        assert_eq!(f[2], ("shadow_feasible", 1.0));
        assert!(f[3].1.abs() < 1e-15);
    }
}
