//! A-contrario line-segment detection.
//!
//! Classical LSD structure: Gaussian subsampling, 2x2 level-line field,
//! greedy region growing from the strongest gradients, rectangle fit,
//! validation by the number of false alarms (NFA) under an
//! independent-orientation noise model, then density refinement and
//! rectangle improvement.
//!
//! Alignment is axial (orientation mod π). Both flanks of a thin dark bar
//! then grow into one region and the bar is reported once, along its
//! centerline, instead of as two opposite-polarity edges. The probability of
//! a random axial alignment within `angle_tol` is `2·angle_tol/π`.
//!
//! Coordinates: pixel `(i, j)` covers `[i, i+1] × [j, j+1]`, so segment
//! endpoints live in `[0, width] × [0, height]`.

use std::f64::consts::{FRAC_PI_2, PI};

use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::corpus::GrayImage;

#[derive(Debug, Error, PartialEq)]
pub enum LsdError {
    #[error("image is {0}x{1}; gradient needs at least 2x2")]
    TooSmall(usize, usize),
    #[error("degenerate zero-length segment")]
    Degenerate,
}

/// An oriented image segment with its stroke width and significance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSegment {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub width: f64,
    /// log10 of the number of false alarms; lower is more significant.
    pub log_nfa: f64,
}

impl LineSegment {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self {
            x1,
            y1,
            x2,
            y2,
            width: 1.0,
            log_nfa: 0.0,
        }
    }

    pub fn length(&self) -> f64 {
        (self.x2 - self.x1).hypot(self.y2 - self.y1)
    }

    pub fn midpoint(&self) -> (f64, f64) {
        (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))
    }

    /// Axial orientation in `[0, π)`.
    pub fn angle(&self) -> Result<f64, LsdError> {
        segment_angle(self)
    }

    /// Endpoints swapped so the lexicographically smaller one comes first.
    pub fn canonical(&self) -> LineSegment {
        if (self.x1, self.y1) <= (self.x2, self.y2) {
            *self
        } else {
            LineSegment {
                x1: self.x2,
                y1: self.y2,
                x2: self.x1,
                y2: self.y1,
                ..*self
            }
        }
    }

    /// One-line text form `x1 y1 x2 y2 width log_nfa`.
    pub fn to_line(&self) -> String {
        format!(
            "{} {} {} {} {} {}",
            self.x1, self.y1, self.x2, self.y2, self.width, self.log_nfa
        )
    }

    pub fn parse_line(line: &str) -> Option<LineSegment> {
        let v: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .ok()?;
        match v[..] {
            [x1, y1, x2, y2, width, log_nfa] => Some(LineSegment {
                x1,
                y1,
                x2,
                y2,
                width,
                log_nfa,
            }),
            _ => None,
        }
    }
}

/// Axial orientation of a segment: `atan2(dy, dx)` folded into `[0, π)`.
pub fn segment_angle(s: &LineSegment) -> Result<f64, LsdError> {
    let (dx, dy) = (s.x2 - s.x1, s.y2 - s.y1);
    if dx == 0.0 && dy == 0.0 {
        return Err(LsdError::Degenerate);
    }
    Ok(fold_axial(dy.atan2(dx)))
}

/// Folds any angle into `[0, π)`.
pub fn fold_axial(a: f64) -> f64 {
    let r = a.rem_euclid(PI);
    if r >= PI {
        0.0
    } else {
        r
    }
}

/// Signed axial difference folded into `[-π/2, π/2)`.
#[inline]
pub fn axial_diff(a: f64, b: f64) -> f64 {
    (a - b + FRAC_PI_2).rem_euclid(PI) - FRAC_PI_2
}

/// Per-pixel gradient magnitude and level-line angle.
///
/// The 2x2 stencil anchored at pixel `(x, y)` estimates the gradient at the
/// pixel corner `(x+1, y+1)`; the last row and column are always invalid.
#[derive(Debug, Clone)]
pub struct GradientField {
    pub width: usize,
    pub height: usize,
    pub magnitude: Vec<f64>,
    /// Level-line angle in `(-π, π]`; meaningful only where `valid`.
    pub angle: Vec<f64>,
    pub valid: Vec<bool>,
}

impl GradientField {
    pub fn angle_at(&self, x: usize, y: usize) -> Option<f64> {
        let i = y * self.width + x;
        self.valid[i].then_some(self.angle[i])
    }
}

pub fn compute_gradient(img: &GrayImage, rho: f64) -> Result<GradientField, LsdError> {
    gradient_of(img.data(), img.width(), img.height(), rho)
}

fn gradient_of(data: &[f64], w: usize, h: usize, rho: f64) -> Result<GradientField, LsdError> {
    if w < 2 || h < 2 {
        return Err(LsdError::TooSmall(w, h));
    }
    let n = w * h;
    let mut magnitude = vec![0.0; n];
    let mut angle = vec![0.0; n];
    let mut valid = vec![false; n];
    for y in 0..h - 1 {
        for x in 0..w - 1 {
            let i = y * w + x;
            let a = data[i];
            let b = data[i + 1];
            let c = data[i + w];
            let d = data[i + w + 1];
            let com1 = d - a;
            let com2 = b - c;
            let gx = com1 + com2;
            let gy = com1 - com2;
            let norm = (0.25 * (gx * gx + gy * gy)).sqrt();
            magnitude[i] = norm;
            if norm > rho {
                valid[i] = true;
                let mut ang = gx.atan2(-gy);
                if ang <= -PI {
                    ang = PI;
                }
                angle[i] = ang;
            }
        }
    }
    Ok(GradientField {
        width: w,
        height: h,
        magnitude,
        angle,
        valid,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsdParams {
    /// Gradient magnitude threshold on the `[0, 1]` intensity scale.
    pub rho: f64,
    /// Alignment tolerance, radians.
    pub angle_tol: f64,
    /// Minimum reported length in source pixels.
    pub min_length: f64,
    /// Segments with `log10(NFA)` above this are rejected.
    pub log_nfa_max: f64,
    /// Subsampling factor applied before the gradient.
    pub scale: f64,
    /// Gaussian sigma is `sigma_scale / scale` source pixels.
    pub sigma_scale: f64,
    /// Minimum fraction of region pixels inside the fitted rectangle.
    pub density_th: f64,
}

impl Default for LsdParams {
    fn default() -> Self {
        Self {
            rho: 2.0 / 255.0,
            angle_tol: 22.5f64.to_radians(),
            min_length: 10.0,
            log_nfa_max: 0.0,
            scale: 0.8,
            sigma_scale: 0.6,
            density_th: 0.7,
        }
    }
}

/// Gaussian subsampling; output pixel `j` is centered at source coordinate `(j + 0.5) / scale`.
fn gaussian_subsample(img: &GrayImage, scale: f64, sigma_scale: f64) -> (Vec<f64>, usize, usize) {
    let (w, h) = (img.width(), img.height());
    if (scale - 1.0).abs() < 1e-12 {
        return (img.data().to_vec(), w, h);
    }
    let sigma = if scale < 1.0 { sigma_scale / scale } else { sigma_scale };
    let radius = (sigma * (2.0 * 3.0 * std::f64::consts::LN_10).sqrt()).ceil() as i64;
    let ws = ((w as f64) * scale).ceil() as usize;
    let hs = ((h as f64) * scale).ceil() as usize;

    // (first source index, normalized weights) for each output coordinate
    let kernels = |n_out: usize, n_in: usize| -> Vec<(Vec<usize>, Vec<f64>)> {
        (0..n_out)
            .map(|j| {
                let c = (j as f64 + 0.5) / scale;
                let center = (c - 0.5).round() as i64;
                let mut idx = Vec::with_capacity((2 * radius + 1) as usize);
                let mut wts = Vec::with_capacity((2 * radius + 1) as usize);
                for i in center - radius..=center + radius {
                    let d = (i as f64 + 0.5) - c;
                    let wt = (-0.5 * d * d / (sigma * sigma)).exp();
                    idx.push(i.clamp(0, n_in as i64 - 1) as usize);
                    wts.push(wt);
                }
                let s: f64 = wts.iter().sum();
                wts.iter_mut().for_each(|v| *v /= s);
                (idx, wts)
            })
            .collect()
    };
    let kx = kernels(ws, w);
    let ky = kernels(hs, h);

    let src = img.data();
    let mut tmp = vec![0.0; ws * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for (x, (idx, wts)) in kx.iter().enumerate() {
            tmp[y * ws + x] = idx.iter().zip(wts).map(|(&i, &k)| row[i] * k).sum();
        }
    }
    let mut out = vec![0.0; ws * hs];
    for (y, (idx, wts)) in ky.iter().enumerate() {
        for x in 0..ws {
            out[y * ws + x] = idx.iter().zip(wts).map(|(&i, &k)| tmp[i * ws + x] * k).sum();
        }
    }
    (out, ws, hs)
}

#[derive(Debug, Clone, Copy)]
struct Rect {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
    width: f64,
    theta: f64,
    dx: f64,
    dy: f64,
    /// angular tolerance
    prec: f64,
    /// probability of a random axial alignment within `prec`
    p: f64,
}

impl Rect {
    fn length(&self) -> f64 {
        (self.x2 - self.x1).hypot(self.y2 - self.y1)
    }
}

struct Detector<'a> {
    grad: &'a GradientField,
    used: Vec<bool>,
    log_nt: f64,
}

/// log10 of `NT · P[Binomial(n, p) ≥ k]`.
fn log10_nfa(n: usize, k: usize, p: f64, log_nt: f64) -> f64 {
    if n == 0 || k == 0 {
        return log_nt;
    }
    if k > n {
        return f64::INFINITY;
    }
    let (nf, kf) = (n as f64, k as f64);
    let ln_p = p.ln();
    let ln_q = (1.0 - p).ln();
    let ln_term =
        |i: f64| ln_gamma(nf + 1.0) - ln_gamma(i + 1.0) - ln_gamma(nf - i + 1.0) + i * ln_p + (nf - i) * ln_q;
    // log-sum-exp over the tail; terms decay geometrically once i > n·p
    let first = ln_term(kf);
    let mut acc = 1.0;
    let mut t = 0.0; // ln(term_i / term_k)
    let ratio_base = (p / (1.0 - p)).ln();
    for i in k + 1..=n {
        let fi = i as f64;
        t += ((nf - fi + 1.0) / fi).ln() + ratio_base;
        let term = t.exp();
        acc += term;
        if term < acc * 1e-17 && (nf - fi) / (fi + 1.0) * (p / (1.0 - p)) < 0.5 {
            break;
        }
    }
    log_nt + (first + acc.ln()) / std::f64::consts::LN_10
}

impl<'a> Detector<'a> {
    #[inline]
    fn aligned(&self, idx: usize, theta: f64, prec: f64) -> bool {
        self.grad.valid[idx] && axial_diff(self.grad.angle[idx], theta).abs() <= prec
    }

    fn region_grow(&mut self, seed: usize, prec: f64) -> (Vec<usize>, f64) {
        let w = self.grad.width;
        let h = self.grad.height;
        let a0 = self.grad.angle[seed];
        let mut sum_c = (2.0 * a0).cos();
        let mut sum_s = (2.0 * a0).sin();
        let mut reg_angle = a0;
        let mut reg = vec![seed];
        self.used[seed] = true;
        let mut i = 0;
        while i < reg.len() {
            let (x, y) = ((reg[i] % w) as i64, (reg[i] / w) as i64);
            for yy in y - 1..=y + 1 {
                for xx in x - 1..=x + 1 {
                    if xx < 0 || yy < 0 || xx >= w as i64 || yy >= h as i64 {
                        continue;
                    }
                    let j = yy as usize * w + xx as usize;
                    if !self.used[j] && self.aligned(j, reg_angle, prec) {
                        self.used[j] = true;
                        reg.push(j);
                        let a = self.grad.angle[j];
                        sum_c += (2.0 * a).cos();
                        sum_s += (2.0 * a).sin();
                        reg_angle = 0.5 * sum_s.atan2(sum_c);
                    }
                }
            }
            i += 1;
        }
        (reg, reg_angle)
    }

    fn region_to_rect(&self, reg: &[usize], prec: f64) -> Rect {
        let w = self.grad.width;
        let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
        for &i in reg {
            let m = self.grad.magnitude[i];
            sw += m;
            sx += m * (i % w) as f64;
            sy += m * (i / w) as f64;
        }
        let (cx, cy) = (sx / sw, sy / sw);
        let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
        for &i in reg {
            let m = self.grad.magnitude[i];
            let (dx, dy) = ((i % w) as f64 - cx, (i / w) as f64 - cy);
            sxx += m * dx * dx;
            syy += m * dy * dy;
            sxy += m * dx * dy;
        }
        let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
        let (dx, dy) = (theta.cos(), theta.sin());
        let (mut l_min, mut l_max, mut w_min, mut w_max) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for &i in reg {
            let (px, py) = ((i % w) as f64 - cx, (i / w) as f64 - cy);
            let l = px * dx + py * dy;
            let ww = -px * dy + py * dx;
            l_min = l_min.min(l);
            l_max = l_max.max(l);
            w_min = w_min.min(ww);
            w_max = w_max.max(ww);
        }
        let width = (w_max - w_min).max(1.0);
        Rect {
            x1: cx + l_min * dx,
            y1: cy + l_min * dy,
            x2: cx + l_max * dx,
            y2: cy + l_max * dy,
            width,
            theta,
            dx,
            dy,
            prec,
            p: (2.0 * prec / PI).min(1.0),
        }
    }

    fn rect_nfa(&self, r: &Rect) -> f64 {
        let w = self.grad.width as i64;
        let h = self.grad.height as i64;
        let half = r.width / 2.0;
        let len = r.length();
        let corners = [
            (r.x1 - r.dy * half, r.y1 + r.dx * half),
            (r.x1 + r.dy * half, r.y1 - r.dx * half),
            (r.x2 - r.dy * half, r.y2 + r.dx * half),
            (r.x2 + r.dy * half, r.y2 - r.dx * half),
        ];
        let xmin = corners.iter().map(|c| c.0).fold(f64::INFINITY, f64::min).floor() as i64;
        let xmax = corners.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max).ceil() as i64;
        let ymin = corners.iter().map(|c| c.1).fold(f64::INFINITY, f64::min).floor() as i64;
        let ymax = corners.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max).ceil() as i64;
        let (mut n, mut k) = (0usize, 0usize);
        for y in ymin.max(0)..=ymax.min(h - 1) {
            for x in xmin.max(0)..=xmax.min(w - 1) {
                let (px, py) = (x as f64 - r.x1, y as f64 - r.y1);
                let l = px * r.dx + py * r.dy;
                let ww = -px * r.dy + py * r.dx;
                if l < -1e-9 || l > len + 1e-9 || ww.abs() > half + 1e-9 {
                    continue;
                }
                n += 1;
                if self.aligned((y * w + x) as usize, r.theta, r.prec) {
                    k += 1;
                }
            }
        }
        log10_nfa(n, k, r.p, self.log_nt)
    }

    fn density(&self, reg: &[usize], r: &Rect) -> f64 {
        reg.len() as f64 / (r.length() * r.width).max(1e-12)
    }

    /// Tightens the region until it fills its rectangle densely enough.
    fn refine(
        &mut self,
        mut reg: Vec<usize>,
        mut rect: Rect,
        seed: usize,
        prec: f64,
        density_th: f64,
    ) -> Option<(Vec<usize>, Rect)> {
        if self.density(&reg, &rect) >= density_th {
            return Some((reg, rect));
        }
        let w = self.grad.width;
        let (sx, sy) = ((seed % w) as f64, (seed / w) as f64);
        let ang_c = self.grad.angle[seed];
        let (mut sum, mut s_sum, mut n) = (0.0, 0.0, 0usize);
        for &i in &reg {
            let (x, y) = ((i % w) as f64, (i / w) as f64);
            if (x - sx).hypot(y - sy) < rect.width {
                let d = axial_diff(self.grad.angle[i], ang_c);
                sum += d;
                s_sum += d * d;
                n += 1;
            }
        }
        if n > 0 {
            let mean = sum / n as f64;
            let tau = 2.0 * (s_sum / n as f64 - mean * mean).max(0.0).sqrt();
            for &i in &reg {
                self.used[i] = false;
            }
            let (r2, _) = self.region_grow(seed, tau.clamp(1e-3, prec));
            reg = r2;
            if reg.len() < 2 {
                return None;
            }
            rect = self.region_to_rect(&reg, prec);
            if self.density(&reg, &rect) >= density_th {
                return Some((reg, rect));
            }
        }
        // shrink the region radius around the seed
        let mut rad = (sx - rect.x1).hypot(sy - rect.y1).max((sx - rect.x2).hypot(sy - rect.y2));
        while self.density(&reg, &rect) < density_th {
            rad *= 0.75;
            let (keep, drop): (Vec<usize>, Vec<usize>) = reg.iter().partition(|&&i| {
                ((i % w) as f64 - sx).hypot((i / w) as f64 - sy) <= rad
            });
            for i in drop {
                self.used[i] = false;
            }
            reg = keep;
            if reg.len() < 2 {
                return None;
            }
            rect = self.region_to_rect(&reg, prec);
        }
        Some((reg, rect))
    }

    /// Tries narrower tolerances and thinner rectangles; keeps the most significant.
    fn improve(&self, rect: Rect) -> (Rect, f64) {
        const DELTA: f64 = 0.5;
        let mut best = rect;
        let mut best_nfa = self.rect_nfa(&rect);
        let try_set = |cand: Rect, best: &mut Rect, best_nfa: &mut f64| {
            let v = self.rect_nfa(&cand);
            if v < *best_nfa {
                *best_nfa = v;
                *best = cand;
            }
        };
        let mut r = best;
        for _ in 0..5 {
            r.p /= 2.0;
            r.prec = r.p * PI / 2.0;
            try_set(r, &mut best, &mut best_nfa);
        }
        r = best;
        for _ in 0..5 {
            if r.width - DELTA >= 0.5 {
                r.width -= DELTA;
                try_set(r, &mut best, &mut best_nfa);
            }
        }
        for side in [1.0, -1.0] {
            r = best;
            for _ in 0..5 {
                if r.width - DELTA >= 0.5 {
                    let (ox, oy) = (-r.dy * DELTA / 2.0 * side, r.dx * DELTA / 2.0 * side);
                    r.x1 += ox;
                    r.y1 += oy;
                    r.x2 += ox;
                    r.y2 += oy;
                    r.width -= DELTA;
                    try_set(r, &mut best, &mut best_nfa);
                }
            }
        }
        r = best;
        for _ in 0..5 {
            r.p /= 2.0;
            r.prec = r.p * PI / 2.0;
            try_set(r, &mut best, &mut best_nfa);
        }
        (best, best_nfa)
    }
}

/// Detects line segments; result sorted by descending length.
pub fn detect_segments(img: &GrayImage, params: &LsdParams) -> Vec<LineSegment> {
    let (data, ws, hs) = gaussian_subsample(img, params.scale, params.sigma_scale);
    let Ok(grad) = gradient_of(&data, ws, hs, params.rho) else {
        return Vec::new();
    };
    let prec = params.angle_tol;
    let p = (2.0 * prec / PI).min(1.0);
    let log_nt = 2.5 * ((ws as f64).log10() + (hs as f64).log10()) + 11f64.log10();
    let min_reg_size = (-log_nt / p.log10()).max(2.0) as usize;

    let mut order: Vec<usize> = (0..ws * hs).filter(|&i| grad.valid[i]).collect();
    // stable: equal magnitudes keep raster order
    order.sort_by(|&a, &b| grad.magnitude[b].total_cmp(&grad.magnitude[a]));

    let mut det = Detector {
        grad: &grad,
        used: vec![false; ws * hs],
        log_nt,
    };
    let (sw, sh) = (img.width() as f64, img.height() as f64);
    let mut out = Vec::new();
    for seed in order {
        if det.used[seed] {
            continue;
        }
        let (reg, _) = det.region_grow(seed, prec);
        if reg.len() < min_reg_size {
            continue;
        }
        let rect = det.region_to_rect(&reg, prec);
        let Some((_reg, rect)) = det.refine(reg, rect, seed, prec, params.density_th) else {
            continue;
        };
        let (rect, log_nfa) = det.improve(rect);
        if log_nfa > params.log_nfa_max {
            continue;
        }
        // gradient sample (x, y) sits at corner (x+1, y+1); undo subsampling
        let s = params.scale;
        let seg = LineSegment {
            x1: ((rect.x1 + 1.0) / s).clamp(0.0, sw),
            y1: ((rect.y1 + 1.0) / s).clamp(0.0, sh),
            x2: ((rect.x2 + 1.0) / s).clamp(0.0, sw),
            y2: ((rect.y2 + 1.0) / s).clamp(0.0, sh),
            width: rect.width / s,
            log_nfa,
        };
        if seg.length() >= params.min_length {
            out.push(seg);
        }
    }
    out.sort_by(|a, b| b.length().total_cmp(&a.length()));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axial_angles() {
        let a = |x2, y2| segment_angle(&LineSegment::new(0.0, 0.0, x2, y2)).unwrap();
        assert_eq!(a(1.0, 0.0), 0.0);
        assert!((a(0.0, 1.0) - FRAC_PI_2).abs() < 1e-15);
        assert!((a(-1.0, -1.0) - PI / 4.0).abs() < 1e-15);
        assert_eq!(a(-1.0, 0.0), 0.0);
        assert_eq!(
            segment_angle(&LineSegment::new(3.0, 3.0, 3.0, 3.0)),
            Err(LsdError::Degenerate)
        );
    }

    #[test]
    fn axial_diff_wraps() {
        assert!((axial_diff(0.01, PI - 0.01) - 0.02).abs() < 1e-12);
        assert!((axial_diff(PI / 2.0, -PI / 2.0)).abs() < 1e-12);
        assert!(axial_diff(0.3, 0.1) > 0.0);
    }

    #[test]
    fn gradient_rejects_tiny_images() {
        let img = GrayImage::filled(1, 5, 0.5).unwrap();
        assert_eq!(compute_gradient(&img, 0.01).unwrap_err(), LsdError::TooSmall(1, 5));
    }

    #[test]
    fn constant_image_has_no_valid_pixels() {
        let img = GrayImage::filled(8, 6, 0.3).unwrap();
        let g = compute_gradient(&img, 2.0 / 255.0).unwrap();
        assert!(g.valid.iter().all(|v| !v));
        assert!(detect_segments(&img, &LsdParams::default()).is_empty());
    }

    #[test]
    fn vertical_step_edge() {
        let (w, h, c) = (12, 10, 6);
        let data = (0..w * h).map(|i| if i % w >= c { 1.0 } else { 0.0 }).collect();
        let img = GrayImage::new(w, h, data).unwrap();
        let g = compute_gradient(&img, 2.0 / 255.0).unwrap();
        for y in 0..h - 1 {
            for x in 0..w - 1 {
                let a = g.angle_at(x, y);
                if x == c - 1 {
                    let a = a.expect("edge column is valid");
                    assert!((a.abs() - FRAC_PI_2).abs() < 1e-12, "angle {a}");
                } else {
                    assert!(a.is_none());
                }
            }
        }
    }

    #[test]
    fn ramp_gradient_closed_form() {
        // I(u, v) = u / width: each 2x2 stencil sees a horizontal step of 1/width
        let (w, h) = (16, 9);
        let data = (0..w * h).map(|i| (i % w) as f64 / w as f64).collect();
        let img = GrayImage::new(w, h, data).unwrap();
        let g = compute_gradient(&img, 1e-6).unwrap();
        let expect = 1.0 / w as f64;
        for y in 0..h - 1 {
            for x in 0..w - 1 {
                let i = y * w + x;
                assert!((g.magnitude[i] - expect).abs() < 1e-15);
                assert_eq!(g.angle[i], FRAC_PI_2);
            }
        }
    }

    #[test]
    fn nfa_matches_direct_binomial_sum() {
        let (n, k, p) = (40usize, 25usize, 0.25f64);
        let mut tail = 0.0;
        for i in k..=n {
            let c = (ln_gamma(n as f64 + 1.0) - ln_gamma(i as f64 + 1.0) - ln_gamma((n - i) as f64 + 1.0)).exp();
            tail += c * p.powi(i as i32) * (1.0 - p).powi((n - i) as i32);
        }
        let got = log10_nfa(n, k, p, 3.0);
        assert!((got - (3.0 + tail.log10())).abs() < 1e-9, "{got}");
        assert_eq!(log10_nfa(10, 0, p, 2.0), 2.0);
    }

    #[test]
    fn segment_text_round_trip() {
        let s = LineSegment {
            x1: 1.5,
            y1: 2.25,
            x2: 100.0,
            y2: 0.1,
            width: 2.0,
            log_nfa: -35.5,
        };
        assert_eq!(LineSegment::parse_line(&s.to_line()), Some(s));
        assert_eq!(LineSegment::parse_line("1 2 3"), None);
    }
}
