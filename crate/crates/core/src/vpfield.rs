//! Vanishing points and perspective fields.
//!
//! Conventions: image x grows right, y grows down. The camera looks along +z
//! with intrinsics `K = [[f, 0, cx], [0, f, cy], [0, 0, 1]]`. At pitch 0 and
//! roll 0 the world up direction is `(0, -1, 0)` in camera coordinates.
//! Positive pitch tilts the camera upward (the horizon moves down the image);
//! positive roll turns the projected up vector towards +x, i.e. at roll `φ`
//! and pitch 0 the up vector is `(sin φ, -cos φ)`.
//!
//! In camera coordinates world up is
//! `u = (sin φ cos θ, -cos φ cos θ, sin θ)` for pitch `θ` and roll `φ`.
//! The latitude of a pixel is the elevation of its viewing ray, `asin(r̂ · u)`.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix3, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::lsd::{axial_diff, LineSegment};

#[derive(Debug, Error, PartialEq)]
pub enum VpError {
    #[error("degenerate zero-length segment")]
    DegenerateSegment,
    #[error("lines are identical; intersection undefined")]
    IdenticalLines,
    #[error("need at least {needed} segments, got {got}")]
    TooFewSegments { needed: usize, got: usize },
    #[error("empty segment list")]
    Empty,
}

pub type Homogeneous = [f64; 3];

fn normalize3(v: Vector3<f64>) -> Option<Homogeneous> {
    let n = v.norm();
    (n > 0.0 && n.is_finite()).then(|| [v.x / n, v.y / n, v.z / n])
}

/// Flips sign so the last nonzero coordinate (scanning c, b, a) is positive.
fn canonical_sign(h: Homogeneous) -> Homogeneous {
    let s = if h[2] != 0.0 {
        h[2].signum()
    } else if h[1] != 0.0 {
        h[1].signum()
    } else {
        h[0].signum()
    };
    [h[0] * s, h[1] * s, h[2] * s]
}

/// Homogeneous line through the segment endpoints, unit-normalized.
pub fn line_of(s: &LineSegment) -> Result<Homogeneous, VpError> {
    if s.x1 == s.x2 && s.y1 == s.y2 {
        return Err(VpError::DegenerateSegment);
    }
    let p = Vector3::new(s.x1, s.y1, 1.0);
    let q = Vector3::new(s.x2, s.y2, 1.0);
    normalize3(p.cross(&q)).ok_or(VpError::DegenerateSegment)
}

/// Homogeneous intersection of two lines, unit-normalized.
pub fn intersect(l1: &Homogeneous, l2: &Homogeneous) -> Result<Homogeneous, VpError> {
    let a = Vector3::from(*l1);
    let b = Vector3::from(*l2);
    let v = a.cross(&b);
    if v.norm() <= 1e-14 * a.norm() * b.norm() {
        return Err(VpError::IdenticalLines);
    }
    Ok(canonical_sign(normalize3(v).ok_or(VpError::IdenticalLines)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct VanishingPoint {
    pub h: Homogeneous,
    pub inlier_ids: Vec<usize>,
    pub support: usize,
}

impl VanishingPoint {
    /// Image position, or `None` when `|c|` is below `eps` (point at infinity).
    pub fn finite(&self, eps: f64) -> Option<(f64, f64)> {
        (self.h[2].abs() > eps).then(|| (self.h[0] / self.h[2], self.h[1] / self.h[2]))
    }

    pub fn to_line(&self) -> String {
        format!("{} {} {} {}", self.h[0], self.h[1], self.h[2], self.support)
    }
}

/// Angle in degrees between a segment and the direction from its midpoint to `vp`.
pub fn angular_residual_deg(s: &LineSegment, vp: &Homogeneous) -> f64 {
    let (mx, my) = s.midpoint();
    let (tx, ty) = (vp[0] - mx * vp[2], vp[1] - my * vp[2]);
    let (sx, sy) = (s.x2 - s.x1, s.y2 - s.y1);
    if tx == 0.0 && ty == 0.0 {
        return 0.0;
    }
    axial_diff(sy.atan2(sx), ty.atan2(tx)).abs().to_degrees()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VpParams {
    pub iters: usize,
    pub inlier_tol_deg: f64,
    pub min_support: usize,
    pub max_vps: usize,
    pub seed: u64,
}

impl Default for VpParams {
    fn default() -> Self {
        Self {
            iters: 2000,
            inlier_tol_deg: 2.0,
            min_support: 5,
            max_vps: 3,
            seed: 42,
        }
    }
}

/// Least-squares point minimizing `Σ (l_i · v)²` over unit `v`.
fn refine_vp(lines: &[Homogeneous]) -> Option<Homogeneous> {
    let mut m = Matrix3::<f64>::zeros();
    for l in lines {
        let v = Vector3::from(*l);
        m += v * v.transpose();
    }
    let eig = m.symmetric_eigen();
    let (imin, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    normalize3(eig.eigenvectors.column(imin).into_owned()).map(canonical_sign)
}

fn inliers_of(segments: &[LineSegment], pool: &[usize], vp: &Homogeneous, tol: f64) -> (Vec<usize>, f64) {
    let mut ids = Vec::new();
    let mut total = 0.0;
    for &i in pool {
        let r = angular_residual_deg(&segments[i], vp);
        if r <= tol {
            ids.push(i);
            total += r;
        }
    }
    (ids, total)
}

/// Sequential RANSAC over segment pairs. VPs come out by descending support.
///
/// When the remaining pool has at most `iters` pairs, every pair is tried.
/// The effective minimum support is `min_support` clamped into
/// `[2, segments.len()]`.
pub fn estimate_vps(segments: &[LineSegment], params: &VpParams) -> Result<Vec<VanishingPoint>, VpError> {
    if segments.len() < 2 {
        return Err(VpError::TooFewSegments {
            needed: 2,
            got: segments.len(),
        });
    }
    let lines: Vec<Option<Homogeneous>> = segments.iter().map(|s| line_of(s).ok()).collect();
    let min_support = params.min_support.clamp(2, segments.len());
    let tol = params.inlier_tol_deg;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut pool: Vec<usize> = (0..segments.len()).filter(|&i| lines[i].is_some()).collect();
    let mut vps = Vec::new();

    while vps.len() < params.max_vps && pool.len() >= 2 {
        let n = pool.len();
        let n_pairs = n * (n - 1) / 2;
        let mut best: Option<(Homogeneous, Vec<usize>, f64)> = None;
        let consider = |a: usize, b: usize, best: &mut Option<(Homogeneous, Vec<usize>, f64)>| {
            let (Some(la), Some(lb)) = (lines[pool[a]], lines[pool[b]]) else {
                return;
            };
            let Ok(v) = intersect(&la, &lb) else { return };
            let (ids, res) = inliers_of(segments, &pool, &v, tol);
            let better = match best {
                None => true,
                Some((_, bids, bres)) => ids.len() > bids.len() || (ids.len() == bids.len() && res < *bres),
            };
            if better {
                *best = Some((v, ids, res));
            }
        };
        if n_pairs <= params.iters {
            for a in 0..n {
                for b in a + 1..n {
                    consider(a, b, &mut best);
                }
            }
        } else {
            for _ in 0..params.iters {
                let pick = sample(&mut rng, n, 2);
                consider(pick.index(0), pick.index(1), &mut best);
            }
        }
        let Some((mut v, mut ids, _)) = best else { break };
        if ids.len() < min_support {
            break;
        }
        if ids.len() > 2 {
            // polish on the consensus set, then re-collect inliers
            let inlier_lines: Vec<Homogeneous> = ids.iter().filter_map(|&i| lines[i]).collect();
            if let Some(r) = refine_vp(&inlier_lines) {
                let (rids, _) = inliers_of(segments, &pool, &r, tol);
                if rids.len() >= ids.len() {
                    v = r;
                    ids = rids;
                }
            }
        }
        pool.retain(|i| !ids.contains(i));
        vps.push(VanishingPoint {
            h: v,
            support: ids.len(),
            inlier_ids: ids,
        });
    }
    // stable: equal support keeps discovery order
    vps.sort_by(|a, b| b.support.cmp(&a.support));
    Ok(vps)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraHypothesis {
    pub focal: f64,
    pub pitch: f64,
    pub roll: f64,
    pub principal_point: (f64, f64),
}

impl CameraHypothesis {
    /// Pitch 0, roll 0, focal = image width, principal point at the center.
    pub fn fallback(dims: (usize, usize)) -> Self {
        Self {
            focal: dims.0 as f64,
            pitch: 0.0,
            roll: 0.0,
            principal_point: (dims.0 as f64 / 2.0, dims.1 as f64 / 2.0),
        }
    }

    /// World up expressed in camera coordinates.
    pub fn up_camera(&self) -> Vector3<f64> {
        let (sp, cp) = self.pitch.sin_cos();
        let (sr, cr) = self.roll.sin_cos();
        Vector3::new(sr * cp, -cr * cp, sp)
    }

    /// Rotation taking world coordinates (y down, up = -y) to camera coordinates.
    pub fn rotation(&self) -> Matrix3<f64> {
        let (sp, cp) = self.pitch.sin_cos();
        let (sr, cr) = self.roll.sin_cos();
        // camera tilts up by pitch about x, then rolls about the optical axis
        let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cp, sp, 0.0, -sp, cp);
        let rz = Matrix3::new(cr, -sr, 0.0, sr, cr, 0.0, 0.0, 0.0, 1.0);
        rz * rx
    }

    pub fn intrinsics(&self) -> Matrix3<f64> {
        let (cx, cy) = self.principal_point;
        Matrix3::new(self.focal, 0.0, cx, 0.0, self.focal, cy, 0.0, 0.0, 1.0)
    }

    /// Ray direction `K⁻¹ (u, v, 1)` in camera coordinates (not normalized).
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        let (cx, cy) = self.principal_point;
        Vector3::new((u - cx) / self.focal, (v - cy) / self.focal, 1.0)
    }

    /// Projects a camera-frame point.
    pub fn project(&self, p: &Vector3<f64>) -> (f64, f64) {
        let (cx, cy) = self.principal_point;
        (self.focal * p.x / p.z + cx, self.focal * p.y / p.z + cy)
    }

    pub fn is_valid(&self) -> bool {
        self.focal.is_finite()
            && self.focal > 0.0
            && self.pitch.abs() < FRAC_PI_2
            && self.roll > -PI
            && self.roll <= PI
    }
}

/// Distance from the principal point at which a VP counts as "at infinity".
fn vp_offset(vp: &VanishingPoint, pp: (f64, f64)) -> Option<(f64, f64)> {
    vp.finite(1e-9).map(|(x, y)| (x - pp.0, y - pp.1))
}

/// Angle of a VP's direction (from the principal point, or its ideal direction)
/// away from the image vertical, in radians in `[0, π/2]`.
fn tilt_from_vertical(vp: &VanishingPoint, pp: (f64, f64)) -> f64 {
    let (dx, dy) = vp_offset(vp, pp).unwrap_or((vp.h[0], vp.h[1]));
    axial_diff(dy.atan2(dx), FRAC_PI_2).abs()
}

/// Camera orientation and focal length from vanishing points.
///
/// The vertical VP is the candidate within 30° of the image vertical that lies
/// farthest from the principal point, and at least the larger image dimension
/// away from it (for moderate pitch the zenith/nadir is far outside the frame). Roll comes from its direction. Pitch comes
/// from the strongest remaining finite VP, which lies on the horizon, or from
/// the vertical VP when there is none. Focal length comes from orthogonality
/// of the vertical VP and that horizon VP when both are finite:
/// `f² = −(v1 − pp)·(v2 − pp)`; otherwise it falls back to the image width.
pub fn camera_from_vps(vps: &[VanishingPoint], dims: (usize, usize)) -> CameraHypothesis {
    let fallback = CameraHypothesis::fallback(dims);
    if vps.is_empty() {
        return fallback;
    }
    let pp = fallback.principal_point;
    let max_tilt = 30f64.to_radians();
    let min_vertical_distance = dims.0.max(dims.1) as f64;
    let distance = |vp: &VanishingPoint| vp_offset(vp, pp).map_or(f64::INFINITY, |(x, y)| x.hypot(y));
    let vertical = vps
        .iter()
        .enumerate()
        .filter(|(_, v)| tilt_from_vertical(v, pp) <= max_tilt && distance(v) >= min_vertical_distance)
        .max_by(|a, b| distance(a.1).total_cmp(&distance(b.1)).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i);
    let horizon = vps
        .iter()
        .enumerate()
        .find(|(i, v)| Some(*i) != vertical && vp_offset(v, pp).is_some())
        .map(|(_, v)| v);

    let mut cam = fallback;
    let mut vert_offset = None;
    if let Some(vi) = vertical {
        let v = &vps[vi];
        let (dx, dy) = vp_offset(v, pp).unwrap_or((v.h[0], v.h[1]));
        // orient so the image-plane up component points to -y
        let s = if dy > 0.0 { -1.0 } else { 1.0 };
        cam.roll = (s * dx).atan2(-s * dy);
        vert_offset = vp_offset(v, pp).map(|o| (o, s));
    }
    if let (Some(((vx, vy), _)), Some(h)) = (vert_offset, horizon) {
        let (hx, hy) = vp_offset(h, pp).expect("finite horizon VP");
        let f2 = -(vx * hx + vy * hy);
        if f2 > 0.0 {
            cam.focal = f2.sqrt();
        }
    }
    let (sr, cr) = cam.roll.sin_cos();
    if let Some(h) = horizon {
        let (hx, hy) = vp_offset(h, pp).expect("finite horizon VP");
        let (xb, yb) = (hx / cam.focal, hy / cam.focal);
        cam.pitch = (yb * cr - xb * sr).atan();
    } else if let Some(((vx, vy), s)) = vert_offset {
        // |tan θ| = f / |v − pp|; zenith above the image means looking up
        let dist = vx.hypot(vy);
        if dist > 0.0 {
            cam.pitch = s * (cam.focal / dist).atan();
        }
    }
    let limit = FRAC_PI_2 - 1e-6;
    cam.pitch = cam.pitch.clamp(-limit, limit);
    if cam.roll <= -PI {
        cam.roll = PI;
    }
    cam
}

/// Per-cell up vectors and latitudes over a coarse grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PerspectiveFieldGrid {
    pub grid_w: usize,
    pub grid_h: usize,
    /// Cell-major (row by row) unit up vectors.
    pub up: Vec<[f64; 2]>,
    /// Cell-major latitudes in radians.
    pub latitude: Vec<f64>,
}

impl PerspectiveFieldGrid {
    pub fn cell(&self, i: usize, j: usize) -> ([f64; 2], f64) {
        let k = j * self.grid_w + i;
        (self.up[k], self.latitude[k])
    }

    /// `gw gh` then one `ux uy latitude` line per cell.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.grid_w, self.grid_h);
        for (u, l) in self.up.iter().zip(&self.latitude) {
            s.push_str(&format!("{} {} {}\n", u[0], u[1], l));
        }
        s
    }

    pub fn parse_text(text: &str) -> Option<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let mut dims = lines.next()?.split_whitespace().map(str::parse::<usize>);
        let (gw, gh) = (dims.next()?.ok()?, dims.next()?.ok()?);
        let mut up = Vec::with_capacity(gw * gh);
        let mut latitude = Vec::with_capacity(gw * gh);
        for line in lines {
            let v: Vec<f64> = line.split_whitespace().map(str::parse).collect::<Result<_, _>>().ok()?;
            let [ux, uy, lat] = v[..] else { return None };
            up.push([ux, uy]);
            latitude.push(lat);
        }
        (up.len() == gw * gh).then_some(Self {
            grid_w: gw,
            grid_h: gh,
            up,
            latitude,
        })
    }
}

/// Up vector and latitude at image point `(u, v)`.
pub fn field_at(cam: &CameraHypothesis, u: f64, v: f64) -> ([f64; 2], f64) {
    let up = cam.up_camera();
    let r = cam.ray(u, v);
    let lat = (r.dot(&up) / r.norm()).clamp(-1.0, 1.0).asin();
    // derivative of the projection of (r + t·up) at t = 0, up to the factor f/r_z
    let dx = up.x - up.z * r.x;
    let dy = up.y - up.z * r.y;
    let n = dx.hypot(dy);
    let dir = if n > 1e-12 { [dx / n, dy / n] } else { [0.0, -1.0] };
    (dir, lat)
}

/// Samples [`field_at`] at the centers of a `gw × gh` grid.
pub fn perspective_field(cam: &CameraHypothesis, dims: (usize, usize), grid: (usize, usize)) -> PerspectiveFieldGrid {
    let (gw, gh) = grid;
    let (w, h) = (dims.0 as f64, dims.1 as f64);
    let mut up = Vec::with_capacity(gw * gh);
    let mut latitude = Vec::with_capacity(gw * gh);
    for j in 0..gh {
        for i in 0..gw {
            let u = (i as f64 + 0.5) * w / gw as f64;
            let v = (j as f64 + 0.5) * h / gh as f64;
            let (d, l) = field_at(cam, u, v);
            up.push(d);
            latitude.push(l);
        }
    }
    PerspectiveFieldGrid {
        grid_w: gw,
        grid_h: gh,
        up,
        latitude,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VpConsistency {
    /// Median angular residual to the best VP, degrees.
    pub median_residual: f64,
    pub inlier_fraction: f64,
    pub n_clusters: usize,
}

/// Residual of each segment to its best-fitting VP (90° when there is none).
pub fn vp_consistency(
    segments: &[LineSegment],
    vps: &[VanishingPoint],
    inlier_tol_deg: f64,
) -> Result<VpConsistency, VpError> {
    if segments.is_empty() {
        return Err(VpError::Empty);
    }
    let mut res: Vec<f64> = segments
        .iter()
        .map(|s| {
            vps.iter()
                .map(|v| angular_residual_deg(s, &v.h))
                .fold(90.0, f64::min)
        })
        .collect();
    res.sort_by(f64::total_cmp);
    let n = res.len();
    let median = if n % 2 == 1 {
        res[n / 2]
    } else {
        0.5 * (res[n / 2 - 1] + res[n / 2])
    };
    let inliers = res.iter().filter(|r| **r <= inlier_tol_deg).count();
    Ok(VpConsistency {
        median_residual: median,
        inlier_fraction: inliers as f64 / n as f64,
        n_clusters: vps.len(),
    })
}
