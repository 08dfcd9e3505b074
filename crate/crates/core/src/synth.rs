//! Deterministic synthetic scenes with a known camera and a known light.
//!
//! A scene is a set of straight sticks lying on the surfaces of a box corridor
//! (depth sticks along the corridor, vertical posts on the walls, lateral bars
//! across floor and ceiling) rendered as anti-aliased dark bars on white, plus
//! rectangular objects on the ground with cast-shadow masks. Two knobs inject
//! errors: `epsilon_vp` rotates every projected stick about its midpoint by
//! that angle (random sign), and `epsilon_shadow` jitters each shadow's
//! direction with a zero-mean normal of that standard deviation.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::corpus::{
    save_gray, save_mask, write_manifest, BinaryMask, CorpusError, GrayImage, Label, ManifestEntry, MaskPairPaths,
};
use crate::lsd::LineSegment;
use crate::vpfield::{CameraHypothesis, VanishingPoint};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scene: {0}")]
    InvalidSpec(String),
    #[error("corpus needs at least one image")]
    EmptyCorpus,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, SynthError>;

const CORRIDOR_HALF_WIDTH: f64 = 2.0;
const CAMERA_HEIGHT: f64 = 1.6;
const CORRIDOR_HEIGHT: f64 = 3.0;
const BAR_WIDTH: f64 = 2.0;
const BAR_DARKNESS: f64 = 0.8;
const MIN_BAR_LENGTH: f64 = 25.0;
const MIN_BAR_GAP: f64 = 12.0;
const BORDER: f64 = 4.0;
const SUBSAMPLES: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub camera: CameraHypothesis,
    /// Rotation of the corridor about the vertical axis, radians.
    pub yaw: f64,
    pub n_lines: usize,
    pub light_azimuth: f64,
    pub n_shadow_pairs: usize,
    pub epsilon_vp: f64,
    pub epsilon_shadow: f64,
    pub seed: u64,
    pub image_dims: (usize, usize),
}

impl SceneSpec {
    /// Samples camera and light: pitch magnitude in [6°, 14°] with random sign,
    /// roll in [−3°, 3°], yaw in [−10°, 10°], focal in [0.8, 1.0]·width and
    /// light azimuth in [30°, 150°] (shadows fall towards the bottom of the image).
    pub fn random(seed: u64, image_dims: (usize, usize), epsilon_vp: f64, epsilon_shadow: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let deg = |r: &mut ChaCha8Rng, lo: f64, hi: f64| r.random_range(lo..hi).to_radians();
        let pitch_mag = deg(&mut rng, 6.0, 14.0);
        let pitch = if rng.random_bool(0.5) { pitch_mag } else { -pitch_mag };
        let roll = deg(&mut rng, -3.0, 3.0);
        let yaw = deg(&mut rng, -10.0, 10.0);
        let focal = rng.random_range(0.8..1.0) * image_dims.0 as f64;
        let light_azimuth = deg(&mut rng, 30.0, 150.0);
        Self {
            camera: CameraHypothesis {
                focal,
                pitch,
                roll,
                principal_point: (image_dims.0 as f64 / 2.0, image_dims.1 as f64 / 2.0),
            },
            yaw,
            n_lines: 24,
            light_azimuth,
            n_shadow_pairs: 3,
            epsilon_vp,
            epsilon_shadow,
            seed,
            image_dims,
        }
    }

    pub fn label(&self) -> Label {
        if self.epsilon_vp == 0.0 && self.epsilon_shadow == 0.0 {
            Label::Real
        } else {
            Label::Generated
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.into()));
        if !(self.epsilon_vp >= 0.0 && self.epsilon_shadow >= 0.0) {
            return bad("epsilons must be >= 0");
        }
        if self.n_lines < 2 {
            return bad("n_lines must be >= 2");
        }
        if self.image_dims.0 < 32 || self.image_dims.1 < 32 {
            return bad("image must be at least 32x32");
        }
        if !self.camera.is_valid() {
            return bad("invalid camera");
        }
        Ok(())
    }

    /// World-to-camera rotation including yaw.
    fn world_to_camera(&self) -> Matrix3<f64> {
        let (sy, cy) = self.yaw.sin_cos();
        let ry = Matrix3::new(cy, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy);
        self.camera.rotation() * ry
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LineFamily {
    /// Along the corridor; meets at the finite central VP.
    Depth,
    Vertical,
    Lateral,
}

impl LineFamily {
    pub const ALL: [LineFamily; 3] = [Self::Depth, Self::Vertical, Self::Lateral];

    fn direction(self) -> Vector3<f64> {
        match self {
            Self::Depth => Vector3::new(0.0, 0.0, 1.0),
            Self::Vertical => Vector3::new(0.0, 1.0, 0.0),
            Self::Lateral => Vector3::new(1.0, 0.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthSegment {
    /// The rendered bar centerline.
    pub segment: LineSegment,
    pub family: LineFamily,
    /// Signed rotation applied about the midpoint, radians.
    pub deflection: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthPair {
    pub azimuth: f64,
    /// Base-band centroid the shadow is anchored at.
    pub anchor: (f64, f64),
    pub shadow_length: f64,
    pub object_height: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthTruth {
    /// Depth, vertical and lateral VPs, with `inlier_ids` indexing `true_segments`.
    pub true_vps: Vec<VanishingPoint>,
    pub true_segments: Vec<TruthSegment>,
    pub true_pairs: Vec<TruthPair>,
    /// Candidate sticks whose projection missed the image.
    pub skipped_lines: usize,
    pub label: Label,
}

impl SynthTruth {
    pub fn vp(&self, family: LineFamily) -> &VanishingPoint {
        &self.true_vps[LineFamily::ALL.iter().position(|f| *f == family).expect("family")]
    }
}

#[derive(Debug, Clone)]
pub struct Rendered {
    pub image: GrayImage,
    pub mask_pairs: Vec<(BinaryMask, BinaryMask)>,
    pub truth: SynthTruth,
}

/// Clips a segment to `[lo_x, hi_x] × [lo_y, hi_y]`.
fn clip(s: LineSegment, lo: (f64, f64), hi: (f64, f64)) -> Option<LineSegment> {
    let (dx, dy) = (s.x2 - s.x1, s.y2 - s.y1);
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for (p, q) in [
        (-dx, s.x1 - lo.0),
        (dx, hi.0 - s.x1),
        (-dy, s.y1 - lo.1),
        (dy, hi.1 - s.y1),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    (t0 < t1).then(|| LineSegment::new(s.x1 + t0 * dx, s.y1 + t0 * dy, s.x1 + t1 * dx, s.y1 + t1 * dy))
}

fn point_segment_distance(p: (f64, f64), s: &LineSegment) -> f64 {
    let (dx, dy) = (s.x2 - s.x1, s.y2 - s.y1);
    let l2 = dx * dx + dy * dy;
    let t = if l2 == 0.0 {
        0.0
    } else {
        (((p.0 - s.x1) * dx + (p.1 - s.y1) * dy) / l2).clamp(0.0, 1.0)
    };
    (p.0 - s.x1 - t * dx).hypot(p.1 - s.y1 - t * dy)
}

fn segments_cross(a: &LineSegment, b: &LineSegment) -> bool {
    let orient = |px: f64, py: f64, s: &LineSegment| (s.x2 - s.x1) * (py - s.y1) - (s.y2 - s.y1) * (px - s.x1);
    let (d1, d2) = (orient(b.x1, b.y1, a), orient(b.x2, b.y2, a));
    let (d3, d4) = (orient(a.x1, a.y1, b), orient(a.x2, a.y2, b));
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

pub fn segment_distance(a: &LineSegment, b: &LineSegment) -> f64 {
    if segments_cross(a, b) {
        return 0.0;
    }
    [
        point_segment_distance((a.x1, a.y1), b),
        point_segment_distance((a.x2, a.y2), b),
        point_segment_distance((b.x1, b.y1), a),
        point_segment_distance((b.x2, b.y2), a),
    ]
    .into_iter()
    .fold(f64::INFINITY, f64::min)
}

/// Rotates a segment about its midpoint by `angle` radians.
pub fn rotate_about_midpoint(s: &LineSegment, angle: f64) -> LineSegment {
    let (mx, my) = s.midpoint();
    let (sn, cs) = angle.sin_cos();
    let rot = |x: f64, y: f64| {
        let (dx, dy) = (x - mx, y - my);
        (mx + cs * dx - sn * dy, my + sn * dx + cs * dy)
    };
    let (x1, y1) = rot(s.x1, s.y1);
    let (x2, y2) = rot(s.x2, s.y2);
    LineSegment::new(x1, y1, x2, y2)
}

/// A random stick on a corridor surface, in world coordinates (y down,
/// camera at the origin looking along +z, floor at `y = CAMERA_HEIGHT`).
fn sample_stick(family: LineFamily, rng: &mut ChaCha8Rng) -> (Vector3<f64>, Vector3<f64>) {
    let a = CORRIDOR_HALF_WIDTH;
    let floor = CAMERA_HEIGHT;
    let ceiling = CAMERA_HEIGHT - CORRIDOR_HEIGHT;
    let side = |r: &mut ChaCha8Rng| if r.random_bool(0.5) { a } else { -a };
    match family {
        LineFamily::Depth => {
            let z0 = rng.random_range(2.5..8.0);
            let len = rng.random_range(3.0..9.0);
            let start = match rng.random_range(0..4) {
                0 | 1 => Vector3::new(side(rng), rng.random_range(ceiling + 0.2..floor - 0.2), z0),
                2 => Vector3::new(rng.random_range(-a + 0.2..a - 0.2), floor, z0),
                _ => Vector3::new(rng.random_range(-a + 0.2..a - 0.2), ceiling, z0),
            };
            (start, start + len * family.direction())
        }
        LineFamily::Vertical => {
            let z = rng.random_range(3.0..12.0);
            let len = rng.random_range(0.8..2.5);
            let y0 = rng.random_range(ceiling..floor - len);
            let start = Vector3::new(side(rng), y0, z);
            (start, start + len * family.direction())
        }
        LineFamily::Lateral => {
            let z = rng.random_range(3.0..12.0);
            let len = rng.random_range(0.8..2.0 * a);
            let x0 = rng.random_range(-a..a - len);
            let y = if rng.random_bool(0.5) { floor } else { ceiling };
            let start = Vector3::new(x0, y, z);
            (start, start + len * family.direction())
        }
    }
}

/// Family for the `i`-th stick: half depth, a quarter each vertical and lateral.
fn family_of(i: usize) -> LineFamily {
    match i % 4 {
        0 | 1 => LineFamily::Depth,
        2 => LineFamily::Vertical,
        _ => LineFamily::Lateral,
    }
}

fn render_bars(dims: (usize, usize), bars: &[LineSegment]) -> GrayImage {
    let (w, h) = dims;
    let mut coverage = vec![0.0f64; w * h];
    let half = BAR_WIDTH / 2.0;
    let step = 1.0 / SUBSAMPLES as f64;
    let per = (SUBSAMPLES * SUBSAMPLES) as f64;
    for s in bars {
        let len = s.length();
        let (ux, uy) = ((s.x2 - s.x1) / len, (s.y2 - s.y1) / len);
        let x0 = (s.x1.min(s.x2) - half - 1.0).floor().max(0.0) as usize;
        let x1 = ((s.x1.max(s.x2) + half + 1.0).ceil() as usize).min(w);
        let y0 = (s.y1.min(s.y2) - half - 1.0).floor().max(0.0) as usize;
        let y1 = ((s.y1.max(s.y2) + half + 1.0).ceil() as usize).min(h);
        for py in y0..y1 {
            for px in x0..x1 {
                let mut hits = 0usize;
                for sy in 0..SUBSAMPLES {
                    for sx in 0..SUBSAMPLES {
                        let x = px as f64 + (sx as f64 + 0.5) * step - s.x1;
                        let y = py as f64 + (sy as f64 + 0.5) * step - s.y1;
                        let along = x * ux + y * uy;
                        let across = (-x * uy + y * ux).abs();
                        if (0.0..=len).contains(&along) && across <= half {
                            hits += 1;
                        }
                    }
                }
                let c = &mut coverage[py * w + px];
                *c = c.max(hits as f64 / per);
            }
        }
    }
    let data = coverage.iter().map(|c| 1.0 - BAR_DARKNESS * c).collect();
    GrayImage::new(w, h, data).expect("valid raster")
}

/// Object rectangle plus a rectangular shadow anchored at the object's
/// base-band centroid, or `None` if it does not fit.
fn place_object(
    dims: (usize, usize),
    azimuth: f64,
    rng: &mut ChaCha8Rng,
) -> Option<(BinaryMask, BinaryMask, TruthPair, [f64; 4])> {
    let (w, h) = dims;
    let ow = rng.random_range(8..17usize);
    let oh = rng.random_range(16..31usize);
    let length = 1.5 * oh as f64;
    let (dx, dy) = (azimuth.cos(), azimuth.sin());
    let x0 = rng.random_range(0..w.saturating_sub(ow).max(1));
    let bottom = rng.random_range(h / 2..h);
    if bottom < oh {
        return None;
    }
    let top = bottom - oh;
    let mut object = BinaryMask::empty(w, h).ok()?;
    for y in top..bottom {
        for x in x0..x0 + ow {
            object.set(x, y, true);
        }
    }
    // same band rule as the shadow cue: lowest 10% of rows, at least one
    let band = ((oh as f64) * 0.1).ceil().max(1.0) as usize;
    let anchor = (x0 as f64 + ow as f64 / 2.0, bottom as f64 - band as f64 / 2.0);
    // shadow: points anchor + u·(−dy, dx) + t·(dx, dy), |u| ≤ ow/2, t ∈ [0, length]
    let hw = ow as f64 / 2.0;
    let corners = [
        (anchor.0 + hw * dy, anchor.1 - hw * dx),
        (anchor.0 - hw * dy, anchor.1 + hw * dx),
        (anchor.0 + hw * dy + length * dx, anchor.1 - hw * dx + length * dy),
        (anchor.0 - hw * dy + length * dx, anchor.1 + hw * dx + length * dy),
    ];
    let (mut bx0, mut by0, mut bx1, mut by1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (x, y) in corners {
        bx0 = bx0.min(x);
        by0 = by0.min(y);
        bx1 = bx1.max(x);
        by1 = by1.max(y);
    }
    if bx0 < 0.0 || by0 < 0.0 || bx1 > w as f64 || by1 > h as f64 {
        return None;
    }
    let mut shadow = BinaryMask::empty(w, h).ok()?;
    for y in by0.floor() as usize..(by1.ceil() as usize).min(h) {
        for x in bx0.floor() as usize..(bx1.ceil() as usize).min(w) {
            let (px, py) = (x as f64 + 0.5 - anchor.0, y as f64 + 0.5 - anchor.1);
            let t = px * dx + py * dy;
            let u = -px * dy + py * dx;
            if (0.0..=length).contains(&t) && u.abs() <= hw {
                shadow.set(x, y, true);
            }
        }
    }
    if shadow.is_empty() {
        return None;
    }
    let bbox = [bx0.min(x0 as f64), by0.min(top as f64), bx1.max((x0 + ow) as f64), by1.max(bottom as f64)];
    Some((
        object,
        shadow,
        TruthPair {
            azimuth,
            anchor,
            shadow_length: length,
            object_height: oh,
        },
        bbox,
    ))
}

fn boxes_overlap(a: &[f64; 4], b: &[f64; 4], gap: f64) -> bool {
    a[0] < b[2] + gap && b[0] < a[2] + gap && a[1] < b[3] + gap && b[1] < a[3] + gap
}

/// Renders a scene. Deterministic in `spec.seed`.
pub fn render(spec: &SceneSpec) -> Result<Rendered> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);
    let (w, h) = (spec.image_dims.0 as f64, spec.image_dims.1 as f64);
    let rot = spec.world_to_camera();
    let cam = &spec.camera;

    let mut truth_vps: Vec<VanishingPoint> = LineFamily::ALL
        .iter()
        .map(|f| {
            let d = rot * f.direction();
            let (cx, cy) = cam.principal_point;
            let hvec = Vector3::new(cam.focal * d.x + cx * d.z, cam.focal * d.y + cy * d.z, d.z);
            let hvec = hvec / hvec.norm();
            VanishingPoint {
                h: [hvec.x, hvec.y, hvec.z],
                inlier_ids: vec![],
                support: 0,
            }
        })
        .collect();

    let mut segments: Vec<TruthSegment> = Vec::new();
    let mut skipped = 0;
    let lo = (BORDER, BORDER);
    let hi = (w - BORDER, h - BORDER);
    let mut attempts = 0;
    while segments.len() < spec.n_lines && attempts < 60 * spec.n_lines {
        let family = family_of(segments.len());
        attempts += 1;
        let (a, b) = sample_stick(family, &mut rng);
        let (pa, pb) = (rot * a, rot * b);
        if pa.z < 0.5 || pb.z < 0.5 {
            skipped += 1;
            continue;
        }
        let (x1, y1) = cam.project(&pa);
        let (x2, y2) = cam.project(&pb);
        let Some(ideal) = clip(LineSegment::new(x1, y1, x2, y2), lo, hi) else {
            skipped += 1;
            continue;
        };
        let deflection = if spec.epsilon_vp > 0.0 {
            if rng.random_bool(0.5) {
                spec.epsilon_vp
            } else {
                -spec.epsilon_vp
            }
        } else {
            0.0
        };
        let Some(seg) = clip(rotate_about_midpoint(&ideal, deflection), lo, hi) else {
            continue;
        };
        if seg.length() < MIN_BAR_LENGTH {
            continue;
        }
        if segments.iter().any(|t| segment_distance(&t.segment, &seg) < MIN_BAR_GAP) {
            continue;
        }
        let id = segments.len();
        truth_vps[LineFamily::ALL.iter().position(|f| *f == family).expect("family")]
            .inlier_ids
            .push(id);
        segments.push(TruthSegment {
            segment: seg,
            family,
            deflection,
        });
    }
    for v in &mut truth_vps {
        v.support = v.inlier_ids.len();
    }
    let image = render_bars(spec.image_dims, &segments.iter().map(|t| t.segment).collect::<Vec<_>>());

    let jitter = Normal::new(0.0, spec.epsilon_shadow.max(f64::MIN_POSITIVE)).expect("positive sigma");
    let mut mask_pairs = Vec::new();
    let mut pairs = Vec::new();
    let mut boxes: Vec<[f64; 4]> = Vec::new();
    let mut attempts = 0;
    while pairs.len() < spec.n_shadow_pairs && attempts < 200 {
        attempts += 1;
        let az = if spec.epsilon_shadow > 0.0 {
            spec.light_azimuth + jitter.sample(&mut rng)
        } else {
            spec.light_azimuth
        };
        let Some((o, s, tp, bbox)) = place_object(spec.image_dims, az, &mut rng) else {
            continue;
        };
        if boxes.iter().any(|b| boxes_overlap(b, &bbox, 2.0)) {
            continue;
        }
        boxes.push(bbox);
        mask_pairs.push((o, s));
        pairs.push(tp);
    }

    Ok(Rendered {
        image,
        mask_pairs,
        truth: SynthTruth {
            true_vps: truth_vps,
            true_segments: segments,
            true_pairs: pairs,
            skipped_lines: skipped,
            label: spec.label(),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusOptions {
    pub image_dims: (usize, usize),
    /// Synthesize prequalifier scores.
    pub scores: bool,
    /// Lower end of the score offset `u ~ U[min_offset, 0.45]`.
    pub min_offset: f64,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        Self {
            image_dims: (256, 256),
            scores: true,
            min_offset: 0.0,
        }
    }
}

/// One generated corpus member.
#[derive(Debug, Clone)]
pub struct CorpusItem {
    pub id: String,
    pub spec: SceneSpec,
    pub rendered: Rendered,
    pub prequalifier_score: Option<f64>,
}

/// Noisy-oracle prequalifier score `clamp(0.5 ± u, 0, 1)`, `u ~ U[min_offset, 0.45]`.
fn synth_score(seed: u64, real: bool, min_offset: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let u = if min_offset >= 0.45 {
        0.45
    } else {
        rng.random_range(min_offset..0.45)
    };
    let sign = if real { 1.0 } else { -1.0 };
    (0.5 + sign * u).clamp(0.0, 1.0)
}

/// Renders `n_real` clean and `n_gen` perturbed scenes; image `i` uses seed
/// `seed ^ i`, reals first.
pub fn generate(n_real: usize, n_gen: usize, epsilons: (f64, f64), seed: u64, opts: &CorpusOptions) -> Result<Vec<CorpusItem>> {
    if n_real + n_gen == 0 {
        return Err(SynthError::EmptyCorpus);
    }
    (0..n_real + n_gen)
        .map(|i| {
            let real = i < n_real;
            let s = seed ^ i as u64;
            let eps = if real { (0.0, 0.0) } else { epsilons };
            let spec = SceneSpec::random(s, opts.image_dims, eps.0, eps.1);
            let rendered = render(&spec)?;
            let id = if real {
                format!("real_{i:05}")
            } else {
                format!("gen_{:05}", i - n_real)
            };
            Ok(CorpusItem {
                id,
                prequalifier_score: opts.scores.then(|| synth_score(s, real, opts.min_offset)),
                spec,
                rendered,
            })
        })
        .collect()
}

/// Writes images, masks and `manifest.txt` under `out_dir`; returns the manifest path.
pub fn make_corpus(
    n_real: usize,
    n_gen: usize,
    epsilons: (f64, f64),
    seed: u64,
    out_dir: &Path,
    opts: &CorpusOptions,
) -> Result<PathBuf> {
    let items = generate(n_real, n_gen, epsilons, seed, opts)?;
    write_corpus(&items, out_dir)
}

pub fn write_corpus(items: &[CorpusItem], out_dir: &Path) -> Result<PathBuf> {
    let io = |p: &Path| {
        let path = p.to_path_buf();
        move |source| SynthError::Io { path, source }
    };
    for sub in ["images", "masks"] {
        let d = out_dir.join(sub);
        fs::create_dir_all(&d).map_err(io(&d))?;
    }
    let mut entries = Vec::with_capacity(items.len());
    for item in items {
        let image_rel = PathBuf::from("images").join(format!("{}.pgm", item.id));
        save_gray(&out_dir.join(&image_rel), &item.rendered.image)?;
        let mut mask_pairs = Vec::new();
        for (k, (o, s)) in item.rendered.mask_pairs.iter().enumerate() {
            let object = PathBuf::from("masks").join(format!("{}_obj{k}.pgm", item.id));
            let shadow = PathBuf::from("masks").join(format!("{}_sh{k}.pgm", item.id));
            save_mask(&out_dir.join(&object), o)?;
            save_mask(&out_dir.join(&shadow), s)?;
            mask_pairs.push(MaskPairPaths { object, shadow });
        }
        entries.push(ManifestEntry {
            id: item.id.clone(),
            image_path: image_rel,
            label: item.rendered.truth.label,
            prequalifier_score: item.prequalifier_score,
            mask_pairs,
        });
    }
    let path = out_dir.join("manifest.txt");
    write_manifest(&path, &entries)?;
    Ok(path)
}
