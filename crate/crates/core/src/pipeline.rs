//! Per-image cue extraction: segments, vanishing points, camera, perspective
//! field, shadow verdict and the assembled cue vector.

use crate::corpus::{BinaryMask, GrayImage};
use crate::cues::{assemble, field_stats, line_stats, vp_stats, CueError, CueVector};
use crate::lsd::{detect_segments, LineSegment, LsdParams};
use crate::shadowgeom::{derive_pair, feasibility, shadow_features, ShadowPair, ShadowVerdict};
use crate::vpfield::{
    camera_from_vps, estimate_vps, perspective_field, vp_consistency, CameraHypothesis, PerspectiveFieldGrid,
    VanishingPoint, VpConsistency, VpParams,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractParams {
    pub lsd: LsdParams,
    pub vp: VpParams,
    pub grid: (usize, usize),
    /// Half width of each shadow's tolerance wedge, radians.
    pub shadow_half_width: f64,
}

impl Default for ExtractParams {
    fn default() -> Self {
        Self {
            lsd: LsdParams::default(),
            vp: VpParams::default(),
            grid: (8, 8),
            shadow_half_width: 10f64.to_radians(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub segments: Vec<LineSegment>,
    pub vps: Vec<VanishingPoint>,
    pub consistency: Option<VpConsistency>,
    pub camera: CameraHypothesis,
    pub field: PerspectiveFieldGrid,
    pub pairs: Vec<ShadowPair>,
    pub verdict: Option<ShadowVerdict>,
    /// Mask pairs rejected by the shadow cue (empty or degenerate).
    pub rejected_pairs: usize,
    pub cues: CueVector,
}

/// Runs every cue on one image. Missing cues are encoded by presence flags.
pub fn extract_image(
    id: &str,
    image: &GrayImage,
    mask_pairs: &[(BinaryMask, BinaryMask)],
    params: &ExtractParams,
) -> Result<Extraction, CueError> {
    let dims = (image.width(), image.height());
    let segments = detect_segments(image, &params.lsd);
    let vps = estimate_vps(&segments, &params.vp).unwrap_or_default();
    let consistency = vp_consistency(&segments, &vps, params.vp.inlier_tol_deg).ok();
    let camera = camera_from_vps(&vps, dims);
    let field = perspective_field(&camera, dims, params.grid);

    let mut pairs = Vec::new();
    let mut rejected_pairs = 0;
    for (o, s) in mask_pairs {
        match derive_pair(o, s) {
            Ok(p) => pairs.push(p),
            Err(_) => rejected_pairs += 1,
        }
    }
    let verdict = if pairs.is_empty() {
        None
    } else {
        feasibility(&pairs, params.shadow_half_width).ok()
    };

    let cues = assemble(
        id,
        &[
            line_stats(&segments),
            field_stats(&field),
            vp_stats(consistency.as_ref()),
            shadow_features(verdict.as_ref()),
        ],
    )?;
    Ok(Extraction {
        segments,
        vps,
        consistency,
        camera,
        field,
        pairs,
        verdict,
        rejected_pairs,
        cues,
    })
}
