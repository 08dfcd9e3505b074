//! Geometric forensics for detecting generated images.
//!
//! Line segments, vanishing points, perspective fields and shadow geometry are
//! extracted from grayscale images, turned into per-image cue vectors, and
//! scored by small trainable detectors.

pub mod corpus;
pub mod cues;
pub mod learn;
pub mod lsd;
pub mod shadowgeom;
pub mod vpfield;
pub mod eval;
pub mod synth;
pub mod pipeline;
