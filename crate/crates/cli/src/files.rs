//! Text files exchanged between subcommands.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use geoforensics_core::corpus::fmt_f64;
use geoforensics_core::eval::{SplitAssignment, SplitCategory};
use geoforensics_core::lsd::LineSegment;
use geoforensics_core::vpfield::PerspectiveFieldGrid;

pub const FEATURES_FILE: &str = "features.csv";
pub const DIMS_FILE: &str = "dims.csv";
pub const SEGMENTS_DIR: &str = "segments";
pub const FIELDS_DIR: &str = "fields";

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn segments_path(features_dir: &Path, id: &str) -> PathBuf {
    features_dir.join(SEGMENTS_DIR).join(format!("{id}.txt"))
}

pub fn field_path(features_dir: &Path, id: &str) -> PathBuf {
    features_dir.join(FIELDS_DIR).join(format!("{id}.txt"))
}

pub fn dims_text(rows: &[(String, (usize, usize))]) -> String {
    let mut s = String::from("id,width,height\n");
    for (id, (w, h)) in rows {
        let _ = writeln!(s, "{id},{w},{h}");
    }
    s
}

/// Image dimensions per id from `dims.csv`.
pub fn read_dims(path: &Path) -> Result<HashMap<String, (usize, usize)>> {
    let text = read_text(path)?;
    let mut out = HashMap::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || anyhow!("{}: line {}: expected `id,width,height`", path.display(), n + 1);
        let [id, w, h] = f[..] else { return Err(bad()) };
        out.insert(id.to_string(), (w.parse().map_err(|_| bad())?, h.parse().map_err(|_| bad())?));
    }
    Ok(out)
}

pub fn read_segments(path: &Path) -> Result<Vec<LineSegment>> {
    let text = read_text(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| LineSegment::parse_line(l).ok_or_else(|| anyhow!("{}: line {}: malformed segment", path.display(), n + 1)))
        .collect()
}

pub fn read_field(path: &Path) -> Result<PerspectiveFieldGrid> {
    PerspectiveFieldGrid::parse_text(&read_text(path)?).ok_or_else(|| anyhow!("{}: malformed field", path.display()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub id: String,
    pub score: f64,
    pub logit: f64,
}

pub fn scores_text(rows: &[ScoreRow]) -> String {
    let mut s = String::from("id,score,logit\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{}", r.id, fmt_f64(r.score), fmt_f64(r.logit));
    }
    s
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRow>> {
    let text = read_text(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "id,score,logit")) => {}
        _ => bail!("{}: expected header `id,score,logit`", path.display()),
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(n, l)| {
            let bad = || anyhow!("{}: line {}: malformed score row", path.display(), n + 1);
            let f: Vec<&str> = l.split(',').collect();
            let [id, score, logit] = f[..] else { return Err(bad()) };
            let score: f64 = score.parse().map_err(|_| bad())?;
            if !(0.0..=1.0).contains(&score) {
                return Err(bad());
            }
            Ok(ScoreRow {
                id: id.to_string(),
                score,
                logit: logit.parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

pub fn splits_text(assignments: &[SplitAssignment]) -> String {
    let mut s = String::from("id,category,wrong_side\n");
    for a in assignments {
        let _ = writeln!(s, "{},{},{}", a.id, a.category.as_str(), u8::from(a.wrong_side));
    }
    s
}

pub fn read_splits(path: &Path) -> Result<Vec<SplitAssignment>> {
    let text = read_text(path)?;
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.is_empty())
        .map(|(n, l)| {
            let bad = || anyhow!("{}: line {}: malformed split row", path.display(), n + 1);
            let f: Vec<&str> = l.split(',').collect();
            let [id, cat, wrong] = f[..] else { return Err(bad()) };
            Ok(SplitAssignment {
                id: id.to_string(),
                category: SplitCategory::parse(cat).ok_or_else(bad)?,
                wrong_side: match wrong {
                    "0" => false,
                    "1" => true,
                    _ => return Err(bad()),
                },
            })
        })
        .collect()
}
