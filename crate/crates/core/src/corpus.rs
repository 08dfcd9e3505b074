//! Dataset manifests, PGM rasters, binary masks and the feature cache.
//!
//! Manifest grammar (one record per line, whitespace-separated `key=value`
//! tokens; blank lines and lines starting with `#` are ignored):
//!
//! ```text
//! id=<string> image=<path> label=real|generated [score=<f64 in [0,1]>] [mask_pair=<obj>:<shadow>]...
//! ```
//!
//! Paths are resolved relative to the directory containing the manifest.
//! Values cannot contain whitespace. `score` is the prequalifier's probability
//! that the entry is real.
//!
//! The feature cache is comma-separated text: an optional
//! `# schema_version=<n>` line, then a header row whose first cell is `id`,
//! then one row per image. Values are written with 17 significant digits so a
//! round trip is bit-exact.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use thiserror::Error;

/// Current feature-cache schema version.
pub const CACHE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest line {line}: {msg}")]
    Manifest { line: usize, msg: String },
    #[error("duplicate id `{0}` in manifest")]
    DuplicateId(String),
    #[error("entry `{id}`: prequalifier score {score} outside [0,1]")]
    ScoreOutOfRange { id: String, score: f64 },
    #[error("unsupported image format (magic `{0}`); only binary P5 PGM is accepted")]
    UnsupportedFormat(String),
    #[error("malformed PGM header: {0}")]
    BadHeader(String),
    #[error("truncated PGM payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("invalid raster: {0}")]
    InvalidRaster(String),
    #[error("entry `{id}`: mask {path} is {mw}x{mh}, image is {iw}x{ih}")]
    DimensionMismatch {
        id: String,
        path: PathBuf,
        mw: usize,
        mh: usize,
        iw: usize,
        ih: usize,
    },
    #[error("feature cache line {line}: {msg}")]
    Cache { line: usize, msg: String },
    #[error("unknown feature cache schema version {0}")]
    SchemaVersion(u32),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Row-major luminance raster with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(CorpusError::InvalidRaster("zero dimension".into()));
        }
        if data.len() != width * height {
            return Err(CorpusError::InvalidRaster(format!(
                "data length {} != {}x{}",
                data.len(),
                width,
                height
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(CorpusError::InvalidRaster(format!("value {v} outside [0,1]")));
        }
        Ok(Self { width, height, data })
    }

    /// Constant image.
    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Quantizes to 8 bits (round to nearest).
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    /// Rotates the raster 90° counter-clockwise as displayed (x right, y down).
    ///
    /// A point at continuous coordinates `(x, y)` moves to `(y, W - x)`.
    pub fn rotate90(&self) -> GrayImage {
        let (w, h) = (self.width, self.height);
        let mut data = vec![0.0; w * h];
        // new image is h wide and w tall
        for y in 0..h {
            for x in 0..w {
                let nx = y;
                let ny = w - 1 - x;
                data[ny * h + nx] = self.data[y * w + x];
            }
        }
        GrayImage {
            width: h,
            height: w,
            data,
        }
    }
}

/// Row-major boolean raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(CorpusError::InvalidRaster("zero dimension".into()));
        }
        if bits.len() != width * height {
            return Err(CorpusError::InvalidRaster(format!(
                "mask length {} != {}x{}",
                bits.len(),
                width,
                height
            )));
        }
        Ok(Self { width, height, bits })
    }

    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![false; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    pub fn same_dims(&self, width: usize, height: usize) -> bool {
        self.width == width && self.height == height
    }

    /// Iterates `(x, y)` of set pixels in raster order.
    pub fn set_pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(move |(i, _)| (i % w, i / w))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.bits.iter().map(|b| if *b { 255 } else { 0 }).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Real,
    Generated,
}

impl Label {
    pub fn is_real(self) -> bool {
        matches!(self, Label::Real)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Real => "real",
            Label::Generated => "generated",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskPairPaths {
    pub object: PathBuf,
    pub shadow: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub image_path: PathBuf,
    pub label: Label,
    /// Prequalifier probability that the entry is real.
    pub prequalifier_score: Option<f64>,
    pub mask_pairs: Vec<MaskPairPaths>,
}

impl ManifestEntry {
    /// Serializes to one manifest line (no trailing newline).
    pub fn to_line(&self) -> String {
        let mut s = format!(
            "id={} image={} label={}",
            self.id,
            self.image_path.display(),
            self.label.as_str()
        );
        if let Some(score) = self.prequalifier_score {
            let _ = write!(s, " score={score}");
        }
        for p in &self.mask_pairs {
            let _ = write!(s, " mask_pair={}:{}", p.object.display(), p.shadow.display());
        }
        s
    }
}

/// A parsed manifest with its base directory for path resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub base_dir: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn resolve(&self, rel: &Path) -> PathBuf {
        if rel.is_absolute() {
            rel.to_path_buf()
        } else {
            self.base_dir.join(rel)
        }
    }
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let entries = parse_manifest(&text)?;
    let base_dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    Ok(Manifest { base_dir, entries })
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let entry = parse_manifest_line(line, line_no)?;
        if let Some(score) = entry.prequalifier_score {
            if !(0.0..=1.0).contains(&score) {
                return Err(CorpusError::ScoreOutOfRange {
                    id: entry.id,
                    score,
                });
            }
        }
        if !seen.insert(entry.id.clone()) {
            return Err(CorpusError::DuplicateId(entry.id));
        }
        entries.push(entry);
    }
    Ok(entries)
}

fn parse_manifest_line(line: &str, line_no: usize) -> Result<ManifestEntry> {
    let bad = |msg: String| CorpusError::Manifest { line: line_no, msg };
    let mut id = None;
    let mut image = None;
    let mut label = None;
    let mut score = None;
    let mut mask_pairs = Vec::new();
    for tok in line.split_whitespace() {
        let (key, value) = tok
            .split_once('=')
            .ok_or_else(|| bad(format!("token `{tok}` is not key=value")))?;
        if value.is_empty() {
            return Err(bad(format!("empty value for `{key}`")));
        }
        match key {
            "id" => set_once(&mut id, value.to_string(), key, line_no)?,
            "image" => set_once(&mut image, PathBuf::from(value), key, line_no)?,
            "label" => {
                let l = match value {
                    "real" => Label::Real,
                    "generated" => Label::Generated,
                    other => return Err(bad(format!("unknown label `{other}`"))),
                };
                set_once(&mut label, l, key, line_no)?;
            }
            "score" => {
                let s: f64 = value
                    .parse()
                    .map_err(|_| bad(format!("score `{value}` is not a number")))?;
                if !s.is_finite() {
                    return Err(bad(format!("score `{value}` is not finite")));
                }
                set_once(&mut score, s, key, line_no)?;
            }
            "mask_pair" => {
                let (o, s) = value
                    .split_once(':')
                    .ok_or_else(|| bad(format!("mask_pair `{value}` must be obj:shadow")))?;
                if o.is_empty() || s.is_empty() {
                    return Err(bad(format!("mask_pair `{value}` has an empty path")));
                }
                mask_pairs.push(MaskPairPaths {
                    object: PathBuf::from(o),
                    shadow: PathBuf::from(s),
                });
            }
            other => return Err(bad(format!("unknown key `{other}`"))),
        }
    }
    Ok(ManifestEntry {
        id: id.ok_or_else(|| bad("missing `id`".into()))?,
        image_path: image.ok_or_else(|| bad("missing `image`".into()))?,
        label: label.ok_or_else(|| bad("missing `label`".into()))?,
        prequalifier_score: score,
        mask_pairs,
    })
}

fn set_once<T>(slot: &mut Option<T>, value: T, key: &str, line: usize) -> Result<()> {
    if slot.is_some() {
        return Err(CorpusError::Manifest {
            line,
            msg: format!("repeated key `{key}`"),
        });
    }
    *slot = Some(value);
    Ok(())
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut out = String::new();
    for e in entries {
        out.push_str(&e.to_line());
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

/// Parses a binary P5 PGM with maxval 255. Returns `(width, height, bytes)`.
pub fn parse_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    if bytes.len() < 2 {
        return Err(CorpusError::BadHeader("file too short".into()));
    }
    let magic = &bytes[..2];
    if magic != b"P5" {
        return Err(CorpusError::UnsupportedFormat(
            String::from_utf8_lossy(magic).into_owned(),
        ));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for (i, field) in fields.iter_mut().enumerate() {
        // whitespace and comments before each header token
        let start_ws = pos;
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(b) = bytes.get(pos) {
                        pos += 1;
                        if *b == b'\n' {
                            break;
                        }
                    }
                }
                _ => break,
            }
        }
        if pos == start_ws {
            return Err(CorpusError::BadHeader(format!(
                "missing whitespace before header field {}",
                i + 1
            )));
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(CorpusError::BadHeader(format!("header field {} is not a number", i + 1)));
        }
        let s = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = s
            .parse()
            .map_err(|_| CorpusError::BadHeader(format!("header field `{s}` overflows")))?;
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(CorpusError::BadHeader("zero dimension".into()));
    }
    if maxval != 255 {
        return Err(CorpusError::BadHeader(format!("maxval {maxval} (only 255 supported)")));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(CorpusError::BadHeader("missing whitespace after maxval".into())),
    }
    let expected = width
        .checked_mul(height)
        .ok_or_else(|| CorpusError::BadHeader("dimensions overflow".into()))?;
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(CorpusError::Truncated {
            expected,
            found: payload.len(),
        });
    }
    Ok((width, height, payload[..expected].to_vec()))
}

pub fn encode_pgm(width: usize, height: usize, bytes: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(bytes);
    out
}

pub fn decode_gray(bytes: &[u8]) -> Result<GrayImage> {
    let (w, h, px) = parse_pgm(bytes)?;
    GrayImage::new(w, h, px.iter().map(|&b| f64::from(b) / 255.0).collect())
}

pub fn load_gray(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_gray(&bytes)
}

pub fn save_gray(path: &Path, img: &GrayImage) -> Result<()> {
    fs::write(path, encode_pgm(img.width, img.height, &img.to_bytes())).map_err(io_err(path))
}

/// A mask read from disk; `empty_warning` is set when no pixel is set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadedMask {
    pub mask: BinaryMask,
    pub empty_warning: bool,
}

pub fn decode_mask(bytes: &[u8]) -> Result<LoadedMask> {
    let (w, h, px) = parse_pgm(bytes)?;
    let mask = BinaryMask::new(w, h, px.iter().map(|&b| b > 127).collect())?;
    let empty_warning = mask.is_empty();
    Ok(LoadedMask { mask, empty_warning })
}

pub fn load_mask(path: &Path) -> Result<LoadedMask> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_mask(&bytes)
}

pub fn save_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    fs::write(path, encode_pgm(mask.width, mask.height, &mask.to_bytes())).map_err(io_err(path))
}

/// The image of a manifest entry and its mask pairs, dimension-checked.
#[derive(Debug, Clone)]
pub struct EntryRasters {
    pub image: GrayImage,
    pub mask_pairs: Vec<(BinaryMask, BinaryMask)>,
    /// Mask pairs dropped because one of the masks was empty.
    pub empty_masks: usize,
}

pub fn load_entry(manifest: &Manifest, entry: &ManifestEntry) -> Result<EntryRasters> {
    let image = load_gray(&manifest.resolve(&entry.image_path))?;
    let (iw, ih) = (image.width(), image.height());
    let mut mask_pairs = Vec::with_capacity(entry.mask_pairs.len());
    let mut empty_masks = 0;
    for pair in &entry.mask_pairs {
        let mut loaded = Vec::with_capacity(2);
        for rel in [&pair.object, &pair.shadow] {
            let path = manifest.resolve(rel);
            let m = load_mask(&path)?;
            if !m.mask.same_dims(iw, ih) {
                return Err(CorpusError::DimensionMismatch {
                    id: entry.id.clone(),
                    path,
                    mw: m.mask.width(),
                    mh: m.mask.height(),
                    iw,
                    ih,
                });
            }
            loaded.push(m);
        }
        let shadow = loaded.pop().expect("two masks");
        let object = loaded.pop().expect("two masks");
        if object.empty_warning || shadow.empty_warning {
            empty_masks += 1;
            continue;
        }
        mask_pairs.push((object.mask, shadow.mask));
    }
    Ok(EntryRasters {
        image,
        mask_pairs,
        empty_masks,
    })
}

/// Numeric features per image id, in a fixed column order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCache {
    pub schema_version: u32,
    pub columns: Vec<String>,
    pub rows: IndexMap<String, Vec<f64>>,
}

impl FeatureCache {
    pub fn new(columns: Vec<String>) -> Self {
        Self {
            schema_version: CACHE_SCHEMA_VERSION,
            columns,
            rows: IndexMap::new(),
        }
    }

    pub fn insert(&mut self, id: impl Into<String>, values: Vec<f64>) -> Result<()> {
        let id = id.into();
        if values.len() != self.columns.len() {
            return Err(CorpusError::Cache {
                line: 0,
                msg: format!(
                    "row `{id}` has {} values for {} columns",
                    values.len(),
                    self.columns.len()
                ),
            });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(CorpusError::Cache {
                line: 0,
                msg: format!("row `{id}` has non-finite value {v}"),
            });
        }
        self.rows.insert(id, values);
        Ok(())
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut out = format!("# schema_version={}\nid", self.schema_version);
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (i, (id, row)) in self.rows.iter().enumerate() {
            if row.len() != self.columns.len() {
                return Err(CorpusError::Cache {
                    line: i + 3,
                    msg: format!(
                        "row `{id}` has {} values for {} columns",
                        row.len(),
                        self.columns.len()
                    ),
                });
            }
            out.push_str(id);
            for v in row {
                let _ = write!(out, ",{}", fmt_f64(*v));
            }
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().peekable();
        let mut schema_version = CACHE_SCHEMA_VERSION;
        if let Some((_, first)) = lines.peek() {
            if let Some(rest) = first.strip_prefix("# schema_version=") {
                schema_version = rest.trim().parse().map_err(|_| CorpusError::Cache {
                    line: 1,
                    msg: format!("bad schema version `{rest}`"),
                })?;
                lines.next();
            }
        }
        if schema_version != CACHE_SCHEMA_VERSION {
            return Err(CorpusError::SchemaVersion(schema_version));
        }
        let (hline, header) = lines.next().ok_or(CorpusError::Cache {
            line: 1,
            msg: "missing header row".into(),
        })?;
        let mut cells = header.split(',');
        if cells.next() != Some("id") {
            return Err(CorpusError::Cache {
                line: hline + 1,
                msg: "header must start with `id`".into(),
            });
        }
        let columns: Vec<String> = cells.map(str::to_string).collect();
        let mut cache = FeatureCache {
            schema_version,
            columns,
            rows: IndexMap::new(),
        };
        for (idx, line) in lines {
            if line.is_empty() {
                continue;
            }
            let bad = |msg: String| CorpusError::Cache { line: idx + 1, msg };
            let mut cells = line.split(',');
            let id = cells.next().unwrap_or_default().to_string();
            let values = cells
                .map(|c| c.parse::<f64>().map_err(|_| bad(format!("bad number `{c}`"))))
                .collect::<Result<Vec<f64>>>()?;
            if values.len() != cache.columns.len() {
                return Err(bad(format!(
                    "row `{id}` has {} values for {} columns",
                    values.len(),
                    cache.columns.len()
                )));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(bad(format!("row `{id}` has a non-finite value")));
            }
            if cache.rows.insert(id.clone(), values).is_some() {
                return Err(bad(format!("duplicate row id `{id}`")));
            }
        }
        Ok(cache)
    }
}

/// 17 significant digits: exact round trip for any finite f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_cache(path: &Path, cache: &FeatureCache) -> Result<()> {
    fs::write(path, cache.to_csv()?).map_err(io_err(path))
}

pub fn read_cache(path: &Path) -> Result<FeatureCache> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    FeatureCache::from_csv(&text)
}
