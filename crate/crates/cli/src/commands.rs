use std::collections::{HashMap, HashSet};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use geoforensics_core::corpus::{
    fmt_f64, load_entry, load_manifest, read_cache, write_cache, FeatureCache, Manifest, ManifestEntry,
};
use geoforensics_core::cues::{schema, BASELINE_FEATURES, FIELD_FEATURES, LINE_FEATURES, SHADOW_LEARNER_FEATURES, VP_FEATURES};
use geoforensics_core::eval::{
    agreement, holdout_split, roc, split, split_members, summary_text, write_report, ReportOptions, SplitCategory,
    SplitCurves,
};
use geoforensics_core::learn::{
    encode_segments, flatten_field, forward_grid, load_model, saliency_grid, saliency_set, save_model, train_grid,
    train_logreg, train_set, GridModel, LogRegParams, Model, Prediction, SetNetConfig, SetNetModel, SgdParams,
};
use geoforensics_core::lsd::LsdParams;
use geoforensics_core::pipeline::{extract_image, ExtractParams, Extraction};
use geoforensics_core::shadowgeom::{dump_text, SHADOW_FEATURES};
use geoforensics_core::synth::{make_corpus, CorpusOptions};
use geoforensics_core::vpfield::VpParams;

use crate::files::{self, ScoreRow};
use crate::provenance::{self, Provenance};
use crate::{
    usage, Cli, CliResult, Command, Cue, EvalArgs, ExtractArgs, Learner, PredictArgs, SaliencyArgs, SplitArgs,
    SynthArgs, TrainArgs,
};

pub fn dispatch(cli: &Cli, argv: &[OsString]) -> CliResult<()> {
    let seed = cli.seed;
    match &cli.command {
        Command::Synth(a) => synth(a, seed, argv),
        Command::Extract(a) => extract(a, seed, argv),
        Command::Train(a) => train(a, seed, argv),
        Command::Predict(a) => predict(a, seed, argv),
        Command::Split(a) => split_cmd(a, seed, argv),
        Command::Eval(a) => eval_cmd(a, seed, argv),
        Command::Saliency(a) => saliency(a, seed, argv),
    }
}

fn open_manifest(path: &Path) -> CliResult<Manifest> {
    Ok(load_manifest(path).with_context(|| format!("loading manifest {}", path.display()))?)
}

// ---------------------------------------------------------------------------

fn synth(a: &SynthArgs, seed: u64, argv: &[OsString]) -> CliResult<()> {
    if a.n_real == 0 || a.n_gen == 0 {
        return usage("--n-real and --n-gen must be positive");
    }
    if !(a.eps_vp >= 0.0 && a.eps_shadow >= 0.0) {
        return usage("--eps-vp and --eps-shadow must be nonnegative");
    }
    if a.width < 32 || a.height < 32 {
        return usage("--width and --height must be at least 32");
    }
    let opts = CorpusOptions {
        image_dims: (a.width, a.height),
        scores: !a.no_scores,
        ..CorpusOptions::default()
    };
    let manifest = make_corpus(a.n_real, a.n_gen, (a.eps_vp, a.eps_shadow), seed, &a.out, &opts)
        .with_context(|| format!("writing corpus to {}", a.out.display()))?;
    Provenance::default().write(&provenance::path_for(&a.out, true), "synth", seed, argv)?;
    println!("{}", manifest.display());
    Ok(())
}

// ---------------------------------------------------------------------------

fn cue_columns(cue: Cue) -> Vec<&'static str> {
    match cue {
        Cue::All => schema(),
        Cue::Lines => LINE_FEATURES.to_vec(),
        Cue::Field => FIELD_FEATURES.iter().chain(&VP_FEATURES).copied().collect(),
        Cue::Shadow => SHADOW_FEATURES.to_vec(),
    }
}

struct Extracted {
    id: String,
    dims: (usize, usize),
    ext: Extraction,
    digests: Vec<(std::path::PathBuf, String)>,
}

fn extract_one(manifest: &Manifest, entry: &ManifestEntry, params: &ExtractParams) -> anyhow::Result<Extracted> {
    let rasters = load_entry(manifest, entry).with_context(|| format!("entry `{}`", entry.id))?;
    let mut digests = Vec::new();
    let mut paths = vec![manifest.resolve(&entry.image_path)];
    for p in &entry.mask_pairs {
        paths.push(manifest.resolve(&p.object));
        paths.push(manifest.resolve(&p.shadow));
    }
    for p in paths {
        let bytes = fs::read(&p).with_context(|| format!("reading {}", p.display()))?;
        digests.push((p, hex::encode(Sha256::digest(&bytes))));
    }
    let dims = (rasters.image.width(), rasters.image.height());
    let ext = extract_image(&entry.id, &rasters.image, &rasters.mask_pairs, params)
        .with_context(|| format!("entry `{}`", entry.id))?;
    Ok(Extracted {
        id: entry.id.clone(),
        dims,
        ext,
        digests,
    })
}

fn extract(a: &ExtractArgs, seed: u64, argv: &[OsString]) -> CliResult<()> {
    if a.grid_w == 0 || a.grid_h == 0 {
        return usage("--grid-w and --grid-h must be positive");
    }
    if !(a.lsd_scale > 0.0) || !(a.lsd_angle_tol > 0.0 && a.lsd_angle_tol < 90.0) {
        return usage("--lsd-scale must be positive and --lsd-angle-tol inside (0, 90)");
    }
    let params = ExtractParams {
        lsd: LsdParams {
            rho: a.lsd_rho,
            angle_tol: a.lsd_angle_tol.to_radians(),
            min_length: a.lsd_min_length,
            log_nfa_max: a.lsd_log_nfa_max,
            scale: a.lsd_scale,
            sigma_scale: a.lsd_sigma_scale,
            density_th: a.lsd_density,
        },
        vp: VpParams {
            iters: a.vp_iters,
            inlier_tol_deg: a.vp_inlier_tol,
            min_support: a.vp_min_support,
            max_vps: a.vp_max,
            seed,
        },
        grid: (a.grid_w, a.grid_h),
        shadow_half_width: a.shadow_half_width.to_radians(),
    };
    let manifest = open_manifest(&a.manifest)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs)
        .build()
        .map_err(|e| anyhow!("thread pool: {e}"))?;
    let results: Vec<anyhow::Result<Extracted>> =
        pool.install(|| manifest.entries.par_iter().map(|e| extract_one(&manifest, e, &params)).collect());
    let rows = results.into_iter().collect::<anyhow::Result<Vec<_>>>()?;

    let columns = cue_columns(a.cue);
    let mut cache = FeatureCache::new(columns.iter().map(|c| c.to_string()).collect());
    for r in &rows {
        let values = columns
            .iter()
            .map(|c| r.ext.cues.get(c).expect("schema column"))
            .collect();
        cache.insert(r.id.clone(), values).map_err(anyhow::Error::from)?;
    }
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let cache_path = a.out.join(files::FEATURES_FILE);
    write_cache(&cache_path, &cache).with_context(|| format!("writing {}", cache_path.display()))?;
    let dims: Vec<(String, (usize, usize))> = rows.iter().map(|r| (r.id.clone(), r.dims)).collect();
    files::write_text(&a.out.join(files::DIMS_FILE), &files::dims_text(&dims))?;

    let segment_text = |e: &Extraction| e.segments.iter().map(|s| s.to_line() + "\n").collect::<String>();
    let vp_text = |e: &Extraction| e.vps.iter().map(|v| v.to_line() + "\n").collect::<String>();
    let with_lines = matches!(a.cue, Cue::All | Cue::Lines);
    let with_field = matches!(a.cue, Cue::All | Cue::Field);
    for r in &rows {
        let name = format!("{}.txt", r.id);
        if with_lines {
            files::write_text(&files::segments_path(&a.out, &r.id), &segment_text(&r.ext))?;
        }
        if with_field {
            files::write_text(&files::field_path(&a.out, &r.id), &r.ext.field.to_text())?;
        }
        if let Some(d) = &a.dump_segments {
            files::write_text(&d.join(&name), &segment_text(&r.ext))?;
        }
        if let Some(d) = &a.dump_vps {
            files::write_text(&d.join(&name), &vp_text(&r.ext))?;
        }
        if let Some(d) = &a.dump_field {
            files::write_text(&d.join(&name), &r.ext.field.to_text())?;
        }
        if let Some(d) = &a.dump_shadows {
            files::write_text(&d.join(&name), &dump_text(&r.ext.pairs, r.ext.verdict.as_ref()))?;
        }
    }

    let mut prov = Provenance::default();
    prov.input(&a.manifest)?;
    for r in rows.iter() {
        for (p, d) in &r.digests {
            prov.digest(p, d.clone());
        }
    }
    prov.write(&provenance::path_for(&a.out, true), "extract", seed, argv)?;
    let rejected: usize = rows.iter().map(|r| r.ext.rejected_pairs).sum();
    println!(
        "extracted {} images, {} columns, {} rejected mask pairs -> {}",
        rows.len(),
        columns.len(),
        rejected,
        cache_path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Clone, Copy)]
enum Part {
    Train,
    Test,
}

/// Manifest indices used for training or testing under a holdout fraction.
fn select(n: usize, holdout: f64, seed: u64, part: Part) -> CliResult<Vec<usize>> {
    if !(0.0..1.0).contains(&holdout) {
        return usage("--holdout must lie in [0, 1)");
    }
    if holdout == 0.0 {
        return Ok((0..n).collect());
    }
    let (mut train, mut test) = holdout_split(n, 1.0 - holdout, seed);
    train.sort_unstable();
    test.sort_unstable();
    Ok(match part {
        Part::Train => train,
        Part::Test => test,
    })
}

fn resolve_columns(spec: &str) -> CliResult<Vec<String>> {
    let names: Vec<String> = match spec {
        "baseline" => BASELINE_FEATURES.iter().map(|s| s.to_string()).collect(),
        "shadow" => SHADOW_LEARNER_FEATURES.iter().map(|s| s.to_string()).collect(),
        "all" => schema().iter().map(|s| s.to_string()).collect(),
        list => list.split(',').map(|s| s.trim().to_string()).collect(),
    };
    let known = schema();
    if let Some(bad) = names.iter().find(|n| !known.contains(&n.as_str())) {
        return usage(format!("unknown feature column `{bad}`"));
    }
    let mut seen = HashSet::new();
    if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
        return usage(format!("feature column `{dup}` listed twice"));
    }
    Ok(names)
}

fn parse_widths(spec: &str) -> CliResult<Vec<usize>> {
    let widths: Result<Vec<usize>, _> = spec.split(',').map(|s| s.trim().parse::<usize>()).collect();
    match widths {
        Ok(w) if w.iter().all(|&v| v > 0) => Ok(w),
        _ => usage(format!("--hidden `{spec}` is not a comma list of positive integers")),
    }
}

fn cache_rows(cache: &FeatureCache, path: &Path, ids: &[&str], columns: &[String]) -> anyhow::Result<Vec<Vec<f64>>> {
    let idx: Vec<usize> = columns
        .iter()
        .map(|c| cache.column_index(c).ok_or_else(|| anyhow!("{}: no column `{c}`", path.display())))
        .collect::<anyhow::Result<_>>()?;
    ids.iter()
        .map(|id| {
            let row = cache.rows.get(*id).ok_or_else(|| anyhow!("{}: no row for `{id}`", path.display()))?;
            Ok(idx.iter().map(|&j| row[j]).collect())
        })
        .collect()
}

fn train(a: &TrainArgs, seed: u64, argv: &[OsString]) -> CliResult<()> {
    if a.subset_sampling && a.learner != Learner::Set {
        return usage("--subset-sampling applies to the set learner only");
    }
    if a.epochs == 0 || a.batch == 0 {
        return usage("--epochs and --batch must be positive");
    }
    if a.lr.is_some_and(|v| !(v > 0.0)) || !(a.l2 >= 0.0) {
        return usage("--lr must be positive and --l2 nonnegative");
    }
    let manifest = open_manifest(&a.manifest)?;
    let chosen = select(manifest.entries.len(), a.holdout, seed, Part::Train)?;
    let entries: Vec<&ManifestEntry> = chosen.iter().map(|&i| &manifest.entries[i]).collect();
    let ids: Vec<&str> = entries.iter().map(|e| e.id.as_str()).collect();
    let labels: Vec<bool> = entries.iter().map(|e| e.label.is_real()).collect();
    let mut prov = Provenance::default();
    prov.input(&a.manifest)?;

    let sgd = |default_lr: f64| SgdParams {
        epochs: a.epochs,
        lr: a.lr.unwrap_or(default_lr),
        l2: a.l2,
        batch: a.batch,
        seed,
        subset_sampling: a.subset_sampling,
    };
    let (model, final_loss, used) = match a.learner {
        Learner::Lr => {
            let columns = resolve_columns(&a.columns)?;
            let path = a.features.join(files::FEATURES_FILE);
            let cache = read_cache(&path).with_context(|| format!("reading {}", path.display()))?;
            prov.input(&path)?;
            let x = cache_rows(&cache, &path, &ids, &columns)?;
            let params = LogRegParams {
                epochs: a.epochs,
                lr: a.lr.unwrap_or(1e-2),
                l2: a.l2,
                seed,
            };
            let m = train_logreg(columns, &x, &labels, &params).context("training logistic model")?;
            let loss = m.train_meta.final_loss;
            (Model::LogReg(m), loss, ids.len())
        }
        Learner::Set => {
            let w = parse_widths(a.hidden.as_deref().unwrap_or("64,64,32"))?;
            let [p1, p2, h] = w[..] else {
                return usage("--hidden for the set learner takes three widths: phi,phi,head");
            };
            if a.max_elements == 0 {
                return usage("--max-elements must be positive");
            }
            let config = SetNetConfig {
                phi_hidden: [p1, p2],
                head_hidden: h,
                max_elements: a.max_elements,
            };
            let dims_path = a.features.join(files::DIMS_FILE);
            let dims = files::read_dims(&dims_path)?;
            prov.input(&dims_path)?;
            let (mut sets, mut ys) = (Vec::new(), Vec::new());
            for (id, &y) in ids.iter().zip(&labels) {
                let path = files::segments_path(&a.features, id);
                let segs = files::read_segments(&path)?;
                prov.input(&path)?;
                let d = *dims.get(*id).ok_or_else(|| anyhow!("{}: no row for `{id}`", dims_path.display()))?;
                let enc = encode_segments(&segs, d, a.max_elements);
                if !enc.is_empty() {
                    sets.push(enc);
                    ys.push(y);
                }
            }
            let used = sets.len();
            let t = train_set(SetNetModel::new(&config, seed), &sets, &ys, &sgd(1e-3)).context("training set model")?;
            let loss = t.model.train_meta.final_loss;
            (Model::Set(t.model), loss, used)
        }
        Learner::Grid => {
            let w = parse_widths(a.hidden.as_deref().unwrap_or("32"))?;
            let [h] = w[..] else {
                return usage("--hidden for the grid learner takes one width");
            };
            let mut fields = Vec::with_capacity(ids.len());
            let mut grid = None;
            for id in &ids {
                let path = files::field_path(&a.features, id);
                let f = files::read_field(&path)?;
                prov.input(&path)?;
                let g = (f.grid_w, f.grid_h);
                if *grid.get_or_insert(g) != g {
                    return Err(anyhow!("{}: grid {}x{} differs from earlier fields", path.display(), g.0, g.1).into());
                }
                fields.push(flatten_field(&f));
            }
            let Some(grid) = grid else {
                return Err(anyhow!("no training examples").into());
            };
            let t = train_grid(GridModel::new(grid, h, seed), &fields, &labels, &sgd(1e-3))
                .context("training grid model")?;
            let loss = t.model.train_meta.final_loss;
            (Model::Grid(t.model), loss, ids.len())
        }
    };
    save_model(&a.out, &model).with_context(|| format!("writing {}", a.out.display()))?;
    prov.write(&provenance::path_for(&a.out, false), "train", seed, argv)?;
    println!(
        "trained {} model on {used} examples, final loss {} -> {}",
        model.kind(),
        fmt_f64(final_loss),
        a.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------

fn open_model(path: &Path) -> CliResult<Model> {
    Ok(load_model(path).with_context(|| format!("loading model {}", path.display()))?)
}

fn predict(a: &PredictArgs, seed: u64, argv: &[OsString]) -> CliResult<()> {
    let manifest = open_manifest(&a.manifest)?;
    let chosen = select(manifest.entries.len(), a.holdout, seed, Part::Test)?;
    let ids: Vec<&str> = chosen.iter().map(|&i| manifest.entries[i].id.as_str()).collect();
    let model = open_model(&a.model)?;
    let mut prov = Provenance::default();
    prov.input(&a.manifest)?;
    prov.input(&a.model)?;
    let preds: Vec<Prediction> = match &model {
        Model::LogReg(m) => {
            let path = a.features.join(files::FEATURES_FILE);
            let cache = read_cache(&path).with_context(|| format!("reading {}", path.display()))?;
            prov.input(&path)?;
            cache_rows(&cache, &path, &ids, &m.features)?
                .iter()
                .map(|x| m.predict(x).map_err(anyhow::Error::from))
                .collect::<anyhow::Result<_>>()?
        }
        Model::Set(m) => {
            let dims_path = a.features.join(files::DIMS_FILE);
            let dims = files::read_dims(&dims_path)?;
            prov.input(&dims_path)?;
            let mut out = Vec::with_capacity(ids.len());
            for id in &ids {
                let path = files::segments_path(&a.features, id);
                let segs = files::read_segments(&path)?;
                prov.input(&path)?;
                let d = *dims.get(*id).ok_or_else(|| anyhow!("{}: no row for `{id}`", dims_path.display()))?;
                let enc = encode_segments(&segs, d, m.max_elements);
                // Empty set scores as chance.
                out.push(if enc.is_empty() {
                    Prediction::from_logit(0.0)
                } else {
                    m.forward_encoded(&enc).map_err(anyhow::Error::from)?
                });
            }
            out
        }
        Model::Grid(m) => {
            let mut out = Vec::with_capacity(ids.len());
            for id in &ids {
                let path = files::field_path(&a.features, id);
                let f = files::read_field(&path)?;
                prov.input(&path)?;
                out.push(forward_grid(m, &f).with_context(|| path.display().to_string())?);
            }
            out
        }
    };
    let rows: Vec<ScoreRow> = ids
        .iter()
        .zip(&preds)
        .map(|(id, p)| ScoreRow {
            id: id.to_string(),
            score: p.score,
            logit: p.logit,
        })
        .collect();
    files::write_text(&a.out, &files::scores_text(&rows))?;
    prov.write(&provenance::path_for(&a.out, false), "predict", seed, argv)?;
    println!("scored {} entries with the {} model -> {}", rows.len(), model.kind(), a.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------

fn check_band(band: f64) -> CliResult<()> {
    if band > 0.0 && band < 0.5 {
        Ok(())
    } else {
        usage(format!("--band {band} must lie in (0, 0.5)"))
    }
}

fn split_cmd(a: &SplitArgs, seed: u64, argv: &[OsString]) -> CliResult<()> {
    check_band(a.band)?;
    let manifest = open_manifest(&a.manifest)?;
    let assignments = split(&manifest.entries, a.band).map_err(anyhow::Error::from)?;
    files::write_text(&a.out, &files::splits_text(&assignments))?;
    let mut prov = Provenance::default();
    prov.input(&a.manifest)?;
    prov.write(&provenance::path_for(&a.out, false), "split", seed, argv)?;
    for cat in SplitCategory::ALL {
        let n = split_members(&assignments, cat, a.nested_misclassified).len();
        println!("{:<14}{n}", cat.as_str());
    }
    Ok(())
}

// ---------------------------------------------------------------------------

fn eval_cmd(a: &EvalArgs, seed: u64, argv: &[OsString]) -> CliResult<()> {
    check_band(a.band)?;
    if !(a.threshold > 0.0 && a.threshold < 1.0) {
        return usage("--threshold must lie in (0, 1)");
    }
    let mut specs: Vec<(String, &Path)> = Vec::new();
    for s in &a.scores {
        let Some((name, path)) = s.split_once('=') else {
            return usage(format!("--scores `{s}` is not NAME=PATH"));
        };
        let valid = !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-');
        if !valid || path.is_empty() {
            return usage(format!("--scores `{s}`: name must be alphanumeric and the path nonempty"));
        }
        if specs.iter().any(|(n, _)| n == name) {
            return usage(format!("--scores name `{name}` given twice"));
        }
        specs.push((name.to_string(), Path::new(path)));
    }
    let manifest = open_manifest(&a.manifest)?;
    let labels: HashMap<&str, bool> = manifest.entries.iter().map(|e| (e.id.as_str(), e.label.is_real())).collect();
    let mut prov = Provenance::default();
    prov.input(&a.manifest)?;
    let mut cues: Vec<(String, HashMap<String, f64>)> = Vec::new();
    for (name, path) in &specs {
        let rows = files::read_scores(path)?;
        prov.input(path)?;
        let mut m = HashMap::new();
        for r in rows {
            if !labels.contains_key(r.id.as_str()) {
                return Err(anyhow!("{}: id `{}` is not in the manifest", path.display(), r.id).into());
            }
            m.insert(r.id, r.score);
        }
        cues.push((name.clone(), m));
    }

    let assignments = split(&manifest.entries, a.band).map_err(anyhow::Error::from)?;
    let all: Vec<&str> = manifest.entries.iter().map(|e| e.id.as_str()).collect();
    let mut groups: Vec<(String, Vec<&str>)> = vec![("all".into(), all)];
    for cat in SplitCategory::ALL {
        groups.push((cat.as_str().into(), split_members(&assignments, cat, a.nested_misclassified)));
    }
    let mut splits = Vec::new();
    for (name, members) in &groups {
        let mut curves = Vec::new();
        for (cue, scores) in &cues {
            let (s, y): (Vec<f64>, Vec<bool>) = members
                .iter()
                .filter_map(|id| scores.get(*id).map(|s| (*s, labels[id])))
                .unzip();
            if y.iter().any(|&v| v) && y.iter().any(|&v| !v) {
                curves.push((cue.clone(), roc(&s, &y).map_err(anyhow::Error::from)?));
            }
        }
        if !curves.is_empty() {
            splits.push(SplitCurves {
                split: name.clone(),
                curves,
            });
        }
    }
    if splits.is_empty() {
        return Err(anyhow!("no scored ids cover both real and generated images").into());
    }

    let find = |n: &str| cues.iter().find(|(c, _)| c == n).map(|(_, m)| m);
    let table = match (find("ls"), find("pf"), find("os")) {
        (Some(ls), Some(pf), Some(os)) => {
            let triples: Vec<(f64, f64, f64)> = manifest
                .entries
                .iter()
                .filter(|e| !e.label.is_real())
                .filter_map(|e| Some((*ls.get(&e.id)?, *pf.get(&e.id)?, *os.get(&e.id)?)))
                .collect();
            (!triples.is_empty())
                .then(|| agreement(&triples, a.threshold))
                .transpose()
                .map_err(anyhow::Error::from)?
        }
        _ => None,
    };
    let opts = ReportOptions { svg: a.svg, band: a.band };
    write_report(&a.out, &splits, table.as_ref(), &opts)
        .with_context(|| format!("writing report to {}", a.out.display()))?;
    prov.write(&provenance::path_for(&a.out, true), "eval", seed, argv)?;
    print!("{}", summary_text(&splits, a.band));
    if let Some(t) = &table {
        print!("{}", t.to_text());
    }
    Ok(())
}

// ---------------------------------------------------------------------------

fn saliency(a: &SaliencyArgs, seed: u64, argv: &[OsString]) -> CliResult<()> {
    let model = open_model(&a.model)?;
    let mut prov = Provenance::default();
    prov.input(&a.model)?;
    let mut s = String::new();
    match &model {
        Model::Set(m) => {
            let dims_path = a.features.join(files::DIMS_FILE);
            let dims = files::read_dims(&dims_path)?;
            let d = *dims.get(&a.id).ok_or_else(|| anyhow!("{}: no row for `{}`", dims_path.display(), a.id))?;
            let path = files::segments_path(&a.features, &a.id);
            let segs = files::read_segments(&path)?;
            prov.input(&path)?;
            s.push_str("index,attribution,x1,y1,x2,y2\n");
            for (i, (seg, v)) in segs.iter().zip(saliency_set(m, &segs, d)).enumerate() {
                let _ = writeln!(
                    s,
                    "{i},{},{},{},{},{}",
                    fmt_f64(v),
                    fmt_f64(seg.x1),
                    fmt_f64(seg.y1),
                    fmt_f64(seg.x2),
                    fmt_f64(seg.y2)
                );
            }
        }
        Model::Grid(m) => {
            let path = files::field_path(&a.features, &a.id);
            let f = files::read_field(&path)?;
            prov.input(&path)?;
            let sal = saliency_grid(m, &f).with_context(|| path.display().to_string())?;
            s.push_str("cell_x,cell_y,attribution\n");
            for (k, v) in sal.iter().enumerate() {
                let _ = writeln!(s, "{},{},{}", k % f.grid_w, k / f.grid_w, fmt_f64(*v));
            }
        }
        Model::LogReg(m) => {
            s.push_str("feature,attribution\n");
            for ((name, w), sd) in m.features.iter().zip(&m.weights).zip(&m.feature_stds) {
                let _ = writeln!(s, "{name},{}", fmt_f64((w / sd).abs()));
            }
        }
    }
    files::write_text(&a.out, &s)?;
    prov.write(&provenance::path_for(&a.out, false), "saliency", seed, argv)?;
    println!("wrote {} attributions -> {}", model.kind(), a.out.display());
    Ok(())
}
