use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use psz_core::dataset::{
    generate_dataset, read_prefilters, sidecar_path, write_prefilters, Dataset, PrefilterMeta,
    SampleRecord, Subset, MANIFEST_FILE,
};
use psz_core::metrics::{
    evaluate_prefilters, reports_to_csv, summarize, MetricsReport, ReportMeta, SummaryRow,
};
use psz_core::scene::{all_masks, mask_indices, MaskPattern, MASK_NAMES};
use psz_core::solver::{
    tune_regularization, AeEvaluator, MaskedPm, PmOptions, PreFilterSet, TargetAtf, TuneOptions,
    TuneOutcome,
};
use psz_core::{PszError, Result, SceneConfig};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::output::{io_err, to_json, OutputDir};
use crate::{
    CompareArgs, DatasetSelection, EvaluateArgs, GenDatasetArgs, Regularization, SolvePmArgs,
    TuneAeArgs,
};

/// Tikhonov weight used when neither `--lambda` nor `--tune-ae` is given.
pub const DEFAULT_LAMBDA: f64 = 1e-2;

pub const SUMMARY_JSON: &str = "summary.json";

pub struct Global {
    config: Option<SceneConfig>,
    seed: Option<u64>,
    out: PathBuf,
}

impl Global {
    pub fn new(config: Option<PathBuf>, seed: Option<u64>, out: PathBuf) -> Result<Self> {
        let config = match config {
            Some(path) if !path.is_file() => {
                return Err(PszError::InvalidInput(format!(
                    "config file {} does not exist",
                    path.display()
                )))
            }
            Some(path) => Some(SceneConfig::load(&path)?),
            None => None,
        };
        Ok(Global { config, seed, out })
    }
}

pub fn gen_dataset(g: &Global, args: GenDatasetArgs) -> Result<()> {
    let mut cfg = g.config.clone().unwrap_or_default();
    if let Some(n) = args.n {
        cfg.dataset.samples = n;
    }
    if let Some(k) = args.k {
        cfg.frequencies.count = k;
    }
    if let Some(seed) = g.seed {
        cfg.dataset.seed = seed;
    }
    let manifest = generate_dataset(&cfg, &g.out, |done, total| {
        eprintln!("simulated {done}/{total} sources");
    })?;

    let mut out = OutputDir::create(&g.out)?;
    out.record(MANIFEST_FILE)?;
    let c = &manifest.counts;
    println!("dataset     {}", g.out.display());
    println!("samples     {} (train {}, val {}, test {})", c.samples,
        manifest.splits.train.len(), manifest.splits.val.len(), manifest.splits.test.len());
    println!("bins        {} up to {} Hz", c.freqs, cfg.frequencies.max_hz);
    println!("speakers    {}", c.speakers);
    println!("max order   {}", manifest.max_order);
    println!("config hash {}", manifest.config_hash);
    for (key, file) in &manifest.files {
        out.record(&file.path)?;
        println!("{key:<16} {:?} sha256 {}", file.dims, file.sha256);
    }
    out.finish(
        "gen-dataset",
        &manifest.config_hash,
        Some(manifest.seed),
        json!({ "samples": c.samples, "freqs": c.freqs }),
    )
}

/// A dataset opened for one command, with the requested masks and split
/// already resolved and the split's samples loaded.
struct Selection {
    ds: Dataset,
    masks: Vec<MaskPattern>,
    subset: String,
    records: Vec<SampleRecord>,
    targets: Vec<TargetAtf>,
    options: PmOptions,
}

impl Selection {
    fn open(g: &Global, sel: &DatasetSelection, default_masks: Vec<MaskPattern>) -> Result<Self> {
        let ds = Dataset::open(&sel.dataset)?;
        if let Some(cfg) = &g.config {
            ds.check_scene(cfg)?;
        }
        let masks = if sel.masks.is_empty() {
            default_masks
        } else {
            sel.masks.iter().map(|m| mask_indices(m)).collect::<Result<_>>()?
        };
        let subset: Subset = sel.subset.parse()?;
        let indices = ds.indices(subset);
        if indices.is_empty() {
            return Err(PszError::InvalidInput(format!(
                "subset `{}` of the dataset is empty",
                sel.subset
            )));
        }
        let records = indices.iter().map(|&i| ds.sample(i)).collect::<Result<Vec<_>>>()?;
        let targets = records.iter().map(|r| ds.target(r)).collect::<Result<Vec<_>>>()?;
        Ok(Selection {
            ds,
            masks,
            subset: sel.subset.clone(),
            records,
            targets,
            options: PmOptions {
                retain_dark: !sel.bright_only,
                ..PmOptions::default()
            },
        })
    }

    fn seed(&self, g: &Global) -> u64 {
        g.seed.unwrap_or(self.ds.manifest().seed)
    }

    fn sample_ids(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.index).collect()
    }
}

/// PM systems need both transfer-function tensors; they are loaded once.
struct Rooms {
    h_ctrl: psz_core::room::AtfTensor,
    h_mon: psz_core::room::AtfTensor,
}

impl Rooms {
    fn load(ds: &Dataset) -> Result<Self> {
        Ok(Rooms {
            h_ctrl: ds.h_ctrl()?,
            h_mon: ds.h_mon()?,
        })
    }
}

fn tune(
    sel: &Selection,
    rooms: &Rooms,
    pm: &MaskedPm,
    target_bae: f64,
    tol_db: f64,
) -> Result<TuneOutcome> {
    let scene = sel.ds.scene();
    let evaluator = AeEvaluator::new(
        pm,
        &rooms.h_mon,
        scene.monitor_bright.len(),
        scene.reference_speaker(),
        &sel.targets,
    )?;
    let options = TuneOptions {
        tol_db,
        ..TuneOptions::default()
    };
    let outcome = tune_regularization(&evaluator, target_bae, options)?;
    eprintln!(
        "{}: lambda {:e} gives mean bAE {:.3} dB (target {target_bae} dB, {} steps)",
        pm.pattern(),
        outcome.lambda,
        outcome.mean_bae,
        outcome.iterations
    );
    Ok(outcome)
}

fn pick_lambda(sel: &Selection, rooms: &Rooms, pm: &MaskedPm, reg: &Regularization) -> Result<f64> {
    match (reg.lambda, reg.tune_ae) {
        (Some(l), _) if !(l >= 0.0 && l.is_finite()) => Err(PszError::InvalidInput(format!(
            "lambda must be finite and >= 0, got {l}"
        ))),
        (Some(l), _) => Ok(l),
        (None, Some(target)) => Ok(tune(sel, rooms, pm, target, TuneOptions::default().tol_db)?.lambda),
        (None, None) => Ok(DEFAULT_LAMBDA),
    }
}

fn mask_dir(mask: &str) -> String {
    format!("prefilters/{mask}")
}

pub fn solve_pm(g: &Global, args: SolvePmArgs) -> Result<()> {
    let sel = Selection::open(g, &args.selection, all_masks())?;
    let rooms = Rooms::load(&sel.ds)?;
    let mut out = OutputDir::create(&g.out)?;
    let mut lambdas = BTreeMap::new();
    for pattern in &sel.masks {
        let pm = MaskedPm::new(&rooms.h_ctrl, pattern, sel.options)?;
        let lambda = pick_lambda(&sel, &rooms, &pm, &args.regularization)?;
        lambdas.insert(pattern.name.clone(), lambda);
        for (rec, target) in sel.records.iter().zip(&sel.targets) {
            let set = pm.solve(target, lambda)?;
            let mut meta = PrefilterMeta::new("pm", pattern.name.clone(), &sel.ds.scene().freqs);
            meta.sample = Some(rec.index);
            meta.lambda = Some(lambda);
            meta.config_hash = Some(sel.ds.config_hash().to_string());
            let rel = format!("{}/{:05}.pszd", mask_dir(&pattern.name), rec.index);
            let path = out.path(&rel);
            fs::create_dir_all(path.parent().expect("nested path"))
                .map_err(|e| io_err(&path, e))?;
            write_prefilters(&path, &set, &meta)?;
            out.record(&rel)?;
            out.record(&rel.replace(".pszd", ".json"))?;
        }
        eprintln!("{pattern}: wrote {} pre-filter sets", sel.records.len());
    }
    out.finish(
        "solve-pm",
        sel.ds.config_hash(),
        Some(sel.seed(g)),
        json!({
            "dataset": args.selection.dataset,
            "subset": sel.subset,
            "samples": sel.sample_ids(),
            "retain_dark": sel.options.retain_dark,
            "lambda": lambdas,
        }),
    )
}

#[derive(Debug, Serialize)]
struct TuneRow {
    mask: String,
    target_bae_db: f64,
    lambda: f64,
    mean_bae_db: f64,
    iterations: usize,
}

pub fn tune_ae(g: &Global, args: TuneAeArgs) -> Result<()> {
    let external = args
        .match_prefilters
        .as_deref()
        .map(ExternalSet::index)
        .transpose()?;
    let default_masks = match &external {
        Some(set) => set.masks()?,
        None => all_masks(),
    };
    let sel = Selection::open(g, &args.selection, default_masks)?;
    let rooms = Rooms::load(&sel.ds)?;
    let mut rows = Vec::new();
    for pattern in &sel.masks {
        let target = match (&external, args.target) {
            (Some(set), _) => {
                let reports = set.evaluate(&sel, &rooms, pattern, "match")?;
                reports.iter().map(|r| r.broadband.b_ae.db).sum::<f64>() / reports.len() as f64
            }
            (None, Some(t)) => t,
            (None, None) => unreachable!("clap requires --target or --match"),
        };
        let pm = MaskedPm::new(&rooms.h_ctrl, pattern, sel.options)?;
        let outcome = tune(&sel, &rooms, &pm, target, args.tol)?;
        rows.push(TuneRow {
            mask: pattern.name.clone(),
            target_bae_db: target,
            lambda: outcome.lambda,
            mean_bae_db: outcome.mean_bae,
            iterations: outcome.iterations,
        });
    }
    let mut csv = String::from("mask,target_bae_db,lambda,mean_bae_db,iterations\n");
    for r in &rows {
        let _ = writeln!(csv, "{},{},{},{},{}", r.mask, r.target_bae_db, r.lambda, r.mean_bae_db, r.iterations);
    }
    let mut out = OutputDir::create(&g.out)?;
    out.write("tune.csv", &csv)?;
    out.write("tune.json", &to_json(&rows))?;
    for r in &rows {
        println!("{:<9} lambda {:<12e} bAE {:>8.3} dB (target {:.3})", r.mask, r.lambda, r.mean_bae_db, r.target_bae_db);
    }
    out.finish(
        "tune-ae",
        sel.ds.config_hash(),
        Some(sel.seed(g)),
        json!({
            "dataset": args.selection.dataset,
            "subset": sel.subset,
            "samples": sel.sample_ids(),
            "retain_dark": sel.options.retain_dark,
            "tol_db": args.tol,
            "match": args.match_prefilters,
        }),
    )
}

/// Pre-filter files found under a directory, keyed by `(mask, sample)`
/// from their sidecars.
struct ExternalSet {
    root: PathBuf,
    files: BTreeMap<(String, usize), PathBuf>,
}

fn collect_pszd(dir: &Path, found: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| io_err(dir, e))?;
    entries.sort();
    for path in entries {
        if path.is_dir() {
            collect_pszd(&path, found)?;
        } else if path.extension().is_some_and(|e| e == "pszd") {
            found.push(path);
        }
    }
    Ok(())
}

impl ExternalSet {
    fn index(root: &Path) -> Result<Self> {
        let mut paths = Vec::new();
        collect_pszd(root, &mut paths)?;
        let mut files = BTreeMap::new();
        for path in paths {
            let side = sidecar_path(&path);
            let text = fs::read_to_string(&side).map_err(|e| io_err(&side, e))?;
            let meta: PrefilterMeta = serde_json::from_str(&text).map_err(|e| PszError::Parse {
                what: side.display().to_string(),
                reason: e.to_string(),
            })?;
            let sample = meta.sample.ok_or_else(|| PszError::Format {
                path: side.clone(),
                reason: "sidecar does not name a dataset sample".into(),
            })?;
            if let Some(prev) = files.insert((meta.mask.clone(), sample), path.clone()) {
                return Err(PszError::Format {
                    path,
                    reason: format!("duplicates {} for mask {} sample {sample}", prev.display(), meta.mask),
                });
            }
        }
        if files.is_empty() {
            return Err(PszError::Format {
                path: root.to_path_buf(),
                reason: "no .pszd pre-filter files found".into(),
            });
        }
        Ok(ExternalSet {
            root: root.to_path_buf(),
            files,
        })
    }

    /// Masks present in the set, in the standard order.
    fn masks(&self) -> Result<Vec<MaskPattern>> {
        let mut names: Vec<&str> = Vec::new();
        for (mask, _) in self.files.keys() {
            if !names.contains(&mask.as_str()) {
                names.push(mask);
            }
        }
        names.sort_by_key(|n| MASK_NAMES.iter().position(|m| m == n).unwrap_or(usize::MAX));
        names.into_iter().map(mask_indices).collect()
    }

    fn load(&self, sel: &Selection, mask: &str, sample: usize) -> Result<(PreFilterSet, PrefilterMeta)> {
        let path = self.files.get(&(mask.to_string(), sample)).ok_or_else(|| PszError::Format {
            path: self.root.clone(),
            reason: format!("no pre-filters for mask {mask} sample {sample}"),
        })?;
        let (set, meta) = read_prefilters(path, Some(sel.ds.scene().array.len()))?;
        if let Some(hash) = &meta.config_hash {
            if hash != sel.ds.config_hash() {
                return Err(PszError::ConfigHashMismatch {
                    expected: sel.ds.config_hash().to_string(),
                    found: hash.clone(),
                });
            }
        }
        if set.freqs() != &sel.ds.scene().freqs {
            return Err(PszError::Dimension {
                path: path.clone(),
                reason: "frequency grid differs from the dataset".into(),
            });
        }
        Ok((set, meta))
    }

    fn evaluate(
        &self,
        sel: &Selection,
        rooms: &Rooms,
        pattern: &MaskPattern,
        label: &str,
    ) -> Result<Vec<MetricsReport>> {
        sel.records
            .iter()
            .map(|rec| {
                let (set, meta) = self.load(sel, &pattern.name, rec.index)?;
                score(sel, rooms, rec, &set, label, &pattern.name, meta.lambda)
            })
            .collect()
    }
}

fn score(
    sel: &Selection,
    rooms: &Rooms,
    rec: &SampleRecord,
    set: &PreFilterSet,
    label: &str,
    mask: &str,
    lambda: Option<f64>,
) -> Result<MetricsReport> {
    let scene = sel.ds.scene();
    let meta = ReportMeta {
        method: label.to_string(),
        mask: mask.to_string(),
        sample: rec.index,
        lambda,
        seed: Some(sel.ds.manifest().seed),
        config_hash: sel.ds.config_hash().to_string(),
    };
    evaluate_prefilters(
        &rooms.h_mon,
        scene.monitor_bright.len(),
        &rec.monitor_target_b,
        set,
        scene.reference_speaker(),
        meta,
    )
}

/// What `evaluate` writes to `summary.json`; `compare` reads it back.
#[derive(Debug, Serialize, Deserialize)]
pub struct EvalSummary {
    pub schema_version: u32,
    pub label: String,
    pub method: String,
    pub subset: String,
    pub config_hash: String,
    pub dataset_seed: u64,
    pub samples: Vec<usize>,
    pub rows: Vec<SummaryRow>,
}

const SUMMARY_CSV_HEADER: &str = "label,mask,samples,lambda,re_b_db,re_d_db,b_ac_db,b_ae_db";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn evaluate(g: &Global, args: EvaluateArgs) -> Result<()> {
    let external = match args.method.as_str() {
        "external" => Some(ExternalSet::index(
            args.prefilters.as_deref().expect("clap requires --prefilters"),
        )?),
        _ => None,
    };
    if external.is_some() && (args.regularization.lambda.is_some() || args.regularization.tune_ae.is_some()) {
        return Err(PszError::InvalidInput(
            "--lambda and --tune-ae only apply to --method pm".into(),
        ));
    }
    let default_masks = match &external {
        Some(set) => set.masks()?,
        None => all_masks(),
    };
    let sel = Selection::open(g, &args.selection, default_masks)?;
    let rooms = Rooms::load(&sel.ds)?;
    let label = args.label.clone().unwrap_or_else(|| args.method.clone());

    let mut reports = Vec::new();
    for pattern in &sel.masks {
        let mut batch = match &external {
            Some(set) => set.evaluate(&sel, &rooms, pattern, &label)?,
            None => {
                let pm = MaskedPm::new(&rooms.h_ctrl, pattern, sel.options)?;
                let lambda = pick_lambda(&sel, &rooms, &pm, &args.regularization)?;
                sel.records
                    .iter()
                    .zip(&sel.targets)
                    .map(|(rec, t)| {
                        let set = pm.solve(t, lambda)?;
                        score(&sel, &rooms, rec, &set, &label, &pattern.name, Some(lambda))
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        };
        let row = &summarize(&batch)[0];
        eprintln!(
            "{pattern}: RE_B {:.2} dB, RE_D {:.2} dB, bAC {:.2} dB, bAE {:.2} dB",
            row.re_b, row.re_d, row.b_ac, row.b_ae
        );
        reports.append(&mut batch);
    }

    let rows = summarize(&reports);
    let mut csv = format!("{SUMMARY_CSV_HEADER}\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            r.method, r.mask, r.samples, opt(r.lambda), r.re_b, r.re_d, r.b_ac, r.b_ae
        );
    }
    let summary = EvalSummary {
        schema_version: 1,
        label: label.clone(),
        method: args.method.clone(),
        subset: sel.subset.clone(),
        config_hash: sel.ds.config_hash().to_string(),
        dataset_seed: sel.ds.manifest().seed,
        samples: sel.sample_ids(),
        rows,
    };
    let mut out = OutputDir::create(&g.out)?;
    out.write("metrics.csv", &reports_to_csv(&reports))?;
    out.write("summary.csv", &csv)?;
    out.write(SUMMARY_JSON, &to_json(&summary))?;
    print!("{csv}");
    out.finish(
        "evaluate",
        sel.ds.config_hash(),
        Some(sel.seed(g)),
        json!({
            "dataset": args.selection.dataset,
            "method": args.method,
            "label": label,
            "prefilters": args.prefilters,
            "subset": sel.subset,
            "retain_dark": sel.options.retain_dark,
            "lambda": args.regularization.lambda,
            "tune_ae": args.regularization.tune_ae,
            "masks": sel.masks.iter().map(|m| m.name.clone()).collect::<Vec<_>>(),
        }),
    )
}

/// Published values for the 3 x 3 masks. They come from a different room
/// simulator and effort definition, so they are context, never targets.
const REFERENCE_ROWS: [(&str, &str, f64, f64, f64); 6] = [
    ("Grid-3#1", "published PM", -9.67, -17.25, 9.61),
    ("Grid-3#2", "published PM", -9.87, -17.23, 9.13),
    ("Grid-3#3", "published PM", -8.70, -16.39, 7.73),
    ("Grid-3#1", "published neural", -21.79, -33.36, 14.12),
    ("Grid-3#2", "published neural", -21.86, -33.33, 14.12),
    ("Grid-3#3", "published neural", -21.87, -33.32, 14.12),
];

pub fn compare(g: &Global, args: CompareArgs) -> Result<()> {
    let mut runs: Vec<(String, EvalSummary)> = Vec::new();
    for dir in &args.runs {
        let path = dir.join(SUMMARY_JSON);
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        let summary: EvalSummary = serde_json::from_str(&text).map_err(|e| PszError::Parse {
            what: path.display().to_string(),
            reason: e.to_string(),
        })?;
        if let Some((_, first)) = runs.first() {
            if first.config_hash != summary.config_hash {
                return Err(PszError::ConfigHashMismatch {
                    expected: first.config_hash.clone(),
                    found: summary.config_hash,
                });
            }
        }
        let mut name = summary.label.clone();
        let mut n = 1;
        while runs.iter().any(|(l, _)| *l == name) {
            n += 1;
            name = format!("{} ({n})", summary.label);
        }
        runs.push((name, summary));
    }
    if let Some(cfg) = &g.config {
        let hash = cfg.scene_hash();
        if hash != runs[0].1.config_hash {
            return Err(PszError::ConfigHashMismatch {
                expected: hash,
                found: runs[0].1.config_hash.clone(),
            });
        }
    }

    let mut masks: Vec<String> = Vec::new();
    for (_, s) in &runs {
        for r in &s.rows {
            if !masks.contains(&r.mask) {
                masks.push(r.mask.clone());
            }
        }
    }
    masks.sort_by_key(|n| MASK_NAMES.iter().position(|m| m == n).unwrap_or(usize::MAX));

    let find = |s: &EvalSummary, mask: &str| s.rows.iter().find(|r| r.mask == mask).cloned();
    let mut table = String::from(
        "mask,run,lambda,re_b_db,re_d_db,b_ac_db,b_ae_db,\
         delta_re_b_db,delta_re_d_db,delta_b_ac_db,delta_b_ae_db,note\n",
    );
    let mut curves = String::from("run,mask,mask_order,control_points,re_b_db,b_ac_db\n");
    for (order, mask) in masks.iter().enumerate() {
        let base = find(&runs[0].1, mask);
        let points = mask_indices(mask).map(|m| m.point_count().to_string()).unwrap_or_default();
        for (name, s) in &runs {
            let Some(row) = find(s, mask) else { continue };
            let delta = |f: fn(&SummaryRow) -> f64| {
                base.as_ref().map(|b| (f(&row) - f(b)).to_string()).unwrap_or_default()
            };
            let _ = writeln!(
                table,
                "{mask},{name},{},{},{},{},{},{},{},{},{},",
                opt(row.lambda),
                row.re_b,
                row.re_d,
                row.b_ac,
                row.b_ae,
                delta(|r| r.re_b),
                delta(|r| r.re_d),
                delta(|r| r.b_ac),
                delta(|r| r.b_ae),
            );
            let _ = writeln!(curves, "{name},{mask},{order},{points},{},{}", row.re_b, row.b_ac);
        }
    }
    for (mask, name, re_b, re_d, ac) in REFERENCE_ROWS {
        let _ = writeln!(
            table,
            "{mask},{name},,{re_b},{re_d},{ac},,,,,,reference only: different simulator and effort definition; not a target"
        );
    }

    let mut out = OutputDir::create(&g.out)?;
    out.write("compare.csv", &table)?;
    out.write("curves.csv", &curves)?;
    print!("{table}");
    out.finish(
        "compare",
        &runs[0].1.config_hash,
        g.seed,
        json!({
            "runs": args.runs,
            "labels": runs.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>(),
        }),
    )
}
