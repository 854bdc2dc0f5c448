//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails. The sparsity checks simulate a 200-source,
//! 128-bin dataset, which takes a few minutes on one core.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use common::*;
use nalgebra::{DMatrix, DVector};
use psz_core::metrics::{acoustic_contrast, array_effort, relative_energy_error, Zone};
use psz_core::room::{rt60_to_reflection, simulate_atf, FrequencyGrid, RoomSpec};
use psz_core::solver::pressure_match;
use psz_core::Point3;
use rand::Rng;
use tempfile::tempdir;

const ISM_FREE_TOL: f64 = 1e-10;
const ISM_IMAGE_TOL: f64 = 1e-12;
const PM_TOL: f64 = 1e-8;
const METRIC_TOL: f64 = 1e-10;
const TUNE_TOL_DB: f64 = 0.1;
const SPARSITY_SLACK_DB: f64 = 0.5;
const CONTRACTION_MIN_DB: f64 = 0.5;
const DATASET_SEED: u64 = 11;
const SAMPLES: usize = 200;
const BINS: usize = 128;

type Outcome = Result<String, String>;

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn psz(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_psz"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "psz {} exited with {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn random_point(r: &mut impl Rng) -> Point3 {
    Point3::new(
        r.random_range(0.3..7.7),
        r.random_range(0.3..7.7),
        r.random_range(0.3..2.7),
    )
}

fn ism_oracle_check() -> Outcome {
    let dims = [8.0, 8.0, 3.0];
    let mut r = rng(101);
    let srcs: Vec<Point3> = (0..6).map(|_| random_point(&mut r)).collect();
    let rcvs: Vec<Point3> = (0..8).map(|_| random_point(&mut r)).collect();
    let freqs = FrequencyGrid::uniform(512, 2000.0).unwrap();

    let free = RoomSpec::new(dims, 0.0, 343.0).unwrap();
    let h = simulate_atf(&free, &srcs, &rcvs, &freqs, 10).map_err(|e| e.to_string())?;
    let mut free_worst: f64 = 0.0;
    for (k, &f) in freqs.freqs().iter().enumerate() {
        for (m, x) in rcvs.iter().enumerate() {
            for (l, src) in srcs.iter().enumerate() {
                let want = green(src.distance(x), f, 343.0);
                free_worst = free_worst.max((h.at(k, m, l) - want).norm() / want.norm());
            }
        }
    }

    // Near-cancelling image terms make single bins ill-conditioned: there
    // the f64 oracle's own rounding dominates the comparison. Errors are
    // therefore scaled by the sum of term magnitudes; the plain per-entry
    // relative error is reported alongside.
    let room = RoomSpec::new(dims, 0.25, 343.0).unwrap();
    let beta = rt60_to_reflection(&room).unwrap();
    let (mut image_worst, mut entry_worst): (f64, f64) = (0.0, 0.0);
    for order in 0..=1u32 {
        let h = simulate_atf(&room, &srcs, &rcvs, &freqs, order).map_err(|e| e.to_string())?;
        for (m, x) in rcvs.iter().enumerate() {
            for (l, src) in srcs.iter().enumerate() {
                let (s, x) = ((*src).into(), (*x).into());
                let want = ism_oracle(dims, beta, 343.0, s, x, freqs.freqs(), order as i64);
                let scale = ism_term_scale(dims, beta, s, x, order as i64);
                for (k, w) in want.iter().enumerate() {
                    let err = (h.at(k, m, l) - w).norm();
                    image_worst = image_worst.max(err / scale);
                    entry_worst = entry_worst.max(err / w.norm());
                }
            }
        }
    }
    verdict(
        free_worst < ISM_FREE_TOL && image_worst < ISM_IMAGE_TOL,
        format!(
            "free field worst {free_worst:.1e} (< {ISM_FREE_TOL:e}); orders 0-1 worst {image_worst:.1e} of term scale (< {ISM_IMAGE_TOL:e}), {entry_worst:.1e} of entry"
        ),
    )
}

fn pm_oracle_check() -> Outcome {
    let mut r = rng(102);
    let (mut worst, mut grad_worst): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let m = r.random_range(1..=8);
        let l = r.random_range(1..=6);
        let h = rand_vec(&mut r, m * l);
        let g = rand_vec(&mut r, m);
        let hm = DMatrix::from_row_slice(m, l, &h);
        let gv = DVector::from_vec(g.clone());
        for lambda in [0.0, 1e-4, 1e-1] {
            let a = pressure_match(&hm, &gv, lambda).map_err(|e| e.to_string())?;
            worst = worst.max(rel_err(a.as_slice(), &pm_oracle(&h, m, l, &g, lambda)));
            let grad = hm.adjoint() * (&hm * &a - &gv) + &a * C64::new(lambda, 0.0);
            grad_worst = grad_worst.max(grad.norm() / (hm.adjoint() * &gv).norm().max(1.0));
        }
    }
    verdict(
        worst < PM_TOL && grad_worst < PM_TOL,
        format!("300 solves: oracle {worst:.1e}, gradient {grad_worst:.1e} (< {PM_TOL:e})"),
    )
}

fn shrinkage_check() -> Outcome {
    let mut r = rng(103);
    let lambdas: Vec<f64> = (0..=16).map(|i| 10f64.powf(-6.0 + 0.5 * i as f64)).collect();
    let mut violations = 0;
    for _ in 0..20 {
        let m = r.random_range(2..=8);
        let l = r.random_range(1..=6);
        let h = DMatrix::from_row_slice(m, l, &rand_vec(&mut r, m * l));
        let g = DVector::from_vec(rand_vec(&mut r, m));
        let mut prev = f64::INFINITY;
        for &lam in &lambdas {
            let n = pressure_match(&h, &g, lam).map_err(|e| e.to_string())?.norm();
            if n > prev * (1.0 + 1e-12) {
                violations += 1;
            }
            prev = n;
        }
    }
    verdict(
        violations == 0,
        format!("20 instances x 17 weights in [1e-6, 1e2]: {violations} increases"),
    )
}

fn metric_check() -> Outcome {
    let mut r = rng(104);
    let mut worst: f64 = 0.0;
    let mut track = |got: f64, want: f64| worst = worst.max((got - want).abs() / want.abs().max(1.0));
    for _ in 0..200 {
        let n = r.random_range(1..40);
        let l = r.random_range(1..12);
        let g = rand_vec(&mut r, n);
        let t = rand_vec(&mut r, n);
        let nd = r.random_range(1..40);
        let gd = rand_vec(&mut r, nd);
        track(relative_energy_error(&g, &t, Zone::Bright).unwrap().db, naive_re(&g, &t, false));
        track(relative_energy_error(&gd, &t, Zone::Dark).unwrap().db, naive_re(&gd, &t, true));
        track(acoustic_contrast(&g, &gd).unwrap().db, naive_ac(&g, &gd));
        let a = rand_vec(&mut r, l);
        let hb = rand_vec(&mut r, n * l);
        let reference = r.random_range(0..l);
        track(array_effort(&a, &hb, &g, reference).unwrap().db, naive_ae(&a, &hb, &g, reference));
    }

    let t = rand_vec(&mut r, 30);
    let exact = relative_energy_error(&t, &t, Zone::Bright).unwrap().db;
    let rotated: Vec<C64> = t.iter().rev().map(|z| z * C64::from_polar(1.0, 1.1)).collect();
    let equal = acoustic_contrast(&t, &rotated).unwrap().db;
    let (m, l, reference) = (25, 9, 4);
    let hb = rand_vec(&mut r, m * l);
    let mut a = vec![C64::new(0.0, 0.0); l];
    a[reference] = C64::new(-0.4, 2.5);
    let single = array_effort(&a, &hb, &matvec(&hb, m, l, &a), reference).unwrap().db;

    verdict(
        worst < METRIC_TOL && exact == -300.0 && equal.abs() < 1e-12 && single.abs() < 1e-12,
        format!(
            "naive loops {worst:.1e} (< {METRIC_TOL:e}); RE_B(g, g) = {exact} dB; equal-energy AC = {equal:.1e} dB; reference-speaker AE = {single:.1e} dB"
        ),
    )
}

/// Per-mask mean broadband values from `summary.csv`:
/// `[re_b, re_d, b_ac, b_ae]`.
fn summary(run: &Path) -> Result<Vec<(String, [f64; 4])>, String> {
    let text = fs::read_to_string(run.join("summary.csv")).map_err(|e| e.to_string())?;
    text.lines()
        .skip(1)
        .map(|line| {
            let cols: Vec<&str> = line.split(',').collect();
            let mut v = [0.0; 4];
            for (slot, c) in v.iter_mut().zip(&cols[4..8]) {
                *slot = c.parse().map_err(|_| format!("bad value in {line}"))?;
            }
            Ok((cols[1].to_string(), v))
        })
        .collect()
}

fn re_b(rows: &[(String, [f64; 4])], mask: &str) -> f64 {
    rows.iter().find(|(m, _)| m == mask).unwrap().1[0]
}

struct Desk {
    rows: Vec<(String, [f64; 4])>,
}

const TREND: [&str; 5] = ["Grid-12", "Grid-6", "Grid-4", "Grid-3#1", "Grid-2#1"];

fn desk_dataset(root: &Path) -> Result<Desk, String> {
    let ds = root.join("desk");
    let started = Instant::now();
    psz(&[
        "--seed",
        &DATASET_SEED.to_string(),
        "--out",
        s(&ds),
        "gen-dataset",
        "--n",
        &SAMPLES.to_string(),
        "--k",
        &BINS.to_string(),
    ])?;
    let gen_time = started.elapsed();
    let run = root.join("desk-eval");
    psz(&[
        "--out",
        s(&run),
        "evaluate",
        "--dataset",
        s(&ds),
        "--subset",
        "all",
        "--mask",
        "Grid-12,Grid-6,Grid-4,Grid-3#1,Grid-3#3,Grid-2#1",
    ])?;
    println!(
        "  desk dataset: {SAMPLES} sources, {BINS} bins, seed {DATASET_SEED}; generated in {:.0} s, total {:.0} s",
        gen_time.as_secs_f64(),
        started.elapsed().as_secs_f64()
    );
    Ok(Desk { rows: summary(&run)? })
}

fn sparsity_check(desk: &Desk) -> Outcome {
    let values: Vec<f64> = TREND.iter().map(|m| re_b(&desk.rows, m)).collect();
    let ok = values.windows(2).all(|w| w[0] <= w[1] + SPARSITY_SLACK_DB);
    let chain: Vec<String> = TREND
        .iter()
        .zip(&values)
        .map(|(m, v)| format!("{m} {v:.2}"))
        .collect();
    verdict(ok, format!("mean RE_B dB: {} (slack {SPARSITY_SLACK_DB} dB)", chain.join(" <= ")))
}

fn contraction_check(desk: &Desk) -> Outcome {
    let (a, b) = (re_b(&desk.rows, "Grid-3#1"), re_b(&desk.rows, "Grid-3#3"));
    verdict(
        b - a >= CONTRACTION_MIN_DB,
        format!("mean RE_B Grid-3#1 {a:.2} dB -> Grid-3#3 {b:.2} dB, change {:+.2} dB (>= +{CONTRACTION_MIN_DB})", b - a),
    )
}

/// Tunes the weight on a small dataset towards the effort PM reaches at a
/// known weight, then re-evaluates at the tuned weight.
fn tuning_check(root: &Path) -> Outcome {
    let cfg = root.join("tune.toml");
    fs::write(&cfg, "[room]\nmax_order = 4\n\n[frequencies]\ncount = 16\n\n[dataset]\nsamples = 60\n")
        .map_err(|e| e.to_string())?;
    let ds = root.join("tune-ds");
    psz(&["--config", s(&cfg), "--seed", "4", "--out", s(&ds), "gen-dataset"])?;
    let mut lines = Vec::new();
    let mut ok = true;
    for (mask, lambda) in [("Grid-12", "3e-3"), ("Grid-3#2", "0.2")] {
        let base = root.join(format!("tune-base-{lambda}"));
        psz(&["--out", s(&base), "evaluate", "--dataset", s(&ds), "--mask", mask, "--lambda", lambda])?;
        let target = summary(&base)?[0].1[3];
        let tuned = root.join(format!("tune-run-{lambda}"));
        psz(&[
            "--out",
            s(&tuned),
            "evaluate",
            "--dataset",
            s(&ds),
            "--mask",
            mask,
            "--tune-ae",
            &target.to_string(),
        ])?;
        let text = fs::read_to_string(tuned.join("summary.csv")).map_err(|e| e.to_string())?;
        let cols: Vec<&str> = text.lines().nth(1).unwrap_or_default().split(',').collect();
        let found = cols[3];
        let got = summary(&tuned)?[0].1[3];
        ok &= (got - target).abs() <= TUNE_TOL_DB;
        lines.push(format!("{mask} target {target:.3} dB -> lambda {found}, bAE {got:.3} dB"));
    }
    verdict(ok, format!("{} (tol {TUNE_TOL_DB} dB)", lines.join("; ")))
}

fn determinism_check(root: &Path) -> Outcome {
    let cfg = root.join("det.toml");
    fs::write(&cfg, "[room]\nmax_order = 3\n\n[frequencies]\ncount = 8\n\n[dataset]\nsamples = 30\n")
        .map_err(|e| e.to_string())?;
    let pipeline = |tag: &str| -> Result<Vec<(String, Vec<u8>)>, String> {
        let dir = root.join(format!("det-{tag}"));
        let ds = dir.join("ds");
        psz(&["--config", s(&cfg), "--seed", "9", "--out", s(&ds), "gen-dataset"])?;
        let pm = dir.join("pm");
        psz(&["--out", s(&pm), "solve-pm", "--dataset", s(&ds), "--subset", "all", "--mask", "Grid-4,Grid-1"])?;
        let ev = dir.join("eval");
        psz(&["--out", s(&ev), "evaluate", "--dataset", s(&ds), "--subset", "all"])?;
        let ext = dir.join("ext");
        let prefilters = pm.join("prefilters");
        psz(&["--out", s(&ext), "evaluate", "--dataset", s(&ds), "--method", "external", "--prefilters", s(&prefilters)])?;
        let tune = dir.join("tune");
        psz(&["--out", s(&tune), "tune-ae", "--dataset", s(&ds), "--match", s(&prefilters)])?;
        let cmp = dir.join("cmp");
        psz(&["--out", s(&cmp), "compare", s(&ev), s(&ext)])?;
        let mut files = Vec::new();
        for (sub, name) in [
            (&ev, "metrics.csv"),
            (&ev, "summary.csv"),
            (&ext, "metrics.csv"),
            (&ext, "summary.csv"),
            (&tune, "tune.csv"),
            (&cmp, "compare.csv"),
            (&cmp, "curves.csv"),
        ] {
            let path = sub.join(name);
            let rel = path.strip_prefix(&dir).unwrap().display().to_string();
            files.push((rel, fs::read(&path).map_err(|e| e.to_string())?));
        }
        Ok(files)
    };
    let (a, b) = (pipeline("a")?, pipeline("b")?);
    let differing: Vec<&str> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| x.1 != y.1)
        .map(|(x, _)| x.0.as_str())
        .collect();
    verdict(
        differing.is_empty(),
        format!("{} CSV files over two full pipeline runs; differing: {differing:?}", a.len()),
    )
}

fn main() -> ExitCode {
    let root = tempdir().unwrap();
    let mut failures = 0;
    let mut report = |name: &str, f: &dyn Fn() -> Outcome| {
        let started = Instant::now();
        let outcome = f();
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} [{secs:.1} s]"),
            Err(detail) => {
                failures += 1;
                println!("FAIL {name}: {detail} [{secs:.1} s]");
            }
        }
    };

    report("ism-oracle", &ism_oracle_check);
    report("pm-oracle", &pm_oracle_check);
    report("regularization-shrinkage", &shrinkage_check);
    report("regularization-tuning", &|| tuning_check(root.path()));
    report("metric-oracles", &metric_check);
    match desk_dataset(root.path()) {
        Ok(desk) => {
            report("pm-sparsity-trend", &|| sparsity_check(&desk));
            report("pm-contraction-trend", &|| contraction_check(&desk));
        }
        Err(e) => {
            report("pm-sparsity-trend", &|| Err(e.clone()));
            report("pm-contraction-trend", &|| Err(e.clone()));
        }
    }
    report("cli-determinism", &|| determinism_check(root.path()));

    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
