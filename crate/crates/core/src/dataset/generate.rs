use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::format::{write_tensor, TensorWriter};
use super::manifest::*;
use crate::config::SceneConfig;
use crate::error::{PszError, Result};
use crate::geometry::Point3;
use crate::room::simulate_atf;
use crate::scene::{make_scene, Scene};

/// Samples simulated per parallel batch before being streamed to disk.
const BATCH: usize = 16;

/// Draws `n` virtual-source positions from the scene's annulus.
pub fn sample_sources(scene: &Scene, n: usize, seed: u64) -> Vec<Point3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| scene.sample_virtual_source(&mut rng))
        .collect()
}

/// Random disjoint train/val/test partition of `0..n`, sorted within each
/// split. Uses its own stream so it never perturbs source sampling.
pub fn make_splits(n: usize, fractions: [f64; 3], seed: u64) -> Result<Splits> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f))
        || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(PszError::InvalidInput(format!(
            "split fractions must be in [0, 1] and sum to 1, got {fractions:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_val = (((n as f64) * fractions[1]).round() as usize).min(n);
    let n_test = (((n as f64) * fractions[2]).round() as usize).min(n - n_val);
    let n_train = n - n_val - n_test;
    let take = |count: usize, from: usize| {
        let mut v = order[from..from + count].to_vec();
        v.sort_unstable();
        v
    };
    Ok(Splits {
        train: take(n_train, 0),
        val: take(n_val, n_train),
        test: take(n_test, n_train + n_val),
    })
}

/// Bright-zone targets of one virtual source: the control grid and the
/// monitor grid, both taken from a single simulation.
pub fn simulate_targets(
    scene: &Scene,
    source: &Point3,
) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    let receivers = [
        &scene.control_bright.points[..],
        &scene.monitor_bright.points[..],
    ]
    .concat();
    let atf = simulate_atf(
        &scene.room,
        &[*source],
        &receivers,
        &scene.freqs,
        scene.max_order,
    )?;
    let (nc, k_len) = (scene.control_bright.len(), scene.freqs.len());
    let mut control = Vec::with_capacity(k_len * nc);
    let mut monitor = Vec::with_capacity(k_len * scene.monitor_bright.len());
    for k in 0..k_len {
        let block = atf.slice(k);
        control.extend_from_slice(&block[..nc]);
        monitor.extend_from_slice(&block[nc..]);
    }
    Ok((control, monitor))
}

/// Simulates `config.dataset.samples` virtual sources and writes a dataset
/// directory: the two fixed local-room tensors, the stacked per-sample
/// targets and a manifest. `progress` is called after each batch with the
/// number of samples done.
pub fn generate_dataset(
    config: &SceneConfig,
    out_dir: &Path,
    mut progress: impl FnMut(usize, usize),
) -> Result<DatasetManifest> {
    let n = config.dataset.samples;
    let seed = config.dataset.seed;
    if n == 0 {
        return Err(PszError::InvalidInput(
            "dataset needs at least one sample".into(),
        ));
    }
    let scene = make_scene(config)?;
    let splits = make_splits(n, config.dataset.split, seed)?;
    std::fs::create_dir_all(out_dir).map_err(|e| PszError::io(out_dir, e))?;

    let k_len = scene.freqs.len();
    let speakers = &scene.array.positions;
    let control_pts = scene.control_points();
    let monitor_pts = scene.monitor_points();
    let counts = Counts {
        samples: n,
        freqs: k_len,
        control_grid: [scene.control_bright.nx, scene.control_bright.ny],
        monitor_grid: [scene.monitor_bright.nx, scene.monitor_bright.ny],
        speakers: speakers.len(),
        control_rows: control_pts.len(),
        monitor_rows: monitor_pts.len(),
    };

    let mut manifest = DatasetManifest {
        schema_version: MANIFEST_VERSION,
        format: "PSZD".into(),
        config_hash: config.scene_hash(),
        config: config.clone(),
        counts,
        freqs_hz: scene.freqs.freqs().to_vec(),
        seed,
        max_order: scene.max_order,
        reference_speaker: scene.reference_speaker(),
        source_positions: Vec::new(),
        splits,
        files: BTreeMap::new(),
    };
    let dims = manifest.expected_dims();

    let mut record = |key: &str, sha: String| {
        manifest.files.insert(
            key.to_string(),
            FileEntry {
                path: format!("{key}.pszd"),
                dims: dims[key].clone(),
                sha256: sha,
            },
        );
    };
    let file = |key: &str| out_dir.join(format!("{key}.pszd"));

    let h_ctrl = simulate_atf(
        &scene.room,
        speakers,
        &control_pts,
        &scene.freqs,
        scene.max_order,
    )?;
    record(
        H_CTRL,
        write_tensor(&file(H_CTRL), &dims[H_CTRL], h_ctrl.data())?,
    );
    drop(h_ctrl);
    let h_mon = simulate_atf(
        &scene.room,
        speakers,
        &monitor_pts,
        &scene.freqs,
        scene.max_order,
    )?;
    record(
        H_MON,
        write_tensor(&file(H_MON), &dims[H_MON], h_mon.data())?,
    );
    drop(h_mon);

    let sources = sample_sources(&scene, n, seed);
    let mut control_out = TensorWriter::create(&file(CONTROL_TARGETS), &dims[CONTROL_TARGETS])?;
    let mut monitor_out = TensorWriter::create(&file(MONITOR_TARGETS), &dims[MONITOR_TARGETS])?;
    let mut done = 0;
    for batch in sources.chunks(BATCH) {
        let simulated = batch
            .par_iter()
            .map(|s| simulate_targets(&scene, s))
            .collect::<Result<Vec<_>>>()?;
        for (control, monitor) in &simulated {
            control_out.write(control)?;
            monitor_out.write(monitor)?;
        }
        done += batch.len();
        progress(done, n);
    }
    record(CONTROL_TARGETS, control_out.finish()?);
    record(MONITOR_TARGETS, monitor_out.finish()?);

    manifest.source_positions = sources.iter().map(|&p| p.into()).collect();
    let path = out_dir.join(MANIFEST_FILE);
    std::fs::write(&path, manifest.to_json()).map_err(|e| PszError::io(&path, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_are_disjoint_and_reproducible() {
        let s = make_splits(200, [0.9, 0.05, 0.05], 3).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (180, 10, 10));
        let mut all: Vec<usize> = s
            .train
            .iter()
            .chain(&s.val)
            .chain(&s.test)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..200).collect::<Vec<_>>());
        assert_eq!(s, make_splits(200, [0.9, 0.05, 0.05], 3).unwrap());
        assert_ne!(s, make_splits(200, [0.9, 0.05, 0.05], 4).unwrap());
        assert!(make_splits(10, [0.5, 0.5, 0.5], 1).is_err());
        let one = make_splits(1, [0.9, 0.05, 0.05], 1).unwrap();
        assert_eq!(one.train, vec![0]);
    }
}
