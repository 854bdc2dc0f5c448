mod common;

use common::*;
use proptest::prelude::*;
use psz_core::metrics::*;
use psz_core::room::{AtfTensor, FrequencyGrid};
use psz_core::scene::GridTensor;
use psz_core::solver::{reproduce_atf, PreFilterSet};
use psz_core::ErrorKind;
use rand::Rng;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

#[test]
fn scalar_metrics_match_naive_loops() {
    let mut r = rng(31);
    for _ in 0..200 {
        let n = r.random_range(1..40);
        let nd = r.random_range(1..40);
        let l = r.random_range(1..12);
        let g = rand_vec(&mut r, n);
        let t = rand_vec(&mut r, n);
        let gd = rand_vec(&mut r, nd);
        let re_b = relative_energy_error(&g, &t, Zone::Bright).unwrap();
        assert!(close(re_b.db, naive_re(&g, &t, false), 1e-10));
        let re_d = relative_energy_error(&gd, &t, Zone::Dark).unwrap();
        assert!(close(re_d.db, naive_re(&gd, &t, true), 1e-10));
        assert!(close(acoustic_contrast(&g, &gd).unwrap().db, naive_ac(&g, &gd), 1e-10));

        let a = rand_vec(&mut r, l);
        let hb = rand_vec(&mut r, n * l);
        let ref_speaker = r.random_range(0..l);
        let ae = array_effort(&a, &hb, &g, ref_speaker).unwrap();
        assert!(close(ae.db, naive_ae(&a, &hb, &g, ref_speaker), 1e-10));
    }
}

#[test]
fn special_values() {
    let mut r = rng(32);
    let t = rand_vec(&mut r, 25);
    let exact = relative_energy_error(&t, &t, Zone::Bright).unwrap();
    assert_eq!((exact.db, exact.clamped), (-300.0, true));
    let silent = vec![C64::new(0.0, 0.0); 25];
    assert!(relative_energy_error(&silent, &t, Zone::Bright).unwrap().db.abs() < 1e-12);
    let off: Vec<C64> = t.iter().map(|z| z * 1.1).collect();
    assert!((relative_energy_error(&off, &t, Zone::Bright).unwrap().db + 20.0).abs() < 1e-9);
    let dark = relative_energy_error(&silent, &t, Zone::Dark).unwrap();
    assert_eq!((dark.db, dark.clamped), (-300.0, true));
    assert_eq!(
        relative_energy_error(&t, &silent, Zone::Bright).unwrap_err().kind(),
        ErrorKind::Numerical
    );

    let a = rand_vec(&mut r, 16);
    let b: Vec<C64> = a.iter().rev().map(|z| z * C64::from_polar(1.0, 0.7)).collect();
    assert!(acoustic_contrast(&a, &b).unwrap().db.abs() < 1e-12);
    let quiet: Vec<C64> = a.iter().map(|z| z * 0.1).collect();
    assert!((acoustic_contrast(&a, &quiet).unwrap().db - 20.0).abs() < 1e-12);
    let zero_dark = acoustic_contrast(&a, &silent[..4]).unwrap();
    assert_eq!((zero_dark.db, zero_dark.clamped), (300.0, true));
}

#[test]
fn reference_speaker_alone_has_zero_effort() {
    let mut r = rng(33);
    let (m, l, reference) = (20, 7, 3);
    let hb = rand_vec(&mut r, m * l);
    let mut a = vec![C64::new(0.0, 0.0); l];
    a[reference] = C64::new(0.3, -1.2);
    let g = matvec(&hb, m, l, &a);
    let ae = array_effort(&a, &hb, &g, reference).unwrap();
    assert!(ae.db.abs() < 1e-12, "{}", ae.db);

    let a2: Vec<C64> = a.iter().map(|z| z * 2.0).collect();
    let g2 = matvec(&hb, m, l, &a2);
    assert!((array_effort(&a2, &hb, &g2, reference).unwrap().db - ae.db).abs() < 1e-12);

    let silent = vec![C64::new(0.0, 0.0); m];
    let err = array_effort(&a, &hb, &silent, reference).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Numerical);
}

#[test]
fn broadband_aggregates_energy() {
    let mut r = rng(34);
    let k = 9;
    let gb: Vec<Vec<C64>> = (0..k).map(|_| rand_vec(&mut r, 12)).collect();
    let gd: Vec<Vec<C64>> = (0..k).map(|_| rand_vec(&mut r, 12)).collect();
    fn refs(v: &[Vec<C64>]) -> Vec<&[C64]> {
        v.iter().map(|x| x.as_slice()).collect()
    }
    let bac = acoustic_contrast_broadband(&refs(&gb), &refs(&gd)).unwrap();
    // Equal point counts per bin: concatenation gives the same ratio.
    let cat_b: Vec<C64> = gb.concat();
    let cat_d: Vec<C64> = gd.concat();
    assert!((bac.db - naive_ac(&cat_b, &cat_d)).abs() < 1e-10);

    let l = 5;
    let a: Vec<Vec<C64>> = (0..k).map(|_| rand_vec(&mut r, l)).collect();
    let hb: Vec<Vec<C64>> = (0..k).map(|_| rand_vec(&mut r, 12 * l)).collect();
    let bae = array_effort_broadband(&refs(&a), &refs(&hb), &refs(&gb), 2).unwrap();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..k {
        num += a[i].iter().map(|z| z.norm_sqr()).sum::<f64>();
        let col: f64 = (0..12).map(|m| hb[i][m * l + 2].norm_sqr()).sum::<f64>() / 12.0;
        den += mean_energy(&gb[i]) / col;
    }
    assert!((bae.db - db(num / den)).abs() < 1e-10);
}

#[test]
fn reproduce_matches_triple_loop() {
    let mut r = rng(35);
    let (k, m, l) = (6, 11, 4);
    let freqs = FrequencyGrid::uniform(k, 2000.0).unwrap();
    let data = rand_vec(&mut r, k * m * l);
    let h = AtfTensor::new(data.clone(), m, l, freqs.clone()).unwrap();
    let a = rand_vec(&mut r, k * l);
    let set = PreFilterSet::new(a.clone(), l, freqs).unwrap();
    let field = reproduce_atf(&h, &set).unwrap();
    for kk in 0..k {
        for mm in 0..m {
            let mut want = C64::new(0.0, 0.0);
            for ll in 0..l {
                want += data[(kk * m + mm) * l + ll] * a[kk * l + ll];
            }
            assert!((field.frequency(kk)[mm] - want).norm() < 1e-14);
        }
    }
}

fn report_fixture(seed: u64) -> (AtfTensor, GridTensor, PreFilterSet) {
    let mut r = rng(seed);
    let (k, nb, nd, l) = (5, 9, 9, 4);
    let freqs = FrequencyGrid::uniform(k, 2000.0).unwrap();
    let h = AtfTensor::new(rand_vec(&mut r, k * (nb + nd) * l), nb + nd, l, freqs.clone()).unwrap();
    let target = GridTensor::new(rand_vec(&mut r, k * nb), k, 3, 3).unwrap();
    let a = PreFilterSet::new(rand_vec(&mut r, k * l), l, freqs).unwrap();
    (h, target, a)
}

fn meta() -> ReportMeta {
    ReportMeta {
        method: "pm".into(),
        mask: "Grid-12".into(),
        sample: 0,
        lambda: Some(1e-2),
        seed: None,
        config_hash: "x".into(),
    }
}

#[test]
fn report_agrees_with_scalar_metrics() {
    let (h, target, a) = report_fixture(36);
    let nb = 9;
    let report = evaluate_prefilters(&h, nb, &target, &a, 1, meta()).unwrap();
    let field = reproduce_atf(&h, &a).unwrap();
    let l = h.sources();
    for (k, row) in report.per_frequency.iter().enumerate() {
        let (gb, gd) = field.frequency(k).split_at(nb);
        let t = target.frequency(k);
        assert!(close(row.re_b.db, naive_re(gb, t, false), 1e-10));
        assert!(close(row.re_d.db, naive_re(gd, t, true), 1e-10));
        assert!(close(row.ac.db, naive_ac(gb, gd), 1e-10));
        let hb = &h.slice(k)[..nb * l];
        assert!(close(row.ae.db, naive_ae(a.frequency(k), hb, gb, 1), 1e-10));
    }
    let csv = reports_to_csv(std::slice::from_ref(&report));
    assert_eq!(csv.lines().count(), 1 + h.n_freqs() + 1);
    assert!(csv.starts_with(CSV_HEADER));
}

#[test]
fn summary_averages_broadband_db() {
    let mut reports = Vec::new();
    for s in 0..3 {
        let (h, target, a) = report_fixture(40 + s);
        let mut m = meta();
        m.sample = s as usize;
        reports.push(evaluate_prefilters(&h, 9, &target, &a, 0, m).unwrap());
    }
    let rows = summarize(&reports);
    assert_eq!(rows.len(), 1);
    let want: f64 = reports.iter().map(|r| r.broadband.re_b.db).sum::<f64>() / 3.0;
    assert!((rows[0].re_b - want).abs() < 1e-12);
    assert_eq!(rows[0].samples, 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn energy_ratios_ignore_global_phase(seed in any::<u64>(), phase in 0.0..6.28f64) {
        let (h, target, a) = report_fixture(seed);
        let base = evaluate_prefilters(&h, 9, &target, &a, 2, meta()).unwrap();
        let rotated = a.scaled(C64::from_polar(1.0, phase));
        let turned = evaluate_prefilters(&h, 9, &target, &rotated, 2, meta()).unwrap();
        prop_assert!((base.broadband.b_ac.db - turned.broadband.b_ac.db).abs() < 1e-9);
        prop_assert!((base.broadband.b_ae.db - turned.broadband.b_ae.db).abs() < 1e-9);
        // AC and AE are scale free, RE is not.
        let doubled = evaluate_prefilters(&h, 9, &target, &a.scaled(C64::new(2.0, 0.0)), 2, meta()).unwrap();
        prop_assert!((base.broadband.b_ac.db - doubled.broadband.b_ac.db).abs() < 1e-9);
        prop_assert!((base.broadband.b_ae.db - doubled.broadband.b_ae.db).abs() < 1e-9);
        prop_assert!((base.broadband.re_b.db - doubled.broadband.re_b.db).abs() > 1e-6);
    }
}
