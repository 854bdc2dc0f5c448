//! Reproduction metrics evaluated on the monitor grid.
//!
//! * RE: relative mean energy error, referenced to the bright-zone target
//!   energy in both zones.
//! * AC: bright-to-dark mean energy ratio.
//! * AE: total array energy relative to a single reference speaker driven to
//!   produce the same mean bright-zone energy.
//!
//! Broadband variants sum energies over frequency before taking the ratio.
//! Exact zeros in a ratio are clamped to +/-300 dB and flagged.

use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{PszError, Result};
use crate::room::AtfTensor;
use crate::scene::GridTensor;
use crate::solver::{reproduce_atf, PreFilterSet};

pub const CLAMP_DB: f64 = 300.0;

/// A level in dB, with a flag set when the value was clamped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Db {
    pub db: f64,
    pub clamped: bool,
}

impl Db {
    /// `10 log10(num / den)` for energies, clamped at exact zeros.
    pub fn energy_ratio(num: f64, den: f64) -> Db {
        if den == 0.0 {
            Db {
                db: CLAMP_DB,
                clamped: true,
            }
        } else if num == 0.0 {
            Db {
                db: -CLAMP_DB,
                clamped: true,
            }
        } else {
            Db {
                db: 10.0 * (num / den).log10(),
                clamped: false,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Zone {
    Bright,
    Dark,
}

pub fn mean_energy(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>() / v.len() as f64
}

fn error_energy(reproduced: &[Complex64], target: &[Complex64]) -> f64 {
    reproduced
        .iter()
        .zip(target)
        .map(|(g, t)| (g - t).norm_sqr())
        .sum::<f64>()
        / target.len() as f64
}

/// Numerator and denominator energies of RE for one frequency.
fn re_energies(
    reproduced: &[Complex64],
    target_ref: &[Complex64],
    zone: Zone,
) -> Result<(f64, f64)> {
    if reproduced.is_empty() || target_ref.is_empty() {
        return Err(PszError::InvalidInput("empty pressure vector".into()));
    }
    let num = match zone {
        Zone::Bright => {
            if reproduced.len() != target_ref.len() {
                return Err(PszError::shape(
                    "bright-zone pressures",
                    target_ref.len(),
                    reproduced.len(),
                ));
            }
            error_energy(reproduced, target_ref)
        }
        Zone::Dark => mean_energy(reproduced),
    };
    Ok((num, mean_energy(target_ref)))
}

/// RE in dB. For [`Zone::Bright`] `reproduced` is compared to
/// `target_ref`; for [`Zone::Dark`] the target is zero and `target_ref`
/// (the bright-zone target) only sets the reference energy.
pub fn relative_energy_error(
    reproduced: &[Complex64],
    target_ref: &[Complex64],
    zone: Zone,
) -> Result<Db> {
    let (num, den) = re_energies(reproduced, target_ref, zone)?;
    if den == 0.0 {
        return Err(PszError::ZeroReference(
            "bright-zone target energy is zero".into(),
        ));
    }
    Ok(Db::energy_ratio(num, den))
}

/// AC in dB; zero dark-zone energy clamps to +300 dB.
pub fn acoustic_contrast(g_bright: &[Complex64], g_dark: &[Complex64]) -> Result<Db> {
    if g_bright.is_empty() || g_dark.is_empty() {
        return Err(PszError::InvalidInput("empty pressure vector".into()));
    }
    Ok(Db::energy_ratio(mean_energy(g_bright), mean_energy(g_dark)))
}

/// bAC: per-frequency mean energies are summed before the ratio.
pub fn acoustic_contrast_broadband(
    g_bright: &[&[Complex64]],
    g_dark: &[&[Complex64]],
) -> Result<Db> {
    if g_bright.len() != g_dark.len() || g_bright.is_empty() {
        return Err(PszError::shape(
            "broadband pressures",
            g_bright.len(),
            g_dark.len(),
        ));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (b, d) in g_bright.iter().zip(g_dark) {
        if b.is_empty() || d.is_empty() {
            return Err(PszError::InvalidInput("empty pressure vector".into()));
        }
        num += mean_energy(b);
        den += mean_energy(d);
    }
    Ok(Db::energy_ratio(num, den))
}

/// `(sum |a_l|^2, |a_ref|^2)` for one frequency, where the reference gain
/// is `|a_ref|^2 = mean |g_B|^2 / mean |H'_B(m, ref)|^2`.
fn ae_energies(
    a: &[Complex64],
    h_mon_bright: &[Complex64],
    g_bright: &[Complex64],
    ref_speaker: usize,
) -> Result<(f64, f64)> {
    let l_len = a.len();
    if l_len == 0 || ref_speaker >= l_len {
        return Err(PszError::InvalidInput(format!(
            "reference speaker {ref_speaker} out of range for {l_len} speakers"
        )));
    }
    if h_mon_bright.len() != g_bright.len() * l_len || g_bright.is_empty() {
        return Err(PszError::shape(
            "bright monitor matrix",
            format!("{} x {l_len}", g_bright.len()),
            format!("{} values", h_mon_bright.len()),
        ));
    }
    let ref_column = h_mon_bright
        .chunks_exact(l_len)
        .map(|row| row[ref_speaker].norm_sqr())
        .sum::<f64>()
        / g_bright.len() as f64;
    if ref_column == 0.0 {
        return Err(PszError::ZeroReference(format!(
            "reference speaker {ref_speaker} does not reach the bright zone"
        )));
    }
    let a_ref = mean_energy(g_bright) / ref_column;
    Ok((a.iter().map(|z| z.norm_sqr()).sum(), a_ref))
}

/// AE in dB for one frequency.
pub fn array_effort(
    a: &[Complex64],
    h_mon_bright: &[Complex64],
    g_bright: &[Complex64],
    ref_speaker: usize,
) -> Result<Db> {
    let (num, den) = ae_energies(a, h_mon_bright, g_bright, ref_speaker)?;
    if den == 0.0 {
        return Err(PszError::ZeroReference(
            "bright-zone reproduction energy is zero".into(),
        ));
    }
    Ok(Db::energy_ratio(num, den))
}

/// bAE: array and reference energies are summed over frequency first.
pub fn array_effort_broadband(
    a: &[&[Complex64]],
    h_mon_bright: &[&[Complex64]],
    g_bright: &[&[Complex64]],
    ref_speaker: usize,
) -> Result<Db> {
    if a.len() != h_mon_bright.len() || a.len() != g_bright.len() || a.is_empty() {
        return Err(PszError::shape(
            "broadband array effort inputs",
            a.len(),
            g_bright.len(),
        ));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for ((ak, hk), gk) in a.iter().zip(h_mon_bright).zip(g_bright) {
        let (n, d) = ae_energies(ak, hk, gk, ref_speaker)?;
        num += n;
        den += d;
    }
    if den == 0.0 {
        return Err(PszError::ZeroReference(
            "bright-zone reproduction energy is zero".into(),
        ));
    }
    Ok(Db::energy_ratio(num, den))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyMetrics {
    pub freq_hz: f64,
    pub re_b: Db,
    pub re_d: Db,
    pub ac: Db,
    pub ae: Db,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BroadbandMetrics {
    pub re_b: Db,
    pub re_d: Db,
    pub b_ac: Db,
    pub b_ae: Db,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub method: String,
    pub mask: String,
    pub sample: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub meta: ReportMeta,
    pub per_frequency: Vec<FrequencyMetrics>,
    pub broadband: BroadbandMetrics,
}

/// Renders pre-filters through the monitor transfer functions and scores
/// them against the bright-zone monitor target.
///
/// Rows `0..monitor_bright` of `h_mon` are the bright monitor grid in the
/// same order as `target_bright`; the remaining rows are the dark zone.
pub fn evaluate_prefilters(
    h_mon: &AtfTensor,
    monitor_bright: usize,
    target_bright: &GridTensor,
    prefilters: &PreFilterSet,
    ref_speaker: usize,
    meta: ReportMeta,
) -> Result<MetricsReport> {
    let k_len = h_mon.n_freqs();
    if target_bright.cells() != monitor_bright || target_bright.n_freqs() != k_len {
        return Err(PszError::shape(
            "monitor target",
            format!("{k_len} x {monitor_bright}"),
            format!("{} x {}", target_bright.n_freqs(), target_bright.cells()),
        ));
    }
    if monitor_bright == 0 || monitor_bright >= h_mon.receivers() {
        return Err(PszError::InvalidInput(format!(
            "monitor split {monitor_bright} leaves no dark zone in {} receivers",
            h_mon.receivers()
        )));
    }
    let field = reproduce_atf(h_mon, prefilters)?;
    let l_len = h_mon.sources();
    let mut per_frequency = Vec::with_capacity(k_len);
    let (mut re_b, mut re_d, mut ac, mut ae) = ([0.0; 2], [0.0; 2], [0.0; 2], [0.0; 2]);
    for k in 0..k_len {
        let g = field.frequency(k);
        let (g_b, g_d) = g.split_at(monitor_bright);
        let t_b = target_bright.frequency(k);
        let hb = &h_mon.slice(k)[..monitor_bright * l_len];

        let (n, d) = re_energies(g_b, t_b, Zone::Bright)?;
        if d == 0.0 {
            return Err(PszError::ZeroReference(format!(
                "zero target energy at bin {k}"
            )));
        }
        re_b[0] += n;
        re_b[1] += d;
        let (nd, _) = re_energies(g_d, t_b, Zone::Dark)?;
        re_d[0] += nd;
        re_d[1] += d;
        let (eb, ed) = (mean_energy(g_b), mean_energy(g_d));
        ac[0] += eb;
        ac[1] += ed;
        let (an, ad) = ae_energies(prefilters.frequency(k), hb, g_b, ref_speaker)?;
        if ad == 0.0 {
            return Err(PszError::ZeroReference(format!(
                "bright-zone reproduction energy is zero at bin {k}"
            )));
        }
        ae[0] += an;
        ae[1] += ad;
        per_frequency.push(FrequencyMetrics {
            freq_hz: h_mon.freqs().freqs()[k],
            re_b: Db::energy_ratio(n, d),
            re_d: Db::energy_ratio(nd, d),
            ac: Db::energy_ratio(eb, ed),
            ae: Db::energy_ratio(an, ad),
        });
    }
    Ok(MetricsReport {
        meta,
        per_frequency,
        broadband: BroadbandMetrics {
            re_b: Db::energy_ratio(re_b[0], re_b[1]),
            re_d: Db::energy_ratio(re_d[0], re_d[1]),
            b_ac: Db::energy_ratio(ac[0], ac[1]),
            b_ae: Db::energy_ratio(ae[0], ae[1]),
        },
    })
}

/// Column names of the per-frequency CSV. Frozen.
pub const CSV_HEADER: &str = "method,mask,sample,bin,freq_hz,re_b_db,re_d_db,ac_db,ae_db,clamped";

fn clamp_flags(values: [(&str, Db); 4]) -> String {
    values
        .iter()
        .filter(|(_, v)| v.clamped)
        .map(|(n, _)| *n)
        .collect::<Vec<_>>()
        .join(";")
}

impl MetricsReport {
    /// One CSV line per frequency, then a `broadband` line.
    pub fn write_csv_rows(&self, out: &mut String) {
        let m = &self.meta;
        for (k, f) in self.per_frequency.iter().enumerate() {
            let flags = clamp_flags([
                ("re_b", f.re_b),
                ("re_d", f.re_d),
                ("ac", f.ac),
                ("ae", f.ae),
            ]);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                m.method,
                m.mask,
                m.sample,
                k,
                f.freq_hz,
                f.re_b.db,
                f.re_d.db,
                f.ac.db,
                f.ae.db,
                flags
            );
        }
        let b = &self.broadband;
        let flags = clamp_flags([
            ("re_b", b.re_b),
            ("re_d", b.re_d),
            ("ac", b.b_ac),
            ("ae", b.b_ae),
        ]);
        let _ = writeln!(
            out,
            "{},{},{},broadband,,{},{},{},{},{}",
            m.method, m.mask, m.sample, b.re_b.db, b.re_d.db, b.b_ac.db, b.b_ae.db, flags
        );
    }
}

pub fn reports_to_csv(reports: &[MetricsReport]) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in reports {
        r.write_csv_rows(&mut out);
    }
    out
}

/// Test-set means of the broadband metrics for one method and mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub mask: String,
    pub samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub re_b: f64,
    pub re_d: f64,
    pub b_ac: f64,
    pub b_ae: f64,
}

/// Groups reports by `(method, mask)` in order of first appearance and
/// averages their broadband dB values.
pub fn summarize(reports: &[MetricsReport]) -> Vec<SummaryRow> {
    let mut rows: Vec<(SummaryRow, usize)> = Vec::new();
    for r in reports {
        let b = &r.broadband;
        let pos = rows
            .iter()
            .position(|(row, _)| row.method == r.meta.method && row.mask == r.meta.mask);
        let i = match pos {
            Some(i) => i,
            None => {
                rows.push((
                    SummaryRow {
                        method: r.meta.method.clone(),
                        mask: r.meta.mask.clone(),
                        samples: 0,
                        lambda: r.meta.lambda,
                        re_b: 0.0,
                        re_d: 0.0,
                        b_ac: 0.0,
                        b_ae: 0.0,
                    },
                    0,
                ));
                rows.len() - 1
            }
        };
        let (row, n) = &mut rows[i];
        row.re_b += b.re_b.db;
        row.re_d += b.re_d.db;
        row.b_ac += b.b_ac.db;
        row.b_ae += b.b_ae.db;
        *n += 1;
    }
    rows.into_iter()
        .map(|(mut row, n)| {
            let nf = n as f64;
            row.samples = n;
            row.re_b /= nf;
            row.re_d /= nf;
            row.b_ac /= nf;
            row.b_ae /= nf;
            row
        })
        .collect()
}
