//! Pressure matching: per-frequency Tikhonov-regularized least squares from
//! target transfer functions to loudspeaker pre-filters, and the global
//! search for the regularization weight that hits a prescribed array effort.
//!
//! Every frequency is solved through a thin SVD `H = U S V^H`, which turns
//! the regularized problem into independent scalar filters:
//!
//! ```text
//! a(lambda) = V diag(s_i / (s_i^2 + lambda)) U^H g
//! ```
//!
//! The decomposition depends only on `H`, so one factorization serves every
//! target and every `lambda`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{PszError, Result};
use crate::room::{AtfTensor, FrequencyGrid};
use crate::scene::{GridTensor, MaskPattern};

/// Complex loudspeaker gains indexed `(frequency, speaker)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreFilterSet {
    data: Vec<Complex64>,
    speakers: usize,
    freqs: FrequencyGrid,
}

impl PreFilterSet {
    pub fn new(data: Vec<Complex64>, speakers: usize, freqs: FrequencyGrid) -> Result<Self> {
        if data.len() != speakers * freqs.len() {
            return Err(PszError::shape(
                "pre-filter set",
                format!("{} x {speakers}", freqs.len()),
                format!("{} values", data.len()),
            ));
        }
        if !data.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(PszError::InvalidInput(
                "pre-filters have non-finite entries".into(),
            ));
        }
        Ok(PreFilterSet {
            data,
            speakers,
            freqs,
        })
    }

    pub fn zeros(speakers: usize, freqs: FrequencyGrid) -> Self {
        PreFilterSet {
            data: vec![Complex64::new(0.0, 0.0); speakers * freqs.len()],
            speakers,
            freqs,
        }
    }

    pub fn speakers(&self) -> usize {
        self.speakers
    }

    pub fn n_freqs(&self) -> usize {
        self.freqs.len()
    }

    pub fn freqs(&self) -> &FrequencyGrid {
        &self.freqs
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn frequency(&self, k: usize) -> &[Complex64] {
        &self.data[k * self.speakers..(k + 1) * self.speakers]
    }

    pub fn scaled(&self, factor: Complex64) -> PreFilterSet {
        PreFilterSet {
            data: self.data.iter().map(|z| z * factor).collect(),
            speakers: self.speakers,
            freqs: self.freqs.clone(),
        }
    }
}

/// Desired transfer functions: the bright-zone grid explicitly, the dark zone
/// as `dark_points` implicit zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetAtf {
    pub bright: GridTensor,
    pub dark_points: usize,
}

impl TargetAtf {
    pub fn new(bright: GridTensor, dark_points: usize) -> Result<Self> {
        if !bright
            .data()
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
        {
            return Err(PszError::InvalidInput(
                "target has non-finite entries".into(),
            ));
        }
        Ok(TargetAtf {
            bright,
            dark_points,
        })
    }
}

/// Pressures indexed `(frequency, point)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoundField {
    data: Vec<Complex64>,
    points: usize,
}

impl SoundField {
    pub fn points(&self) -> usize {
        self.points
    }

    pub fn n_freqs(&self) -> usize {
        self.data.len().checked_div(self.points).unwrap_or(0)
    }

    pub fn frequency(&self, k: usize) -> &[Complex64] {
        &self.data[k * self.points..(k + 1) * self.points]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }
}

/// `g(k) = H(k) a(k)` at every frequency.
pub fn reproduce_atf(h: &AtfTensor, a: &PreFilterSet) -> Result<SoundField> {
    if h.sources() != a.speakers() {
        return Err(PszError::shape("pre-filters", h.sources(), a.speakers()));
    }
    if h.freqs() != a.freqs() {
        return Err(PszError::shape(
            "frequency grid",
            format!("{} bins", h.n_freqs()),
            format!("{} bins (or different values)", a.n_freqs()),
        ));
    }
    let (m_len, l_len) = (h.receivers(), h.sources());
    let mut data = Vec::with_capacity(h.n_freqs() * m_len);
    for k in 0..h.n_freqs() {
        let block = h.slice(k);
        let ak = a.frequency(k);
        data.extend(block.chunks_exact(l_len).map(|row| {
            row.iter()
                .zip(ak)
                .fold(Complex64::new(0.0, 0.0), |acc, (hv, av)| acc + hv * av)
        }));
    }
    Ok(SoundField {
        data,
        points: m_len,
    })
}

/// What to do when `lambda = 0` meets a rank-deficient system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RankPolicy {
    /// Return the minimum-norm least-squares solution.
    #[default]
    MinimumNorm,
    /// Fail with [`PszError::RankDeficient`].
    Error,
}

/// Thin SVD of one system matrix, ready to solve for any target and
/// regularization weight.
#[derive(Debug, Clone)]
pub struct TikhonovSystem {
    /// `U^H`, `r x M`.
    u_adj: DMatrix<Complex64>,
    singular: Vec<f64>,
    /// `V`, `L x r`.
    v: DMatrix<Complex64>,
    rank_tol: f64,
    cols: usize,
}

impl TikhonovSystem {
    pub fn new(h: &DMatrix<Complex64>) -> Result<Self> {
        let (m, l) = h.shape();
        if m == 0 || l == 0 {
            return Err(PszError::EmptySelection);
        }
        if !h.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(PszError::InvalidInput(
                "system matrix has non-finite entries".into(),
            ));
        }
        let svd = h.clone().svd(true, true);
        let u = svd.u.expect("requested U");
        let v_t = svd.v_t.expect("requested V^T");
        let singular: Vec<f64> = svd.singular_values.iter().copied().collect();
        let s_max = singular.iter().copied().fold(0.0, f64::max);
        Ok(TikhonovSystem {
            u_adj: u.adjoint(),
            singular,
            v: v_t.adjoint(),
            rank_tol: s_max * m.max(l) as f64 * f64::EPSILON,
            cols: l,
        })
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular
    }

    /// Numerical rank.
    pub fn rank(&self) -> usize {
        self.singular.iter().filter(|&&s| s > self.rank_tol).count()
    }

    /// `U^H g`.
    pub fn project(&self, target: &DVector<Complex64>) -> Result<DVector<Complex64>> {
        if target.len() != self.u_adj.ncols() {
            return Err(PszError::shape(
                "target vector",
                self.u_adj.ncols(),
                target.len(),
            ));
        }
        Ok(&self.u_adj * target)
    }

    /// Per-component gains `s_i / (s_i^2 + lambda)`. At `lambda = 0`,
    /// numerically zero singular values are dropped or rejected.
    pub fn filter(&self, lambda: f64, policy: RankPolicy) -> Result<Vec<f64>> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(PszError::InvalidInput(format!(
                "lambda must be finite and non-negative, got {lambda}"
            )));
        }
        if lambda == 0.0 {
            let rank = self.rank();
            if policy == RankPolicy::Error && rank < self.cols {
                return Err(PszError::RankDeficient {
                    rank,
                    cols: self.cols,
                });
            }
            return Ok(self
                .singular
                .iter()
                .map(|&s| if s > self.rank_tol { 1.0 / s } else { 0.0 })
                .collect());
        }
        Ok(self
            .singular
            .iter()
            .map(|&s| s / (s * s + lambda))
            .collect())
    }

    /// `V y` for spectral coefficients `y`.
    pub fn expand(&self, coeffs: &DVector<Complex64>) -> DVector<Complex64> {
        &self.v * coeffs
    }

    pub fn v(&self) -> &DMatrix<Complex64> {
        &self.v
    }

    pub fn solve(
        &self,
        target: &DVector<Complex64>,
        lambda: f64,
        policy: RankPolicy,
    ) -> Result<DVector<Complex64>> {
        let proj = self.project(target)?;
        let gains = self.filter(lambda, policy)?;
        let coeffs =
            DVector::from_iterator(proj.len(), proj.iter().zip(&gains).map(|(c, g)| c * *g));
        Ok(self.expand(&coeffs))
    }
}

/// Minimizer of `|H a - g|^2 + lambda |a|^2` for one frequency.
///
/// At `lambda = 0` a rank-deficient `H` yields the minimum-norm solution.
pub fn pressure_match(
    h: &DMatrix<Complex64>,
    target: &DVector<Complex64>,
    lambda: f64,
) -> Result<DVector<Complex64>> {
    pressure_match_with(h, target, lambda, RankPolicy::MinimumNorm)
}

pub fn pressure_match_with(
    h: &DMatrix<Complex64>,
    target: &DVector<Complex64>,
    lambda: f64,
    policy: RankPolicy,
) -> Result<DVector<Complex64>> {
    if target.len() != h.nrows() {
        return Err(PszError::shape("target vector", h.nrows(), target.len()));
    }
    TikhonovSystem::new(h)?.solve(target, lambda, policy)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PmOptions {
    /// Keep every dark-zone control point (zero target) regardless of mask.
    pub retain_dark: bool,
    pub rank_policy: RankPolicy,
}

impl Default for PmOptions {
    fn default() -> Self {
        PmOptions {
            retain_dark: true,
            rank_policy: RankPolicy::MinimumNorm,
        }
    }
}

/// Pressure matching restricted to the control points a mask keeps.
///
/// Control rows of `h_ctrl` are the bright grid (row-major) followed by the
/// dark-zone points. One SVD per frequency is computed up front.
#[derive(Debug, Clone)]
pub struct MaskedPm {
    systems: Vec<TikhonovSystem>,
    bright_rows: Vec<usize>,
    dark_rows: usize,
    pattern: MaskPattern,
    speakers: usize,
    freqs: FrequencyGrid,
    options: PmOptions,
}

impl MaskedPm {
    pub fn new(h_ctrl: &AtfTensor, pattern: &MaskPattern, options: PmOptions) -> Result<Self> {
        let bright_cells = pattern.grid_side * pattern.grid_side;
        if h_ctrl.receivers() < bright_cells {
            return Err(PszError::shape(
                "control transfer functions",
                format!(">= {bright_cells} receivers"),
                h_ctrl.receivers(),
            ));
        }
        if pattern.side_indices.iter().any(|&i| i >= pattern.grid_side) {
            return Err(PszError::InvalidInput(format!(
                "mask {} indexes outside its {} grid",
                pattern.name, pattern.grid_side
            )));
        }
        let bright_rows = pattern.flat_indices();
        let dark_total = h_ctrl.receivers() - bright_cells;
        let dark_rows = if options.retain_dark { dark_total } else { 0 };
        let mut rows = bright_rows.clone();
        rows.extend(bright_cells..bright_cells + dark_rows);
        if rows.is_empty() {
            return Err(PszError::EmptySelection);
        }
        let selected = h_ctrl.select_receivers(&rows)?;
        let systems = (0..selected.n_freqs())
            .map(|k| TikhonovSystem::new(&selected.matrix(k)))
            .collect::<Result<Vec<_>>>()?;
        Ok(MaskedPm {
            systems,
            bright_rows,
            dark_rows,
            pattern: pattern.clone(),
            speakers: h_ctrl.sources(),
            freqs: h_ctrl.freqs().clone(),
            options,
        })
    }

    pub fn pattern(&self) -> &MaskPattern {
        &self.pattern
    }

    pub fn freqs(&self) -> &FrequencyGrid {
        &self.freqs
    }

    pub fn speakers(&self) -> usize {
        self.speakers
    }

    pub fn options(&self) -> PmOptions {
        self.options
    }

    /// Rows of the stacked system at each frequency.
    pub fn rows(&self) -> usize {
        self.bright_rows.len() + self.dark_rows
    }

    pub fn system(&self, k: usize) -> &TikhonovSystem {
        &self.systems[k]
    }

    /// Masked bright targets followed by dark-zone zeros, at frequency `k`.
    pub fn stacked_target(&self, target: &TargetAtf, k: usize) -> Result<DVector<Complex64>> {
        let [k_len, nx, ny] = target.bright.shape();
        if nx != self.pattern.grid_side || ny != self.pattern.grid_side {
            return Err(PszError::shape(
                "bright target grid",
                format!("{0} x {0}", self.pattern.grid_side),
                format!("{nx} x {ny}"),
            ));
        }
        if k_len != self.freqs.len() {
            return Err(PszError::shape(
                "target frequencies",
                self.freqs.len(),
                k_len,
            ));
        }
        if self.options.retain_dark && target.dark_points != self.dark_rows {
            return Err(PszError::shape(
                "dark-zone points",
                self.dark_rows,
                target.dark_points,
            ));
        }
        let cells = target.bright.frequency(k);
        let zero = Complex64::new(0.0, 0.0);
        Ok(DVector::from_iterator(
            self.rows(),
            self.bright_rows
                .iter()
                .map(|&i| cells[i])
                .chain(std::iter::repeat_n(zero, self.dark_rows)),
        ))
    }

    pub fn solve(&self, target: &TargetAtf, lambda: f64) -> Result<PreFilterSet> {
        let mut data = Vec::with_capacity(self.freqs.len() * self.speakers);
        for (k, system) in self.systems.iter().enumerate() {
            let g = self.stacked_target(target, k)?;
            let a = system.solve(&g, lambda, self.options.rank_policy)?;
            data.extend(a.iter());
        }
        PreFilterSet::new(data, self.speakers, self.freqs.clone())
    }
}

/// One-shot masked pressure matching with default options.
pub fn solve_masked_pm(
    h_ctrl: &AtfTensor,
    target: &TargetAtf,
    pattern: &MaskPattern,
    lambda: f64,
) -> Result<PreFilterSet> {
    MaskedPm::new(h_ctrl, pattern, PmOptions::default())?.solve(target, lambda)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuneOptions {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Allowed |bAE - target| in dB.
    pub tol_db: f64,
    pub max_iter: usize,
}

impl Default for TuneOptions {
    fn default() -> Self {
        TuneOptions {
            lambda_min: 1e-8,
            lambda_max: 1e2,
            tol_db: 0.1,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuneOutcome {
    pub lambda: f64,
    /// Mean broadband array effort at `lambda`, dB.
    pub mean_bae: f64,
    pub iterations: usize,
}

/// Evaluates the mean broadband array effort of masked pressure matching
/// over a test set as a function of `lambda`.
///
/// With `a = V y` and orthonormal `V`, `|a|^2 = |y|^2`, and the bright-zone
/// monitor energy is `y^H (W^H W) y` with `W = H'_B V`. Both reduce to
/// `r`-dimensional products, so each `lambda` costs far less than
/// re-solving and re-rendering.
pub struct AeEvaluator<'a> {
    pm: &'a MaskedPm,
    /// Per frequency: `W^H W / M'_B`.
    grams: Vec<DMatrix<Complex64>>,
    /// Per frequency: mean |H'_B(m, ref)|^2.
    ref_energy: Vec<f64>,
    /// Per sample, per frequency: `U^H g`.
    projections: Vec<Vec<DVector<Complex64>>>,
}

impl<'a> AeEvaluator<'a> {
    pub fn new(
        pm: &'a MaskedPm,
        h_mon: &AtfTensor,
        monitor_bright: usize,
        ref_speaker: usize,
        test_set: &[TargetAtf],
    ) -> Result<Self> {
        if test_set.is_empty() {
            return Err(PszError::InvalidInput("empty test set".into()));
        }
        if h_mon.sources() != pm.speakers || h_mon.freqs() != pm.freqs() {
            return Err(PszError::shape(
                "monitor transfer functions",
                format!("{} bins x {} speakers", pm.freqs.len(), pm.speakers),
                format!("{} bins x {} speakers", h_mon.n_freqs(), h_mon.sources()),
            ));
        }
        if monitor_bright == 0 || monitor_bright > h_mon.receivers() || ref_speaker >= pm.speakers {
            return Err(PszError::InvalidInput(format!(
                "bad monitor split {monitor_bright} or reference speaker {ref_speaker}"
            )));
        }
        let rows: Vec<usize> = (0..monitor_bright).collect();
        let mon_b = h_mon.select_receivers(&rows)?;
        let scale = 1.0 / monitor_bright as f64;
        let mut grams = Vec::with_capacity(pm.freqs.len());
        let mut ref_energy = Vec::with_capacity(pm.freqs.len());
        for (k, system) in pm.systems.iter().enumerate() {
            let hb = mon_b.matrix(k);
            let w = &hb * system.v();
            grams.push(w.adjoint() * &w * Complex64::new(scale, 0.0));
            ref_energy.push(
                hb.column(ref_speaker)
                    .iter()
                    .map(|z| z.norm_sqr())
                    .sum::<f64>()
                    * scale,
            );
        }
        let projections = test_set
            .iter()
            .map(|t| {
                pm.systems
                    .iter()
                    .enumerate()
                    .map(|(k, s)| s.project(&pm.stacked_target(t, k)?))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AeEvaluator {
            pm,
            grams,
            ref_energy,
            projections,
        })
    }

    /// Broadband array effort of each test sample at `lambda`, dB.
    pub fn sample_bae(&self, lambda: f64) -> Result<Vec<f64>> {
        let gains = self
            .pm
            .systems
            .iter()
            .map(|s| s.filter(lambda, self.pm.options.rank_policy))
            .collect::<Result<Vec<_>>>()?;
        self.projections
            .iter()
            .map(|proj| {
                let mut effort = 0.0;
                let mut reference = 0.0;
                for (k, c) in proj.iter().enumerate() {
                    let y = DVector::from_iterator(
                        c.len(),
                        c.iter().zip(&gains[k]).map(|(c, g)| c * *g),
                    );
                    effort += y.norm_squared();
                    let bright = (y.adjoint() * &self.grams[k] * &y)[(0, 0)].re;
                    if self.ref_energy[k] > 0.0 {
                        reference += bright / self.ref_energy[k];
                    }
                }
                if reference <= 0.0 {
                    return Err(PszError::ZeroReference(
                        "bright-zone reproduction energy is zero".into(),
                    ));
                }
                Ok(10.0 * (effort / reference).log10())
            })
            .collect()
    }

    pub fn mean_bae(&self, lambda: f64) -> Result<f64> {
        let v = self.sample_bae(lambda)?;
        Ok(v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Finds a single `lambda` for which the test-set mean bAE lies within
/// `tol_db` of `target_bae`, by bisection on `log10(lambda)`.
///
/// bAE falls as `lambda` grows, so the bracket must satisfy
/// `bAE(lambda_max) <= target <= bAE(lambda_min)`.
pub fn tune_regularization(
    evaluator: &AeEvaluator<'_>,
    target_bae: f64,
    options: TuneOptions,
) -> Result<TuneOutcome> {
    let TuneOptions {
        lambda_min,
        lambda_max,
        tol_db,
        max_iter,
    } = options;
    if !(lambda_min > 0.0 && lambda_max > lambda_min && tol_db > 0.0 && target_bae.is_finite()) {
        return Err(PszError::InvalidInput(format!(
            "bad search setup: lambda in [{lambda_min}, {lambda_max}], tol {tol_db} dB, target {target_bae}"
        )));
    }
    let mut lo = lambda_min.log10();
    let mut hi = lambda_max.log10();
    let at_min = evaluator.mean_bae(lambda_min)?;
    let at_max = evaluator.mean_bae(lambda_max)?;
    if (at_min - target_bae).abs() <= tol_db {
        return Ok(TuneOutcome {
            lambda: lambda_min,
            mean_bae: at_min,
            iterations: 0,
        });
    }
    if (at_max - target_bae).abs() <= tol_db {
        return Ok(TuneOutcome {
            lambda: lambda_max,
            mean_bae: at_max,
            iterations: 0,
        });
    }
    if !(at_max <= target_bae && target_bae <= at_min) {
        return Err(PszError::BracketMiss {
            target: target_bae,
            lambda_min,
            lambda_max,
            at_min,
            at_max,
        });
    }
    for iter in 1..=max_iter {
        let mid = 0.5 * (lo + hi);
        let lambda = 10f64.powf(mid);
        let bae = evaluator.mean_bae(lambda)?;
        if (bae - target_bae).abs() <= tol_db {
            return Ok(TuneOutcome {
                lambda,
                mean_bae: bae,
                iterations: iter,
            });
        }
        if bae > target_bae {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    Err(PszError::NoConvergence(format!(
        "bAE jumps across {target_bae:.3} dB near lambda = {:e}",
        10f64.powf(lo)
    )))
}
