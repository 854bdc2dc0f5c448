//! Frequency-domain room acoustics for shoebox rooms.
//!
//! Transfer functions are built by summing free-field Green's functions over
//! the image-source lattice of a rectangular room. Each image carries the
//! amplitude `beta^n`, where `n` is its total number of wall reflections and
//! `beta` is a single, frequency-independent reflection coefficient derived
//! from the room's RT60 through Sabine's formula.
//!
//! No time-domain impulse response is ever formed: the sum over images is
//! evaluated directly at each requested frequency.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PszError, Result};
use crate::geometry::Point3;

/// Sabine's constant in s/m, for air at room temperature.
pub const SABINE_CONSTANT: f64 = 0.1611;

pub const DEFAULT_SPEED_OF_SOUND: f64 = 343.0;

/// Upper edge of the supported band in Hz.
pub const MAX_FREQUENCY_HZ: f64 = 2000.0;

/// Rectangular room with uniform wall absorption.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    /// Side lengths `(Lx, Ly, Lz)` in metres.
    pub dims: [f64; 3],
    /// Reverberation time in seconds. Zero means anechoic.
    pub rt60: f64,
    pub speed_of_sound: f64,
}

impl RoomSpec {
    pub fn new(dims: [f64; 3], rt60: f64, speed_of_sound: f64) -> Result<Self> {
        let room = RoomSpec {
            dims,
            rt60,
            speed_of_sound,
        };
        room.validate()?;
        Ok(room)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.dims.iter().all(|d| d.is_finite() && *d > 0.0) {
            return Err(PszError::InvalidInput(format!(
                "room dimensions must be positive, got {:?}",
                self.dims
            )));
        }
        if !(self.rt60.is_finite() && self.rt60 >= 0.0) {
            return Err(PszError::InvalidInput(format!(
                "rt60 must be finite and non-negative, got {}",
                self.rt60
            )));
        }
        if !(self.speed_of_sound.is_finite() && self.speed_of_sound > 0.0) {
            return Err(PszError::InvalidInput(format!(
                "speed of sound must be positive, got {}",
                self.speed_of_sound
            )));
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        self.dims.iter().product()
    }

    pub fn surface_area(&self) -> f64 {
        let [lx, ly, lz] = self.dims;
        2.0 * (lx * ly + lx * lz + ly * lz)
    }

    pub fn center(&self) -> Point3 {
        Point3::new(self.dims[0] / 2.0, self.dims[1] / 2.0, self.dims[2] / 2.0)
    }

    /// True when `p` lies strictly inside the room.
    pub fn contains(&self, p: &Point3) -> bool {
        let c = [p.x, p.y, p.z];
        c.iter()
            .zip(self.dims.iter())
            .all(|(v, d)| v.is_finite() && *v > 0.0 && v < d)
    }

    /// Reflection order at which the latest image arrival exceeds RT60:
    /// `ceil(c * rt60 / min_dim) + 1`.
    pub fn default_max_order(&self) -> u32 {
        let min_dim = self.dims.iter().copied().fold(f64::INFINITY, f64::min);
        (self.speed_of_sound * self.rt60 / min_dim).ceil() as u32 + 1
    }

    pub fn reflection_coefficient(&self) -> Result<f64> {
        rt60_to_reflection(self)
    }
}

/// Converts the room's RT60 to a uniform wall reflection coefficient.
///
/// Sabine gives the mean absorption `alpha = 0.1611 V / (S RT60)`, and the
/// pressure reflection coefficient is `sqrt(1 - alpha)`. An RT60 of exactly
/// zero is treated as an anechoic room (`beta = 0`).
pub fn rt60_to_reflection(room: &RoomSpec) -> Result<f64> {
    room.validate()?;
    if room.rt60 == 0.0 {
        return Ok(0.0);
    }
    let alpha = SABINE_CONSTANT * room.volume() / (room.surface_area() * room.rt60);
    if alpha >= 1.0 {
        return Err(PszError::Unphysical {
            rt60: room.rt60,
            alpha,
        });
    }
    Ok((1.0 - alpha).sqrt())
}

/// Ordered set of analysis frequencies in Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FrequencyGrid {
    freqs: Vec<f64>,
    /// Spacing when the grid is `k * step` starting at DC.
    #[serde(skip)]
    step: Option<f64>,
}

impl FrequencyGrid {
    /// `count` bins evenly spaced on `[0, max_hz]`, DC included.
    pub fn uniform(count: usize, max_hz: f64) -> Result<Self> {
        if count == 0 {
            return Err(PszError::InvalidInput(
                "frequency grid needs at least one bin".into(),
            ));
        }
        if !(max_hz.is_finite() && max_hz > 0.0 && max_hz <= MAX_FREQUENCY_HZ) {
            return Err(PszError::InvalidInput(format!(
                "max frequency must lie in (0, {MAX_FREQUENCY_HZ}], got {max_hz}"
            )));
        }
        if count == 1 {
            return Self::from_values(vec![0.0]);
        }
        let n = (count - 1) as f64;
        let step = max_hz / n;
        // `k * step` can overshoot `max_hz` by an ulp at the last bin.
        let freqs = (0..count).map(|k| k as f64 * max_hz / n).collect();
        Ok(FrequencyGrid {
            freqs,
            step: Some(step),
        })
    }

    pub fn from_values(freqs: Vec<f64>) -> Result<Self> {
        if freqs.is_empty() {
            return Err(PszError::InvalidInput("frequency grid is empty".into()));
        }
        if !freqs
            .iter()
            .all(|f| f.is_finite() && (0.0..=MAX_FREQUENCY_HZ).contains(f))
        {
            return Err(PszError::InvalidInput(format!(
                "frequencies must lie within [0, {MAX_FREQUENCY_HZ}] Hz"
            )));
        }
        if freqs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(PszError::InvalidInput(
                "frequencies must be strictly ascending".into(),
            ));
        }
        let step = detect_step(&freqs);
        Ok(FrequencyGrid { freqs, step })
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn step(&self) -> Option<f64> {
        self.step
    }
}

fn detect_step(freqs: &[f64]) -> Option<f64> {
    if freqs.len() < 2 || freqs[0] != 0.0 {
        return None;
    }
    let step = freqs[1];
    let scale = freqs[freqs.len() - 1];
    freqs
        .iter()
        .enumerate()
        .all(|(k, f)| (f - k as f64 * step).abs() <= 1e-12 * scale)
        .then_some(step)
}

impl TryFrom<Vec<f64>> for FrequencyGrid {
    type Error = PszError;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        FrequencyGrid::from_values(v)
    }
}

impl From<FrequencyGrid> for Vec<f64> {
    fn from(g: FrequencyGrid) -> Vec<f64> {
        g.freqs
    }
}

/// Complex transfer functions indexed `(frequency, receiver, source)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AtfTensor {
    data: Vec<Complex64>,
    receivers: usize,
    sources: usize,
    freqs: FrequencyGrid,
}

impl AtfTensor {
    pub fn new(
        data: Vec<Complex64>,
        receivers: usize,
        sources: usize,
        freqs: FrequencyGrid,
    ) -> Result<Self> {
        let expected = freqs.len() * receivers * sources;
        if data.len() != expected {
            return Err(PszError::shape(
                "ATF tensor",
                format!("{} x {receivers} x {sources}", freqs.len()),
                format!("{} values", data.len()),
            ));
        }
        if !data.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(PszError::InvalidInput(
                "ATF tensor has non-finite entries".into(),
            ));
        }
        Ok(AtfTensor {
            data,
            receivers,
            sources,
            freqs,
        })
    }

    pub fn freqs(&self) -> &FrequencyGrid {
        &self.freqs
    }

    pub fn n_freqs(&self) -> usize {
        self.freqs.len()
    }

    pub fn receivers(&self) -> usize {
        self.receivers
    }

    pub fn sources(&self) -> usize {
        self.sources
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.freqs.len(), self.receivers, self.sources]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn at(&self, k: usize, m: usize, l: usize) -> Complex64 {
        self.data[(k * self.receivers + m) * self.sources + l]
    }

    /// Row-major `receivers x sources` block for one frequency.
    pub fn slice(&self, k: usize) -> &[Complex64] {
        let n = self.receivers * self.sources;
        &self.data[k * n..(k + 1) * n]
    }

    pub fn matrix(&self, k: usize) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.receivers, self.sources, self.slice(k))
    }

    /// Keeps only the listed receivers, in the given order.
    pub fn select_receivers(&self, rows: &[usize]) -> Result<AtfTensor> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.receivers) {
            return Err(PszError::shape(
                "receiver selection",
                format!("index < {}", self.receivers),
                bad,
            ));
        }
        let mut data = Vec::with_capacity(self.n_freqs() * rows.len() * self.sources);
        for k in 0..self.n_freqs() {
            let block = self.slice(k);
            for &r in rows {
                data.extend_from_slice(&block[r * self.sources..(r + 1) * self.sources]);
            }
        }
        Ok(AtfTensor {
            data,
            receivers: rows.len(),
            sources: self.sources,
            freqs: self.freqs.clone(),
        })
    }

    /// Swaps the receiver and source axes.
    pub fn transposed(&self) -> AtfTensor {
        let (m, l) = (self.receivers, self.sources);
        let mut data = Vec::with_capacity(self.data.len());
        for k in 0..self.n_freqs() {
            let block = self.slice(k);
            for j in 0..l {
                data.extend((0..m).map(|i| block[i * l + j]));
            }
        }
        AtfTensor {
            data,
            receivers: l,
            sources: m,
            freqs: self.freqs.clone(),
        }
    }
}

/// Free-field Green's function `exp(-j 2 pi f d / c) / (4 pi d)`.
pub fn green_free_field(src: &Point3, rcv: &Point3, freq: f64, c: f64) -> Result<Complex64> {
    let d = src.distance(rcv);
    if d == 0.0 {
        return Err(PszError::Singular(
            "source and receiver coincide".to_string(),
        ));
    }
    Ok(Complex64::from_polar(
        1.0 / (4.0 * PI * d),
        -2.0 * PI * freq * d / c,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageSource {
    pub position: Point3,
    pub amplitude: f64,
    /// Total number of wall reflections.
    pub order: u32,
}

/// Image coordinates along one axis as `(position, reflection count)`,
/// sorted by reflection count.
fn axis_images(s: f64, len: f64, max_order: u32) -> Vec<(f64, u32)> {
    let mut out = vec![(s, 0)];
    for r in 1..=max_order {
        let rf = r as f64;
        if r % 2 == 0 {
            out.push((s + rf * len, r));
            out.push((s - rf * len, r));
        } else {
            out.push(((1.0 + rf) * len - s, r));
            out.push(((1.0 - rf) * len - s, r));
        }
    }
    out
}

/// Expands `src` into its image lattice up to `max_order` total reflections.
///
/// The first entry is always the source itself with amplitude 1.
pub fn image_sources(room: &RoomSpec, src: &Point3, max_order: u32) -> Result<Vec<ImageSource>> {
    if !room.contains(src) {
        return Err(PszError::InvalidInput(format!(
            "source {src:?} is not strictly inside the room"
        )));
    }
    let beta = rt60_to_reflection(room)?;
    let ax = axis_images(src.x, room.dims[0], max_order);
    let ay = axis_images(src.y, room.dims[1], max_order);
    let az = axis_images(src.z, room.dims[2], max_order);

    let mut images = Vec::new();
    for &(x, nx) in &ax {
        for &(y, ny) in ay.iter().take_while(|(_, n)| nx + n <= max_order) {
            for &(z, nz) in az.iter().take_while(|(_, n)| nx + ny + n <= max_order) {
                let order = nx + ny + nz;
                images.push(ImageSource {
                    position: Point3::new(x, y, z),
                    amplitude: beta.powi(order as i32),
                    order,
                });
            }
        }
    }
    Ok(images)
}

const LANES: usize = 8;

#[cfg(target_arch = "x86_64")]
static HAS_AVX2: std::sync::LazyLock<bool> =
    std::sync::LazyLock::new(|| is_x86_feature_detected!("avx2"));

#[cfg(target_arch = "x86_64")]
static HAS_AVX512: std::sync::LazyLock<bool> =
    std::sync::LazyLock::new(|| is_x86_feature_detected!("avx512f"));

/// One image's contribution `gain * z^k` over a uniform grid, with
/// `z^0..z^7` precomputed and `z^8 = c8 + j s8`.
#[derive(Clone, Copy, Default)]
struct Rotation {
    zr: [f64; LANES],
    zi: [f64; LANES],
    c8: f64,
    s8: f64,
    gain: f64,
}

/// Images applied per pass over the accumulator.
const BATCH: usize = 4;

// Adds `N` rotations in one sweep. Each element still receives the images
// in order, and only plain mul/add is used (no FMA contraction), so every
// code path and batch size rounds identically.
#[inline(always)]
fn apply_rotations<const N: usize>(rots: &[Rotation; N], re: &mut [f64], im: &mut [f64]) {
    let mut br = [0.0; N];
    let mut bi = [0.0; N];
    for n in 0..N {
        br[n] = rots[n].gain;
    }
    for (re, im) in re.chunks_exact_mut(LANES).zip(im.chunks_exact_mut(LANES)) {
        let mut r = [0.0; LANES];
        let mut i = [0.0; LANES];
        r.copy_from_slice(re);
        i.copy_from_slice(im);
        for n in 0..N {
            let rot = &rots[n];
            for j in 0..LANES {
                r[j] += br[n] * rot.zr[j] - bi[n] * rot.zi[j];
                i[j] += br[n] * rot.zi[j] + bi[n] * rot.zr[j];
            }
            let nr = br[n] * rot.c8 - bi[n] * rot.s8;
            bi[n] = br[n] * rot.s8 + bi[n] * rot.c8;
            br[n] = nr;
        }
        re.copy_from_slice(&r);
        im.copy_from_slice(&i);
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn apply_rotations_avx2<const N: usize>(
    rots: &[Rotation; N],
    re: &mut [f64],
    im: &mut [f64],
) {
    apply_rotations(rots, re, im)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
unsafe fn apply_rotations_avx512<const N: usize>(
    rots: &[Rotation; N],
    re: &mut [f64],
    im: &mut [f64],
) {
    apply_rotations(rots, re, im)
}

fn dispatch<const N: usize>(rots: &[Rotation; N], re: &mut [f64], im: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    {
        if *HAS_AVX512 {
            // SAFETY: the CPU supports AVX-512F, checked at runtime.
            return unsafe { apply_rotations_avx512(rots, re, im) };
        }
        if *HAS_AVX2 {
            // SAFETY: the CPU supports AVX2, checked at runtime.
            return unsafe { apply_rotations_avx2(rots, re, im) };
        }
    }
    apply_rotations(rots, re, im)
}

/// Running spectral sum for one (source, receiver) pair.
struct SpectrumAccumulator<'a> {
    freqs: &'a FrequencyGrid,
    c: f64,
    re: Vec<f64>,
    im: Vec<f64>,
    queue: [Rotation; BATCH],
    queued: usize,
}

impl<'a> SpectrumAccumulator<'a> {
    fn new(freqs: &'a FrequencyGrid, c: f64) -> Self {
        let padded = freqs.len().div_ceil(LANES) * LANES;
        SpectrumAccumulator {
            freqs,
            c,
            re: vec![0.0; padded],
            im: vec![0.0; padded],
            queue: [Rotation::default(); BATCH],
            queued: 0,
        }
    }

    fn reset(&mut self) {
        self.queued = 0;
        self.re.iter_mut().for_each(|v| *v = 0.0);
        self.im.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Adds `amplitude * G(image, receiver, f)` at every frequency.
    fn add(&mut self, amplitude: f64, d: f64) {
        let gain = amplitude / (4.0 * PI * d);
        match self.freqs.step() {
            Some(step) => self.add_uniform(gain, d, step),
            None => {
                for (k, f) in self.freqs.freqs().iter().enumerate() {
                    let (s, c) = (-2.0 * PI * f * d / self.c).sin_cos();
                    self.re[k] += gain * c;
                    self.im[k] += gain * s;
                }
            }
        }
    }

    // Phase rotation by repeated complex multiplication: eight lanes advance
    // together by z^8 so the inner loop vectorizes.
    fn add_uniform(&mut self, gain: f64, d: f64, step: f64) {
        let theta = -2.0 * PI * step * d / self.c;
        let (s1, c1) = theta.sin_cos();
        let mut zr = [1.0; LANES];
        let mut zi = [0.0; LANES];
        for j in 1..LANES {
            zr[j] = zr[j - 1] * c1 - zi[j - 1] * s1;
            zi[j] = zr[j - 1] * s1 + zi[j - 1] * c1;
        }
        let (r7, i7) = (zr[LANES - 1], zi[LANES - 1]);
        let (c8, s8) = (r7 * c1 - i7 * s1, r7 * s1 + i7 * c1);
        self.queue[self.queued] = Rotation {
            zr,
            zi,
            c8,
            s8,
            gain,
        };
        self.queued += 1;
        if self.queued == BATCH {
            dispatch(&self.queue, &mut self.re, &mut self.im);
            self.queued = 0;
        }
    }

    fn flush(&mut self) {
        for n in 0..self.queued {
            dispatch(&[self.queue[n]], &mut self.re, &mut self.im);
        }
        self.queued = 0;
    }

    fn values(&mut self) -> impl Iterator<Item = Complex64> + '_ {
        self.flush();
        self.re
            .iter()
            .zip(&self.im)
            .take(self.freqs.len())
            .map(|(&r, &i)| Complex64::new(r, i))
    }
}

/// Simulates the room transfer functions from every source to every
/// receiver, shape `(K, receivers, sources)`.
///
/// Images with zero amplitude are skipped, so an anechoic room reduces to
/// the direct path exactly. The summation order per entry is fixed, which
/// keeps the result independent of thread scheduling.
pub fn simulate_atf(
    room: &RoomSpec,
    sources: &[Point3],
    receivers: &[Point3],
    freqs: &FrequencyGrid,
    max_order: u32,
) -> Result<AtfTensor> {
    room.validate()?;
    if let Some(p) = receivers.iter().find(|p| !room.contains(p)) {
        return Err(PszError::InvalidInput(format!(
            "receiver {p:?} is not strictly inside the room"
        )));
    }
    let lattices = sources
        .iter()
        .map(|s| {
            image_sources(room, s, max_order).map(|imgs| {
                imgs.into_iter()
                    .filter(|i| i.amplitude != 0.0)
                    .collect::<Vec<_>>()
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let c = room.speed_of_sound;
    let k_len = freqs.len();
    let per_receiver = receivers
        .par_iter()
        .map(|rcv| {
            let mut acc = SpectrumAccumulator::new(freqs, c);
            let mut row = Vec::with_capacity(sources.len() * k_len);
            for images in &lattices {
                acc.reset();
                // Neighbouring images at the same distance (mirror pairs when
                // points share the room's mid-plane) share one phase term.
                let mut pending: Option<(f64, f64)> = None;
                for img in images {
                    let d = img.position.distance(rcv);
                    if d == 0.0 {
                        return Err(PszError::Singular(format!(
                            "receiver {rcv:?} coincides with an image source"
                        )));
                    }
                    pending = match pending {
                        Some((amp, pd)) if pd == d => Some((amp + img.amplitude, d)),
                        Some((amp, pd)) => {
                            acc.add(amp, pd);
                            Some((img.amplitude, d))
                        }
                        None => Some((img.amplitude, d)),
                    };
                }
                if let Some((amp, d)) = pending {
                    acc.add(amp, d);
                }
                row.extend(acc.values());
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;

    let (m_len, l_len) = (receivers.len(), sources.len());
    let mut data = vec![Complex64::new(0.0, 0.0); k_len * m_len * l_len];
    for (m, row) in per_receiver.iter().enumerate() {
        for l in 0..l_len {
            for k in 0..k_len {
                data[(k * m_len + m) * l_len + l] = row[l * k_len + k];
            }
        }
    }
    AtfTensor::new(data, m_len, l_len, freqs.clone())
}
