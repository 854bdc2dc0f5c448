//! Independent reference implementations shared by the integration tests.
//! Deliberately naive: plain loops, direct exponentials, real arithmetic.

#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type C64 = Complex64;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_c(r: &mut impl Rng) -> C64 {
    C64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))
}

pub fn rand_vec(r: &mut impl Rng, n: usize) -> Vec<C64> {
    (0..n).map(|_| rand_c(r)).collect()
}

pub fn rel_err(a: &[C64], b: &[C64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}

/// `exp(-j 2 pi f d / c) / (4 pi d)` evaluated with a direct exponential.
pub fn green(d: f64, f: f64, c: f64) -> C64 {
    let phase = -2.0 * PI * f * d / c;
    C64::new(phase.cos(), phase.sin()) / (4.0 * PI * d)
}

/// Images in the Allen-Berkley parametrization as `(distance, amplitude)`:
/// per axis, mirror flag `q` in {0, 1} and lattice index `n`, image
/// coordinate `(1 - 2q) s + 2 n L`, wall hits `|n - q| + |n|`.
pub fn oracle_images(
    dims: [f64; 3],
    beta: f64,
    src: [f64; 3],
    rcv: [f64; 3],
    max_order: i64,
) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let span = max_order + 1;
    for qx in 0..2i64 {
        for qy in 0..2i64 {
            for qz in 0..2i64 {
                for nx in -span..=span {
                    for ny in -span..=span {
                        for nz in -span..=span {
                            let q = [qx, qy, qz];
                            let n = [nx, ny, nz];
                            let hits: i64 = (0..3).map(|i| (n[i] - q[i]).abs() + n[i].abs()).sum();
                            if hits > max_order {
                                continue;
                            }
                            let mut d2 = 0.0;
                            for i in 0..3 {
                                let img = (1 - 2 * q[i]) as f64 * src[i] + 2.0 * n[i] as f64 * dims[i];
                                d2 += (img - rcv[i]) * (img - rcv[i]);
                            }
                            out.push((d2.sqrt(), beta.powi(hits as i32)));
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn ism_oracle(
    dims: [f64; 3],
    beta: f64,
    c: f64,
    src: [f64; 3],
    rcv: [f64; 3],
    freqs: &[f64],
    max_order: i64,
) -> Vec<C64> {
    let images = oracle_images(dims, beta, src, rcv, max_order);
    freqs
        .iter()
        .map(|&f| images.iter().map(|&(d, amp)| green(d, f, c) * amp).sum())
        .collect()
}

/// Sum of image-term magnitudes, the natural scale for rounding error in
/// the image sum at any single frequency.
pub fn ism_term_scale(dims: [f64; 3], beta: f64, src: [f64; 3], rcv: [f64; 3], max_order: i64) -> f64 {
    oracle_images(dims, beta, src, rcv, max_order)
        .iter()
        .map(|&(d, amp)| amp / (4.0 * PI * d))
        .sum()
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Regularized least squares through the real `2M x 2L` embedding
/// `[[Re H, -Im H], [Im H, Re H]]`. Uses the normal equations when
/// `lambda > 0` or the system is overdetermined, otherwise the
/// minimum-norm form `A^T (A A^T)^-1 b`.
pub fn pm_oracle(h: &[C64], m: usize, l: usize, g: &[C64], lambda: f64) -> Vec<C64> {
    let (rm, rl) = (2 * m, 2 * l);
    let mut a = vec![vec![0.0; rl]; rm];
    for i in 0..m {
        for j in 0..l {
            let z = h[i * l + j];
            a[i][j] = z.re;
            a[i][j + l] = -z.im;
            a[i + m][j] = z.im;
            a[i + m][j + l] = z.re;
        }
    }
    let b: Vec<f64> = g.iter().map(|z| z.re).chain(g.iter().map(|z| z.im)).collect();
    let x = if lambda > 0.0 || m >= l {
        let mut n = vec![vec![0.0; rl]; rl];
        let mut rhs = vec![0.0; rl];
        for p in 0..rl {
            for q in 0..rl {
                n[p][q] = (0..rm).map(|i| a[i][p] * a[i][q]).sum();
            }
            n[p][p] += lambda;
            rhs[p] = (0..rm).map(|i| a[i][p] * b[i]).sum();
        }
        gauss_solve(n, rhs)
    } else {
        let mut n = vec![vec![0.0; rm]; rm];
        for p in 0..rm {
            for q in 0..rm {
                n[p][q] = (0..rl).map(|j| a[p][j] * a[q][j]).sum();
            }
        }
        let y = gauss_solve(n, b);
        (0..rl).map(|j| (0..rm).map(|i| a[i][j] * y[i]).sum()).collect()
    };
    (0..l).map(|j| C64::new(x[j], x[j + l])).collect()
}

/// `H a` for a row-major `m x l` matrix.
pub fn matvec(h: &[C64], m: usize, l: usize, a: &[C64]) -> Vec<C64> {
    (0..m)
        .map(|i| {
            let mut s = C64::new(0.0, 0.0);
            for j in 0..l {
                s += h[i * l + j] * a[j];
            }
            s
        })
        .collect()
}

pub fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn naive_re(g: &[C64], target: &[C64], dark: bool) -> f64 {
    let mut err = 0.0;
    for i in 0..g.len() {
        let e = if dark { g[i] } else { g[i] - target[i] };
        err += e.re * e.re + e.im * e.im;
    }
    err /= g.len() as f64;
    let mut refe = 0.0;
    for t in target {
        refe += t.re * t.re + t.im * t.im;
    }
    refe /= target.len() as f64;
    db(err / refe)
}

pub fn naive_ac(gb: &[C64], gd: &[C64]) -> f64 {
    let mut eb = 0.0;
    for z in gb {
        eb += z.re * z.re + z.im * z.im;
    }
    let mut ed = 0.0;
    for z in gd {
        ed += z.re * z.re + z.im * z.im;
    }
    db((eb / gb.len() as f64) / (ed / gd.len() as f64))
}

/// AE with `h_b` row-major `(M_B, L)`.
pub fn naive_ae(a: &[C64], h_b: &[C64], g_b: &[C64], r: usize) -> f64 {
    let l = a.len();
    let mut eff = 0.0;
    for z in a {
        eff += z.re * z.re + z.im * z.im;
    }
    let mut col = 0.0;
    let mut gb = 0.0;
    for m in 0..g_b.len() {
        col += h_b[m * l + r].norm_sqr();
        gb += g_b[m].norm_sqr();
    }
    db(eff / (gb / col))
}
