//! Reference implementations kept independent of the library code paths.

#![allow(dead_code)]

use std::f64::consts::PI;

use doa_core::Complex64;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Array response built directly from the phase law, column per source.
pub fn mean_vector(n: usize, spacing_ratio: f64, theta_rad: &[f64], s: &[Complex64]) -> Vec<Complex64> {
    (0..n)
        .map(|i| {
            theta_rad
                .iter()
                .zip(s)
                .map(|(t, si)| Complex64::from_polar(1.0, 2.0 * PI * spacing_ratio * i as f64 * t.sin()) * si)
                .sum()
        })
        .collect()
}

fn central_diff<F>(f: F, h: f64) -> Vec<Complex64>
where
    F: Fn(f64) -> Vec<Complex64>,
{
    let (p, m) = (f(h), f(-h));
    p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * h)).collect()
}

/// Richardson-extrapolated central difference, O(h⁴).
fn derivative<F>(f: F, h: f64) -> Vec<Complex64>
where
    F: Fn(f64) -> Vec<Complex64>,
{
    let coarse = central_diff(&f, h);
    let fine = central_diff(&f, h / 2.0);
    fine.iter().zip(&coarse).map(|(f, c)| (4.0 * f - c) / 3.0).collect()
}

/// Deterministic-model CRB in degrees² from a finite-difference Fisher
/// information over (θ, Re s_t, Im s_t), with the per-snapshot waveform
/// parameters eliminated by Schur complement.
pub fn fd_crlb_deg2(
    n: usize,
    spacing_ratio: f64,
    angles_deg: &[f64],
    signals: &DMatrix<Complex64>,
    noise_variance: f64,
    step: f64,
) -> Vec<f64> {
    let q = angles_deg.len();
    let theta: Vec<f64> = angles_deg.iter().map(|a| a.to_radians()).collect();
    let mut info = DMatrix::<f64>::zeros(q, q);

    for t in 0..signals.ncols() {
        let s: Vec<Complex64> = signals.column(t).iter().copied().collect();
        let mut jac = DMatrix::<Complex64>::zeros(n, 3 * q);
        for p in 0..q {
            let dtheta = derivative(
                |h| {
                    let mut th = theta.clone();
                    th[p] += h;
                    mean_vector(n, spacing_ratio, &th, &s)
                },
                step,
            );
            for dir in 0..2 {
                let unit = if dir == 0 { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 1.0) };
                let ds = derivative(
                    |h| {
                        let mut sp = s.clone();
                        sp[p] += unit * h;
                        mean_vector(n, spacing_ratio, &theta, &sp)
                    },
                    step,
                );
                for i in 0..n {
                    jac[(i, q + 2 * p + dir)] = ds[i];
                }
            }
            for i in 0..n {
                jac[(i, p)] = dtheta[i];
            }
        }
        let fim = (jac.adjoint() * &jac).map(|z| 2.0 * z.re / noise_variance);
        let f_tt = fim.view((0, 0), (q, q)).into_owned();
        let f_ts = fim.view((0, q), (q, 2 * q)).into_owned();
        let f_ss = fim.view((q, q), (2 * q, 2 * q)).into_owned();
        let f_ss_inv = f_ss.try_inverse().expect("waveform block singular");
        info += f_tt - &f_ts * f_ss_inv * f_ts.transpose();
    }
    let crb = info.try_inverse().expect("angle information singular");
    let deg2 = (180.0 / PI).powi(2);
    (0..q).map(|i| crb[(i, i)] * deg2).collect()
}

pub fn complex_normal<R: Rng>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// `count` ascending angles in [lo, hi] at least `min_sep` apart.
pub fn separated_angles<R: Rng>(rng: &mut R, count: usize, lo: f64, hi: f64, min_sep: f64) -> Vec<f64> {
    loop {
        let mut a: Vec<f64> = (0..count).map(|_| rng.random_range(lo..=hi)).collect();
        a.sort_by(f64::total_cmp);
        if a.windows(2).all(|w| w[1] - w[0] >= min_sep) {
            return a;
        }
    }
}

/// Integer-degree variant of [`separated_angles`].
pub fn separated_grid_angles<R: Rng>(rng: &mut R, count: usize, lo: i32, hi: i32, min_sep: i32) -> Vec<f64> {
    loop {
        let mut a: Vec<i32> = (0..count).map(|_| rng.random_range(lo..=hi)).collect();
        a.sort();
        if a.windows(2).all(|w| w[1] - w[0] >= min_sep) {
            return a.into_iter().map(f64::from).collect();
        }
    }
}
