#![allow(dead_code)]

use mfmpe_core::{GameModel, Horizon, MeanField, Prescription, TabularAffine};
use rand::Rng;

pub fn random_distribution<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    let mut p: Vec<f64> = e.iter().map(|v| v / s).collect();
    let drift = p.iter().sum::<f64>() - 1.0;
    p[0] -= drift;
    if p[0] < 0.0 {
        p[0] = 0.0;
    }
    p
}

pub fn random_mean_field<R: Rng>(rng: &mut R, n: usize) -> MeanField {
    loop {
        if let Ok(z) = MeanField::new(random_distribution(rng, n)) {
            return z;
        }
    }
}

pub fn random_prescription<R: Rng>(rng: &mut R, n: usize, na: usize) -> Prescription {
    loop {
        if let Ok(p) = Prescription::new((0..n).map(|_| random_distribution(rng, na)).collect()) {
            return p;
        }
    }
}

/// Random affine game; with `z_free` the kernel and reward ignore `z`.
pub fn random_tabular<R: Rng>(rng: &mut R, n: usize, na: usize, z_free: bool) -> TabularAffine {
    let base: Vec<Vec<Vec<f64>>> = (0..n).map(|_| (0..na).map(|_| exact_row(rng, n)).collect()).collect();
    let kernels =
        (0..n)
            .map(|_| {
                if z_free {
                    base.clone()
                } else {
                    (0..n).map(|_| (0..na).map(|_| exact_row(rng, n)).collect()).collect()
                }
            })
            .collect();
    let r0 = (0..n).map(|_| (0..na).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let r1 = (0..n)
        .map(|_| {
            (0..na).map(|_| (0..n).map(|_| if z_free { 0.0 } else { rng.gen_range(-1.0..1.0) }).collect()).collect()
        })
        .collect();
    TabularAffine { kernels, r0, r1 }
}

/// Probability row with entries on a 1/64 lattice, so sums are exact.
fn exact_row<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut counts = vec![0u32; n];
    for _ in 0..64 {
        counts[rng.gen_range(0..n)] += 1;
    }
    counts.iter().map(|&c| c as f64 / 64.0).collect()
}

pub fn random_model<R: Rng>(
    rng: &mut R,
    n: usize,
    na: usize,
    z_free: bool,
    discount: f64,
    horizon: Horizon,
) -> GameModel {
    random_tabular(rng, n, na, z_free).model(discount, horizon).unwrap()
}
