#![allow(dead_code)]

pub mod oracles;
pub mod stub;

use augmentor_core::codec::DataMatrix;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

pub const BETA0: [f64; 3] = [2.0, -1.0, 0.5];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_design(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(rng))
}

/// `y = X beta + N(0, sd^2)` with standard normal design; `beta` is padded with zeros to `p`.
pub fn linear_data(seed: u64, n: usize, p: usize, beta: &[f64], sd: f64) -> DataMatrix {
    let mut r = rng(seed);
    let x = gaussian_design(&mut r, n, p);
    let noise = Normal::new(0.0, sd).unwrap();
    let y: Vec<f64> = (0..n)
        .map(|i| {
            beta.iter()
                .enumerate()
                .map(|(j, b)| x[(i, j)] * b)
                .sum::<f64>()
                + noise.sample(&mut r)
        })
        .collect();
    DataMatrix::from_xy(&x, &y).unwrap()
}

/// Same predictors, response replaced by independent centred noise.
pub fn noise_response(data: &DataMatrix, sd: f64, seed: u64) -> DataMatrix {
    let mut r = rng(seed);
    let noise = Normal::new(0.0, sd).unwrap();
    let y: Vec<f64> = (0..data.nrows()).map(|_| noise.sample(&mut r)).collect();
    DataMatrix::from_xy(&data.predictors(), &y).unwrap()
}
