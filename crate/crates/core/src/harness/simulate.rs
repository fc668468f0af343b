use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::codec::DataMatrix;
use crate::error::{Error, Result};
use crate::models::sigmoid;
use crate::rng;

const LINEAR_TAG: u64 = 0x6c69_6e65;
const LOGISTIC_TAG: u64 = 0x6c6f_6769;

fn design<R: Rng>(
    n: usize,
    p: usize,
    beta: &[f64],
    rng: &mut R,
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    if beta.len() != p {
        return Err(Error::mismatch(format!("{p} coefficients"), beta.len()));
    }
    if n == 0 || p == 0 {
        return Err(Error::invalid("simulation needs n >= 1 and p >= 1"));
    }
    // Row by row so that a prefix of rows does not depend on n.
    let mut x = DMatrix::zeros(n, p);
    let mut eta = Vec::with_capacity(n);
    for i in 0..n {
        let mut e = 0.0;
        for j in 0..p {
            let v: f64 = StandardNormal.sample(rng);
            x[(i, j)] = v;
            e += v * beta[j];
        }
        eta.push(e);
    }
    Ok((x, eta))
}

/// `y = X beta + noise_sd * eps` with i.i.d. standard normal `X` and `eps`.
/// The response is the last column.
pub fn simulate_linear(
    n: usize,
    p: usize,
    beta: &[f64],
    noise_sd: f64,
    seed: u64,
) -> Result<DataMatrix> {
    if !(noise_sd >= 0.0) || !noise_sd.is_finite() {
        return Err(Error::invalid(format!(
            "noise_sd {noise_sd} must be finite and >= 0"
        )));
    }
    let mut rng = rng::stream(seed, &[LINEAR_TAG]);
    let (x, eta) = design(n, p, beta, &mut rng)?;
    let y: Vec<f64> = eta
        .iter()
        .map(|e| {
            let z: f64 = StandardNormal.sample(&mut rng);
            e + noise_sd * z
        })
        .collect();
    DataMatrix::from_xy(&x, &y)
}

/// Bernoulli responses with `P(y = 1 | x) = 1 / (1 + exp(-x'beta))`.
pub fn simulate_logistic(n: usize, p: usize, beta: &[f64], seed: u64) -> Result<DataMatrix> {
    let mut rng = rng::stream(seed, &[LOGISTIC_TAG]);
    let (x, eta) = design(n, p, beta, &mut rng)?;
    let y: Vec<f64> = eta
        .iter()
        .map(|e| f64::from(rng.random::<f64>() < sigmoid(*e)))
        .collect();
    DataMatrix::from_xy(&x, &y)
}
