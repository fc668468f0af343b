//! Empirical checks of the synthetic-to-real generalisation bound on 1-D samples.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distances::{w1_1d, w1_1d_weighted, SampleSet};
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_SIGN_DRAWS: usize = 1000;
pub const MIN_SIGN_DRAWS: usize = 100;
const SIGN_TAG: u64 = 0x7369_676e;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `min(|a z + b|, M)`
    AbsoluteLinear,
    /// `min((a z + b)^2, M)`
    SquaredClipped,
}

/// Loss `l(h, z)` for hypothesis `h = [a, b]` acting on scalar `z` through `u = a z + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    pub lipschitz_constant: f64,
    pub bound: f64,
    pub hypothesis: [f64; 2],
}

impl LossSpec {
    pub fn new(
        kind: LossKind,
        lipschitz_constant: f64,
        bound: f64,
        hypothesis: [f64; 2],
    ) -> Result<Self> {
        if !(bound > 0.0) || !bound.is_finite() {
            return Err(Error::invalid(format!(
                "loss bound {bound} must be positive"
            )));
        }
        if hypothesis.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("hypothesis".into()));
        }
        let analytic = Self::analytic_lipschitz(kind, bound, hypothesis);
        if (lipschitz_constant - analytic).abs() > 1e-12 * analytic.max(1.0) {
            return Err(Error::invalid(format!(
                "declared Lipschitz constant {lipschitz_constant} differs from {analytic}"
            )));
        }
        Ok(Self {
            kind,
            lipschitz_constant,
            bound,
            hypothesis,
        })
    }

    pub fn absolute_linear(a: f64, b: f64, bound: f64) -> Result<Self> {
        let kind = LossKind::AbsoluteLinear;
        Self::new(
            kind,
            Self::analytic_lipschitz(kind, bound, [a, b]),
            bound,
            [a, b],
        )
    }

    pub fn squared_clipped(a: f64, b: f64, bound: f64) -> Result<Self> {
        let kind = LossKind::SquaredClipped;
        Self::new(
            kind,
            Self::analytic_lipschitz(kind, bound, [a, b]),
            bound,
            [a, b],
        )
    }

    /// Same kind and bound, different hypothesis.
    pub fn with_hypothesis(&self, a: f64, b: f64) -> Result<Self> {
        let l = Self::analytic_lipschitz(self.kind, self.bound, [a, b]);
        Self::new(self.kind, l, self.bound, [a, b])
    }

    fn analytic_lipschitz(kind: LossKind, bound: f64, [a, _]: [f64; 2]) -> f64 {
        match kind {
            LossKind::AbsoluteLinear => a.abs(),
            // The clipped square only grows while |u| <= sqrt(M).
            LossKind::SquaredClipped => 2.0 * a.abs() * bound.sqrt(),
        }
    }

    pub fn eval(&self, z: f64) -> f64 {
        let u = self.hypothesis[0] * z + self.hypothesis[1];
        match self.kind {
            LossKind::AbsoluteLinear => u.abs().min(self.bound),
            LossKind::SquaredClipped => (u * u).min(self.bound),
        }
    }

    /// Largest difference quotient over consecutive points of a grid on `[lo, hi]`.
    pub fn empirical_lipschitz(&self, lo: f64, hi: f64, steps: usize) -> f64 {
        let h = (hi - lo) / steps as f64;
        (0..steps)
            .map(|k| {
                let z = lo + k as f64 * h;
                ((self.eval(z + h) - self.eval(z)) / h).abs()
            })
            .fold(0.0, f64::max)
    }
}

fn one_d(set: &SampleSet) -> Result<()> {
    if set.dim() != 1 {
        return Err(Error::invalid(format!(
            "bound checks need 1-D samples, got dimension {}",
            set.dim()
        )));
    }
    Ok(())
}

fn mean_loss(set: &SampleSet, loss: &LossSpec) -> f64 {
    let w = set.weights_or_uniform();
    set.column(0)
        .iter()
        .zip(&w)
        .map(|(z, w)| w * loss.eval(*z))
        .sum()
}

fn exact_w1(p: &SampleSet, q: &SampleSet) -> Result<f64> {
    if p.is_uniform() && q.is_uniform() {
        w1_1d(&p.column(0), &q.column(0))
    } else {
        w1_1d_weighted(
            &p.column(0),
            &p.weights_or_uniform(),
            &q.column(0),
            &q.weights_or_uniform(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualityCheck {
    pub gap: f64,
    pub w1: f64,
    pub holds: bool,
}

/// `|E_P l - E_Q l| <= L W1(P, Q)` for one loss.
pub fn duality_gap_check(p: &SampleSet, q: &SampleSet, loss: &LossSpec) -> Result<DualityCheck> {
    one_d(p)?;
    one_d(q)?;
    let gap = (mean_loss(p, loss) - mean_loss(q, loss)).abs();
    let w1 = exact_w1(p, q)?;
    Ok(DualityCheck {
        gap,
        w1,
        holds: gap <= loss.lipschitz_constant * w1 + 1e-9,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RademacherEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_sign_draws: usize,
}

/// Monte-Carlo `E_sigma max_h |1/n sum sigma_i l(h, z_i)|`. Draw `k` uses
/// its own seeded sign vector, so a larger grid never lowers the estimate.
pub fn rademacher_estimate(
    hypothesis_grid: &[LossSpec],
    sample: &SampleSet,
    n_sign_draws: usize,
    seed: u64,
) -> Result<RademacherEstimate> {
    if hypothesis_grid.is_empty() {
        return Err(Error::invalid("hypothesis grid is empty"));
    }
    if n_sign_draws < MIN_SIGN_DRAWS {
        return Err(Error::invalid(format!(
            "need at least {MIN_SIGN_DRAWS} sign draws"
        )));
    }
    one_d(sample)?;
    let z = sample.column(0);
    let n = z.len() as f64;
    let losses: Vec<Vec<f64>> = hypothesis_grid
        .iter()
        .map(|h| z.iter().map(|v| h.eval(*v)).collect())
        .collect();
    let draws: Vec<f64> = (0..n_sign_draws)
        .into_par_iter()
        .map(|k| {
            use rand::Rng;
            let mut r = rng::stream(seed, &[SIGN_TAG, k as u64]);
            let signs: Vec<f64> = (0..z.len())
                .map(|_| if r.random::<bool>() { 1.0 } else { -1.0 })
                .collect();
            losses
                .iter()
                .map(|l| (l.iter().zip(&signs).map(|(a, s)| a * s).sum::<f64>() / n).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let m = draws.len() as f64;
    let value = draws.iter().sum::<f64>() / m;
    let var = draws.iter().map(|d| (d - value).powi(2)).sum::<f64>() / (m - 1.0);
    Ok(RademacherEstimate {
        value,
        std_error: (var / m).sqrt(),
        n_sign_draws,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub lhs: f64,
    pub w1_term: f64,
    pub rademacher_term: f64,
    pub confidence_term: f64,
    pub delta: f64,
    pub holds: bool,
}

impl BoundReport {
    pub fn rhs(&self) -> f64 {
        self.w1_term + self.rademacher_term + self.confidence_term
    }
}

/// `M sqrt(ln(1/delta) / (2n))`.
pub fn confidence_term(bound: f64, delta: f64, n: usize) -> f64 {
    bound * ((1.0 / delta).ln() / (2.0 * n as f64)).sqrt()
}

pub fn theorem_bound_check(
    p_real: &SampleSet,
    p_synth: &SampleSet,
    loss: &LossSpec,
    hypothesis_grid: &[LossSpec],
    delta: f64,
    seed: u64,
) -> Result<BoundReport> {
    theorem_bound_check_with(
        p_real,
        p_synth,
        loss,
        hypothesis_grid,
        delta,
        seed,
        DEFAULT_SIGN_DRAWS,
    )
}

/// Real-data risk minus empirical synthetic risk, against
/// `L W1 + 2 R_n + M sqrt(ln(1/delta) / 2n)` with `n` the synthetic sample size.
pub fn theorem_bound_check_with(
    p_real: &SampleSet,
    p_synth: &SampleSet,
    loss: &LossSpec,
    hypothesis_grid: &[LossSpec],
    delta: f64,
    seed: u64,
    n_sign_draws: usize,
) -> Result<BoundReport> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta {delta} outside (0, 1)")));
    }
    one_d(p_real)?;
    one_d(p_synth)?;
    let lhs = mean_loss(p_real, loss) - mean_loss(p_synth, loss);
    let w1_term = loss.lipschitz_constant * exact_w1(p_real, p_synth)?;
    let rademacher_term =
        2.0 * rademacher_estimate(hypothesis_grid, p_synth, n_sign_draws, seed)?.value;
    let confidence_term = confidence_term(loss.bound, delta, p_synth.len());
    Ok(BoundReport {
        lhs,
        w1_term,
        rademacher_term,
        confidence_term,
        delta,
        holds: lhs <= w1_term + rademacher_term + confidence_term + 1e-9,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_masses_are_tight() {
        let p = SampleSet::from_1d(&[0.0]).unwrap();
        let q = SampleSet::from_1d(&[1.0]).unwrap();
        let loss = LossSpec::absolute_linear(1.0, 0.0, 2.0).unwrap();
        let c = duality_gap_check(&p, &q, &loss).unwrap();
        assert_eq!((c.gap, c.w1, c.holds), (1.0, 1.0, true));
    }

    #[test]
    fn identical_samples() {
        let p = SampleSet::from_1d(&[0.2, -1.0, 3.0]).unwrap();
        let loss = LossSpec::squared_clipped(0.5, 0.1, 1.0).unwrap();
        let c = duality_gap_check(&p, &p, &loss).unwrap();
        assert_eq!((c.gap, c.w1, c.holds), (0.0, 0.0, true));
        let r = theorem_bound_check(&p, &p, &loss, std::slice::from_ref(&loss), 0.05, 1).unwrap();
        assert_eq!(r.w1_term, 0.0);
        assert!(r.holds);
    }

    #[test]
    fn confidence_value() {
        assert!((confidence_term(1.0, 0.05, 100) - 0.122_38).abs() < 1e-5);
    }

    #[test]
    fn declared_constant_checked() {
        assert!(LossSpec::new(LossKind::AbsoluteLinear, 2.0, 1.0, [1.0, 0.0]).is_err());
        assert!(LossSpec::new(LossKind::SquaredClipped, 4.0, 4.0, [1.0, 0.0]).is_ok());
        assert!(LossSpec::absolute_linear(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn finite_difference_lipschitz() {
        for loss in [
            LossSpec::absolute_linear(-1.7, 0.3, 2.0).unwrap(),
            LossSpec::squared_clipped(0.8, -0.2, 1.5).unwrap(),
        ] {
            let emp = loss.empirical_lipschitz(-5.0, 5.0, 200_000);
            assert!(emp <= loss.lipschitz_constant * (1.0 + 1e-6));
            assert!(emp >= loss.lipschitz_constant * 0.99);
        }
    }

    #[test]
    fn rademacher_zero_and_errors() {
        let s = SampleSet::from_1d(&[1.0, 2.0, 3.0]).unwrap();
        let zero = LossSpec::absolute_linear(0.0, 0.0, 1.0).unwrap();
        assert_eq!(
            rademacher_estimate(std::slice::from_ref(&zero), &s, 100, 0)
                .unwrap()
                .value,
            0.0
        );
        assert!(rademacher_estimate(&[], &s, 100, 0).is_err());
        assert!(rademacher_estimate(&[zero], &s, 99, 0).is_err());
    }

    #[test]
    fn larger_grid_never_lowers_estimate() {
        let s = SampleSet::from_1d(&[0.1, 0.5, -0.3, 0.9, 0.0]).unwrap();
        let g1 = vec![LossSpec::absolute_linear(1.0, 0.0, 1.0).unwrap()];
        let mut g2 = g1.clone();
        g2.push(LossSpec::absolute_linear(-0.5, 0.2, 1.0).unwrap());
        let a = rademacher_estimate(&g1, &s, 200, 4).unwrap().value;
        let b = rademacher_estimate(&g2, &s, 200, 4).unwrap().value;
        assert!(b >= a);
        assert_eq!(a, rademacher_estimate(&g1, &s, 200, 4).unwrap().value);
    }

    #[test]
    fn smaller_delta_keeps_holding() {
        let p = SampleSet::from_1d(&[0.0, 0.5, 1.0, 1.5]).unwrap();
        let q = SampleSet::from_1d(&[0.3, 0.8, 1.2, 2.0]).unwrap();
        let loss = LossSpec::absolute_linear(1.0, 0.0, 3.0).unwrap();
        let a = theorem_bound_check(&p, &q, &loss, std::slice::from_ref(&loss), 0.1, 2).unwrap();
        let b = theorem_bound_check(&p, &q, &loss, std::slice::from_ref(&loss), 0.01, 2).unwrap();
        assert!(a.holds && b.holds);
        assert!(b.confidence_term > a.confidence_term);
    }
}
