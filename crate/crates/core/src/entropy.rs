//! Entropies in bits: Shannon, von Neumann, subentropy and the mean entropy of
//! a random basis measurement, plus the refinement inequalities they obey.

use std::f64::consts::LN_2;
use std::sync::OnceLock;

use rand::Rng;

use crate::error::Result;
use crate::linalg::{random_state, random_unitary, Matrix};
use crate::rng::seeded;
use crate::states::{to_standard_sqm, ClassicalDistribution, DensityOperator, JointDistribution};
use crate::update::{apply_instrument, random_efficient_instrument, KrausInstrument};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Supremum of the subentropy over all dimensions, `(1 − γ)/ln 2`.
pub fn subentropy_supremum() -> f64 {
    (1.0 - EULER_GAMMA) / LN_2
}

/// `½ + ⅓ + … + 1/D`.
pub fn harmonic_tail(dim: usize) -> f64 {
    (2..=dim).map(|k| 1.0 / k as f64).sum()
}

/// `−Σ p log₂ p` with `0 log 0 = 0`.
pub fn shannon(p: &ClassicalDistribution) -> f64 {
    shannon_of(p.probs())
}

/// Shannon entropy of raw nonnegative weights assumed to sum to one.
pub fn shannon_of(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.log2()).sum::<f64>()
}

pub fn von_neumann(rho: &DensityOperator) -> f64 {
    shannon_of(&clean_spectrum(rho))
}

fn clean_spectrum(rho: &DensityOperator) -> Vec<f64> {
    let mut ev: Vec<f64> = rho.eigenvalues().into_iter().map(|x| x.max(0.0)).collect();
    let total: f64 = ev.iter().sum();
    ev.iter_mut().for_each(|x| *x /= total);
    ev
}

const GAUSS_NODES: usize = 20;
const LOG_RANGE: f64 = 60.0;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
fn gauss_legendre() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GAUSS_NODES;
        (0..n)
            .map(|i| {
                let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
                let mut dp = 0.0;
                for _ in 0..100 {
                    let (mut p0, mut p1) = (1.0, x);
                    for k in 2..=n {
                        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                        p0 = p1;
                        p1 = p2;
                    }
                    dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                    let step = p1 / dp;
                    x -= step;
                    if step.abs() < 1e-16 {
                        break;
                    }
                }
                (x, 2.0 / ((1.0 - x * x) * dp * dp))
            })
            .collect()
    })
}

/// Integrand of `Q = −∫₀^∞ (Π_i t/(λ_i+t) − t/(1+t)) dt` after `t = e^s`.
fn subentropy_integrand(spectrum: &[f64], s: f64) -> f64 {
    let t = s.exp();
    if t < 1.0 {
        let prod: f64 = spectrum.iter().map(|&l| t / (l + t)).product();
        (prod - t / (1.0 + t)) * t
    } else {
        let u = 1.0 / t;
        let d = u.ln_1p() - spectrum.iter().map(|&l| (l * u).ln_1p()).sum::<f64>();
        (-u.ln_1p()).exp() * d.exp_m1() * t
    }
}

/// Subentropy of a spectrum, in bits.
///
/// Evaluated through an integral representation that is smooth in the
/// eigenvalues, so degenerate spectra need no special treatment.
pub fn subentropy_of_spectrum(spectrum: &[f64]) -> f64 {
    let rule = gauss_legendre();
    let panels = (2.0 * LOG_RANGE) as usize;
    let mut total = 0.0;
    for k in 0..panels {
        let mid = -LOG_RANGE + k as f64 + 0.5;
        for &(x, w) in rule {
            total += 0.5 * w * subentropy_integrand(spectrum, mid + 0.5 * x);
        }
    }
    (-total / LN_2).max(0.0)
}

pub fn subentropy(rho: &DensityOperator) -> f64 {
    subentropy_of_spectrum(&clean_spectrum(rho))
}

/// Average Shannon entropy of a measurement in a Haar-random orthonormal basis.
pub fn mean_entropy(rho: &DensityOperator) -> f64 {
    harmonic_tail(rho.dim()) / LN_2 + subentropy(rho)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Sample mean of `H(⟨b_k|ρ|b_k⟩)` over Haar-random bases.
pub fn mean_entropy_monte_carlo(rho: &DensityOperator, samples: usize, seed: u64) -> MonteCarloEstimate {
    let mut rng = seeded(seed);
    let d = rho.dim();
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        let u = random_unitary(d, &mut rng);
        let rotated = u.adjoint().conjugate(rho.op());
        let probs: Vec<f64> = (0..d).map(|k| rotated.get(k, k).re.max(0.0)).collect();
        let h = shannon_of(&probs);
        sum += h;
        sum_sq += h * h;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    MonteCarloEstimate { mean, std_error: (var / n).sqrt(), samples }
}

/// Entropic summary of a state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntropyReport {
    /// Shannon entropy of the state's standard-measurement probabilities.
    pub shannon: f64,
    pub von_neumann: f64,
    pub subentropy: f64,
    pub mean_entropy: f64,
}

impl EntropyReport {
    pub fn of(rho: &DensityOperator) -> Self {
        let q = subentropy(rho);
        EntropyReport {
            shannon: shannon_of(to_standard_sqm(rho).probs()),
            von_neumann: von_neumann(rho),
            subentropy: q,
            mean_entropy: harmonic_tail(rho.dim()) / LN_2 + q,
        }
    }
}

/// Expected entropy decrease from measuring, for one state and instrument.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefinementGaps {
    /// `S(ρ) − Σ P(d) S(ρ_d)`.
    pub von_neumann: f64,
    /// `Q(ρ) − Σ P(d) Q(ρ_d)`.
    pub subentropy: f64,
}

pub fn refinement_gaps(rho: &DensityOperator, inst: &KrausInstrument) -> Result<RefinementGaps> {
    let outcomes = apply_instrument(rho, inst)?;
    let (mut s, mut q) = (0.0, 0.0);
    for o in &outcomes {
        if let Some(post) = &o.posterior {
            s += o.probability * von_neumann(post);
            q += o.probability * subentropy(post);
        }
    }
    Ok(RefinementGaps { von_neumann: von_neumann(rho) - s, subentropy: subentropy(rho) - q })
}

/// `H(h) − Σ_d P(d) H(h | d)`, the classical counterpart.
pub fn classical_gap(joint: &JointDistribution) -> f64 {
    let pd = joint.marginal_d();
    let conditional: f64 = pd
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(d, &p)| p * shannon(&crate::states::bayes_condition(joint, d).expect("P(d) > 0")))
        .sum();
    shannon_of(&joint.marginal_h()) - conditional
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialGaps {
    pub von_neumann: f64,
    pub subentropy: f64,
    pub classical: f64,
}

#[derive(Clone, Debug)]
pub struct RefinementReport {
    pub trials: Vec<TrialGaps>,
    pub min_gap: TrialGaps,
    /// Trials with any gap below `-tolerance`.
    pub violations: usize,
}

/// Random states, efficient instruments and classical joints at dimension `dim`.
pub fn check_refinement_inequalities(dim: usize, trials: usize, seed: u64, tolerance: f64) -> Result<RefinementReport> {
    let mut rng = seeded(seed);
    let mut out = Vec::with_capacity(trials);
    for _ in 0..trials {
        let rho = random_state(dim, &mut rng);
        let outcomes = rng.random_range(2..=dim * dim);
        let inst = random_efficient_instrument(dim, outcomes, &mut rng);
        let gaps = refinement_gaps(&rho, &inst)?;
        let joint = random_joint(dim + 1, outcomes, &mut rng)?;
        out.push(TrialGaps {
            von_neumann: gaps.von_neumann,
            subentropy: gaps.subentropy,
            classical: classical_gap(&joint),
        });
    }
    let min_gap = out.iter().fold(
        TrialGaps { von_neumann: f64::INFINITY, subentropy: f64::INFINITY, classical: f64::INFINITY },
        |m, t| TrialGaps {
            von_neumann: m.von_neumann.min(t.von_neumann),
            subentropy: m.subentropy.min(t.subentropy),
            classical: m.classical.min(t.classical),
        },
    );
    let violations = out
        .iter()
        .filter(|t| t.von_neumann < -tolerance || t.subentropy < -tolerance || t.classical < -tolerance)
        .count();
    Ok(RefinementReport { trials: out, min_gap, violations })
}

fn random_joint<R: Rng + ?Sized>(n_h: usize, n_d: usize, rng: &mut R) -> Result<JointDistribution> {
    let raw: Vec<f64> = (0..n_h * n_d).map(|_| rng.random::<f64>()).collect();
    let p = ClassicalDistribution::from_weights(&raw)?;
    JointDistribution::new(n_h, n_d, p.probs().to_vec())
}

/// Shannon entropy of measuring `rho` in the basis given by the columns of `u`.
pub fn basis_measurement_entropy(rho: &DensityOperator, u: &Matrix) -> f64 {
    let rotated = u.adjoint().conjugate(rho.op());
    let probs: Vec<f64> = (0..rho.dim()).map(|k| rotated.get(k, k).re.max(0.0)).collect();
    shannon_of(&probs)
}
