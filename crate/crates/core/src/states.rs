//! Quantum states as operators and as probability vectors.
//!
//! A density operator and its vector of outcome probabilities for the standard
//! measurement carry the same information; [`to_sqm`] and [`from_sqm`] move
//! between the two. Not every probability vector is the image of a state: the
//! allowed region is tested by [`in_sqm_set`]. Classical distributions and
//! Bayes conditioning live here too.

use std::sync::Arc;

use crate::effects::{born, max_probability, solve_hermitian_from_traces, MinimalIcPovm};
use crate::error::{Error, Result};
use crate::linalg::{basis_ket, eig_hermitian, normalized, pauli_x, pauli_y, pauli_z, trace_product, Ket, Matrix};

/// Tolerance on negative eigenvalues of a density operator.
pub const STATE_PSD_TOL: f64 = 1e-10;
/// Tolerance on `|tr ρ − 1|`.
pub const TRACE_TOL: f64 = 1e-9;
/// Reconstructed operators with a smaller eigenvalue than `-NOT_A_STATE_TOL` are rejected.
pub const NOT_A_STATE_TOL: f64 = 1e-8;
/// Normalisation tolerance for classical distributions.
pub const DISTRIBUTION_TOL: f64 = 1e-12;

/// Hermitian, positive semidefinite, unit-trace operator.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator(Matrix);

impl DensityOperator {
    pub fn new(op: Matrix) -> Result<Self> {
        let eig = eig_hermitian(&op)?;
        if eig.min() < -STATE_PSD_TOL {
            return Err(Error::NotAState { reason: format!("min eigenvalue {:e}", eig.min()) });
        }
        let trace = op.trace().re;
        if (trace - 1.0).abs() > TRACE_TOL {
            return Err(Error::NotAState { reason: format!("trace {trace}") });
        }
        Ok(DensityOperator(op.hermitian_part()))
    }

    /// `|ψ⟩⟨ψ|` for the normalised `psi`.
    pub fn pure(psi: &Ket) -> Self {
        DensityOperator(Matrix::projector(&normalized(psi)))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        DensityOperator(Matrix::identity(dim).scale_real(1.0 / dim as f64))
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        DensityOperator::pure(&basis_ket(dim, index))
    }

    /// Qubit state `½(I + x σ_x + y σ_y + z σ_z)`; requires `|v| ≤ 1`.
    pub fn from_bloch(v: [f64; 3]) -> Result<Self> {
        let op = (Matrix::identity(2)
            + pauli_x().scale_real(v[0])
            + pauli_y().scale_real(v[1])
            + pauli_z().scale_real(v[2]))
        .scale_real(0.5);
        DensityOperator::new(op)
    }

    pub fn bloch_vector(&self) -> [f64; 3] {
        assert_eq!(self.dim(), 2, "Bloch vectors are defined for qubits");
        [pauli_x(), pauli_y(), pauli_z()].map(|p| trace_product(&self.0, &p).re)
    }

    /// Convex combination `Σ w_k ρ_k`; weights must form a distribution.
    pub fn mixture(weights: &[f64], states: &[&DensityOperator]) -> Result<Self> {
        ClassicalDistribution::new(weights.to_vec())?;
        let first = states.first().ok_or(Error::Empty("mixture of no states"))?;
        let mut acc = Matrix::zeros(first.dim());
        for (&w, s) in weights.iter().zip(states) {
            if s.dim() != first.dim() {
                return Err(Error::DimensionMismatch { expected: first.dim(), found: s.dim() });
            }
            acc += &s.0.scale_real(w);
        }
        Ok(DensityOperator(acc))
    }

    pub fn op(&self) -> &Matrix {
        &self.0
    }

    pub fn into_op(self) -> Matrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    /// Spectrum, descending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        eig_hermitian(&self.0).expect("density operators are Hermitian").eigenvalues
    }

    pub fn purity(&self) -> f64 {
        trace_product(&self.0, &self.0).re
    }
}

/// Validates a reconstructed Hermitian operator as a state.
///
/// Eigenvalues down to `-NOT_A_STATE_TOL` are treated as round-off: they are
/// clamped to zero and the trace renormalised.
pub fn state_from_reconstruction(m: &Matrix) -> Result<DensityOperator> {
    let eig = eig_hermitian(&m.hermitian_part())?;
    if eig.min() < -NOT_A_STATE_TOL {
        return Err(Error::NotAState { reason: format!("reconstructed min eigenvalue {:e}", eig.min()) });
    }
    let clamped = eig.apply(|x| x.max(0.0));
    let trace = clamped.trace().re;
    if (trace - 1.0).abs() > NOT_A_STATE_TOL {
        return Err(Error::NotAState { reason: format!("reconstructed trace {trace}") });
    }
    Ok(DensityOperator(clamped.scale_real(1.0 / trace).hermitian_part()))
}

/// Probability vector over the outcomes of a standard measurement.
#[derive(Clone, Debug)]
pub struct SqmVector {
    probs: Vec<f64>,
    sqm: Arc<MinimalIcPovm>,
}

impl SqmVector {
    /// Validates a point of the simplex that respects the per-outcome maxima.
    ///
    /// Entries above `λ_max(E_h)` cannot come from any state and are reported as
    /// `NotAState`.
    pub fn new(probs: Vec<f64>, sqm: Arc<MinimalIcPovm>) -> Result<Self> {
        check_simplex(&probs, sqm.len())?;
        let maxima = max_probability(&sqm.base);
        if let Some((h, (p, m))) = probs.iter().zip(&maxima).enumerate().find(|(_, (p, m))| **p > **m + 1e-9) {
            return Err(Error::NotAState { reason: format!("P({h}) = {p} exceeds the certainty bound {m}") });
        }
        Ok(SqmVector { probs, sqm })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn sqm(&self) -> &Arc<MinimalIcPovm> {
        &self.sqm
    }
}

fn check_simplex(probs: &[f64], len: usize) -> Result<()> {
    if probs.len() != len {
        return Err(Error::DimensionMismatch { expected: len, found: probs.len() });
    }
    if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < -1e-12) {
        return Err(Error::NotADistribution { reason: format!("entry {p}") });
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::NotADistribution { reason: format!("entries sum to {total}") });
    }
    Ok(())
}

pub fn to_sqm(state: &DensityOperator, sqm: &Arc<MinimalIcPovm>) -> Result<SqmVector> {
    let probs = born(state, &sqm.base)?;
    Ok(SqmVector { probs, sqm: sqm.clone() })
}

/// Probability vector of `state` over the canonical standard measurement.
pub fn to_standard_sqm(state: &DensityOperator) -> SqmVector {
    to_sqm(state, &MinimalIcPovm::standard(state.dim())).expect("dimensions agree by construction")
}

fn reconstruct_operator(probs: &[f64], sqm: &MinimalIcPovm) -> Result<Matrix> {
    let (op, _) = solve_hermitian_from_traces(&sqm.base.ops(), probs, sqm.dim())?;
    Ok(op)
}

/// The unique Hermitian operator with `tr(ρ E_h) = P(h)`, checked to be a state.
pub fn from_sqm(v: &SqmVector) -> Result<DensityOperator> {
    state_from_reconstruction(&reconstruct_operator(&v.probs, &v.sqm)?)
}

/// Why a vector is or is not in the allowed region.
#[derive(Clone, Debug)]
pub enum SqmWitness {
    State(DensityOperator),
    /// Smallest eigenvalue of the reconstructed operator.
    MinEigenvalue(f64),
}

#[derive(Clone, Debug)]
pub struct SqmMembership {
    pub member: bool,
    pub witness: SqmWitness,
}

/// Whether `probs` is the image of some density operator under `sqm`.
pub fn in_sqm_set(probs: &[f64], sqm: &MinimalIcPovm) -> Result<SqmMembership> {
    check_simplex(probs, sqm.len())?;
    let op = reconstruct_operator(probs, sqm)?;
    Ok(match state_from_reconstruction(&op) {
        Ok(state) => SqmMembership { member: true, witness: SqmWitness::State(state) },
        Err(_) => {
            let min = eig_hermitian(&op.hermitian_part())?.min();
            SqmMembership { member: false, witness: SqmWitness::MinEigenvalue(min) }
        }
    })
}

/// A probability distribution over a finite hypothesis set.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassicalDistribution(Vec<f64>);

impl ClassicalDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Empty("distribution over no outcomes"));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::NotADistribution { reason: format!("entry {p}") });
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > DISTRIBUTION_TOL {
            return Err(Error::NotADistribution { reason: format!("entries sum to {total}") });
        }
        Ok(ClassicalDistribution(probs))
    }

    /// Normalises nonnegative weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if total.is_nan() || total <= 0.0 {
            return Err(Error::NotADistribution { reason: "weights sum to zero".into() });
        }
        ClassicalDistribution::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn uniform(n: usize) -> Self {
        ClassicalDistribution(vec![1.0 / n as f64; n])
    }

    pub fn point(n: usize, index: usize) -> Self {
        let mut p = vec![0.0; n];
        p[index] = 1.0;
        ClassicalDistribution(p)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Joint distribution `P(h, d)` stored row-major in `h`.
#[derive(Clone, Debug, PartialEq)]
pub struct JointDistribution {
    n_h: usize,
    n_d: usize,
    probs: Vec<f64>,
}

impl JointDistribution {
    pub fn new(n_h: usize, n_d: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_h * n_d {
            return Err(Error::DimensionMismatch { expected: n_h * n_d, found: probs.len() });
        }
        ClassicalDistribution::new(probs.clone())?;
        Ok(JointDistribution { n_h, n_d, probs })
    }

    /// `P(h, d) = P(h) P(d | h)`.
    pub fn from_prior_and_likelihood(prior: &ClassicalDistribution, likelihood: &[Vec<f64>]) -> Result<Self> {
        let n_h = prior.len();
        let n_d = likelihood.first().map_or(0, Vec::len);
        if likelihood.len() != n_h {
            return Err(Error::DimensionMismatch { expected: n_h, found: likelihood.len() });
        }
        let mut probs = Vec::with_capacity(n_h * n_d);
        for (ph, row) in prior.probs().iter().zip(likelihood) {
            ClassicalDistribution::new(row.clone())?;
            probs.extend(row.iter().map(|l| ph * l));
        }
        JointDistribution::new(n_h, n_d, probs)
    }

    pub fn get(&self, h: usize, d: usize) -> f64 {
        self.probs[h * self.n_d + d]
    }

    pub fn n_h(&self) -> usize {
        self.n_h
    }

    pub fn n_d(&self) -> usize {
        self.n_d
    }

    pub fn marginal_h(&self) -> Vec<f64> {
        (0..self.n_h).map(|h| (0..self.n_d).map(|d| self.get(h, d)).sum()).collect()
    }

    pub fn marginal_d(&self) -> Vec<f64> {
        (0..self.n_d).map(|d| (0..self.n_h).map(|h| self.get(h, d)).sum()).collect()
    }
}

/// `P(h | d) = P(h, d) / P(d)`.
pub fn bayes_condition(joint: &JointDistribution, d: usize) -> Result<ClassicalDistribution> {
    if d >= joint.n_d {
        return Err(Error::IndexOutOfRange { index: d, len: joint.n_d });
    }
    let pd: f64 = (0..joint.n_h).map(|h| joint.get(h, d)).sum();
    if pd <= 0.0 {
        return Err(Error::ZeroProbabilityData);
    }
    let mut post: Vec<f64> = (0..joint.n_h).map(|h| joint.get(h, d) / pd).collect();
    // keep the posterior normalised to the last ulp
    let total: f64 = post.iter().sum();
    post.iter_mut().for_each(|p| *p /= total);
    ClassicalDistribution::new(post)
}

/// `Σ_d P(d) P(h | d)` over the outcomes with nonzero probability.
pub fn recombine_posteriors(joint: &JointDistribution) -> Vec<f64> {
    let pd = joint.marginal_d();
    let mut acc = vec![0.0; joint.n_h];
    for (d, &p) in pd.iter().enumerate() {
        if p > 0.0 {
            let post = bayes_condition(joint, d).expect("P(d) > 0");
            acc.iter_mut().zip(post.probs()).for_each(|(a, q)| *a += p * q);
        }
    }
    acc
}
