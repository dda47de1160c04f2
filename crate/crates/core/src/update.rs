//! How states change when a measurement outcome is registered.
//!
//! An efficient update `ρ ↦ A_d ρ A_d† / P(d)` splits into a Bayesian refinement
//! `ρ̃_d = ρ^{1/2} E_d ρ^{1/2} / P(d)` followed by a unitary readjustment `V_d`.
//! The readjustment is read off the polar decomposition `A_d ρ^{1/2} = V_d |A_d ρ^{1/2}|`,
//! which needs no inverse of `ρ` and is indifferent to degenerate spectra.

use rand::Rng;

use crate::effects::{Povm, RESOLUTION_TOL};
use crate::error::{Error, Result};
use crate::linalg::{
    basis_ket, c, complete_orthonormal, eig_hermitian, from_columns, inv_sqrt, partial_trace, pauli_x, pauli_z,
    pinv_sqrt, polar_unitary, sqrt_psd, support_projector, tensor, tensor_ket, Ket, Matrix, Subsystem, C64, EPS_PINV,
    ZERO,
};
use crate::rng::seeded;
use crate::states::{state_from_reconstruction, DensityOperator};

/// Outcomes whose probability does not exceed this carry no posterior.
pub const EPS_PROB: f64 = 1e-12;
/// Completeness tolerance for instruments and channels.
pub const COMPLETENESS_TOL: f64 = 1e-9;
/// Unitarity tolerance, relative to the dimension.
pub const UNITARY_TOL: f64 = 1e-9;
/// How far `Σ P(d) ρ̃_d` may sit from `ρ` in [`identify_measurement`].
pub const REFINEMENT_TOL: f64 = 1e-8;

/// Outcome-indexed Kraus operators with `Σ_{d,i} A_{d,i}† A_{d,i} = I`.
#[derive(Clone, Debug)]
pub struct KrausInstrument {
    dim: usize,
    outcomes: Vec<Vec<Matrix>>,
}

impl KrausInstrument {
    pub fn new(outcomes: Vec<Vec<Matrix>>) -> Result<Self> {
        let dim =
            outcomes.first().and_then(|ks| ks.first()).ok_or(Error::Empty("instrument without Kraus operators"))?.dim();
        for ks in &outcomes {
            if ks.is_empty() {
                return Err(Error::Empty("outcome without Kraus operators"));
            }
            if let Some(k) = ks.iter().find(|k| k.dim() != dim) {
                return Err(Error::DimensionMismatch { expected: dim, found: k.dim() });
            }
        }
        let inst = KrausInstrument { dim, outcomes };
        // each E_d must be an effect and together they must resolve the identity
        Povm::new(inst.effects())?;
        Ok(inst)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn kraus(&self, d: usize) -> &[Matrix] {
        &self.outcomes[d]
    }

    /// One Kraus operator per outcome.
    pub fn is_efficient(&self) -> bool {
        self.outcomes.iter().all(|ks| ks.len() == 1)
    }

    /// `E_d = Σ_i A_{d,i}† A_{d,i}`.
    pub fn effects(&self) -> Vec<Matrix> {
        self.outcomes.iter().map(|ks| ks.iter().map(|a| a.adjoint() * a).sum::<Matrix>().hermitian_part()).collect()
    }

    pub fn povm(&self) -> Povm {
        Povm::new(self.effects()).expect("validated on construction")
    }

    /// Unnormalised `Σ_i A_{d,i} ρ A_{d,i}†`.
    pub fn apply_outcome(&self, d: usize, rho: &Matrix) -> Matrix {
        self.outcomes[d].iter().map(|a| a.conjugate(rho)).sum()
    }
}

#[derive(Clone, Debug)]
pub struct OutcomeUpdate {
    pub probability: f64,
    /// `None` when the probability does not exceed [`EPS_PROB`].
    pub posterior: Option<DensityOperator>,
}

pub fn apply_instrument(state: &DensityOperator, inst: &KrausInstrument) -> Result<Vec<OutcomeUpdate>> {
    if state.dim() != inst.dim() {
        return Err(Error::DimensionMismatch { expected: inst.dim(), found: state.dim() });
    }
    (0..inst.len())
        .map(|d| {
            let unnormalised = inst.apply_outcome(d, state.op());
            let probability = unnormalised.trace().re.max(0.0);
            let posterior = if probability > EPS_PROB {
                Some(state_from_reconstruction(&unnormalised.scale_real(1.0 / probability))?)
            } else {
                None
            };
            Ok(OutcomeUpdate { probability, posterior })
        })
        .collect()
}

fn check_unitary(u: &Matrix) -> Result<()> {
    let deviation = u.unitarity_deviation();
    if deviation > UNITARY_TOL * (u.dim() as f64).max(1.0) {
        return Err(Error::NotUnitary { deviation });
    }
    Ok(())
}

/// `A_d = U_d E_d^{1/2}`, with `U_d = I` when no readjustments are given.
pub fn efficient_from_povm(povm: &Povm, unitaries: Option<&[Matrix]>) -> Result<KrausInstrument> {
    if let Some(us) = unitaries {
        if us.len() != povm.len() {
            return Err(Error::DimensionMismatch { expected: povm.len(), found: us.len() });
        }
        for u in us {
            if u.dim() != povm.dim() {
                return Err(Error::DimensionMismatch { expected: povm.dim(), found: u.dim() });
            }
            check_unitary(u)?;
        }
    }
    let outcomes = povm
        .elements()
        .iter()
        .enumerate()
        .map(|(d, e)| {
            let root = sqrt_psd(e.op())?;
            Ok(vec![match unitaries {
                Some(us) => &us[d] * root,
                None => root,
            }])
        })
        .collect::<Result<Vec<_>>>()?;
    KrausInstrument::new(outcomes)
}

/// One outcome of a refinement-plus-readjustment split.
#[derive(Clone, Debug)]
pub struct FactorizedOutcome {
    pub probability: f64,
    /// `ρ^{1/2} E_d ρ^{1/2} / P(d)`.
    pub refinement: Option<DensityOperator>,
    pub readjustment: Matrix,
    pub posterior: Option<DensityOperator>,
    /// Norm of the part of `E_d` that the support of `ρ` cannot see.
    pub off_support_residual: f64,
}

#[derive(Clone, Debug)]
pub struct UpdateFactorization {
    pub outcomes: Vec<FactorizedOutcome>,
    pub rank_deficient: bool,
}

impl UpdateFactorization {
    /// `Σ_d P(d) ρ̃_d`.
    pub fn recombined(&self, dim: usize) -> Matrix {
        let mut acc = Matrix::zeros(dim);
        for o in &self.outcomes {
            if let Some(r) = &o.refinement {
                acc += &r.op().scale_real(o.probability);
            }
        }
        acc
    }
}

/// Splits an efficient update into refinement and readjustment.
///
/// For a rank-deficient `ρ` the split is carried out on its support; the part of
/// each `E_d` outside the support is reported in `off_support_residual`.
pub fn factor_update(state: &DensityOperator, inst: &KrausInstrument) -> Result<UpdateFactorization> {
    if state.dim() != inst.dim() {
        return Err(Error::DimensionMismatch { expected: inst.dim(), found: state.dim() });
    }
    if !inst.is_efficient() {
        return Err(Error::InvalidArgument("factorisation needs one Kraus operator per outcome".into()));
    }
    let root = sqrt_psd(state.op())?;
    let eig = eig_hermitian(state.op())?;
    let rank_deficient = eig.min() <= EPS_PINV * eig.max();
    let support = support_projector(state.op())?;
    let outcomes = inst
        .effects()
        .iter()
        .enumerate()
        .map(|(d, effect)| {
            let a = &inst.kraus(d)[0];
            let x = a * &root;
            let refined = root.conjugate(effect);
            let probability = refined.trace().re.max(0.0);
            let readjustment = polar_unitary(&x);
            let off_support_residual = (effect - support.conjugate(effect)).frobenius_norm();
            let (refinement, posterior) = if probability > EPS_PROB {
                (
                    Some(state_from_reconstruction(&refined.scale_real(1.0 / probability))?),
                    Some(state_from_reconstruction(&(&x * x.adjoint()).scale_real(1.0 / probability))?),
                )
            } else {
                (None, None)
            };
            Ok(FactorizedOutcome { probability, refinement, readjustment, posterior, off_support_residual })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(UpdateFactorization { outcomes, rank_deficient })
}

/// Effects `V_d† E_h V_d` whose Born probabilities on the refined state equal
/// those of `E_h` on the posterior.
pub fn readjusted_effects(readjustment: &Matrix, povm: &Povm) -> Result<Povm> {
    check_unitary(readjustment)?;
    Povm::new(povm.elements().iter().map(|e| readjustment.adjoint().conjugate(e.op())).collect())
}

/// `(I ⊗ ⟨bra|) m (I ⊗ |ket⟩)` for `m` on `system ⊗ ancilla`.
fn ancilla_block(m: &Matrix, ds: usize, da: usize, bra: &Ket, ket: &Ket) -> Matrix {
    Matrix::from_fn(ds, |i, j| {
        let mut acc = ZERO;
        for k in 0..da {
            for l in 0..da {
                acc += bra[k].conj() * m.get(i * da + k, j * da + l) * ket[l];
            }
        }
        acc
    })
}

/// Kraus instrument induced on the system by coupling to an ancilla in state
/// `rho_a` through `u` and measuring `ancilla` on the ancilla.
///
/// Kraus operators are `√λ_α (I⊗⟨a_β|)(I⊗Π_d^{1/2})U(I⊗|a_α⟩)` with `ρ_A = Σ λ_α|a_α⟩⟨a_α|`
/// and the system factor first. Operators of negligible norm are dropped.
pub fn instrument_from_dilation(rho_a: &DensityOperator, u: &Matrix, ancilla: &Povm) -> Result<KrausInstrument> {
    let da = rho_a.dim();
    if ancilla.dim() != da {
        return Err(Error::DimensionMismatch { expected: da, found: ancilla.dim() });
    }
    if !u.dim().is_multiple_of(da) {
        return Err(Error::DimensionMismatch { expected: da, found: u.dim() });
    }
    check_unitary(u)?;
    let ds = u.dim() / da;
    let eig = eig_hermitian(rho_a.op())?;
    let outcomes = ancilla
        .elements()
        .iter()
        .map(|pi| {
            let gate = &tensor(&Matrix::identity(ds), &sqrt_psd(pi.op())?) * u;
            let mut ks = Vec::new();
            for (alpha, &lambda) in eig.eigenvalues.iter().enumerate() {
                if lambda <= 0.0 {
                    continue;
                }
                let a_alpha = eig.eigenvector(alpha);
                for beta in 0..da {
                    let a_beta = eig.eigenvector(beta);
                    let k = ancilla_block(&gate, ds, da, &a_beta, &a_alpha).scale_real(lambda.sqrt());
                    ks.push(k);
                }
            }
            let largest = ks.iter().map(Matrix::frobenius_norm).fold(0.0, f64::max);
            let mut kept: Vec<Matrix> = ks.iter().filter(|k| k.frobenius_norm() > 1e-12).cloned().collect();
            if kept.is_empty() || largest == 0.0 {
                kept = vec![Matrix::zeros(ds)];
            }
            Ok(kept)
        })
        .collect::<Result<Vec<_>>>()?;
    KrausInstrument::new(outcomes)
}

/// System posterior after reading `Π_d` on the ancilla, computed on the full space.
pub fn dilated_posterior(
    rho: &DensityOperator,
    rho_a: &DensityOperator,
    u: &Matrix,
    ancilla: &Povm,
    d: usize,
) -> Result<OutcomeUpdate> {
    let ds = rho.dim();
    let da = rho_a.dim();
    let joint = u.conjugate(&tensor(rho.op(), rho_a.op()));
    let gate = tensor(&Matrix::identity(ds), &sqrt_psd(ancilla.element(d))?);
    let unnormalised = partial_trace(&gate.conjugate(&joint), (ds, da), Subsystem::B)?;
    let probability = unnormalised.trace().re.max(0.0);
    let posterior = if probability > EPS_PROB {
        Some(state_from_reconstruction(&unnormalised.scale_real(1.0 / probability))?)
    } else {
        None
    };
    Ok(OutcomeUpdate { probability, posterior })
}

/// Unitary dilation of an efficient instrument.
#[derive(Clone, Debug)]
pub struct Dilation {
    pub ancilla_state: DensityOperator,
    pub unitary: Matrix,
    pub ancilla_povm: Povm,
}

/// Ancilla `|0⟩⟨0|`, a unitary extending `|ψ⟩|0⟩ ↦ Σ_d A_d|ψ⟩|d⟩`, and the ancilla
/// basis measurement.
pub fn dilation_from_instrument(inst: &KrausInstrument) -> Result<Dilation> {
    if !inst.is_efficient() {
        return Err(Error::InvalidArgument("dilation needs one Kraus operator per outcome".into()));
    }
    let ds = inst.dim();
    let da = inst.len();
    let n = ds * da;
    let isometry_columns: Vec<Ket> = (0..ds)
        .map(|j| {
            let mut col = Ket::zeros(n);
            for d in 0..da {
                col += tensor_ket(&inst.kraus(d)[0].apply(&basis_ket(ds, j)), &basis_ket(da, d));
            }
            col
        })
        .collect();
    let completed = complete_orthonormal(&isometry_columns, n);
    let mut columns = vec![Ket::zeros(n); n];
    let mut extra = completed[ds..].iter();
    for (idx, slot) in columns.iter_mut().enumerate() {
        let (j, k) = (idx / da, idx % da);
        *slot = if k == 0 { isometry_columns[j].clone() } else { extra.next().expect("basis is complete").clone() };
    }
    let unitary = from_columns(&columns);
    check_unitary(&unitary)?;
    Ok(Dilation { ancilla_state: DensityOperator::basis(da, 0), unitary, ancilla_povm: Povm::computational_basis(da) })
}

/// Trace-preserving completely positive map in Kraus form.
#[derive(Clone, Debug)]
pub struct QuantumChannel {
    dim: usize,
    kraus: Vec<Matrix>,
}

impl QuantumChannel {
    pub fn new(kraus: Vec<Matrix>) -> Result<Self> {
        let dim = kraus.first().ok_or(Error::Empty("channel without Kraus operators"))?.dim();
        if let Some(k) = kraus.iter().find(|k| k.dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: k.dim() });
        }
        let sum: Matrix = kraus.iter().map(|a| a.adjoint() * a).sum();
        let deviation = (sum - Matrix::identity(dim)).frobenius_norm();
        if deviation > COMPLETENESS_TOL {
            return Err(Error::NotTracePreserving { deviation });
        }
        Ok(QuantumChannel { dim, kraus })
    }

    pub fn identity(dim: usize) -> Self {
        QuantumChannel { dim, kraus: vec![Matrix::identity(dim)] }
    }

    pub fn unitary(u: &Matrix) -> Result<Self> {
        check_unitary(u)?;
        Ok(QuantumChannel { dim: u.dim(), kraus: vec![u.clone()] })
    }

    /// `ρ ↦ tr(ρ) I/D`, with Kraus operators `|i⟩⟨j|/√D`.
    pub fn depolarizing(dim: usize) -> Self {
        let s = 1.0 / (dim as f64).sqrt();
        let kraus = (0..dim * dim)
            .map(|k| Matrix::outer(&basis_ket(dim, k / dim), &basis_ket(dim, k % dim)).scale_real(s))
            .collect();
        QuantumChannel { dim, kraus }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kraus(&self) -> &[Matrix] {
        &self.kraus
    }

    pub fn apply(&self, rho: &Matrix) -> Matrix {
        self.kraus.iter().map(|a| a.conjugate(rho)).sum()
    }
}

/// `(I ⊗ Φ)(|ψ_ME⟩⟨ψ_ME|)`, reference factor first.
#[derive(Clone, Debug)]
pub struct ChoiMatrix {
    dim: usize,
    op: Matrix,
}

pub const CHOI_TOL: f64 = 1e-9;

impl ChoiMatrix {
    /// Accepts `op` on `C^D ⊗ C^D` that is PSD with `tr_out = I/D`.
    pub fn new(op: Matrix) -> Result<Self> {
        let dim = (op.dim() as f64).sqrt().round() as usize;
        if dim * dim != op.dim() {
            return Err(Error::DimensionMismatch { expected: dim * dim, found: op.dim() });
        }
        let min = eig_hermitian(&op)?.min();
        if min < -CHOI_TOL {
            return Err(Error::NotCp { min_eigenvalue: min });
        }
        let reduced = partial_trace(&op, (dim, dim), Subsystem::B)?;
        let deviation = (reduced - Matrix::identity(dim).scale_real(1.0 / dim as f64)).frobenius_norm();
        if deviation > CHOI_TOL {
            return Err(Error::NotTracePreserving { deviation });
        }
        Ok(ChoiMatrix { dim, op: op.hermitian_part() })
    }

    pub fn op(&self) -> &Matrix {
        &self.op
    }

    /// Input (and output) dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// `Σ_{ij} (1/D)|i⟩⟨j| ⊗ f(|i⟩⟨j|)` for any linear map `f`, without validation.
pub fn choi_of_map(dim: usize, f: impl Fn(&Matrix) -> Matrix) -> Matrix {
    let mut acc = Matrix::zeros(dim * dim);
    for i in 0..dim {
        for j in 0..dim {
            let unit = Matrix::outer(&basis_ket(dim, i), &basis_ket(dim, j));
            acc += &tensor(&unit, &f(&unit)).scale_real(1.0 / dim as f64);
        }
    }
    acc
}

pub fn channel_choi(ch: &QuantumChannel) -> ChoiMatrix {
    ChoiMatrix::new(choi_of_map(ch.dim, |m| ch.apply(m))).expect("Kraus maps are CP and trace preserving")
}

/// Kraus operators from the spectral decomposition of the Choi matrix.
pub fn choi_channel(choi: &ChoiMatrix) -> Result<QuantumChannel> {
    let d = choi.dim;
    let eig = eig_hermitian(&choi.op)?;
    if eig.min() < -CHOI_TOL {
        return Err(Error::NotCp { min_eigenvalue: eig.min() });
    }
    let kraus = eig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &mu)| mu > EPS_PINV * eig.max())
        .map(|(k, &mu)| {
            let v = eig.eigenvector(k);
            let s = (d as f64 * mu).sqrt();
            Matrix::from_fn(d, |row, col| v[col * d + row] * s)
        })
        .collect();
    QuantumChannel::new(kraus)
}

/// `ρ ↦ |α|² U0 ρ U0† + |β|² U1 ρ U1†`.
pub fn controlled_unitary_channel(u0: &Matrix, u1: &Matrix, alpha: C64, beta: C64) -> Result<QuantumChannel> {
    let norm = alpha.norm_sqr() + beta.norm_sqr();
    if (norm - 1.0).abs() > COMPLETENESS_TOL {
        return Err(Error::NotNormalized { norm });
    }
    if u0.dim() != u1.dim() {
        return Err(Error::DimensionMismatch { expected: u0.dim(), found: u1.dim() });
    }
    check_unitary(u0)?;
    check_unitary(u1)?;
    QuantumChannel::new(vec![u0.scale_real(alpha.norm()), u1.scale_real(beta.norm())])
}

/// Entangled control pair `α|00⟩ + β|11⟩` (far qubit first) and the two unitaries
/// the control applies to the target.
#[derive(Clone, Debug)]
pub struct SteeringSetup {
    pub alpha: C64,
    pub beta: C64,
    pub u0: Matrix,
    pub u1: Matrix,
}

impl SteeringSetup {
    pub fn random(seed: u64) -> Self {
        let mut rng = seeded(seed);
        let theta: f64 = rng.random_range(0.1..1.4);
        let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        SteeringSetup {
            alpha: c(theta.cos(), 0.0),
            beta: C64::from_polar(theta.sin(), phase),
            u0: crate::linalg::random_unitary(2, &mut rng),
            u1: crate::linalg::random_unitary(2, &mut rng),
        }
    }

    pub fn pair(&self) -> Ket {
        let mut k = Ket::zeros(4);
        k[0] = self.alpha;
        k[3] = self.beta;
        k
    }

    /// Unconditional channel on the target.
    pub fn channel(&self) -> Result<QuantumChannel> {
        controlled_unitary_channel(&self.u0, &self.u1, self.alpha, self.beta)
    }

    /// Controlled unitary on `control ⊗ target`.
    fn controlled(&self) -> Matrix {
        tensor(&Matrix::projector(&basis_ket(2, 0)), &self.u0) + tensor(&Matrix::projector(&basis_ket(2, 1)), &self.u1)
    }
}

#[derive(Clone, Debug)]
pub struct SteeringReport {
    pub outcome_probabilities: Vec<f64>,
    /// Choi matrix of the target evolution given each far outcome; `None` for null outcomes.
    pub conditional_chois: Vec<Option<ChoiMatrix>>,
    pub averaged_choi: Matrix,
    /// Frobenius distance between the averaged Choi matrix and that of the
    /// unconditional channel.
    pub no_signaling_deviation: f64,
}

/// Target evolution conditioned on each outcome of a measurement of the far qubit.
///
/// Simulated on the full far ⊗ control ⊗ target space.
pub fn remote_steering_experiment(far: &Povm, setup: &SteeringSetup) -> Result<SteeringReport> {
    if far.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: far.dim() });
    }
    let pair = Matrix::projector(&setup.pair());
    let coupling = tensor(&Matrix::identity(2), &setup.controlled());
    let conditional = |effect: &Matrix, target: &Matrix| -> Result<Matrix> {
        let evolved = coupling.conjugate(&tensor(&pair, target));
        let gated = &tensor(&tensor(effect, &Matrix::identity(2)), &Matrix::identity(2)) * evolved;
        partial_trace(&gated, (4, 2), Subsystem::A)
    };
    let probs: Vec<f64> = far
        .elements()
        .iter()
        .map(|e| conditional(e.op(), &Matrix::identity(2).scale_real(0.5)).map(|m| m.trace().re.max(0.0)))
        .collect::<Result<_>>()?;
    let mut averaged = Matrix::zeros(4);
    let mut chois = Vec::with_capacity(far.len());
    for (e, &p) in far.elements().iter().zip(&probs) {
        let raw = choi_of_map(2, |m| conditional(e.op(), m).expect("dimensions fixed"));
        averaged += &raw;
        chois.push(if p > EPS_PROB { Some(ChoiMatrix::new(raw.scale_real(1.0 / p))?) } else { None });
    }
    let reference = channel_choi(&setup.channel()?);
    let no_signaling_deviation = (&averaged - reference.op()).frobenius_norm();
    Ok(SteeringReport {
        outcome_probabilities: probs,
        conditional_chois: chois,
        averaged_choi: averaged,
        no_signaling_deviation,
    })
}

fn check_refinement(state: &DensityOperator, refinement: &[(f64, DensityOperator)]) -> Result<()> {
    let mut acc = Matrix::zeros(state.dim());
    for (p, r) in refinement {
        if r.dim() != state.dim() {
            return Err(Error::DimensionMismatch { expected: state.dim(), found: r.dim() });
        }
        acc += &r.op().scale_real(*p);
    }
    let deviation = (acc - state.op()).frobenius_norm();
    if deviation > REFINEMENT_TOL {
        return Err(Error::InconsistentRefinement { deviation });
    }
    Ok(())
}

/// `E_d = P(d) ρ^{-1/2} ρ̃_d ρ^{-1/2}` for a full-rank `ρ`.
pub fn identify_measurement(state: &DensityOperator, refinement: &[(f64, DensityOperator)]) -> Result<Povm> {
    check_refinement(state, refinement)?;
    let inv_root = inv_sqrt(state.op()).map_err(|e| match e {
        Error::SingularOperator { min_eigenvalue } => Error::RankDeficientState { min_eigenvalue },
        other => other,
    })?;
    Povm::new(refinement.iter().map(|(p, r)| inv_root.conjugate(r.op()).scale_real(*p).hermitian_part()).collect())
}

/// Effects recovered on the support of a possibly rank-deficient `ρ`.
#[derive(Clone, Debug)]
pub struct SupportMeasurement {
    /// `P(d) ρ^{-1/2} ρ̃_d ρ^{-1/2}` with the pseudo-inverse root.
    pub effects: Vec<Matrix>,
    /// Projector onto the support; the effects sum to it.
    pub support: Matrix,
}

pub fn identify_measurement_on_support(
    state: &DensityOperator,
    refinement: &[(f64, DensityOperator)],
) -> Result<SupportMeasurement> {
    check_refinement(state, refinement)?;
    let inv_root = pinv_sqrt(state.op())?;
    let effects = refinement.iter().map(|(p, r)| inv_root.conjugate(r.op()).scale_real(*p).hermitian_part()).collect();
    let support = support_projector(state.op())?;
    let sum: Matrix = refinement.iter().map(|(p, r)| inv_root.conjugate(r.op()).scale_real(*p)).sum();
    let deficit = (sum - &support).frobenius_norm();
    if deficit > RESOLUTION_TOL.max(REFINEMENT_TOL) * 10.0 {
        return Err(Error::NotResolution { deficit });
    }
    Ok(SupportMeasurement { effects, support })
}

/// Bell basis on two qubits in the order Φ⁺, Φ⁻, Ψ⁺, Ψ⁻.
pub const BELL_NAMES: [&str; 4] = ["Phi+", "Phi-", "Psi+", "Psi-"];
/// Correction Bob applies after each Bell outcome.
pub const CORRECTION_NAMES: [&str; 4] = ["I", "Z", "X", "ZX"];

pub fn bell_ket(index: usize) -> Ket {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let amps = match index {
        0 => [s, 0.0, 0.0, s],
        1 => [s, 0.0, 0.0, -s],
        2 => [0.0, s, s, 0.0],
        3 => [0.0, s, -s, 0.0],
        _ => panic!("Bell index {index} out of range"),
    };
    Ket::from_iterator(4, amps.iter().map(|&a| c(a, 0.0)))
}

pub fn bell_correction(index: usize) -> Matrix {
    match index {
        0 => Matrix::identity(2),
        1 => pauli_z(),
        2 => pauli_x(),
        3 => pauli_z() * pauli_x(),
        _ => panic!("Bell index {index} out of range"),
    }
}

#[derive(Clone, Copy, Debug)]
pub enum BellOutcome {
    Forced(usize),
    Sampled { seed: u64 },
}

#[derive(Clone, Debug)]
pub struct TeleportTranscript {
    pub bell_probabilities: [f64; 4],
    pub outcome: usize,
    pub outcome_name: &'static str,
    /// Bob's qubit as Alice describes it once she knows the outcome.
    pub conditional_bob: DensityOperator,
    pub bob_marginal_initial: Matrix,
    /// Outcome-averaged Bob state before any message arrives.
    pub bob_marginal_after_measurement: Matrix,
    pub correction_name: &'static str,
    pub final_bob: DensityOperator,
    /// `⟨ψ|ρ_Bob|ψ⟩` after the correction.
    pub yes_probability: f64,
}

/// Teleports `psi` through `|Φ⁺⟩` on qubits `(ψ, A, B)`.
pub fn teleport(psi: &Ket, outcome: BellOutcome) -> Result<TeleportTranscript> {
    if psi.len() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: psi.len() });
    }
    let norm = psi.norm_squared();
    if (norm - 1.0).abs() > COMPLETENESS_TOL {
        return Err(Error::NotNormalized { norm });
    }
    let full = tensor_ket(psi, &bell_ket(0));
    let full_rho = Matrix::projector(&full);
    let bob_marginal_initial = partial_trace(&full_rho, (4, 2), Subsystem::A)?;

    let mut conditionals = Vec::with_capacity(4);
    let mut probs = [0.0; 4];
    let mut averaged = Matrix::zeros(2);
    for (b, prob) in probs.iter_mut().enumerate() {
        let gate = tensor(&Matrix::projector(&bell_ket(b)), &Matrix::identity(2));
        let unnormalised = partial_trace(&gate.conjugate(&full_rho), (4, 2), Subsystem::A)?;
        *prob = unnormalised.trace().re;
        averaged += &unnormalised;
        conditionals.push(unnormalised.scale_real(1.0 / *prob));
    }

    let index = match outcome {
        BellOutcome::Forced(i) if i < 4 => i,
        BellOutcome::Forced(i) => return Err(Error::IndexOutOfRange { index: i, len: 4 }),
        BellOutcome::Sampled { seed } => {
            let mut rng = seeded(seed);
            let u: f64 = rng.random();
            let mut cumulative = 0.0;
            probs
                .iter()
                .position(|p| {
                    cumulative += p;
                    u < cumulative
                })
                .unwrap_or(3)
        }
    };
    let conditional_bob = state_from_reconstruction(&conditionals[index])?;
    let final_bob = state_from_reconstruction(&bell_correction(index).conjugate(conditional_bob.op()))?;
    let yes_probability = crate::linalg::trace_product(&Matrix::projector(psi), final_bob.op()).re;
    Ok(TeleportTranscript {
        bell_probabilities: probs,
        outcome: index,
        outcome_name: BELL_NAMES[index],
        conditional_bob,
        bob_marginal_initial,
        bob_marginal_after_measurement: averaged,
        correction_name: CORRECTION_NAMES[index],
        final_bob,
        yes_probability,
    })
}

/// Random efficient instrument: random POVM with random readjustments.
pub fn random_efficient_instrument<R: Rng + ?Sized>(dim: usize, outcomes: usize, rng: &mut R) -> KrausInstrument {
    let povm = crate::linalg::random_povm(dim, outcomes, rng);
    let us: Vec<Matrix> = (0..outcomes).map(|_| crate::linalg::random_unitary(dim, rng)).collect();
    efficient_from_povm(&povm, Some(&us)).expect("random POVM and unitaries are valid")
}

/// Random instrument with several Kraus operators per outcome.
pub fn random_instrument<R: Rng + ?Sized>(
    dim: usize,
    outcomes: usize,
    per_outcome: usize,
    rng: &mut R,
) -> KrausInstrument {
    let raw: Vec<Vec<Matrix>> =
        (0..outcomes).map(|_| (0..per_outcome).map(|_| crate::linalg::random_ginibre(dim, rng)).collect()).collect();
    let total: Matrix = raw.iter().flatten().map(|a| a.adjoint() * a).sum();
    let fix = inv_sqrt(&total.hermitian_part()).expect("Ginibre sums are full rank");
    KrausInstrument::new(raw.into_iter().map(|ks| ks.into_iter().map(|a| a * &fix).collect()).collect())
        .expect("normalised by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effects::{povm_from_dilation, MinimalIcPovm};
    use crate::linalg::{eigenvalues, random_ket, random_povm, random_pure_state, random_state, random_unitary};

    fn spectra_close(a: &DensityOperator, b: &DensityOperator, tol: f64) -> bool {
        a.eigenvalues().iter().zip(b.eigenvalues()).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn projective_instrument_on_basis_state() {
        let inst = efficient_from_povm(&Povm::computational_basis(2), None).unwrap();
        let out = apply_instrument(&DensityOperator::basis(2, 0), &inst).unwrap();
        assert!((out[0].probability - 1.0).abs() < 1e-15);
        assert!(out[0].posterior.as_ref().unwrap().op().distance(DensityOperator::basis(2, 0).op()) < 1e-12);
        assert!(out[1].posterior.is_none());
    }

    #[test]
    fn von_neumann_collapse_ignores_the_prior() {
        let mut rng = seeded(3);
        let u = random_unitary(3, &mut rng);
        let povm = Povm::from_basis(&u).unwrap();
        let inst = efficient_from_povm(&povm, None).unwrap();
        for _ in 0..20 {
            let rho = random_state(3, &mut rng);
            for (d, o) in apply_instrument(&rho, &inst).unwrap().iter().enumerate() {
                assert!(o.posterior.as_ref().unwrap().op().distance(povm.element(d)) < 1e-9);
            }
        }
    }

    #[test]
    fn random_instrument_probabilities_match_traces() {
        let mut rng = seeded(5);
        for d in 2..=4 {
            let inst = random_instrument(d, 3, 2, &mut rng);
            let rho = random_state(d, &mut rng);
            let out = apply_instrument(&rho, &inst).unwrap();
            let total: f64 = out.iter().map(|o| o.probability).sum();
            assert!((total - 1.0).abs() < 1e-9);
            for (o, e) in out.iter().zip(inst.effects()) {
                assert!((o.probability - crate::linalg::trace_product(rho.op(), &e).re).abs() < 1e-12);
                let post = o.posterior.as_ref().unwrap();
                assert!((post.op().trace().re - 1.0).abs() < 1e-12);
                assert!(post.eigenvalues().iter().all(|&x| x >= -1e-12));
            }
        }
    }

    #[test]
    fn efficient_instrument_reproduces_effects() {
        let sqm = MinimalIcPovm::standard(2);
        let inst = efficient_from_povm(&sqm.base, None).unwrap();
        assert_eq!(inst.len(), 4);
        let mut rng = seeded(9);
        let us: Vec<Matrix> = (0..4).map(|_| random_unitary(2, &mut rng)).collect();
        let inst = efficient_from_povm(&sqm.base, Some(&us)).unwrap();
        for (e, ours) in sqm.base.elements().iter().zip(inst.effects()) {
            assert!(e.op().distance(&ours) < 1e-12);
        }
        let not_unitary = vec![Matrix::diag(&[1.0, 2.0]); 4];
        assert!(matches!(efficient_from_povm(&sqm.base, Some(&not_unitary)), Err(Error::NotUnitary { .. })));
    }

    #[test]
    fn pure_states_are_not_refined() {
        let mut rng = seeded(12);
        for d in 2..=4 {
            let psi = random_pure_state(d, &mut rng);
            let inst = random_efficient_instrument(d, 3, &mut rng);
            let f = factor_update(&psi, &inst).unwrap();
            for o in &f.outcomes {
                assert!(o.refinement.as_ref().unwrap().op().distance(psi.op()) < 1e-10);
            }
        }
    }

    #[test]
    fn mixed_state_projective_refinement() {
        let inst = efficient_from_povm(&Povm::computational_basis(2), None).unwrap();
        let f = factor_update(&DensityOperator::maximally_mixed(2), &inst).unwrap();
        for (d, o) in f.outcomes.iter().enumerate() {
            assert!((o.probability - 0.5).abs() < 1e-14);
            assert!(o.refinement.as_ref().unwrap().op().distance(&Matrix::projector(&basis_ket(2, d))) < 1e-12);
            // readjustment acts trivially on the refined state
            let r = o.refinement.as_ref().unwrap().op();
            assert!(o.readjustment.conjugate(r).distance(r) < 1e-12);
        }
    }

    #[test]
    fn factorisation_invariants_on_random_pairs() {
        let mut rng = seeded(31);
        for d in 2..=4 {
            for _ in 0..60 {
                let rho = random_state(d, &mut rng);
                let inst = random_efficient_instrument(d, 1 + d, &mut rng);
                let f = factor_update(&rho, &inst).unwrap();
                assert!(f.recombined(d).distance(rho.op()) < 1e-9);
                let direct = apply_instrument(&rho, &inst).unwrap();
                for (o, dir) in f.outcomes.iter().zip(&direct) {
                    let refined = o.refinement.as_ref().unwrap();
                    let post = o.posterior.as_ref().unwrap();
                    assert!(post.op().distance(dir.posterior.as_ref().unwrap().op()) < 1e-9);
                    assert!(o.readjustment.conjugate(refined.op()).distance(post.op()) < 1e-9);
                    assert!(spectra_close(refined, post, 1e-8));
                    assert!(o.readjustment.unitarity_deviation() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn rank_deficient_factorisation_reports_residual() {
        let rho = DensityOperator::new(Matrix::diag(&[0.6, 0.4, 0.0])).unwrap();
        let mut rng = seeded(2);
        let inst = random_efficient_instrument(3, 2, &mut rng);
        let f = factor_update(&rho, &inst).unwrap();
        assert!(f.rank_deficient);
        assert!(f.recombined(3).distance(rho.op()) < 1e-9);
        assert!(f.outcomes.iter().any(|o| o.off_support_residual > 1e-3));
        for o in &f.outcomes {
            let (r, p) = (o.refinement.as_ref().unwrap(), o.posterior.as_ref().unwrap());
            assert!(o.readjustment.conjugate(r.op()).distance(p.op()) < 1e-9);
        }
    }

    #[test]
    fn readjusted_effects_carry_posterior_probabilities() {
        let mut rng = seeded(40);
        let rho = random_state(3, &mut rng);
        let inst = random_efficient_instrument(3, 2, &mut rng);
        let sqm = MinimalIcPovm::standard(3);
        let f = factor_update(&rho, &inst).unwrap();
        for o in &f.outcomes {
            let moved = readjusted_effects(&o.readjustment, &sqm.base).unwrap();
            let a = crate::effects::born(o.posterior.as_ref().unwrap(), &sqm.base).unwrap();
            let b = crate::effects::born(o.refinement.as_ref().unwrap(), &moved).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn dilation_without_interaction_leaves_state() {
        let mut rng = seeded(6);
        let rho_a = random_state(2, &mut rng);
        let ancilla = random_povm(2, 3, &mut rng);
        let inst = instrument_from_dilation(&rho_a, &Matrix::identity(4), &ancilla).unwrap();
        let rho = random_state(2, &mut rng);
        for o in apply_instrument(&rho, &inst).unwrap() {
            assert!(o.posterior.unwrap().op().distance(rho.op()) < 1e-9);
        }
    }

    #[test]
    fn cnot_dilation_is_a_projective_collapse() {
        let cnot = Matrix::from_real_rows(&[
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
            vec![0.0, 0.0, 1.0, 0.0],
        ]);
        let rho_a = DensityOperator::basis(2, 0);
        let ancilla = Povm::computational_basis(2);
        let inst = instrument_from_dilation(&rho_a, &cnot, &ancilla).unwrap();
        let mut rng = seeded(8);
        let rho = random_state(2, &mut rng);
        for (d, o) in apply_instrument(&rho, &inst).unwrap().iter().enumerate() {
            assert!(o.posterior.as_ref().unwrap().op().distance(&Matrix::projector(&basis_ket(2, d))) < 1e-9);
            let direct = dilated_posterior(&rho, &rho_a, &cnot, &ancilla, d).unwrap();
            assert!((direct.probability - o.probability).abs() < 1e-12);
        }
    }

    #[test]
    fn random_dilation_matches_direct_computation() {
        let mut rng = seeded(19);
        for _ in 0..10 {
            let rho_a = random_state(2, &mut rng);
            let u = random_unitary(6, &mut rng);
            let ancilla = random_povm(2, 3, &mut rng);
            let inst = instrument_from_dilation(&rho_a, &u, &ancilla).unwrap();
            let total: Matrix = inst.effects().into_iter().sum();
            assert!(total.distance(&Matrix::identity(3)) < 1e-9);
            let povm = povm_from_dilation(&rho_a, &u, &ancilla).unwrap();
            for (e, f) in inst.effects().iter().zip(povm.elements()) {
                assert!(e.distance(f.op()) < 1e-9);
            }
            let rho = random_state(3, &mut rng);
            for (d, o) in apply_instrument(&rho, &inst).unwrap().iter().enumerate() {
                let direct = dilated_posterior(&rho, &rho_a, &u, &ancilla, d).unwrap();
                assert!((direct.probability - o.probability).abs() < 1e-10);
                assert!(direct.posterior.unwrap().op().distance(o.posterior.as_ref().unwrap().op()) < 1e-9);
            }
        }
    }

    #[test]
    fn dilation_round_trip() {
        let mut rng = seeded(23);
        let inst = random_efficient_instrument(3, 3, &mut rng);
        let dil = dilation_from_instrument(&inst).unwrap();
        let back = instrument_from_dilation(&dil.ancilla_state, &dil.unitary, &dil.ancilla_povm).unwrap();
        let rho = random_state(3, &mut rng);
        let a = apply_instrument(&rho, &inst).unwrap();
        let b = apply_instrument(&rho, &back).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x.probability - y.probability).abs() < 1e-10);
            assert!(x.posterior.as_ref().unwrap().op().distance(y.posterior.as_ref().unwrap().op()) < 1e-9);
        }
    }

    #[test]
    fn choi_examples() {
        let ident = channel_choi(&QuantumChannel::identity(2));
        let me = Matrix::projector(&bell_ket(0));
        assert!(ident.op().distance(&me) < 1e-12);
        let dep = channel_choi(&QuantumChannel::depolarizing(2));
        assert!(dep.op().distance(&Matrix::identity(4).scale_real(0.25)) < 1e-12);
        let mut rng = seeded(1);
        let u = channel_choi(&QuantumChannel::unitary(&random_unitary(3, &mut rng)).unwrap());
        let ev = eigenvalues(u.op()).unwrap();
        assert!((ev[0] - 1.0).abs() < 1e-10 && ev[1].abs() < 1e-10);
    }

    #[test]
    fn choi_round_trip_preserves_action() {
        let mut rng = seeded(14);
        for d in 2..=3 {
            let inst = random_instrument(d, 1, 3, &mut rng);
            let ch = QuantumChannel::new(inst.kraus(0).to_vec()).unwrap();
            let choi = channel_choi(&ch);
            assert!((choi.op().trace().re - 1.0).abs() < 1e-12);
            let back = choi_channel(&choi).unwrap();
            for _ in 0..10 {
                let rho = random_state(d, &mut rng);
                assert!(ch.apply(rho.op()).distance(&back.apply(rho.op())) < 1e-9);
            }
        }
    }

    #[test]
    fn choi_detects_non_cp_and_non_tp_maps() {
        let transpose = choi_of_map(2, |m| m.transpose());
        assert!(matches!(ChoiMatrix::new(transpose), Err(Error::NotCp { .. })));
        let doubled = choi_of_map(2, |m| m.scale_real(2.0));
        assert!(matches!(ChoiMatrix::new(doubled), Err(Error::NotTracePreserving { .. })));
    }

    #[test]
    fn controlled_unitary_examples() {
        let mut rng = seeded(7);
        let u0 = random_unitary(2, &mut rng);
        let u1 = random_unitary(2, &mut rng);
        let ch = controlled_unitary_channel(&u0, &u1, c(1.0, 0.0), c(0.0, 0.0)).unwrap();
        let rho = random_state(2, &mut rng);
        assert!(ch.apply(rho.op()).distance(&u0.conjugate(rho.op())) < 1e-12);

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let ch = controlled_unitary_channel(&Matrix::identity(2), &pauli_z(), c(s, 0.0), c(0.0, s)).unwrap();
        let plus = DensityOperator::from_bloch([1.0, 0.0, 0.0]).unwrap();
        assert!(ch.apply(plus.op()).distance(&Matrix::identity(2).scale_real(0.5)) < 1e-12);

        assert!(matches!(
            controlled_unitary_channel(&u0, &u1, c(0.9, 0.0), c(0.9, 0.0)),
            Err(Error::NotNormalized { .. })
        ));
    }

    #[test]
    fn steering_in_the_schmidt_basis_gives_pure_unitaries() {
        let setup = SteeringSetup::random(4);
        let report = remote_steering_experiment(&Povm::computational_basis(2), &setup).unwrap();
        assert!((report.outcome_probabilities[0] - setup.alpha.norm_sqr()).abs() < 1e-12);
        let expect = [&setup.u0, &setup.u1].map(|u| channel_choi(&QuantumChannel::unitary(u).unwrap()));
        for (got, want) in report.conditional_chois.iter().zip(&expect) {
            assert!(got.as_ref().unwrap().op().distance(want.op()) < 1e-9);
        }
        assert!(report.no_signaling_deviation < 1e-9);
    }

    #[test]
    fn steering_average_is_independent_of_far_measurement() {
        let setup = SteeringSetup::random(11);
        let mut rng = seeded(12);
        let a = remote_steering_experiment(&random_povm(2, 3, &mut rng), &setup).unwrap();
        let b = remote_steering_experiment(&Povm::from_basis(&random_unitary(2, &mut rng)).unwrap(), &setup).unwrap();
        assert!(a.averaged_choi.distance(&b.averaged_choi) < 1e-9);
        let trivial = remote_steering_experiment(&Povm::trivial(2), &setup).unwrap();
        let phi = channel_choi(&setup.channel().unwrap());
        assert!(trivial.conditional_chois[0].as_ref().unwrap().op().distance(phi.op()) < 1e-9);
    }

    #[test]
    fn identify_measurement_examples() {
        let mut rng = seeded(50);
        let rho = random_state(3, &mut rng);
        let inst = random_efficient_instrument(3, 4, &mut rng);
        let f = factor_update(&rho, &inst).unwrap();
        let refinement: Vec<(f64, DensityOperator)> =
            f.outcomes.iter().map(|o| (o.probability, o.refinement.clone().unwrap())).collect();
        let povm = identify_measurement(&rho, &refinement).unwrap();
        for (a, b) in povm.ops().iter().zip(inst.effects()) {
            assert!(a.distance(&b) < 1e-8);
        }

        let trivial = identify_measurement(&rho, &[(1.0, rho.clone())]).unwrap();
        assert!(trivial.element(0).distance(&Matrix::identity(3)) < 1e-10);

        let mixed = DensityOperator::maximally_mixed(3);
        let refinement: Vec<_> = (0..3).map(|d| (1.0 / 3.0, DensityOperator::basis(3, d))).collect();
        let povm = identify_measurement(&mixed, &refinement).unwrap();
        assert!(povm.is_projective(1e-10));

        let bad = [(0.5, DensityOperator::basis(3, 0)), (0.5, DensityOperator::basis(3, 1))];
        assert!(matches!(identify_measurement(&mixed, &bad), Err(Error::InconsistentRefinement { .. })));

        let singular = DensityOperator::basis(3, 0);
        assert!(matches!(
            identify_measurement(&singular, &[(1.0, singular.clone())]),
            Err(Error::RankDeficientState { .. })
        ));
        let on_support = identify_measurement_on_support(&singular, &[(1.0, singular.clone())]).unwrap();
        assert!(on_support.effects[0].distance(&on_support.support) < 1e-9);
    }

    #[test]
    fn teleportation_transcript() {
        let mut rng = seeded(60);
        for trial in 0..5 {
            let psi = if trial == 0 { basis_ket(2, 0) } else { random_ket(2, &mut rng) };
            for b in 0..4 {
                let t = teleport(&psi, BellOutcome::Forced(b)).unwrap();
                assert!(t.bell_probabilities.iter().all(|p| (p - 0.25).abs() < 1e-12));
                let half = Matrix::identity(2).scale_real(0.5);
                assert!(t.bob_marginal_initial.distance(&half) < 1e-12);
                assert!(t.bob_marginal_after_measurement.distance(&half) < 1e-12);
                assert!((t.yes_probability - 1.0).abs() < 1e-9);
                // conditional Bob state is a Pauli image of ψ
                let paulis = [Matrix::identity(2), pauli_x(), crate::linalg::pauli_y(), pauli_z()];
                assert!(paulis
                    .iter()
                    .any(|p| p.conjugate(&Matrix::projector(&psi)).distance(t.conditional_bob.op()) < 1e-9));
            }
        }
        let sampled = teleport(&basis_ket(2, 1), BellOutcome::Sampled { seed: 3 }).unwrap();
        assert!((sampled.yes_probability - 1.0).abs() < 1e-9);
        assert!(teleport(&(basis_ket(2, 1) * c(2.0, 0.0)), BellOutcome::Forced(0)).is_err());
    }

    #[test]
    fn remote_measurement_does_not_disturb_the_far_side() {
        let mut rng = seeded(70);
        let d = 3;
        let psi = random_ket(d * d, &mut rng);
        let joint = Matrix::projector(&psi);
        let rho_b = partial_trace(&joint, (d, d), Subsystem::A).unwrap();
        let inst = random_efficient_instrument(d, 3, &mut rng);
        // coefficient matrix C with |ψ⟩ = Σ C_ij |i⟩|j⟩, so C^T = ρ_B^{1/2} W
        let coeffs = Matrix::from_fn(d, |i, j| psi[i * d + j]);
        let w = polar_unitary(&coeffs.transpose());
        let root_b = sqrt_psd(&rho_b).unwrap();
        let mut averaged = Matrix::zeros(d);
        for (k, effect) in inst.effects().iter().enumerate() {
            let a = tensor(&inst.kraus(k)[0], &Matrix::identity(d));
            let conditional = partial_trace(&a.conjugate(&joint), (d, d), Subsystem::A).unwrap();
            let f = w.conjugate(&effect.transpose());
            assert!(root_b.conjugate(&f).distance(&conditional) < 1e-9);
            averaged += &conditional;
        }
        assert!(averaged.distance(&rho_b) < 1e-9);
    }
}
