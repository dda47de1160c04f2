//! POVMs as the basic notion of measurement.
//!
//! Covers validation of candidate POVMs, the minimal informationally complete
//! construction (`D²` rank-one projectors renormalised by `G^{-1/2}`), the
//! generalised Born rule, frame functions and the reconstruction of a density
//! operator from them, the certainty bound on standard-measurement outcomes,
//! and POVMs induced by an ancilla dilation.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{
    basis_ket, eig_hermitian, inv_sqrt, partial_trace, r, sqrt_psd, tensor, trace_product, Ket, Matrix, Subsystem,
    EPS_PINV, I, PSD_TOL,
};
use crate::states::{self, DensityOperator};

/// Frobenius tolerance on `Σ E_d − I`.
pub const RESOLUTION_TOL: f64 = 1e-9;
/// Tolerance on effect eigenvalues leaving `[0, 1]`.
pub const EFFECT_TOL: f64 = 1e-10;
/// Smallest admissible singular value of the operator-space Gram of an IC POVM.
pub const INDEPENDENCE_TOL: f64 = 1e-8;
/// Largest admissible second eigenvalue of a rank-one element.
pub const RANK_ONE_TOL: f64 = 1e-9;
/// Residual of the frame least-squares solve above which the sample is rejected.
pub const FRAME_RESIDUAL_TOL: f64 = 1e-6;
/// Born probabilities below `-BORN_CLAMP` indicate an invalid state or POVM.
pub const BORN_CLAMP: f64 = 1e-12;

/// A Hermitian operator with spectrum in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Effect(Matrix);

impl Effect {
    pub fn new(op: Matrix) -> Result<Self> {
        let eig = eig_hermitian(&op)?;
        if eig.min() < -EFFECT_TOL || eig.max() > 1.0 + EFFECT_TOL {
            return Err(Error::NotEffect { min_eigenvalue: eig.min(), max_eigenvalue: eig.max() });
        }
        Ok(Effect(op.hermitian_part()))
    }

    pub fn op(&self) -> &Matrix {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn key(&self) -> EffectKey {
        EffectKey::of(&self.0)
    }
}

/// Canonical key of an effect: entries rounded to 12 decimal digits.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct EffectKey(Vec<i64>);

impl EffectKey {
    pub fn of(m: &Matrix) -> Self {
        EffectKey(m.real_coordinates().into_iter().map(|x| (x * 1e12).round() as i64).collect())
    }
}

/// An ordered set of effects resolving the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct Povm {
    elements: Vec<Effect>,
}

impl Povm {
    /// Validates `candidate` as a POVM (see [`validate_povm`]).
    pub fn new(candidate: Vec<Matrix>) -> Result<Self> {
        let first = candidate.first().ok_or(Error::Empty("POVM needs at least one element"))?;
        let dim = first.dim();
        let mut elements = Vec::with_capacity(candidate.len());
        for (index, m) in candidate.into_iter().enumerate() {
            if m.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: m.dim() });
            }
            let eig = eig_hermitian(&m)?;
            if eig.min() < -PSD_TOL {
                return Err(Error::NotPsd { index, min_eigenvalue: eig.min() });
            }
            elements.push(Effect(m.hermitian_part()));
        }
        let total: Matrix = elements.iter().map(|e| e.0.clone()).sum();
        let deficit = total.distance(&Matrix::identity(dim));
        if deficit > RESOLUTION_TOL {
            return Err(Error::NotResolution { deficit });
        }
        Ok(Povm { elements })
    }

    /// Projective measurement in the computational basis.
    pub fn computational_basis(dim: usize) -> Self {
        Povm::new((0..dim).map(|k| Matrix::projector(&basis_ket(dim, k))).collect())
            .expect("basis projectors resolve I")
    }

    /// Projective measurement onto an orthonormal basis given as columns of `u`.
    pub fn from_basis(u: &Matrix) -> Result<Self> {
        let cols = u.as_dmatrix();
        Povm::new((0..u.dim()).map(|k| Matrix::projector(&cols.column(k).into_owned())).collect())
    }

    /// The single-outcome measurement `{I}`.
    pub fn trivial(dim: usize) -> Self {
        Povm { elements: vec![Effect(Matrix::identity(dim))] }
    }

    pub fn elements(&self) -> &[Effect] {
        &self.elements
    }

    pub fn element(&self, index: usize) -> &Matrix {
        &self.elements[index].0
    }

    pub fn ops(&self) -> Vec<Matrix> {
        self.elements.iter().map(|e| e.0.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.elements[0].dim()
    }

    /// Frobenius norm of `Σ E_d − I`.
    pub fn resolution_error(&self) -> f64 {
        let total: Matrix = self.ops().into_iter().sum();
        total.distance(&Matrix::identity(self.dim()))
    }

    /// Whether every element is an orthogonal projector.
    pub fn is_projective(&self, tol: f64) -> bool {
        self.elements.iter().all(|e| (&e.0 * &e.0).distance(&e.0) <= tol)
    }
}

pub fn validate_povm(candidate: &[Matrix]) -> Result<Povm> {
    Povm::new(candidate.to_vec())
}

/// The `D²` rank-one projectors of the minimal informationally complete construction.
///
/// Order: `|e_j⟩⟨e_j|` for each `j`; then `½(|e_j⟩+|e_k⟩)(⟨e_j|+⟨e_k|)` for `j < k`;
/// then `½(|e_j⟩+i|e_k⟩)(⟨e_j|−i⟨e_k|)` for `j < k`. Pairs are enumerated with `j`
/// as the outer index.
pub fn build_ic_projectors(dim: usize) -> Vec<Matrix> {
    assert!(dim >= 2, "the IC construction needs D >= 2");
    let mut out = Vec::with_capacity(dim * dim);
    for j in 0..dim {
        out.push(Matrix::projector(&basis_ket(dim, j)));
    }
    let pairs: Vec<(usize, usize)> = (0..dim).flat_map(|j| (j + 1..dim).map(move |k| (j, k))).collect();
    for &(j, k) in &pairs {
        let v: Ket = basis_ket(dim, j) + basis_ket(dim, k);
        out.push(Matrix::projector(&v).scale_real(0.5));
    }
    for &(j, k) in &pairs {
        let v: Ket = basis_ket(dim, j) + basis_ket(dim, k) * I;
        out.push(Matrix::projector(&v).scale_real(0.5));
    }
    out
}

/// A POVM with exactly `D²` linearly independent rank-one elements.
#[derive(Clone, Debug)]
pub struct MinimalIcPovm {
    pub base: Povm,
    /// `G = Σ Π_d`.
    pub gram: Matrix,
    /// The projectors before renormalisation.
    pub projectors: Vec<Matrix>,
}

impl MinimalIcPovm {
    /// The canonical standard measurement for dimension `dim`, built once and shared.
    pub fn standard(dim: usize) -> Arc<MinimalIcPovm> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<MinimalIcPovm>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("standard measurement cache poisoned");
        guard
            .entry(dim)
            .or_insert_with(|| {
                Arc::new(gram_renormalize(&build_ic_projectors(dim)).expect("standard construction is valid"))
            })
            .clone()
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    /// Smallest singular value of the operator-space Gram `tr(E_i E_j)`.
    pub fn independence_margin(&self) -> f64 {
        operator_gram_smallest_singular(&self.base.ops())
    }

    /// Largest second eigenvalue over the elements (zero for rank one).
    pub fn max_second_eigenvalue(&self) -> f64 {
        self.base
            .elements()
            .iter()
            .map(|e| eig_hermitian(e.op()).map(|x| x.eigenvalues[1]).unwrap_or(f64::INFINITY))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn operator_gram_smallest_singular(ops: &[Matrix]) -> f64 {
    let n = ops.len();
    let gram = DMatrix::from_fn(n, n, |i, j| trace_product(&ops[i], &ops[j]).re);
    gram.singular_values().min()
}

/// Renormalises linearly independent projectors into a POVM: `E_d = G^{-1/2} Π_d G^{-1/2}`.
pub fn gram_renormalize(projectors: &[Matrix]) -> Result<MinimalIcPovm> {
    let first = projectors.first().ok_or(Error::Empty("no projectors"))?;
    let dim = first.dim();
    if projectors.len() != dim * dim {
        return Err(Error::DimensionMismatch { expected: dim * dim, found: projectors.len() });
    }
    let gram: Matrix = projectors.iter().cloned().sum();
    let eig = eig_hermitian(&gram)?;
    if eig.min() < EPS_PINV * eig.max() {
        return Err(Error::SingularGram { min_eigenvalue: eig.min() });
    }
    let g_inv_sqrt = inv_sqrt(&gram)?;
    let elements = projectors.iter().map(|p| g_inv_sqrt.conjugate(p).hermitian_part()).collect();
    let ic = MinimalIcPovm { base: Povm::new(elements)?, gram, projectors: projectors.to_vec() };
    let margin = ic.independence_margin();
    if margin <= INDEPENDENCE_TOL {
        return Err(Error::DegenerateSpan { smallest_singular: margin, residual: 0.0 });
    }
    let second = ic.max_second_eigenvalue();
    if second >= RANK_ONE_TOL {
        return Err(Error::InvalidArgument(format!("elements are not rank one (second eigenvalue {second:e})")));
    }
    Ok(ic)
}

/// Generalised Born rule `P(d) = tr(ρ E_d)`, tiny negatives clamped to zero.
pub fn born(state: &DensityOperator, povm: &Povm) -> Result<Vec<f64>> {
    if state.dim() != povm.dim() {
        return Err(Error::DimensionMismatch { expected: povm.dim(), found: state.dim() });
    }
    Ok(povm.elements().iter().map(|e| trace_product(state.op(), e.op()).re.max(0.0)).collect())
}

/// Probability of a single effect, `tr(ρ E)`.
pub fn effect_probability(state: &DensityOperator, effect: &Matrix) -> f64 {
    trace_product(state.op(), effect).re
}

/// Orthonormal basis of the real vector space of Hermitian `dim × dim` matrices.
pub fn hermitian_basis(dim: usize) -> Vec<Matrix> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut basis = Vec::with_capacity(dim * dim);
    for j in 0..dim {
        basis.push(Matrix::projector(&basis_ket(dim, j)));
    }
    for j in 0..dim {
        for k in j + 1..dim {
            let mut m = Matrix::zeros(dim);
            m.set(j, k, r(s));
            m.set(k, j, r(s));
            basis.push(m);
            let mut m = Matrix::zeros(dim);
            m.set(j, k, -I * s);
            m.set(k, j, I * s);
            basis.push(m);
        }
    }
    basis
}

/// Real coordinates of a Hermitian matrix in [`hermitian_basis`].
pub fn hermitian_coordinates(m: &Matrix) -> Vec<f64> {
    hermitian_basis(m.dim()).iter().map(|b| trace_product(b, m).re).collect()
}

/// Least-squares Hermitian solution of `tr(X E_i) = values[i]`.
///
/// Returns the solution and the Euclidean residual. Fails with `DegenerateSpan`
/// when the effects do not span the Hermitian operators or the residual
/// exceeds [`FRAME_RESIDUAL_TOL`].
pub fn solve_hermitian_from_traces(effects: &[Matrix], values: &[f64], dim: usize) -> Result<(Matrix, f64)> {
    assert_eq!(effects.len(), values.len(), "one value per effect");
    let basis = hermitian_basis(dim);
    let n = effects.len();
    let m = basis.len();
    if n < m {
        return Err(Error::DegenerateSpan { smallest_singular: 0.0, residual: f64::NAN });
    }
    let a = DMatrix::from_fn(n, m, |i, k| trace_product(&basis[k], &effects[i]).re);
    let b = DVector::from_column_slice(values);
    let svd = a.clone().svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    let smin = sv.min();
    if smin <= EPS_PINV * smax {
        return Err(Error::DegenerateSpan { smallest_singular: smin, residual: f64::NAN });
    }
    let x = svd.solve(&b, 0.0).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let residual = (&a * &x - &b).norm();
    if residual > FRAME_RESIDUAL_TOL {
        return Err(Error::DegenerateSpan { smallest_singular: smin, residual });
    }
    let mut op = Matrix::zeros(dim);
    for (coef, bk) in x.iter().zip(&basis) {
        op += &bk.scale_real(*coef);
    }
    Ok((op, residual))
}

/// A finite record of a frame function: values assigned to effects.
#[derive(Clone, Debug)]
pub struct FrameFunction {
    dim: usize,
    entries: Vec<(Effect, f64)>,
    index: HashMap<EffectKey, usize>,
}

impl FrameFunction {
    pub fn new(dim: usize) -> Self {
        FrameFunction { dim, entries: Vec::new(), index: HashMap::new() }
    }

    /// Samples the frame function `E ↦ tr(ρE)` on the elements of `povms`.
    pub fn from_state(state: &DensityOperator, povms: &[&Povm]) -> Result<Self> {
        let mut f = FrameFunction::new(state.dim());
        for povm in povms {
            f.record_povm(povm, &born(state, povm)?)?;
        }
        Ok(f)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(Effect, f64)] {
        &self.entries
    }

    pub fn value(&self, effect: &Matrix) -> Option<f64> {
        self.index.get(&EffectKey::of(effect)).map(|&i| self.entries[i].1)
    }

    /// Assigns `value ∈ [0, 1]` to `effect`. Re-assigning the same effect must agree.
    pub fn assign(&mut self, effect: Effect, value: f64) -> Result<()> {
        if effect.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: effect.dim() });
        }
        if !(-1e-12..=1.0 + 1e-12).contains(&value) {
            return Err(Error::InvalidArgument(format!("frame value {value} outside [0, 1]")));
        }
        let key = effect.key();
        if let Some(&i) = self.index.get(&key) {
            let old = self.entries[i].1;
            if (old - value).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!("effect already assigned {old}, got {value}")));
            }
            return Ok(());
        }
        self.index.insert(key, self.entries.len());
        self.entries.push((effect, value));
        Ok(())
    }

    /// Records the values on all elements of a POVM; they must sum to one.
    pub fn record_povm(&mut self, povm: &Povm, values: &[f64]) -> Result<()> {
        if values.len() != povm.len() {
            return Err(Error::DimensionMismatch { expected: povm.len(), found: values.len() });
        }
        let total: f64 = values.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::NotADistribution { reason: format!("frame values over a POVM sum to {total}") });
        }
        for (e, &v) in povm.elements().iter().zip(values) {
            self.assign(e.clone(), v)?;
        }
        Ok(())
    }
}

/// The Hermitian operator reproducing a frame function on its sampled effects.
#[derive(Clone, Debug)]
pub struct FrameReconstruction {
    pub operator: Matrix,
    pub residual: f64,
}

impl FrameReconstruction {
    /// Interprets the operator as a density operator; `NotAState` signals an
    /// inconsistent frame function.
    pub fn as_state(&self) -> Result<DensityOperator> {
        states::state_from_reconstruction(&self.operator)
    }
}

pub fn reconstruct_from_frame(f: &FrameFunction) -> Result<FrameReconstruction> {
    let effects: Vec<Matrix> = f.entries.iter().map(|(e, _)| e.op().clone()).collect();
    let values: Vec<f64> = f.entries.iter().map(|(_, v)| *v).collect();
    let (operator, residual) = solve_hermitian_from_traces(&effects, &values, f.dim)?;
    Ok(FrameReconstruction { operator, residual })
}

/// Closed-form and numerical values of the bound on standard-measurement probabilities.
#[derive(Clone, Debug)]
pub struct CertaintyBound {
    pub dim: usize,
    /// `[D − ½(1 + cot(3π/4D))]^{-1}`.
    pub closed_form: f64,
    /// `λ_max(G^{-1})` for the standard construction.
    pub numerical: f64,
    pub warning: Option<String>,
}

impl CertaintyBound {
    /// The closed form, unless it disagrees with the numerical eigenvalue.
    pub fn value(&self) -> f64 {
        if self.warning.is_some() {
            self.numerical
        } else {
            self.closed_form
        }
    }
}

pub fn certainty_bound_closed_form(dim: usize) -> f64 {
    let d = dim as f64;
    let cot = 1.0 / (3.0 * PI / (4.0 * d)).tan();
    1.0 / (d - 0.5 * (1.0 + cot))
}

pub fn certainty_bound(dim: usize) -> CertaintyBound {
    assert!(dim >= 2, "certainty bound needs D >= 2");
    let closed_form = certainty_bound_closed_form(dim);
    let sqm = MinimalIcPovm::standard(dim);
    let g_min = eig_hermitian(&sqm.gram).expect("G is Hermitian").min();
    let numerical = 1.0 / g_min;
    let warning = ((closed_form - numerical).abs() > 1e-9)
        .then(|| format!("closed form {closed_form} disagrees with numerical lambda_max(G^-1) = {numerical}"));
    CertaintyBound { dim, closed_form, numerical, warning }
}

/// `λ_max(E_h)` for each element: the largest probability any state can give it.
pub fn max_probability(povm: &Povm) -> Vec<f64> {
    povm.elements().iter().map(|e| eig_hermitian(e.op()).expect("effects are Hermitian").max()).collect()
}

/// System POVM induced by coupling to an ancilla in state `rho_a` through `u`
/// (acting on system ⊗ ancilla) and measuring `ancilla` on the ancilla:
/// `E_d = tr_anc((I ⊗ ρ_A) U† (I ⊗ Π_d) U)`.
///
/// This is the convention under which `tr(ρ_S E_d) = tr(U(ρ_S⊗ρ_A)U† (I⊗Π_d))`.
pub fn povm_from_dilation(rho_a: &DensityOperator, u: &Matrix, ancilla: &Povm) -> Result<Povm> {
    let da = rho_a.dim();
    if ancilla.dim() != da {
        return Err(Error::DimensionMismatch { expected: da, found: ancilla.dim() });
    }
    if !u.dim().is_multiple_of(da) {
        return Err(Error::DimensionMismatch { expected: da, found: u.dim() });
    }
    let ds = u.dim() / da;
    let root = tensor(&Matrix::identity(ds), &sqrt_psd(rho_a.op())?);
    let elements = ancilla
        .elements()
        .iter()
        .map(|pi| {
            let lifted = tensor(&Matrix::identity(ds), pi.op());
            let heisenberg = u.adjoint().conjugate(&lifted);
            partial_trace(&root.conjugate(&heisenberg), (ds, da), Subsystem::B).map(|m| m.hermitian_part())
        })
        .collect::<Result<Vec<_>>>()?;
    Povm::new(elements)
}
