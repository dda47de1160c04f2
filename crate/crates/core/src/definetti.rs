//! Exchangeable multi-copy states, Bayesian updating of priors over density
//! operators, and the failure of the mixture representation over real
//! amplitudes.
//!
//! Priors are discrete: weights on a finite grid of states. Qubit grids cover
//! the Bloch ball with Fibonacci shells; larger dimensions use random states.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::effects::{born, Povm};
use crate::error::{Error, Result};
use crate::linalg::{pauli_y, random_state, tensor_all, trace_distance, trace_product, Matrix, ZERO};
use crate::rng::seeded;
use crate::states::{ClassicalDistribution, DensityOperator};

/// Largest joint dimension `D^n` that [`definetti_mix`] will build.
pub const MAX_JOINT_DIM: usize = 1024;
/// Largest number of outcome sequences in [`classical_definetti_mix`].
pub const MAX_SEQUENCES: usize = 1 << 20;
/// Normalisation tolerance of prior weights.
pub const WEIGHT_TOL: f64 = 1e-12;

/// Discrete probability distribution over density operators.
#[derive(Clone, Debug)]
pub struct PriorOverStates {
    support: Vec<DensityOperator>,
    weights: Vec<f64>,
}

impl PriorOverStates {
    pub fn new(support: Vec<DensityOperator>, weights: Vec<f64>) -> Result<Self> {
        let first = support.first().ok_or(Error::Empty("prior without support"))?;
        if weights.len() != support.len() {
            return Err(Error::DimensionMismatch { expected: support.len(), found: weights.len() });
        }
        if let Some(s) = support.iter().find(|s| s.dim() != first.dim()) {
            return Err(Error::DimensionMismatch { expected: first.dim(), found: s.dim() });
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::NotADistribution { reason: format!("weight {w}") });
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::NotADistribution { reason: format!("weights sum to {total}") });
        }
        Ok(PriorOverStates { support, weights })
    }

    /// Normalises nonnegative weights.
    pub fn from_weights(support: Vec<DensityOperator>, weights: &[f64]) -> Result<Self> {
        let p = ClassicalDistribution::from_weights(weights)?;
        PriorOverStates::new(support, p.probs().to_vec())
    }

    pub fn point(state: DensityOperator) -> Self {
        PriorOverStates { support: vec![state], weights: vec![1.0] }
    }

    pub fn uniform(support: Vec<DensityOperator>) -> Result<Self> {
        let n = support.len();
        PriorOverStates::from_weights(support, &vec![1.0; n])
    }

    pub fn support(&self) -> &[DensityOperator] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.support[0].dim()
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }
}

/// State of `n` systems invariant under permutations of the factors.
#[derive(Clone, Debug)]
pub struct ExchangeableState {
    n: usize,
    dim: usize,
    op: Matrix,
}

impl ExchangeableState {
    pub fn copies(&self) -> usize {
        self.n
    }

    /// Single-system dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn op(&self) -> &Matrix {
        &self.op
    }
}

fn joint_dim(dim: usize, n: usize) -> Result<usize> {
    let total = (0..n).try_fold(1usize, |acc, _| acc.checked_mul(dim));
    match total {
        Some(t) if t <= MAX_JOINT_DIM => Ok(t),
        _ => Err(Error::DimensionBudgetExceeded { dim: total.unwrap_or(usize::MAX), budget: MAX_JOINT_DIM }),
    }
}

fn power(rho: &Matrix, n: usize) -> Matrix {
    tensor_all(&vec![rho.clone(); n])
}

/// `Σ_k w_k ρ_k^{⊗n}`.
pub fn definetti_mix(prior: &PriorOverStates, n: usize) -> Result<ExchangeableState> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one copy".into()));
    }
    let total = joint_dim(prior.dim(), n)?;
    let mut op = Matrix::zeros(total);
    for (s, &w) in prior.support.iter().zip(&prior.weights) {
        if w > 0.0 {
            op += &power(s.op(), n).scale_real(w);
        }
    }
    Ok(ExchangeableState { n, dim: prior.dim(), op })
}

/// Wraps an operator on `(C^dim)^{⊗n}` without checking exchangeability.
pub fn exchangeable_candidate(op: Matrix, dim: usize, n: usize) -> Result<ExchangeableState> {
    let total = joint_dim(dim, n)?;
    if op.dim() != total {
        return Err(Error::DimensionMismatch { expected: total, found: op.dim() });
    }
    DensityOperator::new(op.clone())?;
    Ok(ExchangeableState { n, dim, op })
}

fn digits(mut index: usize, dim: usize, n: usize) -> Vec<usize> {
    let mut out = vec![0; n];
    for slot in out.iter_mut().rev() {
        *slot = index % dim;
        index /= dim;
    }
    out
}

fn undigits(d: &[usize], dim: usize) -> usize {
    d.iter().fold(0, |acc, &x| acc * dim + x)
}

/// Reorders tensor factors: factor `k` of the result is factor `perm[k]` of `op`.
pub fn permute_factors(op: &Matrix, dim: usize, n: usize, perm: &[usize]) -> Matrix {
    assert_eq!(perm.len(), n, "permutation length must match the number of factors");
    let map = |idx: usize| {
        let new = digits(idx, dim, n);
        let mut old = vec![0; n];
        for (k, &p) in perm.iter().enumerate() {
            old[p] = new[k];
        }
        undigits(&old, dim)
    };
    let lookup: Vec<usize> = (0..op.dim()).map(map).collect();
    Matrix::from_fn(op.dim(), |a, b| op.get(lookup[a], lookup[b]))
}

/// Traces out factor `k` of an operator on `(C^dim)^{⊗n}`.
pub fn partial_trace_factor(op: &Matrix, dim: usize, n: usize, k: usize) -> Matrix {
    let out_dim = op.dim() / dim;
    let lift = |idx: usize, j: usize| {
        let mut d = digits(idx, dim, n - 1);
        d.insert(k, j);
        undigits(&d, dim)
    };
    Matrix::from_fn(out_dim, |a, b| (0..dim).map(|j| op.get(lift(a, j), lift(b, j))).fold(ZERO, |x, y| x + y))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExchangeabilityReport {
    /// Largest change under a swap of adjacent factors.
    pub max_transposition_deviation: f64,
    /// Largest distance between a single-factor partial trace and the given
    /// `(n−1)`-copy state; zero when none was supplied.
    pub max_marginal_deviation: f64,
}

impl ExchangeabilityReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_transposition_deviation <= tol && self.max_marginal_deviation <= tol
    }
}

pub fn check_exchangeable(state: &ExchangeableState, marginal: Option<&ExchangeableState>) -> ExchangeabilityReport {
    let (d, n) = (state.dim, state.n);
    let max_transposition_deviation = (0..n.saturating_sub(1))
        .map(|k| {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.swap(k, k + 1);
            permute_factors(&state.op, d, n, &perm).distance(&state.op)
        })
        .fold(0.0, f64::max);
    let max_marginal_deviation = match marginal {
        Some(m) if n >= 2 => {
            (0..n).map(|k| partial_trace_factor(&state.op, d, n, k).distance(&m.op)).fold(0.0, f64::max)
        }
        _ => 0.0,
    };
    ExchangeabilityReport { max_transposition_deviation, max_marginal_deviation }
}

fn log_likelihoods(prior: &PriorOverStates, povm: &Povm, outcomes: &[usize]) -> Result<Vec<f64>> {
    if povm.dim() != prior.dim() {
        return Err(Error::DimensionMismatch { expected: prior.dim(), found: povm.dim() });
    }
    if let Some(&bad) = outcomes.iter().find(|&&d| d >= povm.len()) {
        return Err(Error::IndexOutOfRange { index: bad, len: povm.len() });
    }
    let mut counts = vec![0usize; povm.len()];
    outcomes.iter().for_each(|&d| counts[d] += 1);
    prior
        .support
        .iter()
        .map(|s| {
            let probs = born(s, povm)?;
            Ok(counts
                .iter()
                .zip(&probs)
                .filter(|(&n, _)| n > 0)
                .map(|(&n, &p)| if p > 0.0 { n as f64 * p.ln() } else { f64::NEG_INFINITY })
                .sum())
        })
        .collect()
}

fn normalise_log_weights(prior: &PriorOverStates, log_w: &[f64]) -> Result<PriorOverStates> {
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::ZeroLikelihoodEverywhere);
    }
    let raw: Vec<f64> = log_w.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(PriorOverStates { support: prior.support.clone(), weights: raw.iter().map(|x| x / total).collect() })
}

/// Posterior over the grid after observing `outcomes` of `povm` on separate copies.
///
/// Computed in log space, so long data records do not underflow.
pub fn posterior_update(prior: &PriorOverStates, povm: &Povm, outcomes: &[usize]) -> Result<PriorOverStates> {
    let ll = log_likelihoods(prior, povm, outcomes)?;
    let log_w: Vec<f64> =
        prior.weights.iter().zip(&ll).map(|(&w, &l)| if w > 0.0 { w.ln() + l } else { f64::NEG_INFINITY }).collect();
    normalise_log_weights(prior, &log_w)
}

/// `Σ_k w_k ρ_k`.
pub fn predictive_state(prior: &PriorOverStates) -> DensityOperator {
    let refs: Vec<&DensityOperator> = prior.support.iter().collect();
    DensityOperator::mixture(&prior.weights, &refs).expect("prior weights form a distribution")
}

/// Single-copy state after conditioning the `n`-copy de Finetti state on
/// outcomes of `povm` on its first `n − 1` factors.
pub fn conditional_marginal(state: &ExchangeableState, povm: &Povm, outcomes: &[usize]) -> Result<DensityOperator> {
    if outcomes.len() + 1 != state.n {
        return Err(Error::DimensionMismatch { expected: state.n - 1, found: outcomes.len() });
    }
    let mut factors: Vec<Matrix> = outcomes.iter().map(|&d| povm.element(d).clone()).collect();
    factors.push(Matrix::identity(state.dim));
    let gated = &tensor_all(&factors) * &state.op;
    let mut reduced = gated;
    for k in 0..state.n - 1 {
        reduced = partial_trace_factor(&reduced, state.dim, state.n - k, 0);
    }
    let p = reduced.trace().re;
    if p <= 0.0 {
        return Err(Error::ZeroLikelihoodEverywhere);
    }
    crate::states::state_from_reconstruction(&reduced.scale_real(1.0 / p))
}

/// Fibonacci-sphere shells filling the qubit Bloch ball, plus its center.
///
/// Shell `k` of `shells` has radius `k / shells`.
pub fn bloch_grid(points_per_shell: usize, shells: usize) -> Vec<DensityOperator> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let mut grid = vec![DensityOperator::maximally_mixed(2)];
    for shell in 1..=shells {
        let radius = shell as f64 / shells as f64;
        for i in 0..points_per_shell {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / points_per_shell as f64;
            let rho = (1.0 - z * z).sqrt();
            let phi = golden * i as f64 + 0.37 * shell as f64;
            let v = [radius * rho * phi.cos(), radius * rho * phi.sin(), radius * z];
            grid.push(DensityOperator::from_bloch(v).expect("inside the ball"));
        }
    }
    grid
}

/// Random grid of `n` states for dimensions beyond two.
pub fn random_grid<R: Rng + ?Sized>(dim: usize, n: usize, rng: &mut R) -> Vec<DensityOperator> {
    (0..n).map(|_| random_state(dim, rng)).collect()
}

/// Index of the grid state closest to `state` in Hilbert–Schmidt distance.
pub fn nearest_grid_point(grid: &[DensityOperator], state: &DensityOperator) -> usize {
    grid.iter()
        .map(|g| g.op().distance(state.op()))
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
        .expect("non-empty grid")
}

/// Weights `∝ exp(−κ r)` in the Bloch radius, favouring the center.
pub fn center_skewed_prior(grid: Vec<DensityOperator>, kappa: f64) -> Result<PriorOverStates> {
    let w: Vec<f64> = grid
        .iter()
        .map(|s| {
            let v = s.bloch_vector();
            (-kappa * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()).exp()
        })
        .collect();
    PriorOverStates::from_weights(grid, &w)
}

/// Weights `∝ exp(κ n·r)`, favouring Bloch vectors along `axis`.
pub fn direction_skewed_prior(grid: Vec<DensityOperator>, axis: [f64; 3], kappa: f64) -> Result<PriorOverStates> {
    let w: Vec<f64> = grid
        .iter()
        .map(|s| {
            let v = s.bloch_vector();
            (kappa * (axis[0] * v[0] + axis[1] * v[1] + axis[2] * v[2])).exp()
        })
        .collect();
    PriorOverStates::from_weights(grid, &w)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MergeStep {
    pub k: usize,
    pub between_agents: f64,
    pub first_to_truth: f64,
    pub second_to_truth: f64,
}

#[derive(Clone, Debug)]
pub struct MergingTrace {
    pub outcomes: Vec<usize>,
    /// One entry per observation, starting with `k = 0` before any data.
    pub steps: Vec<MergeStep>,
}

impl MergingTrace {
    pub fn last(&self) -> &MergeStep {
        self.steps.last().expect("trace starts with the prior")
    }

    pub fn at(&self, k: usize) -> &MergeStep {
        &self.steps[k]
    }
}

/// Two agents update their priors on the same i.i.d. data drawn from `truth`.
pub fn merging_experiment(
    prior_a: &PriorOverStates,
    prior_b: &PriorOverStates,
    truth: &DensityOperator,
    povm: &Povm,
    k: usize,
    seed: u64,
) -> Result<MergingTrace> {
    let mut rng = seeded(seed);
    let probs = born(truth, povm)?;
    let mut log_a: Vec<f64> = prior_a.weights.iter().map(|w| w.ln()).collect();
    let mut log_b: Vec<f64> = prior_b.weights.iter().map(|w| w.ln()).collect();
    let table = |prior: &PriorOverStates| -> Result<Vec<Vec<f64>>> {
        prior.support.iter().map(|s| Ok(born(s, povm)?.iter().map(|p| p.ln()).collect())).collect()
    };
    let (ta, tb) = (table(prior_a)?, table(prior_b)?);

    let mut steps = Vec::with_capacity(k + 1);
    let mut outcomes = Vec::with_capacity(k);
    let mut record = |step: usize, la: &[f64], lb: &[f64]| -> Result<()> {
        let pa = predictive_state(&normalise_log_weights(prior_a, la)?);
        let pb = predictive_state(&normalise_log_weights(prior_b, lb)?);
        steps.push(MergeStep {
            k: step,
            between_agents: trace_distance(pa.op(), pb.op())?,
            first_to_truth: trace_distance(pa.op(), truth.op())?,
            second_to_truth: trace_distance(pb.op(), truth.op())?,
        });
        Ok(())
    };
    record(0, &log_a, &log_b)?;
    for step in 1..=k {
        let u: f64 = rng.random();
        let mut cumulative = 0.0;
        let d = probs
            .iter()
            .position(|p| {
                cumulative += p;
                u < cumulative
            })
            .unwrap_or(probs.len() - 1);
        outcomes.push(d);
        log_a.iter_mut().zip(&ta).for_each(|(l, row)| *l += row[d]);
        log_b.iter_mut().zip(&tb).for_each(|(l, row)| *l += row[d]);
        record(step, &log_a, &log_b)?;
    }
    Ok(MergingTrace { outcomes, steps })
}

/// `p(x_1 … x_n) = Σ_w P(w) Π_t p_w(x_t)` over all `k^n` sequences, first
/// outcome most significant.
pub fn classical_definetti_mix(
    grid: &[ClassicalDistribution],
    prior: &ClassicalDistribution,
    n: usize,
) -> Result<Vec<f64>> {
    let first = grid.first().ok_or(Error::Empty("empty simplex grid"))?;
    if prior.len() != grid.len() {
        return Err(Error::DimensionMismatch { expected: grid.len(), found: prior.len() });
    }
    let k = first.len();
    if let Some(g) = grid.iter().find(|g| g.len() != k) {
        return Err(Error::DimensionMismatch { expected: k, found: g.len() });
    }
    let total = (0..n).try_fold(1usize, |acc, _| acc.checked_mul(k)).filter(|&t| t <= MAX_SEQUENCES);
    let total =
        total.ok_or(Error::DimensionBudgetExceeded { dim: k.saturating_pow(n as u32), budget: MAX_SEQUENCES })?;
    Ok((0..total)
        .map(|idx| {
            let xs = digits(idx, k, n);
            grid.iter().zip(prior.probs()).map(|(g, &w)| w * xs.iter().map(|&x| g.probs()[x]).product::<f64>()).sum()
        })
        .collect())
}

/// Nonnegative least squares by the Lawson–Hanson active-set method.
///
/// Returns the minimiser of `‖A x − b‖₂` over `x ≥ 0` and that norm.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, f64) {
    let (m, p) = a.shape();
    let mut x = DVector::zeros(p);
    let mut passive = vec![false; p];
    let tol = 1e-12 * a.norm().max(1.0) * b.norm().max(1.0);
    let solve_passive = |passive: &[bool]| -> DVector<f64> {
        let idx: Vec<usize> = (0..p).filter(|&j| passive[j]).collect();
        let sub = DMatrix::from_fn(m, idx.len(), |i, j| a[(i, idx[j])]);
        let z = sub.svd(true, true).solve(b, 1e-13).expect("singular vectors computed");
        let mut s = DVector::zeros(p);
        for (j, &col) in idx.iter().enumerate() {
            s[col] = z[j];
        }
        s
    };
    for _ in 0..3 * p.max(1) {
        let w = a.transpose() * (b - a * &x);
        let candidate = (0..p).filter(|&j| !passive[j]).max_by(|&i, &j| w[i].total_cmp(&w[j]));
        match candidate {
            Some(j) if w[j] > tol => passive[j] = true,
            _ => break,
        }
        loop {
            let s = solve_passive(&passive);
            if (0..p).filter(|&j| passive[j]).all(|j| s[j] > 0.0) {
                x = s;
                break;
            }
            let alpha = (0..p)
                .filter(|&j| passive[j] && s[j] <= 0.0)
                .map(|j| x[j] / (x[j] - s[j]))
                .fold(f64::INFINITY, f64::min);
            x += (&s - &x) * alpha;
            for j in 0..p {
                if passive[j] && x[j] <= 1e-15 {
                    passive[j] = false;
                    x[j] = 0.0;
                }
            }
        }
    }
    let residual = (b - a * &x).norm();
    (x, residual)
}

fn vectorise(m: &Matrix) -> Vec<f64> {
    let n = m.dim();
    let mut out = Vec::with_capacity(2 * n * n);
    for i in 0..n {
        for j in 0..n {
            out.push(m.get(i, j).re);
        }
    }
    for i in 0..n {
        for j in 0..n {
            out.push(m.get(i, j).im);
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct MixtureFit {
    pub weights: Vec<f64>,
    /// Frobenius distance between the target and the fitted mixture.
    pub residual: f64,
}

/// Best nonnegative combination of `grid[k]^{⊗n}` approximating `target`.
pub fn fit_power_mixture(target: &Matrix, grid: &[DensityOperator], n: usize) -> MixtureFit {
    let columns: Vec<Vec<f64>> = grid.iter().map(|s| vectorise(&power(s.op(), n))).collect();
    let rows = columns[0].len();
    let a = DMatrix::from_fn(rows, columns.len(), |i, j| columns[j][i]);
    let b = DVector::from_vec(vectorise(target));
    let (x, residual) = nnls(&a, &b);
    MixtureFit { weights: x.iter().cloned().collect(), residual }
}

/// Real qubit states on a polar grid over the x–z disk of the Bloch ball.
pub fn real_disk_grid(radii: usize, angles: usize) -> Vec<DensityOperator> {
    let mut grid = vec![DensityOperator::maximally_mixed(2)];
    for i in 1..=radii {
        let r = i as f64 / radii as f64;
        for j in 0..angles {
            let t = std::f64::consts::TAU * j as f64 / angles as f64;
            grid.push(DensityOperator::from_bloch([r * t.cos(), 0.0, r * t.sin()]).expect("inside the disk"));
        }
    }
    grid
}

/// `½(ρ₊^{⊗n} + ρ₋^{⊗n})` with `ρ± = ½(I ± σ_y)`.
pub fn real_counterexample_state(n: usize) -> Result<ExchangeableState> {
    let plus = DensityOperator::from_bloch([0.0, 1.0, 0.0])?;
    let minus = DensityOperator::from_bloch([0.0, -1.0, 0.0])?;
    definetti_mix(&PriorOverStates::new(vec![plus, minus], vec![0.5, 0.5])?, n)
}

#[derive(Clone, Debug)]
pub struct RealCounterexampleReport {
    pub n: usize,
    pub max_imaginary: f64,
    pub exchangeability: ExchangeabilityReport,
    pub real_grid_size: usize,
    /// Best fit by mixtures of real product powers.
    pub real_fit_residual: f64,
    /// `⟨W, ρ^{(n)}⟩` with `W = σ_y ⊗ σ_y ⊗ I ⊗ …`.
    pub witness_value: f64,
    /// Largest `|⟨W, ρ^{⊗n}⟩|` over the real grid.
    pub witness_on_real_grid: f64,
    /// `|⟨W, ρ^{(n)}⟩| / ‖W‖_F`, a lower bound on any real-mixture residual.
    pub residual_lower_bound: f64,
    pub complex_grid_size: usize,
    pub complex_fit_residual: f64,
}

pub fn real_counterexample(n: usize) -> Result<RealCounterexampleReport> {
    if !(2..=3).contains(&n) {
        return Err(Error::InvalidArgument(format!("real counterexample is built for n = 2 or 3, not {n}")));
    }
    let state = real_counterexample_state(n)?;
    let marginal = real_counterexample_state(n - 1)?;
    let exchangeability = check_exchangeable(&state, Some(&marginal));
    let max_imaginary = state.op.max_abs_imag();

    let mut factors = vec![pauli_y(), pauli_y()];
    factors.extend(std::iter::repeat_n(Matrix::identity(2), n - 2));
    let witness = tensor_all(&factors);
    let witness_value = trace_product(&witness, &state.op).re;

    let real_grid = real_disk_grid(20, 30);
    let witness_on_real_grid =
        real_grid.iter().map(|s| trace_product(&witness, &power(s.op(), n)).re.abs()).fold(0.0, f64::max);
    let real_fit = fit_power_mixture(&state.op, &real_grid, n);

    let mut complex_grid = bloch_grid(40, 3);
    complex_grid.push(DensityOperator::from_bloch([0.0, 1.0, 0.0])?);
    complex_grid.push(DensityOperator::from_bloch([0.0, -1.0, 0.0])?);
    let complex_fit = fit_power_mixture(&state.op, &complex_grid, n);

    Ok(RealCounterexampleReport {
        n,
        max_imaginary,
        exchangeability,
        real_grid_size: real_grid.len(),
        real_fit_residual: real_fit.residual,
        witness_value,
        witness_on_real_grid,
        residual_lower_bound: witness_value.abs() / witness.frobenius_norm(),
        complex_grid_size: complex_grid.len(),
        complex_fit_residual: complex_fit.residual,
    })
}
