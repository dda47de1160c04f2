//! Probability assignments on bipartite systems that only need to be consistent
//! for measurements the two sides can carry out locally, one after the other.
//!
//! Such an assignment is bilinear in the local effects and is therefore given
//! by a unique operator `L` with `f(E, F) = tr(L (E ⊗ F))`. Over the complex
//! field `L` is pinned down by product data; over the reals it is not. `L` need
//! not be positive: the swap frame is a valid assignment whose operator has a
//! negative eigenvalue.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use crate::effects::{hermitian_basis, solve_hermitian_from_traces, MinimalIcPovm, Povm};
use crate::error::{Error, Result};
use crate::linalg::{
    basis_ket, c, eig_hermitian, random_povm, random_state, tensor, tensor_ket, trace_product, Ket, Matrix,
};
use crate::rng::seeded;
use crate::states::DensityOperator;

/// Which side measures first.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    AtoB,
    BtoA,
}

/// A measurement on one side followed by an outcome-dependent measurement on
/// the other.
#[derive(Clone, Debug)]
pub struct PovmTree {
    direction: Direction,
    dims: (usize, usize),
    first: Povm,
    branches: Vec<Povm>,
}

impl PovmTree {
    pub fn new(direction: Direction, dims: (usize, usize), first: Povm, branches: Vec<Povm>) -> Result<Self> {
        let (d_first, d_second) = match direction {
            Direction::AtoB => dims,
            Direction::BtoA => (dims.1, dims.0),
        };
        if first.dim() != d_first {
            return Err(Error::DimensionMismatch { expected: d_first, found: first.dim() });
        }
        if branches.len() != first.len() {
            return Err(Error::DimensionMismatch { expected: first.len(), found: branches.len() });
        }
        if let Some(b) = branches.iter().find(|b| b.dim() != d_second) {
            return Err(Error::DimensionMismatch { expected: d_second, found: b.dim() });
        }
        Ok(PovmTree { direction, dims, first, branches })
    }

    pub fn trivial(dims: (usize, usize)) -> Self {
        PovmTree {
            direction: Direction::AtoB,
            dims,
            first: Povm::trivial(dims.0),
            branches: vec![Povm::trivial(dims.1)],
        }
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    pub fn first(&self) -> &Povm {
        &self.first
    }

    pub fn branches(&self) -> &[Povm] {
        &self.branches
    }

    /// Local effect pairs `(A-side, B-side)`, indexed by first then second outcome.
    pub fn products(&self) -> Vec<Vec<(Matrix, Matrix)>> {
        self.first
            .elements()
            .iter()
            .zip(&self.branches)
            .map(|(e, branch)| {
                branch
                    .elements()
                    .iter()
                    .map(|f| match self.direction {
                        Direction::AtoB => (e.op().clone(), f.op().clone()),
                        Direction::BtoA => (f.op().clone(), e.op().clone()),
                    })
                    .collect()
            })
            .collect()
    }

    /// The tree as a POVM on the joint space.
    pub fn joint_povm(&self) -> Result<Povm> {
        Povm::new(self.products().into_iter().flatten().map(|(a, b)| tensor(&a, &b)).collect())
    }
}

/// Random tree with 2–5 outcomes at every node.
pub fn random_tree<R: Rng + ?Sized>(dims: (usize, usize), direction: Direction, rng: &mut R) -> PovmTree {
    let (d_first, d_second) = match direction {
        Direction::AtoB => dims,
        Direction::BtoA => (dims.1, dims.0),
    };
    let n = rng.random_range(2..=5);
    let first = random_povm(d_first, n, rng);
    let branches = (0..n)
        .map(|_| {
            let m = rng.random_range(2..=5);
            random_povm(d_second, m, rng)
        })
        .collect();
    PovmTree::new(direction, dims, first, branches).expect("dimensions agree by construction")
}

type Evaluator = Box<dyn Fn(&Matrix, &Matrix) -> f64 + Send + Sync>;

/// Function on pairs of local effects.
pub struct BilinearFrame {
    dims: (usize, usize),
    evaluator: Evaluator,
}

impl std::fmt::Debug for BilinearFrame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BilinearFrame").field("dims", &self.dims).finish_non_exhaustive()
    }
}

impl BilinearFrame {
    pub fn new(dims: (usize, usize), evaluator: impl Fn(&Matrix, &Matrix) -> f64 + Send + Sync + 'static) -> Self {
        BilinearFrame { dims, evaluator: Box::new(evaluator) }
    }

    /// `f(E, F) = tr(L (E ⊗ F))`.
    pub fn from_operator(l: Matrix, dims: (usize, usize)) -> Result<Self> {
        if l.dim() != dims.0 * dims.1 {
            return Err(Error::DimensionMismatch { expected: dims.0 * dims.1, found: l.dim() });
        }
        Ok(BilinearFrame::new(dims, move |e, f| trace_product(&l, &tensor(e, f)).re))
    }

    pub fn from_state(rho: &DensityOperator, dims: (usize, usize)) -> Result<Self> {
        BilinearFrame::from_operator(rho.op().clone(), dims)
    }

    /// `f(E, F) = tr(E F)/D`, the swap frame on `C^D ⊗ C^D`.
    pub fn swap(dim: usize) -> Self {
        let scale = 1.0 / swap_normalization(dim);
        BilinearFrame::new((dim, dim), move |e, f| trace_product(e, f).re * scale)
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    pub fn eval(&self, e: &Matrix, f: &Matrix) -> f64 {
        (self.evaluator)(e, f)
    }
}

/// Swap operator `|i⟩|j⟩ ↦ |j⟩|i⟩` on `C^D ⊗ C^D`.
pub fn swap_operator(dim: usize) -> Matrix {
    let n = dim * dim;
    Matrix::from_fn(n, |row, col| {
        let (i, j) = (col / dim, col % dim);
        if row == j * dim + i {
            c(1.0, 0.0)
        } else {
            c(0.0, 0.0)
        }
    })
}

/// Constant `c` making `tr(S(E⊗F))/c` sum to one on every tree.
///
/// On the trivial tree the sum is `tr(S) / c = D / c`.
pub fn swap_normalization(dim: usize) -> f64 {
    swap_operator(dim).trace().re
}

pub fn tree_probabilities(frame: &BilinearFrame, tree: &PovmTree) -> Result<Vec<Vec<f64>>> {
    if frame.dims != tree.dims {
        return Err(Error::DimensionMismatch {
            expected: frame.dims.0 * frame.dims.1,
            found: tree.dims.0 * tree.dims.1,
        });
    }
    Ok(tree.products().iter().map(|row| row.iter().map(|(e, f)| frame.eval(e, f)).collect()).collect())
}

#[derive(Clone, Debug)]
pub struct JointReconstruction {
    pub operator: Matrix,
    /// Least-squares residual of the product data.
    pub residual: f64,
}

/// Solves `tr(L (E_i ⊗ F_j)) = f(E_i, F_j)` on all pairs from the two local sets.
pub fn reconstruct_joint_operator_from(
    frame: &BilinearFrame,
    a_effects: &[Matrix],
    b_effects: &[Matrix],
) -> Result<JointReconstruction> {
    let (da, db) = frame.dims;
    let mut products = Vec::with_capacity(a_effects.len() * b_effects.len());
    let mut values = Vec::with_capacity(products.capacity());
    for e in a_effects {
        for f in b_effects {
            products.push(tensor(e, f));
            values.push(frame.eval(e, f));
        }
    }
    let (operator, residual) = solve_hermitian_from_traces(&products, &values, da * db)?;
    Ok(JointReconstruction { operator, residual })
}

/// Reconstruction from the standard measurements on each side.
pub fn reconstruct_joint_operator(frame: &BilinearFrame) -> Result<JointReconstruction> {
    let (da, db) = frame.dims;
    reconstruct_joint_operator_from(
        frame,
        &MinimalIcPovm::standard(da).base.ops(),
        &MinimalIcPovm::standard(db).base.ops(),
    )
}

#[derive(Clone, Debug)]
pub struct SwapReport {
    pub dim: usize,
    /// Normalisation constant derived from the trivial tree.
    pub constant: f64,
    /// The `1/D²` prefactor, for comparison.
    pub alternative_constant: f64,
    pub min_value_on_random_pairs: f64,
    pub max_tree_sum_error: f64,
    pub trees_checked: usize,
    pub reconstruction_error: f64,
    pub min_eigenvalue: f64,
    /// `⟨w|L|w⟩` for the antisymmetric `w = (|01⟩ − |10⟩)/√2`.
    pub antisymmetric_expectation: f64,
}

/// Certifies that the swap frame is a valid bilinear assignment whose operator is
/// not positive.
pub fn swap_counterexample(dim: usize, trees: usize, seed: u64) -> Result<SwapReport> {
    if dim < 2 {
        return Err(Error::InvalidArgument("swap counterexample needs D ≥ 2".into()));
    }
    let frame = BilinearFrame::swap(dim);
    let mut rng = seeded(seed);
    let mut min_value = f64::INFINITY;
    for _ in 0..trees {
        let e = random_povm(dim, 3, &mut rng);
        let f = random_povm(dim, 3, &mut rng);
        for a in e.elements() {
            for b in f.elements() {
                min_value = min_value.min(frame.eval(a.op(), b.op()));
            }
            min_value = min_value.min(frame.eval(a.op(), a.op()));
        }
    }
    let mut max_err: f64 = 0.0;
    for t in 0..trees {
        let direction = if t % 2 == 0 { Direction::AtoB } else { Direction::BtoA };
        let tree = random_tree((dim, dim), direction, &mut rng);
        let total: f64 = tree_probabilities(&frame, &tree)?.iter().flatten().sum();
        max_err = max_err.max((total - 1.0).abs());
    }
    let constant = swap_normalization(dim);
    let rec = reconstruct_joint_operator(&frame)?;
    let expected = swap_operator(dim).scale_real(1.0 / constant);
    let min_eigenvalue = eig_hermitian(&rec.operator)?.min();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let w: Ket = tensor_ket(&basis_ket(dim, 0), &basis_ket(dim, 1)) * c(s, 0.0)
        - tensor_ket(&basis_ket(dim, 1), &basis_ket(dim, 0)) * c(s, 0.0);
    let antisymmetric_expectation = w.dotc(&rec.operator.apply(&w)).re;
    Ok(SwapReport {
        dim,
        constant,
        alternative_constant: 1.0 / (dim * dim) as f64,
        min_value_on_random_pairs: min_value,
        max_tree_sum_error: max_err,
        trees_checked: trees,
        reconstruction_error: rec.operator.distance(&expected),
        min_eigenvalue,
        antisymmetric_expectation,
    })
}

#[derive(Clone, Debug)]
pub struct DimensionCount {
    /// `¼ D_A D_B (D_A+1)(D_B+1)`.
    pub product_span: usize,
    /// `½ D_A D_B (D_A D_B + 1)`.
    pub full_symmetric: usize,
    /// Numerical rank of real symmetric products `E ⊗ F`.
    pub product_span_rank: usize,
    /// Numerical rank of complex Hermitian products, as a real span.
    pub complex_rank: usize,
    /// Real symmetric joint operators orthogonal to every real product.
    pub null_directions: Vec<Matrix>,
}

/// Orthonormal basis of real symmetric `dim × dim` matrices.
pub fn real_symmetric_basis(dim: usize) -> Vec<Matrix> {
    hermitian_basis(dim).into_iter().filter(|m| m.max_abs_imag() == 0.0).collect()
}

fn real_vector(m: &Matrix) -> Vec<f64> {
    let n = m.dim();
    (0..n * n).map(|k| m.get(k / n, k % n).re).collect()
}

fn numerical_rank(rows: &[Vec<f64>]) -> usize {
    let cols = rows[0].len();
    let m = DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]);
    let gram = m.transpose() * &m;
    let eig = SymmetricEigen::new(gram);
    let max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    eig.eigenvalues.iter().filter(|&&x| x > 1e-10 * max).count()
}

/// Counts real equations available from local product data against the unknowns
/// of a real symmetric joint operator, and checks both numerically.
pub fn real_dimension_count(da: usize, db: usize) -> DimensionCount {
    let product_span = da * db * (da + 1) * (db + 1) / 4;
    let n = da * db;
    let full_symmetric = n * (n + 1) / 2;

    let sa = real_symmetric_basis(da);
    let sb = real_symmetric_basis(db);
    let products: Vec<Vec<f64>> = sa.iter().flat_map(|e| sb.iter().map(move |f| real_vector(&tensor(e, f)))).collect();
    let product_span_rank = numerical_rank(&products);

    let ha = hermitian_basis(da);
    let hb = hermitian_basis(db);
    let complex_products: Vec<Vec<f64>> =
        ha.iter().flat_map(|e| hb.iter().map(move |f| tensor(e, f).real_coordinates())).collect();
    let complex_rank = numerical_rank(&complex_products);

    // coordinates of each product in the joint symmetric basis, then its kernel
    let joint = real_symmetric_basis(n);
    let coords = DMatrix::from_fn(products.len(), joint.len(), |i, k| {
        let jv = real_vector(&joint[k]);
        products[i].iter().zip(&jv).map(|(x, y)| x * y).sum::<f64>()
    });
    let eig = SymmetricEigen::new(coords.transpose() * &coords);
    let max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let null_directions = (0..joint.len())
        .filter(|&k| eig.eigenvalues[k] <= 1e-10 * max)
        .map(|k| joint.iter().enumerate().map(|(i, b)| b.scale_real(eig.eigenvectors[(i, k)])).sum::<Matrix>())
        .collect();

    DimensionCount { product_span, full_symmetric, product_span_rank, complex_rank, null_directions }
}

/// The nine product states of the 3 ⊗ 3 domino basis, as `(A, B)` kets.
pub fn domino_states() -> Vec<(Ket, Ket)> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let k = |i: usize| basis_ket(3, i);
    let plus = |i: usize, j: usize| (k(i) + k(j)) * c(s, 0.0);
    let minus = |i: usize, j: usize| (k(i) - k(j)) * c(s, 0.0);
    vec![
        (k(1), k(1)),
        (k(0), plus(0, 1)),
        (k(0), minus(0, 1)),
        (k(2), plus(1, 2)),
        (k(2), minus(1, 2)),
        (plus(1, 2), k(0)),
        (minus(1, 2), k(0)),
        (plus(0, 1), k(2)),
        (minus(0, 1), k(2)),
    ]
}

/// Rank-one product POVM on `C^3 ⊗ C^3` built from [`domino_states`].
///
/// It cannot be realised by local operations and classical communication; that
/// claim is documented, not decided here.
pub fn domino_fixture() -> Povm {
    Povm::new(domino_states().iter().map(|(a, b)| tensor(&Matrix::projector(a), &Matrix::projector(b))).collect())
        .expect("the domino states form an orthonormal basis")
}

/// Random joint state on `C^da ⊗ C^db`.
pub fn random_joint_state<R: Rng + ?Sized>(dims: (usize, usize), rng: &mut R) -> DensityOperator {
    random_state(dims.0 * dims.1, rng)
}
