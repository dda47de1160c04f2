//! End-to-end acceptance criteria. Runs as a plain binary so every criterion
//! prints its verdict; exits non-zero if any fails.

use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::Rng;

use qbayes::definetti::{
    bloch_grid, center_skewed_prior, direction_skewed_prior, merging_experiment, nearest_grid_point,
    real_counterexample, PriorOverStates,
};
use qbayes::effects::{born, certainty_bound, reconstruct_from_frame, FrameFunction, MinimalIcPovm, Povm};
use qbayes::entropy::{check_refinement_inequalities, mean_entropy, mean_entropy_monte_carlo, subentropy};
use qbayes::linalg::{
    basis_ket, c, eig_hermitian, inv_sqrt, partial_trace, pauli_y, random_ginibre, random_ket, random_povm,
    random_pure_state, random_state, random_unitary, tensor, tensor_ket, trace_distance, trace_product, Matrix,
    Subsystem,
};
use qbayes::locality::{
    domino_fixture, random_joint_state, real_dimension_count, reconstruct_joint_operator, swap_counterexample,
    BilinearFrame,
};
use qbayes::rng::seeded;
use qbayes::states::{to_standard_sqm, DensityOperator};
use qbayes::update::{
    channel_choi, choi_channel, choi_of_map, factor_update, random_efficient_instrument, random_instrument,
    remote_steering_experiment, teleport, BellOutcome, ChoiMatrix, QuantumChannel, SteeringSetup,
};
use qbayes::Error;

/// Collects the failed sub-checks of one criterion.
#[derive(Default)]
struct Verdict(Vec<String>);

impl Verdict {
    fn at_most(&mut self, what: &str, value: f64, limit: f64) {
        if value.is_nan() || value > limit {
            self.0.push(format!("{what} = {value:e} > {limit:e}"));
        }
    }

    fn below(&mut self, what: &str, value: f64, limit: f64) {
        if value.is_nan() || value >= limit {
            self.0.push(format!("{what} = {value:e} not < {limit:e}"));
        }
    }

    fn above(&mut self, what: &str, value: f64, limit: f64) {
        if value.is_nan() || value <= limit {
            self.0.push(format!("{what} = {value:e} not > {limit:e}"));
        }
    }

    fn holds(&mut self, what: &str, ok: bool) {
        if !ok {
            self.0.push(what.to_string());
        }
    }
}

type Criterion = fn(&mut Verdict) -> qbayes::Result<()>;

fn max_of(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(0.0, f64::max)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    0.5 * (xs[(n - 1) / 2] + xs[n / 2])
}

fn ic_measurements(v: &mut Verdict) -> qbayes::Result<()> {
    for d in 2..=6 {
        let sqm = MinimalIcPovm::standard(d);
        v.holds(&format!("D={d}: {} elements", sqm.len()), sqm.len() == d * d);
        v.at_most(&format!("D={d} second eigenvalue"), sqm.max_second_eigenvalue(), 1e-9);
        v.above(&format!("D={d} independence margin"), sqm.independence_margin(), 0.0);
        v.at_most(&format!("D={d} resolution"), sqm.base.resolution_error(), 1e-9);
    }
    Ok(())
}

fn gleason_round_trip(v: &mut Verdict) -> qbayes::Result<()> {
    let mut rng = seeded(2);
    for d in 2..=4 {
        let sqm = MinimalIcPovm::standard(d);
        let heldout: Vec<Povm> = (0..20).map(|k| random_povm(d, 2 + k % 5, &mut rng)).collect();
        let (mut recovery, mut prediction): (f64, f64) = (0.0, 0.0);
        for _ in 0..100 {
            let rho = random_state(d, &mut rng);
            let frame = FrameFunction::from_state(&rho, &[&sqm.base])?;
            let rec = reconstruct_from_frame(&frame)?;
            recovery = recovery.max(trace_distance(&rec.operator, rho.op())?);
            for povm in &heldout {
                for (e, p) in povm.elements().iter().zip(born(&rho, povm)?) {
                    prediction = prediction.max((trace_product(&rec.operator, e.op()).re - p).abs());
                }
            }
        }
        v.at_most(&format!("D={d} recovery"), recovery, 1e-8);
        v.at_most(&format!("D={d} held-out prediction"), prediction, 1e-8);
    }
    Ok(())
}

fn certainty(v: &mut Verdict) -> qbayes::Result<()> {
    for d in 2..=10 {
        let b = certainty_bound(d);
        v.at_most(&format!("D={d} closed form vs eigenvalue"), (b.closed_form - b.numerical).abs(), 1e-9);
    }
    v.at_most("D=2 value", (certainty_bound(2).value() - 0.7734590).abs(), 1e-7);
    let scaled = 10.0 * certainty_bound(10).value();
    let target = 1.0 / 0.79;
    v.at_most("D*bound at D=10 relative to 1/0.79", ((scaled - target) / target).abs(), 0.10);
    let mut rng = seeded(3);
    for d in 2..=4 {
        let bound = certainty_bound(d).value();
        let mut largest: f64 = 0.0;
        for i in 0..1000 {
            let rho = if i % 2 == 0 { random_pure_state(d, &mut rng) } else { random_state(d, &mut rng) };
            largest = largest.max(max_of(to_standard_sqm(&rho).probs().iter().copied()));
        }
        v.at_most(&format!("D={d} largest SQM probability"), largest, bound);
    }
    Ok(())
}

fn update_factorization(v: &mut Verdict) -> qbayes::Result<()> {
    let mut rng = seeded(4);
    for d in 2..=3 {
        let (mut recombine, mut spectrum, mut readjust, mut pure): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..1000 {
            let rho = random_state(d, &mut rng);
            let outcomes = rng.random_range(2..=d * d);
            let inst = random_efficient_instrument(d, outcomes, &mut rng);
            let f = factor_update(&rho, &inst)?;
            recombine = recombine.max(f.recombined(d).distance(rho.op()));
            for o in &f.outcomes {
                let (Some(r), Some(p)) = (&o.refinement, &o.posterior) else { continue };
                let (a, b) = (r.eigenvalues(), p.eigenvalues());
                spectrum = spectrum.max(max_of(a.iter().zip(&b).map(|(x, y)| (x - y).abs())));
                readjust = readjust.max(o.readjustment.conjugate(r.op()).distance(p.op()));
            }
            let psi = random_pure_state(d, &mut rng);
            for o in factor_update(&psi, &inst)?.outcomes {
                if let Some(r) = o.refinement {
                    pure = pure.max(r.op().distance(psi.op()));
                }
            }
        }
        v.at_most(&format!("D={d} recombination"), recombine, 1e-9);
        v.at_most(&format!("D={d} spectra"), spectrum, 1e-8);
        v.at_most(&format!("D={d} readjustment"), readjust, 1e-8);
        v.at_most(&format!("D={d} pure refinement"), pure, 1e-10);
    }
    Ok(())
}

fn entropies(v: &mut Verdict) -> qbayes::Result<()> {
    let half = DensityOperator::maximally_mixed(2);
    v.at_most("Q(I/2)", (subentropy(&half) - 0.278652).abs(), 1e-6);
    v.at_most("mean entropy of I/2", (mean_entropy(&half) - 1.0).abs(), 1e-9);

    let mut rng = seeded(5);
    let mut largest: f64 = 0.0;
    for i in 0..10_000 {
        let d = 2 + i % 4;
        let rho = if i % 3 == 0 { random_pure_state(d, &mut rng) } else { random_state(d, &mut rng) };
        largest = largest.max(subentropy(&rho));
    }
    v.at_most("largest subentropy", largest, 0.60995 + 1e-6);

    for i in 0..20 {
        let d = 2 + i % 3;
        let rho = random_state(d, &mut rng);
        let mc = mean_entropy_monte_carlo(&rho, 20_000, 500 + i as u64);
        let sigmas = (mc.mean - mean_entropy(&rho)).abs() / mc.std_error;
        v.at_most(&format!("Monte-Carlo state {i} deviation in sigma"), sigmas, 3.0);
    }

    for d in 2..=3 {
        let report = check_refinement_inequalities(d, 1000, 50 + d as u64, 1e-8)?;
        v.holds(&format!("D={d}: {} trials", report.trials.len()), report.trials.len() == 1000);
        v.at_most(&format!("D={d} von Neumann gap deficit"), -report.min_gap.von_neumann, 1e-8);
        v.at_most(&format!("D={d} subentropy gap deficit"), -report.min_gap.subentropy, 1e-8);
        v.at_most(&format!("D={d} classical gap deficit"), -report.min_gap.classical, 1e-8);
    }
    Ok(())
}

fn locality(v: &mut Verdict) -> qbayes::Result<()> {
    let mut rng = seeded(6);
    for dims in [(2, 2), (2, 3)] {
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let rho = random_joint_state(dims, &mut rng);
            let rec = reconstruct_joint_operator(&BilinearFrame::from_state(&rho, dims)?)?;
            worst = worst.max(trace_distance(&rec.operator, rho.op())?);
        }
        v.at_most(&format!("{dims:?} round trip"), worst, 1e-8);
    }
    let swap = swap_counterexample(2, 100, 7)?;
    v.holds("100 swap trees", swap.trees_checked == 100);
    v.at_most("swap tree normalisation", swap.max_tree_sum_error, 1e-9);
    v.below("swap operator lowest eigenvalue", swap.min_eigenvalue, -1e-3);
    let count = real_dimension_count(2, 2);
    v.holds(&format!("real rank {} vs 9", count.product_span_rank), count.product_span_rank == 9);
    v.holds(&format!("full dimension {} vs 10", count.full_symmetric), count.full_symmetric == 10);
    let yy = tensor(&pauli_y(), &pauli_y()).scale_real(0.5);
    let overlap = max_of(count.null_directions.iter().map(|n| trace_product(n, &yy).norm()));
    v.above("null direction overlap with yy", overlap, 0.99);
    let domino = domino_fixture();
    v.holds("nine domino effects", domino.len() == 9);
    v.at_most("domino resolution", domino.resolution_error(), 1e-10);
    Ok(())
}

fn largest_entry_gap(a: &Matrix, b: &Matrix) -> f64 {
    let n = a.dim();
    max_of((0..n * n).map(|k| (a.get(k / n, k % n) - b.get(k / n, k % n)).norm()))
}

fn teleportation(v: &mut Verdict) -> qbayes::Result<()> {
    let mut rng = seeded(8);
    let half = Matrix::identity(2).scale_real(0.5);
    let (mut fidelity, mut marginal, mut bell): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..100 {
        let psi = random_ket(2, &mut rng);
        for k in 0..4 {
            let t = teleport(&psi, BellOutcome::Forced(k))?;
            fidelity = fidelity.max((1.0 - t.yes_probability).abs());
            marginal = marginal.max(largest_entry_gap(&t.bob_marginal_initial, &half));
            marginal = marginal.max(largest_entry_gap(&t.bob_marginal_after_measurement, &half));
            bell = bell.max(max_of(t.bell_probabilities.iter().map(|p| (p - 0.25).abs())));
        }
    }
    v.at_most("fidelity deficit", fidelity, 1e-9);
    v.at_most("Bob marginal", marginal, 1e-12);
    v.at_most("Bell probabilities", bell, 1e-12);
    Ok(())
}

fn random_axis(rng: &mut impl Rng) -> [f64; 3] {
    let b = DensityOperator::pure(&random_ket(2, rng)).bloch_vector();
    let n = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    b.map(|x| x / n)
}

fn de_finetti(v: &mut Verdict) -> qbayes::Result<()> {
    let r = real_counterexample(2)?;
    v.at_most("imaginary part", r.max_imaginary, 1e-12);
    v.at_most(
        "exchangeability",
        r.exchangeability.max_transposition_deviation.max(r.exchangeability.max_marginal_deviation),
        1e-9,
    );
    v.above("witness lower bound", r.residual_lower_bound, 0.0);
    v.at_most("real fit below witness bound", r.residual_lower_bound - r.real_fit_residual, 1e-9);
    v.below("complex fit", r.complex_fit_residual, 1e-9);
    println!("      real-grid residual {:.6} >= witness bound {:.6}", r.real_fit_residual, r.residual_lower_bound);

    // engineering targets: K = 500 observations, 0.05 in trace distance
    let grid = bloch_grid(50, 4);
    let sqm = MinimalIcPovm::standard(2);
    let uniform = PriorOverStates::uniform(grid.clone())?;
    let centered = center_skewed_prior(grid.clone(), 4.0)?;
    let (mut between, mut to_truth, mut control) = (vec![], vec![], vec![]);
    for run in 0..20u64 {
        let mut rng = seeded(900 + run);
        let truth = grid[nearest_grid_point(&grid, &random_state(2, &mut rng))].clone();
        let trace = merging_experiment(&uniform, &centered, &truth, &sqm.base, 500, 1900 + run)?;
        between.push(trace.last().between_agents);
        to_truth.extend([trace.last().first_to_truth, trace.last().second_to_truth]);
        let axis = random_axis(&mut rng);
        let a = direction_skewed_prior(grid.clone(), axis, 4.0)?;
        let b = direction_skewed_prior(grid.clone(), axis.map(|x| -x), 4.0)?;
        let basis = merging_experiment(&a, &b, &truth, &Povm::computational_basis(2), 500, 2900 + run)?;
        control.push(basis.last().between_agents);
    }
    let (between, to_truth, control) = (median(between), median(to_truth), median(control));
    println!("      medians: agents {between:.4}, truth {to_truth:.4}, basis-only control {control:.4}");
    v.below("median inter-agent distance (engineering target)", between, 0.05);
    v.below("median distance to truth (engineering target)", to_truth, 0.05);
    v.above("non-IC control plateau", control, 0.05);
    Ok(())
}

/// Choi matrix of a random PSD operator rescaled so its input marginal is `I/D`.
fn random_normalised_choi(d: usize, rng: &mut impl Rng) -> qbayes::Result<Matrix> {
    let g = random_ginibre(d * d, rng);
    let x = &g * &g.adjoint();
    let input = partial_trace(&x, (d, d), Subsystem::B)?;
    let fix = tensor(&inv_sqrt(&input)?.scale_real(1.0 / (d as f64).sqrt()), &Matrix::identity(d));
    Ok(fix.conjugate(&x))
}

fn channels(v: &mut Verdict) -> qbayes::Result<()> {
    let d = 2;
    let mut me = tensor_ket(&basis_ket(d, 0), &basis_ket(d, 0)) + tensor_ket(&basis_ket(d, 1), &basis_ket(d, 1));
    me *= c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let identity = channel_choi(&QuantumChannel::identity(d));
    v.at_most("identity Choi", identity.op().distance(&Matrix::projector(&me)), 1e-12);

    let mut rng = seeded(9);
    for i in 0..100 {
        let dim = 2 + i % 2;
        // CP and TP channels give PSD, correctly marginalised Choi matrices
        let ch = QuantumChannel::new(random_instrument(dim, 1, 1 + i % 4, &mut rng).kraus(0).to_vec())?;
        let choi = choi_of_map(dim, |m| ch.apply(m));
        let min = eig_hermitian(&choi)?.min();
        v.holds(&format!("channel {i}: Choi PSD ({min:e})"), min >= -1e-9);
        v.at_most(&format!("channel {i}: Choi trace"), (choi.trace().re - 1.0).abs(), 1e-9);
        v.holds(&format!("channel {i}: accepted"), ChoiMatrix::new(choi.clone()).is_ok());

        // PSD with the right marginal gives a valid Kraus channel reproducing it
        let target = random_normalised_choi(dim, &mut rng)?;
        let back = choi_channel(&ChoiMatrix::new(target.clone())?)?;
        v.at_most(&format!("choi {i}: reproduced"), choi_of_map(dim, |m| back.apply(m)).distance(&target), 1e-9);

        // positive but not completely positive: negative Choi eigenvalue, rejected
        let u = random_unitary(dim, &mut rng);
        let transposed = choi_of_map(dim, |m| u.conjugate(m).transpose());
        v.holds(&format!("map {i}: transpose has negative Choi eigenvalue"), eig_hermitian(&transposed)?.min() < -1e-3);
        v.holds(
            &format!("map {i}: transpose rejected"),
            matches!(ChoiMatrix::new(transposed), Err(Error::NotCp { .. })),
        );

        // completely positive but trace-decreasing: trace below one, rejected
        let lossy = choi.scale_real(0.8);
        v.holds(&format!("map {i}: lossy trace"), (lossy.trace().re - 1.0).abs() > 0.1);
        v.holds(
            &format!("map {i}: lossy rejected"),
            matches!(ChoiMatrix::new(lossy), Err(Error::NotTracePreserving { .. })),
        );
    }

    let setup = SteeringSetup::random(10);
    let unconditional = channel_choi(&setup.channel()?);
    let mut fars = vec![Povm::computational_basis(2), Povm::trivial(2)];
    fars.extend((2..5).map(|k| random_povm(2, k, &mut rng)));
    for (k, far) in fars.iter().enumerate() {
        let report = remote_steering_experiment(far, &setup)?;
        v.at_most(&format!("far POVM {k}: averaged Choi"), report.averaged_choi.distance(unconditional.op()), 1e-9);
    }
    Ok(())
}

fn without_timing(json: &[u8]) -> serde_json::Value {
    let mut report: serde_json::Value = serde_json::from_slice(json).expect("report is JSON");
    let obj = report.as_object_mut().expect("report is an object");
    obj.remove("timestamp");
    obj.remove("wall_time_s");
    report
}

fn cli_determinism(v: &mut Verdict) -> qbayes::Result<()> {
    let bin = env!("CARGO_BIN_EXE_qbayes");
    let run = |args: &[&str]| Command::new(bin).args(args).output().expect("binary runs");
    let first = run(&["all", "--seed", "1"]);
    let second = run(&["all", "--seed", "1"]);
    v.holds("first run exits 0", first.status.code() == Some(0));
    v.holds("second run exits 0", second.status.code() == Some(0));
    let (a, b) = (without_timing(&first.stdout), without_timing(&second.stdout));
    let bytes = |x: &serde_json::Value| serde_json::to_vec_pretty(x).unwrap();
    v.holds("identical JSON apart from timing", bytes(&a) == bytes(&b));
    v.holds("report marks overall pass", a["pass"] == serde_json::Value::Bool(true));

    v.holds("unknown tolerance exits 2", run(&["all", "--tol", "bogus=1"]).status.code() == Some(2));
    v.holds("dimension below two exits 2", run(&["sqm-build", "--dim", "1"]).status.code() == Some(2));
    v.holds("zero trials exits 2", run(&["teleport", "--trials", "0"]).status.code() == Some(2));
    v.holds("unknown command exits 2", run(&["frobnicate"]).status.code() == Some(2));
    let failing = run(&["swap-counterexample", "--tol", "swap_eigenvalue=-1"]);
    v.holds("failed check exits 1", failing.status.code() == Some(1));
    Ok(())
}

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 10] = [
        ("IC-POVM validity", ic_measurements),
        ("frame round trip", gleason_round_trip),
        ("certainty bound", certainty),
        ("update factorization", update_factorization),
        ("entropy suite", entropies),
        ("locality reconstruction", locality),
        ("teleportation", teleportation),
        ("de Finetti", de_finetti),
        ("channels", channels),
        ("CLI determinism", cli_determinism),
    ];
    let mut failures = 0;
    for (i, (name, criterion)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let mut verdict = Verdict::default();
        if let Err(e) = criterion(&mut verdict) {
            verdict.0.push(format!("error: {e}"));
        }
        let mark = if verdict.0.is_empty() { "PASS" } else { "FAIL" };
        println!("{mark} {:>2} {name} ({:.2}s)", i + 1, started.elapsed().as_secs_f64());
        for problem in &verdict.0 {
            println!("      {problem}");
        }
        failures += usize::from(!verdict.0.is_empty());
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
