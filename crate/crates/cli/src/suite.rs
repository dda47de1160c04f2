use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;

use qbayes::definetti::{
    bloch_grid, center_skewed_prior, direction_skewed_prior, merging_experiment, nearest_grid_point,
    real_counterexample, PriorOverStates,
};
use qbayes::effects::{
    born, certainty_bound, max_probability, reconstruct_from_frame, FrameFunction, MinimalIcPovm, Povm,
};
use qbayes::entropy::{check_refinement_inequalities, mean_entropy, mean_entropy_monte_carlo, subentropy};
use qbayes::linalg::{
    basis_ket, c, pauli_y, random_ket, random_povm, random_pure_state, random_state, random_unitary, tensor,
    tensor_ket, trace_distance, Matrix,
};
use qbayes::locality::{
    domino_fixture, random_joint_state, real_dimension_count, reconstruct_joint_operator, swap_counterexample,
    BilinearFrame,
};
use qbayes::rng::{seeded, trial_seed};
use qbayes::states::{to_standard_sqm, DensityOperator};
use qbayes::update::{
    channel_choi, choi_channel, choi_of_map, factor_update, random_efficient_instrument, random_instrument,
    remote_steering_experiment, teleport, BellOutcome, ChoiMatrix, QuantumChannel, SteeringSetup,
};
use qbayes::Result;

use crate::report::{Collector, Relation::*};

/// Named tolerances with their defaults; `--tol` may override any of them.
pub const DEFAULT_TOLERANCES: &[(&str, f64)] = &[
    ("resolution", 1e-9),
    ("rank_one", 1e-9),
    ("independence", 1e-8),
    ("reconstruction", 1e-8),
    ("heldout", 1e-8),
    ("certainty", 1e-9),
    ("fidelity", 1e-9),
    ("bell_probability", 1e-12),
    ("marginal", 1e-12),
    ("recombination", 1e-9),
    ("spectrum", 1e-8),
    ("readjustment", 1e-8),
    ("pure_refinement", 1e-10),
    ("choi_identity", 1e-12),
    ("choi", 1e-9),
    ("steering", 1e-9),
    ("subentropy_value", 1e-6),
    ("mean_entropy_value", 1e-9),
    ("subentropy_cap", 0.60995 + 1e-6),
    ("monte_carlo_sigma", 3.0),
    ("gap", 1e-8),
    ("locality", 1e-8),
    ("tree_sum", 1e-9),
    ("swap_eigenvalue", -1e-3),
    ("null_overlap", 0.99),
    ("domino", 1e-10),
    ("real_imaginary", 1e-12),
    ("exchangeable", 1e-9),
    ("complex_fit", 1e-9),
    ("merge", 0.05),
    ("plateau", 0.05),
];

pub type Tolerances = BTreeMap<String, f64>;

pub fn default_tolerances() -> Tolerances {
    DEFAULT_TOLERANCES.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

pub struct Settings {
    pub dim: usize,
    pub seed: u64,
    pub trials: usize,
    pub tol: Tolerances,
}

impl Settings {
    fn tol(&self, name: &str) -> f64 {
        self.tol[name]
    }

    fn rng(&self, index: usize) -> qbayes::rng::QRng {
        seeded(trial_seed(self.seed, index))
    }
}

fn max_of(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(0.0, f64::max)
}

pub fn sqm_build(s: &Settings, out: &mut Collector) -> Result<()> {
    let d = s.dim;
    let sqm = MinimalIcPovm::standard(d);
    out.value("elements", sqm.len() as f64);
    out.check("element_count_error", (sqm.len() as f64 - (d * d) as f64).abs(), AtMost, 0.0);
    out.check("second_eigenvalue", sqm.max_second_eigenvalue(), AtMost, s.tol("rank_one"));
    out.check("independence_margin", sqm.independence_margin(), AtLeast, s.tol("independence"));
    out.check("resolution_error", sqm.base.resolution_error(), AtMost, s.tol("resolution"));
    Ok(())
}

pub fn gleason_roundtrip(s: &Settings, out: &mut Collector) -> Result<()> {
    let d = s.dim;
    let sqm = MinimalIcPovm::standard(d);
    let errors: Vec<(f64, f64)> = (0..s.trials)
        .into_par_iter()
        .map(|i| -> Result<(f64, f64)> {
            let mut rng = s.rng(i);
            let rho = random_state(d, &mut rng);
            let frame = FrameFunction::from_state(&rho, &[&sqm.base])?;
            let rec = reconstruct_from_frame(&frame)?;
            let recovered = trace_distance(&rec.operator, rho.op())?;
            let heldout = random_povm(d, d + 2, &mut rng);
            let predicted = max_of(
                heldout
                    .elements()
                    .iter()
                    .zip(born(&rho, &heldout)?)
                    .map(|(e, p)| (qbayes::linalg::trace_product(&rec.operator, e.op()).re - p).abs()),
            );
            Ok((recovered, predicted))
        })
        .collect::<Result<_>>()?;
    out.check("max_trace_distance", max_of(errors.iter().map(|e| e.0)), AtMost, s.tol("reconstruction"));
    out.check("max_heldout_error", max_of(errors.iter().map(|e| e.1)), AtMost, s.tol("heldout"));
    Ok(())
}

pub fn certainty(s: &Settings, out: &mut Collector) -> Result<()> {
    let bound = certainty_bound(s.dim);
    out.value("bound", bound.value());
    out.value("numerical", bound.numerical);
    out.check("closed_form_gap", (bound.closed_form - bound.numerical).abs(), AtMost, s.tol("certainty"));
    out.value("largest_attainable_probability", max_of(max_probability(&MinimalIcPovm::standard(s.dim).base)));
    let mut excess = f64::NEG_INFINITY;
    for i in 0..s.trials {
        let mut rng = s.rng(i);
        let rho = if i % 2 == 0 { random_pure_state(s.dim, &mut rng) } else { random_state(s.dim, &mut rng) };
        let p = to_standard_sqm(&rho).probs().iter().cloned().fold(0.0, f64::max);
        excess = excess.max(p - bound.value());
    }
    out.check("max_probability_excess", excess, AtMost, s.tol("certainty"));
    Ok(())
}

pub fn teleportation(s: &Settings, out: &mut Collector) -> Result<()> {
    let mut rng = seeded(s.seed);
    let psi = random_ket(2, &mut rng);
    let run = teleport(&psi, BellOutcome::Sampled { seed: s.seed })?;
    out.value("outcome", run.outcome as f64);
    out.value("fidelity", run.yes_probability);
    out.check("sampled_fidelity_deficit", 1.0 - run.yes_probability, AtMost, s.tol("fidelity"));

    let half = Matrix::identity(2).scale_real(0.5);
    let (mut fidelity, mut bell, mut marginal): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for i in 0..s.trials {
        let psi = random_ket(2, &mut s.rng(i));
        for k in 0..4 {
            let t = teleport(&psi, BellOutcome::Forced(k))?;
            fidelity = fidelity.max(1.0 - t.yes_probability);
            bell = bell.max(max_of(t.bell_probabilities.iter().map(|p| (p - 0.25).abs())));
            marginal = marginal.max(t.bob_marginal_initial.distance(&half));
            marginal = marginal.max(t.bob_marginal_after_measurement.distance(&half));
        }
    }
    out.check("max_fidelity_deficit", fidelity, AtMost, s.tol("fidelity"));
    out.check("max_bell_probability_error", bell, AtMost, s.tol("bell_probability"));
    out.check("max_bob_marginal_error", marginal, AtMost, s.tol("marginal"));
    Ok(())
}

pub fn update_factor(s: &Settings, out: &mut Collector) -> Result<()> {
    let d = s.dim;
    let errors: Vec<[f64; 4]> = (0..s.trials)
        .into_par_iter()
        .map(|i| -> Result<[f64; 4]> {
            let mut rng = s.rng(i);
            let rho = random_state(d, &mut rng);
            let outcomes = rng.random_range(2..=d + 2);
            let inst = random_efficient_instrument(d, outcomes, &mut rng);
            let f = factor_update(&rho, &inst)?;
            let recombination = f.recombined(d).distance(rho.op());
            let (mut spectrum, mut readjust) = (0.0f64, 0.0f64);
            for o in &f.outcomes {
                let (Some(r), Some(p)) = (&o.refinement, &o.posterior) else { continue };
                let (a, b) = (r.eigenvalues(), p.eigenvalues());
                spectrum = spectrum.max(max_of(a.iter().zip(&b).map(|(x, y)| (x - y).abs())));
                readjust = readjust.max(o.readjustment.conjugate(r.op()).distance(p.op()));
            }
            let pure = random_pure_state(d, &mut rng);
            let fp = factor_update(&pure, &inst)?;
            let refinement =
                max_of(fp.outcomes.iter().filter_map(|o| o.refinement.as_ref()).map(|r| r.op().distance(pure.op())));
            Ok([recombination, spectrum, readjust, refinement])
        })
        .collect::<Result<_>>()?;
    out.check("max_recombination_error", max_of(errors.iter().map(|e| e[0])), AtMost, s.tol("recombination"));
    out.check("max_spectrum_error", max_of(errors.iter().map(|e| e[1])), AtMost, s.tol("spectrum"));
    out.check("max_readjustment_error", max_of(errors.iter().map(|e| e[2])), AtMost, s.tol("readjustment"));
    out.check("max_pure_refinement_error", max_of(errors.iter().map(|e| e[3])), AtMost, s.tol("pure_refinement"));
    Ok(())
}

/// `|ψ_ME⟩⟨ψ_ME|` for `ψ_ME = Σ|ii⟩/√D`.
pub fn maximally_entangled(dim: usize) -> Matrix {
    let mut psi = tensor_ket(&basis_ket(dim, 0), &basis_ket(dim, 0));
    for i in 1..dim {
        psi += tensor_ket(&basis_ket(dim, i), &basis_ket(dim, i));
    }
    Matrix::projector(&(psi * c(1.0 / (dim as f64).sqrt(), 0.0)))
}

pub fn channels(s: &Settings, out: &mut Collector) -> Result<()> {
    let d = s.dim;
    let identity = channel_choi(&QuantumChannel::identity(d));
    out.check("identity_choi_error", identity.op().distance(&maximally_entangled(d)), AtMost, s.tol("choi_identity"));

    let (mut min_eig, mut trace_err, mut round_trip) = (f64::INFINITY, 0.0f64, 0.0f64);
    let (mut wrongly_accepted, mut wrongly_rejected) = (0usize, 0usize);
    for i in 0..s.trials {
        let mut rng = s.rng(i);
        let per = rng.random_range(1..=d * d);
        let ch = QuantumChannel::new(random_instrument(d, 1, per, &mut rng).kraus(0).to_vec())?;
        let choi = channel_choi(&ch);
        min_eig = min_eig.min(qbayes::linalg::eig_hermitian(choi.op())?.min());
        trace_err = trace_err.max((choi.op().trace().re - 1.0).abs());
        if ChoiMatrix::new(choi.op().clone()).is_err() {
            wrongly_rejected += 1;
        }
        let rho = random_state(d, &mut rng);
        round_trip = round_trip.max(choi_channel(&choi)?.apply(rho.op()).distance(&ch.apply(rho.op())));
        // positive but not completely positive
        let u = random_unitary(d, &mut rng);
        if ChoiMatrix::new(choi_of_map(d, |m| u.conjugate(m).transpose())).is_ok() {
            wrongly_accepted += 1;
        }
        // completely positive but not trace preserving
        if ChoiMatrix::new(choi.op().scale_real(0.9)).is_ok() {
            wrongly_accepted += 1;
        }
    }
    out.check("choi_min_eigenvalue", min_eig, AtLeast, -s.tol("choi"));
    out.check("choi_trace_error", trace_err, AtMost, s.tol("choi"));
    out.check("choi_round_trip_error", round_trip, AtMost, s.tol("choi"));
    out.check("valid_channels_rejected", wrongly_rejected as f64, AtMost, 0.0);
    out.check("invalid_maps_accepted", wrongly_accepted as f64, AtMost, 0.0);

    let setup = SteeringSetup::random(s.seed);
    let mut rng = seeded(s.seed);
    let mut fars = vec![Povm::computational_basis(2), Povm::trivial(2)];
    fars.extend((0..3).map(|k| random_povm(2, 2 + k, &mut rng)));
    let reports = fars.iter().map(|f| remote_steering_experiment(f, &setup)).collect::<Result<Vec<_>>>()?;
    let spread = max_of(reports.iter().map(|r| r.averaged_choi.distance(&reports[0].averaged_choi)));
    out.check("steering_averaged_choi_spread", spread, AtMost, s.tol("steering"));
    out.check(
        "steering_no_signaling_deviation",
        max_of(reports.iter().map(|r| r.no_signaling_deviation)),
        AtMost,
        s.tol("steering"),
    );
    Ok(())
}

pub fn entropy_sweep(s: &Settings, out: &mut Collector) -> Result<()> {
    let half = DensityOperator::maximally_mixed(2);
    let q = subentropy(&half);
    out.value("subentropy_maximally_mixed_qubit", q);
    out.check("subentropy_qubit_error", (q - 0.278652).abs(), AtMost, s.tol("subentropy_value"));
    out.check("mean_entropy_qubit_error", (mean_entropy(&half) - 1.0).abs(), AtMost, s.tol("mean_entropy_value"));

    let mut largest: f64 = 0.0;
    for d in 2..=5 {
        for i in 0..s.trials {
            let mut rng = s.rng(i * 8 + d);
            let rho = if i % 2 == 0 { random_pure_state(d, &mut rng) } else { random_state(d, &mut rng) };
            largest = largest.max(subentropy(&rho));
        }
    }
    for d in 2..=5 {
        largest = largest.max(subentropy(&DensityOperator::maximally_mixed(d)));
    }
    out.check("max_subentropy", largest, AtMost, s.tol("subentropy_cap"));

    let states = s.trials.min(20);
    let sigmas: Vec<f64> = (0..states)
        .into_par_iter()
        .map(|i| {
            let rho = random_state(s.dim, &mut s.rng(i));
            let mc = mean_entropy_monte_carlo(&rho, 20_000, trial_seed(s.seed, 1_000_000 + i));
            (mc.mean - mean_entropy(&rho)).abs() / mc.std_error
        })
        .collect();
    out.check("max_monte_carlo_deviation_sigma", max_of(sigmas), AtMost, s.tol("monte_carlo_sigma"));

    let gaps = check_refinement_inequalities(s.dim, s.trials, s.seed, s.tol("gap"))?;
    out.check("min_von_neumann_gap", gaps.min_gap.von_neumann, AtLeast, -s.tol("gap"));
    out.check("min_subentropy_gap", gaps.min_gap.subentropy, AtLeast, -s.tol("gap"));
    out.check("min_classical_gap", gaps.min_gap.classical, AtLeast, -s.tol("gap"));
    Ok(())
}

pub fn locality(s: &Settings, out: &mut Collector) -> Result<()> {
    for dims in [(2, 2), (2, 3)] {
        let mut worst: f64 = 0.0;
        for i in 0..s.trials {
            let rho = random_joint_state(dims, &mut s.rng(i));
            let rec = reconstruct_joint_operator(&BilinearFrame::from_state(&rho, dims)?)?;
            worst = worst.max(trace_distance(&rec.operator, rho.op())?);
        }
        out.check(&format!("max_round_trip_{}x{}", dims.0, dims.1), worst, AtMost, s.tol("locality"));
    }
    let count = real_dimension_count(2, 2);
    out.value("real_product_rank", count.product_span_rank as f64);
    out.value("real_full_dimension", count.full_symmetric as f64);
    out.check("real_rank_deficit", (count.full_symmetric - count.product_span_rank) as f64, AtLeast, 1.0);
    out.check("real_rank_error", (count.product_span_rank as f64 - 9.0).abs(), AtMost, 0.0);
    let yy = tensor(&pauli_y(), &pauli_y()).scale_real(0.5);
    let overlap =
        max_of(count.null_directions.iter().map(|n| qbayes::linalg::hs_inner(n, &yy).map_or(0.0, |z| z.norm())));
    out.check("null_direction_overlap", overlap, AtLeast, s.tol("null_overlap"));
    let domino = domino_fixture();
    out.check("domino_resolution_error", domino.resolution_error(), AtMost, s.tol("domino"));
    Ok(())
}

pub fn swap(s: &Settings, out: &mut Collector) -> Result<()> {
    let report = swap_counterexample(s.dim, s.trials, s.seed)?;
    out.value("constant", report.constant);
    out.value("min_eigenvalue", report.min_eigenvalue);
    out.check("max_tree_sum_error", report.max_tree_sum_error, AtMost, s.tol("tree_sum"));
    out.check("min_value_on_effect_pairs", report.min_value_on_random_pairs, AtLeast, -s.tol("tree_sum"));
    out.check("operator_error", report.reconstruction_error, AtMost, s.tol("locality"));
    out.check("min_eigenvalue", report.min_eigenvalue, Below, s.tol("swap_eigenvalue"));
    Ok(())
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn random_axis<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    let v = DensityOperator::pure(&random_ket(2, rng)).bloch_vector();
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Merging of two agents' beliefs on a 201-point qubit grid over 500 observations.
///
/// The 0.05 targets are engineering thresholds, not derived bounds. Distance to
/// the truth pools both agents of every run. Truths are random states snapped to
/// the grid.
pub fn definetti_merge(s: &Settings, out: &mut Collector) -> Result<()> {
    const OBSERVATIONS: usize = 500;
    const CHECKPOINTS: [usize; 4] = [10, 50, 100, 500];
    const KAPPA: f64 = 4.0;
    let runs = s.trials.min(20);
    let grid = bloch_grid(50, 4);
    let sqm = MinimalIcPovm::standard(2);
    let basis = Povm::computational_basis(2);
    let uniform = PriorOverStates::uniform(grid.clone())?;
    let centered = center_skewed_prior(grid.clone(), KAPPA)?;
    let results: Vec<RunSummary> = (0..runs)
        .into_par_iter()
        .map(|i| -> Result<RunSummary> {
            let mut rng = s.rng(i);
            let truth = grid[nearest_grid_point(&grid, &random_state(2, &mut rng))].clone();
            let axis = random_axis(&mut rng);
            let toward = direction_skewed_prior(grid.clone(), axis, KAPPA)?;
            let away = direction_skewed_prior(grid.clone(), axis.map(|x| -x), KAPPA)?;
            let run_seed = trial_seed(s.seed, 1_000 + i);
            let ic = merging_experiment(&uniform, &centered, &truth, &sqm.base, OBSERVATIONS, run_seed)?;
            let opinionated = merging_experiment(&toward, &away, &truth, &sqm.base, OBSERVATIONS, run_seed)?;
            let control = merging_experiment(&toward, &away, &truth, &basis, OBSERVATIONS, run_seed)?;
            Ok(RunSummary {
                between: CHECKPOINTS.map(|k| ic.at(k).between_agents),
                to_truth: [ic.last().first_to_truth, ic.last().second_to_truth],
                opinionated_initial: opinionated.at(0).between_agents,
                opinionated_final: opinionated.last().between_agents,
                control: control.last().between_agents,
            })
        })
        .collect::<Result<_>>()?;
    let med = |f: &dyn Fn(&RunSummary) -> f64| median(results.iter().map(f).collect());
    let checkpoints: Vec<f64> = (0..CHECKPOINTS.len()).map(|j| med(&|r| r.between[j])).collect();
    let rise = checkpoints.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    out.value("runs", runs as f64);
    out.value("grid_size", grid.len() as f64);
    out.value("median_opinionated_initial_between_agents", med(&|r| r.opinionated_initial));
    out.check("median_between_agents", checkpoints[3], Below, s.tol("merge"));
    out.check("median_to_truth", median(results.iter().flat_map(|r| r.to_truth).collect()), Below, s.tol("merge"));
    out.check("median_opinionated_between_agents", med(&|r| r.opinionated_final), Below, s.tol("merge"));
    out.check("median_between_agents_max_rise", rise, AtMost, 0.0);
    out.check("median_basis_control_between_agents", med(&|r| r.control), Above, s.tol("plateau"));
    Ok(())
}

struct RunSummary {
    between: [f64; 4],
    to_truth: [f64; 2],
    opinionated_initial: f64,
    opinionated_final: f64,
    control: f64,
}

pub fn real_counterexamples(s: &Settings, out: &mut Collector) -> Result<()> {
    for n in 2..=3 {
        let r = real_counterexample(n)?;
        out.value(&format!("n{n}_witness_value"), r.witness_value);
        out.value(&format!("n{n}_real_fit_residual"), r.real_fit_residual);
        out.check(&format!("n{n}_max_imaginary"), r.max_imaginary, AtMost, s.tol("real_imaginary"));
        out.check(
            &format!("n{n}_exchangeability_deviation"),
            r.exchangeability.max_transposition_deviation.max(r.exchangeability.max_marginal_deviation),
            AtMost,
            s.tol("exchangeable"),
        );
        out.check(&format!("n{n}_residual_lower_bound"), r.residual_lower_bound, Above, 0.0);
        out.check(
            &format!("n{n}_real_fit_excess"),
            r.real_fit_residual - r.residual_lower_bound,
            AtLeast,
            -s.tol("exchangeable"),
        );
        out.check(&format!("n{n}_complex_fit_residual"), r.complex_fit_residual, Below, s.tol("complex_fit"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn tolerance_names_are_unique() {
        assert_eq!(default_tolerances().len(), DEFAULT_TOLERANCES.len());
    }

    #[test]
    fn maximally_entangled_projector() {
        let p = maximally_entangled(3);
        assert!((p.trace().re - 1.0).abs() < 1e-14);
        assert!((&p * &p).distance(&p) < 1e-14);
        assert!((p.get(0, 4).re - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn every_step_passes_at_small_scale() {
        let s = Settings { dim: 2, seed: 3, trials: 5, tol: default_tolerances() };
        let steps: [fn(&Settings, &mut Collector) -> Result<()>; 6] =
            [sqm_build, gleason_roundtrip, certainty, teleportation, update_factor, swap];
        for step in steps {
            let mut c = Collector::default();
            step(&s, &mut c).unwrap();
            assert!(c.checks.iter().all(|k| k.pass), "{:?}", c.checks);
        }
    }
}
