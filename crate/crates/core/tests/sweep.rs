use cfe_core::analytic::{
    analytic_peak, sample_influence, BetaGrid, Domain, DomainPreset, GaussianCoalitionModel,
    InfluenceSample, NoiseModel,
};
use cfe_core::lattice::{harsanyi_dividends, shapley_from_dividends};
use cfe_core::special::student_t_two_tailed;
use cfe_core::sweep::{
    aggregate, curvature_significance, find_beta_star, normalize_overlay, quadratic_fit, run_sweep,
    BetaStarMethod, SweepRow,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, StudentsT};

fn eta(n: usize, alpha: f64, beta: f64) -> f64 {
    GaussianCoalitionModel::new(n, alpha, beta)
        .unwrap()
        .symmetric_shapley()
}

fn rows_from(points: &[(f64, f64)]) -> Vec<SweepRow> {
    points
        .iter()
        .map(|&(beta, mean)| SweepRow {
            beta,
            mean,
            std: 0.0,
            n: 1,
        })
        .collect()
}

/// Golden-section maximisation on a bracket.
fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > 1e-12 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn telescoping_identity_on_every_preset_grid() {
    for d in Domain::ALL {
        let preset = DomainPreset::for_domain(d);
        for beta in preset.beta_grid.values() {
            let m = preset.model(beta).unwrap();
            assert!((m.symmetric_shapley() - m.symmetric_shapley_sum()).abs() < 1e-12);
        }
    }
}

#[test]
fn symmetric_model_on_the_full_lattice() {
    for n in 1..=10 {
        for &(alpha, beta) in &[(0.0, 0.7), (0.0345, 2.0), (0.5, 4.5)] {
            let m = GaussianCoalitionModel::new(n, alpha, beta).unwrap();
            let v = m.to_value_table().unwrap();
            let shapley = shapley_from_dividends(&harsanyi_dividends(&v).unwrap());
            for &e in shapley.eta() {
                assert!((e - m.symmetric_shapley()).abs() < 1e-9, "n = {n}");
            }
        }
    }
}

#[test]
fn small_precision_limit() {
    for n in [1, 5, 30] {
        let e = eta(n, 0.0, 1e-12);
        assert!((e + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-10);
    }
}

#[test]
fn analytic_peak_matches_numeric_maximisation() {
    for &(n, alpha, approx) in &[(5, 0.0345, 2.594), (30, 0.035, 2.66), (50, 0.025, 3.15)] {
        let peak = analytic_peak(n, alpha).unwrap();
        let numeric = golden_max(|b| eta(n, alpha, b), 0.01, 20.0);
        assert!(
            (peak - numeric).abs() < 1e-6,
            "({n}, {alpha}): {peak} vs {numeric}"
        );
        assert!((peak - approx).abs() < 5e-3);
    }
}

#[test]
fn influence_rises_then_falls_with_penalty() {
    for &(n, alpha) in &[(5, 0.0345), (30, 0.035), (50, 0.025)] {
        let grid = BetaGrid::new(0.01, 10.0, 400).unwrap();
        let betas = grid.values();
        let values: Vec<f64> = betas.iter().map(|&b| eta(n, alpha, b)).collect();
        let onsets: Vec<usize> = (1..values.len() - 1)
            .filter(|&i| values[i] - values[i - 1] > 0.0 && values[i + 1] - values[i] <= 0.0)
            .collect();
        assert_eq!(onsets.len(), 1);
        let step = betas[1] - betas[0];
        let peak = analytic_peak(n, alpha).unwrap();
        assert!((betas[onsets[0]] - peak).abs() <= step);
    }
}

#[test]
fn influence_monotone_without_penalty() {
    for n in [1, 5, 30, 50] {
        let values: Vec<f64> = BetaGrid::new(0.01, 10.0, 400)
            .unwrap()
            .values()
            .into_iter()
            .map(|b| eta(n, 0.0, b))
            .collect();
        assert!(values.windows(2).all(|w| w[1] > w[0]));
    }
}

#[test]
fn replicate_means_within_clt_bound() {
    for d in [Domain::Fish, Domain::Marl, Domain::Neural] {
        let preset = DomainPreset::for_domain(d);
        let rows = aggregate(&sample_influence(&preset).unwrap()).unwrap();
        for row in &rows {
            let sigma = preset.noise.sigma(row.beta);
            let exact = eta(preset.n_agents, preset.alpha_penalty, row.beta);
            assert!((row.mean - exact).abs() <= 4.0 * sigma / (row.n as f64).sqrt());
        }
    }
}

#[test]
fn zero_noise_fish_rows_equal_model() {
    let preset = DomainPreset {
        noise: NoiseModel::zero(),
        ..DomainPreset::fish()
    };
    let rows = aggregate(&sample_influence(&preset).unwrap()).unwrap();
    for row in rows {
        assert!((row.mean - eta(30, 0.035, row.beta)).abs() < 1e-14);
        assert!(row.std < 1e-14);
    }
}

#[test]
fn vertex_near_analytic_peak_on_symmetric_grid() {
    for &(n, alpha) in &[(5, 0.0345), (30, 0.035)] {
        let peak = analytic_peak(n, alpha).unwrap();
        let step = 0.05;
        let pts: Vec<(f64, f64)> = (-5..=5)
            .map(|k| {
                let b = peak + k as f64 * step;
                (b, eta(n, alpha, b))
            })
            .collect();
        let rows = rows_from(&pts);
        let fit = quadratic_fit(&rows).unwrap();
        let star = find_beta_star(&rows, &fit).unwrap();
        assert_eq!(star.method, BetaStarMethod::Vertex);
        assert!((star.value - peak).abs() <= step);
    }
}

#[test]
fn hand_worked_five_point_regression() {
    let rows = rows_from(&[(1.0, 1.5), (2.0, 3.5), (3.0, 4.5), (4.0, 4.0), (5.0, 2.5)]);
    let fit = quadratic_fit(&rows).unwrap();
    // Normal equations solved in exact rationals.
    assert!((fit.a - -17.0 / 28.0).abs() < 1e-12);
    assert!((fit.b - 109.0 / 28.0).abs() < 1e-12);
    assert!((fit.c - -9.0 / 5.0).abs() < 1e-12);
    assert!((fit.ss_res - 1.0 / 70.0).abs() < 1e-12);
    assert!((fit.r_squared - 405.0 / 406.0).abs() < 1e-12);
    // t = a / se(a) = -85 / sqrt(10) with 2 residual degrees of freedom,
    // where P(|T| > t) = 1 - t / sqrt(2 + t^2).
    let t: f64 = 85.0 / 10f64.sqrt();
    let want = 1.0 - t / (2.0 + t * t).sqrt();
    let p = curvature_significance(&rows, &fit).unwrap();
    assert!((p - want).abs() < 1e-12, "{p} vs {want}");
    let reference = 2.0 * (1.0 - StudentsT::new(0.0, 1.0, 2.0).unwrap().cdf(t));
    assert!((p - reference).abs() < 1e-10);
}

#[test]
fn t_tail_agrees_with_statrs() {
    for &dof in &[1.0, 2.0, 3.0, 7.5, 12.0, 97.0] {
        let reference = StudentsT::new(0.0, 1.0, dof).unwrap();
        for &t in &[0.0, 0.1, 0.9, 2.2, 4.0, 11.0] {
            let want = 2.0 * reference.cdf(-t);
            assert!(
                (student_t_two_tailed(t, dof) - want).abs() < 1e-10,
                "t {t} dof {dof}"
            );
        }
    }
}

#[test]
fn null_curvature_rarely_significant() {
    let mut pvals = Vec::new();
    for trial in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
        let pts: Vec<(f64, f64)> = (0..100)
            .map(|i| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (0.05 * i as f64, 0.3 + 0.01 * z)
            })
            .collect();
        let rows = rows_from(&pts);
        let fit = quadratic_fit(&rows).unwrap();
        pvals.push(curvature_significance(&rows, &fit).unwrap());
    }
    pvals.sort_by(f64::total_cmp);
    let median = 0.5 * (pvals[24] + pvals[25]);
    assert!(median > 0.001, "median p {median}");
    assert!(median > 0.1);
}

#[test]
fn residuals_orthogonal_to_design() {
    let preset = DomainPreset::fish();
    let rows = aggregate(&sample_influence(&preset).unwrap()).unwrap();
    let fit = quadratic_fit(&rows).unwrap();
    let (mut d0, mut d1, mut d2) = (0.0, 0.0, 0.0);
    for r in &rows {
        let e = r.mean - fit.predict(r.beta);
        d0 += e * r.beta * r.beta;
        d1 += e * r.beta;
        d2 += e;
    }
    assert!(d0.abs() < 1e-9 && d1.abs() < 1e-9 && d2.abs() < 1e-9);
    assert!((0.0..=1.0).contains(&fit.r_squared));
}

#[test]
fn overlay_curves_peak_inside_their_grids() {
    let results: Vec<_> = [Domain::Fish, Domain::Marl, Domain::NeuralS4]
        .into_iter()
        .map(|d| run_sweep(&DomainPreset::for_domain(d)).unwrap())
        .collect();
    let overlay = normalize_overlay(&results);
    for (result, d) in results
        .iter()
        .zip([Domain::Fish, Domain::Marl, Domain::NeuralS4])
    {
        let curve: Vec<_> = overlay
            .iter()
            .filter(|r| r.domain == result.domain)
            .collect();
        assert_eq!(curve.len(), result.rows.len());
        assert!(curve
            .iter()
            .all(|r| (0.0..=1.0).contains(&r.normalized_eta)));
        let top = curve
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.normalized_eta.total_cmp(&b.1.normalized_eta))
            .unwrap()
            .0;
        assert!(
            top > 0 && top < curve.len() - 1,
            "{} peaks at an edge",
            result.domain
        );
        let preset = DomainPreset::for_domain(d);
        let step = preset.beta_grid.value(1) - preset.beta_grid.value(0);
        let peak = preset.analytic_peak().unwrap();
        // The large-N curve is flat at the top, so noise can move the argmax one cell.
        assert!(
            (curve[top].beta - peak).abs() <= 2.0 * step,
            "{} top {} peak {peak} step {step}",
            result.domain,
            curve[top].beta
        );
    }
}

#[test]
fn sweep_is_a_pure_function_of_the_preset() {
    let a = run_sweep(&DomainPreset::marl()).unwrap();
    let b = run_sweep(&DomainPreset::marl()).unwrap();
    assert_eq!(a, b);
    let c = run_sweep(&DomainPreset::marl().with_seed(7)).unwrap();
    assert_ne!(a.rows, c.rows);
}

#[test]
fn aggregate_ignores_input_order() {
    let preset = DomainPreset::marl();
    let mut samples: Vec<InfluenceSample> = sample_influence(&preset).unwrap();
    let forward = aggregate(&samples).unwrap();
    samples.reverse();
    assert_eq!(aggregate(&samples).unwrap(), forward);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn beta_star_affine_invariance(
        scale in 0.1f64..10.0,
        shift in -5.0f64..5.0,
        a in -3.0f64..-0.1,
        peak in 1.0f64..4.0,
        noise in prop::collection::vec(-0.01f64..0.01, 12),
    ) {
        let pts: Vec<(f64, f64)> = (0..12)
            .map(|i| {
                let b = 0.5 * i as f64;
                (b, a * (b - peak) * (b - peak) + noise[i])
            })
            .collect();
        let rows = rows_from(&pts);
        let fit = quadratic_fit(&rows).unwrap();
        let star = find_beta_star(&rows, &fit).unwrap();
        prop_assume!(star.method == BetaStarMethod::Vertex);
        let moved: Vec<(f64, f64)> = pts.iter().map(|&(b, y)| (b, scale * y + shift)).collect();
        let moved_rows = rows_from(&moved);
        let moved_fit = quadratic_fit(&moved_rows).unwrap();
        let moved_star = find_beta_star(&moved_rows, &moved_fit).unwrap();
        prop_assert_eq!(moved_star.method, BetaStarMethod::Vertex);
        prop_assert!((moved_star.value - star.value).abs() <= 1e-9);
    }

    #[test]
    fn r_squared_in_unit_interval(ys in prop::collection::vec(-10.0f64..10.0, 4..30)) {
        let pts: Vec<(f64, f64)> = ys.iter().enumerate().map(|(i, &y)| (i as f64 * 0.3, y)).collect();
        let fit = quadratic_fit(&rows_from(&pts)).unwrap();
        prop_assert!((0.0..=1.0).contains(&fit.r_squared));
    }
}
