mod common;

use common::{random_instance, random_vec, Instance};
use keyhole_core::forward::{render, AlbedoGrid, TransientHistogram};
use keyhole_core::recon::{
    e_step, em_with_systems, gd_with_systems, known_pose_gradient, known_pose_terms, q_gradient,
    q_value, AnnealingSchedule, EmConfig, InnerSteps, PosteriorWeights, PriorModel,
};
use keyhole_core::Image;
use proptest::prelude::*;
use rand::Rng;

const H: f64 = 1e-4;

/// Largest deviation from central differences, relative to the largest
/// finite-difference component.
fn fd_error(nu: &[f64], grad: &[f64], f: impl Fn(&[f64]) -> f64) -> f64 {
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    let mut probe = nu.to_vec();
    for j in 0..nu.len() {
        probe[j] = nu[j] + H;
        let up = f(&probe);
        probe[j] = nu[j] - H;
        let down = f(&probe);
        probe[j] = nu[j];
        let fd = (up - down) / (2.0 * H);
        worst = worst.max((fd - grad[j]).abs());
        scale = scale.max(fd.abs());
    }
    worst / scale
}

/// Draws `nu` until every Laplacian entry of `nu^2` stays clear of zero under
/// the finite-difference probes.
fn nu_away_from_kinks(r: &mut impl Rng, side: usize) -> Vec<f64> {
    loop {
        let nu = (0..side * side)
            .map(|_| r.random_range(0.2..1.0))
            .collect::<Vec<f64>>();
        let rho: Vec<f64> = nu.iter().map(|v| v * v).collect();
        if PriorModel::kink_margin(&rho, side, side) > 100.0 * H {
            return nu;
        }
    }
}

fn random_weights(r: &mut impl Rng, rows: usize, cols: usize) -> PosteriorWeights {
    PosteriorWeights::from_rows(
        (0..rows)
            .map(|_| {
                let raw: Vec<f64> = (0..cols).map(|_| r.random_range(0.01..1.0)).collect();
                let total: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / total).collect()
            })
            .collect(),
    )
    .unwrap()
}

#[test]
fn surrogate_gradient_matches_finite_differences() {
    let prior = PriorModel::default();
    for seed in 0..20 {
        let Instance {
            systems,
            measurements,
            ..
        } = random_instance(seed, 4, 64, 3, 4);
        let mut r = common::rng(1000 + seed);
        let nu = nu_away_from_kinks(&mut r, 4);
        let weights = random_weights(&mut r, 4, 3);
        let lambda = r.random_range(0.0..0.5);
        let grad = q_gradient(&nu, &weights, &measurements, &systems, lambda, &prior).unwrap();
        let err = fd_error(&nu, &grad, |v| {
            let rho: Vec<f64> = v.iter().map(|x| x * x).collect();
            q_value(&rho, &weights, &measurements, &systems, lambda, &prior).unwrap()
        });
        assert!(err <= 1e-4, "instance {seed}: relative error {err:e}");
    }
}

#[test]
fn known_pose_gradient_matches_finite_differences() {
    let prior = PriorModel::default();
    for seed in 0..20 {
        let Instance {
            systems,
            measurements,
            ..
        } = random_instance(seed, 4, 64, 4, 4);
        let mut r = common::rng(2000 + seed);
        let nu = nu_away_from_kinks(&mut r, 4);
        let lambda = r.random_range(0.0..1.0);
        let grad = known_pose_gradient(&nu, &measurements, &systems, lambda, &prior).unwrap();
        let err = fd_error(&nu, &grad, |v| {
            let rho: Vec<f64> = v.iter().map(|x| x * x).collect();
            known_pose_terms(&rho, &measurements, &systems, lambda, &prior)
                .unwrap()
                .total()
        });
        assert!(err <= 1e-4, "instance {seed}: relative error {err:e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn posterior_rows_are_distributions(
        seed in any::<u64>(),
        k in 1usize..8,
        beta in 1e-8f64..=1.0,
        sigma in 0.01f64..500.0,
    ) {
        let inst = random_instance(seed, 3, 32, k, 5);
        let mut r = common::rng(seed);
        let rho = random_vec(&mut r, 9, 0.0, 2.0);
        let w = e_step(&inst.measurements, &inst.systems, &rho, sigma, beta).unwrap();
        for i in 0..w.rows() {
            let row = w.row(i);
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn tiny_beta_gives_uniform_rows(seed in any::<u64>(), k in 1usize..10) {
        let inst = random_instance(seed, 3, 32, k, 4);
        let mut r = common::rng(seed);
        let rho = random_vec(&mut r, 9, 0.0, 2.0);
        let w = e_step(&inst.measurements, &inst.systems, &rho, 200.0, 1e-8).unwrap();
        for v in w.as_slice() {
            prop_assert!((v - 1.0 / k as f64).abs() <= 1e-6);
        }
    }

    #[test]
    fn joint_rescaling_leaves_weights_unchanged(
        seed in any::<u64>(),
        c in 0.1f64..10.0,
        truth in 0usize..5,
    ) {
        let inst = random_instance(seed, 3, 48, 5, 1);
        let mut r = common::rng(seed);
        let rho = random_vec(&mut r, 9, 0.1, 1.0);
        let albedo = AlbedoGrid::new(inst.geometry, Image::from_vec(3, 3, rho.clone()).unwrap()).unwrap();
        let y = vec![render(&inst.systems[truth], &albedo).unwrap()];
        let scaled_y: Vec<TransientHistogram> = y
            .iter()
            .map(|h| TransientHistogram { counts: h.counts.iter().map(|v| c * v).collect(), ..h.clone() })
            .collect();
        let scaled_rho: Vec<f64> = rho.iter().map(|v| c * v).collect();
        let sigma = 0.05;
        let a = e_step(&y, &inst.systems, &rho, sigma, 1.0).unwrap();
        let b = e_step(&scaled_y, &inst.systems, &scaled_rho, c * sigma, 1.0).unwrap();
        prop_assert_eq!(a.argmax(0), truth);
        prop_assert_eq!(b.argmax(0), truth);
        for (x, z) in a.as_slice().iter().zip(b.as_slice()) {
            prop_assert!((x - z).abs() <= 1e-9);
        }
    }
}

#[test]
fn annealing_schedule_grows_by_the_factor_to_one() {
    let schedule = AnnealingSchedule::new(30, 1.3);
    let betas = schedule.betas();
    assert_eq!(betas.len(), 30);
    assert!((betas[0] / 1.3f64.powi(-29) - 1.0).abs() < 1e-14);
    assert!((betas[0] - 4.964e-4).abs() < 1e-6);
    assert_eq!(betas[29], 1.0);
    for n in 0..28 {
        assert_eq!(betas[n + 1], betas[n] * 1.3, "step {n}");
        assert!((betas[n + 1] / betas[n] - 1.3).abs() <= 4.0 * f64::EPSILON);
    }
}

fn small_config(seed: u64) -> EmConfig {
    EmConfig {
        recon_shape: (4, 4),
        pixel_pitch: 0.04,
        seed,
        init_scale: 0.5,
        sigma: 1.0,
        lambda: 0.01,
        ..EmConfig::default()
    }
}

#[test]
fn em_surrogate_ascends_without_annealing() {
    for seed in 0..5 {
        let inst = random_instance(seed, 4, 64, 4, 6);
        let config = EmConfig {
            iterations: 6,
            annealing: false,
            inner_steps: InnerSteps::Fixed(200),
            ..small_config(seed)
        };
        let out =
            em_with_systems(&inst.measurements, &inst.systems, inst.geometry, &config).unwrap();
        for d in &out.diagnostics {
            assert_eq!(d.beta, 1.0);
            assert!(
                d.q() >= d.q_before - 1e-6 * d.q_before.abs(),
                "instance {seed} iteration {}: {} -> {}",
                d.iteration,
                d.q_before,
                d.q()
            );
        }
    }
}

#[test]
fn single_candidate_em_matches_known_pose_gd() {
    let inst = random_instance(7, 4, 64, 1, 5);
    let budget = 50;
    let em_config = EmConfig {
        iterations: 1,
        inner_steps: InnerSteps::Fixed(budget),
        ..small_config(3)
    };
    let em = em_with_systems(&inst.measurements, &inst.systems, inst.geometry, &em_config).unwrap();
    assert!(em.weights.as_slice().iter().all(|&w| w == 1.0));

    let repeated = vec![inst.systems[0].clone(); inst.measurements.len()];
    let gd_config = EmConfig {
        lambda: em_config.lambda * inst.measurements.len() as f64,
        ..em_config.clone()
    };
    let gd = gd_with_systems(
        &inst.measurements,
        &repeated,
        inst.geometry,
        &gd_config,
        budget,
    )
    .unwrap();
    for (a, b) in em.state.nu.iter().zip(&gd.state.nu) {
        assert!((a - b).abs() <= 1e-9 * a.abs().max(1e-3), "{a} vs {b}");
    }
}

#[test]
fn zero_measurements_drive_the_albedo_to_zero() {
    let inst = random_instance(11, 4, 64, 3, 3);
    let zeros: Vec<TransientHistogram> = inst
        .measurements
        .iter()
        .map(|y| TransientHistogram::zeros(&y.time_axis()))
        .collect();
    let config = EmConfig {
        lambda: 1.0,
        ..small_config(5)
    };
    let start: f64 = keyhole_core::recon::ReconState::initial(&config)
        .rho()
        .iter()
        .sum();
    let out = gd_with_systems(&zeros, &inst.systems, inst.geometry, &config, 200).unwrap();
    let end: f64 = out.albedo.values().as_slice().iter().sum();
    assert!(end < 1e-3 * start, "mass {start} -> {end}");
}

#[test]
fn gd_recovers_a_single_pixel() {
    let geometry = keyhole_core::GridGeometry::new(1, 1, 0.05).unwrap();
    let model = keyhole_core::ForwardModel::new(
        keyhole_core::FalloffModel::retro(),
        common::short_axis(64),
    )
    .with_gain(400.0);
    let system = keyhole_core::assemble_system(
        &geometry,
        &keyhole_core::RigidTransform::translation([0.0, 0.0, 1.0]),
        &model,
    )
    .unwrap();
    let albedo = AlbedoGrid::new(geometry, Image::filled(1, 1, 0.7)).unwrap();
    let y = vec![render(&system, &albedo).unwrap()];
    let config = EmConfig {
        recon_shape: (1, 1),
        pixel_pitch: 0.05,
        lambda: 0.0,
        init_scale: 0.5,
        ..EmConfig::default()
    };
    let out = gd_with_systems(&y, &[system], geometry, &config, 200).unwrap();
    let v = out.albedo.values().as_slice()[0];
    assert!((v - 0.7).abs() <= 1e-3 * 0.7, "recovered {v}");
}

#[test]
fn gd_returns_the_best_logged_iterate() {
    let prior = PriorModel::default();
    for seed in 0..3 {
        let inst = random_instance(seed, 4, 64, 4, 4);
        let config = small_config(seed);
        let out = gd_with_systems(
            &inst.measurements,
            &inst.systems,
            inst.geometry,
            &config,
            200,
        )
        .unwrap();
        let trace = &out.objective_trace;
        assert_eq!(trace.len(), 201);
        let best = trace.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let rho = out.albedo.values().as_slice();
        let value = known_pose_terms(
            rho,
            &inst.measurements,
            &inst.systems,
            config.lambda,
            &prior,
        )
        .unwrap()
        .total();
        assert!(
            (value - best).abs() <= 1e-9 * best.abs(),
            "instance {seed}: {value} vs {best}"
        );
        assert!(best > trace[0]);
    }
}

#[test]
fn reconstructions_are_non_negative() {
    let inst = random_instance(3, 4, 64, 4, 6);
    let out = em_with_systems(
        &inst.measurements,
        &inst.systems,
        inst.geometry,
        &EmConfig {
            iterations: 5,
            ..small_config(1)
        },
    )
    .unwrap();
    assert!(out.albedo.values().as_slice().iter().all(|&v| v >= 0.0));
}
