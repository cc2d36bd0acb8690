//! Small noiseless instance where the trajectory is identifiable: an
//! exhaustive search over all pose assignments confirms that only the true
//! one fits exactly, then EM has to find it.

use keyhole_core::eval::{disambiguated_ssim, DisambiguationSearch, SsimParams};
use keyhole_core::forward::{
    assemble_many, AlbedoGrid, FalloffModel, ForwardModel, GridGeometry, SystemMatrix, TimeAxis,
};
use keyhole_core::recon::{em_with_systems, estimate_trajectory, EmConfig};
use keyhole_core::simulator::{
    simulate_sequence, CandidateGrid, CandidateGridSpec, NoiseModel, Plane, TrajectorySet,
};
use keyhole_core::{Image, TransientHistogram};
use nalgebra::{DMatrix, DVector};

const TRUE_POSES: [usize; 5] = [0, 4, 8, 5, 1];

fn object() -> Image {
    let rows = [
        "........", ".######.", ".#......", ".#####..", ".#......", ".#...##.", ".#...##.",
        "........",
    ];
    Image::from_fn(8, 8, |r, c| {
        if rows[r].as_bytes()[c] == b'#' {
            1.0
        } else {
            0.0
        }
    })
}

fn instance() -> (
    AlbedoGrid,
    CandidateGrid,
    Vec<SystemMatrix>,
    Vec<TransientHistogram>,
) {
    let geometry = GridGeometry::new(8, 8, 0.05).unwrap();
    let albedo = AlbedoGrid::new(geometry, object()).unwrap();
    let grid = CandidateGrid::new(CandidateGridSpec {
        plane: Plane::ConstantY,
        center: [0.3, -0.3, 1.0],
        extent: (0.4, 0.4),
        shape: (3, 3),
    })
    .unwrap();
    let model = ForwardModel::new(FalloffModel::retro(), TimeAxis::default()).with_gain(2e5);
    let systems = assemble_many(&geometry, grid.poses(), &model).unwrap();
    let trajectory = TrajectorySet {
        label: "oracle".into(),
        plane: Plane::ConstantY,
        poses: TRUE_POSES.iter().map(|&k| grid.poses()[k]).collect(),
    };
    let y = simulate_sequence(&albedo, &trajectory, &model, &NoiseModel::none()).unwrap();
    (albedo, grid, systems, y)
}

/// Residual of the unconstrained least-squares fit for every assignment of
/// candidate poses to measurements, sorted ascending.
fn exhaustive_residuals(
    systems: &[SystemMatrix],
    y: &[TransientHistogram],
) -> Vec<(f64, Vec<usize>)> {
    let dense: Vec<DMatrix<f64>> = systems
        .iter()
        .map(|s| {
            let rows = s.to_dense();
            DMatrix::from_fn(s.bins(), s.pixels(), |b, j| rows[b][j])
        })
        .collect();
    let grams: Vec<DMatrix<f64>> = dense.iter().map(|a| a.transpose() * a).collect();
    let ys: Vec<DVector<f64>> = y
        .iter()
        .map(|h| DVector::from_column_slice(&h.counts))
        .collect();
    // correlations[k][i] = A_k^T y_i
    let correlations: Vec<Vec<DVector<f64>>> = dense
        .iter()
        .map(|a| ys.iter().map(|v| a.transpose() * v).collect())
        .collect();
    let k = systems.len();
    let l = y.len();
    let n = systems[0].pixels();
    let y_norm: f64 = ys.iter().map(|v| v.norm_squared()).sum();
    let mut out = Vec::with_capacity(k.pow(l as u32));
    let mut assignment = vec![0usize; l];
    loop {
        let mut g = DMatrix::<f64>::identity(n, n) * 1e-9;
        let mut rhs = DVector::<f64>::zeros(n);
        for (i, &ki) in assignment.iter().enumerate() {
            g += &grams[ki];
            rhs += &correlations[ki][i];
        }
        let rho = g
            .clone()
            .cholesky()
            .expect("ridge keeps the normal matrix definite")
            .solve(&rhs);
        // |y - A rho|^2 = |y|^2 - 2 rho.b + rho.G rho, and G rho = b at the optimum
        let residual = (y_norm - rho.dot(&rhs)).max(0.0);
        out.push((residual / y_norm, assignment.clone()));
        let mut i = 0;
        while i < l {
            assignment[i] += 1;
            if assignment[i] < k {
                break;
            }
            assignment[i] = 0;
            i += 1;
        }
        if i == l {
            break;
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

#[test]
fn instance_is_unambiguous() {
    let (_, _, systems, y) = instance();
    let fits = exhaustive_residuals(&systems, &y);
    assert_eq!(fits.len(), 9usize.pow(5));
    assert_eq!(fits[0].1, TRUE_POSES.to_vec());
    assert!(fits[0].0 < 1e-9, "true assignment residual {}", fits[0].0);
    assert!(
        fits[1].0 > 1e-4,
        "runner-up {:?} fits too well: {}",
        fits[1].1,
        fits[1].0
    );
}

#[test]
fn em_recovers_the_poses_and_the_object() {
    let (albedo, grid, systems, y) = instance();
    let config = EmConfig {
        recon_shape: (8, 8),
        pixel_pitch: 0.05,
        ..EmConfig::default()
    };
    let out = em_with_systems(&y, &systems, albedo.geometry, &config).unwrap();
    let poses = estimate_trajectory(&out.weights, &grid).unwrap();
    for (i, &k) in TRUE_POSES.iter().enumerate() {
        assert_eq!(poses[i], grid.poses()[k], "measurement {i}");
    }
    let (score, _) = disambiguated_ssim(
        albedo.values(),
        out.albedo.values(),
        &DisambiguationSearch::default(),
        &SsimParams::default(),
    )
    .unwrap();
    assert!(score >= 0.9, "disambiguated SSIM {score}");
}
