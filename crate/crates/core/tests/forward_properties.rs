mod common;

use common::short_axis;
use keyhole_core::forward::{
    adjoint, assemble_system, assemble_system_with_origin, render, AlbedoGrid, FalloffModel,
    ForwardModel, GridGeometry, RigidTransform, TransientHistogram,
};
use keyhole_core::Image;
use proptest::prelude::*;

fn model(bins: usize) -> ForwardModel {
    ForwardModel::new(FalloffModel::retro(), short_axis(bins))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adjoint_is_the_exact_transpose(
        side in 1usize..=16,
        bins in 8usize..=64,
        t in (-0.3f64..0.3, -0.3f64..0.3, 0.5f64..1.5),
        seed in any::<u64>(),
    ) {
        let geometry = GridGeometry::new(side, side, 0.03).unwrap();
        let m = model(bins);
        let system = assemble_system(&geometry, &RigidTransform::translation([t.0, t.1, t.2]), &m).unwrap();
        let mut r = common::rng(seed);
        let rho = Image::from_vec(side, side, common::random_vec(&mut r, side * side, 0.0, 1.0)).unwrap();
        let y = TransientHistogram::new(common::random_vec(&mut r, bins, -1.0, 1.0), &m.time).unwrap();
        let forward = render(&system, &AlbedoGrid::new(geometry, rho.clone()).unwrap()).unwrap();
        let back = adjoint(&system, &y).unwrap();
        let lhs: f64 = forward.counts.iter().zip(&y.counts).map(|(a, b)| a * b).sum();
        let rhs: f64 = rho.as_slice().iter().zip(back.as_slice()).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (lhs.abs() + 1.0));
    }

    #[test]
    fn moving_the_object_equals_moving_the_sensor(
        t in (-0.5f64..0.5, -0.5f64..0.5, 0.6f64..1.6),
        angle in -3.0f64..3.0,
    ) {
        let geometry = GridGeometry::new(6, 5, 0.05).unwrap();
        let m = ForwardModel::new(FalloffModel::retro(), Default::default());
        let moved = assemble_system(&geometry, &RigidTransform { translation: [t.0, t.1, t.2], rotation: angle }, &m).unwrap();
        let fixed = assemble_system_with_origin(
            &geometry,
            &RigidTransform { translation: [0.0; 3], rotation: angle },
            &m,
            &[-t.0, -t.1, -t.2],
        )
        .unwrap();
        let a = moved.to_dense();
        let b = fixed.to_dense();
        for (ra, rb) in a.iter().zip(&b) {
            for (x, y) in ra.iter().zip(rb) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn each_pixel_deposits_area_over_falloff(
        t in (-0.3f64..0.3, -0.3f64..0.3, 0.5f64..1.5),
        p in 1.0f64..4.0,
    ) {
        let geometry = GridGeometry::new(4, 4, 0.05).unwrap();
        let falloff = FalloffModel::custom(p, 0.0, [0.0, 0.0, 1.0]).unwrap();
        let m = ForwardModel::new(falloff, Default::default()).with_gain(3.0);
        let pose = RigidTransform::translation([t.0, t.1, t.2]);
        let system = assemble_system(&geometry, &pose, &m).unwrap();
        for (j, e) in system.entries().iter().enumerate() {
            let e = e.expect("scene fits in the histogram");
            let x = pose.apply(&geometry.pixel_center(j / 4, j % 4));
            let expected = 3.0 * geometry.pixel_area() / falloff.eval(&x).unwrap();
            prop_assert!(e.lo >= 0.0 && e.hi >= 0.0);
            prop_assert!((e.total() - expected).abs() <= 1e-15 * expected.max(1.0));
        }
    }

    #[test]
    fn falloff_grows_with_range_at_fixed_angle(
        dir in (-0.5f64..0.5, -0.5f64..0.5),
        r in 0.1f64..3.0,
        dr in 1e-3f64..1.0,
        p in 0.5f64..5.0,
        q in -4.0f64..4.0,
    ) {
        let falloff = FalloffModel::custom(p, q, [0.0, 0.0, 1.0]).unwrap();
        let n = (dir.0 * dir.0 + dir.1 * dir.1 + 1.0).sqrt();
        let at = |s: f64| [s * dir.0 / n, s * dir.1 / n, s / n];
        prop_assert!(falloff.eval(&at(r + dr)).unwrap() > falloff.eval(&at(r)).unwrap());
    }
}

#[test]
fn assembly_is_deterministic() {
    let geometry = GridGeometry::new(16, 16, 0.02).unwrap();
    let m = ForwardModel::new(FalloffModel::experimental(), Default::default());
    let pose = RigidTransform::translation([0.1, -0.2, 1.1]);
    let a = assemble_system(&geometry, &pose, &m).unwrap();
    let b = assemble_system(&geometry, &pose, &m).unwrap();
    assert_eq!(a.to_dense(), b.to_dense());
}

#[test]
fn everything_out_of_range_gives_an_empty_system() {
    let geometry = GridGeometry::new(3, 3, 0.01).unwrap();
    let m = model(8);
    let system = assemble_system(
        &geometry,
        &RigidTransform::translation([0.0, 0.0, 50.0]),
        &m,
    )
    .unwrap();
    assert!(system.is_empty());
    assert_eq!(system.out_of_range(), 9);
    let albedo = AlbedoGrid::new(geometry, Image::filled(3, 3, 1.0)).unwrap();
    assert!(render(&system, &albedo)
        .unwrap()
        .counts
        .iter()
        .all(|&v| v == 0.0));
}
