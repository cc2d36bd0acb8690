use keyhole_core::eval::{
    disambiguated_ssim, ssim, transform_image, DisambiguationSearch, Rtf, SsimParams,
};
use keyhole_core::simulator::Plane;
use keyhole_core::Image;
use proptest::prelude::*;

fn image(side: usize) -> impl Strategy<Value = Image> {
    prop::collection::vec(0.0f64..1.0, side * side)
        .prop_map(move |v| Image::from_vec(side, side, v).unwrap())
}

/// Two smooth bumps well inside a 16x16 frame, so shifts of up to three
/// pixels keep all the content.
fn blob() -> Image {
    let bump = |r: f64, c: f64, r0: f64, c0: f64, s: f64| {
        (-((r - r0).powi(2) + (c - c0).powi(2)) / (2.0 * s * s)).exp()
    };
    Image::from_fn(16, 16, |r, c| {
        let (r, c) = (r as f64, c as f64);
        bump(r, c, 6.5, 6.0, 1.6) + 0.6 * bump(r, c, 9.0, 9.5, 1.2)
    })
}

/// SSIM of the identity candidate, with the same preprocessing as the search.
fn plain(truth: &Image, recon: &Image) -> f64 {
    let t = truth.max_normalized();
    let params = SsimParams::default().with_data_range(t.max() - t.min());
    ssim(&t, &recon.max_normalized(), &params).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn self_similarity_is_exactly_one(x in image(12)) {
        prop_assert_eq!(ssim(&x, &x, &SsimParams::default()).unwrap(), 1.0);
    }

    #[test]
    fn ssim_is_symmetric_and_bounded(a in image(10), b in image(10)) {
        let ab = ssim(&a, &b, &SsimParams::default()).unwrap();
        let ba = ssim(&b, &a, &SsimParams::default()).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12);
        prop_assert!(ab <= 1.0);
    }

    #[test]
    fn search_never_scores_below_plain(a in image(12), b in image(12)) {
        let (best, _) = disambiguated_ssim(&a, &b, &DisambiguationSearch::default(), &SsimParams::default()).unwrap();
        prop_assert!(best >= plain(&a, &b));
    }

    #[test]
    fn enlarging_the_search_never_hurts(a in image(10), b in image(10), radius in 0usize..4) {
        let small = DisambiguationSearch {
            translation_radius: Some(radius),
            flip_vertical: false,
            ..DisambiguationSearch::default()
        };
        let large = DisambiguationSearch { translation_radius: Some(radius + 1), ..small };
        let full = DisambiguationSearch::default();
        let p = SsimParams::default();
        let s = disambiguated_ssim(&a, &b, &small, &p).unwrap().0;
        let l = disambiguated_ssim(&a, &b, &large, &p).unwrap().0;
        let f = disambiguated_ssim(&a, &b, &full, &p).unwrap().0;
        prop_assert!(s <= l && l <= f);
    }
}

#[test]
fn every_content_preserving_transform_is_undone() {
    let x = blob();
    let search = DisambiguationSearch::default();
    let p = SsimParams::default();
    let mut checked = 0;
    for rtf in search.candidates(16, 16) {
        if rtf.dx.abs() > 3 || rtf.dy.abs() > 3 {
            continue;
        }
        let (score, _) = disambiguated_ssim(&x, &transform_image(&x, &rtf), &search, &p).unwrap();
        assert!(score >= 0.99, "{rtf:?} scores {score}");
        checked += 1;
    }
    assert_eq!(checked, 7 * 7 * 4);
}

#[test]
fn every_rotation_is_undone() {
    let x = blob();
    let search = DisambiguationSearch {
        translation_radius: Some(0),
        ..DisambiguationSearch::for_plane(Plane::ConstantZ)
    };
    let p = SsimParams::default();
    let candidates = search.candidates(16, 16);
    assert_eq!(candidates.len(), 72 * 4);
    for rtf in candidates {
        let (score, _) = disambiguated_ssim(&x, &transform_image(&x, &rtf), &search, &p).unwrap();
        assert!(score >= 0.99, "{rtf:?} scores {score}");
    }
}

#[test]
fn ties_resolve_to_the_first_candidate() {
    // every flip of a flat image matches; the unflipped one comes first
    let flat = Image::filled(8, 8, 0.5);
    let (score, rtf) = disambiguated_ssim(
        &flat,
        &flat,
        &DisambiguationSearch::default(),
        &SsimParams::default(),
    )
    .unwrap();
    assert_eq!(score, 1.0);
    assert_eq!(rtf, Rtf::identity());
}
