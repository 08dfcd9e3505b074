use geoforensics_core::shadowgeom::feasibility_from;
use proptest::prelude::*;
use std::f64::consts::PI;

fn circ_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

/// A nonempty wedge intersection is a closed arc, so one of its ends is some wedge end.
fn brute_margin(az: &[f64], h: f64) -> f64 {
    az.iter()
        .flat_map(|a| [a - h, a + h])
        .map(|c| az.iter().map(|b| circ_dist(c, *b) - h).fold(f64::MIN, f64::max))
        .fold(f64::MAX, f64::min)
}

proptest! {
    #[test]
    fn wedge_intersection_matches_brute_force(
        az in proptest::collection::vec(-PI..PI, 1..8),
        h in 0.05f64..1.5,
        turn in -PI..PI,
    ) {
        let margin = brute_margin(&az, h);
        prop_assume!(margin.abs() > 1e-9);
        let ratios = vec![1.0; az.len()];
        let v = feasibility_from(&az, &ratios, h).unwrap();
        prop_assert_eq!(v.feasible, margin < 0.0);

        let rotated: Vec<f64> = az.iter().map(|a| (a + turn + PI).rem_euclid(2.0 * PI) - PI).collect();
        let w = feasibility_from(&rotated, &ratios, h).unwrap();
        prop_assert_eq!(w.feasible, v.feasible);
        prop_assert!((w.circ_variance - v.circ_variance).abs() < 1e-9);
        prop_assert!((0.0..=1.0).contains(&v.circ_variance));
    }
}

#[test]
fn identical_azimuths_have_zero_variance() {
    let v = feasibility_from(&[0.7; 5], &[2.0; 5], 0.1).unwrap();
    assert!(v.feasible);
    assert!(v.circ_variance < 1e-12);
    assert_eq!(v.length_dispersion, 0.0);
    assert!((v.feasible_interval.unwrap().width - 0.2).abs() < 1e-12);
}

#[test]
fn opposite_azimuths_are_infeasible() {
    let v = feasibility_from(&[0.0, PI], &[1.0, 1.0], 0.3).unwrap();
    assert!(!v.feasible);
    assert!((v.circ_variance - 1.0).abs() < 1e-12);
    assert!(feasibility_from(&[], &[], 0.3).is_err());
    assert!(feasibility_from(&[0.0], &[1.0], PI).is_err());
}
