use std::f64::consts::PI;

use fdcb::arrays::{
    array_response, default_coverage_grid, grid_region, steering_matrix, Direction, LinkSide,
    UpaGeometry,
};
use fdcb::codebooks::beam_gain;
use proptest::prelude::*;

fn direction() -> impl Strategy<Value = Direction> {
    (-PI / 2.0..PI / 2.0, -PI / 2.0..PI / 2.0).prop_map(|(az, el)| Direction::new(az, el).unwrap())
}

fn geometry() -> impl Strategy<Value = UpaGeometry> {
    (1usize..=6, 1usize..=6, 0.25f64..1.0).prop_map(|(r, c, d)| UpaGeometry::new(r, c, d).unwrap())
}

proptest! {
    #[test]
    fn responses_are_unit_modulus(g in geometry(), dir in direction()) {
        for z in array_response(&g, dir).iter() {
            prop_assert!((z.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mirrored_direction_conjugates_response(g in geometry(), dir in direction()) {
        // Elements lie in the x-z plane, so negating azimuth and elevation
        // negates every projected path length.
        let mirror = Direction::new(-dir.azimuth(), -dir.elevation()).unwrap();
        let a = array_response(&g, dir);
        let b = array_response(&g, mirror);
        for (x, y) in a.iter().zip(b.iter()) {
            prop_assert!((x.conj() - y).norm() < 1e-9);
        }
    }

    #[test]
    fn matched_beam_gain_is_n_squared(g in geometry(), dir in direction()) {
        let a = array_response(&g, dir);
        let n = g.num_elements() as f64;
        let gain = beam_gain(a.view(), &g, dir).unwrap();
        prop_assert!((gain - n * n).abs() < 1e-9 * n * n);
    }

    #[test]
    fn gain_never_exceeds_n_squared(g in geometry(), d1 in direction(), d2 in direction()) {
        let a = array_response(&g, d1);
        let n = g.num_elements() as f64;
        prop_assert!(beam_gain(a.view(), &g, d2).unwrap() <= n * n * (1.0 + 1e-12));
    }

    #[test]
    fn steering_columns_are_responses(g in geometry(), dirs in prop::collection::vec(direction(), 1..6)) {
        let s = steering_matrix(&g, &dirs).unwrap();
        prop_assert_eq!(s.num_beams(), dirs.len());
        prop_assert_eq!(s.num_antennas(), g.num_elements());
        for (i, d) in dirs.iter().enumerate() {
            let a = array_response(&g, *d);
            prop_assert_eq!(s.entries().column(i).to_owned(), a);
        }
    }
}

#[test]
fn default_grid_spans_the_coverage_rectangle() {
    let grid = default_coverage_grid(LinkSide::Receive);
    assert_eq!(grid.len(), 45);
    assert_eq!(
        grid,
        grid_region((-60.0, 60.0, 15.0), (-30.0, 30.0, 15.0)).unwrap()
    );
    let az: Vec<f64> = grid.iter().map(|d| d.azimuth().to_degrees()).collect();
    let el: Vec<f64> = grid.iter().map(|d| d.elevation().to_degrees()).collect();
    assert!((az[0] + 60.0).abs() < 1e-9 && (az[8] - 60.0).abs() < 1e-9);
    assert!(el[..9].iter().all(|e| (e + 30.0).abs() < 1e-9));
    assert!(el[36..].iter().all(|e| (e - 30.0).abs() < 1e-9));
}

#[test]
fn bad_grid_ranges_are_rejected() {
    assert!(grid_region((10.0, -10.0, 5.0), (0.0, 0.0, 1.0)).is_err());
    assert!(grid_region((0.0, 10.0, 0.0), (0.0, 0.0, 1.0)).is_err());
}
