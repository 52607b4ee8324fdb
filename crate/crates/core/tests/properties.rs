use advice_core::advgen::RegionPrediction;
use advice_core::lang::CellGrid;
use advice_core::world::{
    centered_region, direction_of, normalized_error, quadrant_of, Coordinate, Direction, Quadrant, QUADRANT_SIDE,
};
use proptest::prelude::*;

fn board() -> impl Strategy<Value = Coordinate> {
    (-1.0f64..=1.0, -1.0f64..=1.0).prop_map(|(x, z)| Coordinate::new(x, 0.0, z))
}

proptest! {
    #[test]
    fn centered_regions_stay_on_board_and_keep_their_area(c in board(), side in 0.01f64..=2.0) {
        let r = centered_region(&c, side);
        prop_assert!(r.within_board());
        prop_assert!((r.area() - side * side).abs() < 1e-9);
        prop_assert!(r.contains(&c));
    }

    #[test]
    fn a_coordinate_lies_in_its_own_quadrant(c in board()) {
        prop_assert!(quadrant_of(&c).region().contains(&c));
    }

    #[test]
    fn following_the_direction_reduces_the_error(p in board(), g in board()) {
        if let Ok(d) = direction_of(&p, &g) {
            prop_assert!(d.satisfied(&p, &g));
            // half the remaining gap along the named axis
            let (hx, hz) = ((g.x - p.x) / 2.0, (g.z - p.z) / 2.0);
            let moved = match d {
                Direction::Left | Direction::Right => Coordinate::new(p.x + hx, p.y, p.z),
                Direction::Up | Direction::Down => Coordinate::new(p.x, p.y, p.z + hz),
            };
            prop_assert!(normalized_error(&moved, &g, 0.1) <= normalized_error(&p, &g, 0.1) + 1e-12);
        }
    }

    #[test]
    fn snapped_cells_move_a_center_by_at_most_an_eighth(c in board()) {
        let grid = CellGrid::default();
        let (col, row) = grid.snap(c.x, c.z);
        let (x, z) = grid.cell_center(col, row);
        prop_assert!((x - c.x).abs() <= 0.125 + 1e-12 && (z - c.z).abs() <= 0.125 + 1e-12);
        prop_assert!(grid.cell_region(col, row).within_board());
    }

    #[test]
    fn the_second_choice_differs_and_is_no_more_likely(p in proptest::array::uniform4(0.0f64..1.0)) {
        let total: f64 = p.iter().sum::<f64>() + 1e-9;
        let probs = p.map(|v| v / total);
        let rp = RegionPrediction::from_probs(probs);
        prop_assert_ne!(rp.top1, rp.top2);
        prop_assert!(probs[rp.top1.index()] >= probs[rp.top2.index()]);
        for q in Quadrant::ALL {
            if q != rp.top1 {
                prop_assert!(probs[rp.top2.index()] >= probs[q.index()]);
            }
        }
    }
}

#[test]
fn quadrant_sized_regions_are_a_quarter_of_the_board() {
    let r = centered_region(&Coordinate::new(0.0, 0.0, 0.0), QUADRANT_SIDE);
    assert_eq!(r.area(), 1.0);
}
