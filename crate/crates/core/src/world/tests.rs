use super::*;
use crate::dynamics::{footprint, VehicleGeometry, VehicleState};
use crate::env::Task;
use crate::geometry::{point_segment_distance, ray_segment, OrientedRect, Polygon, Vec2};
use proptest::prelude::*;
use std::f64::consts::PI;

fn rect_poly(x0: f64, y0: f64, x1: f64, y1: f64) -> Polygon {
    Polygon::new(vec![
        Vec2::new(x0, y0),
        Vec2::new(x1, y0),
        Vec2::new(x1, y1),
        Vec2::new(x0, y1),
    ])
}

fn bare(boundary: Polygon, obstacles: Vec<OrientedRect>, target: TargetState) -> Scenario {
    Scenario { boundary, obstacles, start: VehicleState::default(), target, seed: 0 }
}

fn target_at(x: f64, y: f64) -> TargetState {
    TargetState { x, y, heading: 0.0, speed: 1.0 }
}

/// Winding number, independent of the crossing-number test in `geometry`.
fn winding(poly: &Polygon, p: Vec2) -> i32 {
    let mut wn = 0;
    for (a, b) in poly.edges() {
        let side = (b - a).cross(p - a);
        if a.y <= p.y {
            if b.y > p.y && side > 0.0 {
                wn += 1;
            }
        } else if b.y <= p.y && side < 0.0 {
            wn -= 1;
        }
    }
    wn
}

fn oracle_invariants(s: &Scenario, geom: &VehicleGeometry) -> Result<(), String> {
    let v = &s.boundary.vertices;
    let n = v.len();
    for i in 0..n {
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (a, b, c, d) = (v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]);
            let o = |p: Vec2, q: Vec2, r: Vec2| (q - p).cross(r - p);
            let crosses = o(a, b, c) * o(a, b, d) < 0.0 && o(c, d, a) * o(c, d, b) < 0.0;
            if crosses || point_segment_distance(c, a, b) < 1e-12 || point_segment_distance(a, c, d) < 1e-12 {
                return Err(format!("edges {i} and {j} touch"));
            }
        }
    }
    let fp = footprint(&s.start, geom);
    for i in 0..=20 {
        for j in 0..=10 {
            let local = Vec2::new(
                (i as f64 / 20.0 - 0.5) * (fp.length - 1e-6),
                (j as f64 / 10.0 - 0.5) * (fp.width - 1e-6),
            );
            let p = local.rotate(fp.heading) + fp.center;
            if winding(&s.boundary, p) == 0 {
                return Err("start footprint point outside boundary".into());
            }
            for o in &s.obstacles {
                let q = (p - o.center).rotate(-o.heading);
                if q.x.abs() < 0.5 * o.length - 1e-6 && q.y.abs() < 0.5 * o.width - 1e-6 {
                    return Err("start footprint inside obstacle".into());
                }
            }
        }
    }
    if !(0.0..=3.3).contains(&s.start.v) || s.start.steer.abs() > 0.55 {
        return Err("start state out of bounds".into());
    }
    if winding(&s.boundary, s.target.position()) == 0 {
        return Err("target outside".into());
    }
    for o in &s.obstacles {
        let q = (s.target.position() - o.center).rotate(-o.heading);
        if q.x.abs() < 0.5 * o.length && q.y.abs() < 0.5 * o.width {
            return Err("target inside obstacle".into());
        }
    }
    Ok(())
}

#[test]
fn type_b_has_no_obstacles() {
    let cfg = ScenarioConfig { obstacles: false, ..ScenarioConfig::default() };
    for seed in 0..50 {
        assert!(generate_scenario(&cfg, seed).unwrap().obstacles.is_empty());
    }
}

#[test]
fn same_seed_same_bytes() {
    for cfg in [ScenarioConfig::default(), ScenarioConfig::open_lot(Task::Driver)] {
        let a = generate_scenario(&cfg, 42).unwrap().to_json();
        let b = generate_scenario(&cfg, 42).unwrap().to_json();
        assert_eq!(a, b);
    }
}

#[test]
fn thousand_scenarios_satisfy_invariants() {
    let geom = VehicleGeometry::default();
    let configs = [
        ScenarioConfig::default(),
        ScenarioConfig { obstacles: false, ..ScenarioConfig::default() },
        ScenarioConfig::open_lot(Task::Driver),
        ScenarioConfig { obstacles: true, ..ScenarioConfig::open_lot(Task::Stopper) },
    ];
    for (ci, cfg) in configs.iter().enumerate() {
        for seed in 0..250 {
            let s = generate_scenario(cfg, seed).unwrap();
            oracle_invariants(&s, &geom).unwrap_or_else(|e| panic!("config {ci} seed {seed}: {e}"));
            if cfg.task == Task::Stopper {
                assert_eq!(s.target.speed, 0.0);
            }
        }
    }
}

#[test]
fn type_a_corridors_place_obstacles() {
    let cfg = ScenarioConfig::default();
    let total: usize = (0..50).map(|s| generate_scenario(&cfg, s).unwrap().obstacles.len()).sum();
    assert!(total >= 2 * 50);
}

#[test]
fn over_constrained_config_fails() {
    let cfg = ScenarioConfig { obstacle_count: [200, 200], ..ScenarioConfig::default() };
    assert!(matches!(generate_scenario(&cfg, 1), Err(crate::Error::GenerationFailed { attempts: 100 })));
}

#[test]
fn scenario_file_round_trip() {
    let s = generate_scenario(&ScenarioConfig::default(), 9).unwrap();
    let back = Scenario::from_json(&s.to_json()).unwrap();
    assert_eq!(back, s);
    assert!(Scenario::from_json("{\"format\":\"other\"}").is_err());
}

#[test]
fn collides_basic_cases() {
    let geom = VehicleGeometry::default();
    let mut s = bare(rect_poly(-50.0, -50.0, 50.0, 50.0), vec![], target_at(10.0, 0.0));
    assert!(!collides(&VehicleState::default(), &geom, &s));
    let fp = footprint(&VehicleState::default(), &geom);
    s.obstacles.push(OrientedRect { center: fp.center, heading: 0.3, length: 2.0, width: 1.0 });
    assert!(collides(&VehicleState::default(), &geom, &s));
}

#[test]
fn tangent_to_boundary_is_not_collision() {
    let geom = VehicleGeometry { wheelbase: 2.5, length: 4.0, width: 2.0, rear_overhang: 0.5 };
    // Footprint spans x ∈ [−0.5, 3.5], y ∈ [−1, 1]; the boundary shares the y = −1 edge.
    let s = bare(rect_poly(-10.0, -1.0, 10.0, 10.0), vec![], target_at(5.0, 5.0));
    assert!(!collides(&VehicleState::default(), &geom, &s));
    let nudged = VehicleState::new(0.0, -1e-6, 0.0, 0.0, 0.0);
    assert!(collides(&nudged, &geom, &s));
    // Obstacle flush against the front bumper.
    let o = OrientedRect { center: Vec2::new(4.5, 0.0), heading: 0.0, length: 2.0, width: 2.0 };
    let s2 = bare(rect_poly(-10.0, -10.0, 10.0, 10.0), vec![o], target_at(-5.0, 5.0));
    assert!(!collides(&VehicleState::default(), &geom, &s2));
    let forward = VehicleState::new(1e-6, 0.0, 0.0, 0.0, 0.0);
    assert!(collides(&forward, &geom, &s2));
}

#[test]
fn scan_in_empty_world_has_no_hits() {
    let s = bare(rect_poly(-1e6, -1e6, 1e6, 1e6), vec![], target_at(1.0, 0.0));
    let sc = scan(&VehicleState::default(), &s, 360, 20.0);
    assert_eq!(sc.readings.len(), 360);
    assert!(sc.readings.iter().all(|r| !r.hit && r.distance == 20.0));
    assert!(sc.readings.windows(2).all(|w| w[0].bearing < w[1].bearing));
}

#[test]
fn scan_wall_ahead() {
    let s = bare(rect_poly(-30.0, -30.0, 5.0, 30.0), vec![], target_at(1.0, 0.0));
    let sc = scan(&VehicleState::default(), &s, 360, 20.0);
    let ahead = sc.readings.iter().find(|r| r.bearing == 0.0).unwrap();
    assert!(ahead.hit);
    assert!((ahead.distance - 5.0).abs() < 1e-9);
}

#[test]
fn render_all_free_when_target_out_of_range() {
    let s = bare(rect_poly(-500.0, -500.0, 500.0, 500.0), vec![], target_at(-40.0, 0.0));
    let st = VehicleState::default();
    let sc = scan(&st, &s, 360, 20.0);
    let g = render_grid(&st, &s, &sc, &GridSpec::default());
    assert!(g.cells.iter().all(|&c| c == 0));
}

#[test]
fn render_target_dead_ahead() {
    let spec = GridSpec { rows: 16, cols: 16, cell_size: 1.0, anchor_row: 8, anchor_col: 2 };
    let s = bare(rect_poly(-500.0, -500.0, 500.0, 500.0), vec![], target_at(3.0, 0.0));
    let st = VehicleState::default();
    let g = render_grid(&st, &s, &scan(&st, &s, 360, 20.0), &spec);
    assert_eq!(g.get(8, 5), 1);
    assert_eq!(g.count(1), 1);
    assert_eq!(g.count(-1), 0);
}

#[test]
fn render_left_wall_band() {
    let spec = GridSpec::default();
    // Wall 5.5 m to the left of the vehicle: cell centers with y > 5.5 are outside.
    let s = bare(rect_poly(-100.0, -100.0, 100.0, 5.5), vec![], target_at(10.0, 0.0));
    let st = VehicleState::default();
    let g = render_grid(&st, &s, &scan(&st, &s, 360, 20.0), &spec);
    for row in 0..spec.rows {
        for col in 0..spec.cols {
            let y = spec.cell_center(row, col).y;
            if y > 5.5 {
                assert_eq!(g.get(row, col), -1, "row {row} col {col}");
            }
        }
    }
    // The band is contiguous: each column's −1 cells form a prefix of rows.
    for col in 0..spec.cols {
        let first_free = (0..spec.rows).find(|&r| g.get(r, col) != -1).unwrap();
        assert!((first_free..spec.rows).all(|r| g.get(r, col) != -1));
        assert!(first_free >= 10);
    }
    assert!(g.cells.iter().all(|c| [-1, 0, 1].contains(c)));
}

#[test]
fn random_scan_hits_lie_on_edges() {
    let cfg = ScenarioConfig::default();
    for seed in 0..40 {
        let s = generate_scenario(&cfg, seed).unwrap();
        let st = s.start;
        let sc = scan(&st, &s, 180, 20.0);
        let mut edges: Vec<(Vec2, Vec2)> = s.boundary.edges().collect();
        for o in &s.obstacles {
            let c = o.corners();
            edges.extend((0..4).map(|i| (c[i], c[(i + 1) % 4])));
        }
        for p in sc.world_hits(&st) {
            let d = edges.iter().map(|&(a, b)| point_segment_distance(p, a, b)).fold(f64::INFINITY, f64::min);
            assert!(d < 1e-6, "hit {p:?} is {d} from nearest edge");
        }
        assert!(sc.readings.iter().all(|r| r.distance > 0.0 && r.distance <= 20.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn grid_is_rotation_equivariant(seed in 0u64..10_000, angle in -PI..PI, tx in -20.0..20.0f64, ty in -20.0..20.0f64) {
        let s = generate_scenario(&ScenarioConfig::default(), seed).unwrap();
        let st = s.start;
        let spec = GridSpec::default();
        let g0 = render_grid(&st, &s, &scan(&st, &s, 360, 20.0), &spec);
        let moved = s.transformed(angle, Vec2::new(tx, ty));
        let st2 = moved.start;
        let g1 = render_grid(&st2, &moved, &scan(&st2, &moved, 360, 20.0), &spec);
        prop_assert_eq!(g0.cells, g1.cells);
    }

    #[test]
    fn short_ray_implies_collision(seed in 0u64..10_000, dx in -3.0..12.0f64, dy in -4.0..4.0f64, h in -PI..PI) {
        let s = generate_scenario(&ScenarioConfig::default(), seed).unwrap();
        let geom = VehicleGeometry::default();
        let st = VehicleState::new(dx, dy, 0.0, h, 0.0);
        let fp = footprint(&st, &geom).corners();
        let sc = scan(&st, &s, 120, 20.0);
        let mut any_short = false;
        for r in sc.readings.iter().filter(|r| r.hit) {
            let dir = Vec2::new((h + r.bearing).cos(), (h + r.bearing).sin());
            let own = (0..4)
                .filter_map(|i| ray_segment(st.position(), dir, fp[i], fp[(i + 1) % 4]))
                .fold(f64::INFINITY, f64::min);
            if r.distance < own - 1e-9 {
                any_short = true;
            }
        }
        if any_short {
            prop_assert!(collides(&st, &geom, &s));
        }
    }
}
