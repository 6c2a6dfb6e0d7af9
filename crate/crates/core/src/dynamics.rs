//! Kinematic single-track vehicle model.
//!
//! The state is the rear-axle pose plus speed and mean front-wheel angle;
//! the controls are longitudinal acceleration and steering-angle rate.
//! Integration is classical RK4 on fixed substeps. Speed and steering
//! saturate at their bounds: a substep that would carry `v` below zero or
//! `β` past its limit is split at the crossing time, so a braking vehicle
//! comes to rest instead of rolling backwards.

use crate::geometry::{wrap_angle, OrientedRect, Vec2};
use serde::{Deserialize, Serialize};

pub const V_MAX: f64 = 3.3;
pub const STEER_MAX: f64 = 0.55;
pub const ACCEL_MAX: f64 = 1.2;
pub const STEER_RATE_MAX: f64 = 1.2;
pub const SUBSTEPS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub v: f64,
    /// Heading in the inertial frame, wrapped to (−π, π].
    pub heading: f64,
    /// Mean front-wheel angle.
    pub steer: f64,
}

impl VehicleState {
    pub const fn new(x: f64, y: f64, v: f64, heading: f64, steer: f64) -> Self {
        Self { x, y, v, heading, steer }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.x, self.y, self.v, self.heading, self.steer]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action {
    /// Longitudinal acceleration, m/s².
    pub accel: f64,
    /// Steering-angle rate, rad/s.
    pub steer_rate: f64,
}

impl Action {
    pub const ZERO: Action = Action { accel: 0.0, steer_rate: 0.0 };

    pub const fn new(accel: f64, steer_rate: f64) -> Self {
        Self { accel, steer_rate }
    }

    pub fn clamped(self) -> Self {
        Self {
            accel: self.accel.clamp(-ACCEL_MAX, ACCEL_MAX),
            steer_rate: self.steer_rate.clamp(-STEER_RATE_MAX, STEER_RATE_MAX),
        }
    }

    pub fn bounds() -> [f64; 2] {
        [ACCEL_MAX, STEER_RATE_MAX]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleGeometry {
    pub wheelbase: f64,
    pub length: f64,
    pub width: f64,
    /// Distance from the rear axle back to the rear bumper.
    pub rear_overhang: f64,
}

impl Default for VehicleGeometry {
    fn default() -> Self {
        Self { wheelbase: 2.712, length: 4.767, width: 1.832, rear_overhang: 1.1 }
    }
}

impl VehicleGeometry {
    pub fn is_valid(&self) -> bool {
        self.wheelbase > 0.0 && self.length > self.wheelbase && self.width > 0.0
    }
}

/// Time derivative of the state: (ẋ, ẏ, v̇, ρ̇, β̇).
pub fn derivative(state: &VehicleState, action: &Action, wheelbase: f64) -> [f64; 5] {
    let (s, c) = state.heading.sin_cos();
    [
        state.v * c,
        state.v * s,
        action.accel,
        state.v / wheelbase * state.steer.tan(),
        action.steer_rate,
    ]
}

fn axpy(state: &[f64; 5], k: &[f64; 5], h: f64) -> VehicleState {
    VehicleState::from_array(std::array::from_fn(|i| state[i] + h * k[i]))
}

/// One classical RK4 step of length `h` with no saturation.
pub fn rk4(state: &VehicleState, action: &Action, wheelbase: f64, h: f64) -> VehicleState {
    let s0 = state.to_array();
    let k1 = derivative(state, action, wheelbase);
    let k2 = derivative(&axpy(&s0, &k1, 0.5 * h), action, wheelbase);
    let k3 = derivative(&axpy(&s0, &k2, 0.5 * h), action, wheelbase);
    let k4 = derivative(&axpy(&s0, &k3, h), action, wheelbase);
    VehicleState::from_array(std::array::from_fn(|i| {
        s0[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    }))
}

/// Result of an integration step before speed saturation at `V_MAX`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: VehicleState,
    /// Speed reached before clamping to `V_MAX`; exceeds it on overspeed.
    pub raw_speed: f64,
}

/// Integrates one control interval with `SUBSTEPS` RK4 substeps and returns
/// the unclamped terminal speed alongside the saturated state.
pub fn integrate(state: &VehicleState, action: &Action, wheelbase: f64, dt: f64) -> StepOutcome {
    let h = dt / SUBSTEPS as f64;
    let mut s = *state;
    s.v = s.v.max(0.0);
    s.steer = s.steer.clamp(-STEER_MAX, STEER_MAX);
    for _ in 0..SUBSTEPS {
        s = saturating_substep(&s, action, wheelbase, h);
    }
    let raw_speed = s.v;
    s.v = s.v.clamp(0.0, V_MAX);
    s.heading = wrap_angle(s.heading);
    StepOutcome { state: s, raw_speed }
}

/// Advances the state by `dt`, clamps `v` to [0, V_MAX] and `β` to
/// [−STEER_MAX, STEER_MAX], and wraps the heading.
pub fn step(state: &VehicleState, action: &Action, wheelbase: f64, dt: f64) -> VehicleState {
    integrate(state, action, wheelbase, dt).state
}

// Splits the substep at the instants where v reaches 0 while braking or β
// reaches its limit, then continues with that rate zeroed.
fn saturating_substep(s: &VehicleState, action: &Action, wheelbase: f64, h: f64) -> VehicleState {
    let mut s = *s;
    let mut act = *action;
    let mut remaining = h;
    for _ in 0..3 {
        if remaining <= 0.0 {
            break;
        }
        if act.accel < 0.0 && s.v <= 0.0 {
            act.accel = 0.0;
            s.v = 0.0;
        }
        if (act.steer_rate > 0.0 && s.steer >= STEER_MAX)
            || (act.steer_rate < 0.0 && s.steer <= -STEER_MAX)
        {
            act.steer_rate = 0.0;
            s.steer = s.steer.clamp(-STEER_MAX, STEER_MAX);
        }
        let t_stop = if act.accel < 0.0 { s.v / -act.accel } else { f64::INFINITY };
        let t_steer = if act.steer_rate > 0.0 {
            (STEER_MAX - s.steer) / act.steer_rate
        } else if act.steer_rate < 0.0 {
            (-STEER_MAX - s.steer) / act.steer_rate
        } else {
            f64::INFINITY
        };
        let t_event = t_stop.min(t_steer);
        if t_event >= remaining {
            return rk4(&s, &act, wheelbase, remaining);
        }
        s = rk4(&s, &act, wheelbase, t_event);
        if t_stop <= t_steer {
            s.v = 0.0;
            act.accel = 0.0;
        }
        if t_steer <= t_stop {
            s.steer = STEER_MAX.copysign(act.steer_rate);
            act.steer_rate = 0.0;
        }
        remaining -= t_event;
    }
    if remaining > 0.0 {
        s = rk4(&s, &act, wheelbase, remaining);
    }
    s
}

/// Oriented body rectangle of the vehicle in the inertial frame.
pub fn footprint(state: &VehicleState, geom: &VehicleGeometry) -> OrientedRect {
    let forward = 0.5 * geom.length - geom.rear_overhang;
    let center = state.position() + Vec2::new(forward, 0.0).rotate(state.heading);
    OrientedRect { center, heading: state.heading, length: geom.length, width: geom.width }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    const L: f64 = 2.7;

    #[test]
    fn derivative_at_rest_is_zero() {
        let d = derivative(&VehicleState::default(), &Action::ZERO, L);
        assert_eq!(d, [0.0; 5]);
    }

    #[test]
    fn derivative_forward_motion() {
        let d = derivative(&VehicleState::new(0.0, 0.0, 1.0, 0.0, 0.0), &Action::ZERO, L);
        assert_eq!(d, [1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn derivative_yaw_rate() {
        let d = derivative(&VehicleState::new(0.0, 0.0, 2.0, 0.0, 0.2), &Action::ZERO, L);
        let expected = 2.0 / 2.7 * (0.2f64.sin() / 0.2f64.cos());
        assert_abs_diff_eq!(d[3], expected, epsilon = 1e-15);
        assert_abs_diff_eq!(d[3], 0.15016, epsilon = 1e-5);
    }

    #[test]
    fn straight_line_constant_speed() {
        let s = step(&VehicleState::new(0.0, 0.0, 1.0, 0.0, 0.0), &Action::ZERO, L, 0.1);
        assert_abs_diff_eq!(s.x, 0.1, epsilon = 1e-15);
        assert_eq!((s.y, s.v, s.heading, s.steer), (0.0, 1.0, 0.0, 0.0));
    }

    #[test]
    fn uniform_acceleration_from_rest() {
        let s = step(&VehicleState::default(), &Action::new(1.2, 0.0), L, 0.1);
        assert_abs_diff_eq!(s.v, 0.12, epsilon = 1e-15);
        assert_abs_diff_eq!(s.x, 0.006, epsilon = 1e-15);
    }

    #[test]
    fn braking_stops_without_reversing() {
        let mut s = VehicleState::new(0.0, 0.0, 0.05, 0.0, 0.0);
        for _ in 0..20 {
            s = step(&s, &Action::new(-1.2, 0.0), L, 0.1);
        }
        assert_eq!(s.v, 0.0);
        // Stopping distance v²/(2a).
        assert_abs_diff_eq!(s.x, 0.05 * 0.05 / 2.4, epsilon = 1e-12);
    }

    #[test]
    fn steering_saturates_at_limit() {
        let mut s = VehicleState::new(0.0, 0.0, 1.0, 0.0, 0.5);
        s = step(&s, &Action::new(0.0, 1.2), L, 0.1);
        assert_eq!(s.steer, STEER_MAX);
    }

    #[test]
    fn overspeed_reports_raw_speed() {
        let out = integrate(&VehicleState::new(0.0, 0.0, 3.3, 0.0, 0.0), &Action::new(1.0, 0.0), L, 0.1);
        assert_abs_diff_eq!(out.raw_speed, 3.4, epsilon = 1e-12);
        assert_eq!(out.state.v, V_MAX);
    }

    #[test]
    fn constant_steer_traces_a_circle() {
        let beta: f64 = 0.3;
        let radius = L / beta.tan();
        let center = Vec2::new(0.0, radius);
        let mut s = VehicleState::new(0.0, 0.0, 2.0, 0.0, beta);
        for _ in 0..100 {
            s = step(&s, &Action::ZERO, L, 0.1);
            assert!(((s.position() - center).norm() - radius).abs() < 1e-3);
        }
    }

    fn rk4_error(h: f64) -> f64 {
        let a = Action::new(0.3, 0.15);
        let start = VehicleState::new(0.0, 0.0, 1.0, 0.2, -0.1);
        let run = |h: f64| {
            let n = (2.0 / h).round() as usize;
            (0..n).fold(start, |s, _| rk4(&s, &a, L, h))
        };
        let reference = run(1e-4);
        let got = run(h);
        got.to_array().iter().zip(reference.to_array()).map(|(x, r)| (x - r).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn rk4_is_fourth_order() {
        let hs: [f64; 4] = [0.2, 0.1, 0.05, 0.025];
        let pts: Vec<(f64, f64)> = hs.iter().map(|&h| (h.ln(), rk4_error(h).ln())).collect();
        let n = pts.len() as f64;
        let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        assert!(slope >= 3.8, "slope {slope}");
    }

    #[test]
    fn footprint_axis_aligned() {
        let g = VehicleGeometry { wheelbase: 2.5, length: 4.0, width: 2.0, rear_overhang: 0.5 };
        let c = footprint(&VehicleState::default(), &g).corners();
        let expect = [(-0.5, -1.0), (3.5, -1.0), (3.5, 1.0), (-0.5, 1.0)];
        for (p, e) in c.iter().zip(expect) {
            assert_abs_diff_eq!(p.x, e.0, epsilon = 1e-12);
            assert_abs_diff_eq!(p.y, e.1, epsilon = 1e-12);
        }
    }

    #[test]
    fn footprint_quarter_turn() {
        let g = VehicleGeometry { wheelbase: 2.5, length: 4.0, width: 2.0, rear_overhang: 0.5 };
        let c = footprint(&VehicleState::new(0.0, 0.0, 0.0, PI / 2.0, 0.0), &g).corners();
        let expect = [(1.0, -0.5), (1.0, 3.5), (-1.0, 3.5), (-1.0, -0.5)];
        for (p, e) in c.iter().zip(expect) {
            assert_abs_diff_eq!(p.x, e.0, epsilon = 1e-12);
            assert_abs_diff_eq!(p.y, e.1, epsilon = 1e-12);
        }
    }

    fn shoelace(pts: &[Vec2]) -> f64 {
        let n = pts.len();
        (0..n)
            .map(|i| pts[i].x * pts[(i + 1) % n].y - pts[(i + 1) % n].x * pts[i].y)
            .sum::<f64>()
            .abs()
            * 0.5
    }

    proptest! {
        #[test]
        fn footprint_area_is_length_times_width(
            x in -50.0..50.0f64, y in -50.0..50.0f64, h in -PI..PI,
            len in 3.0..6.0f64, w in 1.0..2.5f64,
        ) {
            let g = VehicleGeometry { wheelbase: 2.0, length: len, width: w, rear_overhang: 0.8 };
            let c = footprint(&VehicleState::new(x, y, 0.0, h, 0.0), &g).corners();
            prop_assert!((shoelace(&c) - len * w).abs() < 1e-9);
        }

        #[test]
        fn clamped_step_respects_bounds(
            v in 0.0..3.3f64, steer in -0.55..0.55f64, h in -PI..PI,
            a in -1.2..1.2f64, w in -1.2..1.2f64, dt in 0.01..0.5f64,
        ) {
            let s = step(&VehicleState::new(0.0, 0.0, v, h, steer), &Action::new(a, w), L, dt);
            let s2 = step(&s, &Action::ZERO, L, dt);
            for st in [s, s2] {
                prop_assert!((0.0..=V_MAX).contains(&st.v));
                prop_assert!(st.steer.abs() <= STEER_MAX);
                prop_assert!(st.heading > -PI && st.heading <= PI);
            }
        }

        #[test]
        fn straight_line_matches_uniform_acceleration(
            v in 0.5..2.0f64, a in -1.2..1.2f64, h in -PI..PI,
        ) {
            let s0 = VehicleState::new(1.0, -2.0, v, h, 0.0);
            let s = step(&s0, &Action::new(a, 0.0), L, 0.1);
            let d = v * 0.1 + 0.5 * a * 0.01;
            prop_assert!((s.x - (1.0 + d * h.cos())).abs() < 1e-12);
            prop_assert!((s.y - (-2.0 + d * h.sin())).abs() < 1e-12);
        }
    }
}
