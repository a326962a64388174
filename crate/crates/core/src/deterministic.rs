//! The noiseless game: profits grow at their drifts, so the preemption date,
//! the start of attrition and the attrition hazard are all functions of time.
//!
//! Only `mu_y >= mu_x` is supported. In that regime the preemption region is
//! absorbing once reached, and the attrition hazard diverges at the
//! preemption date, so attrition (when it starts at all) always ends the game
//! before preemption.

use serde::Serialize;

use crate::equilibrium::{
    preemption_intensity, resolve_preemption, GameOptions, GameOutcome, GameStreams, OutcomeMode,
    PreemptionRole,
};
use crate::model::{
    follower_value, in_closed_preemption, leader_value, never_value, simultaneous_value,
    DerivedConstants, ModelParams,
};
use crate::paths::{check_grid, grid_steps, State};
use crate::scalar::{count, lit, Scalar};
use crate::ModelError;

fn check_regime<T: Scalar>(s0: State<T>, p: &ModelParams<T>) -> Result<(), ModelError> {
    if p.mu_x > p.mu_y {
        return Err(ModelError::Unsupported(format!(
            "deterministic analysis needs mu_y >= mu_x, got mu_x={}, mu_y={}",
            p.mu_x, p.mu_y
        )));
    }
    if !(p.mu_y > T::zero()) {
        return Err(ModelError::Unsupported(format!("deterministic analysis needs mu_y > 0, got {}", p.mu_y)));
    }
    if !(s0.y > T::zero()) || !(s0.x >= T::zero()) || !s0.x.is_finite() || !s0.y.is_finite() {
        return Err(ModelError::InvalidState(format!("need x >= 0 and y > 0, got ({}, {})", s0.x, s0.y)));
    }
    Ok(())
}

/// State reached at time `t` without noise.
pub fn det_state<T: Scalar>(s0: State<T>, t: T, p: &ModelParams<T>) -> State<T> {
    State::new(s0.x * (p.mu_x * t).exp(), s0.y * (p.mu_y * t).exp())
}

/// First time the noiseless path reaches the closed preemption region;
/// `+inf` if it never does.
///
/// Solved by bisection to `1e-8` on a bracket doubled from `[0, 1]`.
pub fn det_preemption_time<T: Scalar>(
    s0: State<T>,
    p: &ModelParams<T>,
    _k: &DerivedConstants<T>,
) -> Result<T, ModelError> {
    check_regime(s0, p)?;
    let a = s0.y / (p.r - p.mu_y);
    let b = s0.x / (p.r - p.mu_x);
    let rhs = (p.c_b - p.c_a) / p.r + p.inv;
    let lhs = |t: T| (p.mu_y * t).exp() * a - (p.mu_x * t).exp() * b;
    if lhs(T::zero()) >= rhs {
        return Ok(T::zero());
    }
    if p.mu_y == p.mu_x && a <= b {
        return Ok(T::infinity());
    }
    let mut lo = T::zero();
    let mut hi = T::one();
    while lhs(hi) < rhs {
        lo = hi;
        hi = hi + hi;
        if !hi.is_finite() || !lhs(hi).is_finite() {
            return Ok(T::infinity());
        }
    }
    let tol: T = lit(1e-8);
    // f32 cannot resolve 1e-8 on large brackets; stop once the midpoint stalls
    while hi - lo > tol {
        let mid = lo + (hi - lo) * lit(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        if lhs(mid) >= rhs {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Time at which the leader payoff peaks: when `Y` reaches `y_bar`, or now
/// if it is already above.
pub fn det_attrition_start<T: Scalar>(
    s0: State<T>,
    p: &ModelParams<T>,
    k: &DerivedConstants<T>,
) -> Result<T, ModelError> {
    check_regime(s0, p)?;
    Ok(if s0.y < k.y_bar { (k.y_bar / s0.y).ln() / p.mu_y } else { T::zero() })
}

/// Whether the follower payoff still exceeds the leader payoff when the
/// leader payoff peaks, i.e. whether a war of attrition starts at all.
pub fn det_attrition_occurs<T: Scalar>(
    s0: State<T>,
    p: &ModelParams<T>,
    k: &DerivedConstants<T>,
) -> Result<bool, ModelError> {
    check_regime(s0, p)?;
    if s0.y >= k.y_bar {
        return Ok(!in_closed_preemption(s0.x, s0.y, k));
    }
    let lhs = k.y_bar / (p.r - p.mu_y) - (p.c_b - p.c_a) / p.r - p.inv;
    let rhs = s0.x / (p.r - p.mu_x) * (k.y_bar / s0.y).powf(p.mu_x / p.mu_y);
    Ok(lhs < rhs)
}

/// Equilibrium attrition hazard along the noiseless path.
#[derive(Debug, Clone, Copy)]
pub struct DetHazard<T> {
    pub s0: State<T>,
    pub t_bar: T,
    pub t_p: T,
    pub active: bool,
    p: ModelParams<T>,
    k: DerivedConstants<T>,
}

impl<T: Scalar> DetHazard<T> {
    pub fn new(s0: State<T>, p: &ModelParams<T>, k: &DerivedConstants<T>) -> Result<Self, ModelError> {
        let t_bar = det_attrition_start(s0, p, k)?;
        let t_p = det_preemption_time(s0, p, k)?;
        let active = t_bar < t_p && det_attrition_occurs(s0, p, k)?;
        Ok(Self { s0, t_bar, t_p, active, p: *p, k: *k })
    }

    /// `λ(t)`: zero before attrition starts, `+inf` from the preemption date on.
    pub fn rate(&self, t: T) -> T {
        if !self.active || t < self.t_bar {
            return T::zero();
        }
        if t >= self.t_p {
            return T::infinity();
        }
        let s = det_state(self.s0, t, &self.p);
        let denom = s.x / (self.p.r - self.p.mu_x) - (s.y - self.k.y_p) / (self.p.r - self.p.mu_y);
        if !(denom > T::zero()) {
            return T::infinity();
        }
        ((s.y - self.k.y_bar) / denom).max(T::zero())
    }

    /// `λ(t_p - w)` for finite `t_p`, with the `F - L` bracket expanded
    /// around `t_p` (where it vanishes) to avoid cancellation.
    fn rate_before_tp(&self, w: T) -> T {
        let (p, k) = (&self.p, &self.k);
        let sp = det_state(self.s0, self.t_p, p);
        let denom = sp.x / (p.r - p.mu_x) * (-p.mu_x * w).exp_m1() - sp.y / (p.r - p.mu_y) * (-p.mu_y * w).exp_m1();
        let y = sp.y * (-p.mu_y * w).exp();
        if !(denom > T::zero()) || y < k.y_bar {
            return if y < k.y_bar { T::zero() } else { T::infinity() };
        }
        (y - k.y_bar) / denom
    }

    /// `∫ λ` over `[a, b]`.
    pub fn integrate(&self, a: T, b: T) -> T {
        if !self.active {
            return T::zero();
        }
        let a = a.max(self.t_bar);
        if !(b > a) {
            return T::zero();
        }
        if b >= self.t_p {
            return T::infinity();
        }
        if self.t_p.is_finite() {
            // s = t_p - e^{-u} turns the 1/(t_p - s) blow-up into a bounded integrand
            let g = |u: T| {
                let w = (-u).exp();
                self.rate_before_tp(w) * w
            };
            let ua = -(self.t_p - a).ln();
            let ub = -(self.t_p - b).ln();
            simpson(&g, ua, ub)
        } else {
            simpson(&|t: T| self.rate(t), a, b)
        }
    }

    /// Cumulative hazard `Λ(t) = ∫_0^t λ`.
    pub fn cumulative(&self, t: T) -> T {
        self.integrate(T::zero(), t)
    }

    /// Smallest `t` with `Λ(t) >= theta`, if reached before `limit`.
    pub fn inverse(&self, theta: T, limit: T) -> Option<T> {
        if !self.active {
            return None;
        }
        let end = self.t_p.min(limit);
        if self.t_p > limit && self.cumulative(limit) < theta {
            return None;
        }
        // bisection on u = -ln(end - t), where Λ is close to linear
        let phi = |u: T| self.cumulative(end - (-u).exp());
        if theta <= T::zero() {
            return Some(self.t_bar);
        }
        let mut lo = -(end - self.t_bar).ln();
        let mut step = T::one();
        let mut hi = lo + step;
        while phi(hi) < theta {
            lo = hi;
            step = step + step;
            hi = hi + step;
            if end - (-hi).exp() >= end {
                return Some(end);
            }
        }
        for _ in 0..200 {
            let mid = lo + (hi - lo) * lit(0.5);
            if mid <= lo || mid >= hi || hi - lo < lit(1e-12) {
                break;
            }
            if phi(mid) >= theta {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(end - (-hi).exp())
    }
}

// Adaptive Simpson with a tolerance relative to the first estimate. The
// depth cap bounds the work where cancellation noise near the preemption
// date keeps the error estimate from settling.
fn simpson<T: Scalar>(f: &impl Fn(T) -> T, a: T, b: T) -> T {
    let m = (a + b) * lit(0.5);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / lit(6.0) * (fa + lit::<T>(4.0) * fm + fb);
    let rel = (T::epsilon() * lit(1e4)).max(lit(1e-11));
    let tol = rel * whole.abs().max(T::epsilon());
    adapt(f, a, b, fa, fm, fb, whole, tol, 20)
}

#[allow(clippy::too_many_arguments)]
fn adapt<T: Scalar>(f: &impl Fn(T) -> T, a: T, b: T, fa: T, fm: T, fb: T, whole: T, tol: T, depth: u32) -> T {
    let m = (a + b) * lit(0.5);
    let lm = (a + m) * lit(0.5);
    let rm = (m + b) * lit(0.5);
    let (flm, frm) = (f(lm), f(rm));
    let six: T = lit(6.0);
    let four: T = lit(4.0);
    let left = (m - a) / six * (fa + four * flm + fm);
    let right = (b - m) / six * (fm + four * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= lit::<T>(15.0) * tol {
        return left + right + delta / lit(15.0);
    }
    let half = tol * lit(0.5);
    adapt(f, a, m, fa, flm, fm, left, half, depth - 1) + adapt(f, m, b, fm, frm, fb, right, half, depth - 1)
}

/// One sample of the noiseless timeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HazardSample<T> {
    pub t: T,
    pub hazard: T,
    pub cumulative_hazard: T,
    pub l_t: T,
    pub f_t: T,
}

/// Key dates of the noiseless game plus the hazard sampled on a grid.
/// Infinite dates serialise as `null`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetTimeline<T> {
    pub t_bar: T,
    pub t_p: T,
    pub attrition_occurs: bool,
    pub hazard_curve: Vec<HazardSample<T>>,
}

/// Grid samples `t = 0, dt, …` strictly before `min(t_p, horizon)`.
pub fn det_timeline<T: Scalar>(
    s0: State<T>,
    p: &ModelParams<T>,
    k: &DerivedConstants<T>,
    dt: T,
    horizon: T,
) -> Result<DetTimeline<T>, ModelError> {
    check_grid(dt, horizon)?;
    let h = DetHazard::new(s0, p, k)?;
    let end = h.t_p.min(horizon);
    let mut curve = Vec::new();
    let mut cum = T::zero();
    let mut prev = T::zero();
    for i in 0..=grid_steps(horizon, dt) {
        let t = dt * count::<T>(i);
        if t >= end {
            break;
        }
        cum = cum + h.integrate(prev, t);
        prev = t;
        let s = det_state(s0, t, p);
        curve.push(HazardSample {
            t,
            hazard: h.rate(t),
            cumulative_hazard: cum,
            l_t: leader_value(t, s.y, p),
            f_t: follower_value(t, s.x, p),
        });
    }
    Ok(DetTimeline { t_bar: h.t_bar, t_p: h.t_p, attrition_occurs: h.active, hazard_curve: curve })
}

/// Plays the noiseless equilibrium once. Firm clocks come from
/// `streams.firms`, coin flips from `streams.tie`; `streams.path` is unused.
pub fn det_playout<T: Scalar>(
    s0: State<T>,
    p: &ModelParams<T>,
    k: &DerivedConstants<T>,
    opts: &GameOptions<T>,
    streams: &GameStreams,
) -> Result<(GameOutcome<T>, DetTimeline<T>), ModelError> {
    let timeline = det_timeline(s0, p, k, opts.dt, opts.horizon)?;
    let out = det_outcome(s0, p, k, opts, streams)?;
    Ok((out, timeline))
}

/// [`det_playout`] without the sampled timeline.
pub fn det_outcome<T: Scalar>(
    s0: State<T>,
    p: &ModelParams<T>,
    k: &DerivedConstants<T>,
    opts: &GameOptions<T>,
    streams: &GameStreams,
) -> Result<GameOutcome<T>, ModelError> {
    check_grid(opts.dt, opts.horizon)?;
    let h = DetHazard::new(s0, p, k)?;
    let mut tie_rng = streams.tie.rng();

    if h.active {
        let theta = [
            T::unit_exponential(&mut streams.firms[0].rng()),
            T::unit_exponential(&mut streams.firms[1].rng()),
        ];
        let taus = [h.inverse(theta[0], opts.horizon), h.inverse(theta[1], opts.horizon)];
        let first = match taus {
            [Some(a), Some(b)] if a == b => {
                Some(if T::unit_uniform(&mut tie_rng) < lit(0.5) { (0usize, a) } else { (1, b) })
            }
            [Some(a), Some(b)] => Some(if a < b { (0, a) } else { (1, b) }),
            [Some(a), None] => Some((0, a)),
            [None, Some(b)] => Some((1, b)),
            [None, None] => None,
        };
        if let Some((leader, tau)) = first {
            let st = det_state(s0, tau, p);
            let l = leader_value(tau, st.y, p);
            let fv = follower_value(tau, st.x, p);
            let (payoff_1, payoff_2) = if leader == 0 { (l, fv) } else { (fv, l) };
            return Ok(GameOutcome {
                mode: OutcomeMode::AttritionStop,
                stop_time: tau,
                stop_state: st,
                leader_id: Some(leader as u8 + 1),
                payoff_1,
                payoff_2,
                residual_mass: None,
                cum_hazard: theta[leader],
                attrition_time: tau - h.t_bar,
                capped_steps: 0,
            });
        }
    } else if h.t_p <= opts.horizon {
        let t = h.t_p;
        let st = det_state(s0, t, p);
        // on the line itself both intensities vanish and roles go by coin
        let alpha = preemption_intensity(st.x, st.y, p)?;
        let (_, role) = resolve_preemption(alpha, alpha, T::zero(), T::zero(), &mut tie_rng);
        let (mode, leader_id, payoff_1, payoff_2) = match role {
            PreemptionRole::LeaderI => {
                (OutcomeMode::PreemptionLeaderFollower, Some(1), leader_value(t, st.y, p), follower_value(t, st.x, p))
            }
            PreemptionRole::LeaderJ => {
                (OutcomeMode::PreemptionLeaderFollower, Some(2), follower_value(t, st.x, p), leader_value(t, st.y, p))
            }
            PreemptionRole::Simultaneous => {
                let m = simultaneous_value(t, p);
                (OutcomeMode::PreemptionSimultaneous, None, m, m)
            }
        };
        return Ok(GameOutcome {
            mode,
            stop_time: t,
            stop_state: st,
            leader_id,
            payoff_1,
            payoff_2,
            residual_mass: Some(T::one()),
            cum_hazard: T::zero(),
            attrition_time: T::zero(),
            capped_steps: 0,
        });
    }

    let nv = never_value(p);
    let t_end = opts.dt * count::<T>(grid_steps(opts.horizon, opts.dt));
    Ok(GameOutcome {
        mode: OutcomeMode::NoStopByHorizon,
        stop_time: t_end,
        stop_state: det_state(s0, t_end, p),
        leader_id: None,
        payoff_1: nv,
        payoff_2: nv,
        residual_mass: None,
        cum_hazard: h.cumulative(t_end.min(h.t_p)),
        attrition_time: if h.active { (t_end - h.t_bar).max(T::zero()) } else { T::zero() },
        capped_steps: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> (ModelParams<f64>, DerivedConstants<f64>) {
        let p = ModelParams::table1_deterministic();
        let k = DerivedConstants::new(&p).unwrap();
        (p, k)
    }

    #[test]
    fn equal_drift_preemption_date() {
        let (p, k) = base();
        let t = det_preemption_time(State::new(6.0, 8.0), &p, &k).unwrap();
        // 8/.06 - 6/.06 = 33.33 grows at .04 until it reaches 105
        let expect = (105.0f64 / (2.0 / 0.06)).ln() / 0.04;
        assert!((t - expect).abs() < 1e-7, "{t} vs {expect}");
        assert!((t - 28.69).abs() < 0.01);
    }

    #[test]
    fn preemption_date_edge_cases() {
        let (p, k) = base();
        assert_eq!(det_preemption_time(State::new(6.0, 20.0), &p, &k).unwrap(), 0.0);
        assert_eq!(det_preemption_time(State::new(8.0, 8.0), &p, &k).unwrap(), f64::INFINITY);
        assert_eq!(det_preemption_time(State::new(9.0, 8.0), &p, &k).unwrap(), f64::INFINITY);
        let bad = ModelParams { mu_x: 0.05, ..p };
        assert!(matches!(det_preemption_time(State::new(6.0, 8.0), &bad, &k), Err(ModelError::Unsupported(_))));
    }

    #[test]
    fn unequal_drift_root_is_crossing() {
        let p: ModelParams<f64> = ModelParams { mu_y: 0.06, mu_x: 0.02, ..ModelParams::table1_deterministic() };
        let k = DerivedConstants::new(&p).unwrap();
        let s0 = State::new(2.0, 4.0);
        let t = det_preemption_time(s0, &p, &k).unwrap();
        let s = det_state(s0, t, &p);
        assert!((s.y - k.preemption_line(s.x)).abs() < 1e-6);
        let before = det_state(s0, t - 1e-3, &p);
        assert!(before.y < k.preemption_line(before.x));
    }

    #[test]
    fn attrition_start_and_condition() {
        let (p, k) = base();
        let tb = det_attrition_start(State::new(6.0, 8.0), &p, &k).unwrap();
        assert!((tb - (11.5f64 / 8.0).ln() / 0.04).abs() < 1e-12);
        assert_eq!(det_attrition_start(State::new(6.0, 11.5), &p, &k).unwrap(), 0.0);
        assert_eq!(det_attrition_start(State::new(6.0, 13.0), &p, &k).unwrap(), 0.0);
        assert!(det_attrition_occurs(State::new(6.0, 8.0), &p, &k).unwrap());
        // 11.5/.06 = 191.7 > 105: the line is crossed before the peak
        assert!(!det_attrition_occurs(State::new(0.0, 8.0), &p, &k).unwrap());
        assert!(det_attrition_occurs(State::new(6.0, 12.0), &p, &k).unwrap());
        assert!(!det_attrition_occurs(State::new(6.0, 20.0), &p, &k).unwrap());
    }

    #[test]
    fn hazard_matches_closed_form_when_drifts_equal() {
        let (p, k) = base();
        let h = DetHazard::new(State::new(6.0, 8.0), &p, &k).unwrap();
        let t = 15.0;
        let g = (0.04f64 * t).exp();
        let expect = (8.0 * g - 11.5) / (6.0 * g / 0.06 - (8.0 * g - 6.3) / 0.06);
        assert!((h.rate(t) - expect).abs() < 1e-12);
        assert_eq!(h.rate(5.0), 0.0);
    }

    #[test]
    fn cumulative_matches_fine_trapezoid() {
        let (p, k) = base();
        let h = DetHazard::new(State::new(6.0, 8.0), &p, &k).unwrap();
        let (a, b) = (h.t_bar, 25.0);
        let n = 200_000;
        let dx = (b - a) / n as f64;
        let mut trap = 0.5 * (h.rate(a) + h.rate(b));
        for i in 1..n {
            trap += h.rate(a + i as f64 * dx);
        }
        trap *= dx;
        assert!((h.cumulative(b) - trap).abs() < 1e-6, "{} vs {trap}", h.cumulative(b));
    }

    #[test]
    fn inverse_round_trips() {
        let (p, k) = base();
        let h = DetHazard::new(State::new(6.0, 8.0), &p, &k).unwrap();
        for theta in [0.01, 0.3, 1.0, 4.0, 12.0] {
            let t = h.inverse(theta, 100.0).unwrap();
            assert!(t > h.t_bar && t < h.t_p);
            assert!((h.cumulative(t) - theta).abs() < 1e-7, "theta {theta}");
        }
    }

    #[test]
    fn playout_stops_by_attrition_in_window() {
        let (p, k) = base();
        let opts = GameOptions::new(0.01, 100.0);
        for i in 0..50 {
            let (o, tl) = det_playout(State::new(6.0, 8.0), &p, &k, &opts, &GameStreams::for_path(3, i)).unwrap();
            assert_eq!(o.mode, OutcomeMode::AttritionStop);
            assert!(o.stop_time > tl.t_bar && o.stop_time < tl.t_p);
            assert!(tl.attrition_occurs);
        }
    }

    #[test]
    fn timeline_is_nonnegative_and_monotone_after_peak() {
        let (p, k) = base();
        let tl = det_timeline(State::new(6.0, 8.0), &p, &k, 0.05, 100.0).unwrap();
        assert!(tl.hazard_curve.iter().all(|s| s.hazard >= 0.0 && s.hazard.is_finite()));
        assert!(tl.hazard_curve.last().unwrap().t < tl.t_p);
        let after: Vec<_> = tl.hazard_curve.iter().filter(|s| s.t > tl.t_bar).collect();
        assert!(after.windows(2).all(|w| w[1].hazard > w[0].hazard));
        assert!(after.windows(2).all(|w| w[1].cumulative_hazard >= w[0].cumulative_hazard));
    }

    #[test]
    fn leader_payoff_peaks_at_attrition_start() {
        let (p, _) = base();
        let s0 = State::new(6.0, 8.0);
        let tb = (11.5f64 / 8.0).ln() / 0.04;
        let l = |t: f64| leader_value(t, det_state(s0, t, &p).y, &p);
        let mut prev = l(0.0);
        let mut t = 0.1;
        while t < 40.0 {
            let cur = l(t);
            if t < tb - 0.05 {
                assert!(cur > prev, "not increasing at {t}");
            } else if t > tb + 0.05 {
                assert!(cur < prev, "not decreasing at {t}");
            }
            prev = cur;
            t += 0.1;
        }
    }

    #[test]
    fn growth_case_ends_in_preemption() {
        let p: ModelParams<f64> = ModelParams { mu_y: 0.06, mu_x: 0.02, ..ModelParams::table1_deterministic() };
        let k = DerivedConstants::new(&p).unwrap();
        let s0 = State::new(2.0, 4.0);
        let opts = GameOptions::new(0.01, 100.0);
        let (o, tl) = det_playout(s0, &p, &k, &opts, &GameStreams::for_path(1, 0)).unwrap();
        assert!(tl.t_bar >= tl.t_p);
        assert!(!tl.attrition_occurs);
        assert_eq!(o.mode, OutcomeMode::PreemptionLeaderFollower);
        assert!((o.stop_time - tl.t_p).abs() < 1e-12);
        assert!((o.payoff_1 - o.payoff_2).abs() < 1e-6);
    }

    #[test]
    fn start_in_preemption_resolves_immediately() {
        let (p, k) = base();
        let opts = GameOptions::new(0.01, 100.0);
        let o = det_outcome(State::new(6.0, 20.0), &p, &k, &opts, &GameStreams::for_path(1, 0)).unwrap();
        assert!(o.mode.is_preemption());
        assert_eq!(o.stop_time, 0.0);
    }
}
