//! Equilibrium play along simulated paths.
//!
//! Outside the preemption region both firms stop at the Markovian attrition
//! rate while the state is in the attrition region; each firm's stopping
//! time is realised by an exponential clock against its cumulative hazard.
//! On first reaching the (closed) preemption region the game is resolved by
//! the grab-the-dollar outcome probabilities.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::boundary::{BoundarySpec, McSettings};
use crate::model::{
    follower_value, in_closed_preemption, leader_value, never_value, simultaneous_value,
    DerivedConstants, ModelParams, Region,
};
use crate::paths::{grid_steps, RngStream, State, Stepper};
use crate::scalar::{count, lit, Scalar};
use crate::stats::{quantile_sorted, sorted, Estimate};
use crate::ModelError;

/// Equilibrium stopping rate of each firm at `(x, y)`: zero below the
/// boundary, otherwise the leader's negative drift divided by `F - L`.
///
/// Fails on or above the preemption line, where `F - L <= 0`.
pub fn attrition_rate<T: Scalar>(
    x: T,
    y: T,
    p: &ModelParams<T>,
    k: &DerivedConstants<T>,
    b: &BoundarySpec<T>,
) -> Result<T, ModelError> {
    let denom = x / (p.r - p.mu_x) - (y - k.y_p) / (p.r - p.mu_y);
    if !(denom > T::zero()) {
        return Err(ModelError::RateInPreemption { x: f(x), y: f(y) });
    }
    if y < b.eval(x) {
        return Ok(T::zero());
    }
    // nonnegative whenever b respects its lower bound; clamp otherwise
    Ok(((y - k.y_bar) / denom).max(T::zero()))
}

/// Symmetric grab intensity `(L - F) / (L - M)` where `L > F`, else zero.
/// The discount factors cancel, so the intensity does not depend on time.
pub fn preemption_intensity<T: Scalar>(x: T, y: T, p: &ModelParams<T>) -> Result<T, ModelError> {
    let lead = y / (p.r - p.mu_y) - (p.c_b - p.c0) / p.r - p.inv;
    let follow = x / (p.r - p.mu_x) - (p.c_a - p.c0) / p.r;
    if lead <= follow {
        return Ok(T::zero());
    }
    let lead_minus_sim = lead + p.inv;
    if !(lead_minus_sim > T::zero()) {
        return Err(ModelError::DegenerateIntensity { x: f(x), y: f(y) });
    }
    Ok(((lead - follow) / lead_minus_sim).min(T::one()))
}

/// Probability that firm `i` (intensity `a`) ends up sole leader when both
/// grab with constant intensities, conditional on the game being resolved.
pub fn mu_leader<T: Scalar>(a: T, b: T) -> T {
    a * (T::one() - b) / (a + b - a * b)
}

/// Probability of a simultaneous switch under intensities `a`, `b`.
pub fn mu_simultaneous<T: Scalar>(a: T, b: T) -> T {
    a * b / (a + b - a * b)
}

/// Unconditional outcome probabilities at the preemption time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OutcomeProbs<T> {
    pub lambda_l_i: T,
    pub lambda_l_j: T,
    pub lambda_m: T,
}

impl<T: Scalar> OutcomeProbs<T> {
    pub fn total(&self) -> T {
        self.lambda_l_i + self.lambda_l_j + self.lambda_m
    }

    /// Role given that the game reached the preemption time unstopped;
    /// `u` is uniform on `[0, 1)`.
    pub fn sample_role(&self, u: T) -> PreemptionRole {
        let m = self.total();
        if !(m > T::zero()) {
            return PreemptionRole::LeaderI;
        }
        let pi = self.lambda_l_i / m;
        let pj = self.lambda_l_j / m;
        if u < pi {
            PreemptionRole::LeaderI
        } else if u < pi + pj {
            PreemptionRole::LeaderJ
        } else {
            PreemptionRole::Simultaneous
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PreemptionRole {
    LeaderI,
    LeaderJ,
    Simultaneous,
}

/// Outcome probabilities for symmetric simultaneous grabbing with
/// intensities `alpha_i`, `alpha_j` when the firms have already stopped with
/// probabilities `g_i_minus`, `g_j_minus`.
///
/// With both intensities zero (the preemption line itself) the right-limit
/// case applies: each firm leads with half the surviving mass.
pub fn preemption_outcome<T: Scalar>(alpha_i: T, alpha_j: T, g_i_minus: T, g_j_minus: T) -> OutcomeProbs<T> {
    let m = (T::one() - g_i_minus) * (T::one() - g_j_minus);
    if alpha_i + alpha_j > T::zero() {
        OutcomeProbs {
            lambda_l_i: m * mu_leader(alpha_i, alpha_j),
            lambda_l_j: m * mu_leader(alpha_j, alpha_i),
            lambda_m: m * mu_simultaneous(alpha_i, alpha_j),
        }
    } else {
        let half: T = lit(0.5);
        OutcomeProbs { lambda_l_i: m * half, lambda_l_j: m * half, lambda_m: T::zero() }
    }
}

/// [`preemption_outcome`] plus a sampled role assignment.
pub fn resolve_preemption<T: Scalar, R: Rng + ?Sized>(
    alpha_i: T,
    alpha_j: T,
    g_i_minus: T,
    g_j_minus: T,
    rng: &mut R,
) -> (OutcomeProbs<T>, PreemptionRole) {
    let probs = preemption_outcome(alpha_i, alpha_j, g_i_minus, g_j_minus);
    let role = probs.sample_role(T::unit_uniform(rng));
    (probs, role)
}

/// Cumulative attrition hazards and exponential thresholds of both firms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HazardState<T> {
    pub cum_hazard: [T; 2],
    pub thresholds: [T; 2],
}

impl<T: Scalar> HazardState<T> {
    pub fn new(thresholds: [T; 2]) -> Self {
        Self { cum_hazard: [T::zero(); 2], thresholds }
    }

    /// Implied cumulative stopping probability `1 - exp(-Λ)` of firm `i`.
    pub fn g(&self, i: usize) -> T {
        T::one() - (-self.cum_hazard[i]).exp()
    }

    /// Fraction of a step with hazard increment `d` after which firm `i`'s
    /// clock rings, if it rings within the step.
    pub fn firing_fraction(&self, i: usize, d: T) -> Option<T> {
        let need = self.thresholds[i] - self.cum_hazard[i];
        (d > T::zero() && need <= d).then(|| (need / d).max(T::zero()))
    }

    pub fn advance(&mut self, d: T) {
        for h in &mut self.cum_hazard {
            *h = *h + d;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeMode {
    AttritionStop,
    PreemptionLeaderFollower,
    PreemptionSimultaneous,
    NoStopByHorizon,
}

impl OutcomeMode {
    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeMode::AttritionStop => "attrition_stop",
            OutcomeMode::PreemptionLeaderFollower => "preemption_leader_follower",
            OutcomeMode::PreemptionSimultaneous => "preemption_simultaneous",
            OutcomeMode::NoStopByHorizon => "no_stop_by_horizon",
        }
    }

    pub fn is_preemption(self) -> bool {
        matches!(self, OutcomeMode::PreemptionLeaderFollower | OutcomeMode::PreemptionSimultaneous)
    }
}

/// Terminal record of one equilibrium playout. Payoffs are discounted to
/// time zero; firms are numbered 1 and 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GameOutcome<T> {
    pub mode: OutcomeMode,
    pub stop_time: T,
    pub stop_state: State<T>,
    pub leader_id: Option<u8>,
    pub payoff_1: T,
    pub payoff_2: T,
    /// Probability `1 - G(τ_P-)` that a firm has not stopped before the
    /// preemption region was reached.
    pub residual_mass: Option<T>,
    pub cum_hazard: T,
    /// Time spent in the attrition region before the stop.
    pub attrition_time: T,
    pub capped_steps: u32,
}

impl<T: Scalar> GameOutcome<T> {
    pub fn mean_payoff(&self) -> T {
        (self.payoff_1 + self.payoff_2) * lit(0.5)
    }

    pub fn attrition_fraction(&self) -> T {
        if self.stop_time > T::zero() {
            self.attrition_time / self.stop_time
        } else {
            T::zero()
        }
    }
}

/// Independent streams used by one playout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GameStreams {
    pub path: RngStream,
    pub firms: [RngStream; 2],
    pub tie: RngStream,
}

impl GameStreams {
    pub fn for_path(seed: u64, index: u64) -> Self {
        let base = RngStream::new(seed, index);
        Self {
            path: base,
            firms: [base.salted(1), base.salted(2)],
            tie: base.salted(3),
        }
    }

    /// Same draws with the firm clocks exchanged.
    pub fn swap_firms(self) -> Self {
        Self { firms: [self.firms[1], self.firms[0]], ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GameOptions<T> {
    pub dt: T,
    pub horizon: T,
    /// Largest hazard increment accumulated in a single step.
    pub hazard_cap: T,
}

impl<T: Scalar> GameOptions<T> {
    pub fn new(dt: T, horizon: T) -> Self {
        Self { dt, horizon, hazard_cap: lit(50.0) }
    }
}

/// One grid point of a traced playout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePoint<T> {
    pub t: T,
    pub x: T,
    pub y: T,
    pub rate: T,
    pub cum_hazard: T,
    pub region: Region,
}

/// Plays the equilibrium from `s0` along one simulated path.
pub fn simulate_game<T: Scalar>(
    s0: State<T>,
    b: &BoundarySpec<T>,
    p: &ModelParams<T>,
    k: &DerivedConstants<T>,
    opts: &GameOptions<T>,
    streams: &GameStreams,
) -> Result<GameOutcome<T>, ModelError> {
    play(s0, b, p, k, opts, streams, |_| {})
}

/// [`simulate_game`] that also records the state, rate and cumulative hazard
/// at every grid time.
pub fn simulate_game_traced<T: Scalar>(
    s0: State<T>,
    b: &BoundarySpec<T>,
    p: &ModelParams<T>,
    k: &DerivedConstants<T>,
    opts: &GameOptions<T>,
    streams: &GameStreams,
) -> Result<(GameOutcome<T>, Vec<TracePoint<T>>), ModelError> {
    let mut trace = Vec::new();
    let out = play(s0, b, p, k, opts, streams, |pt| trace.push(pt))?;
    Ok((out, trace))
}

fn play<T: Scalar>(
    s0: State<T>,
    b: &BoundarySpec<T>,
    p: &ModelParams<T>,
    k: &DerivedConstants<T>,
    opts: &GameOptions<T>,
    streams: &GameStreams,
    mut observe: impl FnMut(TracePoint<T>),
) -> Result<GameOutcome<T>, ModelError> {
    if !(s0.x > T::zero() && s0.y > T::zero()) || !s0.x.is_finite() || !s0.y.is_finite() {
        return Err(ModelError::AxisStart { x: f(s0.x), y: f(s0.y) });
    }
    crate::paths::check_grid(opts.dt, opts.horizon)?;
    let n_steps = grid_steps(opts.horizon, opts.dt);
    let stepper = Stepper::new(p, opts.dt);
    let mut path_rng = streams.path.rng();
    let thresholds = [
        T::unit_exponential(&mut streams.firms[0].rng()),
        T::unit_exponential(&mut streams.firms[1].rng()),
    ];
    let mut tie_rng = streams.tie.rng();
    let mut hz = HazardState::new(thresholds);
    let mut attrition_time = T::zero();
    let mut capped_steps = 0u32;
    let mut s = s0;

    for i in 0..=n_steps {
        let t = opts.dt * count::<T>(i);
        if in_closed_preemption(s.x, s.y, k) {
            observe(TracePoint {
                t,
                x: s.x,
                y: s.y,
                rate: T::infinity(),
                cum_hazard: hz.cum_hazard[0],
                region: Region::Preemption,
            });
            let alpha = preemption_intensity(s.x, s.y, p)?;
            let (_, role) = resolve_preemption(alpha, alpha, hz.g(0), hz.g(1), &mut tie_rng);
            let (mode, leader_id, payoff_1, payoff_2) = match role {
                PreemptionRole::LeaderI => (
                    OutcomeMode::PreemptionLeaderFollower,
                    Some(1),
                    leader_value(t, s.y, p),
                    follower_value(t, s.x, p),
                ),
                PreemptionRole::LeaderJ => (
                    OutcomeMode::PreemptionLeaderFollower,
                    Some(2),
                    follower_value(t, s.x, p),
                    leader_value(t, s.y, p),
                ),
                PreemptionRole::Simultaneous => {
                    let m = simultaneous_value(t, p);
                    (OutcomeMode::PreemptionSimultaneous, None, m, m)
                }
            };
            return Ok(GameOutcome {
                mode,
                stop_time: t,
                stop_state: s,
                leader_id,
                payoff_1,
                payoff_2,
                residual_mass: Some(T::one() - hz.g(0)),
                cum_hazard: hz.cum_hazard[0],
                attrition_time,
                capped_steps,
            });
        }
        if i == n_steps {
            observe(trace_point(t, s, p, k, b, &hz));
            break;
        }
        let next = stepper.advance(s, &mut path_rng);
        // rate at the step midpoint; if the midpoint is already past the
        // preemption line the left end is the last state before entry
        let mid = s.lerp(next, lit(0.5));
        let h = if in_closed_preemption(mid.x, mid.y, k) { s } else { mid };
        let rate = attrition_rate(h.x, h.y, p, k, b)?;
        observe(TracePoint {
            t,
            x: s.x,
            y: s.y,
            rate,
            cum_hazard: hz.cum_hazard[0],
            region: crate::model::classify_region(s.x, s.y, k, b),
        });
        let in_attrition = h.y >= b.eval(h.x);
        if in_attrition {
            let mut d = rate * opts.dt;
            if d > opts.hazard_cap {
                d = opts.hazard_cap;
                capped_steps += 1;
            }
            let fire = [hz.firing_fraction(0, d), hz.firing_fraction(1, d)];
            let first = match fire {
                [Some(a), Some(c)] => {
                    if a < c {
                        Some((0usize, a))
                    } else if c < a {
                        Some((1, c))
                    } else {
                        let coin = T::unit_uniform(&mut tie_rng) < lit(0.5);
                        Some(if coin { (0, a) } else { (1, c) })
                    }
                }
                [Some(a), None] => Some((0, a)),
                [None, Some(c)] => Some((1, c)),
                [None, None] => None,
            };
            if let Some((leader, frac)) = first {
                let st = s.lerp(next, frac);
                let tau = t + frac * opts.dt;
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
                    cum_hazard: hz.cum_hazard[0] + frac * d,
                    attrition_time: attrition_time + frac * opts.dt,
                    capped_steps,
                });
            }
            hz.advance(d);
            attrition_time = attrition_time + opts.dt;
        }
        s = next;
    }

    let lv = never_value(p);
    Ok(GameOutcome {
        mode: OutcomeMode::NoStopByHorizon,
        stop_time: opts.dt * count::<T>(n_steps),
        stop_state: s,
        leader_id: None,
        payoff_1: lv,
        payoff_2: lv,
        residual_mass: None,
        cum_hazard: hz.cum_hazard[0],
        attrition_time,
        capped_steps,
    })
}

fn trace_point<T: Scalar>(
    t: T,
    s: State<T>,
    p: &ModelParams<T>,
    k: &DerivedConstants<T>,
    b: &BoundarySpec<T>,
    hz: &HazardState<T>,
) -> TracePoint<T> {
    let rate = attrition_rate(s.x, s.y, p, k, b).unwrap_or(T::infinity());
    TracePoint {
        t,
        x: s.x,
        y: s.y,
        rate,
        cum_hazard: hz.cum_hazard[0],
        region: crate::model::classify_region(s.x, s.y, k, b),
    }
}

/// Runs `mc.n_paths` independent playouts from `s0` in parallel. Path `i`
/// uses [`GameStreams::for_path`]`(mc.seed, i)`; results are in path order.
pub fn run_campaign<T: Scalar>(
    s0: State<T>,
    b: &BoundarySpec<T>,
    p: &ModelParams<T>,
    k: &DerivedConstants<T>,
    mc: &McSettings<T>,
    hazard_cap: T,
) -> Result<Vec<GameOutcome<T>>, ModelError> {
    mc.check()?;
    let opts = GameOptions { dt: mc.dt, horizon: mc.horizon, hazard_cap };
    (0..mc.n_paths as u64)
        .into_par_iter()
        .map(|i| simulate_game(s0, b, p, k, &opts, &GameStreams::for_path(mc.seed, i)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScatterPoint {
    pub x: f64,
    pub y: f64,
    pub mode: OutcomeMode,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotRange {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

/// Summary of a simulation campaign.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub n_paths: usize,
    pub share_preemption: f64,
    pub share_attrition: f64,
    pub share_nostop: f64,
    /// Part of `share_preemption` that ended in a simultaneous switch.
    pub share_preemption_simultaneous: f64,
    /// Paths that spent positive time in the attrition region before stopping.
    pub share_visited_attrition: f64,
    pub mean_time_in_attrition_fraction: f64,
    pub mean_equilibrium_value: f64,
    pub equilibrium_value_stderr: f64,
    pub firm1_value: f64,
    pub firm1_value_stderr: f64,
    pub immediate_investment_value: f64,
    pub mean_residual_mass: Option<f64>,
    pub min_residual_mass: Option<f64>,
    pub median_stop_time: f64,
    pub share_hazard_capped: f64,
    /// 1st–99th percentile box of the scatter, for display only.
    pub plot_range_hint: Option<PlotRange>,
    pub scatter: Vec<ScatterPoint>,
}

/// Aggregates playouts started from `s0`.
pub fn aggregate<T: Scalar>(
    outcomes: &[GameOutcome<T>],
    p: &ModelParams<T>,
    s0: State<T>,
) -> Result<SimulationReport, ModelError> {
    if outcomes.is_empty() {
        return Err(ModelError::InvalidGrid("cannot aggregate an empty outcome list".into()));
    }
    let n = outcomes.len();
    let share = |pred: &dyn Fn(&GameOutcome<T>) -> bool| {
        outcomes.iter().filter(|o| pred(o)).count() as f64 / n as f64
    };
    let share_preemption = share(&|o| o.mode.is_preemption());
    let share_attrition = share(&|o| o.mode == OutcomeMode::AttritionStop);
    // complement keeps the three shares summing to one exactly
    let share_nostop = 1.0 - share_preemption - share_attrition;
    let fracs: Vec<T> = outcomes.iter().map(|o| o.attrition_fraction()).collect();
    let values: Vec<T> = outcomes.iter().map(|o| o.mean_payoff()).collect();
    let firm1: Vec<T> = outcomes.iter().map(|o| o.payoff_1).collect();
    let v = Estimate::from_samples(&values);
    let v1 = Estimate::from_samples(&firm1);
    let masses: Vec<T> = outcomes.iter().filter_map(|o| o.residual_mass).collect();
    let stop_times = sorted(outcomes.iter().map(|o| o.stop_time));
    let scatter: Vec<ScatterPoint> = outcomes
        .iter()
        .filter(|o| o.mode != OutcomeMode::NoStopByHorizon)
        .map(|o| ScatterPoint { x: f(o.stop_state.x), y: f(o.stop_state.y), mode: o.mode })
        .collect();
    let plot_range_hint = (!scatter.is_empty()).then(|| {
        let xs = sorted(scatter.iter().map(|s| s.x));
        let ys = sorted(scatter.iter().map(|s| s.y));
        PlotRange {
            x: (quantile_sorted(&xs, 0.01), quantile_sorted(&xs, 0.99)),
            y: (quantile_sorted(&ys, 0.01), quantile_sorted(&ys, 0.99)),
        }
    });
    Ok(SimulationReport {
        n_paths: n,
        share_preemption,
        share_attrition,
        share_nostop,
        share_preemption_simultaneous: share(&|o| o.mode == OutcomeMode::PreemptionSimultaneous),
        share_visited_attrition: share(&|o| o.attrition_time > T::zero()),
        mean_time_in_attrition_fraction: f(Estimate::from_samples(&fracs).value),
        mean_equilibrium_value: f(v.value),
        equilibrium_value_stderr: f(v.stderr),
        firm1_value: f(v1.value),
        firm1_value_stderr: f(v1.stderr),
        immediate_investment_value: f(leader_value(T::zero(), s0.y, p)),
        mean_residual_mass: (!masses.is_empty()).then(|| f(Estimate::from_samples(&masses).value)),
        min_residual_mass: masses.iter().copied().reduce(T::min).map(f),
        median_stop_time: f(quantile_sorted(&stop_times, lit(0.5))),
        share_hazard_capped: share(&|o| o.capped_steps > 0),
        plot_range_hint,
        scatter,
    })
}

fn f<T: Scalar>(v: T) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn setup() -> (ModelParams<f64>, DerivedConstants<f64>, BoundarySpec<f64>) {
        let p = ModelParams::table1();
        let k = DerivedConstants::new(&p).unwrap();
        let b = BoundarySpec::exponential(&p, &k, 0.0984).unwrap();
        (p, k, b)
    }

    #[test]
    fn attrition_rate_examples() {
        let (p, k, b) = setup();
        // (12 - 11.5) / (100 - 95)
        assert!((attrition_rate(6.0, 12.0, &p, &k, &b).unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(attrition_rate(6.0, 8.0, &p, &k, &b).unwrap(), 0.0);
        let near = attrition_rate(6.0, 12.3 - 1e-9, &p, &k, &b).unwrap();
        assert!(near > 1e6);
        assert!(attrition_rate(6.0, 12.3, &p, &k, &b).is_err());
        assert!(attrition_rate(6.0, 14.0, &p, &k, &b).is_err());
    }

    #[test]
    fn intensity_examples() {
        let (p, k, _) = setup();
        assert!(preemption_intensity(6.0, k.preemption_line(6.0), &p).unwrap() < 1e-12);
        let a = preemption_intensity(6.0, 14.0, &p).unwrap();
        let expected = (83.333_333_333_333_33 - 55.0) / (83.333_333_333_333_33 + 135.0);
        assert!((a - expected).abs() < 1e-12);
        assert!((a - 0.1298).abs() < 1e-4);
        assert_eq!(preemption_intensity(6.0, 8.0, &p).unwrap(), 0.0);
    }

    #[test]
    fn outcome_probability_cases() {
        let o = preemption_outcome(0.0f64, 0.0, 0.0, 0.0);
        assert_eq!((o.lambda_l_i, o.lambda_l_j, o.lambda_m), (0.5, 0.5, 0.0));
        let a = 0.129_770_992_366_412_2f64;
        let o = preemption_outcome(a, a, 0.0, 0.0);
        assert!((o.lambda_m - a / (2.0 - a)).abs() < 1e-12);
        assert!((o.lambda_l_i - (1.0 - a) / (2.0 - a)).abs() < 1e-12);
        assert!((o.lambda_m - 0.0694).abs() < 1e-4);
        assert!((o.lambda_l_i - 0.4653).abs() < 1e-4);
        let o = preemption_outcome(1.0, 0.5, 0.0, 0.0);
        assert_eq!((o.lambda_l_i, o.lambda_l_j, o.lambda_m), (0.5, 0.0, 0.5));
        let o = preemption_outcome(0.0f64, 0.0, 0.2, 0.3);
        assert!((o.total() - 0.56).abs() < 1e-15);
    }

    #[test]
    fn role_sampling_frequencies() {
        let o = preemption_outcome(0.3, 0.3, 0.1, 0.1);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let n = 200_000;
        let mut sim = 0;
        for _ in 0..n {
            if o.sample_role(rng.random::<f64>()) == PreemptionRole::Simultaneous {
                sim += 1;
            }
        }
        let expect = 0.3 / 1.7;
        let se = (expect * (1.0 - expect) / n as f64).sqrt();
        assert!(((sim as f64 / n as f64) - expect).abs() < 4.0 * se);
    }

    #[test]
    fn hazard_state_basics() {
        let mut h = HazardState::new([0.5, 2.0]);
        assert_eq!(h.g(0), 0.0);
        assert_eq!(h.firing_fraction(0, 0.25), None);
        assert_eq!(h.firing_fraction(0, 1.0), Some(0.5));
        h.advance(0.3);
        assert!((h.g(1) - (1.0 - f64::exp(-0.3))).abs() < 1e-15);
        assert!((h.firing_fraction(0, 0.4).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn start_inside_preemption_resolves_immediately() {
        let (p, k, b) = setup();
        let opts = GameOptions::new(0.01, 10.0);
        let n = 40_000;
        let mut sim = 0usize;
        for i in 0..n {
            let o = simulate_game(State::new(6.0, 14.0), &b, &p, &k, &opts, &GameStreams::for_path(1, i)).unwrap();
            assert!(o.mode.is_preemption());
            assert_eq!(o.stop_time, 0.0);
            assert_eq!(o.residual_mass, Some(1.0));
            if o.mode == OutcomeMode::PreemptionSimultaneous {
                sim += 1;
                assert_eq!(o.payoff_1, -135.0);
            }
        }
        let a = preemption_intensity(6.0, 14.0, &p).unwrap();
        let expect = a / (2.0 - a);
        let se = (expect * (1.0 - expect) / n as f64).sqrt();
        assert!((sim as f64 / n as f64 - expect).abs() < 4.0 * se, "{sim}");
    }

    #[test]
    fn axis_start_rejected() {
        let (p, k, b) = setup();
        let opts = GameOptions::new(0.01, 10.0);
        let r = simulate_game(State::new(0.0, 8.0), &b, &p, &k, &opts, &GameStreams::for_path(1, 0));
        assert!(matches!(r, Err(ModelError::AxisStart { .. })));
    }

    #[test]
    fn playout_is_deterministic_and_consistent() {
        let (p, k, b) = setup();
        let opts = GameOptions::new(0.01, 100.0);
        let s = GameStreams::for_path(11, 5);
        let a = simulate_game(State::new(6.0, 8.0), &b, &p, &k, &opts, &s).unwrap();
        let (c, trace) = simulate_game_traced(State::new(6.0, 8.0), &b, &p, &k, &opts, &s).unwrap();
        assert_eq!(a, c);
        assert!(!trace.is_empty());
        assert!(trace.windows(2).all(|w| w[1].cum_hazard >= w[0].cum_hazard));
        assert!(a.stop_time >= 0.0 && a.attrition_time <= a.stop_time + 1e-12);
    }

    #[test]
    fn aggregate_single_outcome() {
        let (p, k, b) = setup();
        let opts = GameOptions::new(0.01, 10.0);
        let o = simulate_game(State::new(6.0, 14.0), &b, &p, &k, &opts, &GameStreams::for_path(1, 0)).unwrap();
        let r = aggregate(&[o], &p, State::new(6.0, 14.0)).unwrap();
        assert_eq!(r.share_preemption, 1.0);
        assert_eq!(r.share_attrition, 0.0);
        assert_eq!(r.share_nostop, 0.0);
        assert_eq!(r.scatter.len(), 1);
        assert!(aggregate::<f64>(&[], &p, State::new(6.0, 8.0)).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn outcome_sum_identity(ai in 0.0f64..=1.0, aj in 0.0f64..=1.0, gi in 0.0f64..=1.0, gj in 0.0f64..=1.0) {
                let o = preemption_outcome(ai, aj, gi, gj);
                let m = (1.0 - gi) * (1.0 - gj);
                prop_assert!((o.total() - m).abs() <= 1e-12);
                for v in [o.lambda_l_i, o.lambda_l_j, o.lambda_m] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }

            #[test]
            fn intensity_in_unit_interval(x in 0.0f64..50.0, y in 0.0f64..80.0) {
                let p = ModelParams::<f64>::table1();
                let a = preemption_intensity(x, y, &p).unwrap();
                prop_assert!((0.0..=1.0).contains(&a));
            }
        }
    }
}
