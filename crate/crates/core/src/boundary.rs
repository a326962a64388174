//! The attrition/continuation boundary `b(x)` of the constrained leader
//! problem: evaluation, Monte Carlo residual of the zero-drift
//! characterisation, one-parameter calibration and the constrained value.
//!
//! The boundary is fitted inside the exponential family
//! `b(x) = y* - (y* - ȳ) exp(-γ (x - x̄))`, anchored at the point where the
//! zero-drift level `ȳ` meets the preemption line.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{
    follower_value, in_closed_preemption, in_preemption, leader_value, never_value,
    DerivedConstants, ModelParams,
};
use crate::paths::{check_grid, grid_steps, RngStream, State, Stepper};
use crate::scalar::{count, lit, Scalar};
use crate::stats::Estimate;
use crate::ModelError;

pub type ResidualEstimate<T> = Estimate<T>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryKind<T> {
    Exponential { gamma: T },
    /// `b ≡ y*`: the preemption constraint does not bind.
    ConstantYStar,
    /// `y* ≤ 0`: the continuation region is empty.
    Empty,
}

/// A boundary together with the constants it is anchored on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundarySpec<T> {
    pub kind: BoundaryKind<T>,
    pub y_star: T,
    pub y_bar: T,
    pub y_p: T,
    pub x_bar: T,
    pub slope: T,
}

impl<T: Scalar> BoundarySpec<T> {
    /// Exponential boundary with decay `gamma`. Requires `y_P < y*` and
    /// `ȳ > y_P`.
    pub fn exponential(
        _p: &ModelParams<T>,
        k: &DerivedConstants<T>,
        gamma: T,
    ) -> Result<Self, ModelError> {
        if !(gamma > T::zero()) || !gamma.is_finite() {
            return Err(ModelError::InvalidBoundary(format!("gamma must be positive, got {gamma}")));
        }
        if !exponential_regime(k) {
            return Err(ModelError::InvalidBoundary(format!(
                "exponential boundary needs y_P < y* and y_bar > y_P (y_P={}, y*={}, y_bar={})",
                k.y_p, k.y_star, k.y_bar
            )));
        }
        Ok(Self::with_kind(BoundaryKind::Exponential { gamma }, k))
    }

    /// The degenerate boundary `b ≡ y*` appropriate for `k`, used when the
    /// exponential family does not apply.
    pub fn degenerate(k: &DerivedConstants<T>) -> Self {
        let kind = if k.y_star <= T::zero() {
            BoundaryKind::Empty
        } else {
            BoundaryKind::ConstantYStar
        };
        Self::with_kind(kind, k)
    }

    /// Exponential with `gamma` when the regime allows it, the matching
    /// degenerate case otherwise.
    pub fn auto(k: &DerivedConstants<T>, gamma: T) -> Self {
        if exponential_regime(k) && gamma > T::zero() {
            Self::with_kind(BoundaryKind::Exponential { gamma }, k)
        } else {
            Self::degenerate(k)
        }
    }

    fn with_kind(kind: BoundaryKind<T>, k: &DerivedConstants<T>) -> Self {
        Self {
            kind,
            y_star: k.y_star,
            y_bar: k.y_bar,
            y_p: k.y_p,
            x_bar: k.x_bar.unwrap_or_else(T::zero),
            slope: k.slope,
        }
    }

    pub fn gamma(&self) -> Option<T> {
        match self.kind {
            BoundaryKind::Exponential { gamma } => Some(gamma),
            _ => None,
        }
    }

    /// `b(x)`. No clamping: bounds are checked at calibration time.
    #[inline]
    pub fn eval(&self, x: T) -> T {
        match self.kind {
            BoundaryKind::Exponential { gamma } => {
                self.y_star - (self.y_star - self.y_bar) * (-gamma * (x - self.x_bar)).exp()
            }
            BoundaryKind::ConstantYStar | BoundaryKind::Empty => self.y_star,
        }
    }

    /// Checks the structural bounds of the free boundary on `xs`:
    /// `min(y_P, y*) <= b <= y*`, `b >= min(ȳ, preemption line)` and
    /// monotonicity along the sorted grid.
    pub fn check_bounds(&self, xs: &[T]) -> BoundCheck {
        let mut xs: Vec<T> = xs.iter().copied().filter(|x| *x >= T::zero()).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
        let tol = lit::<T>(1e-9) * self.y_star.abs().max(T::one());
        let floor = self.y_p.min(self.y_star);
        let mut violations = Vec::new();
        let mut prev: Option<T> = None;
        for &x in &xs {
            let b = self.eval(x);
            let xf = x.to_f64().unwrap_or(f64::NAN);
            let bf = b.to_f64().unwrap_or(f64::NAN);
            if b < floor - tol {
                violations.push(BoundViolation { x: xf, b: bf, rule: BoundRule::BelowFloor });
            }
            if b > self.y_star + tol {
                violations.push(BoundViolation { x: xf, b: bf, rule: BoundRule::AboveYStar });
            }
            let lower = self.y_bar.min(self.y_p + x * self.slope);
            if matches!(self.kind, BoundaryKind::Exponential { .. }) && b < lower - tol {
                violations.push(BoundViolation { x: xf, b: bf, rule: BoundRule::BelowDriftOrLine });
            }
            if let Some(pb) = prev {
                if b < pb - tol {
                    violations.push(BoundViolation { x: xf, b: bf, rule: BoundRule::Decreasing });
                }
            }
            prev = Some(b);
        }
        BoundCheck { ok: violations.is_empty(), points: xs.len(), violations }
    }
}

/// Whether the exponential family is defined for these constants.
pub fn exponential_regime<T: Scalar>(k: &DerivedConstants<T>) -> bool {
    k.y_p < k.y_star && k.x_bar.is_some()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundRule {
    BelowFloor,
    AboveYStar,
    BelowDriftOrLine,
    Decreasing,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundViolation {
    pub x: f64,
    pub b: f64,
    pub rule: BoundRule,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub ok: bool,
    pub points: usize,
    pub violations: Vec<BoundViolation>,
}

/// Shared Monte Carlo settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McSettings<T> {
    pub n_paths: usize,
    pub dt: T,
    pub horizon: T,
    pub seed: u64,
}

impl<T: Scalar> McSettings<T> {
    pub fn new(n_paths: usize, dt: T, horizon: T, seed: u64) -> Self {
        Self { n_paths, dt, horizon, seed }
    }

    pub(crate) fn check(&self) -> Result<(), ModelError> {
        if self.n_paths == 0 {
            return Err(ModelError::InvalidGrid("n_paths must be at least 1".into()));
        }
        check_grid(self.dt, self.horizon)
    }
}

/// Monte Carlo estimate of
/// `E[∫₀^{τ_P ∧ τ_{y*}} 1{Y_t < b(X_t)} e^{-rt} (Y_t - ȳ) dt]` started on the
/// boundary at `(x0, b(x0))`.
///
/// Zero for the true boundary; positive where `b` is locally too high and
/// negative where it is too low. Path `i` uses stream `(seed, i)`, so two
/// calls with different boundaries share random numbers.
pub fn residual<T: Scalar>(
    b: &BoundarySpec<T>,
    x0: T,
    mc: &McSettings<T>,
    p: &ModelParams<T>,
    k: &DerivedConstants<T>,
) -> Result<ResidualEstimate<T>, ModelError> {
    mc.check()?;
    let s0 = State::new(x0, b.eval(x0));
    if !(x0 >= T::zero()) || !(s0.y >= T::zero()) {
        return Err(ModelError::InvalidState(format!("anchor ({}, {}) outside the quadrant", s0.x, s0.y)));
    }
    if in_preemption(s0.x, s0.y, k) {
        return Err(ModelError::StartInPreemption { x: f(s0.x), y: f(s0.y) });
    }
    let stepper = Stepper::new(p, mc.dt);
    let n_steps = grid_steps(mc.horizon, mc.dt);
    let disc_step = (-p.r * mc.dt).exp();
    let samples: Vec<T> = (0..mc.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::new(mc.seed, i).rng();
            let mut s = s0;
            let mut disc = T::one();
            let mut acc = T::zero();
            for _ in 0..n_steps {
                if in_closed_preemption(s.x, s.y, k) || s.y >= k.y_star {
                    break;
                }
                if s.y < b.eval(s.x) {
                    acc = acc + disc * (s.y - k.y_bar) * mc.dt;
                }
                s = stepper.advance(s, &mut rng);
                disc = disc * disc_step;
            }
            acc
        })
        .collect();
    Ok(Estimate::from_samples(&samples))
}

/// Expected constrained leader payoff from `s0` when stopping at the first
/// grid time in `{Y >= b(X)}` or in the closed preemption region.
///
/// Stopping in the attrition region pays `L(t, Y_t)`; reaching the
/// preemption region pays `F(t, X_t)`, which equals `L` on the line.
/// Paths that never stop before the horizon pay `-c0/r`.
pub fn constrained_value_mc<T: Scalar>(
    s0: State<T>,
    b: &BoundarySpec<T>,
    mc: &McSettings<T>,
    p: &ModelParams<T>,
    k: &DerivedConstants<T>,
) -> Result<Estimate<T>, ModelError> {
    mc.check()?;
    if in_preemption(s0.x, s0.y, k) {
        return Err(ModelError::StartInPreemption { x: f(s0.x), y: f(s0.y) });
    }
    let stepper = Stepper::new(p, mc.dt);
    let n_steps = grid_steps(mc.horizon, mc.dt);
    let samples: Vec<T> = (0..mc.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::new(mc.seed, i).rng();
            let mut s = s0;
            for step in 0..=n_steps {
                let t = mc.dt * count::<T>(step);
                if in_closed_preemption(s.x, s.y, k) {
                    return follower_value(t, s.x, p);
                }
                if s.y >= b.eval(s.x) {
                    return leader_value(t, s.y, p);
                }
                if step < n_steps {
                    s = stepper.advance(s, &mut rng);
                }
            }
            never_value(p)
        })
        .collect();
    Ok(Estimate::from_samples(&samples))
}

/// Closed-form value of the unconstrained leader problem (stop when `Y`
/// first reaches `y*`).
pub fn unconstrained_value<T: Scalar>(y0: T, p: &ModelParams<T>, k: &DerivedConstants<T>) -> T {
    if y0 >= k.y_star || k.y_star <= T::zero() {
        return leader_value(T::zero(), y0, p);
    }
    let gain = k.y_star / (p.r - p.mu_y) - (p.c_b - p.c0) / p.r - p.inv;
    never_value(p) + (y0 / k.y_star).powf(k.beta1) * gain
}

fn f<T: Scalar>(v: T) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

/// Inputs of [`calibrate_gamma`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationOptions<T> {
    pub x_grid: Vec<T>,
    pub mc: McSettings<T>,
    /// Absolute tolerance on γ for the golden-section refinement.
    pub tol: T,
    pub bracket: (T, T),
    /// Log-spaced points of the initial bracketing scan.
    pub scan_points: usize,
    /// Points of the uniform grid on `[0, max x_grid]` used for bound checks.
    pub bound_grid_points: usize,
    /// Relative offset below `b(x0)` for the continuation-vs-leader cross-check.
    pub cross_check_offset: T,
}

impl<T: Scalar> CalibrationOptions<T> {
    pub fn new(x_grid: Vec<T>, mc: McSettings<T>) -> Self {
        Self {
            x_grid,
            mc,
            tol: lit(1e-3),
            bracket: (lit(1e-4), lit(10.0)),
            scan_points: 16,
            bound_grid_points: 201,
            cross_check_offset: lit(0.02),
        }
    }

    fn bound_grid(&self) -> Vec<T> {
        let xmax = self.x_grid.iter().copied().fold(T::zero(), T::max);
        let n = self.bound_grid_points.max(2);
        let mut xs: Vec<T> = (0..n)
            .map(|i| xmax * count::<T>(i) / count::<T>(n - 1))
            .collect();
        xs.extend(self.x_grid.iter().copied());
        xs
    }
}

/// Residual at one anchor for the reported γ.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnchorResidual {
    pub x0: f64,
    pub y0: f64,
    /// False when `(x0, b(x0))` lies on or above the preemption line: the
    /// integral is then empty and the anchor carries no information.
    pub active: bool,
    pub residual: f64,
    pub stderr: f64,
    pub within_2se: bool,
    pub cross_check: Option<CrossCheck>,
}

/// Continuation value just below the boundary against the leader payoff
/// there; the continuation value should be (slightly) larger.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossCheck {
    pub y_start: f64,
    pub continuation: f64,
    pub stderr: f64,
    pub leader: f64,
    pub continuation_not_below_leader: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub gamma: f64,
    /// Search interval after removing γ values that break the bounds.
    pub search_bracket: (f64, f64),
    pub objective: f64,
    pub anchors: Vec<AnchorResidual>,
    pub bounds: BoundCheck,
    pub all_within_2se: bool,
    /// `(γ, objective)` for every evaluation, in evaluation order.
    pub trace: Vec<(f64, f64)>,
    pub n_paths: usize,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("exponential boundary not applicable: {0}")]
    NotApplicable(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("no gamma in [{lo}, {hi}] satisfies the boundary bounds")]
    NoFeasibleGamma { lo: f64, hi: f64 },
    #[error("calibration infeasible: best gamma {} leaves anchor residuals outside 2 stderr", .0.gamma)]
    Infeasible(Box<CalibrationReport>),
}

struct Evaluation<T> {
    objective: T,
    anchors: Vec<(bool, Estimate<T>)>,
}

/// Fits γ by driving the boundary residuals at `x_grid` to zero.
///
/// The objective is the sum of squared z-scores `(residual / stderr)²` over
/// anchors that start outside the preemption region. It is minimised by a
/// log-spaced scan followed by golden-section refinement; every evaluation
/// reuses the same random streams per anchor. γ values whose boundary
/// violates the structural bounds on `[0, max x_grid]` are excluded from the
/// search. Returns [`CalibrationError::Infeasible`] (carrying the full
/// report) when some anchor residual remains beyond two standard errors.
pub fn calibrate_gamma<T: Scalar>(
    opts: &CalibrationOptions<T>,
    p: &ModelParams<T>,
    k: &DerivedConstants<T>,
) -> Result<CalibrationReport, CalibrationError> {
    if !exponential_regime(k) {
        return Err(CalibrationError::NotApplicable(format!(
            "needs y_P < y* and y_bar > y_P (y_P={}, y*={}, y_bar={}); use the constant y* boundary",
            k.y_p, k.y_star, k.y_bar
        )));
    }
    if opts.x_grid.is_empty() {
        return Err(ModelError::InvalidBoundary("x_grid is empty".into()).into());
    }
    if opts.x_grid.iter().any(|x| !(*x >= T::zero()) || !x.is_finite()) {
        return Err(ModelError::InvalidBoundary("x_grid entries must be finite and >= 0".into()).into());
    }
    opts.mc.check()?;
    let (lo, hi) = opts.bracket;
    if !(lo > T::zero() && hi > lo) {
        return Err(ModelError::InvalidBoundary(format!("bad gamma bracket [{lo}, {hi}]")).into());
    }

    let bound_grid = opts.bound_grid();
    let bounds_ok = |g: T| BoundarySpec::auto(k, g).check_bounds(&bound_grid).ok;
    // b(x) falls in γ for x < x̄ and rises for x > x̄, so bound violations
    // only appear above some critical γ.
    if !bounds_ok(lo) {
        return Err(CalibrationError::NoFeasibleGamma { lo: f(lo), hi: f(hi) });
    }
    let hi_eff = if bounds_ok(hi) {
        hi
    } else {
        let (mut a, mut c) = (lo, hi);
        for _ in 0..100 {
            let m = (a * c).sqrt();
            if bounds_ok(m) {
                a = m;
            } else {
                c = m;
            }
            if c - a <= opts.tol * lit(1e-3) {
                break;
            }
        }
        a
    };

    let anchor_seeds: Vec<u64> = (0..opts.x_grid.len())
        .map(|i| RngStream::new(opts.mc.seed, i as u64).salted(0xA11C_u64).seed)
        .collect();
    let evaluate = |g: T| -> Result<Evaluation<T>, ModelError> {
        let b = BoundarySpec::auto(k, g);
        let mut anchors = Vec::with_capacity(opts.x_grid.len());
        let mut objective = T::zero();
        for (x0, seed) in opts.x_grid.iter().zip(&anchor_seeds) {
            let y0 = b.eval(*x0);
            if in_closed_preemption(*x0, y0, k) {
                anchors.push((false, Estimate { value: T::zero(), stderr: T::zero(), n_paths: 0 }));
                continue;
            }
            let mc = McSettings { seed: *seed, ..opts.mc };
            let est = residual(&b, *x0, &mc, p, k)?;
            let se = est.stderr.max(lit(1e-12));
            objective = objective + (est.value / se) * (est.value / se);
            anchors.push((true, est));
        }
        Ok(Evaluation { objective, anchors })
    };

    let mut trace: Vec<(T, T)> = Vec::new();
    let mut eval_j = |g: T| -> Result<T, ModelError> {
        let e = evaluate(g)?;
        trace.push((g, e.objective));
        Ok(e.objective)
    };

    // bracketing scan on a log grid
    let n_scan = opts.scan_points.max(3);
    let (llo, lhi) = (lo.ln(), hi_eff.ln());
    let grid: Vec<T> = (0..n_scan)
        .map(|i| (llo + (lhi - llo) * count::<T>(i) / count::<T>(n_scan - 1)).exp())
        .collect();
    let mut values = Vec::with_capacity(n_scan);
    for &g in &grid {
        values.push(eval_j(g)?);
    }
    let best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut a = grid[best.saturating_sub(1)];
    let mut c = grid[(best + 1).min(n_scan - 1)];

    // golden section on [a, c]
    let inv_phi: T = lit((5f64.sqrt() - 1.0) / 2.0);
    let mut x1 = c - inv_phi * (c - a);
    let mut x2 = a + inv_phi * (c - a);
    let mut f1 = eval_j(x1)?;
    let mut f2 = eval_j(x2)?;
    while c - a > opts.tol {
        if f1 <= f2 {
            c = x2;
            x2 = x1;
            f2 = f1;
            x1 = c - inv_phi * (c - a);
            f1 = eval_j(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (c - a);
            f2 = eval_j(x2)?;
        }
    }

    let (gamma, objective) = trace
        .iter()
        .copied()
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
        .expect("at least one evaluation");
    let final_eval = evaluate(gamma)?;
    let b = BoundarySpec::auto(k, gamma);
    let two: T = lit(2.0);
    let mut anchors = Vec::with_capacity(opts.x_grid.len());
    for ((x0, (active, est)), seed) in opts.x_grid.iter().zip(final_eval.anchors).zip(&anchor_seeds) {
        let y0 = b.eval(*x0);
        let within = !active || est.within(T::zero(), two);
        let cross_check = if active {
            let y_start = y0 * (T::one() - opts.cross_check_offset);
            let mc = McSettings { seed: *seed ^ 0xC0DE, ..opts.mc };
            let cont = constrained_value_mc(State::new(*x0, y_start), &b, &mc, p, k)?;
            let leader = leader_value(T::zero(), y_start, p);
            Some(CrossCheck {
                y_start: f(y_start),
                continuation: f(cont.value),
                stderr: f(cont.stderr),
                leader: f(leader),
                continuation_not_below_leader: cont.value >= leader - two * cont.stderr,
            })
        } else {
            None
        };
        anchors.push(AnchorResidual {
            x0: f(*x0),
            y0: f(y0),
            active,
            residual: f(est.value),
            stderr: f(est.stderr),
            within_2se: within,
            cross_check,
        });
    }
    let all_within_2se = anchors.iter().all(|a| a.within_2se);
    let report = CalibrationReport {
        gamma: f(gamma),
        search_bracket: (f(lo), f(hi_eff)),
        objective: f(objective),
        bounds: b.check_bounds(&bound_grid),
        anchors,
        all_within_2se,
        trace: trace.iter().map(|(g, j)| (f(*g), f(*j))).collect(),
        n_paths: opts.mc.n_paths,
        dt: f(opts.mc.dt),
        horizon: f(opts.mc.horizon),
        seed: opts.mc.seed,
    };
    if all_within_2se {
        Ok(report)
    } else {
        Err(CalibrationError::Infeasible(Box::new(report)))
    }
}
