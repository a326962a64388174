//! Economic primitives of the duopoly switching game: parameters, the closed-form
//! thresholds derived from them, the three payoff processes and the
//! preemption / attrition / continuation partition of the state space.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::boundary::BoundarySpec;
use crate::scalar::{lit, Scalar};
use crate::ModelError;

/// Drift, volatility and cost primitives of the game.
///
/// Field names follow the flat config keys (`mu_x`, `mu_y`, `sigma_x`,
/// `sigma_y`, `rho`, `r`, `c0`, `cA`, `cB`, `I`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T> {
    pub mu_x: T,
    pub mu_y: T,
    pub sigma_x: T,
    pub sigma_y: T,
    pub rho: T,
    pub r: T,
    pub c0: T,
    #[serde(rename = "cA")]
    pub c_a: T,
    #[serde(rename = "cB")]
    pub c_b: T,
    #[serde(rename = "I")]
    pub inv: T,
}

impl<T: Scalar> ModelParams<T> {
    /// Base case used throughout the numerical study.
    pub fn table1() -> Self {
        Self {
            mu_x: lit(0.04),
            mu_y: lit(0.04),
            sigma_x: lit(0.25),
            sigma_y: lit(0.25),
            rho: lit(0.4),
            r: lit(0.1),
            c0: lit(3.5),
            c_a: lit(4.5),
            c_b: lit(5.0),
            inv: lit(100.0),
        }
    }

    /// Same economics with both volatilities switched off.
    pub fn table1_deterministic() -> Self {
        Self {
            sigma_x: T::zero(),
            sigma_y: T::zero(),
            ..Self::table1()
        }
    }

    pub fn is_deterministic(&self) -> bool {
        self.sigma_x == T::zero() && self.sigma_y == T::zero()
    }

    pub fn dynamics(&self) -> Dynamics {
        if self.is_deterministic() {
            Dynamics::Deterministic
        } else {
            Dynamics::Stochastic
        }
    }

    /// Checks every standing assumption and returns all violations found.
    pub fn validate(&self, dynamics: Dynamics) -> Result<(), Vec<Violation>> {
        let mut out = Vec::new();
        let vals = [
            self.mu_x, self.mu_y, self.sigma_x, self.sigma_y, self.rho, self.r, self.c0,
            self.c_a, self.c_b, self.inv,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            out.push(Violation::NonFinite);
        }
        let ceiling = T::zero().max(self.mu_x).max(self.mu_y);
        if !(self.r > ceiling) {
            out.push(Violation::DiscountRate {
                r: f(self.r),
                mu_x: f(self.mu_x),
                mu_y: f(self.mu_y),
            });
        }
        match dynamics {
            Dynamics::Stochastic => {
                if !(self.sigma_x > T::zero()) {
                    out.push(Violation::Volatility { name: "sigma_x", value: f(self.sigma_x) });
                }
                if !(self.sigma_y > T::zero()) {
                    out.push(Violation::Volatility { name: "sigma_y", value: f(self.sigma_y) });
                }
                if !(self.rho.abs() < T::one()) {
                    out.push(Violation::Correlation { rho: f(self.rho) });
                }
            }
            Dynamics::Deterministic => {
                if self.sigma_x != T::zero() || self.sigma_y != T::zero() {
                    out.push(Violation::NotDeterministic {
                        sigma_x: f(self.sigma_x),
                        sigma_y: f(self.sigma_y),
                    });
                }
            }
        }
        let follower_gap = (self.c0 - self.c_a) / self.r + self.inv;
        if !(follower_gap >= T::zero()) {
            out.push(Violation::FollowerBelowSimultaneous { value: f(follower_gap) });
        }
        let switch_cost = (self.c_b - self.c_a) / self.r + self.inv;
        if !(switch_cost >= T::zero()) {
            out.push(Violation::NegativeSwitchCost { value: f(switch_cost) });
        }
        if out.is_empty() {
            Ok(())
        } else {
            Err(out)
        }
    }
}

fn f<T: Scalar>(v: T) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

/// Whether the profit processes carry noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dynamics {
    Stochastic,
    Deterministic,
}

/// One violated assumption, with the offending values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    NonFinite,
    DiscountRate { r: f64, mu_x: f64, mu_y: f64 },
    Volatility { name: &'static str, value: f64 },
    Correlation { rho: f64 },
    NotDeterministic { sigma_x: f64, sigma_y: f64 },
    FollowerBelowSimultaneous { value: f64 },
    NegativeSwitchCost { value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonFinite => write!(f, "all parameters must be finite"),
            Violation::DiscountRate { r, mu_x, mu_y } => write!(
                f,
                "r > max(0,mu_x,mu_y) violated: r={r}, mu_x={mu_x}, mu_y={mu_y}"
            ),
            Violation::Volatility { name, value } => write!(f, "{name} > 0 violated: {name}={value}"),
            Violation::Correlation { rho } => write!(f, "|rho|<1 violated: rho={rho}"),
            Violation::NotDeterministic { sigma_x, sigma_y } => write!(
                f,
                "deterministic mode needs sigma_x = sigma_y = 0: sigma_x={sigma_x}, sigma_y={sigma_y}"
            ),
            Violation::FollowerBelowSimultaneous { value } => {
                write!(f, "(c0-cA)/r + I >= 0 violated: value={value}")
            }
            Violation::NegativeSwitchCost { value } => {
                write!(f, "(cB-cA)/r + I >= 0 violated: value={value}")
            }
        }
    }
}

/// Thresholds that follow in closed form from [`ModelParams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedConstants<T> {
    /// Root of the fundamental quadratic exceeding one.
    pub beta1: T,
    /// Unconstrained leader threshold.
    pub y_star: T,
    /// Intercept of the preemption line at `x = 0`.
    pub y_p: T,
    /// Level where the leader payoff has zero drift.
    pub y_bar: T,
    /// Abscissa of `(x_bar, y_bar)` on the preemption line; only when `y_bar > y_p`.
    pub x_bar: Option<T>,
    /// Slope `(r - mu_y) / (r - mu_x)` of the preemption line.
    pub slope: T,
}

impl<T: Scalar> DerivedConstants<T> {
    /// Validates `p` (stochastic or deterministic, inferred from the
    /// volatilities) and computes the thresholds.
    pub fn new(p: &ModelParams<T>) -> Result<Self, ModelError> {
        p.validate(p.dynamics()).map_err(ModelError::InvalidParams)?;
        let beta1 = positive_root(p);
        let net_switch = p.inv + (p.c_b - p.c0) / p.r;
        let y_star = if beta1.is_infinite() {
            (p.r - p.mu_y) * net_switch
        } else {
            beta1 / (beta1 - T::one()) * (p.r - p.mu_y) * net_switch
        };
        let y_p = (p.r - p.mu_y) * ((p.c_b - p.c_a) / p.r + p.inv);
        let y_bar = p.c_b - p.c0 + p.r * p.inv;
        let x_bar = (y_bar > y_p).then(|| (y_bar - y_p) * (p.r - p.mu_x) / (p.r - p.mu_y));
        Ok(Self {
            beta1,
            y_star,
            y_p,
            y_bar,
            x_bar,
            slope: (p.r - p.mu_y) / (p.r - p.mu_x),
        })
    }

    /// Y-level of the preemption line at `x`.
    #[inline]
    pub fn preemption_line(&self, x: T) -> T {
        self.y_p + x * self.slope
    }
}

/// Fundamental quadratic `½σ²β(β−1) + μβ − r`.
pub fn quadratic<T: Scalar>(p: &ModelParams<T>, beta: T) -> T {
    let half: T = lit(0.5);
    half * p.sigma_y * p.sigma_y * beta * (beta - T::one()) + p.mu_y * beta - p.r
}

// Stable root selection: with a > 0 and c = -r < 0 the roots have opposite
// signs, so exactly one is positive. Without noise the quadratic is linear.
fn positive_root<T: Scalar>(p: &ModelParams<T>) -> T {
    let half: T = lit(0.5);
    let a = half * p.sigma_y * p.sigma_y;
    let b = p.mu_y - a;
    let c = -p.r;
    if a == T::zero() {
        return if b > T::zero() { -c / b } else { T::infinity() };
    }
    let disc = (b * b - lit::<T>(4.0) * a * c).sqrt();
    if b >= T::zero() {
        // q = -(b + disc)/2 < 0, positive root c/q
        lit::<T>(2.0) * c / (-(b + disc))
    } else {
        (disc - b) / (lit::<T>(2.0) * a)
    }
}

/// Leader payoff `L(t, y)`, discounted to time zero.
#[inline]
pub fn leader_value<T: Scalar>(t: T, y: T, p: &ModelParams<T>) -> T {
    -p.c0 / p.r + (-p.r * t).exp() * (y / (p.r - p.mu_y) - (p.c_b - p.c0) / p.r - p.inv)
}

/// Follower payoff `F(t, x)`.
#[inline]
pub fn follower_value<T: Scalar>(t: T, x: T, p: &ModelParams<T>) -> T {
    -p.c0 / p.r + (-p.r * t).exp() * (x / (p.r - p.mu_x) - (p.c_a - p.c0) / p.r)
}

/// Payoff `M(t)` when both firms switch at once.
#[inline]
pub fn simultaneous_value<T: Scalar>(t: T, p: &ModelParams<T>) -> T {
    -p.c0 / p.r - (-p.r * t).exp() * p.inv
}

/// Value if nobody ever switches.
#[inline]
pub fn never_value<T: Scalar>(p: &ModelParams<T>) -> T {
    -p.c0 / p.r
}

/// Open preemption region: the leader payoff strictly exceeds the follower's.
#[inline]
pub fn in_preemption<T: Scalar>(x: T, y: T, k: &DerivedConstants<T>) -> bool {
    y > k.preemption_line(x)
}

/// Closure of the preemption region (includes the line itself).
#[inline]
pub fn in_closed_preemption<T: Scalar>(x: T, y: T, k: &DerivedConstants<T>) -> bool {
    y >= k.preemption_line(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Preemption,
    Attrition,
    Continuation,
}

impl Region {
    pub fn as_str(self) -> &'static str {
        match self {
            Region::Preemption => "preemption",
            Region::Attrition => "attrition",
            Region::Continuation => "continuation",
        }
    }
}

/// Classifies a state. The preemption line itself belongs to the attrition
/// region, since first entry into the open set is what ends the game.
pub fn classify_region<T: Scalar>(x: T, y: T, k: &DerivedConstants<T>, b: &BoundarySpec<T>) -> Region {
    if in_preemption(x, y, k) {
        Region::Preemption
    } else if y >= b.eval(x) || in_closed_preemption(x, y, k) {
        Region::Attrition
    } else {
        Region::Continuation
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::BoundarySpec;

    fn table1() -> (ModelParams<f64>, DerivedConstants<f64>) {
        let p = ModelParams::table1();
        let k = DerivedConstants::new(&p).unwrap();
        (p, k)
    }

    #[test]
    fn table1_is_valid() {
        let p = ModelParams::<f64>::table1();
        assert!(p.validate(Dynamics::Stochastic).is_ok());
        assert!(ModelParams::<f64>::table1_deterministic()
            .validate(Dynamics::Deterministic)
            .is_ok());
    }

    #[test]
    fn discount_rate_at_drift_is_rejected() {
        let p = ModelParams { r: 0.04, ..ModelParams::<f64>::table1() };
        let v = p.validate(Dynamics::Stochastic).unwrap_err();
        assert!(matches!(v[0], Violation::DiscountRate { .. }), "{v:?}");
        assert!(v[0].to_string().contains("r > max(0,mu_x,mu_y)"));
    }

    #[test]
    fn perfect_correlation_is_rejected() {
        let p = ModelParams { rho: 1.0, ..ModelParams::<f64>::table1() };
        let v = p.validate(Dynamics::Stochastic).unwrap_err();
        assert_eq!(v, vec![Violation::Correlation { rho: 1.0 }]);
        assert!(v[0].to_string().contains("|rho|<1"));
    }

    #[test]
    fn all_violations_reported() {
        let p = ModelParams {
            r: 0.01,
            sigma_x: 0.0,
            c_b: -100.0,
            ..ModelParams::<f64>::table1()
        };
        let v = p.validate(Dynamics::Stochastic).unwrap_err();
        assert_eq!(v.len(), 3, "{v:?}");
    }

    #[test]
    fn derived_constants_table1() {
        let (p, k) = table1();
        assert!((k.y_star - 17.45).abs() < 0.01, "{}", k.y_star);
        // β₁ = (-0.00875 + sqrt(0.00875² + 4·0.03125·0.1)) / 0.0625
        let beta_ref = (-0.00875 + (0.00875f64.powi(2) + 0.0125).sqrt()) / 0.0625;
        assert!((k.beta1 - beta_ref).abs() < 1e-12);
        assert!((k.beta1 - 1.6543).abs() < 1e-4);
        assert!(quadratic(&p, k.beta1).abs() < 1e-12);
        assert!((k.y_p - 6.3).abs() < 1e-12);
        assert!((k.y_bar - 11.5).abs() < 1e-12);
        assert!((k.x_bar.unwrap() - 5.2).abs() < 1e-12);
        assert!(k.y_star > k.y_p);
    }

    #[test]
    fn zero_net_switch_cost_gives_zero_thresholds() {
        // cB = c0 - rI makes I + (cB - c0)/r vanish
        let p = ModelParams { c_b: 3.5 - 10.0, c_a: -20.0, ..ModelParams::<f64>::table1() };
        let k = DerivedConstants::new(&p).unwrap();
        assert!(k.y_star.abs() < 1e-12);
        assert!(k.y_bar.abs() < 1e-12);
    }

    #[test]
    fn x_bar_absent_when_y_bar_below_y_p() {
        // large c0 pushes y_bar = cB - c0 + rI under y_p
        let p = ModelParams { c0: 12.0, ..ModelParams::<f64>::table1() };
        let k = DerivedConstants::new(&p).unwrap();
        assert!(k.y_bar <= k.y_p);
        assert!(k.x_bar.is_none());
    }

    #[test]
    fn stable_root_for_tiny_drift() {
        let p = ModelParams { mu_y: 1e-14, ..ModelParams::<f64>::table1() };
        let k = DerivedConstants::new(&p).unwrap();
        assert!(k.beta1 > 1.0);
        assert!(quadratic(&p, k.beta1).abs() < 1e-12);
        let p = ModelParams { mu_y: -0.05, ..ModelParams::<f64>::table1() };
        let k = DerivedConstants::new(&p).unwrap();
        assert!(quadratic(&p, k.beta1).abs() < 1e-12);
    }

    #[test]
    fn deterministic_threshold_collapses_to_y_bar() {
        let p = ModelParams::<f64>::table1_deterministic();
        let k = DerivedConstants::new(&p).unwrap();
        assert!((k.beta1 - 2.5).abs() < 1e-12);
        assert!((k.y_star - k.y_bar).abs() < 1e-9);
    }

    #[test]
    fn payoffs_table1() {
        let (p, _) = table1();
        assert!((leader_value(0.0, 8.0, &p) + 16.67).abs() < 0.01);
        assert!((leader_value(0.0, 11.5, &p) - 41.666_666_666).abs() < 1e-6);
        assert!((leader_value(1e4, 8.0, &p) + 35.0).abs() < 1e-9);
        assert!((follower_value(0.0, 6.0, &p) - 55.0).abs() < 1e-9);
        assert!((follower_value(0.0, 0.0, &p) + 45.0).abs() < 1e-9);
        assert!((follower_value(1e4, 6.0, &p) + 35.0).abs() < 1e-9);
        assert!((simultaneous_value(0.0, &p) + 135.0).abs() < 1e-9);
        assert!((simultaneous_value(1e4, &p) + 35.0).abs() < 1e-9);
        assert!((follower_value(0.0, 6.0, &p) - simultaneous_value(0.0, &p) - 190.0).abs() < 1e-9);
        assert!(((p.c0 - p.c_a) / p.r + p.inv - 90.0).abs() < 1e-12);
    }

    #[test]
    fn preemption_membership() {
        let (_, k) = table1();
        assert!(!in_preemption(6.0, 8.0, &k));
        assert!(in_preemption(6.0, 14.0, &k));
        assert!(!in_preemption(0.0, k.y_p, &k));
        assert!(in_closed_preemption(0.0, k.y_p, &k));
        assert!((k.preemption_line(6.0) - 12.3).abs() < 1e-12);
    }

    #[test]
    fn regions_table1() {
        let (p, k) = table1();
        let b = BoundarySpec::exponential(&p, &k, 0.0984).unwrap();
        assert_eq!(classify_region(6.0, 8.0, &k, &b), Region::Continuation);
        assert_eq!(classify_region(6.0, 12.0, &k, &b), Region::Attrition);
        assert_eq!(classify_region(6.0, 14.0, &k, &b), Region::Preemption);
        // preemption line at x = 2 lies below b(2); the line itself is attrition
        assert_eq!(classify_region(2.0, 8.3, &k, &b), Region::Attrition);
    }

    #[test]
    fn f32_works() {
        let p = ModelParams::<f32>::table1();
        let k = DerivedConstants::new(&p).unwrap();
        assert!((k.y_star - 17.45).abs() < 0.01);
        assert!((leader_value(0.0f32, 8.0, &p) + 16.67).abs() < 0.01);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn leader_equals_follower_on_line(x in 0.0f64..200.0) {
                let (p, k) = table1();
                let y = k.preemption_line(x);
                let l = leader_value(0.0, y, &p);
                let fv = follower_value(0.0, x, &p);
                prop_assert!((l - fv).abs() <= 1e-10 * l.abs().max(fv.abs()).max(1.0));
            }

            #[test]
            fn payoffs_monotone(a in 0.0f64..100.0, d in 0.01f64..50.0, t in 0.0f64..20.0) {
                let (p, _) = table1();
                prop_assert!(leader_value(t, a + d, &p) > leader_value(t, a, &p));
                prop_assert!(follower_value(t, a + d, &p) > follower_value(t, a, &p));
            }

            #[test]
            fn payoffs_decay_in_time_when_bracket_positive(y in 20.0f64..100.0, t in 0.0f64..20.0, dt in 0.01f64..5.0) {
                let (p, _) = table1();
                // bracket y/(r-mu) - 115 > 0 for y > 6.9
                prop_assert!(leader_value(t + dt, y, &p) < leader_value(t, y, &p));
                prop_assert!(follower_value(t + dt, y, &p) < follower_value(t, y, &p));
            }

            #[test]
            fn region_partition(x in 0.0f64..40.0, eps in 1e-6f64..1.0) {
                let (p, k) = table1();
                let b = BoundarySpec::exponential(&p, &k, 0.0984).unwrap();
                let by = b.eval(x);
                if by - eps >= 0.0 && by - eps < k.preemption_line(x) {
                    prop_assert_eq!(classify_region(x, by - eps, &k, &b), Region::Continuation);
                }
                prop_assert_ne!(classify_region(x, by, &k, &b), Region::Continuation);
            }

            #[test]
            fn beta_root_property(mu in -0.05f64..0.09, sig in 0.01f64..1.0) {
                let p = ModelParams { mu_y: mu, sigma_y: sig, ..ModelParams::<f64>::table1() };
                let k = DerivedConstants::new(&p).unwrap();
                prop_assert!(k.beta1 > 1.0);
                prop_assert!(quadratic(&p, k.beta1).abs() < 1e-12);
                if k.y_star > 0.0 {
                    prop_assert!(k.y_bar < k.y_star);
                }
                prop_assert!(k.y_p >= 0.0);
            }
        }
    }
}
