//! Correlated geometric Brownian profit paths on a fixed time grid.
//!
//! Steps use the exact lognormal transition, so the only discretisation
//! error left is discrete monitoring of the regions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{in_closed_preemption, DerivedConstants, ModelParams};
use crate::scalar::{lit, Scalar};
use crate::ModelError;

/// Profit levels `(X, Y)` of the two franchises.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> State<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn lerp(self, other: Self, w: T) -> Self {
        Self {
            x: self.x + w * (other.x - self.x),
            y: self.y + w * (other.y - self.y),
        }
    }
}

/// Identifies an independent random stream: `seed` picks the experiment,
/// `stream_id` the path. A path's draws never depend on how many other
/// paths are simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Stream with the same id under a derived seed; used to give each
    /// consumer (paths, firm clocks, tie breaks) its own independent draws.
    pub fn salted(&self, salt: u64) -> Self {
        Self {
            seed: splitmix64(self.seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            stream_id: self.stream_id,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Precomputed per-step coefficients of the exact lognormal transition.
#[derive(Debug, Clone, Copy)]
pub struct Stepper<T> {
    pub dt: T,
    drift_x: T,
    drift_y: T,
    vol_x: T,
    vol_y: T,
    rho: T,
    rho_c: T,
}

impl<T: Scalar> Stepper<T> {
    pub fn new(p: &ModelParams<T>, dt: T) -> Self {
        let half: T = lit(0.5);
        let sq = dt.sqrt();
        Self {
            dt,
            drift_x: (p.mu_x - half * p.sigma_x * p.sigma_x) * dt,
            drift_y: (p.mu_y - half * p.sigma_y * p.sigma_y) * dt,
            vol_x: p.sigma_x * sq,
            vol_y: p.sigma_y * sq,
            rho: p.rho,
            rho_c: (T::one() - p.rho * p.rho).max(T::zero()).sqrt(),
        }
    }

    #[inline]
    pub fn apply(&self, s: State<T>, z1: T, z2: T) -> State<T> {
        State {
            x: s.x * (self.drift_x + self.vol_x * z1).exp(),
            y: s.y * (self.drift_y + self.vol_y * (self.rho * z1 + self.rho_c * z2)).exp(),
        }
    }

    /// Advances one step drawing two fresh standard normals from `rng`.
    #[inline]
    pub fn advance<R: rand::Rng + ?Sized>(&self, s: State<T>, rng: &mut R) -> State<T> {
        let z1 = T::standard_normal(rng);
        let z2 = T::standard_normal(rng);
        self.apply(s, z1, z2)
    }
}

/// One exact GBM step driven by the standard normals `z1`, `z2`.
pub fn step<T: Scalar>(s: State<T>, dt: T, z1: T, z2: T, p: &ModelParams<T>) -> State<T> {
    Stepper::new(p, dt).apply(s, z1, z2)
}

/// Number of grid steps in `[0, horizon]`, i.e. `floor(horizon/dt)`.
///
/// A relative slack of a few ulps keeps `1.0/0.01` from flooring to 99.
pub fn grid_steps<T: Scalar>(horizon: T, dt: T) -> usize {
    let ratio = horizon / dt;
    let n = (ratio * (T::one() + lit(1e-12))).floor();
    n.to_usize().unwrap_or(usize::MAX)
}

/// A sampled trajectory at `t = 0, dt, 2dt, …`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Path<T> {
    pub dt: T,
    pub horizon: T,
    pub states: Vec<State<T>>,
}

impl<T: Scalar> Path<T> {
    pub fn time(&self, i: usize) -> T {
        self.dt * T::from_usize(i).expect("index fits scalar")
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

pub(crate) fn check_grid<T: Scalar>(dt: T, horizon: T) -> Result<(), ModelError> {
    if !(dt > T::zero()) || !dt.is_finite() {
        return Err(ModelError::InvalidGrid(format!("dt must be positive, got {dt}")));
    }
    if !(horizon > T::zero()) || !horizon.is_finite() {
        return Err(ModelError::InvalidGrid(format!("horizon must be positive, got {horizon}")));
    }
    Ok(())
}

/// Simulates `floor(horizon/dt)` exact steps from `s0`.
pub fn simulate_path<T: Scalar>(
    s0: State<T>,
    horizon: T,
    dt: T,
    stream: RngStream,
    p: &ModelParams<T>,
) -> Result<Path<T>, ModelError> {
    check_grid(dt, horizon)?;
    p.validate(p.dynamics()).map_err(ModelError::InvalidParams)?;
    let n = grid_steps(horizon, dt);
    let stepper = Stepper::new(p, dt);
    let mut rng = stream.rng();
    let mut states = Vec::with_capacity(n + 1);
    let mut s = s0;
    states.push(s);
    for _ in 0..n {
        s = stepper.advance(s, &mut rng);
        states.push(s);
    }
    Ok(Path { dt, horizon, states })
}

/// First grid index at or beyond the preemption line, if any.
pub fn first_hit_preemption<T: Scalar>(path: &Path<T>, k: &DerivedConstants<T>) -> Option<usize> {
    path.states.iter().position(|s| in_closed_preemption(s.x, s.y, k))
}
