use serde::Serialize;

use crate::scalar::{count, Scalar};

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate<T> {
    pub value: T,
    pub stderr: T,
    pub n_paths: usize,
}

impl<T: Scalar> Estimate<T> {
    /// Sample mean and standard error (n − 1 denominator) of `xs`.
    ///
    /// Two-pass, in slice order, so the result does not depend on how the
    /// samples were produced.
    pub fn from_samples(xs: &[T]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { value: T::nan(), stderr: T::nan(), n_paths: 0 };
        }
        let nt: T = count(n);
        let mean = xs.iter().fold(T::zero(), |a, &v| a + v) / nt;
        if n == 1 {
            return Self { value: mean, stderr: T::zero(), n_paths: 1 };
        }
        let ss = xs.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean));
        let var = ss / count::<T>(n - 1);
        Self { value: mean, stderr: (var / nt).sqrt(), n_paths: n }
    }

    /// `|value - target| <= k * stderr`.
    pub fn within(&self, target: T, k: T) -> bool {
        (self.value - target).abs() <= k * self.stderr
    }
}

/// Linear-interpolated quantile of already sorted data, `q` in `[0, 1]`.
pub fn quantile_sorted<T: Scalar>(sorted: &[T], q: T) -> T {
    match sorted.len() {
        0 => T::nan(),
        1 => sorted[0],
        n => {
            let pos = q.max(T::zero()).min(T::one()) * count::<T>(n - 1);
            let lo = pos.floor().to_usize().unwrap_or(0).min(n - 1);
            let hi = (lo + 1).min(n - 1);
            let w = pos - count::<T>(lo);
            sorted[lo] + w * (sorted[hi] - sorted[lo])
        }
    }
}

/// Sorted copy with NaNs removed.
pub fn sorted<T: Scalar>(xs: impl IntoIterator<Item = T>) -> Vec<T> {
    let mut v: Vec<T> = xs.into_iter().filter(|x| !x.is_nan()).collect();
    v.sort_by(|a, b| a.partial_cmp(b).expect("NaNs filtered"));
    v
}
