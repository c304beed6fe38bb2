//! Scalar abstraction for the numeric core.

use ndarray::NdFloat;
use num_traits::FromPrimitive;
use rand::Rng;
use rand_distr::{ChiSquared, StandardNormal};
use std::iter::Sum;

/// Floating-point scalar the library is generic over.
///
/// Implemented for `f32` and `f64`. Bundles the linear-algebra bounds from
/// `ndarray` with the special functions and samplers the estimators need.
pub trait Real: NdFloat + FromPrimitive + Sum + 'static {
    /// Complementary error function.
    fn erfc(self) -> Self;

    /// One standard normal draw.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// One chi-squared draw with `dof` degrees of freedom. `dof = 0` yields 0.
    fn chi_squared<R: Rng + ?Sized>(rng: &mut R, dof: usize) -> Self;

    fn cast(value: f64) -> Self;

    fn to_f64_lossy(self) -> f64;

    fn cast_usize(value: usize) -> Self {
        <Self as FromPrimitive>::from_usize(value).expect("usize fits in a float")
    }
}

impl Real for f64 {
    fn erfc(self) -> Self {
        libm::erfc(self)
    }

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }

    fn chi_squared<R: Rng + ?Sized>(rng: &mut R, dof: usize) -> Self {
        if dof == 0 {
            return 0.0;
        }
        rng.sample(ChiSquared::new(dof as f64).expect("positive dof"))
    }

    fn cast(value: f64) -> Self {
        value
    }

    fn to_f64_lossy(self) -> f64 {
        self
    }
}

impl Real for f32 {
    fn erfc(self) -> Self {
        libm::erfcf(self)
    }

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }

    fn chi_squared<R: Rng + ?Sized>(rng: &mut R, dof: usize) -> Self {
        if dof == 0 {
            return 0.0;
        }
        rng.sample(ChiSquared::new(dof as f32).expect("positive dof"))
    }

    fn cast(value: f64) -> Self {
        value as f32
    }

    fn to_f64_lossy(self) -> f64 {
        f64::from(self)
    }
}
