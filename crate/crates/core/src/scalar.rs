use std::fmt::Debug;

use nalgebra::RealField;
use num_traits::{FromPrimitive, Num, ToPrimitive};

/// Arithmetic needed by the closed-form photon-statistics relations.
///
/// Satisfied by `f32`, `f64` and exact rationals such as
/// `num_rational::Ratio<i128>`.
pub trait Field: Num + Clone + PartialOrd + FromPrimitive + Debug {}

impl<T> Field for T where T: Num + Clone + PartialOrd + FromPrimitive + Debug {}

/// Floating-point scalar used by the matrix code (eigen-decompositions,
/// Green's functions, root polishing).
pub trait Real: RealField + Field + ToPrimitive + Copy {
    fn of(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("finite f64 is representable")
    }

    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}
