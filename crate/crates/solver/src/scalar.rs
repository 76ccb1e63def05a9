use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumCast};

/// Floating point scalar the solver and the billing math are generic over (`f32` or `f64`).
pub trait Scalar:
    Float + FromPrimitive + NumCast + Debug + Display + LowerExp + Default + Sum + Send + Sync + 'static
{
    /// Smallest tolerance that is meaningful for primal/dual feasibility at this precision.
    fn default_tolerance() -> Self;

    /// Lossy conversion from `f64`; rates and profile values are stored as `f64` in files.
    fn of(value: f64) -> Self {
        <Self as NumCast>::from(value).expect("f64 value representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    fn default_tolerance() -> Self {
        1e-4
    }
}

impl Scalar for f64 {
    fn default_tolerance() -> Self {
        1e-7
    }
}
