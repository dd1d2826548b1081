use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the numerical kernels are generic over (`f32` or `f64`).
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Pivot magnitude below which the simplex treats an entry as zero.
    const PIVOT_TOL: f64;
    /// Feasibility / optimality tolerance used by the LP solver.
    const FEAS_TOL: f64;

    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    const PIVOT_TOL: f64 = 1e-9;
    const FEAS_TOL: f64 = 1e-9;
}

impl Scalar for f32 {
    const PIVOT_TOL: f64 = 1e-5;
    const FEAS_TOL: f64 = 1e-4;
}
