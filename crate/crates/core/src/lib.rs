//! Critical Galton–Watson trees in varying environments.
//!
//! The crate covers generating-function arithmetic for varying environments,
//! an Ulam–Harris tree algebra with spines, forward samplers for the plain
//! measure and the k-spine size-biased and discounted measure, extraction of
//! sample genealogies, limit-law evaluators and a brute-force enumeration
//! oracle for small instances.
//!
//! Analytic code is generic over the scalar through [`Real`] (`f32`, `f64`);
//! the oracle is generic over [`Probability`] so that dyadic environments can
//! be checked in exact rational arithmetic. Samplers work in `f64`.

pub mod coalescent;
pub mod env;
pub mod error;
pub mod jet;
pub mod law;
pub mod limits;
pub mod oracle;
pub mod quadrature;
pub mod rng;
pub mod sampler;
pub mod tree;

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::Ratio;
use num_traits::{Float, FloatConst, FromPrimitive, Num, ToPrimitive};

pub use env::{time_change, EnvSpec, EnvSummary, Environment};
pub use error::{Error, Result};
pub use jet::Jet;
pub use law::OffspringLaw;
pub use tree::{Genealogy, Label, SpineTip, SpinedTree};

/// Real scalar used by the analytic layer.
pub trait Real: Float + FloatConst + FromPrimitive + Debug + Send + Sync + 'static {
    /// Lossy conversion from `f64`; every `Real` represents all finite `f64` magnitudes used here.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 converts to every Real")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Probability arithmetic used by the enumeration oracle.
pub trait Probability:
    Num + Clone + PartialOrd + FromPrimitive + ToPrimitive + Debug + Send + Sync
{
    fn from_real(x: f64) -> Self {
        Self::from_f64(x).expect("finite probability")
    }

    fn approx(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Probability for f64 {}
impl Probability for BigRational {}

/// Exact rational numbers.
pub type BigRational = Ratio<BigInt>;

pub type Jet32 = Jet<f32>;
pub type Jet64 = Jet<f64>;
pub type FloatOutcome = oracle::WeightedOutcome<f64>;
pub type ExactOutcome = oracle::WeightedOutcome<BigRational>;
