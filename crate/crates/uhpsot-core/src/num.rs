//! Scalar abstraction: the whole numeric core is generic over `Real`,
//! instantiated as `f32` for tracking speed and `f64` in oracle tests.

use std::fmt::Display;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, RemAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rustfft::FftNum;

pub trait Real:
    Float
    + FftNum
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + RemAssign
    + Sum
    + Display
    + Default
{
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("constant representable in scalar type")
    }

    fn from_index(v: usize) -> Self {
        Self::from_usize(v).expect("index representable in scalar type")
    }
}

impl Real for f32 {}
impl Real for f64 {}
