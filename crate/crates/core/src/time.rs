//! Integer-picosecond virtual time.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use crate::error::{Result, SimError};

const PS_PER_SEC: f64 = 1e12;

/// A point in (or span of) simulated time, in whole picoseconds.
///
/// Integer time keeps equality and tie-breaking exact on every platform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct VirtualTime(u64);

impl VirtualTime {
    pub const ZERO: VirtualTime = VirtualTime(0);
    pub const MAX: VirtualTime = VirtualTime(u64::MAX);

    pub const fn from_ps(ps: u64) -> Self {
        VirtualTime(ps)
    }

    pub const fn from_ns(ns: u64) -> Self {
        VirtualTime(ns * 1_000)
    }

    pub const fn from_us(us: u64) -> Self {
        VirtualTime(us * 1_000_000)
    }

    /// Converts seconds to picoseconds, rounding to nearest.
    ///
    /// Negative, NaN, and out-of-range inputs are configuration errors.
    pub fn from_secs(secs: f64) -> Result<Self> {
        if !secs.is_finite() || secs < 0.0 {
            return Err(SimError::config(format!(
                "time must be a finite nonnegative number of seconds, got {secs}"
            )));
        }
        let ps = (secs * PS_PER_SEC).round();
        if ps >= u64::MAX as f64 {
            return Err(SimError::config(format!("time {secs} s overflows picosecond range")));
        }
        Ok(VirtualTime(ps as u64))
    }

    /// Infallible conversion for values already validated as nonnegative.
    pub(crate) fn secs_lossy(secs: f64) -> Self {
        VirtualTime((secs.max(0.0) * PS_PER_SEC).round() as u64)
    }

    pub const fn as_ps(self) -> u64 {
        self.0
    }

    pub fn as_secs(self) -> f64 {
        self.0 as f64 / PS_PER_SEC
    }

    pub fn saturating_sub(self, other: VirtualTime) -> VirtualTime {
        VirtualTime(self.0.saturating_sub(other.0))
    }

    pub fn checked_add(self, other: VirtualTime) -> Option<VirtualTime> {
        self.0.checked_add(other.0).map(VirtualTime)
    }
}

impl Add for VirtualTime {
    type Output = VirtualTime;
    fn add(self, rhs: VirtualTime) -> VirtualTime {
        VirtualTime(self.0 + rhs.0)
    }
}

impl AddAssign for VirtualTime {
    fn add_assign(&mut self, rhs: VirtualTime) {
        self.0 += rhs.0;
    }
}

impl Sub for VirtualTime {
    type Output = VirtualTime;
    fn sub(self, rhs: VirtualTime) -> VirtualTime {
        VirtualTime(
            self.0
                .checked_sub(rhs.0)
                .expect("virtual time subtraction underflow"),
        )
    }
}

impl std::iter::Sum for VirtualTime {
    fn sum<I: Iterator<Item = VirtualTime>>(iter: I) -> VirtualTime {
        iter.fold(VirtualTime::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for VirtualTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}us", self.0 as f64 / 1e6)
    }
}
