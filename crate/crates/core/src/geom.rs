//! 3D extents, indices, and face directions.

use std::fmt;

use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Dims3 {
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

impl Dims3 {
    pub const fn new(x: usize, y: usize, z: usize) -> Self {
        Dims3 { x, y, z }
    }

    pub const fn cube(n: usize) -> Self {
        Dims3 { x: n, y: n, z: n }
    }

    pub fn as_array(self) -> [usize; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [usize; 3]) -> Self {
        Dims3::new(a[0], a[1], a[2])
    }

    pub fn count(self) -> usize {
        self.x * self.y * self.z
    }

    pub fn validate(self, what: &str) -> Result<()> {
        if self.x == 0 || self.y == 0 || self.z == 0 {
            return Err(SimError::config(format!("{what} has a zero extent: {self}")));
        }
        Ok(())
    }

    pub fn contains(self, idx: [usize; 3]) -> bool {
        idx[0] < self.x && idx[1] < self.y && idx[2] < self.z
    }

    /// Row-major linearization with x slowest.
    pub fn linear(self, idx: [usize; 3]) -> usize {
        (idx[0] * self.y + idx[1]) * self.z + idx[2]
    }

    pub fn unlinear(self, i: usize) -> [usize; 3] {
        let z = i % self.z;
        let y = (i / self.z) % self.y;
        let x = i / (self.z * self.y);
        [x, y, z]
    }

    /// Elements on the face normal to `axis`.
    pub fn face(self, axis: usize) -> usize {
        match axis {
            0 => self.y * self.z,
            1 => self.x * self.z,
            _ => self.x * self.y,
        }
    }
}

impl fmt::Display for Dims3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.x, self.y, self.z)
    }
}

/// One of the six face directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Dir {
    XMinus,
    XPlus,
    YMinus,
    YPlus,
    ZMinus,
    ZPlus,
}

impl Dir {
    pub const ALL: [Dir; 6] = [
        Dir::XMinus,
        Dir::XPlus,
        Dir::YMinus,
        Dir::YPlus,
        Dir::ZMinus,
        Dir::ZPlus,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn axis(self) -> usize {
        self.index() / 2
    }

    pub fn is_plus(self) -> bool {
        self.index() % 2 == 1
    }

    pub fn opposite(self) -> Dir {
        Dir::ALL[self.index() ^ 1]
    }

    /// Neighbor of `idx` in this direction inside `dims`, if any.
    pub fn step(self, idx: [usize; 3], dims: Dims3) -> Option<[usize; 3]> {
        let a = self.axis();
        let mut out = idx;
        if self.is_plus() {
            if idx[a] + 1 >= dims.as_array()[a] {
                return None;
            }
            out[a] += 1;
        } else {
            if idx[a] == 0 {
                return None;
            }
            out[a] -= 1;
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_round_trip() {
        let d = Dims3::new(3, 4, 5);
        for i in 0..d.count() {
            assert_eq!(d.linear(d.unlinear(i)), i);
        }
    }

    #[test]
    fn steps_respect_bounds() {
        let d = Dims3::new(2, 1, 1);
        assert_eq!(Dir::XPlus.step([0, 0, 0], d), Some([1, 0, 0]));
        assert_eq!(Dir::XPlus.step([1, 0, 0], d), None);
        assert_eq!(Dir::YMinus.step([0, 0, 0], d), None);
        assert_eq!(Dir::ZPlus.opposite(), Dir::ZMinus);
    }
}
