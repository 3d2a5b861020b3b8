use crate::error::{Result, SimError};
use crate::geom::{Dims3, Dir};
use crate::scalar::Scalar;

use super::stencil::stencil7;

/// Which owned elements an update touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Full,
    /// Elements whose stencil reads no exchanged ghost.
    Interior,
    /// Elements adjacent to at least one exchanged face.
    Exterior,
}

/// One chare's piece of the grid: two buffers with a one-element ghost
/// layer. Global boundary ghosts hold the Dirichlet value in both buffers.
#[derive(Debug, Clone)]
pub struct Block<T> {
    dims: Dims3,
    exchanged: [bool; 6],
    bufs: [Vec<T>; 2],
    cur: usize,
    flips: u64,
}

impl<T: Scalar> Block<T> {
    /// `exchanged[d]` is true when face `d` has a neighbor; all other
    /// faces are global boundary.
    pub fn new(dims: Dims3, exchanged: [bool; 6]) -> Result<Self> {
        dims.validate("block")?;
        let n = (dims.x + 2) * (dims.y + 2) * (dims.z + 2);
        let mut b = vec![T::zero(); n];
        let p = [dims.x + 2, dims.y + 2, dims.z + 2];
        for i in 0..p[0] {
            for j in 0..p[1] {
                for k in 0..p[2] {
                    let c = [i, j, k];
                    let ghost_of = Dir::ALL.iter().find(|d| {
                        let a = d.axis();
                        if d.is_plus() { c[a] == p[a] - 1 } else { c[a] == 0 }
                    });
                    if let Some(d) = ghost_of {
                        if !exchanged[d.index()] {
                            b[(i * p[1] + j) * p[2] + k] = T::one();
                        }
                    }
                }
            }
        }
        Ok(Block {
            dims,
            exchanged,
            bufs: [b.clone(), b],
            cur: 0,
            flips: 0,
        })
    }

    pub fn dims(&self) -> Dims3 {
        self.dims
    }

    /// Index of the buffer holding the latest values.
    pub fn current(&self) -> usize {
        self.cur
    }

    pub fn flips(&self) -> u64 {
        self.flips
    }

    #[inline]
    fn at(&self, i: usize, j: usize, k: usize) -> usize {
        (i * (self.dims.y + 2) + j) * (self.dims.z + 2) + k
    }

    fn face_coords(&self, dir: Dir, ghost: bool) -> impl Iterator<Item = usize> + '_ {
        let d = self.dims.as_array();
        let a = dir.axis();
        let layer = match (dir.is_plus(), ghost) {
            (false, false) => 1,
            (false, true) => 0,
            (true, false) => d[a],
            (true, true) => d[a] + 1,
        };
        let (u, v) = match a {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        (1..=d[u]).flat_map(move |p| {
            (1..=d[v]).map(move |q| {
                let mut c = [0; 3];
                c[a] = layer;
                c[u] = p;
                c[v] = q;
                self.at(c[0], c[1], c[2])
            })
        })
    }

    pub fn face_len(&self, dir: Dir) -> usize {
        self.dims.face(dir.axis())
    }

    /// Copy the owned layer next to face `dir` out of the current buffer.
    pub fn pack(&self, dir: Dir) -> Vec<T> {
        let b = &self.bufs[self.cur];
        self.face_coords(dir, false).map(|i| b[i]).collect()
    }

    /// Write a neighbor's face into the ghost layer of the current buffer.
    pub fn unpack(&mut self, dir: Dir, data: &[T]) -> Result<()> {
        if !self.exchanged[dir.index()] {
            return Err(SimError::logic(format!("unpack into boundary face {dir:?}")));
        }
        if data.len() != self.face_len(dir) {
            return Err(SimError::logic(format!(
                "halo for {dir:?} has {} elements, face has {}",
                data.len(),
                self.face_len(dir)
            )));
        }
        let idx: Vec<usize> = self.face_coords(dir, true).collect();
        let b = &mut self.bufs[self.cur];
        for (i, &v) in idx.into_iter().zip(data) {
            b[i] = v;
        }
        Ok(())
    }

    fn on_exterior(&self, c: [usize; 3]) -> bool {
        exterior(&self.exchanged, self.dims, c)
    }

    /// Apply the stencil to `region`, reading the current buffer and
    /// writing the other one.
    pub fn update(&mut self, region: Region) -> Result<()> {
        let (ny, nz) = (self.dims.y + 2, self.dims.z + 2);
        let sx = ny * nz;
        let (exchanged, dims) = (self.exchanged, self.dims);
        let (first, second) = self.bufs.split_at_mut(1);
        let (src, dst) = if self.cur == 0 {
            (&first[0], &mut second[0])
        } else {
            (&second[0], &mut first[0])
        };
        let mut bad = None;
        for i in 1..=dims.x {
            for j in 1..=dims.y {
                for k in 1..=dims.z {
                    if region != Region::Full
                        && exterior(&exchanged, dims, [i, j, k]) != (region == Region::Exterior)
                    {
                        continue;
                    }
                    let p = (i * ny + j) * nz + k;
                    let v = stencil7(
                        src[p],
                        src[p - sx],
                        src[p + sx],
                        src[p - nz],
                        src[p + nz],
                        src[p - 1],
                        src[p + 1],
                    );
                    if cfg!(debug_assertions) && bad.is_none() && !v.is_finite() {
                        bad = Some([i - 1, j - 1, k - 1]);
                    }
                    dst[p] = v;
                }
            }
        }
        if let Some(c) = bad {
            return Err(SimError::Numerical(format!("non-finite value at block element {c:?}")));
        }
        Ok(())
    }

    /// Make the freshly written buffer current.
    pub fn flip(&mut self) {
        self.cur ^= 1;
        self.flips += 1;
    }

    /// Number of owned elements in `region`.
    pub fn count(&self, region: Region) -> usize {
        match region {
            Region::Full => self.dims.count(),
            _ => {
                let mut n = 0;
                for i in 1..=self.dims.x {
                    for j in 1..=self.dims.y {
                        for k in 1..=self.dims.z {
                            if self.on_exterior([i, j, k]) == (region == Region::Exterior) {
                                n += 1;
                            }
                        }
                    }
                }
                n
            }
        }
    }

    /// Owned values of the current buffer, x slowest.
    pub fn owned(&self) -> Vec<T> {
        let b = &self.bufs[self.cur];
        let mut out = Vec::with_capacity(self.dims.count());
        for i in 1..=self.dims.x {
            for j in 1..=self.dims.y {
                for k in 1..=self.dims.z {
                    out.push(b[self.at(i, j, k)]);
                }
            }
        }
        out
    }
}

/// Padded coordinate `c` lies in the outer owned layer of an exchanged face.
fn exterior(exchanged: &[bool; 6], dims: Dims3, c: [usize; 3]) -> bool {
    let d = dims.as_array();
    Dir::ALL.iter().any(|dir| {
        let a = dir.axis();
        exchanged[dir.index()] && if dir.is_plus() { c[a] == d[a] } else { c[a] == 1 }
    })
}
