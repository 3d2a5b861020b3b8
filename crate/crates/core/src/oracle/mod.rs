//! Independent ground truth: a serial Jacobi reference, a brute-force
//! decomposition search, memory arithmetic, and a closed-form timing
//! replay for degenerate schedules.

mod analytic;

pub use analytic::analytic_iter_time;

use crate::geom::Dims3;
use crate::jacobi::stencil::stencil7;
use crate::scalar::{elem_bytes, Scalar};

/// Run `iterations` sweeps over the whole undecomposed grid. Returns owned
/// values, x slowest.
pub fn serial_jacobi<T: Scalar>(dims: Dims3, iterations: u64) -> Vec<T> {
    let (nx, ny, nz) = (dims.x + 2, dims.y + 2, dims.z + 2);
    let idx = |i: usize, j: usize, k: usize| (i * ny + j) * nz + k;
    let mut a = vec![T::one(); nx * ny * nz];
    for i in 1..nx - 1 {
        for j in 1..ny - 1 {
            for k in 1..nz - 1 {
                a[idx(i, j, k)] = T::zero();
            }
        }
    }
    let mut b = a.clone();
    for _ in 0..iterations {
        for i in 1..nx - 1 {
            for j in 1..ny - 1 {
                for k in 1..nz - 1 {
                    b[idx(i, j, k)] = stencil7(
                        a[idx(i, j, k)],
                        a[idx(i - 1, j, k)],
                        a[idx(i + 1, j, k)],
                        a[idx(i, j - 1, k)],
                        a[idx(i, j + 1, k)],
                        a[idx(i, j, k - 1)],
                        a[idx(i, j, k + 1)],
                    );
                }
            }
        }
        std::mem::swap(&mut a, &mut b);
    }
    let mut out = Vec::with_capacity(dims.count());
    for i in 1..nx - 1 {
        for j in 1..ny - 1 {
            for k in 1..nz - 1 {
                out.push(a[idx(i, j, k)]);
            }
        }
    }
    out
}

/// Every divisible factor triple of `n` with its aggregate surface,
/// smallest surface first, ties in lexicographic order.
pub fn enumerate_decompositions(dims: Dims3, n: usize) -> Vec<([usize; 3], u64)> {
    let mut out = Vec::new();
    for px in 1..=n {
        for py in 1..=n {
            for pz in 1..=n {
                if px * py * pz != n || !dims.x.is_multiple_of(px) || !dims.y.is_multiple_of(py) || !dims.z.is_multiple_of(pz) {
                    continue;
                }
                let (bx, by, bz) = ((dims.x / px) as u64, (dims.y / py) as u64, (dims.z / pz) as u64);
                out.push(([px, py, pz], n as u64 * 2 * (bx * by + by * bz + bx * bz)));
            }
        }
    }
    out.sort_by_key(|&(p, s)| (s, p));
    out
}

/// Device bytes for one block: two full copies plus a send and a receive
/// staging buffer per face.
pub fn memory_footprint<T: Scalar>(block: Dims3, faces: usize) -> (u64, u64) {
    let e = elem_bytes::<T>();
    let data = 2 * block.count() as u64 * e;
    let largest = (0..3).map(|a| block.face(a)).max().unwrap_or(0) as u64;
    (data, 2 * faces as u64 * largest * e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_cube_one_step() {
        let g = serial_jacobi::<f64>(Dims3::cube(3), 1);
        assert_eq!(g[Dims3::cube(3).linear([1, 1, 1])], 0.0);
        assert!(g.iter().enumerate().all(|(i, &v)| i == 13 || v > 0.0));
        assert_eq!(g[0], 3.0 / 7.0);
    }

    #[test]
    fn zero_iterations_is_initial() {
        assert!(serial_jacobi::<f64>(Dims3::new(2, 3, 4), 0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn brute_force_agrees_on_examples() {
        let e = enumerate_decompositions(Dims3::cube(1536), 6);
        assert_eq!(e[0].0, [1, 2, 3]);
        assert!(enumerate_decompositions(Dims3::cube(7), 2).is_empty());
    }

    #[test]
    fn footprints() {
        let (d, _) = memory_footprint::<f64>(Dims3::new(1536, 768, 512), 6);
        assert_eq!(d, 9_663_676_416);
        let (d, _) = memory_footprint::<f64>(Dims3::new(192, 96, 64), 6);
        assert_eq!(d, 18_874_368);
        assert_eq!(memory_footprint::<f64>(Dims3::cube(1), 0), (16, 0));
    }
}
