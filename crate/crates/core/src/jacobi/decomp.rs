use crate::error::{Result, SimError};
use crate::geom::Dims3;

/// A cuboid split of a global grid into equal blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decomposition {
    pub parts: Dims3,
    pub block: Dims3,
}

impl Decomposition {
    /// Total surface area of all blocks, in elements.
    pub fn aggregate_surface(&self) -> u64 {
        let b = self.block;
        let per = 2 * (b.x * b.y + b.y * b.z + b.x * b.z) as u64;
        per * self.parts.count() as u64
    }

    /// Largest face of a block, in elements.
    pub fn max_face(&self) -> usize {
        (0..3).map(|a| self.block.face(a)).max().unwrap_or(0)
    }
}

/// Split `dims` into `n` equal blocks minimizing aggregate surface area.
/// Ties go to the lexicographically smallest factor triple.
pub fn decompose(dims: Dims3, n: usize) -> Result<Decomposition> {
    dims.validate("grid")?;
    if n == 0 {
        return Err(SimError::config("cannot decompose into zero parts"));
    }
    let d = dims.as_array();
    let mut best: Option<(u64, Decomposition)> = None;
    let mut failures = [0usize; 3];
    for px in (1..=n).filter(|p| n.is_multiple_of(*p)) {
        let rest = n / px;
        for py in (1..=rest).filter(|p| rest.is_multiple_of(*p)) {
            let pz = rest / py;
            let p = [px, py, pz];
            let mut ok = true;
            for a in 0..3 {
                if !d[a].is_multiple_of(p[a]) {
                    failures[a] += 1;
                    ok = false;
                }
            }
            if !ok {
                continue;
            }
            let dec = Decomposition {
                parts: Dims3::from_array(p),
                block: Dims3::new(d[0] / px, d[1] / py, d[2] / pz),
            };
            let s = dec.aggregate_surface();
            // Enumeration is already lexicographic, so strict < keeps the
            // smallest triple among ties.
            if best.is_none_or(|(bs, _)| s < bs) {
                best = Some((s, dec));
            }
        }
    }
    best.map(|(_, d)| d).ok_or_else(|| {
        let (axis, _) = failures
            .iter()
            .enumerate()
            .max_by_key(|&(a, f)| (*f, std::cmp::Reverse(a)))
            .expect("three axes");
        let name = ["x", "y", "z"][axis];
        SimError::config(format!(
            "no factorization of {n} parts divides grid {dims}; dimension {name}={} is the most frequent blocker",
            d[axis]
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_gpus_on_1536_cube() {
        let d = decompose(Dims3::cube(1536), 6).unwrap();
        assert_eq!(d.parts, Dims3::new(1, 2, 3));
        assert_eq!(d.block, Dims3::new(1536, 768, 512));
        assert_eq!(d.max_face() * 8, 9_437_184);
    }

    #[test]
    fn one_part_is_whole_grid() {
        let d = decompose(Dims3::new(5, 7, 9), 1).unwrap();
        assert_eq!(d.block, Dims3::new(5, 7, 9));
    }

    #[test]
    fn indivisible_is_config_error() {
        let err = decompose(Dims3::new(7, 7, 7), 2).unwrap_err();
        match err {
            SimError::Config(m) => assert!(m.contains("=7"), "{m}"),
            other => panic!("{other:?}"),
        }
    }
}
