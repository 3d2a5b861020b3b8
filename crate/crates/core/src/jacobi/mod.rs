//! Jacobi3D proxy application: decomposition, block numerics and the
//! simulated MPI and Charm drivers.

mod block;
mod decomp;
mod sim;
pub mod stencil;

pub use block::{Block, Region};
pub use decomp::{decompose, Decomposition};
pub use sim::{simulate, ChareLaunches, IterLaunches, SimOutcome};


use crate::error::{Result, SimError};
use crate::geom::Dims3;

/// Global problem and iteration counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    pub dims: Dims3,
    /// Timed iterations.
    pub iterations: u64,
    /// Untimed iterations run before the timed ones.
    pub warmup: u64,
}

impl GridSpec {
    pub fn total_iterations(&self) -> u64 {
        self.warmup + self.iterations
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate("grid")?;
        if self.iterations == 0 {
            return Err(SimError::config("iterations must be >= 1"));
        }
        Ok(())
    }
}

macro_rules! named_enum {
    ($(#[$m:meta])* $name:ident { $($var:ident => $s:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum $name { $($var),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$var),+];

            pub fn name(self) -> &'static str {
                match self { $($name::$var => $s),+ }
            }
        }

        impl std::fmt::Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(self.name())
            }
        }

        impl std::str::FromStr for $name {
            type Err = SimError;

            fn from_str(s: &str) -> Result<Self> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($s => Ok($name::$var),)+
                    other => Err(SimError::config(format!(
                        concat!("unknown ", stringify!($name), " '{}', expected one of: {}"),
                        other,
                        [$($s),+].join(", ")
                    ))),
                }
            }
        }
    };
}
pub(crate) use named_enum;

named_enum!(
    /// Programming model and communication path.
    ExecMode {
        MpiH => "mpi_h",
        MpiD => "mpi_d",
        CharmH => "charm_h",
        CharmD => "charm_d",
    }
);

named_enum!(
    /// Which halo kernels are merged.
    FusionStrategy {
        None => "none",
        A => "a",
        B => "b",
        C => "c",
    }
);

named_enum!(
    LaunchMode {
        Individual => "individual",
        Graph => "graph",
    }
);

named_enum!(
    /// Host-device synchronizations per iteration.
    SyncPolicy {
        Baseline2Sync => "baseline",
        Optimized1Sync => "optimized",
    }
);

impl ExecMode {
    pub fn is_mpi(self) -> bool {
        matches!(self, ExecMode::MpiH | ExecMode::MpiD)
    }

    /// Halo buffers handed to the network live on the device.
    pub fn device_buffers(self) -> bool {
        matches!(self, ExecMode::MpiD | ExecMode::CharmD)
    }
}

impl FusionStrategy {
    /// Kernel launches per iteration for a chare with six neighbors.
    pub fn interior_launches(self) -> u32 {
        match self {
            FusionStrategy::None => 13,
            FusionStrategy::A => 8,
            FusionStrategy::B => 3,
            FusionStrategy::C => 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for m in ExecMode::ALL {
            assert_eq!(m.name().parse::<ExecMode>().unwrap(), *m);
        }
        assert_eq!("C".parse::<FusionStrategy>().unwrap(), FusionStrategy::C);
        assert!("d".parse::<FusionStrategy>().is_err());
        assert_eq!("graph".parse::<LaunchMode>().unwrap(), LaunchMode::Graph);
        assert_eq!("baseline".parse::<SyncPolicy>().unwrap(), SyncPolicy::Baseline2Sync);
    }
}
