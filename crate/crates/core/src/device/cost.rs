use crate::error::{Result, SimError};
use crate::time::VirtualTime;

/// Device-side and host-side cost constants. All times in seconds, rates in
/// elements or bytes per second.
#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    /// Host time to launch one kernel or copy.
    pub t_launch: f64,
    /// Host time to launch a prebuilt graph.
    pub t_graph_launch: f64,
    /// Fixed device time per kernel.
    pub t_kernel_fixed: f64,
    /// Stencil update throughput, elements/s.
    pub kernel_rate: f64,
    /// Halo pack/unpack throughput, elements/s.
    pub pack_rate: f64,
    pub pcie_bw: f64,
    pub pcie_lat: f64,
    /// Concurrently executing ops per device.
    pub slots: usize,
    /// When set, concurrent work on one engine shares its throughput.
    pub shared_throughput: bool,
    /// Host cost of executing one entry method.
    pub t_entry: f64,
    /// Host cost of posting one message or channel operation.
    pub t_msg: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            t_launch: 5e-6,
            t_graph_launch: 10e-6,
            t_kernel_fixed: 2e-6,
            kernel_rate: 2.0e10,
            pack_rate: 1.0e10,
            pcie_bw: 16e9,
            pcie_lat: 5e-6,
            slots: 8,
            shared_throughput: true,
            t_entry: 0.5e-6,
            t_msg: 0.5e-6,
        }
    }
}

/// Work carried by one kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct KernelWork {
    /// Elements processed by the stencil update.
    pub stencil: u64,
    /// Elements copied by pack/unpack code.
    pub pack: u64,
}

impl KernelWork {
    pub fn stencil(n: u64) -> Self {
        KernelWork { stencil: n, pack: 0 }
    }

    pub fn pack(n: u64) -> Self {
        KernelWork { stencil: 0, pack: n }
    }
}

/// Cost of one op split into a latency part and a throughput-bound part.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OpCost {
    pub fixed: VirtualTime,
    pub work: VirtualTime,
}

impl OpCost {
    pub fn total(self) -> VirtualTime {
        self.fixed + self.work
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("t_launch", self.t_launch),
            ("t_graph_launch", self.t_graph_launch),
            ("t_kernel_fixed", self.t_kernel_fixed),
            ("pcie_lat", self.pcie_lat),
            ("t_entry", self.t_entry),
            ("t_msg", self.t_msg),
        ];
        for (name, v) in nonneg {
            if !v.is_finite() || v < 0.0 {
                return Err(SimError::config(format!("{name} must be >= 0, got {v}")));
            }
        }
        let rates = [
            ("kernel_rate", self.kernel_rate),
            ("pack_rate", self.pack_rate),
            ("pcie_bw", self.pcie_bw),
        ];
        for (name, v) in rates {
            if v.is_nan() || v <= 0.0 {
                return Err(SimError::config(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.slots == 0 {
            return Err(SimError::config("slots must be >= 1"));
        }
        Ok(())
    }

    pub fn launch(&self) -> VirtualTime {
        VirtualTime::secs_lossy(self.t_launch)
    }

    pub fn graph_launch(&self) -> VirtualTime {
        VirtualTime::secs_lossy(self.t_graph_launch)
    }

    pub fn entry(&self) -> VirtualTime {
        VirtualTime::secs_lossy(self.t_entry)
    }

    pub fn msg(&self) -> VirtualTime {
        VirtualTime::secs_lossy(self.t_msg)
    }

    pub fn kernel(&self, w: KernelWork) -> OpCost {
        OpCost {
            fixed: VirtualTime::secs_lossy(self.t_kernel_fixed),
            work: VirtualTime::secs_lossy(
                w.stencil as f64 / self.kernel_rate + w.pack as f64 / self.pack_rate,
            ),
        }
    }

    /// Host/device copy over PCIe, either direction.
    pub fn copy(&self, bytes: u64) -> OpCost {
        OpCost {
            fixed: VirtualTime::secs_lossy(self.pcie_lat),
            work: VirtualTime::secs_lossy(bytes as f64 / self.pcie_bw),
        }
    }
}
