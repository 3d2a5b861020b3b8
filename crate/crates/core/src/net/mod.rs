//! Inter-node communication: α–β costs, device-direct and host-staged
//! paths, pipelined chunked staging, and NIC fair sharing.

mod exec;

pub(crate) use exec::{Channel, PendingPost, Transfer};

use crate::device::{CostModel, OpCost};
use crate::error::{Result, SimError};
use crate::time::VirtualTime;

pub const MIB: u64 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Protocol {
    /// Copy to host, send, copy back, one stage after another.
    HostStaging,
    /// NIC reads and writes device memory directly.
    DeviceDirect,
    /// Host staging split into chunks flowing through a 3-stage pipeline.
    /// Messages at or below the threshold go device-direct.
    PipelinedHostStaging,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::HostStaging => "host_staging",
            Protocol::DeviceDirect => "device_direct",
            Protocol::PipelinedHostStaging => "pipelined",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "host_staging" => Some(Protocol::HostStaging),
            "device_direct" => Some(Protocol::DeviceDirect),
            "pipelined" => Some(Protocol::PipelinedHostStaging),
            _ => None,
        }
    }
}

/// Where a communication buffer lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Location {
    Host,
    Device,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    /// Per-message latency, seconds.
    pub alpha: f64,
    /// Injection bandwidth, bytes/s.
    pub beta: f64,
    pub pipeline_threshold: u64,
    pub chunk_size: u64,
    /// Protocol for device-resident buffers under CUDA-aware MPI.
    pub mode: Protocol,
    /// Transfers sharing a NIC split its bandwidth evenly.
    pub nic_fair_share: bool,
}

impl Default for NetParams {
    fn default() -> Self {
        NetParams {
            alpha: 1e-6,
            beta: 23e9,
            pipeline_threshold: MIB,
            chunk_size: MIB,
            mode: Protocol::PipelinedHostStaging,
            nic_fair_share: true,
        }
    }
}

impl NetParams {
    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(SimError::config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if self.beta.is_nan() || self.beta <= 0.0 {
            return Err(SimError::config(format!("beta must be > 0, got {}", self.beta)));
        }
        if self.chunk_size == 0 {
            return Err(SimError::config("chunk_size must be > 0"));
        }
        Ok(())
    }

    /// NIC stage cost for `bytes`.
    pub fn wire(&self, bytes: u64) -> OpCost {
        OpCost {
            fixed: VirtualTime::secs_lossy(self.alpha),
            work: VirtualTime::secs_lossy(bytes as f64 / self.beta),
        }
    }
}

/// A resource a transfer passes through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Hop {
    SrcPcie,
    Nic,
    DstPcie,
}

/// Decomposition of one message into costed stages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferPlan {
    pub hops: Vec<Hop>,
    /// Chunk sizes; every chunk passes through every hop in order.
    pub chunks: Vec<u64>,
    pub chunked: bool,
}

impl TransferPlan {
    /// Plan for a message whose send and receive buffers live at `loc`.
    pub fn new(size: u64, loc: Location, protocol: Protocol, net: &NetParams) -> Self {
        let direct = TransferPlan {
            hops: vec![Hop::Nic],
            chunks: vec![size],
            chunked: false,
        };
        if loc == Location::Host {
            return direct;
        }
        match protocol {
            Protocol::DeviceDirect => direct,
            Protocol::HostStaging => TransferPlan {
                hops: vec![Hop::SrcPcie, Hop::Nic, Hop::DstPcie],
                chunks: vec![size],
                chunked: false,
            },
            Protocol::PipelinedHostStaging if size <= net.pipeline_threshold => direct,
            Protocol::PipelinedHostStaging => {
                let n = size.div_ceil(net.chunk_size);
                let chunks = (0..n)
                    .map(|i| net.chunk_size.min(size - i * net.chunk_size))
                    .collect();
                TransferPlan {
                    hops: vec![Hop::SrcPcie, Hop::Nic, Hop::DstPcie],
                    chunks,
                    chunked: true,
                }
            }
        }
    }

    /// Total bytes through each hop.
    pub fn stages(&self) -> Vec<(Hop, u64)> {
        let total: u64 = self.chunks.iter().sum();
        self.hops.iter().map(|&h| (h, total)).collect()
    }

    pub fn size(&self) -> u64 {
        self.chunks.iter().sum()
    }

    pub fn hop_cost(hop: Hop, bytes: u64, net: &NetParams, cost: &CostModel) -> OpCost {
        match hop {
            Hop::Nic => net.wire(bytes),
            Hop::SrcPcie | Hop::DstPcie => cost.copy(bytes),
        }
    }

    /// Finish time of every (hop, chunk) in an uncontended flow shop: a
    /// chunk enters a hop once it left the previous hop and the previous
    /// chunk left this hop.
    fn schedule(&self, net: &NetParams, cost: &CostModel) -> Vec<Vec<VirtualTime>> {
        let mut fin = vec![vec![VirtualTime::ZERO; self.chunks.len()]; self.hops.len()];
        for (s, &hop) in self.hops.iter().enumerate() {
            for (k, &c) in self.chunks.iter().enumerate() {
                let mut start = VirtualTime::ZERO;
                if s > 0 {
                    start = start.max(fin[s - 1][k]);
                }
                if k > 0 {
                    start = start.max(fin[s][k - 1]);
                }
                fin[s][k] = start + Self::hop_cost(hop, c, net, cost).total();
            }
        }
        fin
    }

    /// Time from match until the last byte reaches the destination.
    pub fn duration(&self, net: &NetParams, cost: &CostModel) -> VirtualTime {
        let fin = self.schedule(net, cost);
        *fin.last().and_then(|r| r.last()).unwrap_or(&VirtualTime::ZERO)
    }

    /// Time from match until the source buffer may be reused.
    pub fn source_release(&self, net: &NetParams, cost: &CostModel) -> VirtualTime {
        let fin = self.schedule(net, cost);
        *fin.first().and_then(|r| r.last()).unwrap_or(&VirtualTime::ZERO)
    }
}

/// Uncontended duration and plan of a device-resident message.
pub fn transfer_time(size: u64, protocol: Protocol, net: &NetParams, cost: &CostModel) -> (VirtualTime, TransferPlan) {
    let plan = TransferPlan::new(size, Location::Device, protocol, net);
    (plan.duration(net, cost), plan)
}
