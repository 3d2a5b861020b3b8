//! Experiment configuration and its line-oriented `key = value` file format.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::device::CostModel;
use crate::engine::DEFAULT_EVENT_CAP;
use crate::error::{Result, SimError};
use crate::geom::Dims3;
use crate::jacobi::{decompose, Decomposition, ExecMode, FusionStrategy, GridSpec, LaunchMode, SyncPolicy};
use crate::net::{NetParams, Protocol};
use crate::runtime::Machine;

crate::jacobi::named_enum!(
    /// How node sweeps resize the grid.
    Scaling {
        Weak => "weak",
        Strong => "strong",
    }
);

crate::jacobi::named_enum!(
    Precision {
        F64 => "f64",
        F32 => "f32",
    }
);

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub machine: Machine,
    pub cost: CostModel,
    pub net: NetParams,
    pub grid: GridSpec,
    pub precision: Precision,
    pub mode: ExecMode,
    /// Chares per PE.
    pub odf: u32,
    pub fusion: FusionStrategy,
    pub launch: LaunchMode,
    pub sync: SyncPolicy,
    /// MPI only: update the interior while halos are in flight.
    pub manual_overlap: bool,
    pub seed: u64,
    /// Add seeded jitter to every message delivery.
    pub perturb: bool,
    /// Largest delivery jitter, seconds.
    pub jitter: f64,
    /// Compute real grid values. Off gives timing only.
    pub numerics: bool,
    pub scaling: Scaling,
    pub event_cap: u64,
}

impl Scenario {
    /// Defaults for everything except the grid and mode.
    pub fn new(dims: Dims3, mode: ExecMode) -> Self {
        Scenario {
            name: "scenario".into(),
            machine: Machine::default(),
            cost: CostModel::default(),
            net: NetParams::default(),
            grid: GridSpec {
                dims,
                iterations: 100,
                warmup: 10,
            },
            precision: Precision::F64,
            mode,
            odf: 1,
            fusion: FusionStrategy::None,
            launch: LaunchMode::Individual,
            sync: SyncPolicy::Optimized1Sync,
            manual_overlap: false,
            seed: 0,
            perturb: false,
            jitter: 1e-6,
            numerics: true,
            scaling: Scaling::Weak,
            event_cap: DEFAULT_EVENT_CAP,
        }
    }

    /// Work units the grid is split into.
    pub fn chares(&self) -> usize {
        let per_pe = if self.mode.is_mpi() { 1 } else { self.odf as usize };
        per_pe * self.machine.pes() as usize
    }

    pub fn decomposition(&self) -> Result<Decomposition> {
        decompose(self.grid.dims, self.chares())
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty()
            || self.name.trim() != self.name
            || self.name.contains([',', '\n', '\r', '"', '#'])
        {
            return Err(SimError::config(format!(
                "scenario name '{}' must be nonempty, trimmed, and free of commas, quotes, '#' or newlines",
                self.name
            )));
        }
        self.machine.validate()?;
        self.cost.validate()?;
        self.net.validate()?;
        self.grid.validate()?;
        if self.odf == 0 {
            return Err(SimError::config("odf must be >= 1"));
        }
        if self.mode.is_mpi() && self.odf != 1 {
            return Err(SimError::config(format!("{} requires odf = 1, got {}", self.mode, self.odf)));
        }
        if self.manual_overlap && !self.mode.is_mpi() {
            return Err(SimError::config("manual_overlap applies to MPI modes only"));
        }
        if self.mode != ExecMode::CharmD && self.fusion != FusionStrategy::None {
            return Err(SimError::config(format!("fusion {} requires mode charm_d", self.fusion)));
        }
        if self.mode != ExecMode::CharmD && self.launch == LaunchMode::Graph {
            return Err(SimError::config("graph launch requires mode charm_d"));
        }
        if !self.jitter.is_finite() || self.jitter < 0.0 {
            return Err(SimError::config(format!("jitter must be >= 0, got {}", self.jitter)));
        }
        if self.event_cap == 0 {
            return Err(SimError::config("event_cap must be >= 1"));
        }
        self.decomposition()?;
        Ok(())
    }

    /// Read and validate a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Io(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut b = Builder::default();
        let mut section: Option<String> = None;
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let l = raw.split('#').next().unwrap_or("").trim();
            if l.is_empty() {
                continue;
            }
            if let Some(rest) = l.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| at(line, "unterminated section header"))?
                    .trim();
                if !SECTIONS.contains(&name) {
                    return Err(at(line, &format!("unknown section [{name}]")));
                }
                section = Some(name.to_string());
                continue;
            }
            let (k, v) = l
                .split_once('=')
                .ok_or_else(|| at(line, "expected `key = value`"))?;
            let (k, v) = (k.trim(), v.trim());
            let sec = section
                .as_deref()
                .ok_or_else(|| at(line, &format!("key '{k}' appears before any [section]")))?;
            if v.is_empty() {
                return Err(at(line, &format!("empty value for {sec}.{k}")));
            }
            b.set(sec, k, v).map_err(|e| at(line, &e))?;
        }
        let s = b.finish()?;
        s.validate()?;
        Ok(s)
    }

    /// Render every key, so that `parse(emit(s)) == s`.
    pub fn emit(&self) -> String {
        let mut o = String::new();
        let c = &self.cost;
        let n = &self.net;
        let d = self.grid.dims;
        let _ = write!(
            o,
            "[machine]\nnodes = {}\ngpus_per_node = {}\npes_per_node = {}\n\n",
            self.machine.nodes, self.machine.gpus_per_node, self.machine.pes_per_node
        );
        let _ = write!(
            o,
            "[cost]\nt_launch = {:?}\nt_graph_launch = {:?}\nt_kernel_fixed = {:?}\nkernel_rate = {:?}\n\
             pack_rate = {:?}\npcie_bw = {:?}\npcie_lat = {:?}\nslots = {}\nshared_throughput = {}\n\
             t_entry = {:?}\nt_msg = {:?}\n\n",
            c.t_launch,
            c.t_graph_launch,
            c.t_kernel_fixed,
            c.kernel_rate,
            c.pack_rate,
            c.pcie_bw,
            c.pcie_lat,
            c.slots,
            c.shared_throughput,
            c.t_entry,
            c.t_msg
        );
        let _ = write!(
            o,
            "[net]\nalpha = {:?}\nbeta = {:?}\npipeline_threshold = {}\nchunk_size = {}\nmode = {}\nnic_fair_share = {}\n\n",
            n.alpha,
            n.beta,
            n.pipeline_threshold,
            n.chunk_size,
            n.mode.name(),
            n.nic_fair_share
        );
        let _ = write!(
            o,
            "[grid]\ndims = {},{},{}\niterations = {}\nwarmup = {}\nprecision = {}\n\n",
            d.x, d.y, d.z, self.grid.iterations, self.grid.warmup, self.precision
        );
        let _ = write!(
            o,
            "[run]\nname = {}\nmode = {}\nodf = {}\nfusion = {}\nlaunch = {}\nsync = {}\nmanual_overlap = {}\n\
             seed = {}\nperturb = {}\njitter = {:?}\nnumerics = {}\nscaling = {}\nevent_cap = {}\n",
            self.name,
            self.mode,
            self.odf,
            self.fusion,
            self.launch,
            self.sync,
            self.manual_overlap,
            self.seed,
            self.perturb,
            self.jitter,
            self.numerics,
            self.scaling,
            self.event_cap
        );
        o
    }
}

const SECTIONS: [&str; 5] = ["machine", "cost", "net", "grid", "run"];

fn at(line: usize, msg: &str) -> SimError {
    SimError::config(format!("line {line}: {msg}"))
}

fn val<T: FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
    v.parse()
        .map_err(|_| format!("malformed value '{v}' for {key}"))
}

fn enum_val<T: FromStr<Err = SimError>>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|e: SimError| e.to_string())
}

fn parse_dims(v: &str) -> std::result::Result<Dims3, String> {
    let parts: Vec<&str> = v.split([',', 'x']).map(str::trim).collect();
    let nums: Vec<usize> = parts
        .iter()
        .map(|p| p.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| format!("malformed dims '{v}', expected `x,y,z` or a single edge length"))?;
    match nums[..] {
        [e] => Ok(Dims3::cube(e)),
        [x, y, z] => Ok(Dims3::new(x, y, z)),
        _ => Err(format!("dims '{v}' must have 1 or 3 components")),
    }
}

#[derive(Default)]
struct Builder {
    s: Option<Scenario>,
    dims: Option<Dims3>,
    mode: Option<ExecMode>,
    seen: std::collections::HashSet<String>,
}

impl Builder {
    fn scenario(&mut self) -> &mut Scenario {
        self.s
            .get_or_insert_with(|| Scenario::new(Dims3::cube(1), ExecMode::CharmD))
    }

    fn set(&mut self, sec: &str, key: &str, v: &str) -> std::result::Result<(), String> {
        let full = format!("{sec}.{key}");
        if !self.seen.insert(full.clone()) {
            return Err(format!("duplicate key {full}"));
        }
        let k = full.as_str();
        let s = self.scenario();
        match k {
            "machine.nodes" => s.machine.nodes = val(k, v)?,
            "machine.gpus_per_node" => s.machine.gpus_per_node = val(k, v)?,
            "machine.pes_per_node" => s.machine.pes_per_node = val(k, v)?,
            "cost.t_launch" => s.cost.t_launch = val(k, v)?,
            "cost.t_graph_launch" => s.cost.t_graph_launch = val(k, v)?,
            "cost.t_kernel_fixed" => s.cost.t_kernel_fixed = val(k, v)?,
            "cost.kernel_rate" => s.cost.kernel_rate = val(k, v)?,
            "cost.pack_rate" => s.cost.pack_rate = val(k, v)?,
            "cost.pcie_bw" => s.cost.pcie_bw = val(k, v)?,
            "cost.pcie_lat" => s.cost.pcie_lat = val(k, v)?,
            "cost.slots" => s.cost.slots = val(k, v)?,
            "cost.shared_throughput" => s.cost.shared_throughput = val(k, v)?,
            "cost.t_entry" => s.cost.t_entry = val(k, v)?,
            "cost.t_msg" => s.cost.t_msg = val(k, v)?,
            "net.alpha" => s.net.alpha = val(k, v)?,
            "net.beta" => s.net.beta = val(k, v)?,
            "net.pipeline_threshold" => s.net.pipeline_threshold = val(k, v)?,
            "net.chunk_size" => s.net.chunk_size = val(k, v)?,
            "net.mode" => {
                s.net.mode = Protocol::parse(v).ok_or_else(|| {
                    format!("unknown net.mode '{v}', expected host_staging, device_direct or pipelined")
                })?
            }
            "net.nic_fair_share" => s.net.nic_fair_share = val(k, v)?,
            "grid.dims" => self.dims = Some(parse_dims(v)?),
            "grid.iterations" => s.grid.iterations = val(k, v)?,
            "grid.warmup" => s.grid.warmup = val(k, v)?,
            "grid.precision" => s.precision = enum_val(v)?,
            "run.name" => s.name = v.to_string(),
            "run.mode" => self.mode = Some(enum_val(v)?),
            "run.odf" => s.odf = val(k, v)?,
            "run.fusion" => s.fusion = enum_val(v)?,
            "run.launch" => s.launch = enum_val(v)?,
            "run.sync" => s.sync = enum_val(v)?,
            "run.manual_overlap" => s.manual_overlap = val(k, v)?,
            "run.seed" => s.seed = val(k, v)?,
            "run.perturb" => s.perturb = val(k, v)?,
            "run.jitter" => s.jitter = val(k, v)?,
            "run.numerics" => s.numerics = val(k, v)?,
            "run.scaling" => s.scaling = enum_val(v)?,
            "run.event_cap" => s.event_cap = val(k, v)?,
            _ => return Err(format!("unknown key '{key}' in [{sec}]")),
        }
        Ok(())
    }

    fn finish(mut self) -> Result<Scenario> {
        let dims = self
            .dims
            .ok_or_else(|| SimError::config("missing required key grid.dims"))?;
        let mode = self
            .mode
            .ok_or_else(|| SimError::config("missing required key run.mode"))?;
        let s = self.scenario();
        s.grid.dims = dims;
        s.mode = mode;
        Ok(self.s.expect("initialized above"))
    }
}
