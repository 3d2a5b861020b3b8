#![allow(dead_code)]

use overlapsim::runtime::{Application, HostCtx, Message};
use overlapsim::ids::ChareId;
use overlapsim::Result;

pub type Ctx<'a, 'b> = &'a mut HostCtx<'b, u64, u32>;
pub type OnMsg = Box<dyn FnMut(&mut HostCtx<'_, u64, u32>, Message<u64>) -> Result<()>>;
pub type OnResume = Box<dyn FnMut(&mut HostCtx<'_, u64, u32>, ChareId, u32, Option<Message<u64>>) -> Result<()>>;

/// Test application whose handlers are closures. Payloads are `u64`,
/// continuations are plain `u32` labels.
pub struct Script {
    pub on_msg: OnMsg,
    pub on_resume: OnResume,
}

impl Script {
    pub fn new(on_msg: OnMsg) -> Self {
        Script {
            on_msg,
            on_resume: Box::new(|_, _, _, _| Ok(())),
        }
    }

    pub fn with_resume(mut self, f: OnResume) -> Self {
        self.on_resume = f;
        self
    }
}

impl Application for Script {
    type Payload = u64;
    type Cont = u32;

    fn on_message(&mut self, ctx: &mut HostCtx<'_, u64, u32>, msg: Message<u64>) -> Result<()> {
        (self.on_msg)(ctx, msg)
    }

    fn on_resume(
        &mut self,
        ctx: &mut HostCtx<'_, u64, u32>,
        chare: ChareId,
        cont: u32,
        msg: Option<Message<u64>>,
    ) -> Result<()> {
        (self.on_resume)(ctx, chare, cont, msg)
    }
}

pub fn us(t: overlapsim::VirtualTime) -> f64 {
    t.as_secs() * 1e6
}

use std::cell::RefCell;
use std::rc::Rc;

use overlapsim::device::CostModel;
use overlapsim::net::NetParams;
use overlapsim::runtime::{Core, Machine, RuntimeOptions};

pub type Log<T> = Rc<RefCell<Vec<T>>>;

pub fn log<T>() -> Log<T> {
    Rc::new(RefCell::new(Vec::new()))
}

pub fn machine(nodes: u32, gpus_per_node: u32, pes_per_node: u32) -> Machine {
    Machine {
        nodes,
        gpus_per_node,
        pes_per_node,
    }
}

/// Default device constants with free host overheads.
pub fn free_host() -> CostModel {
    CostModel {
        t_launch: 0.0,
        t_graph_launch: 0.0,
        t_entry: 0.0,
        t_msg: 0.0,
        ..CostModel::default()
    }
}

pub fn core(m: Machine, cost: CostModel, net: NetParams) -> Core<u64, u32> {
    Core::new(m, cost, net, &RuntimeOptions::default()).unwrap()
}
