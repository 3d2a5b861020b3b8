use crate::device::KernelWork;
use crate::error::{Result, SimError};
use crate::geom::Dir;
use crate::ids::PeId;
use crate::jacobi::{decompose, ExecMode, FusionStrategy, LaunchMode, SyncPolicy};
use crate::net::{Location, Protocol, TransferPlan};
use crate::scenario::{Precision, Scenario};
use crate::time::VirtualTime;

/// Per-iteration times of a schedule with no resource contention, as a
/// max-plus recurrence over every rank's dependency chain.
///
/// Valid for one chare per PE and per GPU, fusion none, individual
/// launches, no manual overlap, no jitter, and exclusive (non-shared)
/// device engines and NICs. Returns one duration per iteration, warmup
/// included.
pub fn analytic_iter_time(s: &Scenario) -> Result<Vec<VirtualTime>> {
    check_domain(s)?;
    let pes = s.machine.pes() as usize;
    let dec = decompose(s.grid.dims, pes)?;
    let elem: u64 = match s.precision {
        Precision::F64 => 8,
        Precision::F32 => 4,
    };
    let c = &s.cost;
    let (e, l, msg) = (c.entry(), c.launch(), c.msg());
    let update = c.kernel(KernelWork::stencil(dec.block.count() as u64)).total();
    let protocol = match s.mode {
        ExecMode::MpiD => s.net.mode,
        _ => Protocol::DeviceDirect,
    };

    // Neighbor lists in direction order. `back` is the index of the reverse
    // link in the peer's list.
    struct Link {
        peer: usize,
        back: usize,
        pack: VirtualTime,
        release: VirtualTime,
        arrive: VirtualTime,
    }
    let mut links: Vec<Vec<Link>> = Vec::with_capacity(pes);
    let dirs_of = |r: usize| -> Vec<(Dir, usize)> {
        let pos = dec.parts.unlinear(r);
        Dir::ALL
            .iter()
            .filter_map(|&d| d.step(pos, dec.parts).map(|q| (d, dec.parts.linear(q))))
            .collect()
    };
    for r in 0..pes {
        let mut v = Vec::new();
        for (d, peer) in dirs_of(r) {
            let back = dirs_of(peer)
                .iter()
                .position(|&(pd, _)| pd == d.opposite())
                .expect("neighbor relation is symmetric");
            let face = dec.block.face(d.axis()) as u64;
            let plan = TransferPlan::new(face * elem, Location::Device, protocol, &s.net);
            v.push(Link {
                peer,
                back,
                pack: c.kernel(KernelWork::pack(face)).total(),
                release: plan.source_release(&s.net, c),
                arrive: plan.duration(&s.net, c),
            });
        }
        links.push(v);
    }

    let total = s.grid.total_iterations() as usize;
    let baseline = s.sync == SyncPolicy::Baseline2Sync;
    // Device ops of one rank are strictly chained, so one horizon suffices.
    let mut dev = vec![VirtualTime::ZERO; pes];
    let run = |dev: &mut VirtualTime, submit: VirtualTime, cost: VirtualTime| {
        let start = submit.max(*dev);
        *dev = start + cost;
        *dev
    };
    let mut ends = vec![VirtualTime::ZERO; total];

    if s.mode == ExecMode::CharmD {
        // Ranks without neighbors start iteration 0 inline in their first
        // handler; everyone else waits for the packed-halo callback.
        let mut packed = vec![VirtualTime::ZERO; pes];
        let mut pe_free = vec![VirtualTime::ZERO; pes];
        let mut inline_start = vec![None; pes];
        for r in 0..pes {
            let mut t = e;
            if links[r].is_empty() {
                inline_start[r] = Some(t);
                continue;
            }
            for k in &links[r] {
                t += l;
                run(&mut dev[r], t, k.pack);
            }
            packed[r] = dev[r].max(t);
            pe_free[r] = t;
        }
        for end in ends.iter_mut() {
            let mut start = vec![VirtualTime::ZERO; pes];
            for r in 0..pes {
                start[r] = match inline_start[r].take() {
                    Some(t) => t,
                    None => packed[r].max(pe_free[r]) + e,
                };
            }
            // Posts: receives first, then sends, one t_msg each.
            let post = |r: usize, k: usize, send: bool| {
                let m = links[r].len() as u64;
                let slot = if send { m + k as u64 + 1 } else { k as u64 + 1 };
                start[r] + VirtualTime::from_ps(slot * msg.as_ps())
            };
            for r in 0..pes {
                let m = links[r].len();
                let mut t = start[r];
                if m > 0 {
                    let h_end = post(r, m - 1, true);
                    let mut arrivals: Vec<(VirtualTime, u32, Option<VirtualTime>)> = Vec::with_capacity(2 * m);
                    for (k, lk) in links[r].iter().enumerate() {
                        // My receive k pairs with the peer's send on the same face.
                        let matched = post(lk.peer, lk.back, true).max(post(r, k, false));
                        let recv_fire = matched + links[lk.peer][lk.back].arrive;
                        arrivals.push((recv_fire.max(post(r, k, false)), k as u32, Some(lk.pack)));
                        let matched = post(r, k, true).max(post(lk.peer, lk.back, false));
                        let send_fire = matched + lk.release;
                        arrivals.push((send_fire.max(post(r, k, true)), (m + k) as u32, None));
                    }
                    arrivals.sort_by_key(|&(a, tag, _)| (a, tag));
                    t = h_end;
                    for (a, _, unpack) in arrivals {
                        t = t.max(a) + e;
                        if let Some(cost) = unpack {
                            t += l;
                            run(&mut dev[r], t, cost);
                        }
                    }
                }
                t += l;
                let u_end = run(&mut dev[r], t, update);
                *end = (*end).max(u_end);
                if baseline {
                    t = t.max(u_end);
                }
                for k in &links[r] {
                    t += l;
                    run(&mut dev[r], t, k.pack);
                }
                packed[r] = dev[r].max(t);
                pe_free[r] = t;
            }
        }
    } else {
        let mut cursor = vec![e; pes];
        for end in ends.iter_mut() {
            let mut posted = vec![VirtualTime::ZERO; pes];
            for r in 0..pes {
                let mut t = cursor[r];
                for k in &links[r] {
                    t += l;
                    run(&mut dev[r], t, k.pack);
                }
                if !links[r].is_empty() {
                    t = t.max(dev[r]);
                }
                posted[r] = t;
            }
            let post = |r: usize, k: usize, send: bool| {
                let m = links[r].len() as u64;
                let slot = if send { m + k as u64 + 1 } else { k as u64 + 1 };
                posted[r] + VirtualTime::from_ps(slot * msg.as_ps())
            };
            for r in 0..pes {
                let m = links[r].len();
                let mut t = posted[r];
                if m > 0 {
                    t = post(r, m - 1, true);
                    for (k, lk) in links[r].iter().enumerate() {
                        let recv = post(lk.peer, lk.back, true).max(post(r, k, false))
                            + links[lk.peer][lk.back].arrive;
                        let send = post(r, k, true).max(post(lk.peer, lk.back, false)) + lk.release;
                        t = t.max(recv).max(send);
                    }
                    for k in &links[r] {
                        t += l;
                        run(&mut dev[r], t, k.pack);
                    }
                }
                t += l;
                let u_end = run(&mut dev[r], t, update);
                *end = (*end).max(u_end);
                if baseline {
                    t = t.max(u_end);
                }
                cursor[r] = t;
            }
        }
    }
    let mut prev = VirtualTime::ZERO;
    Ok(ends
        .into_iter()
        .map(|t| {
            let d = t - prev;
            prev = t;
            d
        })
        .collect())
}

fn check_domain(s: &Scenario) -> Result<()> {
    let why = if !matches!(s.mode, ExecMode::CharmD | ExecMode::MpiD) {
        Some("mode must be charm_d or mpi_d")
    } else if s.odf != 1 {
        Some("odf must be 1")
    } else if s.fusion != FusionStrategy::None || s.launch != LaunchMode::Individual {
        Some("fusion must be none with individual launches")
    } else if s.manual_overlap {
        Some("manual overlap must be off")
    } else if s.perturb && s.jitter > 0.0 {
        Some("delivery jitter must be off")
    } else if s.cost.shared_throughput || s.net.nic_fair_share {
        Some("device engines and NICs must be exclusive")
    } else {
        None
    };
    if let Some(w) = why {
        return Err(SimError::config(format!("scenario outside the closed-form domain: {w}")));
    }
    s.validate()?;
    let m = s.machine;
    let mut seen = std::collections::HashSet::new();
    for p in 0..m.pes() {
        if !seen.insert(m.device_of_pe(PeId(p))) {
            return Err(SimError::config(
                "scenario outside the closed-form domain: PEs must not share a GPU",
            ));
        }
    }
    Ok(())
}
