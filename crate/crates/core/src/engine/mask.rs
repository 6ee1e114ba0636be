//! Bitmask evolution for graphs with at most 64 vertices, used by the
//! exhaustive audits where every initial set is replayed on one log.

use super::{EventKind, EventLog};

#[derive(Clone, Copy)]
enum Op {
    Recover(u64),
    Arrow { from: u64, to: u64 },
}

pub(crate) struct MaskTimeline {
    times: Vec<f64>,
    ops: Vec<Op>,
}

impl MaskTimeline {
    pub(crate) fn new(log: &EventLog) -> Self {
        let mut times = Vec::with_capacity(log.timeline().len());
        let mut ops = Vec::with_capacity(log.timeline().len());
        for ev in log.timeline() {
            times.push(ev.time);
            ops.push(match ev.kind {
                EventKind::Recovery(v) => Op::Recover(1u64 << v),
                EventKind::Arrow(a, b) => Op::Arrow { from: 1u64 << a, to: 1u64 << b },
            });
        }
        Self { times, ops }
    }

    /// Occupied mask at time `t` from `init`. Vertices in `pins` ignore
    /// recovery marks strictly before `pin_expiry`.
    pub(crate) fn evolve(&self, init: u64, pins: u64, pin_expiry: f64, t: f64) -> u64 {
        let mut occ = init | pins;
        for (i, op) in self.ops.iter().enumerate() {
            let time = self.times[i];
            if time > t {
                break;
            }
            match *op {
                Op::Recover(bit) => {
                    if bit & pins == 0 || time >= pin_expiry {
                        occ &= !bit;
                    }
                }
                Op::Arrow { from, to } => {
                    if occ & from != 0 {
                        occ |= to;
                    }
                }
            }
        }
        occ
    }

    /// Dual mask at dual time `t` started from `x_bit`.
    pub(crate) fn dual(&self, x_bit: u64, pins: u64, pin_expiry: f64, t: f64) -> u64 {
        let mut dual = x_bit;
        for (i, op) in self.ops.iter().enumerate().rev() {
            let time = self.times[i];
            if time > t {
                continue;
            }
            match *op {
                Op::Recover(bit) => {
                    if bit & pins == 0 || time >= pin_expiry {
                        dual &= !bit;
                    }
                }
                Op::Arrow { from, to } => {
                    if dual & to != 0 {
                        dual |= from;
                    }
                }
            }
        }
        dual
    }
}
