//! The discrete-event loop.

use rand::Rng;

use super::flow::{ExactFlow, FlowMap};
use super::queue::{EventKind, EventQueue, Payload};
use super::trace::{EventRecord, HoldRecord, Trace};
use super::{Scenario, ScheduleSpec, StartupHold, Topology};
use crate::matan::expm;
use crate::sampling::{
    counter_rng, generate_schedule, trigger_fires, validate_schedule, ChannelSchedule, Domain,
    ErrorModel,
};
use crate::{Error, Result, Vector};

/// Trigger checks per dwell period in continuous mode.
pub const CHECKS_PER_DWELL: f64 = 50.0;
/// Width to which a trigger crossing is bisected.
pub const TRIGGER_BISECTION_TOL: f64 = 1e-9;

/// Runs a scenario with exact propagation.
pub fn run(s: &Scenario) -> Result<Trace> {
    run_with_flow(s, &mut ExactFlow::new(s.model.a().clone()))
}

/// As [`run`], but insists on an event-trigger error model.
pub fn run_event_triggered(s: &Scenario) -> Result<Trace> {
    if !s.error_model.is_event_triggered() {
        return Err(Error::Scenario("run_event_triggered needs an event_trigger error model".into()));
    }
    run(s)
}

struct Trigger {
    dwell: f64,
    /// Sample instant and value of the last transmission.
    last: Option<(f64, Vector)>,
}

struct Engine<'a> {
    s: &'a Scenario,
    topo: Topology,
    flow: &'a mut dyn FlowMap,
    t: f64,
    x: Vec<Vector>,
    holds: Vec<Vector>,
    drifts: Vec<Vector>,
    queue: EventQueue,
    /// Delivery instants still in the queue; the next one bounds how far a
    /// trigger lookahead may assume constant drifts.
    pending: Vec<f64>,
    schedules: Option<Vec<ChannelSchedule>>,
    triggers: Option<Vec<Trigger>>,
    /// `xᵢ(t_k) - κ(t_k)` of the last delivered sample per agent.
    tilde: Option<Vec<Vector>>,
    x0_sum: Vector,
    trace: Trace,
    sample_counter: Vec<u64>,
}

/// Validates `s` and propagates with `flow` (swap in a reference integrator
/// to cross-check the closed-form stepper).
pub fn run_with_flow(s: &Scenario, flow: &mut dyn FlowMap) -> Result<Trace> {
    s.validate()?;
    let topo = s.topology();
    let nn = s.state_dim();
    let x: Vec<Vector> = (0..topo.agents)
        .map(|a| s.x0.rows(a * nn, nn).into_owned())
        .collect();
    let x0_sum = x.iter().fold(Vector::zeros(nn), |acc, v| acc + v);

    let schedules = match &s.schedule {
        ScheduleSpec::Generated { h_min, h_max, tau_max } => {
            let v = (0..topo.channels)
                .map(|c| generate_schedule(*h_min, *h_max, *tau_max, s.horizon.max(*h_max), s.seed, c))
                .collect::<Result<Vec<_>>>()?;
            for sc in &v {
                validate_schedule(sc, *h_max * (1.0 + 1e-12), *tau_max)?;
            }
            Some(v)
        }
        ScheduleSpec::Explicit { schedules } => {
            for sc in schedules {
                validate_schedule(sc, f64::INFINITY, f64::INFINITY)?;
            }
            Some(schedules.clone())
        }
        ScheduleSpec::Continuous => None,
    };
    let triggers = match s.error_model {
        ErrorModel::EventTrigger { dwell, .. } => {
            Some((0..topo.channels).map(|_| Trigger { dwell, last: None }).collect())
        }
        _ => None,
    };
    let mut e = Engine {
        s,
        flow,
        t: 0.0,
        holds: vec![Vector::zeros(nn); topo.channels],
        drifts: vec![Vector::zeros(nn); topo.agents],
        queue: EventQueue::default(),
        pending: Vec::new(),
        schedules,
        triggers,
        tilde: None,
        trace: Trace::new(s, topo.channels, x0_sum.clone()),
        sample_counter: vec![0; topo.channels],
        x,
        x0_sum,
        topo,
    };
    e.init()?;
    e.run_loop()?;
    Ok(e.trace)
}

impl Engine<'_> {
    fn channel_value(&self, x: &[Vector], c: usize) -> Vector {
        let mut v = Vector::zeros(self.s.state_dim());
        for (a, xa) in x.iter().enumerate() {
            let w = self.topo.sense[(c, a)];
            if w != 0.0 {
                v.axpy(w, xa, 1.0);
            }
        }
        v
    }

    fn kappa(&self, t: f64) -> Result<Vector> {
        Ok(expm(self.s.model.a(), t)? * &self.x0_sum / self.topo.agents as f64)
    }

    fn recompute_drifts(&mut self) {
        let nn = self.s.state_dim();
        for a in 0..self.topo.agents {
            let mut sum = Vector::zeros(nn);
            for (c, h) in self.holds.iter().enumerate() {
                let w = self.topo.weights[(a, c)];
                if w != 0.0 {
                    sum.axpy(w, h, 1.0);
                }
            }
            self.drifts[a] = -(&self.topo.feedback * sum);
        }
    }

    fn set_hold(&mut self, c: usize, v: Vector) {
        let v = match &self.s.saturation {
            Some(sat) => sat.apply(&v).1,
            None => v,
        };
        self.trace.holds[c].push(HoldRecord { time: self.t, value: v.clone() });
        self.holds[c] = v;
    }

    fn init(&mut self) -> Result<()> {
        if self.s.startup == StartupHold::InitialState {
            for c in 0..self.topo.channels {
                let v = self.channel_value(&self.x, c);
                self.set_hold(c, v);
            }
        }
        self.recompute_drifts();
        if self.s.mode.uses_broadcast() {
            let k0 = self.kappa(0.0)?;
            self.tilde = Some(self.x.iter().map(|x| x - &k0).collect());
        }
        match &self.schedules {
            Some(sch) => {
                for (c, sc) in sch.iter().enumerate() {
                    if let Some(&t0) = sc.sample_instants.first() {
                        if t0 <= self.s.horizon {
                            self.queue.push(t0, EventKind::Sample, c, Payload::Sample { k: 0, forced: false });
                        }
                    }
                }
            }
            None => {
                let dwell = self.triggers.as_ref().expect("validated")[0].dwell;
                for c in 0..self.topo.channels {
                    let t0 = counter_rng(self.s.seed, Domain::Schedule, c as u64, 0).random::<f64>() * dwell;
                    if t0 <= self.s.horizon {
                        self.queue.push(t0, EventKind::Sample, c, Payload::Sample { k: 0, forced: true });
                    }
                }
            }
        }
        self.snapshot(true)?;
        Ok(())
    }

    fn advance_to(&mut self, t: f64) -> Result<()> {
        if t > self.t {
            self.flow.propagate(&mut self.x, &self.drifts, t - self.t)?;
            self.t = t;
        }
        Ok(())
    }

    fn snapshot(&mut self, force: bool) -> Result<()> {
        if !force && !self.s.output.snapshot_events {
            return Ok(());
        }
        let mut stacked = Vector::zeros(self.s.x0.len());
        let nn = self.s.state_dim();
        for (a, xa) in self.x.iter().enumerate() {
            stacked.rows_mut(a * nn, nn).copy_from(xa);
        }
        let tilde = self.tilde.as_ref().map(|v| v.iter().map(|d| d.norm_squared()).sum::<f64>());
        self.trace.push_snapshot(self.t, stacked, tilde);
        Ok(())
    }

    fn run_loop(&mut self) -> Result<()> {
        let horizon = self.s.horizon;
        let grid: Vec<f64> = match self.s.output.grid_points {
            0 => Vec::new(),
            g => (0..g).map(|j| horizon * j as f64 / (g - 1) as f64).collect(),
        };
        let mut next_grid = 1.min(grid.len());
        while let Some(ev) = self.queue.pop() {
            if ev.time > horizon {
                break;
            }
            while next_grid < grid.len() && grid[next_grid] < ev.time {
                self.advance_to(grid[next_grid])?;
                self.snapshot(true)?;
                next_grid += 1;
            }
            self.advance_to(ev.time)?;
            let update = match (ev.kind, ev.payload) {
                (EventKind::Sample, Payload::Sample { k, forced }) => self.on_sample(ev.channel, k, forced)?,
                (EventKind::Deliver, Payload::Deliver { value, tilde }) => {
                    self.on_deliver(ev.channel, value, tilde)
                }
                (EventKind::DwellExpire | EventKind::TriggerCheck, _) => {
                    self.on_check(ev.channel)?;
                    false
                }
                (kind, _) => unreachable!("{kind:?} queued without its payload"),
            };
            if self.trace.events.len() >= self.s.output.max_events {
                return Err(Error::TraceOverflow(self.s.output.max_events));
            }
            self.trace.events.push(EventRecord { time: ev.time, channel: ev.channel, kind: ev.kind, update });
            if ev.kind != EventKind::TriggerCheck {
                self.snapshot(false)?;
            }
        }
        while next_grid < grid.len() {
            self.advance_to(grid[next_grid])?;
            self.snapshot(true)?;
            next_grid += 1;
        }
        self.advance_to(horizon)?;
        self.snapshot(true)?;
        Ok(())
    }

    /// Returns whether the sample was transmitted.
    fn on_sample(&mut self, c: usize, k: u64, forced: bool) -> Result<bool> {
        let t = self.t;
        let value = self.channel_value(&self.x, c);
        let index = self.sample_counter[c];
        self.sample_counter[c] += 1;
        let (delay, next) = match &self.schedules {
            Some(sch) => {
                let sc = &sch[c];
                let k = k as usize;
                (sc.delays[k], sc.sample_instants.get(k + 1).copied())
            }
            None => (0.0, None),
        };
        let transmit = match &mut self.triggers {
            Some(tr) => {
                let tr = &mut tr[c];
                let fire = forced
                    || match &tr.last {
                        None => true,
                        Some((t_last, held)) => {
                            t - t_last >= tr.dwell * (1.0 - 1e-12)
                                && trigger_fires(&self.s.error_model, &value, held)
                        }
                    };
                if fire {
                    tr.last = Some((t, value.clone()));
                }
                fire.then(|| value.clone())
            }
            None => Some(self.s.error_model.measure(&value, self.s.seed, c, index)),
        };
        let tilde = match &self.tilde {
            Some(_) => Some(&value - self.kappa(t)?),
            None => None,
        };
        if transmit.is_some() {
            self.trace.update_times[c].push(t);
        }
        let fired = transmit.is_some();
        let at = t + delay + self.s.input_delay;
        self.pending.push(at);
        self.queue.push(at, EventKind::Deliver, c, Payload::Deliver { value: transmit, tilde });
        if let Some(tn) = next {
            if tn <= self.s.horizon {
                self.queue.push(tn, EventKind::Sample, c, Payload::Sample { k: k + 1, forced: false });
            }
        }
        if self.schedules.is_none() {
            let dwell = self.triggers.as_ref().expect("continuous mode has triggers")[c].dwell;
            self.queue.push(t + dwell, EventKind::DwellExpire, c, Payload::None);
        }
        Ok(fired)
    }

    fn on_deliver(&mut self, c: usize, value: Option<Vector>, tilde: Option<Vector>) -> bool {
        if let Some(i) = self.pending.iter().position(|&p| p == self.t) {
            self.pending.swap_remove(i);
        }
        if let (Some(td), Some(store)) = (tilde, self.tilde.as_mut()) {
            store[c] = td;
        }
        match value {
            Some(v) => {
                self.set_hold(c, v);
                self.recompute_drifts();
                true
            }
            None => false,
        }
    }

    fn fires(&self, x: &[Vector], c: usize) -> bool {
        let held = &self.triggers.as_ref().expect("trigger mode")[c]
            .last
            .as_ref()
            .expect("checks start after the first transmission")
            .1;
        trigger_fires(&self.s.error_model, &self.channel_value(x, c), held)
    }

    /// Continuous watching: fire now, or look ahead one check interval
    /// (never past the next delivery) and bisect the crossing.
    fn on_check(&mut self, c: usize) -> Result<()> {
        let t = self.t;
        if self.fires(&self.x, c) {
            let k = self.sample_counter[c];
            self.queue.push(t, EventKind::Sample, c, Payload::Sample { k, forced: true });
            return Ok(());
        }
        let dwell = self.triggers.as_ref().expect("trigger mode")[c].dwell;
        let next_delivery = self.pending.iter().copied().fold(f64::INFINITY, f64::min);
        let th = (t + dwell / CHECKS_PER_DWELL).min(next_delivery).min(self.s.horizon);
        if th <= t {
            if t < self.s.horizon {
                self.queue.push(t, EventKind::TriggerCheck, c, Payload::None);
            }
            return Ok(());
        }
        let at = |eng: &mut Self, tau: f64| -> Result<Vec<Vector>> {
            let mut x = eng.x.clone();
            eng.flow.propagate(&mut x, &eng.drifts, tau - t)?;
            Ok(x)
        };
        let xh = at(self, th)?;
        if self.fires(&xh, c) {
            let (mut lo, mut hi) = (t, th);
            while hi - lo > TRIGGER_BISECTION_TOL {
                let mid = 0.5 * (lo + hi);
                let xm = at(self, mid)?;
                if self.fires(&xm, c) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let k = self.sample_counter[c];
            self.queue.push(hi, EventKind::Sample, c, Payload::Sample { k, forced: true });
        } else {
            self.queue.push(th, EventKind::TriggerCheck, c, Payload::None);
        }
        Ok(())
    }
}
