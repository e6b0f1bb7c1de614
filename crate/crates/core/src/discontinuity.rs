//! Event scheduling and the stepping recipes used right after a topology
//! change.
//!
//! * [`DiscontinuityPolicy::Cda`]: two backward Euler half steps.
//! * [`DiscontinuityPolicy::Preliminary`]: two zero-history second-derivative
//!   half steps.
//! * [`DiscontinuityPolicy::Improved`]: one backward Euler step of size `ε`
//!   with `ẏ` forced to zero, then two zero-history second-derivative steps of
//!   size `(h − ε)/2`.
//!
//! Each recipe covers exactly one full step `h`; only its final state is
//! reportable.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use crate::dae::{DaeSystem, SystemState};
use crate::error::{Result, SimError};
use crate::integrators::{make_bem, step_fixed_ydot, step_to, Integrator, IntegratorCoefficients, NewtonSettings};

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: f64,
    pub action: String,
}

impl Event {
    pub fn new(time: f64, action: impl Into<String>) -> Self {
        Event {
            time,
            action: action.into(),
        }
    }
}

/// Validated, time-ordered events.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventSchedule {
    events: Vec<Event>,
}

impl EventSchedule {
    pub fn new(mut events: Vec<Event>) -> Result<Self> {
        if let Some(e) = events.iter().find(|e| !(e.time >= 0.0 && e.time.is_finite())) {
            return Err(SimError::Scheduling(format!("event '{}' has invalid time {}", e.action, e.time)));
        }
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        if let Some(w) = events.windows(2).find(|w| w[0].time == w[1].time) {
            return Err(SimError::Scheduling(format!(
                "events '{}' and '{}' share time {}",
                w[0].action, w[1].action, w[0].time
            )));
        }
        Ok(EventSchedule { events })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Default `ε/h` for the improved recipe.
pub const DEFAULT_EPS_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiscontinuityPolicy {
    Cda,
    Preliminary,
    Improved { eps_fraction: f64 },
}

impl DiscontinuityPolicy {
    pub fn improved() -> Self {
        DiscontinuityPolicy::Improved {
            eps_fraction: DEFAULT_EPS_FRACTION,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let DiscontinuityPolicy::Improved { eps_fraction } = *self {
            if !(eps_fraction > 0.0 && eps_fraction < 0.5) {
                return Err(SimError::Parameter(format!(
                    "eps_fraction must lie in (0, 1/2), got {eps_fraction}"
                )));
            }
        }
        Ok(())
    }

    pub fn label(&self) -> &'static str {
        match self {
            DiscontinuityPolicy::Cda => "cda",
            DiscontinuityPolicy::Preliminary => "preliminary",
            DiscontinuityPolicy::Improved { .. } => "improved",
        }
    }
}

impl fmt::Display for DiscontinuityPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for DiscontinuityPolicy {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cda" => Ok(DiscontinuityPolicy::Cda),
            "preliminary" => Ok(DiscontinuityPolicy::Preliminary),
            "improved" => Ok(DiscontinuityPolicy::improved()),
            other => Err(SimError::Config(format!("unknown method '{other}'"))),
        }
    }
}

/// Final state of a recipe plus the intermediate sub-step states.
#[derive(Debug, Clone)]
pub struct PolicyStep {
    pub state: SystemState,
    pub substeps: Vec<SystemState>,
}

impl PolicyStep {
    /// Sizes of all sub-steps, final one included.
    pub fn substep_sizes(&self, start: f64) -> Vec<f64> {
        let mut t = start;
        self.substeps
            .iter()
            .chain(std::iter::once(&self.state))
            .map(|s| {
                let d = s.t - t;
                t = s.t;
                d
            })
            .collect()
    }
}

/// Two backward Euler half steps. The topology change must already be applied.
pub fn handle_cda<S: DaeSystem + ?Sized>(
    sys: &S,
    state: &SystemState,
    h: f64,
    settings: &NewtonSettings,
) -> Result<PolicyStep> {
    let half = make_bem(h / 2.0)?;
    let mid = step_to(sys, state, &half, state.t + h / 2.0, settings)?;
    let end = step_to(sys, &mid, &half, state.t + h, settings)?;
    Ok(PolicyStep {
        state: end,
        substeps: vec![mid],
    })
}

fn require_zero_history(zh: &IntegratorCoefficients) -> Result<()> {
    if !zh.zero_history() {
        return Err(SimError::Usage(format!(
            "integrator '{}' depends on the previous step and cannot restart after a discontinuity",
            zh.label
        )));
    }
    Ok(())
}

/// Two zero-history second-derivative half steps; `zh` must be built for
/// step `h/2`.
pub fn handle_preliminary<S: DaeSystem + ?Sized>(
    sys: &S,
    state: &SystemState,
    h: f64,
    zh: &IntegratorCoefficients,
    settings: &NewtonSettings,
) -> Result<PolicyStep> {
    require_zero_history(zh)?;
    let mid = step_to(sys, state, zh, state.t + h / 2.0, settings)?;
    let end = step_to(sys, &mid, zh, state.t + h, settings)?;
    Ok(PolicyStep {
        state: end,
        substeps: vec![mid],
    })
}

/// Coefficients of the `ε` step: second-derivative form with only `b0 = ε`.
pub fn eps_step_coefficients(eps: f64) -> Result<IntegratorCoefficients> {
    if !(eps > 0.0) {
        return Err(SimError::Parameter(format!("ε must be positive, got {eps}")));
    }
    Ok(IntegratorCoefficients::second_order(eps, 0.0, 0.0, 0.0, "eps-bem"))
}

/// First sub-step of the improved recipe with a caller-chosen `ẏ` while
/// solving; the returned state always carries `ẏ = 0`.
pub fn improved_eps_step<S: DaeSystem + ?Sized>(
    sys: &S,
    state: &SystemState,
    eps: f64,
    ydot_while_solving: &DVector<f64>,
    settings: &NewtonSettings,
) -> Result<SystemState> {
    let coeffs = eps_step_coefficients(eps)?;
    let solved = step_fixed_ydot(sys, state, &coeffs, state.t + eps, ydot_while_solving, settings)?;
    let zero = DVector::zeros(sys.n_alg());
    SystemState::from_point(sys, solved.t, solved.x, solved.y)?.with_ydot(sys, zero)
}

/// `ε` backward Euler step with `ẏ := 0`, then two zero-history steps of
/// size `(h − ε)/2` produced by `zh_factory`.
pub fn handle_improved<S: DaeSystem + ?Sized>(
    sys: &S,
    state: &SystemState,
    h: f64,
    policy: &DiscontinuityPolicy,
    zh_factory: &Integrator,
    settings: &NewtonSettings,
) -> Result<PolicyStep> {
    let DiscontinuityPolicy::Improved { eps_fraction } = *policy else {
        return Err(SimError::Usage(format!("handle_improved called with policy '{policy}'")));
    };
    policy.validate()?;
    let eps = eps_fraction * h;
    if !(eps < h / 2.0) {
        return Err(SimError::Usage(format!("ε = {eps} must be smaller than h/2 = {}", h / 2.0)));
    }
    let zh = zh_factory.coefficients((h - eps) / 2.0)?;
    require_zero_history(&zh)?;

    let s1 = improved_eps_step(sys, state, eps, &DVector::zeros(sys.n_alg()), settings)?;
    let t2 = s1.t + (h - eps) / 2.0;
    let s2 = step_to(sys, &s1, &zh, t2, settings)?;
    let end = step_to(sys, &s2, &zh, state.t + h, settings)?;
    Ok(PolicyStep {
        state: end,
        substeps: vec![s1, s2],
    })
}

/// One emitted state.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub state: SystemState,
    pub reportable: bool,
}

/// Relative tolerance used to snap grid points onto event times.
const SNAP: f64 = 1e-9;

/// Fixed-step driver that applies scheduled events on step boundaries.
///
/// Grid points are `segment_start + k·h`; a segment restarts at every event.
/// A step that would cross an event is shortened to end on it.
pub struct Simulation<S: DaeSystem> {
    system: S,
    state: SystemState,
    h: f64,
    events: EventSchedule,
    next_event: usize,
    policy: DiscontinuityPolicy,
    normal: Integrator,
    zero_history: Integrator,
    newton: NewtonSettings,
    segment_start: f64,
    segment_index: u64,
    keep_intermediate: bool,
    steps: usize,
}

impl<S: DaeSystem> Simulation<S> {
    pub fn new(
        system: S,
        initial: SystemState,
        h: f64,
        events: EventSchedule,
        policy: DiscontinuityPolicy,
        normal: Integrator,
    ) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(SimError::Parameter(format!("step size must be positive, got {h}")));
        }
        policy.validate()?;
        let start = initial.t;
        if let Some(e) = events.events().iter().find(|e| e.time < start - SNAP * h) {
            return Err(SimError::Scheduling(format!("event '{}' at {} precedes the start time", e.action, e.time)));
        }
        Ok(Simulation {
            system,
            state: initial,
            h,
            events,
            next_event: 0,
            policy,
            normal,
            zero_history: Integrator::Taylor2,
            newton: NewtonSettings::default(),
            segment_start: start,
            segment_index: 0,
            keep_intermediate: false,
            steps: 0,
        })
    }

    pub fn with_zero_history(mut self, zh: Integrator) -> Self {
        self.zero_history = zh;
        self
    }

    pub fn with_newton(mut self, newton: NewtonSettings) -> Self {
        self.newton = newton;
        self
    }

    /// Also emit the non-reportable intermediate sub-step states.
    pub fn keep_intermediate(mut self, keep: bool) -> Self {
        self.keep_intermediate = keep;
        self
    }

    pub fn state(&self) -> &SystemState {
        &self.state
    }

    pub fn system(&self) -> &S {
        &self.system
    }

    pub fn into_parts(self) -> (S, SystemState) {
        (self.system, self.state)
    }

    pub fn step_count(&self) -> usize {
        self.steps
    }

    fn pending_event(&self) -> Option<&Event> {
        self.events.events().get(self.next_event)
    }

    fn tol(&self) -> f64 {
        SNAP * self.h
    }

    /// Advance by one step, or by one full recipe when an event sits at the
    /// current time. `horizon` caps ordinary steps.
    pub fn advance(&mut self, horizon: f64) -> Result<Vec<StepRecord>> {
        let t = self.state.t;
        let tol = self.tol();
        if let Some(ev) = self.pending_event() {
            if ev.time < t - tol {
                return Err(SimError::Scheduling(format!(
                    "event '{}' at {} was skipped (now at {t})",
                    ev.action, ev.time
                )));
            }
            if (ev.time - t).abs() <= tol {
                return self.handle_event();
            }
        }

        let grid = self.segment_start + (self.segment_index + 1) as f64 * self.h;
        let mut target = grid;
        let mut on_grid = true;
        if let Some(ev) = self.pending_event() {
            if ev.time <= grid + tol {
                if (ev.time - grid).abs() > tol {
                    on_grid = false;
                }
                target = ev.time;
            }
        }
        if horizon < target - tol && horizon > t + tol {
            target = horizon;
            on_grid = false;
        }
        let dt = if (target - t - self.h).abs() <= tol { self.h } else { target - t };
        let coeffs = self.normal.coefficients(dt)?;
        let next = self.run_step(|sys, st, ns| step_to(sys, st, &coeffs, target, ns))?;
        if on_grid {
            self.segment_index += 1;
        }
        self.state = next;
        Ok(vec![StepRecord {
            state: self.state.clone(),
            reportable: true,
        }])
    }

    fn run_step<T, F>(&mut self, f: F) -> Result<T>
    where
        F: FnOnce(&S, &SystemState, &NewtonSettings) -> Result<T>,
    {
        self.steps += 1;
        let t = self.state.t;
        f(&self.system, &self.state, &self.newton).map_err(|e| SimError::StepFailed {
            step: self.steps,
            t,
            source: Box::new(e),
        })
    }

    fn handle_event(&mut self) -> Result<Vec<StepRecord>> {
        let ev = self.events.events()[self.next_event].clone();
        let t = self.state.t;
        let h = self.h;
        if let Some(next) = self.events.events().get(self.next_event + 1) {
            if next.time < t + h - self.tol() {
                return Err(SimError::Scheduling(format!(
                    "event '{}' at {} falls inside the recovery step after '{}' at {}",
                    next.action, next.time, ev.action, ev.time
                )));
            }
        }
        self.system.mutate(&ev.action)?;
        self.next_event += 1;

        let policy = self.policy;
        let zh = self.zero_history.clone();
        let outcome = self.run_step(|sys, st, ns| {
            let out = match policy {
                DiscontinuityPolicy::Cda => handle_cda(sys, st, h, ns)?,
                DiscontinuityPolicy::Preliminary => {
                    handle_preliminary(sys, st, h, &zh.coefficients(h / 2.0)?, ns)?
                }
                DiscontinuityPolicy::Improved { .. } => handle_improved(sys, st, h, &policy, &zh, ns)?,
            };
            Ok(out)
        });
        let outcome = outcome?;
        // the recipe's own sub-steps are not counted as separate steps
        self.segment_start = t;
        self.segment_index = 1;

        let mut records = Vec::new();
        if self.keep_intermediate {
            records.extend(outcome.substeps.into_iter().map(|state| StepRecord {
                state,
                reportable: false,
            }));
        }
        self.state = outcome.state;
        records.push(StepRecord {
            state: self.state.clone(),
            reportable: true,
        });
        Ok(records)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_fig1_circuit, oracle_u_bem, oracle_u_second, Fig1Circuit, Waveform};
    use crate::integrators::{make_itm, make_taylor2, step};
    use nalgebra::dvector;

    fn circuit() -> Fig1Circuit {
        build_fig1_circuit(1.0, 1.0, Waveform::Constant(0.0), Waveform::Constant(0.0))
            .unwrap()
            .with_switch_closed(1.0)
            .unwrap()
    }

    /// Closed-switch state with the given currents, switch then opened.
    fn opened(i1: f64, i2: f64) -> (Fig1Circuit, SystemState) {
        let mut c = circuit();
        let s = c.state_with_currents(i1, i2, 0.0).unwrap();
        c.mutate("open-switch").unwrap();
        (c, s)
    }

    fn ns() -> NewtonSettings {
        NewtonSettings::default()
    }

    #[test]
    fn cda_first_half_step_excursion() {
        let (c, s) = opened(0.06, 0.04);
        let out = handle_cda(&c, &s, 0.1, &ns()).unwrap();
        let mid = &out.substeps[0];
        assert!((mid.y[0] + 1.0).abs() < 1e-12, "u = {}", mid.y[0]);
        assert!((mid.y[0] - oracle_u_bem(1.0, 1.0, 0.0, 0.0, 0.05, 0.1)).abs() < 1e-12);
        assert!((mid.x[0] + mid.x[1]).abs() < 1e-10);
        assert_eq!(out.state.t, 0.1);
        assert!(out.state.ydot.is_none());
    }

    #[test]
    fn cda_without_mismatch_has_no_excursion() {
        let (c, s) = opened(0.05, -0.05);
        let out = handle_cda(&c, &s, 0.1, &ns()).unwrap();
        assert!(out.substeps[0].y[0].abs() < 1e-12);
    }

    #[test]
    fn preliminary_moves_excursion_into_udot() {
        let (c, s) = opened(0.06, 0.04);
        let zh = make_taylor2(0.05).unwrap();
        let out = handle_preliminary(&c, &s, 0.1, &zh, &ns()).unwrap();
        let mid = &out.substeps[0];
        assert!(mid.y[0].abs() < 1e-12);
        let expected = -(0.5) * (1.0 / zh.c0) * 0.1;
        assert!((expected - 40.0).abs() < 1e-9);
        assert!((mid.ydot.as_ref().unwrap()[0] - expected).abs() < 1e-9);

        let (c, s) = opened(0.05, -0.05);
        let out = handle_preliminary(&c, &s, 0.1, &zh, &ns()).unwrap();
        assert!(out.substeps[0].ydot.as_ref().unwrap()[0].abs() < 1e-12);
    }

    #[test]
    fn preliminary_rejects_history_integrators() {
        let (c, s) = opened(0.06, 0.04);
        let err = handle_preliminary(&c, &s, 0.1, &make_itm(0.05).unwrap(), &ns()).unwrap_err();
        assert!(matches!(err, SimError::Usage(_)));
    }

    #[test]
    fn improved_substeps() {
        let (c, s) = opened(0.06, 0.04);
        let policy = DiscontinuityPolicy::Improved { eps_fraction: 0.01 };
        let out = handle_improved(&c, &s, 0.1, &policy, &Integrator::Taylor2, &ns()).unwrap();
        let s1 = &out.substeps[0];
        assert!((s1.t - 0.001).abs() < 1e-18);
        assert!((s1.y[0] + 50.0).abs() < 1e-9, "u = {}", s1.y[0]);
        assert!((s1.y[0] - oracle_u_bem(1.0, 1.0, 0.0, 0.0, 0.001, 0.1)).abs() < 1e-9);
        assert_eq!(s1.ydot.as_ref().unwrap()[0], 0.0);

        let s2 = &out.substeps[1];
        assert!((s2.x[0] + s2.x[1]).abs() < 1e-10);
        assert!(s2.y[0].abs() < 1e-10);
        assert!(s2.ydot.as_ref().unwrap()[0].abs() < 1e-8);

        assert_eq!(out.state.t, 0.1);
        let sizes = out.substep_sizes(0.0);
        assert_eq!(sizes.len(), 3);
        assert!((sizes[0] - 0.001).abs() < 1e-15);
        assert!((sizes[1] - 0.0495).abs() < 1e-15 && (sizes[2] - 0.0495).abs() < 1e-15);
    }

    #[test]
    fn eps_step_ignores_artificial_ydot() {
        let (c, s) = opened(0.06, 0.04);
        let base = improved_eps_step(&c, &s, 0.001, &dvector![0.0], &ns()).unwrap();
        for v in [-1e6, -3.0, 0.5, 1e9] {
            let other = improved_eps_step(&c, &s, 0.001, &dvector![v], &ns()).unwrap();
            assert_eq!(base.x, other.x);
            assert_eq!(base.y, other.y);
            assert_eq!(other.ydot.as_ref().unwrap()[0], 0.0);
        }
    }

    #[test]
    fn improved_later_steps_ignore_stored_ydot() {
        let (c, s) = opened(0.06, 0.04);
        let s1 = improved_eps_step(&c, &s, 0.001, &dvector![0.0], &ns()).unwrap();
        let zh = make_taylor2(0.0495).unwrap();
        let a = step(&c, &s1, &zh, 0.0495, &ns()).unwrap();
        let mut tampered = s1.clone();
        tampered.ydot = Some(dvector![1234.5]);
        tampered.xddot = Some(dvector![-7.0, 9.0]);
        let b = step(&c, &tampered, &zh, 0.0495, &ns()).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.y, b.y);
        assert_eq!(a.ydot, b.ydot);
    }

    #[test]
    fn improved_rejects_bad_eps() {
        let (c, s) = opened(0.06, 0.04);
        for eps_fraction in [0.0, 0.5, 0.7, -0.1] {
            let p = DiscontinuityPolicy::Improved { eps_fraction };
            assert!(handle_improved(&c, &s, 0.1, &p, &Integrator::Taylor2, &ns()).is_err());
        }
        let err = handle_improved(&c, &s, 0.1, &DiscontinuityPolicy::Cda, &Integrator::Taylor2, &ns()).unwrap_err();
        assert!(matches!(err, SimError::Usage(_)));
    }

    #[test]
    fn schedule_validation() {
        assert!(EventSchedule::new(vec![Event::new(-1.0, "x")]).is_err());
        assert!(EventSchedule::new(vec![Event::new(0.2, "a"), Event::new(0.2, "b")]).is_err());
        let s = EventSchedule::new(vec![Event::new(0.4, "b"), Event::new(0.2, "a")]).unwrap();
        assert_eq!(s.events()[0].action, "a");
    }

    fn run_all<S: DaeSystem>(sim: &mut Simulation<S>, t_end: f64) -> Vec<StepRecord> {
        let mut out = Vec::new();
        while sim.state().t < t_end - 1e-12 {
            out.extend(sim.advance(t_end).unwrap());
        }
        out
    }

    #[test]
    fn no_events_equals_repeated_steps() {
        let c = circuit();
        let s0 = c.state_with_currents(0.06, 0.04, 0.0).unwrap();
        let mut sim = Simulation::new(c.clone(), s0.clone(), 0.1, EventSchedule::default(), DiscontinuityPolicy::Cda, Integrator::Itm)
            .unwrap();
        let recs = run_all(&mut sim, 0.5);
        let mut s = s0;
        for (k, r) in recs.iter().enumerate() {
            let t_next = (k + 1) as f64 * 0.1;
            s = step_to(&c, &s, &make_itm(0.1).unwrap(), t_next, &ns()).unwrap();
            assert_eq!(r.state.x, s.x);
        }
        assert_eq!(recs.len(), 5);
    }

    #[test]
    fn event_is_applied_on_its_boundary() {
        let c = circuit();
        let s0 = c.state_with_currents(0.06, 0.04, 0.0).unwrap();
        let events = EventSchedule::new(vec![Event::new(0.2, "open-switch")]).unwrap();
        let mut sim = Simulation::new(c, s0, 1e-3, events, DiscontinuityPolicy::improved(), Integrator::Obreshkov22)
            .unwrap()
            .keep_intermediate(true);
        let mut recs = Vec::new();
        while sim.state().t < 0.2 - 1e-12 {
            recs.extend(sim.advance(1.0).unwrap());
            assert!(sim.system().switch_closed());
        }
        assert_eq!(sim.state().t, 0.2);
        let after = sim.advance(1.0).unwrap();
        assert!(!sim.system().switch_closed());
        assert_eq!(after.len(), 3);
        assert_eq!(after.iter().filter(|r| r.reportable).count(), 1);
        assert!((after[2].state.t - 0.201).abs() < 1e-15);
        let next = sim.advance(1.0).unwrap();
        assert!((next[0].state.t - 0.202).abs() < 1e-15);
    }

    #[test]
    fn off_grid_event_shortens_the_step() {
        let c = circuit();
        let s0 = c.state_with_currents(0.06, 0.04, 0.0).unwrap();
        let events = EventSchedule::new(vec![Event::new(0.25, "open-switch")]).unwrap();
        let mut sim = Simulation::new(c, s0, 0.1, events, DiscontinuityPolicy::Cda, Integrator::Itm).unwrap();
        let times: Vec<f64> = run_all(&mut sim, 0.55).iter().map(|r| r.state.t).collect();
        let expected = [0.1, 0.2, 0.25, 0.35, 0.45, 0.55];
        assert_eq!(times.len(), expected.len());
        for (a, b) in times.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{times:?}");
        }
    }

    #[test]
    fn events_closer_than_a_step_are_a_scheduling_error() {
        let c = circuit();
        let s0 = c.state_with_currents(0.06, 0.04, 0.0).unwrap();
        let events = EventSchedule::new(vec![Event::new(0.2, "open-switch"), Event::new(0.25, "close-switch")]).unwrap();
        let mut sim = Simulation::new(c, s0, 0.1, events, DiscontinuityPolicy::Cda, Integrator::Itm).unwrap();
        let mut result = Ok(Vec::new());
        while result.is_ok() && sim.state().t < 0.5 {
            result = sim.advance(1.0);
        }
        assert!(matches!(result, Err(SimError::Scheduling(_))));
    }

    #[test]
    fn excursion_scaling_and_absence() {
        // halving b0 doubles the backward Euler excursion
        let (c, s) = opened(0.06, 0.04);
        let avg = 0.0;
        let exc = |b0: f64| {
            let st = step_to(&c, &s, &make_bem(b0).unwrap(), b0, &ns()).unwrap();
            st.y[0] - avg
        };
        let (e1, e2) = (exc(0.1), exc(0.05));
        assert!((e2 - 2.0 * e1).abs() < 1e-10);

        // zero-history second order: u is independent of the mismatch
        let zh = make_taylor2(0.1).unwrap();
        let us: Vec<f64> = [0.0, 0.05, 0.1]
            .iter()
            .map(|&m| {
                let (c, s) = opened(0.03 + m, -0.03);
                step(&c, &s, &zh, 0.1, &ns()).unwrap().y[0]
            })
            .collect();
        assert!(us.iter().all(|u| (u - us[0]).abs() < 1e-12));
        let (_, udot) = oracle_u_second(1.0, 1.0, 0.0, 0.0, 0.0, 0.0, zh.c0, 0.1).unwrap();
        let (c, s) = opened(0.06, 0.04);
        let st = step(&c, &s, &zh, 0.1, &ns()).unwrap();
        assert!((st.ydot.unwrap()[0] - udot).abs() < 1e-10);
    }
}
