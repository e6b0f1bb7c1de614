//! Scenario configuration and run orchestration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::dae::{DaeSystem, SystemState};
use crate::discontinuity::{DiscontinuityPolicy, Event, EventSchedule, Simulation, StepRecord, DEFAULT_EPS_FRACTION};
use crate::error::{Result, SimError};
use crate::integrators::{Integrator, IntegratorKind, NewtonSettings};
use crate::network::{build_fig1_circuit, build_three_bus, solve_steady_state, Fig1Circuit, Waveform};
use crate::series::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Two-inductor circuit discharging through the closed switch, opened
    /// half way through the run.
    Fig1,
    /// Three-bus network with a bolted-resistance fault at Bus 1.
    ThreeBus,
}

impl Scenario {
    pub fn label(&self) -> &'static str {
        match self {
            Scenario::Fig1 => "fig1",
            Scenario::ThreeBus => "three_bus",
        }
    }

    pub fn default_t_end(&self) -> f64 {
        match self {
            Scenario::Fig1 => FIG1_T_END,
            Scenario::ThreeBus => 0.5,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scenario {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig1" => Ok(Scenario::Fig1),
            "three_bus" => Ok(Scenario::ThreeBus),
            other => Err(SimError::Config(format!("unknown scenario '{other}'"))),
        }
    }
}

pub const FIG1_L1: f64 = 1.0;
pub const FIG1_L2: f64 = 1.0;
pub const FIG1_R: f64 = 1.0;
pub const FIG1_I1: f64 = 0.06;
pub const FIG1_I2: f64 = 0.04;
pub const FIG1_OPEN_TIME: f64 = 0.5;
pub const FIG1_T_END: f64 = 1.0;

/// The fig1 scenario circuit, closed, before any event.
pub fn fig1_circuit() -> Result<Fig1Circuit> {
    build_fig1_circuit(FIG1_L1, FIG1_L2, Waveform::Constant(0.0), Waveform::Constant(0.0))?.with_switch_closed(FIG1_R)
}

/// Analytic fig1 scenario currents `(i1, i2)` at `t`.
pub fn fig1_exact_currents(t: f64) -> Result<(f64, f64)> {
    let c = fig1_circuit()?;
    let tt = t.min(FIG1_OPEN_TIME);
    let (i1, i2, _) = c.closed_decay_solution(FIG1_I1, FIG1_I2, tt);
    if t <= FIG1_OPEN_TIME {
        return Ok((i1, i2));
    }
    // opening forces i1 + i2 = 0 while L1·i1 − L2·i2 is conserved
    let i = (c.l1 * i1 - c.l2 * i2) / (c.l1 + c.l2);
    Ok((i, -i))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    /// Discontinuity recipe; the improved recipe carries `ε/h`.
    pub method: DiscontinuityPolicy,
    pub integrator: Integrator,
    pub step_size: f64,
    /// `None` selects the scenario default.
    pub t_end: Option<f64>,
    pub output_path: Option<PathBuf>,
    pub newton: NewtonSettings,
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario, method: DiscontinuityPolicy, integrator: Integrator, step_size: f64) -> Self {
        ScenarioConfig {
            scenario,
            method,
            integrator,
            step_size,
            t_end: None,
            output_path: None,
            newton: NewtonSettings::default(),
        }
    }

    pub fn with_t_end(mut self, t_end: f64) -> Self {
        self.t_end = Some(t_end);
        self
    }

    pub fn t_end(&self) -> f64 {
        self.t_end.unwrap_or_else(|| self.scenario.default_t_end())
    }

    pub fn eps_fraction(&self) -> Option<f64> {
        match self.method {
            DiscontinuityPolicy::Improved { eps_fraction } => Some(eps_fraction),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(SimError::Config(format!("step_size must be positive, got {}", self.step_size)));
        }
        let t_end = self.t_end();
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(SimError::Config(format!("t_end must be positive, got {t_end}")));
        }
        self.method.validate().map_err(|e| SimError::Config(e.to_string()))?;
        self.newton.validate().map_err(|e| SimError::Config(e.to_string()))?;
        let needed = match self.method {
            DiscontinuityPolicy::Cda => IntegratorKind::FirstOrder,
            _ => IntegratorKind::SecondOrder,
        };
        if self.integrator.kind() != needed {
            return Err(SimError::Config(format!(
                "method '{}' cannot be paired with integrator '{}'",
                self.method, self.integrator
            )));
        }
        Ok(())
    }

    /// Parse a `key = value` file with `[section]` headers.
    ///
    /// Keys: `[run] scenario, method, integrator, step_size, eps_fraction,
    /// t_end, output`; `[newton] tol, max_iter`. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut section = String::new();
        let mut scenario = None;
        let mut method = None;
        let mut integrator = None;
        let mut step_size = None;
        let mut eps_fraction = None;
        let mut t_end = None;
        let mut output = None;
        let mut newton = NewtonSettings::default();

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: String| SimError::Config(format!("line {line_no}: {msg}"));
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| bad(format!("malformed section '{line}'")))?;
                section = name.trim().to_owned();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| bad(format!("expected key = value, got '{line}'")))?;
            let (key, value) = (key.trim(), value.trim());
            let num = |v: &str| v.parse::<f64>().map_err(|_| bad(format!("'{v}' is not a number")));
            match (section.as_str(), key) {
                ("run", "scenario") => scenario = Some(value.parse::<Scenario>().map_err(|e| bad(e.to_string()))?),
                ("run", "method") => method = Some(value.to_owned()),
                ("run", "integrator") => integrator = Some(value.parse::<Integrator>().map_err(|e| bad(e.to_string()))?),
                ("run", "step_size") => step_size = Some(num(value)?),
                ("run", "eps_fraction") => eps_fraction = Some(num(value)?),
                ("run", "t_end") => t_end = Some(num(value)?),
                ("run", "output") => output = Some(PathBuf::from(value)),
                ("newton", "tol") => newton.tol = num(value)?,
                ("newton", "max_iter") => {
                    newton.max_iter = value.parse().map_err(|_| bad(format!("'{value}' is not a count")))?
                }
                (s, k) => return Err(bad(format!("unknown key '{k}' in section [{s}]"))),
            }
        }
        let missing = |k: &str| SimError::Config(format!("missing required key '{k}'"));
        let method = policy_from(&method.ok_or_else(|| missing("run.method"))?, eps_fraction)?;
        let cfg = ScenarioConfig {
            scenario: scenario.ok_or_else(|| missing("run.scenario"))?,
            method,
            integrator: integrator.ok_or_else(|| missing("run.integrator"))?,
            step_size: step_size.ok_or_else(|| missing("run.step_size"))?,
            t_end,
            output_path: output,
            newton,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| SimError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }
}

/// Build a policy from its name and an optional `ε/h`.
pub fn policy_from(method: &str, eps_fraction: Option<f64>) -> Result<DiscontinuityPolicy> {
    let policy = match method.parse::<DiscontinuityPolicy>()? {
        DiscontinuityPolicy::Improved { .. } => DiscontinuityPolicy::Improved {
            eps_fraction: eps_fraction.unwrap_or(DEFAULT_EPS_FRACTION),
        },
        p => p,
    };
    Ok(policy)
}

/// Callback receiving every emitted record, intermediate sub-steps
/// included, together with the system as it was when the record was made.
pub type Observer<'a> = dyn FnMut(&dyn DaeSystem, &StepRecord) -> Result<()> + 'a;

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<TimeSeries> {
    run_scenario_observed(cfg, &mut |_, _| Ok(()))
}

/// Run a scenario; only reportable records reach the returned series.
pub fn run_scenario_observed(cfg: &ScenarioConfig, observer: &mut Observer<'_>) -> Result<TimeSeries> {
    cfg.validate()?;
    match cfg.scenario {
        Scenario::Fig1 => {
            let c = fig1_circuit()?;
            let s0 = c.state_with_currents(FIG1_I1, FIG1_I2, 0.0)?;
            let events = vec![Event::new(FIG1_OPEN_TIME, "open-switch")];
            drive(c, s0, events, cfg, observer)
        }
        Scenario::ThreeBus => {
            let tb = build_three_bus()?;
            let s0 = solve_steady_state(&tb.system, 0.0)?;
            drive(tb.system, s0, tb.events, cfg, observer)
        }
    }
}

fn drive<S: DaeSystem + 'static>(
    system: S,
    initial: SystemState,
    events: Vec<Event>,
    cfg: &ScenarioConfig,
    observer: &mut Observer<'_>,
) -> Result<TimeSeries> {
    let t_end = cfg.t_end();
    let events = EventSchedule::new(events.into_iter().filter(|e| e.time < t_end).collect())?;
    let initial = match cfg.integrator.kind() {
        IntegratorKind::FirstOrder => initial.first_order(),
        IntegratorKind::SecondOrder => initial,
    };
    let mut sim = Simulation::new(system, initial, cfg.step_size, events, cfg.method, cfg.integrator.clone())?
        .with_newton(cfg.newton)
        .keep_intermediate(true);

    let names = sim.system().signal_names();
    let mut series = TimeSeries::new(names);
    let first = StepRecord {
        state: sim.state().clone(),
        reportable: true,
    };
    observer(sim.system(), &first)?;
    series.push(first.state.t, first.state.signal_values(sim.system()))?;

    let tol = 1e-9 * cfg.step_size;
    while sim.state().t < t_end - tol {
        for rec in sim.advance(t_end)? {
            observer(sim.system(), &rec)?;
            if rec.reportable {
                series.push(rec.state.t, rec.state.signal_values(sim.system()))?;
            }
        }
    }
    Ok(series)
}
