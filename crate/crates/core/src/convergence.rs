//! Observed order of accuracy under step halving.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use crate::dae::{DaeSystem, FnDae, SystemState};
use crate::error::{Result, SimError};
use crate::integrators::{step_to, Integrator, NewtonSettings};
use crate::network::Fig1Circuit;
use crate::scenario::{fig1_circuit, FIG1_I1, FIG1_I2};

/// Problems with a known exact solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvergenceProblem {
    /// `ẋ = −x`, `x(0) = 1` on `[0, 1]`.
    ScalarDecay,
    /// The fig1 circuit discharging through its closed switch on `[0, 1]`.
    Fig1Decay,
}

impl ConvergenceProblem {
    pub fn label(&self) -> &'static str {
        match self {
            ConvergenceProblem::ScalarDecay => "decay",
            ConvergenceProblem::Fig1Decay => "fig1",
        }
    }
}

impl fmt::Display for ConvergenceProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ConvergenceProblem {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "decay" => Ok(ConvergenceProblem::ScalarDecay),
            "fig1" => Ok(ConvergenceProblem::Fig1Decay),
            other => Err(SimError::Config(format!(
                "no convergence problem '{other}' (expected decay or fig1)"
            ))),
        }
    }
}

const T_END: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub problem: ConvergenceProblem,
    pub integrator: String,
    pub steps: Vec<f64>,
    /// Max-abs error of the differential states over all grid points.
    pub errors: Vec<f64>,
    /// `log2(e_k / e_{k+1})` per refinement.
    pub slopes: Vec<f64>,
}

impl ConvergenceReport {
    pub fn final_slope(&self) -> f64 {
        *self.slopes.last().expect("at least two refinements")
    }
}

fn max_error<S, E>(sys: &S, initial: SystemState, integ: &Integrator, h: f64, exact: E) -> Result<f64>
where
    S: DaeSystem,
    E: Fn(f64) -> DVector<f64>,
{
    let settings = NewtonSettings {
        tol: 1e-14,
        max_iter: 50,
    };
    let coeffs = integ.coefficients(h)?;
    let n = (T_END / h).round() as usize;
    let mut state = initial;
    let mut err = 0.0f64;
    for k in 1..=n {
        state = step_to(sys, &state, &coeffs, k as f64 * h, &settings)?;
        err = err.max((&state.x - exact(state.t)).amax());
    }
    Ok(err)
}

fn error_for(problem: ConvergenceProblem, integ: &Integrator, h: f64) -> Result<f64> {
    match problem {
        ConvergenceProblem::ScalarDecay => {
            let sys = FnDae::scalar_linear(-1.0);
            let s0 = SystemState::from_point(&sys, 0.0, DVector::from_element(1, 1.0), DVector::zeros(0))?
                .with_ydot(&sys, DVector::zeros(0))?;
            max_error(&sys, s0, integ, h, |t| DVector::from_element(1, (-t).exp()))
        }
        ConvergenceProblem::Fig1Decay => {
            let c: Fig1Circuit = fig1_circuit()?;
            let s0 = c.state_with_currents(FIG1_I1, FIG1_I2, 0.0)?;
            max_error(&c, s0, integ, h, |t| {
                let (a, b, _) = c.closed_decay_solution(FIG1_I1, FIG1_I2, t);
                DVector::from_vec(vec![a, b])
            })
        }
    }
}

/// Errors and observed orders for a sequence of halved step sizes.
pub fn convergence_study(problem: ConvergenceProblem, integrator: &Integrator, steps: &[f64]) -> Result<ConvergenceReport> {
    if steps.len() < 3 {
        return Err(SimError::Config(format!("need at least 3 step sizes, got {}", steps.len())));
    }
    for w in steps.windows(2) {
        if !(w[0] > 0.0) || ((w[1] / w[0]) - 0.5).abs() > 1e-9 {
            return Err(SimError::Config(format!("step {} does not halve {}", w[1], w[0])));
        }
    }
    for &h in steps {
        let n = T_END / h;
        if (n - n.round()).abs() > 1e-9 {
            return Err(SimError::Config(format!("step {h} does not divide the interval [0, {T_END}]")));
        }
    }
    let errors = steps
        .iter()
        .map(|&h| error_for(problem, integrator, h))
        .collect::<Result<Vec<_>>>()?;
    let slopes = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    Ok(ConvergenceReport {
        problem,
        integrator: integrator.label().to_owned(),
        steps: steps.to_vec(),
        errors,
        slopes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const STEPS: [f64; 4] = [0.1, 0.05, 0.025, 0.0125];

    #[test]
    fn observed_orders() {
        for problem in [ConvergenceProblem::ScalarDecay, ConvergenceProblem::Fig1Decay] {
            for (integ, order) in [
                (Integrator::Bem, 1.0),
                (Integrator::Itm, 2.0),
                (Integrator::Taylor2, 2.0),
                (Integrator::Obreshkov22, 4.0),
            ] {
                let r = convergence_study(problem, &integ, &STEPS).unwrap();
                assert!((r.final_slope() - order).abs() < 0.2, "{problem} {integ}: {:?}", r.slopes);
            }
        }
    }

    #[test]
    fn rejects_bad_step_lists() {
        let i = Integrator::Itm;
        assert!(convergence_study(ConvergenceProblem::ScalarDecay, &i, &[0.1, 0.05]).is_err());
        assert!(convergence_study(ConvergenceProblem::ScalarDecay, &i, &[0.1, 0.04, 0.02]).is_err());
        assert!(convergence_study(ConvergenceProblem::ScalarDecay, &i, &[0.3, 0.15, 0.075]).is_err());
    }
}
