//! Two inductors meeting at a middle node `u`, with a resistor from `u` to
//! ground behind a switch.
//!
//! ```text
//!   v1 ──L1──┐          i1, i2 flow from u towards the sources:
//!            u──/ ──R──⏚   L1·di1/dt = u − v1
//!   v2 ──L2──┘             L2·di2/dt = u − v2
//! ```
//!
//! With the switch closed the constraint is `i1 + i2 + u/R = 0`; once it
//! opens it becomes `i1 + i2 = 0`, which forces a jump in the current sum
//! that the first post-switch step has to absorb.

use nalgebra::{dvector, DVector};

use super::Waveform;
use crate::dae::{DaeSystem, JacobianSet, SystemState};
use crate::error::{Result, SimError};

#[derive(Debug, Clone)]
pub struct Fig1Circuit {
    pub l1: f64,
    pub l2: f64,
    pub resistance: f64,
    pub v1: Waveform,
    pub v2: Waveform,
    switch_closed: bool,
}

/// Circuit with the switch open.
pub fn build_fig1_circuit(l1: f64, l2: f64, v1: Waveform, v2: Waveform) -> Result<Fig1Circuit> {
    for (name, l) in [("L1", l1), ("L2", l2)] {
        if !(l > 0.0 && l.is_finite()) {
            return Err(SimError::Parameter(format!("{name} must be positive, got {l}")));
        }
    }
    Ok(Fig1Circuit {
        l1,
        l2,
        resistance: 1.0,
        v1,
        v2,
        switch_closed: false,
    })
}

impl Fig1Circuit {
    /// Close the switch through a resistor of `r` p.u.
    pub fn with_switch_closed(mut self, r: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(SimError::Parameter(format!("resistance must be positive, got {r}")));
        }
        self.resistance = r;
        self.switch_closed = true;
        Ok(self)
    }

    pub fn switch_closed(&self) -> bool {
        self.switch_closed
    }

    fn weighted_average(&self, a: f64, b: f64) -> f64 {
        (self.l2 * a + self.l1 * b) / (self.l1 + self.l2)
    }

    /// Point with the given branch currents and the middle voltage the
    /// current topology implies, with `ẋ`, `ẏ`, `ẍ` filled in.
    ///
    /// With the switch open and `i1 + i2 ≠ 0` the point is deliberately
    /// inconsistent; `u` is then the weighted source average.
    pub fn state_with_currents(&self, i1: f64, i2: f64, t: f64) -> Result<SystemState> {
        let (v1, v2) = (self.v1.value(t), self.v2.value(t));
        let (dv1, dv2) = (self.v1.derivative(t), self.v2.derivative(t));
        let u = if self.switch_closed {
            -self.resistance * (i1 + i2)
        } else {
            self.weighted_average(v1, v2)
        };
        let state = SystemState::from_point(self, t, dvector![i1, i2], dvector![u])?;
        let udot = if self.switch_closed {
            -self.resistance * (state.xdot[0] + state.xdot[1])
        } else {
            self.weighted_average(dv1, dv2)
        };
        state.with_ydot(self, dvector![udot])
    }

    /// Closed-switch currents for zero sources: the sum decays with rate
    /// `R(L1+L2)/(L1·L2)` while `L1·i1 − L2·i2` is conserved.
    pub fn closed_decay_solution(&self, i1: f64, i2: f64, t: f64) -> (f64, f64, f64) {
        let (l1, l2, r) = (self.l1, self.l2, self.resistance);
        let rate = r * (l1 + l2) / (l1 * l2);
        let sum = (i1 + i2) * (-rate * t).exp();
        let conserved = l1 * i1 - l2 * i2;
        let a = (conserved + l2 * sum) / (l1 + l2);
        let b = (l1 * sum - conserved) / (l1 + l2);
        (a, b, -r * sum)
    }
}

impl DaeSystem for Fig1Circuit {
    fn n_diff(&self) -> usize {
        2
    }

    fn n_alg(&self) -> usize {
        1
    }

    fn f(&self, _x: &DVector<f64>, y: &DVector<f64>, t: f64) -> DVector<f64> {
        let u = y[0];
        dvector![(u - self.v1.value(t)) / self.l1, (u - self.v2.value(t)) / self.l2]
    }

    fn g(&self, x: &DVector<f64>, y: &DVector<f64>, _t: f64) -> DVector<f64> {
        let mut kcl = x[0] + x[1];
        if self.switch_closed {
            kcl += y[0] / self.resistance;
        }
        dvector![kcl]
    }

    fn mutate(&mut self, action: &str) -> Result<()> {
        match action {
            "open-switch" => self.switch_closed = false,
            "close-switch" => self.switch_closed = true,
            other => {
                return Err(SimError::Model(format!(
                    "switch circuit has no action '{other}'"
                )))
            }
        }
        Ok(())
    }

    fn signal_names(&self) -> Vec<String> {
        vec!["i1".into(), "i2".into(), "u".into()]
    }

    fn jacobians(&self, _x: &DVector<f64>, _y: &DVector<f64>, t: f64) -> JacobianSet {
        let mut j = JacobianSet::zeros(2, 1);
        j.df_dy[(0, 0)] = 1.0 / self.l1;
        j.df_dy[(1, 0)] = 1.0 / self.l2;
        j.df_dt[0] = -self.v1.derivative(t) / self.l1;
        j.df_dt[1] = -self.v2.derivative(t) / self.l2;
        j.dg_dx[(0, 0)] = 1.0;
        j.dg_dx[(0, 1)] = 1.0;
        if self.switch_closed {
            j.dg_dy[(0, 0)] = 1.0 / self.resistance;
        }
        j
    }
}

/// `u` after one backward-Euler-type step with `b0` across the switch opening.
pub fn oracle_u_bem(l1: f64, l2: f64, v1: f64, v2: f64, b0: f64, i_sum: f64) -> f64 {
    (l2 * v1 + l1 * v2) / (l1 + l2) - (l1 * l2 / (l1 + l2)) * (1.0 / b0) * i_sum
}

/// `(u, u̇)` after one zero-history second-derivative step with `c0`
/// across the switch opening.
#[allow(clippy::too_many_arguments)]
pub fn oracle_u_second(
    l1: f64,
    l2: f64,
    v1: f64,
    v2: f64,
    v1dot: f64,
    v2dot: f64,
    c0: f64,
    i_sum: f64,
) -> Result<(f64, f64)> {
    if c0 == 0.0 {
        return Err(SimError::Model("c0 = 0 leaves u̇ unsolvable".into()));
    }
    let u = (l2 * v1 + l1 * v2) / (l1 + l2);
    let udot = (l2 * v1dot + l1 * v2dot) / (l1 + l2) - (l1 * l2 / (l1 + l2)) * (1.0 / c0) * i_sum;
    Ok((u, udot))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dae::{estimate_jacobians, eval_f, eval_g};
    use crate::integrators::{make_bem, make_taylor2, residual_first_order, residual_second_order, Candidate};

    fn unit_circuit() -> Fig1Circuit {
        build_fig1_circuit(1.0, 1.0, Waveform::Constant(0.0), Waveform::Constant(0.0)).unwrap()
    }

    #[test]
    fn f_and_g_examples() {
        let c = build_fig1_circuit(1.0, 2.0, Waveform::Constant(0.0), Waveform::Constant(0.0)).unwrap();
        let f = eval_f(&c, &dvector![0.0, 0.0], &dvector![1.0], 0.0).unwrap();
        assert_eq!(f[0], 1.0);
        assert_eq!(eval_g(&c, &dvector![0.5, -0.5], &dvector![0.0], 0.0).unwrap()[0], 0.0);
        let g = eval_g(&c, &dvector![0.06, 0.04], &dvector![0.0], 0.0).unwrap()[0];
        assert!((g - 0.1).abs() < 1e-15);
    }

    #[test]
    fn rejects_nonpositive_inductance() {
        assert!(build_fig1_circuit(0.0, 1.0, Waveform::Constant(0.0), Waveform::Constant(0.0)).is_err());
        assert!(build_fig1_circuit(1.0, -2.0, Waveform::Constant(0.0), Waveform::Constant(0.0)).is_err());
    }

    #[test]
    fn symmetric_zero_steady_state() {
        let c = unit_circuit();
        let s = c.state_with_currents(0.0, 0.0, 0.0).unwrap();
        assert_eq!(s.y[0], 0.0);
        assert_eq!(s.consistency(&c).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn oracle_examples() {
        assert!((oracle_u_bem(1.0, 1.0, 0.0, 0.0, 0.1, 0.1) + 0.5).abs() < 1e-15);
        assert_eq!(oracle_u_bem(1.0, 3.0, 0.4, 0.4, 0.1, 0.0), 0.4);
        assert_eq!(oracle_u_bem(2.0, 1.0, 3.0, 3.0, 0.7, 0.0), 3.0);

        let (u, udot) = oracle_u_second(1.0, 1.0, 0.0, 0.0, 0.0, 0.0, -0.005, 0.1).unwrap();
        assert_eq!(u, 0.0);
        assert!((udot - 10.0).abs() < 1e-12);
        let (_, udot0) = oracle_u_second(1.0, 2.0, 0.0, 0.0, 3.0, 6.0, -0.005, 0.0).unwrap();
        assert!((udot0 - 4.0).abs() < 1e-15);
        let a = oracle_u_second(1.0, 2.0, 0.3, -0.1, 0.0, 0.0, -0.005, 0.0).unwrap().0;
        let b = oracle_u_second(1.0, 2.0, 0.3, -0.1, 0.0, 0.0, -0.005, 0.1).unwrap().0;
        assert_eq!(a, b);
        assert!(oracle_u_second(1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn bem_residual_vanishes_at_oracle() {
        let c = build_fig1_circuit(1.0, 2.0, Waveform::Constant(0.3), Waveform::Constant(-0.2)).unwrap();
        let prev = c.state_with_currents(0.06, 0.04, 0.0).unwrap();
        let b0 = 0.1;
        let u = oracle_u_bem(1.0, 2.0, 0.3, -0.2, b0, 0.1);
        let i1 = 0.06 + b0 * (u - 0.3) / 1.0;
        let i2 = 0.04 + b0 * (u + 0.2) / 2.0;
        let cand = Candidate { x: dvector![i1, i2], y: dvector![u], ydot: None };
        let r = residual_first_order(&make_bem(b0).unwrap(), &c, &prev, &cand, b0).unwrap();
        assert!(r.amax() <= 1e-15, "{r}");
    }

    #[test]
    fn taylor2_residual_vanishes_at_oracle() {
        let c = unit_circuit();
        let prev = c.state_with_currents(0.06, 0.04, 0.0).unwrap();
        let coeffs = make_taylor2(0.1).unwrap();
        let (u, udot) = oracle_u_second(1.0, 1.0, 0.0, 0.0, 0.0, 0.0, coeffs.c0, 0.1).unwrap();
        let i1 = 0.06 + coeffs.b0 * u + coeffs.c0 * udot;
        let i2 = 0.04 + coeffs.b0 * u + coeffs.c0 * udot;
        let cand = Candidate { x: dvector![i1, i2], y: dvector![u], ydot: Some(dvector![udot]) };
        let r = residual_second_order(&coeffs, &c, &prev, &cand, 0.1).unwrap();
        assert!(r.amax() <= 1e-15, "{r}");
    }

    #[test]
    fn analytic_jacobians_match_finite_differences() {
        let src = Waveform::Cosine { amplitude: 1.0, omega: 3.0, phase: 0.2 };
        for closed in [false, true] {
            let mut c = build_fig1_circuit(0.7, 1.3, src, Waveform::Constant(0.1)).unwrap();
            if closed {
                c = c.with_switch_closed(2.0).unwrap();
            }
            let (x, y) = (dvector![0.2, -0.1], dvector![0.4]);
            let a = c.jacobians(&x, &y, 0.5);
            let e = estimate_jacobians(&c, &x, &y, 0.5);
            assert!((a.df_dy - e.df_dy).amax() < 1e-8);
            assert!((a.df_dt - e.df_dt).amax() < 1e-6);
            assert!((a.dg_dx - e.dg_dx).amax() < 1e-8);
            assert!((a.dg_dy - e.dg_dy).amax() < 1e-8);
        }
    }

    #[test]
    fn mutate_and_inverse_restore_g() {
        let mut c = unit_circuit().with_switch_closed(1.5).unwrap();
        let (x, y) = (dvector![0.06, 0.04], dvector![-0.15]);
        let before = c.g(&x, &y, 0.0);
        c.mutate("open-switch").unwrap();
        assert_ne!(c.g(&x, &y, 0.0), before);
        c.mutate("close-switch").unwrap();
        assert_eq!(c.g(&x, &y, 0.0), before);
        assert!(c.mutate("apply-fault").is_err());
    }

    #[test]
    fn closed_decay_solution_satisfies_dae() {
        let c = build_fig1_circuit(1.0, 0.5, Waveform::Constant(0.0), Waveform::Constant(0.0))
            .unwrap()
            .with_switch_closed(1.0)
            .unwrap();
        let (i1, i2, u) = c.closed_decay_solution(0.06, 0.04, 0.3);
        let g = c.g(&dvector![i1, i2], &dvector![u], 0.3);
        assert!(g.amax() < 1e-15);
        // derivative by central difference of the closed form
        let d = 1e-6;
        let (a, b, _) = c.closed_decay_solution(0.06, 0.04, 0.3 + d);
        let (a0, b0, _) = c.closed_decay_solution(0.06, 0.04, 0.3 - d);
        let f = c.f(&dvector![i1, i2], &dvector![u], 0.3);
        assert!(((a - a0) / (2.0 * d) - f[0]).abs() < 1e-8);
        assert!(((b - b0) / (2.0 * d) - f[1]).abs() < 1e-8);
    }
}
