//! Bus voltage measurement: Clarke transform, rotation into the PLL frame,
//! PI phase-locked loop and a first-order lag on the phasor magnitude.
//!
//! The chain contributes three differential states (`phi`, `delta_bar`,
//! `V1m`) and five algebraic states (`v1in`, `v1qu`, `V1d`, `V1q`,
//! `V1m_pre`) to the surrounding DAE.

use std::f64::consts::PI;

use crate::error::{Result, SimError};

const SQRT3_2: f64 = 0.866_025_403_784_438_6;

pub const N_DIFF: usize = 3;
pub const N_ALG: usize = 5;

pub const DIFF_NAMES: [&str; N_DIFF] = ["phi", "delta_bar", "V1m"];
pub const ALG_NAMES: [&str; N_ALG] = ["v1in", "v1qu", "V1d", "V1q", "V1m_pre"];

// offsets inside the chain's slices
pub const PHI: usize = 0;
pub const DELTA: usize = 1;
pub const VM: usize = 2;
pub const VIN: usize = 0;
pub const VQU: usize = 1;
pub const VD: usize = 2;
pub const VQ: usize = 3;
pub const VM_PRE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementParams {
    /// Proportional PLL gain, rad/s per p.u.
    pub kp: f64,
    /// Integral PLL gain, rad/s² per p.u.
    pub ki: f64,
    /// Magnitude filter time constant, s.
    pub t_v: f64,
    pub omega_syn: f64,
}

impl Default for MeasurementParams {
    fn default() -> Self {
        MeasurementParams {
            kp: 50.0,
            ki: 500.0,
            t_v: 0.02,
            omega_syn: 120.0 * PI,
        }
    }
}

impl MeasurementParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("Kp", self.kp), ("Ki", self.ki), ("T_V", self.t_v), ("omega_syn", self.omega_syn)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SimError::Parameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementState {
    pub phi: f64,
    pub delta_bar: f64,
    pub v1m: f64,
    pub v1in: f64,
    pub v1qu: f64,
    pub v1d: f64,
    pub v1q: f64,
    pub v1m_pre: f64,
}

impl MeasurementState {
    pub fn diff(&self) -> [f64; N_DIFF] {
        [self.phi, self.delta_bar, self.v1m]
    }

    pub fn alg(&self) -> [f64; N_ALG] {
        [self.v1in, self.v1qu, self.v1d, self.v1q, self.v1m_pre]
    }
}

/// In-phase and quadrature components of a three-phase set.
pub fn clarke(va: f64, vb: f64, vc: f64) -> (f64, f64) {
    let v_in = 2.0 / 3.0 * (va - 0.5 * vb - 0.5 * vc);
    let v_qu = 2.0 / 3.0 * (SQRT3_2 * vb - SQRT3_2 * vc);
    (v_in, v_qu)
}

/// `V1d + jV1q = e^(−jδ̄)·(v1in + j·v1qu)`.
pub fn phase_shift(v1in: f64, v1qu: f64, delta_bar: f64) -> (f64, f64) {
    let (s, c) = delta_bar.sin_cos();
    (v1in * c + v1qu * s, -v1in * s + v1qu * c)
}

/// PI on the quadrature voltage with synchronous feed-forward.
/// Returns `(dphi/dt, dδ̄/dt)`.
pub fn pll_derivatives(phi: f64, params: &MeasurementParams, v1q: f64) -> (f64, f64) {
    (params.ki * v1q, params.omega_syn + params.kp * v1q + phi)
}

pub fn magnitude_pre(v1d: f64, v1q: f64) -> f64 {
    v1d.hypot(v1q)
}

pub fn filter_derivative(v1m: f64, v1m_pre: f64, t_v: f64) -> Result<f64> {
    if !(t_v > 0.0) {
        return Err(SimError::Parameter(format!("filter time constant must be positive, got {t_v}")));
    }
    Ok((v1m_pre - v1m) / t_v)
}

/// Locked chain for a bus phasor `magnitude∠angle` at `t = 0`.
pub fn init_locked(magnitude: f64, angle: f64) -> MeasurementState {
    MeasurementState {
        phi: 0.0,
        delta_bar: angle,
        v1m: magnitude,
        v1in: magnitude * angle.cos(),
        v1qu: magnitude * angle.sin(),
        v1d: magnitude,
        v1q: 0.0,
        v1m_pre: magnitude,
    }
}

/// Right-hand sides of the three differential states.
pub(crate) fn chain_f(params: &MeasurementParams, x: &[f64], y: &[f64]) -> [f64; N_DIFF] {
    let (dphi, ddelta) = pll_derivatives(x[PHI], params, y[VQ]);
    [dphi, ddelta, (y[VM_PRE] - x[VM]) / params.t_v]
}

/// Algebraic residuals given the measured phase voltages.
pub(crate) fn chain_g(vabc: [f64; 3], x: &[f64], y: &[f64]) -> [f64; N_ALG] {
    let (v_in, v_qu) = clarke(vabc[0], vabc[1], vabc[2]);
    let (vd, vq) = phase_shift(y[VIN], y[VQU], x[DELTA]);
    [
        y[VIN] - v_in,
        y[VQU] - v_qu,
        y[VD] - vd,
        y[VQ] - vq,
        y[VM_PRE] - magnitude_pre(y[VD], y[VQ]),
    ]
}

/// Rows of `∂g/∂(va, vb, vc)` for the chain's residuals.
pub(crate) const CLARKE_ROWS: [[f64; 3]; 2] = [
    [-2.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
    [0.0, -2.0 / 3.0 * SQRT3_2, 2.0 / 3.0 * SQRT3_2],
];

/// Closed-form partial derivatives of the chain.
pub(crate) struct ChainJacobian {
    pub df_dx: [[f64; N_DIFF]; N_DIFF],
    pub df_dy: [[f64; N_ALG]; N_DIFF],
    /// With respect to the chain's own differential states.
    pub dg_dx: [[f64; N_DIFF]; N_ALG],
    pub dg_dy: [[f64; N_ALG]; N_ALG],
}

pub(crate) fn chain_jacobian(params: &MeasurementParams, x: &[f64], y: &[f64]) -> ChainJacobian {
    let mut df_dx = [[0.0; N_DIFF]; N_DIFF];
    let mut df_dy = [[0.0; N_ALG]; N_DIFF];
    df_dy[PHI][VQ] = params.ki;
    df_dx[DELTA][PHI] = 1.0;
    df_dy[DELTA][VQ] = params.kp;
    df_dx[VM][VM] = -1.0 / params.t_v;
    df_dy[VM][VM_PRE] = 1.0 / params.t_v;

    let (s, c) = x[DELTA].sin_cos();
    let (v_in, v_qu) = (y[VIN], y[VQU]);
    let mut dg_dx = [[0.0; N_DIFF]; N_ALG];
    let mut dg_dy = [[0.0; N_ALG]; N_ALG];
    dg_dy[VIN][VIN] = 1.0;
    dg_dy[VQU][VQU] = 1.0;

    dg_dy[VD][VD] = 1.0;
    dg_dy[VD][VIN] = -c;
    dg_dy[VD][VQU] = -s;
    dg_dx[VD][DELTA] = v_in * s - v_qu * c;

    dg_dy[VQ][VQ] = 1.0;
    dg_dy[VQ][VIN] = s;
    dg_dy[VQ][VQU] = -c;
    dg_dx[VQ][DELTA] = v_in * c + v_qu * s;

    dg_dy[VM_PRE][VM_PRE] = 1.0;
    let m = magnitude_pre(y[VD], y[VQ]);
    if m > 0.0 {
        dg_dy[VM_PRE][VD] = -y[VD] / m;
        dg_dy[VM_PRE][VQ] = -y[VQ] / m;
    }
    ChainJacobian {
        df_dx,
        df_dy,
        dg_dx,
        dg_dy,
    }
}
