//! Implicit one-step integrators and the Newton machinery that solves them.
//!
//! First-derivative integrators discretize
//!
//! ```text
//! x(t+h) = x(t) + b0·ẋ(t+h) + b−1·ẋ(t)        0 = g(x, y, t+h)
//! ```
//!
//! Second-derivative integrators add `c0·ẍ(t+h) + c−1·ẍ(t)` to the first row,
//! treat `ẏ(t+h)` as an extra unknown and append `dg/dt = 0` at `t+h`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::dae::{eval_f, eval_g, inf_norm, DaeSystem, SystemState};
use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegratorKind {
    FirstOrder,
    SecondOrder,
}

/// Coefficients of one step of a given size.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorCoefficients {
    pub kind: IntegratorKind,
    pub b0: f64,
    pub bm1: f64,
    pub c0: f64,
    pub cm1: f64,
    pub label: String,
}

impl IntegratorCoefficients {
    pub fn first_order(b0: f64, bm1: f64, label: impl Into<String>) -> Self {
        IntegratorCoefficients {
            kind: IntegratorKind::FirstOrder,
            b0,
            bm1,
            c0: 0.0,
            cm1: 0.0,
            label: label.into(),
        }
    }

    pub fn second_order(b0: f64, bm1: f64, c0: f64, cm1: f64, label: impl Into<String>) -> Self {
        IntegratorCoefficients {
            kind: IntegratorKind::SecondOrder,
            b0,
            bm1,
            c0,
            cm1,
            label: label.into(),
        }
    }

    /// True when the step uses nothing from the previous point except `x`.
    pub fn zero_history(&self) -> bool {
        self.bm1 == 0.0 && self.cm1 == 0.0
    }

    /// Amplification factor of one step on `ẋ = λx`.
    pub fn amplification(&self, lambda: f64) -> f64 {
        let num = 1.0 + self.bm1 * lambda + self.cm1 * lambda * lambda;
        let den = 1.0 - self.b0 * lambda - self.c0 * lambda * lambda;
        num / den
    }
}

fn check_step(h: f64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(SimError::Parameter(format!("step size must be positive, got {h}")));
    }
    Ok(())
}

/// Backward Euler.
pub fn make_bem(h: f64) -> Result<IntegratorCoefficients> {
    check_step(h)?;
    Ok(IntegratorCoefficients::first_order(h, 0.0, "bem"))
}

/// Implicit trapezoidal rule.
pub fn make_itm(h: f64) -> Result<IntegratorCoefficients> {
    check_step(h)?;
    Ok(IntegratorCoefficients::first_order(h / 2.0, h / 2.0, "itm"))
}

/// Zero-history second-derivative integrator from the Taylor expansion of
/// `x(t)` about `t+h`; second order accurate.
pub fn make_taylor2(h: f64) -> Result<IntegratorCoefficients> {
    check_step(h)?;
    Ok(IntegratorCoefficients::second_order(h, 0.0, -h * h / 2.0, 0.0, "taylor2"))
}

/// Two-point Hermite (Obreshkov 2,2) integrator; fourth order accurate.
pub fn make_obreshkov22(h: f64) -> Result<IntegratorCoefficients> {
    check_step(h)?;
    Ok(IntegratorCoefficients::second_order(
        h / 2.0,
        h / 2.0,
        -h * h / 12.0,
        h * h / 12.0,
        "obreshkov22",
    ))
}

/// Coefficients expressed per unit step: `b = β·h`, `c = γ·h²`.
///
/// This is how externally derived coefficient sets are plugged in.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedCoefficients {
    pub kind: IntegratorKind,
    pub beta0: f64,
    pub beta_m1: f64,
    pub gamma0: f64,
    pub gamma_m1: f64,
    pub label: String,
}

/// A family of integrators, instantiated for a step size on demand.
#[derive(Debug, Clone, PartialEq)]
pub enum Integrator {
    Bem,
    Itm,
    Taylor2,
    Obreshkov22,
    Custom(NormalizedCoefficients),
}

impl Integrator {
    pub fn coefficients(&self, h: f64) -> Result<IntegratorCoefficients> {
        match self {
            Integrator::Bem => make_bem(h),
            Integrator::Itm => make_itm(h),
            Integrator::Taylor2 => make_taylor2(h),
            Integrator::Obreshkov22 => make_obreshkov22(h),
            Integrator::Custom(n) => {
                check_step(h)?;
                if n.kind == IntegratorKind::FirstOrder && (n.gamma0 != 0.0 || n.gamma_m1 != 0.0) {
                    return Err(SimError::Parameter(format!(
                        "first-order integrator '{}' has nonzero second-derivative coefficients",
                        n.label
                    )));
                }
                Ok(IntegratorCoefficients {
                    kind: n.kind,
                    b0: n.beta0 * h,
                    bm1: n.beta_m1 * h,
                    c0: n.gamma0 * h * h,
                    cm1: n.gamma_m1 * h * h,
                    label: n.label.clone(),
                })
            }
        }
    }

    pub fn kind(&self) -> IntegratorKind {
        match self {
            Integrator::Bem | Integrator::Itm => IntegratorKind::FirstOrder,
            Integrator::Taylor2 | Integrator::Obreshkov22 => IntegratorKind::SecondOrder,
            Integrator::Custom(n) => n.kind,
        }
    }

    pub fn label(&self) -> &str {
        match self {
            Integrator::Bem => "bem",
            Integrator::Itm => "itm",
            Integrator::Taylor2 => "taylor2",
            Integrator::Obreshkov22 => "obreshkov22",
            Integrator::Custom(n) => &n.label,
        }
    }
}

impl fmt::Display for Integrator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Integrator {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bem" => Ok(Integrator::Bem),
            "itm" => Ok(Integrator::Itm),
            "taylor2" => Ok(Integrator::Taylor2),
            "obreshkov22" => Ok(Integrator::Obreshkov22),
            other => Err(SimError::Config(format!("unknown integrator '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSettings {
    /// Threshold on the residual ∞-norm.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        NewtonSettings {
            tol: 1e-10,
            max_iter: 50,
        }
    }
}

impl NewtonSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(SimError::Parameter(format!("newton tolerance must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(SimError::Parameter("newton max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub solution: DVector<f64>,
    pub iterations: usize,
    pub residual_norm: f64,
}

const MAX_HALVINGS: usize = 8;

fn fd_jacobian<F>(residual: &mut F, z: &DVector<f64>, n_rows: usize) -> Result<DMatrix<f64>>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    let n = z.len();
    let mut jac = DMatrix::zeros(n_rows, n);
    let mut zp = z.clone();
    for j in 0..n {
        let v = z[j];
        let d = 1e-4 * v.abs().max(1.0);
        let (hi, lo) = (v + d, v - d);
        zp[j] = hi;
        let r_hi = residual(&zp)?;
        zp[j] = lo;
        let r_lo = residual(&zp)?;
        zp[j] = v;
        jac.set_column(j, &((r_hi - r_lo) / (hi - lo)));
    }
    Ok(jac)
}

/// Damped Newton iteration on `residual(z) = 0` with a central
/// finite-difference linearization.
///
/// A full update that increases the residual norm is halved up to eight
/// times; the last trial is kept if none of them decrease it.
pub fn newton_solve<F>(mut residual: F, guess: DVector<f64>, settings: &NewtonSettings) -> Result<NewtonOutcome>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    settings.validate()?;
    let mut z = guess;
    let mut r = residual(&z)?;
    if r.len() != z.len() {
        return Err(SimError::dim("residual", z.len(), r.len()));
    }
    let mut norm = inf_norm(&r);
    let mut iterations = 0;
    while !(norm <= settings.tol) {
        if iterations == settings.max_iter {
            return Err(SimError::Convergence {
                iterations,
                residual_norm: norm,
            });
        }
        iterations += 1;
        let jac = fd_jacobian(&mut residual, &z, r.len())?;
        let delta = jac
            .lu()
            .solve(&(-&r))
            .filter(|d| d.iter().all(|v| v.is_finite()))
            .ok_or(SimError::Singular { iteration: iterations })?;

        let mut alpha = 1.0;
        let mut trial = &z + &delta;
        let mut r_trial = residual(&trial)?;
        let mut halvings = 0;
        while !(inf_norm(&r_trial) <= norm) && halvings < MAX_HALVINGS {
            alpha *= 0.5;
            halvings += 1;
            trial = &z + &delta * alpha;
            r_trial = residual(&trial)?;
        }
        z = trial;
        r = r_trial;
        norm = inf_norm(&r);
        if !norm.is_finite() {
            return Err(SimError::Convergence {
                iterations,
                residual_norm: norm,
            });
        }
    }
    Ok(NewtonOutcome {
        solution: z,
        iterations,
        residual_norm: norm,
    })
}

/// Trial values for the unknowns at `t+h`.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub ydot: Option<DVector<f64>>,
}

fn require_kind(coeffs: &IntegratorCoefficients, kind: IntegratorKind) -> Result<()> {
    if coeffs.kind != kind {
        return Err(SimError::Usage(format!(
            "integrator '{}' is {:?}, expected {:?}",
            coeffs.label, coeffs.kind, kind
        )));
    }
    Ok(())
}

/// Rows `x − x_t − b0·f(x, y, t+h) − b−1·ẋ_t` followed by `g(x, y, t+h)`.
pub fn residual_first_order<S: DaeSystem + ?Sized>(
    coeffs: &IntegratorCoefficients,
    sys: &S,
    prev: &SystemState,
    cand: &Candidate,
    t_next: f64,
) -> Result<DVector<f64>> {
    require_kind(coeffs, IntegratorKind::FirstOrder)?;
    let (n, m) = (sys.n_diff(), sys.n_alg());
    let f = eval_f(sys, &cand.x, &cand.y, t_next)?;
    let g = eval_g(sys, &cand.x, &cand.y, t_next)?;
    let mut rows = &cand.x - &prev.x - f * coeffs.b0;
    if coeffs.bm1 != 0.0 {
        rows -= &prev.xdot * coeffs.bm1;
    }
    let mut out = DVector::zeros(n + m);
    out.rows_mut(0, n).copy_from(&rows);
    out.rows_mut(n, m).copy_from(&g);
    Ok(out)
}

fn prev_record<'a>(v: &'a Option<DVector<f64>>, what: &str) -> Result<&'a DVector<f64>> {
    v.as_ref()
        .ok_or_else(|| SimError::Usage(format!("previous state carries no {what}; a history-dependent second-order step needs it")))
}

#[allow(clippy::too_many_arguments)]
fn second_order_rows<S: DaeSystem + ?Sized>(
    coeffs: &IntegratorCoefficients,
    sys: &S,
    prev: &SystemState,
    x: &DVector<f64>,
    y: &DVector<f64>,
    ydot: &DVector<f64>,
    t_next: f64,
    with_gdot: bool,
) -> Result<DVector<f64>> {
    require_kind(coeffs, IntegratorKind::SecondOrder)?;
    let (n, m) = (sys.n_diff(), sys.n_alg());
    if ydot.len() != m {
        return Err(SimError::dim("ydot", m, ydot.len()));
    }
    let f = eval_f(sys, x, y, t_next)?;
    let g = eval_g(sys, x, y, t_next)?;
    let jac = sys.jacobians(x, y, t_next);

    let mut rows = x - &prev.x - &f * coeffs.b0;
    if coeffs.c0 != 0.0 {
        rows -= jac.xddot(&f, ydot) * coeffs.c0;
    }
    if coeffs.bm1 != 0.0 {
        rows -= &prev.xdot * coeffs.bm1;
    }
    if coeffs.cm1 != 0.0 {
        rows -= prev_record(&prev.xddot, "ẍ")? * coeffs.cm1;
    }

    let len = if with_gdot { n + 2 * m } else { n + m };
    let mut out = DVector::zeros(len);
    out.rows_mut(0, n).copy_from(&rows);
    out.rows_mut(n, m).copy_from(&g);
    if with_gdot {
        out.rows_mut(n + m, m).copy_from(&jac.gdot(&f, ydot));
    }
    Ok(out)
}

/// Integrator rows with `ẍ` from the chain rule, then `g`, then `dg/dt`,
/// all at `t+h`.
pub fn residual_second_order<S: DaeSystem + ?Sized>(
    coeffs: &IntegratorCoefficients,
    sys: &S,
    prev: &SystemState,
    cand: &Candidate,
    t_next: f64,
) -> Result<DVector<f64>> {
    let ydot = cand
        .ydot
        .as_ref()
        .ok_or_else(|| SimError::Usage("second-order residual needs a ẏ candidate".into()))?;
    second_order_rows(coeffs, sys, prev, &cand.x, &cand.y, ydot, t_next, true)
}

/// Second-order rows with `ẏ` held at a given value instead of solved for;
/// the `dg/dt` rows are dropped. Used when `c0 = 0` leaves `ẏ` undetermined.
pub fn residual_second_order_fixed_ydot<S: DaeSystem + ?Sized>(
    coeffs: &IntegratorCoefficients,
    sys: &S,
    prev: &SystemState,
    x: &DVector<f64>,
    y: &DVector<f64>,
    ydot: &DVector<f64>,
    t_next: f64,
) -> Result<DVector<f64>> {
    second_order_rows(coeffs, sys, prev, x, y, ydot, t_next, false)
}

fn split(z: &DVector<f64>, n: usize, m: usize) -> (DVector<f64>, DVector<f64>) {
    (z.rows(0, n).into_owned(), z.rows(n, m).into_owned())
}

/// One step of size `h` from `state`.
pub fn step<S: DaeSystem + ?Sized>(
    sys: &S,
    state: &SystemState,
    coeffs: &IntegratorCoefficients,
    h: f64,
    settings: &NewtonSettings,
) -> Result<SystemState> {
    step_to(sys, state, coeffs, state.t + h, settings)
}

/// One step landing exactly on `t_next`.
///
/// The Newton guess is the previous point. The `ẏ` guess is the previous
/// record for history-dependent integrators and zero otherwise.
pub fn step_to<S: DaeSystem + ?Sized>(
    sys: &S,
    state: &SystemState,
    coeffs: &IntegratorCoefficients,
    t_next: f64,
    settings: &NewtonSettings,
) -> Result<SystemState> {
    let (n, m) = (sys.n_diff(), sys.n_alg());
    if state.x.len() != n || state.y.len() != m {
        return Err(SimError::dim("state", n + m, state.x.len() + state.y.len()));
    }
    match coeffs.kind {
        IntegratorKind::FirstOrder => {
            let guess = stack(&[&state.x, &state.y]);
            let out = newton_solve(
                |z| {
                    let (x, y) = split(z, n, m);
                    residual_first_order(coeffs, sys, state, &Candidate { x, y, ydot: None }, t_next)
                },
                guess,
                settings,
            )?;
            let (x, y) = split(&out.solution, n, m);
            SystemState::from_point(sys, t_next, x, y)
        }
        IntegratorKind::SecondOrder => {
            if coeffs.c0 == 0.0 {
                return Err(SimError::Usage(format!(
                    "integrator '{}' has c0 = 0, so ẏ cannot be solved; use step_fixed_ydot",
                    coeffs.label
                )));
            }
            // zero-history steps must not see the previous ẏ, not even as a guess
            let ydot_guess = match &state.ydot {
                Some(v) if !coeffs.zero_history() => v.clone(),
                _ => DVector::zeros(m),
            };
            let guess = stack(&[&state.x, &state.y, &ydot_guess]);
            let gdot_scale = if coeffs.b0 != 0.0 { coeffs.b0.abs() } else { 1.0 };
            let out = newton_solve(
                |z| {
                    let (x, y) = split(z, n, m);
                    let ydot = z.rows(n + m, m).into_owned();
                    let mut r = second_order_rows(coeffs, sys, state, &x, &y, &ydot, t_next, true)?;
                    // dg/dt rows in units of g; unscaled they carry O(ẏ) rounding
                    r.rows_mut(n + m, m).scale_mut(gdot_scale);
                    Ok(r)
                },
                guess,
                settings,
            )?;
            let (x, y) = split(&out.solution, n, m);
            let ydot = out.solution.rows(n + m, m).into_owned();
            SystemState::from_point(sys, t_next, x, y)?.with_ydot(sys, ydot)
        }
    }
}

/// A second-order step with `ẏ(t+h)` fixed to `ydot` rather than solved.
pub fn step_fixed_ydot<S: DaeSystem + ?Sized>(
    sys: &S,
    state: &SystemState,
    coeffs: &IntegratorCoefficients,
    t_next: f64,
    ydot: &DVector<f64>,
    settings: &NewtonSettings,
) -> Result<SystemState> {
    let (n, m) = (sys.n_diff(), sys.n_alg());
    let guess = stack(&[&state.x, &state.y]);
    let out = newton_solve(
        |z| {
            let (x, y) = split(z, n, m);
            residual_second_order_fixed_ydot(coeffs, sys, state, &x, &y, ydot, t_next)
        },
        guess,
        settings,
    )?;
    let (x, y) = split(&out.solution, n, m);
    SystemState::from_point(sys, t_next, x, y)?.with_ydot(sys, ydot.clone())
}

pub(crate) fn stack(parts: &[&DVector<f64>]) -> DVector<f64> {
    DVector::from_iterator(
        parts.iter().map(|p| p.len()).sum(),
        parts.iter().flat_map(|p| p.iter().copied()),
    )
}
