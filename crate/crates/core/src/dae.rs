//! Semi-explicit DAE models and the derivative records carried between steps.
//!
//! A model supplies `ẋ = f(x, y, t)` and the algebraic residual
//! `g(x, y, t)`. Second-derivative integrators additionally need
//! `ẍ = ∂f/∂x ẋ + ∂f/∂y ẏ + ∂f/∂t` and the time derivative of the
//! constraint, both of which are assembled from a [`JacobianSet`].

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SimError};

/// A semi-explicit DAE `ẋ = f(x, y, t)`, `0 = g(x, y, t)`.
///
/// Implementations must return vectors of length [`n_diff`](Self::n_diff)
/// from `f` and [`n_alg`](Self::n_alg) from `g`. Topology changes go through
/// [`mutate`](Self::mutate), which may alter `f` and `g` but never the
/// number of differential variables.
pub trait DaeSystem: Send {
    fn n_diff(&self) -> usize;

    fn n_alg(&self) -> usize;

    fn f(&self, x: &DVector<f64>, y: &DVector<f64>, t: f64) -> DVector<f64>;

    fn g(&self, x: &DVector<f64>, y: &DVector<f64>, t: f64) -> DVector<f64>;

    /// Apply a named topology change such as `"open-switch"` or `"apply-fault"`.
    fn mutate(&mut self, action: &str) -> Result<()> {
        Err(SimError::Model(format!(
            "model has no topology action named '{action}'"
        )))
    }

    /// Labels for `x`, then `y`, then any derived signals.
    fn signal_names(&self) -> Vec<String>;

    /// Extra recorded quantities computed from a solved point.
    fn derived_signals(&self, _x: &DVector<f64>, _y: &DVector<f64>, _t: f64) -> Vec<f64> {
        Vec::new()
    }

    /// Partial derivatives of `f` and `g`. Models with closed-form
    /// derivatives should override the finite-difference default.
    fn jacobians(&self, x: &DVector<f64>, y: &DVector<f64>, t: f64) -> JacobianSet {
        estimate_jacobians(self, x, y, t)
    }
}

/// Partial derivatives of `f` and `g` at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianSet {
    pub df_dx: DMatrix<f64>,
    pub df_dy: DMatrix<f64>,
    pub df_dt: DVector<f64>,
    pub dg_dx: DMatrix<f64>,
    pub dg_dy: DMatrix<f64>,
    pub dg_dt: DVector<f64>,
}

impl JacobianSet {
    pub fn zeros(n_diff: usize, n_alg: usize) -> Self {
        JacobianSet {
            df_dx: DMatrix::zeros(n_diff, n_diff),
            df_dy: DMatrix::zeros(n_diff, n_alg),
            df_dt: DVector::zeros(n_diff),
            dg_dx: DMatrix::zeros(n_alg, n_diff),
            dg_dy: DMatrix::zeros(n_alg, n_alg),
            dg_dt: DVector::zeros(n_alg),
        }
    }

    /// `ẍ = ∂f/∂x ẋ + ∂f/∂y ẏ + ∂f/∂t`.
    pub fn xddot(&self, xdot: &DVector<f64>, ydot: &DVector<f64>) -> DVector<f64> {
        &self.df_dx * xdot + &self.df_dy * ydot + &self.df_dt
    }

    /// `dg/dt = ∂g/∂x ẋ + ∂g/∂y ẏ + ∂g/∂t`.
    pub fn gdot(&self, xdot: &DVector<f64>, ydot: &DVector<f64>) -> DVector<f64> {
        &self.dg_dx * xdot + &self.dg_dy * ydot + &self.dg_dt
    }
}

/// Time, solved variables and the derivative records of one accepted point.
///
/// `xddot` and `ydot` are only carried while a second-derivative integrator
/// is in use.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub t: f64,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub xdot: DVector<f64>,
    pub xddot: Option<DVector<f64>>,
    pub ydot: Option<DVector<f64>>,
}

impl SystemState {
    /// State at `(x, y, t)` with `ẋ` refreshed from `f` and no second-order records.
    pub fn from_point<S: DaeSystem + ?Sized>(
        sys: &S,
        t: f64,
        x: DVector<f64>,
        y: DVector<f64>,
    ) -> Result<Self> {
        let xdot = eval_f(sys, &x, &y, t)?;
        Ok(SystemState {
            t,
            x,
            y,
            xdot,
            xddot: None,
            ydot: None,
        })
    }

    /// Attach `ẏ` and the matching `ẍ`.
    pub fn with_ydot<S: DaeSystem + ?Sized>(mut self, sys: &S, ydot: DVector<f64>) -> Result<Self> {
        let xddot = eval_xddot(sys, &self.x, &self.y, &self.xdot, &ydot, self.t)?;
        self.xddot = Some(xddot);
        self.ydot = Some(ydot);
        Ok(self)
    }

    /// Drop the second-order records.
    pub fn first_order(mut self) -> Self {
        self.xddot = None;
        self.ydot = None;
        self
    }

    /// `x`, then `y`, then the model's derived signals.
    pub fn signal_values<S: DaeSystem + ?Sized>(&self, sys: &S) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.x.len() + self.y.len());
        out.extend(self.x.iter());
        out.extend(self.y.iter());
        out.extend(sys.derived_signals(&self.x, &self.y, self.t));
        out
    }

    /// `‖g(x, y, t)‖∞` and `‖ẋ − f(x, y, t)‖∞`.
    pub fn consistency<S: DaeSystem + ?Sized>(&self, sys: &S) -> Result<(f64, f64)> {
        let g = eval_g(sys, &self.x, &self.y, self.t)?;
        let f = eval_f(sys, &self.x, &self.y, self.t)?;
        Ok((inf_norm(&g), inf_norm(&(&self.xdot - f))))
    }
}

pub(crate) fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, e| m.max(e.abs()))
}

fn check_inputs<S: DaeSystem + ?Sized>(sys: &S, x: &DVector<f64>, y: &DVector<f64>) -> Result<()> {
    if x.len() != sys.n_diff() {
        return Err(SimError::dim("x", sys.n_diff(), x.len()));
    }
    if y.len() != sys.n_alg() {
        return Err(SimError::dim("y", sys.n_alg(), y.len()));
    }
    Ok(())
}

pub fn eval_f<S: DaeSystem + ?Sized>(
    sys: &S,
    x: &DVector<f64>,
    y: &DVector<f64>,
    t: f64,
) -> Result<DVector<f64>> {
    check_inputs(sys, x, y)?;
    let out = sys.f(x, y, t);
    if out.len() != sys.n_diff() {
        return Err(SimError::dim("f output", sys.n_diff(), out.len()));
    }
    Ok(out)
}

pub fn eval_g<S: DaeSystem + ?Sized>(
    sys: &S,
    x: &DVector<f64>,
    y: &DVector<f64>,
    t: f64,
) -> Result<DVector<f64>> {
    check_inputs(sys, x, y)?;
    let out = sys.g(x, y, t);
    if out.len() != sys.n_alg() {
        return Err(SimError::dim("g output", sys.n_alg(), out.len()));
    }
    Ok(out)
}

/// Second derivative of the differential states by the chain rule.
pub fn eval_xddot<S: DaeSystem + ?Sized>(
    sys: &S,
    x: &DVector<f64>,
    y: &DVector<f64>,
    xdot: &DVector<f64>,
    ydot: &DVector<f64>,
    t: f64,
) -> Result<DVector<f64>> {
    check_inputs(sys, x, y)?;
    if xdot.len() != sys.n_diff() {
        return Err(SimError::dim("xdot", sys.n_diff(), xdot.len()));
    }
    if ydot.len() != sys.n_alg() {
        return Err(SimError::dim("ydot", sys.n_alg(), ydot.len()));
    }
    Ok(sys.jacobians(x, y, t).xddot(xdot, ydot))
}

/// Perturbation for central differences around `v`.
fn perturbation(v: f64) -> f64 {
    (1e-7 * v.abs()).max(1e-9)
}

/// Central finite-difference Jacobians of `f` and `g`.
///
/// The divisor is the representable distance between the two perturbed
/// points, so linear models are reproduced up to evaluation rounding.
pub fn estimate_jacobians<S: DaeSystem + ?Sized>(
    sys: &S,
    x: &DVector<f64>,
    y: &DVector<f64>,
    t: f64,
) -> JacobianSet {
    let (n, m) = (sys.n_diff(), sys.n_alg());
    let mut jac = JacobianSet::zeros(n, m);

    let mut xp = x.clone();
    for j in 0..n {
        let v = x[j];
        let d = perturbation(v);
        let (hi, lo) = (v + d, v - d);
        xp[j] = hi;
        let (f_hi, g_hi) = (sys.f(&xp, y, t), sys.g(&xp, y, t));
        xp[j] = lo;
        let (f_lo, g_lo) = (sys.f(&xp, y, t), sys.g(&xp, y, t));
        xp[j] = v;
        let span = hi - lo;
        jac.df_dx.set_column(j, &((f_hi - f_lo) / span));
        jac.dg_dx.set_column(j, &((g_hi - g_lo) / span));
    }

    let mut yp = y.clone();
    for j in 0..m {
        let v = y[j];
        let d = perturbation(v);
        let (hi, lo) = (v + d, v - d);
        yp[j] = hi;
        let (f_hi, g_hi) = (sys.f(x, &yp, t), sys.g(x, &yp, t));
        yp[j] = lo;
        let (f_lo, g_lo) = (sys.f(x, &yp, t), sys.g(x, &yp, t));
        yp[j] = v;
        let span = hi - lo;
        jac.df_dy.set_column(j, &((f_hi - f_lo) / span));
        jac.dg_dy.set_column(j, &((g_hi - g_lo) / span));
    }

    let d = perturbation(t);
    let (hi, lo) = (t + d, t - d);
    let span = hi - lo;
    jac.df_dt = (sys.f(x, y, hi) - sys.f(x, y, lo)) / span;
    jac.dg_dt = (sys.g(x, y, hi) - sys.g(x, y, lo)) / span;
    jac
}

/// `ẏ` satisfying `dg/dt = 0` when `∂g/∂y` is invertible.
pub fn consistent_ydot<S: DaeSystem + ?Sized>(
    sys: &S,
    x: &DVector<f64>,
    y: &DVector<f64>,
    xdot: &DVector<f64>,
    t: f64,
) -> Result<DVector<f64>> {
    check_inputs(sys, x, y)?;
    let jac = sys.jacobians(x, y, t);
    let rhs = -(&jac.dg_dx * xdot + &jac.dg_dt);
    jac.dg_dy
        .lu()
        .solve(&rhs)
        .ok_or_else(|| SimError::Model("∂g/∂y is singular; ẏ is not determined by dg/dt = 0".into()))
}

type VecFn = Box<dyn Fn(&DVector<f64>, &DVector<f64>, f64) -> DVector<f64> + Send + Sync>;

/// A DAE assembled from closures. Useful for small test problems.
pub struct FnDae {
    n_diff: usize,
    n_alg: usize,
    f: VecFn,
    g: VecFn,
    names: Vec<String>,
}

impl FnDae {
    pub fn new<F, G>(n_diff: usize, n_alg: usize, f: F, g: G) -> Self
    where
        F: Fn(&DVector<f64>, &DVector<f64>, f64) -> DVector<f64> + Send + Sync + 'static,
        G: Fn(&DVector<f64>, &DVector<f64>, f64) -> DVector<f64> + Send + Sync + 'static,
    {
        let names = (0..n_diff)
            .map(|i| format!("x{i}"))
            .chain((0..n_alg).map(|i| format!("y{i}")))
            .collect();
        FnDae {
            n_diff,
            n_alg,
            f: Box::new(f),
            g: Box::new(g),
            names,
        }
    }

    /// `ẋ = λ x` with no algebraic part.
    pub fn scalar_linear(lambda: f64) -> Self {
        FnDae::new(
            1,
            0,
            move |x, _, _| DVector::from_element(1, lambda * x[0]),
            |_, _, _| DVector::zeros(0),
        )
    }
}

impl DaeSystem for FnDae {
    fn n_diff(&self) -> usize {
        self.n_diff
    }

    fn n_alg(&self) -> usize {
        self.n_alg
    }

    fn f(&self, x: &DVector<f64>, y: &DVector<f64>, t: f64) -> DVector<f64> {
        (self.f)(x, y, t)
    }

    fn g(&self, x: &DVector<f64>, y: &DVector<f64>, t: f64) -> DVector<f64> {
        (self.g)(x, y, t)
    }

    fn signal_names(&self) -> Vec<String> {
        self.names.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use proptest::prelude::*;

    fn empty() -> DVector<f64> {
        DVector::zeros(0)
    }

    /// ẋ = y, 0 = y − x
    fn follower() -> FnDae {
        FnDae::new(
            1,
            1,
            |_, y, _| dvector![y[0]],
            |x, y, _| dvector![y[0] - x[0]],
        )
    }

    #[test]
    fn eval_f_scalar_decay() {
        let sys = FnDae::scalar_linear(-1.0);
        let f = eval_f(&sys, &dvector![2.0], &empty(), 0.0).unwrap();
        assert_eq!(f[0], -2.0);
    }

    #[test]
    fn eval_f_rejects_wrong_length() {
        let sys = FnDae::scalar_linear(-1.0);
        let err = eval_f(&sys, &dvector![1.0, 2.0], &empty(), 0.0).unwrap_err();
        assert!(matches!(err, SimError::Dimension { what: "x", expected: 1, got: 2 }));
        let err = eval_g(&sys, &dvector![1.0], &dvector![3.0], 0.0).unwrap_err();
        assert!(matches!(err, SimError::Dimension { what: "y", .. }));
    }

    #[test]
    fn eval_g_empty_algebraic_set() {
        let sys = FnDae::scalar_linear(-1.0);
        assert_eq!(eval_g(&sys, &dvector![1.0], &empty(), 0.0).unwrap().len(), 0);
    }

    #[test]
    fn misbehaving_model_output_is_a_dimension_error() {
        let sys = FnDae::new(2, 0, |_, _, _| dvector![1.0], |_, _, _| DVector::zeros(0));
        let err = eval_f(&sys, &dvector![0.0, 0.0], &empty(), 0.0).unwrap_err();
        assert!(matches!(err, SimError::Dimension { what: "f output", .. }));
    }

    #[test]
    fn xddot_chain_rule_examples() {
        let decay = FnDae::scalar_linear(-1.0);
        let xdd = eval_xddot(&decay, &dvector![2.0], &empty(), &dvector![-2.0], &empty(), 0.0).unwrap();
        assert!((xdd[0] - 2.0).abs() < 1e-9);

        let sys = follower();
        let xdd = eval_xddot(&sys, &dvector![1.0], &dvector![1.0], &dvector![1.0], &dvector![3.0], 0.0)
            .unwrap();
        assert!((xdd[0] - 3.0).abs() < 1e-9);

        let jac = sys.jacobians(&dvector![1.0], &dvector![1.0], 5.0);
        assert_eq!(jac.df_dt[0], 0.0);
    }

    #[test]
    fn jacobian_examples() {
        let decay = FnDae::scalar_linear(-1.0);
        let jac = estimate_jacobians(&decay, &dvector![0.7], &empty(), 0.0);
        assert!((jac.df_dx[(0, 0)] + 1.0).abs() < 1e-9);

        let kcl = FnDae::new(
            2,
            1,
            |_, y, _| dvector![y[0], y[0]],
            |x, _, _| dvector![x[0] + x[1]],
        );
        let jac = estimate_jacobians(&kcl, &dvector![0.06, 0.04], &dvector![0.0], 0.0);
        assert!((jac.dg_dx[(0, 0)] - 1.0).abs() < 1e-9);
        assert!((jac.dg_dx[(0, 1)] - 1.0).abs() < 1e-9);

        let square = FnDae::new(1, 1, |_, y, _| dvector![y[0] * y[0]], |_, y, _| dvector![y[0] - 3.0]);
        let jac = estimate_jacobians(&square, &dvector![0.0], &dvector![3.0], 0.0);
        // analytic d(y²)/dy = 2y
        assert!((jac.df_dy[(0, 0)] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn consistent_ydot_solves_constraint_derivative() {
        let sys = follower();
        let (x, y) = (dvector![2.0], dvector![2.0]);
        let xdot = eval_f(&sys, &x, &y, 0.0).unwrap();
        let ydot = consistent_ydot(&sys, &x, &y, &xdot, 0.0).unwrap();
        assert!((ydot[0] - 2.0).abs() < 1e-9);
    }

    fn linear_system(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> FnDae {
        let (n, m) = (a.nrows(), d.nrows());
        FnDae::new(
            n,
            m,
            move |x, y, _| &a * x + &b * y,
            move |x, y, _| &c * x + &d * y,
        )
    }

    fn dyadic_matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
        prop::collection::vec(-40i32..=40, rows * cols)
            .prop_map(move |v| DMatrix::from_iterator(rows, cols, v.into_iter().map(|k| k as f64 / 8.0)))
    }

    fn point(len: usize) -> impl Strategy<Value = DVector<f64>> {
        prop::collection::vec(
            prop_oneof![-2.0..-0.5f64, 0.5..2.0f64],
            len,
        )
        .prop_map(DVector::from_vec)
    }

    fn rel_err(est: &DMatrix<f64>, exact: &DMatrix<f64>) -> f64 {
        let scale = exact.amax().max(1.0);
        (est - exact).amax() / scale
    }

    proptest! {
        #[test]
        fn linear_jacobians_are_reproduced(
            a in dyadic_matrix(3, 3), b in dyadic_matrix(3, 2),
            c in dyadic_matrix(2, 3), d in dyadic_matrix(2, 2),
            x in point(3), y in point(2),
        ) {
            let sys = linear_system(a.clone(), b.clone(), c.clone(), d.clone());
            let jac = estimate_jacobians(&sys, &x, &y, 0.3);
            prop_assert!(rel_err(&jac.df_dx, &a) <= 1e-6);
            prop_assert!(rel_err(&jac.df_dy, &b) <= 1e-6);
            prop_assert!(rel_err(&jac.dg_dx, &c) <= 1e-6);
            prop_assert!(rel_err(&jac.dg_dy, &d) <= 1e-6);
            prop_assert!(jac.df_dt.amax() <= 1e-6);
        }

        #[test]
        fn lti_xddot_matches_constant_jacobians(
            a in dyadic_matrix(3, 3), b in dyadic_matrix(3, 2),
            x in point(3), y in point(2), ydot in point(2),
        ) {
            let c = DMatrix::zeros(2, 3);
            let d = DMatrix::identity(2, 2);
            let sys = linear_system(a.clone(), b.clone(), c, d);
            let xdot = &a * &x + &b * &y;
            let xdd = eval_xddot(&sys, &x, &y, &xdot, &ydot, 0.0).unwrap();
            let exact = &a * &xdot + &b * &ydot;
            let scale = exact.amax().max(1.0);
            prop_assert!((xdd - exact).amax() / scale <= 1e-6);
        }
    }
}
