//! Reference solutions of `u_tau = u_xx` in heat coordinates.
//!
//! [`analytic_heat_u`] maps the closed-form call price into `u`;
//! [`crank_nicolson_solve`] marches the same problem on a uniform grid with
//! Dirichlet data taken from the analytic solution.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::heat::{initial_condition_u, TransformContext};
use crate::pricing::{call_price, MarketParams};

pub const DEFAULT_NODES: usize = 201;
pub const DEFAULT_STEPS: usize = 200;

/// Closed-form call price expressed in heat coordinates.
pub fn analytic_heat_u(x: f64, tau: f64, ctx: &TransformContext) -> Result<f64> {
    if !(tau >= 0.0) {
        return Err(Error::domain(format!(
            "tau must be non-negative, got {tau}"
        )));
    }
    if tau == 0.0 {
        return Ok(initial_condition_u(x, ctx.k));
    }
    let params = MarketParams::new(
        ctx.strike * x.exp(),
        ctx.strike,
        ctx.rate,
        ctx.sigma,
        2.0 * tau / (ctx.sigma * ctx.sigma),
    )?;
    Ok(ctx.u_from_c(call_price(&params)?, x, tau))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    pub x_min: f64,
    pub x_max: f64,
    pub nodes: usize,
    pub tau_max: f64,
    pub steps: usize,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, nodes: usize, tau_max: f64, steps: usize) -> Result<Self> {
        if !(x_min < x_max) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::domain(format!("bad x range [{x_min}, {x_max}]")));
        }
        if nodes < 3 {
            return Err(Error::domain(format!("need at least 3 nodes, got {nodes}")));
        }
        if !(tau_max > 0.0 && tau_max.is_finite()) || steps == 0 {
            return Err(Error::domain(format!(
                "bad time grid: tau_max {tau_max}, {steps} steps"
            )));
        }
        Ok(Grid1D {
            x_min,
            x_max,
            nodes,
            tau_max,
            steps,
        })
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nodes - 1) as f64
    }

    pub fn dtau(&self) -> f64 {
        self.tau_max / self.steps as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        if i == self.nodes - 1 {
            self.x_max
        } else {
            self.x_min + i as f64 * self.dx()
        }
    }

    pub fn tau(&self, n: usize) -> f64 {
        if n == self.steps {
            self.tau_max
        } else {
            n as f64 * self.dtau()
        }
    }

    pub fn x_nodes(&self) -> Vec<f64> {
        (0..self.nodes).map(|i| self.x(i)).collect()
    }

    /// Same extent with `factor` times finer spacing in both directions.
    pub fn refined(&self, factor: usize) -> Self {
        Grid1D {
            nodes: (self.nodes - 1) * factor + 1,
            steps: self.steps * factor,
            ..*self
        }
    }
}

/// Solution values `values[level][node]` on a [`Grid1D`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: Grid1D,
    pub values: Vec<Vec<f64>>,
}

impl Field {
    /// Header `tau,<x nodes...>`, then one row per time level.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau");
        for x in self.grid.x_nodes() {
            let _ = write!(out, ",{x}");
        }
        out.push('\n');
        for (n, row) in self.values.iter().enumerate() {
            let _ = write!(out, "{}", self.grid.tau(n));
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Initial and boundary data for [`crank_nicolson_solve_with`].
pub trait HeatProblem {
    fn initial(&self, x: f64) -> f64;
    fn left(&self, tau: f64) -> f64;
    fn right(&self, tau: f64) -> f64;
}

/// Payoff initial condition with analytic Dirichlet boundaries.
#[derive(Debug, Clone, Copy)]
pub struct CallProblem<'a> {
    pub ctx: &'a TransformContext,
    pub x_min: f64,
    pub x_max: f64,
}

impl HeatProblem for CallProblem<'_> {
    fn initial(&self, x: f64) -> f64 {
        initial_condition_u(x, self.ctx.k)
    }
    fn left(&self, tau: f64) -> f64 {
        analytic_heat_u(self.x_min, tau, self.ctx).unwrap_or(f64::NAN)
    }
    fn right(&self, tau: f64) -> f64 {
        analytic_heat_u(self.x_max, tau, self.ctx).unwrap_or(f64::NAN)
    }
}

/// Crank-Nicolson for the call problem on `grid`.
pub fn crank_nicolson_solve(grid: &Grid1D, ctx: &TransformContext) -> Result<Field> {
    let problem = CallProblem {
        ctx,
        x_min: grid.x_min,
        x_max: grid.x_max,
    };
    crank_nicolson_solve_with(grid, &problem)
}

/// Crank-Nicolson time stepping with Rannacher start-up: the first step is
/// taken as two backward-Euler half steps, which damps the high-frequency
/// content of a non-smooth initial condition that plain Crank-Nicolson would
/// otherwise carry forward undamped.
pub fn crank_nicolson_solve_with<P: HeatProblem + ?Sized>(
    grid: &Grid1D,
    problem: &P,
) -> Result<Field> {
    let n = grid.nodes;
    let first: Vec<f64> = (0..n).map(|i| problem.initial(grid.x(i))).collect();
    let mut values = Vec::with_capacity(grid.steps + 1);
    values.push(first);

    let dtau = grid.dtau();
    let dx = grid.dx();
    let mut start: Vec<f64> = (0..n)
        .map(|i| cell_average(problem, grid.x(i), dx))
        .collect();
    start[0] = values[0][0];
    start[n - 1] = values[0][n - 1];
    let mut stepper = ThetaStepper::new(n, dtau / (grid.dx() * grid.dx()));
    for step in 1..=grid.steps {
        let tau = grid.tau(step);
        let prev = if step == 1 { &start } else { &values[step - 1] };
        let next = if step == 1 {
            let mid_tau = tau - 0.5 * dtau;
            let half = stepper.step(prev, boundaries(problem, mid_tau)?, 0.5, 1.0)?;
            stepper.step(&half, boundaries(problem, tau)?, 0.5, 1.0)?
        } else {
            stepper.step(prev, boundaries(problem, tau)?, 1.0, 0.5)?
        };
        values.push(next);
    }
    Ok(Field {
        grid: *grid,
        values,
    })
}

/// Mean of the initial condition over the cell centred on `x`, by Simpson's
/// rule on each half so that a kink at a node is integrated exactly.
fn cell_average<P: HeatProblem + ?Sized>(problem: &P, x: f64, dx: f64) -> f64 {
    const PANELS: usize = 8;
    let half = 0.5 * dx;
    let simpson = |a: f64| {
        let h = half / (2 * PANELS) as f64;
        let mut sum = problem.initial(a) + problem.initial(a + half);
        for j in 1..2 * PANELS {
            sum += if j % 2 == 1 { 4.0 } else { 2.0 } * problem.initial(a + j as f64 * h);
        }
        sum * h / 3.0
    };
    (simpson(x - half) + simpson(x)) / dx
}

fn boundaries<P: HeatProblem + ?Sized>(problem: &P, tau: f64) -> Result<(f64, f64)> {
    let (left, right) = (problem.left(tau), problem.right(tau));
    if left.is_finite() && right.is_finite() {
        Ok((left, right))
    } else {
        Err(Error::NonFinite {
            location: format!("boundary at tau = {tau}"),
            detail: format!("left {left}, right {right}"),
        })
    }
}

/// One theta-scheme step of `u_tau = u_xx` with Dirichlet ends.
struct ThetaStepper {
    lambda: f64,
    sub: Vec<f64>,
    diag: Vec<f64>,
    sup: Vec<f64>,
    rhs: Vec<f64>,
}

impl ThetaStepper {
    fn new(nodes: usize, lambda: f64) -> Self {
        let m = nodes - 2;
        Self {
            lambda,
            sub: vec![0.0; m],
            diag: vec![0.0; m],
            sup: vec![0.0; m],
            rhs: vec![0.0; m],
        }
    }

    /// Advances by `fraction` of the grid step; `theta` 0.5 is Crank-Nicolson,
    /// 1 is backward Euler.
    fn step(
        &mut self,
        prev: &[f64],
        (left, right): (f64, f64),
        fraction: f64,
        theta: f64,
    ) -> Result<Vec<f64>> {
        let n = prev.len();
        let m = n - 2;
        let l = self.lambda * fraction;
        let (imp, exp) = (theta * l, (1.0 - theta) * l);
        self.sub.fill(-imp);
        self.sup.fill(-imp);
        self.diag.fill(1.0 + 2.0 * imp);
        for i in 1..n - 1 {
            self.rhs[i - 1] = (1.0 - 2.0 * exp) * prev[i] + exp * (prev[i - 1] + prev[i + 1]);
        }
        self.rhs[0] += imp * left;
        self.rhs[m - 1] += imp * right;
        let interior = solve_tridiagonal(&self.sub, &self.diag, &self.sup, &self.rhs)?;
        let mut next = Vec::with_capacity(n);
        next.push(left);
        next.extend(interior);
        next.push(right);
        Ok(next)
    }
}

/// Thomas algorithm. `sub[0]` and `sup[n-1]` are ignored.
pub fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if sub.len() != n || sup.len() != n || rhs.len() != n {
        return Err(Error::Shape(
            "tridiagonal bands and right-hand side differ in length".into(),
        ));
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut pivot = diag[0];
    if pivot.abs() < f64::MIN_POSITIVE {
        return Err(Error::Singular(0));
    }
    c[0] = sup[0] / pivot;
    d[0] = rhs[0] / pivot;
    for i in 1..n {
        pivot = diag[i] - sub[i] * c[i - 1];
        if pivot.abs() < f64::MIN_POSITIVE {
            return Err(Error::Singular(i));
        }
        c[i] = sup[i] / pivot;
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / pivot;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Ok(x)
}

/// Error of a solved field against the analytic solution over interior nodes
/// of every level after the first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSummary {
    pub max_abs: f64,
    /// Root-mean-square error.
    pub l2: f64,
}

pub fn error_vs_analytic(field: &Field, ctx: &TransformContext) -> Result<ErrorSummary> {
    error_on_lattice(field, ctx, 1)
}

/// Error over every `stride`-th level and node, i.e. on the points a grid
/// `stride` times coarser would share with `field`.
fn error_on_lattice(field: &Field, ctx: &TransformContext, stride: usize) -> Result<ErrorSummary> {
    let g = &field.grid;
    let (mut max_abs, mut sq, mut count) = (0.0f64, 0.0, 0usize);
    for (level, row) in field.values.iter().enumerate().skip(stride).step_by(stride) {
        let tau = g.tau(level);
        for (i, v) in row
            .iter()
            .enumerate()
            .take(g.nodes - 1)
            .skip(stride)
            .step_by(stride)
        {
            let e = (v - analytic_heat_u(g.x(i), tau, ctx)?).abs();
            max_abs = max_abs.max(e);
            sq += e * e;
            count += 1;
        }
    }
    Ok(ErrorSummary {
        max_abs,
        l2: (sq / count.max(1) as f64).sqrt(),
    })
}

/// Errors of a grid and its 2x refinement, both measured on the coarse points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinementStudy {
    pub coarse: ErrorSummary,
    pub fine: ErrorSummary,
}

impl RefinementStudy {
    /// Max-norm error reduction from halving both spacings; about 4 for a
    /// second-order scheme.
    pub fn ratio(&self) -> f64 {
        self.coarse.max_abs / self.fine.max_abs
    }
}

pub fn refinement_study(grid: &Grid1D, ctx: &TransformContext) -> Result<RefinementStudy> {
    let coarse = error_vs_analytic(&crank_nicolson_solve(grid, ctx)?, ctx)?;
    let fine = error_on_lattice(&crank_nicolson_solve(&grid.refined(2), ctx)?, ctx, 2)?;
    Ok(RefinementStudy { coarse, fine })
}
