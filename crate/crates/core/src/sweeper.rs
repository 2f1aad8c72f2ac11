//! Single-level IMEX spectral deferred corrections.
//!
//! One sweep over the substeps `m = 0 … M−1` computes
//!
//! ```text
//! U'_{m+1} = U'_m + Δt_m [fE(U'_m) − fE(U_m)]
//!                 + Δt_m [fI(U'_{m+1}) − fI(U_{m+1})] + Δt S_m
//! ```
//!
//! where `U` is the previous iterate, `U'` the new one and `Δt S_m` the
//! spectral integral of `fE + fI` of the previous iterate from `t_m` to
//! `t_{m+1}`. A converged iteration is the collocation solution.

use alloc::format;
use alloc::vec::Vec;
use core::mem;

use crate::error::{Error, Result};
use crate::grid::Field;
use crate::perfmodel::{Phase, Timer};
use crate::quadrature::CollocationSet;

/// Right-hand side split into an implicit and an explicit part.
pub trait ImexProblem {
    fn grid_size(&self) -> usize;

    fn f_explicit(&self, u: &Field, t: f64) -> Field;

    fn f_implicit(&self, u: &Field, t: f64) -> Result<Field>;

    /// Solves `u − dt · fI(u, t) = rhs` starting from `guess`; returns `u`
    /// and `fI(u, t)`.
    fn solve_implicit(&self, dt: f64, rhs: &Field, t: f64, guess: &Field) -> Result<(Field, Field)>;

    /// Whether `fI(·, t)` is linear, so that corrections can be applied to
    /// cached values instead of re-evaluating them.
    fn implicit_is_linear(&self) -> bool {
        false
    }
}

/// Node values and cached right-hand sides for one time step.
#[derive(Debug, Clone)]
pub struct SweepState {
    colloc: CollocationSet,
    fractions: Vec<f64>,
    t0: f64,
    dt: f64,
    u: Vec<Field>,
    fe: Vec<Field>,
    fi: Vec<Field>,
    sweeps: usize,
}

impl SweepState {
    pub fn new(colloc: CollocationSet, n: usize) -> Self {
        let count = colloc.num_nodes();
        let zeros = || (0..count).map(|_| Field::zeros(n)).collect::<Vec<_>>();
        SweepState {
            fractions: colloc.fractions(),
            colloc,
            t0: 0.0,
            dt: 1.0,
            u: zeros(),
            fe: zeros(),
            fi: zeros(),
            sweeps: 0,
        }
    }

    pub fn colloc(&self) -> &CollocationSet {
        &self.colloc
    }

    pub fn num_nodes(&self) -> usize {
        self.u.len()
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn node_time(&self, m: usize) -> f64 {
        self.t0 + self.dt * self.fractions[m]
    }

    pub fn u(&self) -> &[Field] {
        &self.u
    }

    pub fn fe(&self) -> &[Field] {
        &self.fe
    }

    pub fn fi(&self) -> &[Field] {
        &self.fi
    }

    /// Value at the last node.
    pub fn end_value(&self) -> &Field {
        &self.u[self.u.len() - 1]
    }

    /// Sweeps performed since the last spread.
    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    /// Sets every node to `u0` for the step `[t0, t0 + dt]`.
    pub fn spread_initial<P: ImexProblem>(&mut self, u0: &Field, t0: f64, dt: f64, problem: &P) -> Result<()> {
        if !(dt > 0.0) {
            return Err(Error::invalid(format!("step size must be positive, got {dt}")));
        }
        if u0.n() != problem.grid_size() {
            return Err(Error::invalid(format!(
                "initial value has n = {}, level has n = {}",
                u0.n(),
                problem.grid_size()
            )));
        }
        self.t0 = t0;
        self.dt = dt;
        self.sweeps = 0;
        let fi = problem.f_implicit(u0, t0)?;
        for m in 0..self.num_nodes() {
            self.u[m] = u0.clone();
            self.fe[m] = problem.f_explicit(u0, self.node_time(m));
            self.fi[m] = fi.clone();
        }
        Ok(())
    }

    /// Replaces the value at node `m` and re-evaluates its caches.
    pub fn set_node<P: ImexProblem>(&mut self, m: usize, value: Field, problem: &P) -> Result<()> {
        let t = self.node_time(m);
        self.fe[m] = problem.f_explicit(&value, t);
        self.fi[m] = problem.f_implicit(&value, t)?;
        self.u[m] = value;
        Ok(())
    }

    /// Replaces the initial value `U_0`.
    pub fn set_initial<P: ImexProblem>(&mut self, u0: Field, problem: &P) -> Result<()> {
        if u0 == self.u[0] {
            return Ok(());
        }
        self.set_node(0, u0, problem)
    }

    /// Adds `du` to node `m` and `dfi = fI(du)` to its implicit cache; valid
    /// for linear implicit parts only.
    pub(crate) fn add_to_node_linear<P: ImexProblem>(&mut self, m: usize, du: &Field, dfi: &Field, problem: &P) {
        self.u[m].axpy(1.0, du);
        self.fi[m].axpy(1.0, dfi);
        self.fe[m] = problem.f_explicit(&self.u[m], self.node_time(m));
    }

    fn total_rhs(&self) -> Vec<Field> {
        self.fe
            .iter()
            .zip(&self.fi)
            .map(|(e, i)| {
                let mut f = e.clone();
                f.axpy(1.0, i);
                f
            })
            .collect()
    }

    fn weighted_sum(weights: &[f64], scale: f64, fields: &[Field]) -> Field {
        let mut out = Field::zeros(fields[0].n());
        for (w, f) in weights.iter().zip(fields) {
            if *w != 0.0 {
                out.axpy(scale * w, f);
            }
        }
        out
    }

    /// Node-to-node integrals `Δt Σ_i s[m][i] (fE + fI)(U_i)`, one per substep.
    pub fn node_integrals(&self) -> Vec<Field> {
        let f = self.total_rhs();
        self.colloc
            .s()
            .iter()
            .map(|row| Self::weighted_sum(row, self.dt, &f))
            .collect()
    }

    /// One IMEX sweep. `tau` holds an FAS correction per substep, added to
    /// the integral term.
    pub fn sweep<P: ImexProblem>(&mut self, problem: &P, tau: Option<&[Field]>) -> Result<()> {
        let intervals = self.num_nodes() - 1;
        let mut integrals = self.node_integrals();
        if let Some(tau) = tau {
            for (s, t) in integrals.iter_mut().zip(tau) {
                s.axpy(1.0, t);
            }
        }
        let mut fe_old = self.fe[0].clone();
        for (m, integral) in integrals.into_iter().enumerate().take(intervals) {
            let dtm = self.dt * self.colloc.dtau()[m] / self.colloc.length();
            let t_next = self.node_time(m + 1);
            let mut rhs = self.u[m].clone();
            rhs.axpy(dtm, &self.fe[m]);
            rhs.axpy(-dtm, &fe_old);
            rhs.axpy(-dtm, &self.fi[m + 1]);
            rhs.axpy(1.0, &integral);
            let (u_new, fi_new) = problem.solve_implicit(dtm, &rhs, t_next, &self.u[m + 1])?;
            let fe_new = problem.f_explicit(&u_new, t_next);
            fe_old = mem::replace(&mut self.fe[m + 1], fe_new);
            self.u[m + 1] = u_new;
            self.fi[m + 1] = fi_new;
        }
        self.sweeps += 1;
        Ok(())
    }

    /// Defect of the collocation equations,
    /// `max_m ‖U_0 + Δt Σ_i q[m][i] F_i + Σ_{l<m} τ_l − U_m‖∞`, relative to
    /// `‖U_0‖∞` unless `U_0` vanishes.
    pub fn residual(&self, tau: Option<&[Field]>) -> f64 {
        let f = self.total_rhs();
        let mut worst: f64 = 0.0;
        let mut tau_sum = tau.map(|t| Field::zeros(t[0].n()));
        for m in 1..self.num_nodes() {
            let mut r = Self::weighted_sum(&self.colloc.q()[m], self.dt, &f);
            r.axpy(1.0, &self.u[0]);
            r.axpy(-1.0, &self.u[m]);
            if let (Some(sum), Some(tau)) = (tau_sum.as_mut(), tau) {
                sum.axpy(1.0, &tau[m - 1]);
                r.axpy(1.0, sum);
            }
            worst = worst.max(r.norm_inf());
        }
        let norm = self.u[0].norm_inf();
        if norm > 0.0 {
            worst / norm
        } else {
            worst
        }
    }
}

/// Result of iterating one time step to tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub u_end: Field,
    /// Sweeps (SDC) or iterations (MLSDC, PFASST) performed.
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

pub(crate) fn check_iteration_limits(tol: f64, max_iter: usize) -> Result<()> {
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    if max_iter == 0 {
        return Err(Error::invalid("at least one iteration is required"));
    }
    Ok(())
}

/// Serial SDC on `[t_n, t_n + dt]`: spread, then sweep until the residual
/// drops to `tol` or `max_iter` sweeps were done.
#[allow(clippy::too_many_arguments)]
pub fn sdc_step<P: ImexProblem>(
    state: &mut SweepState,
    u0: &Field,
    t_n: f64,
    dt: f64,
    tol: f64,
    max_iter: usize,
    problem: &P,
    timer: &mut Timer,
) -> Result<StepOutcome> {
    check_iteration_limits(tol, max_iter)?;
    state.spread_initial(u0, t_n, dt, problem)?;
    let mut residual = f64::INFINITY;
    for k in 1..=max_iter {
        let started = timer.start();
        state.sweep(problem, None)?;
        timer.stop(Phase::FineSweep, started);
        residual = state.residual(None);
        if residual <= tol {
            return Ok(StepOutcome {
                u_end: state.end_value().clone(),
                iterations: k,
                residual,
                converged: true,
            });
        }
    }
    Ok(StepOutcome {
        u_end: state.end_value().clone(),
        iterations: max_iter,
        residual,
        converged: false,
    })
}
