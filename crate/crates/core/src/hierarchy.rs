//! Two-level MLSDC: space-time transfer between a fine and a coarse level,
//! the FAS correction that keeps the coarse problem consistent with the
//! fine one, and the MLSDC iteration built from them.
//!
//! Coarse time nodes must be a subset of the fine ones; in space the coarse
//! grid is either identical to the fine one or its next coarser grid
//! (`n_f = 2 n_c + 1`).

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{interpolate_with, restrict, Field, Interpolation};
use crate::perfmodel::{Phase, Timer};
use crate::quadrature::{injection_indices, time_interp_matrix, CollocationSet};
use crate::sweeper::{check_iteration_limits, ImexProblem, StepOutcome, SweepState};

/// One rung of the hierarchy: a problem discretization and its sweep state.
#[derive(Debug, Clone)]
pub struct Level<P> {
    pub problem: P,
    pub state: SweepState,
}

impl<P: ImexProblem> Level<P> {
    pub fn new(problem: P, colloc: CollocationSet) -> Self {
        let state = SweepState::new(colloc, problem.grid_size());
        Level { problem, state }
    }

    pub fn n(&self) -> usize {
        self.problem.grid_size()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SpaceTransfer {
    Identity,
    Coarsen,
}

#[derive(Debug, Clone)]
pub struct TwoLevel<P> {
    pub fine: Level<P>,
    pub coarse: Level<P>,
    /// FAS correction per coarse substep.
    tau: Vec<Field>,
    coarse_old: Vec<Field>,
    /// Fine node index of each coarse node.
    inject: Vec<usize>,
    /// Rows: fine nodes; columns: coarse nodes.
    interp: Vec<Vec<f64>>,
    space: SpaceTransfer,
    pub interpolation: Interpolation,
    pub coarse_sweeps: usize,
    pub timer: Timer,
}

impl<P: ImexProblem> TwoLevel<P> {
    pub fn new(fine: Level<P>, coarse: Level<P>) -> Result<Self> {
        let (nf, nc) = (fine.n(), coarse.n());
        let space = if nf == nc {
            SpaceTransfer::Identity
        } else if nf == 2 * nc + 1 {
            SpaceTransfer::Coarsen
        } else {
            return Err(Error::unsupported(format!(
                "coarse grid n = {nc} is not nested in fine grid n = {nf}"
            )));
        };
        let (fn_, cn) = (fine.state.colloc().nodes(), coarse.state.colloc().nodes());
        let inject = injection_indices(cn, fn_)?;
        if inject[0] != 0 || inject[inject.len() - 1] != fn_.len() - 1 {
            return Err(Error::unsupported("coarse nodes must include both step endpoints"));
        }
        let interp = time_interp_matrix(cn, fn_)?;
        let count = coarse.state.num_nodes();
        Ok(TwoLevel {
            tau: (0..count - 1).map(|_| Field::zeros(nc)).collect(),
            coarse_old: (0..count).map(|_| Field::zeros(nc)).collect(),
            fine,
            coarse,
            inject,
            interp,
            space,
            interpolation: Interpolation::default(),
            coarse_sweeps: 1,
            timer: Timer::default(),
        })
    }

    pub fn tau(&self) -> &[Field] {
        &self.tau
    }

    fn restrict_space(&self, u: &Field) -> Result<Field> {
        match self.space {
            SpaceTransfer::Identity => Ok(u.clone()),
            SpaceTransfer::Coarsen => restrict(u, self.coarse.n()),
        }
    }

    fn interpolate_space(&self, u: &Field) -> Result<Field> {
        match self.space {
            SpaceTransfer::Identity => Ok(u.clone()),
            SpaceTransfer::Coarsen => interpolate_with(u, self.fine.n(), self.interpolation),
        }
    }

    /// Spreads `u0` on the fine level for the step `[t0, t0 + dt]`.
    pub fn spread(&mut self, u0: &Field, t0: f64, dt: f64) -> Result<()> {
        self.fine.state.spread_initial(u0, t0, dt, &self.fine.problem)?;
        let uc = self.restrict_space(u0)?;
        self.coarse.state.spread_initial(&uc, t0, dt, &self.coarse.problem)
    }

    /// Coarse node values from the coincident fine nodes, with coarse
    /// caches re-evaluated; the result is also saved for the correction.
    pub fn restrict_state(&mut self) -> Result<()> {
        let t0 = self.fine.state.t0();
        let dt = self.fine.state.dt();
        if self.coarse.state.t0() != t0 || self.coarse.state.dt() != dt {
            let u0 = self.restrict_space(&self.fine.state.u()[0])?;
            self.coarse.state.spread_initial(&u0, t0, dt, &self.coarse.problem)?;
        }
        for (mc, &mf) in self.inject.iter().enumerate() {
            let v = self.restrict_space(&self.fine.state.u()[mf])?;
            self.coarse.state.set_node(mc, v, &self.coarse.problem)?;
        }
        self.coarse_old = self.coarse.state.u().to_vec();
        Ok(())
    }

    /// `τ_m = R(Σ fine node-to-node integrals over coarse substep m)` minus
    /// the coarse node-to-node integral, so that the coarse sweep with `τ`
    /// added reproduces the fine integrals at a fine collocation solution.
    pub fn fas_correction(&mut self) -> Result<()> {
        let fine = self.fine.state.node_integrals();
        let coarse = self.coarse.state.node_integrals();
        let mut tau = Vec::with_capacity(coarse.len());
        for (m, c) in coarse.iter().enumerate() {
            let mut sum = Field::zeros(self.fine.n());
            for f in &fine[self.inject[m]..self.inject[m + 1]] {
                sum.axpy(1.0, f);
            }
            let mut t = self.restrict_space(&sum)?;
            t.axpy(-1.0, c);
            tau.push(t);
        }
        self.tau = tau;
        Ok(())
    }

    /// Restriction followed by the FAS correction, timed as transfer.
    pub fn restrict_with_fas(&mut self) -> Result<()> {
        let started = self.timer.start();
        self.restrict_state()?;
        self.fas_correction()?;
        self.timer.stop(Phase::Transfer, started);
        Ok(())
    }

    pub fn fine_sweep(&mut self) -> Result<()> {
        let started = self.timer.start();
        self.fine.state.sweep(&self.fine.problem, None)?;
        self.timer.stop(Phase::FineSweep, started);
        Ok(())
    }

    pub fn coarse_sweep(&mut self) -> Result<()> {
        let started = self.timer.start();
        self.coarse.state.sweep(&self.coarse.problem, Some(&self.tau))?;
        self.timer.stop(Phase::CoarseSweep, started);
        Ok(())
    }

    /// Replaces the coarse initial value (after restriction).
    pub fn set_coarse_initial(&mut self, u0: Field) -> Result<()> {
        self.coarse.state.set_initial(u0, &self.coarse.problem)
    }

    /// Replaces the fine initial value.
    pub fn set_fine_initial(&mut self, u0: Field) -> Result<()> {
        self.fine.state.set_initial(u0, &self.fine.problem)
    }

    /// Fine `U_m += I_space(Σ_j T[m][j] (U^c_j − U^c_old_j))`.
    pub fn coarse_correction(&mut self) -> Result<()> {
        let started = self.timer.start();
        let deltas: Vec<Option<Field>> = self
            .coarse
            .state
            .u()
            .iter()
            .zip(&self.coarse_old)
            .map(|(new, old)| {
                let d = new.sub(old);
                if d.is_zero() {
                    Ok(None)
                } else {
                    self.interpolate_space(&d).map(Some)
                }
            })
            .collect::<Result<_>>()?;
        if deltas.iter().all(Option::is_none) {
            self.timer.stop(Phase::Interpolation, started);
            return Ok(());
        }
        let linear = self.fine.problem.implicit_is_linear();
        let t0 = self.fine.state.t0();
        let implicit: Vec<Option<Field>> = if linear {
            deltas
                .iter()
                .map(|d| d.as_ref().map(|d| self.fine.problem.f_implicit(d, t0)).transpose())
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        let nf = self.fine.n();
        for m in 0..self.fine.state.num_nodes() {
            let mut du = Field::zeros(nf);
            let mut dfi = Field::zeros(nf);
            let mut touched = false;
            for (j, d) in deltas.iter().enumerate() {
                let w = self.interp[m][j];
                if let (Some(d), true) = (d, w != 0.0) {
                    du.axpy(w, d);
                    if linear {
                        if let Some(fi) = &implicit[j] {
                            dfi.axpy(w, fi);
                        }
                    }
                    touched = true;
                }
            }
            if !touched {
                continue;
            }
            if linear {
                self.fine.state.add_to_node_linear(m, &du, &dfi, &self.fine.problem);
            } else {
                let mut v = self.fine.state.u()[m].clone();
                v.axpy(1.0, &du);
                self.fine.state.set_node(m, v, &self.fine.problem)?;
            }
        }
        self.timer.stop(Phase::Interpolation, started);
        Ok(())
    }

    pub fn fine_residual(&self) -> f64 {
        self.fine.state.residual(None)
    }

    /// Coarse collocation defect including the FAS correction.
    pub fn coarse_residual(&self) -> f64 {
        self.coarse.state.residual(Some(&self.tau))
    }

    /// Restriction, FAS, one coarse sweep and coarse correction on a freshly
    /// spread state.
    pub fn predict(&mut self) -> Result<()> {
        self.restrict_with_fas()?;
        self.coarse_sweep()?;
        self.coarse_correction()
    }

    /// Fine sweep, restriction with FAS, coarse sweeps, coarse correction;
    /// returns the fine residual.
    pub fn mlsdc_iteration(&mut self) -> Result<f64> {
        self.fine_sweep()?;
        self.restrict_with_fas()?;
        for _ in 0..self.coarse_sweeps {
            self.coarse_sweep()?;
        }
        self.coarse_correction()?;
        Ok(self.fine_residual())
    }

    /// Serial MLSDC step from `u0` on `[t_n, t_n + dt]`.
    pub fn mlsdc_step(&mut self, u0: &Field, t_n: f64, dt: f64, tol: f64, max_iter: usize) -> Result<StepOutcome> {
        check_iteration_limits(tol, max_iter)?;
        self.spread(u0, t_n, dt)?;
        self.predict()?;
        let mut residual = f64::INFINITY;
        for k in 1..=max_iter {
            residual = self.mlsdc_iteration()?;
            if residual <= tol {
                return Ok(StepOutcome {
                    u_end: self.fine.state.end_value().clone(),
                    iterations: k,
                    residual,
                    converged: true,
                });
            }
        }
        Ok(StepOutcome {
            u_end: self.fine.state.end_value().clone(),
            iterations: max_iter,
            residual,
            converged: false,
        })
    }
}
