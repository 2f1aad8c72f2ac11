//! PFASST: pipelined two-level MLSDC iterations on `P_T` consecutive time
//! steps, one per time rank.
//!
//! Rank `p` owns step `p` of a block and exchanges node values only with
//! its neighbours `p − 1` (receive) and `p + 1` (send). Every message is
//! named by a [`Tag`] (sender, stage, level), so the value a rank consumes
//! never depends on arrival order. Per iteration `k` rank `p`
//!
//! 1. sweeps on the fine level and sends its fine end value,
//! 2. restricts and computes the FAS correction,
//! 3. receives the coarse initial value from `p − 1` (the only receive that
//!    may block),
//! 4. sweeps on the coarse level and sends its coarse end value,
//! 5. interpolates the coarse correction to the fine level,
//! 6. takes the fine value `p − 1` sent in step 1 as its new fine initial
//!    value, used from iteration `k + 1` on,
//! 7. evaluates its fine residual.
//!
//! The block stops when every rank's residual is below the tolerance.
//!
//! Before the first iteration a staged coarse predictor runs: in stage `j`
//! every rank `p ≥ j` sweeps once on the coarse level, starting from the
//! coarse end value rank `p − 1` produced in stage `j − 1`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{Field, Interpolation, StencilKind};
use crate::heat::{rel_max_error, exact_solution, ForcingMode, HeatProblem, LevelProblem};
use crate::hierarchy::{Level, TwoLevel};
use crate::perfmodel::{Clock, Phase, Timer, TimingRecord};
use crate::pmg::MgConfig;
use crate::quadrature::CollocationSet;
use crate::sweeper::{check_iteration_limits, sdc_step, ImexProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    /// Coarse predictor stage `j`.
    Predictor(usize),
    /// Iteration `k`; fine values sent at the end of the predictor carry
    /// iteration 0.
    Iteration(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LevelId {
    Fine,
    Coarse,
}

/// Identity of a message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tag {
    pub sender: usize,
    pub stage: Stage,
    pub level: LevelId,
}

impl Tag {
    pub fn new(sender: usize, stage: Stage, level: LevelId) -> Self {
        Tag { sender, stage, level }
    }
}

/// Point-to-point transport between neighbouring ranks.
pub trait Comm {
    /// Sends without waiting for the receiver.
    fn send(&mut self, tag: Tag, value: &Field) -> Result<()>;

    /// Returns the message with this tag, waiting for it if necessary.
    fn recv(&mut self, tag: Tag) -> Result<Field>;
}

/// A consumed message and the stage in which it was consumed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Receipt {
    pub during: Stage,
    pub tag: Tag,
}

/// One time rank: its step of the block and its level hierarchy.
#[derive(Debug, Clone)]
pub struct RankState<P> {
    rank: usize,
    ranks: usize,
    pub levels: TwoLevel<P>,
    iteration: usize,
    residual: f64,
    receipts: Vec<Receipt>,
}

impl<P: ImexProblem> RankState<P> {
    pub fn new(rank: usize, ranks: usize, levels: TwoLevel<P>) -> Result<Self> {
        if rank >= ranks {
            return Err(Error::invalid(format!("rank {rank} out of range for {ranks} ranks")));
        }
        Ok(RankState {
            rank,
            ranks,
            levels,
            iteration: 0,
            residual: f64::INFINITY,
            receipts: Vec::new(),
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn receipts(&self) -> &[Receipt] {
        &self.receipts
    }

    pub fn end_value(&self) -> &Field {
        self.levels.fine.state.end_value()
    }

    fn is_last(&self) -> bool {
        self.rank + 1 == self.ranks
    }

    /// Spreads the block initial value over this rank's step `[t0, t0 + dt]`.
    pub fn start_block(&mut self, u0: &Field, t0: f64, dt: f64) -> Result<()> {
        self.iteration = 0;
        self.residual = f64::INFINITY;
        self.receipts.clear();
        self.levels.spread(u0, t0, dt)
    }

    fn receive<C: Comm>(&mut self, comm: &mut C, during: Stage, tag: Tag) -> Result<Field> {
        let started = self.levels.timer.start();
        let v = comm.recv(tag)?;
        self.levels.timer.stop(Phase::CommWait, started);
        self.receipts.push(Receipt { during, tag });
        Ok(v)
    }

    fn send<C: Comm>(&mut self, comm: &mut C, stage: Stage, level: LevelId) -> Result<()> {
        if self.is_last() {
            return Ok(());
        }
        let state = match level {
            LevelId::Fine => &self.levels.fine.state,
            LevelId::Coarse => &self.levels.coarse.state,
        };
        comm.send(Tag::new(self.rank, stage, level), state.end_value())
    }

    /// Staged coarse predictor followed by the coarse correction and the
    /// exchange of fine initial values.
    pub fn predictor<C: Comm>(&mut self, comm: &mut C) -> Result<()> {
        let p = self.rank;
        self.levels.restrict_with_fas()?;
        for j in 0..=p {
            let stage = Stage::Predictor(j);
            if j >= 1 {
                let tag = Tag::new(p - 1, Stage::Predictor(j - 1), LevelId::Coarse);
                let u0 = self.receive(comm, stage, tag)?;
                self.levels.set_coarse_initial(u0)?;
            }
            self.levels.coarse_sweep()?;
            self.send(comm, stage, LevelId::Coarse)?;
        }
        self.levels.coarse_correction()?;
        let stage = Stage::Iteration(0);
        self.send(comm, stage, LevelId::Fine)?;
        if p >= 1 {
            let u0 = self.receive(comm, Stage::Predictor(p), Tag::new(p - 1, stage, LevelId::Fine))?;
            self.levels.set_fine_initial(u0)?;
        }
        Ok(())
    }

    /// One PFASST iteration; returns the fine residual.
    pub fn iterate<C: Comm>(&mut self, comm: &mut C) -> Result<f64> {
        let p = self.rank;
        let k = self.iteration + 1;
        let stage = Stage::Iteration(k);
        self.levels.fine_sweep()?;
        self.send(comm, stage, LevelId::Fine)?;
        self.levels.restrict_with_fas()?;
        if p >= 1 {
            let u0 = self.receive(comm, stage, Tag::new(p - 1, stage, LevelId::Coarse))?;
            self.levels.set_coarse_initial(u0)?;
        }
        for _ in 0..self.levels.coarse_sweeps {
            self.levels.coarse_sweep()?;
        }
        self.send(comm, stage, LevelId::Coarse)?;
        self.levels.coarse_correction()?;
        if p >= 1 {
            let u0 = self.receive(comm, stage, Tag::new(p - 1, stage, LevelId::Fine))?;
            self.levels.set_fine_initial(u0)?;
        }
        self.iteration = k;
        self.residual = self.levels.fine_residual();
        Ok(self.residual)
    }

    /// Full per-rank schedule for message-passing backends: predictor, then
    /// iterations until `decide(k, residual)` returns `true` (stop) or
    /// `max_iter` is reached. Returns the number of iterations performed.
    pub fn run_worker<C: Comm>(
        &mut self,
        comm: &mut C,
        max_iter: usize,
        mut decide: impl FnMut(usize, f64) -> Result<bool>,
    ) -> Result<usize> {
        self.predictor(comm)?;
        for k in 1..=max_iter {
            let r = self.iterate(comm)?;
            if decide(k, r)? {
                return Ok(k);
            }
        }
        Ok(max_iter)
    }
}

/// Outcome of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockOutcome {
    /// Iterations performed (equal on all ranks); `K_P` of the model.
    pub iterations: usize,
    pub residuals: Vec<f64>,
    pub converged: bool,
}

/// Executes the PFASST schedule on a block of ranks that have been spread.
pub trait Backend {
    fn run_block<P: ImexProblem + Send>(
        &mut self,
        ranks: &mut [RankState<P>],
        tol: f64,
        max_iter: usize,
    ) -> Result<BlockOutcome>;
}

/// In-memory message store keyed by tag.
#[derive(Debug, Default)]
pub struct Mailbox {
    slots: BTreeMap<Tag, Field>,
}

impl Mailbox {
    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }
}

impl Comm for Mailbox {
    fn send(&mut self, tag: Tag, value: &Field) -> Result<()> {
        if self.slots.insert(tag, value.clone()).is_some() {
            return Err(Error::ProtocolViolation(format!("message {tag:?} sent twice")));
        }
        Ok(())
    }

    fn recv(&mut self, tag: Tag) -> Result<Field> {
        self.slots
            .remove(&tag)
            .ok_or_else(|| Error::ProtocolViolation(format!("message {tag:?} was never sent")))
    }
}

/// Round-based execution on the calling thread: ranks run in order
/// `0 … P_T − 1` within the predictor and within every iteration.
#[derive(Debug, Clone, Copy, Default)]
pub struct SequentialBackend;

impl Backend for SequentialBackend {
    fn run_block<P: ImexProblem + Send>(
        &mut self,
        ranks: &mut [RankState<P>],
        tol: f64,
        max_iter: usize,
    ) -> Result<BlockOutcome> {
        check_iteration_limits(tol, max_iter)?;
        let mut mail = Mailbox::default();
        for r in ranks.iter_mut() {
            r.predictor(&mut mail)?;
        }
        let mut residuals = Vec::new();
        for k in 1..=max_iter {
            residuals = ranks
                .iter_mut()
                .map(|r| r.iterate(&mut mail))
                .collect::<Result<Vec<_>>>()?;
            if residuals.iter().all(|&r| r <= tol) {
                return Ok(BlockOutcome {
                    iterations: k,
                    residuals,
                    converged: true,
                });
            }
        }
        Ok(BlockOutcome {
            iterations: max_iter,
            residuals,
            converged: false,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Sdc,
    Mlsdc,
    Pfasst,
}

/// Everything needed for one run on `[0, t_end]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub mode: Mode,
    pub nu: f64,
    pub forcing: ForcingMode,
    pub n_fine: usize,
    pub n_coarse: usize,
    pub nodes_fine: usize,
    pub nodes_coarse: usize,
    pub kind_fine: StencilKind,
    pub kind_coarse: StencilKind,
    pub dt: f64,
    pub t_end: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub ranks: usize,
    pub coarse_sweeps: usize,
    pub interpolation: Interpolation,
    pub mg: MgConfig,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            mode: Mode::Sdc,
            nu: 0.1,
            forcing: ForcingMode::Corrected,
            n_fine: 31,
            n_coarse: 15,
            nodes_fine: 5,
            nodes_coarse: 3,
            kind_fine: StencilKind::FourthOrderCompact,
            kind_coarse: StencilKind::SecondOrder7pt,
            dt: 0.1875,
            t_end: 6.0,
            tol: 1e-10,
            max_iter: 100,
            ranks: 1,
            coarse_sweeps: 1,
            interpolation: Interpolation::Trilinear,
            mg: MgConfig::default(),
        }
    }
}

impl SimulationConfig {
    /// Number of time steps; `t_end` must be a whole multiple of `dt`.
    pub fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0) || !(self.t_end > 0.0) {
            return Err(Error::invalid("dt and t_end must be positive"));
        }
        let steps = libm::round(self.t_end / self.dt);
        if steps < 1.0 || (steps * self.dt - self.t_end).abs() > 1e-12 * self.t_end {
            return Err(Error::invalid(format!(
                "t_end = {} is not a multiple of dt = {}",
                self.t_end, self.dt
            )));
        }
        Ok(steps as usize)
    }

    pub fn validate(&self) -> Result<usize> {
        let steps = self.steps()?;
        HeatProblem::new(self.nu, self.forcing)?;
        self.mg.validate()?;
        check_iteration_limits(self.tol, self.max_iter)?;
        if self.ranks == 0 {
            return Err(Error::invalid("at least one time rank is required"));
        }
        if self.mode == Mode::Pfasst && steps % self.ranks != 0 {
            return Err(Error::invalid(format!(
                "{steps} steps cannot be split into blocks of {} ranks",
                self.ranks
            )));
        }
        if self.coarse_sweeps == 0 {
            return Err(Error::invalid("at least one coarse sweep is required"));
        }
        for n in [self.n_fine, self.n_coarse] {
            if !crate::grid::is_valid_size(n) {
                return Err(Error::invalid(format!("grid size must be 2^k - 1, got {n}")));
            }
        }
        Ok(steps)
    }

    fn level(&self, n: usize, kind: StencilKind, nodes: usize) -> Result<Level<LevelProblem>> {
        let heat = HeatProblem::new(self.nu, self.forcing)?;
        let mut problem = LevelProblem::new(heat, n, kind);
        problem.mg = self.mg;
        Ok(Level::new(problem, CollocationSet::lobatto(nodes)?))
    }

    pub fn fine_level(&self) -> Result<Level<LevelProblem>> {
        self.level(self.n_fine, self.kind_fine, self.nodes_fine)
    }

    pub fn hierarchy(&self, clock: Arc<dyn Clock>) -> Result<TwoLevel<LevelProblem>> {
        let mut h = TwoLevel::new(
            self.fine_level()?,
            self.level(self.n_coarse, self.kind_coarse, self.nodes_coarse)?,
        )?;
        h.coarse_sweeps = self.coarse_sweeps;
        h.interpolation = self.interpolation;
        h.timer = Timer::new(clock);
        Ok(h)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// 1-based step index.
    pub step: usize,
    pub time: f64,
    /// Sweeps (SDC) or iterations (MLSDC, PFASST block count).
    pub iterations: usize,
    pub residual: f64,
    /// Relative maximum error against the analytic solution; NaN when the
    /// analytic solution vanishes at this time.
    pub rel_max_error: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub records: Vec<StepRecord>,
    pub timings: TimingRecord,
    pub total_seconds: f64,
    pub u_end: Field,
}

impl SimulationReport {
    pub fn converged(&self) -> bool {
        self.records.iter().all(|r| r.converged)
    }

    /// Largest per-step iteration count.
    pub fn max_iterations(&self) -> usize {
        self.records.iter().map(|r| r.iterations).max().unwrap_or(0)
    }

    pub fn final_error(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.rel_max_error)
    }
}

fn error_at(u: &Field, t: f64) -> Result<f64> {
    match rel_max_error(u, t) {
        Err(Error::DegenerateReference) => Ok(f64::NAN),
        other => other,
    }
}

/// Integrates from the analytic initial value to `t_end` with the
/// configured method.
pub fn run_simulation<B: Backend>(
    cfg: &SimulationConfig,
    backend: &mut B,
    clock: Arc<dyn Clock>,
) -> Result<SimulationReport> {
    let steps = cfg.validate()?;
    let started = clock.now();
    let dt = cfg.dt;
    let mut u = exact_solution(0.0, cfg.n_fine);
    let mut records = Vec::with_capacity(steps);
    let mut timings = TimingRecord::default();
    let mut record = |step: usize, u: &Field, iterations, residual, converged| -> Result<()> {
        let time = step as f64 * dt;
        records.push(StepRecord {
            step,
            time,
            iterations,
            residual,
            rel_max_error: error_at(u, time)?,
            converged,
        });
        Ok(())
    };
    match cfg.mode {
        Mode::Sdc => {
            let level = cfg.fine_level()?;
            let mut state = level.state;
            let mut timer = Timer::new(clock.clone());
            for n in 0..steps {
                let out = sdc_step(&mut state, &u, n as f64 * dt, dt, cfg.tol, cfg.max_iter, &level.problem, &mut timer)?;
                u = out.u_end;
                record(n + 1, &u, out.iterations, out.residual, out.converged)?;
            }
            timings = timer.record;
        }
        Mode::Mlsdc => {
            let mut h = cfg.hierarchy(clock.clone())?;
            for n in 0..steps {
                let out = h.mlsdc_step(&u, n as f64 * dt, dt, cfg.tol, cfg.max_iter)?;
                u = out.u_end;
                record(n + 1, &u, out.iterations, out.residual, out.converged)?;
            }
            timings = h.timer.record;
        }
        Mode::Pfasst => {
            let p_t = cfg.ranks;
            let mut ranks = (0..p_t)
                .map(|p| RankState::new(p, p_t, cfg.hierarchy(clock.clone())?))
                .collect::<Result<Vec<_>>>()?;
            for block in 0..steps / p_t {
                for (p, r) in ranks.iter_mut().enumerate() {
                    r.start_block(&u, (block * p_t + p) as f64 * dt, dt)?;
                }
                let out = backend.run_block(&mut ranks, cfg.tol, cfg.max_iter)?;
                for (p, r) in ranks.iter().enumerate() {
                    let residual = out.residuals.get(p).copied().unwrap_or(f64::INFINITY);
                    record(block * p_t + p + 1, r.end_value(), out.iterations, residual, out.converged)?;
                }
                u = ranks[p_t - 1].end_value().clone();
            }
            for r in &ranks {
                timings.merge(&r.levels.timer.record);
            }
        }
    }
    Ok(SimulationReport {
        records,
        timings,
        total_seconds: clock.now() - started,
        u_end: u,
    })
}
