//! Parallel speedup model for two-level PFASST and the instrumentation
//! feeding it.
//!
//! The model predicts the speedup of PFASST on `P_T` time ranks over serial
//! SDC on the same number of steps:
//!
//! ```text
//! s(P_T) = K_S P_T / (P_T α + K_P (1 + α + β))
//! ```
//!
//! with `K_S` serial sweeps per step, `K_P` PFASST iterations per block,
//! `α` the coarse-to-fine sweep cost ratio and `β` the transfer and
//! communication overhead per fine sweep.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedupParams {
    pub k_serial: f64,
    pub k_parallel: f64,
    pub alpha: f64,
    pub beta: f64,
    pub time_ranks: f64,
}

impl SpeedupParams {
    fn validate(&self) -> Result<()> {
        let fields = [self.k_serial, self.k_parallel, self.alpha, self.beta, self.time_ranks];
        if fields.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(format!("speedup parameters must be non-negative: {self:?}")));
        }
        if self.time_ranks < 1.0 {
            return Err(Error::invalid("at least one time rank is required"));
        }
        Ok(())
    }
}

/// Evaluates the speedup model.
pub fn model_speedup(p: &SpeedupParams) -> Result<f64> {
    p.validate()?;
    let denom = p.time_ranks * p.alpha + p.k_parallel * (1.0 + p.alpha + p.beta);
    if denom <= 0.0 {
        return Err(Error::invalid("speedup model denominator vanishes"));
    }
    Ok(p.k_serial * p.time_ranks / denom)
}

/// Measured speedup: serial cost of `steps` steps over the parallel wall time.
pub fn observed_speedup(serial_step_time: f64, steps: usize, parallel_total: f64) -> Result<f64> {
    if !(parallel_total > 0.0) {
        return Err(Error::invalid("parallel run time must be positive"));
    }
    if !(serial_step_time > 0.0) || steps == 0 {
        return Err(Error::invalid("serial step time and step count must be positive"));
    }
    Ok(serial_step_time * steps as f64 / parallel_total)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfficiencyRow {
    pub ranks: usize,
    pub speedup: f64,
    /// Parallel efficiency in percent.
    pub efficiency: f64,
}

impl fmt::Display for EfficiencyRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:>4} {:>8.2} {:>7.1}%", self.ranks, self.speedup, self.efficiency)
    }
}

/// Efficiency `speedup / ranks` for each row, in percent.
pub fn efficiency_table(speedups: &[f64], ranks: &[usize]) -> Result<Vec<EfficiencyRow>> {
    if speedups.len() != ranks.len() {
        return Err(Error::invalid(format!(
            "{} speedups for {} rank counts",
            speedups.len(),
            ranks.len()
        )));
    }
    speedups
        .iter()
        .zip(ranks)
        .map(|(&speedup, &ranks)| {
            if ranks == 0 {
                return Err(Error::invalid("rank count must be positive"));
            }
            Ok(EfficiencyRow {
                ranks,
                speedup,
                efficiency: 100.0 * speedup / ranks as f64,
            })
        })
        .collect()
}

/// Monotonic time source in seconds.
pub trait Clock: Send + Sync {
    fn now(&self) -> f64;
}

/// A clock that never advances; used when timings are not wanted.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullClock;

impl Clock for NullClock {
    fn now(&self) -> f64 {
        0.0
    }
}

/// Accumulated wall time per solver phase.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TimingRecord {
    pub fine_sweep: f64,
    pub fine_sweeps: usize,
    pub coarse_sweep: f64,
    pub coarse_sweeps: usize,
    /// Restriction plus FAS correction.
    pub transfer: f64,
    pub interpolation: f64,
    pub comm_wait: f64,
}

impl TimingRecord {
    pub fn merge(&mut self, other: &TimingRecord) {
        self.fine_sweep += other.fine_sweep;
        self.fine_sweeps += other.fine_sweeps;
        self.coarse_sweep += other.coarse_sweep;
        self.coarse_sweeps += other.coarse_sweeps;
        self.transfer += other.transfer;
        self.interpolation += other.interpolation;
        self.comm_wait += other.comm_wait;
    }

    pub fn total(&self) -> f64 {
        self.fine_sweep + self.coarse_sweep + self.transfer + self.interpolation + self.comm_wait
    }
}

/// Ratio of the mean coarse sweep time to the mean fine sweep time.
pub fn measure_alpha(t: &TimingRecord) -> Result<f64> {
    if t.fine_sweeps == 0 || t.coarse_sweeps == 0 {
        return Err(Error::InsufficientData(format!(
            "need fine and coarse sweeps, have {} and {}",
            t.fine_sweeps, t.coarse_sweeps
        )));
    }
    if !(t.fine_sweep > 0.0) {
        return Err(Error::InsufficientData("fine sweeps took no measurable time".into()));
    }
    Ok((t.coarse_sweep / t.coarse_sweeps as f64) / (t.fine_sweep / t.fine_sweeps as f64))
}

/// Transfer, interpolation and communication time per unit of fine sweep time.
pub fn measure_beta(t: &TimingRecord) -> Result<f64> {
    if t.fine_sweeps == 0 || !(t.fine_sweep > 0.0) {
        return Err(Error::InsufficientData("no timed fine sweeps".into()));
    }
    Ok((t.transfer + t.interpolation + t.comm_wait) / t.fine_sweep)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    FineSweep,
    CoarseSweep,
    Transfer,
    Interpolation,
    CommWait,
}

/// Accumulates phase timings from a shared clock.
#[derive(Clone)]
pub struct Timer {
    clock: Arc<dyn Clock>,
    pub record: TimingRecord,
}

impl fmt::Debug for Timer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Timer").field("record", &self.record).finish()
    }
}

impl Default for Timer {
    fn default() -> Self {
        Timer::new(Arc::new(NullClock))
    }
}

impl Timer {
    pub fn new(clock: Arc<dyn Clock>) -> Self {
        Timer {
            clock,
            record: TimingRecord::default(),
        }
    }

    pub fn clock(&self) -> Arc<dyn Clock> {
        self.clock.clone()
    }

    pub fn start(&self) -> f64 {
        self.clock.now()
    }

    pub fn stop(&mut self, phase: Phase, started: f64) {
        let elapsed = (self.clock.now() - started).max(0.0);
        let r = &mut self.record;
        match phase {
            Phase::FineSweep => {
                r.fine_sweep += elapsed;
                r.fine_sweeps += 1;
            }
            Phase::CoarseSweep => {
                r.coarse_sweep += elapsed;
                r.coarse_sweeps += 1;
            }
            Phase::Transfer => r.transfer += elapsed,
            Phase::Interpolation => r.interpolation += elapsed,
            Phase::CommWait => r.comm_wait += elapsed,
        }
    }
}
