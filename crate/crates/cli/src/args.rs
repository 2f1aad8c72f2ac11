use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use pfasst_core::pfasst::Mode;
use pfasst_core::{ForcingMode, Interpolation, SimulationConfig, StencilKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Sdc,
    Mlsdc,
    Pfasst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ForcingArg {
    /// Source term for which the analytic solution is exact.
    Corrected,
    /// Source coefficient as printed in the original problem statement.
    Paper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StencilArg {
    /// Fourth-order compact (Mehrstellen) Laplacian.
    Compact4,
    /// Second-order 7-point Laplacian.
    Second2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InterpArg {
    Trilinear,
    Tricubic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Sequential,
    Concurrent,
}

/// Space-time parallel SDC / MLSDC / PFASST for the forced heat equation
/// on the unit cube.
#[derive(Debug, Clone, Parser)]
#[command(name = "pfasst-heat", version)]
pub struct Args {
    #[arg(long, value_enum, default_value_t = ModeArg::Sdc)]
    pub mode: ModeArg,

    /// Fine grid points per dimension (2^k - 1).
    #[arg(long, default_value_t = 31)]
    pub nx: usize,

    #[arg(long = "nx-coarse", default_value_t = 15)]
    pub nx_coarse: usize,

    /// Lobatto nodes per step on the fine level.
    #[arg(long, default_value_t = 5)]
    pub nodes: usize,

    #[arg(long = "nodes-coarse", default_value_t = 3)]
    pub nodes_coarse: usize,

    #[arg(long, default_value_t = 0.1875)]
    pub dt: f64,

    #[arg(long, default_value_t = 6.0)]
    pub tend: f64,

    #[arg(long, default_value_t = 0.1)]
    pub nu: f64,

    /// Residual threshold of the SDC / PFASST iteration.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,

    #[arg(long = "max-iter", default_value_t = 100)]
    pub max_iter: usize,

    /// Time ranks per PFASST block.
    #[arg(long, default_value_t = 1)]
    pub ranks: usize,

    #[arg(long, value_enum, default_value_t = ForcingArg::Corrected)]
    pub forcing: ForcingArg,

    #[arg(long, value_enum, default_value_t = StencilArg::Compact4)]
    pub stencil: StencilArg,

    #[arg(long = "stencil-coarse", value_enum, default_value_t = StencilArg::Second2)]
    pub stencil_coarse: StencilArg,

    /// Spatial interpolation of coarse corrections.
    #[arg(long, value_enum, default_value_t = InterpArg::Trilinear)]
    pub interp: InterpArg,

    #[arg(long, value_enum, default_value_t = BackendArg::Sequential)]
    pub backend: BackendArg,

    /// Directory receiving steps.csv and summary.csv.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,

    /// Reserved; the numerics are deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Print the speedup and efficiency tables recomputed from the
    /// published timings and exit.
    #[arg(long = "table-check")]
    pub table_check: bool,
}

fn kind(s: StencilArg) -> StencilKind {
    match s {
        StencilArg::Compact4 => StencilKind::FourthOrderCompact,
        StencilArg::Second2 => StencilKind::SecondOrder7pt,
    }
}

impl Args {
    pub fn config(&self) -> SimulationConfig {
        SimulationConfig {
            mode: match self.mode {
                ModeArg::Sdc => Mode::Sdc,
                ModeArg::Mlsdc => Mode::Mlsdc,
                ModeArg::Pfasst => Mode::Pfasst,
            },
            nu: self.nu,
            forcing: match self.forcing {
                ForcingArg::Corrected => ForcingMode::Corrected,
                ForcingArg::Paper => ForcingMode::PaperLiteral,
            },
            n_fine: self.nx,
            n_coarse: self.nx_coarse,
            nodes_fine: self.nodes,
            nodes_coarse: self.nodes_coarse,
            kind_fine: kind(self.stencil),
            kind_coarse: kind(self.stencil_coarse),
            dt: self.dt,
            t_end: self.tend,
            tol: self.tol,
            max_iter: self.max_iter,
            ranks: self.ranks,
            interpolation: match self.interp {
                InterpArg::Trilinear => Interpolation::Trilinear,
                InterpArg::Tricubic => Interpolation::Tricubic,
            },
            ..SimulationConfig::default()
        }
    }
}
