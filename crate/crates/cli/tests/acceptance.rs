//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so that the lines are always printed
//! and the timed criteria run one after another. The target fails when the
//! set of failing criteria differs from `KNOWN_UNATTAINABLE`.

use std::collections::BTreeSet;
use std::fs;
use std::sync::Arc;
use std::time::Instant;

use pfasst_core::grid::Field;
use pfasst_core::heat::exact_solution;
use pfasst_core::hierarchy::Level;
use pfasst_core::perfmodel::{measure_alpha, model_speedup};
use pfasst_core::pfasst::{run_simulation, Mode};
use pfasst_core::pmg::solve_implicit;
use pfasst_core::quadrature::lobatto_nodes;
use pfasst_core::{
    Backend, Clock, CollocationSet, ForcingMode, HeatProblem, LevelProblem, MgConfig, RankState, SequentialBackend,
    SimulationConfig, SimulationReport, SpeedupParams, StencilKind, SweepState, TwoLevel,
};
use pfasst_heat::report::{probe_mlsdc, table_rows, write_steps, PUBLISHED};
use pfasst_heat::{ConcurrentBackend, MonotonicClock};

/// The printed Cray XE6 small-run speedup (17.72) does not follow from the
/// printed timings (73.42 · 32 / 132.09 = 17.787).
const KNOWN_UNATTAINABLE: [usize; 1] = [9];

struct Outcome {
    criterion: usize,
    pass: bool,
    detail: String,
}

fn clock() -> Arc<dyn Clock> {
    Arc::new(MonotonicClock::default())
}

fn heat_cfg(mode: Mode, ranks: usize, n_fine: usize, n_coarse: usize, t_end: f64) -> SimulationConfig {
    SimulationConfig {
        mode,
        ranks,
        n_fine,
        n_coarse,
        t_end,
        max_iter: 200,
        ..SimulationConfig::default()
    }
}

fn scalar_cfg(steps: usize) -> SimulationConfig {
    SimulationConfig {
        n_fine: 1,
        n_coarse: 1,
        kind_fine: StencilKind::SecondOrder7pt,
        dt: 0.25,
        t_end: 0.25 * steps as f64,
        tol: 1e-12,
        ..SimulationConfig::default()
    }
}

fn run(cfg: &SimulationConfig) -> SimulationReport {
    run_simulation(cfg, &mut SequentialBackend, clock()).unwrap()
}

/// End-of-step values of serial MLSDC.
fn mlsdc_values(cfg: &SimulationConfig) -> Vec<Field> {
    let mut h = cfg.hierarchy(clock()).unwrap();
    let mut u = exact_solution(0.0, cfg.n_fine);
    let mut out = Vec::new();
    for n in 0..cfg.steps().unwrap() {
        u = h.mlsdc_step(&u, n as f64 * cfg.dt, cfg.dt, cfg.tol, cfg.max_iter).unwrap().u_end;
        out.push(u.clone());
    }
    out
}

/// End-of-step values of PFASST with a single time rank.
fn pfasst_one_rank_values(cfg: &SimulationConfig) -> Vec<Field> {
    let mut ranks = vec![RankState::new(0, 1, cfg.hierarchy(clock()).unwrap()).unwrap()];
    let mut u = exact_solution(0.0, cfg.n_fine);
    let mut out = Vec::new();
    for n in 0..cfg.steps().unwrap() {
        ranks[0].start_block(&u, n as f64 * cfg.dt, cfg.dt).unwrap();
        SequentialBackend.run_block(&mut ranks, cfg.tol, cfg.max_iter).unwrap();
        u = ranks[0].end_value().clone();
        out.push(u.clone());
    }
    out
}

fn max_diff(a: &[Field], b: &[Field]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.max_abs_diff(y)).fold(0.0, f64::max)
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let scalar = scalar_cfg(32);
    let d_scalar = max_diff(&mlsdc_values(&scalar), &pfasst_one_rank_values(&scalar));
    let heat = heat_cfg(Mode::Mlsdc, 1, 31, 15, 4.0 * 0.1875);
    let d_heat = max_diff(&mlsdc_values(&heat), &pfasst_one_rank_values(&heat));
    let secs = started.elapsed().as_secs_f64();
    Outcome {
        criterion: 1,
        pass: d_scalar <= 1e-14 && d_heat <= 1e-13 && secs < 60.0,
        detail: format!(
            "PFASST(P_T=1) vs MLSDC: scalar 32 steps max diff {d_scalar:.1e}, n=31 4 steps max diff {d_heat:.1e}, {secs:.1} s"
        ),
    }
}

/// Criteria 2 and 3 share the n = 31 compact SDC run; criterion 11 reuses
/// the MLSDC timings.
struct Consistency {
    outcome: Outcome,
    sdc_error_31: f64,
    mlsdc_report: SimulationReport,
}

fn criterion_2() -> Consistency {
    let started = Instant::now();
    let mut errors = Vec::new();
    let mut iterations = Vec::new();
    let mut converged = true;
    let mut mlsdc_report = None;
    for (mode, ranks) in [(Mode::Sdc, 1), (Mode::Mlsdc, 1), (Mode::Pfasst, 2), (Mode::Pfasst, 4), (Mode::Pfasst, 8)] {
        let report = run(&heat_cfg(mode, ranks, 31, 15, 6.0));
        converged &= report.converged();
        errors.push(report.final_error());
        iterations.push(report.max_iterations());
        if mode == Mode::Mlsdc {
            mlsdc_report = Some(report);
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let hi = errors.iter().copied().fold(f64::MIN, f64::max);
    let lo = errors.iter().copied().fold(f64::MAX, f64::min);
    let spread = hi - lo;
    Consistency {
        outcome: Outcome {
            criterion: 2,
            pass: converged && spread <= 1e-9 && secs < 600.0,
            detail: format!(
                "errors at T=6 [SDC, MLSDC, P=2, 4, 8] = {:?} (spread {spread:.1e}), iterations {iterations:?}, {secs:.0} s total",
                errors.iter().map(|e| format!("{e:.6e}")).collect::<Vec<_>>()
            ),
        },
        sdc_error_31: errors[0],
        mlsdc_report: mlsdc_report.unwrap(),
    }
}

fn sdc_error(n: usize, kind: StencilKind) -> f64 {
    let cfg = SimulationConfig {
        kind_fine: kind,
        ..heat_cfg(Mode::Sdc, 1, n, (n - 1) / 2, 6.0)
    };
    run(&cfg).final_error()
}

fn criterion_3(compact_31: f64) -> Outcome {
    let compact = sdc_error(15, StencilKind::FourthOrderCompact) / compact_31;
    let second = sdc_error(15, StencilKind::SecondOrder7pt) / sdc_error(31, StencilKind::SecondOrder7pt);
    Outcome {
        criterion: 3,
        pass: (11.0..=22.0).contains(&compact) && (3.0..=5.5).contains(&second),
        detail: format!("error(15)/error(31): compact {compact:.2}, 7-point {second:.2}"),
    }
}

/// Error at T = 1 of `u' = −2.4 u` (scalar heat problem without source)
/// after a fixed number of sweeps per step.
fn fixed_sweep_error(sweeps: usize, steps: usize) -> f64 {
    let p = LevelProblem::new(
        HeatProblem::new(0.1, ForcingMode::Unforced).unwrap(),
        1,
        StencilKind::SecondOrder7pt,
    );
    let dt = 1.0 / steps as f64;
    let mut s = SweepState::new(CollocationSet::lobatto(5).unwrap(), 1);
    let mut u = Field::constant(1, 1.0);
    for n in 0..steps {
        s.spread_initial(&u, n as f64 * dt, dt, &p).unwrap();
        for _ in 0..sweeps {
            s.sweep(&p, None).unwrap();
        }
        u = s.end_value().clone();
    }
    (u.values()[0] - (-2.4f64).exp()).abs()
}

fn criterion_4() -> Outcome {
    let orders: Vec<f64> = (1..=4)
        .map(|k| (fixed_sweep_error(k, 16) / fixed_sweep_error(k, 32)).log2())
        .collect();
    Outcome {
        criterion: 4,
        pass: orders.iter().enumerate().all(|(i, &o)| o >= (i + 1) as f64 - 0.3),
        detail: format!("observed orders for k = 1..4 sweeps: {:?}", orders.iter().map(|o| format!("{o:.2}")).collect::<Vec<_>>()),
    }
}

fn criterion_5() -> Outcome {
    let c = CollocationSet::lobatto(5).unwrap();
    let nodes = lobatto_nodes(5, 0.0, 1.0).unwrap();
    // p(x) = Σ_k (k + 1) x^k for k ≤ 7 integrates to 8 on [0, 1].
    let p = |x: f64| (0..=7).map(|k| (k + 1) as f64 * x.powi(k)).sum::<f64>();
    let full: f64 = c.q()[4].iter().zip(&nodes).map(|(w, &x)| w * p(x)).sum();
    let rule_err = (full - 8.0).abs() / 8.0;
    let mut q_err = 0.0f64;
    for (m, row) in c.q().iter().enumerate() {
        for k in 0..=4 {
            let approx: f64 = row.iter().zip(&nodes).map(|(w, &x)| w * x.powi(k)).sum();
            let exact = nodes[m].powi(k + 1) / (k + 1) as f64;
            q_err = q_err.max((approx - exact).abs());
        }
    }
    Outcome {
        criterion: 5,
        pass: rule_err <= 1e-13 && q_err <= 1e-13,
        detail: format!("Lobatto-5 degree-7 relative error {rule_err:.1e}; Q node integrals degree <= 4 max error {q_err:.1e}"),
    }
}

fn criterion_6() -> Outcome {
    let colloc = CollocationSet::lobatto(5).unwrap();
    let max_dtau = colloc.dtau().iter().copied().fold(0.0, f64::max);
    let lambda = 0.1 * 0.1875 * max_dtau;
    let rhs = Field::from_fn(31, |x, y, z| {
        (13.0 * x).sin() * (7.0 * y).cos() + z * (1.0 - z) + ((x * 97.0 + y * 61.0 + z * 37.0) * 11.0).sin()
    });
    let mut pass = true;
    let mut details = Vec::new();
    for kind in [StencilKind::FourthOrderCompact, StencilKind::SecondOrder7pt] {
        let sol = solve_implicit(lambda, &rhs, kind, &MgConfig::default()).unwrap();
        let rates: Vec<f64> = sol.history.windows(2).map(|w| w[1] / w[0]).collect();
        let asymptotic = rates.iter().skip(2).copied().fold(0.0, f64::max);
        pass &= sol.converged && sol.cycles <= 12 && sol.residual <= 1e-12 && asymptotic <= 0.2;
        details.push(format!(
            "{kind:?}: {} cycles to {:.1e}, worst contraction from cycle 3 {asymptotic:.3}",
            sol.cycles, sol.residual
        ));
    }
    Outcome {
        criterion: 6,
        pass,
        detail: format!("lambda = {lambda:.6e}; {}", details.join("; ")),
    }
}

fn level(n: usize, kind: StencilKind, nodes: usize) -> Level<LevelProblem> {
    Level::new(
        LevelProblem::new(HeatProblem::default(), n, kind),
        CollocationSet::lobatto(nodes).unwrap(),
    )
}

fn max_tau(h: &TwoLevel<LevelProblem>) -> f64 {
    h.tau().iter().map(Field::norm_inf).fold(0.0, f64::max)
}

fn criterion_7() -> Outcome {
    let dt = 0.1875;
    // Identical levels, caches evaluated from node values.
    let mk = || level(15, StencilKind::FourthOrderCompact, 5);
    let mut h = TwoLevel::new(mk(), mk()).unwrap();
    h.spread(&exact_solution(0.0, 15), 0.0, dt).unwrap();
    let fractions = h.fine.state.colloc().fractions();
    for (m, &x) in fractions.iter().enumerate().skip(1) {
        h.fine.state.set_node(m, exact_solution(dt * x, 15), &h.fine.problem).unwrap();
    }
    h.restrict_with_fas().unwrap();
    let tau_compact = max_tau(&h);
    // Identical 7-point levels after a sweep.
    let mk = || level(15, StencilKind::SecondOrder7pt, 5);
    let mut h = TwoLevel::new(mk(), mk()).unwrap();
    h.spread(&exact_solution(0.0, 15), 0.0, dt).unwrap();
    h.fine_sweep().unwrap();
    h.restrict_with_fas().unwrap();
    let tau_7pt = max_tau(&h);
    // Identical compact levels after a sweep: f^I carries the solver tolerance.
    let mk = || level(15, StencilKind::FourthOrderCompact, 5);
    let mut h = TwoLevel::new(mk(), mk()).unwrap();
    h.spread(&exact_solution(0.0, 15), 0.0, dt).unwrap();
    h.fine_sweep().unwrap();
    h.restrict_with_fas().unwrap();
    let tau_compact_swept = max_tau(&h);
    // Fine-converged state on the 31/15 hierarchy.
    let mut h = SimulationConfig::default().hierarchy(clock()).unwrap();
    h.spread(&exact_solution(0.0, 31), 0.0, dt).unwrap();
    for _ in 0..50 {
        h.fine_sweep().unwrap();
        if h.fine_residual() <= 1e-13 {
            break;
        }
    }
    let fine_residual = h.fine_residual();
    h.restrict_with_fas().unwrap();
    let coarse_residual = h.coarse_residual();
    Outcome {
        criterion: 7,
        pass: tau_compact <= 1e-13 && tau_7pt <= 1e-13 && coarse_residual <= 1e-9,
        detail: format!(
            "identical levels max|tau|: compact (evaluated caches) {tau_compact:.1e}, 7-point (after sweep) {tau_7pt:.1e}, \
             compact after sweep {tau_compact_swept:.1e} (info); coarse residual at fine-converged state \
             (fine residual {fine_residual:.1e}) {coarse_residual:.1e}"
        ),
    }
}

fn criterion_8() -> Outcome {
    let mut exact = true;
    for k in [1.0, 3.0, 7.0, 12.0] {
        for p in 1..=64 {
            let s = model_speedup(&SpeedupParams {
                k_serial: k,
                k_parallel: k,
                alpha: 0.0,
                beta: 0.0,
                time_ranks: p as f64,
            })
            .unwrap();
            exact &= s == p as f64;
        }
    }
    let (k_s, alpha) = (5.0, 0.1);
    let s = model_speedup(&SpeedupParams {
        k_serial: k_s,
        k_parallel: 6.0,
        alpha,
        beta: 0.2,
        time_ranks: 1e6,
    })
    .unwrap();
    let limit = k_s / alpha;
    let rel = (s - limit).abs() / limit;
    Outcome {
        criterion: 8,
        pass: exact && rel <= 0.01,
        detail: format!("s(alpha=0, beta=0, K_P=K_S) == P_T exactly: {exact}; s(1e6) = {s:.4} vs K_S/alpha = {limit} ({:.3}%)", rel * 100.0),
    }
}

fn criterion_9() -> Outcome {
    // (run, printed 32-rank speedup, printed efficiency in percent)
    let printed = [(0, 16.68, 52.1), (1, 11.06, 34.6), (2, 17.72, 55.4), (3, 11.22, 35.1)];
    let mut pass = true;
    let mut details = Vec::new();
    for (i, s_printed, e_printed) in printed {
        let run = &PUBLISHED[i];
        let (s, rows) = table_rows(run).unwrap();
        let e = 100.0 * s / 32.0;
        let e_row = rows.last().unwrap().efficiency;
        let ok = (s - s_printed).abs() <= 0.01 + 1e-9
            && (e - e_printed).abs() <= 0.1 + 1e-9
            && (e_row - e_printed).abs() <= 0.1 + 1e-9;
        pass &= ok;
        details.push(format!(
            "{}: {s:.3} ({e:.2}%) vs printed {s_printed} ({e_printed}%) {}",
            run.name,
            if ok { "ok" } else { "MISMATCH" }
        ));
    }
    Outcome {
        criterion: 9,
        pass,
        detail: details.join("; "),
    }
}

fn steps_bytes<B: Backend>(cfg: &SimulationConfig, backend: &mut B, dir: &std::path::Path, name: &str) -> Vec<u8> {
    let report = run_simulation(cfg, backend, clock()).unwrap();
    let path = dir.join(name);
    write_steps(&path, &report.records).unwrap();
    fs::read(path).unwrap()
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut pass = true;
    let mut details = Vec::new();
    for ranks in [2, 4, 8] {
        let cfg = heat_cfg(Mode::Pfasst, ranks, 15, 7, 1.5);
        let reference = steps_bytes(&cfg, &mut SequentialBackend, dir.path(), "reference.csv");
        let mut identical = true;
        for rep in 0..3 {
            identical &= steps_bytes(&cfg, &mut SequentialBackend, dir.path(), &format!("seq{rep}.csv")) == reference;
            identical &= steps_bytes(&cfg, &mut ConcurrentBackend, dir.path(), &format!("con{rep}.csv")) == reference;
        }
        pass &= identical;
        details.push(format!("P_T={ranks}: {}", if identical { "identical" } else { "DIFFERENT" }));
    }
    Outcome {
        criterion: 10,
        pass,
        detail: format!("steps.csv bytes, 3 repetitions x 2 backends, n=15/7, 8 steps: {}", details.join(", ")),
    }
}

fn criterion_11(mlsdc_31: &SimulationReport) -> Outcome {
    let alpha_31 = measure_alpha(&mlsdc_31.timings).unwrap();
    let (_, timings_15) = probe_mlsdc(&heat_cfg(Mode::Mlsdc, 1, 15, 7, 6.0), clock()).unwrap();
    let alpha_15 = measure_alpha(&timings_15).unwrap();
    Outcome {
        criterion: 11,
        pass: alpha_31 < 1.0 && alpha_15 < 1.0,
        detail: format!("measured alpha: n=31/15 {alpha_31:.4}, n=15/7 {alpha_15:.4}"),
    }
}

fn main() {
    let consistency = criterion_2();
    let outcomes = vec![
        criterion_1(),
        consistency.outcome,
        criterion_3(consistency.sdc_error_31),
        criterion_4(),
        criterion_5(),
        criterion_6(),
        criterion_7(),
        criterion_8(),
        criterion_9(),
        criterion_10(),
        criterion_11(&consistency.mlsdc_report),
    ];
    for o in &outcomes {
        println!("criterion {:2}: {} - {}", o.criterion, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    let failed: BTreeSet<usize> = outcomes.iter().filter(|o| !o.pass).map(|o| o.criterion).collect();
    let expected: BTreeSet<usize> = KNOWN_UNATTAINABLE.into_iter().collect();
    assert_eq!(failed, expected, "failing criteria differ from the documented unattainable set");
}
