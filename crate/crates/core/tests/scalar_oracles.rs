//! Dense linear-algebra oracles on the one-unknown heat problem.
//!
//! With `n = 1` (h = 1/2) the 7-point Laplacian is `−24 u`, so
//! `fI(u) = −2.4 u` for ν = 0.1, and the source at the single grid point is
//! the time factor of the forcing. Everything below is recomputed from
//! scratch with small dense solves, independent of the library's
//! quadrature and sweep code.

use pfasst_core::heat::{ForcingMode, HeatProblem, LevelProblem};
use pfasst_core::perfmodel::Timer;
use pfasst_core::quadrature::lobatto_nodes;
use pfasst_core::sweeper::sdc_step;
use pfasst_core::{CollocationSet, Field, StencilKind, SweepState};
use proptest::prelude::*;

const LAMBDA: f64 = -2.4;

fn scalar(forcing: ForcingMode) -> LevelProblem {
    LevelProblem::new(HeatProblem::new(0.1, forcing).unwrap(), 1, StencilKind::SecondOrder7pt)
}

fn one(v: f64) -> Field {
    Field::constant(1, v)
}

fn val(f: &Field) -> f64 {
    f.values()[0]
}

/// Gaussian elimination with partial pivoting.
fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

/// `q[m][i] = ∫_0^{τ_m} ℓ_i` via the transposed Vandermonde system
/// `Σ_i τ_i^k q[m][i] = τ_m^{k+1} / (k + 1)`.
fn q_oracle(nodes: &[f64]) -> Vec<Vec<f64>> {
    let n = nodes.len();
    nodes
        .iter()
        .map(|&tm| {
            let a = (0..n).map(|k| nodes.iter().map(|t| t.powi(k as i32)).collect()).collect();
            let b = (0..n).map(|k| tm.powi(k as i32 + 1) / (k + 1) as f64).collect();
            dense_solve(a, b)
        })
        .collect()
}

fn source(problem: &LevelProblem, t: f64) -> f64 {
    problem.heat.source_factor(t)
}

/// Collocation solution `(I − dt λ Q) U = u0 + dt Q g(t)` on `[t0, t0 + dt]`.
fn collocation(problem: &LevelProblem, count: usize, u0: f64, t0: f64, dt: f64) -> Vec<f64> {
    let nodes = lobatto_nodes(count, 0.0, 1.0).unwrap();
    let q = q_oracle(&nodes);
    let g: Vec<f64> = nodes.iter().map(|x| source(problem, t0 + dt * x)).collect();
    let a = (0..count)
        .map(|m| {
            (0..count)
                .map(|i| f64::from(u8::from(m == i)) - dt * LAMBDA * q[m][i])
                .collect()
        })
        .collect();
    let b = (0..count)
        .map(|m| u0 + dt * (0..count).map(|i| q[m][i] * g[i]).sum::<f64>())
        .collect();
    dense_solve(a, b)
}

/// One IMEX sweep written out for scalars.
fn sweep_oracle(problem: &LevelProblem, u: &[f64], t0: f64, dt: f64) -> Vec<f64> {
    let count = u.len();
    let nodes = lobatto_nodes(count, 0.0, 1.0).unwrap();
    let q = q_oracle(&nodes);
    let t: Vec<f64> = nodes.iter().map(|x| t0 + dt * x).collect();
    let f: Vec<f64> = (0..count).map(|i| LAMBDA * u[i] + source(problem, t[i])).collect();
    let mut new = vec![u[0]; count];
    for m in 0..count - 1 {
        let dtm = dt * (nodes[m + 1] - nodes[m]);
        let s: f64 = dt * (0..count).map(|i| (q[m + 1][i] - q[m][i]) * f[i]).sum::<f64>();
        // f^E depends on t only, so its difference term vanishes.
        let rhs = new[m] - dtm * LAMBDA * u[m + 1] + s;
        new[m + 1] = rhs / (1.0 - dtm * LAMBDA);
    }
    new
}

#[test]
fn q_matrix_matches_vandermonde_oracle() {
    // The monomial system itself is too ill-conditioned beyond 7 nodes.
    for count in 2..=7 {
        let set = CollocationSet::lobatto(count).unwrap();
        let q = q_oracle(set.nodes());
        for (row, orow) in set.q().iter().zip(&q) {
            for (a, b) in row.iter().zip(orow) {
                assert!((a - b).abs() < 1e-12, "count {count}");
            }
        }
    }
}

#[test]
fn two_node_sweep_is_implicit_euler() {
    let p = scalar(ForcingMode::Unforced);
    let mut s = SweepState::new(CollocationSet::lobatto(2).unwrap(), 1);
    let (u0, dt) = (0.8, 0.3);
    s.spread_initial(&one(u0), 0.0, dt, &p).unwrap();
    s.sweep(&p, None).unwrap();
    let expected = u0 / (1.0 - dt * LAMBDA);
    assert!((val(s.end_value()) - expected).abs() < 1e-13);
    assert!((val(s.end_value()) - sweep_oracle(&p, &[u0, u0], 0.0, dt)[1]).abs() < 1e-13);
}

#[test]
fn sweeps_match_scalar_oracle() {
    let p = scalar(ForcingMode::Corrected);
    let (t0, dt) = (0.7, 0.1875);
    let mut s = SweepState::new(CollocationSet::lobatto(5).unwrap(), 1);
    s.spread_initial(&one(0.9), t0, dt, &p).unwrap();
    let mut u = vec![0.9; 5];
    for _ in 0..4 {
        s.sweep(&p, None).unwrap();
        u = sweep_oracle(&p, &u, t0, dt);
        for (m, f) in s.u().iter().enumerate() {
            assert!((val(f) - u[m]).abs() < 1e-13, "node {m}");
        }
    }
}

#[test]
fn spread_residual_matches_oracle() {
    let p = scalar(ForcingMode::Corrected);
    let (t0, dt) = (0.2, 0.5);
    let mut s = SweepState::new(CollocationSet::lobatto(5).unwrap(), 1);
    s.spread_initial(&one(1.0), t0, dt, &p).unwrap();
    let nodes = lobatto_nodes(5, 0.0, 1.0).unwrap();
    let q = q_oracle(&nodes);
    let f: Vec<f64> = nodes.iter().map(|x| LAMBDA + source(&p, t0 + dt * x)).collect();
    let expected = (1..5)
        .map(|m| (dt * (0..5).map(|i| q[m][i] * f[i]).sum::<f64>()).abs())
        .fold(0.0, f64::max);
    assert!((s.residual(None) - expected).abs() < 1e-13);
}

#[test]
fn sdc_converges_to_dense_collocation_solution() {
    let p = scalar(ForcingMode::Corrected);
    for count in [3, 5] {
        let mut s = SweepState::new(CollocationSet::lobatto(count).unwrap(), 1);
        let out = sdc_step(&mut s, &one(1.0), 0.3, 0.1875, 1e-13, 50, &p, &mut Timer::default()).unwrap();
        assert!(out.converged);
        let coll = collocation(&p, count, 1.0, 0.3, 0.1875);
        for (m, f) in s.u().iter().enumerate() {
            assert!((val(f) - coll[m]).abs() < 1e-10, "count {count} node {m}");
        }
    }
}

#[test]
fn collocation_solution_is_a_fixed_point() {
    let p = scalar(ForcingMode::Corrected);
    let coll = collocation(&p, 5, 1.0, 0.0, 0.25);
    let mut s = SweepState::new(CollocationSet::lobatto(5).unwrap(), 1);
    s.spread_initial(&one(1.0), 0.0, 0.25, &p).unwrap();
    for (m, &v) in coll.iter().enumerate() {
        s.set_node(m, one(v), &p).unwrap();
    }
    let eps = s.residual(None);
    assert!(eps < 1e-14);
    s.sweep(&p, None).unwrap();
    for (m, &v) in coll.iter().enumerate() {
        assert!((val(&s.u()[m]) - v).abs() <= 10.0 * 1e-14);
    }
}

/// Error at T = 1 of `u' = −2.4 u` after a fixed number of sweeps per step.
pub fn fixed_sweep_error(sweeps: usize, steps: usize) -> f64 {
    let p = scalar(ForcingMode::Unforced);
    let dt = 1.0 / steps as f64;
    let mut s = SweepState::new(CollocationSet::lobatto(5).unwrap(), 1);
    let mut u = one(1.0);
    for n in 0..steps {
        s.spread_initial(&u, n as f64 * dt, dt, &p).unwrap();
        for _ in 0..sweeps {
            s.sweep(&p, None).unwrap();
        }
        u = s.end_value().clone();
    }
    (val(&u) - (LAMBDA).exp()).abs()
}

#[test]
fn order_grows_by_one_per_sweep() {
    for k in 1..=4 {
        let coarse = fixed_sweep_error(k, 16);
        let fine = fixed_sweep_error(k, 32);
        let order = (coarse / fine).log2();
        assert!(order >= k as f64 - 0.3, "k = {k}: order {order}");
    }
}

#[test]
fn residual_decays_monotonically_on_the_heat_problem() {
    let p = LevelProblem::new(HeatProblem::default(), 15, StencilKind::FourthOrderCompact);
    let mut s = SweepState::new(CollocationSet::lobatto(5).unwrap(), 15);
    s.spread_initial(&pfasst_core::heat::exact_solution(0.0, 15), 0.0, 0.1875, &p).unwrap();
    s.sweep(&p, None).unwrap();
    let mut last = s.residual(None);
    for _ in 0..6 {
        s.sweep(&p, None).unwrap();
        let r = s.residual(None);
        if last < 1e-11 {
            break;
        }
        assert!(r <= 1.05 * last, "{r} after {last}");
        last = r;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sweep_matches_oracle_for_random_data(
        u0 in -2.0f64..2.0,
        t0 in 0.0f64..6.0,
        dt in 0.01f64..0.5,
        count in 2usize..7,
    ) {
        let p = scalar(ForcingMode::Corrected);
        let mut s = SweepState::new(CollocationSet::lobatto(count).unwrap(), 1);
        s.spread_initial(&one(u0), t0, dt, &p).unwrap();
        s.sweep(&p, None).unwrap();
        let u = sweep_oracle(&p, &vec![u0; count], t0, dt);
        prop_assert_eq!(val(&s.u()[0]), u0);
        for (m, f) in s.u().iter().enumerate() {
            prop_assert!((val(f) - u[m]).abs() < 1e-12 * (1.0 + u[m].abs()));
        }
    }

    #[test]
    fn zero_data_is_invariant(count in 2usize..8, dt in 0.01f64..1.0) {
        let p = scalar(ForcingMode::Unforced);
        let mut s = SweepState::new(CollocationSet::lobatto(count).unwrap(), 1);
        s.spread_initial(&one(0.0), 0.0, dt, &p).unwrap();
        s.sweep(&p, None).unwrap();
        prop_assert!(s.u().iter().all(Field::is_zero));
        prop_assert_eq!(s.residual(None), 0.0);
    }
}
