//! Geometric multigrid for the implicit Euler systems
//!
//! ```text
//! (I − λ L₂) u = b          second-order 7-point kind
//! (B − λ A) u = B b         compact kind (Mehrstellen pair)
//! ```
//!
//! V-cycles with red-black Gauss-Seidel (7-point) or weighted Jacobi
//! (19-point) smoothing, full-weighting residual restriction, trilinear
//! correction interpolation and re-discretised coarse operators, down to a
//! coarsest grid that is solved directly.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{
    apply_stencil_into, full_weighting_padded, interpolate_padded, is_valid_size, square,
    weighting_padded, Field, Padded, Stencil, StencilKind,
};

/// Damping factor of the Jacobi smoother used for the compact kind.
pub const JACOBI_OMEGA: f64 = 0.85;

/// Number of consecutive residual increases treated as divergence.
const GROWTH_LIMIT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MgConfig {
    pub pre_smooth: usize,
    pub post_smooth: usize,
    pub max_cycles: usize,
    /// Relative residual tolerance `‖r‖∞ / ‖rhs‖∞`.
    pub tol: f64,
    /// Grid size solved directly.
    pub coarsest_n: usize,
}

impl Default for MgConfig {
    fn default() -> Self {
        MgConfig {
            pre_smooth: 2,
            post_smooth: 2,
            max_cycles: 50,
            tol: 1e-12,
            coarsest_n: 1,
        }
    }
}

impl MgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::invalid(format!("multigrid tolerance must be positive, got {}", self.tol)));
        }
        if !is_valid_size(self.coarsest_n) {
            return Err(Error::invalid(format!(
                "coarsest grid size must be 2^k - 1, got {}",
                self.coarsest_n
            )));
        }
        if self.max_cycles == 0 {
            return Err(Error::invalid("max_cycles must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MgSolution {
    pub u: Field,
    pub cycles: usize,
    /// Final relative residual.
    pub residual: f64,
    /// Relative residual before the first cycle and after each cycle.
    pub history: Vec<f64>,
    pub converged: bool,
}

/// `shift · M − λ · L` on one grid, where `(M, L)` is `(I, L₂)` or `(B, A)`.
#[derive(Debug, Clone, Copy)]
struct Operator {
    kind: StencilKind,
    shift: f64,
    lambda: f64,
}

impl Operator {
    fn diagonal(&self, n: usize) -> f64 {
        let inv_h2 = square(n as f64 + 1.0);
        match self.kind {
            StencilKind::SecondOrder7pt => self.shift + 6.0 * self.lambda * inv_h2,
            StencilKind::FourthOrderCompact => 0.5 * self.shift + 4.0 * self.lambda * inv_h2,
        }
    }

    /// `−Op` as a stencil.
    fn negated(&self, n: usize) -> Stencil {
        let inv_h2 = square(n as f64 + 1.0);
        match self.kind {
            StencilKind::SecondOrder7pt => Stencil {
                centre: -self.diagonal(n),
                face: self.lambda * inv_h2,
                edge: 0.0,
            },
            StencilKind::FourthOrderCompact => {
                let a = self.lambda * inv_h2 / 6.0;
                Stencil {
                    centre: -self.diagonal(n),
                    face: 2.0 * a - self.shift / 12.0,
                    edge: a,
                }
            }
        }
    }

    /// `r = b − Op u`
    fn residual_into(&self, u: &Padded, b: &Padded, r: &mut Padded) {
        apply_stencil_into(u, Some(b), self.negated(u.n), r);
    }

    fn residual(&self, u: &Padded, b: &Padded) -> Padded {
        let mut r = Padded::zeros(u.n);
        self.residual_into(u, b, &mut r);
        r
    }

    fn smooth(&self, u: &mut Padded, b: &Padded, sweeps: usize, scratch: &mut Padded) {
        match self.kind {
            StencilKind::SecondOrder7pt => {
                let n = u.n;
                let diag = self.diagonal(n);
                let off = self.lambda * square(n as f64 + 1.0);
                let (sx, sy) = (u.stride_x(), u.stride_y());
                let len = n + 2;
                for _ in 0..sweeps {
                    for colour in 0..2 {
                        for i in 1..=n {
                            for j in 1..=n {
                                let base = u.at(i, j, 0);
                                let k0 = 1 + (i + j + 1 + colour) % 2;
                                // The four neighbouring rows are disjoint from the
                                // row being updated.
                                let (lo, rest) = u.data.split_at_mut(base);
                                let (row, hi) = rest.split_at_mut(len);
                                let (xm, ym) = (&lo[base - sx..][..len], &lo[base - sy..][..len]);
                                let (yp, xp) = (&hi[sy - len..][..len], &hi[sx - len..][..len]);
                                let rhs = &b.data[base..base + len];
                                for k in (k0..=n).step_by(2) {
                                    let faces = xm[k] + xp[k] + ym[k] + yp[k] + row[k - 1] + row[k + 1];
                                    row[k] = (rhs[k] + off * faces) / diag;
                                }
                            }
                        }
                    }
                }
            }
            StencilKind::FourthOrderCompact => {
                let scale = JACOBI_OMEGA / self.diagonal(u.n);
                for _ in 0..sweeps {
                    self.residual_into(u, b, scratch);
                    for (x, rv) in u.data.iter_mut().zip(&scratch.data) {
                        *x += scale * rv;
                    }
                }
            }
        }
    }

    /// Dense LU of the operator on a small grid.
    fn factorize(&self, n: usize) -> DenseLu {
        let size = n * n * n;
        let mut a = vec![0.0; size * size];
        let zero = Padded::zeros(n);
        let mut e = Padded::zeros(n);
        let mut col = 0;
        let mut interior = Vec::with_capacity(size);
        zero.for_interior(|c| interior.push(c));
        for &c in &interior {
            e.data[c] = 1.0;
            // Op e = −(0 − Op e)
            let r = self.residual(&e, &zero);
            for (row, &ci) in interior.iter().enumerate() {
                a[row * size + col] = -r.data[ci];
            }
            e.data[c] = 0.0;
            col += 1;
        }
        DenseLu::new(a, size)
    }
}

/// LU factorisation with partial pivoting, row-major.
struct DenseLu {
    a: Vec<f64>,
    piv: Vec<usize>,
    size: usize,
}

impl DenseLu {
    fn new(mut a: Vec<f64>, size: usize) -> Self {
        let mut piv: Vec<usize> = (0..size).collect();
        for k in 0..size {
            let p = (k..size)
                .max_by(|&x, &y| a[x * size + k].abs().total_cmp(&a[y * size + k].abs()))
                .unwrap_or(k);
            if p != k {
                for j in 0..size {
                    a.swap(k * size + j, p * size + j);
                }
                piv.swap(k, p);
            }
            let pivot = a[k * size + k];
            for i in k + 1..size {
                let f = a[i * size + k] / pivot;
                a[i * size + k] = f;
                for j in k + 1..size {
                    a[i * size + j] -= f * a[k * size + j];
                }
            }
        }
        DenseLu { a, piv, size }
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.size;
        let mut x: Vec<f64> = self.piv.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                x[i] -= self.a[i * n + j] * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                x[i] -= self.a[i * n + j] * x[j];
            }
            x[i] /= self.a[i * n + i];
        }
        x
    }
}

struct Hierarchy {
    op: Operator,
    sizes: Vec<usize>,
    coarse_lu: Option<DenseLu>,
    cfg: MgConfig,
}

impl Hierarchy {
    fn new(op: Operator, n: usize, cfg: &MgConfig) -> Self {
        let mut sizes = vec![n];
        while *sizes.last().unwrap() > cfg.coarsest_n {
            sizes.push((sizes.last().unwrap() - 1) / 2);
        }
        let coarsest = *sizes.last().unwrap();
        let coarse_lu = (coarsest > 1).then(|| op.factorize(coarsest));
        Hierarchy {
            op,
            sizes,
            coarse_lu,
            cfg: *cfg,
        }
    }

    fn direct(&self, u: &mut Padded, b: &Padded) {
        match &self.coarse_lu {
            None => {
                let c = u.at(1, 1, 1);
                u.data[c] = b.data[c] / self.op.diagonal(1);
            }
            Some(lu) => {
                let mut rhs = Vec::new();
                let mut idx = Vec::new();
                b.for_interior(|c| {
                    rhs.push(b.data[c]);
                    idx.push(c);
                });
                let x = lu.solve(&rhs);
                for (c, v) in idx.into_iter().zip(x) {
                    u.data[c] = v;
                }
            }
        }
    }

    fn vcycle(&self, level: usize, u: &mut Padded, b: &Padded) {
        if level + 1 == self.sizes.len() {
            self.direct(u, b);
            return;
        }
        let mut scratch = Padded::zeros(u.n);
        self.op.smooth(u, b, self.cfg.pre_smooth, &mut scratch);
        self.op.residual_into(u, b, &mut scratch);
        let rc = full_weighting_padded(&scratch);
        let mut ec = Padded::zeros(rc.n);
        self.vcycle(level + 1, &mut ec, &rc);
        let e = interpolate_padded(&ec);
        for (x, d) in u.data.iter_mut().zip(&e.data) {
            *x += d;
        }
        self.op.smooth(u, b, self.cfg.post_smooth, &mut scratch);
    }

    fn solve(&self, b: &Padded, guess: Option<&Field>) -> MgSolution {
        let n = b.n;
        let b_norm = b.norm_inf();
        let mut u = guess.map_or_else(|| Padded::zeros(n), Padded::from_field);
        let rel = |u: &Padded| self.op.residual(u, b).norm_inf() / b_norm;
        let mut residual = rel(&u);
        let mut history = vec![residual];
        let mut growth = 0;
        let mut cycles = 0;
        // A supplied guess always gets at least one cycle, so that repeated
        // warm-started solves keep improving instead of returning the guess.
        let min_cycles = usize::from(guess.is_some());
        while (residual > self.cfg.tol || cycles < min_cycles) && cycles < self.cfg.max_cycles {
            self.vcycle(0, &mut u, b);
            cycles += 1;
            let next = rel(&u);
            history.push(next);
            if !(next < residual) {
                growth += 1;
            } else {
                growth = 0;
            }
            residual = next;
            if growth >= GROWTH_LIMIT || !residual.is_finite() {
                break;
            }
        }
        MgSolution {
            u: u.to_field(),
            cycles,
            residual,
            converged: residual <= self.cfg.tol,
            history,
        }
    }
}

fn check_inputs(rhs: &Field, lambda: f64, cfg: &MgConfig) -> Result<()> {
    cfg.validate()?;
    if !is_valid_size(rhs.n()) {
        return Err(Error::invalid(format!("grid size must be 2^k - 1, got {}", rhs.n())));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!("lambda must be finite and non-negative, got {lambda}")));
    }
    if !rhs.is_finite() {
        return Err(Error::invalid("right-hand side is not finite"));
    }
    Ok(())
}

fn finish(sol: MgSolution) -> Result<MgSolution> {
    let diverging = sol.history.len() > GROWTH_LIMIT
        && sol.history[sol.history.len() - GROWTH_LIMIT - 1..]
            .windows(2)
            .all(|w| !(w[1] < w[0]));
    if diverging || !sol.residual.is_finite() {
        return Err(Error::SolverDiverged {
            cycles: sol.cycles,
            residual: sol.residual,
        });
    }
    Ok(sol)
}

fn zero_solution(n: usize) -> MgSolution {
    MgSolution {
        u: Field::zeros(n),
        cycles: 0,
        residual: 0.0,
        history: vec![0.0],
        converged: true,
    }
}

/// Solves the implicit Euler system for `λ = ν Δt_m`, starting from zero.
pub fn solve_implicit(lambda: f64, rhs: &Field, kind: StencilKind, cfg: &MgConfig) -> Result<MgSolution> {
    solve_implicit_from(lambda, rhs, kind, cfg, None)
}

/// As [`solve_implicit`], starting from `guess`.
pub fn solve_implicit_from(
    lambda: f64,
    rhs: &Field,
    kind: StencilKind,
    cfg: &MgConfig,
    guess: Option<&Field>,
) -> Result<MgSolution> {
    check_inputs(rhs, lambda, cfg)?;
    let n = rhs.n();
    if rhs.is_zero() {
        return Ok(zero_solution(n));
    }
    if lambda == 0.0 {
        // Both kinds reduce to `M u = M rhs`.
        return Ok(MgSolution {
            u: rhs.clone(),
            ..zero_solution(n)
        });
    }
    let p = Padded::from_field(rhs);
    let b = match kind {
        StencilKind::SecondOrder7pt => p,
        StencilKind::FourthOrderCompact => weighting_padded(&p),
    };
    let op = Operator {
        kind,
        shift: 1.0,
        lambda,
    };
    finish(Hierarchy::new(op, n, cfg).solve(&b, guess))
}

/// Solves `B x = r` for the weighting operator of the compact pair.
///
/// With `σ = (−1)^(i+j+k)`, `B (σ w) = σ (h²/12) (−Δ₂ w)`, so `x = σ w`
/// where `w` solves the 7-point Poisson problem `−Δ₂ w = (12/h²) σ r`.
/// The reported residual equals the relative residual of `B x = r`.
pub fn invert_weighting(r: &Field, cfg: &MgConfig) -> Result<MgSolution> {
    check_inputs(r, 0.0, cfg)?;
    let n = r.n();
    if r.is_zero() {
        return Ok(zero_solution(n));
    }
    let scale = 12.0 * square(n as f64 + 1.0);
    let mut b = Padded::from_field(r);
    flip_checkerboard(&mut b, scale);
    let op = Operator {
        kind: StencilKind::SecondOrder7pt,
        shift: 0.0,
        lambda: 1.0,
    };
    let mut sol = finish(Hierarchy::new(op, n, cfg).solve(&b, None))?;
    let mut w = Padded::from_field(&sol.u);
    flip_checkerboard(&mut w, 1.0);
    sol.u = w.to_field();
    Ok(sol)
}

fn flip_checkerboard(p: &mut Padded, scale: f64) {
    let n = p.n;
    for i in 1..=n {
        for j in 1..=n {
            for k in 1..=n {
                let c = p.at(i, j, k);
                let sign = if (i + j + k) % 2 == 0 { 1.0 } else { -1.0 };
                p.data[c] *= sign * scale;
            }
        }
    }
}

/// `(B − λA) u` for the compact kind or `(I − λL₂) u` for the 7-point kind.
pub fn apply_system(lambda: f64, u: &Field, kind: StencilKind) -> Field {
    let op = Operator {
        kind,
        shift: 1.0,
        lambda,
    };
    let p = Padded::from_field(u);
    let mut r = op.residual(&p, &Padded::zeros(u.n()));
    for v in &mut r.data {
        *v = -*v;
    }
    r.to_field()
}

/// The effective right-hand side: `b` or `B b`.
pub fn system_rhs(rhs: &Field, kind: StencilKind) -> Field {
    match kind {
        StencilKind::SecondOrder7pt => rhs.clone(),
        StencilKind::FourthOrderCompact => weighting_padded(&Padded::from_field(rhs)).to_field(),
    }
}
