//! Gauss-Lobatto collocation: nodes, integration matrices and the
//! interpolation matrix between nested node sets.
//!
//! All matrices are dimensionless. For an interval of length `Δt` the
//! integral of the interpolant of samples `f_i` from the left endpoint to
//! node `m` is `Δt * Σ_i q[m][i] * f_i`, and the integral between nodes `m`
//! and `m + 1` is `Δt * Σ_i s[m][i] * f_i`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Largest node count accepted by [`lobatto_nodes`]. Beyond this the
/// monomial expansion used for the integration weights loses accuracy.
pub const MAX_NODES: usize = 16;

/// Relative tolerance used when matching a coarse node against a fine node.
const NESTING_TOL: f64 = 1e-12;

/// Nodes and integration weights of one collocation interval.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationSet {
    nodes: Vec<f64>,
    q: Vec<Vec<f64>>,
    s: Vec<Vec<f64>>,
    dtau: Vec<f64>,
}

impl CollocationSet {
    /// Gauss-Lobatto collocation on the unit interval `[0, 1]`.
    pub fn lobatto(count: usize) -> Result<Self> {
        build_collocation(&lobatto_nodes(count, 0.0, 1.0)?)
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Number of substeps, one less than the number of nodes.
    pub fn num_intervals(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Length of the collocation interval.
    pub fn length(&self) -> f64 {
        self.nodes[self.nodes.len() - 1] - self.nodes[0]
    }

    /// Node positions as fractions of the interval, first 0 and last 1.
    pub fn fractions(&self) -> Vec<f64> {
        let t0 = self.nodes[0];
        let len = self.length();
        let last = self.nodes.len() - 1;
        self.nodes
            .iter()
            .enumerate()
            .map(|(m, t)| match m {
                0 => 0.0,
                m if m == last => 1.0,
                _ => (t - t0) / len,
            })
            .collect()
    }

    /// `q[m][i]`: weight of sample `i` in the integral from the first node to node `m`.
    pub fn q(&self) -> &[Vec<f64>] {
        &self.q
    }

    /// `s[m][i] = q[m + 1][i] - q[m][i]`.
    pub fn s(&self) -> &[Vec<f64>] {
        &self.s
    }

    /// Substep lengths `t_{m+1} - t_m`.
    pub fn dtau(&self) -> &[f64] {
        &self.dtau
    }
}

/// Legendre polynomial `P_n` and its first two derivatives at an interior
/// point `x ∈ (-1, 1)`.
fn legendre(n: usize, x: f64) -> (f64, f64, f64) {
    if n == 0 {
        return (1.0, 0.0, 0.0);
    }
    let (mut p_prev, mut p) = (1.0, x);
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0) * x * p - kf * p_prev) / (kf + 1.0);
        p_prev = p;
        p = next;
    }
    let nf = n as f64;
    let one_minus_x2 = 1.0 - x * x;
    let dp = nf * (p_prev - x * p) / one_minus_x2;
    let d2p = (2.0 * x * dp - nf * (nf + 1.0) * p) / one_minus_x2;
    (p, dp, d2p)
}

/// Newton iteration on `g = P'_n` inside a sign-change bracket, falling
/// back to bisection whenever the Newton step leaves the bracket.
fn refine_root(n: usize, mut a: f64, mut b: f64) -> f64 {
    let mut fa = legendre(n, a).1;
    let mut x = 0.5 * (a + b);
    for _ in 0..200 {
        let (_, g, dg) = legendre(n, x);
        if g == 0.0 {
            return x;
        }
        if (g > 0.0) == (fa > 0.0) {
            a = x;
            fa = g;
        } else {
            b = x;
        }
        let newton = x - g / dg;
        let next = if newton > a && newton < b && dg != 0.0 {
            newton
        } else {
            0.5 * (a + b)
        };
        if (next - x).abs() <= 1e-15 || b - a <= 1e-15 {
            return next;
        }
        x = next;
    }
    x
}

/// Gauss-Lobatto points of the given count, mapped affinely onto `[t0, t1]`.
pub fn lobatto_nodes(count: usize, t0: f64, t1: f64) -> Result<Vec<f64>> {
    if count < 2 {
        return Err(Error::invalid(format!("need at least 2 Lobatto nodes, got {count}")));
    }
    if count > MAX_NODES {
        return Err(Error::invalid(format!(
            "at most {MAX_NODES} Lobatto nodes are supported, got {count}"
        )));
    }
    if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(Error::invalid(format!("empty interval [{t0}, {t1}]")));
    }

    // Interior points are the roots of P'_{count-1}.
    let degree = count - 1;
    let mut reference = Vec::with_capacity(count);
    reference.push(-1.0);
    let samples = 256 * count;
    let step = 2.0 / samples as f64;
    let mut left = -1.0 + step;
    let mut g_left = legendre(degree, left).1;
    for i in 2..samples {
        let right = -1.0 + i as f64 * step;
        let g_right = legendre(degree, right).1;
        if g_left == 0.0 {
            reference.push(left);
        } else if (g_left > 0.0) != (g_right > 0.0) && g_right != 0.0 {
            reference.push(refine_root(degree, left, right));
        }
        left = right;
        g_left = g_right;
    }
    reference.push(1.0);
    if reference.len() != count {
        return Err(Error::invalid(format!(
            "found {} Lobatto nodes, expected {count}",
            reference.len()
        )));
    }

    // Enforce exact symmetry about the midpoint.
    for i in 0..count / 2 {
        let j = count - 1 - i;
        let x = 0.5 * (reference[j] - reference[i]);
        reference[i] = -x;
        reference[j] = x;
    }
    if count % 2 == 1 {
        reference[count / 2] = 0.0;
    }

    let half = 0.5 * (t1 - t0);
    let mid = 0.5 * (t0 + t1);
    let mut nodes: Vec<f64> = reference.iter().map(|x| mid + half * x).collect();
    nodes[0] = t0;
    nodes[count - 1] = t1;
    Ok(nodes)
}

/// Monomial coefficients (lowest degree first) of the Lagrange basis
/// polynomial `i` over `points`.
fn lagrange_coefficients(points: &[f64], i: usize) -> Vec<f64> {
    let mut coeffs = vec![1.0];
    let mut denom = 1.0;
    for (j, &xj) in points.iter().enumerate() {
        if j == i {
            continue;
        }
        let mut next = vec![0.0; coeffs.len() + 1];
        for (p, &c) in coeffs.iter().enumerate() {
            next[p + 1] += c;
            next[p] -= xj * c;
        }
        coeffs = next;
        denom *= points[i] - xj;
    }
    coeffs.iter().map(|c| c / denom).collect()
}

fn lagrange_eval(points: &[f64], i: usize, x: f64) -> f64 {
    points
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &xj)| (x - xj) / (points[i] - xj))
        .product()
}

fn check_increasing(nodes: &[f64]) -> Result<()> {
    if nodes.len() < 2 {
        return Err(Error::invalid("a collocation set needs at least 2 nodes"));
    }
    if nodes.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid("collocation nodes must be finite"));
    }
    if nodes.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("collocation nodes must be strictly increasing"));
    }
    Ok(())
}

/// Builds the integration matrices for the given nodes by exact
/// integration of the Lagrange basis polynomials.
pub fn build_collocation(nodes: &[f64]) -> Result<CollocationSet> {
    check_increasing(nodes)?;
    let count = nodes.len();
    let t0 = nodes[0];
    let len = nodes[count - 1] - t0;
    // Work on [-1, 1]; dx = 2 ds.
    let centered: Vec<f64> = nodes.iter().map(|t| 2.0 * (t - t0) / len - 1.0).collect();

    let antiderivative = |coeffs: &[f64], x: f64| -> f64 {
        coeffs
            .iter()
            .enumerate()
            .rev()
            .fold(0.0, |acc, (p, c)| acc * x + c / (p as f64 + 1.0))
            * x
    };

    let mut q = vec![vec![0.0; count]; count];
    for i in 0..count {
        let coeffs = lagrange_coefficients(&centered, i);
        let base = antiderivative(&coeffs, -1.0);
        for m in 1..count {
            q[m][i] = 0.5 * (antiderivative(&coeffs, centered[m]) - base);
        }
    }

    let s = (0..count - 1)
        .map(|m| (0..count).map(|i| q[m + 1][i] - q[m][i]).collect())
        .collect();
    let dtau = nodes.windows(2).map(|w| w[1] - w[0]).collect();

    Ok(CollocationSet {
        nodes: nodes.to_vec(),
        q,
        s,
        dtau,
    })
}

/// Index of each coarse node within the fine node set.
pub fn injection_indices(coarse: &[f64], fine: &[f64]) -> Result<Vec<usize>> {
    check_increasing(coarse)?;
    check_increasing(fine)?;
    let scale = (fine[fine.len() - 1] - fine[0]).abs().max(1.0);
    coarse
        .iter()
        .map(|&tc| {
            fine.iter()
                .position(|&tf| (tf - tc).abs() <= NESTING_TOL * scale)
                .ok_or_else(|| {
                    Error::unsupported(format!("coarse node {tc} is not a fine node"))
                })
        })
        .collect()
}

/// Lagrange interpolation matrix from coarse-node values to fine-node
/// values; row `m` holds the coarse basis polynomials evaluated at fine
/// node `m`. Restriction in time is injection at the coincident nodes.
pub fn time_interp_matrix(coarse: &[f64], fine: &[f64]) -> Result<Vec<Vec<f64>>> {
    let inj = injection_indices(coarse, fine)?;
    Ok(fine
        .iter()
        .enumerate()
        .map(|(m, &tf)| {
            (0..coarse.len())
                .map(|j| {
                    if let Some(c) = inj.iter().position(|&f| f == m) {
                        if c == j { 1.0 } else { 0.0 }
                    } else {
                        lagrange_eval(coarse, j, tf)
                    }
                })
                .collect()
        })
        .collect())
}
