//! Grid functions on the unit cube with homogeneous Dirichlet boundary,
//! Laplacian stencils and transfer operators between nested grids.
//!
//! A [`Field`] of size `n` holds the `n³` interior values of a grid with
//! spacing `h = 1 / (n + 1)`. Boundary values are zero and never stored.
//! Grids are nested when `n_fine = 2 * n_coarse + 1`; coarse point
//! `(I, J, K)` then coincides with fine point `(2I + 1, 2J + 1, 2K + 1)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Discretisation of the Laplacian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StencilKind {
    /// Classical 7-point stencil.
    SecondOrder7pt,
    /// Mehrstellen pair `A u = B Δu`: `A` is the 19-point stencil
    /// `(−24, 2 on faces, 1 on edges) / 6h²`, `B` has centre `1/2` and
    /// face weights `1/12`. The discrete Laplacian is `B⁻¹ A`.
    FourthOrderCompact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    n: usize,
    values: Vec<f64>,
}

/// True when `n = 2^k − 1` for some `k ≥ 1`.
pub fn is_valid_size(n: usize) -> bool {
    n >= 1 && (n + 1).is_power_of_two()
}

impl Field {
    pub fn zeros(n: usize) -> Self {
        Field {
            n,
            values: vec![0.0; n * n * n],
        }
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Field {
            n,
            values: vec![value; n * n * n],
        }
    }

    pub fn from_values(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n * n {
            return Err(Error::invalid(format!(
                "expected {} values for n = {n}, got {}",
                n * n * n,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("field values must be finite"));
        }
        Ok(Field { n, values })
    }

    /// Samples `f(x1, x2, x3)` at the interior grid points.
    pub fn from_fn(n: usize, mut f: impl FnMut(f64, f64, f64) -> f64) -> Self {
        let h = 1.0 / (n as f64 + 1.0);
        let mut values = Vec::with_capacity(n * n * n);
        for i in 0..n {
            let x = (i + 1) as f64 * h;
            for j in 0..n {
                let y = (j + 1) as f64 * h;
                for k in 0..n {
                    let z = (k + 1) as f64 * h;
                    values.push(f(x, y, z));
                }
            }
        }
        Field { n, values }
    }

    /// Interior points per dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / (self.n as f64 + 1.0)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)]
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &Field) {
        debug_assert_eq!(self.n, x.n);
        for (s, v) in self.values.iter_mut().zip(&x.values) {
            *s += a * v;
        }
    }

    pub fn scale(&mut self, a: f64) {
        for v in &mut self.values {
            *v *= a;
        }
    }

    /// `self - other`
    pub fn sub(&self, other: &Field) -> Field {
        debug_assert_eq!(self.n, other.n);
        Field {
            n: self.n,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    /// Maximum absolute difference to `other`.
    pub fn max_abs_diff(&self, other: &Field) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Storage with one layer of zero boundary values around the interior,
/// `(n + 2)³` entries. Used by every stencil loop.
#[derive(Debug, Clone)]
pub(crate) struct Padded {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Padded {
    pub fn zeros(n: usize) -> Self {
        let m = n + 2;
        Padded {
            n,
            data: vec![0.0; m * m * m],
        }
    }

    pub fn from_field(f: &Field) -> Self {
        let mut p = Padded::zeros(f.n);
        let n = f.n;
        for i in 0..n {
            for j in 0..n {
                let src = (i * n + j) * n;
                let dst = p.at(i + 1, j + 1, 1);
                p.data[dst..dst + n].copy_from_slice(&f.values[src..src + n]);
            }
        }
        p
    }

    pub fn to_field(&self) -> Field {
        let n = self.n;
        let mut values = Vec::with_capacity(n * n * n);
        for i in 1..=n {
            for j in 1..=n {
                let src = self.at(i, j, 1);
                values.extend_from_slice(&self.data[src..src + n]);
            }
        }
        Field { n, values }
    }

    #[inline]
    pub fn stride_y(&self) -> usize {
        self.n + 2
    }

    #[inline]
    pub fn stride_x(&self) -> usize {
        (self.n + 2) * (self.n + 2)
    }

    /// Padded index; interior points are `1..=n` in each direction.
    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> usize {
        (i * (self.n + 2) + j) * (self.n + 2) + k
    }

    pub fn norm_inf(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Calls `f(centre_index)` for every interior point.
    #[inline]
    pub fn for_interior(&self, mut f: impl FnMut(usize)) {
        let n = self.n;
        for i in 1..=n {
            for j in 1..=n {
                let base = self.at(i, j, 0);
                for k in 1..=n {
                    f(base + k);
                }
            }
        }
    }
}

/// Coefficients of a stencil combination `centre·u + face·Σfaces + edge·Σedges`
/// over the 7-point (faces) and 19-point (faces plus edges) neighbourhoods.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Stencil {
    pub centre: f64,
    pub face: f64,
    pub edge: f64,
}

/// `out = [rhs +] S u` at every interior point; boundary entries of `out`
/// are left untouched.
pub(crate) fn apply_stencil_into(u: &Padded, rhs: Option<&Padded>, st: Stencil, out: &mut Padded) {
    let n = u.n;
    let (sx, sy) = (u.stride_x(), u.stride_y());
    let d = &u.data;
    let len = n + 2;
    let row = |o: usize| &d[o..o + len];
    for i in 1..=n {
        for j in 1..=n {
            let base = u.at(i, j, 0);
            let (c, xm, xp, ym, yp) = (row(base), row(base - sx), row(base + sx), row(base - sy), row(base + sy));
            let o = &mut out.data[base..base + len];
            if st.edge == 0.0 {
                for k in 1..=n {
                    let faces = xm[k] + xp[k] + ym[k] + yp[k] + c[k - 1] + c[k + 1];
                    o[k] = st.centre * c[k] + st.face * faces;
                }
            } else {
                let (mm, mp, pm, pp) = (
                    row(base - sx - sy),
                    row(base - sx + sy),
                    row(base + sx - sy),
                    row(base + sx + sy),
                );
                for k in 1..=n {
                    let faces = xm[k] + xp[k] + ym[k] + yp[k] + c[k - 1] + c[k + 1];
                    let edges = mm[k]
                        + mp[k]
                        + pm[k]
                        + pp[k]
                        + xm[k - 1]
                        + xm[k + 1]
                        + xp[k - 1]
                        + xp[k + 1]
                        + ym[k - 1]
                        + ym[k + 1]
                        + yp[k - 1]
                        + yp[k + 1];
                    o[k] = st.centre * c[k] + st.face * faces + st.edge * edges;
                }
            }
            if let Some(b) = rhs {
                let b = &b.data[base..base + len];
                for k in 1..=n {
                    o[k] += b[k];
                }
            }
        }
    }
}

pub(crate) fn apply_stencil(u: &Padded, st: Stencil) -> Padded {
    let mut out = Padded::zeros(u.n);
    apply_stencil_into(u, None, st, &mut out);
    out
}

pub(crate) fn second_order_padded(u: &Padded) -> Padded {
    let inv_h2 = square(u.n as f64 + 1.0);
    apply_stencil(u, Stencil { centre: -6.0 * inv_h2, face: inv_h2, edge: 0.0 })
}

pub(crate) fn compact_a_padded(u: &Padded) -> Padded {
    let scale = square(u.n as f64 + 1.0) / 6.0;
    apply_stencil(u, Stencil { centre: -24.0 * scale, face: 2.0 * scale, edge: scale })
}

pub(crate) fn weighting_padded(u: &Padded) -> Padded {
    apply_stencil(u, Stencil { centre: 0.5, face: 1.0 / 12.0, edge: 0.0 })
}

#[inline]
pub(crate) fn square(x: f64) -> f64 {
    x * x
}

/// The 19-point operator `A` of the compact pair.
pub fn apply_compact_a(u: &Field) -> Field {
    compact_a_padded(&Padded::from_field(u)).to_field()
}

/// The weighting operator `B` of the compact pair.
pub fn apply_weighting(u: &Field) -> Field {
    weighting_padded(&Padded::from_field(u)).to_field()
}

/// Solves `B w = r` by conjugate gradients (`B` is symmetric positive definite).
pub fn solve_weighting_cg(r: &Field, rel_tol: f64) -> Result<Field> {
    let n = r.n;
    let b = Padded::from_field(r);
    let b_norm = b.norm_inf();
    if b_norm == 0.0 {
        return Ok(Field::zeros(n));
    }
    let dot = |a: &Padded, c: &Padded| -> f64 {
        let mut s = 0.0;
        a.for_interior(|i| s += a.data[i] * c.data[i]);
        s
    };
    let mut x = Padded::zeros(n);
    let mut res = b.clone();
    let mut p = b.clone();
    let mut rr = dot(&res, &res);
    let max_iter = 20 * (n + 1) * (n + 1) + 100;
    for it in 0..max_iter {
        if res.norm_inf() <= rel_tol * b_norm {
            return Ok(x.to_field());
        }
        let bp = weighting_padded(&p);
        let alpha = rr / dot(&p, &bp);
        for i in 0..x.data.len() {
            x.data[i] += alpha * p.data[i];
            res.data[i] -= alpha * bp.data[i];
        }
        let rr_new = dot(&res, &res);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..p.data.len() {
            p.data[i] = res.data[i] + beta * p.data[i];
        }
        if !rr.is_finite() {
            return Err(Error::SolverDiverged {
                cycles: it + 1,
                residual: f64::NAN,
            });
        }
    }
    Err(Error::SolverDiverged {
        cycles: max_iter,
        residual: res.norm_inf() / b_norm,
    })
}

/// `out[a, o, :] = Σ_i mat[o][i] · src[a, i, :]` on a row-major
/// `(outer, m, inner)` array.
fn dense_axis(src: &[f64], (outer, m, inner): (usize, usize, usize), mat: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    if inner == 1 {
        for (dst, row) in out.chunks_exact_mut(m).zip(src.chunks_exact(m)) {
            for (d, col) in dst.iter_mut().zip(mat.chunks_exact(m)) {
                *d = col.iter().zip(row).map(|(w, v)| w * v).sum();
            }
        }
        return out;
    }
    for a in 0..outer {
        let block = &src[a * m * inner..][..m * inner];
        for o in 0..m {
            let dst = &mut out[(a * m + o) * inner..][..inner];
            for (i, &w) in mat[o * m..][..m].iter().enumerate() {
                for (d, v) in dst.iter_mut().zip(&block[i * inner..][..inner]) {
                    *d += w * v;
                }
            }
        }
    }
    out
}

/// Solves `B w = r` exactly in the discrete sine basis, which
/// diagonalises `B` with eigenvalues `1/2 + (cos θ₁ + cos θ₂ + cos θ₃)/6`.
pub fn invert_weighting_exact(r: &Field) -> Field {
    let n = r.n;
    let theta = core::f64::consts::PI / (n as f64 + 1.0);
    let mut sine = vec![0.0; n * n];
    for a in 0..n {
        for i in 0..n {
            sine[a * n + i] = libm::sin(((a + 1) * (i + 1)) as f64 * theta);
        }
    }
    let cosines: Vec<f64> = (0..n).map(|a| libm::cos((a + 1) as f64 * theta) / 6.0).collect();
    let transform = |v: &[f64]| {
        let t = dense_axis(v, (n * n, n, 1), &sine);
        let t = dense_axis(&t, (n, n, n), &sine);
        dense_axis(&t, (1, n, n * n), &sine)
    };
    let mut coeffs = transform(&r.values);
    // The sine matrix squares to (n + 1)/2 · I.
    let s = 2.0 / (n as f64 + 1.0);
    let scale = s * s * s;
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let mu = 0.5 + cosines[a] + cosines[b] + cosines[c];
                coeffs[(a * n + b) * n + c] *= scale / mu;
            }
        }
    }
    Field {
        n,
        values: transform(&coeffs),
    }
}

/// Discrete Laplacian of `u` with zero Dirichlet closure.
///
/// For the compact kind this is `w = B⁻¹ A u`, with `B` inverted by
/// [`invert_weighting_exact`].
pub fn apply_laplacian(u: &Field, kind: StencilKind) -> Result<Field> {
    let p = Padded::from_field(u);
    match kind {
        StencilKind::SecondOrder7pt => Ok(second_order_padded(&p).to_field()),
        StencilKind::FourthOrderCompact => {
            Ok(invert_weighting_exact(&compact_a_padded(&p).to_field()))
        }
    }
}

/// Injection onto the next coarser grid: coarse `(I, J, K)` takes the fine
/// value at `(2I + 1, 2J + 1, 2K + 1)`.
pub fn restrict(fine: &Field, coarse_n: usize) -> Result<Field> {
    if fine.n != 2 * coarse_n + 1 {
        return Err(Error::invalid(format!(
            "cannot restrict n = {} onto n = {coarse_n}",
            fine.n
        )));
    }
    let n = coarse_n;
    let mut values = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                values.push(fine.get(2 * i + 1, 2 * j + 1, 2 * k + 1));
            }
        }
    }
    Ok(Field { n, values })
}

/// Trilinear interpolation onto the next finer grid with zero boundary values.
pub fn interpolate(coarse: &Field, fine_n: usize) -> Result<Field> {
    if fine_n != 2 * coarse.n + 1 {
        return Err(Error::invalid(format!(
            "cannot interpolate n = {} onto n = {fine_n}",
            coarse.n
        )));
    }
    let c = Padded::from_field(coarse);
    Ok(interpolate_padded(&c).to_field())
}

/// One separable transfer pass along the middle axis of a row-major
/// `(outer, m_in, inner)` array. `taps(o)` lists the input indices and
/// weights feeding output index `o`.
fn transfer_axis(
    src: &[f64],
    (outer, m_in, inner): (usize, usize, usize),
    m_out: usize,
    taps: impl Fn(usize) -> ([usize; 3], [f64; 3], usize),
) -> Vec<f64> {
    let mut out = vec![0.0; outer * m_out * inner];
    for a in 0..outer {
        for o in 0..m_out {
            let (idx, w, count) = taps(o);
            let dst = &mut out[(a * m_out + o) * inner..][..inner];
            for t in 0..count {
                let s = &src[(a * m_in + idx[t]) * inner..][..inner];
                for (d, v) in dst.iter_mut().zip(s) {
                    *d += w[t] * v;
                }
            }
        }
    }
    out
}

/// Applies a 1D transfer along the three axes of a padded cube of side
/// `m_in`, producing side `m_out`.
fn separable(src: &[f64], m_in: usize, m_out: usize, taps: impl Fn(usize) -> ([usize; 3], [f64; 3], usize) + Copy) -> Vec<f64> {
    let t = transfer_axis(src, (m_in * m_in, m_in, 1), m_out, taps);
    let t = transfer_axis(&t, (m_in, m_in, m_out), m_out, taps);
    transfer_axis(&t, (1, m_in, m_out * m_out), m_out, taps)
}

/// Linear refinement: even padded fine indices copy the coarse value, odd
/// ones average their two coarse neighbours.
fn refine_taps(f: usize) -> ([usize; 3], [f64; 3], usize) {
    let h = f / 2;
    if f % 2 == 0 {
        ([h, 0, 0], [1.0, 0.0, 0.0], 1)
    } else {
        ([h, h + 1, 0], [0.5, 0.5, 0.0], 2)
    }
}

pub(crate) fn interpolate_padded(c: &Padded) -> Padded {
    let nf = 2 * c.n + 1;
    Padded {
        n: nf,
        data: separable(&c.data, c.n + 2, nf + 2, refine_taps),
    }
}

/// Full-weighting restriction (27-point, weights `(2 − |dx|)(2 − |dy|)(2 − |dz|) / 64`),
/// applied as three `(1, 2, 1) / 4` passes.
pub(crate) fn full_weighting_padded(f: &Padded) -> Padded {
    let nc = (f.n - 1) / 2;
    // Coarse boundary entries receive no taps and stay zero.
    let taps = move |c: usize| {
        if c == 0 || c > nc {
            ([0; 3], [0.0; 3], 0)
        } else {
            ([2 * c - 1, 2 * c, 2 * c + 1], [0.25, 0.5, 0.25], 3)
        }
    };
    Padded {
        n: nc,
        data: separable(&f.data, f.n + 2, nc + 2, taps),
    }
}

/// Spatial interpolation used for coarse-to-fine corrections.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub enum Interpolation {
    #[default]
    Trilinear,
    /// Four-point cubic rule per axis.
    Tricubic,
}

pub fn interpolate_with(coarse: &Field, fine_n: usize, kind: Interpolation) -> Result<Field> {
    match kind {
        Interpolation::Trilinear => interpolate(coarse, fine_n),
        Interpolation::Tricubic => interpolate_cubic(coarse, fine_n),
    }
}

/// Along one axis, fills fine index `2i + 1` from coarse index `i` and the
/// midpoints with the four-point cubic rule; zero Dirichlet data are
/// extended oddly past the boundary.
fn cubic_axis(c: &[f64], f: &mut [f64]) {
    let nc = c.len() as isize;
    let at = |i: isize| -> f64 {
        if i < 0 {
            if i == -1 { 0.0 } else { -c[(-i - 2) as usize] }
        } else if i >= nc {
            if i == nc { 0.0 } else { -c[(2 * nc - i) as usize] }
        } else {
            c[i as usize]
        }
    };
    // Coarse point i sits at fine index 2i+1; boundary at coarse -1 and nc.
    for (fi, v) in f.iter_mut().enumerate() {
        *v = if fi % 2 == 1 {
            c[fi / 2]
        } else {
            let left = fi as isize / 2 - 1;
            (9.0 * (at(left) + at(left + 1)) - at(left - 1) - at(left + 2)) / 16.0
        };
    }
}

/// Tricubic interpolation onto the next finer grid with zero boundary values.
pub fn interpolate_cubic(coarse: &Field, fine_n: usize) -> Result<Field> {
    let nc = coarse.n;
    if fine_n != 2 * nc + 1 {
        return Err(Error::invalid(format!("cannot interpolate n = {nc} onto n = {fine_n}")));
    }
    let nf = fine_n;
    // Axes are refined one at a time; layout is x-major, then y, then z.
    let idx = |n: [usize; 3], i: usize, j: usize, k: usize| (i * n[1] + j) * n[2] + k;
    let mut cur = coarse.values.clone();
    let mut dims = [nc, nc, nc];
    for axis in (0..3).rev() {
        let mut nd = dims;
        nd[axis] = nf;
        let mut out = vec![0.0; nd[0] * nd[1] * nd[2]];
        let mut line_c = vec![0.0; nc];
        let mut line_f = vec![0.0; nf];
        let others: [usize; 2] = match axis {
            0 => [1, 2],
            1 => [0, 2],
            _ => [0, 1],
        };
        for a in 0..dims[others[0]] {
            for b in 0..dims[others[1]] {
                let pos = |t: usize| {
                    let mut p = [0; 3];
                    p[axis] = t;
                    p[others[0]] = a;
                    p[others[1]] = b;
                    p
                };
                for (t, v) in line_c.iter_mut().enumerate() {
                    let p = pos(t);
                    *v = cur[idx(dims, p[0], p[1], p[2])];
                }
                cubic_axis(&line_c, &mut line_f);
                for (t, v) in line_f.iter().enumerate() {
                    let p = pos(t);
                    out[idx(nd, p[0], p[1], p[2])] = *v;
                }
            }
        }
        cur = out;
        dims = nd;
    }
    Ok(Field { n: nf, values: cur })
}
