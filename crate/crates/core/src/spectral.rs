//! Spectra of block operators: eigenvalues, connected components of finite
//! point sets, spectral projections of positive operators, smallest singular
//! values of `T − λI`, and ε-pseudospectra on rectangular grids.
//!
//! In finite dimensions the approximate point spectrum coincides with the
//! spectrum and every eigenvalue is a boundary point. Statements about
//! infinite-dimensional operators are only approximated here through
//! pseudospectra of truncations, and reports label them that way.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{self, BlockOperator, Projection};
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumMethod {
    ExactEigen,
    /// Truncation surrogate: points come from a pseudospectral computation.
    Pseudospectrum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<C64>,
    /// Component index of each eigenvalue.
    pub component_of: Vec<usize>,
    pub n_components: usize,
    /// Single-linkage threshold used for the clustering.
    pub threshold: f64,
    /// Smallest distance between points of different components (0 when connected).
    pub gap: f64,
    pub method: SpectrumMethod,
}

impl SpectrumReport {
    pub fn is_disconnected(&self) -> bool {
        self.n_components >= 2
    }

    pub fn components(&self) -> Vec<Vec<C64>> {
        let mut out = vec![Vec::new(); self.n_components];
        for (z, &k) in self.eigenvalues.iter().zip(&self.component_of) {
            out[k].push(*z);
        }
        out
    }

    /// Component containing the point nearest to `z`.
    pub fn component_near(&self, z: C64) -> Option<usize> {
        self.eigenvalues
            .iter()
            .zip(&self.component_of)
            .min_by(|a, b| (a.0 - z).norm().total_cmp(&(b.0 - z).norm()))
            .map(|(_, &k)| k)
    }

    /// CSV with columns `re,im,component_id`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("re,im,component_id\n");
        for (z, k) in self.eigenvalues.iter().zip(&self.component_of) {
            let _ = writeln!(s, "{:?},{:?},{}", z.re, z.im, k);
        }
        s
    }
}

/// Eigenvalues of every block, concatenated in summand order.
pub fn eigenvalues(t: &BlockOperator) -> Result<Vec<C64>> {
    let mut out = Vec::with_capacity(t.total_dim());
    for b in t.blocks() {
        out.extend(linalg::eigenvalues(b)?);
    }
    Ok(out)
}

/// Eigenvalues grouped by summand.
pub fn block_eigenvalues(t: &BlockOperator) -> Result<Vec<Vec<C64>>> {
    t.blocks().map(linalg::eigenvalues).collect()
}

/// Single-linkage clustering: points closer than `threshold` share a component.
pub fn spectrum_components(points: &[C64], threshold: f64) -> SpectrumReport {
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (points[i] - points[j]).norm() < threshold {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut label = vec![usize::MAX; n];
    let mut component_of = vec![0; n];
    let mut next = 0;
    for i in 0..n {
        let r = find(&mut parent, i);
        if label[r] == usize::MAX {
            label[r] = next;
            next += 1;
        }
        component_of[i] = label[r];
    }
    let mut gap = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            if component_of[i] != component_of[j] {
                gap = gap.min((points[i] - points[j]).norm());
            }
        }
    }
    SpectrumReport {
        eigenvalues: points.to_vec(),
        component_of,
        n_components: next,
        threshold,
        gap: if gap.is_finite() { gap } else { 0.0 },
        method: SpectrumMethod::ExactEigen,
    }
}

pub fn spectrum_report(t: &BlockOperator, threshold: f64) -> Result<SpectrumReport> {
    Ok(spectrum_components(&eigenvalues(t)?, threshold))
}

/// Point of maximal real part, ties broken by maximal imaginary part.
pub fn rightmost_point(points: &[C64]) -> Option<C64> {
    points
        .iter()
        .copied()
        .max_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)))
}

pub fn rightmost_boundary_point(t: &BlockOperator) -> Result<C64> {
    let eigs = eigenvalues(t)?;
    Ok(rightmost_point(&eigs).expect("operators have at least one summand"))
}

/// Eigenpairs (ascending) of each block of a Hermitian block operator.
pub fn hermitian_block_spectra(a: &BlockOperator) -> Vec<(Vec<f64>, CMat)> {
    a.blocks().map(linalg::hermitian_eigen).collect()
}

/// Projection onto the eigenvectors of the positive operator `a` with
/// eigenvalue at most `threshold`.
pub fn spectral_projection_below(a: &BlockOperator, threshold: f64, tol: f64) -> Result<Projection> {
    let scale = a.op_norm().max(1.0);
    let herm_err = a
        .blocks()
        .map(|b| linalg::op_norm(&(b - b.adjoint())))
        .fold(0.0, f64::max);
    if herm_err > tol * scale {
        return Err(Error::NotPositive(f64::NAN));
    }
    let spectra = hermitian_block_spectra(a);
    let min_eig = spectra
        .iter()
        .filter_map(|(v, _)| v.first().copied())
        .fold(f64::INFINITY, f64::min);
    if min_eig < -tol * scale {
        return Err(Error::NotPositive(min_eig));
    }
    if min_eig > threshold {
        return Err(Error::EmptySpectralWindow(threshold));
    }
    let mut blocks = Vec::with_capacity(spectra.len());
    for (vals, vecs) in &spectra {
        let k = vals.iter().take_while(|&&v| v <= threshold).count();
        let sel = vecs.columns(0, k);
        blocks.push(&sel * sel.adjoint());
    }
    let base = a.map_blocks({
        let mut it = blocks.into_iter();
        move |_| it.next().expect("one block per summand")
    });
    algebra::validate_projection(&base, tol.max(1e-9))
}

/// Smallest singular value of `T − λI`.
pub fn min_singular_value(t: &BlockOperator, lambda: C64) -> f64 {
    t.blocks()
        .map(|b| linalg::min_singular_value(&(b - CMat::identity(b.nrows(), b.nrows()) * lambda)))
        .fold(f64::INFINITY, f64::min)
}

/// Lower bound `m ≤ cap` with `s_min(T − z) ≥ m` for every `z` on the
/// vertical line `Re z = x0`.
///
/// `y ↦ s_min(T − (x0 + iy))` is 1-Lipschitz, so on `[a, b]` it is at least
/// `(f(a) + f(b) − (b − a)) / 2`. Intervals with the smallest such bound are
/// bisected until the bound reaches `cap` or half the smallest sample.
pub fn certified_line_margin(t: &BlockOperator, x0: f64, cap: f64) -> Result<f64> {
    let mut margin = cap;
    for b in t.blocks() {
        let m = block_line_margin(b, x0, cap).ok_or(Error::NoMargin(x0))?;
        margin = margin.min(m);
    }
    Ok(margin)
}

#[derive(PartialEq)]
struct Interval {
    lb: f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
}

impl Eq for Interval {}

impl Ord for Interval {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on the lower bound
        other.lb.total_cmp(&self.lb)
    }
}

impl PartialOrd for Interval {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn block_line_margin(b: &CMat, x0: f64, cap: f64) -> Option<f64> {
    let n = b.nrows();
    // numerical abscissa: s_min(B − z) ≥ Re z − max Re W(B)
    let abscissa = linalg::hermitian_eigen(b).0.last().copied().unwrap_or(0.0);
    if x0 - abscissa >= cap {
        return Some(cap);
    }
    let eye = CMat::identity(n, n);
    let f = |y: f64| linalg::min_singular_value(&(b - &eye * c(x0, y)));
    let reach = linalg::op_norm(b) + x0.abs() + cap + 1.0;
    let pieces = 16;
    let h = 2.0 * reach / pieces as f64;
    let mut heap = BinaryHeap::new();
    let mut ub = f64::INFINITY;
    let mut prev = (-reach, f(-reach));
    ub = ub.min(prev.1);
    for i in 1..=pieces {
        let y = -reach + h * i as f64;
        let fy = f(y);
        ub = ub.min(fy);
        heap.push(Interval { lb: (prev.1 + fy - h) / 2.0, a: prev.0, fa: prev.1, b: y, fb: fy });
        prev = (y, fy);
    }
    for _ in 0..4000 {
        let iv = heap.pop()?;
        if iv.lb >= cap {
            return Some(cap);
        }
        if iv.lb > 0.0 && iv.lb >= 0.5 * ub {
            return Some(iv.lb);
        }
        let m = 0.5 * (iv.a + iv.b);
        let fm = f(m);
        ub = ub.min(fm);
        let half = 0.5 * (iv.b - iv.a);
        heap.push(Interval { lb: (iv.fa + fm - half) / 2.0, a: iv.a, fa: iv.fa, b: m, fb: fm });
        heap.push(Interval { lb: (fm + iv.fb - half) / 2.0, a: m, fa: fm, b: iv.b, fb: iv.fb });
    }
    let lb = heap.peek()?.lb;
    (lb > 0.0).then_some(lb.min(cap))
}

/// Rectangle `[re_min, re_max] × [im_min, im_max]` sampled at `nx × ny` points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Grid {
    pub fn square(half_width: f64, n: usize) -> Self {
        Self { re_min: -half_width, re_max: half_width, im_min: -half_width, im_max: half_width, nx: n, ny: n }
    }

    /// Grid point `(i, j)`; `i` runs along the real axis.
    pub fn point(&self, i: usize, j: usize) -> C64 {
        let t = |k: usize, n: usize, lo: f64, hi: f64| lo + (hi - lo) * k as f64 / (n - 1) as f64;
        c(t(i, self.nx, self.re_min, self.re_max), t(j, self.ny, self.im_min, self.im_max))
    }

    pub fn points(&self) -> Vec<C64> {
        (0..self.ny)
            .flat_map(|j| (0..self.nx).map(move |i| (i, j)))
            .map(|(i, j)| self.point(i, j))
            .collect()
    }

    pub fn area(&self) -> f64 {
        (self.re_max - self.re_min) * (self.im_max - self.im_min)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PseudospectrumGrid {
    pub grid: Grid,
    pub eps: f64,
    pub points: Vec<C64>,
    pub smin: Vec<f64>,
    pub marked: Vec<bool>,
}

impl PseudospectrumGrid {
    pub fn marked_fraction(&self) -> f64 {
        self.marked.iter().filter(|&&m| m).count() as f64 / self.marked.len() as f64
    }

    /// CSV with columns `re,im,marked`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("re,im,marked\n");
        for (z, m) in self.points.iter().zip(&self.marked) {
            let _ = writeln!(s, "{:?},{:?},{}", z.re, z.im, u8::from(*m));
        }
        s
    }
}

/// Mark grid points with `s_min(T − z) ≤ ε`. Evaluation is parallel but the
/// output order is fixed by the grid.
pub fn pseudospectrum_grid(t: &BlockOperator, eps: f64, grid: Grid) -> Result<PseudospectrumGrid> {
    if !(eps > 0.0) {
        return Err(Error::InvalidSpec(format!("eps must be positive, got {eps}")));
    }
    if grid.nx < 2 || grid.ny < 2 {
        return Err(Error::InvalidSpec("grid resolution must be at least 2".into()));
    }
    // unitary similarity preserves singular values of T − z; Hessenberg form is cheaper to copy around
    let reduced = t.map_blocks(|b| {
        if b.nrows() > 2 {
            nalgebra::linalg::Hessenberg::new(b.clone()).unpack_h()
        } else {
            b.clone()
        }
    });
    let points = grid.points();
    let smin: Vec<f64> = points.par_iter().map(|&z| min_singular_value(&reduced, z)).collect();
    let marked = smin.iter().map(|&s| s <= eps).collect();
    Ok(PseudospectrumGrid { grid, eps, points, smin, marked })
}
