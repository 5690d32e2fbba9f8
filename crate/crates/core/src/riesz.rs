//! Riesz idempotents `P = (2πi)⁻¹ ∮ (zI − T)⁻¹ dz` by quadrature.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::BlockOperator;
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, C64};
use crate::spectral;

pub const MIN_NODES: usize = 16;
/// Gauss–Legendre points per rectangle side.
pub const GL_POINTS: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContourKind {
    Circle { center: C64, radius: f64 },
    /// Axis-aligned, given by two opposite corners.
    Rectangle { corners: [C64; 2] },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contour {
    #[serde(flatten)]
    pub kind: ContourKind,
    pub nodes: usize,
}

impl Contour {
    pub fn circle(center: C64, radius: f64, nodes: usize) -> Self {
        Contour { kind: ContourKind::Circle { center, radius }, nodes }
    }

    pub fn rectangle(a: C64, b: C64) -> Self {
        Contour { kind: ContourKind::Rectangle { corners: [a, b] }, nodes: 4 * GL_POINTS }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes < MIN_NODES {
            return Err(Error::InvalidSpec(format!("contour needs at least {MIN_NODES} nodes, got {}", self.nodes)));
        }
        match self.kind {
            ContourKind::Circle { center, radius } => {
                if !(radius > 0.0 && radius.is_finite()) || !(center.re.is_finite() && center.im.is_finite()) {
                    return Err(Error::InvalidSpec(format!("bad circle radius {radius}")));
                }
            }
            ContourKind::Rectangle { corners: [a, b] } => {
                if !((a.re - b.re).abs() > 0.0 && (a.im - b.im).abs() > 0.0) {
                    return Err(Error::InvalidSpec("degenerate rectangle".into()));
                }
            }
        }
        Ok(())
    }

    fn bounds(a: C64, b: C64) -> (f64, f64, f64, f64) {
        (a.re.min(b.re), a.re.max(b.re), a.im.min(b.im), a.im.max(b.im))
    }

    pub fn encloses(&self, z: C64) -> bool {
        match self.kind {
            ContourKind::Circle { center, radius } => (z - center).norm() < radius,
            ContourKind::Rectangle { corners: [a, b] } => {
                let (x0, x1, y0, y1) = Self::bounds(a, b);
                z.re > x0 && z.re < x1 && z.im > y0 && z.im < y1
            }
        }
    }

    /// Distance from `z` to the curve.
    pub fn distance(&self, z: C64) -> f64 {
        match self.kind {
            ContourKind::Circle { center, radius } => ((z - center).norm() - radius).abs(),
            ContourKind::Rectangle { corners: [a, b] } => {
                let (x0, x1, y0, y1) = Self::bounds(a, b);
                if self.encloses(z) {
                    (z.re - x0).min(x1 - z.re).min(z.im - y0).min(y1 - z.im)
                } else {
                    let dx = (x0 - z.re).max(0.0).max(z.re - x1);
                    let dy = (y0 - z.im).max(0.0).max(z.im - y1);
                    dx.hypot(dy)
                }
            }
        }
    }

    /// Quadrature nodes `z_j` and weights `w_j` with `∮ f dz ≈ Σ w_j f(z_j)`.
    pub fn quadrature(&self) -> Vec<(C64, C64)> {
        match self.kind {
            ContourKind::Circle { center, radius } => {
                let n = self.nodes;
                (0..n)
                    .map(|j| {
                        let u = C64::from_polar(1.0, std::f64::consts::TAU * j as f64 / n as f64);
                        let w = u * c(0.0, radius * std::f64::consts::TAU / n as f64);
                        (center + u * radius, w)
                    })
                    .collect()
            }
            ContourKind::Rectangle { corners: [a, b] } => {
                let (x0, x1, y0, y1) = Self::bounds(a, b);
                let v = [c(x0, y0), c(x1, y0), c(x1, y1), c(x0, y1)];
                let (xs, ws) = gauss_legendre(GL_POINTS);
                let mut out = Vec::with_capacity(4 * GL_POINTS);
                for s in 0..4 {
                    let (p, q) = (v[s], v[(s + 1) % 4]);
                    let half = (q - p) * 0.5;
                    let mid = (p + q) * 0.5;
                    for (x, w) in xs.iter().zip(&ws) {
                        out.push((mid + half * *x, half * *w));
                    }
                }
                out
            }
        }
    }
}

/// Gauss–Legendre nodes and weights on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let step = p1 / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        xs[i] = x;
        ws[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (xs, ws)
}

/// Neumaier-compensated sum of matrices, accumulated in the given order.
fn compensated_sum(n: usize, terms: impl Iterator<Item = CMat>) -> CMat {
    let mut sum = CMat::zeros(n, n);
    let mut comp = CMat::zeros(n, n);
    for t in terms {
        for ((s, e), x) in sum.iter_mut().zip(comp.iter_mut()).zip(t.iter()) {
            for (sv, ev, xv) in [(&mut s.re, &mut e.re, x.re), (&mut s.im, &mut e.im, x.im)] {
                let tot = *sv + xv;
                if sv.abs() >= xv.abs() {
                    *ev += (*sv - tot) + xv;
                } else {
                    *ev += (xv - tot) + *sv;
                }
                *sv = tot;
            }
        }
    }
    sum + comp
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RieszOutput {
    pub p: BlockOperator,
    pub enclosed: usize,
    pub total: usize,
    /// Smallest distance from the contour to an eigenvalue.
    pub clearance: f64,
    pub exclusion: f64,
    pub residuals: WeakReduction,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakReduction {
    /// `‖P² − P‖`.
    pub idempotent: f64,
    /// `‖PT − TP‖`.
    pub commutator: f64,
    /// `min(rank P, corank P)`.
    pub min_rank: usize,
}

impl WeakReduction {
    pub fn is_witness(&self, tol: f64, t_norm: f64) -> bool {
        self.idempotent <= tol && self.commutator <= tol * t_norm.max(1.0) && self.min_rank >= 1
    }
}

/// Default exclusion distance: `max(1e−6, 0.05 · gap)` where `gap` separates
/// enclosed from non-enclosed eigenvalues.
pub fn default_exclusion(eigs: &[C64], contour: &Contour) -> f64 {
    let (inside, outside): (Vec<C64>, Vec<C64>) = eigs.iter().partition(|z| contour.encloses(**z));
    let gap = inside
        .iter()
        .flat_map(|a| outside.iter().map(move |b| (a - b).norm()))
        .fold(f64::INFINITY, f64::min);
    if gap.is_finite() {
        (0.05 * gap).max(1e-6)
    } else {
        1e-6
    }
}

pub fn riesz_idempotent(t: &BlockOperator, contour: &Contour) -> Result<RieszOutput> {
    riesz_idempotent_with(t, contour, None)
}

/// Riesz idempotent with an explicit exclusion distance.
pub fn riesz_idempotent_with(t: &BlockOperator, contour: &Contour, exclusion: Option<f64>) -> Result<RieszOutput> {
    contour.validate()?;
    let block_eigs = spectral::block_eigenvalues(t)?;
    let all: Vec<C64> = block_eigs.iter().flatten().copied().collect();
    let exclusion = exclusion.unwrap_or_else(|| default_exclusion(&all, contour));
    let clearance = all.iter().map(|z| contour.distance(*z)).fold(f64::INFINITY, f64::min);
    if clearance < exclusion {
        return Err(Error::ContourThroughSpectrum { distance: clearance, exclusion });
    }
    let enclosed = all.iter().filter(|z| contour.encloses(**z)).count();
    if enclosed == 0 || enclosed == all.len() {
        return Err(Error::EnclosesAllOrNone { enclosed, total: all.len() });
    }

    let quad = contour.quadrature();
    let scale = c(0.0, -1.0 / std::f64::consts::TAU);
    let mut blocks = Vec::with_capacity(block_eigs.len());
    for (s, eigs) in t.summands().iter().zip(&block_eigs) {
        let n = s.block.nrows();
        let inside = eigs.iter().filter(|z| contour.encloses(**z)).count();
        let b = if inside == 0 {
            CMat::zeros(n, n)
        } else if inside == n {
            CMat::identity(n, n)
        } else {
            let terms: Vec<CMat> = quad
                .par_iter()
                .map(|&(z, w)| {
                    let shifted = CMat::identity(n, n) * z - &s.block;
                    let inv = shifted.lu().try_inverse().expect("contour avoids the spectrum");
                    inv * (w * scale)
                })
                .collect();
            compensated_sum(n, terms.into_iter())
        };
        blocks.push(b);
    }
    let p = BlockOperator::from_blocks(blocks)?;
    let p = BlockOperator::new(
        p.summands()
            .iter()
            .zip(t.summands())
            .map(|(a, b)| crate::algebra::Summand { id: b.id, block: a.block.clone() })
            .collect(),
    )?;
    let residuals = verify_idempotent(&p, t);
    Ok(RieszOutput { p, enclosed, total: all.len(), clearance, exclusion, residuals })
}

/// Residuals certifying `P` as a nontrivial idempotent commuting with `T`.
pub fn verify_idempotent(p: &BlockOperator, t: &BlockOperator) -> WeakReduction {
    let idempotent = (&(p * p) - p).op_norm();
    let commutator = (&(p * t) - &(t * p)).op_norm();
    // trace of an idempotent is its rank
    let trace: f64 = p.blocks().map(|b| b.trace().re).sum();
    let rank = trace.round().max(0.0) as usize;
    let dim = p.total_dim();
    let min_rank = rank.min(dim.saturating_sub(rank));
    WeakReduction { idempotent, commutator, min_rank }
}

/// Circle around `z` with radius half its distance to the rest of `eigs`.
pub fn isolating_circle(eigs: &[C64], z: C64, nodes: usize) -> Option<Contour> {
    let d = eigs
        .iter()
        .map(|w| (w - z).norm())
        .filter(|&d| d > 1e-8)
        .fold(f64::INFINITY, f64::min);
    d.is_finite().then(|| Contour::circle(z, d / 2.0, nodes))
}

/// Sum of eigenprojections for the enclosed eigenvalues, from a full
/// eigendecomposition. Only valid for diagonalizable blocks.
pub fn eigenprojection_sum(t: &BlockOperator, contour: &Contour) -> Result<BlockOperator> {
    let mut blocks = Vec::new();
    for s in t.summands() {
        let n = s.block.nrows();
        let eigs = linalg::eigenvalues(&s.block)?;
        let mut v = CMat::zeros(n, n);
        for (k, &l) in eigs.iter().enumerate() {
            // kernel vector of T − λ via the smallest right singular vector
            let svd = (s.block.clone() - CMat::identity(n, n) * l).svd(false, true);
            let vt = svd.v_t.expect("requested");
            let (imin, _) = svd
                .singular_values
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (i, &x)| if x < acc.1 { (i, x) } else { acc });
            let row = vt.row(imin).adjoint();
            v.set_column(k, &row);
        }
        let vinv = v.clone().try_inverse().ok_or_else(|| Error::CertificateInvalid("defective block".into()))?;
        let mask = CMat::from_diagonal(&nalgebra::DVector::from_iterator(
            n,
            eigs.iter().map(|z| if contour.encloses(*z) { c(1.0, 0.0) } else { c(0.0, 0.0) }),
        ));
        blocks.push(&v * mask * vinv);
    }
    let p = BlockOperator::from_blocks(blocks)?;
    Ok(BlockOperator::new(
        p.summands()
            .iter()
            .zip(t.summands())
            .map(|(a, b)| crate::algebra::Summand { id: b.id, block: a.block.clone() })
            .collect(),
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn diag(vals: &[C64]) -> CMat {
        CMat::from_diagonal(&DVector::from_row_slice(vals))
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (xs, ws) = gauss_legendre(GL_POINTS);
        assert!((ws.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        for deg in 0..=20u32 {
            let q: f64 = xs.iter().zip(&ws).map(|(x, w)| w * x.powi(deg as i32)).sum();
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((q - exact).abs() < 1e-14, "degree {deg}");
        }
    }

    #[test]
    fn diagonal_case() {
        let t = BlockOperator::single(diag(&[c(0.0, 0.0), c(5.0, 0.0)])).unwrap();
        let r = riesz_idempotent(&t, &Contour::circle(c(0.0, 0.0), 1.0, 64)).unwrap();
        let b = r.p.block(0).unwrap();
        assert!((b - diag(&[c(1.0, 0.0), c(0.0, 0.0)])).norm() < 1e-12);
        assert!(r.residuals.idempotent < 1e-12 && r.residuals.min_rank == 1);
    }

    #[test]
    fn jordan_part_is_identity() {
        // resolvent of J₂(0) is z⁻¹I + z⁻²N, whose integral around 0 is I
        let mut m = CMat::zeros(3, 3);
        m[(0, 1)] = c(1.0, 0.0);
        m[(2, 2)] = c(3.0, 0.0);
        let t = BlockOperator::single(m).unwrap();
        let r = riesz_idempotent(&t, &Contour::circle(c(0.0, 0.0), 1.0, 64)).unwrap();
        let oracle = diag(&[c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        assert!((r.p.block(0).unwrap() - oracle).norm() < 1e-12);
        assert!(r.residuals.idempotent <= 1e-10);
    }

    #[test]
    fn contour_errors() {
        let t = BlockOperator::single(diag(&[c(0.0, 0.0), c(1.0, 0.0)])).unwrap();
        assert!(matches!(
            riesz_idempotent(&t, &Contour::circle(c(0.0, 0.0), 1.0, 64)),
            Err(Error::ContourThroughSpectrum { .. })
        ));
        assert!(matches!(
            riesz_idempotent(&t, &Contour::circle(c(0.0, 0.0), 10.0, 64)),
            Err(Error::EnclosesAllOrNone { enclosed: 2, total: 2 })
        ));
        assert!(matches!(
            riesz_idempotent(&t, &Contour::circle(c(9.0, 0.0), 1.0, 64)),
            Err(Error::EnclosesAllOrNone { enclosed: 0, .. })
        ));
        assert!(Contour::circle(c(0.0, 0.0), 1.0, 8).validate().is_err());
    }

    #[test]
    fn zero_is_not_a_witness() {
        let t = BlockOperator::single(diag(&[c(0.0, 0.0), c(1.0, 0.0)])).unwrap();
        let w = verify_idempotent(&t.zeros_like(), &t);
        assert_eq!(w.min_rank, 0);
        assert!(!w.is_witness(1e-9, 1.0));
    }

    fn random_split(seed: u64, n: usize) -> (BlockOperator, Contour, Contour) {
        // upper-triangular with two eigenvalue clusters, then a random similarity
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = linalg::gaussian(&mut rng, n, n) * c(0.3, 0.0);
        for i in 0..n {
            for j in 0..i {
                m[(i, j)] = c(0.0, 0.0);
            }
            m[(i, i)] = if i % 2 == 0 { c(-2.0, 0.0) } else { c(2.0, 0.0) } + m[(i, i)] * c(0.2, 0.0);
        }
        let u = linalg::haar_unitary(&mut rng, n);
        let t = BlockOperator::single(&u * m * u.adjoint()).unwrap();
        (t, Contour::circle(c(-2.0, 0.0), 1.5, 128), Contour::circle(c(2.0, 0.0), 1.5, 128))
    }

    #[test]
    fn complementary_contours_sum_to_identity() {
        for seed in 0..5 {
            let (t, left, right) = random_split(seed, 6);
            let p = riesz_idempotent(&t, &left).unwrap();
            let q = riesz_idempotent(&t, &right).unwrap();
            let sum = &p.p + &q.p;
            assert!((&sum - &t.identity_like()).op_norm() < 1e-9);
            assert!(p.residuals.is_witness(1e-9, t.op_norm()));
            // rectangle around the same cluster gives the same idempotent
            let rect = riesz_idempotent(&t, &Contour::rectangle(c(-3.5, -1.5), c(-0.5, 1.5))).unwrap();
            assert!((&rect.p - &p.p).op_norm() < 1e-9);
        }
    }

    #[test]
    fn quadrature_converges() {
        let (t, left, _) = random_split(11, 5);
        let mut coarse = left.clone();
        coarse.nodes = 64;
        let a = riesz_idempotent(&t, &coarse).unwrap();
        let b = riesz_idempotent(&t, &left).unwrap();
        assert!((&a.p - &b.p).op_norm() <= 1e-10);
    }

    #[test]
    fn matches_eigenprojection_sum() {
        let (t, left, _) = random_split(3, 6);
        let p = riesz_idempotent(&t, &left).unwrap();
        let oracle = eigenprojection_sum(&t, &left).unwrap();
        assert!((&p.p - &oracle).op_norm() < 1e-8);
    }

    #[test]
    fn stable_under_small_perturbation() {
        let (t, left, _) = random_split(5, 6);
        let p0 = riesz_idempotent(&t, &left).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = BlockOperator::single(linalg::gaussian(&mut rng, 6, 6)).unwrap();
        let g = g.scale(c(1.0 / g.op_norm(), 0.0));
        for &size in &[1e-3, 1e-2, 5e-2] {
            let p1 = riesz_idempotent(&(&t + &g.scale(c(size, 0.0))), &left).unwrap();
            let change = (&p1.p - &p0.p).op_norm();
            assert!(change < p0.p.op_norm());
            assert!(change / size < 1e3);
        }
    }

    #[test]
    fn blocks_outside_contour_are_zero() {
        let t = BlockOperator::from_blocks(vec![
            diag(&[c(0.0, 0.0), c(3.0, 0.0)]),
            diag(&[c(5.0, 0.0), c(6.0, 0.0)]),
        ])
        .unwrap();
        let r = riesz_idempotent(&t, &Contour::circle(c(0.0, 0.0), 1.0, 32)).unwrap();
        assert_eq!(r.p.block(1).unwrap().norm(), 0.0);
        assert_eq!(r.enclosed, 1);
    }

    #[test]
    fn contour_json() {
        let ct = Contour::circle(c(1.0, -1.0), 0.5, 64);
        let s = serde_json::to_string(&ct).unwrap();
        assert!(s.contains("\"kind\":\"circle\""));
        assert_eq!(serde_json::from_str::<Contour>(&s).unwrap(), ct);
    }
}
