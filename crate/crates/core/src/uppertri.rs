//! Upper-triangular 2×2 operator matrices `T = [[T1, T12], [0, T2]]` and the
//! truncated-shift demonstration.
//!
//! In finite dimensions `σ(T) = σ(T1) ⊎ σ(T2)` exactly, because
//! `det(zI − T) = det(zI − T1)·det(zI − T2)`. The strict inclusions that can
//! occur for infinite-dimensional `H₂` (where `T1` may be a non-unitary
//! isometry) have no faithful finite model, since an injective operator on a
//! finite-dimensional space is invertible. The bilateral shift example is
//! shown instead as a pseudospectral trend: the ε-pseudospectrum of the
//! truncated shift `T1` fills the disk of radius about `ε^{1/n₁}`, which
//! tends to the closed unit disk as `n₁` grows, while the spectrum of the
//! circulant closure `T` stays on the unit circle.

use serde::{Deserialize, Serialize};

use crate::algebra::BlockOperator;
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, C64};
use crate::spectral::{self, Grid, PseudospectrumGrid};

#[derive(Clone, Debug, PartialEq)]
pub struct UTBlock {
    pub t1: CMat,
    pub t12: CMat,
    pub t2: CMat,
}

impl UTBlock {
    pub fn new(t1: CMat, t12: CMat, t2: CMat) -> Result<Self> {
        let b = UTBlock { t1, t12, t2 };
        b.check()?;
        Ok(b)
    }

    pub fn check(&self) -> Result<()> {
        let (n1, n2) = (self.t1.nrows(), self.t2.nrows());
        if !self.t1.is_square() || !self.t2.is_square() {
            return Err(Error::ShapeMismatch("diagonal blocks must be square".into()));
        }
        if n1 == 0 || n2 == 0 {
            return Err(Error::ShapeMismatch("diagonal blocks must be nonempty".into()));
        }
        if self.t12.shape() != (n1, n2) {
            return Err(Error::ShapeMismatch(format!(
                "T12 is {:?}, expected ({n1}, {n2})",
                self.t12.shape()
            )));
        }
        Ok(())
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.t1.nrows(), self.t2.nrows())
    }
}

/// The block matrix, with an exactly zero lower-left corner.
pub fn ut_assemble(b: &UTBlock) -> Result<BlockOperator> {
    b.check()?;
    let (n1, n2) = b.dims();
    let mut m = CMat::zeros(n1 + n2, n1 + n2);
    m.view_mut((0, 0), (n1, n1)).copy_from(&b.t1);
    m.view_mut((0, n1), (n1, n2)).copy_from(&b.t12);
    m.view_mut((n1, n1), (n2, n2)).copy_from(&b.t2);
    BlockOperator::single(m)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InclusionReport {
    pub spectrum: Vec<C64>,
    pub union: Vec<C64>,
    /// Max distance from a point of `σ(T)` to `σ(T1) ∪ σ(T2)`.
    pub upper_inclusion: f64,
    /// Max distance from a point of `σ(T1) ∪ σ(T2)` to `σ(T)`.
    pub lower_inclusion: f64,
    /// Bottleneck distance between the multisets.
    pub multiset_distance: f64,
    /// `T1` normal to `tol`, the case where equality needs no gap argument.
    pub t1_normal: bool,
    pub tol: f64,
    pub holds: bool,
}

/// Compare `σ(T)` with `σ(T1) ⊎ σ(T2)`; `tol` is absolute.
pub fn ut_inclusion_check(b: &UTBlock, tol: f64) -> Result<InclusionReport> {
    let t = ut_assemble(b)?;
    let spectrum = spectral::eigenvalues(&t)?;
    let mut union = linalg::eigenvalues(&b.t1)?;
    union.extend(linalg::eigenvalues(&b.t2)?);
    let upper_inclusion = linalg::directed_distance(&spectrum, &union);
    let lower_inclusion = linalg::directed_distance(&union, &spectrum);
    let multiset_distance = linalg::multiset_distance(&spectrum, &union);
    let scale = linalg::op_norm(&b.t1).powi(2).max(1.0);
    let comm = (b.t1.adjoint() * &b.t1 - &b.t1 * b.t1.adjoint()).norm();
    Ok(InclusionReport {
        holds: multiset_distance <= tol,
        t1_normal: comm <= tol * scale,
        spectrum,
        union,
        upper_inclusion,
        lower_inclusion,
        multiset_distance,
        tol,
    })
}

/// Upper-triangular form of `T*` for the reversed decomposition:
/// `(T2*, T12*, T1*)`.
pub fn adjoint_flip(b: &UTBlock) -> UTBlock {
    UTBlock { t1: b.t2.adjoint(), t12: b.t12.adjoint(), t2: b.t1.adjoint() }
}

/// Circulant shift `e_i ↦ e_{(i+1) mod n}`.
pub fn circulant_shift(n: usize) -> CMat {
    CMat::from_fn(n, n, |i, j| if i == (j + 1) % n { c(1.0, 0.0) } else { c(0.0, 0.0) })
}

/// Truncated forward shift `e_i ↦ e_{i+1}`, `e_{n−1} ↦ 0` (the Jordan block `J_n(0)ᵀ`).
pub fn truncated_shift(n: usize) -> CMat {
    CMat::from_fn(n, n, |i, j| if i == j + 1 { c(1.0, 0.0) } else { c(0.0, 0.0) })
}

#[derive(Clone, Debug)]
pub struct ShiftExample {
    /// The circulant shift on dimension `n`.
    pub t: BlockOperator,
    /// Compressions onto the first and second halves of the basis.
    pub b: UTBlock,
    /// The lower-left compression `P₂TP₁` (the single entry `e_{n/2} ⊗ e_{n/2−1}`),
    /// so that `T = ut_assemble(b) + dropped`.
    pub dropped: CMat,
}

/// Circulant shift of even dimension `n ≥ 4` and its compressions to the
/// halves `H₁ = span{e_0..e_{n/2−1}}`, `H₂ = H₁⊥`. `T1` and `T2` are truncated
/// shifts and `T12` is the rank-one wrap `e_0 ⊗ e_{n−1}`. The circulant has no
/// invariant coordinate half, so `T` differs from `ut_assemble(b)` by the
/// rank-one `dropped` block.
pub fn shift_example(n: usize) -> Result<ShiftExample> {
    if n < 4 || n % 2 != 0 {
        return Err(Error::InvalidSpec(format!("shift example needs even n >= 4, got {n}")));
    }
    let h = n / 2;
    let full = circulant_shift(n);
    let b = UTBlock::new(
        full.view((0, 0), (h, h)).into_owned(),
        full.view((0, h), (h, h)).into_owned(),
        full.view((h, h), (h, h)).into_owned(),
    )?;
    let dropped = full.view((h, 0), (h, h)).into_owned();
    Ok(ShiftExample { t: BlockOperator::single(full)?, b, dropped })
}

#[derive(Clone, Debug)]
pub struct ShiftDemo {
    pub n: usize,
    pub eps: f64,
    /// `ε^{1/(n/2)}`, the nominal pseudospectral radius of `T1`.
    pub radius: f64,
    /// Area of the disk of that radius over the grid area.
    pub disk_fraction: f64,
    /// Fraction of grid points in `σ_ε(T1)`.
    pub marked_fraction: f64,
    /// Fraction of grid points in `σ_ε(T)`, a thin annulus around the circle.
    pub marked_fraction_t: f64,
    /// Max `| |λ| − 1 |` over eigenvalues of `T`.
    pub circle_deviation: f64,
    /// `‖T1^{n/2}‖`.
    pub nilpotency_residual: f64,
    pub t1_grid: PseudospectrumGrid,
}

/// Pseudospectra of the truncated shift `T1` and of the circulant `T` on the
/// square `[−half_width, half_width]²` with `grid_n` points per side.
pub fn shift_demo(n: usize, eps: f64, half_width: f64, grid_n: usize) -> Result<ShiftDemo> {
    let ex = shift_example(n)?;
    let h = n / 2;
    let eigs = spectral::eigenvalues(&ex.t)?;
    let circle_deviation = eigs.iter().map(|z| (z.norm() - 1.0).abs()).fold(0.0, f64::max);
    let mut power = CMat::identity(h, h);
    for _ in 0..h {
        power = &power * &ex.b.t1;
    }
    let grid = Grid::square(half_width, grid_n);
    let t1 = BlockOperator::single(ex.b.t1.clone())?;
    let t1_grid = spectral::pseudospectrum_grid(&t1, eps, grid)?;
    let t_grid = spectral::pseudospectrum_grid(&ex.t, eps, grid)?;
    let radius = eps.powf(1.0 / h as f64);
    Ok(ShiftDemo {
        n,
        eps,
        radius,
        disk_fraction: std::f64::consts::PI * radius * radius / grid.area(),
        marked_fraction: t1_grid.marked_fraction(),
        marked_fraction_t: t_grid.marked_fraction(),
        circle_deviation,
        nilpotency_residual: power.norm(),
        t1_grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_block(seed: u64, n1: usize, n2: usize) -> UTBlock {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        UTBlock::new(
            linalg::gaussian(&mut rng, n1, n1),
            linalg::gaussian(&mut rng, n1, n2),
            linalg::gaussian(&mut rng, n2, n2),
        )
        .unwrap()
    }

    fn det(m: CMat) -> C64 {
        m.lu().determinant()
    }

    #[test]
    fn assemble_shapes() {
        let b = random_block(1, 2, 3);
        let t = ut_assemble(&b).unwrap();
        let m = t.block(0).unwrap();
        assert_eq!(m.view((2, 0), (3, 2)).norm(), 0.0);
        let bad = UTBlock { t12: CMat::zeros(3, 2), ..b };
        assert!(matches!(ut_assemble(&bad), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn scalar_blocks() {
        let b = UTBlock::new(
            CMat::from_element(1, 1, c(0.0, 0.0)),
            CMat::from_element(1, 1, c(5.0, 0.0)),
            CMat::from_element(1, 1, c(1.0, 0.0)),
        )
        .unwrap();
        let r = ut_inclusion_check(&b, 1e-12).unwrap();
        assert!(r.holds && r.t1_normal);
        assert!(linalg::multiset_distance(&r.spectrum, &[c(0.0, 0.0), c(1.0, 0.0)]) < 1e-14);
    }

    #[test]
    fn characteristic_polynomial_factors() {
        let b = random_block(7, 3, 3);
        let t = ut_assemble(&b).unwrap().block(0).unwrap().clone();
        for k in 0..8 {
            let z = C64::from_polar(0.5 + k as f64 * 0.7, k as f64);
            let lhs = det(CMat::identity(6, 6) * z - &t);
            let rhs = det(CMat::identity(3, 3) * z - &b.t1) * det(CMat::identity(3, 3) * z - &b.t2);
            assert!((lhs - rhs).norm() <= 1e-10 * lhs.norm().max(1.0));
        }
    }

    #[test]
    fn block_diagonal_and_normal_corner() {
        let mut b = random_block(2, 4, 3);
        b.t12 = CMat::zeros(4, 3);
        let r = ut_inclusion_check(&b, 1e-10).unwrap();
        assert!(r.holds);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = linalg::haar_unitary(&mut rng, 4);
        let d = CMat::from_diagonal(&nalgebra::DVector::from_fn(4, |i, _| c(i as f64, 1.0)));
        let b = UTBlock::new(&u * d * u.adjoint(), linalg::gaussian(&mut rng, 4, 2), linalg::gaussian(&mut rng, 2, 2)).unwrap();
        let r = ut_inclusion_check(&b, 1e-9).unwrap();
        assert!(r.t1_normal && r.holds);
    }

    #[test]
    fn flip_conjugates_spectra() {
        let b = random_block(4, 3, 5);
        let f = adjoint_flip(&b);
        let r = ut_inclusion_check(&b, 1e-9).unwrap();
        let rf = ut_inclusion_check(&f, 1e-9).unwrap();
        let conj: Vec<C64> = r.spectrum.iter().map(|z| z.conj()).collect();
        assert!(linalg::multiset_distance(&conj, &rf.spectrum) < 1e-9);
        let tf = ut_assemble(&f).unwrap().block(0).unwrap().clone();
        let t = ut_assemble(&b).unwrap().block(0).unwrap().clone();
        // reversing both bases turns T* into the flipped form
        let n = 8;
        let perm = CMat::from_fn(n, n, |i, j| {
            let target = if i < 5 { i + 3 } else { i - 5 };
            if j == target { c(1.0, 0.0) } else { c(0.0, 0.0) }
        });
        assert!((&perm * t.adjoint() * perm.transpose() - tf).norm() < 1e-14);
        assert_eq!(adjoint_flip(&f), b);
    }

    #[test]
    fn shift_example_structure() {
        let ex = shift_example(8).unwrap();
        let eigs = spectral::eigenvalues(&ex.t).unwrap();
        let roots: Vec<C64> = (0..8).map(|k| C64::from_polar(1.0, std::f64::consts::TAU * k as f64 / 8.0)).collect();
        assert!(linalg::multiset_distance(&eigs, &roots) < 1e-12);
        assert_eq!(linalg::eigenvalues(&ex.b.t1).unwrap().iter().map(|z| z.norm()).fold(0.0, f64::max), 0.0);
        let rank_one = linalg::singular_values(&ex.b.t12);
        assert_eq!(rank_one.iter().filter(|s| **s > 0.5).count(), 1);
        let assembled = ut_assemble(&ex.b).unwrap().block(0).unwrap().clone();
        let mut restored = assembled;
        restored.view_mut((4, 0), (4, 4)).copy_from(&ex.dropped);
        assert_eq!(&restored, ex.t.block(0).unwrap());
        let f = adjoint_flip(&ex.b);
        let a = linalg::eigenvalues(&f.t1).unwrap();
        assert!(a.iter().all(|z| z.norm() == 0.0));
        assert!(shift_example(7).is_err() && shift_example(2).is_err());
    }

    #[test]
    fn shift_demo_trend() {
        let small = shift_demo(8, 1e-3, 1.2, 41).unwrap();
        let big = shift_demo(16, 1e-3, 1.2, 41).unwrap();
        assert!(small.nilpotency_residual == 0.0 && big.circle_deviation < 1e-12);
        assert!(big.marked_fraction > small.marked_fraction);
        assert!(big.marked_fraction >= 0.85 * big.disk_fraction);
        // σ(T) is a thin ring, much smaller than the filled disk
        assert!(big.marked_fraction_t < big.marked_fraction);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn equality_for_random_blocks(seed in any::<u64>(), n1 in 1usize..9, n2 in 1usize..9) {
            let b = random_block(seed, n1, n2);
            let tn = ut_assemble(&b).unwrap().op_norm();
            let r = ut_inclusion_check(&b, 1e-7 * tn).unwrap();
            prop_assert!(r.holds, "distance {}", r.multiset_distance);
            prop_assert!(r.upper_inclusion <= r.multiset_distance + 1e-15);
            prop_assert!(r.lower_inclusion <= r.multiset_distance + 1e-15);
        }
    }
}
