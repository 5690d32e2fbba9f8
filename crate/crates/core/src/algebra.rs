//! Operators in finite (or lazily infinite) direct sums of matrix algebras.
//!
//! A [`BlockOperator`] is an element of `M(n_0) ⊕ M(n_1) ⊕ …`, stored as one
//! dense complex block per central summand. Arithmetic never mixes summands.

use std::ops::{Add, Mul, Sub};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, C64};

/// Tolerance used wherever a caller does not supply one.
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Summand {
    pub id: usize,
    pub block: CMat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "OperatorRepr", into = "OperatorRepr")]
pub struct BlockOperator {
    summands: Vec<Summand>,
}

impl BlockOperator {
    pub fn new(summands: Vec<Summand>) -> Result<Self> {
        if summands.is_empty() {
            return Err(Error::ShapeMismatch("operator has no summands".into()));
        }
        for (i, s) in summands.iter().enumerate() {
            if s.block.nrows() == 0 || s.block.nrows() != s.block.ncols() {
                return Err(Error::ShapeMismatch(format!(
                    "summand {} has a {}x{} block",
                    s.id,
                    s.block.nrows(),
                    s.block.ncols()
                )));
            }
            if i > 0 && summands[i - 1].id >= s.id {
                return Err(Error::ShapeMismatch("summand ids must be strictly increasing".into()));
            }
        }
        Ok(Self { summands })
    }

    /// Blocks numbered 0, 1, 2, ….
    pub fn from_blocks(blocks: Vec<CMat>) -> Result<Self> {
        Self::new(
            blocks
                .into_iter()
                .enumerate()
                .map(|(id, block)| Summand { id, block })
                .collect(),
        )
    }

    pub fn single(block: CMat) -> Result<Self> {
        Self::from_blocks(vec![block])
    }

    pub fn identity(alg: &AlgebraSpec) -> Self {
        Self::scalar(alg, linalg::ONE)
    }

    pub fn zeros(alg: &AlgebraSpec) -> Self {
        Self::scalar(alg, linalg::ZERO)
    }

    pub fn scalar(alg: &AlgebraSpec, z: C64) -> Self {
        let blocks = alg.dims.iter().map(|&d| CMat::identity(d, d) * z).collect();
        Self::from_blocks(blocks).expect("algebra dims are validated to be positive")
    }

    /// Identity with the same summand layout as `self`.
    pub fn identity_like(&self) -> Self {
        self.map_blocks(|b| CMat::identity(b.nrows(), b.nrows()))
    }

    pub fn zeros_like(&self) -> Self {
        self.map_blocks(|b| CMat::zeros(b.nrows(), b.nrows()))
    }

    pub fn summands(&self) -> &[Summand] {
        &self.summands
    }

    pub fn ids(&self) -> Vec<usize> {
        self.summands.iter().map(|s| s.id).collect()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.summands.iter().map(|s| s.block.nrows()).collect()
    }

    pub fn total_dim(&self) -> usize {
        self.summands.iter().map(|s| s.block.nrows()).sum()
    }

    pub fn block(&self, id: usize) -> Option<&CMat> {
        self.summands.iter().find(|s| s.id == id).map(|s| &s.block)
    }

    pub fn blocks(&self) -> impl Iterator<Item = &CMat> {
        self.summands.iter().map(|s| &s.block)
    }

    /// Position of summand `id` in the summand list.
    pub fn position(&self, id: usize) -> Option<usize> {
        self.summands.iter().position(|s| s.id == id)
    }

    pub fn map_blocks<F: FnMut(&CMat) -> CMat>(&self, mut f: F) -> Self {
        Self {
            summands: self
                .summands
                .iter()
                .map(|s| Summand { id: s.id, block: f(&s.block) })
                .collect(),
        }
    }

    pub fn zip_blocks<F: FnMut(&CMat, &CMat) -> CMat>(&self, other: &Self, mut f: F) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Self {
            summands: self
                .summands
                .iter()
                .zip(&other.summands)
                .map(|(a, b)| Summand { id: a.id, block: f(&a.block, &b.block) })
                .collect(),
        })
    }

    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.ids() != other.ids() || self.dims() != other.dims() {
            return Err(Error::ShapeMismatch(format!(
                "summand layouts differ: {:?}/{:?} vs {:?}/{:?}",
                self.ids(),
                self.dims(),
                other.ids(),
                other.dims()
            )));
        }
        Ok(())
    }

    /// Replace the block of summand `id`.
    pub fn with_block(&self, id: usize, block: CMat) -> Result<Self> {
        let pos = self
            .position(id)
            .ok_or_else(|| Error::ShapeMismatch(format!("no summand {id}")))?;
        if block.shape() != self.summands[pos].block.shape() {
            return Err(Error::ShapeMismatch(format!("block shape for summand {id}")));
        }
        let mut out = self.clone();
        out.summands[pos].block = block;
        Ok(out)
    }

    pub fn adjoint(&self) -> Self {
        self.map_blocks(|b| b.adjoint())
    }

    pub fn scale(&self, z: C64) -> Self {
        self.map_blocks(|b| b * z)
    }

    /// `self − z·I`.
    pub fn shift(&self, z: C64) -> Self {
        self.map_blocks(|b| b - CMat::identity(b.nrows(), b.nrows()) * z)
    }

    /// Operator norm: the max over blocks of the largest singular value.
    pub fn op_norm(&self) -> f64 {
        self.blocks().map(linalg::op_norm).fold(0.0, f64::max)
    }

    /// Frobenius norm of the whole operator.
    pub fn frobenius(&self) -> f64 {
        self.blocks().map(|b| b.norm_squared()).sum::<f64>().sqrt()
    }

    /// Block-diagonal dense matrix.
    pub fn to_dense(&self) -> CMat {
        let n = self.total_dim();
        let mut m = CMat::zeros(n, n);
        let mut off = 0;
        for b in self.blocks() {
            let d = b.nrows();
            m.view_mut((off, off), (d, d)).copy_from(b);
            off += d;
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().all(|b| b.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
    }
}

impl Add for &BlockOperator {
    type Output = BlockOperator;
    fn add(self, rhs: &BlockOperator) -> BlockOperator {
        self.zip_blocks(rhs, |a, b| a + b).expect("operator sum requires matching layouts")
    }
}

impl Sub for &BlockOperator {
    type Output = BlockOperator;
    fn sub(self, rhs: &BlockOperator) -> BlockOperator {
        self.zip_blocks(rhs, |a, b| a - b).expect("operator difference requires matching layouts")
    }
}

impl Mul for &BlockOperator {
    type Output = BlockOperator;
    fn mul(self, rhs: &BlockOperator) -> BlockOperator {
        self.zip_blocks(rhs, |a, b| a * b).expect("operator product requires matching layouts")
    }
}

/// Whether the summand family stops or repeats its last dimension forever.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    #[default]
    None,
    RepeatLast,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgebraSpec {
    pub dims: Vec<usize>,
    #[serde(default)]
    pub tail: Tail,
}

impl AlgebraSpec {
    pub fn new(dims: Vec<usize>, tail: Tail) -> Result<Self> {
        let spec = Self { dims, tail };
        spec.validate()?;
        Ok(spec)
    }

    pub fn finite(dims: Vec<usize>) -> Result<Self> {
        Self::new(dims, Tail::None)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(Error::InvalidSpec("algebra has no summands".into()));
        }
        if self.dims.contains(&0) {
            return Err(Error::InvalidSpec("summand dimensions must be at least 1".into()));
        }
        Ok(())
    }

    /// Dimension of summand `id`; tail summands reuse the last listed dimension.
    pub fn dim_of(&self, id: usize) -> Option<usize> {
        match self.dims.get(id) {
            Some(&d) => Some(d),
            None if self.tail == Tail::RepeatLast => self.dims.last().copied(),
            None => None,
        }
    }

    pub fn is_infinite(&self) -> bool {
        self.tail == Tail::RepeatLast
    }

    /// Layout of the explicit part of this algebra inferred from an operator.
    pub fn of_operator(op: &BlockOperator, tail: Tail) -> Result<Self> {
        let ids = op.ids();
        if ids.iter().enumerate().any(|(i, &id)| i != id) {
            return Err(Error::ShapeMismatch("summand ids must be 0..n to infer an algebra".into()));
        }
        Self::new(op.dims(), tail)
    }

    /// Check that `op` lives in this algebra: ids are 0..m and every block has the right size.
    pub fn check_conforms(&self, op: &BlockOperator) -> Result<()> {
        for (i, s) in op.summands().iter().enumerate() {
            if s.id != i {
                return Err(Error::ShapeMismatch(format!("summand ids must be 0..n, found {}", s.id)));
            }
            match self.dim_of(s.id) {
                Some(d) if d == s.block.nrows() => {}
                Some(d) => {
                    return Err(Error::ShapeMismatch(format!(
                        "summand {} has dim {} but the algebra says {d}",
                        s.id,
                        s.block.nrows()
                    )))
                }
                None => {
                    return Err(Error::ShapeMismatch(format!(
                        "summand {} is outside a finite algebra with {} summands",
                        s.id,
                        self.dims.len()
                    )))
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdealKind {
    #[default]
    Full,
    FinitelySupported,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdealSpec {
    pub kind: IdealKind,
}

impl IdealSpec {
    pub const FULL: IdealSpec = IdealSpec { kind: IdealKind::Full };
    pub const FINITELY_SUPPORTED: IdealSpec = IdealSpec { kind: IdealKind::FinitelySupported };

    pub fn validate(&self, alg: &AlgebraSpec) -> Result<()> {
        if self.kind == IdealKind::FinitelySupported && !alg.is_infinite() {
            return Err(Error::InvalidSpec(
                "the finitely supported ideal needs an infinite (repeat_last) algebra".into(),
            ));
        }
        Ok(())
    }

    /// Ideal membership. Every stored operator has finitely many explicit
    /// summands and acts as zero on the rest, so it lies in both ideals.
    pub fn contains(&self, op: &BlockOperator) -> bool {
        match self.kind {
            IdealKind::Full => true,
            IdealKind::FinitelySupported => !op.summands().is_empty(),
        }
    }
}

/// A Hermitian idempotent, validated to a tolerance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    base: BlockOperator,
    tol: f64,
    ranks: Vec<usize>,
}

impl Projection {
    pub fn base(&self) -> &BlockOperator {
        &self.base
    }

    pub fn into_base(self) -> BlockOperator {
        self.base
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Rank of each block, in summand order.
    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn rank(&self) -> usize {
        self.ranks.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.rank() == 0
    }

    pub fn rank_of(&self, id: usize) -> usize {
        self.base.position(id).map_or(0, |p| self.ranks[p])
    }

    /// Central projection: identity on the listed summands, zero elsewhere.
    pub fn central(layout: &BlockOperator, mask: &[usize]) -> Self {
        let base = layout.map_blocks(|b| CMat::zeros(b.nrows(), b.nrows()));
        let summands = base
            .summands()
            .iter()
            .map(|s| {
                let d = s.block.nrows();
                let block = if mask.contains(&s.id) { CMat::identity(d, d) } else { s.block.clone() };
                Summand { id: s.id, block }
            })
            .collect::<Vec<_>>();
        let ranks = summands
            .iter()
            .map(|s| if mask.contains(&s.id) { s.block.nrows() } else { 0 })
            .collect();
        Self { base: BlockOperator { summands }, tol: DEFAULT_TOL, ranks }
    }

    /// Rank-one projection onto `v` (normalized here) in summand `id`.
    pub fn rank_one(layout: &BlockOperator, id: usize, v: &DVector<C64>) -> Result<Self> {
        let nv = v.norm();
        if nv == 0.0 {
            return Err(Error::ZeroProjection);
        }
        let u = v / c(nv, 0.0);
        let zero = layout.zeros_like();
        let base = zero.with_block(id, linalg::outer(&u))?;
        let ranks = base.ids().iter().map(|&k| usize::from(k == id)).collect();
        Ok(Self { base, tol: DEFAULT_TOL, ranks })
    }
}

/// Max over blocks of max(‖A² − A‖, ‖A − A*‖).
pub fn projection_residual(a: &BlockOperator) -> f64 {
    a.blocks()
        .map(|b| {
            let idem = linalg::op_norm(&(b * b - b));
            let herm = linalg::op_norm(&(b - b.adjoint()));
            idem.max(herm)
        })
        .fold(0.0, f64::max)
}

pub fn validate_projection(a: &BlockOperator, tol: f64) -> Result<Projection> {
    if !(tol > 0.0) {
        return Err(Error::InvalidSpec(format!("tolerance must be positive, got {tol}")));
    }
    let residual = projection_residual(a);
    if !(residual <= tol) {
        return Err(Error::NotAProjection { residual });
    }
    let ranks = a
        .blocks()
        .map(|b| linalg::hermitian_eigen(b).0.iter().filter(|&&v| v > 0.5).count())
        .collect();
    Ok(Projection { base: a.clone(), tol, ranks })
}

/// Summands on which `p` is nonzero.
pub fn central_support(p: &Projection) -> Vec<usize> {
    p.base
        .summands()
        .iter()
        .zip(&p.ranks)
        .filter(|(_, &r)| r > 0)
        .map(|(s, _)| s.id)
        .collect()
}

/// The central support C_P as a projection.
pub fn central_support_projection(p: &Projection) -> Projection {
    Projection::central(&p.base, &central_support(p))
}

/// A rank-one subprojection of `p` supported in summand `k`, built from the
/// top unit eigenvector of block k.
pub fn minimal_subprojection(p: &Projection, k: usize) -> Result<Projection> {
    let block = p
        .base
        .block(k)
        .ok_or_else(|| Error::ShapeMismatch(format!("no summand {k}")))?;
    if p.rank_of(k) == 0 {
        return Err(Error::EmptyBlock(k));
    }
    let (vals, vecs) = linalg::hermitian_eigen(block);
    let top = vals.len() - 1;
    let v = vecs.column(top).into_owned();
    let mut e = Projection::rank_one(&p.base, k, &v)?;
    e.tol = p.tol;
    Ok(e)
}

// JSON layout: {"summands":[{"id":0,"dim":2,"re":[[..]],"im":[[..]]}], "tail":"none"}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SummandRepr {
    pub id: usize,
    pub dim: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OperatorRepr {
    pub summands: Vec<SummandRepr>,
}

impl From<BlockOperator> for OperatorRepr {
    fn from(op: BlockOperator) -> Self {
        let summands = op
            .summands
            .iter()
            .map(|s| {
                let d = s.block.nrows();
                let row = |f: fn(&C64) -> f64, i: usize| (0..d).map(|j| f(&s.block[(i, j)])).collect();
                SummandRepr {
                    id: s.id,
                    dim: d,
                    re: (0..d).map(|i| row(|z| z.re, i)).collect(),
                    im: (0..d).map(|i| row(|z| z.im, i)).collect(),
                }
            })
            .collect();
        Self { summands }
    }
}

impl TryFrom<OperatorRepr> for BlockOperator {
    type Error = Error;
    fn try_from(repr: OperatorRepr) -> Result<Self> {
        let mut summands = Vec::with_capacity(repr.summands.len());
        for s in repr.summands {
            let d = s.dim;
            let well_formed = s.re.len() == d
                && s.im.len() == d
                && s.re.iter().chain(&s.im).all(|r| r.len() == d);
            if !well_formed {
                return Err(Error::ShapeMismatch(format!(
                    "summand {} declares dim {d} but re/im are not {d}x{d}",
                    s.id
                )));
            }
            let block = CMat::from_fn(d, d, |i, j| c(s.re[i][j], s.im[i][j]));
            summands.push(Summand { id: s.id, block });
        }
        BlockOperator::new(summands)
    }
}

/// An operator file: the operator plus the tail marker of its algebra.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OperatorFile {
    #[serde(flatten)]
    pub operator: BlockOperator,
    #[serde(default)]
    pub tail: Tail,
}

impl OperatorFile {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn algebra(&self) -> Result<AlgebraSpec> {
        AlgebraSpec::of_operator(&self.operator, self.tail)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::gaussian;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn alg3() -> AlgebraSpec {
        AlgebraSpec::finite(vec![2, 3, 4]).unwrap()
    }

    #[test]
    fn identity_and_zero_are_projections() {
        let alg = alg3();
        let p = validate_projection(&BlockOperator::identity(&alg), 1e-10).unwrap();
        assert_eq!(p.ranks(), &[2, 3, 4]);
        let z = validate_projection(&BlockOperator::zeros(&alg), 1e-10).unwrap();
        assert_eq!(z.ranks(), &[0, 0, 0]);
        assert!(z.is_zero());
    }

    #[test]
    fn half_eigenvalue_is_rejected() {
        // H = U diag(0.5, 1, 0) U*: ‖H² − H‖ = |0.25 − 0.5| = 0.25
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = linalg::haar_unitary(&mut rng, 3);
        let d = CMat::from_diagonal(&DVector::from_vec(vec![c(0.5, 0.0), c(1.0, 0.0), c(0.0, 0.0)]));
        let h = BlockOperator::single(&u * d * u.adjoint()).unwrap();
        match validate_projection(&h, 1e-9) {
            Err(Error::NotAProjection { residual }) => assert!((residual - 0.25).abs() < 1e-12),
            other => panic!("expected NotAProjection, got {other:?}"),
        }
    }

    #[test]
    fn central_support_examples() {
        let alg = alg3();
        let id = validate_projection(&BlockOperator::identity(&alg), 1e-10).unwrap();
        assert_eq!(central_support(&id), vec![0, 1, 2]);

        let v = DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 1.0), c(0.0, 0.0), c(1.0, 0.0)]);
        let r1 = Projection::rank_one(&BlockOperator::zeros(&alg), 2, &v).unwrap();
        assert_eq!(central_support(&r1), vec![2]);

        let mut blocks: Vec<CMat> = alg.dims.iter().map(|&d| CMat::zeros(d, d)).collect();
        blocks[0][(1, 1)] = c(1.0, 0.0);
        blocks[2][(0, 0)] = c(1.0, 0.0);
        let p = validate_projection(&BlockOperator::from_blocks(blocks.clone()).unwrap(), 1e-10).unwrap();
        let oracle: Vec<usize> = blocks
            .iter()
            .enumerate()
            .filter(|(_, b)| b.norm() > 1e-10)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(central_support(&p), oracle);
        assert_eq!(oracle, vec![0, 2]);
    }

    #[test]
    fn minimal_subprojection_cases() {
        let alg = AlgebraSpec::finite(vec![3]).unwrap();
        let id = validate_projection(&BlockOperator::identity(&alg), 1e-10).unwrap();
        let e = minimal_subprojection(&id, 0).unwrap();
        assert_eq!(e.rank(), 1);
        let pe = id.base() * e.base();
        assert!((&pe - e.base()).op_norm() == 0.0);

        // rank-2 projection in M(4)
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = linalg::haar_unitary(&mut rng, 4);
        let d = CMat::from_diagonal(&DVector::from_vec(vec![c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]));
        let p = validate_projection(&BlockOperator::single(&u * d * u.adjoint()).unwrap(), 1e-10).unwrap();
        assert_eq!(p.rank(), 2);
        let e = minimal_subprojection(&p, 0).unwrap();
        let epe = &(e.base() * p.base()) * e.base();
        assert!((&epe - e.base()).op_norm() < 1e-10);
        let e_check = validate_projection(e.base(), 1e-12).unwrap();
        assert_eq!(e_check.rank(), 1);

        let zero = validate_projection(&BlockOperator::zeros(&alg3()), 1e-10).unwrap();
        assert!(matches!(minimal_subprojection(&zero, 1), Err(Error::EmptyBlock(1))));
    }

    #[test]
    fn adjoint_reverses_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = BlockOperator::from_blocks(vec![gaussian(&mut rng, 3, 3), gaussian(&mut rng, 5, 5)]).unwrap();
        let b = BlockOperator::from_blocks(vec![gaussian(&mut rng, 3, 3), gaussian(&mut rng, 5, 5)]).unwrap();
        let lhs = (&a * &b).adjoint();
        let rhs = &b.adjoint() * &a.adjoint();
        assert!((&lhs - &rhs).op_norm() < 1e-12);
    }

    #[test]
    fn mismatched_layouts_are_rejected() {
        let a = BlockOperator::identity(&alg3());
        let b = BlockOperator::identity(&AlgebraSpec::finite(vec![2, 3]).unwrap());
        assert!(matches!(a.check_same_shape(&b), Err(Error::ShapeMismatch(_))));
        assert!(BlockOperator::new(vec![
            Summand { id: 1, block: CMat::identity(1, 1) },
            Summand { id: 0, block: CMat::identity(1, 1) },
        ])
        .is_err());
    }

    #[test]
    fn tail_dims_repeat() {
        let alg = AlgebraSpec::new(vec![1, 2], Tail::RepeatLast).unwrap();
        assert_eq!(alg.dim_of(7), Some(2));
        let fin = AlgebraSpec::finite(vec![1, 2]).unwrap();
        assert_eq!(fin.dim_of(7), None);
        assert!(IdealSpec::FINITELY_SUPPORTED.validate(&fin).is_err());
        assert!(IdealSpec::FINITELY_SUPPORTED.validate(&alg).is_ok());
    }

    #[test]
    fn operator_json_round_trip_is_lossless() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let op = BlockOperator::from_blocks(vec![gaussian(&mut rng, 2, 2), gaussian(&mut rng, 3, 3)]).unwrap();
        let file = OperatorFile { operator: op.clone(), tail: Tail::RepeatLast };
        let text = file.to_json().unwrap();
        let back = OperatorFile::from_json(&text).unwrap();
        assert_eq!(back.operator, op);
        assert_eq!(back.tail, Tail::RepeatLast);
        assert!(text.contains("\"tail\": \"repeat_last\""));
    }

    #[test]
    fn malformed_json_block_is_rejected() {
        let text = r#"{"summands":[{"id":0,"dim":2,"re":[[1,0]],"im":[[0,0],[0,0]]}],"tail":"none"}"#;
        assert!(OperatorFile::from_json(text).is_err());
    }
}
