//! Random test corpora and deviation probes for the norm axioms.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::algebra::{AlgebraSpec, BlockOperator, Projection};
use crate::error::Result;
use crate::linalg::{self, c, CMat};
use crate::norms::{self, Aggregation, BaseNorm, NormSpec};
use crate::uppertri::UTBlock;

/// Block operator with `summands` Gaussian blocks of dimension in `dims`.
pub fn random_operator<R: Rng + ?Sized>(rng: &mut R, summands: usize, dims: std::ops::RangeInclusive<usize>) -> BlockOperator {
    let blocks = (0..summands)
        .map(|_| {
            let d = rng.random_range(dims.clone());
            linalg::gaussian(rng, d, d)
        })
        .collect();
    BlockOperator::from_blocks(blocks).expect("nonempty square blocks")
}

pub fn random_base_norm<R: Rng + ?Sized>(rng: &mut R) -> BaseNorm {
    match rng.random_range(0..6) {
        0 => BaseNorm::Operator,
        1 => BaseNorm::Schatten { p: 1.0 },
        2 => BaseNorm::Schatten { p: 2.0 },
        3 => BaseNorm::Schatten { p: 3.5 },
        4 => BaseNorm::Schatten { p: f64::INFINITY },
        _ => BaseNorm::KyFan { k: rng.random_range(1..=3) },
    }
}

/// Dominating norm on `n` summands with weights in `[1, max_weight]`, so
/// `1 ≤ f_Φ(I)` and `c_Φ ≤ max_weight`.
pub fn random_norm_spec<R: Rng + ?Sized>(rng: &mut R, n: usize, max_weight: f64) -> NormSpec {
    let w = Uniform::new_inclusive(1.0, max_weight).expect("max_weight >= 1");
    NormSpec {
        base: (0..n).map(|_| random_base_norm(rng)).collect(),
        weights: (0..n).map(|_| w.sample(rng)).collect(),
        agg: match rng.random_range(0..3) {
            0 => Aggregation::Sup,
            1 => Aggregation::Lq(1.0),
            _ => Aggregation::Lq(2.0),
        },
        tail_weights: None,
    }
}

pub fn random_ut_block<R: Rng + ?Sized>(rng: &mut R, max1: usize, max2: usize) -> UTBlock {
    let n1 = rng.random_range(1..=max1);
    let n2 = rng.random_range(1..=max2);
    UTBlock::new(linalg::gaussian(rng, n1, n1), linalg::gaussian(rng, n1, n2), linalg::gaussian(rng, n2, n2)).expect("shapes agree")
}

/// Relative violations of the norm axioms on one random sample; all are
/// zero up to rounding for a genuine unitarily invariant norm.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AxiomDeviations {
    /// `|Φ(UXV) − Φ(X)| / Φ(X)`.
    pub unitary: f64,
    /// `(Φ(AXB) − ‖A‖Φ(X)‖B‖)₊ / (‖A‖Φ(X)‖B‖)`.
    pub two_sided: f64,
    /// `max(|Φ(X*) − Φ(X)|, |Φ(|X|) − Φ(X)|) / Φ(X)`.
    pub adjoint_abs: f64,
    /// `(Φ(X) − Φ(Y))₊ / Φ(Y)` for `0 ≤ X ≤ Y`.
    pub monotone: f64,
    /// `(‖XZ‖ f_Φ(Z) − Φ(X))₊ / Φ(X)` for a central projection `Z`.
    pub central_cut: f64,
}

impl AxiomDeviations {
    pub fn max(&self) -> f64 {
        [self.unitary, self.two_sided, self.adjoint_abs, self.monotone, self.central_cut].into_iter().fold(0.0, f64::max)
    }

    pub fn worst(self, other: Self) -> Self {
        AxiomDeviations {
            unitary: self.unitary.max(other.unitary),
            two_sided: self.two_sided.max(other.two_sided),
            adjoint_abs: self.adjoint_abs.max(other.adjoint_abs),
            monotone: self.monotone.max(other.monotone),
            central_cut: self.central_cut.max(other.central_cut),
        }
    }
}

/// Draw `X, A, B, U, V, Y, C, Z` on the layout of `x` and measure each axiom.
pub fn axiom_deviations<R: Rng + ?Sized>(rng: &mut R, spec: &NormSpec, x: &BlockOperator) -> Result<AxiomDeviations> {
    let phi = |y: &BlockOperator| norms::phi_eval(spec, y);
    let px = phi(x)?;

    let u = x.map_blocks(|b| linalg::haar_unitary(rng, b.nrows()));
    let v = x.map_blocks(|b| linalg::haar_unitary(rng, b.nrows()));
    let unitary = (phi(&(&(&u * x) * &v))? - px).abs() / px;

    let a = x.map_blocks(|b| linalg::gaussian(rng, b.nrows(), b.nrows()));
    let b = x.map_blocks(|b| linalg::gaussian(rng, b.nrows(), b.nrows()));
    let bound = a.op_norm() * px * b.op_norm();
    let two_sided = ((phi(&(&(&a * x) * &b))? - bound) / bound).max(0.0);

    let abs = x.map_blocks(linalg::abs);
    let adjoint_abs = (phi(&x.adjoint())? - px).abs().max((phi(&abs)? - px).abs()) / px;

    // 0 ≤ Y^{1/2} C Y^{1/2} ≤ Y for 0 ≤ C ≤ I
    let y = x.map_blocks(|blk| blk * blk.adjoint());
    let small = x.map_blocks(|blk| {
        let n = blk.nrows();
        let w = linalg::haar_unitary(rng, n);
        let d = CMat::from_diagonal(&DVector::from_fn(n, |_, _| c(rng.random::<f64>(), 0.0)));
        let root = linalg::psd_sqrt(&(blk * blk.adjoint()));
        &root * (&w * d * w.adjoint()) * &root
    });
    let py = phi(&y)?;
    let monotone = ((phi(&small)? - py) / py).max(0.0);

    let ids = x.ids();
    let mut mask: Vec<usize> = ids.iter().copied().filter(|_| rng.random::<bool>()).collect();
    if mask.is_empty() {
        mask.push(ids[rng.random_range(0..ids.len())]);
    }
    let z = Projection::central(x, &mask);
    let f = norms::f_phi(spec, &z)?.value;
    let central_cut = (((x * z.base()).op_norm() * f - px) / px).max(0.0);

    Ok(AxiomDeviations { unitary, two_sided, adjoint_abs, monotone, central_cut })
}

/// Algebra spec matching a random operator.
pub fn algebra_of(t: &BlockOperator) -> AlgebraSpec {
    AlgebraSpec::finite(t.dims()).expect("nonempty layout")
}
