//! Unitarily invariant norms on block operators, `f_Φ`, `c_Φ`, and the
//! operator-norm domination test.
//!
//! A norm is described per summand by a symmetric-gauge base norm of the
//! block's singular values (operator, Schatten-p, Ky Fan-k) times a positive
//! weight, and the per-summand values are combined by `sup` or an `ℓ^q` sum.
//!
//! Summands past the explicit list (lazily infinite algebras) reuse the last
//! base norm; their weights follow the tail class:
//! `bounded(s)` gives every tail summand weight `s`, and `divergent` gives
//! tail summand `j` (counted from 1) weight `w_last · 2^j`.
//!
//! Every base norm takes the value 1 on a rank-one projection (its only
//! nonzero singular value is 1; Ky Fan-k sums the top k, which is still 1).
//! So `f_Φ(P)` reduces to the smallest weight over the central support of `P`.

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::algebra::{self, AlgebraSpec, BlockOperator, Projection};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseNorm {
    Operator,
    Schatten {
        #[serde(serialize_with = "ser_exponent", deserialize_with = "de_exponent")]
        p: f64,
    },
    #[serde(rename = "kyfan")]
    KyFan { k: usize },
}

fn ser_exponent<S: Serializer>(p: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if p.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*p)
    }
}

fn de_exponent<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Exp {
        Num(f64),
        Text(String),
    }
    match Exp::deserialize(d)? {
        Exp::Num(p) => Ok(p),
        Exp::Text(t) if matches!(t.as_str(), "inf" | "infinity" | "Infinity") => Ok(f64::INFINITY),
        Exp::Text(t) => Err(serde::de::Error::custom(format!("bad exponent {t:?}"))),
    }
}

impl BaseNorm {
    /// Evaluate on singular values sorted in descending order.
    pub fn of_singular_values(&self, sv: &[f64]) -> f64 {
        let top = sv.first().copied().unwrap_or(0.0);
        match *self {
            BaseNorm::Operator => top,
            BaseNorm::Schatten { p } if p.is_infinite() => top,
            BaseNorm::Schatten { p } => {
                if top == 0.0 {
                    return 0.0;
                }
                let s: f64 = sv.iter().map(|&x| (x / top).powf(p)).sum();
                top * s.powf(1.0 / p)
            }
            BaseNorm::KyFan { k } => sv.iter().take(k).sum(),
        }
    }

    pub fn of_matrix(&self, m: &CMat) -> f64 {
        self.of_singular_values(&linalg::singular_values(m))
    }

    fn validate(&self) -> Result<()> {
        match *self {
            BaseNorm::Schatten { p } if !(p >= 1.0) => {
                Err(Error::InvalidSpec(format!("Schatten exponent must be >= 1, got {p}")))
            }
            BaseNorm::KyFan { k: 0 } => Err(Error::InvalidSpec("Ky Fan index must be >= 1".into())),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Sup,
    Lq(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailWeights {
    Bounded(f64),
    Divergent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormSpec {
    pub base: Vec<BaseNorm>,
    pub weights: Vec<f64>,
    pub agg: Aggregation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_weights: Option<TailWeights>,
}

impl NormSpec {
    /// Same base norm and weight 1 on every one of `n` summands, sup aggregation.
    pub fn uniform(base: BaseNorm, n: usize) -> Self {
        Self { base: vec![base; n], weights: vec![1.0; n], agg: Aggregation::Sup, tail_weights: None }
    }

    pub fn operator_norm(n: usize) -> Self {
        Self::uniform(BaseNorm::Operator, n)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.base.is_empty() || self.base.len() != self.weights.len() {
            return Err(Error::InvalidSpec(format!(
                "need one base norm per weight, got {} and {}",
                self.base.len(),
                self.weights.len()
            )));
        }
        for b in &self.base {
            b.validate()?;
        }
        if let Some(w) = self.weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidSpec(format!("weights must be positive and finite, got {w}")));
        }
        if let Aggregation::Lq(q) = self.agg {
            if !(q >= 1.0 && q.is_finite()) {
                return Err(Error::InvalidSpec(format!("lq exponent must be in [1, inf), got {q}")));
            }
        }
        if let Some(TailWeights::Bounded(s)) = self.tail_weights {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidSpec(format!("bounded tail value must be positive, got {s}")));
            }
        }
        Ok(())
    }

    /// Validate against an algebra layout.
    pub fn validate_for(&self, alg: &AlgebraSpec) -> Result<()> {
        self.validate()?;
        alg.validate()?;
        if self.weights.len() != alg.dims.len() {
            return Err(Error::InvalidSpec(format!(
                "norm lists {} summands but the algebra has {}",
                self.weights.len(),
                alg.dims.len()
            )));
        }
        if alg.is_infinite() {
            match (self.tail_weights, self.agg) {
                (None, _) => {
                    return Err(Error::InvalidSpec("infinite algebra needs a tail weight class".into()))
                }
                (Some(TailWeights::Divergent), Aggregation::Lq(_)) => {
                    return Err(Error::InvalidSpec(
                        "lq aggregation over a divergent infinite tail has no convergence certificate".into(),
                    ))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Weight of summand `id`, including tail summands.
    pub fn weight(&self, id: usize) -> Option<f64> {
        if let Some(&w) = self.weights.get(id) {
            return Some(w);
        }
        let last = *self.weights.last()?;
        match self.tail_weights? {
            TailWeights::Bounded(s) => Some(s),
            TailWeights::Divergent => {
                let j = (id + 1 - self.weights.len()) as i32;
                Some(last * 2f64.powi(j))
            }
        }
    }

    pub fn base_norm(&self, id: usize) -> Option<BaseNorm> {
        if self.weights.get(id).is_some() || self.tail_weights.is_some() {
            self.base.get(id).or(self.base.last()).copied()
        } else {
            None
        }
    }

    /// Smallest weight over all summands of the algebra.
    fn min_weight(&self, alg: &AlgebraSpec) -> f64 {
        let explicit = self.weights.iter().copied().fold(f64::INFINITY, f64::min);
        if !alg.is_infinite() {
            return explicit;
        }
        let tail = self.weight(self.weights.len()).unwrap_or(f64::INFINITY);
        explicit.min(tail)
    }
}

/// Φ(X).
pub fn phi_eval(spec: &NormSpec, x: &BlockOperator) -> Result<f64> {
    let mut acc = 0.0f64;
    for s in x.summands() {
        let (w, base) = match (spec.weight(s.id), spec.base_norm(s.id)) {
            (Some(w), Some(b)) => (w, b),
            _ => {
                return Err(Error::ShapeMismatch(format!(
                    "summand {} is not covered by the norm specification",
                    s.id
                )))
            }
        };
        let v = w * base.of_matrix(&s.block);
        match spec.agg {
            Aggregation::Sup => acc = acc.max(v),
            Aggregation::Lq(q) => acc += v.powf(q),
        }
    }
    Ok(match spec.agg {
        Aggregation::Sup => acc,
        Aggregation::Lq(q) => acc.powf(1.0 / q),
    })
}

/// max |N(UXV) − N(X)| over `trials` Haar-random blockwise unitaries U, V,
/// for an arbitrary norm-like evaluator `eval`.
pub fn unitary_invariance_deviation<R, F>(eval: F, x: &BlockOperator, trials: usize, rng: &mut R) -> f64
where
    R: Rng + ?Sized,
    F: Fn(&BlockOperator) -> f64,
{
    let base = eval(x);
    let mut worst = 0.0f64;
    for _ in 0..trials.max(1) {
        let u = x.map_blocks(|b| linalg::haar_unitary(rng, b.nrows()));
        let v = x.map_blocks(|b| linalg::haar_unitary(rng, b.nrows()));
        let uxv = &(&u * x) * &v;
        worst = worst.max((eval(&uxv) - base).abs());
    }
    worst
}

pub fn check_unitary_invariance<R: Rng + ?Sized>(
    spec: &NormSpec,
    x: &BlockOperator,
    trials: usize,
    rng: &mut R,
) -> Result<f64> {
    phi_eval(spec, x)?;
    Ok(unitary_invariance_deviation(|y| phi_eval(spec, y).unwrap_or(f64::NAN), x, trials, rng))
}

/// Value of `f_Φ(P)` and a rank-one subprojection attaining it.
#[derive(Clone, Debug)]
pub struct FPhi {
    pub value: f64,
    pub summand: usize,
    pub witness: Projection,
}

pub fn f_phi(spec: &NormSpec, p: &Projection) -> Result<FPhi> {
    let support = algebra::central_support(p);
    if support.is_empty() {
        return Err(Error::ZeroProjection);
    }
    let mut best: Option<(f64, usize)> = None;
    for &k in &support {
        let w = spec
            .weight(k)
            .ok_or_else(|| Error::ShapeMismatch(format!("summand {k} has no weight")))?;
        if best.is_none_or(|(bw, _)| w < bw) {
            best = Some((w, k));
        }
    }
    let (value, summand) = best.expect("support is nonempty");
    let witness = algebra::minimal_subprojection(p, summand)?;
    Ok(FPhi { value, summand, witness })
}

/// `c_Φ` = sup of the weights (central projections suffice); +inf for a divergent tail.
pub fn c_phi(spec: &NormSpec, alg: &AlgebraSpec) -> Result<f64> {
    spec.validate_for(alg)?;
    let explicit = spec.weights.iter().copied().fold(0.0, f64::max);
    if !alg.is_infinite() {
        return Ok(explicit);
    }
    Ok(match spec.tail_weights {
        Some(TailWeights::Bounded(s)) => explicit.max(s),
        Some(TailWeights::Divergent) => f64::INFINITY,
        None => unreachable!("validate_for rejects infinite algebras without a tail class"),
    })
}

/// `f_Φ(I)` over the whole algebra, including tail summands.
pub fn f_phi_identity(spec: &NormSpec, alg: &AlgebraSpec) -> Result<f64> {
    spec.validate_for(alg)?;
    Ok(spec.min_weight(alg))
}

/// Φ dominates the operator norm iff `f_Φ(I) ≥ 1`.
pub fn dominating_check(spec: &NormSpec, alg: &AlgebraSpec) -> Result<bool> {
    Ok(f_phi_identity(spec, alg)? >= 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{validate_projection, Tail};
    use crate::linalg::{c, gaussian};
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn diag(vals: &[f64]) -> CMat {
        CMat::from_diagonal(&DVector::from_iterator(vals.len(), vals.iter().map(|&v| c(v, 0.0))))
    }

    fn weighted(weights: &[f64]) -> NormSpec {
        NormSpec {
            base: vec![BaseNorm::Schatten { p: 2.0 }; weights.len()],
            weights: weights.to_vec(),
            agg: Aggregation::Sup,
            tail_weights: None,
        }
    }

    #[test]
    fn phi_examples() {
        let spec = NormSpec::uniform(BaseNorm::Schatten { p: 2.0 }, 1);
        let zero = BlockOperator::single(CMat::zeros(3, 3)).unwrap();
        assert_eq!(phi_eval(&spec, &zero).unwrap(), 0.0);
        let x = BlockOperator::single(diag(&[3.0, 4.0])).unwrap();
        assert!((phi_eval(&spec, &x).unwrap() - 5.0).abs() < 1e-14);

        let v = DVector::from_vec(vec![c(1.0, 0.0), c(1.0, 1.0), c(0.0, 0.0)]);
        let e = Projection::rank_one(&zero, 0, &v).unwrap();
        for p in [1.0, 1.5, 2.0, 7.0, f64::INFINITY] {
            let s = NormSpec::uniform(BaseNorm::Schatten { p }, 1);
            assert!((phi_eval(&s, e.base()).unwrap() - 1.0).abs() < 1e-12, "p={p}");
        }
        for k in 1..=3 {
            let s = NormSpec::uniform(BaseNorm::KyFan { k }, 1);
            assert!((phi_eval(&s, e.base()).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ky_fan_and_schatten_values() {
        let m = diag(&[1.0, 2.0, 3.0]);
        assert_eq!(BaseNorm::KyFan { k: 2 }.of_matrix(&m), 5.0);
        assert!((BaseNorm::Schatten { p: 1.0 }.of_matrix(&m) - 6.0).abs() < 1e-13);
        assert!((BaseNorm::Operator.of_matrix(&m) - 3.0).abs() < 1e-14);
    }

    #[test]
    fn unitary_invariance_holds_and_scalar_case_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = BlockOperator::from_blocks(vec![gaussian(&mut rng, 3, 3), gaussian(&mut rng, 4, 4)]).unwrap();
        let spec = NormSpec {
            base: vec![BaseNorm::KyFan { k: 2 }, BaseNorm::Schatten { p: 3.0 }],
            weights: vec![1.5, 2.0],
            agg: Aggregation::Lq(2.0),
            tail_weights: None,
        };
        assert!(check_unitary_invariance(&spec, &x, 100, &mut rng).unwrap() <= 1e-9);

        let s = BlockOperator::single(CMat::identity(4, 4) * c(2.0, -1.0)).unwrap();
        let spec1 = NormSpec::uniform(BaseNorm::Schatten { p: 2.0 }, 1);
        assert!(check_unitary_invariance(&spec1, &s, 20, &mut rng).unwrap() < 1e-13);
    }

    #[test]
    fn non_gauge_evaluator_is_flagged() {
        // Norm of the first row is not unitarily invariant; a cyclic
        // permutation already moves it, which is the direct oracle.
        let first_row = |x: &BlockOperator| x.summands()[0].block.row(0).norm();
        let x = BlockOperator::single(diag(&[1.0, 0.0, 0.0])).unwrap();
        let perm = BlockOperator::single(CMat::from_fn(3, 3, |i, j| {
            if i == (j + 1) % 3 { c(1.0, 0.0) } else { c(0.0, 0.0) }
        }))
        .unwrap();
        let permuted = &perm * &x;
        assert_eq!(first_row(&x), 1.0);
        assert_eq!(first_row(&permuted), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(unitary_invariance_deviation(first_row, &x, 50, &mut rng) > 1e-6);
    }

    #[test]
    fn f_phi_is_min_supported_weight() {
        let alg = AlgebraSpec::finite(vec![2, 2, 3]).unwrap();
        let ones = weighted(&[1.0, 1.0, 1.0]);
        let id = validate_projection(&BlockOperator::identity(&alg), 1e-10).unwrap();
        assert_eq!(f_phi(&ones, &id).unwrap().value, 1.0);

        let spec = weighted(&[2.0, 4.0, 8.0]);
        let p = Projection::central(&BlockOperator::zeros(&alg), &[1, 2]);
        let f = f_phi(&spec, &p).unwrap();
        assert_eq!(f.value, 4.0);
        assert_eq!(f.summand, 1);

        // brute force over random subprojections of each supported block
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut best = f64::INFINITY;
        for &k in &[1usize, 2] {
            let d = alg.dims[k];
            for r in 1..=d {
                for _ in 0..20 {
                    let u = linalg::haar_unitary(&mut rng, d);
                    let cols = u.columns(0, r).into_owned();
                    let e = BlockOperator::zeros(&alg).with_block(k, &cols * cols.adjoint()).unwrap();
                    best = best.min(phi_eval(&spec, &e).unwrap());
                }
            }
        }
        assert!((best - 4.0).abs() < 1e-12);
        assert!(best >= f.value - 1e-12);
    }

    #[test]
    fn f_phi_depends_only_on_central_support() {
        let alg = AlgebraSpec::finite(vec![2, 3, 2]).unwrap();
        let spec = weighted(&[3.0, 1.5, 6.0]);
        let full = Projection::central(&BlockOperator::zeros(&alg), &[0, 1, 2]);
        let v = DVector::from_vec(vec![c(0.6, 0.0), c(0.0, 0.8), c(0.0, 0.0)]);
        let small = Projection::rank_one(&BlockOperator::zeros(&alg), 1, &v).unwrap();
        assert_eq!(f_phi(&spec, &full).unwrap().value, f_phi(&spec, &small).unwrap().value);
        let zero = Projection::central(&BlockOperator::zeros(&alg), &[]);
        assert!(matches!(f_phi(&spec, &zero), Err(Error::ZeroProjection)));
    }

    #[test]
    fn c_phi_cases() {
        let alg = AlgebraSpec::finite(vec![2, 2, 2]).unwrap();
        assert_eq!(c_phi(&weighted(&[1.0, 1.0, 1.0]), &alg).unwrap(), 1.0);
        let k = 6;
        let weights: Vec<f64> = (1..=k).map(|i| 2f64.powi(i)).collect();
        let alg_k = AlgebraSpec::finite(vec![1; k as usize]).unwrap();
        let oracle = weights.iter().copied().fold(0.0, f64::max);
        assert_eq!(c_phi(&weighted(&weights), &alg_k).unwrap(), oracle);
        assert_eq!(oracle, 64.0);

        let inf_alg = AlgebraSpec::new(vec![1, 2], Tail::RepeatLast).unwrap();
        let mut spec = weighted(&[2.0, 4.0]);
        spec.tail_weights = Some(TailWeights::Divergent);
        assert_eq!(c_phi(&spec, &inf_alg).unwrap(), f64::INFINITY);
        spec.tail_weights = Some(TailWeights::Bounded(5.0));
        assert_eq!(c_phi(&spec, &inf_alg).unwrap(), 5.0);
        spec.tail_weights = None;
        assert!(c_phi(&spec, &inf_alg).is_err());
    }

    #[test]
    fn lq_over_divergent_tail_is_rejected() {
        let inf_alg = AlgebraSpec::new(vec![1], Tail::RepeatLast).unwrap();
        let spec = NormSpec {
            base: vec![BaseNorm::Operator],
            weights: vec![1.0],
            agg: Aggregation::Lq(2.0),
            tail_weights: Some(TailWeights::Divergent),
        };
        assert!(matches!(spec.validate_for(&inf_alg), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn domination_boundary() {
        let alg = AlgebraSpec::finite(vec![1, 2, 3]).unwrap();
        assert!(dominating_check(&weighted(&[1.0, 2.0, 3.0]), &alg).unwrap());
        assert!(dominating_check(&weighted(&[1.0, 1.0, 1.0]), &alg).unwrap());
        let half = weighted(&[0.5, 2.0, 3.0]);
        let fi = f_phi(&half, &validate_projection(&BlockOperator::identity(&alg), 1e-9).unwrap()).unwrap();
        assert_eq!(fi.value, 0.5);
        assert!(!dominating_check(&half, &alg).unwrap());
    }

    #[test]
    fn tail_weights_follow_class() {
        let mut spec = weighted(&[1.0, 3.0]);
        spec.tail_weights = Some(TailWeights::Divergent);
        assert_eq!(spec.weight(2), Some(6.0));
        assert_eq!(spec.weight(4), Some(24.0));
        spec.tail_weights = Some(TailWeights::Bounded(2.5));
        assert_eq!(spec.weight(9), Some(2.5));
        spec.tail_weights = None;
        assert_eq!(spec.weight(2), None);
    }

    #[test]
    fn norm_spec_json_schema() {
        let text = r#"{"base":[{"kind":"schatten","p":2},{"kind":"operator"},{"kind":"kyfan","k":2},{"kind":"schatten","p":"inf"}],
                       "weights":[1,2,3,4],"agg":"sup","tail_weights":"divergent"}"#;
        let spec = NormSpec::from_json(text).unwrap();
        assert_eq!(spec.base[3], BaseNorm::Schatten { p: f64::INFINITY });
        assert_eq!(spec.tail_weights, Some(TailWeights::Divergent));
        let again = NormSpec::from_json(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(again, spec);
        let lq = NormSpec::from_json(r#"{"base":[{"kind":"operator"}],"weights":[1],"agg":{"lq":2},"tail_weights":{"bounded":3}}"#).unwrap();
        assert_eq!(lq.agg, Aggregation::Lq(2.0));
        assert_eq!(lq.tail_weights, Some(TailWeights::Bounded(3.0)));
        assert!(NormSpec::from_json(r#"{"base":[{"kind":"operator"}],"weights":[-1],"agg":"sup"}"#).is_err());
    }

    #[test]
    fn uncovered_summand_is_shape_mismatch() {
        let spec = weighted(&[1.0]);
        let x = BlockOperator::from_blocks(vec![CMat::identity(1, 1), CMat::identity(1, 1)]).unwrap();
        assert!(matches!(phi_eval(&spec, &x), Err(Error::ShapeMismatch(_))));
    }
}
