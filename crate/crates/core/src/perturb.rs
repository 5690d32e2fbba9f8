//! Small perturbations that disconnect a spectrum, and the counterexample
//! showing they need not exist when `c_Φ = ∞`.
//!
//! The forward construction, for `T` with rightmost eigenvalue `λ` and budget `ε`:
//!
//! 1. `ε₀ = ε / (2(1 + c_Φ))` and `T′ = T − λI`, so `σ(T′)` lies in `Re z ≤ 0`.
//! 2. Pick `δ < ε₀` such that every `A` with `‖A − T′‖ < δ` has spectrum in
//!    `Re z < ε₀` (certified by [`spectral::certified_line_margin`]).
//! 3. `E` is a rank-one projection under the spectral projection of
//!    `T′*T′` for `[0, (δ/(1+c_Φ))²]`, so `Φ(E) < 1 + c_Φ` and `Φ(T′E) < δ`.
//! 4. `X = (ε₀I − T′)E`. Then `T′ + X` has `ε₀` as an isolated eigenvalue and
//!    the rest of its spectrum in `Re z < ε₀`, and `Φ(X) ≤ ε₀Φ(E) + Φ(T′E) < ε`.
//!
//! The operator-norm variant for real-rank-zero algebras uses `ε₀ = ε/2` and
//! takes `E` under the kernel projection of a finite-spectrum approximation
//! of `T′*T′`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{self, AlgebraSpec, BlockOperator, IdealSpec, Projection, Tail};
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, C64};
use crate::norms::{self, Aggregation, BaseNorm, NormSpec, TailWeights};
use crate::spectral::{self, SpectrumReport};

/// Numerical membership test for `λ ∈ σ(T)`: `s_min(T − λI) ≤ LAMBDA_TOL · max(1, ‖T‖)`.
pub const LAMBDA_TOL: f64 = 1e-8;

/// Line offset: the certified half-plane boundary sits at `ε₀(1 − 10⁻³)`.
const LINE_OFFSET: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    /// Unitarily invariant norm with `ε₀ = ε/(2(1+c_Φ))`.
    UnitarilyInvariant,
    /// Operator norm in a real-rank-zero algebra with `ε₀ = ε/2`.
    RealRankZero,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerturbationCertificate {
    pub route: Route,
    pub x: BlockOperator,
    pub phi_x: f64,
    pub x_op_norm: f64,
    pub eps: f64,
    pub lambda: C64,
    pub c_phi: f64,
    pub eps0: f64,
    pub delta: f64,
    pub e: Projection,
    pub e_summand: usize,
    pub phi_e: f64,
    /// `Φ((T − λI)E)`.
    pub phi_te: f64,
    /// `λ + ε₀`, the isolated eigenvalue of `T + X`.
    pub isolated: C64,
    pub components_before: SpectrumReport,
    pub components_after: SpectrumReport,
    pub gap_achieved: f64,
}

impl PerturbationCertificate {
    /// Distance from the isolated eigenvalue to every eigenvalue of `T + X`
    /// outside its component.
    pub fn isolation_distance(&self) -> f64 {
        let after = &self.components_after;
        let Some(k) = after.component_near(self.isolated) else {
            return 0.0;
        };
        after
            .eigenvalues
            .iter()
            .zip(&after.component_of)
            .filter(|(_, &j)| j != k)
            .map(|(z, _)| (z - self.isolated).norm())
            .fold(f64::INFINITY, f64::min)
    }

    /// The perturbed operator `T + X`.
    pub fn perturbed(&self, t: &BlockOperator) -> BlockOperator {
        t + &self.x
    }
}

/// A nonzero subprojection of `P` lying in the ideal.
///
/// In the atomic model a rank-one projection in a single summand is in every
/// ideal considered here; it is taken in the lowest-index summand of `C_P`.
pub fn subprojection_in_ideal(p: &Projection, ideal: &IdealSpec, alg: &AlgebraSpec) -> Result<Projection> {
    ideal.validate(alg)?;
    let support = algebra::central_support(p);
    let &k = support.first().ok_or(Error::ZeroProjection)?;
    let e = algebra::minimal_subprojection(p, k)?;
    debug_assert!(ideal.contains(e.base()));
    Ok(e)
}

/// Output of [`small_te`].
#[derive(Clone, Debug)]
pub struct SmallTe {
    pub e: Projection,
    pub summand: usize,
    /// Spectral projection of `(T−λI)*(T−λI)` the projection `e` sits under.
    pub window: Projection,
    pub phi_e: f64,
    pub phi_te: f64,
    pub c_phi: f64,
}

/// A rank-one projection `E` in the ideal with `Φ(E) < 1 + c_Φ` and
/// `Φ((T − λI)E) < ε`.
pub fn small_te(
    t: &BlockOperator,
    lambda: C64,
    eps: f64,
    spec: &NormSpec,
    ideal: &IdealSpec,
    alg: &AlgebraSpec,
) -> Result<SmallTe> {
    if !(eps > 0.0) {
        return Err(Error::InvalidSpec(format!("eps must be positive, got {eps}")));
    }
    alg.check_conforms(t)?;
    ideal.validate(alg)?;
    let c_phi = norms::c_phi(spec, alg)?;
    if !c_phi.is_finite() {
        return Err(Error::InfiniteCPhi);
    }
    let smin = spectral::min_singular_value(t, lambda);
    if smin > LAMBDA_TOL * t.op_norm().max(1.0) {
        return Err(Error::BadLambda { re: lambda.re, im: lambda.im, smin });
    }
    let shifted = t.shift(lambda);
    let gram = &shifted.adjoint() * &shifted;
    let threshold = (eps / (1.0 + c_phi)).powi(2);
    let window = spectral::spectral_projection_below(&gram, threshold, algebra::DEFAULT_TOL)?;

    // cheapest summand of the window, then the least-stretched direction in it
    let f = norms::f_phi(spec, &window)?;
    let k = f.summand;
    let (_, vecs) = linalg::hermitian_eigen(gram.block(k).expect("summand of the window"));
    let v = vecs.column(0).into_owned();
    let e = Projection::rank_one(t, k, &v)?;
    if !ideal.contains(e.base()) {
        return Err(Error::CertificateInvalid("E is outside the ideal".into()));
    }

    let phi_e = norms::phi_eval(spec, e.base())?;
    let phi_te = norms::phi_eval(spec, &(&shifted * e.base()))?;
    if !(phi_e < 1.0 + c_phi) {
        return Err(Error::CertificateInvalid(format!("phi(E) = {phi_e} is not below 1 + c_phi")));
    }
    if !(phi_te < eps) {
        return Err(Error::CertificateInvalid(format!("phi((T - lambda)E) = {phi_te:e} is not below {eps:e}")));
    }
    Ok(SmallTe { e, summand: k, window, phi_e, phi_te, c_phi })
}

/// Largest `δ ≤ ε₀/2` for which `‖A − T′‖ < δ` keeps `σ(A)` left of
/// `Re z = ε₀(1 − 10⁻³)`, where `T′` has its rightmost eigenvalue at 0.
pub fn choose_delta(shifted: &BlockOperator, eps0: f64) -> Result<f64> {
    let line = eps0 * (1.0 - LINE_OFFSET);
    let cap = eps0 / 2.0;
    let margin = spectral::certified_line_margin(shifted, line, cap)?;
    Ok(margin.min(cap))
}

/// Build `X = (ε₀I − T′)E`, shift back, and assemble a checked certificate.
#[allow(clippy::too_many_arguments)]
fn finish(
    route: Route,
    t: &BlockOperator,
    eps: f64,
    lambda: C64,
    c_phi: f64,
    eps0: f64,
    delta: f64,
    e: Projection,
    e_summand: usize,
    spec: &NormSpec,
    before_eigs: Vec<C64>,
) -> Result<PerturbationCertificate> {
    let shifted = t.shift(lambda);
    let x = &shifted.scale(c(-1.0, 0.0)).shift(c(-eps0, 0.0)) * e.base();
    let phi_x = norms::phi_eval(spec, &x)?;
    let phi_e = norms::phi_eval(spec, e.base())?;
    let phi_te = norms::phi_eval(spec, &(&shifted * e.base()))?;
    let x_op_norm = x.op_norm();
    let threshold = eps0 / 2.0;
    let components_before = spectral::spectrum_components(&before_eigs, threshold);
    let components_after = spectral::spectrum_report(&(t + &x), threshold)?;
    let isolated = lambda + eps0;
    let cert = PerturbationCertificate {
        route,
        gap_achieved: components_after.gap,
        x,
        phi_x,
        x_op_norm,
        eps,
        lambda,
        c_phi,
        eps0,
        delta,
        e,
        e_summand,
        phi_e,
        phi_te,
        isolated,
        components_before,
        components_after,
    };
    check_certificate(&cert)?;
    Ok(cert)
}

/// Re-check the invariants every certificate must satisfy.
pub fn check_certificate(cert: &PerturbationCertificate) -> Result<()> {
    let fail = |m: String| Err(Error::CertificateInvalid(m));
    if !(cert.phi_x < cert.eps) {
        return fail(format!("phi(X) = {:e} is not below eps = {:e}", cert.phi_x, cert.eps));
    }
    if cert.x_op_norm > cert.phi_x * (1.0 + 1e-12) + 1e-300 {
        return fail(format!("|X| = {:e} exceeds phi(X) = {:e}", cert.x_op_norm, cert.phi_x));
    }
    if !cert.components_after.is_disconnected() {
        return fail("spectrum of T + X is connected at the certificate threshold".into());
    }
    if !(cert.gap_achieved > 0.0) {
        return fail("no positive gap between components".into());
    }
    let rank = cert.e.rank();
    let hits = cert
        .components_after
        .eigenvalues
        .iter()
        .filter(|z| (*z - cert.isolated).norm() <= LAMBDA_TOL)
        .count();
    if hits < rank {
        return fail(format!("lambda + eps0 appears {hits} times in sigma(T + X), need {rank}"));
    }
    Ok(())
}

/// A perturbation `X` with `Φ(X) < ε` such that `σ(T + X)` is disconnected.
pub fn disconnect(
    t: &BlockOperator,
    eps: f64,
    spec: &NormSpec,
    ideal: &IdealSpec,
    alg: &AlgebraSpec,
) -> Result<PerturbationCertificate> {
    if !(eps > 0.0) {
        return Err(Error::InvalidSpec(format!("eps must be positive, got {eps}")));
    }
    alg.check_conforms(t)?;
    spec.validate_for(alg)?;
    ideal.validate(alg)?;
    if t.total_dim() < 2 {
        return Err(Error::DimensionOne);
    }
    let f_identity = norms::f_phi_identity(spec, alg)?;
    if f_identity < 1.0 {
        return Err(Error::NotDominating(f_identity));
    }
    let c_phi = norms::c_phi(spec, alg)?;
    if !c_phi.is_finite() {
        return Err(Error::InfiniteCPhi);
    }
    let eigs = spectral::eigenvalues(t)?;
    let lambda = spectral::rightmost_point(&eigs).expect("nonempty spectrum");
    let eps0 = eps / (2.0 * (1.0 + c_phi));
    let delta = choose_delta(&t.shift(lambda), eps0)?;
    let te = small_te(t, lambda, delta, spec, ideal, alg)?;
    finish(Route::UnitarilyInvariant, t, eps, lambda, c_phi, eps0, delta, te.e, te.summand, spec, eigs)
}

/// Operator-norm variant with `ε₀ = ε/2`.
pub fn disconnect_rr0(t: &BlockOperator, eps: f64) -> Result<PerturbationCertificate> {
    if !(eps > 0.0) {
        return Err(Error::InvalidSpec(format!("eps must be positive, got {eps}")));
    }
    if t.total_dim() < 2 {
        return Err(Error::DimensionOne);
    }
    let spec = NormSpec {
        base: vec![BaseNorm::Operator; t.summands().len()],
        weights: vec![1.0; t.summands().len()],
        agg: Aggregation::Sup,
        tail_weights: None,
    };
    let eigs = spectral::eigenvalues(t)?;
    let lambda = spectral::rightmost_point(&eigs).expect("nonempty spectrum");
    let eps0 = eps / 2.0;
    let shifted = t.shift(lambda);
    let delta = choose_delta(&shifted, eps0)?;
    let (e, k) = kernel_cut_projection(&shifted, delta)?;
    finish(Route::RealRankZero, t, eps, lambda, 1.0, eps0, delta, e, k, &spec, eigs)
}

/// Replace `T*T` by the finite-spectrum operator that rounds every
/// eigenvalue below `δ²/2` to zero (an error below `δ²`), take its kernel
/// projection `P₁`, and return a rank-one `E ≤ P₁` with `‖TE‖ < δ`.
fn kernel_cut_projection(t: &BlockOperator, delta: f64) -> Result<(Projection, usize)> {
    let gram = &t.adjoint() * t;
    let cut = delta * delta / 2.0;
    let p1 = spectral::spectral_projection_below(&gram, cut, algebra::DEFAULT_TOL)?;
    let compressed = &(p1.base() * &gram) * p1.base();
    if !(compressed.op_norm() < delta * delta) {
        return Err(Error::CertificateInvalid("kernel cut does not compress T*T below delta^2".into()));
    }
    let alg = AlgebraSpec::of_operator(t, Tail::None)?;
    let e = subprojection_in_ideal(&p1, &IdealSpec::FULL, &alg)?;
    let k = algebra::central_support(&e)[0];
    if !((t * e.base()).op_norm() < delta) {
        return Err(Error::CertificateInvalid("rank-one cut does not satisfy |TE| < delta".into()));
    }
    Ok((e, k))
}

/// Operator and norm for the `c_Φ = ∞` counterexample.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Counterexample {
    pub t: BlockOperator,
    pub spec: NormSpec,
    pub alg: AlgebraSpec,
    /// Centers `λ_k`, `k = 1..=K` (summand `k − 1`).
    pub centers: Vec<C64>,
}

/// Golden-angle spiral: `λ_k = (1 − 2^{−k}) e^{i k φ}`, `φ = π(3 − √5)`.
pub fn spiral_centers(count: usize) -> Vec<C64> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (1..=count)
        .map(|k| C64::from_polar(1.0 - 2f64.powi(-(k as i32)), golden * k as f64))
        .collect()
}

/// `T = ⊕_k λ_k I_{n_k}` on `K` summands with weights `2^k`, a divergent
/// tail, and Hilbert–Schmidt base norms.
pub fn counterexample_operator(k_max: usize, dims: &[usize]) -> Result<Counterexample> {
    if k_max < 2 {
        return Err(Error::InvalidSpec(format!("need K >= 2, got {k_max}")));
    }
    if dims.len() != k_max {
        return Err(Error::InvalidSpec(format!("need {k_max} dims, got {}", dims.len())));
    }
    let centers = spiral_centers(k_max);
    let blocks = dims
        .iter()
        .zip(&centers)
        .map(|(&d, &l)| CMat::identity(d, d) * l)
        .collect::<Vec<_>>();
    let t = BlockOperator::from_blocks(blocks)?;
    let alg = AlgebraSpec::new(dims.to_vec(), Tail::RepeatLast)?;
    let spec = NormSpec {
        base: vec![BaseNorm::Schatten { p: 2.0 }; k_max],
        weights: (1..=k_max).map(|k| 2f64.powi(k as i32)).collect(),
        agg: Aggregation::Sup,
        tail_weights: Some(TailWeights::Divergent),
    };
    Ok(Counterexample { t, spec, alg, centers })
}

/// Covering radius of `centers` inside the disk of radius `radius`,
/// estimated on a polar grid.
pub fn net_spacing(centers: &[C64], radius: f64) -> f64 {
    let (nr, nt) = (240, 720);
    let mut worst = 0.0f64;
    for i in 0..=nr {
        let r = radius * i as f64 / nr as f64;
        for j in 0..nt {
            let z = C64::from_polar(r, std::f64::consts::TAU * j as f64 / nt as f64);
            let d = centers.iter().map(|l| (z - l).norm()).fold(f64::INFINITY, f64::min);
            worst = worst.max(d);
        }
    }
    worst
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub phi_x: f64,
    /// max over k of `‖X Z_k‖ · 2^k / budget`; at most 1 when the bound holds.
    pub worst_block_ratio: f64,
    pub block_bound_ok: bool,
    pub n_components: usize,
    pub connected: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub budget: f64,
    pub delta: f64,
    pub net_spacing: f64,
    pub trials: usize,
    pub block_bound_passes: usize,
    pub connected_passes: usize,
    pub seed: u64,
    pub outcomes: Vec<TrialOutcome>,
}

impl CounterexampleReport {
    pub fn all_pass(&self) -> bool {
        self.block_bound_passes == self.trials && self.connected_passes == self.trials
    }
}

/// Connectivity scale: covering radius of the centers plus twice the
/// largest admissible block perturbation `2^{−1}`.
pub fn connectivity_delta(ce: &Counterexample) -> (f64, f64) {
    let k_max = ce.centers.len();
    let net = net_spacing(&ce.centers, 1.0 - 2f64.powi(-(k_max as i32)));
    (net + 2.0 * 0.5, net)
}

fn check_trial(ce: &Counterexample, x: &BlockOperator, budget: f64, delta: f64) -> Result<TrialOutcome> {
    let phi_x = norms::phi_eval(&ce.spec, x)?;
    if !(phi_x < budget) {
        return Err(Error::BudgetViolated { phi: phi_x, budget });
    }
    let mut worst = 0.0f64;
    let mut ok = true;
    for s in x.summands() {
        let k = (s.id + 1) as i32;
        let bound = 2f64.powi(-k) * budget;
        let nrm = linalg::op_norm(&s.block);
        ok &= nrm <= bound;
        worst = worst.max(nrm / bound);
    }
    let eigs = spectral::eigenvalues(&(&ce.t + x))?;
    let rep = spectral::spectrum_components(&eigs, delta);
    Ok(TrialOutcome {
        phi_x,
        worst_block_ratio: worst,
        block_bound_ok: ok,
        n_components: rep.n_components,
        connected: rep.n_components == 1,
    })
}

/// Check the counterexample against caller-supplied perturbations.
pub fn verify_counterexample_with(
    ce: &Counterexample,
    xs: &[BlockOperator],
    budget: f64,
) -> Result<CounterexampleReport> {
    if !(budget < 1.0 && budget > 0.0) {
        return Err(Error::BudgetNotLessThanOne(budget));
    }
    let (delta, net) = connectivity_delta(ce);
    let outcomes = xs
        .iter()
        .map(|x| check_trial(ce, x, budget, delta))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(budget, delta, net, 0, outcomes))
}

fn summarize(budget: f64, delta: f64, net: f64, seed: u64, outcomes: Vec<TrialOutcome>) -> CounterexampleReport {
    CounterexampleReport {
        budget,
        delta,
        net_spacing: net,
        trials: outcomes.len(),
        block_bound_passes: outcomes.iter().filter(|o| o.block_bound_ok).count(),
        connected_passes: outcomes.iter().filter(|o| o.connected).count(),
        seed,
        outcomes,
    }
}

/// Per-trial seed derived from the run seed.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    seed ^ (trial as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Random perturbation: complex Gaussian blocks rescaled so `Φ(X) = target`.
pub fn random_perturbation(ce: &Counterexample, target: f64, seed: u64) -> Result<BlockOperator> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = ce.t.map_blocks(|b| linalg::gaussian(&mut rng, b.nrows(), b.nrows()));
    let phi = norms::phi_eval(&ce.spec, &x)?;
    Ok(x.scale(c(target / phi, 0.0)))
}

/// Sample `trials` perturbations with `Φ(X) = 0.99 · budget` and check both
/// the blockwise bound `‖X Z_k‖ ≤ 2^{−k}·budget` and δ-connectivity of `σ(T + X)`.
pub fn verify_counterexample(
    ce: &Counterexample,
    trials: usize,
    budget: f64,
    seed: u64,
) -> Result<CounterexampleReport> {
    if !(budget < 1.0 && budget > 0.0) {
        return Err(Error::BudgetNotLessThanOne(budget));
    }
    let (delta, net) = connectivity_delta(ce);
    let outcomes = (0..trials)
        .into_par_iter()
        .map(|i| {
            let x = random_perturbation(ce, 0.99 * budget, trial_seed(seed, i))?;
            check_trial(ce, &x, budget, delta)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(budget, delta, net, seed, outcomes))
}
