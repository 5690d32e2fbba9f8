//! Invariant checks run by `spectool verify-suite`.

use clap::ValueEnum;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use spectool_core::algebra::{IdealSpec, OperatorFile, Tail};
use spectool_core::cfun::{self, CompactRealSet, PLFunction};
use spectool_core::linalg::{self, c, C64};
use spectool_core::norms::{self, TailWeights};
use spectool_core::riesz;
use spectool_core::sampling::{self, AxiomDeviations};
use spectool_core::{perturb, spectral, uppertri, BlockOperator, Error};

use crate::RunConfig;

/// Deliberate faults, each aimed at one invariant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// Replace Φ by the modulus of the (0,0) entry.
    BrokenNorm,
    /// Scale the certified perturbation by 1000 before re-checking it.
    InflatedPerturbation,
    /// Compare σ(T) for the full circulant, lower-left entry included.
    DroppedLowerLeft,
    /// Shrink the Riesz contour so it misses the isolated eigenvalue.
    MissedEigenvalue,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InvariantResult {
    pub name: String,
    pub pass: bool,
    pub trials: usize,
    pub failures: usize,
    pub detail: String,
    /// Case seeds of the first few failing inputs.
    pub offending: Vec<Offending>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Offending {
    pub case: usize,
    pub seed: u64,
    pub message: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub fault: Option<Fault>,
    pub results: Vec<InvariantResult>,
}

impl SuiteReport {
    pub fn all_pass(&self) -> bool {
        self.results.iter().all(|r| r.pass)
    }
}

const MAX_OFFENDING: usize = 5;

fn case_seed(seed: u64, invariant: u64, case: usize) -> u64 {
    perturb::trial_seed(seed ^ invariant.wrapping_mul(0xD1B5_4A32_D192_ED03), case)
}

/// Run `check` on `trials` seeded cases; `Ok(worst)` passes, `Err` fails.
fn run_invariant<F>(name: &str, seed: u64, tag: u64, trials: usize, mut check: F) -> InvariantResult
where
    F: FnMut(&mut ChaCha8Rng) -> Result<f64, String>,
{
    let mut worst = 0.0f64;
    let mut offending = Vec::new();
    let mut failures = 0;
    for case in 0..trials {
        let s = case_seed(seed, tag, case);
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        match check(&mut rng) {
            Ok(w) => worst = worst.max(w),
            Err(message) => {
                failures += 1;
                if offending.len() < MAX_OFFENDING {
                    offending.push(Offending { case, seed: s, message });
                }
            }
        }
    }
    let detail = match offending.first() {
        None => format!("worst {worst:.3e}"),
        Some(o) => format!("{failures} failing, first case {} seed {:#x}: {}", o.case, o.seed, o.message),
    };
    InvariantResult { name: name.into(), pass: failures == 0, trials, failures, detail, offending }
}

fn err(e: Error) -> String {
    e.to_string()
}

fn small_operator(rng: &mut ChaCha8Rng) -> BlockOperator {
    let n = rng.random_range(1..=3);
    sampling::random_operator(rng, n, 2..=8)
}

pub fn verify_suite(config: &RunConfig, trials: usize, fault: Option<Fault>) -> SuiteReport {
    let seed = config.seed;
    let axiom_tol = config.tol("axioms", 1e-9);
    let ut_tol = config.tol("ut", 1e-8);
    let riesz_tol = config.tol("riesz", 1e-8);
    let mut results = Vec::new();

    results.push(run_invariant("norm-axioms", seed, 1, trials, |rng| {
        let t = small_operator(rng);
        let spec = sampling::random_norm_spec(rng, t.summands().len(), 4.0);
        let dev = if fault == Some(Fault::BrokenNorm) {
            let eval = |y: &BlockOperator| y.block(0).map_or(0.0, |b| b[(0, 0)].norm());
            let base = eval(&t).max(f64::MIN_POSITIVE);
            AxiomDeviations { unitary: norms::unitary_invariance_deviation(eval, &t, 3, rng) / base, ..Default::default() }
        } else {
            sampling::axiom_deviations(rng, &spec, &t).map_err(err)?
        };
        if dev.max() <= axiom_tol {
            Ok(dev.max())
        } else {
            Err(format!("deviation {:.3e} > {axiom_tol:e}: {dev:?}", dev.max()))
        }
    }));

    results.push(run_invariant("c-phi-bounds", seed, 2, trials, |rng| {
        let t = small_operator(rng);
        let alg = sampling::algebra_of(&t);
        let spec = sampling::random_norm_spec(rng, alg.dims.len(), 4.0);
        let cp = norms::c_phi(&spec, &alg).map_err(err)?;
        let w_max = spec.weights.iter().copied().fold(0.0, f64::max);
        let dominating = norms::dominating_check(&spec, &alg).map_err(err)?;
        if cp == w_max && dominating {
            Ok(0.0)
        } else {
            Err(format!("c_phi {cp} vs max weight {w_max}, dominating {dominating}"))
        }
    }));

    results.push(run_invariant("disconnect-certificate", seed, 3, trials, |rng| {
        let t = small_operator(rng);
        let alg = sampling::algebra_of(&t);
        let spec = sampling::random_norm_spec(rng, alg.dims.len(), 4.0);
        let eps = [1e-1, 1e-2, 1e-3][rng.random_range(0..3)];
        let mut cert = perturb::disconnect(&t, eps, &spec, &IdealSpec::FULL, &alg).map_err(err)?;
        if fault == Some(Fault::InflatedPerturbation) {
            cert.x = cert.x.scale(c(1e3, 0.0));
            cert.phi_x = norms::phi_eval(&spec, &cert.x).map_err(err)?;
            cert.x_op_norm = cert.x.op_norm();
        }
        perturb::check_certificate(&cert).map_err(err)?;
        // independent recomputation of Φ(X) and of the split
        let phi = norms::phi_eval(&spec, &cert.x).map_err(err)?;
        let eigs = spectral::eigenvalues(&cert.perturbed(&t)).map_err(err)?;
        let rep = spectral::spectrum_components(&eigs, cert.eps0 / 2.0);
        if !(phi < eps) {
            return Err(format!("phi(X) = {phi:e} >= eps = {eps:e}"));
        }
        if !rep.is_disconnected() {
            return Err("recomputed spectrum is connected".into());
        }
        Ok(phi / eps)
    }));

    results.push(run_invariant("disconnect-rr0", seed, 4, trials, |rng| {
        let t = small_operator(rng);
        let eps = [1e-1, 1e-2, 1e-3][rng.random_range(0..3)];
        let cert = perturb::disconnect_rr0(&t, eps).map_err(err)?;
        let x_norm = cert.x.op_norm();
        if x_norm < eps && cert.components_after.is_disconnected() {
            Ok(x_norm / eps)
        } else {
            Err(format!("|X| = {x_norm:e}, components {}", cert.components_after.n_components))
        }
    }));

    results.push(run_invariant("riesz-weak-reduction", seed, 5, trials, |rng| {
        let t = small_operator(rng);
        let alg = sampling::algebra_of(&t);
        let spec = sampling::random_norm_spec(rng, alg.dims.len(), 4.0);
        let cert = perturb::disconnect(&t, 1e-2, &spec, &IdealSpec::FULL, &alg).map_err(err)?;
        let tx = cert.perturbed(&t);
        let eigs = spectral::eigenvalues(&tx).map_err(err)?;
        let mut ct = riesz::isolating_circle(&eigs, cert.isolated, 64).ok_or("no isolating circle")?;
        if fault == Some(Fault::MissedEigenvalue) {
            if let riesz::ContourKind::Circle { center, radius } = ct.kind {
                ct = riesz::Contour::circle(center + c(radius * 0.75, 0.0), radius * 0.1, 64);
            }
        }
        let out = riesz::riesz_idempotent(&tx, &ct).map_err(err)?;
        if out.residuals.is_witness(riesz_tol, tx.op_norm()) {
            Ok(out.residuals.idempotent.max(out.residuals.commutator))
        } else {
            Err(format!("residuals {:?}", out.residuals))
        }
    }));

    results.push(run_invariant("upper-triangular-spectrum", seed, 6, trials, |rng| {
        let b = sampling::random_ut_block(rng, 8, 8);
        let (spectrum, union) = if fault == Some(Fault::DroppedLowerLeft) {
            let ex = uppertri::shift_example(2 * rng.random_range(2..=4)).map_err(err)?;
            let mut u = linalg::eigenvalues(&ex.b.t1).map_err(err)?;
            u.extend(linalg::eigenvalues(&ex.b.t2).map_err(err)?);
            (spectral::eigenvalues(&ex.t).map_err(err)?, u)
        } else {
            let r = uppertri::ut_inclusion_check(&b, ut_tol).map_err(err)?;
            (r.spectrum, r.union)
        };
        let d = linalg::multiset_distance(&spectrum, &union);
        let flipped = uppertri::ut_inclusion_check(&uppertri::adjoint_flip(&b), ut_tol).map_err(err)?;
        if d <= ut_tol && flipped.holds {
            Ok(d.max(flipped.multiset_distance))
        } else {
            Err(format!("multiset distance {d:.3e} (adjoint {:.3e}) > {ut_tol:e}", flipped.multiset_distance))
        }
    }));

    results.push(run_invariant("divergent-tail-connected", seed, 7, trials.min(20), |rng| {
        let ce = perturb::counterexample_operator(6, &[1, 2, 1, 2, 1, 2]).map_err(err)?;
        if ce.spec.tail_weights != Some(TailWeights::Divergent) {
            return Err("counterexample lost its divergent tail".into());
        }
        let budget = rng.random_range(0.1..0.99);
        let x = perturb::random_perturbation(&ce, 0.99 * budget, rng.random()).map_err(err)?;
        let rep = perturb::verify_counterexample_with(&ce, &[x], budget).map_err(err)?;
        let o = &rep.outcomes[0];
        if o.block_bound_ok && o.connected {
            Ok(o.worst_block_ratio)
        } else {
            Err(format!("block ratio {:.3}, components {}", o.worst_block_ratio, o.n_components))
        }
    }));

    results.push(run_invariant("cfun-disconnect", seed, 8, trials, |rng| {
        let depth = rng.random_range(4..=7);
        let x = CompactRealSet::cantor(depth, rng.random_range(0.2..0.4)).map_err(err)?;
        let knots: Vec<f64> = (0..=6).map(|i| x.min() + (x.max() - x.min()) * i as f64 / 6.0).collect();
        let values: Vec<C64> = knots.iter().map(|_| c(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1))).collect();
        let f = PLFunction::new(knots, values).map_err(err)?;
        let eps = 0.05;
        let cert = cfun::cfun_disconnect(&x, &f, eps).map_err(err)?;
        let sup = cfun::sup_distance(&cert.g, &f, &x);
        if sup < eps && cert.clearance > 0.0 && cert.piece.is_clopen_in(&x) {
            Ok(sup / eps)
        } else {
            Err(format!("sup error {sup:e}, clearance {:e}", cert.clearance))
        }
    }));

    results.push(run_invariant("operator-json-round-trip", seed, 9, trials, |rng| {
        let t = small_operator(rng);
        let file = OperatorFile { operator: t.clone(), tail: Tail::None };
        let back = OperatorFile::from_json(&file.to_json().map_err(err)?).map_err(err)?;
        if back.operator == t {
            Ok(0.0)
        } else {
            Err("operator changed after a JSON round trip".into())
        }
    }));

    SuiteReport { seed, fault, results }
}
