//! Continuous functions on compact subsets of the real line.
//!
//! For `X ⊂ ℝ` compact, `C(X)` functions with disconnected range are dense
//! exactly when `X` is not a finite union of disjoint closed intervals. The
//! constructive half lives in [`cfun_disconnect`]; the obstruction for finite
//! unions is [`nondensity_witness`].
//!
//! Sets are stored as sorted closed intervals plus isolated points. A Cantor
//! generator marks a limit object of which only the depth-`d` stage is
//! stored; piece diameters and clopen windows refer to that stage.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, C64};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    Cantor { depth: u32, ratio: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompactRealSet {
    #[serde(default)]
    pub intervals: Vec<[f64; 2]>,
    #[serde(default)]
    pub points: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<Generator>,
}

/// Depth-`depth` stage of the middle-gap Cantor construction on `[0, 1]`.
pub fn cantor_stage(depth: u32, ratio: f64) -> Vec<[f64; 2]> {
    let mut ivs = vec![[0.0, 1.0]];
    for _ in 0..depth {
        ivs = ivs
            .iter()
            .flat_map(|&[a, b]| {
                let w = ratio * (b - a);
                [[a, a + w], [b - w, b]]
            })
            .collect();
    }
    ivs
}

impl CompactRealSet {
    pub fn new(intervals: Vec<[f64; 2]>, points: Vec<f64>) -> Result<Self> {
        let mut x = CompactRealSet { intervals, points, generator: None };
        x.normalize()?;
        Ok(x)
    }

    pub fn cantor(depth: u32, ratio: f64) -> Result<Self> {
        let mut x = CompactRealSet { intervals: vec![], points: vec![], generator: Some(Generator::Cantor { depth, ratio }) };
        x.normalize()?;
        Ok(x)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mut x: CompactRealSet = serde_json::from_str(s)?;
        x.normalize()?;
        Ok(x)
    }

    /// Sort, fill in a generator stage if none is stored, and validate.
    pub fn normalize(&mut self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if let Some(Generator::Cantor { depth, ratio }) = self.generator {
            if depth < 1 || !(ratio > 0.0 && ratio < 0.5) {
                return bad(format!("cantor generator needs depth >= 1 and ratio in (0, 1/2), got {depth}, {ratio}"));
            }
            if depth > 20 {
                return bad(format!("cantor depth {depth} is too large to store"));
            }
            if self.intervals.is_empty() {
                self.intervals = cantor_stage(depth, ratio);
            }
        }
        if self.intervals.iter().flatten().chain(&self.points).any(|v| !v.is_finite()) {
            return bad("set endpoints must be finite".into());
        }
        if let Some(iv) = self.intervals.iter().find(|iv| !(iv[0] < iv[1])) {
            return bad(format!("interval [{}, {}] must have a < b", iv[0], iv[1]));
        }
        self.intervals.sort_by(|a, b| a[0].total_cmp(&b[0]));
        self.points.sort_by(f64::total_cmp);
        if self.intervals.is_empty() && self.points.is_empty() {
            return bad("set is empty".into());
        }
        let atoms = self.atoms();
        for w in atoms.windows(2) {
            if !(w[0].1 < w[1].0) {
                return bad(format!("pieces [{}, {}] and [{}, {}] overlap or touch", w[0].0, w[0].1, w[1].0, w[1].1));
            }
        }
        Ok(())
    }

    /// Intervals and points (as degenerate intervals), sorted.
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        let mut a: Vec<(f64, f64)> = self.intervals.iter().map(|iv| (iv[0], iv[1])).chain(self.points.iter().map(|&p| (p, p))).collect();
        a.sort_by(|x, y| x.0.total_cmp(&y.0));
        a
    }

    pub fn min(&self) -> f64 {
        self.atoms()[0].0
    }

    pub fn max(&self) -> f64 {
        self.atoms().last().expect("nonempty").1
    }

    pub fn contains(&self, t: f64) -> bool {
        self.atoms().iter().any(|&(a, b)| a <= t && t <= b)
    }

    /// More than one point.
    pub fn is_nontrivial(&self) -> bool {
        !self.intervals.is_empty() || self.points.len() > 1
    }

    pub fn is_finite_interval_union(&self) -> bool {
        self.points.is_empty() && self.generator.is_none()
    }
}

/// A clopen subset `X ∩ (lo, hi)` with `lo, hi ∉ X`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    pub atoms: Vec<(f64, f64)>,
    pub diam: f64,
}

impl Piece {
    fn of(x: &CompactRealSet, lo: f64, hi: f64) -> Piece {
        let atoms: Vec<(f64, f64)> = x.atoms().into_iter().filter(|&(a, b)| a > lo && b < hi).collect();
        let diam = atoms.last().map_or(0.0, |l| l.1) - atoms.first().map_or(0.0, |f| f.0);
        Piece { lo, hi, atoms, diam }
    }

    pub fn min(&self) -> f64 {
        self.atoms[0].0
    }

    pub fn max(&self) -> f64 {
        self.atoms.last().expect("nonempty piece").1
    }

    /// The window endpoints avoid `X` and every atom is inside or outside it.
    pub fn is_clopen_in(&self, x: &CompactRealSet) -> bool {
        !x.contains(self.lo)
            && !x.contains(self.hi)
            && !self.atoms.is_empty()
            && x.atoms().iter().all(|&(a, b)| (a > self.lo && b < self.hi) || b < self.lo || a > self.hi)
    }
}

/// Cut points `c₁ > c₂ > …`: each is the midpoint of the largest gap of `X`
/// left of the previous cut (rightmost on ties).
pub fn cut_chain(x: &CompactRealSet, max_cuts: usize) -> Vec<f64> {
    let atoms = x.atoms();
    let gaps: Vec<(f64, f64)> = atoms.windows(2).map(|w| (w[0].1, w[1].0)).collect();
    let mut cuts = Vec::new();
    let mut bound = f64::INFINITY;
    while cuts.len() < max_cuts {
        let best = gaps
            .iter()
            .filter(|g| g.1 < bound)
            .fold(None::<(f64, f64)>, |acc, &g| match acc {
                Some(a) if a.1 - a.0 > g.1 - g.0 => Some(a),
                _ => Some(g),
            });
        let Some((u, v)) = best else { break };
        let m = 0.5 * (u + v);
        cuts.push(m);
        bound = m;
    }
    cuts
}

/// `n` clopen pieces whose diameters shrink: `n` copies of an isolated point
/// if there is one, else the slabs between consecutive cut points.
pub fn clopen_small_pieces(x: &CompactRealSet, n: usize) -> Result<Vec<Piece>> {
    if x.is_finite_interval_union() {
        return Err(Error::FiniteUnion);
    }
    if n == 0 {
        return Ok(vec![]);
    }
    if let Some(&p) = x.points.first() {
        let atoms = x.atoms();
        let near = atoms
            .iter()
            .filter(|a| !(a.0 == p && a.1 == p))
            .map(|&(a, b)| if b < p { p - b } else { a - p })
            .fold(f64::INFINITY, f64::min);
        let half = if near.is_finite() { near / 2.0 } else { 1.0 };
        return Ok(vec![Piece::of(x, p - half, p + half); n]);
    }
    let cuts = cut_chain(x, n);
    if cuts.len() < n {
        return Err(Error::InsufficientGaps(cuts.len()));
    }
    Ok(pieces_from_cuts(x, &cuts))
}

fn pieces_from_cuts(x: &CompactRealSet, cuts: &[f64]) -> Vec<Piece> {
    let top = x.max() + 1.0;
    let mut prev = top;
    cuts.iter()
        .map(|&cut| {
            let p = Piece::of(x, cut, prev);
            prev = cut;
            p
        })
        .collect()
}

/// Continuous piecewise-linear function through `(breakpoints[i], values[i])`,
/// constant beyond the end breakpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PLFunction {
    pub breakpoints: Vec<f64>,
    pub values: Vec<C64>,
}

impl PLFunction {
    pub fn new(breakpoints: Vec<f64>, values: Vec<C64>) -> Result<Self> {
        let f = PLFunction { breakpoints, values };
        f.validate()?;
        Ok(f)
    }

    pub fn constant(a: f64, b: f64, v: C64) -> Self {
        PLFunction { breakpoints: vec![a, b], values: vec![v, v] }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: PLFunction = serde_json::from_str(s)?;
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if self.breakpoints.is_empty() || self.breakpoints.len() != self.values.len() {
            return Err(Error::InvalidSpec("need as many values as breakpoints, at least one".into()));
        }
        if self.breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidSpec("breakpoints must be strictly increasing".into()));
        }
        if self.breakpoints.iter().any(|b| !b.is_finite()) || self.values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::InvalidSpec("breakpoints and values must be finite".into()));
        }
        Ok(())
    }

    /// Breakpoints reach from `min X` to `max X`.
    pub fn covers(&self, x: &CompactRealSet) -> bool {
        self.breakpoints[0] <= x.min() && *self.breakpoints.last().unwrap() >= x.max()
    }

    pub fn eval(&self, t: f64) -> C64 {
        let bp = &self.breakpoints;
        let n = bp.len();
        if t <= bp[0] {
            return self.values[0];
        }
        if t >= bp[n - 1] {
            return self.values[n - 1];
        }
        let i = bp.partition_point(|&b| b <= t) - 1;
        let s = (t - bp[i]) / (bp[i + 1] - bp[i]);
        self.values[i] * (1.0 - s) + self.values[i + 1] * s
    }

    /// Largest slope over segments meeting the interior of an interval of `X`.
    pub fn lipschitz_on(&self, x: &CompactRealSet) -> f64 {
        let mut l = 0.0f64;
        for w in 0..self.breakpoints.len().saturating_sub(1) {
            let (u, v) = (self.breakpoints[w], self.breakpoints[w + 1]);
            if x.intervals.iter().any(|iv| iv[0] < v && iv[1] > u) {
                l = l.max((self.values[w + 1] - self.values[w]).norm() / (v - u));
            }
        }
        l
    }

    /// Pointwise sum on the merged breakpoints.
    pub fn add(&self, other: &PLFunction) -> PLFunction {
        let bp = merged(&self.breakpoints, &other.breakpoints);
        let values = bp.iter().map(|&t| self.eval(t) + other.eval(t)).collect();
        PLFunction { breakpoints: bp, values }
    }

    /// Image of `X` as segments (points give degenerate segments).
    pub fn image_segments(&self, atoms: &[(f64, f64)]) -> Vec<(C64, C64)> {
        let mut out = Vec::new();
        for &(a, b) in atoms {
            if a == b {
                let v = self.eval(a);
                out.push((v, v));
                continue;
            }
            let mut knots = vec![a];
            knots.extend(self.breakpoints.iter().copied().filter(|&t| t > a && t < b));
            knots.push(b);
            out.extend(knots.windows(2).map(|w| (self.eval(w[0]), self.eval(w[1]))));
        }
        out
    }
}

fn merged(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = a.iter().chain(b).copied().collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// `sup_{t ∈ atoms} |f(t) − g(t)|`, exact: on each interval `|f − g|` is the
/// modulus of a PL function, so its max sits at a breakpoint or an endpoint.
pub fn sup_distance_on(f: &PLFunction, g: &PLFunction, atoms: &[(f64, f64)]) -> f64 {
    let bp = merged(&f.breakpoints, &g.breakpoints);
    let mut m = 0.0f64;
    for &(a, b) in atoms {
        for t in std::iter::once(a).chain(bp.iter().copied().filter(|&t| t > a && t < b)).chain(std::iter::once(b)) {
            m = m.max((f.eval(t) - g.eval(t)).norm());
        }
    }
    m
}

pub fn sup_distance(f: &PLFunction, g: &PLFunction, x: &CompactRealSet) -> f64 {
    sup_distance_on(f, g, &x.atoms())
}

/// A PL function within `tol` of `f`; PL input is returned unchanged.
pub fn pl_approximate(f: &PLFunction, tol: f64) -> Result<PLFunction> {
    if !(tol > 0.0) {
        return Err(Error::InvalidSpec(format!("tol must be positive, got {tol}")));
    }
    f.validate()?;
    Ok(f.clone())
}

/// Linear interpolant of `f` on `[a, b]` with step at most `h`.
pub fn pl_sample<F: Fn(f64) -> C64>(f: F, a: f64, b: f64, h: f64) -> Result<PLFunction> {
    if !(h > 0.0 && a < b) {
        return Err(Error::InvalidSpec("need h > 0 and a < b".into()));
    }
    let m = ((b - a) / h).ceil() as usize;
    let bp: Vec<f64> = (0..=m).map(|i| if i == m { b } else { a + (b - a) * i as f64 / m as f64 }).collect();
    let values = bp.iter().map(|&t| f(t)).collect();
    PLFunction::new(bp, values)
}

pub fn point_segment_distance(z: C64, (p, q): (C64, C64)) -> f64 {
    let d = q - p;
    let len2 = d.norm_sqr();
    if len2 == 0.0 {
        return (z - p).norm();
    }
    let s = (((z - p) * d.conj()).re / len2).clamp(0.0, 1.0);
    (z - (p + d * s)).norm()
}

/// Exact distance between two segments.
pub fn segment_distance(a: (C64, C64), b: (C64, C64)) -> f64 {
    let cross = |u: C64, v: C64| u.re * v.im - u.im * v.re;
    let (d1, d2) = (a.1 - a.0, b.1 - b.0);
    let den = cross(d1, d2);
    if den != 0.0 {
        let s = cross(b.0 - a.0, d2) / den;
        let t = cross(b.0 - a.0, d1) / den;
        if (0.0..=1.0).contains(&s) && (0.0..=1.0).contains(&t) {
            return 0.0;
        }
    }
    [
        point_segment_distance(a.0, b),
        point_segment_distance(a.1, b),
        point_segment_distance(b.0, a),
        point_segment_distance(b.1, a),
    ]
    .into_iter()
    .fold(f64::INFINITY, f64::min)
}

pub fn clearance(z: C64, segments: &[(C64, C64)]) -> f64 {
    segments.iter().map(|&s| point_segment_distance(z, s)).fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffRange {
    pub lambda: C64,
    pub clearance: f64,
}

/// A point within `tol` of `target` and off the union of `segments`: the
/// best of a deterministic golden-spiral sample of the disk, refined until
/// the clearance is positive.
pub fn offrange_from_segments(segments: &[(C64, C64)], target: C64, tol: f64) -> Result<OffRange> {
    if !(tol > 0.0) {
        return Err(Error::InvalidSpec(format!("tol must be positive, got {tol}")));
    }
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let mut m = 256usize;
    while m <= 1 << 16 {
        let best = (0..m)
            .map(|j| {
                let r = tol * ((j as f64 + 0.5) / m as f64).sqrt();
                let z = target + C64::from_polar(r, golden * j as f64);
                OffRange { lambda: z, clearance: clearance(z, segments) }
            })
            .fold(None::<OffRange>, |acc, o| match acc {
                Some(a) if a.clearance >= o.clearance => Some(a),
                _ => Some(o),
            })
            .expect("m > 0");
        if best.clearance > 0.0 {
            return Ok(best);
        }
        m *= 4;
    }
    Err(Error::ExhaustedSamples)
}

/// `offrange_from_segments` against the image of `g` on `X`.
pub fn offrange_lambda(g: &PLFunction, x: &CompactRealSet, target: C64, tol: f64) -> Result<OffRange> {
    offrange_from_segments(&g.image_segments(&x.atoms()), target, tol)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CfunCertificate {
    pub g: PLFunction,
    pub lambda: C64,
    pub t0: f64,
    pub piece: Piece,
    /// Exact `‖g − f‖_∞` on `X`.
    pub sup_error: f64,
    /// Exact distance from `λ` to the image of `g` on `X ∖ X₀`.
    pub clearance: f64,
    pub eps: f64,
}

/// Candidate pieces, in order: every slab of the cut chain, then the part
/// left of the last cut. For a set with an isolated point, that point.
fn candidate_pieces(x: &CompactRealSet) -> Result<Vec<Piece>> {
    if !x.points.is_empty() {
        return clopen_small_pieces(x, 1);
    }
    let cuts = cut_chain(x, usize::MAX);
    let mut pieces = pieces_from_cuts(x, &cuts);
    if let Some(&last) = cuts.last() {
        pieces.push(Piece::of(x, x.min() - 1.0, last));
    }
    Ok(pieces)
}

/// A PL `g` with `‖g − f‖_∞ < ε` on `X` whose range on `X` has the isolated
/// component `{λ}`.
pub fn cfun_disconnect(x: &CompactRealSet, f: &PLFunction, eps: f64) -> Result<CfunCertificate> {
    if x.is_finite_interval_union() {
        return Err(Error::FiniteUnion);
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidSpec(format!("eps must be positive, got {eps}")));
    }
    if !f.covers(x) {
        return Err(Error::InvalidSpec("function breakpoints must cover [min X, max X]".into()));
    }
    let big_g = pl_approximate(f, eps / 3.0)?;
    let third = eps / 3.0;

    let mut chosen = None;
    for piece in candidate_pieces(x)? {
        let t0 = nearest_in(&piece.atoms, 0.5 * (piece.min() + piece.max()));
        let flat = PLFunction::constant(x.min(), x.max(), big_g.eval(t0));
        if sup_distance_on(&big_g, &flat, &piece.atoms) < third {
            chosen = Some((piece, t0));
            break;
        }
    }
    let (piece, t0) = chosen.ok_or(Error::NoSmallPiece(eps))?;

    let rest: Vec<(f64, f64)> = x.atoms().into_iter().filter(|a| !piece.atoms.contains(a)).collect();
    let segments = big_g.image_segments(&rest);
    let off = offrange_from_segments(&segments, f.eval(t0), third)?;
    let g = splice_constant(&big_g, &rest, &piece, off.lambda);

    let sup_error = sup_distance(&g, f, x);
    let clear = clearance(off.lambda, &g.image_segments(&rest));
    if !(sup_error < eps) {
        return Err(Error::CertificateInvalid(format!("sup |g - f| = {sup_error:e} is not below {eps:e}")));
    }
    if !(clear > 0.0) {
        return Err(Error::CertificateInvalid("lambda touches the rest of the range".into()));
    }
    Ok(CfunCertificate { g, lambda: off.lambda, t0, piece, sup_error, clearance: clear, eps })
}

fn nearest_in(atoms: &[(f64, f64)], t: f64) -> f64 {
    atoms
        .iter()
        .map(|&(a, b)| t.clamp(a, b))
        .min_by(|p, q| (p - t).abs().total_cmp(&(q - t).abs()))
        .expect("nonempty piece")
}

/// `G` off the piece, `λ` on it, linear across the two adjacent gaps.
fn splice_constant(big_g: &PLFunction, rest: &[(f64, f64)], piece: &Piece, lambda: C64) -> PLFunction {
    let (m0, m1) = (piece.min(), piece.max());
    let below = rest.iter().filter(|a| a.1 < m0).map(|a| a.1).fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |x| x.max(v))));
    let above = rest.iter().filter(|a| a.0 > m1).map(|a| a.0).fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |x| x.min(v))));
    let mut pts: Vec<(f64, C64)> = big_g
        .breakpoints
        .iter()
        .zip(&big_g.values)
        .filter(|(&t, _)| below.is_some_and(|lo| t <= lo) || above.is_some_and(|hi| t >= hi))
        .map(|(&t, &v)| (t, v))
        .collect();
    for end in [below, above].into_iter().flatten() {
        pts.push((end, big_g.eval(end)));
    }
    pts.push((m0, lambda));
    pts.push((m1, lambda));
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.dedup_by(|a, b| a.0 == b.0);
    PLFunction { breakpoints: pts.iter().map(|p| p.0).collect(), values: pts.iter().map(|p| p.1).collect() }
}

/// `X = ∪_{k=1}^n [2k, 2k+1]` and `f` equal to `2t − 5` on `[2, 3]` and to
/// `i(2t − 4k − 1)` on `[2k, 2k+1]` for `k ≥ 2`; every piece of the range
/// passes through 0.
pub fn nondensity_witness(n: usize) -> Result<(CompactRealSet, PLFunction)> {
    if n == 0 {
        return Err(Error::InvalidSpec("need n >= 1".into()));
    }
    let intervals = (1..=n).map(|k| [2.0 * k as f64, 2.0 * k as f64 + 1.0]).collect();
    let x = CompactRealSet::new(intervals, vec![])?;
    let mut bp = Vec::new();
    let mut vals = Vec::new();
    for k in 1..=n {
        let (a, b) = (2.0 * k as f64, 2.0 * k as f64 + 1.0);
        bp.extend([a, b]);
        if k == 1 {
            vals.extend([c(2.0 * a - 5.0, 0.0), c(2.0 * b - 5.0, 0.0)]);
        } else {
            let kk = 4.0 * k as f64 + 1.0;
            vals.extend([c(0.0, 2.0 * a - kk), c(0.0, 2.0 * b - kk)]);
        }
    }
    Ok((x, PLFunction::new(bp, vals)?))
}

/// Random PL function with `sup_X |h| = norm`, breakpoints at the atom
/// endpoints plus `extra` uniform interior points.
pub fn random_pl_perturbation<R: Rng + ?Sized>(x: &CompactRealSet, norm: f64, extra: usize, rng: &mut R) -> PLFunction {
    let (lo, hi) = (x.min(), x.max());
    let mut bp: Vec<f64> = x.atoms().iter().flat_map(|&(a, b)| [a, b]).collect();
    bp.extend((0..extra).map(|_| rng.random_range(lo..=hi)));
    bp.sort_by(f64::total_cmp);
    bp.dedup();
    let values: Vec<C64> = bp.iter().map(|_| C64::from_polar(rng.random::<f64>(), rng.random_range(0.0..std::f64::consts::TAU))).collect();
    let h = PLFunction { breakpoints: bp.clone(), values };
    let zero = PLFunction::constant(lo, hi.max(lo + 1.0), c(0.0, 0.0));
    let m = sup_distance(&h, &zero, x);
    let scale = if m > 0.0 { norm / m } else { 0.0 };
    PLFunction { breakpoints: bp, values: h.values.iter().map(|v| v * scale).collect() }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RangeReport {
    pub n_components: usize,
    /// Smallest distance between samples of different components; 0 when connected.
    pub gap: f64,
    pub threshold: f64,
    pub samples: usize,
}

/// Sample `g` on `X` at step at most `resolution` and cluster the image.
/// The samples of one interval form a pre-linked chain; chains and points
/// link when some samples are within `3 · Lip · resolution`.
pub fn range_components(g: &PLFunction, x: &CompactRealSet, resolution: f64) -> Result<RangeReport> {
    if !(resolution > 0.0) {
        return Err(Error::InvalidSpec(format!("resolution must be positive, got {resolution}")));
    }
    let threshold = 3.0 * g.lipschitz_on(x) * resolution;
    let chains: Vec<Vec<C64>> = x
        .atoms()
        .iter()
        .map(|&(a, b)| {
            let m = ((b - a) / resolution).ceil().max(0.0) as usize;
            if m == 0 {
                vec![g.eval(a)]
            } else {
                (0..=m).map(|i| g.eval(a + (b - a) * i as f64 / m as f64)).collect()
            }
        })
        .collect();
    let boxes: Vec<(f64, f64, f64, f64)> = chains
        .iter()
        .map(|ch| {
            ch.iter().fold((f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY), |b, z| {
                (b.0.min(z.re), b.1.max(z.re), b.2.min(z.im), b.3.max(z.im))
            })
        })
        .collect();
    let box_gap = |i: usize, j: usize| {
        let (a, b) = (boxes[i], boxes[j]);
        let dx = (a.0 - b.1).max(b.0 - a.1).max(0.0);
        let dy = (a.2 - b.3).max(b.2 - a.3).max(0.0);
        dx.hypot(dy)
    };
    let chain_dist = |i: usize, j: usize, stop: f64| {
        let mut best = f64::INFINITY;
        for p in &chains[i] {
            for q in &chains[j] {
                best = best.min((p - q).norm());
                if best <= stop {
                    return best;
                }
            }
        }
        best
    };

    let n = chains.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if box_gap(i, j) > threshold || find(&mut parent, i) == find(&mut parent, j) {
                continue;
            }
            if chain_dist(i, j, threshold) <= threshold {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    let mut distinct = roots.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let mut gap = 0.0;
    if distinct.len() > 1 {
        gap = f64::INFINITY;
        for i in 0..n {
            for j in i + 1..n {
                if roots[i] != roots[j] && box_gap(i, j) < gap {
                    gap = gap.min(chain_dist(i, j, 0.0));
                }
            }
        }
    }
    Ok(RangeReport { n_components: distinct.len(), gap, threshold, samples: chains.iter().map(Vec::len).sum() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_intervals() -> CompactRealSet {
        CompactRealSet::new(vec![[0.0, 1.0], [2.0, 3.0]], vec![]).unwrap()
    }

    #[test]
    fn finite_union_flag() {
        assert!(two_intervals().is_finite_interval_union());
        assert!(!CompactRealSet::new(vec![[0.0, 1.0]], vec![2.0]).unwrap().is_finite_interval_union());
        assert!(!CompactRealSet::cantor(6, 1.0 / 3.0).unwrap().is_finite_interval_union());
    }

    #[test]
    fn set_validation_and_json() {
        assert!(CompactRealSet::new(vec![[0.0, 1.0], [1.0, 2.0]], vec![]).is_err());
        assert!(CompactRealSet::new(vec![[0.0, 1.0]], vec![0.5]).is_err());
        assert!(CompactRealSet::new(vec![], vec![]).is_err());
        assert!(CompactRealSet::cantor(3, 0.5).is_err());
        let x = CompactRealSet::from_json(r#"{"intervals":[],"points":[],"generator":{"cantor":{"depth":6,"ratio":0.3333}}}"#).unwrap();
        assert_eq!(x.intervals.len(), 64);
        let y = CompactRealSet::from_json(r#"{"intervals":[[2,3],[0,1]],"points":[5]}"#).unwrap();
        assert_eq!(y.intervals[0], [0.0, 1.0]);
        let s = serde_json::to_string(&y).unwrap();
        assert_eq!(CompactRealSet::from_json(&s).unwrap(), y);
    }

    #[test]
    fn isolated_point_pieces() {
        let x = CompactRealSet::new(vec![[0.0, 1.0]], vec![2.0]).unwrap();
        let ps = clopen_small_pieces(&x, 3).unwrap();
        assert_eq!(ps.len(), 3);
        assert!(ps.iter().all(|p| p.atoms == vec![(2.0, 2.0)] && p.diam == 0.0 && p.is_clopen_in(&x)));
        assert!(matches!(clopen_small_pieces(&two_intervals(), 2), Err(Error::FiniteUnion)));
    }

    #[test]
    fn cantor_pieces_match_gap_enumeration() {
        let x = CompactRealSet::cantor(6, 1.0 / 3.0).unwrap();
        let ps = clopen_small_pieces(&x, 4).unwrap();
        // the chain follows the left end, so slab k is one stage interval of depth k
        for (k, p) in ps.iter().enumerate() {
            assert!(p.is_clopen_in(&x));
            let exact = 3f64.powi(-(k as i32 + 1));
            assert!((p.diam - exact).abs() < 1e-12, "piece {k}: {} vs {exact}", p.diam);
        }
        assert!(ps.windows(2).all(|w| w[1].diam < w[0].diam));
        // oracle: enumerate gaps of the stage directly
        let st = cantor_stage(6, 1.0 / 3.0);
        let gaps: Vec<(f64, f64)> = st.windows(2).map(|w| (w[0][1], w[1][0])).collect();
        let widest = gaps.iter().fold((0.0, 0.0), |a, g| if g.1 - g.0 > a.1 - a.0 { *g } else { a });
        assert!((cut_chain(&x, 1)[0] - 0.5 * (widest.0 + widest.1)).abs() < 1e-15);
        assert!(matches!(clopen_small_pieces(&CompactRealSet::cantor(2, 0.3).unwrap(), 5), Err(Error::InsufficientGaps(2))));
    }

    #[test]
    fn accumulating_gaps_cluster_at_left() {
        let x = CompactRealSet::cantor(10, 0.2).unwrap();
        let ps = clopen_small_pieces(&x, 8).unwrap();
        let mins: Vec<f64> = ps.iter().map(|p| p.min()).collect();
        assert!(mins.windows(2).all(|w| w[1] < w[0]));
        assert!(ps.last().unwrap().max() < 1e-4);
    }

    #[test]
    fn pl_eval_and_sup() {
        let f = PLFunction::new(vec![0.0, 1.0, 3.0], vec![c(0.0, 0.0), c(1.0, 1.0), c(3.0, -1.0)]).unwrap();
        assert_eq!(f.eval(0.5), c(0.5, 0.5));
        assert_eq!(f.eval(2.0), c(2.0, 0.0));
        assert_eq!(f.eval(-1.0), c(0.0, 0.0));
        let g = PLFunction::constant(0.0, 3.0, c(0.0, 0.0));
        let x = two_intervals();
        // |f| peaks at t = 3 with |3 − i|
        assert!((sup_distance(&f, &g, &x) - 10f64.sqrt()).abs() < 1e-15);
        assert!(PLFunction::new(vec![1.0, 0.0], vec![c(0.0, 0.0); 2]).is_err());
        assert_eq!(pl_approximate(&f, 1e-3).unwrap(), f);
    }

    #[test]
    fn sampled_exponential_error_bound() {
        let h = 0.05;
        let g = pl_sample(|t| C64::from_polar(1.0, t), 0.0, 3.0, h).unwrap();
        let worst = (0..=30000).map(|i| i as f64 * 1e-4).map(|t| (g.eval(t) - C64::from_polar(1.0, t)).norm()).fold(0.0, f64::max);
        assert!(worst <= h * h / 8.0 * (1.0 + 1e-9));
    }

    #[test]
    fn offrange_examples() {
        let zero = [(c(0.0, 0.0), c(0.0, 0.0))];
        let o = offrange_from_segments(&zero, c(0.0, 0.0), 0.1).unwrap();
        assert!(o.lambda.norm() > 0.0 && o.lambda.norm() < 0.1);
        assert!((o.clearance - o.lambda.norm()).abs() < 1e-15);
        let seg = [(c(0.0, 0.0), c(1.0, 0.0))];
        let o = offrange_from_segments(&seg, c(0.5, 0.0), 0.1).unwrap();
        assert!((o.lambda - c(0.5, 0.0)).norm() < 0.1);
        assert!((o.clearance - o.lambda.im.abs()).abs() < 1e-15);
        assert!(point_segment_distance(c(0.5, 0.05), seg[0]) == 0.05);
    }

    #[test]
    fn dense_web_target() {
        // many segments through the target; the clearance stays positive
        let segs: Vec<(C64, C64)> = (0..200).map(|k| {
            let d = C64::from_polar(1.0, k as f64 * 0.0314);
            (-d, d)
        }).collect();
        let o = offrange_from_segments(&segs, c(0.0, 0.0), 0.01).unwrap();
        assert!(o.clearance > 0.0 && o.lambda.norm() < 0.01);
    }

    #[test]
    fn disconnect_interval_plus_point() {
        let x = CompactRealSet::new(vec![[0.0, 1.0]], vec![2.0]).unwrap();
        let f = PLFunction::new(vec![0.0, 2.0], vec![c(0.0, 0.0), c(2.0, 0.0)]).unwrap();
        let cert = cfun_disconnect(&x, &f, 0.1).unwrap();
        assert_eq!(cert.t0, 2.0);
        assert!((cert.lambda - c(2.0, 0.0)).norm() < 0.1 / 3.0);
        assert!(cert.sup_error < 0.1);
        for t in [0.0, 0.3, 1.0] {
            assert!((cert.g.eval(t) - f.eval(t)).norm() < 1e-15);
        }
        // oracle: exact distance from λ to the segment [0, 1]
        let exact = point_segment_distance(cert.lambda, (c(0.0, 0.0), c(1.0, 0.0)));
        assert!((cert.clearance - exact).abs() < 1e-15);
        let r = range_components(&cert.g, &x, 1e-3).unwrap();
        assert!(r.n_components >= 2);
        assert!(r.gap >= cert.clearance - 2e-3 * cert.g.lipschitz_on(&x));
    }

    #[test]
    fn disconnect_constant_on_cantor() {
        let x = CompactRealSet::cantor(8, 1.0 / 3.0).unwrap();
        let f = PLFunction::constant(0.0, 1.0, c(0.7, 0.2));
        let cert = cfun_disconnect(&x, &f, 0.05).unwrap();
        assert!(cert.lambda != c(0.7, 0.2));
        assert!(cert.sup_error < 0.05 && cert.clearance > 0.0);
        assert!(matches!(cfun_disconnect(&two_intervals(), &f, 0.1), Err(Error::FiniteUnion)));
    }

    #[test]
    fn witness_examples() {
        let (x, f) = nondensity_witness(1).unwrap();
        assert_eq!(x.intervals, vec![[2.0, 3.0]]);
        assert_eq!((f.eval(2.0), f.eval(3.0)), (c(-1.0, 0.0), c(1.0, 0.0)));
        let (x, f) = nondensity_witness(3).unwrap();
        for k in 2..=3 {
            let a = 2.0 * k as f64;
            assert_eq!((f.eval(a), f.eval(a + 1.0), f.eval(a + 0.5)), (c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)));
        }
        assert_eq!(range_components(&f, &x, 1e-3).unwrap().n_components, 1);
    }

    #[test]
    fn range_component_examples() {
        let x = two_intervals();
        let id = PLFunction::new(vec![0.0, 3.0], vec![c(0.0, 0.0), c(3.0, 0.0)]).unwrap();
        let r = range_components(&id, &x, 1e-3).unwrap();
        assert_eq!(r.n_components, 2);
        assert!((r.gap - 1.0).abs() < 1e-12);
        let k = PLFunction::constant(0.0, 3.0, c(1.0, 1.0));
        assert_eq!(range_components(&k, &x, 1e-3).unwrap().n_components, 1);
    }

    #[test]
    fn witness_perturbations_stay_connected() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for n in 1..=3 {
            let (x, f) = nondensity_witness(n).unwrap();
            for _ in 0..10 {
                let h = random_pl_perturbation(&x, 0.099, 6, &mut rng);
                let g = f.add(&h);
                assert!(sup_distance(&g, &f, &x) < 0.1);
                assert_eq!(range_components(&g, &x, 1e-3).unwrap().n_components, 1);
            }
        }
    }

    #[test]
    fn deterministic_output() {
        let x = CompactRealSet::cantor(6, 0.3).unwrap();
        let f = PLFunction::new(vec![0.0, 0.5, 1.0], vec![c(0.0, 0.0), c(0.3, 0.4), c(0.1, 0.0)]).unwrap();
        let a = cfun_disconnect(&x, &f, 0.05).unwrap();
        let b = cfun_disconnect(&x, &f, 0.05).unwrap();
        assert_eq!(serde_json::to_string(&a.g).unwrap(), serde_json::to_string(&b.g).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn single_interval_image_never_splits(seed in any::<u64>(), a in -5.0f64..5.0, len in 0.01f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = CompactRealSet::new(vec![[a, a + len]], vec![]).unwrap();
            let g = random_pl_perturbation(&x, 1.0, 5, &mut rng);
            prop_assert_eq!(range_components(&g, &x, 1e-2).unwrap().n_components, 1);
        }

        #[test]
        fn cantor_disconnect_holds(seed in any::<u64>(), depth in 5u32..9, ratio in 0.2f64..0.4, eps in 0.05f64..0.5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = CompactRealSet::cantor(depth, ratio).unwrap();
            let values = (0..5).map(|_| C64::from_polar(0.1 * rng.random::<f64>(), rng.random_range(0.0..6.3))).collect();
            let f = PLFunction::new(vec![0.0, 0.25, 0.5, 0.75, 1.0], values).unwrap();
            let lip = f.lipschitz_on(&x);
            prop_assume!(lip * ratio.powi(depth as i32) < eps / 3.0);
            let cert = cfun_disconnect(&x, &f, eps).unwrap();
            prop_assert!(cert.sup_error < eps && cert.clearance > 0.0);
            prop_assert!(cert.piece.is_clopen_in(&x));
        }

        #[test]
        fn segment_distance_matches_sampling(a in -2.0f64..2.0, b in -2.0f64..2.0, c0 in -2.0f64..2.0, d in -2.0f64..2.0) {
            let s1 = (c(a, b), c(b, -a));
            let s2 = (c(c0, d), c(d + 0.5, c0));
            let exact = segment_distance(s1, s2);
            let mut sampled = f64::INFINITY;
            for i in 0..=200 {
                let p = s1.0 + (s1.1 - s1.0) * (i as f64 / 200.0);
                sampled = sampled.min(point_segment_distance(p, s2));
            }
            prop_assert!(exact <= sampled + 1e-12);
            prop_assert!(sampled - exact <= (s1.1 - s1.0).norm() / 200.0 + 1e-12);
        }
    }
}
