//! Continued fractions, measured irrationality exponents, and the circle /
//! four-point lower-bound certificates that feed the oscillatory-cancellation
//! machinery.
//!
//! Constants are empirical fits over finite search ranges, reported together
//! with their witnesses.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::fit_line;
use crate::shift::{SymbolicSystem, TwoSidedPoint};
use crate::suspension::{
    four_point_chain, stable_leg, temporal_range, unstable_leg, RoofFunction,
};

/// Stop the expansion when the fractional part drops below float resolution.
const CF_EPS: f64 = 1e-12;

/// Continued fraction expansion to `depth` partial quotients.
/// Terminating early means the input is rational (within float resolution).
pub fn continued_fraction(theta: f64, depth: usize) -> Result<Vec<i64>> {
    let (q, terminated) = continued_fraction_full(theta, depth);
    if terminated {
        Err(Error::RationalTerminated { terms: q.len() })
    } else {
        Ok(q)
    }
}

/// Expansion plus a termination flag (quotients are still returned for a
/// rational input).
pub fn continued_fraction_full(theta: f64, depth: usize) -> (Vec<i64>, bool) {
    let mut quotients = Vec::with_capacity(depth);
    let mut x = theta;
    for _ in 0..depth {
        let a = x.floor();
        quotients.push(a as i64);
        let frac = x - a;
        if frac.abs() < CF_EPS {
            return (quotients, true);
        }
        x = 1.0 / frac;
    }
    (quotients, false)
}

/// Convergents `p_k / q_k` of a partial-quotient sequence.
pub fn convergents(quotients: &[i64]) -> Vec<(i64, i64)> {
    let mut out = Vec::with_capacity(quotients.len());
    let (mut p0, mut q0) = (1i64, 0i64);
    let (mut p1, mut q1) = (quotients.first().copied().unwrap_or(0), 1i64);
    out.push((p1, q1));
    for &a in &quotients[1..] {
        let p2 = a.saturating_mul(p1).saturating_add(p0);
        let q2 = a.saturating_mul(q1).saturating_add(q0);
        out.push((p2, q2));
        p0 = p1;
        q0 = q1;
        p1 = p2;
        q1 = q2;
    }
    out
}

/// Measured lower bound `|q theta - p| >= c q^{-gamma}` over `1 <= q <= q_max`.
#[derive(Debug, Clone, Serialize)]
pub struct DiophantineCertificate {
    pub theta: f64,
    pub partial_quotients: Vec<i64>,
    /// Largest constant making the bound hold over the verified range.
    pub c: f64,
    /// Exponent fitted on the record (best-approximation) denominators.
    pub gamma: f64,
    pub q_max: u64,
    /// Denominator attaining the constant.
    pub worst_q: u64,
    /// Record pairs `(q, |q theta - p|)` in increasing q.
    pub records: Vec<(u64, f64)>,
}

impl DiophantineCertificate {
    /// Re-checks the certified inequality over its search range.
    pub fn verify(&self) -> bool {
        (1..=self.q_max).all(|q| {
            let e = dist_to_integers(self.theta, q);
            e + 1e-15 >= self.c * (q as f64).powf(-self.gamma)
        })
    }

    pub fn bound_at(&self, q: f64) -> f64 {
        self.c * q.powf(-self.gamma)
    }
}

fn dist_to_integers(theta: f64, q: u64) -> f64 {
    let x = theta * q as f64;
    (x - x.round()).abs()
}

/// Fits the certificate: gamma from a log-log regression on the record
/// denominators (the best rational approximations), then the largest valid
/// constant over the whole range, with the attaining denominator.
pub fn diophantine_exponent(theta: f64, q_max: u64) -> DiophantineCertificate {
    assert!(q_max >= 2, "need q_max >= 2");
    let mut records: Vec<(u64, f64)> = Vec::new();
    let mut best = f64::INFINITY;
    for q in 1..=q_max {
        let e = dist_to_integers(theta, q).max(1e-300);
        if e < best {
            best = e;
            records.push((q, e));
        }
    }
    let gamma = if records.len() >= 2 {
        let xs: Vec<f64> = records.iter().map(|(q, _)| (*q as f64).ln()).collect();
        let ys: Vec<f64> = records.iter().map(|(_, e)| e.ln()).collect();
        let (_, slope) = fit_line(&xs, &ys);
        (-slope).max(0.0)
    } else {
        1.0
    };
    let mut c = f64::INFINITY;
    let mut worst_q = 1u64;
    for q in 1..=q_max {
        let e = dist_to_integers(theta, q).max(1e-300);
        let val = e * (q as f64).powf(gamma);
        if val < c {
            c = val;
            worst_q = q;
        }
    }
    let (partial_quotients, _) = continued_fraction_full(theta, 20);
    DiophantineCertificate { theta, partial_quotients, c, gamma, q_max, worst_q, records }
}

/// Certificate for the ratio `alpha/beta`, rejecting rational ratios up
/// front via the terminating expansion.
pub fn certify_ratio(alpha: f64, beta: f64, q_max: u64) -> Result<DiophantineCertificate> {
    if beta == 0.0 || alpha == 0.0 {
        return Err(Error::PreconditionUnmet("ratio needs nonzero alpha, beta".into()));
    }
    let theta = alpha / beta;
    continued_fraction(theta, 20)?;
    Ok(diophantine_exponent(theta, q_max))
}

/// Frequencies below `2 pi / |beta|` are outside the certified regime (the
/// nearest-integer argument needs `|b beta| >= 2 pi`).
pub fn frequency_floor(beta: f64) -> f64 {
    2.0 * std::f64::consts::PI / beta.abs()
}

/// Logarithmic grid with `points` samples from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && points >= 2);
    let step = (hi / lo).ln() / (points - 1) as f64;
    (0..points).map(|k| lo * (step * k as f64).exp()).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct CircleScanRow {
    pub b: f64,
    pub value: f64,
    pub bound: f64,
    pub slack: f64,
}

/// For every grid frequency checks
/// `max(|e^{ib alpha} - 1|, |e^{ib beta} - 1|) >= (c/2) |b|^{-gamma}`
/// with the fitted certificate of `alpha/beta`. A violation carries the
/// offending frequency.
pub fn circle_pair_scan(
    alpha: f64,
    beta: f64,
    b_grid: &[f64],
    cert: &DiophantineCertificate,
) -> Result<Vec<CircleScanRow>> {
    let floor = frequency_floor(beta);
    let mut rows = Vec::with_capacity(b_grid.len());
    for &b in b_grid {
        if b.abs() < floor {
            return Err(Error::PreconditionUnmet(format!(
                "frequency {b} below the certified floor {floor:.6}"
            )));
        }
        let value = circle_distance(b * alpha).max(circle_distance(b * beta));
        let bound = 0.5 * cert.c * b.abs().powf(-cert.gamma);
        let slack = value - bound;
        if slack < 0.0 {
            return Err(Error::BoundViolated { b, value, bound });
        }
        rows.push(CircleScanRow { b, value, bound, slack });
    }
    Ok(rows)
}

/// `|e^{i t} - 1|`.
pub fn circle_distance(t: f64) -> f64 {
    2.0 * (t / 2.0).sin().abs()
}

/// Catalog of the distinct rectangle closing values reachable within a
/// window budget, searched over all admissible base windows. Entries hold
/// materialized four-point witnesses.
#[derive(Debug, Clone)]
pub struct RectangleCatalog {
    pub entries: Vec<CatalogEntry>,
    pub window: usize,
}

#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub h: f64,
    pub w0: TwoSidedPoint,
    pub w1: TwoSidedPoint,
    pub w2: TwoSidedPoint,
    pub w3: TwoSidedPoint,
}

/// A certified oscillation witness at frequency `b`.
#[derive(Debug, Clone)]
pub struct FourPointWitness {
    pub b: f64,
    /// `|e^{i b H} - 1|` for the winning rectangle.
    pub value: f64,
    pub bound: f64,
    pub h: f64,
    pub window: usize,
    pub w0: TwoSidedPoint,
    pub w1: TwoSidedPoint,
    pub w2: TwoSidedPoint,
    pub w3: TwoSidedPoint,
}

impl FourPointWitness {
    /// Serializable dump of the witness windows.
    pub fn dump(&self, sys: &SymbolicSystem) -> WitnessDump {
        let radius = self.window as i64;
        let n = sys.alphabet_size();
        WitnessDump {
            b: self.b,
            value: self.value,
            bound: self.bound,
            h: self.h,
            window: self.window,
            w0: self.w0.window_string(radius, n),
            w1: self.w1.window_string(radius, n),
            w2: self.w2.window_string(radius, n),
            w3: self.w3.window_string(radius, n),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WitnessDump {
    pub b: f64,
    pub value: f64,
    pub bound: f64,
    pub h: f64,
    pub window: usize,
    pub w0: String,
    pub w1: String,
    pub w2: String,
    pub w3: String,
}

/// Enumerates rectangle classes and collects the distinct closing values
/// with materialized corner points. With `base = Some(x0)` only rectangles
/// anchored at `x0` are scanned (the canonical-base regime the prescribed
/// range certifies); with `None` every admissible base window of radius
/// `min(budget, depth - 2)` is searched and the union is reported.
pub fn rectangle_catalog(
    sys: &SymbolicSystem,
    r: &RoofFunction,
    window_budget: usize,
    base: Option<&TwoSidedPoint>,
) -> Result<RectangleCatalog> {
    let d = r.depth();
    let window = window_budget.max(d);
    let m = (d.saturating_sub(2)).min(window_budget.max(1)).max(1);
    let radius = m as i64;

    let mut entries: Vec<CatalogEntry> = Vec::new();
    let mut seen: Vec<f64> = Vec::new();
    let bases: Vec<TwoSidedPoint> = match base {
        Some(x0) => vec![x0.clone()],
        None => {
            let mut central = vec![0u8; 2 * m + 1];
            let mut words: Vec<Vec<u8>> = Vec::new();
            collect_words_admissible(sys, &mut central, 0, &mut words);
            words
                .iter()
                .map(|w| complete_to_point(sys, w, -radius))
                .collect::<Result<_>>()?
        }
    };
    for w0 in &bases {
        let (_, rows) = temporal_range(sys, r, w0, window, 1e-12)?;
        for row in rows {
            let h = row.h;
            if seen.iter().any(|v| (v - h).abs() <= 1e-12) {
                continue;
            }
            // Rebuild the class legs from the padded windows.
            let x1_syms = parse_window(&row.x1_window);
            let x2_syms = parse_window(&row.x2_window);
            let half = (x1_syms.len() as i64 - 1) / 2;
            let p = &x1_syms[(half - radius) as usize..half as usize];
            let f = &x2_syms[(half + 1) as usize..(half + 1 + radius) as usize];
            // Chain orientation: w1 varies the future, w2 the past.
            let w1 = unstable_leg(sys, w0, f)?;
            let w2 = stable_leg(sys, w0, p)?;
            let w3 = w2.with_symbols(sys, 1, f)?;
            let chain = four_point_chain(r, w0, &w1, &w2, &w3)?;
            debug_assert!((chain + h).abs() < 1e-9, "chain {chain} vs -h {}", -h);
            seen.push(h);
            entries.push(CatalogEntry { h, w0: w0.clone(), w1, w2, w3 });
        }
    }
    entries.sort_by(|a, b| a.h.partial_cmp(&b.h).unwrap());
    Ok(RectangleCatalog { entries, window })
}

fn collect_words_admissible(
    sys: &SymbolicSystem,
    word: &mut Vec<u8>,
    pos: usize,
    out: &mut Vec<Vec<u8>>,
) {
    if pos == word.len() {
        out.push(word.clone());
        return;
    }
    for s in 0..sys.alphabet_size() {
        if pos > 0 && !sys.admissible(word[pos - 1], s) {
            continue;
        }
        word[pos] = s;
        collect_words_admissible(sys, word, pos + 1, out);
    }
}

fn parse_window(text: &str) -> Vec<u8> {
    text.chars().map(|c| c.to_digit(10).unwrap() as u8).collect()
}

/// Completes a finite admissible word (starting at index `lo`) to a
/// two-sided point using fixed successor/predecessor cycles.
pub fn complete_to_point(sys: &SymbolicSystem, word: &[u8], lo: i64) -> Result<TwoSidedPoint> {
    let succ = |s: u8| sys.successors(s).next().expect("outgoing edge");
    let pred = |s: u8| sys.predecessors(s).next().expect("incoming edge");

    // Walk first-successors until a symbol repeats: that loop is the tail.
    let mut right_ext: Vec<u8> = Vec::new();
    let mut cur = *word.last().expect("nonempty");
    let right_tail = loop {
        let next = succ(cur);
        if let Some(pos) = right_ext.iter().position(|&s| s == next) {
            break right_ext[pos..].to_vec();
        }
        right_ext.push(next);
        cur = next;
    };
    let mut left_ext: Vec<u8> = Vec::new();
    let mut cur = word[0];
    let left_tail = loop {
        let prev = pred(cur);
        if let Some(pos) = left_ext.iter().position(|&s| s == prev) {
            let mut cycle = left_ext[pos..].to_vec();
            cycle.reverse();
            break cycle;
        }
        left_ext.push(prev);
        cur = prev;
    };
    let mut window: Vec<u8> = left_ext.iter().rev().cloned().collect();
    window.extend_from_slice(word);
    window.extend_from_slice(&right_ext);
    let lo = lo - left_ext.len() as i64;
    TwoSidedPoint::new(sys, left_tail, window, lo, right_tail)
}

/// Searches the rectangle catalog for the witness maximizing
/// `|e^{i b H} - 1|` and certifies it against the Diophantine bound
/// `(c/2) |b|^{-gamma}`.
pub fn four_point_certificate_from_catalog(
    catalog: &RectangleCatalog,
    b: f64,
    cert: &DiophantineCertificate,
) -> Result<FourPointWitness> {
    let bound = 0.5 * cert.c * b.abs().powf(-cert.gamma);
    let mut best: Option<(&CatalogEntry, f64)> = None;
    for e in &catalog.entries {
        let value = circle_distance(b * e.h);
        if best.map(|(_, v)| value > v).unwrap_or(true) {
            best = Some((e, value));
        }
    }
    let (entry, value) = best.ok_or(Error::NoWitness { b })?;
    if value < bound {
        return Err(Error::NoWitness { b });
    }
    Ok(FourPointWitness {
        b,
        value,
        bound,
        h: entry.h,
        window: catalog.window,
        w0: entry.w0.clone(),
        w1: entry.w1.clone(),
        w2: entry.w2.clone(),
        w3: entry.w3.clone(),
    })
}

/// One-shot convenience: catalog plus certification at a single frequency.
pub fn four_point_certificate(
    sys: &SymbolicSystem,
    r: &RoofFunction,
    b: f64,
    window_budget: usize,
    cert: &DiophantineCertificate,
    base: Option<&TwoSidedPoint>,
) -> Result<FourPointWitness> {
    let catalog = rectangle_catalog(sys, r, window_budget, base)?;
    four_point_certificate_from_catalog(&catalog, b, cert)
}
