//! Suspension flows over subshifts: Birkhoff sums, the stable/unstable
//! holonomy functionals, temporal distance of symbolic rectangles, roof
//! constructions with a prescribed temporal range, and the vertical flow.
//!
//! For locally constant roofs and eventually periodic points every holonomy
//! limit is a finite sum evaluated exactly.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::shift::{
    enumerate_words, lipschitz_seminorm_real, word_to_string, CylinderFn, RealCf, Side,
    SymbolicSystem, TwoSidedPoint,
};

/// Strictly positive locally constant roof function.
#[derive(Debug, Clone)]
pub struct RoofFunction {
    base: RealCf,
    r_min: f64,
}

impl RoofFunction {
    pub fn new(base: RealCf) -> Result<Self> {
        let r_min = base.min_value();
        if !(r_min > 0.0) {
            return Err(Error::BadFunction(format!(
                "roof must be strictly positive (min value {r_min})"
            )));
        }
        Ok(RoofFunction { base, r_min })
    }

    pub fn constant(sys: &SymbolicSystem, value: f64) -> Result<Self> {
        let table = enumerate_words(sys, 1)?;
        RoofFunction::new(CylinderFn::constant(table, value))
    }

    pub fn base(&self) -> &RealCf {
        &self.base
    }

    pub fn depth(&self) -> usize {
        self.base.depth()
    }

    pub fn min_value(&self) -> f64 {
        self.r_min
    }

    pub fn max_value(&self) -> f64 {
        self.base.values().iter().cloned().fold(f64::MIN, f64::max)
    }

    pub fn lipschitz(&self, sys: &SymbolicSystem) -> f64 {
        lipschitz_seminorm_real(&self.base, sys.lambda(), Side::OneSided)
    }

    pub fn eval_shifted(&self, x: &TwoSidedPoint, k: i64) -> f64 {
        self.base.eval_shifted(x, k)
    }
}

/// `r_n(x) = sum_{i=0}^{n-1} r(sigma^i x)`, exact.
pub fn birkhoff_sum(r: &RoofFunction, x: &TwoSidedPoint, n: usize) -> f64 {
    (0..n as i64).map(|i| r.eval_shifted(x, i)).sum()
}

/// Stable holonomy `Delta^s(x, y) = lim r_n(y) - r_n(x)` for `y` sharing a
/// future with `x`. Terms vanish once the windows enter the common future,
/// so the sum is finite and exact.
pub fn delta_s(r: &RoofFunction, x: &TwoSidedPoint, y: &TwoSidedPoint) -> Result<f64> {
    let n0 = x.common_future_start(y).ok_or(Error::NotStableEquivalent)?;
    let mut acc = 0.0;
    for n in 0..n0.max(0) {
        acc += r.eval_shifted(y, n) - r.eval_shifted(x, n);
    }
    Ok(acc)
}

/// Unstable holonomy outcome: the exact limit, a requested partial sum, and
/// the a-priori truncation bound `|r|_Lip lambda^{k-n} / (1 - lambda)` at
/// the tightest membership index `n`.
#[derive(Debug, Clone, Copy)]
pub struct UnstableHolonomy {
    pub exact: f64,
    pub partial: f64,
    pub bound: f64,
    /// Minimal `n` with `y_i = x_i` for all `i <= -n` (may be negative).
    pub membership_index: i64,
}

/// `Delta^u(x, y) = lim r_n(sigma^{-n} x) - r_n(sigma^{-n} y)
///               = sum_{i>=1} r(sigma^{-i} x) - r(sigma^{-i} y)`
/// for `y` sharing a past with `x`; exact, with the partial sum at
/// truncation `k` and its error bound.
pub fn delta_u(
    r: &RoofFunction,
    sys: &SymbolicSystem,
    x: &TwoSidedPoint,
    y: &TwoSidedPoint,
    k: usize,
) -> Result<UnstableHolonomy> {
    let n1 = x.common_past_end(y).ok_or(Error::NotUnstableEquivalent)?;
    let d = r.depth() as i64;
    // Window [-i, -i+d-1] is inside the common past iff -i+d-1 <= n1.
    let last = (d - 2 - n1).max(0);
    let term = |i: i64| r.eval_shifted(x, -i) - r.eval_shifted(y, -i);
    let exact: f64 = (1..=last).map(term).sum();
    let partial: f64 = (1..=k as i64).map(term).sum();
    let membership_index = -n1;
    let lambda = sys.lambda();
    let bound =
        r.lipschitz(sys) / (1.0 - lambda) * lambda.powi((k as i64 - membership_index) as i32);
    Ok(UnstableHolonomy { exact, partial, bound, membership_index })
}

/// Exact unstable holonomy without the truncation report.
pub fn delta_u_exact(r: &RoofFunction, x: &TwoSidedPoint, y: &TwoSidedPoint) -> Result<f64> {
    let n1 = x.common_past_end(y).ok_or(Error::NotUnstableEquivalent)?;
    let d = r.depth() as i64;
    let last = (d - 2 - n1).max(0);
    Ok((1..=last).map(|i| r.eval_shifted(x, -i) - r.eval_shifted(y, -i)).sum())
}

/// Temporal distance of the symbolic rectangle spanned by `x1` (sharing a
/// future with `x0`) and `x2` (sharing a past with `x0`): the four-term
/// holonomy sum around the rectangle, with the corner
/// `x3 = splice(past of x1, future of x2)`.
pub fn temporal_distance(
    sys: &SymbolicSystem,
    r: &RoofFunction,
    x0: &TwoSidedPoint,
    x1: &TwoSidedPoint,
    x2: &TwoSidedPoint,
) -> Result<f64> {
    x0.common_future_start(x1).ok_or(Error::NotStableEquivalent)?;
    x2.common_past_end(x0).ok_or(Error::NotUnstableEquivalent)?;
    let x3 = x1.splice_past_with_future(sys, x2)?;
    let a = delta_s(r, x0, x1)?;
    let b = delta_u_exact(r, x1, &x3)?;
    let c = delta_s(r, &x3, x2)?;
    let d = delta_u_exact(r, x2, x0)?;
    Ok(a + b + c + d)
}

/// Closing value of the four-point chain
/// `Delta^u(w0,w1) + Delta^s(w1,w3) + Delta^u(w3,w2) + Delta^s(w2,w0)`,
/// the orientation used by the frequency certificates.
pub fn four_point_chain(
    r: &RoofFunction,
    w0: &TwoSidedPoint,
    w1: &TwoSidedPoint,
    w2: &TwoSidedPoint,
    w3: &TwoSidedPoint,
) -> Result<f64> {
    let a = delta_u_exact(r, w0, w1)?;
    let b = delta_s(r, w1, w3)?;
    let c = delta_u_exact(r, w3, w2)?;
    let d = delta_s(r, w2, w0)?;
    Ok(a + b + c + d)
}

/// One enumerated rectangle of the range scan.
#[derive(Debug, Clone, Serialize)]
pub struct RangeRow {
    pub x1_window: String,
    pub x2_window: String,
    pub h: f64,
}

/// The exact set of temporal-distance values over a window class, closed
/// under negation (both orientations of each rectangle are counted) and
/// containing 0 through the degenerate pair.
#[derive(Debug, Clone)]
pub struct TemporalRange {
    values: Vec<f64>,
    window: usize,
}

impl TemporalRange {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// True when the range is `{0}` up to `tol` (the lattice situation).
    pub fn is_trivial(&self, tol: f64) -> bool {
        self.values.iter().all(|v| v.abs() <= tol)
    }

    pub fn matches(&self, expect: &[f64], tol: f64) -> bool {
        let mut e = expect.to_vec();
        e.sort_by(|a, b| a.partial_cmp(b).unwrap());
        self.values.len() == e.len()
            && self.values.iter().zip(&e).all(|(a, b)| (a - b).abs() <= tol)
    }
}

/// Exhaustively enumerates the temporal distances of rectangles whose stable
/// leg varies on `[-window, -1]` and unstable leg on `[1, window]`, all legs
/// agreeing with `x0` at index 0 and beyond the window.
///
/// The value of a rectangle depends on its legs only through the stable
/// leg's trailing `min(window, depth-2)` symbols and the unstable leg's
/// leading `min(window, depth-2)` symbols (the roof windows straddling the
/// junction), so classes are enumerated once and reported with padded
/// representative windows.
pub fn temporal_range(
    sys: &SymbolicSystem,
    r: &RoofFunction,
    x0: &TwoSidedPoint,
    window: usize,
    dedup_tol: f64,
) -> Result<(TemporalRange, Vec<RangeRow>)> {
    if window < r.depth() {
        return Err(Error::PreconditionUnmet(format!(
            "window {window} smaller than roof depth {}",
            r.depth()
        )));
    }
    let d = r.depth();
    let m = window.min(d.saturating_sub(2));
    let w = window as i64;

    let pasts = past_classes(sys, x0, window, m);
    let futures = future_classes(sys, x0, window, m);

    // H(p, f) = [Phi(p, f0) - Phi(p, f)] + [Phi(p0, f) - Phi(p0, f0)] where
    // Phi sums the roof over the d-2 windows straddling index 0.
    let straddle_sum = |past: Option<&[u8]>, fut: Option<&[u8]>| -> f64 {
        let mut acc = 0.0;
        let mut word = vec![0u8; d];
        for i in 1..=(d as i64 - 2) {
            for (slot, j) in (-i..-i + d as i64).enumerate() {
                word[slot] = if j < 0 {
                    match past {
                        Some(p) if j >= -(m as i64) => p[(m as i64 + j) as usize],
                        _ => x0.symbol(j),
                    }
                } else if j > 0 {
                    match fut {
                        Some(f) if j <= m as i64 => f[(j - 1) as usize],
                        _ => x0.symbol(j),
                    }
                } else {
                    x0.symbol(0)
                };
            }
            acc += r.base().eval_word(&word);
        }
        acc
    };

    let phi_00 = straddle_sum(None, None);
    let mut rows = Vec::with_capacity(pasts.len() * futures.len());
    let mut values: Vec<f64> = Vec::new();
    for p in &pasts {
        let phi_p0 = straddle_sum(Some(p), None);
        for f in &futures {
            let phi_pf = straddle_sum(Some(p), Some(f));
            let phi_0f = straddle_sum(None, Some(f));
            let h = (phi_p0 - phi_pf) + (phi_0f - phi_00);
            rows.push(RangeRow {
                x1_window: padded_window(sys, x0, w, Some(p), None),
                x2_window: padded_window(sys, x0, w, None, Some(f)),
                h,
            });
            values.push(h);
            values.push(-h);
        }
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values.dedup_by(|a, b| (*a - *b).abs() <= dedup_tol);
    Ok((TemporalRange { values, window }, rows))
}

/// Admissible trailing classes for the stable leg: words on `[-m, -1]` that
/// connect to `x0` on both sides within the window.
fn past_classes(
    sys: &SymbolicSystem,
    x0: &TwoSidedPoint,
    window: usize,
    m: usize,
) -> Vec<Vec<u8>> {
    if m == 0 {
        return vec![Vec::new()];
    }
    let reach = reachable(sys, window - m + 1);
    let from = x0.symbol(-(window as i64) - 1) as usize;
    let junction = x0.symbol(0);
    let mut out = Vec::new();
    let mut word = vec![0u8; m];
    collect_words(sys, &mut word, 0, &mut |w| {
        if sys.admissible(w[m - 1], junction) && reach[from][w[0] as usize] {
            out.push(w.to_vec());
        }
    });
    out
}

/// Admissible leading classes for the unstable leg: words on `[1, m]`.
fn future_classes(
    sys: &SymbolicSystem,
    x0: &TwoSidedPoint,
    window: usize,
    m: usize,
) -> Vec<Vec<u8>> {
    if m == 0 {
        return vec![Vec::new()];
    }
    let reach = reachable(sys, window - m + 1);
    let to = x0.symbol(window as i64 + 1) as usize;
    let junction = x0.symbol(0);
    let mut out = Vec::new();
    let mut word = vec![0u8; m];
    collect_words(sys, &mut word, 0, &mut |w| {
        if sys.admissible(junction, w[0]) && reach[w[m - 1] as usize][to] {
            out.push(w.to_vec());
        }
    });
    out
}

/// Boolean reachability in exactly `steps` transitions.
fn reachable(sys: &SymbolicSystem, steps: usize) -> Vec<Vec<bool>> {
    let n = sys.alphabet_size() as usize;
    let a: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| sys.admissible(i as u8, j as u8)).collect())
        .collect();
    let mut p: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| i == j).collect()).collect();
    for _ in 0..steps {
        let mut next = vec![vec![false; n]; n];
        for i in 0..n {
            for k in 0..n {
                if p[i][k] {
                    for (j, cell) in next[i].iter_mut().enumerate() {
                        *cell |= a[k][j];
                    }
                }
            }
        }
        p = next;
    }
    p
}

fn collect_words(
    sys: &SymbolicSystem,
    word: &mut Vec<u8>,
    pos: usize,
    sink: &mut impl FnMut(&[u8]),
) {
    if pos == word.len() {
        sink(word);
        return;
    }
    for s in 0..sys.alphabet_size() {
        if pos > 0 && !sys.admissible(word[pos - 1], s) {
            continue;
        }
        word[pos] = s;
        collect_words(sys, word, pos + 1, sink);
    }
}

fn padded_window(
    sys: &SymbolicSystem,
    x0: &TwoSidedPoint,
    w: i64,
    past: Option<&[u8]>,
    fut: Option<&[u8]>,
) -> String {
    let syms: Vec<u8> = (-w..=w)
        .map(|j| {
            if j < 0 {
                if let Some(p) = past {
                    let off = j + p.len() as i64;
                    if off >= 0 {
                        return p[off as usize];
                    }
                }
                x0.symbol(j)
            } else if j > 0 {
                if let Some(f) = fut {
                    if j <= f.len() as i64 {
                        return f[(j - 1) as usize];
                    }
                }
                x0.symbol(j)
            } else {
                x0.symbol(0)
            }
        })
        .collect();
    word_to_string(&syms, sys.alphabet_size())
}

/// Materializes the stable leg of a range class as a two-sided point
/// (variation on `[-len(p), -1]`, agreement with `x0` elsewhere).
pub fn stable_leg(sys: &SymbolicSystem, x0: &TwoSidedPoint, p: &[u8]) -> Result<TwoSidedPoint> {
    if p.is_empty() {
        return Ok(x0.clone());
    }
    x0.with_symbols(sys, -(p.len() as i64), p)
}

/// Materializes the unstable leg (variation on `[1, len(f)]`).
pub fn unstable_leg(sys: &SymbolicSystem, x0: &TwoSidedPoint, f: &[u8]) -> Result<TwoSidedPoint> {
    if f.is_empty() {
        return Ok(x0.clone());
    }
    x0.with_symbols(sys, 1, f)
}

/// Builds a strictly positive roof on the full 2-shift whose temporal range
/// over the base point `0^inf` at window `depth` is exactly
/// `{0, +-alpha, +-beta}`.
///
/// The closing value of a rectangle is affine in the roof values on the
/// windows straddling the junction. Placing the adjustable values on four
/// marker words whose activation patterns are mutually exclusive turns the
/// target range into four independent linear conditions:
///
/// - `s 1 0 1...1 t` (zero in slot 2) keyed by `t`, alive only for `s = 0`,
/// - `u 1...1 0 1` (zero in slot depth-2) keyed by `u`, alive only for
///   trailing-ones stable classes,
///
/// and a marker word carries exactly one interior zero, so no rectangle
/// activates two markers at once. Feasible from depth 5 up.
pub fn construct_roof_with_range(
    sys: &SymbolicSystem,
    alpha: f64,
    beta: f64,
    depth: usize,
    positivity_margin: f64,
) -> Result<RoofFunction> {
    let n = sys.alphabet_size();
    let full = n == 2 && (0..n).all(|i| (0..n).all(|j| sys.admissible(i, j)));
    if !full {
        return Err(Error::PreconditionUnmet(
            "roof construction targets the full 2-shift".into(),
        ));
    }
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(Error::PreconditionUnmet("alpha and beta must be positive".into()));
    }
    if (alpha - beta).abs() <= 1e-12 * alpha.max(beta) {
        return Err(Error::PreconditionUnmet("alpha and beta must be distinct".into()));
    }
    if !(positivity_margin > 0.0) {
        return Err(Error::PreconditionUnmet("positivity margin must be positive".into()));
    }
    let min_depth = 5;
    if depth < min_depth {
        return Err(Error::InfeasibleTargets { depth, min_depth });
    }
    let gap = depth - 2;
    let table = enumerate_words(sys, depth)?;
    let mut values = vec![0.0f64; table.len()];

    let mut set = |word: Vec<u8>, v: f64| {
        let rank = table.rank(&word).expect("full shift word");
        values[rank] = v;
    };
    // alpha markers: [0, 1, 0, 1^(gap-2), t]
    for (t, v) in [(0u8, alpha), (1u8, -alpha)] {
        let mut w = vec![0, 1, 0];
        w.extend(std::iter::repeat(1).take(gap - 2));
        w.push(t);
        set(w, v);
    }
    // beta markers: [u, 1^(gap-1), 0, 1]
    for (u, v) in [(0u8, beta), (1u8, -beta)] {
        let mut w = vec![u];
        w.extend(std::iter::repeat(1).take(gap - 1));
        w.push(0);
        w.push(1);
        set(w, v);
    }
    let min = values.iter().cloned().fold(f64::MAX, f64::min);
    let shift = positivity_margin - min;
    for v in values.iter_mut() {
        *v += shift;
    }
    let roof = RoofFunction::new(CylinderFn::new(table, values)?)?;

    // The construction is verified before handing the roof out.
    let x0 = TwoSidedPoint::periodic(sys, &[0])?;
    let (range, _) = temporal_range(sys, &roof, &x0, depth, 1e-9)?;
    let expect = [-alpha.max(beta), -alpha.min(beta), 0.0, alpha.min(beta), alpha.max(beta)];
    if !range.matches(&expect, 1e-9) {
        return Err(Error::InfeasibleTargets { depth, min_depth });
    }
    Ok(roof)
}

/// A point of the suspension space: base point plus a height below the roof.
#[derive(Debug, Clone)]
pub struct SuspensionPoint {
    base: TwoSidedPoint,
    height: f64,
}

impl SuspensionPoint {
    pub fn new(base: TwoSidedPoint, height: f64, r: &RoofFunction) -> Result<Self> {
        let top = r.eval_shifted(&base, 0);
        if !(0.0..top).contains(&height) {
            return Err(Error::PreconditionUnmet(format!(
                "height {height} outside [0, {top})"
            )));
        }
        Ok(SuspensionPoint { base, height })
    }

    pub fn base(&self) -> &TwoSidedPoint {
        &self.base
    }

    pub fn height(&self) -> f64 {
        self.height
    }
}

/// Vertical flow by time `t` (either sign), applying the identification
/// `(x, r(x)) ~ (sigma x, 0)` until the height lands in `[0, r(base))`.
/// Total for eventually periodic points, which support arbitrary shifts.
pub fn flow_evolve(p: &SuspensionPoint, t: f64, r: &RoofFunction) -> SuspensionPoint {
    let mut u = p.height + t;
    let mut shifts: i64 = 0;
    if t >= 0.0 {
        loop {
            let top = r.eval_shifted(&p.base, shifts);
            if u < top {
                break;
            }
            u -= top;
            shifts += 1;
        }
    } else {
        while u < 0.0 {
            shifts -= 1;
            u += r.eval_shifted(&p.base, shifts);
        }
    }
    SuspensionPoint { base: p.base.shift(shifts), height: u }
}

/// Flow transport along a finite one-sided word: the number of roof
/// crossings and the residual height, or `WindowExhausted` when the word is
/// too short to evaluate the next roof value.
pub fn flow_transport_word(
    r: &RoofFunction,
    word: &[u8],
    height: f64,
    t: f64,
) -> Result<(usize, f64)> {
    if t < 0.0 {
        return Err(Error::PreconditionUnmet("word transport requires t >= 0".into()));
    }
    let d = r.depth();
    let mut u = height + t;
    let mut k = 0usize;
    loop {
        if k + d > word.len() {
            return Err(Error::WindowExhausted);
        }
        let top = r.base().eval_word(&word[k..]);
        if u < top {
            return Ok((k, u));
        }
        u -= top;
        k += 1;
    }
}
