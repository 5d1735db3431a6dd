//! Subshifts of finite type: transition structure, admissible words, the
//! metric `d_lambda`, two-sided points with eventually periodic tails, and
//! locally constant (cylinder) functions with exact Lipschitz seminorms.
//!
//! Everything downstream works with depth-n locally constant data, for which
//! all sums and seminorms in this crate are exact rather than truncated.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A subshift of finite type with an aperiodic 0/1 transition matrix and the
/// metric constant `lambda` of `d_lambda(x, y) = lambda^{N(x,y)}`.
///
/// Symbols are `0..alphabet_size`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolicSystem {
    alphabet_size: u8,
    transition: Vec<Vec<u8>>,
    lambda: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct SystemSpec {
    alphabet_size: usize,
    transition: Vec<Vec<u8>>,
    lambda: f64,
}

impl SymbolicSystem {
    pub fn new(transition: Vec<Vec<u8>>, lambda: f64) -> Result<Self> {
        let n = transition.len();
        if n < 2 {
            return Err(Error::BadSystem("alphabet size must be at least 2".into()));
        }
        if n > 128 {
            return Err(Error::BadSystem("alphabet size larger than 128".into()));
        }
        for row in &transition {
            if row.len() != n {
                return Err(Error::BadSystem("transition matrix is not square".into()));
            }
            if row.iter().any(|&e| e > 1) {
                return Err(Error::BadSystem("transition entries must be 0 or 1".into()));
            }
        }
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::BadSystem(format!(
                "metric constant must lie in (0,1), got {lambda}"
            )));
        }
        for i in 0..n {
            if transition[i].iter().all(|&e| e == 0) {
                return Err(Error::BadSystem(format!("symbol {i} has no outgoing transition")));
            }
            if (0..n).all(|j| transition[j][i] == 0) {
                return Err(Error::BadSystem(format!("symbol {i} has no incoming transition")));
            }
        }
        let sys = SymbolicSystem { alphabet_size: n as u8, transition, lambda };
        check_aperiodic(&sys)?;
        Ok(sys)
    }

    /// Full shift on `n` symbols (all transitions allowed).
    pub fn full_shift(n: usize, lambda: f64) -> Result<Self> {
        Self::new(vec![vec![1; n]; n], lambda)
    }

    /// Golden-mean shift: two symbols, the word `11` forbidden.
    pub fn golden_mean(lambda: f64) -> Result<Self> {
        Self::new(vec![vec![1, 1], vec![1, 0]], lambda)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SystemSpec = serde_json::from_str(text)
            .map_err(|e| Error::BadSystem(format!("system JSON: {e}")))?;
        if spec.alphabet_size != spec.transition.len() {
            return Err(Error::BadSystem(
                "alphabet_size does not match transition matrix dimension".into(),
            ));
        }
        Self::new(spec.transition, spec.lambda)
    }

    pub fn to_json(&self) -> String {
        let spec = SystemSpec {
            alphabet_size: self.alphabet_size as usize,
            transition: self.transition.clone(),
            lambda: self.lambda,
        };
        serde_json::to_string_pretty(&spec).expect("system serializes")
    }

    pub fn alphabet_size(&self) -> u8 {
        self.alphabet_size
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn admissible(&self, from: u8, to: u8) -> bool {
        self.transition[from as usize][to as usize] == 1
    }

    pub fn word_admissible(&self, word: &[u8]) -> bool {
        word.iter().all(|&s| s < self.alphabet_size)
            && word.windows(2).all(|p| self.admissible(p[0], p[1]))
    }

    /// Symbols `b` with `a -> b` admissible, in increasing order.
    pub fn successors(&self, a: u8) -> impl Iterator<Item = u8> + '_ {
        self.transition[a as usize]
            .iter()
            .enumerate()
            .filter(|(_, &e)| e == 1)
            .map(|(j, _)| j as u8)
    }

    /// Symbols `b` with `b -> a` admissible, in increasing order.
    pub fn predecessors(&self, a: u8) -> impl Iterator<Item = u8> + '_ {
        (0..self.alphabet_size).filter(move |&b| self.admissible(b, a))
    }

    pub fn transition_matrix(&self) -> &[Vec<u8>] {
        &self.transition
    }
}

/// Least `m <= N^2` with the m-th boolean power of the transition matrix
/// entrywise positive.
pub fn check_aperiodic(sys: &SymbolicSystem) -> Result<usize> {
    let n = sys.alphabet_size as usize;
    let a: Vec<Vec<bool>> = sys
        .transition
        .iter()
        .map(|row| row.iter().map(|&e| e == 1).collect())
        .collect();
    let mut p = a.clone();
    for m in 1..=n * n {
        if p.iter().all(|row| row.iter().all(|&e| e)) {
            return Ok(m);
        }
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
    Err(Error::NotAperiodic)
}

/// Renders a word as a digit string (alphabets up to 10 symbols) or
/// comma-separated otherwise.
pub fn word_to_string(word: &[u8], alphabet_size: u8) -> String {
    if alphabet_size <= 10 {
        word.iter().map(|&s| char::from(b'0' + s)).collect()
    } else {
        word.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")
    }
}

pub fn parse_word(text: &str, alphabet_size: u8) -> Result<Vec<u8>> {
    let symbols: Vec<u8> = if text.contains(',') {
        text.split(',')
            .map(|t| t.trim().parse::<u8>().map_err(|_| Error::BadFunction(format!("bad word {text:?}"))))
            .collect::<Result<_>>()?
    } else {
        text.chars()
            .map(|c| {
                c.to_digit(10)
                    .map(|d| d as u8)
                    .ok_or_else(|| Error::BadFunction(format!("bad word {text:?}")))
            })
            .collect::<Result<_>>()?
    };
    if symbols.iter().any(|&s| s >= alphabet_size) {
        return Err(Error::BadFunction(format!("word {text:?} uses symbols outside the alphabet")));
    }
    Ok(symbols)
}

/// All admissible words of a fixed depth, lexicographically sorted. Acts as
/// the index set for cylinder functions and transfer matrices.
#[derive(Debug, PartialEq)]
pub struct WordTable {
    depth: usize,
    alphabet_size: u8,
    flat: Vec<u8>,
}

impl WordTable {
    pub fn len(&self) -> usize {
        if self.depth == 0 { 1 } else { self.flat.len() / self.depth }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn alphabet_size(&self) -> u8 {
        self.alphabet_size
    }

    pub fn word(&self, rank: usize) -> &[u8] {
        &self.flat[rank * self.depth..(rank + 1) * self.depth]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u8]> {
        (0..self.len()).map(move |r| self.word(r))
    }

    /// Rank of an admissible word of the table depth; `None` if absent.
    pub fn rank(&self, word: &[u8]) -> Option<usize> {
        debug_assert_eq!(word.len(), self.depth);
        let mut lo = 0usize;
        let mut hi = self.len();
        while lo < hi {
            let mid = (lo + hi) / 2;
            match self.word(mid).cmp(word) {
                std::cmp::Ordering::Less => lo = mid + 1,
                std::cmp::Ordering::Greater => hi = mid,
                std::cmp::Ordering::Equal => return Some(mid),
            }
        }
        None
    }

    pub fn word_string(&self, rank: usize) -> String {
        word_to_string(self.word(rank), self.alphabet_size)
    }
}

/// Lexicographically sorted, exhaustive, duplicate-free admissible words of
/// length `depth`.
pub fn enumerate_words(sys: &SymbolicSystem, depth: usize) -> Result<Arc<WordTable>> {
    if depth == 0 {
        return Err(Error::DepthMismatch("word depth must be at least 1".into()));
    }
    let mut flat = Vec::new();
    let mut stack: Vec<u8> = Vec::with_capacity(depth);
    fn rec(sys: &SymbolicSystem, depth: usize, stack: &mut Vec<u8>, flat: &mut Vec<u8>) {
        if stack.len() == depth {
            flat.extend_from_slice(stack);
            return;
        }
        if stack.is_empty() {
            for s in 0..sys.alphabet_size() {
                stack.push(s);
                rec(sys, depth, stack, flat);
                stack.pop();
            }
        } else {
            let last = *stack.last().unwrap();
            for s in sys.successors(last) {
                stack.push(s);
                rec(sys, depth, stack, flat);
                stack.pop();
            }
        }
    }
    rec(sys, depth, &mut stack, &mut flat);
    Ok(Arc::new(WordTable { depth, alphabet_size: sys.alphabet_size(), flat }))
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 { a } else { gcd(b, a % b) }
}

fn lcm(a: u64, b: u64) -> u64 {
    a / gcd(a, b) * b
}

/// Smallest period of `word` under rotation.
fn primitive_root(word: &[u8]) -> &[u8] {
    let n = word.len();
    'outer: for p in 1..=n {
        if n % p != 0 {
            continue;
        }
        for i in p..n {
            if word[i] != word[i - p] {
                continue 'outer;
            }
        }
        return &word[..p];
    }
    word
}

/// A bi-infinite admissible sequence with eventually periodic tails: a finite
/// window at indices `lo..lo+window.len()` continued by primitive periodic
/// words on both sides. Shifts are exact and total, so every holonomy sum in
/// the suspension module terminates exactly.
#[derive(Debug, Clone)]
pub struct TwoSidedPoint {
    left_tail: Vec<u8>,
    window: Vec<u8>,
    lo: i64,
    right_tail: Vec<u8>,
}

impl TwoSidedPoint {
    pub fn new(
        sys: &SymbolicSystem,
        left_tail: Vec<u8>,
        window: Vec<u8>,
        lo: i64,
        right_tail: Vec<u8>,
    ) -> Result<Self> {
        if left_tail.is_empty() || right_tail.is_empty() {
            return Err(Error::BadSystem("tails must be nonempty periodic words".into()));
        }
        let left_tail = primitive_root(&left_tail).to_vec();
        let right_tail = primitive_root(&right_tail).to_vec();
        let p = TwoSidedPoint { left_tail, window, lo, right_tail };
        p.check_admissible(sys)?;
        Ok(p)
    }

    /// The periodic point `(word)^infinity` aligned so that index 0 reads
    /// `word[0]`.
    pub fn periodic(sys: &SymbolicSystem, word: &[u8]) -> Result<Self> {
        Self::new(sys, word.to_vec(), Vec::new(), 0, word.to_vec())
    }

    fn check_admissible(&self, sys: &SymbolicSystem) -> Result<()> {
        let lt = self.left_tail.len() as i64;
        let rt = self.right_tail.len() as i64;
        let start = self.lo - lt - 1;
        let end = self.hi() + rt + 1;
        for i in start..end {
            let a = self.symbol(i);
            let b = self.symbol(i + 1);
            if a >= sys.alphabet_size() || b >= sys.alphabet_size() {
                return Err(Error::BadSystem("point uses symbols outside the alphabet".into()));
            }
            if !sys.admissible(a, b) {
                return Err(Error::BadSystem(format!(
                    "inadmissible pair ({a},{b}) at index {i}"
                )));
            }
        }
        Ok(())
    }

    /// First index of the right tail.
    fn hi(&self) -> i64 {
        self.lo + self.window.len() as i64
    }

    pub fn symbol(&self, i: i64) -> u8 {
        if i >= self.lo {
            let off = (i - self.lo) as usize;
            if off < self.window.len() {
                self.window[off]
            } else {
                let j = (i - self.hi()) as usize % self.right_tail.len();
                self.right_tail[j]
            }
        } else {
            let j = (self.lo - 1 - i) as usize % self.left_tail.len();
            self.left_tail[self.left_tail.len() - 1 - j]
        }
    }

    pub fn symbols(&self, start: i64, len: usize) -> Vec<u8> {
        (0..len as i64).map(|k| self.symbol(start + k)).collect()
    }

    /// `sigma^k` of the point; `k` may be negative (inverse shift). Total for
    /// this representation.
    pub fn shift(&self, k: i64) -> Self {
        let mut p = self.clone();
        p.lo -= k;
        p
    }

    /// New point equal to `self` outside `[start, start+symbols.len())` and
    /// carrying `symbols` there. Admissibility is re-checked.
    pub fn with_symbols(&self, sys: &SymbolicSystem, start: i64, symbols: &[u8]) -> Result<Self> {
        let end = start + symbols.len() as i64;
        let new_lo = self.lo.min(start);
        let new_hi = self.hi().max(end);
        let mut window: Vec<u8> = (new_lo..new_hi).map(|i| self.symbol(i)).collect();
        for (k, &s) in symbols.iter().enumerate() {
            window[(start - new_lo) as usize + k] = s;
        }
        TwoSidedPoint::new(sys, self.left_tail.clone(), window, new_lo, self.right_tail.clone())
    }

    /// Splice: past of `self` (indices < 0) with future of `other`
    /// (indices >= 0). Fails when the junction pair is inadmissible.
    pub fn splice_past_with_future(&self, sys: &SymbolicSystem, other: &TwoSidedPoint) -> Result<Self> {
        if !sys.admissible(self.symbol(-1), other.symbol(0)) {
            return Err(Error::SpliceInadmissible);
        }
        let lo = self.lo.min(0).min(other.lo.min(0));
        let hi = self.hi().max(0).max(other.hi().max(0));
        let window: Vec<u8> = (lo..hi)
            .map(|i| if i < 0 { self.symbol(i) } else { other.symbol(i) })
            .collect();
        TwoSidedPoint::new(sys, self.left_tail.clone(), window, lo, other.right_tail.clone())
    }

    fn right_scan_end(&self, other: &TwoSidedPoint) -> i64 {
        let base = self.hi().max(other.hi()).max(0);
        base + lcm(self.right_tail.len() as u64, other.right_tail.len() as u64) as i64 + 1
    }

    fn left_scan_end(&self, other: &TwoSidedPoint) -> i64 {
        let base = self.lo.min(other.lo).min(0);
        base - lcm(self.left_tail.len() as u64, other.left_tail.len() as u64) as i64 - 1
    }

    /// `min { |i| : x_i != y_i }`, or `None` when the sequences are equal.
    pub fn first_difference(&self, other: &TwoSidedPoint) -> Option<i64> {
        let right_end = self.right_scan_end(other);
        let left_end = self.left_scan_end(other);
        let radius = right_end.max(-left_end);
        for a in 0..=radius {
            if a <= right_end && self.symbol(a) != other.symbol(a) {
                return Some(a);
            }
            if a > 0 && -a >= left_end && self.symbol(-a) != other.symbol(-a) {
                return Some(a);
            }
        }
        None
    }

    /// Minimal `n0` with `x_i = y_i` for all `i >= n0`, or `None` when the
    /// futures never merge. Equal sequences report the scan floor.
    pub fn common_future_start(&self, other: &TwoSidedPoint) -> Option<i64> {
        let right_start = self.hi().max(other.hi()).max(0);
        let period = lcm(self.right_tail.len() as u64, other.right_tail.len() as u64) as i64;
        for i in right_start..right_start + period {
            if self.symbol(i) != other.symbol(i) {
                return None;
            }
        }
        let floor = self.left_scan_end(other);
        let mut n0 = right_start;
        while n0 > floor && self.symbol(n0 - 1) == other.symbol(n0 - 1) {
            n0 -= 1;
        }
        Some(n0)
    }

    /// Maximal `n1` with `x_i = y_i` for all `i <= n1`, or `None` when the
    /// pasts never merge. Equal sequences report the scan ceiling.
    pub fn common_past_end(&self, other: &TwoSidedPoint) -> Option<i64> {
        let left_start = self.lo.min(other.lo).min(0);
        let period = lcm(self.left_tail.len() as u64, other.left_tail.len() as u64) as i64;
        for i in (left_start - period..left_start).rev() {
            if self.symbol(i) != other.symbol(i) {
                return None;
            }
        }
        let ceil = self.right_scan_end(other);
        let mut n1 = left_start - 1;
        while n1 < ceil && self.symbol(n1 + 1) == other.symbol(n1 + 1) {
            n1 += 1;
        }
        Some(n1)
    }

    /// Window rendering for reports: symbols on `[-radius, radius]`.
    pub fn window_string(&self, radius: i64, alphabet_size: u8) -> String {
        word_to_string(&self.symbols(-radius, (2 * radius + 1) as usize), alphabet_size)
    }
}

impl PartialEq for TwoSidedPoint {
    fn eq(&self, other: &Self) -> bool {
        self.first_difference(other).is_none()
    }
}

impl fmt::Display for TwoSidedPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w: String = self.window.iter().map(|&s| char::from(b'0' + s)).collect();
        let lt: String = self.left_tail.iter().map(|&s| char::from(b'0' + s)).collect();
        let rt: String = self.right_tail.iter().map(|&s| char::from(b'0' + s)).collect();
        write!(f, "({lt})^inf [{w}]@{} ({rt})^inf", self.lo)
    }
}

/// `d_lambda(x, y) = lambda^{min|i| with x_i != y_i}`, `0` for equal points.
pub fn metric_distance(sys: &SymbolicSystem, x: &TwoSidedPoint, y: &TwoSidedPoint) -> f64 {
    match x.first_difference(y) {
        None => 0.0,
        Some(n) => sys.lambda().powi(n as i32),
    }
}

/// Which seminorm convention to report. Locally constant functions read only
/// future coordinates, so both conventions agree; see `lipschitz_seminorm`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    OneSided,
    TwoSided,
}

/// A depth-n locally constant function, stored as one value per admissible
/// depth-n word in table order.
#[derive(Debug, Clone)]
pub struct CylinderFn<T> {
    table: Arc<WordTable>,
    values: Vec<T>,
}

pub type RealCf = CylinderFn<f64>;
pub type ComplexCf = CylinderFn<Complex64>;

impl<T: Copy> CylinderFn<T> {
    pub fn new(table: Arc<WordTable>, values: Vec<T>) -> Result<Self> {
        if values.len() != table.len() {
            return Err(Error::BadFunction(format!(
                "expected {} values for depth {}, got {}",
                table.len(),
                table.depth(),
                values.len()
            )));
        }
        Ok(CylinderFn { table, values })
    }

    pub fn constant(table: Arc<WordTable>, value: T) -> Self {
        let n = table.len();
        CylinderFn { table, values: vec![value; n] }
    }

    pub fn from_fn(table: Arc<WordTable>, mut f: impl FnMut(&[u8]) -> T) -> Self {
        let values = (0..table.len()).map(|r| f(table.word(r))).collect();
        CylinderFn { table, values }
    }

    pub fn depth(&self) -> usize {
        self.table.depth()
    }

    pub fn table(&self) -> &Arc<WordTable> {
        &self.table
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn value(&self, rank: usize) -> T {
        self.values[rank]
    }

    /// Value on the cylinder of `word`; the word may be longer than the
    /// function depth (extra symbols are ignored).
    pub fn eval_word(&self, word: &[u8]) -> T {
        let d = self.depth();
        debug_assert!(word.len() >= d);
        let rank = self
            .table
            .rank(&word[..d])
            .unwrap_or_else(|| panic!("inadmissible word {:?}", &word[..d]));
        self.values[rank]
    }

    /// Value at `sigma^k x`, reading symbols `k .. k+depth`.
    pub fn eval_shifted(&self, x: &TwoSidedPoint, k: i64) -> T {
        let word = x.symbols(k, self.depth());
        self.eval_word(&word)
    }

    /// Re-express at a deeper table (lossless).
    pub fn promote(&self, sys: &SymbolicSystem, depth: usize) -> Result<Self> {
        if depth < self.depth() {
            return Err(Error::DepthMismatch(format!(
                "cannot demote depth {} to {}",
                self.depth(),
                depth
            )));
        }
        if depth == self.depth() {
            return Ok(self.clone());
        }
        let table = enumerate_words(sys, depth)?;
        let values = (0..table.len()).map(|r| self.eval_word(table.word(r))).collect();
        Ok(CylinderFn { table, values })
    }
}

impl RealCf {
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    pub fn to_complex(&self) -> ComplexCf {
        CylinderFn {
            table: self.table.clone(),
            values: self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }
}

impl ComplexCf {
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }
}

/// Parsed JSON schema for potentials and roofs:
/// `{"depth": n, "values": {"word": value}}` with every admissible depth-n
/// word present and nothing else.
#[derive(Debug, Serialize, Deserialize)]
pub struct FunctionSpec {
    pub depth: usize,
    pub values: std::collections::BTreeMap<String, f64>,
}

pub fn real_cf_from_spec(sys: &SymbolicSystem, spec: &FunctionSpec) -> Result<RealCf> {
    let table = enumerate_words(sys, spec.depth)?;
    let mut values = vec![0.0f64; table.len()];
    let mut seen = vec![false; table.len()];
    for (key, &v) in &spec.values {
        let word = parse_word(key, sys.alphabet_size())?;
        if word.len() != spec.depth {
            return Err(Error::BadFunction(format!(
                "word {key:?} has length {} but depth is {}",
                word.len(),
                spec.depth
            )));
        }
        let rank = table
            .rank(&word)
            .ok_or_else(|| Error::BadFunction(format!("word {key:?} is not admissible")))?;
        if seen[rank] {
            return Err(Error::BadFunction(format!("word {key:?} appears twice")));
        }
        seen[rank] = true;
        values[rank] = v;
    }
    if let Some(r) = seen.iter().position(|&s| !s) {
        return Err(Error::BadFunction(format!(
            "missing value for admissible word {:?}",
            table.word_string(r)
        )));
    }
    CylinderFn::new(table, values)
}

pub fn real_cf_to_spec(f: &RealCf) -> FunctionSpec {
    let mut values = std::collections::BTreeMap::new();
    for r in 0..f.table().len() {
        values.insert(f.table().word_string(r), f.value(r));
    }
    FunctionSpec { depth: f.depth(), values }
}

/// Exact Lipschitz seminorm of a depth-n function:
/// `max |h(w) - h(w')| / lambda^k` over word pairs whose first disagreement
/// is at index `k`. Computed by scanning prefix groups; pairs counted at an
/// earlier split are dominated by their true first-difference term, so the
/// group maximum is exact.
///
/// Future-dependent functions have equal one- and two-sided seminorms: a
/// two-sided pair can always be chosen to agree on all negative indices,
/// which maximizes `N(x,y)`; differing earlier only shrinks the quotient.
pub fn lipschitz_seminorm_real(f: &RealCf, lambda: f64, _side: Side) -> f64 {
    seminorm_by_groups(f.table(), lambda, |range| {
        let vals = &f.values()[range.clone()];
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in vals {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        hi - lo
    })
}

pub fn lipschitz_seminorm_complex(f: &ComplexCf, lambda: f64, _side: Side) -> f64 {
    seminorm_by_groups(f.table(), lambda, |range| {
        planar_diameter(&f.values()[range.clone()])
    })
}

fn seminorm_by_groups(
    table: &WordTable,
    lambda: f64,
    diam: impl Fn(&std::ops::Range<usize>) -> f64,
) -> f64 {
    let depth = table.depth();
    let mut best = 0.0f64;
    // Stack of (range, prefix length). Words are sorted, so prefix groups
    // are contiguous rank ranges.
    let mut stack: Vec<(std::ops::Range<usize>, usize)> = vec![(0..table.len(), 0)];
    while let Some((range, k)) = stack.pop() {
        if range.len() < 2 || k >= depth {
            continue;
        }
        let d = diam(&range);
        let scale = lambda.powi(k as i32);
        if d / scale > best {
            best = d / scale;
        }
        // Fast exit: deeper groups cannot beat `best` if even the full
        // diameter over the remaining scales stays below it.
        if d / lambda.powi((depth - 1) as i32) <= best && d > 0.0 {
            // Subgroup diameters are at most d; the largest possible
            // quotient from this subtree is d / lambda^(depth-1).
            continue;
        }
        let mut start = range.start;
        while start < range.end {
            let sym = table.word(start)[k];
            let mut end = start + 1;
            while end < range.end && table.word(end)[k] == sym {
                end += 1;
            }
            stack.push((start..end, k + 1));
            start = end;
        }
    }
    best
}

/// Exact diameter of a planar point set. Monotone-chain hull plus rotating
/// calipers; small sets fall back to the pairwise scan.
pub fn planar_diameter(points: &[Complex64]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    if points.len() <= 48 {
        let mut best = 0.0f64;
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                best = best.max((points[i] - points[j]).norm_sqr());
            }
        }
        return best.sqrt();
    }
    let mut pts: Vec<(f64, f64)> = points.iter().map(|z| (z.re, z.im)).collect();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() < 2 {
        return 0.0;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev() {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    let h = hull.len();
    if h == 1 {
        return 0.0;
    }
    let d2 = |a: (f64, f64), b: (f64, f64)| {
        let dx = a.0 - b.0;
        let dy = a.1 - b.1;
        dx * dx + dy * dy
    };
    if h == 2 {
        return d2(hull[0], hull[1]).sqrt();
    }
    // Rotating calipers over antipodal pairs.
    let mut best = 0.0f64;
    let mut j = 1usize;
    for i in 0..h {
        let ni = (i + 1) % h;
        loop {
            let nj = (j + 1) % h;
            let edge = (hull[ni].0 - hull[i].0, hull[ni].1 - hull[i].1);
            let a = (hull[nj].0 - hull[j].0, hull[nj].1 - hull[j].1);
            if edge.0 * a.1 - edge.1 * a.0 > 0.0 {
                j = nj;
            } else {
                break;
            }
        }
        best = best.max(d2(hull[i], hull[j]));
        best = best.max(d2(hull[ni], hull[j]));
    }
    best.sqrt()
}
