//! Thermodynamic formalism on finite cylinder spaces: weighted transfer
//! operators, pressure and Ruelle-Perron-Frobenius data, normalized
//! potentials, the Gibbs property, and spectral gaps.
//!
//! Operators act on depth-n locally constant functions. For locally constant
//! potentials and roofs this finite-dimensional action is exact: the depth-n
//! coefficient space is invariant under the operator.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::shift::{
    enumerate_words, lipschitz_seminorm_complex, CylinderFn, ComplexCf, RealCf, Side,
    SymbolicSystem, WordTable,
};

/// Relative separation below which the leading eigenvalue is treated as
/// non-simple. Aperiodic systems stay far above this.
const SIMPLE_SEPARATION: f64 = 1e-9;

/// A real-valued locally constant potential.
#[derive(Debug, Clone)]
pub struct Potential {
    base: RealCf,
}

impl Potential {
    pub fn new(base: RealCf) -> Result<Self> {
        if base.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::BadFunction("potential values must be finite".into()));
        }
        Ok(Potential { base })
    }

    pub fn constant(sys: &SymbolicSystem, value: f64) -> Result<Self> {
        let table = enumerate_words(sys, 1)?;
        Potential::new(CylinderFn::constant(table, value))
    }

    pub fn base(&self) -> &RealCf {
        &self.base
    }

    pub fn depth(&self) -> usize {
        self.base.depth()
    }
}

/// Matrix of `L_{phi + s r}` acting on depth-n coefficient vectors, stored
/// sparsely by target word. Entry (w', w) is nonzero only when w' is a
/// one-step preimage word of w.
#[derive(Debug, Clone)]
pub struct TransferMatrix {
    table: Arc<WordTable>,
    s: Complex64,
    offsets: Vec<usize>,
    sources: Vec<u32>,
    weights: Vec<Complex64>,
}

impl TransferMatrix {
    pub fn dim(&self) -> usize {
        self.table.len()
    }

    pub fn depth(&self) -> usize {
        self.table.depth()
    }

    pub fn table(&self) -> &Arc<WordTable> {
        &self.table
    }

    pub fn s(&self) -> Complex64 {
        self.s
    }

    pub fn apply(&self, v: &[Complex64], out: &mut [Complex64]) {
        for t in 0..self.dim() {
            let mut acc = Complex64::default();
            for k in self.offsets[t]..self.offsets[t + 1] {
                acc += self.weights[k] * v[self.sources[k] as usize];
            }
            out[t] = acc;
        }
    }

    pub fn apply_adjoint(&self, v: &[Complex64], out: &mut [Complex64]) {
        out.iter_mut().for_each(|z| *z = Complex64::default());
        for t in 0..self.dim() {
            for k in self.offsets[t]..self.offsets[t + 1] {
                out[self.sources[k] as usize] += self.weights[k].conj() * v[t];
            }
        }
    }

    /// Real action; valid when `s` is real so all weights are positive.
    pub fn apply_real(&self, v: &[f64], out: &mut [f64]) {
        debug_assert!(self.s.im == 0.0);
        for t in 0..self.dim() {
            let mut acc = 0.0;
            for k in self.offsets[t]..self.offsets[t + 1] {
                acc += self.weights[k].re * v[self.sources[k] as usize];
            }
            out[t] = acc;
        }
    }

    pub fn apply_transpose_real(&self, v: &[f64], out: &mut [f64]) {
        debug_assert!(self.s.im == 0.0);
        out.iter_mut().for_each(|x| *x = 0.0);
        for t in 0..self.dim() {
            for k in self.offsets[t]..self.offsets[t + 1] {
                out[self.sources[k] as usize] += self.weights[k].re * v[t];
            }
        }
    }

    pub fn row_sums(&self) -> Vec<Complex64> {
        (0..self.dim())
            .map(|t| self.weights[self.offsets[t]..self.offsets[t + 1]].iter().sum())
            .collect()
    }

    pub fn is_stochastic(&self, tol: f64) -> bool {
        self.s.im == 0.0 && self.row_sums().iter().all(|z| (z - 1.0).norm() <= tol)
    }

    /// `L^n h` as a cylinder function.
    pub fn iterate(&self, h: &ComplexCf, n: usize) -> ComplexCf {
        let mut v = h.values().to_vec();
        let mut w = vec![Complex64::default(); self.dim()];
        for _ in 0..n {
            self.apply(&v, &mut w);
            std::mem::swap(&mut v, &mut w);
        }
        CylinderFn::new(self.table.clone(), v).expect("dimension preserved")
    }
}

/// Builds the matrix of `L_{phi + s r}` on depth-`depth` words. The roof term
/// is omitted when `roof` is `None` (equivalently `s = 0` with no twist).
pub fn build_transfer_matrix(
    sys: &SymbolicSystem,
    phi: &Potential,
    roof: Option<&RealCf>,
    s: Complex64,
    depth: usize,
) -> Result<TransferMatrix> {
    if phi.depth() > depth {
        return Err(Error::DepthMismatch(format!(
            "potential depth {} exceeds operator depth {depth}",
            phi.depth()
        )));
    }
    if let Some(r) = roof {
        if r.depth() > depth {
            return Err(Error::DepthMismatch(format!(
                "roof depth {} exceeds operator depth {depth}",
                r.depth()
            )));
        }
        if r.min_value() <= 0.0 {
            return Err(Error::PreconditionUnmet("roof must be strictly positive".into()));
        }
    }
    let table = enumerate_words(sys, depth)?;
    let mut offsets = Vec::with_capacity(table.len() + 1);
    let mut sources = Vec::new();
    let mut weights = Vec::new();
    offsets.push(0);
    let mut yword = vec![0u8; depth];
    for t in 0..table.len() {
        let w = table.word(t);
        for a in sys.predecessors(w[0]) {
            yword[0] = a;
            yword[1..].copy_from_slice(&w[..depth - 1]);
            let src = table.rank(&yword).expect("preimage word admissible");
            let mut expo = Complex64::new(phi.base().eval_word(&yword), 0.0);
            if let Some(r) = roof {
                expo += s * r.eval_word(&yword);
            }
            sources.push(src as u32);
            weights.push(expo.exp());
        }
        offsets.push(sources.len());
    }
    Ok(TransferMatrix { table, s, offsets, sources, weights })
}

/// Pressure, normalized eigendata, cylinder measure, measured Gibbs constant,
/// and spectral gap of an untwisted transfer operator.
#[derive(Debug, Clone)]
pub struct GibbsData {
    pressure: f64,
    eigenfunction: RealCf,
    eigenmeasure: Vec<f64>,
    cylinder_weights: Vec<f64>,
    gibbs_constant: f64,
    gap_delta: f64,
    gap_c15: f64,
}

impl GibbsData {
    pub fn pressure(&self) -> f64 {
        self.pressure
    }

    /// Positive right eigenfunction, scaled so its eigenmeasure integral is 1.
    pub fn eigenfunction(&self) -> &RealCf {
        &self.eigenfunction
    }

    /// Left eigenvector as depth-n cylinder masses, total mass 1.
    pub fn eigenmeasure(&self) -> &[f64] {
        &self.eigenmeasure
    }

    /// Invariant Gibbs measure of depth-n cylinders (eigenfunction times
    /// eigenmeasure), total mass 1.
    pub fn cylinder_weights(&self) -> &[f64] {
        &self.cylinder_weights
    }

    pub fn depth(&self) -> usize {
        self.eigenfunction.depth()
    }

    pub fn table(&self) -> &Arc<WordTable> {
        self.eigenfunction.table()
    }

    pub fn gibbs_constant(&self) -> f64 {
        self.gibbs_constant
    }

    /// (second eigenvalue modulus ratio, fitted decay constant).
    pub fn gap(&self) -> (f64, f64) {
        (self.gap_delta, self.gap_c15)
    }

    /// Measure of the cylinder of `word` (any length up to the depth).
    pub fn weight_of_prefix(&self, word: &[u8]) -> f64 {
        let table = self.table();
        debug_assert!(word.len() <= table.depth());
        let mut acc = 0.0;
        for r in 0..table.len() {
            if &table.word(r)[..word.len()] == word {
                acc += self.cylinder_weights[r];
            }
        }
        acc
    }

    /// Expectation of a cylinder function of depth at most the data depth.
    pub fn integrate_real(&self, f: &RealCf) -> f64 {
        let table = self.table();
        (0..table.len())
            .map(|r| self.cylinder_weights[r] * f.eval_word(table.word(r)))
            .sum()
    }

    pub fn integrate_complex(&self, f: &ComplexCf) -> Complex64 {
        let table = self.table();
        (0..table.len())
            .map(|r| f.eval_word(table.word(r)) * self.cylinder_weights[r])
            .sum()
    }
}

/// Ruelle-Perron-Frobenius data of an untwisted operator. The potential must
/// be the one the matrix was built from; it is used to measure the Gibbs
/// constant on cylinders up to `depth + 2`.
pub fn rpf_data(sys: &SymbolicSystem, m: &TransferMatrix, phi: &Potential) -> Result<GibbsData> {
    if m.s != Complex64::default() {
        return Err(Error::PreconditionUnmet("rpf data requires s = 0".into()));
    }
    let dim = m.dim();
    let (lambda, right) = linalg::perron_leading(dim, |v, out| m.apply_real(v, out))?;
    let (lambda_l, left) = linalg::perron_leading(dim, |v, out| m.apply_transpose_real(v, out))?;
    debug_assert!((lambda - lambda_l).abs() <= 1e-9 * lambda.abs());
    let l2 = linalg::second_modulus(dim, lambda, &right, &left, 0x52504601, |v, out| {
        m.apply_real(v, out)
    });
    let sep = (lambda - l2) / lambda;
    if sep < SIMPLE_SEPARATION {
        return Err(Error::DegenerateSpectrum { sep });
    }
    let pressure = lambda.ln();

    // left is already sum-normalized; scale right so that sum(f * nu) = 1.
    let eigenmeasure = left;
    let scale: f64 = right.iter().zip(&eigenmeasure).map(|(f, nu)| f * nu).sum();
    let eigenfunction_values: Vec<f64> = right.iter().map(|f| f / scale).collect();
    let cylinder_weights: Vec<f64> = eigenfunction_values
        .iter()
        .zip(&eigenmeasure)
        .map(|(f, nu)| f * nu)
        .collect();
    let eigenfunction = CylinderFn::new(m.table.clone(), eigenfunction_values)?;

    let mut data = GibbsData {
        pressure,
        eigenfunction,
        eigenmeasure,
        cylinder_weights,
        gibbs_constant: 1.0,
        gap_delta: l2 / lambda,
        gap_c15: 0.0,
    };
    data.gibbs_constant = gibbs_ratio_extrema(sys, &data, phi, pressure, m.depth() + 2)?;
    data.gap_c15 = fit_gap_constant(sys, m, &data)?;
    Ok(data)
}

/// Convenience: matrix build plus `rpf_data` at the potential's own depth
/// (or deeper).
pub fn rpf(sys: &SymbolicSystem, phi: &Potential, depth: usize) -> Result<GibbsData> {
    let m = build_transfer_matrix(sys, phi, None, Complex64::default(), depth)?;
    rpf_data(sys, &m, phi)
}

/// Pressure of a locally constant potential.
pub fn pressure(sys: &SymbolicSystem, phi: &Potential) -> Result<f64> {
    let m = build_transfer_matrix(sys, phi, None, Complex64::default(), phi.depth())?;
    let (lambda, _) = linalg::perron_leading(m.dim(), |v, out| m.apply_real(v, out))?;
    Ok(lambda.ln())
}

/// Exact measure of the cylinder `word` (any length) under the Gibbs data.
/// Lengths past the data depth use the eigenmeasure recursion
/// `nu[a w] = e^{phi(a w)} nu[w] / lambda`.
pub fn cylinder_measure(gibbs: &GibbsData, phi: &Potential, word: &[u8]) -> f64 {
    let n = gibbs.depth();
    if word.len() <= n {
        return gibbs.weight_of_prefix(word);
    }
    let lambda = gibbs.pressure.exp();
    // nu of the depth-n suffix, then extend leftward.
    let table = gibbs.table();
    let suffix = &word[word.len() - n..];
    let rank = table.rank(suffix).expect("admissible suffix");
    let mut nu = gibbs.eigenmeasure[rank];
    for j in (0..word.len() - n).rev() {
        nu *= phi.base().eval_word(&word[j..]).exp() / lambda;
    }
    let f = gibbs.eigenfunction.eval_word(word);
    f * nu
}

/// Measured two-sided Gibbs constant: max over cylinders of length <= n_max
/// of the ratio `mu[w] / e^{phi_k(x) - k P}` and its reciprocal, with `x`
/// the lexicographically least admissible extension of `w`.
pub fn gibbs_ratio_extrema(
    sys: &SymbolicSystem,
    gibbs: &GibbsData,
    phi: &Potential,
    pressure: f64,
    n_max: usize,
) -> Result<f64> {
    let dphi = phi.depth();
    let mut worst = 1.0f64;
    for k in 1..=n_max {
        let table = enumerate_words(sys, k)?;
        for rank in 0..table.len() {
            let word = table.word(rank);
            let mu = cylinder_measure(gibbs, phi, word);
            // Extend to read the Birkhoff sum exactly.
            let mut x = word.to_vec();
            while x.len() < k + dphi - 1 {
                let next = sys
                    .successors(*x.last().unwrap())
                    .next()
                    .expect("every symbol has a successor");
                x.push(next);
            }
            let mut birkhoff = 0.0;
            for j in 0..k {
                birkhoff += phi.base().eval_word(&x[j..]);
            }
            let ratio = mu / (birkhoff - k as f64 * pressure).exp();
            if !ratio.is_finite() || ratio <= 0.0 {
                return Err(Error::DegenerateSpectrum { sep: 0.0 });
            }
            worst = worst.max(ratio).max(1.0 / ratio);
        }
    }
    Ok(worst)
}

/// The op from the contract: measured Gibbs constant for a normalized
/// potential over cylinders of length up to `n_max`.
pub fn verify_gibbs(
    sys: &SymbolicSystem,
    gibbs: &GibbsData,
    phi_normalized: &Potential,
    n_max: usize,
) -> Result<f64> {
    if gibbs.pressure.abs() > 1e-9 {
        return Err(Error::PreconditionUnmet(format!(
            "potential is not normalized (pressure {})",
            gibbs.pressure
        )));
    }
    gibbs_ratio_extrema(sys, gibbs, phi_normalized, 0.0, n_max)
}

/// Normalizes a potential: `phi' = phi + log f - log f o sigma - P`, so that
/// `L_{phi'} 1 = 1` at matrix level and `P(phi') = 0`. When the eigenfunction
/// is constant the depth is unchanged; otherwise the coboundary raises the
/// depth by one above the eigenfunction's.
pub fn normalize_potential(
    sys: &SymbolicSystem,
    phi: &Potential,
    gibbs: &GibbsData,
) -> Result<Potential> {
    let f = demote_to_true_depth(sys, &gibbs.eigenfunction)?;
    let fv = f.values();
    let spread = fv.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let p = gibbs.pressure;
    if spread.1 - spread.0 <= 1e-12 * spread.1.abs() {
        let table = phi.base().table().clone();
        let values = phi.base().values().iter().map(|v| v - p).collect();
        return Potential::new(CylinderFn::new(table, values)?);
    }
    let depth = phi.depth().max(f.depth() + 1);
    let table = enumerate_words(sys, depth)?;
    let values = (0..table.len())
        .map(|rank| {
            let w = table.word(rank);
            phi.base().eval_word(w) + f.eval_word(w).ln() - f.eval_word(&w[1..]).ln() - p
        })
        .collect();
    Potential::new(CylinderFn::new(table, values)?)
}

/// Drops trailing coordinates a function does not actually depend on.
fn demote_to_true_depth(sys: &SymbolicSystem, f: &RealCf) -> Result<RealCf> {
    let mut current = f.clone();
    'outer: while current.depth() > 1 {
        let shallow = enumerate_words(sys, current.depth() - 1)?;
        let mut values = Vec::with_capacity(shallow.len());
        for r in 0..shallow.len() {
            let prefix = shallow.word(r);
            let mut val = None;
            for t in 0..current.table().len() {
                let w = current.table().word(t);
                if &w[..prefix.len()] == prefix {
                    match val {
                        None => val = Some(current.value(t)),
                        Some(v) => {
                            if (v - current.value(t)).abs() > 1e-12 * (1.0 + v.abs()) {
                                break 'outer;
                            }
                        }
                    }
                }
            }
            values.push(val.expect("prefix realized"));
        }
        current = CylinderFn::new(shallow, values)?;
    }
    Ok(current)
}

/// Spectral gap of a normalized untwisted operator: the second eigenvalue
/// modulus `delta`, plus the constant `C` fitted to
/// `||L^k h - mu(h)||_Lip <= C delta^k ||h||_Lip` over random `h` and the
/// numerically meaningful range of `k <= 50`.
pub fn spectral_gap(sys: &SymbolicSystem, m: &TransferMatrix, phi: &Potential) -> Result<(f64, f64)> {
    if !m.is_stochastic(1e-9) {
        return Err(Error::PreconditionUnmet(
            "spectral gap expects a normalized operator (row sums 1)".into(),
        ));
    }
    let gibbs = rpf_data(sys, m, phi)?;
    let c15 = fit_gap_constant(sys, m, &gibbs)?;
    Ok((gibbs.gap_delta, c15))
}

fn fit_gap_constant(sys: &SymbolicSystem, m: &TransferMatrix, gibbs: &GibbsData) -> Result<f64> {
    let dim = m.dim();
    let lambda = gibbs.pressure.exp();
    let delta = gibbs.gap_delta;
    let f = &gibbs.eigenfunction;
    // Conjugated, pressure-scaled action: row sums one, eigenmeasure = mu.
    let conj_apply = |v: &[Complex64], out: &mut [Complex64]| {
        let scaled: Vec<Complex64> = (0..dim).map(|r| v[r] * f.value(r)).collect();
        m.apply(&scaled, out);
        for (r, z) in out.iter_mut().enumerate() {
            *z /= lambda * f.value(r);
        }
    };
    let lam = sys.lambda();
    let lip_norm = |h: &ComplexCf| h.sup_norm() + lipschitz_seminorm_complex(h, lam, Side::OneSided);

    let mut rng = ChaCha8Rng::seed_from_u64(0xC15);
    // Depth-n operators carry a nilpotent transient of length n on top of
    // the spectral decay; fit past it, and stop before delta^k reaches the
    // floating-point floor.
    let transient = m.depth();
    let k_cap = if delta > 1e-12 {
        (transient as f64 + (-12.0 * std::f64::consts::LN_10) / delta.ln())
            .floor()
            .clamp(1.0, 50.0) as usize
    } else {
        transient + 2
    };
    let mut c15 = 0.0f64;
    for _ in 0..24 {
        let h_values: Vec<Complex64> = (0..dim)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let h = CylinderFn::new(m.table.clone(), h_values)?;
        let mean: Complex64 = (0..dim).map(|r| h.value(r) * gibbs.cylinder_weights[r]).sum();
        let denom_base = lip_norm(&h);
        let mut v = h.values().to_vec();
        let mut w = vec![Complex64::default(); dim];
        for k in 1..=k_cap {
            conj_apply(&v, &mut w);
            std::mem::swap(&mut v, &mut w);
            let centered = CylinderFn::new(
                m.table.clone(),
                v.iter().map(|z| z - mean).collect::<Vec<_>>(),
            )?;
            let num = lip_norm(&centered);
            if delta <= 1e-12 {
                if k >= transient && num > 1e-9 * denom_base {
                    return Err(Error::DegenerateSpectrum { sep: 0.0 });
                }
            } else {
                c15 = c15.max(num / (delta.powi(k as i32) * denom_base));
            }
        }
    }
    Ok(c15)
}
