//! Correlation functions of the suspension flow and decay-exponent fitting.
//!
//! Observables are products `coeff(x) * psi(u / r(x))` with a polynomial
//! bump profile, the smallest class that is genuinely smooth on the
//! suspension space and exercises both the base and flow directions. The
//! deterministic estimator is exact (piecewise polynomial quadrature over
//! cylinders); the Monte-Carlo estimator samples the stationary chain with
//! per-batch seeds for reproducibility.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{adaptive_simpson, fit_line, gauss_legendre};
use crate::shift::{enumerate_words, ComplexCf, CylinderFn, RealCf, Side, WordTable};
use crate::shift::{lipschitz_seminorm_complex, SymbolicSystem};
use crate::suspension::RoofFunction;
use crate::thermo::{GibbsData, Potential};

/// Dense polynomial in one variable; the profile algebra stays exact so the
/// height quadrature can use Gauss nodes of matching degree.
#[derive(Debug, Clone)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Polynomial { coeffs }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn derivative(&self) -> Polynomial {
        if self.coeffs.len() <= 1 {
            return Polynomial::new(vec![0.0]);
        }
        Polynomial::new(
            self.coeffs[1..]
                .iter()
                .enumerate()
                .map(|(i, c)| (i + 1) as f64 * c)
                .collect(),
        )
    }

    pub fn sup_on_unit_interval(&self) -> f64 {
        let mut m = self.eval(0.0).abs().max(self.eval(1.0).abs());
        for i in 1..512 {
            m = m.max(self.eval(i as f64 / 512.0).abs());
        }
        m
    }

    /// `(4 v (1 - v))^k`, the order-k bump normalized to peak 1.
    pub fn bump(k: usize) -> Polynomial {
        let mut p = Polynomial::new(vec![1.0]);
        for _ in 0..k {
            // multiply by 4v - 4v^2
            let mut next = vec![0.0; p.coeffs.len() + 2];
            for (i, c) in p.coeffs.iter().enumerate() {
                next[i + 1] += 4.0 * c;
                next[i + 2] -= 4.0 * c;
            }
            p = Polynomial::new(next);
        }
        p
    }
}

/// An observable `E(x, u) = coeff(x) * psi(u / r(x))` on the suspension
/// space. The profile vanishes at both endpoints (to order k for the bump
/// constructor), which makes E well defined under the roof identification.
#[derive(Debug, Clone)]
pub struct Observable {
    coefficients: ComplexCf,
    profile: Polynomial,
    order: usize,
}

impl Observable {
    /// The pinned class: polynomial bump of smoothness order `k`.
    pub fn bump(coefficients: ComplexCf, k: usize) -> Self {
        Observable { coefficients, profile: Polynomial::bump(k), order: k }
    }

    pub fn bump_real(coefficients: RealCf, k: usize) -> Self {
        Observable::bump(coefficients.to_complex(), k)
    }

    /// Constant-one observable (order 0 profile), integrating to 1.
    pub fn unit(sys: &SymbolicSystem) -> Result<Self> {
        let t = enumerate_words(sys, 1)?;
        Ok(Observable::bump(CylinderFn::constant(t, Complex64::new(1.0, 0.0)), 0))
    }

    /// Custom polynomial profile; the endpoint values must vanish unless the
    /// profile is constant (order 0).
    pub fn with_profile(coefficients: ComplexCf, profile: Polynomial, order: usize) -> Result<Self> {
        if order > 0 && (profile.eval(0.0).abs() > 1e-12 || profile.eval(1.0).abs() > 1e-12) {
            return Err(Error::BadFunction(
                "profile must vanish at both endpoints".into(),
            ));
        }
        Ok(Observable { coefficients, profile, order })
    }

    pub fn coefficients(&self) -> &ComplexCf {
        &self.coefficients
    }

    pub fn profile(&self) -> &Polynomial {
        &self.profile
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Reported smoothness norm: coefficient sup plus seminorm, times the
    /// largest profile-derivative sup scaled by the minimal roof value.
    pub fn ck_norm(&self, sys: &SymbolicSystem, roof: &RoofFunction) -> f64 {
        let coeff_part = self.coefficients.sup_norm()
            + lipschitz_seminorm_complex(&self.coefficients, sys.lambda(), Side::OneSided);
        let mut profile_part = 0.0f64;
        let mut p = self.profile.clone();
        let scale = roof.min_value().min(1.0);
        for j in 0..=self.order {
            profile_part = profile_part.max(p.sup_on_unit_interval() / scale.powi(j as i32));
            p = p.derivative();
        }
        coeff_part * profile_part.max(1e-300)
    }

    fn eval(&self, word: &[u8], v: f64) -> Complex64 {
        self.coefficients.eval_word(word) * self.profile.eval(v)
    }
}

/// `int_0^1` of the profile, by adaptive quadrature (the bump also has the
/// closed form `4^k (k!)^2 / (2k+1)!` used as a test oracle).
pub fn profile_integral(p: &Polynomial) -> f64 {
    adaptive_simpson(&|v| p.eval(v), 0.0, 1.0, 1e-10)
}

/// Integral of an observable against the normalized suspension measure
/// `mu x Leb / mean(r)`. Exact cylinder sums times the profile quadrature.
pub fn suspension_integral(
    e: &Observable,
    gibbs: &GibbsData,
    roof: &RoofFunction,
) -> Result<Complex64> {
    let depth = gibbs.depth();
    if e.coefficients.depth() > depth || roof.depth() > depth {
        return Err(Error::DepthMismatch(format!(
            "integral needs measure depth >= max(coeff {}, roof {})",
            e.coefficients.depth(),
            roof.depth()
        )));
    }
    let table = gibbs.table();
    let psi = profile_integral(&e.profile);
    let mut weighted = Complex64::default();
    let mut mean_roof = 0.0f64;
    for rank in 0..table.len() {
        let w = table.word(rank);
        let mass = gibbs.cylinder_weights()[rank];
        let rv = roof.base().eval_word(w);
        weighted += e.coefficients.eval_word(w) * (mass * rv);
        mean_roof += mass * rv;
    }
    Ok(weighted * psi / mean_roof)
}

/// How a correlation value was estimated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Estimator {
    Deterministic,
    MonteCarlo { samples: u64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrelationPoint {
    pub t: f64,
    pub rho_re: f64,
    pub rho_im: f64,
    pub stderr: f64,
}

/// A sampled correlation function with its estimator metadata.
#[derive(Debug, Clone, Serialize)]
pub struct CorrelationSeries {
    pub points: Vec<CorrelationPoint>,
    pub estimator: Estimator,
    /// `3 x max standard error` across the grid; deterministic series get 0.
    pub noise_floor: f64,
}

/// Exact correlation at one time: piecewise-polynomial height quadrature
/// over depth-n cylinders, transporting by the flow. The measure depth
/// bounds the representable horizon; beyond it the transport runs out of
/// symbols and reports `WindowExhausted`.
pub fn correlation_deterministic(
    e: &Observable,
    f: &Observable,
    gibbs: &GibbsData,
    roof: &RoofFunction,
    t: f64,
) -> Result<Complex64> {
    if t < 0.0 {
        return Err(Error::PreconditionUnmet("correlation requires t >= 0".into()));
    }
    let depth = gibbs.depth();
    let need = e.coefficients.depth().max(f.coefficients.depth()).max(roof.depth());
    if need > depth {
        return Err(Error::DepthMismatch(
            "measure depth below observable/roof depth".into(),
        ));
    }
    let table = gibbs.table();
    let rd = roof.depth();
    let ed = e.coefficients.depth();
    let order = gauss_order(e, f);
    let (nodes, weights) = gauss_legendre(order);

    let mut acc = Complex64::default();
    let mut mean_roof = 0.0f64;
    for rank in 0..table.len() {
        let w = table.word(rank);
        let mass = gibbs.cylinder_weights()[rank];
        let r_w = roof.base().eval_word(w);
        mean_roof += mass * r_w;
        // Crossing counts over u in [0, r_w): k(u) with r_k <= u + t < r_{k+1}.
        // Breakpoints at u = r_k - t.
        let mut partials = vec![0.0f64]; // r_0, r_1, ...
        let mut k0 = None;
        let mut k = 0usize;
        loop {
            let r_k = *partials.last().unwrap();
            if k + rd > depth {
                // Need r(sigma^k w) but the word is exhausted; only fatal if
                // the integration still needs this crossing.
                if r_k < r_w + t {
                    return Err(Error::WindowExhausted);
                }
                break;
            }
            let next = r_k + roof.base().eval_word(&w[k..]);
            if r_k <= t && t < next {
                k0 = Some(k);
            }
            if next >= r_w + t {
                partials.push(next);
                break;
            }
            partials.push(next);
            k += 1;
        }
        let k0 = k0.ok_or(Error::WindowExhausted)?;
        let k_end = partials.len() - 2;
        for kk in k0..=k_end {
            let lo = (partials[kk] - t).max(0.0);
            let hi = (partials[kk + 1] - t).min(r_w);
            if hi <= lo {
                continue;
            }
            if kk + ed > depth || kk + rd > depth {
                return Err(Error::WindowExhausted);
            }
            let r_target = roof.base().eval_word(&w[kk..]);
            let ce = e.coefficients.eval_word(&w[kk..]);
            let cf = f.coefficients.eval_word(w);
            // Gauss quadrature of the polynomial piece, exact at this order.
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (hi + lo);
            let mut piece = 0.0f64;
            let mut piece_im = 0.0f64;
            for (x, wt) in nodes.iter().zip(&weights) {
                let u = mid + half * x;
                let ev = e.profile.eval((u + t - partials[kk]) / r_target);
                let fv = f.profile.eval(u / r_w);
                let val = ce * cf * (ev * fv);
                piece += wt * val.re;
                piece_im += wt * val.im;
            }
            acc += Complex64::new(piece * half, piece_im * half) * mass;
        }
    }
    let mean = acc / mean_roof;
    let ie = suspension_integral(e, gibbs, roof)?;
    let if_ = suspension_integral(f, gibbs, roof)?;
    Ok(mean - ie * if_)
}

fn gauss_order(e: &Observable, f: &Observable) -> usize {
    let deg = e.profile.degree() + f.profile.degree();
    (deg / 2 + 1).max(2)
}

/// Stationary sampler for the Gibbs measure of a normalized potential:
/// initial words from the cylinder weights, extensions from the one-step
/// conditional weights.
pub struct GibbsSampler<'a> {
    sys: &'a SymbolicSystem,
    table: std::sync::Arc<WordTable>,
    cumulative: Vec<f64>,
    context_len: usize,
    transitions: std::collections::HashMap<Vec<u8>, Vec<(u8, f64)>>,
}

impl<'a> GibbsSampler<'a> {
    pub fn new(
        sys: &'a SymbolicSystem,
        phi_normalized: &Potential,
        gibbs: &GibbsData,
    ) -> Result<Self> {
        if gibbs.pressure().abs() > 1e-9 {
            return Err(Error::PreconditionUnmet(
                "sampler expects a normalized potential (zero pressure)".into(),
            ));
        }
        let n = gibbs.depth();
        if phi_normalized.depth() > n {
            return Err(Error::DepthMismatch("potential deeper than the measure".into()));
        }
        let table = gibbs.table().clone();
        let mut cumulative = Vec::with_capacity(table.len());
        let mut acc = 0.0;
        for &w in gibbs.cylinder_weights() {
            acc += w;
            cumulative.push(acc);
        }
        let context_len = n - 1;
        let mut transitions: std::collections::HashMap<Vec<u8>, Vec<(u8, f64)>> =
            std::collections::HashMap::new();
        let contexts: Vec<Vec<u8>> = if context_len == 0 {
            vec![Vec::new()]
        } else {
            enumerate_words(sys, context_len)?.iter().map(|w| w.to_vec()).collect()
        };
        for ctx in contexts {
            let mut row = Vec::new();
            let mut acc = 0.0;
            for a in 0..sys.alphabet_size() {
                if let Some(&last) = ctx.last() {
                    if !sys.admissible(last, a) {
                        continue;
                    }
                }
                let mut word = ctx.clone();
                word.push(a);
                let p = phi_normalized.base().eval_word(&word).exp();
                acc += p;
                row.push((a, acc));
            }
            if (acc - 1.0).abs() > 1e-9 {
                return Err(Error::PreconditionUnmet(format!(
                    "conditional weights sum to {acc}, potential not normalized"
                )));
            }
            transitions.insert(ctx, row);
        }
        Ok(GibbsSampler { sys, table, cumulative, context_len, transitions })
    }

    pub fn sample_word(&self, rng: &mut ChaCha8Rng) -> Vec<u8> {
        let x: f64 = rng.gen();
        let idx = self.cumulative.partition_point(|&c| c < x).min(self.table.len() - 1);
        self.table.word(idx).to_vec()
    }

    pub fn extend(&self, word: &mut Vec<u8>, rng: &mut ChaCha8Rng) {
        let ctx: Vec<u8> = if self.context_len == 0 {
            Vec::new()
        } else {
            word[word.len() - self.context_len..].to_vec()
        };
        let row = &self.transitions[&ctx];
        let x: f64 = rng.gen();
        for &(a, cum) in row {
            if x <= cum {
                word.push(a);
                return;
            }
        }
        word.push(row.last().expect("nonempty row").0);
    }

    pub fn alphabet(&self) -> u8 {
        self.sys.alphabet_size()
    }
}

/// Monte-Carlo correlation at one time: stationary-chain base samples,
/// length-biased acceptance for the suspension marginal, uniform heights,
/// with the product centered by the exact integrals. Returns the estimate
/// and its standard error.
#[allow(clippy::too_many_arguments)]
pub fn correlation_monte_carlo(
    sys: &SymbolicSystem,
    e: &Observable,
    f: &Observable,
    phi_normalized: &Potential,
    gibbs: &GibbsData,
    roof: &RoofFunction,
    t: f64,
    samples: u64,
    seed: u64,
) -> Result<(Complex64, f64)> {
    if t < 0.0 {
        return Err(Error::PreconditionUnmet("correlation requires t >= 0".into()));
    }
    let sampler = GibbsSampler::new(sys, phi_normalized, gibbs)?;
    let r_max = roof.max_value();
    let rd = roof.depth();
    let ed = e.coefficients.depth();
    let fd = f.coefficients.depth();

    let batch: u64 = 1 << 14;
    let n_batches = samples.div_ceil(batch);
    let partials: Vec<(Complex64, f64, f64, u64)> = (0..n_batches)
        .into_par_iter()
        .map(|bi| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9E3779B97F4A7C15u64.wrapping_mul(bi + 1)));
            let count = batch.min(samples - bi * batch);
            let mut sum = Complex64::default();
            let mut sq_re = 0.0f64;
            let mut sq_im = 0.0f64;
            for _ in 0..count {
                // Length-biased base point.
                let mut word = loop {
                    let mut w = sampler.sample_word(&mut rng);
                    while w.len() < rd {
                        sampler.extend(&mut w, &mut rng);
                    }
                    let r_w = roof.base().eval_word(&w);
                    if rng.gen::<f64>() * r_max <= r_w {
                        break w;
                    }
                };
                let r_w = roof.base().eval_word(&word);
                let u = rng.gen::<f64>() * r_w;
                while word.len() < fd {
                    sampler.extend(&mut word, &mut rng);
                }
                let f_val = f.eval(&word, u / r_w);
                // Transport forward.
                let mut k = 0usize;
                let mut u_t = u + t;
                loop {
                    while word.len() < k + rd {
                        sampler.extend(&mut word, &mut rng);
                    }
                    let top = roof.base().eval_word(&word[k..]);
                    if u_t < top {
                        break;
                    }
                    u_t -= top;
                    k += 1;
                }
                while word.len() < k + ed.max(rd) {
                    sampler.extend(&mut word, &mut rng);
                }
                let r_target = roof.base().eval_word(&word[k..]);
                let e_val = e.eval(&word[k..], u_t / r_target);
                let v = e_val * f_val;
                sum += v;
                sq_re += v.re * v.re;
                sq_im += v.im * v.im;
            }
            (sum, sq_re, sq_im, count)
        })
        .collect();

    let mut sum = Complex64::default();
    let mut sq_re = 0.0;
    let mut sq_im = 0.0;
    let mut n = 0u64;
    for (s, a, b, c) in partials {
        sum += s;
        sq_re += a;
        sq_im += b;
        n += c;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var_re = (sq_re / nf - mean.re * mean.re).max(0.0);
    let var_im = (sq_im / nf - mean.im * mean.im).max(0.0);
    let stderr = ((var_re + var_im) / nf).sqrt();
    let ie = suspension_integral(e, gibbs, roof)?;
    let if_ = suspension_integral(f, gibbs, roof)?;
    Ok((mean - ie * if_, stderr))
}

/// Correlation sampled over a time grid with either estimator.
#[allow(clippy::too_many_arguments)]
pub fn correlation_series(
    sys: &SymbolicSystem,
    e: &Observable,
    f: &Observable,
    phi_normalized: &Potential,
    gibbs: &GibbsData,
    roof: &RoofFunction,
    t_grid: &[f64],
    estimator: Estimator,
    seed: u64,
) -> Result<CorrelationSeries> {
    let mut points = Vec::with_capacity(t_grid.len());
    match estimator {
        Estimator::Deterministic => {
            for &t in t_grid {
                let rho = correlation_deterministic(e, f, gibbs, roof, t)?;
                points.push(CorrelationPoint { t, rho_re: rho.re, rho_im: rho.im, stderr: 0.0 });
            }
        }
        Estimator::MonteCarlo { samples } => {
            for (i, &t) in t_grid.iter().enumerate() {
                let (rho, stderr) = correlation_monte_carlo(
                    sys,
                    e,
                    f,
                    phi_normalized,
                    gibbs,
                    roof,
                    t,
                    samples,
                    seed ^ ((i as u64 + 1) << 32),
                )?;
                points.push(CorrelationPoint { t, rho_re: rho.re, rho_im: rho.im, stderr });
            }
        }
    }
    let noise_floor =
        points.iter().map(|p| 3.0 * p.stderr).fold(0.0f64, f64::max);
    Ok(CorrelationSeries { points, estimator, noise_floor })
}

/// Decay classification of a fitted series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DecayClass {
    NonMixing,
    Polynomial,
    SuperPolynomial,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    /// Fitted exponent `n` of the envelope `|rho| ~ t^{-n}`.
    pub exponent: f64,
    pub intercept: f64,
    /// First grid time at which `|rho|` sinks below the noise floor.
    pub first_below_floor: Option<f64>,
    pub envelope_points: usize,
    pub class: DecayClass,
}

/// Exponent threshold beyond which a fit is reported as faster than any
/// polynomial resolvable on the grid.
pub const SUPERPOLYNOMIAL_THRESHOLD: f64 = 10.0;

/// Log-log regression on the upper envelope of `|rho|` over the points above
/// the noise floor. The envelope keeps points not dominated by any later
/// point, which strips oscillation zeros out of the fit.
pub fn decay_fit(series: &CorrelationSeries) -> Result<DecayFit> {
    if series.points.len() < 20 {
        return Err(Error::PreconditionUnmet("need at least 20 grid points".into()));
    }
    let floor = series.noise_floor;
    let first_below_floor = series
        .points
        .iter()
        .find(|p| magnitude(p) < floor)
        .map(|p| p.t);
    let above: Vec<&CorrelationPoint> = series
        .points
        .iter()
        .filter(|p| p.t > 0.0 && magnitude(p) > floor.max(1e-300))
        .collect();
    if above.len() < 5 {
        return Err(Error::InsufficientSignal { min: 5 });
    }
    // Upper envelope from the right.
    let mut envelope: Vec<&CorrelationPoint> = Vec::new();
    let mut best = f64::NEG_INFINITY;
    for p in above.iter().rev() {
        let m = magnitude(p);
        if m >= best {
            envelope.push(p);
            best = m;
        }
    }
    envelope.reverse();
    let xs: Vec<f64> = envelope.iter().map(|p| p.t.ln()).collect();
    let ys: Vec<f64> = envelope.iter().map(|p| magnitude(p).ln()).collect();
    let (intercept, slope) = fit_line(&xs, &ys);
    let exponent = -slope;
    let class = if exponent < 0.1 {
        DecayClass::NonMixing
    } else if exponent > SUPERPOLYNOMIAL_THRESHOLD {
        DecayClass::SuperPolynomial
    } else {
        DecayClass::Polynomial
    };
    Ok(DecayFit {
        exponent,
        intercept,
        first_below_floor,
        envelope_points: envelope.len(),
        class,
    })
}

fn magnitude(p: &CorrelationPoint) -> f64 {
    Complex64::new(p.rho_re, p.rho_im).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thermo::{normalize_potential, rpf};

    fn full2() -> SymbolicSystem {
        SymbolicSystem::full_shift(2, 0.5).unwrap()
    }

    fn setup(depth: usize) -> (SymbolicSystem, Potential, GibbsData) {
        let sys = full2();
        let raw = Potential::constant(&sys, 0.0).unwrap();
        let g0 = rpf(&sys, &raw, 1).unwrap();
        let phi = normalize_potential(&sys, &raw, &g0).unwrap();
        let gibbs = rpf(&sys, &phi, depth).unwrap();
        (sys, phi, gibbs)
    }

    #[test]
    fn bump_profile_matches_closed_form() {
        for k in 0..5usize {
            let p = Polynomial::bump(k);
            // 4^k B(k+1, k+1) = 4^k (k!)^2 / (2k+1)!
            let fact = |n: usize| (1..=n).map(|i| i as f64).product::<f64>();
            let expect = 4.0f64.powi(k as i32) * fact(k) * fact(k) / fact(2 * k + 1);
            let got = profile_integral(&p);
            assert!((got - expect).abs() < 1e-10, "k = {k}: {got} vs {expect}");
            // Peak 1 at the center.
            assert!((p.eval(0.5) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_observable_integrates_to_one() {
        let (sys, _, gibbs) = setup(3);
        let roof = {
            let t = enumerate_words(&sys, 2).unwrap();
            RoofFunction::new(CylinderFn::new(t, vec![1.0, 1.7, 0.9, 1.3]).unwrap()).unwrap()
        };
        let e = Observable::unit(&sys).unwrap();
        let v = suspension_integral(&e, &gibbs, &roof).unwrap();
        assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn odd_profile_integrates_to_zero() {
        let (sys, _, gibbs) = setup(3);
        let roof = RoofFunction::constant(&sys, 1.4).unwrap();
        // v(1-v)(1-2v) is odd about the midpoint and vanishes at the ends.
        let odd = Polynomial::new(vec![0.0, 1.0, -3.0, 2.0]);
        assert!(odd.eval(0.3) + odd.eval(0.7) < 1e-15);
        let t1 = enumerate_words(&sys, 1).unwrap();
        let e = Observable::with_profile(
            CylinderFn::constant(t1, Complex64::new(2.0, 0.5)),
            odd,
            1,
        )
        .unwrap();
        let v = suspension_integral(&e, &gibbs, &roof).unwrap();
        assert!(v.norm() < 1e-12);
    }

    #[test]
    fn bernoulli_product_integral() {
        // r = 1, coeff depends on x0 only: integral = mean(coeff) * int(psi).
        let (sys, _, gibbs) = setup(3);
        let roof = RoofFunction::constant(&sys, 1.0).unwrap();
        let t1 = enumerate_words(&sys, 1).unwrap();
        let coeff = CylinderFn::new(t1, vec![Complex64::new(2.0, 0.0), Complex64::new(-1.0, 0.0)])
            .unwrap();
        let e = Observable::bump(coeff, 2);
        let v = suspension_integral(&e, &gibbs, &roof).unwrap();
        let psi = profile_integral(&Polynomial::bump(2));
        assert!((v - Complex64::new(0.5 * psi, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn correlation_zero_observable_and_t0() {
        let (sys, phi, gibbs) = setup(8);
        let roof = {
            let t = enumerate_words(&sys, 2).unwrap();
            RoofFunction::new(CylinderFn::new(t, vec![0.9, 1.2, 1.1, 1.0]).unwrap()).unwrap()
        };
        let t1 = enumerate_words(&sys, 1).unwrap();
        let zero = Observable::bump(CylinderFn::constant(t1.clone(), Complex64::default()), 2);
        let e = Observable::bump(
            CylinderFn::new(t1, vec![Complex64::new(1.0, 0.0), Complex64::new(-0.5, 0.0)])
                .unwrap(),
            2,
        );
        let rho = correlation_deterministic(&zero, &e, &gibbs, &roof, 1.0).unwrap();
        assert!(rho.norm() < 1e-14);

        // t = 0 equals the direct product integral minus the product of means.
        let rho0 = correlation_deterministic(&e, &e, &gibbs, &roof, 0.0).unwrap();
        let table = gibbs.table();
        let psi = Polynomial::bump(2);
        let psi2: f64 = adaptive_simpson(&|v| psi.eval(v) * psi.eval(v), 0.0, 1.0, 1e-12);
        let mut direct = Complex64::default();
        let mut rbar = 0.0;
        for rank in 0..table.len() {
            let w = table.word(rank);
            let mass = gibbs.cylinder_weights()[rank];
            let c = e.coefficients().eval_word(w);
            let rv = roof.base().eval_word(w);
            direct += c * c * (mass * rv * psi2);
            rbar += mass * rv;
        }
        let ie = suspension_integral(&e, &gibbs, &roof).unwrap();
        let expect = direct / rbar - ie * ie;
        assert!((rho0 - expect).norm() < 1e-12);
        let _ = phi;
    }

    #[test]
    fn constant_roof_periodic_correlation_closed_form() {
        // Height-only observable over a constant roof: rho(t) is the
        // periodic autocorrelation of the profile.
        let (sys, _, gibbs) = setup(10);
        let c = 1.0;
        let roof = RoofFunction::constant(&sys, c).unwrap();
        let t1 = enumerate_words(&sys, 1).unwrap();
        let e = Observable::bump(CylinderFn::constant(t1, Complex64::new(1.0, 0.0)), 2);
        let psi = Polynomial::bump(2);
        let ipsi = profile_integral(&psi);
        let oracle = |t: f64| {
            let frac = (t / c).fract() * c;
            adaptive_simpson(
                &|u| {
                    let shifted = (u + frac) % c;
                    psi.eval(shifted / c) * psi.eval(u / c)
                },
                0.0,
                c,
                1e-12,
            ) / c
                - ipsi * ipsi
        };
        for t in [0.0, 0.3, 1.0, 2.5, 4.0] {
            let rho = correlation_deterministic(&e, &e, &gibbs, &roof, t).unwrap();
            assert!(
                (rho.re - oracle(t)).abs() < 1e-9,
                "t = {t}: {} vs {}",
                rho.re,
                oracle(t)
            );
            assert!(rho.im.abs() < 1e-12);
        }
        // Periodicity: rho(c) = rho(0) > 0, non-decaying.
        let rho0 = correlation_deterministic(&e, &e, &gibbs, &roof, 0.0).unwrap();
        let rhoc = correlation_deterministic(&e, &e, &gibbs, &roof, c).unwrap();
        assert!((rho0 - rhoc).norm() < 1e-10);
        assert!(rho0.re > 0.1);
    }

    #[test]
    fn window_exhaustion_reported() {
        let (sys, _, gibbs) = setup(6);
        let roof = RoofFunction::constant(&sys, 1.0).unwrap();
        let e = Observable::unit(&sys).unwrap();
        let err = correlation_deterministic(&e, &e, &gibbs, &roof, 50.0).unwrap_err();
        assert!(matches!(err, Error::WindowExhausted));
    }

    #[test]
    fn bilinearity_in_first_slot() {
        let (sys, _, gibbs) = setup(8);
        let roof = {
            let t = enumerate_words(&sys, 2).unwrap();
            RoofFunction::new(CylinderFn::new(t, vec![0.8, 1.1, 1.3, 0.95]).unwrap()).unwrap()
        };
        let t1 = enumerate_words(&sys, 1).unwrap();
        let coeff =
            CylinderFn::new(t1.clone(), vec![Complex64::new(1.0, 0.2), Complex64::new(-0.4, 0.0)])
                .unwrap();
        let e = Observable::bump(coeff.clone(), 2);
        let a = Complex64::new(-1.7, 0.6);
        let scaled = Observable::bump(
            CylinderFn::new(t1, coeff.values().iter().map(|z| z * a).collect::<Vec<_>>())
                .unwrap(),
            2,
        );
        let f = Observable::unit(&sys).unwrap();
        let f = Observable::bump(f.coefficients().clone(), 3);
        let t = 1.3;
        let r1 = correlation_deterministic(&scaled, &f, &gibbs, &roof, t).unwrap();
        let r2 = correlation_deterministic(&e, &f, &gibbs, &roof, t).unwrap();
        assert!((r1 - a * r2).norm() < 1e-12);
    }

    #[test]
    fn constants_are_centered_away() {
        let (sys, _, gibbs) = setup(8);
        let roof = {
            let t = enumerate_words(&sys, 2).unwrap();
            RoofFunction::new(CylinderFn::new(t, vec![0.8, 1.1, 1.3, 0.95]).unwrap()).unwrap()
        };
        let one = Observable::unit(&sys).unwrap();
        let t1 = enumerate_words(&sys, 1).unwrap();
        let f = Observable::bump(
            CylinderFn::new(t1, vec![Complex64::new(0.7, 0.0), Complex64::new(-0.2, 0.1)])
                .unwrap(),
            2,
        );
        for t in [0.0, 0.7, 2.0] {
            let rho = correlation_deterministic(&one, &f, &gibbs, &roof, t).unwrap();
            assert!(rho.norm() < 1e-12, "rho_1F at t = {t}: {rho}");
            let rho = correlation_deterministic(&f, &one, &gibbs, &roof, t).unwrap();
            assert!(rho.norm() < 1e-12, "rho_F1 at t = {t}: {rho}");
        }
    }

    #[test]
    fn flow_invariance_of_the_measure() {
        // rho_{E,1}(t) = 0 exactly encodes invariance of the suspension
        // measure under the flow.
        let (sys, _, gibbs) = setup(9);
        let roof = {
            let t = enumerate_words(&sys, 2).unwrap();
            RoofFunction::new(CylinderFn::new(t, vec![1.0, 1.4, 0.9, 1.2]).unwrap()).unwrap()
        };
        let t2 = enumerate_words(&sys, 2).unwrap();
        let e = Observable::bump(
            CylinderFn::from_fn(t2, |w| Complex64::new(w[0] as f64 - 0.3, w[1] as f64 * 0.4)),
            2,
        );
        let one = Observable::unit(&sys).unwrap();
        for t in [0.4, 1.1, 2.7] {
            let rho = correlation_deterministic(&e, &one, &gibbs, &roof, t).unwrap();
            assert!(rho.norm() < 1e-11, "t = {t}: {rho}");
        }
    }

    #[test]
    fn monte_carlo_agrees_with_deterministic() {
        let (sys, phi, gibbs) = setup(10);
        let roof = {
            let t = enumerate_words(&sys, 2).unwrap();
            RoofFunction::new(CylinderFn::new(t, vec![0.9, 1.25, 1.05, 1.15]).unwrap()).unwrap()
        };
        let t1 = enumerate_words(&sys, 1).unwrap();
        let e = Observable::bump(
            CylinderFn::new(t1, vec![Complex64::new(1.4, 0.0), Complex64::new(-0.8, 0.0)])
                .unwrap(),
            2,
        );
        for t in [0.0, 0.9, 2.2] {
            let det = correlation_deterministic(&e, &e, &gibbs, &roof, t).unwrap();
            let (mc, stderr) =
                correlation_monte_carlo(&sys, &e, &e, &phi, &gibbs, &roof, t, 200_000, 99).unwrap();
            assert!(
                (mc - det).norm() <= 3.0 * stderr + 1e-9,
                "t = {t}: mc {mc} det {det} stderr {stderr}"
            );
        }
    }

    #[test]
    fn monte_carlo_deterministic_reruns() {
        let (sys, phi, gibbs) = setup(6);
        let roof = RoofFunction::constant(&sys, 1.0).unwrap();
        let e = Observable::unit(&sys).unwrap();
        let a = correlation_monte_carlo(&sys, &e, &e, &phi, &gibbs, &roof, 1.5, 50_000, 7).unwrap();
        let b = correlation_monte_carlo(&sys, &e, &e, &phi, &gibbs, &roof, 1.5, 50_000, 7).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn decay_fit_synthetic_power_law() {
        let points: Vec<CorrelationPoint> = (1..=40)
            .map(|i| {
                let t = i as f64;
                CorrelationPoint { t, rho_re: t.powi(-4), rho_im: 0.0, stderr: 0.0 }
            })
            .collect();
        let series =
            CorrelationSeries { points, estimator: Estimator::Deterministic, noise_floor: 0.0 };
        let fit = decay_fit(&series).unwrap();
        assert!((fit.exponent - 4.0).abs() < 0.05);
        assert_eq!(fit.class, DecayClass::Polynomial);
    }

    #[test]
    fn decay_fit_synthetic_exponential_flagged() {
        let points: Vec<CorrelationPoint> = (1..=40)
            .map(|i| {
                let t = i as f64;
                CorrelationPoint { t, rho_re: (-t).exp(), rho_im: 0.0, stderr: 0.0 }
            })
            .collect();
        let series =
            CorrelationSeries { points, estimator: Estimator::Deterministic, noise_floor: 0.0 };
        let fit = decay_fit(&series).unwrap();
        assert_eq!(fit.class, DecayClass::SuperPolynomial);
        assert!(fit.exponent > SUPERPOLYNOMIAL_THRESHOLD);
    }

    #[test]
    fn decay_fit_non_mixing_flagged() {
        let points: Vec<CorrelationPoint> = (1..=30)
            .map(|i| {
                let t = i as f64;
                CorrelationPoint { t, rho_re: 0.12, rho_im: 0.0, stderr: 0.0 }
            })
            .collect();
        let series =
            CorrelationSeries { points, estimator: Estimator::Deterministic, noise_floor: 0.0 };
        let fit = decay_fit(&series).unwrap();
        assert_eq!(fit.class, DecayClass::NonMixing);
        assert!(fit.exponent.abs() < 0.05);
    }

    #[test]
    fn decay_fit_insufficient_signal() {
        let points: Vec<CorrelationPoint> = (1..=25)
            .map(|i| CorrelationPoint { t: i as f64, rho_re: 1e-9, rho_im: 0.0, stderr: 1.0 })
            .collect();
        let series = CorrelationSeries {
            points,
            estimator: Estimator::MonteCarlo { samples: 10 },
            noise_floor: 3.0,
        };
        assert!(matches!(decay_fit(&series), Err(Error::InsufficientSignal { .. })));
    }
}
