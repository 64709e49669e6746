//! Orthomartingale-coboundary decomposition
//! `f = m + (I-U) g1 + (I-V) g2 + (I-U)(I-V) g3` for the built-in fields, with
//! exact L2 norms (orthogonality of atoms) and certified tails.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{CoefficientField, FieldKind, TruncationSpec};
use crate::form::{Atom, LinearForm};
use crate::noise::LawFamily;
use crate::special::{hurwitz_zeta, quadrant_mass, quadrant_mass_majorant};
use crate::summation::NeumaierSum;

/// The four terms restricted to one scale.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScaleTerms {
    pub m: LinearForm,
    pub g1: LinearForm,
    pub g2: LinearForm,
    pub g3: LinearForm,
}

impl ScaleTerms {
    pub fn recombine(&self) -> LinearForm {
        recombine(&self.m, &self.g1, &self.g2, &self.g3)
    }
}

/// `m + (I-U) g1 + (I-V) g2 + (I-U)(I-V) g3`.
pub fn recombine(m: &LinearForm, g1: &LinearForm, g2: &LinearForm, g3: &LinearForm) -> LinearForm {
    m.plus(&g1.diff_u()).plus(&g2.diff_v()).plus(&g3.diff_u().diff_v())
}

/// Scale `k` of the example with `f` in L1 but not L2: `m = k^-2 U^-k V^-k e_k`,
/// `g1 = sum_{i <= lag_max} (k+i)^-2 U^{-k-i} e_k`, `g2` likewise along `V`,
/// `g3 = e_k / k`.
pub fn l1_not_l2_scale_terms(k: u32, lag_max: u32) -> ScaleTerms {
    let kf = k as f64;
    let ki = k as i64;
    let mut t = ScaleTerms::default();
    t.m.add_term(Atom::new(k, -ki, -ki), 1.0 / (kf * kf));
    for i in 0..=lag_max as i64 {
        let a = 1.0 / ((kf + i as f64) * (kf + i as f64));
        t.g1.add_term(Atom::new(k, -ki - i, 0), a);
        t.g2.add_term(Atom::new(k, 0, -ki - i), a);
    }
    t.g3.add_term(Atom::new(k, 0, 0), 1.0 / kf);
    t
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionTerms {
    pub family: String,
    pub laws: LawFamily,
    pub alpha: Option<f64>,
    pub trunc: TruncationSpec,
    pub m: LinearForm,
    pub g1: LinearForm,
    pub g2: LinearForm,
    pub g3: LinearForm,
}

impl DecompositionTerms {
    pub fn recombine(&self) -> LinearForm {
        recombine(&self.m, &self.g1, &self.g2, &self.g3)
    }
}

/// Decomposition of a superlinear field from the explicit coefficient formulas.
pub fn decompose_superlinear(field: &CoefficientField, trunc: &TruncationSpec) -> Result<DecompositionTerms> {
    match field.kind() {
        FieldKind::Superlinear { .. } => decompose_lag_field(field, trunc),
        _ => Err(Error::UnsupportedFamily(format!(
            "decompose_superlinear needs a superlinear field, got {}",
            field.tag()
        ))),
    }
}

/// Explicit decomposition of any adapted lag-kernel field (coefficients on
/// `u, v >= 0`): with `G(d,e) = sum_{u >= d, v >= e} a(k,u,v)`,
/// `m` carries `G(0,0) e_k`, `g1` carries `G(d,0)` on `U^-d e_k` (`d >= 1`),
/// `g2` carries `G(0,e)` on `V^-e e_k`, `g3` carries `G(d,e)` on `U^-d V^-e e_k`.
pub fn decompose_lag_field(field: &CoefficientField, trunc: &TruncationSpec) -> Result<DecompositionTerms> {
    if matches!(field.kind(), FieldKind::L1NotL2) {
        return Err(Error::UnsupportedFamily("l1-not-l2 is not a lag-kernel field".into()));
    }
    let mut out = DecompositionTerms {
        family: field.tag().to_string(),
        laws: *field.laws(),
        alpha: field.alpha(),
        trunc: *trunc,
        m: LinearForm::new(),
        g1: LinearForm::new(),
        g2: LinearForm::new(),
        g3: LinearForm::new(),
    };
    for k in field.scales(trunc) {
        let ker = field.kernel(k, trunc);
        debug_assert!(ker.u0 == 0 && ker.v0 == 0);
        let (r, c) = (ker.rows, ker.cols);
        // suffix sums, compensated along each axis
        let mut rowsuf = vec![0.0; r * c];
        for u in 0..r {
            let mut acc = NeumaierSum::new();
            for v in (0..c).rev() {
                acc += ker.coeffs[u * c + v];
                rowsuf[u * c + v] = acc.value();
            }
        }
        let mut g = vec![0.0; r * c];
        for v in 0..c {
            let mut acc = NeumaierSum::new();
            for u in (0..r).rev() {
                acc += rowsuf[u * c + v];
                g[u * c + v] = acc.value();
            }
        }
        for d in 0..r {
            for e in 0..c {
                let val = g[d * c + e];
                let atom = Atom::new(k, -(d as i64), -(e as i64));
                match (d, e) {
                    (0, 0) => out.m.add_term(atom, val),
                    (_, 0) => out.g1.add_term(atom, val),
                    (0, _) => out.g2.add_term(atom, val),
                    _ => out.g3.add_term(atom, val),
                }
            }
        }
    }
    Ok(out)
}

/// Decomposition through the conditional-expectation series:
/// `G = sum_{i,j >= 0} E_{0,0}(U^i V^j f)` split by the position of each atom.
/// Independent of the closed forms above; used as their oracle.
pub fn decompose_by_projection(f: &LinearForm) -> ScaleTerms {
    let max_u = f.iter().map(|(a, _)| -a.s).max().unwrap_or(0).max(0);
    let max_v = f.iter().map(|(a, _)| -a.t).max().unwrap_or(0).max(0);
    let mut series = LinearForm::new();
    for i in 0..=max_u {
        for j in 0..=max_v {
            series = series.plus(&f.shifted(i, j).project_cone(0, 0));
        }
    }
    ScaleTerms {
        m: series.filter(|a| a.s == 0 && a.t == 0),
        g1: series.filter(|a| a.s <= -1 && a.t == 0),
        g2: series.filter(|a| a.s == 0 && a.t <= -1),
        g3: series.filter(|a| a.s <= -1 && a.t <= -1),
    }
}

/// Decomposition of the L1-not-L2 field, starting at the first admissible scale.
pub fn decompose_l1_not_l2(k_max: u32, lag_max: u32) -> DecompositionTerms {
    let field = CoefficientField::l1_not_l2();
    let trunc = TruncationSpec::for_field(&field, k_max, lag_max);
    let mut out = DecompositionTerms {
        family: field.tag().to_string(),
        laws: *field.laws(),
        alpha: None,
        trunc,
        m: LinearForm::new(),
        g1: LinearForm::new(),
        g2: LinearForm::new(),
        g3: LinearForm::new(),
    };
    for k in field.scales(&trunc) {
        let t = l1_not_l2_scale_terms(k, lag_max);
        for (a, c) in t.m.iter() {
            out.m.add_term(a, c);
        }
        for (a, c) in t.g1.iter() {
            out.g1.add_term(a, c);
        }
        for (a, c) in t.g2.iter() {
            out.g2.add_term(a, c);
        }
        for (a, c) in t.g3.iter() {
            out.g3.add_term(a, c);
        }
    }
    out
}

/// Largest coefficient mismatch between `f` and the recombined terms.
pub fn identity_mismatch(terms: &DecompositionTerms, f: &LinearForm) -> f64 {
    terms.recombine().max_abs_diff(f)
}

/// Exact recombination check for a lag-kernel decomposition: the map
/// `a -> (m, g1, g2, g3)` is linear, so it suffices to decompose every unit
/// kernel; with 0/1 inputs all intermediate values are small integers and the
/// comparison is exact. Returns the number of failing unit kernels.
pub fn identity_failures_by_basis(k: u32, lag_max: u32) -> usize {
    let n = lag_max as i64;
    let mut failures = 0;
    for u0 in 0..=n {
        for v0 in 0..=n {
            let law = LawFamily::Custom { v: 1.0, p: 0.5 };
            let field =
                CoefficientField::custom(law, move |kk, u, v| if kk == k && u == u0 && v == v0 { 1.0 } else { 0.0 })
                    .expect("valid law");
            let trunc = TruncationSpec::raw(k, k, lag_max);
            let terms = decompose_lag_field(&field, &trunc).expect("lag field");
            if identity_mismatch(&terms, &field.form(&trunc)) != 0.0 {
                failures += 1;
            }
        }
    }
    failures
}

/// Squared-norm value with a certified bound on what truncation discarded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormWithTail {
    /// Norm of the retained part.
    pub value: f64,
    /// Upper bound on the discarded squared norm.
    pub tail: f64,
}

impl NormWithTail {
    /// Upper bound on the full norm.
    pub fn upper(&self) -> f64 {
        (self.value * self.value + self.tail).sqrt()
    }
}

/// `||m||_2 = sqrt(sum_k c_k^2 ||e_k||_2^2)` on retained atoms.
pub fn m_norm_l2(terms: &DecompositionTerms) -> NormWithTail {
    let value = terms.m.l2_norm_sq(&terms.laws).sqrt();
    let big_k = terms.trunc.k_max as f64;
    let tail = match (terms.family.as_str(), terms.alpha) {
        ("l1-not-l2", _) => 1.0 / big_k,
        ("superlinear", Some(alpha)) => {
            let laws = terms.laws;
            let mut acc = NeumaierSum::new();
            let b = quadrant_mass_majorant(alpha, big_k + 1.0);
            acc += b * b / big_k.max(2.0).ln();
            for (atom, c) in terms.m.iter() {
                let full = quadrant_mass(alpha, atom.k as f64);
                let l2sq = laws.scale_moments(atom.k).map(|m| m.l2sq).unwrap_or(0.0);
                acc += ((full * full - c * c) * l2sq).max(0.0);
            }
            acc.value()
        }
        ("zero", _) | ("iid", _) => 0.0,
        _ => f64::NAN,
    };
    NormWithTail { value, tail }
}

/// `||m||_2^2` over scales `k_min..=k_max` with all lags kept, from closed forms.
pub fn m_norm_sq_series(field: &CoefficientField, k_max: u32) -> Result<f64> {
    let laws = *field.laws();
    let k_min = field.first_k();
    match field.kind() {
        FieldKind::L1NotL2 => Ok((k_min..=k_max)
            .rev()
            .map(|k| {
                let kf = k as f64;
                laws.scale_moments(k).unwrap().l2sq / kf.powi(4)
            })
            .sum::<NeumaierSum>()
            .value()),
        FieldKind::Superlinear { alpha } => Ok((k_min..=k_max)
            .rev()
            .map(|k| {
                let c = quadrant_mass(*alpha, k as f64);
                c * c * laws.scale_moments(k).unwrap().l2sq
            })
            .sum::<NeumaierSum>()
            .value()),
        FieldKind::Iid => Ok(laws.scale_moments(1)?.l2sq),
        FieldKind::Zero => Ok(0.0),
        FieldKind::Custom(_) => Err(Error::UnsupportedFamily("custom".into())),
    }
}

/// `||m||_2` with the scale tail beyond `k_max` certified; the norm used as
/// the limiting standard deviation in the CLT checks.
pub fn m_norm_l2_full(field: &CoefficientField, k_max: u32) -> Result<NormWithTail> {
    let retained = m_norm_sq_series(field, k_max)?;
    let big_k = k_max as f64;
    let tail = match field.kind() {
        FieldKind::L1NotL2 => 1.0 / big_k,
        FieldKind::Superlinear { alpha } => {
            let b = quadrant_mass_majorant(*alpha, big_k + 1.0);
            b * b / big_k.max(2.0).ln()
        }
        _ => 0.0,
    };
    Ok(NormWithTail { value: retained.sqrt(), tail })
}

/// `sum_{k_min <= k <= k_max} k^2 sum_{i >= 0} (k+i)^-4`: partial sums of
/// `||g1||_2^2` in the L1-not-L2 example; grows like `log(k_max)/3`.
pub fn l1_not_l2_g1_norm_sq_partial(k_max: u32) -> f64 {
    let k_min = LawFamily::L1NotL2.first_admissible_k();
    (k_min..=k_max)
        .rev()
        .map(|k| {
            let kf = k as f64;
            kf * kf * hurwitz_zeta(4.0, kf)
        })
        .sum::<NeumaierSum>()
        .value()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    U,
    V,
}

/// One point of `||(I-U^l) g1||_2^2` (axis U) or `||(I-V^l) g2||_2^2` (axis V).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthValue {
    pub ell: u64,
    /// Exactly summed part.
    pub retained: f64,
    /// First-order estimate of the summation remainder.
    pub remainder: f64,
    /// `retained + remainder`.
    pub value: f64,
}

/// Summation cut-offs for [`coboundary_growth_curve`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthOptions {
    /// L1-not-L2 family: lattice index `x = k + i` summed up to `max(x_floor, x_per_ell * l)`.
    pub x_floor: u64,
    pub x_per_ell: u64,
    /// Superlinear: scales summed exactly up to `k_max`.
    pub k_max: u64,
    /// Superlinear: the `k > k_max` remainder is summed directly up to this index.
    pub remainder_k_max: u64,
}

impl Default for GrowthOptions {
    fn default() -> Self {
        Self { x_floor: 1 << 16, x_per_ell: 1024, k_max: 1 << 20, remainder_k_max: 1 << 24 }
    }
}

/// Growth of the coboundary increment at one `l`.
pub fn coboundary_growth(field: &CoefficientField, axis: Axis, ell: u64) -> Result<GrowthValue> {
    Ok(coboundary_growth_curve(field, axis, &[ell], &GrowthOptions::default())?[0])
}

/// Growth of the coboundary increment over several `l`, sharing precomputed tables. Both
/// built-in families are symmetric in `(u, v)`, so the two axes coincide.
pub fn coboundary_growth_curve(
    field: &CoefficientField,
    axis: Axis,
    ells: &[u64],
    opts: &GrowthOptions,
) -> Result<Vec<GrowthValue>> {
    if ells.contains(&0) {
        return Err(Error::InvalidParameter("l must be >= 1".into()));
    }
    if axis == Axis::V && !field.is_symmetric() {
        return Err(Error::UnsupportedFamily("V-axis growth needs a symmetric field".into()));
    }
    match field.kind() {
        FieldKind::L1NotL2 => Ok(ells
            .par_iter()
            .map(|&l| l1_not_l2_growth(field.first_k() as u64, l, opts))
            .collect()),
        FieldKind::Superlinear { alpha } => {
            let tables = SuperlinearTables::new(*alpha, field, ells, opts)?;
            Ok(ells.par_iter().map(|&l| tables.growth(l)).collect())
        }
        _ => Err(Error::UnsupportedFamily(format!("no growth formula for {}", field.tag()))),
    }
}

/// Shape `s(l)` of a growth bound `value <= c s(l)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GrowthShape {
    /// `log(l + 1)`.
    Log,
    /// `l / log(l + 1)`.
    EllOverLog,
}

impl GrowthShape {
    pub fn eval(&self, ell: f64) -> f64 {
        match self {
            GrowthShape::Log => (ell + 1.0).ln(),
            GrowthShape::EllOverLog => ell / (ell + 1.0).ln(),
        }
    }
}

/// Fitted constant for `value <= c s(l)` over a dyadic grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub shape: GrowthShape,
    /// Least-squares `c` for `value ~ c s(l)`.
    pub c_least_squares: f64,
    /// Smallest `c` with `value <= c s(l)` on the whole grid.
    pub c_bound: f64,
    /// Slope of `value / s(l)` against `log2 l` over the upper half of the grid.
    pub residual_trend: f64,
    /// `value / l` strictly decreasing over the three largest `l`.
    pub per_ell_decreasing: bool,
    pub holds: bool,
}

/// Least-squares fit of `c` plus the trend test: the normalized residual
/// `value / s(l)` must not grow over the upper half of the grid.
pub fn fit_growth(values: &[GrowthValue], shape: GrowthShape) -> GrowthFit {
    let s: Vec<f64> = values.iter().map(|v| shape.eval(v.ell as f64)).collect();
    let num: NeumaierSum = values.iter().zip(&s).map(|(v, s)| v.value * s).sum();
    let den: NeumaierSum = s.iter().map(|s| s * s).sum();
    let ratios: Vec<f64> = values.iter().zip(&s).map(|(v, s)| v.value / s).collect();
    let c_bound = ratios.iter().copied().fold(0.0, f64::max);
    let half = &values[values.len() / 2..];
    let xs: Vec<f64> = half.iter().map(|v| (v.ell as f64).log2()).collect();
    let ys = &ratios[values.len() / 2..];
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let residual_trend = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let per_ell: Vec<f64> = values.iter().map(|v| v.value / v.ell as f64).collect();
    let per_ell_decreasing = per_ell.len() >= 3 && per_ell[per_ell.len() - 3..].windows(2).all(|w| w[1] < w[0]);
    GrowthFit {
        shape,
        c_least_squares: num.value() / den.value(),
        c_bound,
        residual_trend,
        per_ell_decreasing,
        holds: residual_trend <= 0.0 && per_ell_decreasing && c_bound.is_finite(),
    }
}

fn sum_squares(lo: u64, hi: u64) -> f64 {
    // sum_{k=lo}^{hi} k^2
    if hi < lo {
        return 0.0;
    }
    let s = |n: u64| -> f64 {
        let n = n as u128;
        (n * (n + 1) * (2 * n + 1) / 6) as f64
    };
    s(hi) - if lo == 0 { 0.0 } else { s(lo - 1) }
}

/// `||(I-U^l) g1||^2 = sum_k k^2 [sum_{i<l} a_{k,i}^2 + sum_{i>=0} (a_{k,i} - a_{k,i+l})^2]`
/// regrouped by `x = k + i`.
fn l1_not_l2_growth(k_min: u64, l: u64, opts: &GrowthOptions) -> GrowthValue {
    let x_max = opts.x_floor.max(opts.x_per_ell.saturating_mul(l));
    let lf = l as f64;
    let mut acc = NeumaierSum::new();
    for x in (k_min..=x_max).rev() {
        let xf = x as f64;
        let lo = k_min.max((x + 1).saturating_sub(l));
        let first = sum_squares(lo, x) / xf.powi(4);
        let d = 1.0 / (xf * xf) - 1.0 / ((xf + lf) * (xf + lf));
        let second = d * d * sum_squares(k_min, x);
        acc += first + second;
    }
    let xf = x_max as f64;
    let remainder = lf / xf + (2.0 / 3.0) * lf * lf / (xf * xf);
    let retained = acc.value();
    GrowthValue { ell: l, retained, remainder, value: retained + remainder }
}

struct SuperlinearTables {
    k_min: usize,
    k_max: usize,
    /// quadrant mass Phi(y) for y < phi.len()
    phi: Vec<f64>,
    /// prefix[k] = sum_{k_min <= k' <= k} ||e_k'||_2^2
    prefix: Vec<f64>,
    /// sum_{k > k_max} ||e_k||_2^2 Phi(k)^2
    scale_tail: f64,
}

impl SuperlinearTables {
    fn new(alpha: f64, field: &CoefficientField, ells: &[u64], opts: &GrowthOptions) -> Result<Self> {
        let laws = *field.laws();
        let k_min = field.first_k() as usize;
        let k_max = opts.k_max as usize;
        let l_max = *ells.iter().max().unwrap_or(&1) as usize;
        let y_max = 4 * k_max + 2 * l_max + 2;
        let phi: Vec<f64> =
            (0..=y_max).into_par_iter().map(|y| if y == 0 { 0.0 } else { quadrant_mass(alpha, y as f64) }).collect();
        let mut prefix = vec![0.0; k_max + 1];
        let mut acc = NeumaierSum::new();
        for (k, slot) in prefix.iter_mut().enumerate().skip(k_min) {
            acc += laws.scale_moments(k as u32)?.l2sq;
            *slot = acc.value();
        }
        let hi = opts.remainder_k_max.max(opts.k_max) as usize;
        const CHUNK: usize = 1 << 16;
        let n_chunks = (hi - k_max).div_ceil(CHUNK);
        let chunks: Vec<f64> = (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let lo = k_max + 1 + c * CHUNK;
                let top = (lo + CHUNK - 1).min(hi);
                let mut a = NeumaierSum::new();
                for k in (lo..=top).rev() {
                    let c = quadrant_mass(alpha, k as f64);
                    a += c * c * laws.scale_moments(k as u32).map(|m| m.l2sq).unwrap_or(0.0);
                }
                a.value()
            })
            .collect();
        let mut tail = chunks.into_iter().rev().sum::<NeumaierSum>();
        // beyond `hi`: Phi(k)^2 ||e_k||^2 ~ c^2 / (k log^2 k), c = 1/((a-1)(a-2))
        let c = 1.0 / ((alpha - 1.0) * (alpha - 2.0));
        tail += c * c / (hi as f64).ln();
        Ok(Self { k_min, k_max, phi, prefix, scale_tail: tail.value() })
    }

    fn window(&self, lo: usize, hi: usize) -> f64 {
        // sum of ||e_k||^2 over k in [lo, hi] clipped to [k_min, k_max]
        let lo = lo.max(self.k_min);
        let hi = hi.min(self.k_max);
        if hi < lo {
            return 0.0;
        }
        self.prefix[hi] - if lo > self.k_min { self.prefix[lo - 1] } else { 0.0 }
    }

    /// `sum_k ||e_k||^2 [sum_{u=1}^{l} Phi(k+u)^2 + sum_{d>=1} (Phi(k+d) - Phi(k+d+l))^2]`,
    /// regrouped by `y = k + u` (resp. `y = k + d`).
    fn growth(&self, l: u64) -> GrowthValue {
        let l = l as usize;
        let mut acc = NeumaierSum::new();
        let y_hi = self.phi.len() - 1 - l;
        for y in ((self.k_min + 1)..=y_hi).rev() {
            let p = self.phi[y];
            let first = if y <= self.k_max + l { p * p * self.window(y.saturating_sub(l), y - 1) } else { 0.0 };
            let d = p - self.phi[y + l];
            let second = d * d * self.window(self.k_min, y - 1);
            acc += first + second;
        }
        let retained = acc.value();
        let remainder = l as f64 * self.scale_tail;
        GrowthValue { ell: l as u64, retained, remainder, value: retained + remainder }
    }
}

/// `||P_{0,0}(U^i V^j f)||_2 = sqrt(sum_k a(k,i,j)^2 ||e_k||_2^2)`.
pub fn hannan_term(field: &CoefficientField, i: u64, j: u64) -> Result<NormWithTail> {
    let alpha = match field.kind() {
        FieldKind::Superlinear { alpha } => *alpha,
        _ => return Err(Error::UnsupportedFamily(format!("hannan term needs superlinear, got {}", field.tag()))),
    };
    let laws = *field.laws();
    let w = (i + j) as f64;
    let k_min = field.first_k() as u64;
    let k_max = 16 * (i + j + 1) + 256;
    let mut acc = NeumaierSum::new();
    for k in (k_min..=k_max).rev() {
        let kf = k as f64;
        acc += (kf + w).powf(-2.0 * alpha) * laws.scale_moments(k as u32)?.l2sq;
    }
    let kf = k_max as f64;
    let tail = 1.0 / (4.0 * kf.powi(4) * (kf + 2.0).ln().powi(2));
    Ok(NormWithTail { value: acc.value().sqrt(), tail })
}

/// Partial sums `sum_{i+j <= D} hannan_term(i, j)` for each `D` in `depths`.
pub fn hannan_diagonal_sums(field: &CoefficientField, depths: &[u64]) -> Result<Vec<f64>> {
    let d_max = *depths.iter().max().unwrap_or(&0);
    let terms: Vec<f64> = (0..=d_max)
        .into_par_iter()
        .map(|w| hannan_term(field, w, 0).map(|h| h.value * (w + 1) as f64))
        .collect::<Result<_>>()?;
    Ok(depths
        .iter()
        .map(|&d| terms[..=d as usize].iter().rev().copied().sum::<NeumaierSum>().value())
        .collect())
}

/// `l1ProjectiveTail`: certified upper bound on
/// `sum_{(i,j) outside [0,i0) x [0,j0)} ||E(U^i V^j f | F_{0,0})||_1`
/// by the triangle inequality over atoms.
pub fn l1_projective_tail(field: &CoefficientField, i0: u64, j0: u64) -> Result<f64> {
    l1_projective_tail_with(field, i0, j0, 1 << 16)
}

pub fn l1_projective_tail_with(field: &CoefficientField, i0: u64, j0: u64, k_max: u64) -> Result<f64> {
    let laws = *field.laws();
    match field.kind() {
        FieldKind::Zero => Ok(0.0),
        FieldKind::Iid => Ok(if i0 == 0 || j0 == 0 { laws.scale_moments(1)?.l1 } else { 0.0 }),
        FieldKind::Superlinear { alpha } => {
            let a = *alpha;
            let k_min = field.first_k() as u64;
            let parts: Vec<f64> = (k_min..=k_max)
                .into_par_iter()
                .map(|k| {
                    let q = quadrant_moment_outside_box(a, k as f64, i0, j0);
                    laws.scale_moments(k as u32).map(|m| m.l1 * q).unwrap_or(0.0)
                })
                .collect();
            let mut acc: NeumaierSum = parts.into_iter().rev().sum();
            let kf = k_max as f64;
            // A_k <= (1+2/k)(1+1/k)/6 (k^{3-a} + k^{4-a}/(a-4)) for k > k_max
            let pre = (1.0 + 2.0 / kf) * (1.0 + 1.0 / kf) / 6.0;
            acc += pre * (1.0 / (kf * (kf + 2.0).ln().powi(2)) + 1.0 / ((a - 4.0) * kf.ln()));
            Ok(acc.value())
        }
        _ => Err(Error::UnsupportedFamily(format!("no L1 projective majorant for {}", field.tag()))),
    }
}

/// `sum_{u,v>=0} (k+u+v)^{-a} [(u+1)(v+1) - min(u+1,i0) min(v+1,j0)]`.
fn quadrant_moment_outside_box(a: f64, k: f64, i0: u64, j0: u64) -> f64 {
    // full moment: sum_{x>=k} C(x-k+3, 3) x^{-a} expanded in powers of x
    let s = 3.0 - k;
    let full = (hurwitz_zeta(a - 3.0, k)
        + (3.0 * s - 3.0) * hurwitz_zeta(a - 2.0, k)
        + (3.0 * s * s - 6.0 * s + 2.0) * hurwitz_zeta(a - 1.0, k)
        + s * (s - 1.0) * (s - 2.0) * hurwitz_zeta(a, k))
        / 6.0;
    if i0 == 0 || j0 == 0 {
        return full;
    }
    let (bu, bv) = ((i0 - 1) as usize, (j0 - 1) as usize);
    let mut inner = NeumaierSum::new();
    // u >= bu and v >= bv
    inner += (i0 * j0) as f64 * quadrant_mass(a, k + (bu + bv) as f64);
    // u < bu, v >= bv
    for u in 0..bu {
        inner += (u + 1) as f64 * j0 as f64 * hurwitz_zeta(a, k + (u + bv) as f64);
    }
    for v in 0..bv {
        inner += (v + 1) as f64 * i0 as f64 * hurwitz_zeta(a, k + (bu + v) as f64);
    }
    // u < bu, v < bv grouped by w = u + v
    for w in 0..(bu + bv).saturating_sub(1) {
        if bu == 0 || bv == 0 {
            break;
        }
        let mut mult = 0.0;
        for u in w.saturating_sub(bv - 1)..=w.min(bu - 1) {
            mult += ((u + 1) * (w - u + 1)) as f64;
        }
        inner += mult * (k + w as f64).powf(-a);
    }
    (full - inner.value()).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::summation::csum;

    fn sl(alpha: f64) -> CoefficientField {
        CoefficientField::superlinear(alpha).unwrap()
    }

    #[test]
    fn m_coefficient_is_full_kernel_mass() {
        let f = sl(5.0);
        let t = TruncationSpec::raw(2, 3, 4);
        let terms = decompose_superlinear(&f, &t).unwrap();
        for k in 2..=3u32 {
            let direct = csum((0..=4).flat_map(|i| (0..=4).map(move |j| ((k + i + j) as f64).powf(-5.0))));
            assert!((terms.m.coeff(Atom::new(k, 0, 0)) - direct).abs() < 1e-16);
        }
    }

    #[test]
    fn g3_coefficient_on_minus_one_minus_one() {
        let f = sl(5.0);
        let t = TruncationSpec::raw(2, 2, 3);
        let terms = decompose_superlinear(&f, &t).unwrap();
        let direct = csum((0..3).flat_map(|i| (0..3).map(move |j| ((2 + i + 1 + j + 1) as f64).powf(-5.0))));
        assert!((terms.g3.coeff(Atom::new(2, -1, -1)) - direct).abs() < 1e-16);
    }

    #[test]
    fn superlinear_identity_on_small_truncation() {
        for alpha in [4.5, 5.0, 6.0] {
            let f = sl(alpha);
            let t = TruncationSpec::raw(2, 3, 3);
            let terms = decompose_superlinear(&f, &t).unwrap();
            assert!(identity_mismatch(&terms, &f.form(&t)) < 1e-15);
        }
    }

    #[test]
    fn unit_kernels_recombine_exactly() {
        assert_eq!(identity_failures_by_basis(1, 3), 0);
        assert_eq!(identity_failures_by_basis(2, 2), 0);
    }

    #[test]
    fn closed_form_agrees_with_projection_series() {
        let f = sl(5.0);
        let t = TruncationSpec::raw(2, 3, 3);
        let terms = decompose_superlinear(&f, &t).unwrap();
        let proj = decompose_by_projection(&f.form(&t));
        assert!(terms.m.max_abs_diff(&proj.m) < 1e-15);
        assert!(terms.g1.max_abs_diff(&proj.g1) < 1e-15);
        assert!(terms.g2.max_abs_diff(&proj.g2) < 1e-15);
        assert!(terms.g3.max_abs_diff(&proj.g3) < 1e-15);
    }

    #[test]
    fn m_atoms_sit_at_origin_and_are_orthomartingale() {
        let f = sl(5.0);
        let t = TruncationSpec::raw(2, 3, 3);
        let terms = decompose_superlinear(&f, &t).unwrap();
        for (a, _) in terms.m.iter() {
            assert!(a.s <= 0 && a.t <= 0);
        }
        for i in 0..3 {
            for j in 0..3 {
                let x = terms.m.shifted(i, j);
                assert!(x.project_cone(i - 1, j).is_empty());
                assert!(x.project_cone(i, j - 1).is_empty());
                assert!(x.project_cone(i - 1, j - 1).is_empty());
            }
        }
        // (I-U) g1 lives on t <= 0 and has no mass on the cone (inf, -1)
        let d = terms.g1.diff_u();
        assert!(d.iter().all(|(a, _)| a.t <= 0));
        assert!(d.project_cone(i64::MAX, -1).is_empty());
    }

    #[test]
    fn l1_not_l2_explicit_coefficients() {
        let terms = decompose_l1_not_l2(4, 6);
        assert_eq!(terms.m.coeff(Atom::new(2, -2, -2)), 0.25);
        for i in 0..=6i64 {
            let want = 1.0 / ((2 + i) as f64).powi(2);
            assert_eq!(terms.g1.coeff(Atom::new(2, -2 - i, 0)), want);
            assert_eq!(terms.g2.coeff(Atom::new(2, 0, -2 - i)), want);
        }
        assert_eq!(terms.g3.coeff(Atom::new(3, 0, 0)), 1.0 / 3.0);
        // no scale below the first admissible one
        assert!(terms.m.iter().all(|(a, _)| a.k >= 2));
        let f = CoefficientField::l1_not_l2();
        assert_eq!(identity_mismatch(&terms, &f.form(&terms.trunc)), 0.0);
    }

    #[test]
    fn l1_not_l2_m_norm_matches_series() {
        let terms = decompose_l1_not_l2(2000, 0);
        let n = m_norm_l2(&terms);
        let direct = csum((2..=2000u32).rev().map(|k| 1.0 / (k as f64 * k as f64)));
        assert!((n.value * n.value - direct).abs() < 1e-12);
        let limit = std::f64::consts::PI.powi(2) / 6.0 - 1.0;
        assert!(n.value * n.value <= limit && limit <= n.value * n.value + n.tail);
    }

    #[test]
    fn single_atom_norm() {
        let f = CoefficientField::iid(3.0, 0.125).unwrap();
        let terms = decompose_lag_field(&f, &TruncationSpec::raw(1, 1, 0)).unwrap();
        let n = m_norm_l2(&terms);
        // c = 1, sigma^2 = 2 * 9 * 0.125
        assert!((n.value - (2.25f64).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn superlinear_m_norm_closed_form_vs_forms() {
        let f = sl(5.0);
        let t = TruncationSpec::raw(2, 40, 200);
        let terms = decompose_superlinear(&f, &t).unwrap();
        let from_forms = m_norm_l2(&terms);
        let closed = m_norm_sq_series(&f, 40).unwrap();
        // the lag box cuts a relative mass of order (k/(k+200))^3 at each scale
        assert!(from_forms.value.powi(2) <= closed);
        assert!(closed - from_forms.value.powi(2) < 1e-3 * closed);
        assert!(from_forms.value.powi(2) + from_forms.tail >= closed);
    }

    #[test]
    fn l1_not_l2_growth_matches_naive() {
        // naive double sum over k, i with generous truncation
        let l = 3u64;
        let opts = GrowthOptions { x_floor: 4000, x_per_ell: 0, ..Default::default() };
        let v = l1_not_l2_growth(2, l, &opts);
        let mut acc = Vec::new();
        for k in 2..=4000u64 {
            let kf = k as f64;
            for i in 0..=(4000 - k) {
                let a = |ii: u64| 1.0 / ((kf + ii as f64) * (kf + ii as f64));
                if i < l {
                    acc.push(kf * kf * a(i) * a(i));
                }
                let d = a(i) - a(i + l);
                acc.push(kf * kf * d * d);
            }
        }
        let naive = csum(acc);
        assert!((v.retained - naive).abs() < 1e-9 * naive, "{} vs {}", v.retained, naive);
    }

    #[test]
    fn superlinear_growth_matches_naive() {
        let f = sl(5.0);
        let opts = GrowthOptions { k_max: 300, remainder_k_max: 300, ..Default::default() };
        let l = 4u64;
        let tables = SuperlinearTables::new(5.0, &f, &[l], &opts).unwrap();
        let got = tables.growth(l).retained;
        let laws = *f.laws();
        let phi = |y: u64| quadrant_mass(5.0, y as f64);
        let mut acc = Vec::new();
        for k in 2..=300u64 {
            let s2 = laws.scale_moments(k as u32).unwrap().l2sq;
            for u in 1..=l {
                acc.push(s2 * phi(k + u).powi(2));
            }
            for d in 1..(1200 + 2 * l - k) {
                acc.push(s2 * (phi(k + d) - phi(k + d + l)).powi(2));
            }
        }
        let naive = csum(acc);
        assert!((got - naive).abs() < 1e-9 * naive, "{got} vs {naive}");
    }

    #[test]
    fn growth_fit_on_synthetic_curves() {
        let mk = |f: &dyn Fn(f64) -> f64| -> Vec<GrowthValue> {
            (1..=12)
                .map(|e| {
                    let l = (1u64 << e) as f64;
                    GrowthValue { ell: 1 << e, retained: f(l), remainder: 0.0, value: f(l) }
                })
                .collect()
        };
        let good = fit_growth(&mk(&|l| 2.0 * (l + 1.0).ln() + 1.0), GrowthShape::Log);
        assert!(good.holds && good.c_bound >= good.c_least_squares);
        let bad = fit_growth(&mk(&|l| l.sqrt()), GrowthShape::Log);
        assert!(!bad.holds);
    }

    #[test]
    fn l1_not_l2_g1_norm_grows_logarithmically() {
        let a = l1_not_l2_g1_norm_sq_partial(1000);
        let b = l1_not_l2_g1_norm_sq_partial(100_000);
        let slope = (b - a) / (100_000f64 / 1000.0).ln();
        assert!((slope - 1.0 / 3.0).abs() < 0.01, "{slope}");
    }

    #[test]
    fn hannan_origin_matches_series() {
        let f = sl(5.0);
        let h = hannan_term(&f, 0, 0).unwrap();
        let direct = csum((2..=200u32).rev().map(|k| {
            let kf = k as f64;
            kf.powi(-5) / (kf + 1.0).ln().powi(2)
        }));
        assert!((h.value * h.value - direct).abs() < 1e-9);
    }

    #[test]
    fn l1_tail_behaviour() {
        let f = sl(5.0);
        let b0 = l1_projective_tail_with(&f, 0, 0, 2000).unwrap();
        let b1 = l1_projective_tail_with(&f, 4, 4, 2000).unwrap();
        let b2 = l1_projective_tail_with(&f, 8, 8, 2000).unwrap();
        assert!(b0.is_finite() && b0 > b1 && b1 > b2);
        assert_eq!(l1_projective_tail(&CoefficientField::zero(), 0, 0).unwrap(), 0.0);
    }

    #[test]
    fn outside_box_moment_matches_enumeration() {
        for &(k, i0, j0) in &[(2.0, 0, 0), (2.0, 3, 2), (5.0, 1, 4), (3.0, 6, 6)] {
            let mut acc = Vec::new();
            for u in 0..1500u64 {
                for v in 0..(1500 - u) {
                    let w = ((u + 1) * (v + 1)) as f64
                        - ((u + 1).min(i0) * (v + 1).min(j0)) as f64;
                    acc.push(w * (k + (u + v) as f64).powf(-8.0));
                }
            }
            let direct = csum(acc);
            let got = quadrant_moment_outside_box(8.0, k, i0, j0);
            assert!((got - direct).abs() < 1e-7 * direct.max(1e-12), "k={k} i0={i0} j0={j0}: {got} vs {direct}");
        }
    }
}
