//! Coefficient fields `f = sum_k sum_{u,v} c_k(u,v) U^{-u} V^{-v} e_k`,
//! their truncation and certified tail bounds.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::decomposition::l1_not_l2_scale_terms;
use crate::error::{Error, Result};
use crate::form::LinearForm;
use crate::noise::LawFamily;
use crate::special::{quadrant_mass, quadrant_mass_majorant};
use crate::summation::NeumaierSum;

type Provider = Arc<dyn Fn(u32, i64, i64) -> f64 + Send + Sync>;

/// User-supplied coefficients `(k, u, v) -> c`, evaluated on `u, v in [0, lag_max]`.
#[derive(Clone)]
pub struct CustomProvider(Provider);

impl fmt::Debug for CustomProvider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomProvider(..)")
    }
}

#[derive(Debug, Clone)]
pub enum FieldKind {
    /// `c_k(u,v) = (k+u+v)^(-alpha)`.
    Superlinear { alpha: f64 },
    /// `m + (I-U) g1 + (I-V) g2 + (I-U)(I-V) g3` with the explicit one-directional series.
    L1NotL2,
    /// One scale (`k = 1`) with `c_1(u,v) = 1{u = v = 0}`: an i.i.d. lattice.
    Iid,
    Zero,
    Custom(CustomProvider),
}

#[derive(Debug, Clone)]
pub struct CoefficientField {
    kind: FieldKind,
    laws: LawFamily,
}

impl CoefficientField {
    pub fn superlinear(alpha: f64) -> Result<Self> {
        let laws = LawFamily::superlinear(alpha)?;
        Ok(Self { kind: FieldKind::Superlinear { alpha }, laws })
    }

    pub fn l1_not_l2() -> Self {
        Self { kind: FieldKind::L1NotL2, laws: LawFamily::L1NotL2 }
    }

    pub fn iid(v: f64, p: f64) -> Result<Self> {
        let laws = LawFamily::Custom { v, p };
        laws.validate()?;
        Ok(Self { kind: FieldKind::Iid, laws })
    }

    pub fn zero() -> Self {
        Self { kind: FieldKind::Zero, laws: LawFamily::Custom { v: 1.0, p: 0.5 } }
    }

    pub fn custom(
        laws: LawFamily,
        provider: impl Fn(u32, i64, i64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        laws.validate()?;
        Ok(Self { kind: FieldKind::Custom(CustomProvider(Arc::new(provider))), laws })
    }

    pub fn kind(&self) -> &FieldKind {
        &self.kind
    }

    pub fn laws(&self) -> &LawFamily {
        &self.laws
    }

    pub fn tag(&self) -> &'static str {
        match self.kind {
            FieldKind::Superlinear { .. } => "superlinear",
            FieldKind::L1NotL2 => "l1-not-l2",
            FieldKind::Iid => "iid",
            FieldKind::Zero => "zero",
            FieldKind::Custom(_) => "custom",
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match self.kind {
            FieldKind::Superlinear { alpha } => Some(alpha),
            _ => None,
        }
    }

    /// First scale carried by the field.
    pub fn first_k(&self) -> u32 {
        match self.kind {
            FieldKind::Iid => 1,
            _ => self.laws.first_admissible_k(),
        }
    }

    /// Largest scale the field has at all (`None` = unbounded).
    pub fn last_k(&self) -> Option<u32> {
        match self.kind {
            FieldKind::Iid => Some(1),
            FieldKind::Zero => Some(0),
            _ => None,
        }
    }

    /// `a(k,u,v)` for the lag-indexed families; `None` for `L1NotL2`, which is
    /// built from its decomposition terms instead.
    pub fn coefficient(&self, k: u32, u: i64, v: i64) -> Option<f64> {
        if u < 0 || v < 0 {
            return Some(0.0);
        }
        match &self.kind {
            FieldKind::Superlinear { alpha } => Some(((k as i64 + u + v) as f64).powf(-alpha)),
            FieldKind::Iid => Some(if k == 1 && u == 0 && v == 0 { 1.0 } else { 0.0 }),
            FieldKind::Zero => Some(0.0),
            FieldKind::Custom(p) => Some((p.0)(k, u, v)),
            FieldKind::L1NotL2 => None,
        }
    }

    /// `c(k,u,v) = c(k,v,u)` for every scale.
    pub fn is_symmetric(&self) -> bool {
        !matches!(self.kind, FieldKind::Custom(_))
    }

    /// Scale `k` of the truncated field as a dense lag kernel.
    pub fn kernel(&self, k: u32, trunc: &TruncationSpec) -> ScaleKernel {
        let m = trunc.lag_max as i64;
        match &self.kind {
            FieldKind::L1NotL2 => {
                let terms = l1_not_l2_scale_terms(k, trunc.lag_max);
                ScaleKernel::from_form(k, &terms.recombine())
            }
            FieldKind::Iid | FieldKind::Zero => {
                let c = self.coefficient(k, 0, 0).unwrap_or(0.0);
                ScaleKernel { k, u0: 0, v0: 0, rows: 1, cols: 1, coeffs: vec![c] }
            }
            _ => {
                let n = (m + 1) as usize;
                let mut coeffs = vec![0.0; n * n];
                for u in 0..=m {
                    for v in 0..=m {
                        coeffs[u as usize * n + v as usize] =
                            self.coefficient(k, u, v).unwrap_or(0.0);
                    }
                }
                ScaleKernel { k, u0: 0, v0: 0, rows: n, cols: n, coeffs }
            }
        }
    }

    /// Scale indices retained by `trunc`.
    pub fn scales(&self, trunc: &TruncationSpec) -> std::ops::RangeInclusive<u32> {
        let hi = match self.last_k() {
            Some(l) => l.min(trunc.k_max),
            None => trunc.k_max,
        };
        trunc.k_min.max(self.first_k())..=hi
    }

    /// The truncated field as a linear form over atoms (small truncations only).
    pub fn form(&self, trunc: &TruncationSpec) -> LinearForm {
        let mut out = LinearForm::new();
        for k in self.scales(trunc) {
            let ker = self.kernel(k, trunc);
            for (atom, c) in ker.atoms() {
                out.add_term(atom, c);
            }
        }
        out
    }
}

/// Dense kernel of one scale: `c(u,v)` for `u in [u0, u0+rows)`, `v in [v0, v0+cols)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleKernel {
    pub k: u32,
    pub u0: i64,
    pub v0: i64,
    pub rows: usize,
    pub cols: usize,
    pub coeffs: Vec<f64>,
}

impl ScaleKernel {
    pub fn get(&self, u: i64, v: i64) -> f64 {
        let (r, c) = (u - self.u0, v - self.v0);
        if r < 0 || c < 0 || r >= self.rows as i64 || c >= self.cols as i64 {
            return 0.0;
        }
        self.coeffs[r as usize * self.cols + c as usize]
    }

    /// Kernel holding the atoms of scale `k` of `form`; lag = minus shift.
    pub fn from_form(k: u32, form: &LinearForm) -> Self {
        let atoms: Vec<_> = form.iter().filter(|(a, _)| a.k == k).collect();
        if atoms.is_empty() {
            return Self { k, u0: 0, v0: 0, rows: 1, cols: 1, coeffs: vec![0.0] };
        }
        let u0 = atoms.iter().map(|(a, _)| -a.s).min().unwrap();
        let u1 = atoms.iter().map(|(a, _)| -a.s).max().unwrap();
        let v0 = atoms.iter().map(|(a, _)| -a.t).min().unwrap();
        let v1 = atoms.iter().map(|(a, _)| -a.t).max().unwrap();
        let rows = (u1 - u0 + 1) as usize;
        let cols = (v1 - v0 + 1) as usize;
        let mut coeffs = vec![0.0; rows * cols];
        for (a, c) in atoms {
            coeffs[(-a.s - u0) as usize * cols + (-a.t - v0) as usize] += c;
        }
        Self { k, u0, v0, rows, cols, coeffs }
    }

    pub fn atoms(&self) -> impl Iterator<Item = (crate::form::Atom, f64)> + '_ {
        (0..self.rows).flat_map(move |r| {
            (0..self.cols).filter_map(move |c| {
                let x = self.coeffs[r * self.cols + c];
                (x != 0.0).then(|| {
                    let u = self.u0 + r as i64;
                    let v = self.v0 + c as i64;
                    (crate::form::Atom::new(self.k, -u, -v), x)
                })
            })
        })
    }
}

/// Retained scales `k_min..=k_max`, lags `0..=lag_max` per axis, and certified
/// bounds on what was discarded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationSpec {
    pub k_min: u32,
    pub k_max: u32,
    pub lag_max: u32,
    pub tail_l1: f64,
    pub tail_l2sq: f64,
}

impl TruncationSpec {
    /// Truncation starting at the field's first admissible scale, with tails
    /// filled in when the family has registered majorants (NaN otherwise).
    pub fn for_field(field: &CoefficientField, k_max: u32, lag_max: u32) -> Self {
        let mut t = Self { k_min: field.first_k(), k_max, lag_max, tail_l1: f64::NAN, tail_l2sq: f64::NAN };
        if let Ok(b) = tail_bound(field, &t) {
            t.tail_l1 = b.tail_l1;
            t.tail_l2sq = b.tail_l2sq;
        }
        t
    }

    /// Bare truncation with an explicit first scale and no tails.
    pub fn raw(k_min: u32, k_max: u32, lag_max: u32) -> Self {
        Self { k_min, k_max, lag_max, tail_l1: f64::NAN, tail_l2sq: f64::NAN }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailBound {
    pub tail_l1: f64,
    pub tail_l2sq: f64,
}

/// Certified upper bounds on the L1 norm and the variance of the
/// part of `f` with scale `> k_max` or a lag `> lag_max`.
pub fn tail_bound(field: &CoefficientField, trunc: &TruncationSpec) -> Result<TailBound> {
    let big_k = trunc.k_max as f64;
    let m = trunc.lag_max as f64;
    let laws = field.laws();
    match field.kind() {
        FieldKind::Zero => Ok(TailBound { tail_l1: 0.0, tail_l2sq: 0.0 }),
        FieldKind::Iid => {
            let b = if trunc.k_max >= 1 && trunc.k_min <= 1 {
                0.0
            } else {
                laws.scale_moments(1)?.l1
            };
            let b2 = if b == 0.0 { 0.0 } else { laws.scale_moments(1)?.l2sq };
            Ok(TailBound { tail_l1: b, tail_l2sq: b2 })
        }
        FieldKind::Superlinear { alpha } => {
            let a = *alpha;
            let big_k = big_k.max(1.0);
            let lg = (big_k + 2.0).ln();
            // scales above k_max
            let mut l1 = NeumaierSum::new();
            let mut l2 = NeumaierSum::new();
            l1 += quadrant_mass_majorant(a, big_k + 1.0) / (lg * lg) / (2.0 * big_k * big_k);
            l2 += quadrant_mass_majorant(2.0 * a, big_k + 1.0) / (lg * lg) / (2.0 * big_k * big_k);
            // lags outside the box for retained scales
            for k in field.scales(trunc).rev() {
                let kf = k as f64;
                let mom = laws.scale_moments(k)?;
                let out1 = 2.0 * quadrant_mass(a, kf + m + 1.0) - quadrant_mass(a, kf + 2.0 * m + 2.0);
                let out2 = 2.0 * quadrant_mass(2.0 * a, kf + m + 1.0)
                    - quadrant_mass(2.0 * a, kf + 2.0 * m + 2.0);
                l1 += mom.l1 * out1.max(0.0);
                l2 += mom.l2sq * out2.max(0.0);
            }
            Ok(TailBound { tail_l1: l1.value(), tail_l2sq: l2.value() })
        }
        FieldKind::L1NotL2 => {
            let big_k = big_k.max(2.0);
            let mut l1 = NeumaierSum::new();
            // per-scale L1 mass <= 4/k + 7/k^2, ||e_k||_1 = 1/log(k+1)^2
            l1 += 4.0 / big_k.ln() + 7.0 / (big_k * (big_k + 2.0).ln().powi(2));
            for k in field.scales(trunc).rev() {
                let kf = k as f64;
                l1 += laws.scale_moments(k)?.l1 * 4.0 / (kf + m + 1.0).powi(2);
            }
            // every discarded scale carries variance 4 through the g3 term
            Ok(TailBound { tail_l1: l1.value(), tail_l2sq: f64::INFINITY })
        }
        FieldKind::Custom(_) => {
            Err(Error::UnsupportedFamily("custom providers have no registered majorants".into()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::summation::csum;

    #[test]
    fn superlinear_tail_monotone_in_k() {
        let f = CoefficientField::superlinear(5.0).unwrap();
        let mut prev = (f64::INFINITY, f64::INFINITY);
        for k in [10, 100, 1000] {
            let b = tail_bound(&f, &TruncationSpec::raw(2, k, 64)).unwrap();
            assert!(b.tail_l1 < prev.0 && b.tail_l2sq < prev.1);
            assert!(b.tail_l1 > 0.0);
            prev = (b.tail_l1, b.tail_l2sq);
        }
    }

    #[test]
    fn superlinear_tail_monotone_in_lag() {
        let f = CoefficientField::superlinear(5.0).unwrap();
        let a = tail_bound(&f, &TruncationSpec::raw(2, 50, 4)).unwrap();
        let b = tail_bound(&f, &TruncationSpec::raw(2, 50, 16)).unwrap();
        assert!(b.tail_l1 < a.tail_l1 && b.tail_l2sq < a.tail_l2sq);
    }

    #[test]
    fn superlinear_scale_tail_dominates_direct_sum() {
        // scale part only: infinite lags, k > 50
        let f = CoefficientField::superlinear(5.0).unwrap();
        let laws = *f.laws();
        let truth = csum((51..200_000u32).rev().map(|k| {
            laws.scale_moments(k).unwrap().l1 * quadrant_mass(5.0, k as f64)
        }));
        let huge_lag = TruncationSpec::raw(2, 50, 1_000_000);
        let bound = tail_bound(&f, &huge_lag).unwrap().tail_l1;
        assert!(bound >= truth, "{bound} < {truth}");
        // and it is dominated by the coarse majorant C sum 1/(k log^2(k+1))
        let coarse = csum((51..200_000u32).map(|k| 1.0 / (k as f64 * ((k + 1) as f64).ln().powi(2))));
        assert!(bound < coarse);
    }

    #[test]
    fn single_atom_has_zero_tail() {
        let f = CoefficientField::iid(1.0, 0.5).unwrap();
        let b = tail_bound(&f, &TruncationSpec::raw(1, 1, 0)).unwrap();
        assert_eq!(b.tail_l1, 0.0);
        assert_eq!(b.tail_l2sq, 0.0);
    }

    #[test]
    fn custom_has_no_majorant() {
        let f = CoefficientField::custom(LawFamily::Custom { v: 1.0, p: 0.5 }, |_, _, _| 1.0).unwrap();
        assert!(matches!(
            tail_bound(&f, &TruncationSpec::raw(1, 1, 1)),
            Err(Error::UnsupportedFamily(_))
        ));
    }

    #[test]
    fn l1_not_l2_tail_decreases() {
        let f = CoefficientField::l1_not_l2();
        let a = tail_bound(&f, &TruncationSpec::raw(2, 10, 8)).unwrap();
        let b = tail_bound(&f, &TruncationSpec::raw(2, 1000, 8)).unwrap();
        assert!(b.tail_l1 < a.tail_l1);
        assert!(a.tail_l2sq.is_infinite());
    }

    #[test]
    fn kernel_round_trips_through_form() {
        let f = CoefficientField::l1_not_l2();
        let t = TruncationSpec::raw(2, 3, 2);
        for k in 2..=3 {
            let ker = f.kernel(k, &t);
            let back = ScaleKernel::from_form(k, &ker.atoms().collect());
            assert_eq!(ker, back);
        }
    }
}
