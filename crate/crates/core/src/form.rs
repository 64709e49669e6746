//! Finite linear combinations of noise atoms `e_{k,s,t} = U^s V^t e_k`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::noise::LawFamily;
use crate::summation::NeumaierSum;

/// Atom `e_{k,s,t}`; `(s, t)` is the shift vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Atom {
    pub k: u32,
    pub s: i64,
    pub t: i64,
}

impl Atom {
    pub fn new(k: u32, s: i64, t: i64) -> Self {
        Self { k, s, t }
    }
}

/// Sparse linear form `sum c_a e_a`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearForm {
    coeffs: BTreeMap<Atom, f64>,
}

impl LinearForm {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_term(&mut self, atom: Atom, c: f64) {
        if c == 0.0 {
            return;
        }
        let e = self.coeffs.entry(atom).or_insert(0.0);
        *e += c;
        if *e == 0.0 {
            self.coeffs.remove(&atom);
        }
    }

    pub fn coeff(&self, atom: Atom) -> f64 {
        self.coeffs.get(&atom).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Atom, f64)> + '_ {
        self.coeffs.iter().map(|(a, c)| (*a, *c))
    }

    /// `U^ds V^dt` applied to the form.
    pub fn shifted(&self, ds: i64, dt: i64) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .map(|(a, c)| (Atom::new(a.k, a.s + ds, a.t + dt), *c))
            .collect();
        Self { coeffs }
    }

    pub fn plus(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (a, c) in other.iter() {
            out.add_term(a, c);
        }
        out
    }

    pub fn minus(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (a, c) in other.iter() {
            out.add_term(a, -c);
        }
        out
    }

    /// `(I - U) x`.
    pub fn diff_u(&self) -> Self {
        self.minus(&self.shifted(1, 0))
    }

    /// `(I - V) x`.
    pub fn diff_v(&self) -> Self {
        self.minus(&self.shifted(0, 1))
    }

    /// `(I - U^l) x`.
    pub fn diff_u_pow(&self, l: i64) -> Self {
        self.minus(&self.shifted(l, 0))
    }

    /// Conditional expectation onto the cone `F_{a,b}`: independence keeps
    /// exactly the atoms with `s <= a` and `t <= b`.
    pub fn project_cone(&self, a: i64, b: i64) -> Self {
        self.filter(|at| at.s <= a && at.t <= b)
    }

    pub fn filter(&self, keep: impl Fn(&Atom) -> bool) -> Self {
        let coeffs = self.coeffs.iter().filter(|(a, _)| keep(a)).map(|(a, c)| (*a, *c)).collect();
        Self { coeffs }
    }

    /// Exact `||x||_2^2 = sum c^2 ||e_k||_2^2`, summed from the largest scale down.
    pub fn l2_norm_sq(&self, laws: &LawFamily) -> f64 {
        let mut acc = NeumaierSum::new();
        for (a, c) in self.coeffs.iter().rev() {
            let l2sq = laws.scale_moments(a.k).map(|m| m.l2sq).unwrap_or(f64::NAN);
            acc += c * c * l2sq;
        }
        acc.value()
    }

    /// Triangle-inequality bound `sum |c| ||e_k||_1 >= ||x||_1`.
    pub fn l1_bound(&self, laws: &LawFamily) -> f64 {
        let mut acc = NeumaierSum::new();
        for (a, c) in self.coeffs.iter().rev() {
            let l1 = laws.scale_moments(a.k).map(|m| m.l1).unwrap_or(f64::NAN);
            acc += c.abs() * l1;
        }
        acc.value()
    }

    /// Largest absolute coefficient difference against `other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.minus(other).iter().map(|(_, c)| c.abs()).fold(0.0, f64::max)
    }
}

impl FromIterator<(Atom, f64)> for LinearForm {
    fn from_iter<I: IntoIterator<Item = (Atom, f64)>>(iter: I) -> Self {
        let mut f = LinearForm::new();
        for (a, c) in iter {
            f.add_term(a, c);
        }
        f
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shift_and_difference() {
        let f: LinearForm = [(Atom::new(1, 0, 0), 2.0)].into_iter().collect();
        let d = f.diff_u();
        assert_eq!(d.coeff(Atom::new(1, 0, 0)), 2.0);
        assert_eq!(d.coeff(Atom::new(1, 1, 0)), -2.0);
        let dd = f.diff_u().diff_v();
        assert_eq!(dd.len(), 4);
        assert_eq!(dd.coeff(Atom::new(1, 1, 1)), 2.0);
    }

    #[test]
    fn cone_projection_keeps_past() {
        let f: LinearForm =
            [(Atom::new(1, 0, 0), 1.0), (Atom::new(1, 1, 0), 1.0), (Atom::new(1, -1, -3), 1.0)]
                .into_iter()
                .collect();
        let p = f.project_cone(0, 0);
        assert_eq!(p.len(), 2);
        assert_eq!(p.coeff(Atom::new(1, 1, 0)), 0.0);
    }

    #[test]
    fn cancellation_removes_atom() {
        let mut f = LinearForm::new();
        f.add_term(Atom::new(2, 1, 1), 0.5);
        f.add_term(Atom::new(2, 1, 1), -0.5);
        assert!(f.is_empty());
    }
}
