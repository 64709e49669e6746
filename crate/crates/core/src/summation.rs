//! Compensated summation.

use std::iter::Sum;
use std::ops::{Add, AddAssign};

/// Kahan-Babuska-Neumaier running sum.
#[derive(Debug, Default, Clone, Copy)]
pub struct NeumaierSum {
    s: f64,
    c: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.s + x;
        if self.s.abs() >= x.abs() {
            self.c += (self.s - t) + x;
        } else {
            self.c += (x - t) + self.s;
        }
        self.s = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.s + self.c
    }
}

impl AddAssign<f64> for NeumaierSum {
    fn add_assign(&mut self, rhs: f64) {
        NeumaierSum::add(self, rhs);
    }
}

impl Add<f64> for NeumaierSum {
    type Output = Self;
    fn add(mut self, rhs: f64) -> Self {
        NeumaierSum::add(&mut self, rhs);
        self
    }
}

impl Sum<f64> for NeumaierSum {
    fn sum<I: Iterator<Item = f64>>(iter: I) -> Self {
        let mut acc = NeumaierSum::new();
        for x in iter {
            acc += x;
        }
        acc
    }
}

/// Compensated sum of an iterator.
pub fn csum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    xs.into_iter().sum::<NeumaierSum>().value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_small_terms_next_to_large_ones() {
        let xs = [1e100, 1.0, -1e100, 1.0];
        assert_eq!(csum(xs), 2.0);
        let naive: f64 = xs.iter().sum();
        assert_ne!(naive, 2.0);
    }

    #[test]
    fn harmonic_tail_order_independent() {
        let fwd = csum((1..200_000).map(|k| 1.0 / (k as f64 * k as f64)));
        let bwd = csum((1..200_000).rev().map(|k| 1.0 / (k as f64 * k as f64)));
        assert!((fwd - bwd).abs() < 1e-15);
    }
}
