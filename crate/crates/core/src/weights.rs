//! Window-summed weights `W_k(s,t) = sum_{i<n1, j<n2} c_k(i-s, j-t)` so that
//! `S_{n1,n2}(f) = sum_k sum_{s,t} W_k(s,t) e_{k,s,t}`, plus sampling and the
//! exact second moment.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{CoefficientField, ScaleKernel, TruncationSpec};
use crate::noise::LawFamily;
use crate::output::{fmt_f64, CsvTable};
use crate::rng::{CounterStream, StreamKey};
use crate::summation::NeumaierSum;

/// Default ceiling on the weight arrays of one window.
pub const DEFAULT_MEMORY_CAP: usize = 2 << 30;

/// Above this nonzero-atom probability every site gets its own keyed draw;
/// below it sites are visited by geometric skipping.
pub const DENSE_THRESHOLD: f64 = 0.2;

const SPARSE_TAG: u64 = 0x5350_4152_5345;

/// Weights of one scale on the site rectangle `[s0, s0+rows) x [t0, t0+cols)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleWeights {
    pub k: u32,
    pub s0: i64,
    pub t0: i64,
    pub rows: usize,
    pub cols: usize,
    pub w: Vec<f64>,
}

impl ScaleWeights {
    pub fn get(&self, s: i64, t: i64) -> f64 {
        let (r, c) = (s - self.s0, t - self.t0);
        if r < 0 || c < 0 || r >= self.rows as i64 || c >= self.cols as i64 {
            return 0.0;
        }
        self.w[r as usize * self.cols + c as usize]
    }

    fn site(&self, idx: usize) -> (i64, i64) {
        (self.s0 + (idx / self.cols) as i64, self.t0 + (idx % self.cols) as i64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowWeights {
    pub n1: u64,
    pub n2: u64,
    pub family: String,
    pub laws: LawFamily,
    pub trunc: TruncationSpec,
    pub scales: Vec<ScaleWeights>,
}

impl WindowWeights {
    pub fn get(&self, k: u32, s: i64, t: i64) -> f64 {
        self.scales.iter().find(|w| w.k == k).map_or(0.0, |w| w.get(s, t))
    }

    pub fn site_count(&self) -> usize {
        self.scales.iter().map(|w| w.w.len()).sum()
    }

    pub fn max_weight(&self) -> f64 {
        self.scales.iter().flat_map(|w| w.w.iter().copied()).fold(0.0, f64::max)
    }

    /// Rows `k,s,t,weight` for every stored site.
    pub fn to_csv(&self) -> String {
        let mut t = CsvTable::new(&["k", "s", "t", "weight"]);
        for sw in &self.scales {
            for idx in 0..sw.w.len() {
                let (s, tt) = sw.site(idx);
                t.row(&[sw.k.to_string(), s.to_string(), tt.to_string(), fmt_f64(sw.w[idx])]);
            }
        }
        t.into_string()
    }
}

fn kernels(field: &CoefficientField, trunc: &TruncationSpec) -> Vec<ScaleKernel> {
    let hi = field.last_k().map_or(trunc.k_max, |l| l.min(trunc.k_max));
    (trunc.k_min.max(1)..=hi).map(|k| field.kernel(k, trunc)).collect()
}

fn site_box(ker: &ScaleKernel, n1: u64, n2: u64) -> (i64, i64, usize, usize) {
    let s0 = -(ker.u0 + ker.rows as i64 - 1);
    let t0 = -(ker.v0 + ker.cols as i64 - 1);
    (s0, t0, n1 as usize + ker.rows - 1, n2 as usize + ker.cols - 1)
}

/// Bytes needed by [`window_weights`] for this field and window.
pub fn memory_estimate(field: &CoefficientField, n1: u64, n2: u64, trunc: &TruncationSpec) -> usize {
    kernels(field, trunc)
        .iter()
        .map(|ker| {
            let (_, _, r, c) = site_box(ker, n1, n2);
            (r * c + (ker.rows + 1) * (ker.cols + 1)) * std::mem::size_of::<f64>()
        })
        .sum()
}

/// Window weights with the default memory cap.
pub fn window_weights(field: &CoefficientField, n1: u64, n2: u64, trunc: &TruncationSpec) -> Result<WindowWeights> {
    window_weights_with_cap(field, n1, n2, trunc, DEFAULT_MEMORY_CAP)
}

pub fn window_weights_with_cap(
    field: &CoefficientField,
    n1: u64,
    n2: u64,
    trunc: &TruncationSpec,
    cap: usize,
) -> Result<WindowWeights> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::InvalidParameter("window sides must be >= 1".into()));
    }
    let bytes = memory_estimate(field, n1, n2, trunc);
    if bytes > cap {
        return Err(Error::WindowTooLarge { bytes: bytes as u64, cap: cap as u64 });
    }
    let scales = kernels(field, trunc).par_iter().map(|ker| scale_weights(ker, n1, n2)).collect();
    Ok(WindowWeights { n1, n2, family: field.tag().to_string(), laws: *field.laws(), trunc: *trunc, scales })
}

fn scale_weights(ker: &ScaleKernel, n1: u64, n2: u64) -> ScaleWeights {
    let (r, c) = (ker.rows, ker.cols);
    // prefix[(a)(c+1) + b] = sum of coeffs over rows < a, cols < b
    let mut prefix = vec![0.0; (r + 1) * (c + 1)];
    for a in 0..r {
        let mut run = NeumaierSum::new();
        for b in 0..c {
            run += ker.coeffs[a * c + b];
            prefix[(a + 1) * (c + 1) + b + 1] = prefix[a * (c + 1) + b + 1] + run.value();
        }
    }
    let rect = |a0: usize, a1: usize, b0: usize, b1: usize| -> f64 {
        // rows [a0, a1), cols [b0, b1)
        let p = |a: usize, b: usize| prefix[a * (c + 1) + b];
        (p(a1, b1) - p(a0, b1)) - (p(a1, b0) - p(a0, b0))
    };
    let (s0, t0, rows, cols) = site_box(ker, n1, n2);
    let mut w = vec![0.0; rows * cols];
    let (n1, n2) = (n1 as i64, n2 as i64);
    for ri in 0..rows {
        let s = s0 + ri as i64;
        // lags u in [-s, n1-1-s] intersect [u0, u0+r-1], as kernel rows
        let a0 = (-s).max(ker.u0) - ker.u0;
        let a1 = (n1 - 1 - s).min(ker.u0 + r as i64 - 1) - ker.u0 + 1;
        if a1 <= a0 {
            continue;
        }
        for ci in 0..cols {
            let t = t0 + ci as i64;
            let b0 = (-t).max(ker.v0) - ker.v0;
            let b1 = (n2 - 1 - t).min(ker.v0 + c as i64 - 1) - ker.v0 + 1;
            if b1 <= b0 {
                continue;
            }
            w[ri * cols + ci] = rect(a0 as usize, a1 as usize, b0 as usize, b1 as usize);
        }
    }
    ScaleWeights { k: ker.k, s0, t0, rows, cols, w }
}

/// Reference enumeration of `W_k(s,t)` straight from the definition.
pub fn window_weights_naive(field: &CoefficientField, n1: u64, n2: u64, trunc: &TruncationSpec) -> WindowWeights {
    let scales = kernels(field, trunc)
        .iter()
        .map(|ker| {
            let (s0, t0, rows, cols) = site_box(ker, n1, n2);
            let mut w = vec![0.0; rows * cols];
            for ri in 0..rows {
                for ci in 0..cols {
                    let (s, t) = (s0 + ri as i64, t0 + ci as i64);
                    let mut acc = NeumaierSum::new();
                    for i in 0..n1 as i64 {
                        for j in 0..n2 as i64 {
                            acc += ker.get(i - s, j - t);
                        }
                    }
                    w[ri * cols + ci] = acc.value();
                }
            }
            ScaleWeights { k: ker.k, s0, t0, rows, cols, w }
        })
        .collect();
    WindowWeights { n1, n2, family: field.tag().to_string(), laws: *field.laws(), trunc: *trunc, scales }
}

/// `sum_k l2sq(e_k) sum_{s,t} W_k(s,t)^2`, largest scale first.
pub fn exact_second_moment(weights: &WindowWeights, laws: &LawFamily) -> Result<f64> {
    let mut acc = NeumaierSum::new();
    for sw in weights.scales.iter().rev() {
        let l2sq = laws.scale_moments(sw.k)?.l2sq;
        let sq: NeumaierSum = sw.w.iter().map(|x| x * x).sum();
        acc += l2sq * sq.value();
    }
    Ok(acc.value())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartialSumSample {
    pub n1: u64,
    pub n2: u64,
    pub replication: u64,
    pub value: f64,
    pub normalized: f64,
}

/// One draw of `S_{n1,n2}(f)`, a pure function of
/// `(master_seed, replication)`.
pub fn sample_partial_sum(
    weights: &WindowWeights,
    laws: &LawFamily,
    master_seed: u64,
    replication: u64,
) -> Result<PartialSumSample> {
    let mut acc = NeumaierSum::new();
    for sw in weights.scales.iter().rev() {
        let law = laws.law_for_scale(sw.k)?;
        let q = 2.0 * law.p();
        if q >= DENSE_THRESHOLD {
            for (idx, &wt) in sw.w.iter().enumerate() {
                if wt != 0.0 {
                    let (s, t) = sw.site(idx);
                    let x = law.sample(&StreamKey::new(master_seed, sw.k, s, t, replication));
                    if x != 0.0 {
                        acc += wt * x;
                    }
                }
            }
        } else {
            let mut rng = CounterStream::from_words(&[master_seed, sw.k as u64, replication, SPARSE_TAG]);
            let log_miss = (-q).ln_1p();
            let n = sw.w.len();
            let mut idx = 0usize;
            loop {
                let gap = (rng.next_open().ln() / log_miss).floor();
                if gap >= (n - idx) as f64 {
                    break;
                }
                idx += gap as usize;
                let sign = if rng.next_f64() < 0.5 { 1.0 } else { -1.0 };
                acc += sign * law.v() * sw.w[idx];
                idx += 1;
                if idx >= n {
                    break;
                }
            }
        }
    }
    let value = acc.value();
    Ok(PartialSumSample {
        n1: weights.n1,
        n2: weights.n2,
        replication,
        value,
        normalized: value / ((weights.n1 * weights.n2) as f64).sqrt(),
    })
}

/// Replications `first..first+count`, computed in parallel and returned in
/// replication order.
pub fn sample_partial_sums(
    weights: &WindowWeights,
    laws: &LawFamily,
    master_seed: u64,
    first: u64,
    count: u64,
) -> Result<Vec<PartialSumSample>> {
    (first..first + count)
        .into_par_iter()
        .map(|r| sample_partial_sum(weights, laws, master_seed, r))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::summation::csum;

    fn sl5() -> CoefficientField {
        CoefficientField::superlinear(5.0).unwrap()
    }

    #[test]
    fn single_atom_window() {
        let f = CoefficientField::iid(1.0, 0.5).unwrap();
        let w = window_weights(&f, 1, 1, &TruncationSpec::raw(1, 1, 0)).unwrap();
        assert_eq!(w.get(1, 0, 0), 1.0);
        assert_eq!(w.site_count(), 1);
        let s = sample_partial_sum(&w, f.laws(), 9, 0).unwrap();
        assert!(s.value == 1.0 || s.value == -1.0);
    }

    #[test]
    fn superlinear_two_by_two_corner() {
        let w = window_weights(&sl5(), 2, 2, &TruncationSpec::raw(1, 1, 2)).unwrap();
        let want = 1.0 + 1.0 / 32.0 + 1.0 / 32.0 + 1.0 / 243.0;
        assert!((w.get(1, 0, 0) - want).abs() < 1e-15);
    }

    #[test]
    fn prefix_sums_match_enumeration() {
        let f = CoefficientField::l1_not_l2();
        for (n1, n2, m) in [(1, 1, 0), (3, 2, 2), (4, 4, 3)] {
            let t = TruncationSpec::raw(2, 4, m);
            let a = window_weights(&f, n1, n2, &t).unwrap();
            let b = window_weights_naive(&f, n1, n2, &t);
            for (x, y) in a.scales.iter().zip(&b.scales) {
                assert_eq!((x.s0, x.t0, x.rows, x.cols), (y.s0, y.t0, y.rows, y.cols));
                for (p, q) in x.w.iter().zip(&y.w) {
                    assert!((p - q).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn memory_cap_is_enforced() {
        let t = TruncationSpec::raw(2, 10, 8);
        let err = window_weights_with_cap(&sl5(), 64, 64, &t, 1000).unwrap_err();
        assert!(matches!(err, Error::WindowTooLarge { .. }));
    }

    #[test]
    fn second_moment_of_one_by_one_window() {
        let f = sl5();
        let t = TruncationSpec::raw(2, 2, 2);
        let w = window_weights(&f, 1, 1, &t).unwrap();
        let l2sq = f.laws().scale_moments(2).unwrap().l2sq;
        let direct = csum((0..=2).flat_map(|u| (0..=2).map(move |v| ((2 + u + v) as f64).powf(-10.0)))) * l2sq;
        assert!((exact_second_moment(&w, f.laws()).unwrap() - direct).abs() < 1e-12 * direct);
    }

    #[test]
    fn iid_window_variance_is_area() {
        let f = CoefficientField::iid(2.0, 0.25).unwrap();
        let t = TruncationSpec::raw(1, 1, 0);
        for n in [1, 3, 10] {
            let w = window_weights(&f, n, n, &t).unwrap();
            let v = exact_second_moment(&w, f.laws()).unwrap() / (n * n) as f64;
            assert!((v - 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_weights_sample_zero() {
        let f = CoefficientField::zero();
        let w = window_weights(&f, 3, 3, &TruncationSpec::raw(1, 1, 0)).unwrap();
        assert_eq!(sample_partial_sum(&w, &LawFamily::Custom { v: 1.0, p: 0.5 }, 1, 1).unwrap().value, 0.0);
    }

    #[test]
    fn sampling_is_deterministic() {
        let f = sl5();
        let t = TruncationSpec::for_field(&f, 12, 6);
        let w = window_weights(&f, 8, 8, &t).unwrap();
        let a = sample_partial_sums(&w, f.laws(), 42, 0, 50).unwrap();
        let b = sample_partial_sums(&w, f.laws(), 42, 0, 50).unwrap();
        assert_eq!(a, b);
        let c = sample_partial_sum(&w, f.laws(), 42, 17).unwrap();
        assert_eq!(a[17], c);
    }

    #[test]
    fn monte_carlo_variance_matches_exact() {
        let f = sl5();
        let t = TruncationSpec::for_field(&f, 6, 8);
        let w = window_weights(&f, 8, 8, &t).unwrap();
        let exact = exact_second_moment(&w, f.laws()).unwrap();
        let xs: Vec<f64> = sample_partial_sums(&w, f.laws(), 7, 0, 10_000).unwrap().iter().map(|s| s.value).collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var / exact - 1.0).abs() < 0.1, "{var} vs {exact}");
    }

    #[test]
    fn dense_route_variance() {
        // p = 0.5 forces per-site keyed draws
        let f = CoefficientField::iid(1.0, 0.5).unwrap();
        let w = window_weights(&f, 5, 5, &TruncationSpec::raw(1, 1, 0)).unwrap();
        let xs: Vec<f64> = sample_partial_sums(&w, f.laws(), 3, 0, 20_000).unwrap().iter().map(|s| s.normalized).collect();
        let var = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
        assert!((var - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn csv_header_and_rows() {
        let f = CoefficientField::iid(1.0, 0.5).unwrap();
        let w = window_weights(&f, 1, 2, &TruncationSpec::raw(1, 1, 0)).unwrap();
        let csv = w.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("k,s,t,weight"));
        assert_eq!(lines.count(), 2);
    }
}
