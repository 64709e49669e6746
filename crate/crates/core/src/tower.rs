//! Cyclic-tower surrogate for the counterexample: tent functions `g_k` on
//! `N_k = n_k m_k` equally likely levels, their shifted differences, exact level
//! measures, the column Monte Carlo and the multi-scale schedule.
//!
//! Level values are kept as integer heights `h`; the real value is
//! `h * sqrt(m_k / n_k)`.

use num_bigint::{BigInt, BigUint};
use num_integer::Roots;
use num_rational::{BigRational, Ratio};
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::CounterStream;
use crate::stats::{summarize, EmpiricalSummary};

/// Largest `k` whose level count fits the `u64` level arithmetic.
pub const MAX_LEVEL_K: u32 = 40;

const COLUMN_TAG: u64 = 0x434f_4c55_4d4e;

/// `n_k = floor(2^{k/2})`, `m_k = 2^k`, `N_k = n_k m_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TowerScale {
    pub k: u32,
    pub n: u64,
    pub m: u64,
    pub levels: u64,
}

impl TowerScale {
    pub fn new(k: u32) -> Result<Self> {
        if k < 3 {
            return Err(Error::InvalidParameter(format!("tower scale needs k >= 3, got {k}")));
        }
        if k > MAX_LEVEL_K {
            return Err(Error::InvalidParameter(format!("tower scale k = {k} exceeds {MAX_LEVEL_K}")));
        }
        let m = 1u64 << k;
        let n = m.sqrt();
        Ok(Self { k, n, m, levels: n * m })
    }

    /// `sqrt(m/n)`, the value of one height unit.
    pub fn unit(&self) -> f64 {
        (self.m as f64 / self.n as f64).sqrt()
    }

    /// Largest shift for which the cyclic surrogate is exact.
    pub fn max_shift(&self) -> u64 {
        self.levels - 2 * self.n
    }
}

/// Integer tent height at level `j` (any integer; zero off `[0, 2n)`).
#[inline]
pub fn tent_height(n: u64, j: i64) -> i64 {
    let n = n as i64;
    if j < 0 || j >= 2 * n {
        0
    } else if j < n {
        j + 1
    } else {
        2 * n - j - 1
    }
}

/// `g_k`: tent heights on its support `[0, 2n_k)`, zero on the other levels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TowerFunction {
    pub scale: TowerScale,
    /// Heights on levels `0..2n_k`.
    pub heights: Vec<i64>,
}

impl TowerFunction {
    pub fn new(scale: TowerScale) -> Self {
        let heights = (0..2 * scale.n as i64).map(|j| tent_height(scale.n, j)).collect();
        Self { scale, heights }
    }

    pub fn height(&self, level: u64) -> i64 {
        self.heights.get(level as usize).copied().unwrap_or(0)
    }

    pub fn value(&self, level: u64) -> f64 {
        self.height(level) as f64 * self.scale.unit()
    }

    /// `||g_k||_1 = sum h / (n^{3/2} m^{1/2})`, from the exact height sum.
    pub fn l1_norm(&self) -> f64 {
        let s: i64 = self.heights.iter().sum();
        s as f64 / ((self.scale.n as f64).powf(1.5) * (self.scale.m as f64).sqrt())
    }
}

/// `g_k - U^s g_k` as integer heights; nonzero only on `[0, 2n) ∪ [s, s+2n)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftedDiff {
    pub scale: TowerScale,
    pub shift: u64,
    /// `(level, height)` for every nonzero level, in increasing level order.
    pub entries: Vec<(u64, i64)>,
}

/// `d[j] = g[j] - g[(j - s) mod N]`.
pub fn shifted_diff(g: &TowerFunction, shift: u64) -> Result<ShiftedDiff> {
    let sc = g.scale;
    if shift == 0 || shift > sc.max_shift() {
        return Err(Error::SurrogateValidity { shift, max: sc.max_shift() });
    }
    let end = shift + 2 * sc.n;
    let mut entries = Vec::new();
    let mut push = |j: u64| {
        let d = tent_height(sc.n, j as i64) - tent_height(sc.n, j as i64 - shift as i64);
        if d != 0 {
            entries.push((j, d));
        }
    };
    if shift >= 2 * sc.n {
        (0..2 * sc.n).for_each(&mut push);
        (shift..end).for_each(&mut push);
    } else {
        (0..end).for_each(&mut push);
    }
    Ok(ShiftedDiff { scale: sc, shift, entries })
}

impl ShiftedDiff {
    pub fn height(&self, level: u64) -> i64 {
        self.entries.binary_search_by_key(&level, |e| e.0).map_or(0, |i| self.entries[i].1)
    }

    pub fn value(&self, level: u64) -> f64 {
        self.height(level) as f64 * self.scale.unit()
    }

    /// `sum_j h_d[j]^2`.
    pub fn height_square_sum(&self) -> BigInt {
        self.entries.iter().map(|&(_, d)| BigInt::from(d) * d).sum()
    }

    /// `||g - U^s g||_2^2 = sum h_d^2 / n^2`, exactly.
    pub fn l2_norm_sq(&self) -> BigRational {
        BigRational::new(self.height_square_sum(), BigInt::from(self.scale.n) * self.scale.n)
    }

    pub fn sup_height(&self) -> i64 {
        self.entries.iter().map(|e| e.1.abs()).max().unwrap_or(0)
    }
}

/// Level predicates for [`exact_level_measure`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LevelPredicate {
    /// `d[j] != 0`.
    NonZero,
    /// `|d[j]| >= tau * sqrt(m n)`, i.e. `|h_d[j]| >= tau * n`.
    AtLeastPeakFraction(Ratio<i64>),
}

/// The fraction of levels satisfying `pred`.
pub fn exact_level_measure(d: &ShiftedDiff, pred: &LevelPredicate) -> BigRational {
    let n = d.scale.n as i64;
    let count = d
        .entries
        .iter()
        .filter(|&&(_, h)| match pred {
            LevelPredicate::NonZero => h != 0,
            LevelPredicate::AtLeastPeakFraction(tau) => {
                // |h| >= tau n  <=>  |h| denom >= numer n
                (h.abs() as i128) * (*tau.denom() as i128) >= (*tau.numer() as i128) * n as i128
            }
        })
        .count();
    BigRational::new(BigInt::from(count), BigInt::from(d.scale.levels))
}

/// `mu(A_k)` with `A_k = {|g_k - U^{2n_k} g_k| >= sqrt(m_k n_k) / 2}`.
pub fn level_measure_a(scale: TowerScale) -> BigRational {
    let g = TowerFunction::new(scale);
    let d = shifted_diff(&g, 2 * scale.n).expect("2n is a valid shift for k >= 3");
    exact_level_measure(&d, &LevelPredicate::AtLeastPeakFraction(Ratio::new(1, 2)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceedanceBound {
    pub k: u32,
    /// `mu(A_k)` as a reduced fraction.
    pub p_numer: String,
    pub p_denom: String,
    pub p: f64,
    /// `m p (1-p)^{m-1}`.
    pub value: f64,
    /// `2 / e^4`.
    pub reference: f64,
    pub exceeds_reference: bool,
}

/// `2/e^4`.
pub fn two_over_e4() -> f64 {
    2.0 * (-4.0f64).exp()
}

/// `m_k p (1-p)^{m_k-1}` with `p = mu(A_k)` exact.
pub fn exceedance_exact(scale: TowerScale) -> ExceedanceBound {
    let p = level_measure_a(scale);
    exceedance_for_probability(scale.k, scale.m, &p)
}

pub fn exceedance_for_probability(k: u32, m: u64, p: &BigRational) -> ExceedanceBound {
    let pf = p.to_f64().unwrap_or(f64::NAN);
    let value = m as f64 * pf * ((m - 1) as f64 * (-pf).ln_1p()).exp();
    ExceedanceBound {
        k,
        p_numer: p.numer().to_string(),
        p_denom: p.denom().to_string(),
        p: pf,
        value,
        reference: two_over_e4(),
        exceeds_reference: value >= two_over_e4(),
    }
}

/// Column model: `n2` independent columns, each at a uniform tower level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSimSpec {
    pub k: u32,
    pub n1: u64,
    pub n2: u64,
    pub replications: u64,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSimResult {
    pub spec: ColumnSimSpec,
    /// `sum_c d[L_c] / sqrt(n1 n2)` per replication, in replication order.
    pub samples: Vec<f64>,
    /// Summary with the exceedance at 1/2.
    pub summary: EmpiricalSummary,
    /// `Var(stat) = ||g - U^{n1} g||_2^2 / n1`.
    pub exact_variance: f64,
}

/// One replication of the column statistic.
pub fn column_statistic(d: &ShiftedDiff, n1: u64, n2: u64, master_seed: u64, replication: u64) -> f64 {
    let sc = d.scale;
    let mut rng = CounterStream::from_words(&[master_seed, sc.k as u64, n1, replication, COLUMN_TAG]);
    let mut total: i64 = 0;
    for _ in 0..n2 {
        total += d.height(rng.below(sc.levels));
    }
    total as f64 * sc.unit() / ((n1 * n2) as f64).sqrt()
}

/// Monte Carlo of the column statistic for every replication.
pub fn simulate_counterexample(spec: &ColumnSimSpec) -> Result<ColumnSimResult> {
    let scale = TowerScale::new(spec.k)?;
    let g = TowerFunction::new(scale);
    let d = shifted_diff(&g, spec.n1)?;
    if spec.n2 == 0 {
        return Err(Error::InvalidParameter("n2 must be >= 1".into()));
    }
    let samples: Vec<f64> = (0..spec.replications)
        .into_par_iter()
        .map(|r| column_statistic(&d, spec.n1, spec.n2, spec.master_seed, r))
        .collect();
    let summary = summarize(&samples, &[0.5])?;
    let exact_variance = d.l2_norm_sq().to_f64().unwrap_or(f64::NAN) / spec.n1 as f64;
    Ok(ColumnSimResult { spec: *spec, samples, summary, exact_variance })
}

// ---- multi-scale schedule -------------------------------------------------

fn big_n(k: u32) -> BigUint {
    (BigUint::one() << k).sqrt()
}

fn big_m(k: u32) -> BigUint {
    BigUint::one() << k
}

fn ceil_sqrt(x: &BigUint) -> BigUint {
    let r = x.sqrt();
    if &(&r * &r) == x { r } else { r + 1u32 }
}

fn sum_sq_upto(l: &BigInt) -> BigInt {
    // sum_{r=0}^{l-1} r^2
    if l.is_zero() {
        return BigInt::zero();
    }
    (l - 1) * l * (BigInt::from(2) * l - 1) / 6
}

/// `sum_j (h[j] - h[j-s])^2` for the tent of half-width `n`, closed form.
pub fn shifted_square_sum(n: &BigInt, s: &BigInt) -> BigInt {
    let two = BigInt::from(2);
    if s >= &(&two * n) {
        // two disjoint tents: 2 (2 sum_{i<=n} i^2 - n^2)
        let up = n * (n + 1) * (&two * n + 1) / 6;
        return &two * (&two * up - n * n);
    }
    assert!(s <= n, "closed form covers s <= n and s >= 2n");
    let rise = s * (s + 1) * (&two * s + 1) / 6;
    let flat = &two * (n - s) * s * s;
    // sum_{t<s} (s - 2 - 2t)^2
    let s2 = s - 2;
    let cross = s * &s2 * &s2 - BigInt::from(4) * &s2 * (s * (s - 1) / 2) + BigInt::from(4) * sum_sq_upto(s);
    let fall = sum_sq_upto(s);
    rise + flat + cross + fall
}

/// The same sum by enumerating the affine pieces between breakpoints
/// `{0, n, 2n} ∪ {s, s+n, s+2n}`; used to re-check schedules.
pub fn shifted_square_sum_piecewise(n: &BigInt, s: &BigInt) -> BigInt {
    let two = BigInt::from(2);
    let h = |j: &BigInt| -> BigInt {
        if j < &BigInt::zero() || j >= &(&two * n) {
            BigInt::zero()
        } else if j < n {
            j + 1
        } else {
            &two * n - j - 1
        }
    };
    let d = |j: &BigInt| h(j) - h(&(j - s));
    let mut cuts = vec![BigInt::zero(), n.clone(), &two * n, s.clone(), s + n, s + &two * n];
    cuts.sort();
    cuts.dedup();
    let mut total = BigInt::zero();
    for w in cuts.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let len = b - a;
        if len.is_zero() {
            continue;
        }
        let d0 = d(a);
        let slope = if len > BigInt::one() { d(&(a + 1)) - &d0 } else { BigInt::zero() };
        // sum_{t<len} (d0 + slope t)^2
        total += &len * &d0 * &d0 + &two * &d0 * &slope * (&len * (&len - 1) / 2) + &slope * &slope * sum_sq_upto(&len);
    }
    total
}

/// `sum_j h[j]^2` for the tent of half-width `n`.
fn tent_square_sum(n: &BigInt) -> BigInt {
    let two = BigInt::from(2);
    &two * (n * (n + 1) * (&two * n + 1) / 6) - n * n
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleStep {
    pub ell: u32,
    pub k: u32,
    pub n: String,
    pub m: String,
    /// `A = sum_{l'<l} 2 ceil(sqrt(N_{k_l'}))`, an upper bound on the sup-norm sum.
    pub sup_sum_bound: String,
    /// Condition (i): `A^2 4^l < n_k`.
    pub sup_condition_holds: bool,
    /// Condition (ii): for each earlier `l'`, `Q = sum (h - U^{2n_{k_l'}} h)^2` at
    /// this scale and the check `Q 16^l <= n_k^2`.
    pub l2_checks: Vec<L2Check>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L2Check {
    pub earlier_ell: u32,
    pub shift: String,
    pub square_sum: String,
    /// `sqrt(Q) / n_k`.
    pub l2_norm: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleSchedule {
    pub indices: Vec<u32>,
    pub steps: Vec<ScheduleStep>,
}

/// Cap on `k` used by [`schedule_scales`].
pub const DEFAULT_SCHEDULE_K_MAX: u32 = 512;

/// Greedy smallest admissible `k_l`, starting at `k_1 = 3`.
pub fn schedule_scales(levels: u32) -> Result<ScaleSchedule> {
    schedule_scales_with_cap(levels, DEFAULT_SCHEDULE_K_MAX)
}

fn step_for(ell: u32, k: u32, earlier: &[u32]) -> ScheduleStep {
    let n = big_n(k);
    let nb = BigInt::from(n.clone());
    let mut a = BigUint::zero();
    for &kp in earlier {
        a += 2u32 * ceil_sqrt(&(big_n(kp) * big_m(kp)));
    }
    let four_l = BigUint::one() << (2 * ell);
    let sup_condition_holds = &a * &a * &four_l < n;
    let sixteen_l = BigInt::one() << (4 * ell);
    let l2_checks = earlier
        .iter()
        .enumerate()
        .map(|(i, &kp)| {
            let shift = BigInt::from(2u32 * big_n(kp));
            let q = shifted_square_sum(&nb, &shift);
            let l2_norm = q.to_f64().unwrap().sqrt() / nb.to_f64().unwrap();
            let holds = &q * &sixteen_l <= &nb * &nb;
            L2Check { earlier_ell: i as u32 + 1, shift: shift.to_string(), square_sum: q.to_string(), l2_norm, holds }
        })
        .collect();
    ScheduleStep {
        ell,
        k,
        n: n.to_string(),
        m: big_m(k).to_string(),
        sup_sum_bound: a.to_string(),
        sup_condition_holds,
        l2_checks,
    }
}

pub fn schedule_scales_with_cap(levels: u32, k_cap: u32) -> Result<ScaleSchedule> {
    if levels == 0 {
        return Err(Error::InvalidParameter("schedule needs L >= 1".into()));
    }
    let mut indices = vec![3u32];
    let mut steps = vec![step_for(1, 3, &[])];
    for ell in 2..=levels {
        let mut k = indices.last().unwrap() + 1;
        loop {
            if k > k_cap {
                return Err(Error::ScheduleOverflow { max: k_cap });
            }
            // condition (ii) needs 2 n_{k'} <= n_k for the closed form
            if big_n(k) >= 2u32 * big_n(*indices.last().unwrap()) {
                let step = step_for(ell, k, &indices);
                if step.sup_condition_holds && step.l2_checks.iter().all(|c| c.holds) {
                    steps.push(step);
                    indices.push(k);
                    break;
                }
            }
            k += 1;
        }
    }
    Ok(ScaleSchedule { indices, steps })
}

/// Re-derives every recorded inequality from the indices alone, using the
/// piecewise enumeration for the L2 sums. Returns human-readable violations.
pub fn verify_schedule(s: &ScaleSchedule) -> Vec<String> {
    let mut bad = Vec::new();
    if s.indices.windows(2).any(|w| w[0] >= w[1]) {
        bad.push("indices are not strictly increasing".to_string());
    }
    if s.steps.len() != s.indices.len() {
        bad.push("step count differs from index count".to_string());
    }
    for (pos, step) in s.steps.iter().enumerate() {
        let ell = pos as u32 + 1;
        let k = s.indices[pos];
        if step.k != k || step.ell != ell {
            bad.push(format!("step {ell}: recorded (l, k) = ({}, {})", step.ell, step.k));
        }
        let n = BigInt::from(big_n(k));
        if step.n != n.to_string() {
            bad.push(format!("step {ell}: n_k mismatch"));
        }
        // (i): certify sqrt(N') <= c' by c'^2 >= N', then A^2 4^l < n
        let mut a = BigInt::zero();
        for &kp in &s.indices[..pos] {
            let big = BigInt::from(big_n(kp) * big_m(kp));
            let c = BigInt::from(ceil_sqrt(&(big_n(kp) * big_m(kp))));
            if &c * &c < big {
                bad.push(format!("step {ell}: ceil sqrt of N_{kp} is too small"));
            }
            a += BigInt::from(2) * c;
        }
        if a.to_string() != step.sup_sum_bound {
            bad.push(format!("step {ell}: sup-norm sum mismatch"));
        }
        if !(&a * &a * (BigInt::one() << (2 * ell)) < n) {
            bad.push(format!("step {ell}: sup-norm condition fails"));
        }
        // (ii)
        for (i, &kp) in s.indices[..pos].iter().enumerate() {
            let shift = BigInt::from(2u32 * big_n(kp));
            let q = shifted_square_sum_piecewise(&n, &shift);
            match step.l2_checks.get(i) {
                Some(c) if c.square_sum == q.to_string() => {}
                _ => bad.push(format!("step {ell}: L2 sum against l' = {} mismatch", i + 1)),
            }
            if !(&q * (BigInt::one() << (4 * ell)) <= &n * &n) {
                bad.push(format!("step {ell}: L2 condition against l' = {} fails", i + 1));
            }
        }
    }
    bad
}

/// Triangle-inequality bound on the L2 norm of the cross-scale part of the
/// normalized sum at level `l`:
/// `sum_{l' != l} ||g_{k_l'} - U^{2n_{k_l}} g_{k_l'}||_2 / sqrt(n_{k_l})`,
/// with exact norms where the shift is within the cyclic range, `2 ||g||_2`
/// otherwise, and `sum_{l' > L} 4^{-l'}` for unscheduled levels.
pub fn multi_scale_l2_bound(s: &ScaleSchedule, ell: u32) -> Result<f64> {
    if ell == 0 || ell as usize > s.indices.len() {
        return Err(Error::InvalidParameter(format!("level {ell} outside the schedule")));
    }
    let k = s.indices[ell as usize - 1];
    let n = BigInt::from(big_n(k));
    let shift = BigInt::from(2) * &n;
    let sqrt_n = n.to_f64().unwrap().sqrt();
    let mut total = 0.0;
    for (i, &kp) in s.indices.iter().enumerate() {
        if i as u32 + 1 == ell {
            continue;
        }
        let np = BigInt::from(big_n(kp));
        let levels = &np * BigInt::from(big_m(kp));
        let npf = np.to_f64().unwrap();
        let norm = if shift <= &levels - BigInt::from(2) * &np && (shift <= np || shift >= BigInt::from(2) * &np) {
            shifted_square_sum(&np, &shift).to_f64().unwrap().sqrt() / npf
        } else {
            2.0 * tent_square_sum(&np).to_f64().unwrap().sqrt() / npf
        };
        total += norm;
    }
    let last = s.indices.len() as i32;
    total += 4f64.powi(-last) / 3.0;
    Ok(total / sqrt_n)
}
