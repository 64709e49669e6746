//! Numerical evidence for the projective and liminf conditions: Monte Carlo
//! grids of `E|S_{n1,n2}| / sqrt(n1 n2)` plus certified bounds, folded into a
//! report with verdicts.
//!
//! A verdict of `satisfied` means "consistent at the configured tolerance";
//! finite grids cannot prove an analytic condition.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::decomposition::{hannan_diagonal_sums, hannan_term, l1_projective_tail};
use crate::error::{Error, Result};
use crate::field::{CoefficientField, FieldKind, TruncationSpec};
use crate::output::{fmt_f64, CsvTable};
use crate::rng::CounterStream;
use crate::stats::summarize;
use crate::tower::{column_statistic, shifted_diff, TowerFunction, TowerScale};
use crate::weights::{sample_partial_sums, window_weights_with_cap};

/// Anything that can draw normalized partial sums `S_{n1,n2} / sqrt(n1 n2)`.
pub trait PartialSumSampler: Sync {
    fn family(&self) -> String;

    /// Replications `0..reps`, in replication order.
    fn normalized_sums(&self, n1: u64, n2: u64, reps: u64, seed: u64) -> Result<Vec<f64>>;

    /// Certified upper bounds on the projective L1 tail at growing cutoffs.
    fn l1_projective_evidence(&self) -> Option<Vec<EvidenceRow>> {
        None
    }

    /// Partial sums of `||P_{0,0}(U^i V^j f)||_2` over `i + j <= D`, and whether
    /// the lower bound `c / ((w+1)^4 log^2(w+2))` held on the checked range.
    fn hannan_evidence(&self) -> Option<(Vec<EvidenceRow>, bool)> {
        None
    }
}

/// Linear field sampled through window weights.
#[derive(Debug, Clone)]
pub struct LinearFieldSampler {
    pub field: CoefficientField,
    pub trunc: TruncationSpec,
    pub memory_cap: usize,
}

impl PartialSumSampler for LinearFieldSampler {
    fn family(&self) -> String {
        self.field.tag().to_string()
    }

    fn normalized_sums(&self, n1: u64, n2: u64, reps: u64, seed: u64) -> Result<Vec<f64>> {
        let w = window_weights_with_cap(&self.field, n1, n2, &self.trunc, self.memory_cap)?;
        Ok(sample_partial_sums(&w, self.field.laws(), seed, 0, reps)?.into_iter().map(|s| s.normalized).collect())
    }

    fn l1_projective_evidence(&self) -> Option<Vec<EvidenceRow>> {
        let rows: Result<Vec<_>> = [0u64, 1, 2, 4, 8, 16]
            .iter()
            .map(|&c| {
                l1_projective_tail(&self.field, c, c).map(|b| EvidenceRow::value(format!("cutoff {c}x{c}"), b))
            })
            .collect();
        rows.ok()
    }

    fn hannan_evidence(&self) -> Option<(Vec<EvidenceRow>, bool)> {
        if !matches!(self.field.kind(), FieldKind::Superlinear { .. }) {
            return None;
        }
        let depths = [16u64, 64, 256, 1024, 4096];
        let sums = hannan_diagonal_sums(&self.field, &depths).ok()?;
        let rows = depths.iter().zip(&sums).map(|(d, s)| EvidenceRow::value(format!("i+j <= {d}"), *s)).collect();
        Some((rows, hannan_lower_bound_constant(&self.field, 64).ok()? > 0.0))
    }
}

/// Largest `c` with `hannan_term(w, 0)^2 >= c / ((w+1)^4 log^2(w+2))` for all
/// `w <= w_max` (the term depends on `i + j` only).
pub fn hannan_lower_bound_constant(field: &CoefficientField, w_max: u64) -> Result<f64> {
    let mut c = f64::INFINITY;
    for w in 0..=w_max {
        let h = hannan_term(field, w, 0)?.value;
        let wf = w as f64;
        c = c.min(h * h * (wf + 1.0).powi(4) * (wf + 2.0).ln().powi(2));
    }
    Ok(c)
}

/// Column model of the tower counterexample at scale `k`.
#[derive(Debug, Clone, Copy)]
pub struct TowerSampler {
    pub k: u32,
}

impl PartialSumSampler for TowerSampler {
    fn family(&self) -> String {
        "tower".into()
    }

    fn normalized_sums(&self, n1: u64, n2: u64, reps: u64, seed: u64) -> Result<Vec<f64>> {
        use rayon::prelude::*;
        let g = TowerFunction::new(TowerScale::new(self.k)?);
        let d = shifted_diff(&g, n1)?;
        Ok((0..reps).into_par_iter().map(|r| column_statistic(&d, n1, n2, seed, r)).collect())
    }

    fn l1_projective_evidence(&self) -> Option<Vec<EvidenceRow>> {
        // the E-series telescopes to g - E(U^{p+1} g | F_00), bounded by 2 ||g||_1
        let g = TowerFunction::new(TowerScale::new(self.k).ok()?);
        Some(vec![EvidenceRow::value("2 ||g_k||_1".into(), 2.0 * g.l1_norm())])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Satisfied,
    Violated,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvidenceKind {
    MonteCarlo,
    CertifiedUpperBound,
    ExactSeries,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceRow {
    pub label: String,
    pub n1: Option<u64>,
    pub n2: Option<u64>,
    pub value: f64,
    pub stderr: Option<f64>,
}

impl EvidenceRow {
    fn value(label: String, value: f64) -> Self {
        Self { label, n1: None, n2: None, value, stderr: None }
    }

    fn cell(label: &str, c: &GridCell) -> Self {
        Self { label: label.into(), n1: Some(c.n1), n2: Some(c.n2), value: c.estimate, stderr: Some(c.stderr) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionEntry {
    pub id: String,
    pub description: String,
    pub evidence_kind: EvidenceKind,
    pub evidence: Vec<EvidenceRow>,
    pub verdict: Verdict,
    pub note: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub n1: u64,
    pub n2: u64,
    pub estimate: f64,
    pub stderr: f64,
    pub reps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub family: String,
    pub master_seed: u64,
    pub replications: u64,
    pub levels: Vec<u64>,
    pub caveat: String,
    pub grid: Vec<GridCell>,
    pub conditions: Vec<ConditionEntry>,
}

impl ConditionReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per grid cell: `n1,n2,estimate,stderr,reps`.
    pub fn to_csv(&self) -> String {
        let mut t = CsvTable::new(&["n1", "n2", "estimate", "stderr", "reps"]);
        for c in &self.grid {
            t.row(&[c.n1.to_string(), c.n2.to_string(), fmt_f64(c.estimate), fmt_f64(c.stderr), c.reps.to_string()]);
        }
        t.into_string()
    }

    pub fn condition(&self, id: &str) -> Option<&ConditionEntry> {
        self.conditions.iter().find(|c| c.id == id)
    }
}

/// Options for [`condition_report`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionOptions {
    /// Dyadic window sides, increasing.
    pub levels: Vec<u64>,
    pub replications: u64,
    pub master_seed: u64,
    /// Reject cells whose standard error exceeds this fraction of the estimate.
    pub max_relative_stderr: f64,
    /// Combined-standard-error multiple for the Cauchy test.
    pub tolerance_sigmas: f64,
}

impl Default for ConditionOptions {
    fn default() -> Self {
        Self {
            levels: vec![16, 32, 64, 128, 256],
            replications: 4000,
            master_seed: 0,
            max_relative_stderr: 0.5,
            tolerance_sigmas: 3.0,
        }
    }
}

/// Satisfied when the top two estimates agree within `tol` combined standard
/// errors; violated when each of the last two steps increases by more than
/// that; inconclusive otherwise.
pub fn cauchy_verdict(seq: &[(f64, f64)], tol: f64) -> Verdict {
    if seq.len() < 2 {
        return Verdict::Inconclusive;
    }
    let gap = |a: (f64, f64), b: (f64, f64)| (b.0 - a.0, tol * (a.1 * a.1 + b.1 * b.1).sqrt());
    let l = seq.len();
    let (diff, bar) = gap(seq[l - 2], seq[l - 1]);
    if diff.abs() <= bar {
        return Verdict::Satisfied;
    }
    if l >= 3 {
        let (d0, b0) = gap(seq[l - 3], seq[l - 2]);
        if d0 > b0 && diff > bar {
            return Verdict::Violated;
        }
    }
    Verdict::Inconclusive
}

fn cell_seed(master: u64, n1: u64, n2: u64) -> u64 {
    CounterStream::from_words(&[master, n1, n2, 0x4752_4944]).next_u64()
}

fn evaluate_cell(sampler: &dyn PartialSumSampler, n1: u64, n2: u64, opts: &ConditionOptions) -> Result<GridCell> {
    let xs = sampler.normalized_sums(n1, n2, opts.replications, cell_seed(opts.master_seed, n1, n2))?;
    let s = summarize(&xs, &[])?;
    if s.stderr_mean_abs > opts.max_relative_stderr * s.mean_abs {
        return Err(Error::InsufficientReplications {
            n1: n1 as usize,
            n2: n2 as usize,
            stderr: s.stderr_mean_abs,
            estimate: s.mean_abs,
        });
    }
    Ok(GridCell { n1, n2, estimate: s.mean_abs, stderr: s.stderr_mean_abs, reps: opts.replications })
}

/// Evaluates the diagonal `(n, n)`, the one-directional
/// windows `(n, 1)` and `(1, n)`, and the iterated-limit proxies `(n, top)`
/// and `(top, n)` for every grid level `n`.
pub fn condition_report(sampler: &dyn PartialSumSampler, opts: &ConditionOptions) -> Result<ConditionReport> {
    if opts.levels.len() < 2 || opts.levels.windows(2).any(|w| w[0] >= w[1]) || opts.levels[0] == 0 {
        return Err(Error::InvalidParameter("grid levels must be >= 2 strictly increasing positive sides".into()));
    }
    let top = *opts.levels.last().unwrap();
    let mut wanted: Vec<(u64, u64)> = Vec::new();
    for &n in &opts.levels {
        for cell in [(n, n), (n, 1), (1, n), (n, top), (top, n)] {
            if !wanted.contains(&cell) {
                wanted.push(cell);
            }
        }
    }
    let mut cells = BTreeMap::new();
    let mut grid = Vec::new();
    for &(n1, n2) in &wanted {
        let c = evaluate_cell(sampler, n1, n2, opts)?;
        cells.insert((n1, n2), c);
        grid.push(c);
    }
    let seq = |f: &dyn Fn(u64) -> (u64, u64)| -> Vec<GridCell> { opts.levels.iter().map(|&n| cells[&f(n)]).collect() };
    let mc_entry = |id: &str, description: &str, label: &str, cs: Vec<GridCell>, note: &str| {
        let pairs: Vec<(f64, f64)> = cs.iter().map(|c| (c.estimate, c.stderr)).collect();
        ConditionEntry {
            id: id.into(),
            description: description.into(),
            evidence_kind: EvidenceKind::MonteCarlo,
            evidence: cs.iter().map(|c| EvidenceRow::cell(label, c)).collect(),
            verdict: cauchy_verdict(&pairs, opts.tolerance_sigmas),
            note: note.into(),
        }
    };
    let mut conditions = Vec::new();
    conditions.push(match sampler.l1_projective_evidence() {
        Some(rows) => {
            let finite = rows.iter().all(|r| r.value.is_finite());
            let monotone = rows.windows(2).all(|w| w[1].value <= w[0].value);
            ConditionEntry {
                id: "L1Projective".into(),
                description: "sum_{i,j>=0} E(U^i V^j f | F_00) converges in L1".into(),
                evidence_kind: EvidenceKind::CertifiedUpperBound,
                evidence: rows,
                verdict: if finite && monotone { Verdict::Satisfied } else { Verdict::Inconclusive },
                note: "triangle-inequality majorant over atoms".into(),
            }
        }
        None => ConditionEntry {
            id: "L1Projective".into(),
            description: "sum_{i,j>=0} E(U^i V^j f | F_00) converges in L1".into(),
            evidence_kind: EvidenceKind::CertifiedUpperBound,
            evidence: vec![],
            verdict: Verdict::Inconclusive,
            note: "no finite majorant registered for this family".into(),
        },
    });
    conditions.push(mc_entry(
        "RowLiminf",
        "liminf_n E|sum_{i<n} U^i f| / sqrt(n) < inf",
        "E|S_{n,1}|/sqrt(n)",
        seq(&|n| (n, 1)),
        "",
    ));
    conditions.push(mc_entry(
        "ColumnLiminf",
        "liminf_N E|sum_{j<N} V^j f| / sqrt(N) < inf",
        "E|S_{1,N}|/sqrt(N)",
        seq(&|n| (1, n)),
        "",
    ));
    conditions.push(mc_entry(
        "IteratedLiminfRowsFirst",
        "liminf_{n1} liminf_{n2} E|S_{n1,n2}| / sqrt(n1 n2) < inf",
        "inner limit proxied by n2 = top level",
        seq(&|n| (n, top)),
        "finite-grid proxy only",
    ));
    conditions.push(mc_entry(
        "IteratedLiminfColumnsFirst",
        "liminf_{n2} liminf_{n1} E|S_{n1,n2}| / sqrt(n1 n2) < inf",
        "inner limit proxied by n1 = top level",
        seq(&|n| (top, n)),
        "finite-grid proxy only",
    ));
    conditions.push(mc_entry(
        "DiagonalLimit",
        "lim_{min(n1,n2)->inf} E|S_{n1,n2}| / sqrt(n1 n2) exists",
        "E|S_{n,n}|/n",
        seq(&|n| (n, n)),
        "evaluated along the diagonal",
    ));
    if let Some((rows, lower_bound_holds)) = sampler.hannan_evidence() {
        let increasing = rows.windows(2).all(|w| w[1].value > w[0].value);
        conditions.push(ConditionEntry {
            id: "Hannan".into(),
            description: "sum_{i,j>=0} ||P_00(U^i V^j f)||_2 < inf".into(),
            evidence_kind: EvidenceKind::ExactSeries,
            evidence: rows,
            verdict: if increasing && lower_bound_holds { Verdict::Violated } else { Verdict::Inconclusive },
            note: "partial sums increase and the fitted lower bound c/((w+1)^4 log^2(w+2)) on w <= 64 has a divergent series".into(),
        });
    }
    Ok(ConditionReport {
        family: sampler.family(),
        master_seed: opts.master_seed,
        replications: opts.replications,
        levels: opts.levels.clone(),
        caveat: "numerical evidence supports but cannot prove analytic conditions; 'satisfied' means consistent at the configured tolerance".into(),
        grid,
        conditions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::MEAN_ABS_NORMAL;

    #[test]
    fn verdict_rule() {
        assert_eq!(cauchy_verdict(&[(1.0, 0.1), (1.05, 0.1)], 3.0), Verdict::Satisfied);
        assert_eq!(cauchy_verdict(&[(1.0, 0.01), (2.0, 0.01), (3.0, 0.01)], 3.0), Verdict::Violated);
        assert_eq!(cauchy_verdict(&[(3.0, 0.01), (2.0, 0.01), (1.0, 0.01)], 3.0), Verdict::Inconclusive);
    }

    #[test]
    fn zero_field_report() {
        let s = LinearFieldSampler {
            field: CoefficientField::zero(),
            trunc: TruncationSpec::raw(1, 1, 0),
            memory_cap: 1 << 30,
        };
        let opts = ConditionOptions { levels: vec![4, 8], replications: 20, ..Default::default() };
        let r = condition_report(&s, &opts).unwrap();
        assert!(r.grid.iter().all(|c| c.estimate == 0.0));
        assert!(r.conditions.iter().all(|c| c.verdict == Verdict::Satisfied));
        assert!(r.to_csv().starts_with("n1,n2,estimate,stderr,reps\n"));
    }

    #[test]
    fn orthomartingale_diagonal() {
        let s = LinearFieldSampler {
            field: CoefficientField::iid(1.0, 0.5).unwrap(),
            trunc: TruncationSpec::raw(1, 1, 0),
            memory_cap: 1 << 30,
        };
        let opts = ConditionOptions { levels: vec![32, 64], replications: 4000, master_seed: 3, ..Default::default() };
        let r = condition_report(&s, &opts).unwrap();
        let d = r.condition("DiagonalLimit").unwrap();
        let last = d.evidence.last().unwrap();
        assert!((last.value - MEAN_ABS_NORMAL).abs() < 3.0 * last.stderr.unwrap());
    }

    struct RareSpikes;

    impl PartialSumSampler for RareSpikes {
        fn family(&self) -> String {
            "spikes".into()
        }

        fn normalized_sums(&self, _: u64, _: u64, reps: u64, _: u64) -> Result<Vec<f64>> {
            Ok((0..reps).map(|r| if r == 0 { 100.0 } else { 0.0 }).collect())
        }
    }

    #[test]
    fn insufficient_replications() {
        let opts = ConditionOptions { levels: vec![4, 8], replications: 10, ..Default::default() };
        assert!(matches!(condition_report(&RareSpikes, &opts), Err(Error::InsufficientReplications { .. })));
    }
}
