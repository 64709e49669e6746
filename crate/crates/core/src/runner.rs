//! Runs a configured experiment. All outputs are built in memory first, then
//! written together with a manifest; on any write failure the files already
//! written are removed again.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::conditions::{condition_report, ConditionOptions, LinearFieldSampler, PartialSumSampler, TowerSampler};
use crate::config::{ExperimentConfig, ExperimentKind, FamilyConfig, OutputFormat};
use crate::decomposition::{
    coboundary_growth_curve, decompose_l1_not_l2, decompose_lag_field, decompose_superlinear, fit_growth,
    hannan_diagonal_sums, identity_mismatch, l1_not_l2_g1_norm_sq_partial, l1_projective_tail, m_norm_l2,
    m_norm_l2_full, Axis, DecompositionTerms, GrowthOptions, GrowthShape, NormWithTail,
};
use crate::error::{Error, Result};
use crate::field::{CoefficientField, FieldKind, TruncationSpec};
use crate::output::{fmt_f64, CsvTable};
use crate::self_test::{run_self_test, self_test_csv};
use crate::stats::{ks_distance_to_normal, mean_abs_ratio, summarize, QUANTILE_LEVELS};
use crate::svg::histogram_svg;
use crate::tower::{
    exceedance_exact, multi_scale_l2_bound, schedule_scales, simulate_counterexample, verify_schedule, ColumnSimSpec,
    TowerScale,
};
use crate::weights::{exact_second_moment, sample_partial_sums, window_weights_with_cap};

const EXCEEDANCE_THRESHOLDS: [f64; 3] = [0.5, 1.0, 2.0];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFile {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub experiment: ExperimentKind,
    pub config_sha256: String,
    pub config: ExperimentConfig,
    pub files: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub files: Vec<OutputFile>,
    pub manifest: Manifest,
}

impl RunOutput {
    pub fn file(&self, name: &str) -> Option<&OutputFile> {
        self.files.iter().find(|f| f.name == name)
    }

    pub fn manifest_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        s.push('\n');
        s
    }
}

fn sha_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct Outputs<'a> {
    cfg: &'a ExperimentConfig,
    files: Vec<OutputFile>,
}

impl<'a> Outputs<'a> {
    fn add(&mut self, format: OutputFormat, name: impl Into<String>, text: String) {
        if self.cfg.wants(format) {
            self.files.push(OutputFile { name: name.into(), bytes: text.into_bytes() });
        }
    }

    fn json(&mut self, name: &str, v: &Value) {
        let mut s = serde_json::to_string_pretty(v).expect("json output");
        s.push('\n');
        self.add(OutputFormat::Json, name, s);
    }
}

/// Runs the experiment without touching the filesystem.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let mut out = Outputs { cfg, files: Vec::new() };
    match cfg.experiment {
        ExperimentKind::SimulateField => simulate_field(&mut out)?,
        ExperimentKind::Decompose => decompose(&mut out)?,
        ExperimentKind::CheckConditions => check_conditions(&mut out)?,
        ExperimentKind::Counterexample => counterexample(&mut out)?,
        ExperimentKind::Report => report(&mut out)?,
    }
    let files = out.files;
    let manifest = Manifest {
        tool: "fieldlab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        experiment: cfg.experiment,
        config_sha256: cfg.sha256(),
        config: cfg.clone(),
        files: files
            .iter()
            .map(|f| ManifestEntry { name: f.name.clone(), sha256: sha_hex(&f.bytes), bytes: f.bytes.len() as u64 })
            .collect(),
    };
    Ok(RunOutput { files, manifest })
}

/// Writes every output plus `manifest.json` into `dir`, which is created if
/// needed. Nothing is left behind if a write fails.
pub fn write_outputs(run: &RunOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let manifest = run.manifest_json();
    let all = run.files.iter().map(|f| (f.name.as_str(), f.bytes.as_slice()));
    for (name, bytes) in all.chain(std::iter::once(("manifest.json", manifest.as_bytes()))) {
        let path = dir.join(name);
        if let Err(e) = std::fs::write(&path, bytes) {
            for p in &written {
                let _ = std::fs::remove_file(p);
            }
            let _ = std::fs::remove_file(&path);
            return Err(Error::Io(format!("{}: {e}", path.display())));
        }
        written.push(path);
    }
    Ok(written)
}

fn field_of(cfg: &ExperimentConfig) -> Result<CoefficientField> {
    cfg.family.field()?.ok_or_else(|| Error::UnsupportedFamily("tower".into()))
}

/// The coboundary decomposition of any non-custom field.
pub fn decompose_field(field: &CoefficientField, trunc: &TruncationSpec) -> Result<DecompositionTerms> {
    match field.kind() {
        FieldKind::Superlinear { .. } => decompose_superlinear(field, trunc),
        FieldKind::L1NotL2 => Ok(decompose_l1_not_l2(trunc.k_max, trunc.lag_max)),
        _ => decompose_lag_field(field, trunc),
    }
}

fn norm_json(n: &NormWithTail) -> Value {
    json!({ "value": n.value, "tail_sq_bound": n.tail, "upper": n.upper() })
}

fn simulate_field(out: &mut Outputs) -> Result<()> {
    let cfg = out.cfg;
    let field = field_of(cfg)?;
    let trunc = cfg.truncation.resolve(&field);
    let sigma = m_norm_l2(&decompose_field(&field, &trunc)?);
    let mut header = vec![
        "n1", "n2", "count", "mean", "mean_abs", "variance", "exact_variance", "sigma", "ks", "mean_abs_ratio",
        "mean_abs_ratio_stderr",
    ];
    let qnames: Vec<String> = QUANTILE_LEVELS.iter().map(|q| format!("q{q}")).collect();
    header.extend(qnames.iter().map(String::as_str));
    let mut table = CsvTable::new(&header);
    let mut windows = Vec::new();
    for &[n1, n2] in &cfg.windows {
        let w = window_weights_with_cap(&field, n1, n2, &trunc, cfg.memory_cap_bytes as usize)?;
        let exact_variance = exact_second_moment(&w, field.laws())? / (n1 * n2) as f64;
        let samples = sample_partial_sums(&w, field.laws(), cfg.seed, 0, cfg.replications)?;
        let normalized: Vec<f64> = samples.iter().map(|s| s.normalized).collect();
        let summary = summarize(&normalized, &EXCEEDANCE_THRESHOLDS)?;
        let ks = ks_distance_to_normal(&normalized, sigma.value).ok();
        let mar = mean_abs_ratio(&normalized, sigma.value).ok();
        let mut row = vec![
            n1.to_string(),
            n2.to_string(),
            summary.count.to_string(),
            fmt_f64(summary.mean),
            fmt_f64(summary.mean_abs),
            fmt_f64(summary.variance),
            fmt_f64(exact_variance),
            fmt_f64(sigma.value),
            fmt_f64(ks.map_or(f64::NAN, |k| k.statistic)),
            fmt_f64(mar.map_or(f64::NAN, |m| m.ratio)),
            fmt_f64(mar.map_or(f64::NAN, |m| m.stderr)),
        ];
        row.extend(summary.quantiles.iter().map(|q| fmt_f64(q.value)));
        table.row(&row);
        if cfg.save_samples {
            let mut t = CsvTable::new(&["replication", "value", "normalized"]);
            for s in &samples {
                t.row(&[s.replication.to_string(), fmt_f64(s.value), fmt_f64(s.normalized)]);
            }
            out.add(OutputFormat::Csv, format!("samples_{n1}x{n2}.csv"), t.into_string());
        }
        out.add(
            OutputFormat::Svg,
            format!("histogram_{n1}x{n2}.svg"),
            histogram_svg(&normalized, (sigma.value > 0.0).then_some(sigma.value), &format!("{} {n1}x{n2}", field.tag())),
        );
        windows.push(json!({
            "n1": n1,
            "n2": n2,
            "sites": w.site_count(),
            "exact_variance": exact_variance,
            "summary": summary,
            "ks": ks,
            "mean_abs_ratio": mar,
        }));
    }
    out.add(OutputFormat::Csv, "simulate_summary.csv", table.into_string());
    out.json(
        "simulate_summary.json",
        &json!({
            "family": field.tag(),
            "truncation": trunc,
            "seed": cfg.seed,
            "replications": cfg.replications,
            "sigma": norm_json(&sigma),
            "windows": windows,
        }),
    );
    Ok(())
}

fn decompose(out: &mut Outputs) -> Result<()> {
    let cfg = out.cfg;
    let field = field_of(cfg)?;
    let trunc = cfg.truncation.resolve(&field);
    let terms = decompose_field(&field, &trunc)?;
    let mismatch = identity_mismatch(&terms, &field.form(&trunc));
    let mut doc = json!({
        "family": field.tag(),
        "truncation": trunc,
        "atoms": { "m": terms.m.len(), "g1": terms.g1.len(), "g2": terms.g2.len(), "g3": terms.g3.len() },
        "identity_mismatch": mismatch,
        "m_norm_truncated": norm_json(&m_norm_l2(&terms)),
        "m_norm_full": m_norm_l2_full(&field, trunc.k_max).ok().map(|n| norm_json(&n)),
    });
    let shape = match field.kind() {
        FieldKind::L1NotL2 => Some(GrowthShape::Log),
        FieldKind::Superlinear { .. } => Some(GrowthShape::EllOverLog),
        _ => None,
    };
    if let Some(shape) = shape {
        let curve = coboundary_growth_curve(&field, Axis::U, &cfg.ells, &GrowthOptions::default())?;
        let mut t = CsvTable::new(&["ell", "retained", "remainder", "value"]);
        for g in &curve {
            t.row(&[g.ell.to_string(), fmt_f64(g.retained), fmt_f64(g.remainder), fmt_f64(g.value)]);
        }
        out.add(OutputFormat::Csv, "growth.csv", t.into_string());
        doc["growth"] = json!({ "axis": Axis::U, "values": curve, "fit": fit_growth(&curve, shape) });
    }
    let tails: Vec<Value> = [0u64, 1, 2, 4, 8, 16]
        .iter()
        .filter_map(|&c| l1_projective_tail(&field, c, c).ok().map(|b| json!({ "cutoff": c, "bound": b })))
        .collect();
    doc["l1_projective_tail"] = json!(tails);
    match field.kind() {
        FieldKind::Superlinear { .. } => {
            let depths = [16u64, 64, 256, 1024, 4096];
            let sums = hannan_diagonal_sums(&field, &depths)?;
            doc["hannan_partial_sums"] = json!(depths
                .iter()
                .zip(&sums)
                .map(|(d, s)| json!({ "depth": d, "sum": s }))
                .collect::<Vec<_>>());
            doc["hannan_lower_bound_constant"] = json!(crate::conditions::hannan_lower_bound_constant(&field, 64)?);
        }
        FieldKind::L1NotL2 => {
            doc["g1_norm_sq_partial"] = json!([64u32, 256, 1024, 4096, 16384]
                .iter()
                .map(|&k| json!({ "k_max": k, "value": l1_not_l2_g1_norm_sq_partial(k) }))
                .collect::<Vec<_>>());
        }
        _ => {}
    }
    out.json("decomposition.json", &doc);
    Ok(())
}

fn check_conditions(out: &mut Outputs) -> Result<()> {
    let cfg = out.cfg;
    let opts = ConditionOptions {
        levels: cfg.levels.clone(),
        replications: cfg.replications,
        master_seed: cfg.seed,
        ..ConditionOptions::default()
    };
    let sampler: Box<dyn PartialSumSampler> = match cfg.family {
        FamilyConfig::Tower { k } => Box::new(TowerSampler { k }),
        _ => {
            let field = field_of(cfg)?;
            let trunc = cfg.truncation.resolve(&field);
            Box::new(LinearFieldSampler { field, trunc, memory_cap: cfg.memory_cap_bytes as usize })
        }
    };
    let rep = condition_report(sampler.as_ref(), &opts)?;
    out.add(OutputFormat::Csv, "conditions.csv", rep.to_csv());
    let mut j = rep.to_json();
    j.push('\n');
    out.add(OutputFormat::Json, "conditions.json", j);
    Ok(())
}

fn counterexample(out: &mut Outputs) -> Result<()> {
    let cfg = out.cfg;
    let cx = &cfg.counterexample;
    let scale = TowerScale::new(cx.k)?;
    let spec = ColumnSimSpec {
        k: cx.k,
        n1: cx.n1.unwrap_or(2 * scale.n),
        n2: cx.n2.unwrap_or(scale.m),
        replications: cfg.replications,
        master_seed: cfg.seed,
    };
    let res = simulate_counterexample(&spec)?;
    let mut grid = CsvTable::new(&["n1", "n2", "mean_abs", "stderr", "exact_variance"]);
    let mut grid_json = Vec::new();
    for &n1 in &cx.n1_grid {
        let g = simulate_counterexample(&ColumnSimSpec { n1, n2: scale.m, ..spec })?;
        grid.row(&[
            n1.to_string(),
            scale.m.to_string(),
            fmt_f64(g.summary.mean_abs),
            fmt_f64(g.summary.stderr_mean_abs),
            fmt_f64(g.exact_variance),
        ]);
        grid_json.push(json!({
            "n1": n1, "n2": scale.m, "mean_abs": g.summary.mean_abs,
            "stderr": g.summary.stderr_mean_abs, "exact_variance": g.exact_variance,
        }));
    }
    out.add(OutputFormat::Csv, "counterexample_grid.csv", grid.into_string());
    let schedule = schedule_scales(cx.schedule_levels)?;
    let bounds: Vec<Value> = (1..=cx.schedule_levels)
        .map(|l| multi_scale_l2_bound(&schedule, l).map(|b| json!({ "level": l, "bound": b, "target": 2.0 * 0.5f64.powi(l as i32) })))
        .collect::<Result<_>>()?;
    let exc = res.summary.exceedance(0.5).cloned();
    out.json(
        "counterexample.json",
        &json!({
            "scale": scale,
            "spec": spec,
            "exceedance_half": exc,
            "exact_exceedance_bound": exceedance_exact(scale),
            "summary": res.summary,
            "exact_variance": res.exact_variance,
            "degeneracy_grid": grid_json,
            "schedule": schedule,
            "schedule_violations": verify_schedule(&schedule),
            "multi_scale_l2_bounds": bounds,
        }),
    );
    if cfg.save_samples {
        let mut t = CsvTable::new(&["replication", "statistic"]);
        for (r, x) in res.samples.iter().enumerate() {
            t.row(&[r.to_string(), fmt_f64(*x)]);
        }
        out.add(OutputFormat::Csv, "counterexample_samples.csv", t.into_string());
    }
    out.add(
        OutputFormat::Svg,
        "counterexample_histogram.svg",
        histogram_svg(&res.samples, None, &format!("tower k={} {}x{}", spec.k, spec.n1, spec.n2)),
    );
    Ok(())
}

fn report(out: &mut Outputs) -> Result<()> {
    let cfg = out.cfg;
    let rows = run_self_test();
    out.add(OutputFormat::Csv, "self_test.csv", self_test_csv(&rows));
    let mut exc = CsvTable::new(&["k", "n", "m", "p_numer", "p_denom", "p", "value", "exceeds_reference"]);
    let mut exc_json = Vec::new();
    for k in 4..=24 {
        let sc = TowerScale::new(k)?;
        let e = exceedance_exact(sc);
        exc.row(&[
            k.to_string(),
            sc.n.to_string(),
            sc.m.to_string(),
            e.p_numer.clone(),
            e.p_denom.clone(),
            fmt_f64(e.p),
            fmt_f64(e.value),
            e.exceeds_reference.to_string(),
        ]);
        exc_json.push(e);
    }
    out.add(OutputFormat::Csv, "tower_exceedance.csv", exc.into_string());
    let mut families = Vec::new();
    for field in [CoefficientField::superlinear(5.0)?, CoefficientField::l1_not_l2()] {
        let trunc = cfg.truncation.resolve(&field);
        let terms = decompose_field(&field, &trunc)?;
        families.push(json!({
            "family": field.tag(),
            "truncation": trunc,
            "m_norm_truncated": norm_json(&m_norm_l2(&terms)),
            "m_norm_full": norm_json(&m_norm_l2_full(&field, trunc.k_max)?),
        }));
    }
    let schedule = schedule_scales(cfg.counterexample.schedule_levels)?;
    out.json(
        "report.json",
        &json!({
            "self_test": rows,
            "self_test_passed": rows.iter().all(|r| r.passed),
            "tower_exceedance": exc_json,
            "families": families,
            "schedule": schedule.indices,
            "schedule_violations": verify_schedule(&schedule),
        }),
    );
    Ok(())
}
