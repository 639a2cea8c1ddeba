//! End-to-end exploration runs: config file in, manifest and Pareto table out.
//!
//! Output files written by [`write_outputs`]:
//!
//! * `manifest.json`: counters, Stage-1 survivors and ranked candidates.
//!   Byte-identical for identical inputs, seed and thread count.
//! * `timing.json`: wall-clock seconds per stage (varies run to run).
//! * `pareto.csv`: `stage,template,energy_j,latency_s,pareto`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::space::{enumerate_stage1, prune_stage1, sample_space, AppSpec, Counters, DesignPoint, Objective, TemplateSpace};
use super::stage2::{optimize_stage2, Candidate, ConvergenceRule};
use crate::cost::{generic_28nm, load_library_file, UnitCostLibrary};
use crate::dnn::{load_model, DnnModel};
use crate::error::{Error, Result};

pub const EXPLORE_DOC_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExploreConfig {
    pub version: u32,
    /// Model document, relative to the config file.
    pub model: PathBuf,
    /// Cost library merged over the bundled one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub costs: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub app: AppSpec,
    pub templates: Vec<TemplateSpace>,
    pub keep: usize,
    pub n_opt: usize,
    #[serde(default = "default_variants")]
    pub pipeline_variants: usize,
    /// Random subset of Stage-1 points to evaluate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage1_sample: Option<usize>,
    #[serde(default)]
    pub convergence: ConvergenceRule,
}

fn default_variants() -> usize {
    2
}

impl ExploreConfig {
    pub fn parse(document: &str) -> Result<Self> {
        let c: ExploreConfig = serde_json::from_str(document)?;
        if c.version != EXPLORE_DOC_VERSION {
            return Err(Error::Version {
                found: c.version,
                expected: EXPLORE_DOC_VERSION,
            });
        }
        c.app.validate()?;
        if c.keep == 0 || c.n_opt == 0 {
            return Err(Error::Config("`keep` and `n_opt` must be >= 1".into()));
        }
        if c.threads == Some(0) {
            return Err(Error::Config("`threads` must be >= 1".into()));
        }
        if c.convergence.split_factor < 2 || c.convergence.patience == 0 {
            return Err(Error::Config("`convergence.split_factor` must be >= 2 and `patience` >= 1".into()));
        }
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut c = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        c.model = base.join(&c.model);
        c.costs = c.costs.map(|p| base.join(p));
        Ok(c)
    }

    pub fn load_inputs(&self) -> Result<(DnnModel, UnitCostLibrary)> {
        let model = load_model(&self.model)?;
        let mut costs = generic_28nm();
        if let Some(p) = &self.costs {
            costs.merge(load_library_file(p)?)?;
        }
        Ok((model, costs))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivorSummary {
    pub point: DesignPoint,
    pub energy: f64,
    pub latency_cycles: u64,
    pub latency_seconds: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub rank: usize,
    #[serde(flatten)]
    pub candidate: Candidate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub model: String,
    pub seed: u64,
    pub threads: usize,
    pub objective: Objective,
    pub counters: Counters,
    /// Set when no template survived the static pre-filter.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub stage1: Vec<SurvivorSummary>,
    pub candidates: Vec<RankedCandidate>,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn parse(document: &str) -> Result<Self> {
        Ok(serde_json::from_str(document)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTiming {
    pub enumerate_s: f64,
    pub stage1_s: f64,
    pub stage2_s: f64,
}

/// A (stage, template, energy, latency) row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoRow {
    pub stage: String,
    pub template: String,
    pub energy: f64,
    pub latency: f64,
    pub pareto: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExploreOutcome {
    pub manifest: Manifest,
    pub timing: StageTiming,
    pub pareto: Vec<ParetoRow>,
}

/// Threads to use when neither config nor caller sets a count.
pub fn default_threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Runs both stages with `threads` workers.
pub fn explore(config: &ExploreConfig, model: &DnnModel, costs: &UnitCostLibrary, threads: usize) -> Result<ExploreOutcome> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run(config, model, costs, threads))
}

fn run(config: &ExploreConfig, model: &DnnModel, costs: &UnitCostLibrary, threads: usize) -> Result<ExploreOutcome> {
    let mut timing = StageTiming::default();
    let mut manifest = Manifest {
        version: EXPLORE_DOC_VERSION,
        model: model.name.clone(),
        seed: config.seed,
        threads,
        objective: config.app.objective,
        counters: Counters::default(),
        note: None,
        stage1: Vec::new(),
        candidates: Vec::new(),
    };

    let t = Instant::now();
    let space = match enumerate_stage1(model, &config.app, &config.templates, costs) {
        Ok(s) => s,
        Err(Error::NoFeasibleTemplate(why)) => {
            manifest.counters.enumerated = config.templates.iter().map(TemplateSpace::size).sum();
            manifest.note = Some(format!("no feasible template: {why}"));
            timing.enumerate_s = t.elapsed().as_secs_f64();
            return Ok(ExploreOutcome {
                manifest,
                timing,
                pareto: Vec::new(),
            });
        }
        Err(e) => return Err(e),
    };
    let space = match config.stage1_sample {
        Some(n) => sample_space(&space, n, config.seed),
        None => space,
    };
    timing.enumerate_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let s1 = prune_stage1(&space, &config.app, costs, config.keep);
    timing.stage1_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let s2 = optimize_stage2(
        model,
        &s1.survivors,
        costs,
        &config.app,
        &config.convergence,
        config.n_opt,
        config.pipeline_variants,
    )?;
    timing.stage2_s = t.elapsed().as_secs_f64();

    let mut counters = s1.space.counters;
    counters.n3 = s2.n3;
    counters.n_opt = s2.candidates.len();
    manifest.counters = counters;
    manifest.stage1 = s1
        .survivors
        .iter()
        .map(|e| SurvivorSummary {
            point: e.point.clone(),
            energy: e.energy,
            latency_cycles: e.latency_cycles,
            latency_seconds: e.latency_seconds,
            score: e.score,
        })
        .collect();

    let mut pareto = pareto_rows(
        "stage1",
        s1.evaluated
            .iter()
            .filter(|e| e.feasible())
            .map(|e| (e.point.label(), e.energy, e.latency_seconds)),
    );
    pareto.extend(pareto_rows(
        "stage2",
        s2.candidates
            .iter()
            .map(|c| (format!("{}#{}", c.point.label(), c.variant), c.energy(), c.latency_seconds())),
    ));
    manifest.candidates = s2
        .candidates
        .into_iter()
        .enumerate()
        .map(|(i, candidate)| RankedCandidate { rank: i + 1, candidate })
        .collect();
    Ok(ExploreOutcome {
        manifest,
        timing,
        pareto,
    })
}

/// Marks the rows not dominated in (energy, latency).
pub fn pareto_rows(stage: &str, points: impl IntoIterator<Item = (String, f64, f64)>) -> Vec<ParetoRow> {
    let pts: Vec<(String, f64, f64)> = points.into_iter().collect();
    pts.iter()
        .map(|(template, e, l)| {
            let dominated = pts
                .iter()
                .any(|(_, e2, l2)| e2 <= e && l2 <= l && (e2 < e || l2 < l));
            ParetoRow {
                stage: stage.to_string(),
                template: template.clone(),
                energy: *e,
                latency: *l,
                pareto: !dominated,
            }
        })
        .collect()
}

pub fn pareto_csv(rows: &[ParetoRow]) -> String {
    let mut out = String::from("stage,template,energy_j,latency_s,pareto\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{}", r.stage, csv_field(&r.template), r.energy, r.latency, r.pareto);
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Writes manifest, timing and Pareto table into `dir`.
pub fn write_outputs(outcome: &ExploreOutcome, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: String| {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write("manifest.json", outcome.manifest.to_json())?;
    write(
        "timing.json",
        serde_json::to_string_pretty(&outcome.timing).expect("timing serializes"),
    )?;
    write("pareto.csv", pareto_csv(&outcome.pareto))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Tsv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "tsv" => Ok(ReportFormat::Tsv),
            other => Err(Error::Config(format!("unknown report format `{other}`"))),
        }
    }
}

/// One row per Stage-1 survivor and per candidate in the manifest.
pub fn report_rows(m: &Manifest) -> Vec<ParetoRow> {
    let mut rows: Vec<ParetoRow> = m
        .stage1
        .iter()
        .map(|s| ParetoRow {
            stage: "stage1".into(),
            template: s.point.template.name().into(),
            energy: s.energy,
            latency: s.latency_seconds,
            pareto: false,
        })
        .collect();
    rows.extend(m.candidates.iter().map(|c| ParetoRow {
        stage: "stage2".into(),
        template: c.candidate.point.template.name().into(),
        energy: c.candidate.energy(),
        latency: c.candidate.latency_seconds(),
        pareto: false,
    }));
    rows
}

/// `energy,latency,template,stage` table with a header.
pub fn render_report(m: &Manifest, format: ReportFormat) -> String {
    let sep = match format {
        ReportFormat::Csv => ',',
        ReportFormat::Tsv => '\t',
    };
    let mut out = format!("energy_j{sep}latency_s{sep}template{sep}stage\n");
    for r in report_rows(m) {
        let _ = writeln!(out, "{}{sep}{}{sep}{}{sep}{}", r.energy, r.latency, r.template, r.stage);
    }
    out
}

/// Inverse of [`render_report`]: `(energy, latency, template, stage)` tuples.
pub fn parse_report(text: &str, format: ReportFormat) -> Result<Vec<(f64, f64, String, String)>> {
    let sep = match format {
        ReportFormat::Csv => ',',
        ReportFormat::Tsv => '\t',
    };
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(sep).collect();
            let bad = || Error::Config(format!("malformed report row `{line}`"));
            if f.len() != 4 {
                return Err(bad());
            }
            Ok((
                f[0].parse().map_err(|_| bad())?,
                f[1].parse().map_err(|_| bad())?,
                f[2].to_string(),
                f[3].to_string(),
            ))
        })
        .collect()
}
