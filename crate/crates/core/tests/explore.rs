mod common;

use accelforge::builder::explore::{parse_report, render_report, report_rows};
use accelforge::builder::{explore, write_outputs, ExploreConfig, Manifest, ReportFormat, TemplateKind, TemplateSpace};
use accelforge::Error;
use common::data;

fn demo_config() -> ExploreConfig {
    ExploreConfig::load(data("explore/demo.json")).unwrap()
}

fn run(config: &ExploreConfig, threads: usize) -> accelforge::builder::ExploreOutcome {
    let (model, costs) = config.load_inputs().unwrap();
    explore(config, &model, &costs, threads).unwrap()
}

#[test]
fn manifests_are_byte_identical_across_runs() {
    let c = demo_config();
    let a = run(&c, 2).manifest.to_json();
    let b = run(&c, 2).manifest.to_json();
    assert_eq!(a, b);
    let mut four = run(&c, 4).manifest;
    assert_eq!(four.threads, 4);
    four.threads = 2;
    assert_eq!(four.to_json(), a);
}

#[test]
fn demo_counters_shrink_stage_by_stage() {
    let c = demo_config();
    let m = run(&c, 2).manifest;
    let k = m.counters;
    assert_eq!((k.enumerated, k.n1, k.n2, k.n3, k.n_opt), (20, 18, 3, 9, 3));
    assert!(k.n2 < k.n1 && k.n2 <= c.keep);
    assert!(k.n_opt <= c.n_opt && k.n_opt <= k.n3);
    assert_eq!(m.stage1.len(), k.n2);
    let ranks: Vec<usize> = m.candidates.iter().map(|c| c.rank).collect();
    assert_eq!(ranks, vec![1, 2, 3]);
    let scores: Vec<f64> = m.candidates.iter().map(|c| c.candidate.score).collect();
    assert!(scores.windows(2).all(|w| w[0] <= w[1]));
    // Fine simulation plus optimisation never reports more than the coarse bound.
    for c in &m.candidates {
        let s1 = m.stage1.iter().find(|s| s.point == c.candidate.point).unwrap();
        assert!(c.candidate.fine.best.total_cycles <= s1.latency_cycles);
    }
}

#[test]
fn keep_bounds_the_survivors() {
    let mut c = demo_config();
    c.keep = 3;
    c.n_opt = 1;
    c.pipeline_variants = 0;
    let m = run(&c, 1).manifest;
    assert!(m.stage1.len() <= 3);
    assert_eq!(m.counters.n3, m.stage1.len());
    assert_eq!(m.candidates.len(), 1);
}

#[test]
fn sampling_is_seeded() {
    let mut c = demo_config();
    c.stage1_sample = Some(6);
    let a = run(&c, 2).manifest;
    assert_eq!(a.to_json(), run(&c, 3).manifest.to_json().replace("\"threads\": 3", "\"threads\": 2"));
    c.seed += 1;
    let b = run(&c, 2).manifest;
    assert_eq!(b.counters.n1, a.counters.n1);
}

#[test]
fn no_feasible_template_gives_an_empty_manifest() {
    let mut c = demo_config();
    c.templates = vec![TemplateSpace::new(TemplateKind::AdderTreeSpatial).with("unroll", &[64, 256])];
    let out = run(&c, 1);
    let m = &out.manifest;
    assert!(m.note.as_deref().unwrap().starts_with("no feasible template"));
    assert_eq!(m.counters.enumerated, 2);
    assert_eq!(m.counters.n1, 0);
    assert!(m.stage1.is_empty() && m.candidates.is_empty());
    assert_eq!(render_report(m, ReportFormat::Csv), "energy_j,latency_s,template,stage\n");
}

#[test]
fn outputs_round_trip_through_files() {
    let out = run(&demo_config(), 2);
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&out, dir.path()).unwrap();
    let m = Manifest::load(dir.path().join("manifest.json")).unwrap();
    assert_eq!(m.to_json(), out.manifest.to_json());
    let pareto = std::fs::read_to_string(dir.path().join("pareto.csv")).unwrap();
    assert!(pareto.starts_with("stage,template,energy_j,latency_s,pareto\n"));
    assert_eq!(pareto.lines().count(), 1 + out.pareto.len());
    assert!(out.pareto.iter().any(|r| r.pareto));
    let timing: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("timing.json")).unwrap()).unwrap();
    assert!(timing["stage1_s"].as_f64().unwrap() >= 0.0);
    assert!(!out.manifest.to_json().contains("_s\":"));
}

#[test]
fn report_has_one_row_per_entry() {
    let mut m = run(&demo_config(), 2).manifest;
    m.stage1.clear();
    m.candidates.truncate(2);
    for format in [ReportFormat::Csv, ReportFormat::Tsv] {
        let text = render_report(&m, format);
        assert_eq!(text.lines().count(), 3);
        let rows = parse_report(&text, format).unwrap();
        let want: Vec<(f64, f64, String, String)> = m
            .candidates
            .iter()
            .map(|c| (c.candidate.energy(), c.candidate.latency_seconds(), c.candidate.point.template.name().to_string(), "stage2".to_string()))
            .collect();
        assert_eq!(rows, want);
    }
    let full = run(&demo_config(), 2).manifest;
    assert_eq!(report_rows(&full).len(), full.stage1.len() + full.candidates.len());
    assert!(matches!("xml".parse::<ReportFormat>(), Err(Error::Config(_))));
}

#[test]
fn bad_configs_are_rejected() {
    let text = std::fs::read_to_string(data("explore/demo.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["version"] = 2.into();
    assert!(matches!(ExploreConfig::parse(&v.to_string()), Err(Error::Version { found: 2, .. })));
    v["version"] = 1.into();
    v["keep"] = 0.into();
    assert!(matches!(ExploreConfig::parse(&v.to_string()), Err(Error::Config(_))));
    v["keep"] = 4.into();
    v["surprise"] = true.into();
    assert!(matches!(ExploreConfig::parse(&v.to_string()), Err(Error::Schema(_))));
}
