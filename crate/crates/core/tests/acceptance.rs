//! Acceptance suite: one test per criterion, each printing a PASS/FAIL
//! line (visible with `cargo test --test acceptance -- --nocapture`).
//! Criteria run one at a time so the stated runtime budgets are
//! meaningful.

mod common;

use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;

use hsiclass::data::{AnnotationMask, Group, HsiCube, MedianSpectrum, SpectrumMeta, Site,
    SubjectId, WavelengthGrid};
use hsiclass::eval::{
    run_evaluation, summarize, Aggregation, ClassifierConfig, LabelMode, SiteFilter, SplitPlan,
    TestCounts, TestTimepoints,
};
use hsiclass::lda::{fit_lda, LdaConfig, PriorsMode};
use hsiclass::rng::substream_rng;
use hsiclass::synth::{generate_cohort, scenario, Scenario, ScenarioOverrides};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

fn report(name: &str, pass: bool, details: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("[{tag}] {name}: {details}");
    assert!(pass, "{name}: {details}");
}

fn single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(f)
}

fn default_plan(seed: u64, n_splits: u64, priors: PriorsMode) -> SplitPlan {
    SplitPlan {
        n_splits,
        test_counts: TestCounts {
            healthy: 5,
            pancreatic: 5,
            sepsis: 5,
        },
        master_seed: seed,
        site_filter: SiteFilter::Both,
        test_timepoints: TestTimepoints::All,
        classifier: ClassifierConfig {
            gamma: 1e-3,
            priors,
            label_mode: LabelMode::Binary,
            aggregation: Aggregation::Mean,
        },
    }
}

#[test]
fn criterion_1_lda_oracle_equivalence() {
    let _guard = serial();
    let start = Instant::now();
    let gamma = 1e-3;
    let mut max_rel = 0.0f64;
    let mut mismatches = 0usize;
    let mut checked_points = 0usize;
    for instance_index in 0..200u64 {
        let mut rng = substream_rng(1_000 + instance_index, 0);
        let k = 2 + (instance_index % 2) as usize;
        let b = rng.gen_range(1..=8usize);
        let n = rng.gen_range((k * 3).max(8)..=50usize);
        let mut samples = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = if i < k { i } else { rng.gen_range(0..k) };
            let row: Vec<f64> = (0..b)
                .map(|j| {
                    let shift = ((class * 7919 + j * 104_729) % 13) as f64 * 0.3;
                    let noise: f64 = rng.sample(StandardNormal);
                    shift + noise
                })
                .collect();
            samples.push(row);
            labels.push(class);
        }
        let rows: Vec<&[f64]> = samples.iter().map(|r| r.as_slice()).collect();
        let model = fit_lda(
            &rows,
            &labels,
            &LdaConfig {
                gamma,
                priors: PriorsMode::Empirical,
            },
        )
        .unwrap();

        let instance = common::Instance {
            samples: samples.clone(),
            labels: labels.clone(),
            k,
            b,
        };
        let oracle = common::oracle_eigenvalues(&instance, gamma);
        for (j, &lambda) in model.eigenvalues().iter().enumerate() {
            let expect = oracle[j];
            let rel = (lambda - expect).abs() / expect.abs().max(f64::MIN_POSITIVE);
            max_rel = max_rel.max(rel);
        }

        let priors = model.priors().to_vec();
        for point in 0..1000u64 {
            let mut prng = substream_rng(5_000 + instance_index, point);
            let x: Vec<f64> = (0..b)
                .map(|_| prng.sample::<f64, _>(StandardNormal) * 2.0)
                .collect();
            let label = model.classify(&x).unwrap().0;
            let expect = common::oracle_classify(&instance, gamma, &priors, &x);
            checked_points += 1;
            if label != expect {
                mismatches += 1;
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = max_rel <= 1e-8 && mismatches == 0 && elapsed < 10.0;
    report(
        "criterion 1: LDA oracle equivalence",
        pass,
        &format!(
            "200 instances: max eigenvalue rel err {max_rel:.2e} (<= 1e-8), \
             {mismatches}/{checked_points} argmax mismatches (= 0), {elapsed:.1}s (< 10s)"
        ),
    );
}

#[test]
fn criterion_2_median_oracle() {
    let _guard = serial();
    let start = Instant::now();
    let mut bands_checked = 0usize;
    let mut exact = true;
    for case in 0..100u64 {
        let mut rng = substream_rng(2_000, case);
        let width = rng.gen_range(3..=24usize);
        let height = rng.gen_range(3..=24usize);
        let bands = rng.gen_range(1..=12usize);
        let grid =
            WavelengthGrid::new((0..bands).map(|k| 500.0 + 5.0 * k as f64).collect()).unwrap();
        let values: Vec<f32> = (0..width * height * bands)
            .map(|_| rng.gen_range(0.0f32..1.5))
            .collect();
        let cube = HsiCube::new(width, height, grid, values).unwrap();
        let mut included: Vec<bool> = (0..width * height).map(|_| rng.gen_bool(0.5)).collect();
        included[rng.gen_range(0..width * height)] = true;
        let mask = AnnotationMask::new(width, height, included.clone()).unwrap();
        let meta = SpectrumMeta {
            subject_id: SubjectId("x".into()),
            group: Group::Healthy,
            site: Site::Hand,
            timepoint_index: 0,
            acquired_at: None,
            software_version: "v1".into(),
        };
        let spectrum = hsiclass::data::median_spectrum(&cube, &mask, meta).unwrap();

        let pixels = width * height;
        for band in 0..bands {
            let mut vals: Vec<f32> = (0..pixels)
                .filter(|&p| included[p])
                .map(|p| cube.values()[band * pixels + p])
                .collect();
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = vals.len();
            let expect = if n % 2 == 1 {
                f64::from(vals[n / 2])
            } else {
                (f64::from(vals[n / 2 - 1]) + f64::from(vals[n / 2])) / 2.0
            };
            bands_checked += 1;
            if spectrum.values[band].to_bits() != expect.to_bits() {
                exact = false;
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = exact && elapsed < 5.0;
    report(
        "criterion 2: median oracle",
        pass,
        &format!(
            "100 cube/mask pairs, {bands_checked} bands bitwise-equal to the sort oracle: \
             {exact}, {elapsed:.1}s (< 5s)"
        ),
    );
}

#[test]
fn criterion_3_pipeline_positive_control() {
    let _guard = serial();
    let generated = generate_cohort(&scenario(
        Scenario::Separable,
        &ScenarioOverrides {
            master_seed: Some(7),
            ..Default::default()
        },
    ))
    .unwrap();
    let plan = default_plan(2025, 1000, PriorsMode::Empirical);
    let start = Instant::now();
    let report_out = single_threaded(|| run_evaluation(&generated.cohort, &plan)).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let acc = report_out.summary.accuracy.mean;
    let sens = report_out.summary.sensitivity.mean;
    let spec = report_out.summary.specificity.mean;
    let pass = acc >= 0.95 && sens >= 0.90 && spec >= 0.95 && elapsed < 60.0;
    report(
        "criterion 3: pipeline positive control (separable)",
        pass,
        &format!(
            "1000 splits single-threaded: accuracy {acc:.4} (>= 0.95), sensitivity {sens:.4} \
             (>= 0.90), specificity {spec:.4} (>= 0.95), {elapsed:.1}s (< 60s)"
        ),
    );
}

#[test]
fn criterion_4_null_control() {
    let _guard = serial();
    let generated = generate_cohort(&scenario(
        Scenario::Null,
        &ScenarioOverrides {
            master_seed: Some(3),
            ..Default::default()
        },
    ))
    .unwrap();
    let plan = default_plan(11, 1000, PriorsMode::Uniform);
    let report_out = run_evaluation(&generated.cohort, &plan).unwrap();
    let acc = report_out.summary.accuracy.mean;
    let pass = (0.45..=0.55).contains(&acc);
    report(
        "criterion 4: null control",
        pass,
        &format!("1000 splits, uniform priors: mean accuracy {acc:.4} (within [0.45, 0.55])"),
    );
}

#[test]
fn criterion_5_confounding_inflation() {
    let _guard = serial();
    let plan = default_plan(11, 1000, PriorsMode::Uniform);

    let confounded = generate_cohort(&scenario(
        Scenario::Confounded,
        &ScenarioOverrides {
            master_seed: Some(7),
            ..Default::default()
        },
    ))
    .unwrap();
    let conf_acc = run_evaluation(&confounded.cohort, &plan)
        .unwrap()
        .summary
        .accuracy
        .mean;

    let balanced = generate_cohort(&scenario(
        Scenario::BalancedConfounder,
        &ScenarioOverrides {
            master_seed: Some(7),
            ..Default::default()
        },
    ))
    .unwrap();
    let bal_acc = run_evaluation(&balanced.cohort, &plan)
        .unwrap()
        .summary
        .accuracy
        .mean;

    let gap = conf_acc - bal_acc;
    let pass = conf_acc >= 0.90 && bal_acc <= 0.60 && gap >= 0.30;
    report(
        "criterion 5: confounding-inflation demonstration",
        pass,
        &format!(
            "confounded accuracy {conf_acc:.4} (>= 0.90) with zero group effect, \
             balanced-tilt accuracy {bal_acc:.4} (<= 0.60), gap {gap:.4} (>= 0.30)"
        ),
    );
}

#[test]
fn criterion_6_separation_test_reproduction() {
    let _guard = serial();
    // sepsis-only cohort, tilt on a random 48% of subjects
    let config = scenario(
        Scenario::Confounded,
        &ScenarioOverrides {
            master_seed: Some(21),
            counts: Some([0, 0, 25]),
            tilt_fraction: Some([0.0, 0.0, 0.48]),
            ..Default::default()
        },
    );
    let generated = generate_cohort(&config).unwrap();
    let cohort = &generated.cohort;

    let tilted = hsiclass::confound::separation_test(
        cohort,
        |_| true,
        |_, spectrum| spectrum.meta.software_version == "v2",
        "software_version == v2",
        5,
        1e-3,
        99,
    )
    .unwrap();

    // shuffled control: subject-level fair coins, independent of spectra
    let coins: BTreeMap<SubjectId, bool> = cohort
        .subjects
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut rng = substream_rng(4_242, i as u64);
            (s.subject_id.clone(), rng.gen::<f64>() < 0.5)
        })
        .collect();
    let shuffled = hsiclass::confound::separation_test(
        cohort,
        |_| true,
        |subject, _: &MedianSpectrum| coins[&subject.subject_id],
        "fair coin",
        5,
        1e-3,
        99,
    )
    .unwrap();

    let pass = tilted.mean_accuracy >= 0.90
        && (0.35..=0.65).contains(&shuffled.mean_accuracy);
    report(
        "criterion 6: software-version separation",
        pass,
        &format!(
            "48% tilted sepsis subjects: cv accuracy {:.4} (>= 0.90, {} pos / {} neg subjects); \
             shuffled labels: {:.4} (within [0.35, 0.65])",
            tilted.mean_accuracy,
            tilted.n_positive_subjects,
            tilted.n_negative_subjects,
            shuffled.mean_accuracy
        ),
    );
}

#[test]
fn criterion_7_cli_determinism() {
    let _guard = serial();
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_hsiclass");
    let cohort_dir = dir.path().join("cohort");
    let status = std::process::Command::new(bin)
        .args([
            "synth",
            "--scenario",
            "separable",
            "--seed",
            "7",
            "--out",
            cohort_dir.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let manifest = cohort_dir.join("manifest.csv");

    let mut outputs: Vec<(String, Vec<u8>, Vec<u8>)> = Vec::new();
    for (label, workers) in [("a1", "1"), ("a8", "8"), ("b1", "1"), ("b8", "8")] {
        let out = dir.path().join(label);
        let status = std::process::Command::new(bin)
            .args([
                "eval",
                "--manifest",
                manifest.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--splits",
                "300",
                "--seed",
                "17",
                "--workers",
                workers,
                "--per-split",
            ])
            .status()
            .unwrap();
        assert!(status.success());
        outputs.push((
            label.to_string(),
            std::fs::read(out.join("report.json")).unwrap(),
            std::fs::read(out.join("splits.csv")).unwrap(),
        ));
    }
    let identical = outputs
        .iter()
        .all(|(_, json, csv)| *json == outputs[0].1 && *csv == outputs[0].2);
    let parsed: serde_json::Value = serde_json::from_slice(&outputs[0].1).unwrap();
    let cli_accuracy = parsed["summary"]["accuracy"]["mean"].as_f64().unwrap();
    report(
        "criterion 7: CLI determinism across workers and runs",
        identical && cli_accuracy >= 0.95,
        &format!(
            "two consecutive runs at 1 and 8 workers byte-identical: {identical}; \
             reported mean accuracy {cli_accuracy:.4} (>= 0.95 on the separable cohort)"
        ),
    );
}

#[test]
fn criterion_8_aggregation_identity() {
    let _guard = serial();
    let generated = generate_cohort(&scenario(
        Scenario::Separable,
        &ScenarioOverrides {
            master_seed: Some(7),
            ..Default::default()
        },
    ))
    .unwrap();
    let mut checked = 0usize;
    let mut worst = 0.0f64;
    for (site, seed, splits) in [
        (SiteFilter::Both, 17u64, 500u64),
        (SiteFilter::Thigh, 23u64, 300u64),
    ] {
        let mut plan = default_plan(seed, splits, PriorsMode::Empirical);
        plan.site_filter = site;
        let report_out = run_evaluation(&generated.cohort, &plan).unwrap();
        for s in &report_out.splits {
            let weighted = (s.n_sepsis as f64 * s.sensitivity
                + s.n_non_sepsis as f64 * s.specificity)
                / (s.n_sepsis + s.n_non_sepsis) as f64;
            worst = worst.max((s.accuracy - weighted).abs());
            checked += 1;
        }
        // summaries must be recomputable from the stored per-split values
        let acc: Vec<f64> = report_out.splits.iter().map(|s| s.accuracy).collect();
        assert_eq!(summarize(&acc).unwrap(), report_out.summary.accuracy);
    }
    let pass = worst <= 1e-12;
    report(
        "criterion 8: aggregation identity",
        pass,
        &format!(
            "{checked} splits: max |accuracy - patient-weighted combination| = {worst:.2e} (<= 1e-12)"
        ),
    );
}
