use mdlseq_harness::config::{GeneratorSpec, PredictorConfig, PredictorKind};
use mdlseq_harness::{
    check_bounds, emit_report, run_experiment, scenarios, summarize, BoundsError, ConfigError,
    ExperimentConfig, Format, RecordsError, Row, RunError, RunRecord, COLUMNS,
};

fn pair() -> ExperimentConfig {
    ExperimentConfig::from_toml(
        r#"
name = "pair"
seed = 11
trajectories = 6
length = 40

[sequence]
truth = 1
complexity = { rule = "explicit", codelengths = [1.0, 1.0] }
models = [
  { family = "bernoulli", theta = 0.5 },
  { family = "bernoulli", theta = 0.75 },
]

[[predictors]]
kind = "mdl"

[[predictors]]
kind = "map"

[[predictors]]
kind = "bayes"
horizon = 2

[[predictors]]
kind = "mdli"
"#,
    )
    .unwrap()
}

fn csv_bytes(records: &RunRecord) -> Vec<u8> {
    let mut out = Vec::new();
    records.write_csv(&mut out).unwrap();
    out
}

#[test]
fn row_count_is_trajectories_times_steps_times_predictors() {
    let cfg = pair();
    let records = run_experiment(&cfg, Some(2)).unwrap();
    assert_eq!(records.rows.len(), 6 * 41 * 4);
    let labels = records.predictors();
    assert_eq!(labels, ["mdl", "map", "bayes-h2", "mdli"]);
    // Sorted by trajectory, then step, then predictor order.
    for (i, r) in records.rows.iter().enumerate() {
        assert_eq!(r.trajectory, i / (41 * 4));
        assert_eq!(r.step, (i / 4) % 41);
        assert_eq!(r.predictor, labels[i % 4]);
        assert_eq!(r.run_id, cfg.run_id());
        assert!(r.d_h.is_some() && r.estimator.as_deref() == Some("exact"));
    }
}

#[test]
fn zero_length_runs_report_prior_selections() {
    let mut cfg = pair();
    cfg.trajectories = 1;
    cfg.length = 0;
    let records = run_experiment(&cfg, None).unwrap();
    assert_eq!(records.rows.len(), 4);
    let mdl = &records.rows[0];
    assert_eq!(mdl.selected_index, Some(1));
    assert_eq!(mdl.score_bits, Some(1.0));
    assert_eq!(mdl.d_h, Some(0.0));
    let bayes = &records.rows[2];
    assert_eq!(bayes.score_bits, Some(0.0));
    // Bayes(1) = 5/8 against P(1) = 1/2, twice over two steps.
    let expected_d2 = {
        let mut total = 0.0;
        for z in 0..4u32 {
            let ones = z.count_ones() as i32;
            let p = 0.25;
            let q = 0.5 * 0.5f64.powi(2) + 0.5 * 0.75f64.powi(ones) * 0.25f64.powi(2 - ones);
            total += (p - q).abs();
        }
        total
    };
    assert!((bayes.d_h.unwrap() - expected_d2).abs() < 1e-12);
}

#[test]
fn map_rows_match_mdl_rows() {
    let records = run_experiment(&pair(), None).unwrap();
    let mdl: Vec<&Row> = records.rows_for("mdl").collect();
    let map: Vec<&Row> = records.rows_for("map").collect();
    for (a, b) in mdl.iter().zip(&map) {
        assert_eq!(a.selected_index, b.selected_index);
        assert_eq!(a.score_bits, b.score_bits);
        assert_eq!(a.d_h, b.d_h);
    }
}

#[test]
fn output_is_independent_of_the_worker_count() {
    let cfg = pair();
    let one = csv_bytes(&run_experiment(&cfg, Some(1)).unwrap());
    let three = csv_bytes(&run_experiment(&cfg, Some(3)).unwrap());
    assert_eq!(one, three);
    assert_eq!(one, csv_bytes(&run_experiment(&cfg, Some(1)).unwrap()));
}

#[test]
fn more_trajectories_leave_earlier_ones_unchanged() {
    let cfg = pair();
    let mut more = cfg.clone();
    more.trajectories = 9;
    let a = run_experiment(&cfg, None).unwrap();
    let b = run_experiment(&more, None).unwrap();
    for (ra, rb) in a.rows.iter().zip(&b.rows) {
        assert_eq!(
            (ra.trajectory, ra.step, &ra.predictor),
            (rb.trajectory, rb.step, &rb.predictor)
        );
        assert_eq!(ra.selected_index, rb.selected_index);
        assert_eq!(ra.score_bits, rb.score_bits);
        assert_eq!(ra.d_h, rb.d_h);
    }
}

#[test]
fn monte_carlo_cells_carry_a_stderr() {
    let mut cfg = pair();
    cfg.trajectories = 2;
    cfg.length = 3;
    cfg.estimator.exact_budget = 2;
    cfg.estimator.mc_samples = 2_000;
    let records = run_experiment(&cfg, None).unwrap();
    let bayes: Vec<&Row> = records.rows_for("bayes-h2").collect();
    assert!(bayes
        .iter()
        .all(|r| r.estimator.as_deref() == Some("mc") && r.d_h_stderr.is_some()));
    let mdl: Vec<&Row> = records.rows_for("mdl").collect();
    assert!(mdl
        .iter()
        .all(|r| r.estimator.as_deref() == Some("exact") && r.d_h_stderr.is_none()));
}

#[test]
fn staircase_errors_stay_within_h_times_m_minus_one() {
    let cfg = scenarios::find("det-elimination")
        .unwrap()
        .config()
        .unwrap();
    let records = run_experiment(&cfg, None).unwrap();
    for (label, bound) in [("elimination-h3", 9), ("elimination", 3)] {
        for rows in records.trajectories(label) {
            let errors: Vec<usize> = rows.iter().map(|r| r.errors_cum.unwrap()).collect();
            assert!(errors.windows(2).all(|w| w[0] <= w[1]));
            assert_eq!(*errors.last().unwrap(), bound);
        }
    }
    assert!(check_bounds(&records, &cfg).unwrap().all_pass());
}

#[test]
fn non_deterministic_truth_is_rejected_for_elimination() {
    let mut cfg = pair();
    cfg.predictors = vec![PredictorConfig {
        kind: PredictorKind::Elimination,
        horizon: 1,
        label: None,
    }];
    match run_experiment(&cfg, None).unwrap_err() {
        RunError::Step {
            predictor, reason, ..
        } => {
            assert_eq!(predictor, "elimination");
            assert!(reason.contains("Q1") || reason.contains('1'), "{reason}");
        }
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn invalid_configs_name_the_offending_field() {
    let mut cfg = pair();
    cfg.trajectories = 0;
    assert!(matches!(
        run_experiment(&cfg, None).unwrap_err(),
        RunError::Config(ConfigError::Invalid { path, .. }) if path == "trajectories"
    ));
    let mut cfg = pair();
    let seq = cfg.sequence.as_mut().unwrap();
    seq.models = None;
    seq.generator = Some(GeneratorSpec::OnesThenZeros { block: 0, count: 3 });
    assert!(matches!(
        cfg.validate().unwrap_err(),
        ConfigError::Invalid { path, .. } if path == "sequence.generator.block"
    ));
}

#[test]
fn csv_round_trips_including_infinities() {
    let mut records = run_experiment(&pair(), None).unwrap();
    records.rows[3].log_ratio_bits = Some(f64::NEG_INFINITY);
    records.rows[5].score_bits = Some(f64::INFINITY);
    let bytes = csv_bytes(&records);
    let text = String::from_utf8(bytes.clone()).unwrap();
    assert_eq!(text.lines().next().unwrap(), COLUMNS.join(","));
    assert!(text.contains(",-inf,"));
    let back = RunRecord::read_csv(bytes.as_slice()).unwrap();
    assert_eq!(back, records);

    let mut json = Vec::new();
    records.write_json(&mut json).unwrap();
    assert_eq!(RunRecord::read_json(json.as_slice()).unwrap(), records);
}

#[test]
fn empty_records_give_a_header_and_an_empty_summary() {
    let empty = RunRecord::default();
    let text = String::from_utf8(csv_bytes(&empty)).unwrap();
    assert_eq!(text, format!("{}\n", COLUMNS.join(",")));
    let summary = summarize(&empty, None, 0);
    assert_eq!(summary.rows, 0);
    assert!(summary.predictors.is_empty() && summary.verdicts.is_empty());
    assert_eq!(RunRecord::read_csv(text.as_bytes()).unwrap(), empty);
    assert!(check_bounds(&empty, &pair()).unwrap().verdicts.is_empty());
}

#[test]
fn missing_columns_are_reported() {
    let text = "run_id,trajectory,step,predictor\nabc,0,0,mdl\n";
    assert!(matches!(
        RunRecord::read_csv(text.as_bytes()).unwrap_err(),
        RecordsError::MissingColumn(c) if c == "selected_index"
    ));
    let cfg = pair();
    let mut records = run_experiment(&cfg, None).unwrap();
    records.rows[0].d_h = None;
    assert!(matches!(
        check_bounds(&records, &cfg).unwrap_err(),
        BoundsError::MissingColumn { column: "d_h", .. }
    ));
}

#[test]
fn records_are_tied_to_their_config() {
    let cfg = pair();
    let records = run_experiment(&cfg, None).unwrap();
    let mut other = cfg.clone();
    other.seed += 1;
    assert!(matches!(
        check_bounds(&records, &other).unwrap_err(),
        BoundsError::RunMismatch { .. }
    ));
}

#[test]
fn singleton_class_has_zero_sums_and_passes() {
    let cfg = ExperimentConfig::from_toml(
        r#"
name = "singleton"
trajectories = 5
length = 30
epsilon = 0.01

[sequence]
truth = 1
complexity = { rule = "explicit", codelengths = [0.0] }
models = [{ family = "bernoulli", theta = 0.3 }]

[[predictors]]
kind = "mdl"
horizon = 3

[[predictors]]
kind = "bayes"
"#,
    )
    .unwrap();
    let records = run_experiment(&cfg, None).unwrap();
    let report = check_bounds(&records, &cfg).unwrap();
    assert_eq!(report.verdicts.len(), 4);
    for v in &report.verdicts {
        assert!(v.pass, "{v:?}");
        assert_eq!(v.statistic, 0.0);
    }
}

#[test]
fn emitted_files_match_the_records() {
    let cfg = pair();
    let records = run_experiment(&cfg, None).unwrap();
    let summary = summarize(&records, Some(&cfg.checkpoints()), cfg.seed);
    let dir = tempfile::tempdir().unwrap();
    for format in [Format::Csv, Format::Json] {
        let paths = emit_report(&records, &summary, dir.path(), format).unwrap();
        assert_eq!(RunRecord::load(&paths.records).unwrap(), records);
        let text = std::fs::read_to_string(&paths.summary).unwrap();
        let back: mdlseq_harness::Summary = serde_json::from_str(&text).unwrap();
        assert_eq!(back.predictors.len(), 4);
        assert_eq!(
            back.predictors[0]
                .checkpoints
                .iter()
                .map(|c| c.step)
                .collect::<Vec<_>>(),
            [4, 20, 40]
        );
    }
}

#[test]
fn interactive_rows_track_selection_and_values() {
    let cfg = scenarios::find("rl-two-env").unwrap().config().unwrap();
    let mut small = cfg.clone();
    small.trajectories = 3;
    small.length = 120;
    let records = run_experiment(&small, None).unwrap();
    assert_eq!(records.rows.len(), 3 * 121);
    for rows in records.trajectories("discriminative-mdl") {
        let valued: Vec<usize> = rows
            .iter()
            .filter(|r| r.value_gap.is_some())
            .map(|r| r.step)
            .collect();
        assert_eq!(valued, [0, 100, 120]);
        for r in rows.iter().filter(|r| r.value_gap.is_some()) {
            let gap = (r.value_sel.unwrap() - r.value_true.unwrap()).abs();
            assert_eq!(r.value_gap, Some(gap));
            if r.selected_index == Some(1) {
                assert_eq!(gap, 0.0);
            }
        }
    }

    let cfg = scenarios::find("discriminative-regression")
        .unwrap()
        .config()
        .unwrap();
    let records = run_experiment(&cfg, None).unwrap();
    for rows in records.trajectories("discriminative-mdl") {
        assert_eq!(rows.last().unwrap().selected_index, Some(11));
    }
}
