use mfris_core::bench::*;
use mfris_core::{dbm_to_watts, Architecture, Error};

const SMALL: &str = r#"
name = "small"
architectures = ["passive", "mf-ideal"]
n_trials = 2
base_seed = 40
cfg.n_antennas = 3
cfg.n_elements = 6
cfg.p_total_dbm = 20
cfg.noise_dbm = -80
options.restarts = 1
options.power_split_grid = [0.8]
sweep.variable = "p_total_dbm"
sweep.values = [10, 20]
"#;

fn key_of(e: Error) -> String {
    match e {
        Error::Config { key, .. } => key,
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn parse_converts_powers_and_round_trips() {
    let sc = Scenario::parse(SMALL).unwrap();
    assert_eq!(sc.cfg.p_total, dbm_to_watts(20.0));
    assert!((sc.cfg.p_total - 0.1).abs() < 1e-15);
    assert_eq!(sc.cfg.noise_rx, dbm_to_watts(-80.0));
    assert_eq!(sc.cfg.n_users, 2);
    assert_eq!(sc.architectures, vec![Architecture::PassiveReflect, Architecture::MfRisIdeal]);
    assert_eq!(Scenario::parse(&sc.to_toml()).unwrap(), sc);
}

#[test]
fn parse_errors_name_the_key() {
    let with = |extra: &str| Scenario::parse(&format!("{SMALL}\n{extra}\n")).unwrap_err();
    assert_eq!(key_of(with("cfg.n_antenas = 3")), "cfg.n_antenas");
    assert_eq!(key_of(with("options.tol = \"x\"")), "options.tol");
    assert_eq!(key_of(with("cfg.strategy = \"both\"")), "cfg.strategy");
    assert_eq!(key_of(with("cfg.p_total_w = 1.0")), "cfg.p_total_w");
    let bad = SMALL.replace("sweep.values = [10, 20]", "sweep.values = [20, 10]");
    assert_eq!(key_of(Scenario::parse(&bad).unwrap_err()), "sweep.values");
    let bad = SMALL.replace("n_trials = 2", "n_trials = 0");
    assert_eq!(key_of(Scenario::parse(&bad).unwrap_err()), "n_trials");
    let bad = SMALL.replace("\"mf-ideal\"", "\"mf-perfect\"");
    assert_eq!(key_of(Scenario::parse(&bad).unwrap_err()), "architectures");
}

#[test]
fn one_cell_gives_one_row_with_the_fixed_columns() {
    let sc = Scenario::parse(
        "architectures = [\"star\"]\nn_trials = 1\ncfg.n_elements = 4\noptions.restarts = 1\nsweep.values = [20]\n",
    )
    .unwrap();
    let rows = run_scenario(&sc);
    assert_eq!(rows.len(), 1);
    assert!(rows[0].is_ok());
    let mut buf = Vec::new();
    write_csv(&rows, 2, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "scenario,architecture,strategy,sweep_var,sweep_value,trial,seed,sum_rate_bps_hz,\
         rate_user_1,rate_user_2,p_bs_w,p_ris_w,iterations,status,wall_time_s"
    );
    assert_eq!(text.lines().count(), 2);
}

fn without_wall_time(rows: &[Row]) -> String {
    let mut buf = Vec::new();
    write_csv(rows, 2, &mut buf).unwrap();
    String::from_utf8(buf)
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn repeated_runs_are_identical_and_rows_replay_from_the_manifest() {
    let sc = Scenario::parse(SMALL).unwrap();
    let a = run_scenario(&sc);
    let b = run_scenario(&sc);
    assert_eq!(a.len(), 2 * 2 * 2);
    assert_eq!(without_wall_time(&a), without_wall_time(&b));

    let order: Vec<(Architecture, f64, usize)> = a.iter().map(|r| (r.architecture, r.sweep_value, r.trial)).collect();
    assert_eq!(order[0], (Architecture::PassiveReflect, 10.0, 0));
    assert_eq!(order[1], (Architecture::PassiveReflect, 10.0, 1));
    assert_eq!(order[2], (Architecture::PassiveReflect, 20.0, 0));

    let m = manifest(&sc, &a);
    let replayed = scenario_from_manifest(&m).unwrap();
    assert_eq!(replayed, sc);
    for r in &a {
        assert_eq!(r.seed, sc.base_seed + r.trial as u64);
        let mut again = run_row(&replayed, r.architecture, r.sweep_value, r.trial);
        again.wall_time = r.wall_time;
        assert_eq!(&again, r);
    }
}

#[test]
fn failed_rows_are_recorded_and_excluded() {
    let sc = Scenario::parse(
        r#"
architectures = ["passive", "active"]
n_trials = 2
cfg.n_elements = 4
cfg.noise_rx_w = 0.0
cfg.noise_ris_w = 1e-11
scene.user_pos = [[47, 11, 1]]
options.restarts = 1
options.power_split_grid = [0.8]
"#,
    )
    .unwrap();
    let rows = run_scenario(&sc);
    assert_eq!(rows.len(), 4);
    assert!(rows[..2].iter().all(|r| r.status.starts_with("error")));
    assert!(rows[2..].iter().all(|r| r.is_ok()));
    let mut buf = Vec::new();
    write_csv(&rows, 1, &mut buf).unwrap();
    let s = summarize(&read_samples(buf.as_slice()).unwrap()).unwrap();
    assert_eq!(s.rows.len(), 1);
    assert_eq!(s.rows[0].architecture, "active");
    assert_eq!(s.omitted_groups, 1);
    assert_eq!(s.failed_rows, 2);
}

fn sample(arch: &str, v: f64, r: Option<f64>) -> Sample {
    (arch.into(), "p_total_dbm".into(), v, r)
}

#[test]
fn summary_statistics() {
    let one = summarize(&[sample("star", 20.0, Some(5.5))]).unwrap();
    assert_eq!((one.rows[0].mean, one.rows[0].std, one.rows[0].count), (5.5, 0.0, 1));

    let two = summarize(&[sample("star", 20.0, Some(2.0)), sample("star", 20.0, Some(4.0))]).unwrap();
    assert_eq!(two.rows[0].mean, 3.0);
    assert!((two.rows[0].std - 2f64.sqrt()).abs() < 1e-15);

    let mixed = summarize(&[
        sample("star", 20.0, None),
        sample("active", 20.0, Some(1.0)),
        sample("star", 20.0, None),
        sample("active", 25.0, Some(1.0)),
    ])
    .unwrap();
    assert_eq!(mixed.rows.len(), 2);
    assert_eq!(mixed.omitted_groups, 1);
    assert_eq!(mixed.failed_rows, 2);

    assert!(matches!(summarize(&[]), Err(Error::Empty(_))));
}
