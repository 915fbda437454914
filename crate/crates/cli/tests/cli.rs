use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mfris-bench"))
}

fn write(dir: &std::path::Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

const TINY: &str = "name = \"tiny\"\narchitectures = [\"star\", \"active\"]\nn_trials = 2\ncfg.n_elements = 4\noptions.restarts = 1\noptions.power_split_grid = [0.8]\nsweep.values = [20]\n";

#[test]
fn run_then_summarize() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "tiny.toml", TINY);
    let out = dir.path().join("out");
    let st = bin()
        .args(["run", sc.to_str().unwrap(), "--out", out.to_str().unwrap(), "--jobs", "1", "--trials", "3"])
        .status()
        .unwrap();
    assert!(st.success());
    let csv = out.join("tiny.csv");
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 1 + 2 * 3);
    assert!(out.join("tiny.manifest.toml").exists());

    let o = bin().args(["summarize", csv.to_str().unwrap()]).output().unwrap();
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(1).unwrap().starts_with("star,p_total_dbm,20,"));
}

#[test]
fn config_errors_exit_nonzero_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "bad.toml", &format!("{TINY}cfg.bogus = 1\n"));
    let o = bin().args(["run", sc.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]).output().unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("cfg.bogus"));

    let o = bin().args(["summarize", dir.path().join("missing.csv").to_str().unwrap()]).output().unwrap();
    assert!(!o.status.success());
}

#[test]
fn total_failure_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(
        dir.path(),
        "dead.toml",
        "architectures = [\"passive\"]\ncfg.n_elements = 2\ncfg.noise_rx_w = 0.0\nscene.user_pos = [[47, 11, 1]]\noptions.restarts = 1\n",
    );
    let o = bin().args(["run", sc.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]).output().unwrap();
    assert!(!o.status.success());
}

#[test]
fn oracle_check_reports_counts() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(
        dir.path(),
        "o.toml",
        "architectures = [\"mf-ideal\"]\nn_trials = 3\ncfg.n_antennas = 2\ncfg.n_elements = 2\ncfg.phase_bits = 1\n",
    );
    let o = bin().args(["oracle-check", sc.to_str().unwrap()]).output().unwrap();
    assert!(o.status.success());
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("oracle >= AO on 3/3"));
}
