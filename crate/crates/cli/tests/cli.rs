use std::fs;
use std::process::Command;

const CONFIG: &str = r#"
[network]
cells = 2
users_per_cell = 1
tx_antennas = 3
rx_antennas = 3
streams = 1

[channel]
kind = "iid"
snr_db = [10.0]

[run]
algos = ["AIMS", "UNCOORDINATED"]
iterations = [2]
realizations = 4
output = "ignored.csv"
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mimo-coord"))
}

#[test]
fn run_writes_csv_and_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    let out = dir.path().join("rows.csv");
    fs::write(&cfg, CONFIG).unwrap();
    let status = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(["--algo", "max_dlt,MAX-SINR", "--iters", "1,3", "--workers", "2", "--seed", "9"])
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "algo,L,K,M,N,d,T,snr_db,realization,sum_rate_bits,dlt_objective,overhead,wall_time_s"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2 * 2 * 4);
    assert!(rows.iter().all(|r| r.starts_with("MAX_DLT,") || r.starts_with("MAX_SINR,")));
    assert!(String::from_utf8_lossy(&status.stdout).contains("MAX_SINR"));
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, CONFIG.replace("streams = 1", "streams = 7")).unwrap();
    let out = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let missing = bin().args(["run", "--config"]).arg(dir.path().join("none.toml")).output().unwrap();
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn empty_override_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, CONFIG).unwrap();
    let out = bin().args(["run", "--config"]).arg(&cfg).args(["--iters", ""]).output().unwrap();
    assert_ne!(out.status.code(), Some(0));
}
