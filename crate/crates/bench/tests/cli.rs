use std::path::PathBuf;
use std::process::Command;

use drro_bench::ScenarioConfig;

fn drro() -> Command {
    Command::new(env!("CARGO_BIN_EXE_drro"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("drro-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn small() -> String {
    ScenarioConfig::newsvendor(0.5, 2.0, 100.0, 10.0, 50, 7, vec![0.0, 1.0]).to_toml()
}

#[test]
fn sweep_succeeds_and_writes_csv() {
    let cfg = scratch("ok.toml");
    std::fs::write(&cfg, small()).unwrap();
    let out = scratch("ok.csv");
    let status = drro()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("delta,method,theta_1,regret,status,wall_ms"));
    assert_eq!(text.lines().count(), 1 + 2 * 4);
}

#[test]
fn invalid_config_exits_with_two() {
    let cfg = scratch("bad.toml");
    std::fs::write(&cfg, small().replace("n = 50", "n = 0")).unwrap();
    let status = drro().args(["erm", "--config"]).arg(&cfg).output().unwrap().status;
    assert_eq!(status.code(), Some(2));
    let missing = drro().args(["erm", "--config", "/nonexistent/drro.toml"]).output().unwrap().status;
    assert_eq!(missing.code(), Some(2));
}

#[test]
fn negative_radius_is_rejected() {
    let cfg = scratch("neg.toml");
    std::fs::write(&cfg, small()).unwrap();
    let status = drro().args(["dro", "--delta=-1", "--config"]).arg(&cfg).output().unwrap().status;
    assert_eq!(status.code(), Some(2));
}
