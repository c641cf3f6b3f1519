use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use fcdgame::suites::{run_all, reference_solver, ValidateParams};
use fcdgame::{parse_seeds, GridSpec};
use fcdgame_core::oracle::single_vehicle_greedy;
use fcdgame_core::solver::{Game, StrategyProfile};
use fcdgame_core::{default_scenario, PrivacyProfile, RhoTable, ScenarioConfig, SolverError, Strategy};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fcdgame-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, cfg: &ScenarioConfig) -> PathBuf {
    let path = dir.join("scenario.toml");
    fs::write(&path, cfg.to_toml_string()).unwrap();
    path
}

fn fcdgame(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_fcdgame"))
        .args(args)
        .env_remove("FCDGAME_MODE")
        .output()
        .unwrap()
}

fn data_rows(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# schema: fcdgame."));
    lines.skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn solve_single_vehicle_echoes_greedy() {
    let dir = scratch("solve");
    let cfg = default_scenario();
    let config = write_config(&dir, &cfg);
    let out = fcdgame(&["--mode", "solve", "--config", config.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rho = RhoTable::new(&cfg.privacy_profiles, &cfg.impact_levels).unwrap();
    let greedy = single_vehicle_greedy(&cfg.impact_levels, rho.row(0), cfg.bandwidth_per_slot);
    let rows = data_rows(&dir.join("solve_strategies.csv"));
    assert_eq!(rows.len(), 4);
    for (row, g) in rows.iter().zip(&greedy.probabilities) {
        let p: f64 = row[7].parse().unwrap();
        assert!((p - g).abs() < 1e-12, "{p} vs {g}");
    }
    assert!(dir.join("solve_summary.txt").exists());
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn enumeration_guard_has_its_own_exit_code() {
    let dir = scratch("guard");
    let mut cfg = default_scenario();
    cfg.privacy_profiles = (1..=6)
        .map(|phi| PrivacyProfile::new(phi, (phi - 1) as f64, 1).unwrap().with_fleet_share(1.0 / 6.0))
        .collect();
    let config = write_config(&dir, &cfg);
    let out = fcdgame(&["--mode", "solve", "--config", config.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn invalid_config_exits_with_config_code() {
    let dir = scratch("bad-config");
    let path = dir.join("broken.toml");
    fs::write(&path, "bandwidth_bits_per_slot = -1\n").unwrap();
    let out = fcdgame(&["--mode", "solve", "--config", path.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
    let out = fcdgame(&["--mode", "simulate", "--seeds", "x", "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn simulate_writes_one_csv_per_run_and_a_summary() {
    let dir = scratch("simulate");
    let out = fcdgame(&[
        "--mode", "simulate", "--approaches", "GTP,NC", "--seeds", "1,2,3", "--slots", "30", "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut names: Vec<String> =
        fs::read_dir(&dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    names.sort();
    assert_eq!(names.iter().filter(|n| n.starts_with("run_")).count(), 6);
    assert!(names.contains(&"summary.csv".to_string()));
    let summary = data_rows(&dir.join("summary.csv"));
    assert_eq!(summary.iter().filter(|r| r[0] == "run").count(), 6);
    assert_eq!(summary.iter().filter(|r| r[0] == "mean").count(), 2);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn env_prefix_mirrors_flags() {
    let dir = scratch("env");
    let out = Command::new(env!("CARGO_BIN_EXE_fcdgame"))
        .env("FCDGAME_MODE", "analyze")
        .env("FCDGAME_GRID", "kind=misestimation;max_count=2")
        .env("FCDGAME_OUT", &dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("analysis_misestimation.csv").exists());
    assert!(!dir.join("analysis_privacy.csv").exists());
    assert_eq!(data_rows(&dir.join("analysis_misestimation.csv")).len(), 8);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn seed_lists_and_ranges() {
    assert_eq!(parse_seeds("1-3,7").unwrap(), vec![1, 2, 3, 7]);
    assert!(parse_seeds("").is_err());
    assert!(parse_seeds("5-2").is_err());
}

#[test]
fn grid_spec_rejects_unknown_keys() {
    let cfg = default_scenario();
    assert!(GridSpec::parse("colour=red", &cfg).is_err());
    let spec = GridSpec::parse("kind=privacy; imprecision=10; share_step=0.5", &cfg).unwrap();
    assert!(spec.privacy && !spec.misestimation);
    assert_eq!(spec.imprecision_km, vec![10.0]);
}

/// Fills levels in ascending impact per bit, the reverse of the optimum.
fn inverted_solver(game: &Game) -> Result<StrategyProfile, SolverError> {
    let strategies = (0..game.privacy_levels())
        .map(|phi| {
            let loads = game.loads(phi);
            let mut order: Vec<usize> = (0..game.impact_levels()).collect();
            order.sort_by(|&a, &b| game.impact_per_bit(phi, a).total_cmp(&game.impact_per_bit(phi, b)));
            let mut p = vec![0.0; loads.len()];
            let mut left = game.bandwidth();
            for i in order {
                p[i] = (left / loads[i]).clamp(0.0, 1.0);
                left -= p[i] * loads[i];
            }
            Strategy { probabilities: p }
        })
        .collect();
    Ok(StrategyProfile::new(strategies, game.counts().to_vec()))
}

#[test]
fn broken_solver_fails_named_suites() {
    let params = ValidateParams::quick();
    let outcomes = run_all(&params, &inverted_solver);
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.passed).map(|o| o.name).collect();
    assert!(failed.contains(&"oracle-equivalence"), "{outcomes:?}");
    assert!(failed.contains(&"linear-case"));
    assert!(failed.contains(&"nash-deviation"));
    assert!(outcomes.iter().all(|o| !o.tolerance.is_empty()));
}

#[test]
fn reference_solver_passes_quick_battery() {
    let outcomes = run_all(&ValidateParams::quick(), &reference_solver);
    assert!(outcomes.iter().all(|o| o.passed), "{outcomes:?}");
}

#[test]
fn shipped_configs_load() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["default.toml", "privacy_10km.toml"] {
        let cfg = ScenarioConfig::load(&root.join(name)).unwrap();
        assert!(Game::from_config(&cfg).is_ok(), "{name}");
    }
}
