use std::path::Path;
use std::process::{Command, Output};

use condensim::harness::derive_seed;
use condensim::harness::output::{read_meanfield, read_snapshot, CsvTable};
use condensim::RateKernel;

fn bin(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_condensim"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

const CONFIG: &str = "[kernel]\nmodel = \"zero-range\"\nb = 4.0\n[system]\nrho = 2.0\nsites = [30]\n\
                      [run]\nt_max = 1.0\nobs = [0.5, 1.0]\nn_paths = 50\nseed = 77\n";

#[test]
fn outputs_parse_back() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, CONFIG).unwrap();
    for cmd in ["simulate-ips", "simulate-tagged", "solve-meanfield", "couple", "coarsening"] {
        let o = bin(&[cmd], &cfg, &tmp.path().join(cmd));
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        let meta: serde_json::Value = serde_json::from_slice(&std::fs::read(tmp.path().join(cmd).join("meta.json")).unwrap()).unwrap();
        assert_eq!(meta["command"], cmd);
        assert_eq!(meta["seed"], 77);
    }
    let fk = CsvTable::read(&tmp.path().join("simulate-ips/fk.csv")).unwrap();
    assert_eq!(fk.header, ["t", "k", "mean_Fk", "stderr_Fk"]);
    let total: f64 = fk.column_f64("mean_Fk").unwrap().iter().sum();
    assert!((total - 2.0).abs() < 1e-9, "two times, each summing to 1");

    let sol = read_meanfield(&tmp.path().join("solve-meanfield"), RateKernel::zero_range(4.0).unwrap()).unwrap();
    assert_eq!(sol.grid().len(), 101);
    assert!((sol.moment(100, 1) - 2.0).abs() < 1e-8);

    let (h, snaps) = read_snapshot(&tmp.path().join("simulate-tagged"), "snapshot").unwrap();
    assert_eq!((h.sites, h.particles), (30, 60));
    assert_eq!(snaps.len(), 2);
    assert!(snaps.iter().all(|(_, c)| c.particles() == 60 && c.sites() == 30));

    let dom = CsvTable::read(&tmp.path().join("couple/domination.csv")).unwrap();
    assert!(dom.column_u64("violations").unwrap().iter().all(|&v| v == 0));

    let o = bin(&["simulate-limit", "--meanfield"], &cfg, &tmp.path().join("x"));
    assert!(!o.status.success());
    let o = Command::new(env!("CARGO_BIN_EXE_condensim"))
        .args(["simulate-limit", "--meanfield"])
        .arg(tmp.path().join("solve-meanfield"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path().join("limit"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = CsvTable::read(&tmp.path().join("limit/what_moments.csv")).unwrap();
    assert_eq!(m.column_f64("t").unwrap(), [0.5, 1.0]);
}

#[test]
fn replay_reproduces_path_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, CONFIG).unwrap();
    assert!(bin(&["simulate-tagged"], &cfg, &tmp.path().join("ens")).status.success());
    let seed = derive_seed(derive_seed(77, 0), 0);
    let o = bin(&["replay-seed", "--kind", "tagged", "--seed", &format!("{seed:#x}")], &cfg, &tmp.path().join("one"));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let a = std::fs::read(tmp.path().join("ens/snapshot.csv")).unwrap();
    let b = std::fs::read(tmp.path().join("one/snapshot.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn seed_flag_and_sizes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, CONFIG.replace("sites = [30]", "sites = [10, 20]")).unwrap();
    let run = |dir: &str, seed: &str| {
        let o = bin(&["simulate-ips", "--seed", seed], &cfg, &tmp.path().join(dir));
        assert!(o.status.success());
        std::fs::read(tmp.path().join(dir).join("L20/fk.csv")).unwrap()
    };
    assert_eq!(run("a", "5"), run("b", "5"));
    assert_ne!(run("a", "5"), run("c", "6"));
    assert!(tmp.path().join("a/L10/moments.csv").exists());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let code = |text: &str| {
        let cfg = tmp.path().join("bad.toml");
        std::fs::write(&cfg, text).unwrap();
        bin(&["simulate-ips"], &cfg, &tmp.path().join("o")).status.code()
    };
    assert_eq!(code("[kernel]\nmodel = \"zero-range\"\n"), Some(2));
    assert_eq!(code("[kernel]\nmodel = \"independent\"\n[system]\nsites = [1]\n"), Some(2));
    assert_eq!(code("not toml ["), Some(2));
    let missing = bin(&["simulate-ips"], &tmp.path().join("none.toml"), &tmp.path().join("o"));
    assert_eq!(missing.status.code(), Some(2));
    // oracle state guard
    assert_eq!(
        {
            let cfg = tmp.path().join("g.toml");
            std::fs::write(&cfg, "[kernel]\nmodel = \"independent\"\n[oracle]\nsites = 7\nparticles = 3\n").unwrap();
            Command::new(env!("CARGO_BIN_EXE_condensim"))
                .args(["oracle", "--t", "1", "--config"])
                .arg(&cfg)
                .arg("--out")
                .arg(tmp.path().join("g"))
                .status()
                .unwrap()
                .code()
        },
        Some(2)
    );
    // missing table file
    let cfg = tmp.path().join("t.toml");
    std::fs::write(&cfg, "[kernel]\nmodel = \"table\"\ntable = \"missing.csv\"\n").unwrap();
    assert_eq!(bin(&["solve-meanfield"], &cfg, &tmp.path().join("t")).status.code(), Some(2));
}
