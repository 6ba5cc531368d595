//! One function per CLI subcommand. Each writes its CSV files and
//! `meta.json` into `out` and returns the summary stored in the metadata.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::output::{self, ensure_dir, fmt_f64, write_meta, CsvTable, SnapshotHeader};
use super::{derive_seed, run_ips, run_limit, run_tagged, solve_meanfield, tagged_path, ExperimentConfig};
use crate::coupling::{coupled_ensemble, moment_monitor, CoupledSimulator};
use crate::error::{Error, Result};
use crate::limit::{simulate_path, DiscreteSampler, LimitDriver};
use crate::meanfield::{self, MeanFieldSolution};
use crate::oracle;
use crate::state::sample_initial;

/// Output directory for lattice size `sites`: `out` itself when a single
/// size is configured, `out/L<sites>` otherwise.
fn size_dir(cfg: &ExperimentConfig, out: &Path, sites: u64) -> Result<PathBuf> {
    let dir = if cfg.system.sites.len() > 1 {
        out.join(format!("L{sites}"))
    } else {
        out.to_path_buf()
    };
    ensure_dir(&dir)?;
    Ok(dir)
}

fn header(cfg: &ExperimentConfig, sites: u64, seed: u64) -> Result<SnapshotHeader> {
    Ok(SnapshotHeader {
        sites,
        particles: cfg.particles(sites),
        seed,
        model: cfg.kernel()?.to_string(),
    })
}

fn finish(cfg: &ExperimentConfig, out: &Path, command: &str, summary: Value) -> Result<Value> {
    write_meta(out, command, cfg.run.seed, cfg, summary.clone())?;
    Ok(summary)
}

pub fn simulate_ips(cfg: &ExperimentConfig, out: &Path) -> Result<Value> {
    ensure_dir(out)?;
    let kernel = cfg.kernel()?;
    let obs = &cfg.run.obs;
    let mut sizes = Vec::new();
    for (li, &l) in cfg.system.sites.iter().enumerate() {
        let dir = size_dir(cfg, out, l)?;
        let seed = derive_seed(cfg.run.seed, li as u64);
        let ens = run_ips(&kernel, l, cfg.particles(l), obs, cfg.run.n_paths, seed)?;
        let mut fk = CsvTable::new(&["t", "k", "mean_Fk", "stderr_Fk"]);
        let mut mom = CsvTable::new(&["t", "m1", "m2", "m3"]);
        for (i, &t) in obs.iter().enumerate() {
            let (mean, se) = ens.mean_f(i);
            for k in 0..mean.len() {
                fk.push(vec![fmt_f64(t), k.to_string(), fmt_f64(mean[k]), fmt_f64(se[k])]);
            }
            let m = ens.moments(i)?;
            mom.push(vec![fmt_f64(t), fmt_f64(m[0]), fmt_f64(m[1]), fmt_f64(m[2])]);
        }
        fk.write(&dir.join("fk.csv"))?;
        mom.write(&dir.join("moments.csv"))?;
        output::write_snapshot(&dir, "snapshot", &header(cfg, l, derive_seed(seed, 0))?, obs, &ens.configs[0])?;
        sizes.push(json!({"L": l, "N": ens.particles}));
    }
    finish(cfg, out, "simulate-ips", json!({ "sizes": sizes }))
}

pub fn simulate_tagged(cfg: &ExperimentConfig, out: &Path) -> Result<Value> {
    ensure_dir(out)?;
    let kernel = cfg.kernel()?;
    let obs = &cfg.run.obs;
    let mut sizes = Vec::new();
    for (li, &l) in cfg.system.sites.iter().enumerate() {
        let dir = size_dir(cfg, out, l)?;
        let seed = derive_seed(cfg.run.seed, li as u64);
        let ens = run_tagged(&kernel, l, cfg.particles(l), cfg.init_scheme(), obs, cfg.run.n_paths, seed)?;
        let mut hist = CsvTable::new(&["t", "k", "prob", "stderr"]);
        let mut mom = CsvTable::new(&["t", "mean_W", "mean_W2", "stderr_W", "stderr_W2"]);
        for (i, &t) in obs.iter().enumerate() {
            let (law, se) = ens.w_law(i);
            for k in 0..law.len() {
                hist.push(vec![fmt_f64(t), k.to_string(), fmt_f64(law[k]), fmt_f64(se[k])]);
            }
            let (a, sa, b, sb) = ens.w_moments(i);
            mom.push(vec![fmt_f64(t), fmt_f64(a), fmt_f64(b), fmt_f64(sa), fmt_f64(sb)]);
        }
        hist.write(&dir.join("w_hist.csv"))?;
        mom.write(&dir.join("w_moments.csv"))?;
        output::write_snapshot(&dir, "snapshot", &header(cfg, l, derive_seed(seed, 0))?, obs, &ens.configs[0])?;
        sizes.push(json!({"L": l, "N": ens.particles}));
    }
    finish(cfg, out, "simulate-tagged", json!({ "sizes": sizes }))
}

pub fn solve(cfg: &ExperimentConfig, out: &Path) -> Result<Value> {
    ensure_dir(out)?;
    let sol = solve_meanfield(cfg)?;
    output::write_meanfield(out, &sol)?;
    finish(
        cfg,
        out,
        "solve-meanfield",
        json!({
            "accepted_steps": sol.accepted_steps(),
            "max_class": sol.states().iter().map(Vec::len).max().unwrap_or(0).saturating_sub(1),
            "mass_drift": sol.conservation_drift(),
            "min_raw": sol.min_raw(),
        }),
    )
}

/// Mean-field solution read from `meanfield` when given, solved otherwise.
pub fn load_or_solve(cfg: &ExperimentConfig, meanfield: Option<&Path>) -> Result<MeanFieldSolution> {
    match meanfield {
        Some(dir) => output::read_meanfield(dir, cfg.kernel()?),
        None => solve_meanfield(cfg),
    }
}

pub fn simulate_limit(cfg: &ExperimentConfig, meanfield: Option<&Path>, out: &Path) -> Result<Value> {
    ensure_dir(out)?;
    let sol = load_or_solve(cfg, meanfield)?;
    let obs = &cfg.run.obs;
    let ens = run_limit(&sol, obs, cfg.run.n_paths, cfg.run.seed)?;
    let mut hist = CsvTable::new(&["t", "k", "prob", "stderr"]);
    let mut mom = CsvTable::new(&["t", "mean_W", "mean_W2", "stderr_W", "stderr_W2"]);
    let n = ens.n_paths as f64;
    for (i, &t) in obs.iter().enumerate() {
        for (k, q) in ens.law(i).into_iter().enumerate() {
            hist.push(vec![fmt_f64(t), k.to_string(), fmt_f64(q), fmt_f64((q * (1.0 - q) / n).sqrt())]);
        }
        mom.push(vec![
            fmt_f64(t),
            fmt_f64(ens.mean[i]),
            fmt_f64(ens.second[i]),
            fmt_f64(ens.mean_se[i]),
            fmt_f64(ens.second_se[i]),
        ]);
    }
    hist.write(&out.join("what_hist.csv"))?;
    mom.write(&out.join("what_moments.csv"))?;
    finish(cfg, out, "simulate-limit", json!({ "n_paths": ens.n_paths }))
}

pub fn couple(cfg: &ExperimentConfig, out: &Path) -> Result<Value> {
    ensure_dir(out)?;
    let kernel = cfg.kernel()?;
    let obs = &cfg.run.obs;
    let mut sizes = Vec::new();
    for (li, &l) in cfg.system.sites.iter().enumerate() {
        let dir = size_dir(cfg, out, l)?;
        let seed = derive_seed(cfg.run.seed, li as u64);
        let paths = coupled_ensemble(&kernel, l, cfg.system.rho, cfg.init_scheme(), obs, cfg.run.n_paths, seed)?;
        let mut dom = CsvTable::new(&["path_id", "violations", "increment_violations", "order_violations"]);
        for (p, path) in paths.iter().enumerate() {
            dom.push(vec![
                p.to_string(),
                path.violations().to_string(),
                path.increment_violations.to_string(),
                path.order_violations.to_string(),
            ]);
        }
        dom.write(&dir.join("domination.csv"))?;
        let rep = moment_monitor(&paths, obs);
        let mut mom = CsvTable::new(&["t", "m2_W", "stderr_m2_W", "m2_Wbar", "stderr_m2_Wbar"]);
        for i in 0..obs.len() {
            mom.push(vec![
                fmt_f64(obs[i]),
                fmt_f64(rep.m2_w[i]),
                fmt_f64(rep.m2_w_se[i]),
                fmt_f64(rep.m2_wbar[i]),
                fmt_f64(rep.m2_wbar_se[i]),
            ]);
        }
        mom.write(&dir.join("coupled_moments.csv"))?;
        let total: u64 = paths.iter().map(|p| p.violations()).sum();
        sizes.push(json!({
            "L": l,
            "violations": total,
            "ordered": rep.ordered,
            "finite": rep.finite,
            "wbar_log_growth": rep.wbar_log_growth,
        }));
    }
    finish(cfg, out, "couple", json!({ "sizes": sizes }))
}

/// Exact laws on the `[oracle]` lattice at the given times.
pub fn exact(cfg: &ExperimentConfig, times: &[f64], out: &Path) -> Result<Value> {
    ensure_dir(out)?;
    let kernel = cfg.kernel()?;
    let (l, n) = (cfg.oracle.sites, cfg.oracle.particles);
    let plain = oracle::build_chain(l, n, &kernel, false)?;
    let tagged = oracle::build_chain(l, n, &kernel, true)?;
    let p0 = oracle::initial_law(&plain, cfg.system.tag)?;
    let q0 = oracle::initial_law(&tagged, cfg.system.tag)?;
    let mut fk = CsvTable::new(&["t", "k", "mean_Fk"]);
    let mut wk = CsvTable::new(&["t", "k", "prob"]);
    for &t in times {
        let m = oracle::marginals(&plain, &oracle::transient(&plain, &p0, t)?)?;
        for (k, v) in m.mean_f.iter().enumerate() {
            fk.push(vec![fmt_f64(t), k.to_string(), fmt_f64(*v)]);
        }
        let mt = oracle::marginals(&tagged, &oracle::transient(&tagged, &q0, t)?)?;
        for (k, v) in mt.w_law.unwrap_or_default().iter().enumerate() {
            wk.push(vec![fmt_f64(t), k.to_string(), fmt_f64(*v)]);
        }
    }
    fk.write(&out.join("exact_fk.csv"))?;
    wk.write(&out.join("exact_w.csv"))?;
    finish(
        cfg,
        out,
        "oracle",
        json!({"L": l, "N": n, "states": plain.len(), "tagged_states": tagged.len()}),
    )
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn convergence(cfg: &ExperimentConfig, out: &Path) -> Result<Value> {
    ensure_dir(out)?;
    let rep = super::run_convergence(cfg)?;
    let mut t = CsvTable::new(&["L", "N", "t", "err1", "err1_noise", "errW", "errW_noise", "errW_exch", "errW_exch_noise"]);
    for r in &rep.rows {
        t.push(vec![
            r.sites.to_string(),
            r.particles.to_string(),
            fmt_f64(r.t),
            opt(r.err1),
            opt(r.err1_noise),
            opt(r.err_w),
            opt(r.err_w_noise),
            opt(r.err_w_exch),
            opt(r.err_w_exch_noise),
        ]);
    }
    t.write(&out.join("convergence.csv"))?;
    let summary = json!({
        "t": cfg.run.obs,
        "slope_err1": rep.slope1,
        "slope_errW": rep.slope_w,
        "decreasing_err1": rep.decreasing1,
        "decreasing_errW": rep.decreasing_w,
    });
    finish(cfg, out, "convergence", summary)
}

pub fn coarsening(cfg: &ExperimentConfig, out: &Path) -> Result<Value> {
    ensure_dir(out)?;
    let rep = super::run_coarsening(cfg)?;
    let mut t = CsvTable::new(&["t", "mean_What", "stderr_What", "m2_over_rho", "rel_gap", "z"]);
    for r in &rep.rows {
        t.push(vec![
            fmt_f64(r.t),
            fmt_f64(r.mean_what),
            fmt_f64(r.se_what),
            fmt_f64(r.m2_over_rho),
            fmt_f64(r.rel_gap),
            fmt_f64(r.z),
        ]);
    }
    t.write(&out.join("coarsening.csv"))?;
    let within = rep.rows.iter().all(|r| r.z <= 3.0);
    finish(cfg, out, "coarsening", json!({"exponent": rep.exponent, "within_3_sigma": within}))
}

/// Which simulator a replayed seed belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReplayKind {
    Ips,
    Tagged,
    Couple,
    Limit,
}

/// Re-runs the single path whose generator was seeded with `path_seed`, as
/// printed by a failing ensemble, and writes its snapshot.
pub fn replay(cfg: &ExperimentConfig, kind: ReplayKind, path_seed: u64, sites: Option<u64>, out: &Path) -> Result<Value> {
    ensure_dir(out)?;
    let kernel = cfg.kernel()?;
    let obs = &cfg.run.obs;
    let l = sites.unwrap_or(cfg.system.sites[0]);
    let n = cfg.particles(l);
    let mut rng = ChaCha8Rng::seed_from_u64(path_seed);
    let hdr = header(cfg, l, path_seed)?;
    let summary = match kind {
        ReplayKind::Ips => {
            let configs = super::ips_path(&kernel, l, n, obs, &mut rng)?;
            output::write_snapshot(out, "snapshot", &hdr, obs, &configs)?;
            json!({"kind": "ips"})
        }
        ReplayKind::Tagged => {
            let (w, configs) = tagged_path(&kernel, l, n, cfg.init_scheme(), obs, &mut rng)?;
            output::write_snapshot(out, "snapshot", &hdr, obs, &configs)?;
            json!({"kind": "tagged", "w": w})
        }
        ReplayKind::Couple => {
            let st = sample_initial(l, n, cfg.init_scheme(), &mut rng)?;
            let path = CoupledSimulator::new(st, kernel, cfg.system.rho)?.simulate(obs, &mut rng)?;
            json!({"kind": "couple", "w": path.w, "wbar": path.wbar, "violations": path.violations()})
        }
        ReplayKind::Limit => {
            let sol = solve_meanfield(cfg)?;
            let p0 = meanfield::size_bias(&sol.states()[0], sol.rho())?;
            let sampler = DiscreteSampler::new(&p0)?;
            let driver = LimitDriver::new(sol)?;
            let w0 = sampler.sample(&mut rng);
            let w = simulate_path(&driver, w0, obs, &mut rng)?;
            json!({"kind": "limit", "w": w})
        }
    };
    write_meta(out, "replay-seed", path_seed, cfg, summary.clone())?;
    Ok(summary)
}

/// Parses a decimal or `0x`-prefixed hexadecimal seed.
pub fn parse_seed(s: &str) -> Result<u64> {
    let r = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(h) => u64::from_str_radix(h, 16),
        None => s.parse(),
    };
    r.map_err(|_| Error::Config(format!("bad seed {s:?}")))
}
