//! Configuration, seeding, ensemble orchestration and the convergence and
//! coarsening experiments.
//!
//! Path `p` of an ensemble always runs on `derive_seed(master, p)` and
//! results are gathered by index, so outputs do not depend on the number of
//! worker threads.

pub mod commands;
pub mod config;
pub mod output;

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

pub use crate::seed::derive_seed;
pub use config::ExperimentConfig;

use crate::error::{Error, Result};
use crate::ips::IpsSimulator;
use crate::kernel::RateKernel;
use crate::limit::{self, DiscreteSampler, LimitDriver, LimitEnsemble};
use crate::meanfield::{self, MeanFieldSolution};
use crate::seed::path_rng;
use crate::state::{sample_background, sample_initial, ClassConfig, InitScheme, TagPlacement};
use crate::stats::{mean_se, ols_slope, total_variation};
use crate::tagged::TaggedSimulator;

/// Runs `f` once per path in parallel. A failing path aborts the ensemble
/// with its index and seed attached.
pub fn run_ensemble<T, F>(n_paths: usize, master_seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng) -> Result<T> + Sync,
{
    (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(master_seed, p as u64);
            f(&mut rng).map_err(|e| Error::Path {
                index: p,
                seed: derive_seed(master_seed, p as u64),
                source: Box::new(e),
            })
        })
        .collect()
}

fn horizon(t_obs: &[f64]) -> f64 {
    t_obs.last().copied().unwrap_or(0.0)
}

/// One untagged path from `N` iid uniform particles.
pub fn ips_path(kernel: &RateKernel, sites: u64, particles: u64, t_obs: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<ClassConfig>> {
    let occ = sample_background(sites, particles, rng);
    let cfg = ClassConfig::from_occupations(&occ)?;
    let mut sim = IpsSimulator::new(cfg, kernel.clone())?;
    Ok(sim.simulate(horizon(t_obs), t_obs, rng)?.configs)
}

/// One tagged path; returns `W` and the full configuration per time.
pub fn tagged_path(
    kernel: &RateKernel,
    sites: u64,
    particles: u64,
    scheme: InitScheme,
    t_obs: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<u64>, Vec<ClassConfig>)> {
    let st = sample_initial(sites, particles, scheme, rng)?;
    let mut sim = TaggedSimulator::new(st, kernel.clone())?;
    let tr = sim.simulate(horizon(t_obs), t_obs, rng)?;
    Ok((tr.w, tr.configs))
}

fn class_law(configs: impl Iterator<Item = Vec<u64>>, n: usize) -> BTreeMap<Vec<u64>, f64> {
    let mut law = BTreeMap::new();
    for c in configs {
        *law.entry(c).or_insert(0.0) += 1.0 / n as f64;
    }
    law
}

/// Mean and standard error of `F_k` (or `P_k` when `size_biased`) over paths.
fn mean_measure<'a>(configs: impl Iterator<Item = &'a ClassConfig>, n: usize, size_biased: bool) -> (Vec<f64>, Vec<f64>) {
    let mut s1: Vec<f64> = Vec::new();
    let mut s2: Vec<f64> = Vec::new();
    for c in configs {
        let m = c.empirical_measure();
        let f = if size_biased { m.p.unwrap_or_default() } else { m.f };
        if f.len() > s1.len() {
            s1.resize(f.len(), 0.0);
            s2.resize(f.len(), 0.0);
        }
        for (k, v) in f.iter().enumerate() {
            s1[k] += v;
            s2[k] += v * v;
        }
    }
    let nf = n as f64;
    let mean: Vec<f64> = s1.iter().map(|s| s / nf).collect();
    let se = s2
        .iter()
        .zip(&mean)
        .map(|(s, m)| (((s - nf * m * m) / (nf - 1.0).max(1.0)).max(0.0) / nf).sqrt())
        .collect();
    (mean, se)
}

#[derive(Clone, Debug)]
pub struct IpsEnsemble {
    pub sites: u64,
    pub particles: u64,
    pub times: Vec<f64>,
    /// `configs[p][i]`: path `p` at `times[i]`.
    pub configs: Vec<Vec<ClassConfig>>,
}

impl IpsEnsemble {
    pub fn mean_f(&self, i: usize) -> (Vec<f64>, Vec<f64>) {
        mean_measure(self.configs.iter().map(|p| &p[i]), self.configs.len(), false)
    }

    pub fn class_law(&self, i: usize) -> BTreeMap<Vec<u64>, f64> {
        class_law(self.configs.iter().map(|p| p[i].counts().to_vec()), self.configs.len())
    }

    /// Ensemble means of `m_1, m_2, m_3`.
    pub fn moments(&self, i: usize) -> Result<[f64; 3]> {
        let mut out = [0.0; 3];
        for p in &self.configs {
            for (n, o) in out.iter_mut().enumerate() {
                *o += p[i].moment(n as u32 + 1)?;
            }
        }
        Ok(out.map(|v| v / self.configs.len() as f64))
    }
}

pub fn run_ips(kernel: &RateKernel, sites: u64, particles: u64, t_obs: &[f64], n_paths: usize, seed: u64) -> Result<IpsEnsemble> {
    let configs = run_ensemble(n_paths, seed, |rng| ips_path(kernel, sites, particles, t_obs, rng))?;
    Ok(IpsEnsemble {
        sites,
        particles,
        times: t_obs.to_vec(),
        configs,
    })
}

#[derive(Clone, Debug)]
pub struct TaggedEnsemble {
    pub sites: u64,
    pub particles: u64,
    pub times: Vec<f64>,
    /// `w[p][i]`
    pub w: Vec<Vec<u64>>,
    pub configs: Vec<Vec<ClassConfig>>,
}

impl TaggedEnsemble {
    /// Law of `W` at `times[i]` with per-entry standard errors.
    pub fn w_law(&self, i: usize) -> (Vec<f64>, Vec<f64>) {
        let n = self.w.len() as f64;
        let mut law: Vec<f64> = Vec::new();
        for p in &self.w {
            let k = p[i] as usize;
            if law.len() <= k {
                law.resize(k + 1, 0.0);
            }
            law[k] += 1.0 / n;
        }
        let se = law.iter().map(|q| (q * (1.0 - q) / n).sqrt()).collect();
        (law, se)
    }

    /// Law of `W` at `times[i]` estimated from every particle: when the tag
    /// is placed like an ordinary particle (`fixed` or `uniform`), it is
    /// exchangeable with the others and `P(W = k) = E[k n_k / N]`. Same law
    /// as [`w_law`](Self::w_law), much smaller variance.
    pub fn w_law_exchangeable(&self, i: usize) -> (Vec<f64>, Vec<f64>) {
        mean_measure(self.configs.iter().map(|p| &p[i]), self.configs.len(), true)
    }

    /// `(E W, se, E W^2, se)`
    pub fn w_moments(&self, i: usize) -> (f64, f64, f64, f64) {
        let w1: Vec<f64> = self.w.iter().map(|p| p[i] as f64).collect();
        let w2: Vec<f64> = w1.iter().map(|x| x * x).collect();
        let (a, sa) = mean_se(&w1);
        let (b, sb) = mean_se(&w2);
        (a, sa, b, sb)
    }

    pub fn class_law(&self, i: usize) -> BTreeMap<Vec<u64>, f64> {
        class_law(self.configs.iter().map(|p| p[i].counts().to_vec()), self.configs.len())
    }
}

pub fn run_tagged(
    kernel: &RateKernel,
    sites: u64,
    particles: u64,
    scheme: InitScheme,
    t_obs: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<TaggedEnsemble> {
    let paths = run_ensemble(n_paths, seed, |rng| tagged_path(kernel, sites, particles, scheme, t_obs, rng))?;
    let (w, configs) = paths.into_iter().unzip();
    Ok(TaggedEnsemble {
        sites,
        particles,
        times: t_obs.to_vec(),
        w,
        configs,
    })
}

/// Initial law of the mean-field equations: the configured CSV or
/// Poisson(rho).
pub fn initial_f(cfg: &ExperimentConfig) -> Result<Vec<f64>> {
    match &cfg.meanfield.f0 {
        Some(p) => output::read_f0(&cfg.resolve(p)),
        None => meanfield::poisson(cfg.system.rho),
    }
}

pub fn solve_meanfield(cfg: &ExperimentConfig) -> Result<MeanFieldSolution> {
    let kernel = cfg.kernel()?;
    let f0 = initial_f(cfg)?;
    meanfield::integrate(&f0, &kernel, &cfg.meanfield_grid(), cfg.meanfield_params())
}

/// Limit-chain ensemble started from `size_bias(f(0))`.
pub fn run_limit(sol: &MeanFieldSolution, t_obs: &[f64], n_paths: usize, seed: u64) -> Result<LimitEnsemble> {
    let p0 = meanfield::size_bias(&sol.states()[0], sol.rho())?;
    let sampler = DiscreteSampler::new(&p0)?;
    let driver = LimitDriver::new(sol.clone())?;
    limit::ensemble_law(&driver, &sampler, t_obs, n_paths, seed)
}

/// `0.5 * sum_k E|pbar_k - p_k|` for pure multinomial noise: the TV floor of
/// an `n`-sample histogram of `p`.
pub fn tv_noise_floor(p: &[f64], n: usize) -> f64 {
    let nf = n as f64;
    0.5 * p
        .iter()
        .map(|&q| (2.0 * q * (1.0 - q) / (std::f64::consts::PI * nf)).sqrt())
        .sum::<f64>()
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceRow {
    pub sites: u64,
    pub particles: u64,
    pub t: f64,
    pub err1: Option<f64>,
    /// Expected `err1` from sampling noise alone.
    pub err1_noise: Option<f64>,
    pub err_w: Option<f64>,
    pub err_w_noise: Option<f64>,
    /// `errW` from [`TaggedEnsemble::w_law_exchangeable`]; absent for the
    /// `max` tag placement.
    pub err_w_exch: Option<f64>,
    pub err_w_exch_noise: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    /// Per observation time: slope of `ln err1` against `ln L`. The `errW`
    /// slope and trend use the exchangeable estimate when available.
    pub slope1: Vec<Option<f64>>,
    pub slope_w: Vec<Option<f64>>,
    /// Errors decrease along the size list, up to one noise unit.
    pub decreasing1: Vec<Option<bool>>,
    pub decreasing_w: Vec<Option<bool>>,
}

impl ConvergenceReport {
    fn series(&self, t_index: usize, n_times: usize, pick: impl Fn(&ConvergenceRow) -> Option<(f64, f64)>) -> Vec<(u64, f64, f64)> {
        self.rows
            .iter()
            .skip(t_index)
            .step_by(n_times)
            .filter_map(|r| pick(r).map(|(e, s)| (r.sites, e, s)))
            .collect()
    }
}

fn slope_and_trend(series: &[(u64, f64, f64)], strict: bool) -> (Option<f64>, Option<bool>) {
    if series.len() < 2 {
        return (None, None);
    }
    let pts: Vec<(f64, f64)> = series.iter().map(|(l, e, _)| ((*l as f64).ln(), e.ln())).collect();
    let dec = series.windows(2).all(|w| {
        let slack = if strict { 0.0 } else { w[1].2 };
        w[1].1 < w[0].1 + slack
    });
    (Some(ols_slope(&pts)), Some(dec))
}

/// For every configured `L`: `err1 = sum_k |mean F_k - f_k(t)|` and
/// `errW = TV(law W(t), p(t))` at each observation time.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceReport> {
    let kernel = cfg.kernel()?;
    let sol = solve_meanfield(cfg)?;
    let obs = &cfg.run.obs;
    let n = cfg.run.n_paths;
    let mut rows = Vec::new();
    for (li, &l) in cfg.system.sites.iter().enumerate() {
        let particles = cfg.particles(l);
        let seed = derive_seed(cfg.run.seed, li as u64);
        let ips = if cfg.convergence.empirical {
            Some(run_ips(&kernel, l, particles, obs, n, seed)?)
        } else {
            None
        };
        let tagged = if cfg.convergence.tagged {
            Some(run_tagged(&kernel, l, particles, cfg.init_scheme(), obs, n, seed ^ 0x5A5A_5A5A)?)
        } else {
            None
        };
        for (i, &t) in obs.iter().enumerate() {
            let f = sol.f_at(t)?;
            let p = sol.p_at(t)?;
            let (err1, err1_noise) = match &ips {
                Some(e) => {
                    let (mean, se) = e.mean_f(i);
                    let m = mean.len().max(f.len());
                    let err: f64 = (0..m)
                        .map(|k| (mean.get(k).copied().unwrap_or(0.0) - f.get(k).copied().unwrap_or(0.0)).abs())
                        .sum();
                    let noise = se.iter().sum::<f64>() * (2.0 / std::f64::consts::PI).sqrt();
                    (Some(err), Some(noise))
                }
                None => (None, None),
            };
            let (err_w, err_w_noise) = match &tagged {
                Some(e) => {
                    let (law, _) = e.w_law(i);
                    (Some(total_variation(&law, &p)), Some(tv_noise_floor(&p, n)))
                }
                None => (None, None),
            };
            let (err_w_exch, err_w_exch_noise) = match &tagged {
                Some(e) if cfg.system.tag != TagPlacement::Max => {
                    let (law, se) = e.w_law_exchangeable(i);
                    let noise = 0.5 * se.iter().sum::<f64>() * (2.0 / std::f64::consts::PI).sqrt();
                    (Some(total_variation(&law, &p)), Some(noise))
                }
                _ => (None, None),
            };
            rows.push(ConvergenceRow {
                sites: l,
                particles,
                t,
                err1,
                err1_noise,
                err_w,
                err_w_noise,
                err_w_exch,
                err_w_exch_noise,
            });
        }
    }
    let mut report = ConvergenceReport {
        rows,
        slope1: vec![],
        slope_w: vec![],
        decreasing1: vec![],
        decreasing_w: vec![],
    };
    for i in 0..obs.len() {
        let s1 = report.series(i, obs.len(), |r| r.err1.zip(r.err1_noise));
        let sw = report.series(i, obs.len(), |r| {
            r.err_w_exch.zip(r.err_w_exch_noise).or(r.err_w.zip(r.err_w_noise))
        });
        let (a, b) = slope_and_trend(&s1, false);
        let (c, d) = slope_and_trend(&sw, false);
        report.slope1.push(a);
        report.decreasing1.push(b);
        report.slope_w.push(c);
        report.decreasing_w.push(d);
    }
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct CoarseningRow {
    pub t: f64,
    pub mean_what: f64,
    pub se_what: f64,
    /// `m2(t) / rho` from the mean-field solution.
    pub m2_over_rho: f64,
    pub rel_gap: f64,
    /// `|E W - m2/rho|` in standard errors.
    pub z: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CoarseningReport {
    pub rows: Vec<CoarseningRow>,
    /// Slope of `ln m2` against `ln t` over positive observation times.
    pub exponent: Option<f64>,
}

/// Tabulates `E What(t)` against `m2(t) / rho`.
pub fn run_coarsening(cfg: &ExperimentConfig) -> Result<CoarseningReport> {
    let sol = solve_meanfield(cfg)?;
    let obs = &cfg.run.obs;
    let ens = run_limit(&sol, obs, cfg.run.n_paths, cfg.run.seed)?;
    let mut rows = Vec::new();
    let mut pts = Vec::new();
    for (i, &t) in obs.iter().enumerate() {
        let f = sol.f_at(t)?;
        let m2 = meanfield::moment(&f, 2);
        let target = m2 / sol.rho();
        let gap = ens.mean[i] - target;
        rows.push(CoarseningRow {
            t,
            mean_what: ens.mean[i],
            se_what: ens.mean_se[i],
            m2_over_rho: target,
            rel_gap: gap / target,
            z: if ens.mean_se[i] > 0.0 { gap.abs() / ens.mean_se[i] } else { f64::INFINITY * gap.abs() },
        });
        if t > 0.0 {
            pts.push((t.ln(), m2.ln()));
        }
    }
    let exponent = (pts.len() >= 2).then(|| ols_slope(&pts));
    Ok(CoarseningReport { rows, exponent })
}
