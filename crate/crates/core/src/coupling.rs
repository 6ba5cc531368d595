//! The dominating process `Wbar` and its coupling to the tagged occupation.
//!
//! `Wbar` jumps `n -> n+1` at rate `Cbar n` with `Cbar = 2C(1+3 rho)` and
//! `n -> 2n+k` at rate `2C(1+k) F_k`, where `F` is the empirical measure of
//! the live configuration. Writing `Wbar = W + D`, the `+1` clock splits into
//! a part of rate `Cbar W`, which carries every birth and death of `W`, and a
//! part of rate `Cbar D`, which only grows the excess. The doubling clock
//! carries the relocations of the tag. The excess between two main events is
//! a Yule process and is advanced in one negative-binomial draw.
//!
//! `Wbar` grows doubly exponentially and overflows 64-bit integers within
//! unit times, so it is held as `f64`. Values are exact below `2^53`.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, Poisson, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::RateKernel;
use crate::seed::{derive_seed, path_rng};
use crate::stats::{mean_se, ols_slope};
use crate::state::{sample_initial, ClassConfig, InitScheme, TaggedState};
use crate::tagged::{TaggedEvent, TaggedSimulator};

fn exp1<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Exp1.sample(rng)
}

/// `2C(1+3 rho)`
pub fn cbar(kernel: &RateKernel, rho: f64) -> f64 {
    2.0 * kernel.bound() * (1.0 + 3.0 * rho)
}

/// Total jump rate of `Wbar` from `w` in configuration `cfg`:
/// `Cbar w + 2C(1 + N/L)`.
pub fn exit_rate_bar(w: f64, cfg: &ClassConfig, kernel: &RateKernel, rho: f64) -> f64 {
    let density = cfg.particles() as f64 / cfg.sites() as f64;
    cbar(kernel, rho) * w + 2.0 * kernel.bound() * (1.0 + density)
}

/// Per-event rates of `Wbar`.
#[derive(Clone, Debug, PartialEq)]
pub struct DominatingRates {
    /// `n -> n+1`
    pub plus_one: f64,
    /// `doubling[k]`: `n -> 2n+k`
    pub doubling: Vec<f64>,
}

impl DominatingRates {
    pub fn total(&self) -> f64 {
        self.plus_one + self.doubling.iter().sum::<f64>()
    }
}

pub fn dominating_event_rates(w: f64, cfg: &ClassConfig, kernel: &RateKernel, rho: f64) -> DominatingRates {
    let c = kernel.bound();
    let l = cfg.sites() as f64;
    DominatingRates {
        plus_one: cbar(kernel, rho) * w,
        doubling: cfg
            .counts()
            .iter()
            .enumerate()
            .map(|(k, &n)| 2.0 * c * (1.0 + k as f64) * n as f64 / l)
            .collect(),
    }
}

/// `d + NB(d, e^{-rate * tau})`: a Yule process of per-individual rate
/// `rate` started from `d`, after time `tau`.
pub fn yule_advance<R: Rng + ?Sized>(d: f64, rate: f64, tau: f64, rng: &mut R) -> Result<f64> {
    if d <= 0.0 || tau <= 0.0 {
        return Ok(d);
    }
    // odds (1-p)/p of the negative binomial
    let odds = (rate * tau).exp_m1();
    let lambda = Gamma::new(d, odds)
        .map_err(|e| Error::InvalidParameter(format!("negative binomial: {e}")))?
        .sample(rng);
    let extra = if lambda < 1e12 {
        if lambda <= 0.0 {
            0.0
        } else {
            Poisson::new(lambda).map_err(|e| Error::InvalidParameter(format!("{e}")))?.sample(rng)
        }
    } else {
        let z: f64 = StandardNormal.sample(rng);
        (lambda + lambda.sqrt() * z).round().max(0.0)
    };
    let out = d + extra;
    if !out.is_finite() {
        return Err(Error::Overflow(out));
    }
    Ok(out)
}

/// Checks that the tagged rates fit under the dominating ones.
fn check_bounds(sim: &TaggedSimulator, rho: f64, cbar: f64) -> Result<()> {
    let st = sim.state();
    let density = st.particles() as f64 / st.sites() as f64;
    if density > rho * (1.0 + 1e-12) {
        return Err(Error::Invariant(format!("N/L = {density} exceeds rho = {rho}")));
    }
    let w = st.w() as f64;
    let bd = sim.birth_rate() + sim.death_rate();
    if bd > cbar * w * (1.0 + 1e-12) {
        return Err(Error::Invariant(format!(
            "birth + death rate {bd} exceeds Cbar W = {} at W = {w}",
            cbar * w
        )));
    }
    Ok(())
}

/// Doubling-clock weights `(1+k) F_k`, unnormalised (`(1+k) n_k`), over the
/// whole configuration.
fn doubling_weights(st: &TaggedState) -> Vec<f64> {
    let full_top = st.env().max_occupation().max(st.w() as usize);
    (0..=full_top)
        .map(|k| {
            let n = st.env().count(k) + u64::from(k as u64 == st.w());
            (1.0 + k as f64) * n as f64
        })
        .collect()
}

/// Observations of one coupled path.
#[derive(Clone, Debug, PartialEq)]
pub struct CoupledPath {
    pub w: Vec<u64>,
    pub wbar: Vec<f64>,
    /// Paired jumps whose `Wbar` increment fell short of `|dW|`.
    pub increment_violations: u64,
    /// Observation times with `W > Wbar`.
    pub order_violations: u64,
    /// `W` jumps seen (all paired).
    pub w_jumps: u64,
    pub events: u64,
}

impl CoupledPath {
    pub fn violations(&self) -> u64 {
        self.increment_violations + self.order_violations
    }
}

/// The tagged process together with `Wbar`.
#[derive(Clone, Debug)]
pub struct CoupledSimulator {
    sim: TaggedSimulator,
    wbar: f64,
    rho: f64,
    cbar: f64,
    c: f64,
    t: f64,
    increment_violations: u64,
    w_jumps: u64,
    events: u64,
}

impl CoupledSimulator {
    /// Starts with `Wbar(0) = W(0)`.
    pub fn new(st: TaggedState, kernel: RateKernel, rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidDensity(rho));
        }
        let wbar = st.w() as f64;
        let c = kernel.bound();
        let cbar = cbar(&kernel, rho);
        let sim = TaggedSimulator::new(st, kernel)?;
        check_bounds(&sim, rho, cbar)?;
        Ok(Self {
            sim,
            wbar,
            rho,
            cbar,
            c,
            t: 0.0,
            increment_violations: 0,
            w_jumps: 0,
            events: 0,
        })
    }

    pub fn state(&self) -> &TaggedState {
        self.sim.state()
    }

    pub fn w(&self) -> u64 {
        self.sim.state().w()
    }

    pub fn wbar(&self) -> f64 {
        self.wbar
    }

    pub fn cbar(&self) -> f64 {
        self.cbar
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    fn doubling_rate(&self) -> f64 {
        let st = self.sim.state();
        2.0 * self.c * (1.0 + st.particles() as f64 / st.sites() as f64)
    }

    /// Rate of all events other than the excess growth.
    pub fn main_rate(&self) -> f64 {
        self.sim.env_rate() + self.cbar * self.w() as f64 + self.doubling_rate()
    }

    fn record_jump(&mut self, dw: u64, inc: f64) {
        self.w_jumps += u64::from(dw > 0);
        if inc < dw as f64 {
            self.increment_violations += 1;
        }
    }

    fn grow_excess<R: Rng + ?Sized>(&mut self, tau: f64, rng: &mut R) -> Result<()> {
        let w = self.w() as f64;
        let d = self.wbar - w;
        self.wbar = w + yule_advance(d, self.cbar, tau, rng)?;
        Ok(())
    }

    fn fire<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        self.events += 1;
        let env = self.sim.env_rate();
        let w = self.w();
        let paired = self.cbar * w as f64;
        let mut u = rng.random::<f64>() * self.main_rate();
        if u < env {
            let ev = self.sim.env_event(rng);
            self.sim.apply(ev)?;
            return Ok(());
        }
        u -= env;
        if u < paired {
            check_bounds(&self.sim, self.rho, self.cbar)?;
            let birth = self.sim.birth_rate();
            let death = self.sim.death_rate();
            if u < birth {
                self.sim.apply(self.sim.birth_event(u))?;
            } else if u < birth + death {
                self.sim.apply(self.sim.death_event(u - birth))?;
            }
            let dw = self.w().abs_diff(w);
            self.wbar += 1.0;
            self.record_jump(dw, 1.0);
            return Ok(());
        }
        let st = self.sim.state();
        let weights = doubling_weights(st);
        let total: f64 = weights.iter().sum();
        let k = crate::ips::pick(&weights, rng.random::<f64>() * total);
        let bound = 2.0 * self.c * weights[k] / st.sites() as f64;
        let reloc = self.sim.relocation_rate(k);
        if reloc > bound * (1.0 + 1e-12) {
            return Err(Error::Invariant(format!(
                "relocation rate {reloc} into class {k} exceeds its bound {bound}"
            )));
        }
        if rng.random::<f64>() * bound < reloc {
            self.sim.apply(TaggedEvent::Relocate { to: k })?;
        }
        let inc = self.wbar + k as f64;
        self.wbar = 2.0 * self.wbar + k as f64;
        if !self.wbar.is_finite() {
            return Err(Error::Overflow(self.t));
        }
        let dw = self.w().abs_diff(w);
        self.record_jump(dw, inc);
        Ok(())
    }

    /// Runs to each observation time in turn.
    pub fn simulate<R: Rng + ?Sized>(&mut self, t_obs: &[f64], rng: &mut R) -> Result<CoupledPath> {
        let mut out = CoupledPath {
            w: Vec::with_capacity(t_obs.len()),
            wbar: Vec::with_capacity(t_obs.len()),
            increment_violations: 0,
            order_violations: 0,
            w_jumps: 0,
            events: 0,
        };
        let mut next = self.t + exp1(rng) / self.main_rate();
        for &s in t_obs {
            if s < self.t {
                return Err(Error::InvalidParameter("observation times must be sorted and >= 0".into()));
            }
            while next <= s {
                self.grow_excess(next - self.t, rng)?;
                self.t = next;
                self.fire(rng)?;
                next = self.t + exp1(rng) / self.main_rate();
            }
            self.grow_excess(s - self.t, rng)?;
            self.t = s;
            out.w.push(self.w());
            out.wbar.push(self.wbar);
            if self.w() as f64 > self.wbar {
                out.order_violations += 1;
            }
        }
        out.increment_violations = self.increment_violations;
        out.w_jumps = self.w_jumps;
        out.events = self.events;
        Ok(out)
    }
}

/// `Wbar` run on its own next to the tagged process: the whole of `Wbar`
/// grows at rate `Cbar` per unit and doubles on the `2C(1+k)F_k` clocks. Used
/// to check that the coupling leaves the marginal of `Wbar` intact.
pub fn simulate_standalone<R: Rng + ?Sized>(
    st: TaggedState,
    kernel: RateKernel,
    rho: f64,
    t_obs: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    let cb = cbar(&kernel, rho);
    let c = kernel.bound();
    let mut wbar = st.w() as f64;
    let mut sim = TaggedSimulator::new(st, kernel)?;
    let doubling = 2.0 * c * (1.0 + sim.particles() as f64 / sim.sites() as f64);
    let mut t = 0.0;
    let mut out = Vec::with_capacity(t_obs.len());
    let rate = |sim: &TaggedSimulator| sim.total_rate() + doubling;
    let mut next = exp1(rng) / rate(&sim);
    for &s in t_obs {
        while next <= s {
            wbar = yule_advance(wbar, cb, next - t, rng)?;
            t = next;
            if rng.random::<f64>() * rate(&sim) < doubling {
                let weights = doubling_weights(sim.state());
                let total: f64 = weights.iter().sum();
                let k = crate::ips::pick(&weights, rng.random::<f64>() * total);
                wbar = 2.0 * wbar + k as f64;
                if !wbar.is_finite() {
                    return Err(Error::Overflow(t));
                }
            } else {
                sim.fire(rng)?;
            }
            next = t + exp1(rng) / rate(&sim);
        }
        wbar = yule_advance(wbar, cb, s - t, rng)?;
        t = s;
        out.push(wbar);
    }
    Ok(out)
}

/// Coupled paths from independent uniform initial conditions with
/// `N = floor(rho L)` particles.
pub fn coupled_ensemble(
    kernel: &RateKernel,
    sites: u64,
    rho: f64,
    scheme: InitScheme,
    t_obs: &[f64],
    n_paths: usize,
    master_seed: u64,
) -> Result<Vec<CoupledPath>> {
    let particles = (rho * sites as f64).floor() as u64;
    (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(master_seed, p as u64);
            let run = |rng: &mut _| {
                let st = sample_initial(sites, particles, scheme, rng)?;
                CoupledSimulator::new(st, kernel.clone(), rho)?.simulate(t_obs, rng)
            };
            run(&mut rng).map_err(|e| Error::Path {
                index: p,
                seed: derive_seed(master_seed, p as u64),
                source: Box::new(e),
            })
        })
        .collect()
}

/// Second moments of `W` and `Wbar` across an ensemble.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentReport {
    pub times: Vec<f64>,
    pub m2_w: Vec<f64>,
    pub m2_w_se: Vec<f64>,
    pub m2_wbar: Vec<f64>,
    pub m2_wbar_se: Vec<f64>,
    /// `m2_w <= m2_wbar` at every time.
    pub ordered: bool,
    pub finite: bool,
    /// Least-squares slope of `ln m2_wbar` against `t`, when at least two
    /// times are positive.
    pub wbar_log_growth: Option<f64>,
}

pub fn moment_monitor(paths: &[CoupledPath], times: &[f64]) -> MomentReport {
    let mut r = MomentReport {
        times: times.to_vec(),
        m2_w: vec![],
        m2_w_se: vec![],
        m2_wbar: vec![],
        m2_wbar_se: vec![],
        ordered: true,
        finite: true,
        wbar_log_growth: None,
    };
    for i in 0..times.len() {
        let w2: Vec<f64> = paths.iter().map(|p| (p.w[i] as f64).powi(2)).collect();
        let wbar2: Vec<f64> = paths.iter().map(|p| p.wbar[i] * p.wbar[i]).collect();
        let (a, sa) = mean_se(&w2);
        let (b, sb) = mean_se(&wbar2);
        r.ordered &= a <= b;
        r.finite &= a.is_finite() && b.is_finite();
        r.m2_w.push(a);
        r.m2_w_se.push(sa);
        r.m2_wbar.push(b);
        r.m2_wbar_se.push(sb);
    }
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(&r.m2_wbar)
        .filter(|(t, m)| **t > 0.0 && m.is_finite() && **m > 0.0)
        .map(|(t, m)| (*t, m.ln()))
        .collect();
    if pts.len() >= 2 {
        r.wbar_log_growth = Some(ols_slope(&pts));
    }
    r
}
