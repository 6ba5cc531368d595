//! The time-inhomogeneous limit chain of the tagged occupation.
//!
//! From `w` the chain jumps to `w + 1` at rate `beta_w(t)`, to `w - 1` at
//! `(w-1)/w * mu_w(t)` and to `k >= 1` at `c(w, k-1) f_{k-1}(t) / w`, with
//! `f(t)` interpolated linearly from a [`MeanFieldSolution`]. Since all rates
//! are linear in `f`, they are linear in `t` on each grid segment, which
//! makes the thinning envelope (the larger endpoint value times a safety
//! factor) a true bound.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{KernelFamily, RateKernel};
use crate::meanfield::{MeanFieldSolution, RateEvaluator};
use crate::seed::{derive_seed, path_rng};

pub use crate::stats::total_variation;

/// Safety factor applied to the per-segment rate maximum.
pub const ENVELOPE_FACTOR: f64 = 1.05;

/// Rates out of `w` at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct LimitRates {
    pub w: u64,
    pub birth: f64,
    pub death: f64,
    /// `long_range[k]` is the rate of `w -> k`; entry 0 is always 0.
    pub long_range: Vec<f64>,
    /// `mu_w(t)`, kept for the identity check.
    pub mu: f64,
}

impl LimitRates {
    pub fn long_range_total(&self) -> f64 {
        self.long_range.iter().sum()
    }

    pub fn total(&self) -> f64 {
        self.birth + self.death + self.long_range_total()
    }
}

/// Rate decomposition at `(w, t)` from the interpolated `f(t)`. Fails if the
/// long-range total misses `mu_w(t) / w` by more than `1e-12` relative.
pub fn limit_rates(w: u64, t: f64, sol: &MeanFieldSolution) -> Result<LimitRates> {
    if w == 0 {
        return Err(Error::InvalidParameter("limit chain state must be >= 1".into()));
    }
    let f = sol.f_at(t)?;
    let kernel = sol.kernel();
    let wi = w as usize;
    kernel.ensure_covers(wi.max(f.len() - 1))?;
    let ev = RateEvaluator::new(&f, kernel);
    let wf = w as f64;
    let mu = ev.mu(wi);
    let mut long_range = vec![0.0; f.len() + 1];
    for (l, fl) in f.iter().enumerate() {
        long_range[l + 1] = kernel.rate(wi, l) * fl / wf;
    }
    let out = LimitRates {
        w,
        birth: ev.beta(wi),
        death: (wf - 1.0) / wf * mu,
        long_range,
        mu,
    };
    let lr = out.long_range_total();
    let want = mu / wf;
    if (lr - want).abs() > 1e-12 * want.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::Invariant(format!(
            "long-range total {lr} differs from mu_w / w = {want} at w = {w}, t = {t}"
        )));
    }
    Ok(out)
}

/// Per-node data for constant-time rate evaluation.
#[derive(Clone, Debug)]
struct Node {
    f: Vec<f64>,
    cum_f: Vec<f64>,
    cum_lf: Vec<f64>,
    mass: f64,
    mean: f64,
    zr_birth: f64,
}

impl Node {
    fn new(f: &[f64], kernel: &RateKernel) -> Self {
        let mut cum_f = Vec::with_capacity(f.len());
        let mut cum_lf = Vec::with_capacity(f.len());
        let (mut a, mut b) = (0.0, 0.0);
        for (l, v) in f.iter().enumerate() {
            a += v;
            b += l as f64 * v;
            cum_f.push(a);
            cum_lf.push(b);
        }
        let zr_birth = match kernel.family() {
            KernelFamily::ZeroRange { b } => f
                .iter()
                .enumerate()
                .skip(1)
                .map(|(l, v)| (1.0 + b / l as f64) * v)
                .sum(),
            _ => 0.0,
        };
        Self {
            f: f.to_vec(),
            mass: a,
            mean: b,
            cum_f,
            cum_lf,
            zr_birth,
        }
    }

    /// `(mu_w, beta_w)`
    fn rates(&self, w: usize, kernel: &RateKernel) -> (f64, f64) {
        let wf = w as f64;
        match kernel.family() {
            KernelFamily::IndependentWalkers => (wf * self.mass, self.mean),
            KernelFamily::ZeroRange { b } => ((1.0 + b / wf) * self.mass, self.zr_birth),
            KernelFamily::Inclusion { d } => (wf * (d * self.mass + self.mean), (d + wf) * self.mean),
            KernelFamily::Table(_) => {
                let ev = RateEvaluator::new(&self.f, kernel);
                (ev.mu(w), ev.beta(w))
            }
        }
    }

    /// Draws `l` with probability proportional to `c(w, l) f_l`.
    fn pick_partner<R: Rng + ?Sized>(&self, w: usize, kernel: &RateKernel, rng: &mut R) -> usize {
        let search = |cum: &[f64], u: f64| cum.partition_point(|&c| c <= u).min(cum.len() - 1);
        match kernel.family() {
            KernelFamily::IndependentWalkers | KernelFamily::ZeroRange { .. } => {
                search(&self.cum_f, rng.random::<f64>() * self.mass)
            }
            KernelFamily::Inclusion { d } => {
                let u = rng.random::<f64>() * (d * self.mass + self.mean);
                if u < d * self.mass {
                    search(&self.cum_f, u / d)
                } else {
                    search(&self.cum_lf, u - d * self.mass)
                }
            }
            KernelFamily::Table(_) => {
                let weights: Vec<f64> = self.f.iter().enumerate().map(|(l, v)| kernel.rate(w, l) * v).collect();
                let total: f64 = weights.iter().sum();
                crate::ips::pick(&weights, rng.random::<f64>() * total)
            }
        }
    }
}

/// A mean-field solution prepared for driving limit-chain paths. Immutable
/// and shareable across worker threads.
#[derive(Clone, Debug)]
pub struct LimitDriver {
    sol: MeanFieldSolution,
    nodes: Vec<Node>,
    max_class: usize,
}

impl LimitDriver {
    pub fn new(sol: MeanFieldSolution) -> Result<Self> {
        let kernel = sol.kernel().clone();
        let nodes: Vec<Node> = sol.states().iter().map(|f| Node::new(f, &kernel)).collect();
        let max_class = nodes.iter().map(|n| n.f.len()).max().unwrap_or(0);
        kernel.ensure_covers(max_class.saturating_sub(1))?;
        Ok(Self { sol, nodes, max_class })
    }

    pub fn solution(&self) -> &MeanFieldSolution {
        &self.sol
    }

    fn kernel(&self) -> &RateKernel {
        self.sol.kernel()
    }

    fn node_rate(&self, w: usize, i: usize) -> (f64, f64) {
        self.nodes[i].rates(w, self.kernel())
    }

    /// `beta_w(t) + mu_w(t)`
    pub fn total_rate(&self, w: u64, t: f64) -> Result<f64> {
        let (i, theta) = self.sol.locate(t)?;
        let (m0, b0) = self.node_rate(w as usize, i);
        if theta == 0.0 {
            return Ok(m0 + b0);
        }
        let (m1, b1) = self.node_rate(w as usize, i + 1);
        Ok((1.0 - theta) * (m0 + b0) + theta * (m1 + b1))
    }

    fn check_state(&self, w: u64) -> Result<()> {
        if w == 0 {
            return Err(Error::InvalidParameter("limit chain state must be >= 1".into()));
        }
        self.kernel().ensure_covers((w as usize).max(self.max_class.saturating_sub(1)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LimitChainState {
    pub w: u64,
    pub t: f64,
}

/// Advances `state` to its next jump or to `t_stop`, whichever comes first.
/// Returns whether a jump happened.
pub fn step_limit<R: Rng + ?Sized>(
    state: &mut LimitChainState,
    driver: &LimitDriver,
    t_stop: f64,
    rng: &mut R,
) -> Result<bool> {
    driver.check_state(state.w)?;
    let grid = driver.sol.grid();
    if t_stop > driver.sol.t_end() {
        return Err(Error::Range(format!(
            "t = {t_stop} beyond mean-field horizon {}",
            driver.sol.t_end()
        )));
    }
    let w = state.w as usize;
    let kernel = driver.kernel();
    while state.t < t_stop {
        let (i, _) = driver.sol.locate(state.t)?;
        let (seg_end, envelope) = if i + 1 < grid.len() {
            let (m0, b0) = driver.node_rate(w, i);
            let (m1, b1) = driver.node_rate(w, i + 1);
            (grid[i + 1].min(t_stop), ENVELOPE_FACTOR * (m0 + b0).max(m1 + b1))
        } else {
            let (m0, b0) = driver.node_rate(w, i);
            (t_stop, ENVELOPE_FACTOR * (m0 + b0))
        };
        if envelope <= 0.0 {
            state.t = seg_end;
            continue;
        }
        let e: f64 = Exp1.sample(rng);
        let cand = state.t + e / envelope;
        if cand >= seg_end {
            state.t = seg_end;
            continue;
        }
        state.t = cand;
        let (j, theta) = driver.sol.locate(cand)?;
        let (m0, b0) = driver.node_rate(w, j);
        let (m1, b1) = if theta > 0.0 { driver.node_rate(w, j + 1) } else { (m0, b0) };
        let mu = (1.0 - theta) * m0 + theta * m1;
        let beta = (1.0 - theta) * b0 + theta * b1;
        let rate = mu + beta;
        if rate > envelope {
            return Err(Error::EnvelopeViolated { t: cand, rate, bound: envelope });
        }
        let u = rng.random::<f64>() * envelope;
        if u >= rate {
            continue;
        }
        let wf = w as f64;
        if u < beta {
            state.w += 1;
        } else if u < beta + (wf - 1.0) / wf * mu {
            state.w -= 1;
        } else {
            // long range: mixture of the two bracketing nodes
            let side = if theta > 0.0 && rng.random::<f64>() * mu < theta * m1 { j + 1 } else { j };
            let l = driver.nodes[side].pick_partner(w, kernel, rng);
            state.w = l as u64 + 1;
        }
        return Ok(true);
    }
    Ok(false)
}

/// One path from `w0` at the solution's start time, observed at `t_obs`.
pub fn simulate_path<R: Rng + ?Sized>(
    driver: &LimitDriver,
    w0: u64,
    t_obs: &[f64],
    rng: &mut R,
) -> Result<Vec<u64>> {
    let mut st = LimitChainState {
        w: w0,
        t: driver.sol.t_start(),
    };
    driver.check_state(w0)?;
    let mut out = Vec::with_capacity(t_obs.len());
    for &t in t_obs {
        if t < st.t {
            return Err(Error::InvalidParameter("observation times must be sorted and within the horizon".into()));
        }
        while step_limit(&mut st, driver, t, rng)? {}
        out.push(st.w);
    }
    Ok(out)
}

/// Inverse-CDF sampler over `{0, 1, ..}` for initial values.
#[derive(Clone, Debug)]
pub struct DiscreteSampler {
    cum: Vec<f64>,
}

impl DiscreteSampler {
    pub fn new(weights: &[f64]) -> Result<Self> {
        let mut acc = 0.0;
        let mut cum = Vec::with_capacity(weights.len());
        for &w in weights {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidParameter("sampler weights must be finite and >= 0".into()));
            }
            acc += w;
            cum.push(acc);
        }
        if !(acc > 0.0) {
            return Err(Error::InvalidParameter("sampler weights sum to zero".into()));
        }
        Ok(Self { cum })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let total = *self.cum.last().unwrap();
        let u = rng.random::<f64>() * total;
        self.cum.partition_point(|&c| c <= u).min(self.cum.len() - 1) as u64
    }
}

/// Histograms and moments of an ensemble at each observation time.
#[derive(Clone, Debug, PartialEq)]
pub struct LimitEnsemble {
    pub times: Vec<f64>,
    pub n_paths: usize,
    /// `counts[i][k]`: paths with `W = k` at `times[i]`.
    pub counts: Vec<Vec<u64>>,
    pub mean: Vec<f64>,
    pub mean_se: Vec<f64>,
    pub second: Vec<f64>,
    pub second_se: Vec<f64>,
    /// Per-path values, `paths[p][i]`.
    pub paths: Vec<Vec<u64>>,
}

impl LimitEnsemble {
    pub fn from_paths(times: Vec<f64>, paths: Vec<Vec<u64>>) -> Self {
        let n = paths.len();
        let nf = n as f64;
        let mut counts = vec![Vec::new(); times.len()];
        let (mut mean, mut mean_se, mut second, mut second_se) = (vec![], vec![], vec![], vec![]);
        for (i, hist) in counts.iter_mut().enumerate() {
            let (mut s1, mut s2, mut s4) = (0.0, 0.0, 0.0);
            for p in &paths {
                let w = p[i];
                if hist.len() <= w as usize {
                    hist.resize(w as usize + 1, 0);
                }
                hist[w as usize] += 1;
                let x = w as f64;
                s1 += x;
                s2 += x * x;
                s4 += x * x * x * x;
            }
            let m1 = s1 / nf;
            let m2 = s2 / nf;
            let denom = (nf - 1.0).max(1.0);
            mean.push(m1);
            mean_se.push((((s2 - nf * m1 * m1) / denom).max(0.0) / nf).sqrt());
            second.push(m2);
            second_se.push((((s4 - nf * m2 * m2) / denom).max(0.0) / nf).sqrt());
        }
        Self {
            times,
            n_paths: n,
            counts,
            mean,
            mean_se,
            second,
            second_se,
            paths,
        }
    }

    /// Empirical law at `times[i]`.
    pub fn law(&self, i: usize) -> Vec<f64> {
        self.counts[i].iter().map(|&c| c as f64 / self.n_paths as f64).collect()
    }
}

/// Runs `n_paths` independent chains from `w0 ~ sampler`; path `p` uses seed
/// `derive_seed(master_seed, p)`.
pub fn ensemble_law(
    driver: &LimitDriver,
    sampler: &DiscreteSampler,
    t_obs: &[f64],
    n_paths: usize,
    master_seed: u64,
) -> Result<LimitEnsemble> {
    let paths: Vec<Vec<u64>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(master_seed, p as u64);
            let w0 = sampler.sample(&mut rng);
            simulate_path(driver, w0, t_obs, &mut rng).map_err(|e| Error::Path {
                index: p,
                seed: derive_seed(master_seed, p as u64),
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    Ok(LimitEnsemble::from_paths(t_obs.to_vec(), paths))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meanfield::{self, MeanFieldParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn frozen(f: Vec<f64>, kernel: RateKernel, t_end: f64) -> MeanFieldSolution {
        MeanFieldSolution::from_states(kernel, vec![0.0, t_end], vec![f.clone(), f]).unwrap()
    }

    #[test]
    fn single_particle_examples() {
        let sol = frozen(vec![0.0, 1.0], RateKernel::independent_walkers(), 1.0);
        let r = limit_rates(3, 0.5, &sol).unwrap();
        assert_eq!(r.birth, 1.0);
        assert_eq!(r.death, 2.0);
        assert_eq!(r.long_range[2], 1.0);
        assert_eq!(r.long_range_total(), 1.0);
        let r1 = limit_rates(1, 0.5, &sol).unwrap();
        assert_eq!(r1.death, 0.0);
        assert_eq!(r1.long_range_total(), r1.mu);
        assert!(limit_rates(3, 2.0, &sol).is_err());
    }

    #[test]
    fn rates_sum_to_birth_plus_death() {
        let f0 = meanfield::poisson(2.0).unwrap();
        let kernel = RateKernel::zero_range(4.0).unwrap();
        let sol = meanfield::integrate(&f0, &kernel, &[0.0, 0.5, 1.0], MeanFieldParams::default()).unwrap();
        let driver = LimitDriver::new(sol.clone()).unwrap();
        for w in 1..30 {
            for t in [0.0, 0.3, 0.5, 0.77, 1.0] {
                let r = limit_rates(w, t, &sol).unwrap();
                let total = r.birth + r.mu;
                assert!((r.total() - total).abs() < 1e-12 * total);
                let fast = driver.total_rate(w, t).unwrap();
                assert!((fast - total).abs() < 1e-12 * total, "w={w} t={t}");
            }
        }
    }

    #[test]
    fn frozen_law_first_jump_is_exponential() {
        let f = meanfield::poisson(1.0).unwrap();
        let sol = frozen(f, RateKernel::zero_range(2.0).unwrap(), 100.0);
        let rate = limit_rates(2, 0.0, &sol).map(|r| r.total()).unwrap();
        let driver = LimitDriver::new(sol).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 50_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let mut st = LimitChainState { w: 2, t: 0.0 };
            assert!(step_limit(&mut st, &driver, 100.0, &mut rng).unwrap());
            sum += st.t;
            sumsq += st.t * st.t;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        let se = (1.0 / rate) / (n as f64).sqrt();
        assert!((mean - 1.0 / rate).abs() < 4.0 * se, "{mean} vs {}", 1.0 / rate);
        // Exp: variance = mean^2
        assert!((var / (mean * mean) - 1.0).abs() < 0.05);
    }

    #[test]
    fn degenerate_start() {
        let sol = frozen(vec![0.0, 1.0], RateKernel::independent_walkers(), 1.0);
        let driver = LimitDriver::new(sol).unwrap();
        let sampler = DiscreteSampler::new(&[0.0, 1.0]).unwrap();
        let ens = ensemble_law(&driver, &sampler, &[0.0], 100, 1).unwrap();
        assert_eq!(ens.counts[0], vec![0, 100]);
        assert_eq!(ens.mean[0], 1.0);
    }

    #[test]
    fn stays_positive_and_is_reproducible() {
        let f0 = meanfield::poisson(2.0).unwrap();
        let kernel = RateKernel::inclusion(0.5).unwrap();
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.05).collect();
        let sol = meanfield::integrate(&f0, &kernel, &grid, MeanFieldParams::default()).unwrap();
        let p0 = meanfield::size_bias(&sol.states()[0], sol.rho()).unwrap();
        let driver = LimitDriver::new(sol).unwrap();
        let sampler = DiscreteSampler::new(&p0).unwrap();
        let a = ensemble_law(&driver, &sampler, &[0.5, 1.0], 500, 11).unwrap();
        let b = ensemble_law(&driver, &sampler, &[0.5, 1.0], 500, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.paths.iter().flatten().all(|&w| w >= 1));
    }

    #[test]
    fn sampler_examples() {
        assert!(DiscreteSampler::new(&[0.0, 0.0]).is_err());
        let s = DiscreteSampler::new(&[0.0, 0.0, 3.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!((0..100).all(|_| s.sample(&mut rng) == 2));
    }
}
