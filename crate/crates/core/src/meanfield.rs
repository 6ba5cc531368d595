//! Mean-field rate equations for the occupation law `f_k(t)` and its
//! size-biased counterpart `p_k(t) = k f_k(t) / rho`.
//!
//! Both are master equations of nonlinear birth-death chains with rates
//! `mu_k = sum_l c(k,l) f_l` (death) and `beta_k = sum_{l>=1} c(l,k) f_l`
//! (birth). The infinite hierarchy is truncated at a cutoff `K` with zero
//! flux across `K`; the cutoff grows whenever `f_{K-1} + f_K` exceeds the
//! configured tail threshold.

use crate::error::{Error, Result};
use crate::kernel::{KernelFamily, RateKernel};
use crate::ode::{self, System};

/// Birth and death rates of the nonlinear chain for `k = 0..=K`.
#[derive(Clone, Debug, PartialEq)]
pub struct BirthDeathRates {
    pub mu: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Evaluates `mu_w` and `beta_w` for arbitrary `w` against a fixed `f`.
/// Closed-form kernels reduce to a few moments of `f` and cost `O(1)` per
/// query; tabulated kernels sum over `f`.
#[derive(Clone, Debug)]
pub struct RateEvaluator<'a> {
    kernel: &'a RateKernel,
    f: &'a [f64],
    mass: f64,
    mean: f64,
    zr_birth: f64,
}

impl<'a> RateEvaluator<'a> {
    pub fn new(f: &'a [f64], kernel: &'a RateKernel) -> Self {
        let mass: f64 = f.iter().sum();
        let mean: f64 = f.iter().enumerate().map(|(k, v)| k as f64 * v).sum();
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
            kernel,
            f,
            mass,
            mean,
            zr_birth,
        }
    }

    /// `sum_l c(w, l) f_l`
    #[inline]
    pub fn mu(&self, w: usize) -> f64 {
        if w == 0 {
            return 0.0;
        }
        let wf = w as f64;
        match self.kernel.family() {
            KernelFamily::IndependentWalkers => wf * self.mass,
            KernelFamily::ZeroRange { b } => (1.0 + b / wf) * self.mass,
            KernelFamily::Inclusion { d } => wf * (d * self.mass + self.mean),
            KernelFamily::Table(_) => self
                .f
                .iter()
                .enumerate()
                .map(|(l, v)| self.kernel.rate(w, l) * v)
                .sum(),
        }
    }

    /// `sum_{l>=1} c(l, w) f_l`
    #[inline]
    pub fn beta(&self, w: usize) -> f64 {
        match self.kernel.family() {
            KernelFamily::IndependentWalkers => self.mean,
            KernelFamily::ZeroRange { .. } => self.zr_birth,
            KernelFamily::Inclusion { d } => (d + w as f64) * self.mean,
            KernelFamily::Table(_) => self
                .f
                .iter()
                .enumerate()
                .skip(1)
                .map(|(l, v)| self.kernel.rate(l, w) * v)
                .sum(),
        }
    }
}

pub fn birth_death_rates(f: &[f64], kernel: &RateKernel) -> Result<BirthDeathRates> {
    kernel.ensure_covers(f.len().saturating_sub(1))?;
    let ev = RateEvaluator::new(f, kernel);
    Ok(BirthDeathRates {
        mu: (0..f.len()).map(|k| ev.mu(k)).collect(),
        beta: (0..f.len()).map(|k| ev.beta(k)).collect(),
    })
}

fn rhs_f_into(f: &[f64], rates: &BirthDeathRates, out: &mut [f64]) {
    let top = f.len() - 1;
    for k in 0..=top {
        let inflow_down = if k < top { rates.mu[k + 1] * f[k + 1] } else { 0.0 };
        let inflow_up = if k > 0 { rates.beta[k - 1] * f[k - 1] } else { 0.0 };
        // no flux out of the top class
        let birth_out = if k < top { rates.beta[k] } else { 0.0 };
        out[k] = inflow_down + inflow_up - (rates.mu[k] + birth_out) * f[k];
    }
}

/// Time derivative of `f` under the truncated mean-field equations.
pub fn rhs_f(f: &[f64], kernel: &RateKernel) -> Result<Vec<f64>> {
    let rates = birth_death_rates(f, kernel)?;
    let mut out = vec![0.0; f.len()];
    rhs_f_into(f, &rates, &mut out);
    Ok(out)
}

fn rhs_p_into(p: &[f64], f0: f64, rho: f64, rates: &BirthDeathRates, out: &mut [f64]) {
    let top = p.len() - 1;
    out[0] = 0.0;
    for k in 1..=top {
        let kf = k as f64;
        let inflow_down = if k < top { kf / (kf + 1.0) * rates.mu[k + 1] * p[k + 1] } else { 0.0 };
        let inflow_up = if k == 1 {
            rates.beta[0] * f0 / rho
        } else {
            kf / (kf - 1.0) * rates.beta[k - 1] * p[k - 1]
        };
        let birth_out = if k < top { rates.beta[k] } else { 0.0 };
        out[k] = inflow_down + inflow_up - (rates.mu[k] + birth_out) * p[k];
    }
}

/// Time derivative of the size-biased law `p` (index 0 unused) with rates
/// taken from `f`. `p` and `f` share the cutoff.
pub fn rhs_p(p: &[f64], f: &[f64], kernel: &RateKernel, rho: f64) -> Result<Vec<f64>> {
    if !(rho > 0.0) {
        return Err(Error::InvalidDensity(rho));
    }
    if p.len() != f.len() {
        return Err(Error::InvalidParameter(format!(
            "p has cutoff {} but f has {}",
            p.len() as isize - 1,
            f.len() as isize - 1
        )));
    }
    let rates = birth_death_rates(f, kernel)?;
    let mut out = vec![0.0; p.len()];
    rhs_p_into(p, f[0], rho, &rates, &mut out);
    Ok(out)
}

/// `p_k = k f_k / rho` for `k >= 1`; `p_0 = 0`.
pub fn size_bias(f: &[f64], rho: f64) -> Result<Vec<f64>> {
    if !(rho > 0.0) {
        return Err(Error::InvalidDensity(rho));
    }
    Ok(f.iter().enumerate().map(|(k, v)| k as f64 * v / rho).collect())
}

/// Poisson(`rho`) probabilities, cut where the remaining tail is negligible
/// in double precision.
pub fn poisson(rho: f64) -> Result<Vec<f64>> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidDensity(rho));
    }
    let mut out = Vec::new();
    let mut log_pmf = -rho;
    let mut k = 0usize;
    loop {
        let v = log_pmf.exp();
        out.push(v);
        if k as f64 > rho && v < 1e-20 {
            break;
        }
        k += 1;
        log_pmf += rho.ln() - (k as f64).ln();
    }
    Ok(out)
}

/// `sum_k k^n f_k`
pub fn moment(f: &[f64], n: i32) -> f64 {
    f.iter().enumerate().map(|(k, v)| (k as f64).powi(n) * v).sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanFieldParams {
    /// Per-step error tolerance of the embedded pair.
    pub tol: f64,
    /// Tail mass `f_{K-1} + f_K` that triggers growing the cutoff.
    pub epsilon_tail: f64,
    /// Allowed drift of total probability.
    pub eps_mass: f64,
    /// Hard ceiling on the cutoff.
    pub max_cutoff: usize,
}

impl Default for MeanFieldParams {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            epsilon_tail: 1e-12,
            eps_mass: 1e-8,
            max_cutoff: 100_000,
        }
    }
}

fn grow_cutoff(y: &mut Vec<f64>, tail: f64, eps: f64, max_cutoff: usize) -> Result<bool> {
    if tail <= eps {
        return Ok(false);
    }
    let k = y.len() - 1;
    if k >= max_cutoff {
        return Err(Error::Range(format!("truncation cutoff would exceed {max_cutoff}")));
    }
    let new_len = (y.len() + (k / 4).max(8)).min(max_cutoff + 1);
    y.resize(new_len, 0.0);
    Ok(true)
}

struct FSystem<'a> {
    kernel: &'a RateKernel,
    params: MeanFieldParams,
}

impl System for FSystem<'_> {
    fn rhs(&mut self, _t: f64, f: &[f64], out: &mut [f64]) -> Result<()> {
        let rates = birth_death_rates(f, self.kernel)?;
        rhs_f_into(f, &rates, out);
        Ok(())
    }

    fn after_step(&mut self, _t: f64, y: &mut Vec<f64>) -> Result<bool> {
        let n = y.len();
        let tail = y[n - 1] + y[n - 2];
        grow_cutoff(y, tail, self.params.epsilon_tail, self.params.max_cutoff)
    }
}

/// Size-biased system evolved on its own: the occupation law needed for the
/// rates is recovered from `p` as `f_k = rho p_k / k`, `f_0 = 1 - sum f_k`.
struct PSystem<'a> {
    kernel: &'a RateKernel,
    rho: f64,
    params: MeanFieldParams,
    f: Vec<f64>,
}

impl PSystem<'_> {
    fn unbias(&mut self, p: &[f64]) {
        self.f.resize(p.len(), 0.0);
        let mut occupied = 0.0;
        for k in 1..p.len() {
            self.f[k] = self.rho * p[k] / k as f64;
            occupied += self.f[k];
        }
        self.f[0] = 1.0 - occupied;
    }
}

impl System for PSystem<'_> {
    fn rhs(&mut self, _t: f64, p: &[f64], out: &mut [f64]) -> Result<()> {
        self.unbias(p);
        let rates = birth_death_rates(&self.f, self.kernel)?;
        rhs_p_into(p, self.f[0], self.rho, &rates, out);
        Ok(())
    }

    fn after_step(&mut self, _t: f64, y: &mut Vec<f64>) -> Result<bool> {
        let n = y.len();
        let k = (n - 1) as f64;
        let tail = self.rho * (y[n - 1] / k + y[n - 2] / (k - 1.0));
        grow_cutoff(y, tail, self.params.epsilon_tail, self.params.max_cutoff)
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty time grid".into()));
    }
    if grid[0] < 0.0 || grid.windows(2).any(|w| w[1] <= w[0]) || grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidParameter("time grid must be non-negative and strictly increasing".into()));
    }
    Ok(())
}

fn check_params(p: &MeanFieldParams) -> Result<()> {
    if !(p.tol > 0.0 && p.epsilon_tail > 0.0 && p.eps_mass > 0.0) {
        return Err(Error::InvalidParameter("tol, epsilon_tail and eps_mass must be positive".into()));
    }
    Ok(())
}

fn padded(v: &[f64], min_len: usize) -> Vec<f64> {
    let mut out = v.to_vec();
    if out.len() < min_len {
        out.resize(min_len, 0.0);
    }
    out
}

/// `f(t)` on a time grid with piecewise-linear interpolation in between.
#[derive(Clone, Debug)]
pub struct MeanFieldSolution {
    kernel: RateKernel,
    rho: f64,
    grid: Vec<f64>,
    states: Vec<Vec<f64>>,
    min_raw: f64,
    steps: usize,
}

impl MeanFieldSolution {
    /// Assembles a solution from tabulated states (e.g. read from disk).
    pub fn from_states(kernel: RateKernel, grid: Vec<f64>, states: Vec<Vec<f64>>) -> Result<Self> {
        check_grid(&grid)?;
        if states.len() != grid.len() || states.iter().any(|s| s.len() < 2) {
            return Err(Error::InvalidParameter("one state (with at least two classes) per grid time".into()));
        }
        let rho = moment(&states[0], 1);
        if !(rho > 0.0) {
            return Err(Error::InvalidDensity(rho));
        }
        let min_raw = states.iter().flatten().copied().fold(f64::INFINITY, f64::min);
        let states = states
            .into_iter()
            .map(|s| s.into_iter().map(|v| v.max(0.0)).collect())
            .collect();
        Ok(Self {
            kernel,
            rho,
            grid,
            states,
            min_raw,
            steps: 0,
        })
    }

    pub fn kernel(&self) -> &RateKernel {
        &self.kernel
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Clamped states, one per grid time.
    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    /// Smallest component seen before clamping.
    pub fn min_raw(&self) -> f64 {
        self.min_raw
    }

    pub fn accepted_steps(&self) -> usize {
        self.steps
    }

    pub fn t_start(&self) -> f64 {
        self.grid[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    /// Grid segment containing `t` and the weight of its right end.
    pub fn locate(&self, t: f64) -> Result<(usize, f64)> {
        if !(t >= self.t_start() && t <= self.t_end()) {
            return Err(Error::Range(format!(
                "t = {t} outside solution range [{}, {}]",
                self.t_start(),
                self.t_end()
            )));
        }
        if self.grid.len() == 1 {
            return Ok((0, 0.0));
        }
        let i = self.grid.partition_point(|&g| g <= t).saturating_sub(1).min(self.grid.len() - 2);
        let theta = (t - self.grid[i]) / (self.grid[i + 1] - self.grid[i]);
        Ok((i, theta.clamp(0.0, 1.0)))
    }

    /// Interpolated `f(t)`.
    pub fn f_at(&self, t: f64) -> Result<Vec<f64>> {
        let (i, theta) = self.locate(t)?;
        if theta == 0.0 {
            return Ok(self.states[i].clone());
        }
        let (a, b) = (&self.states[i], &self.states[i + 1]);
        let n = a.len().max(b.len());
        let (a, b) = (padded(a, n), padded(b, n));
        Ok(a.iter().zip(&b).map(|(x, y)| (1.0 - theta) * x + theta * y).collect())
    }

    pub fn p_at(&self, t: f64) -> Result<Vec<f64>> {
        size_bias(&self.f_at(t)?, self.rho)
    }

    pub fn rates_at(&self, i: usize) -> Result<BirthDeathRates> {
        birth_death_rates(&self.states[i], &self.kernel)
    }

    /// `sum_k k^n f_k(t_i)`
    pub fn moment(&self, i: usize, n: i32) -> f64 {
        moment(&self.states[i], n)
    }

    /// Largest `|sum f_k - 1|` and `|sum k f_k - rho|` over the grid.
    pub fn conservation_drift(&self) -> (f64, f64) {
        self.states.iter().fold((0.0, 0.0), |(dp, dm), s| {
            let p: f64 = s.iter().sum();
            (dp.max((p - 1.0).abs()), dm.max((moment(s, 1) - self.rho).abs()))
        })
    }
}

/// Integrates the mean-field equations from `f0` through `grid`
/// (`grid[0]` is the initial time).
pub fn integrate(
    f0: &[f64],
    kernel: &RateKernel,
    grid: &[f64],
    params: MeanFieldParams,
) -> Result<MeanFieldSolution> {
    check_grid(grid)?;
    check_params(&params)?;
    let total: f64 = f0.iter().sum();
    if f0.len() < 2 || f0.iter().any(|&v| !(v >= 0.0)) || (total - 1.0).abs() > params.eps_mass {
        return Err(Error::InvalidParameter("f0 must be a probability vector over at least two classes".into()));
    }
    let rho = moment(f0, 1);
    if !(rho > 0.0) {
        return Err(Error::InvalidDensity(rho));
    }
    let mut y = f0.to_vec();
    y.resize(f0.len() + 2, 0.0);
    let mut states = Vec::with_capacity(grid.len());
    let mut sys = FSystem { kernel, params };
    let stats = ode::integrate_adaptive(&mut sys, y, grid, params.tol, |_, s| states.push(s.to_vec()))?;
    let mut sol = MeanFieldSolution::from_states(kernel.clone(), grid.to_vec(), states)?;
    sol.min_raw = sol.min_raw.min(stats.min_component);
    sol.steps = stats.accepted;
    sol.rho = rho;
    Ok(sol)
}

/// Size-biased law on a grid, from integrating the `p` equations directly.
#[derive(Clone, Debug)]
pub struct SizeBiasedSolution {
    pub grid: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

pub fn integrate_size_biased(
    p0: &[f64],
    kernel: &RateKernel,
    rho: f64,
    grid: &[f64],
    params: MeanFieldParams,
) -> Result<SizeBiasedSolution> {
    if !(rho > 0.0) {
        return Err(Error::InvalidDensity(rho));
    }
    check_grid(grid)?;
    check_params(&params)?;
    let mut y = p0.to_vec();
    y.resize(p0.len() + 2, 0.0);
    y[0] = 0.0;
    let mut states = Vec::with_capacity(grid.len());
    let mut sys = PSystem {
        kernel,
        rho,
        params,
        f: Vec::new(),
    };
    ode::integrate_adaptive(&mut sys, y, grid, params.tol, |_, s| states.push(s.to_vec()))?;
    Ok(SizeBiasedSolution {
        grid: grid.to_vec(),
        states,
    })
}

/// Fixed-step integration with a fixed cutoff; used to check the order of
/// the scheme.
pub fn integrate_fixed_step(f0: &[f64], kernel: &RateKernel, t_end: f64, steps: usize) -> Result<Vec<f64>> {
    let mut sys = FSystem {
        kernel,
        params: MeanFieldParams::default(),
    };
    ode::integrate_fixed(&mut sys, f0.to_vec(), 0.0, t_end, steps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zr() -> RateKernel {
        RateKernel::zero_range(4.0).unwrap()
    }

    fn table_iw(n: usize) -> RateKernel {
        let rows = (0..n).map(|k| vec![k as f64; n]).collect();
        RateKernel::table(crate::kernel::RateTable::new(rows).unwrap(), None).unwrap()
    }

    #[test]
    fn rates_for_point_masses() {
        let d = 0.5;
        let incl = RateKernel::inclusion(d).unwrap();
        let f = [0.0, 1.0, 0.0, 0.0, 0.0];
        let r = birth_death_rates(&f, &incl).unwrap();
        for k in 0..5 {
            assert!((r.mu[k] - k as f64 * (d + 1.0)).abs() < 1e-14);
            let expect = if k == 0 { d } else { d + k as f64 };
            // beta_k = c(1, k) = d + k
            assert!((r.beta[k] - expect).abs() < 1e-14);
        }
        let f = [1.0, 0.0, 0.0];
        let r = birth_death_rates(&f, &zr()).unwrap();
        assert_eq!(r.mu, vec![0.0, 5.0, 3.0]);
        assert_eq!(r.beta, vec![0.0; 3]);
    }

    #[test]
    fn closed_forms_match_direct_sums() {
        let f = poisson(1.7).unwrap();
        let n = f.len();
        for kernel in [
            RateKernel::independent_walkers(),
            zr(),
            RateKernel::inclusion(0.8).unwrap(),
        ] {
            let fast = birth_death_rates(&f, &kernel).unwrap();
            for k in 0..n {
                let mu: f64 = (0..n).map(|l| kernel.rate(k, l) * f[l]).sum();
                let beta: f64 = (1..n).map(|l| kernel.rate(l, k) * f[l]).sum();
                assert!((fast.mu[k] - mu).abs() < 1e-12 * (1.0 + mu));
                assert!((fast.beta[k] - beta).abs() < 1e-12 * (1.0 + beta));
            }
        }
    }

    #[test]
    fn poisson_rates_independent_walkers() {
        let rho = 2.0;
        let f = poisson(rho).unwrap();
        let r = birth_death_rates(&f, &RateKernel::independent_walkers()).unwrap();
        for k in 0..f.len() {
            assert!((r.mu[k] - k as f64).abs() < 1e-12 * (1.0 + k as f64));
            assert!((r.beta[k] - rho).abs() < 1e-12);
        }
    }

    #[test]
    fn poisson_is_stationary() {
        for rho in [0.5, 1.0, 3.0] {
            let f = poisson(rho).unwrap();
            let d = rhs_f(&f, &RateKernel::independent_walkers()).unwrap();
            for v in &d[..d.len() - 2] {
                assert!(v.abs() < 1e-10);
            }
            let p = size_bias(&f, rho).unwrap();
            let dp = rhs_p(&p, &f, &RateKernel::independent_walkers(), rho).unwrap();
            for v in &dp[..dp.len() - 2] {
                assert!(v.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rhs_conserves_probability_and_mass() {
        let f = poisson(2.0).unwrap();
        for kernel in [zr(), RateKernel::inclusion(1.0).unwrap(), table_iw(f.len() + 1)] {
            let d = rhs_f(&f, &kernel).unwrap();
            let top = f.len() - 1;
            let r = birth_death_rates(&f, &kernel).unwrap();
            // only the truncation flux beta_K f_K can leave
            let leak = r.beta[top] * f[top];
            assert!(d.iter().sum::<f64>().abs() < 1e-14);
            let mass_rate: f64 = d.iter().enumerate().map(|(k, v)| k as f64 * v).sum();
            assert!((mass_rate + leak).abs() < 1e-13, "{mass_rate} {leak}");

            let rho = moment(&f, 1);
            let p = size_bias(&f, rho).unwrap();
            let dp = rhs_p(&p, &f, &kernel, rho).unwrap();
            assert!(dp.iter().sum::<f64>().abs() < 1e-12);
            // consistent p: dp_k = k df_k / rho
            for k in 1..f.len() {
                assert!((dp[k] - k as f64 * d[k] / rho).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn no_source_without_empty_sites() {
        let f = [0.0, 0.5, 0.5];
        let p = size_bias(&f, 1.5).unwrap();
        let dp = rhs_p(&p, &f, &zr(), 1.5).unwrap();
        let r = birth_death_rates(&f, &zr()).unwrap();
        let expect = 0.5 * r.mu[2] * p[2] - (r.mu[1] + r.beta[1]) * p[1];
        assert!((dp[1] - expect).abs() < 1e-15);
    }

    #[test]
    fn size_bias_examples() {
        assert_eq!(size_bias(&[0.0, 1.0], 1.0).unwrap(), vec![0.0, 1.0]);
        let f = poisson(1.0).unwrap();
        let p = size_bias(&f, 1.0).unwrap();
        let mut fact = 1.0;
        for k in 1..12 {
            if k > 1 {
                fact *= (k - 1) as f64;
            }
            assert!((p[k] - (-1.0f64).exp() / fact).abs() < 1e-15);
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(size_bias(&f, 0.0).is_err());
        assert!(rhs_p(&p, &f, &zr(), 0.0).is_err());
    }

    #[test]
    fn poisson_stays_put() {
        let f0 = poisson(1.0).unwrap();
        let sol = integrate(&f0, &RateKernel::independent_walkers(), &[0.0, 5.0, 10.0], MeanFieldParams::default())
            .unwrap();
        let f10 = &sol.states()[2];
        let sup = (0..f10.len())
            .map(|k| (f10[k] - f0.get(k).copied().unwrap_or(0.0)).abs())
            .fold(0.0, f64::max);
        assert!(sup < 1e-6, "{sup}");
    }

    #[test]
    fn condensing_zero_range_conserves_and_coarsens() {
        let f0 = poisson(2.0).unwrap();
        let grid: Vec<f64> = (0..=50).map(f64::from).collect();
        let sol = integrate(&f0, &zr(), &grid, MeanFieldParams::default()).unwrap();
        let (dp, _) = sol.conservation_drift();
        assert!(dp < 1e-8);
        for (i, &t) in grid.iter().enumerate() {
            if t <= 10.0 {
                assert!((sol.moment(i, 1) - 2.0).abs() < 1e-8, "t={t}");
            }
        }
        let m2: Vec<f64> = (1..=50).map(|i| sol.moment(i, 2)).collect();
        assert!(m2.windows(2).all(|w| w[1] > w[0]));
        assert!(sol.min_raw() > -1e-10);
    }

    #[test]
    fn routes_to_size_biased_law_agree() {
        let f0 = poisson(2.0).unwrap();
        let grid = [0.0, 1.0, 5.0, 10.0];
        let sol = integrate(&f0, &zr(), &grid, MeanFieldParams::default()).unwrap();
        let p0 = size_bias(&f0, 2.0).unwrap();
        let sb = integrate_size_biased(&p0, &zr(), 2.0, &grid, MeanFieldParams::default()).unwrap();
        for i in 1..grid.len() {
            let a = size_bias(&sol.states()[i], sol.rho()).unwrap();
            let b = &sb.states[i];
            let n = a.len().max(b.len());
            let (a, b) = (padded(&a, n), padded(b, n));
            let sup = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(sup <= 1e-7, "t={}: {sup}", grid[i]);
        }
    }

    #[test]
    fn halving_the_step_gains_fourth_order() {
        let f0 = {
            let mut f = poisson(2.0).unwrap();
            f.resize(80, 0.0);
            f
        };
        let kernel = zr();
        let reference = integrate_fixed_step(&f0, &kernel, 2.0, 2000).unwrap();
        let err = |steps| {
            let f = integrate_fixed_step(&f0, &kernel, 2.0, steps).unwrap();
            f.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        let (coarse, fine) = (err(10), err(20));
        assert!(coarse / fine >= 8.0, "{coarse} / {fine}");
    }

    #[test]
    fn interpolation_is_linear() {
        let kernel = zr();
        let sol = MeanFieldSolution::from_states(
            kernel,
            vec![0.0, 1.0],
            vec![vec![0.0, 1.0], vec![0.5, 0.0, 0.25]],
        )
        .unwrap();
        let f = sol.f_at(0.5).unwrap();
        assert_eq!(f, vec![0.25, 0.5, 0.125]);
        assert!(sol.f_at(1.5).is_err());
    }

    #[test]
    fn table_kernel_beyond_its_range() {
        let f0 = poisson(2.0).unwrap();
        let err = integrate(&f0, &table_iw(8), &[0.0, 1.0], MeanFieldParams::default()).unwrap_err();
        assert!(matches!(err, Error::TableOutOfRange { .. }));
    }

    #[test]
    fn table_kernel_matches_closed_form() {
        let f0 = poisson(1.0).unwrap();
        let n = f0.len() + 40;
        let params = MeanFieldParams::default();
        let a = integrate(&f0, &table_iw(n), &[0.0, 1.0], params).unwrap();
        let b = integrate(&f0, &RateKernel::independent_walkers(), &[0.0, 1.0], params).unwrap();
        let (x, y) = (&a.states()[1], &b.states()[1]);
        for k in 0..x.len().min(y.len()) {
            assert!((x[k] - y[k]).abs() < 1e-9);
        }
    }
}
