//! Exact continuous-time simulation of the particle system on the complete
//! graph, working on class counts.
//!
//! An ordered pair of distinct sites `(x, y)` with occupations `(k, l)`
//! fires at rate `c(k, l) / (L - 1)`, so the aggregate rate of the class
//! pair is `c(k,l) n_k (n_l - [k == l]) / (L - 1)`. Events are drawn with the
//! direct method: holding time first, then a departure class by row sum,
//! then a target class inside that row.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::kernel::RateKernel;
use crate::state::{ClassConfig, EmpiricalMeasure};

/// Row sums above this many classes are accumulated with compensation.
const COMPENSATE_ABOVE: usize = 64;

/// Neumaier-compensated sum.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Incrementally maintained pair-rate table for a class configuration.
///
/// `target[k] = sum_l c(k, l) n_l` is updated by `O(K)` work per changed
/// class; row sums `n_k (target[k] - c(k,k)) * norm` are then rederived.
#[derive(Clone, Debug)]
pub struct EventTable {
    target: Vec<f64>,
    rows: Vec<f64>,
    total: f64,
    norm: f64,
}

impl EventTable {
    pub fn build(cfg: &ClassConfig, kernel: &RateKernel, norm: f64) -> Self {
        let mut table = Self {
            target: Vec::new(),
            rows: Vec::new(),
            total: 0.0,
            norm,
        };
        table.extend(cfg, kernel);
        table.refresh_rows(cfg, kernel);
        table
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    /// Per-departure-class rates.
    pub fn rows(&self) -> &[f64] {
        &self.rows
    }

    /// Rate of the ordered class pair `(k, l)`.
    pub fn pair_rate(&self, cfg: &ClassConfig, kernel: &RateKernel, k: usize, l: usize) -> f64 {
        let nk = cfg.count(k) as f64;
        let nl = cfg.count(l) as f64 - if k == l { 1.0 } else { 0.0 };
        kernel.rate(k, l) * nk * nl.max(0.0) * self.norm
    }

    fn extend(&mut self, cfg: &ClassConfig, kernel: &RateKernel) {
        let top = cfg.max_occupation();
        for k in self.target.len()..=top {
            let s = cfg
                .counts()
                .iter()
                .enumerate()
                .map(|(l, &n)| kernel.rate(k, l) * n as f64)
                .sum();
            self.target.push(s);
        }
    }

    /// Records that the count of class `class` changed by `delta`; must be
    /// called for every changed class before [`refresh`](Self::refresh).
    pub(crate) fn shift(&mut self, kernel: &RateKernel, class: usize, delta: f64) {
        for (k, s) in self.target.iter_mut().enumerate().skip(1) {
            *s += kernel.rate(k, class) * delta;
        }
    }

    /// Brings the table in line with `cfg` after a batch of [`shift`]s.
    pub(crate) fn refresh(&mut self, cfg: &ClassConfig, kernel: &RateKernel) {
        let top = cfg.max_occupation();
        if self.target.len() > top + 1 {
            self.target.truncate(top + 1);
        }
        self.extend(cfg, kernel);
        self.refresh_rows(cfg, kernel);
    }

    fn refresh_rows(&mut self, cfg: &ClassConfig, kernel: &RateKernel) {
        let top = cfg.max_occupation();
        self.rows.clear();
        self.rows.push(0.0);
        for k in 1..=top {
            let n = cfg.count(k);
            let r = if n == 0 {
                0.0
            } else {
                (n as f64 * (self.target[k] - kernel.rate(k, k))).max(0.0) * self.norm
            };
            self.rows.push(r);
        }
        self.total = if self.rows.len() > COMPENSATE_ABOVE {
            compensated_sum(self.rows.iter().copied())
        } else {
            self.rows.iter().sum()
        };
    }

    /// Draws an ordered class pair `(k, l)` proportionally to its rate.
    pub fn select<R: Rng + ?Sized>(
        &self,
        cfg: &ClassConfig,
        kernel: &RateKernel,
        rng: &mut R,
    ) -> (usize, usize) {
        let k = pick(&self.rows, rng.random::<f64>() * self.total);
        let weight = |l: usize| {
            let n = cfg.count(l) - u64::from(l == k);
            kernel.rate(k, l) * n as f64
        };
        let row_total = self.rows[k] / (cfg.count(k) as f64 * self.norm);
        let mut u = rng.random::<f64>() * row_total;
        let mut last = None;
        for l in 0..=cfg.max_occupation() {
            let w = weight(l);
            if w <= 0.0 {
                continue;
            }
            last = Some(l);
            if u < w {
                return (k, l);
            }
            u -= w;
        }
        (k, last.expect("departure row with no target"))
    }
}

/// Index `i` with `sum(w[..i]) <= u < sum(w[..=i])`, skipping zero weights;
/// falls back to the last positive weight when rounding overshoots.
pub(crate) fn pick(weights: &[f64], mut u: f64) -> usize {
    let mut last = None;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        last = Some(i);
        if u < w {
            return i;
        }
        u -= w;
    }
    last.expect("pick from all-zero weights")
}

/// `(1/(L-1)) sum_{k>=1, l>=0} c(k,l) n_k (n_l - [k == l])`, from scratch.
pub fn total_rate(cfg: &ClassConfig, kernel: &RateKernel) -> Result<f64> {
    if cfg.sites() < 2 {
        return Err(Error::InvalidLattice(cfg.sites()));
    }
    kernel.ensure_covers(cfg.max_occupation())?;
    let norm = 1.0 / (cfg.sites() - 1) as f64;
    let mut total = 0.0;
    for k in 1..=cfg.max_occupation() {
        for l in 0..=cfg.max_occupation() {
            let nl = cfg.count(l) - u64::from(k == l && cfg.count(l) > 0);
            total += kernel.evaluate(k, l)? * (cfg.count(k) * nl) as f64;
        }
    }
    Ok(total * norm)
}

/// Configurations recorded on an observation grid.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub configs: Vec<ClassConfig>,
    pub final_state: ClassConfig,
    pub final_time: f64,
    pub events: u64,
}

impl Trajectory {
    pub fn measures(&self) -> impl Iterator<Item = EmpiricalMeasure> + '_ {
        self.configs.iter().map(ClassConfig::empirical_measure)
    }
}

pub(crate) fn validate_grid(grid: &[f64], t_max: f64) -> Result<()> {
    if !(t_max >= 0.0 && t_max.is_finite()) {
        return Err(Error::InvalidParameter(format!("t_max = {t_max}")));
    }
    if grid.iter().any(|&s| !(0.0..=t_max).contains(&s)) {
        return Err(Error::InvalidParameter("observation times must lie in [0, t_max]".into()));
    }
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter("observation grid must be sorted".into()));
    }
    Ok(())
}

/// Gillespie simulator for the untagged system.
#[derive(Clone, Debug)]
pub struct IpsSimulator {
    cfg: ClassConfig,
    kernel: RateKernel,
    table: EventTable,
    sites: u64,
    particles: u64,
    checked: bool,
}

impl IpsSimulator {
    pub fn new(cfg: ClassConfig, kernel: RateKernel) -> Result<Self> {
        if cfg.sites() < 2 {
            return Err(Error::InvalidLattice(cfg.sites()));
        }
        // every occupation stays <= N
        kernel.ensure_covers(cfg.particles() as usize)?;
        let norm = 1.0 / (cfg.sites() - 1) as f64;
        let table = EventTable::build(&cfg, &kernel, norm);
        Ok(Self {
            sites: cfg.sites(),
            particles: cfg.particles(),
            cfg,
            kernel,
            table,
            checked: true,
        })
    }

    /// Toggles the per-event conservation check (on by default).
    pub fn with_checks(mut self, on: bool) -> Self {
        self.checked = on;
        self
    }

    pub fn config(&self) -> &ClassConfig {
        &self.cfg
    }

    pub fn table(&self) -> &EventTable {
        &self.table
    }

    pub fn total_rate(&self) -> f64 {
        self.table.total()
    }

    /// Holding time at the current total rate.
    pub fn holding_time<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let r = self.table.total();
        if r <= 0.0 {
            return Err(Error::Absorbing);
        }
        let e: f64 = Exp1.sample(rng);
        Ok(e / r)
    }

    /// Selects and applies one jump; returns the moved class pair.
    pub fn fire<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<(usize, usize)> {
        let (k, l) = self.table.select(&self.cfg, &self.kernel, rng);
        self.apply(k, l)?;
        Ok((k, l))
    }

    pub(crate) fn apply(&mut self, k: usize, l: usize) -> Result<()> {
        self.cfg.move_particle(k, l);
        let kern = &self.kernel;
        self.table.shift(kern, k, -1.0);
        self.table.shift(kern, k - 1, 1.0);
        self.table.shift(kern, l, -1.0);
        self.table.shift(kern, l + 1, 1.0);
        self.table.refresh(&self.cfg, kern);
        if self.checked {
            self.cfg.check(self.sites, self.particles)?;
        }
        Ok(())
    }

    /// One event: returns the holding time that preceded it.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<f64> {
        let dt = self.holding_time(rng)?;
        self.fire(rng)?;
        Ok(dt)
    }

    /// Runs to `t_max`, recording the configuration at each grid time
    /// (right-continuous: jumps at exactly `s` are included).
    pub fn simulate<R: Rng + ?Sized>(
        &mut self,
        t_max: f64,
        grid: &[f64],
        rng: &mut R,
    ) -> Result<Trajectory> {
        validate_grid(grid, t_max)?;
        let mut times = Vec::with_capacity(grid.len());
        let mut configs = Vec::with_capacity(grid.len());
        let mut t = 0.0;
        let mut events = 0u64;
        let mut next = if t_max > 0.0 { t + self.holding_time(rng)? } else { f64::INFINITY };
        let stops = grid.iter().copied().chain(std::iter::once(t_max));
        for (i, s) in stops.enumerate() {
            while next <= s {
                self.fire(rng)?;
                events += 1;
                t = next;
                next = t + self.holding_time(rng)?;
            }
            if i < grid.len() {
                times.push(s);
                configs.push(self.cfg.clone());
            }
        }
        Ok(Trajectory {
            times,
            configs,
            final_state: self.cfg.clone(),
            final_time: t_max.max(t),
            events,
        })
    }
}
