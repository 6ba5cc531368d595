//! The particle system with one tagged particle, tracking the occupation
//! `W` of the tagged particle's site.
//!
//! The tagged site is kept outside the class counts so relocations of the
//! tag are exact. With `n'` the classes of the `L - 1` untagged sites the
//! jump rates split into four groups:
//!
//! * (a) untagged to untagged: `c(k,l) n'_k (n'_l - [k == l]) / (L-1)`
//! * (b) untagged to tagged site: `c(k,W) n'_k / (L-1)`, `W -> W+1`
//! * (c) a non-tagged particle leaves the tagged site:
//!   `c(W,l) n'_l / (L-1) * (W-1)/W`, `W -> W-1`
//! * (d) the tagged particle itself leaves: `c(W,l) n'_l / (L-1) / W`,
//!   `W -> l+1` and the old site (now `W-1`) rejoins the untagged pool.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::ips::{pick, validate_grid, EventTable};
use crate::kernel::RateKernel;
use crate::state::{ClassConfig, TaggedState};

/// Rates of the four event groups, broken down by untagged class.
#[derive(Clone, Debug, PartialEq)]
pub struct TaggedRates {
    /// Group (a) per departure class.
    pub env_rows: Vec<f64>,
    /// Group (b) per departure class `k`.
    pub to_tagged: Vec<f64>,
    /// Group (c) per target class `l`.
    pub stay: Vec<f64>,
    /// Group (d) per target class `l`; the tagged occupation becomes `l + 1`.
    pub relocate: Vec<f64>,
    pub w: u64,
}

impl TaggedRates {
    pub fn env_total(&self) -> f64 {
        self.env_rows.iter().sum()
    }

    pub fn to_tagged_total(&self) -> f64 {
        self.to_tagged.iter().sum()
    }

    pub fn stay_total(&self) -> f64 {
        self.stay.iter().sum()
    }

    pub fn relocate_total(&self) -> f64 {
        self.relocate.iter().sum()
    }

    pub fn total(&self) -> f64 {
        self.env_total() + self.to_tagged_total() + self.stay_total() + self.relocate_total()
    }

    /// `sum over W-changing events of rate * (g(W') - g(W))`.
    pub fn generator(&self, g: &[f64]) -> Result<f64> {
        let w = self.w as usize;
        let need = (w + 2).max(self.relocate.len() + 1);
        if g.len() < need {
            return Err(Error::Range(format!("g has {} entries, need {need}", g.len())));
        }
        let mut acc = self.to_tagged_total() * (g[w + 1] - g[w]);
        acc += self.stay_total() * (g[w - 1] - g[w]);
        for (l, r) in self.relocate.iter().enumerate() {
            acc += r * (g[l + 1] - g[w]);
        }
        Ok(acc)
    }
}

/// Full rate decomposition of a tagged state, computed from scratch.
pub fn tagged_event_rates(st: &TaggedState, kernel: &RateKernel) -> Result<TaggedRates> {
    let sites = st.sites();
    if sites < 2 {
        return Err(Error::InvalidLattice(sites));
    }
    kernel.ensure_covers(st.particles() as usize)?;
    let norm = 1.0 / (sites - 1) as f64;
    let env = st.env();
    let w = st.w() as usize;
    let top = env.max_occupation();
    let mut env_rows = vec![0.0; top + 1];
    for (k, row) in env_rows.iter_mut().enumerate().skip(1) {
        for l in 0..=top {
            let nl = env.count(l) - u64::from(k == l && env.count(l) > 0);
            *row += kernel.rate(k, l) * (env.count(k) * nl) as f64 * norm;
        }
    }
    let to_tagged = (0..=top)
        .map(|k| kernel.rate(k, w) * env.count(k) as f64 * norm)
        .collect();
    let leave: Vec<f64> = (0..=top)
        .map(|l| kernel.rate(w, l) * env.count(l) as f64 * norm)
        .collect();
    let wf = w as f64;
    Ok(TaggedRates {
        env_rows,
        to_tagged,
        stay: leave.iter().map(|r| r * (wf - 1.0) / wf).collect(),
        relocate: leave.iter().map(|r| r / wf).collect(),
        w: st.w(),
    })
}

/// The finite-`L` generator acting on `g` at `n = W`, written with the
/// empirical measure `F` of the whole configuration (tagged site included).
/// Equals [`TaggedRates::generator`] exactly; the form makes the `1/L`
/// corrections to the limit generator explicit.
pub fn apply_finite_generator(st: &TaggedState, g: &[f64], kernel: &RateKernel) -> Result<f64> {
    let full = st.full();
    let l_sites = full.sites() as f64;
    let n = st.w() as usize;
    let top = full.max_occupation();
    let need = (n + 2).max(top + 2);
    if g.len() < need {
        return Err(Error::Range(format!("g has {} entries, need {need}", g.len())));
    }
    kernel.ensure_covers(full.particles() as usize)?;
    let f: Vec<f64> = full.counts().iter().map(|&c| c as f64 / l_sites).collect();
    let nf = n as f64;
    let scale = l_sites / (l_sites - 1.0);

    let birth: f64 = (1..=top).map(|k| kernel.rate(k, n) * f[k]).sum();
    let leave: f64 = (0..=top).map(|k| kernel.rate(n, k) * f[k]).sum();
    let jump: f64 = (0..=top).map(|k| kernel.rate(n, k) * f[k] * (g[k + 1] - g[n])).sum();
    let up = g[n + 1] - g[n];
    let down = if n >= 1 { g[n - 1] - g[n] } else { 0.0 };

    let main = scale * birth * up + scale * ((nf - 1.0) / nf * leave * down + jump / nf);
    let self_pair = kernel.rate(n, n) / (l_sites - 1.0) * ((nf + 1.0) / nf * up + (nf - 1.0) / nf * down);
    Ok(main - self_pair)
}

/// Observations of a tagged run: `W` and the whole configuration.
#[derive(Clone, Debug)]
pub struct TaggedTrajectory {
    pub times: Vec<f64>,
    pub w: Vec<u64>,
    pub configs: Vec<ClassConfig>,
    pub final_state: TaggedState,
    pub events: u64,
}

/// Which group an event came from, with the untagged class involved.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaggedEvent {
    Env { from: usize, to: usize },
    ToTagged { from: usize },
    Stay { to: usize },
    Relocate { to: usize },
}

#[derive(Clone, Debug)]
pub struct TaggedSimulator {
    st: TaggedState,
    kernel: RateKernel,
    table: EventTable,
    norm: f64,
    sites: u64,
    particles: u64,
    checked: bool,
    // scratch for the per-class weights of groups (b) and (c)+(d)
    to_tagged: Vec<f64>,
    leave: Vec<f64>,
    to_tagged_total: f64,
    leave_total: f64,
}

impl TaggedSimulator {
    pub fn new(st: TaggedState, kernel: RateKernel) -> Result<Self> {
        let sites = st.sites();
        if sites < 2 {
            return Err(Error::InvalidLattice(sites));
        }
        kernel.ensure_covers(st.particles() as usize)?;
        let norm = 1.0 / (sites - 1) as f64;
        let table = EventTable::build(st.env(), &kernel, norm);
        let mut sim = Self {
            sites,
            particles: st.particles(),
            st,
            kernel,
            table,
            norm,
            checked: true,
            to_tagged: Vec::new(),
            leave: Vec::new(),
            to_tagged_total: 0.0,
            leave_total: 0.0,
        };
        sim.refresh_tag_rates();
        Ok(sim)
    }

    pub fn with_checks(mut self, on: bool) -> Self {
        self.checked = on;
        self
    }

    pub fn state(&self) -> &TaggedState {
        &self.st
    }

    pub fn kernel(&self) -> &RateKernel {
        &self.kernel
    }

    pub fn sites(&self) -> u64 {
        self.sites
    }

    pub fn particles(&self) -> u64 {
        self.particles
    }

    fn refresh_tag_rates(&mut self) {
        let env = &self.st.env;
        let w = self.st.w as usize;
        let top = env.max_occupation();
        self.to_tagged.clear();
        self.leave.clear();
        for k in 0..=top {
            let n = env.count(k) as f64;
            self.to_tagged.push(self.kernel.rate(k, w) * n * self.norm);
            self.leave.push(self.kernel.rate(w, k) * n * self.norm);
        }
        self.to_tagged_total = self.to_tagged.iter().sum();
        self.leave_total = self.leave.iter().sum();
    }

    /// Rate of untagged-to-untagged jumps.
    pub fn env_rate(&self) -> f64 {
        self.table.total()
    }

    /// Rate of group (b).
    pub fn birth_rate(&self) -> f64 {
        self.to_tagged_total
    }

    /// Rate of group (c).
    pub fn death_rate(&self) -> f64 {
        let w = self.st.w as f64;
        self.leave_total * (w - 1.0) / w
    }

    /// Rate of group (d) into untagged class `l`.
    pub fn relocation_rate(&self, l: usize) -> f64 {
        self.leave.get(l).copied().unwrap_or(0.0) / self.st.w as f64
    }

    pub fn total_rate(&self) -> f64 {
        self.table.total() + self.to_tagged_total + self.leave_total
    }

    pub fn holding_time<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let r = self.total_rate();
        if r <= 0.0 {
            return Err(Error::Absorbing);
        }
        let e: f64 = Exp1.sample(rng);
        Ok(e / r)
    }

    /// Group (b) event for `u` uniform on `[0, birth_rate)`.
    pub(crate) fn birth_event(&self, u: f64) -> TaggedEvent {
        TaggedEvent::ToTagged {
            from: pick(&self.to_tagged, u),
        }
    }

    /// Group (c) event for `u` uniform on `[0, death_rate)`.
    pub(crate) fn death_event(&self, u: f64) -> TaggedEvent {
        let w = self.st.w as f64;
        TaggedEvent::Stay {
            to: pick(&self.leave, u * w / (w - 1.0)),
        }
    }

    pub(crate) fn env_event<R: Rng + ?Sized>(&self, rng: &mut R) -> TaggedEvent {
        let (from, to) = self.table.select(&self.st.env, &self.kernel, rng);
        TaggedEvent::Env { from, to }
    }

    /// Draws an event proportionally to its rate, without applying it.
    pub fn select<R: Rng + ?Sized>(&self, rng: &mut R) -> TaggedEvent {
        let env_total = self.table.total();
        let mut u = rng.random::<f64>() * self.total_rate();
        if u < env_total {
            return self.env_event(rng);
        }
        u -= env_total;
        if u < self.to_tagged_total {
            return TaggedEvent::ToTagged {
                from: pick(&self.to_tagged, u),
            };
        }
        let to = pick(&self.leave, rng.random::<f64>() * self.leave_total);
        let w = self.st.w;
        if rng.random_range(0..w) == 0 {
            TaggedEvent::Relocate { to }
        } else {
            TaggedEvent::Stay { to }
        }
    }

    /// Applies an event; `W` before and after is returned.
    pub fn apply(&mut self, ev: TaggedEvent) -> Result<(u64, u64)> {
        let before = self.st.w;
        let env = &mut self.st.env;
        let kern = &self.kernel;
        match ev {
            TaggedEvent::Env { from, to } => {
                env.move_particle(from, to);
                self.table.shift(kern, from, -1.0);
                self.table.shift(kern, from - 1, 1.0);
                self.table.shift(kern, to, -1.0);
                self.table.shift(kern, to + 1, 1.0);
            }
            TaggedEvent::ToTagged { from } => {
                env.remove_site(from);
                env.add_site(from - 1);
                self.table.shift(kern, from, -1.0);
                self.table.shift(kern, from - 1, 1.0);
                self.st.w += 1;
            }
            TaggedEvent::Stay { to } => {
                env.remove_site(to);
                env.add_site(to + 1);
                self.table.shift(kern, to, -1.0);
                self.table.shift(kern, to + 1, 1.0);
                self.st.w -= 1;
            }
            TaggedEvent::Relocate { to } => {
                let old = (self.st.w - 1) as usize;
                env.remove_site(to);
                env.add_site(old);
                self.table.shift(kern, to, -1.0);
                self.table.shift(kern, old, 1.0);
                self.st.w = to as u64 + 1;
            }
        }
        self.table.refresh(&self.st.env, &self.kernel);
        self.refresh_tag_rates();
        if self.checked {
            self.st.check(self.sites, self.particles)?;
        }
        Ok((before, self.st.w))
    }

    pub fn fire<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<TaggedEvent> {
        let ev = self.select(rng);
        self.apply(ev)?;
        Ok(ev)
    }

    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<f64> {
        let dt = self.holding_time(rng)?;
        self.fire(rng)?;
        Ok(dt)
    }

    pub fn simulate<R: Rng + ?Sized>(
        &mut self,
        t_max: f64,
        grid: &[f64],
        rng: &mut R,
    ) -> Result<TaggedTrajectory> {
        validate_grid(grid, t_max)?;
        let mut out = TaggedTrajectory {
            times: Vec::with_capacity(grid.len()),
            w: Vec::with_capacity(grid.len()),
            configs: Vec::with_capacity(grid.len()),
            final_state: self.st.clone(),
            events: 0,
        };
        let mut next = if t_max > 0.0 { self.holding_time(rng)? } else { f64::INFINITY };
        let stops = grid.iter().copied().chain(std::iter::once(t_max));
        for (i, s) in stops.enumerate() {
            while next <= s {
                self.fire(rng)?;
                out.events += 1;
                next += self.holding_time(rng)?;
            }
            if i < grid.len() {
                out.times.push(s);
                out.w.push(self.st.w);
                out.configs.push(self.st.full());
            }
        }
        out.final_state = self.st.clone();
        Ok(out)
    }
}
