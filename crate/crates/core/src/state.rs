//! Exchangeable configurations on the complete graph, stored as occupation
//! class counts `n_k` (number of sites holding exactly `k` particles).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Occupation class counts. `counts[k]` is the number of sites with `k`
/// particles; the vector never has trailing zeros beyond the maximum
/// occupied class, except for an empty lattice.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClassConfig {
    counts: Vec<u64>,
    sites: u64,
    particles: u64,
}

impl ClassConfig {
    /// Builds from a class-count vector (index = occupation).
    pub fn from_counts(counts: Vec<u64>) -> Result<Self> {
        let mut sites = 0u64;
        let mut particles = 0u64;
        for (k, &n) in counts.iter().enumerate() {
            sites = sites
                .checked_add(n)
                .ok_or_else(|| Error::InvalidParameter("site count overflow".into()))?;
            particles = (k as u64)
                .checked_mul(n)
                .and_then(|m| particles.checked_add(m))
                .ok_or_else(|| Error::InvalidParameter("particle count overflow".into()))?;
        }
        if sites == 0 {
            return Err(Error::InvalidParameter("configuration has no sites".into()));
        }
        let mut cfg = Self {
            counts,
            sites,
            particles,
        };
        cfg.trim();
        Ok(cfg)
    }

    /// Builds from per-site occupations.
    pub fn from_occupations(occupations: &[u64]) -> Result<Self> {
        let max = occupations.iter().copied().max().unwrap_or(0) as usize;
        let mut counts = vec![0u64; max + 1];
        for &eta in occupations {
            counts[eta as usize] += 1;
        }
        Self::from_counts(counts)
    }

    /// `sites` sites, all empty.
    pub fn empty(sites: u64) -> Self {
        Self {
            counts: vec![sites],
            sites,
            particles: 0,
        }
    }

    pub fn sites(&self) -> u64 {
        self.sites
    }

    pub fn particles(&self) -> u64 {
        self.particles
    }

    /// Number of sites with occupation `k`.
    #[inline]
    pub fn count(&self, k: usize) -> u64 {
        self.counts.get(k).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Largest occupied class.
    pub fn max_occupation(&self) -> usize {
        self.counts.len() - 1
    }

    fn trim(&mut self) {
        while self.counts.len() > 1 && *self.counts.last().unwrap() == 0 {
            self.counts.pop();
        }
    }

    #[inline]
    pub(crate) fn add_site(&mut self, k: usize) {
        if k >= self.counts.len() {
            self.counts.resize(k + 1, 0);
        }
        self.counts[k] += 1;
        self.sites += 1;
        self.particles += k as u64;
    }

    #[inline]
    pub(crate) fn remove_site(&mut self, k: usize) {
        debug_assert!(self.count(k) > 0, "no site of class {k}");
        self.counts[k] -= 1;
        self.sites -= 1;
        self.particles -= k as u64;
        self.trim();
    }

    /// Moves one particle from a site of class `from` to a different site of
    /// class `to`. For `from == to` two distinct sites of that class are
    /// involved: one drops to `from - 1`, the other rises to `from + 1`.
    #[inline]
    pub(crate) fn move_particle(&mut self, from: usize, to: usize) {
        debug_assert!(from >= 1);
        debug_assert!(self.count(from) > u64::from(from == to));
        let top = from.max(to + 1);
        if top >= self.counts.len() {
            self.counts.resize(top + 1, 0);
        }
        self.counts[from] -= 1;
        self.counts[from - 1] += 1;
        self.counts[to] -= 1;
        self.counts[to + 1] += 1;
        self.trim();
    }

    /// Checks the class-count invariants against expected totals.
    pub fn check(&self, sites: u64, particles: u64) -> Result<()> {
        let s: u64 = self.counts.iter().sum();
        let p: u64 = self.counts.iter().enumerate().map(|(k, &n)| k as u64 * n).sum();
        if s != sites || p != particles || s != self.sites || p != self.particles {
            return Err(Error::Invariant(format!(
                "class counts sum to {s} sites / {p} particles, expected {sites} / {particles}"
            )));
        }
        Ok(())
    }

    /// `(1/L) sum_k k^n n_k`, accumulated exactly in integers.
    pub fn moment(&self, order: u32) -> Result<f64> {
        if order > 6 {
            return Err(Error::MomentOverflow { order });
        }
        let mut acc: u128 = 0;
        for (k, &n) in self.counts.iter().enumerate() {
            let term = (k as u128)
                .checked_pow(order)
                .and_then(|p| p.checked_mul(n as u128))
                .ok_or(Error::MomentOverflow { order })?;
            acc = acc.checked_add(term).ok_or(Error::MomentOverflow { order })?;
        }
        Ok(acc as f64 / self.sites as f64)
    }

    pub fn empirical_measure(&self) -> EmpiricalMeasure {
        let l = self.sites as f64;
        let f = self.counts.iter().map(|&n| n as f64 / l).collect();
        let p = (self.particles > 0).then(|| {
            let n = self.particles as f64;
            self.counts
                .iter()
                .enumerate()
                .map(|(k, &c)| (k as u64 * c) as f64 / n)
                .collect()
        });
        EmpiricalMeasure {
            f,
            p,
            sites: self.sites,
            particles: self.particles,
        }
    }
}

/// Fractions of sites (`f`) and of particles (`p`) per occupation class.
/// `p[0]` is always 0; `p` is absent for an empty system.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalMeasure {
    pub f: Vec<f64>,
    pub p: Option<Vec<f64>>,
    pub sites: u64,
    pub particles: u64,
}

/// Configuration over the `L - 1` untagged sites plus the occupation `w` of
/// the tagged particle's site (which counts the tagged particle itself).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaggedState {
    pub(crate) env: ClassConfig,
    pub(crate) w: u64,
}

impl TaggedState {
    pub fn new(env: ClassConfig, w: u64) -> Result<Self> {
        if w == 0 {
            return Err(Error::InvalidParameter("tagged site occupation must be >= 1".into()));
        }
        Ok(Self { env, w })
    }

    pub fn env(&self) -> &ClassConfig {
        &self.env
    }

    pub fn w(&self) -> u64 {
        self.w
    }

    pub fn sites(&self) -> u64 {
        self.env.sites + 1
    }

    pub fn particles(&self) -> u64 {
        self.env.particles + self.w
    }

    /// The whole configuration with the tag forgotten.
    pub fn full(&self) -> ClassConfig {
        let mut cfg = self.env.clone();
        cfg.add_site(self.w as usize);
        cfg
    }

    pub fn check(&self, sites: u64, particles: u64) -> Result<()> {
        if self.w == 0 {
            return Err(Error::Invariant("tagged occupation dropped to 0".into()));
        }
        self.env.check(sites - 1, particles.checked_sub(self.w).ok_or_else(|| {
            Error::Invariant(format!("tagged occupation {} exceeds N = {particles}", self.w))
        })?)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TagPlacement {
    /// Tag a particle added to site 1.
    #[default]
    Fixed,
    /// Tag a particle added to a uniformly chosen site.
    Uniform,
    /// Tag a particle added to a maximally occupied site. Its occupation grows
    /// like `log L`; only useful as a negative experiment.
    Max,
}

/// `N - 1` particles are placed independently and uniformly; the tagged
/// particle is then added according to `tag`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct InitScheme {
    pub tag: TagPlacement,
}

/// Samples per-site occupations of the `N - 1` background particles.
pub fn sample_background<R: Rng + ?Sized>(sites: u64, particles: u64, rng: &mut R) -> Vec<u64> {
    let mut occ = vec![0u64; sites as usize];
    for _ in 0..particles {
        occ[rng.random_range(0..sites as usize)] += 1;
    }
    occ
}

pub fn sample_initial<R: Rng + ?Sized>(
    sites: u64,
    particles: u64,
    scheme: InitScheme,
    rng: &mut R,
) -> Result<TaggedState> {
    if sites < 2 {
        return Err(Error::InvalidLattice(sites));
    }
    if particles == 0 {
        return Err(Error::InvalidParameter("need N >= 1 to tag a particle".into()));
    }
    let mut occ = sample_background(sites, particles - 1, rng);
    let x = match scheme.tag {
        TagPlacement::Fixed => 0,
        TagPlacement::Uniform => rng.random_range(0..sites as usize),
        TagPlacement::Max => {
            // first maximal site; occupations are exchangeable so ties are harmless
            let max = *occ.iter().max().unwrap();
            occ.iter().position(|&o| o == max).unwrap()
        }
    };
    let w = occ.swap_remove(x) + 1;
    let env = ClassConfig::from_occupations(&occ)?;
    TaggedState::new(env, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(pairs: &[(usize, u64)]) -> ClassConfig {
        let max = pairs.iter().map(|p| p.0).max().unwrap();
        let mut counts = vec![0; max + 1];
        for &(k, n) in pairs {
            counts[k] = n;
        }
        ClassConfig::from_counts(counts).unwrap()
    }

    #[test]
    fn measures() {
        let m = cfg(&[(2, 1), (0, 1)]).empirical_measure();
        assert_eq!(m.f, vec![0.5, 0.0, 0.5]);
        assert_eq!(m.p.unwrap(), vec![0.0, 0.0, 1.0]);

        let m = cfg(&[(1, 7)]).empirical_measure();
        assert_eq!(m.f[1], 1.0);
        assert_eq!(m.p.unwrap()[1], 1.0);

        let m = cfg(&[(0, 1), (1, 1), (2, 1)]).empirical_measure();
        let p = m.p.unwrap();
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-15 && (p[2] - 2.0 / 3.0).abs() < 1e-15);

        assert!(ClassConfig::empty(4).empirical_measure().p.is_none());
    }

    #[test]
    fn moments() {
        let c = cfg(&[(3, 1), (0, 2)]);
        assert_eq!(c.moment(0).unwrap(), 1.0);
        assert_eq!(c.moment(1).unwrap(), 1.0);
        assert_eq!(c.moment(2).unwrap(), 3.0);
        assert!(matches!(c.moment(7), Err(Error::MomentOverflow { order: 7 })));
        // 10^7 particles on one site: k^6 = 1e42 overflows u128
        let huge = cfg(&[(10_000_000, 1), (0, 1)]);
        assert!(huge.moment(5).is_ok());
        assert!(matches!(huge.moment(6), Err(Error::MomentOverflow { .. })));
    }

    #[test]
    fn same_class_move() {
        let mut c = cfg(&[(1, 2)]);
        c.move_particle(1, 1);
        assert_eq!(c.counts(), &[1, 0, 1]);
        c.check(2, 2).unwrap();
    }

    #[test]
    fn single_particle_initial_condition() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let st = sample_initial(2, 1, InitScheme::default(), &mut rng).unwrap();
        assert_eq!(st.w(), 1);
        assert_eq!(st.env().counts(), &[1]);
        assert!(matches!(
            sample_initial(1, 1, InitScheme::default(), &mut rng),
            Err(Error::InvalidLattice(1))
        ));
    }

    /// Background occupation classes for L = N = 10^4 against the exact
    /// Binomial(N - 1, 1/L) occupancy law.
    #[test]
    fn background_is_binomial() {
        let (l, n) = (10_000u64, 10_000u64);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let st = sample_initial(l, n, InitScheme::default(), &mut rng).unwrap();
        let full = st.full();
        let trials = n - 1;
        let p = 1.0 / l as f64;
        let mut pmf = (1.0 - p).powi(trials as i32);
        for k in 0..8usize {
            // the tagged site perturbs one count by at most 1
            let observed = full.count(k) as f64 / l as f64;
            let sigma = (pmf * (1.0 - pmf) / l as f64).sqrt() + 1.0 / l as f64;
            assert!(
                (observed - pmf).abs() < 3.0 * sigma,
                "k={k}: observed {observed}, expected {pmf}"
            );
            pmf *= (trials - k as u64) as f64 / (k as f64 + 1.0) * p / (1.0 - p);
        }
    }

    /// L = N = 3 with a uniformly placed tag: P(W(0) = 1) by brute-force
    /// enumeration over all 3^2 placements and 3 tag sites.
    #[test]
    fn uniform_tag_small_system() {
        let mut exact = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                for x in 0..3 {
                    let occ = u32::from(a == x) + u32::from(b == x);
                    if occ == 0 {
                        exact += 1.0 / 27.0;
                    }
                }
            }
        }
        assert!((exact - 4.0 / 9.0) < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let scheme = InitScheme {
            tag: TagPlacement::Uniform,
        };
        let reps = 100_000;
        let hits = (0..reps)
            .filter(|_| sample_initial(3, 3, scheme, &mut rng).unwrap().w() == 1)
            .count();
        let freq = hits as f64 / reps as f64;
        let sigma = (exact * (1.0 - exact) / reps as f64).sqrt();
        assert!((freq - exact).abs() < 3.0 * sigma, "{freq} vs {exact}");
    }

    #[test]
    fn max_site_tag_picks_largest() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let scheme = InitScheme { tag: TagPlacement::Max };
        for _ in 0..50 {
            let st = sample_initial(20, 30, scheme, &mut rng).unwrap();
            assert!(st.w() as usize > st.env().max_occupation());
        }
    }

    proptest! {
        #[test]
        fn initial_states_are_consistent(l in 2u64..60, n in 1u64..120, seed in any::<u64>(), tag in 0usize..3) {
            let tag = [TagPlacement::Fixed, TagPlacement::Uniform, TagPlacement::Max][tag];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let st = sample_initial(l, n, InitScheme { tag }, &mut rng).unwrap();
            st.check(l, n).unwrap();
            let full = st.full();
            full.check(l, n).unwrap();
            let m = full.empirical_measure();
            let fsum: f64 = m.f.iter().sum();
            let psum: f64 = m.p.unwrap().iter().sum();
            prop_assert!((fsum - 1.0).abs() < 1e-12);
            prop_assert!((psum - 1.0).abs() < 1e-12);
            prop_assert!((full.moment(1).unwrap() - n as f64 / l as f64).abs() < 1e-12);
        }

        #[test]
        fn moments_monotone_when_all_occupied(occ in proptest::collection::vec(1u64..40, 1..30)) {
            let c = ClassConfig::from_occupations(&occ).unwrap();
            for n in 0..6 {
                prop_assert!(c.moment(n).unwrap() <= c.moment(n + 1).unwrap());
            }
        }
    }
}
