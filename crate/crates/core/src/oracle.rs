//! Exact transient laws of tiny systems.
//!
//! Configurations of `L` labelled sites (and, for the tagged chain, the site
//! of the tag) are enumerated, the rate matrix is assembled densely and
//! `p(0) e^{Qt}` is evaluated by uniformization.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::kernel::RateKernel;
use crate::state::{ClassConfig, TagPlacement};

pub const MAX_SITES: u64 = 6;
pub const MAX_PARTICLES: u64 = 6;
pub const STATE_LIMIT: usize = 100_000;

/// Poisson tail mass left out of each uniformization series.
pub const TAIL: f64 = 1e-12;

/// Largest `Lambda * dt` per uniformization chunk.
const CHUNK: f64 = 50.0;

#[derive(Clone, Debug)]
pub struct ExactChain {
    sites: u64,
    particles: u64,
    tagged: bool,
    occupations: Vec<Vec<u64>>,
    tags: Vec<usize>,
    index: HashMap<(Vec<u64>, usize), usize>,
    q: Vec<f64>,
    /// Off-diagonal non-zeros per row, `(column, rate)`.
    sparse: Vec<Vec<(usize, f64)>>,
}

fn compositions(sites: usize, particles: u64) -> Vec<Vec<u64>> {
    fn rec(prefix: &mut Vec<u64>, left: u64, slots: usize, out: &mut Vec<Vec<u64>>) {
        if slots == 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for v in (0..=left).rev() {
            prefix.push(v);
            rec(prefix, left - v, slots - 1, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(sites), particles, sites, &mut out);
    out
}

fn binomial(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Enumerates the state space and assembles `Q`. Untagged chains have
/// `C(N+L-1, L-1)` states; tagged chains pair every configuration with each
/// occupied site.
pub fn build_chain(sites: u64, particles: u64, kernel: &RateKernel, tagged: bool) -> Result<ExactChain> {
    if sites < 2 {
        return Err(Error::InvalidLattice(sites));
    }
    if sites > MAX_SITES || particles > MAX_PARTICLES {
        return Err(Error::InvalidParameter(format!(
            "exact chains need L <= {MAX_SITES} and N <= {MAX_PARTICLES}"
        )));
    }
    if tagged && particles == 0 {
        return Err(Error::InvalidParameter("a tagged chain needs N >= 1".into()));
    }
    let expected = binomial(particles + sites - 1, sites - 1) * if tagged { sites as f64 } else { 1.0 };
    if expected > STATE_LIMIT as f64 {
        return Err(Error::StateGuard {
            states: expected as usize,
            limit: STATE_LIMIT,
        });
    }
    kernel.ensure_covers(particles as usize)?;
    let configs = compositions(sites as usize, particles);
    let mut occupations = Vec::new();
    let mut tags = Vec::new();
    for occ in configs {
        if tagged {
            for x in 0..occ.len() {
                if occ[x] > 0 {
                    occupations.push(occ.clone());
                    tags.push(x);
                }
            }
        } else {
            occupations.push(occ);
            tags.push(usize::MAX);
        }
    }
    let n = occupations.len();
    let index: HashMap<(Vec<u64>, usize), usize> = occupations
        .iter()
        .cloned()
        .zip(tags.iter().copied())
        .enumerate()
        .map(|(i, key)| (key, i))
        .collect();
    let norm = 1.0 / (sites - 1) as f64;
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        let occ = &occupations[i];
        let tag = tags[i];
        let mut add = |dest: Vec<u64>, dest_tag: usize, rate: f64| {
            if rate > 0.0 {
                let j = index[&(dest, dest_tag)];
                q[i * n + j] += rate;
                q[i * n + i] -= rate;
            }
        };
        for x in 0..occ.len() {
            if occ[x] == 0 {
                continue;
            }
            for y in 0..occ.len() {
                if y == x {
                    continue;
                }
                let rate = kernel.rate(occ[x] as usize, occ[y] as usize) * norm;
                let mut dest = occ.clone();
                dest[x] -= 1;
                dest[y] += 1;
                if tagged && x == tag {
                    let h = occ[x] as f64;
                    add(dest.clone(), tag, rate * (h - 1.0) / h);
                    add(dest, y, rate / h);
                } else {
                    add(dest, tag, rate);
                }
            }
        }
    }
    let sparse = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i && q[i * n + j] != 0.0)
                .map(|j| (j, q[i * n + j]))
                .collect()
        })
        .collect();
    Ok(ExactChain {
        sites,
        particles,
        tagged,
        occupations,
        tags,
        index,
        q,
        sparse,
    })
}

impl ExactChain {
    pub fn len(&self) -> usize {
        self.occupations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupations.is_empty()
    }

    pub fn sites(&self) -> u64 {
        self.sites
    }

    pub fn particles(&self) -> u64 {
        self.particles
    }

    pub fn is_tagged(&self) -> bool {
        self.tagged
    }

    /// Site occupations of state `i` and the tag site, if any.
    pub fn state(&self, i: usize) -> (&[u64], Option<usize>) {
        let tag = if self.tagged { Some(self.tags[i]) } else { None };
        (&self.occupations[i], tag)
    }

    pub fn index_of(&self, occupations: &[u64], tag: Option<usize>) -> Option<usize> {
        self.index
            .get(&(occupations.to_vec(), tag.unwrap_or(usize::MAX)))
            .copied()
    }

    pub fn q(&self, i: usize, j: usize) -> f64 {
        self.q[i * self.len() + j]
    }

    /// Largest `|sum_j Q_ij|`.
    pub fn max_row_sum(&self) -> f64 {
        let n = self.len();
        (0..n)
            .map(|i| self.q[i * n..(i + 1) * n].iter().sum::<f64>().abs())
            .fold(0.0, f64::max)
    }

    pub fn uniformization_rate(&self) -> f64 {
        (0..self.len()).map(|i| -self.q(i, i)).fold(0.0, f64::max)
    }

    /// `v P` with `P = I + Q / lambda`.
    fn step(&self, v: &[f64], lambda: f64, out: &mut [f64]) {
        let n = self.len();
        for j in 0..n {
            out[j] = v[j] * (1.0 + self.q[j * n + j] / lambda);
        }
        for (i, row) in self.sparse.iter().enumerate() {
            if v[i] == 0.0 {
                continue;
            }
            for &(j, r) in row {
                out[j] += v[i] * r / lambda;
            }
        }
    }

    /// `v Q`
    pub fn apply_generator(&self, v: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut out = vec![0.0; n];
        for i in 0..n {
            out[i] += v[i] * self.q[i * n + i];
            for &(j, r) in &self.sparse[i] {
                out[j] += v[i] * r;
            }
        }
        out
    }
}

fn check_distribution(chain: &ExactChain, p0: &[f64]) -> Result<()> {
    if p0.len() != chain.len() {
        return Err(Error::InvalidParameter(format!(
            "initial law has {} entries, chain has {} states",
            p0.len(),
            chain.len()
        )));
    }
    let total: f64 = p0.iter().sum();
    if (total - 1.0).abs() > 1e-9 || p0.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::InvalidParameter("initial law must be a probability vector".into()));
    }
    Ok(())
}

/// `p0 e^{Qt}` by uniformization. Each chunk keeps the leading Poisson terms
/// until the neglected mass falls below [`TAIL`]; `depth` multiplies the
/// number of terms kept.
pub fn transient_with_depth(chain: &ExactChain, p0: &[f64], t: f64, depth: f64) -> Result<Vec<f64>> {
    check_distribution(chain, p0)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("time {t} must be finite and >= 0")));
    }
    let lambda = chain.uniformization_rate();
    if t == 0.0 || lambda == 0.0 {
        return Ok(p0.to_vec());
    }
    let chunks = (lambda * t / CHUNK).ceil().max(1.0) as usize;
    let dt = t / chunks as f64;
    let mean = lambda * dt;
    let mut weights = vec![(-mean).exp()];
    let mut cum = weights[0];
    while 1.0 - cum > TAIL {
        let k = weights.len() as f64;
        let next = weights.last().unwrap() * mean / k;
        weights.push(next);
        cum += next;
    }
    let terms = ((weights.len() as f64) * depth).ceil() as usize;
    while weights.len() < terms {
        let k = weights.len() as f64;
        let next = weights.last().unwrap() * mean / k;
        weights.push(next);
    }
    let n = chain.len();
    let mut v = p0.to_vec();
    let mut power = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut acc = vec![0.0; n];
    for _ in 0..chunks {
        power.copy_from_slice(&v);
        acc.iter_mut().for_each(|a| *a = 0.0);
        for (m, w) in weights.iter().take(terms).enumerate() {
            if m > 0 {
                chain.step(&power, lambda, &mut scratch);
                std::mem::swap(&mut power, &mut scratch);
            }
            for (a, p) in acc.iter_mut().zip(&power) {
                *a += w * p;
            }
        }
        std::mem::swap(&mut v, &mut acc);
    }
    Ok(v)
}

pub fn transient(chain: &ExactChain, p0: &[f64], t: f64) -> Result<Vec<f64>> {
    transient_with_depth(chain, p0, t, 1.0)
}

/// Law of the initial condition: `N` (untagged) or `N - 1` (tagged)
/// particles placed independently and uniformly; the tag then joins a site
/// chosen by `tag`.
pub fn initial_law(chain: &ExactChain, tag: TagPlacement) -> Result<Vec<f64>> {
    let l = chain.sites as usize;
    let background = if chain.tagged { chain.particles - 1 } else { chain.particles };
    let mut law = vec![0.0; chain.len()];
    let ln_fact = |n: u64| (1..=n).map(|i| (i as f64).ln()).sum::<f64>();
    for occ in compositions(l, background) {
        let ln_p = ln_fact(background) - occ.iter().map(|&o| ln_fact(o)).sum::<f64>()
            - background as f64 * (l as f64).ln();
        let p = ln_p.exp();
        if !chain.tagged {
            law[chain.index_of(&occ, None).unwrap()] += p;
            continue;
        }
        let placements: Vec<(usize, f64)> = match tag {
            TagPlacement::Fixed => vec![(0, 1.0)],
            TagPlacement::Uniform => (0..l).map(|x| (x, 1.0 / l as f64)).collect(),
            TagPlacement::Max => {
                let max = *occ.iter().max().unwrap();
                vec![(occ.iter().position(|&o| o == max).unwrap(), 1.0)]
            }
        };
        for (x, px) in placements {
            let mut full = occ.clone();
            full[x] += 1;
            law[chain.index_of(&full, Some(x)).unwrap()] += p * px;
        }
    }
    Ok(law)
}

/// Aggregated views of a law on the chain.
#[derive(Clone, Debug, PartialEq)]
pub struct Marginals {
    /// Law of the class counts `n_k` (trailing zeros trimmed).
    pub class_law: BTreeMap<Vec<u64>, f64>,
    /// Expected empirical measure `E F_k`.
    pub mean_f: Vec<f64>,
    /// Law of the tagged occupation `W`, tagged chains only.
    pub w_law: Option<Vec<f64>>,
}

pub fn marginals(chain: &ExactChain, dist: &[f64]) -> Result<Marginals> {
    if dist.len() != chain.len() {
        return Err(Error::InvalidParameter("distribution does not match the chain".into()));
    }
    let mut class_law = BTreeMap::new();
    let mut mean_f = vec![0.0; chain.particles as usize + 1];
    let mut w_law = chain.tagged.then(|| vec![0.0; chain.particles as usize + 1]);
    for (i, &p) in dist.iter().enumerate() {
        let (occ, tag) = chain.state(i);
        let cfg = ClassConfig::from_occupations(occ)?;
        *class_law.entry(cfg.counts().to_vec()).or_insert(0.0) += p;
        for &o in occ {
            mean_f[o as usize] += p / chain.sites as f64;
        }
        if let (Some(w), Some(x)) = (w_law.as_mut(), tag) {
            w[occ[x] as usize] += p;
        }
    }
    Ok(Marginals {
        class_law,
        mean_f,
        w_law,
    })
}

/// Total variation between two laws keyed by class counts.
pub fn class_law_distance(a: &BTreeMap<Vec<u64>, f64>, b: &BTreeMap<Vec<u64>, f64>) -> f64 {
    let mut keys: Vec<&Vec<u64>> = a.keys().chain(b.keys()).collect();
    keys.sort();
    keys.dedup();
    0.5 * keys
        .into_iter()
        .map(|k| (a.get(k).copied().unwrap_or(0.0) - b.get(k).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iw() -> RateKernel {
        RateKernel::independent_walkers()
    }

    #[test]
    fn two_sites_two_particles() {
        let ch = build_chain(2, 2, &iw(), false).unwrap();
        assert_eq!(ch.len(), 3);
        let i20 = ch.index_of(&[2, 0], None).unwrap();
        let i11 = ch.index_of(&[1, 1], None).unwrap();
        let i02 = ch.index_of(&[0, 2], None).unwrap();
        assert_eq!(ch.q(i20, i11), 2.0);
        assert_eq!(ch.q(i11, i20), 1.0);
        assert_eq!(ch.q(i11, i02), 1.0);
        assert_eq!(ch.q(i20, i02), 0.0);
        assert!(ch.max_row_sum() < 1e-12);

        let mut p0 = vec![0.0; 3];
        p0[i20] = 1.0;
        assert_eq!(transient(&ch, &p0, 0.0).unwrap(), p0);
        let p = transient(&ch, &p0, 40.0).unwrap();
        assert!((p[i20] - 0.25).abs() < 1e-12);
        assert!((p[i11] - 0.5).abs() < 1e-12);
        assert!((p[i02] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn uniform_law_aggregates_to_classes() {
        let ch = build_chain(2, 2, &iw(), false).unwrap();
        let m = marginals(&ch, &[1.0 / 3.0; 3]).unwrap();
        assert!((m.class_law[&vec![1, 0, 1]] - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.class_law[&vec![0, 2]] - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.class_law.values().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(m.w_law.is_none());
    }

    #[test]
    fn tagged_single_particle() {
        let ch = build_chain(2, 1, &iw(), true).unwrap();
        assert_eq!(ch.len(), 2);
        let a = ch.index_of(&[1, 0], Some(0)).unwrap();
        let b = ch.index_of(&[0, 1], Some(1)).unwrap();
        assert_eq!(ch.q(a, b), 1.0);
        assert_eq!(ch.q(b, a), 1.0);
    }

    #[test]
    fn state_counts_and_guards() {
        let kernel = RateKernel::zero_range(4.0).unwrap();
        for (l, n) in [(2u64, 3u64), (3, 3), (4, 2), (6, 6)] {
            let ch = build_chain(l, n, &kernel, false).unwrap();
            assert_eq!(ch.len() as f64, binomial(n + l - 1, l - 1));
            assert!(ch.max_row_sum() < 1e-12);
            let tch = build_chain(l, n, &kernel, true).unwrap();
            // each of the N particles can carry the tag: sum over states of occupied sites
            let occupied: usize = (0..ch.len()).map(|i| ch.state(i).0.iter().filter(|&&o| o > 0).count()).sum();
            assert_eq!(tch.len(), occupied);
            assert!(tch.max_row_sum() < 1e-12);
        }
        assert!(build_chain(7, 2, &kernel, false).is_err());
        assert!(build_chain(1, 2, &kernel, false).is_err());
    }

    #[test]
    fn multinomial_is_stationary_for_walkers() {
        for l in 2..=4u64 {
            for n in 1..=4u64 {
                let ch = build_chain(l, n, &iw(), false).unwrap();
                let pi = initial_law(&ch, TagPlacement::Fixed).unwrap();
                let flow = ch.apply_generator(&pi);
                assert!(flow.iter().all(|v| v.abs() < 1e-13), "L={l} N={n}");
                let mut p0 = vec![0.0; ch.len()];
                p0[0] = 1.0;
                let p = transient(&ch, &p0, 60.0).unwrap();
                let err = p.iter().zip(&pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(err < 1e-10, "L={l} N={n}: {err}");
            }
        }
    }

    #[test]
    fn doubled_depth_agrees() {
        let kernel = RateKernel::zero_range(4.0).unwrap();
        let ch = build_chain(3, 3, &kernel, true).unwrap();
        let p0 = initial_law(&ch, TagPlacement::Uniform).unwrap();
        for t in [0.5, 1.0, 7.0] {
            let a = transient(&ch, &p0, t).unwrap();
            let b = transient_with_depth(&ch, &p0, t, 2.0).unwrap();
            let err = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(err < 1e-12, "{err}");
            assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-11);
        }
    }

    #[test]
    fn symmetric_start_gives_symmetric_marginals() {
        let kernel = RateKernel::inclusion(0.5).unwrap();
        let ch = build_chain(3, 3, &kernel, true).unwrap();
        let p0 = initial_law(&ch, TagPlacement::Uniform).unwrap();
        let p = transient(&ch, &p0, 1.3).unwrap();
        // relabelling sites by a cyclic shift leaves the law unchanged
        for i in 0..ch.len() {
            let (occ, tag) = ch.state(i);
            let shifted: Vec<u64> = (0..3).map(|s| occ[(s + 1) % 3]).collect();
            let j = ch.index_of(&shifted, tag.map(|x| (x + 2) % 3)).unwrap();
            assert!((p[i] - p[j]).abs() < 1e-13);
        }
        let m = marginals(&ch, &p).unwrap();
        let w = m.w_law.unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(w[0], 0.0);
    }

    #[test]
    fn tagged_and_untagged_agree_on_classes() {
        let kernel = RateKernel::zero_range(4.0).unwrap();
        let a = build_chain(3, 3, &kernel, false).unwrap();
        let b = build_chain(3, 3, &kernel, true).unwrap();
        let pa = transient(&a, &initial_law(&a, TagPlacement::Fixed).unwrap(), 1.0).unwrap();
        // tag a uniformly chosen particle of the same N iid placements
        let mut pb0 = vec![0.0; b.len()];
        for (i, p) in initial_law(&a, TagPlacement::Fixed).unwrap().iter().enumerate() {
            let occ = a.state(i).0;
            for x in 0..3 {
                if occ[x] > 0 {
                    pb0[b.index_of(occ, Some(x)).unwrap()] += p * occ[x] as f64 / 3.0;
                }
            }
        }
        let pb = transient(&b, &pb0, 1.0).unwrap();
        let ma = marginals(&a, &pa).unwrap();
        let mb = marginals(&b, &pb).unwrap();
        assert!(class_law_distance(&ma.class_law, &mb.class_law) < 1e-12);
    }
}
