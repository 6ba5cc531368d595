use condensim::harness::{run_ips, run_tagged};
use condensim::oracle::{self, class_law_distance};
use condensim::stats::total_variation;
use condensim::{InitScheme, RateKernel, TagPlacement};

fn kernels() -> Vec<RateKernel> {
    vec![
        RateKernel::independent_walkers(),
        RateKernel::zero_range(4.0).unwrap(),
        RateKernel::inclusion(1.0).unwrap(),
    ]
}

#[test]
fn small_lattices_match_the_exact_law() {
    for (l, n) in [(2u64, 2u64), (3, 2)] {
        for kernel in kernels() {
            let chain = oracle::build_chain(l, n, &kernel, false).unwrap();
            let p0 = oracle::initial_law(&chain, TagPlacement::Fixed).unwrap();
            let ens = run_ips(&kernel, l, n, &[0.3, 1.0], 40_000, 11).unwrap();
            for (i, t) in [0.3, 1.0].into_iter().enumerate() {
                let exact = oracle::marginals(&chain, &oracle::transient(&chain, &p0, t).unwrap()).unwrap();
                let tv = class_law_distance(&ens.class_law(i), &exact.class_law);
                assert!(tv < 0.012, "{kernel} L={l} N={n} t={t}: TV {tv}");
            }
        }
    }
}

#[test]
fn tagged_chain_projects_onto_the_untagged_chain() {
    for kernel in kernels() {
        let plain = oracle::build_chain(3, 3, &kernel, false).unwrap();
        let tagged = oracle::build_chain(3, 3, &kernel, true).unwrap();
        let a = oracle::initial_law(&plain, TagPlacement::Fixed).unwrap();
        let b = oracle::initial_law(&tagged, TagPlacement::Fixed).unwrap();
        for t in [0.0, 0.7, 2.0] {
            let ma = oracle::marginals(&plain, &oracle::transient(&plain, &a, t).unwrap()).unwrap();
            let mb = oracle::marginals(&tagged, &oracle::transient(&tagged, &b, t).unwrap()).unwrap();
            assert!(class_law_distance(&ma.class_law, &mb.class_law) < 1e-10, "{kernel} t={t}");
            // the tag sits on a uniformly chosen particle: law(W) = E[k n_k / N]
            let w = mb.w_law.unwrap();
            for (k, wk) in w.iter().enumerate() {
                let want = k as f64 * ma.mean_f[k] * (3.0 / 3.0); // k E[F_k] L / N
                assert!((wk - want).abs() < 1e-10, "{kernel} t={t} k={k}: {wk} vs {want}");
            }
        }
    }
}

#[test]
fn tagged_simulator_matches_exact_law_of_w() {
    let kernel = RateKernel::inclusion(1.0).unwrap();
    let chain = oracle::build_chain(3, 2, &kernel, true).unwrap();
    let p0 = oracle::initial_law(&chain, TagPlacement::Fixed).unwrap();
    let exact = oracle::marginals(&chain, &oracle::transient(&chain, &p0, 0.8).unwrap()).unwrap();
    let ens = run_tagged(&kernel, 3, 2, InitScheme::default(), &[0.8], 50_000, 12).unwrap();
    let (law, _) = ens.w_law(0);
    let tv = total_variation(&law, exact.w_law.as_deref().unwrap());
    assert!(tv < 0.01, "TV {tv}");
    let cl = class_law_distance(&ens.class_law(0), &exact.class_law);
    assert!(cl < 0.01, "class law TV {cl}");
}
