//! The law of the limit chain solves its forward equation; started from
//! `size_bias(f(0))` it must track `p(t)`.

use condensim::limit::limit_rates;
use condensim::meanfield::{self, MeanFieldParams, MeanFieldSolution};
use condensim::stats::total_variation;
use condensim::RateKernel;

fn solution(kernel: RateKernel, rho: f64, t_max: f64) -> MeanFieldSolution {
    let grid: Vec<f64> = (0..=(t_max * 100.0) as usize).map(|i| i as f64 * 0.01).collect();
    meanfield::integrate(&meanfield::poisson(rho).unwrap(), &kernel, &grid, MeanFieldParams::default()).unwrap()
}

/// `dq_j/dt = sum_w q_w Q_t(w, j)` on `1..=k_max`.
fn forward(q: &[f64], t: f64, sol: &MeanFieldSolution, k_max: usize) -> Vec<f64> {
    let mut d = vec![0.0; q.len()];
    for w in 1..=k_max {
        if q[w] == 0.0 {
            continue;
        }
        let r = limit_rates(w as u64, t, sol).unwrap();
        d[w] -= q[w] * r.total();
        if w < k_max {
            d[w + 1] += q[w] * r.birth;
        }
        d[w - 1] += q[w] * r.death;
        for (j, rate) in r.long_range.iter().enumerate().take(k_max + 1) {
            d[j] += q[w] * rate;
        }
    }
    d
}

fn solve_forward(sol: &MeanFieldSolution, t_end: f64, k_max: usize) -> Vec<f64> {
    let mut q = vec![0.0; k_max + 1];
    let p0 = meanfield::size_bias(&sol.states()[0], sol.rho()).unwrap();
    for (k, v) in p0.iter().enumerate().take(k_max + 1) {
        q[k] = *v;
    }
    let steps = (t_end / 0.0025).round() as usize;
    let h = t_end / steps as f64;
    let add = |a: &[f64], b: &[f64], s: f64| a.iter().zip(b).map(|(x, y)| x + s * y).collect::<Vec<_>>();
    for i in 0..steps {
        let t = i as f64 * h;
        let k1 = forward(&q, t, sol, k_max);
        let k2 = forward(&add(&q, &k1, h / 2.0), t + h / 2.0, sol, k_max);
        let k3 = forward(&add(&q, &k2, h / 2.0), t + h / 2.0, sol, k_max);
        let k4 = forward(&add(&q, &k3, h), (t + h).min(t_end), sol, k_max);
        for j in 0..q.len() {
            q[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }
    q
}

#[test]
fn forward_equation_reproduces_size_biased_law() {
    for (kernel, rho) in [(RateKernel::zero_range(4.0).unwrap(), 2.0), (RateKernel::inclusion(0.5).unwrap(), 1.0)] {
        let sol = solution(kernel.clone(), rho, 1.0);
        let q = solve_forward(&sol, 1.0, 60);
        let p = sol.p_at(1.0).unwrap();
        let tv = total_variation(&q, &p);
        assert!(tv < 1e-4, "{kernel}: TV {tv}");
        let mass: f64 = q.iter().sum();
        assert!((mass - 1.0).abs() < 1e-6, "{kernel}: mass {mass}");
    }
}
