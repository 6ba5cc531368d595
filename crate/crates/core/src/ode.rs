//! Dormand-Prince 5(4) stepping on growable state vectors.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;

// 5th-order weights (also the last stage row)
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;

// difference between 5th- and 4th-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

pub(crate) const H_MIN: f64 = 1e-12;

/// Right-hand side `dy = f(t, y)`.
pub(crate) trait System {
    fn rhs(&mut self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()>;

    /// Called after every accepted step; may append components (zeros) to
    /// `y` and returns whether it did.
    fn after_step(&mut self, _t: f64, _y: &mut Vec<f64>) -> Result<bool> {
        Ok(false)
    }
}

#[derive(Default)]
struct Stages {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
}

impl Stages {
    fn resize(&mut self, n: usize) {
        for v in self.k.iter_mut() {
            v.resize(n, 0.0);
        }
        self.tmp.resize(n, 0.0);
    }
}

/// One Dormand-Prince step; writes the 5th-order solution to `out` and the
/// embedded error estimate to `err`.
fn dp_step<S: System>(
    sys: &mut S,
    t: f64,
    y: &[f64],
    h: f64,
    st: &mut Stages,
    out: &mut [f64],
    err: &mut [f64],
) -> Result<()> {
    let n = y.len();
    sys.rhs(t, y, &mut st.k[0])?;
    let combos: [(&[f64], f64); 5] = [
        (&[A21], C2),
        (&[A31, A32], C3),
        (&[A41, A42, A43], C4),
        (&[A51, A52, A53, A54], C5),
        (&[A61, A62, A63, A64, A65], 1.0),
    ];
    for (s, (a, c)) in combos.iter().enumerate() {
        for i in 0..n {
            let mut acc = 0.0;
            for (j, aj) in a.iter().enumerate() {
                acc += aj * st.k[j][i];
            }
            st.tmp[i] = y[i] + h * acc;
        }
        let (_, rest) = st.k.split_at_mut(s + 1);
        sys.rhs(t + c * h, &st.tmp, &mut rest[0])?;
    }
    for i in 0..n {
        out[i] = y[i]
            + h * (B1 * st.k[0][i] + B3 * st.k[2][i] + B4 * st.k[3][i] + B5 * st.k[4][i] + B6 * st.k[5][i]);
    }
    sys.rhs(t + h, out, &mut st.k[6])?;
    for i in 0..n {
        err[i] = h
            * (E1 * st.k[0][i] + E3 * st.k[2][i] + E4 * st.k[3][i] + E5 * st.k[4][i] + E6 * st.k[5][i]
                + E7 * st.k[6][i]);
    }
    Ok(())
}

pub(crate) struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub min_component: f64,
}

/// Adaptive integration through the sorted output times `grid` (the first of
/// which is the start time). `record` receives the state at each grid time.
pub(crate) fn integrate_adaptive<S: System>(
    sys: &mut S,
    mut y: Vec<f64>,
    grid: &[f64],
    tol: f64,
    mut record: impl FnMut(f64, &[f64]),
) -> Result<StepStats> {
    let mut stats = StepStats {
        accepted: 0,
        rejected: 0,
        min_component: y.iter().copied().fold(f64::INFINITY, f64::min),
    };
    let Some((&t0, rest)) = grid.split_first() else {
        return Ok(stats);
    };
    record(t0, &y);
    let mut st = Stages::default();
    let mut out = vec![0.0; y.len()];
    let mut err = vec![0.0; y.len()];
    st.resize(y.len());
    let mut t = t0;
    let mut h = 1e-3_f64.min(rest.first().map_or(1.0, |&t1| t1 - t0).max(H_MIN));
    for &target in rest {
        while t < target {
            let last = t + h >= target;
            let step = if last { target - t } else { h };
            dp_step(sys, t, &y, step, &mut st, &mut out, &mut err)?;
            let norm = err
                .iter()
                .zip(y.iter().zip(&out))
                .map(|(e, (a, b))| e.abs() / (tol * (1.0 + a.abs().max(b.abs()))))
                .fold(0.0, f64::max);
            if !norm.is_finite() {
                return Err(Error::Stiffness { t, h: step, cutoff: y.len() });
            }
            if norm <= 1.0 {
                t = if last { target } else { t + step };
                std::mem::swap(&mut y, &mut out);
                stats.accepted += 1;
                stats.min_component = y.iter().copied().fold(stats.min_component, f64::min);
                if sys.after_step(t, &mut y)? {
                    let n = y.len();
                    out.resize(n, 0.0);
                    err.resize(n, 0.0);
                    st.resize(n);
                }
                let grow = if norm == 0.0 { 5.0 } else { (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0) };
                // a short final step says nothing about the next one
                if !last || step >= h {
                    h *= grow;
                }
            } else {
                stats.rejected += 1;
                h = step * (0.9 * norm.powf(-0.2)).clamp(0.1, 1.0);
                if h < H_MIN {
                    return Err(Error::Stiffness { t, h, cutoff: y.len() });
                }
            }
        }
        record(t, &y);
    }
    Ok(stats)
}

/// Fixed-step 5th-order integration from `t0` to `t1`.
pub(crate) fn integrate_fixed<S: System>(
    sys: &mut S,
    mut y: Vec<f64>,
    t0: f64,
    t1: f64,
    steps: usize,
) -> Result<Vec<f64>> {
    let h = (t1 - t0) / steps as f64;
    let mut st = Stages::default();
    st.resize(y.len());
    let mut out = vec![0.0; y.len()];
    let mut err = vec![0.0; y.len()];
    for i in 0..steps {
        dp_step(sys, t0 + i as f64 * h, &y, h, &mut st, &mut out, &mut err)?;
        std::mem::swap(&mut y, &mut out);
    }
    Ok(y)
}
