//! Jump-rate kernels `c(k, l)`: the rate at which a site holding `k`
//! particles sends one particle to a given site holding `l`.
//!
//! Every kernel satisfies `c(0, l) = 0` and the bilinear bound
//! `c(k, l) <= C k (1 + l)`. The constant `C` is stored with the kernel,
//! since the dominating process in [`crate::coupling`] is built from it.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Rates tabulated on a finite grid; row index `k`, column index `l`.
#[derive(Clone, Debug, PartialEq)]
pub struct RateTable {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl RateTable {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_rows = rows.len();
        if n_rows < 2 {
            return Err(Error::InvalidKernel(
                "rate table needs rows for k = 0 and k = 1".into(),
            ));
        }
        let cols = rows[0].len();
        if cols == 0 || rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidKernel("rate table rows must be non-empty and of equal length".into()));
        }
        let values: Vec<f64> = rows.into_iter().flatten().collect();
        for (i, &v) in values.iter().enumerate() {
            let (k, l) = (i / cols, i % cols);
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidKernel(format!("c({k},{l}) = {v} is not a finite non-negative rate")));
            }
            if k == 0 && v != 0.0 {
                return Err(Error::InvalidKernel(format!("c(0,{l}) = {v}, must be 0")));
            }
            if k > 0 && v == 0.0 {
                return Err(Error::InvalidKernel(format!("c({k},{l}) = 0, occupied sites must jump")));
            }
        }
        Ok(Self {
            rows: n_rows,
            cols,
            values,
        })
    }

    /// Reads a comma-separated matrix, one row per `k` starting at 0.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    msg: format!("line {}: {e}", lineno + 1),
                })?;
            rows.push(row);
        }
        Self::new(rows)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    fn get(&self, k: usize, l: usize) -> Option<f64> {
        (k < self.rows && l < self.cols).then(|| self.values[k * self.cols + l])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum KernelFamily {
    /// `c(k, l) = k`
    IndependentWalkers,
    /// `c(k, l) = 1 + b/k` for `k >= 1`, independent of `l`.
    ZeroRange { b: f64 },
    /// `c(k, l) = k (d + l)`
    Inclusion { d: f64 },
    Table(Arc<RateTable>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateKernel {
    family: KernelFamily,
    bound: f64,
}

/// Result of scanning a kernel for the bilinear bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Sublinearity {
    /// Smallest `C` with `c(k,l) <= C k (1+l)` over the scanned grid.
    Certified { c_min: f64 },
    /// First grid point where the ratio exceeds the declared constant.
    Violation { k: usize, l: usize },
}

impl RateKernel {
    pub fn independent_walkers() -> Self {
        Self {
            family: KernelFamily::IndependentWalkers,
            bound: 1.0,
        }
    }

    pub fn zero_range(b: f64) -> Result<Self> {
        if !(b.is_finite() && b >= 0.0) {
            return Err(Error::InvalidKernel(format!("zero-range parameter b = {b} must be >= 0")));
        }
        Ok(Self {
            family: KernelFamily::ZeroRange { b },
            bound: 1.0 + b,
        })
    }

    pub fn inclusion(d: f64) -> Result<Self> {
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::InvalidKernel(format!("inclusion parameter d = {d} must be > 0")));
        }
        Ok(Self {
            family: KernelFamily::Inclusion { d },
            bound: d.max(1.0),
        })
    }

    /// Builds a tabulated kernel. Without a declared constant the smallest
    /// valid one is taken from the table; a declared constant that the table
    /// exceeds is rejected.
    pub fn table(table: RateTable, declared: Option<f64>) -> Result<Self> {
        let c_min = table_ratio_max(&table);
        let bound = match declared {
            Some(c) if !(c.is_finite() && c > 0.0) => {
                return Err(Error::InvalidKernel(format!("declared constant {c} must be positive")))
            }
            Some(c) if c_min > c * (1.0 + 1e-12) => {
                return Err(Error::InvalidKernel(format!(
                    "table needs C >= {c_min}, declared {c}"
                )))
            }
            Some(c) => c,
            None => c_min,
        };
        Ok(Self {
            family: KernelFamily::Table(Arc::new(table)),
            bound,
        })
    }

    pub fn family(&self) -> &KernelFamily {
        &self.family
    }

    /// The declared constant `C` of the bilinear bound.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// Largest `k` and `l` the kernel can be evaluated at.
    pub fn domain(&self) -> (usize, usize) {
        match &self.family {
            KernelFamily::Table(t) => (t.rows - 1, t.cols - 1),
            _ => (usize::MAX, usize::MAX),
        }
    }

    /// Checks that every `c(k, l)` with `k, l <= max_occupation` is available.
    pub fn ensure_covers(&self, max_occupation: usize) -> Result<()> {
        match &self.family {
            KernelFamily::Table(t) if max_occupation >= t.rows || max_occupation >= t.cols => {
                Err(Error::TableOutOfRange {
                    k: max_occupation,
                    l: max_occupation,
                    rows: t.rows,
                    cols: t.cols,
                })
            }
            _ => Ok(()),
        }
    }

    pub fn evaluate(&self, k: usize, l: usize) -> Result<f64> {
        if k == 0 {
            return Ok(0.0);
        }
        match &self.family {
            KernelFamily::Table(t) => t.get(k, l).ok_or(Error::TableOutOfRange {
                k,
                l,
                rows: t.rows,
                cols: t.cols,
            }),
            _ => Ok(self.rate(k, l)),
        }
    }

    /// Unchecked evaluation for hot loops. Table kernels must have been
    /// validated with [`ensure_covers`](Self::ensure_covers) first.
    #[inline]
    pub fn rate(&self, k: usize, l: usize) -> f64 {
        if k == 0 {
            return 0.0;
        }
        match &self.family {
            KernelFamily::IndependentWalkers => k as f64,
            KernelFamily::ZeroRange { b } => 1.0 + b / k as f64,
            KernelFamily::Inclusion { d } => k as f64 * (d + l as f64),
            KernelFamily::Table(t) => t.values[k * t.cols + l],
        }
    }

    /// Scans `1..=k_max` x `0..=l_max` (clipped to the table for tabulated
    /// kernels) for the smallest bilinear constant.
    pub fn certify_sublinearity(&self, k_max: usize, l_max: usize) -> Result<Sublinearity> {
        if k_max == 0 || l_max == 0 {
            return Err(Error::InvalidParameter("certification grid needs k_max, l_max >= 1".into()));
        }
        let (dk, dl) = self.domain();
        let (k_max, l_max) = (k_max.min(dk), l_max.min(dl));
        let mut c_min = 0.0_f64;
        for k in 1..=k_max {
            for l in 0..=l_max {
                let ratio = self.rate(k, l) / (k as f64 * (1.0 + l as f64));
                if ratio > self.bound * (1.0 + 1e-12) {
                    return Ok(Sublinearity::Violation { k, l });
                }
                c_min = c_min.max(ratio);
            }
        }
        Ok(Sublinearity::Certified { c_min })
    }
}

fn table_ratio_max(t: &RateTable) -> f64 {
    let mut c = 0.0_f64;
    for k in 1..t.rows {
        for l in 0..t.cols {
            c = c.max(t.values[k * t.cols + l] / (k as f64 * (1.0 + l as f64)));
        }
    }
    c
}

impl fmt::Display for RateKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.family {
            KernelFamily::IndependentWalkers => write!(f, "independent"),
            KernelFamily::ZeroRange { b } => write!(f, "zero-range(b={b})"),
            KernelFamily::Inclusion { d } => write!(f, "inclusion(d={d})"),
            KernelFamily::Table(t) => write!(f, "table({}x{}, C={})", t.rows, t.cols, self.bound),
        }
    }
}
