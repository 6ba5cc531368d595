//! CSV and JSON output, and readers for everything written here.
//!
//! CSV bodies depend only on the configuration and the seed; timestamps go
//! to `meta.json` alone.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::RateKernel;
use crate::meanfield::{self, MeanFieldSolution};
use crate::state::ClassConfig;

/// Shortest round-trip decimal, switching to exponent form for very small
/// or large magnitudes.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// A CSV file held as strings.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        w.write_record(&self.header).map_err(|e| csv_err(path, e))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        let header = r
            .headers()
            .map_err(|e| csv_err(path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            rows.push(rec.map_err(|e| csv_err(path, e))?.iter().map(str::to_string).collect());
        }
        Ok(Self { header, rows })
    }

    fn index(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse {
                path: PathBuf::new(),
                msg: format!("missing column {name}"),
            })
    }

    pub fn column_f64(&self, name: &str) -> Result<Vec<f64>> {
        let i = self.index(name)?;
        self.rows
            .iter()
            .map(|r| {
                r[i].parse::<f64>().map_err(|e| Error::Parse {
                    path: PathBuf::new(),
                    msg: format!("column {name}: {e}"),
                })
            })
            .collect()
    }

    pub fn column_u64(&self, name: &str) -> Result<Vec<u64>> {
        let i = self.index(name)?;
        self.rows
            .iter()
            .map(|r| {
                r[i].parse::<u64>().map_err(|e| Error::Parse {
                    path: PathBuf::new(),
                    msg: format!("column {name}: {e}"),
                })
            })
            .collect()
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        msg: e.to_string(),
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Run description written next to the CSV files.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Meta {
    pub command: String,
    pub version: String,
    pub created_unix: u64,
    pub seed: u64,
    pub config: serde_json::Value,
    pub summary: serde_json::Value,
}

pub fn write_meta(dir: &Path, command: &str, seed: u64, config: &impl Serialize, summary: serde_json::Value) -> Result<()> {
    let meta = Meta {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        created_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        seed,
        config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
        summary,
    };
    let path = dir.join("meta.json");
    let text = serde_json::to_string_pretty(&meta).expect("meta serializes");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Header stored beside a configuration snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    #[serde(rename = "L")]
    pub sites: u64,
    #[serde(rename = "N")]
    pub particles: u64,
    pub seed: u64,
    pub model: String,
}

/// Writes `<stem>.csv` (`t,k,count`) and `<stem>.json`.
pub fn write_snapshot(dir: &Path, stem: &str, header: &SnapshotHeader, times: &[f64], configs: &[ClassConfig]) -> Result<()> {
    let mut t = CsvTable::new(&["t", "k", "count"]);
    for (time, cfg) in times.iter().zip(configs) {
        for (k, &n) in cfg.counts().iter().enumerate() {
            if n > 0 {
                t.push(vec![fmt_f64(*time), k.to_string(), n.to_string()]);
            }
        }
    }
    t.write(&dir.join(format!("{stem}.csv")))?;
    let path = dir.join(format!("{stem}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(header).expect("header serializes")).map_err(|e| Error::io(&path, e))
}

pub fn read_snapshot(dir: &Path, stem: &str) -> Result<(SnapshotHeader, Vec<(f64, ClassConfig)>)> {
    let path = dir.join(format!("{stem}.json"));
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let header: SnapshotHeader = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.clone(),
        msg: e.to_string(),
    })?;
    let t = CsvTable::read(&dir.join(format!("{stem}.csv")))?;
    let times = t.column_f64("t")?;
    let ks = t.column_u64("k")?;
    let counts = t.column_u64("count")?;
    let mut by_time: Vec<(f64, Vec<u64>)> = Vec::new();
    for ((time, k), n) in times.into_iter().zip(ks).zip(counts) {
        if by_time.last().is_none_or(|(t0, _)| *t0 != time) {
            by_time.push((time, Vec::new()));
        }
        let v = &mut by_time.last_mut().unwrap().1;
        if v.len() <= k as usize {
            v.resize(k as usize + 1, 0);
        }
        v[k as usize] = n;
    }
    let snaps = by_time
        .into_iter()
        .map(|(time, c)| Ok((time, ClassConfig::from_counts(c)?)))
        .collect::<Result<_>>()?;
    Ok((header, snaps))
}

/// `f.csv`, `p.csv`, `rates.csv` and `moments.csv` of a mean-field solution.
pub fn write_meanfield(dir: &Path, sol: &MeanFieldSolution) -> Result<()> {
    let mut f = CsvTable::new(&["t", "k", "f_k"]);
    let mut p = CsvTable::new(&["t", "k", "p_k"]);
    let mut rates = CsvTable::new(&["t", "k", "mu_k", "beta_k"]);
    let mut moments = CsvTable::new(&["t", "m1", "m2", "m3"]);
    for (i, (&t, state)) in sol.grid().iter().zip(sol.states()).enumerate() {
        let ts = fmt_f64(t);
        let pk = meanfield::size_bias(state, sol.rho())?;
        let r = sol.rates_at(i)?;
        for k in 0..state.len() {
            f.push(vec![ts.clone(), k.to_string(), fmt_f64(state[k])]);
            p.push(vec![ts.clone(), k.to_string(), fmt_f64(pk[k])]);
            rates.push(vec![ts.clone(), k.to_string(), fmt_f64(r.mu[k]), fmt_f64(r.beta[k])]);
        }
        moments.push(vec![
            ts,
            fmt_f64(sol.moment(i, 1)),
            fmt_f64(sol.moment(i, 2)),
            fmt_f64(sol.moment(i, 3)),
        ]);
    }
    f.write(&dir.join("f.csv"))?;
    p.write(&dir.join("p.csv"))?;
    rates.write(&dir.join("rates.csv"))?;
    moments.write(&dir.join("moments.csv"))
}

/// Rebuilds a solution from the `f.csv` in `dir`.
pub fn read_meanfield(dir: &Path, kernel: RateKernel) -> Result<MeanFieldSolution> {
    let path = dir.join("f.csv");
    let t = CsvTable::read(&path)?;
    let times = t.column_f64("t")?;
    let ks = t.column_u64("k")?;
    let vals = t.column_f64("f_k")?;
    let mut grid: Vec<f64> = Vec::new();
    let mut states: Vec<Vec<f64>> = Vec::new();
    for ((time, k), v) in times.into_iter().zip(ks).zip(vals) {
        if grid.last() != Some(&time) {
            grid.push(time);
            states.push(Vec::new());
        }
        let s = states.last_mut().unwrap();
        if s.len() != k as usize {
            return Err(Error::Parse {
                path: path.clone(),
                msg: format!("classes at t = {time} are not listed as 0, 1, 2, .."),
            });
        }
        s.push(v);
    }
    MeanFieldSolution::from_states(kernel, grid, states)
}

/// Reads an initial law from `k,f_k` rows.
pub fn read_f0(path: &Path) -> Result<Vec<f64>> {
    let t = CsvTable::read(path)?;
    let ks = t.column_u64("k")?;
    let vals = t.column_f64("f_k")?;
    let mut f = BTreeMap::new();
    for (k, v) in ks.into_iter().zip(vals) {
        f.insert(k as usize, v);
    }
    let n = f.keys().next_back().map_or(0, |k| k + 1);
    let mut out = vec![0.0; n];
    for (k, v) in f {
        out[k] = v;
    }
    Ok(out)
}
