use std::io::{BufRead, Write};

use crate::{is_missing, Error, Result, MISSING};

/// Labeled feature rows, row-major. Missing values are NaN.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainPool {
    n_features: usize,
    features: Vec<f64>,
    labels: Vec<u8>,
}

impl TrainPool {
    pub fn new(n_features: usize) -> Self {
        TrainPool {
            n_features,
            ..Default::default()
        }
    }

    pub fn push(&mut self, label: u8, row: &[f64]) -> Result<()> {
        if row.len() != self.n_features {
            return Err(Error::SchemaMismatch {
                expected: self.n_features,
                got: row.len(),
            });
        }
        if label > 1 {
            return Err(Error::Config(format!("label must be 0 or 1, got {label}")));
        }
        self.features.extend_from_slice(row);
        self.labels.push(label);
        Ok(())
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn n_positive(&self) -> usize {
        self.labels.iter().filter(|&&c| c == 1).count()
    }

    /// Copy of the pool with the masked-out columns set to missing.
    pub fn masked(&self, keep: &[bool]) -> TrainPool {
        let mut out = self.clone();
        for row in out.features.chunks_mut(self.n_features) {
            for (v, &k) in row.iter_mut().zip(keep) {
                if !k {
                    *v = MISSING;
                }
            }
        }
        out
    }

    /// Rows `idx` in the given order.
    pub fn select(&self, idx: &[usize]) -> TrainPool {
        let mut out = TrainPool::new(self.n_features);
        for &i in idx {
            out.features.extend_from_slice(self.row(i));
            out.labels.push(self.labels[i]);
        }
        out
    }
}

pub const MISSING_BIN: u16 = u16::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binning {
    /// Up to this many equal-frequency bins per feature.
    Histogram(usize),
    /// Every midpoint between consecutive distinct values is a candidate.
    Exact,
}

/// Column-major bin codes plus per-feature split borders. A value `x` falls
/// in bin `b` = number of borders strictly below it, so `x > borders[j]`
/// exactly when `b > j`.
#[derive(Clone, Debug)]
pub struct BinnedPool {
    n_rows: usize,
    bins: Vec<u16>,
    borders: Vec<Vec<f64>>,
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    // adjacent floats: keep `a < x` ⇔ `x > m` for x ∈ {a, b}
    if m >= b {
        a
    } else {
        m
    }
}

fn feature_borders(values: &mut [f64], binning: Binning) -> Vec<f64> {
    values.sort_unstable_by(f64::total_cmp);
    let mut distinct: Vec<(f64, usize)> = Vec::new();
    for &v in values.iter() {
        match distinct.last_mut() {
            Some((d, c)) if *d == v => *c += 1,
            _ => distinct.push((v, 1)),
        }
    }
    let all = || distinct.windows(2).map(|w| midpoint(w[0].0, w[1].0)).collect();
    let max_bins = match binning {
        Binning::Exact => return all(),
        Binning::Histogram(b) => b.clamp(2, MISSING_BIN as usize - 1),
    };
    if distinct.len() <= max_bins {
        return all();
    }
    let n = values.len() as f64;
    let mut borders = Vec::with_capacity(max_bins - 1);
    let mut cum = 0usize;
    let mut next = n / max_bins as f64;
    for w in distinct.windows(2) {
        cum += w[0].1;
        if cum as f64 >= next && borders.len() < max_bins - 1 {
            borders.push(midpoint(w[0].0, w[1].0));
            while cum as f64 >= next {
                next += n / max_bins as f64;
            }
        }
    }
    borders
}

impl BinnedPool {
    pub fn new(pool: &TrainPool, binning: Binning) -> Self {
        let (n, p) = (pool.len(), pool.n_features());
        let mut bins = vec![MISSING_BIN; n * p];
        let mut borders = Vec::with_capacity(p);
        for f in 0..p {
            let mut vals: Vec<f64> = (0..n).map(|i| pool.row(i)[f]).filter(|v| !is_missing(*v)).collect();
            let b = feature_borders(&mut vals, binning);
            for i in 0..n {
                let x = pool.row(i)[f];
                if !is_missing(x) {
                    bins[f * n + i] = b.partition_point(|&t| x > t) as u16;
                }
            }
            borders.push(b);
        }
        BinnedPool {
            n_rows: n,
            bins,
            borders,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.borders.len()
    }

    pub fn borders(&self, f: usize) -> &[f64] {
        &self.borders[f]
    }

    pub fn column(&self, f: usize) -> &[u16] {
        &self.bins[f * self.n_rows..(f + 1) * self.n_rows]
    }
}

/// Tab-separated pool: a `label<TAB>name...` header, then one row per
/// sample with empty fields for missing values.
pub fn write_pool<W: Write>(mut w: W, pool: &TrainPool, names: &[String], comment: Option<&str>) -> std::io::Result<()> {
    if let Some(c) = comment {
        writeln!(w, "# {c}")?;
    }
    write!(w, "label")?;
    for n in names {
        write!(w, "\t{n}")?;
    }
    writeln!(w)?;
    let mut line = String::new();
    for i in 0..pool.len() {
        use std::fmt::Write as _;
        line.clear();
        write!(line, "{}", pool.labels[i]).unwrap();
        for &v in pool.row(i) {
            line.push('\t');
            if !is_missing(v) {
                write!(line, "{v}").unwrap();
            }
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_pool<R: BufRead>(r: R) -> Result<(TrainPool, Vec<String>)> {
    let mut names: Option<Vec<String>> = None;
    let mut pool = TrainPool::new(0);
    let mut row = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let ln = i + 1;
        let line = line.map_err(|e| Error::io("<pool>", e))?;
        if line.starts_with('#') && names.is_none() {
            continue;
        }
        let mut fields = line.split('\t');
        let Some(cols) = &names else {
            if fields.next() != Some("label") {
                return Err(Error::parse(ln, 1, "expected `label` header"));
            }
            let cols: Vec<String> = fields.map(str::to_owned).collect();
            pool = TrainPool::new(cols.len());
            names = Some(cols);
            continue;
        };
        let label = match fields.next() {
            Some("0") => 0,
            Some("1") => 1,
            _ => return Err(Error::parse(ln, 1, "label must be 0 or 1")),
        };
        row.clear();
        for (j, s) in fields.enumerate() {
            let v = if s.is_empty() {
                MISSING
            } else {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| !v.is_nan())
                    .ok_or_else(|| Error::parse(ln, j + 2, format!("bad value `{s}`")))?
            };
            row.push(v);
        }
        if row.len() != cols.len() {
            return Err(Error::parse(ln, 1, format!("expected {} features, got {}", cols.len(), row.len())));
        }
        pool.push(label, &row)?;
    }
    let names = names.ok_or_else(|| Error::parse(1, 1, "empty pool file"))?;
    Ok((pool, names))
}
