//! Adjusted mutual information with the exact hypergeometric expectation of
//! mutual information under random labelings with fixed marginals.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use crate::config::AmiNormalizer;
use crate::error::{Error, Result};

/// Contingency table between two labelings, with marginals.
#[derive(Clone, Debug)]
pub struct Contingency {
    pub n: usize,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    /// Ordered so sums over cells are reproducible bit for bit.
    pub cells: BTreeMap<(usize, usize), usize>,
}

impl Contingency {
    pub fn new<A: Eq + Hash, B: Eq + Hash>(a: &[A], b: &[B]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::Shape(format!(
                "labelings differ in length: {} vs {}",
                a.len(),
                b.len()
            )));
        }
        let ra = dense(a);
        let rb = dense(b);
        let mut rows = vec![0; ra.iter().max().map_or(0, |m| m + 1)];
        let mut cols = vec![0; rb.iter().max().map_or(0, |m| m + 1)];
        let mut cells = BTreeMap::new();
        for (&x, &y) in ra.iter().zip(&rb) {
            rows[x] += 1;
            cols[y] += 1;
            *cells.entry((x, y)).or_insert(0) += 1;
        }
        Ok(Self {
            n: a.len(),
            rows,
            cols,
            cells,
        })
    }

    /// The labelings induce the same partition.
    pub fn is_identity(&self) -> bool {
        self.rows.len() == self.cols.len() && self.cells.len() == self.rows.len()
    }
}

fn dense<T: Eq + Hash>(labels: &[T]) -> Vec<usize> {
    let mut map: HashMap<&T, usize> = HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

pub fn entropy(counts: &[usize], n: usize) -> f64 {
    let n = n as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

pub fn mutual_information(table: &Contingency) -> f64 {
    let n = table.n as f64;
    table
        .cells
        .iter()
        .map(|(&(i, j), &c)| {
            let c = c as f64;
            let (a, b) = (table.rows[i] as f64, table.cols[j] as f64);
            c / n * (n * c / (a * b)).ln()
        })
        .sum::<f64>()
        .max(0.0)
}

/// `ln(k!)` for `k = 0..=n`.
fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(0.0);
    let mut acc = 0.0;
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// Exact expected mutual information for the table's marginals.
pub fn expected_mutual_information(rows: &[usize], cols: &[usize], n: usize) -> f64 {
    let lf = ln_factorials(n);
    let nf = n as f64;
    let mut emi = 0.0;
    for &a in rows {
        for &b in cols {
            let lo = (a + b).saturating_sub(n).max(1);
            let hi = a.min(b);
            if lo > hi {
                continue;
            }
            let fixed = lf[a] + lf[b] + lf[n - a] + lf[n - b] - lf[n];
            for nij in lo..=hi {
                let x = nij as f64;
                let term = x / nf * (nf * x / (a as f64 * b as f64)).ln();
                let log_p = fixed - lf[nij] - lf[a - nij] - lf[b - nij] - lf[n + nij - a - b];
                emi += term * log_p.exp();
            }
        }
    }
    emi
}

/// Adjusted mutual information between two labelings of the same samples.
///
/// Identical partitions (including two single-cluster labelings) score 1.
pub fn ami<A: Eq + Hash, B: Eq + Hash>(
    labels_a: &[A],
    labels_b: &[B],
    normalizer: AmiNormalizer,
) -> Result<f64> {
    let table = Contingency::new(labels_a, labels_b)?;
    if table.n < 2 {
        return Err(Error::Shape("AMI needs at least two samples".into()));
    }
    if table.is_identity() {
        return Ok(1.0);
    }
    let mi = mutual_information(&table);
    let emi = expected_mutual_information(&table.rows, &table.cols, table.n);
    let (ha, hb) = (entropy(&table.rows, table.n), entropy(&table.cols, table.n));
    let norm = match normalizer {
        AmiNormalizer::Arithmetic => 0.5 * (ha + hb),
        AmiNormalizer::Max => ha.max(hb),
    };
    let denominator = norm - emi;
    let denominator = if denominator < 0.0 {
        denominator.min(-f64::EPSILON)
    } else {
        denominator.max(f64::EPSILON)
    };
    Ok((mi - emi) / denominator)
}
