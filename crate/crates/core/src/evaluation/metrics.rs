use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `K × K` counts, rows = reference class, columns = predicted class.
/// Class ids `1..=K` map to index `id - 1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub k: usize,
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            counts: vec![0; k * k],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::invalid("confusion matrix must be square"));
        }
        Ok(Self {
            k,
            counts: rows.concat(),
        })
    }

    /// Records one sample; ids are `1..=K`.
    pub fn add(&mut self, reference: u16, predicted: u16) -> Result<()> {
        let (r, p) = (reference as usize, predicted as usize);
        if r == 0 || p == 0 || r > self.k || p > self.k {
            return Err(Error::invalid(format!(
                "class pair ({reference}, {predicted}) outside 1..={}",
                self.k
            )));
        }
        self.counts[(r - 1) * self.k + p - 1] += 1;
        Ok(())
    }

    pub fn get(&self, r: usize, c: usize) -> u64 {
        self.counts[r * self.k + c]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|i| self.get(i, i)).sum()
    }

    pub fn row_sum(&self, r: usize) -> u64 {
        self.counts[r * self.k..(r + 1) * self.k].iter().sum()
    }

    pub fn col_sum(&self, c: usize) -> u64 {
        (0..self.k).map(|r| self.get(r, c)).sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.k.max(1)).map(<[u64]>::to_vec).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Recall per class; `None` for classes without reference samples.
    pub per_class: Vec<Option<f64>>,
    pub support: Vec<u64>,
    pub total: u64,
    pub oa: f64,
    pub aa: f64,
    pub kappa: f64,
    pub confusion: Vec<Vec<u64>>,
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::invalid("metrics of an empty confusion matrix"));
    }
    let t = total as f64;
    let support: Vec<u64> = (0..cm.k).map(|i| cm.row_sum(i)).collect();
    let per_class: Vec<Option<f64>> = (0..cm.k)
        .map(|i| (support[i] > 0).then(|| cm.get(i, i) as f64 / support[i] as f64))
        .collect();
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    let aa = defined.iter().sum::<f64>() / defined.len() as f64;
    let po = cm.trace() as f64 / t;
    // Σ row·col in integers, divided once.
    let chance: u128 = (0..cm.k)
        .map(|i| support[i] as u128 * cm.col_sum(i) as u128)
        .sum();
    let pe = chance as f64 / (t * t);
    let kappa = if chance == (total as u128) * (total as u128) {
        if cm.trace() == total {
            1.0
        } else {
            0.0
        }
    } else {
        (po - pe) / (1.0 - pe)
    };
    Ok(MetricsReport {
        per_class,
        support,
        total,
        oa: po,
        aa,
        kappa,
        confusion: cm.rows(),
    })
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `metric,value` rows, then one `class_<id>,<recall>` row per class
    /// (empty value when undefined).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,value\n");
        let _ = writeln!(s, "oa,{}", self.oa);
        let _ = writeln!(s, "aa,{}", self.aa);
        let _ = writeln!(s, "kappa,{}", self.kappa);
        let _ = writeln!(s, "total,{}", self.total);
        for (i, a) in self.per_class.iter().enumerate() {
            match a {
                Some(v) => {
                    let _ = writeln!(s, "class_{},{v}", i + 1);
                }
                None => {
                    let _ = writeln!(s, "class_{},", i + 1);
                }
            }
        }
        s
    }
}
