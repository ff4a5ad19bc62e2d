//! Per-iteration run logs and their CSV form.
//!
//! Columns, in order: `iter, loss, perturbed_loss, oracle_norm, step_norm,
//! grad_map_norm, wall_s, skipped, eval_failures`. Values that do not apply to
//! a row (for instance the perturbed loss of the final iterate) are written
//! as `NaN`. Floats are written in shortest round-trip form, so reading a file
//! back reproduces every value exactly.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::randmat::SymBlockMatrix;

/// One logged iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRow {
    pub iter: usize,
    /// `L(theta_k)`.
    pub loss: f64,
    /// `L(theta_k + mu M_k)` for the search; the newest candidate for Nelder-Mead.
    pub perturbed_loss: f64,
    pub oracle_norm: f64,
    pub step_norm: f64,
    pub grad_map_norm: f64,
    /// Seconds since the start of the run.
    pub wall_s: f64,
    #[serde(with = "bool_as_int")]
    pub skipped: bool,
    pub eval_failures: usize,
}

impl IterRow {
    pub(crate) fn loss_only(iter: usize, loss: f64, wall_s: f64) -> Self {
        Self {
            iter,
            loss,
            perturbed_loss: f64::NAN,
            oracle_norm: f64::NAN,
            step_norm: f64::NAN,
            grad_map_norm: f64::NAN,
            wall_s,
            skipped: false,
            eval_failures: 0,
        }
    }
}

mod bool_as_int {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        Ok(u8::deserialize(d)? != 0)
    }
}

/// The result of an optimizer run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub rows: Vec<IterRow>,
    pub best_theta: SymBlockMatrix,
    pub best_loss: f64,
    /// First iteration attaining `best_loss`.
    pub best_index: usize,
}

impl RunRecord {
    /// Running minimum of the logged losses (non-finite losses ignored).
    pub fn best_so_far(&self) -> Vec<f64> {
        running_min(self.rows.iter().map(|r| r.loss))
    }

    pub fn skipped(&self) -> usize {
        self.rows.iter().filter(|r| r.skipped).count()
    }

    pub fn initial_loss(&self) -> f64 {
        self.rows.first().map(|r| r.loss).unwrap_or(f64::NAN)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        write_rows(&self.rows, w)
    }
}

pub(crate) fn running_min(losses: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut best = f64::INFINITY;
    losses
        .map(|l| {
            if l.is_finite() && l < best {
                best = l;
            }
            best
        })
        .collect()
}

pub fn write_rows<W: Write>(rows: &[IterRow], w: W) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_rows<R: Read>(r: R) -> Result<Vec<IterRow>, csv::Error> {
    csv::Reader::from_reader(r).deserialize().collect()
}

/// Mean and sample standard deviation across runs, per iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub iter: usize,
    pub runs: usize,
    pub mean_loss: f64,
    pub std_loss: f64,
    pub mean_best: f64,
    pub std_best: f64,
    pub median_best: f64,
}

/// Aggregates several runs. Runs shorter than the longest are ignored past
/// their end.
pub fn summarize(runs: &[Vec<IterRow>]) -> Vec<SummaryRow> {
    let len = runs.iter().map(|r| r.len()).max().unwrap_or(0);
    let bests: Vec<Vec<f64>> = runs.iter().map(|r| running_min(r.iter().map(|x| x.loss))).collect();
    (0..len)
        .map(|k| {
            let losses: Vec<f64> = runs
                .iter()
                .filter_map(|r| r.get(k).map(|x| x.loss))
                .filter(|l| l.is_finite())
                .collect();
            let best: Vec<f64> = bests
                .iter()
                .filter_map(|b| b.get(k).copied())
                .filter(|l| l.is_finite())
                .collect();
            let (mean_loss, std_loss) = mean_std(&losses);
            let (mean_best, std_best) = mean_std(&best);
            SummaryRow {
                iter: k,
                runs: losses.len(),
                mean_loss,
                std_loss,
                mean_best,
                std_best,
                median_best: median(&best),
            }
        })
        .collect()
}

pub fn write_summary<W: Write>(rows: &[SummaryRow], w: W) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_summary<R: Read>(r: R) -> Result<Vec<SummaryRow>, csv::Error> {
    csv::Reader::from_reader(r).deserialize().collect()
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
