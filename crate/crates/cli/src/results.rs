//! Evaluation results: one CSV row per (task, alpha) plus a mean row per
//! alpha, and the summary computed from them.

use std::io::{Read, Write};

use anyhow::Result;
use serde::{Deserialize, Serialize};

pub const MEAN_ROW: &str = "mean";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub task_id: String,
    pub qop: Option<f64>,
    pub task_score: Option<f64>,
    pub price_usd: Option<f64>,
    pub exec_time_s: Option<f64>,
    pub n_tools: f64,
    pub valid: bool,
    pub alpha: f64,
    pub oracle_qop: Option<f64>,
    /// Policy QoP over oracle QoP; on the mean row, the ratio of the means.
    pub qop_ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub alpha: f64,
    pub tasks: usize,
    pub valid: usize,
    /// Means over valid plans.
    pub qop: f64,
    pub task_score: f64,
    pub price_usd: f64,
    pub exec_time_s: f64,
    pub n_tools: f64,
    pub oracle_qop: Option<f64>,
    pub qop_ratio: Option<f64>,
}

impl Summary {
    pub fn valid_fraction(&self) -> f64 {
        if self.tasks == 0 {
            0.0
        } else {
            self.valid as f64 / self.tasks as f64
        }
    }

    pub fn to_row(&self) -> EvalRow {
        EvalRow {
            task_id: MEAN_ROW.into(),
            qop: Some(self.qop),
            task_score: Some(self.task_score),
            price_usd: Some(self.price_usd),
            exec_time_s: Some(self.exec_time_s),
            n_tools: self.n_tools,
            valid: self.valid == self.tasks,
            alpha: self.alpha,
            oracle_qop: self.oracle_qop,
            qop_ratio: self.qop_ratio,
        }
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// One summary per distinct alpha, in order of first appearance. Mean rows
/// are ignored.
pub fn summarize(rows: &[EvalRow]) -> Vec<Summary> {
    let mut alphas: Vec<f64> = Vec::new();
    for r in rows.iter().filter(|r| r.task_id != MEAN_ROW) {
        if !alphas.contains(&r.alpha) {
            alphas.push(r.alpha);
        }
    }
    alphas
        .into_iter()
        .map(|alpha| {
            let all: Vec<&EvalRow> = rows.iter().filter(|r| r.task_id != MEAN_ROW && r.alpha == alpha).collect();
            let valid: Vec<&EvalRow> = all.iter().copied().filter(|r| r.valid).collect();
            let oracle_qop = all
                .iter()
                .map(|r| r.oracle_qop)
                .collect::<Option<Vec<f64>>>()
                .filter(|o| !o.is_empty())
                .map(|o| mean(o.into_iter()));
            // Invalid plans count as zero quality against the oracle.
            let policy_all = mean(all.iter().map(|r| r.qop.filter(|_| r.valid).unwrap_or(0.0)));
            Summary {
                alpha,
                tasks: all.len(),
                valid: valid.len(),
                qop: mean(valid.iter().filter_map(|r| r.qop)),
                task_score: mean(valid.iter().filter_map(|r| r.task_score)),
                price_usd: mean(valid.iter().filter_map(|r| r.price_usd)),
                exec_time_s: mean(valid.iter().filter_map(|r| r.exec_time_s)),
                n_tools: mean(valid.iter().map(|r| r.n_tools)),
                oracle_qop,
                qop_ratio: oracle_qop.filter(|&o| o != 0.0).map(|o| policy_all / o),
            }
        })
        .collect()
}

pub fn write_csv<W: Write>(rows: &[EvalRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<EvalRow>> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<Result<Vec<EvalRow>, _>>()?)
}

fn opt(x: Option<f64>, digits: usize) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{v:.digits$}"))
}

/// Markdown table with one line per alpha.
pub fn markdown(summaries: &[Summary]) -> String {
    let mut s = String::from(
        "| alpha | tasks | valid % | QoP | task score | price (USD) | time (s) | tools | oracle QoP | ratio |\n\
         |---|---|---|---|---|---|---|---|---|---|\n",
    );
    for m in summaries {
        s.push_str(&format!(
            "| {} | {} | {:.1} | {:.4} | {:.4} | {:.3e} | {:.3} | {:.2} | {} | {} |\n",
            m.alpha,
            m.tasks,
            100.0 * m.valid_fraction(),
            m.qop,
            m.task_score,
            m.price_usd,
            m.exec_time_s,
            m.n_tools,
            opt(m.oracle_qop, 4),
            opt(m.qop_ratio, 3),
        ));
    }
    s
}
