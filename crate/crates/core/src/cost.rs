//! Pricing, plan execution time, Quality-of-Plan and step rewards.
//!
//! Prices follow a pay-per-use serverless model: a flat charge per run plus
//! a time-proportional charge for constant and instant CPU/GPU memory. The
//! constant-memory rates are tiered by the amount of memory held.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tpl::{PlanDag, Producer};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("memory {mem_mb} MB exceeds the largest pricing tier ({max_mb} MB)")]
    TierOutOfRange { mem_mb: f64, max_mb: f64 },
    #[error("memory must be non-negative, got {0} MB")]
    NegativeMemory(f64),
    #[error("invalid price table: {0}")]
    InvalidPriceTable(String),
    #[error("normalization bounds must satisfy lo < hi (lo = {lo}, hi = {hi})")]
    BadBounds { lo: f64, hi: f64 },
    #[error("alpha must lie in (0, 1), got {0}")]
    AlphaOutOfRange(f64),
    #[error("performance is required for the end-of-plan reward")]
    MissingPerformance,
    #[error("performance is only defined for the end-of-plan reward")]
    UnexpectedPerformance,
    #[error("no execution time for plan instance {0}")]
    MissingTime(usize),
}

/// One memory tier: applies when memory is at most `mem_ceiling_mb`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tier {
    pub mem_ceiling_mb: f64,
    pub price: f64,
}

/// Pricing constants. Instant-memory prices are USD per MB per millisecond.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceTable {
    pub price_per_run: f64,
    pub cpu_cons_tiers: Vec<Tier>,
    pub gpu_cons_tiers: Vec<Tier>,
    pub price_cpu_inst: f64,
    pub price_gpu_inst: f64,
}

const TIER_CEILINGS_MB: [f64; 13] = [
    128.0, 512.0, 1024.0, 1536.0, 2048.0, 3072.0, 4096.0, 5120.0, 6144.0, 7168.0, 8192.0, 9216.0,
    10240.0,
];
const CPU_CONS_PRICES: [f64; 13] = [
    2.1e-9, 8.3e-9, 1.67e-8, 2.5e-8, 3.33e-8, 5e-8, 6.67e-8, 8.83e-8, 1e-7, 1.167e-7, 1.333e-7,
    1.5e-7, 1.667e-7,
];
const GPU_CONS_PRICES: [f64; 13] = [
    6.3e-9, 2.49e-8, 5.01e-8, 7.5e-8, 9.99e-8, 1.5e-7, 2.001e-7, 2.499e-7, 3e-7, 3.501e-7,
    3.999e-7, 4.5e-7, 5.001e-7,
];

fn tiers(prices: &[f64; 13]) -> Vec<Tier> {
    TIER_CEILINGS_MB
        .iter()
        .zip(prices)
        .map(|(&mem_ceiling_mb, &price)| Tier { mem_ceiling_mb, price })
        .collect()
}

impl Default for PriceTable {
    fn default() -> Self {
        Self {
            price_per_run: 2e-7,
            cpu_cons_tiers: tiers(&CPU_CONS_PRICES),
            gpu_cons_tiers: tiers(&GPU_CONS_PRICES),
            price_cpu_inst: 3.02e-14,
            price_gpu_inst: 9.06e-14,
        }
    }
}

impl PriceTable {
    pub fn validate(&self) -> Result<(), CostError> {
        for (name, tiers) in [("cpu_cons_tiers", &self.cpu_cons_tiers), ("gpu_cons_tiers", &self.gpu_cons_tiers)] {
            if tiers.is_empty() {
                return Err(CostError::InvalidPriceTable(format!("{name} is empty")));
            }
            for pair in tiers.windows(2) {
                if pair[1].mem_ceiling_mb <= pair[0].mem_ceiling_mb {
                    return Err(CostError::InvalidPriceTable(format!(
                        "{name}: ceilings must be strictly increasing"
                    )));
                }
                if pair[1].price < pair[0].price {
                    return Err(CostError::InvalidPriceTable(format!(
                        "{name}: prices must be non-decreasing"
                    )));
                }
            }
            if tiers.iter().any(|t| t.price < 0.0 || !t.price.is_finite()) {
                return Err(CostError::InvalidPriceTable(format!("{name}: negative price")));
            }
        }
        let scalars = [self.price_per_run, self.price_cpu_inst, self.price_gpu_inst];
        if scalars.iter().any(|p| *p < 0.0 || !p.is_finite()) {
            return Err(CostError::InvalidPriceTable("negative scalar price".into()));
        }
        Ok(())
    }
}

/// Measured (or simulated) cost of one tool invocation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostRecord {
    pub time_ms: f64,
    pub cpu_cons_mb: f64,
    pub cpu_inst_mb: f64,
    pub gpu_cons_mb: f64,
    pub gpu_inst_mb: f64,
}

/// Price of the first tier whose ceiling is at least `mem_mb`.
pub fn tier_price(tiers: &[Tier], mem_mb: f64) -> Result<f64, CostError> {
    if mem_mb < 0.0 || mem_mb.is_nan() {
        return Err(CostError::NegativeMemory(mem_mb));
    }
    tiers
        .iter()
        .find(|t| mem_mb <= t.mem_ceiling_mb)
        .map(|t| t.price)
        .ok_or(CostError::TierOutOfRange {
            mem_mb,
            max_mb: tiers.last().map_or(0.0, |t| t.mem_ceiling_mb),
        })
}

/// Price in USD of a single tool run.
pub fn tool_price(rec: &CostRecord, table: &PriceTable) -> Result<f64, CostError> {
    let cpu_cons = rec.cpu_cons_mb * tier_price(&table.cpu_cons_tiers, rec.cpu_cons_mb)?;
    let gpu_cons = rec.gpu_cons_mb * tier_price(&table.gpu_cons_tiers, rec.gpu_cons_mb)?;
    let per_ms = cpu_cons
        + rec.cpu_inst_mb * table.price_cpu_inst
        + gpu_cons
        + rec.gpu_inst_mb * table.price_gpu_inst;
    Ok(table.price_per_run + rec.time_ms * per_ms)
}

/// Price of a plan: the sum of its tool prices.
pub fn plan_price(per_tool: &[f64]) -> f64 {
    per_tool.iter().sum()
}

/// Critical-path length of `dag` given per-instance execution times.
///
/// Task data is available at time zero; every instance starts once all of its
/// producers have finished.
pub fn plan_exec_time(dag: &PlanDag, times: &[f64]) -> Result<f64, CostError> {
    if times.len() < dag.nodes.len() {
        return Err(CostError::MissingTime(times.len()));
    }
    let order = dag.topological_order().expect("plan_exec_time on a cyclic dag");
    let mut finish = vec![0.0f64; dag.nodes.len()];
    for v in order {
        let ready = dag
            .producers_of(v)
            .filter_map(|p| match p {
                Producer::Task => None,
                Producer::Node(u) => Some(finish[u]),
            })
            .fold(0.0, f64::max);
        finish[v] = ready + times[v];
    }
    Ok(finish.into_iter().fold(0.0, f64::max))
}

/// Min/max values used to normalize performance and price.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormBounds {
    pub p_min: f64,
    pub p_max: f64,
    pub c_min: f64,
    pub c_max: f64,
}

impl NormBounds {
    pub fn new(p_min: f64, p_max: f64, c_min: f64, c_max: f64) -> Result<Self, CostError> {
        if !(p_min < p_max) {
            return Err(CostError::BadBounds { lo: p_min, hi: p_max });
        }
        if !(c_min < c_max) {
            return Err(CostError::BadBounds { lo: c_min, hi: c_max });
        }
        Ok(Self { p_min, p_max, c_min, c_max })
    }

    /// Bounds spanning the observed values. A degenerate range is widened
    /// upward so that `min < max` holds.
    pub fn from_observations(perfs: &[f64], prices: &[f64]) -> Self {
        fn span(xs: &[f64]) -> (f64, f64) {
            let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !lo.is_finite() || !hi.is_finite() {
                return (0.0, 1.0);
            }
            if hi > lo {
                (lo, hi)
            } else {
                (lo, lo + lo.abs().max(1.0) * 1e-9)
            }
        }
        let (p_min, p_max) = span(perfs);
        let (c_min, c_max) = span(prices);
        Self { p_min, p_max, c_min, c_max }
    }

    pub fn perf(&self, p: f64) -> f64 {
        normalize(p, self.p_min, self.p_max).expect("validated bounds")
    }

    pub fn price(&self, c: f64) -> f64 {
        normalize(c, self.c_min, self.c_max).expect("validated bounds")
    }
}

/// Min-max normalization clamped to `[0, 1]`.
pub fn normalize(x: f64, lo: f64, hi: f64) -> Result<f64, CostError> {
    if !(lo < hi) {
        return Err(CostError::BadBounds { lo, hi });
    }
    Ok(((x - lo) / (hi - lo)).clamp(0.0, 1.0))
}

/// Quality-of-Plan evaluation of one executed plan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QopReport {
    pub raw_performance: f64,
    pub raw_price_usd: f64,
    pub exec_time_s: f64,
    pub perf_norm: f64,
    pub price_norm: f64,
    pub alpha: f64,
    pub qop: f64,
}

impl QopReport {
    pub fn with_exec_time(mut self, exec_time_s: f64) -> Self {
        self.exec_time_s = exec_time_s;
        self
    }
}

pub fn check_alpha(alpha: f64) -> Result<(), CostError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(CostError::AlphaOutOfRange(alpha))
    }
}

/// `alpha * P_hat - (1 - alpha) * C_hat` with both terms min-max normalized.
pub fn qop(performance: f64, price_usd: f64, alpha: f64, bounds: &NormBounds) -> Result<QopReport, CostError> {
    check_alpha(alpha)?;
    let perf_norm = normalize(performance, bounds.p_min, bounds.p_max)?;
    let price_norm = normalize(price_usd, bounds.c_min, bounds.c_max)?;
    Ok(QopReport {
        raw_performance: performance,
        raw_price_usd: price_usd,
        exec_time_s: 0.0,
        perf_norm,
        price_norm,
        alpha,
        qop: alpha * perf_norm - (1.0 - alpha) * price_norm,
    })
}

/// Reward for one emitted action.
///
/// `price_norm` is the normalized cumulative price of the plan after the
/// action. Only the end-of-plan action receives the performance term.
pub fn step_reward(price_norm: f64, perf_norm: Option<f64>, is_eop: bool, alpha: f64) -> Result<f64, CostError> {
    check_alpha(alpha)?;
    match (is_eop, perf_norm) {
        (true, Some(p)) => Ok(alpha * p - (1.0 - alpha) * price_norm),
        (true, None) => Err(CostError::MissingPerformance),
        (false, None) => Ok(-(1.0 - alpha) * price_norm),
        (false, Some(_)) => Err(CostError::UnexpectedPerformance),
    }
}

/// Suffix sums: `R_i = r_i + R_{i+1}`.
pub fn returns_to_go(rewards: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (i, r) in rewards.iter().enumerate().rev() {
        acc += r;
        out[i] = acc;
    }
    out
}
