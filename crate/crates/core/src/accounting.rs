//! Per-node billing with period rounding, and run-level cost totals.
//!
//! Money is kept in integer micro-dollars; rounding to cents happens only
//! when formatting.

use std::fmt;
use std::iter::Sum;
use std::ops::Add;

use serde::{Deserialize, Serialize};

use crate::cluster::{Cluster, Node, NodeId, NodeTemplate, PricingKind};
use crate::error::{Error, Result};
use crate::kernel::SimTime;

/// Per-worker-minute rate that reproduces the reference cost table.
pub const FITTED_RATE_MICRO_USD_PER_MIN: u64 = 792;
/// The nominal B2S-like per-minute price ($0.011).
pub const LIST_RATE_MICRO_USD_PER_MIN: u64 = 11_000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Money(pub i64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub fn micro_usd(self) -> i64 {
        self.0
    }

    /// Whole cents, rounding half away from zero.
    pub fn cents(self) -> i64 {
        let sign = self.0.signum();
        sign * ((self.0.abs() + 5_000) / 10_000)
    }

    pub fn as_dollars(self) -> f64 {
        self.0 as f64 / 1e6
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = self.cents();
        let sign = if c < 0 { "-" } else { "" };
        write!(f, "{sign}${}.{:02}", c.abs() / 100, c.abs() % 100)
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, Add::add)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BillingRecord {
    pub node: NodeId,
    pub billed_from: SimTime,
    pub billed_to: SimTime,
    pub periods: u64,
    pub amount: Money,
}

/// Billing periods started in `[from, to)`; partial periods round up.
pub fn billed_periods(from: SimTime, to: SimTime, period: u64) -> u64 {
    (to.saturating_sub(from)).div_ceil(period)
}

fn apply_discount(amount: u64, factor: f64) -> u64 {
    let ppm = (factor * 1e6).round() as u64;
    (amount * ppm + 500_000) / 1_000_000
}

/// Cost of one node for the window from its launch to `window_end` (or its
/// termination, if earlier).
///
/// On-demand nodes pay every started period at the template rate;
/// preemptible nodes pay the same times the discount factor; reserved nodes
/// pay their prepaid term regardless of the window.
pub fn node_cost(node: &Node, template: &NodeTemplate, window_end: SimTime) -> Result<BillingRecord> {
    if window_end < node.launch_time {
        return Err(Error::BillingWindow {
            launch: node.launch_time,
            end: window_end,
        });
    }
    let to = node.terminate_time.map_or(window_end, |t| t.min(window_end));
    let from = node.launch_time;
    let rate = template.rate_micro_usd;
    let (periods, amount) = match template.pricing.kind {
        PricingKind::Reserved => {
            let p = template.pricing.term_periods;
            (p, p * rate)
        }
        PricingKind::OnDemand => {
            let p = billed_periods(from, to, template.billing_period_s);
            (p, p * rate)
        }
        PricingKind::Preemptible => {
            let p = billed_periods(from, to, template.billing_period_s);
            (p, apply_discount(p * rate, template.pricing.discount_factor))
        }
    };
    Ok(BillingRecord {
        node: node.id,
        billed_from: from,
        billed_to: to,
        periods,
        amount: Money(amount as i64),
    })
}

/// Where each node's billing window ends.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BillingWindow {
    /// Every node is billed from launch until the last pod binding: static
    /// workers for the whole scheduling duration, autoscaled ones from
    /// their launch.
    #[default]
    UntilLastBinding,
    /// Every node is billed from launch until termination or run end.
    Lifetime,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub records: Vec<BillingRecord>,
    pub total: Money,
}

/// Sums `node_cost` over all nodes launched by `window_end`. Nodes launched
/// after the window closes are not billed.
pub fn total_cost(cluster: &Cluster, window_end: SimTime) -> Result<CostReport> {
    let records = cluster
        .nodes()
        .iter()
        .filter(|n| n.launch_time <= window_end)
        .map(|n| node_cost(n, cluster.node_template(n), window_end))
        .collect::<Result<Vec<_>>>()?;
    let total = records.iter().map(|r| r.amount).sum();
    Ok(CostReport { records, total })
}
