//! Per-run measurements and the figures derived from them.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::coding::PacketId;
use crate::mac::{EpochSample, NodeCounters};
use crate::Slot;

/// Joules spent, by radio mode. Sleep is free.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub transmit: f64,
    pub receive: f64,
    pub overhear: f64,
    pub idle: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.transmit + self.receive + self.overhear + self.idle
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketRecord {
    pub id: PacketId,
    pub flow: u32,
    pub bits: u32,
    pub created: Slot,
    pub first_transmission: Option<Slot>,
    pub delivered: Option<Slot>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    /// Slots simulated.
    pub duration: Slot,
    pub nodes: usize,
    pub flows: usize,
    /// Data frames sent, native or coded. Reports are not counted.
    pub data_transmissions: u64,
    pub coded_transmissions: u64,
    /// Transmissions a non-coding network would have needed for the same
    /// frames: a degree-k frame counts k.
    pub native_equivalent: u64,
    pub report_transmissions: u64,
    pub delivered_bits: u64,
    pub packets: Vec<PacketRecord>,
    pub energy: EnergyBreakdown,
    /// Death slot per node.
    pub deaths: Vec<Option<Slot>>,
    /// Decision epochs per node.
    pub epochs: Vec<Vec<EpochSample>>,
    pub send_slots: u64,
    pub receive_slots: u64,
    pub overhear_slots: u64,
    pub idle_slots: u64,
    pub sleep_slots: u64,
    pub counters: NodeCounters,
    pub trace_hash: u64,
}

impl MetricsReport {
    pub fn delivered(&self) -> usize {
        self.packets.iter().filter(|p| p.delivered.is_some()).count()
    }

    pub fn undelivered(&self) -> usize {
        self.packets.len() - self.delivered()
    }

    pub fn total_energy(&self) -> f64 {
        self.energy.total()
    }

    /// Per-node reward series, one entry per decision epoch.
    pub fn epoch_rewards(&self) -> Vec<Vec<f64>> {
        self.epochs
            .iter()
            .map(|log| log.iter().map(|e| e.reward).collect())
            .collect()
    }
}

/// Coding gain and whether it was actually defined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gain {
    pub value: f64,
    /// False when nothing was sent; `value` is then 1.0.
    pub defined: bool,
}

pub fn coding_gain(report: &MetricsReport) -> Gain {
    if report.data_transmissions == 0 {
        return Gain {
            value: 1.0,
            defined: false,
        };
    }
    Gain {
        value: report.native_equivalent as f64 / report.data_transmissions as f64,
        defined: true,
    }
}

/// Joules per delivered bit, `None` when nothing arrived.
pub fn energy_per_bit(report: &MetricsReport) -> Option<f64> {
    if report.delivered_bits == 0 {
        return None;
    }
    Some(report.total_energy() / report.delivered_bits as f64)
}

/// Mean slots from first transmission to delivery, over delivered packets.
pub fn avg_delay(report: &MetricsReport) -> Option<f64> {
    let delays: Vec<f64> = report
        .packets
        .iter()
        .filter_map(|p| match (p.first_transmission, p.delivered) {
            (Some(first), Some(done)) => Some((done - first) as f64),
            _ => None,
        })
        .collect();
    if delays.is_empty() {
        return None;
    }
    Some(delays.iter().sum::<f64>() / delays.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lifetime {
    /// Slot at which the first node died.
    Died(Slot),
    Survived,
}

pub fn lifetime(report: &MetricsReport) -> Lifetime {
    match report.deaths.iter().flatten().min() {
        Some(&s) => Lifetime::Died(s),
        None => Lifetime::Survived,
    }
}

/// Mean reward per epoch index over the nodes that reached that epoch.
pub fn mean_epoch_rewards(series: &[Vec<f64>]) -> Vec<f64> {
    let len = series.iter().map(Vec::len).max().unwrap_or(0);
    (0..len)
        .map(|t| {
            let mut sum = 0.0;
            let mut n = 0usize;
            for s in series {
                if let Some(r) = s.get(t) {
                    sum += r;
                    n += 1;
                }
            }
            sum / n as f64
        })
        .collect()
}

/// Trailing mean of `values` over `window` points; the first points average
/// whatever is available.
pub fn sliding_mean(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (i, v) in values.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

/// `(epoch, mean reward)` points: per-epoch rewards averaged across nodes,
/// then smoothed over `window` epochs.
pub fn reward_curve(report: &MetricsReport, window: usize) -> Vec<(u64, f64)> {
    let mean = mean_epoch_rewards(&report.epoch_rewards());
    sliding_mean(&mean, window)
        .into_iter()
        .enumerate()
        .map(|(i, v)| (i as u64, v))
        .collect()
}

fn ols_slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    if ys.len() < 2 {
        return 0.0;
    }
    let mx = (n - 1.0) / 2.0;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - mx;
        num += dx * (y - my);
        den += dx * dx;
    }
    num / den
}

/// True when the last quarter of `curve` is flat: its least-squares slope
/// times its length moves less than `tolerance` of the curve's range.
pub fn is_plateau(curve: &[f64], tolerance: f64) -> bool {
    if curve.len() < 4 {
        return false;
    }
    let lo = curve.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = curve.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if range <= 0.0 {
        return true;
    }
    let tail = &curve[curve.len() - curve.len() / 4..];
    (ols_slope(tail) * tail.len() as f64).abs() < tolerance * range
}

/// First epoch from which `curve` stays within `tolerance` of its range
/// around the final level (the mean of its last quarter).
pub fn settling_epoch(curve: &[f64], tolerance: f64) -> Option<u64> {
    if curve.len() < 4 {
        return None;
    }
    let lo = curve.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = curve.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tail = &curve[curve.len() - curve.len() / 4..];
    let level = tail.iter().sum::<f64>() / tail.len() as f64;
    let band = tolerance * (hi - lo);
    let last_out = curve.iter().rposition(|v| (v - level).abs() > band);
    match last_out {
        None => Some(0),
        Some(i) if i + 1 < curve.len() - tail.len() => Some(i as u64 + 1),
        // still moving inside the final quarter
        Some(_) => None,
    }
}

/// When a reward curve counts as converged. The curve must end flat (see
/// [`is_plateau`]); the convergence epoch is where it settled (see
/// [`settling_epoch`]).
///
/// Nodes see very different numbers of epochs, so the curve is cut where
/// fewer than `quorum` of the nodes that decided at all are still deciding,
/// and averages that fixed set of nodes throughout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub window: usize,
    pub flatness: f64,
    pub band: f64,
    pub quorum: f64,
}

impl Default for Convergence {
    fn default() -> Self {
        Self {
            window: 250,
            flatness: 0.02,
            band: 0.1,
            quorum: 0.25,
        }
    }
}

impl Convergence {
    /// Smoothed mean reward of the quorum nodes, up to the quorum cut.
    pub fn curve(&self, report: &MetricsReport) -> Vec<f64> {
        let series = report.epoch_rewards();
        let mut lens: Vec<usize> = series.iter().map(Vec::len).filter(|&l| l > 0).collect();
        if lens.is_empty() {
            return Vec::new();
        }
        lens.sort_unstable_by(|a, b| b.cmp(a));
        let need = ((lens.len() as f64 * self.quorum).ceil() as usize).clamp(1, lens.len());
        let cut = lens[need - 1];
        let kept: Vec<Vec<f64>> = series
            .into_iter()
            .filter(|s| s.len() >= cut)
            .map(|mut s| {
                s.truncate(cut);
                s
            })
            .collect();
        sliding_mean(&mean_epoch_rewards(&kept), self.window)
    }

    pub fn epoch(&self, report: &MetricsReport) -> Option<u64> {
        self.epoch_of(&self.curve(report))
    }

    pub fn epoch_of(&self, curve: &[f64]) -> Option<u64> {
        if !is_plateau(curve, self.flatness) {
            return None;
        }
        settling_epoch(curve, self.band)
    }
}
