//! Trajectory and decision error measures.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::game::Action;
use crate::geom::Vec2;

/// Positions keyed by frame, frames strictly increasing.
pub type Trajectory = [(i64, Vec2)];

/// Position pairs on the frames both trajectories share.
pub fn common_frames(a: &Trajectory, b: &Trajectory) -> Vec<(i64, Vec2, Vec2)> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            core::cmp::Ordering::Less => i += 1,
            core::cmp::Ordering::Greater => j += 1,
            core::cmp::Ordering::Equal => {
                out.push((a[i].0, a[i].1, b[j].1));
                i += 1;
                j += 1;
            }
        }
    }
    out
}

/// Per-frame Euclidean errors on the common frames.
pub fn displacement_errors(real: &Trajectory, sim: &Trajectory) -> Vec<f64> {
    common_frames(real, sim).into_iter().map(|(_, r, s)| r.distance(s)).collect()
}

/// Average displacement error over the common frames, m.
pub fn ade(real: &Trajectory, sim: &Trajectory) -> Result<f64> {
    let e = displacement_errors(real, sim);
    if e.is_empty() {
        return Err(Error::UndefinedMetric("no common frames"));
    }
    Ok(mean(&e))
}

/// Mean absolute speed difference, m/s. Speeds are finite differences between
/// consecutive common frames.
pub fn speed_deviation(real: &Trajectory, sim: &Trajectory, frame_seconds: f64) -> Result<f64> {
    let c = common_frames(real, sim);
    if c.len() < 2 {
        return Err(Error::UndefinedMetric("speed needs two common frames"));
    }
    let diffs: Vec<f64> = c
        .windows(2)
        .map(|w| {
            let dt = (w[1].0 - w[0].0) as f64 * frame_seconds;
            let vr = w[1].1.distance(w[0].1) / dt;
            let vs = w[1].2.distance(w[0].2) / dt;
            (vr - vs).abs()
        })
        .collect();
    Ok(mean(&diffs))
}

/// Fraction of mismatching decisions.
pub fn decision_error(real: &[Action], sim: &[Action]) -> Result<f64> {
    if real.len() != sim.len() {
        return Err(Error::Alignment(alloc::format!("{} real vs {} simulated decisions", real.len(), sim.len())));
    }
    if real.is_empty() {
        return Err(Error::UndefinedMetric("no decisions"));
    }
    let wrong = real.iter().zip(sim).filter(|(r, s)| r != s).count();
    Ok(wrong as f64 / real.len() as f64)
}

/// Counts of (real, simulated) action pairs, rows real.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn index(a: Action) -> usize {
        match a {
            Action::Continue => 0,
            Action::Decelerate => 1,
            Action::Deviate => 2,
        }
    }

    pub fn record(&mut self, real: Action, sim: Action) {
        self.counts[Self::index(real)][Self::index(sim)] += 1;
    }

    pub fn from_pairs(real: &[Action], sim: &[Action]) -> Result<Self> {
        if real.len() != sim.len() {
            return Err(Error::Alignment(alloc::format!("{} real vs {} simulated decisions", real.len(), sim.len())));
        }
        let mut m = ConfusionMatrix::default();
        for (&r, &s) in real.iter().zip(sim) {
            m.record(r, s);
        }
        Ok(m)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> Option<f64> {
        let t = self.total();
        (t > 0).then(|| (0..3).map(|i| self.counts[i][i]).sum::<u64>() as f64 / t as f64)
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Mean and population standard deviation; `None` when empty.
pub fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
    Some((m, libm::sqrt(var)))
}

/// Positional fitness: mean over scenarios of the mean over users of the
/// mean per-frame error. Users without frames and scenarios without users are
/// skipped.
pub fn nested_position_error(scenarios: &[Vec<Vec<f64>>]) -> Result<f64> {
    let per_scenario: Vec<f64> = scenarios
        .iter()
        .filter_map(|users| {
            let per_user: Vec<f64> = users.iter().filter(|e| !e.is_empty()).map(|e| mean(e)).collect();
            (!per_user.is_empty()).then(|| mean(&per_user))
        })
        .collect();
    if per_scenario.is_empty() {
        return Err(Error::UndefinedMetric("no scored users"));
    }
    Ok(mean(&per_scenario))
}

/// Decision fitness in `[-1, 1]`: +1 per reproduced decision, −1 otherwise,
/// averaged over users and then scenarios. Empty scenarios are skipped.
pub fn decision_agreement(scenarios: &[Vec<bool>]) -> Result<f64> {
    let per_scenario: Vec<f64> = scenarios
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| mean(&s.iter().map(|&m| if m { 1.0 } else { -1.0 }).collect::<Vec<_>>()))
        .collect();
    if per_scenario.is_empty() {
        return Err(Error::UndefinedMetric("no annotated decisions"));
    }
    Ok(mean(&per_scenario))
}
