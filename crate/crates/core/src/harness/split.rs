use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::signal::SampleWindowPair;

pub const TRAIN_RATIO: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum SplitMode {
    #[default]
    TimeBased,
    Random,
}

/// Per-record 80/20 partition. Time-based keeps the earliest windows for
/// training; random shuffles each record's windows with a seeded generator.
/// Records keep their order of first appearance.
pub fn split(
    windows: Vec<SampleWindowPair>,
    mode: SplitMode,
    ratio: f64,
    seed: u64,
) -> Result<(Vec<SampleWindowPair>, Vec<SampleWindowPair>), HarnessError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(HarnessError::InvalidConfig(format!("split ratio {ratio}")));
    }
    let mut groups: Vec<(String, Vec<SampleWindowPair>)> = Vec::new();
    for w in windows {
        match groups.iter_mut().find(|(id, _)| *id == w.record_id) {
            Some((_, g)) => g.push(w),
            None => groups.push((w.record_id.clone(), vec![w])),
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (id, mut group) in groups {
        if group.len() < 2 {
            return Err(HarnessError::TooFewWindows(id));
        }
        match mode {
            SplitMode::TimeBased => group.sort_by(|a, b| a.t_start.total_cmp(&b.t_start)),
            SplitMode::Random => group.shuffle(&mut rng),
        }
        let n_train = ((group.len() as f64 * ratio).floor() as usize).clamp(1, group.len() - 1);
        let rest = group.split_off(n_train);
        train.extend(group);
        test.extend(rest);
    }
    Ok((train, test))
}
