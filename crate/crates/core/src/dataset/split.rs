use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DatasetError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    ValSeen,
    ValUnseen,
    Test,
    RealLike,
}

impl SplitName {
    pub const ALL: [SplitName; 5] = [SplitName::Train, SplitName::ValSeen, SplitName::ValUnseen, SplitName::Test, SplitName::RealLike];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::ValSeen => "val_seen",
            SplitName::ValUnseen => "val_unseen",
            SplitName::Test => "test",
            SplitName::RealLike => "real_like",
        }
    }
}

impl std::fmt::Display for SplitName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SplitName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SplitName::ALL.into_iter().find(|n| n.as_str() == s).ok_or_else(|| format!("unknown split {s:?}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val_seen: f64,
    pub val_unseen: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { train: 0.65, val_seen: 0.05, val_unseen: 0.11, test: 0.19 }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let parts = [self.train, self.val_seen, self.val_unseen, self.test];
        let sum: f64 = parts.iter().sum();
        if parts.iter().any(|r| !(0.0..=1.0).contains(r)) || (sum - 1.0).abs() > 1e-9 {
            return Err(DatasetError::BadRatios(format!("{parts:?} must be in [0, 1] and sum to 1 (sum {sum})")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub name: SplitName,
    pub traj_ids: Vec<String>,
}

/// Assign trajectories to splits. Whole worlds go to val_unseen and test, so
/// those splits never share a world with train; the remaining worlds are
/// shared by train and val_seen.
///
/// `trajs` is a list of `(traj_id, world_seed)`.
pub fn split_dataset(trajs: &[(String, u64)], ratios: &SplitRatios, seed: u64) -> Result<Vec<DatasetSplit>, DatasetError> {
    ratios.validate()?;
    let mut by_world: BTreeMap<u64, Vec<String>> = BTreeMap::new();
    for (id, w) in trajs {
        by_world.entry(*w).or_default().push(id.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worlds: Vec<u64> = by_world.keys().copied().collect();
    worlds.shuffle(&mut rng);

    let total = trajs.len() as f64;
    let want_unseen = (ratios.val_unseen * total).round() as usize;
    let want_test = (ratios.test * total).round() as usize;
    let seen_share = ratios.train + ratios.val_seen;
    let mut unseen = Vec::new();
    let mut test = Vec::new();
    let mut seen = Vec::new();
    let mut remaining = worlds.len();
    for w in worlds {
        let ids = by_world.remove(&w).unwrap();
        // Keep at least one world for the seen splits when they are non-empty.
        let spare = remaining > 1 || seen_share == 0.0;
        if unseen.len() < want_unseen && spare {
            unseen.extend(ids);
        } else if test.len() < want_test && spare {
            test.extend(ids);
        } else {
            seen.extend(ids);
        }
        remaining -= 1;
    }
    seen.sort();
    seen.shuffle(&mut rng);
    let n_val_seen = if seen_share > 0.0 { ((ratios.val_seen / seen_share) * seen.len() as f64).round() as usize } else { 0 };
    let val_seen = seen.split_off(seen.len() - n_val_seen.min(seen.len()));

    let mut out = vec![
        DatasetSplit { name: SplitName::Train, traj_ids: seen },
        DatasetSplit { name: SplitName::ValSeen, traj_ids: val_seen },
        DatasetSplit { name: SplitName::ValUnseen, traj_ids: unseen },
        DatasetSplit { name: SplitName::Test, traj_ids: test },
    ];
    for s in &mut out {
        s.traj_ids.sort();
    }
    Ok(out)
}

/// Disjointness and world isolation checks over assigned splits.
pub fn check_split_laws(splits: &[DatasetSplit], world_of: &BTreeMap<String, u64>) -> Result<(), String> {
    let mut seen_ids = BTreeSet::new();
    for s in splits {
        for id in &s.traj_ids {
            if !seen_ids.insert(id.clone()) {
                return Err(format!("{id} appears in more than one split"));
            }
        }
    }
    let worlds = |name: SplitName| -> BTreeSet<u64> {
        splits.iter().filter(|s| s.name == name).flat_map(|s| s.traj_ids.iter().map(|id| world_of[id])).collect()
    };
    let train = worlds(SplitName::Train);
    for held in [SplitName::ValUnseen, SplitName::Test] {
        if let Some(w) = worlds(held).intersection(&train).next() {
            return Err(format!("world {w} is shared by train and {held}"));
        }
    }
    Ok(())
}
