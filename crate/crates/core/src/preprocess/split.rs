use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::substream;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.81,
            val: 0.09,
            test: 0.10,
        }
    }
}

/// Record indices per split, each sorted ascending.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Hold out whole builds for test, then split the remaining parts at random
/// into train and val. `build_ids[i]` is the build of record `i`.
pub fn split_by_build(build_ids: &[u32], ratios: SplitRatios, seed: u64) -> Result<Split> {
    let SplitRatios { train, val, test } = ratios;
    if [train, val, test].iter().any(|r| !r.is_finite() || *r < 0.0) || ((train + val + test) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split ratios must be non-negative and sum to 1, got {train} + {val} + {test}"
        )));
    }
    let mut builds: Vec<u32> = build_ids.to_vec();
    builds.sort_unstable();
    builds.dedup();
    if builds.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "build-level split needs at least 3 builds, got {}",
            builds.len()
        )));
    }
    let n_test = ((test * builds.len() as f64).round() as usize).clamp(1, builds.len() - 1);
    builds.shuffle(&mut substream(seed, "split", 0));
    let held: Vec<u32> = builds[..n_test].to_vec();

    let mut out = Split::default();
    let mut rest = Vec::new();
    for (i, b) in build_ids.iter().enumerate() {
        if held.contains(b) {
            out.test.push(i);
        } else {
            rest.push(i);
        }
    }
    rest.shuffle(&mut substream(seed, "split", 1));
    let n_val = if train + val > 0.0 {
        (val / (train + val) * rest.len() as f64).round() as usize
    } else {
        0
    };
    out.val = rest[..n_val].to_vec();
    out.train = rest[n_val..].to_vec();
    out.train.sort_unstable();
    out.val.sort_unstable();
    Ok(out)
}
