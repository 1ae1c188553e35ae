use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

impl SplitTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Val => "val",
            SplitTag::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(SplitTag::Train),
            "val" => Some(SplitTag::Val),
            "test" => Some(SplitTag::Test),
            _ => None,
        }
    }
}

/// Row indices per partition, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn tags(&self, n: usize) -> Vec<SplitTag> {
        let mut tags = vec![SplitTag::Test; n];
        for &i in &self.train {
            tags[i] = SplitTag::Train;
        }
        for &i in &self.val {
            tags[i] = SplitTag::Val;
        }
        tags
    }

    pub fn from_tags(tags: &[SplitTag]) -> Self {
        let mut s = Split::default();
        for (i, t) in tags.iter().enumerate() {
            match t {
                SplitTag::Train => s.train.push(i),
                SplitTag::Val => s.val.push(i),
                SplitTag::Test => s.test.push(i),
            }
        }
        s
    }
}

/// Seeded shuffle of `0..n`; train and val take `floor(ratio * n)` rows and
/// the remainder goes to test.
pub fn split_cohort(n: usize, ratios: [f64; 3], seed: u64) -> Result<Split> {
    if ratios.iter().any(|r| !(*r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split ratios {ratios:?} must be non-negative and sum to 1"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (ratios[0] * n as f64 + 1e-9).floor() as usize;
    let n_val = ((ratios[1] * n as f64 + 1e-9).floor() as usize).min(n - n_train);
    let mut train = order[..n_train].to_vec();
    let mut val = order[n_train..n_train + n_val].to_vec();
    let mut test = order[n_train + n_val..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, val, test })
}
