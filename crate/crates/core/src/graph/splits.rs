use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LabelStore, NodeId};
use crate::error::{Error, Result};

/// Nodes sampled per class for the initial labeled set.
pub const INITIAL_PER_CLASS: usize = 2;

/// Disjoint node partitions; each list is sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSet {
    pub initial: Vec<NodeId>,
    pub pool: Vec<NodeId>,
    pub valid: Vec<NodeId>,
    pub test: Vec<NodeId>,
}

/// Validation/test sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub valid: usize,
    pub test: usize,
}

impl SplitSizes {
    pub const STANDARD: SplitSizes = SplitSizes { valid: 50, test: 1000 };

    /// 50/1000 when that still leaves at least 40% of the nodes for the
    /// pool; otherwise 5% validation and 40% test.
    pub fn for_graph(num_nodes: usize, num_classes: usize) -> Self {
        let reserved = INITIAL_PER_CLASS * num_classes + Self::STANDARD.valid + Self::STANDARD.test;
        if num_nodes >= reserved && (num_nodes - reserved) * 5 >= num_nodes * 2 {
            Self::STANDARD
        } else {
            SplitSizes {
                valid: num_nodes.div_ceil(20),
                test: num_nodes * 2 / 5,
            }
        }
    }
}

/// Two random nodes per class form the initial set, then validation and
/// test nodes are drawn from the rest; everything left is the pool.
pub fn make_splits(labels: &LabelStore, seed: u64, valid_size: usize, test_size: usize) -> Result<SplitSet> {
    let n = labels.len();
    let c = labels.num_classes();
    for (class, &count) in labels.class_counts().iter().enumerate() {
        if count < INITIAL_PER_CLASS {
            return Err(Error::ClassTooSmall {
                class,
                count,
                required: INITIAL_PER_CLASS,
            });
        }
    }
    let reserved = INITIAL_PER_CLASS * c + valid_size + test_size;
    if reserved >= n {
        return Err(Error::InvalidArgument(format!(
            "splits need {reserved} of {n} nodes and would leave the pool empty"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut initial = Vec::with_capacity(INITIAL_PER_CLASS * c);
    for class in 0..c {
        let mut members = labels.members(class);
        members.shuffle(&mut rng);
        initial.extend_from_slice(&members[..INITIAL_PER_CLASS]);
    }
    let mut taken = vec![false; n];
    for &i in &initial {
        taken[i] = true;
    }
    let mut rest: Vec<NodeId> = (0..n).filter(|&i| !taken[i]).collect();
    rest.shuffle(&mut rng);
    let mut valid = rest[..valid_size].to_vec();
    let mut test = rest[valid_size..valid_size + test_size].to_vec();
    let mut pool = rest[valid_size + test_size..].to_vec();
    for v in [&mut initial, &mut valid, &mut test, &mut pool] {
        v.sort_unstable();
    }
    Ok(SplitSet {
        initial,
        pool,
        valid,
        test,
    })
}
