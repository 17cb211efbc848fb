use proptest::prelude::*;

use crate::model::DepTree;

/// Random valid tree: attach tokens in a random order to an earlier node.
pub(crate) fn arb_tree(max_q: usize) -> impl Strategy<Value = DepTree> {
    proptest::collection::vec(any::<u64>(), 1..=max_q).prop_map(|keys| {
        let q = keys.len();
        let mut order: Vec<usize> = (1..=q).collect();
        order.sort_by_key(|&t| (keys[t - 1] >> 32, t));
        let mut heads = vec![0; q];
        for (pos, &tok) in order.iter().enumerate().skip(1) {
            heads[tok - 1] = order[(keys[tok - 1] as usize) % pos];
        }
        DepTree::new(heads).unwrap()
    })
}
