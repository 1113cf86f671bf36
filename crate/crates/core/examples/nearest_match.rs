//! Decodes start/end index sets with the nearest-match rule and, for
//! contrast, the greedy-consume rule.
//!
//! ```sh
//! cargo run --example nearest_match -- 0,1 1,2
//! ```

use grape_ner::decode::{greedy_consume_match, nearest_match, IndexSets};

fn parse(arg: Option<String>) -> Vec<usize> {
    arg.map_or_else(Vec::new, |a| a.split(',').filter(|s| !s.is_empty()).map(|s| s.parse().expect("index")).collect())
}

fn main() {
    let mut args = std::env::args().skip(1);
    let cases = if args.len() >= 2 {
        vec![(parse(args.next()), parse(args.next()))]
    } else {
        vec![(vec![2, 5], vec![3, 5]), (vec![0, 1], vec![1, 2]), (vec![0, 3], vec![4]), (vec![4], vec![1, 6])]
    };
    for (starts, ends) in cases {
        let idx = IndexSets { starts, ends };
        println!(
            "starts {:?} ends {:?} → nearest {:?}, greedy {:?}",
            idx.starts,
            idx.ends,
            nearest_match(&idx),
            greedy_consume_match(&idx)
        );
    }
}
