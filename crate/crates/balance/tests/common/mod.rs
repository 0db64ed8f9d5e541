#![allow(dead_code)]

use spp_core::{generate, ClusterTopology, GeneratorParams, SppInstance};

/// Cheapest exact cover by trying every subset of columns.
pub fn brute_force(inst: &SppInstance) -> Option<u64> {
    let n = inst.n_vars();
    assert!(n <= 24, "enumeration oracle is for small instances");
    let full: u64 = if inst.m_items == 64 {
        u64::MAX
    } else {
        (1u64 << inst.m_items) - 1
    };
    let masks: Vec<u64> = inst
        .columns
        .iter()
        .map(|col| col.iter().fold(0u64, |m, &i| m | 1u64 << i))
        .collect();
    let mut best: Option<u64> = None;
    for subset in 0u64..(1u64 << n) {
        let mut cover = 0u64;
        let mut cost = 0u64;
        let mut ok = true;
        for j in 0..n {
            if subset >> j & 1 == 1 {
                if cover & masks[j] != 0 {
                    ok = false;
                    break;
                }
                cover |= masks[j];
                cost += inst.costs[j];
            }
        }
        if ok && cover == full && best.is_none_or(|b| cost < b) {
            best = Some(cost);
        }
    }
    best
}

pub fn instance(m: usize, n: usize, p: f64, seed: u64) -> SppInstance {
    generate(&GeneratorParams::new(m, n, p, seed)).expect("generator parameters are valid")
}

pub fn uniform(m: usize, p: usize, c: usize) -> ClusterTopology {
    ClusterTopology::uniform(m, p, c, 6 * 1024 * 1024, 8e-9)
}
