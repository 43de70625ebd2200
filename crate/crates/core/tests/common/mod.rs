//! Generators, fixtures and independent oracles shared by the property
//! suites and the acceptance target.
#![allow(dead_code)]

pub mod backports;
pub mod corpus;
pub mod fp_counts;
pub mod props;
pub mod reach;
pub mod stitch;

use rand::rngs::StdRng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}
