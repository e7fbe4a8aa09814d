//! Oracles shared by the integration suites. Nothing here calls into the
//! code under test except the `model::Subject` adapter.
#![allow(dead_code)]

pub mod corpus;
pub mod model;
pub mod pool_oracle;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
