//! Seeded generator for the fixture corpus of small MDPs. Every probability
//! and reward is a multiple of `2^-20`, so the tables are exact in binary
//! and serialize losslessly.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::TabularMdp;
use crate::rng::RngStream;

pub const CORPUS_DENOMINATOR: u64 = 1 << 20;

/// Seed of the checked-in fixture corpus.
pub const CORPUS_SEED: u64 = 2024;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub id: String,
    pub seed: u64,
    pub horizon: usize,
    pub mdp: TabularMdp,
}

fn dyadic_distribution(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let raw: Vec<u64> = (0..n)
        .map(|_| rng.random_range(1..=CORPUS_DENOMINATOR))
        .collect();
    let total: u64 = raw.iter().sum();
    let mut counts: Vec<u64> = raw
        .iter()
        .map(|r| (*r as u128 * CORPUS_DENOMINATOR as u128 / total as u128) as u64)
        .collect();
    let assigned: u64 = counts.iter().sum();
    counts[0] += CORPUS_DENOMINATOR - assigned;
    counts
        .iter()
        .map(|c| *c as f64 / CORPUS_DENOMINATOR as f64)
        .collect()
}

fn dyadic_reward(rng: &mut impl Rng) -> f64 {
    let d = CORPUS_DENOMINATOR as i64;
    rng.random_range(-d..=d) as f64 / d as f64
}

/// One MDP per `(|S|, |A|, M, H)` in `{1,2,3} x {2,3} x {1,2,3} x {1,2,3}`.
pub fn generate_corpus(seed: u64) -> Vec<CorpusEntry> {
    let mut out = Vec::new();
    for states in 1..=3 {
        for actions in 2..=3 {
            for objectives in 1..=3 {
                for horizon in 1..=3 {
                    let entry_seed = out.len() as u64;
                    let mut rng = RngStream::new(seed, entry_seed, 0, 0).rng();
                    let transitions = (0..states)
                        .map(|_| {
                            (0..actions)
                                .map(|_| dyadic_distribution(states, &mut rng))
                                .collect()
                        })
                        .collect();
                    let rewards = (0..states)
                        .map(|_| {
                            (0..actions)
                                .map(|_| (0..objectives).map(|_| dyadic_reward(&mut rng)).collect())
                                .collect()
                        })
                        .collect();
                    let initial = dyadic_distribution(states, &mut rng);
                    let gamma = rng.random_range(4..=8) as f64 / 8.0;
                    let mdp = TabularMdp::new(transitions, rewards, initial, gamma)
                        .expect("generated tables are valid");
                    out.push(CorpusEntry {
                        id: format!("s{states}-a{actions}-m{objectives}-h{horizon}"),
                        seed: entry_seed,
                        horizon,
                        mdp,
                    });
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_shape_and_exactness() {
        let corpus = generate_corpus(2024);
        assert_eq!(corpus.len(), 54);
        for e in &corpus {
            for s in 0..e.mdp.states() {
                for a in 0..e.mdp.actions() {
                    let p = e.mdp.transition(s, a);
                    assert_eq!(p.iter().sum::<f64>(), 1.0);
                    for x in p.iter().chain(e.mdp.reward(s, a)) {
                        let scaled = x * CORPUS_DENOMINATOR as f64;
                        assert_eq!(scaled, scaled.round());
                    }
                }
            }
        }
        assert_eq!(corpus, generate_corpus(2024));
    }
}
