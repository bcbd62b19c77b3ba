//! Closed-form error tolerance per layer for each coding strategy.

use crate::code::{bp_unknowns, ff_unknowns, Substitution};
use crate::decoder::DecodeMode;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Gpd(Substitution),
    /// Separate systematic MDS codes for the two products.
    Mds,
    /// Plain replication of an `m x n` split.
    Rep,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Gpd(Substitution::UEqVn) => "gpd_uvn",
            Strategy::Gpd(Substitution::VEqUm) => "gpd_vum",
            Strategy::Mds => "mds",
            Strategy::Rep => "rep",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gpd_uvn" | "uvn" => Some(Strategy::Gpd(Substitution::UEqVn)),
            "gpd_vum" | "vum" => Some(Strategy::Gpd(Substitution::VEqUm)),
            "mds" => Some(Strategy::Mds),
            "rep" | "replication" => Some(Strategy::Rep),
            _ => None,
        }
    }

    pub const ALL: [Strategy; 4] = [
        Strategy::Gpd(Substitution::UEqVn),
        Strategy::Gpd(Substitution::VEqUm),
        Strategy::Mds,
        Strategy::Rep,
    ];
}

/// Layer geometry for a tolerance lookup. `workers` is used by the GPD
/// and replication strategies, `p_f` and `p_b` by MDS.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub m: usize,
    pub n: usize,
    pub d1: usize,
    pub d2: usize,
    pub workers: usize,
    pub p_f: usize,
    pub p_b: usize,
}

impl Geometry {
    pub fn single(m: usize, n: usize, workers: usize) -> Self {
        Self {
            m,
            n,
            d1: 1,
            d2: 1,
            workers,
            p_f: workers,
            p_b: workers,
        }
    }
}

fn by_model(slack: i64, model: DecodeMode) -> i64 {
    match model {
        DecodeMode::Adversarial => slack.div_euclid(2),
        DecodeMode::Probabilistic => slack - 1,
    }
}

/// Tolerable errors `(t_f, t_b)` in the feedforward and backprop products.
/// Negative values mean the geometry cannot decode at all.
pub fn tolerance_table(strategy: Strategy, model: DecodeMode, g: Geometry) -> Result<(i64, i64)> {
    let (m, n) = (g.m as i64, g.n as i64);
    let mn = m * n;
    match strategy {
        Strategy::Gpd(sub) => {
            let p = g.workers as i64;
            Ok((
                by_model(p - ff_unknowns(g.m, g.n, g.d1, sub) as i64, model),
                by_model(p - bp_unknowns(g.m, g.n, g.d2, sub) as i64, model),
            ))
        }
        Strategy::Mds => {
            let (pf, pb) = (g.p_f as i64, g.p_b as i64);
            Ok(match model {
                DecodeMode::Adversarial => {
                    ((pf - mn).div_euclid(2 * n), (pb - mn).div_euclid(2 * m))
                }
                DecodeMode::Probabilistic => {
                    ((pf - mn - n).div_euclid(n), (pb - mn - m).div_euclid(m))
                }
            })
        }
        Strategy::Rep => {
            if !g.workers.is_multiple_of(g.m * g.n) {
                return Err(Error::Dimension(format!(
                    "{} workers do not split into replicas of {}",
                    g.workers,
                    g.m * g.n
                )));
            }
            let p = g.workers as i64;
            let t = match model {
                DecodeMode::Adversarial => (p - mn).div_euclid(2 * mn),
                DecodeMode::Probabilistic => p / mn - 2,
            };
            Ok((t, t))
        }
    }
}
