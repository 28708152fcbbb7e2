//! The one-shot Bertrand duopoly stage game.
//!
//! Both firms post a price from a discrete grid. Demand is linear in the
//! lowest posted price, `D = max(grid) - min(p1, p2)`, and the cheaper firm
//! serves all of it. Equal prices split demand in half.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A posted price, in grid units.
pub type Price = u32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub price_levels: Vec<Price>,
    #[serde(default)]
    pub marginal_cost: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self { price_levels: (0..=6).collect(), marginal_cost: 0.0 }
    }
}

impl EnvConfig {
    pub fn with_levels(price_levels: Vec<Price>) -> Result<Self> {
        let cfg = Self { price_levels, marginal_cost: 0.0 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.price_levels.is_empty() {
            return Err(Error::InvalidEnv("price grid is empty".into()));
        }
        if self.price_levels.len() > usize::from(u8::MAX) {
            return Err(Error::InvalidEnv(format!(
                "at most {} price levels are supported",
                u8::MAX
            )));
        }
        if !self.price_levels.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidEnv("price grid must be strictly increasing".into()));
        }
        if !self.marginal_cost.is_finite() || self.marginal_cost < 0.0 {
            return Err(Error::InvalidEnv(format!(
                "marginal cost must be finite and non-negative, got {}",
                self.marginal_cost
            )));
        }
        Ok(())
    }

    pub fn num_levels(&self) -> usize {
        self.price_levels.len()
    }

    pub fn max_price(&self) -> Price {
        *self.price_levels.last().expect("validated grid is non-empty")
    }

    /// Position of `p` on the grid.
    pub fn level_index(&self, p: Price) -> Result<usize> {
        self.price_levels.binary_search(&p).map_err(|_| Error::InvalidPrice(p))
    }

    pub fn price_at(&self, index: usize) -> Price {
        self.price_levels[index]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub demand: f64,
    pub profit_1: f64,
    pub profit_2: f64,
}

impl StageOutcome {
    pub fn profits(&self) -> [f64; 2] {
        [self.profit_1, self.profit_2]
    }
}

pub fn demand(p1: Price, p2: Price, cfg: &EnvConfig) -> Result<f64> {
    cfg.level_index(p1)?;
    cfg.level_index(p2)?;
    Ok(demand_unchecked(p1, p2, cfg.max_price()))
}

fn demand_unchecked(p1: Price, p2: Price, max_price: Price) -> f64 {
    f64::from(max_price - p1.min(p2))
}

pub fn stage_profits(p1: Price, p2: Price, cfg: &EnvConfig) -> Result<StageOutcome> {
    let demand = demand(p1, p2, cfg)?;
    let margin = |p: Price| f64::from(p) - cfg.marginal_cost;
    let (profit_1, profit_2) = match p1.cmp(&p2) {
        std::cmp::Ordering::Less => (margin(p1) * demand, 0.0),
        std::cmp::Ordering::Greater => (0.0, margin(p2) * demand),
        // Halves of small integers are exact in binary floating point.
        std::cmp::Ordering::Equal => {
            let each = margin(p1) * demand / 2.0;
            (each, each)
        }
    };
    Ok(StageOutcome { demand, profit_1, profit_2 })
}

/// Precomputed profit table over grid indices, used on the hot path.
#[derive(Debug, Clone)]
pub struct StageGame {
    levels: usize,
    prices: Vec<Price>,
    // profits[own * levels + other] = own profit
    profits: Vec<f64>,
}

impl StageGame {
    pub fn new(cfg: &EnvConfig) -> Result<Self> {
        cfg.validate()?;
        let levels = cfg.num_levels();
        let mut profits = Vec::with_capacity(levels * levels);
        for &own in &cfg.price_levels {
            for &other in &cfg.price_levels {
                profits.push(stage_profits(own, other, cfg)?.profit_1);
            }
        }
        Ok(Self { levels, prices: cfg.price_levels.clone(), profits })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn price(&self, index: usize) -> Price {
        self.prices[index]
    }

    /// Profit of a firm at level `own` facing a rival at level `other`.
    #[inline]
    pub fn profit(&self, own: usize, other: usize) -> f64 {
        self.profits[own * self.levels + other]
    }

    #[inline]
    pub fn profits(&self, a1: usize, a2: usize) -> [f64; 2] {
        [self.profit(a1, a2), self.profit(a2, a1)]
    }
}

/// All pure Nash equilibria of the one-shot game, found by checking every
/// unilateral deviation from every profile.
pub fn one_shot_equilibria(cfg: &EnvConfig) -> Result<Vec<(Price, Price)>> {
    let game = StageGame::new(cfg)?;
    let n = game.levels();
    let mut out = Vec::new();
    for a1 in 0..n {
        for a2 in 0..n {
            let [r1, r2] = game.profits(a1, a2);
            let no_dev_1 = (0..n).all(|d| game.profit(d, a2) <= r1);
            let no_dev_2 = (0..n).all(|d| game.profit(d, a1) <= r2);
            if no_dev_1 && no_dev_2 {
                out.push((game.price(a1), game.price(a2)));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Benchmarks {
    pub competitive_profit: f64,
    pub monopoly_profit: f64,
    pub competitive_price: Price,
    pub monopoly_price: Price,
}

/// Competitive and monopoly reference outcomes, per player.
///
/// The competitive outcome is the symmetric one-shot equilibrium with the
/// highest payoff; the monopoly outcome is the symmetric price maximizing
/// the shared tie profit. Ties in either selection go to the lower price.
pub fn benchmarks(cfg: &EnvConfig) -> Result<Benchmarks> {
    let game = StageGame::new(cfg)?;
    let mut competitive: Option<(Price, f64)> = None;
    for (p1, p2) in one_shot_equilibria(cfg)? {
        if p1 != p2 {
            continue;
        }
        let profit = game.profit(cfg.level_index(p1)?, cfg.level_index(p2)?);
        if competitive.is_none_or(|(_, best)| profit > best) {
            competitive = Some((p1, profit));
        }
    }
    // Undercutting makes some symmetric profile an equilibrium on any grid
    // with zero marginal cost; fall back to the lowest price otherwise.
    let (competitive_price, competitive_profit) =
        competitive.unwrap_or_else(|| (cfg.price_at(0), game.profit(0, 0)));

    let (monopoly_index, monopoly_profit) = (0..game.levels())
        .map(|i| (i, game.profit(i, i)))
        .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });

    Ok(Benchmarks {
        competitive_profit,
        monopoly_profit,
        competitive_price,
        monopoly_price: game.price(monopoly_index),
    })
}
