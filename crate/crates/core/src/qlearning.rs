//! Tabular Q-learning over the duopoly grid.
//!
//! States and actions are both grid indices: an agent conditions on the
//! rival's last price and picks its own next price.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, StageGame};
use crate::error::{Error, Result};

/// One designer's strategy: learning rate, exploration rate, discount factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentParams {
    pub alpha: f64,
    pub epsilon: f64,
    pub gamma: f64,
}

impl AgentParams {
    pub fn new(alpha: f64, epsilon: f64, gamma: f64) -> Result<Self> {
        let p = Self { alpha, epsilon, gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let Self { alpha, epsilon, gamma } = *self;
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParams(format!("alpha must lie in (0, 1], got {alpha}")));
        }
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidParams(format!(
                "epsilon must lie in [0, 1], got {epsilon}"
            )));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidParams(format!("gamma must lie in [0, 1), got {gamma}")));
        }
        Ok(())
    }
}

impl std::fmt::Display for AgentParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(alpha={}, epsilon={}, gamma={})", self.alpha, self.epsilon, self.gamma)
    }
}

const QTABLE_MAGIC: &[u8; 4] = b"QTBL";
const QTABLE_VERSION: u16 = 1;

/// State-by-action value table, stored row-major by state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    states: usize,
    actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(states: usize, actions: usize) -> Self {
        Self { states, actions, values: vec![0.0; states * actions] }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let states = rows.len();
        let actions = rows.first().map_or(0, Vec::len);
        if states == 0 || actions == 0 || rows.iter().any(|r| r.len() != actions) {
            return Err(Error::InvalidParams("Q-table rows must be non-empty and equal length".into()));
        }
        let values: Vec<f64> = rows.into_iter().flatten().collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("Q-table entries must be finite".into()));
        }
        Ok(Self { states, actions, values })
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    #[inline]
    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.actions + action]
    }

    #[inline]
    pub fn set(&mut self, state: usize, action: usize, value: f64) {
        self.values[state * self.actions + action] = value;
    }

    #[inline]
    pub fn row(&self, state: usize) -> &[f64] {
        let start = state * self.actions;
        &self.values[start..start + self.actions]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.actions)
    }

    #[inline]
    pub fn row_max(&self, state: usize) -> f64 {
        self.row(state).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Every action attaining the row maximum, in ascending order.
    pub fn argmax_set(&self, state: usize) -> Vec<usize> {
        let row = self.row(state);
        let max = self.row_max(state);
        row.iter().enumerate().filter(|(_, &v)| v == max).map(|(a, _)| a).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let row = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::MalformedCsv { line: i + 1, reason: e.to_string() })?;
            rows.push(row);
        }
        Self::from_rows(rows)
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(QTABLE_MAGIC)?;
        w.write_u16::<LittleEndian>(QTABLE_VERSION)?;
        w.write_u32::<LittleEndian>(self.states as u32)?;
        w.write_u32::<LittleEndian>(self.actions as u32)?;
        for &v in &self.values {
            w.write_f64::<LittleEndian>(v)?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != QTABLE_MAGIC {
            return Err(Error::InvalidParams("not a Q-table record".into()));
        }
        let version = r.read_u16::<LittleEndian>()?;
        if version != QTABLE_VERSION {
            return Err(Error::InvalidParams(format!("unsupported Q-table version {version}")));
        }
        let states = r.read_u32::<LittleEndian>()? as usize;
        let actions = r.read_u32::<LittleEndian>()? as usize;
        let mut rows = vec![vec![0.0; actions]; states];
        for row in &mut rows {
            r.read_f64_into::<LittleEndian>(row)?;
        }
        Self::from_rows(rows)
    }
}

/// Initial values: the discounted return of each price against a rival
/// pricing uniformly at random, identical for every state.
pub fn init_qtable(params: &AgentParams, cfg: &EnvConfig) -> Result<QTable> {
    let game = StageGame::new(cfg)?;
    init_from_game(params.gamma, &game)
}

pub(crate) fn init_from_game(gamma: f64, game: &StageGame) -> Result<QTable> {
    if !(gamma < 1.0) {
        return Err(Error::InitUndefined(gamma));
    }
    let n = game.levels();
    let row: Vec<f64> = (0..n)
        .map(|a| {
            let total: f64 = (0..n).map(|b| game.profit(a, b)).sum();
            total / ((1.0 - gamma) * n as f64)
        })
        .collect();
    Ok(QTable { states: n, actions: n, values: row.repeat(n) })
}

/// Epsilon-greedy selection.
///
/// Draw order is fixed: one uniform draw decides exploration; an exploring
/// agent then draws a uniform action, while a greedy agent draws again only
/// to break a tie among maximizing actions.
#[inline]
pub fn select_action<R: Rng + ?Sized>(q: &QTable, state: usize, epsilon: f64, rng: &mut R) -> usize {
    let explore = rng.gen::<f64>() < epsilon;
    if explore {
        return rng.gen_range(0..q.actions);
    }
    greedy_action(q, state, rng)
}

/// Argmax of a row, uniform among ties.
#[inline]
pub fn greedy_action<R: Rng + ?Sized>(q: &QTable, state: usize, rng: &mut R) -> usize {
    let row = q.row(state);
    let mut best = row[0];
    let mut first = 0;
    let mut ties = 1usize;
    for (a, &v) in row.iter().enumerate().skip(1) {
        if v > best {
            best = v;
            first = a;
            ties = 1;
        } else if v == best {
            ties += 1;
        }
    }
    if ties == 1 {
        return first;
    }
    let pick = rng.gen_range(0..ties);
    row.iter()
        .enumerate()
        .filter(|(_, &v)| v == best)
        .nth(pick)
        .map(|(a, _)| a)
        .expect("tie index within tie count")
}

/// `Q(s,a) += alpha * (r + gamma * max_a' Q(s',a') - Q(s,a))`; returns the new value.
#[inline]
pub fn bellman_update(
    q: &mut QTable,
    state: usize,
    action: usize,
    reward: f64,
    next_state: usize,
    params: &AgentParams,
) -> f64 {
    let target = reward + params.gamma * q.row_max(next_state);
    let old = q.get(state, action);
    let new = old + params.alpha * (target - old);
    q.set(state, action, new);
    new
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn params(alpha: f64, epsilon: f64, gamma: f64) -> AgentParams {
        AgentParams::new(alpha, epsilon, gamma).unwrap()
    }

    /// Mean own profit per price, enumerated by hand from the pricing rule
    /// on the 0..=6 grid.
    fn oracle_mean_profit(a: u32) -> f64 {
        let total: f64 = (0..=6u32)
            .map(|b| {
                let d = f64::from(6 - a.min(b));
                match a.cmp(&b) {
                    std::cmp::Ordering::Less => f64::from(a) * d,
                    std::cmp::Ordering::Equal => f64::from(a) * d / 2.0,
                    std::cmp::Ordering::Greater => 0.0,
                }
            })
            .sum();
        total / 7.0
    }

    #[test]
    fn params_domain() {
        assert!(AgentParams::new(0.0, 0.1, 0.1).is_err());
        assert!(AgentParams::new(1.0, 0.0, 0.0).is_ok());
        assert!(AgentParams::new(0.5, 1.1, 0.1).is_err());
        assert!(AgentParams::new(0.5, 0.5, 1.0).is_err());
        assert!(AgentParams::new(0.5, f64::NAN, 0.5).is_err());
    }

    #[test]
    fn init_examples() {
        let cfg = EnvConfig::default();
        let q = init_qtable(&params(0.1, 0.1, 0.0), &cfg).unwrap();
        assert_eq!(q.states(), 7);
        assert_eq!(q.actions(), 7);
        for s in 0..7 {
            assert_eq!(q.get(s, 3), 4.5);
            assert_eq!(q.get(s, 6), 0.0);
        }
        let q = init_qtable(&params(0.1, 0.1, 0.5), &cfg).unwrap();
        assert_eq!(q.get(4, 3), 9.0);
    }

    #[test]
    fn init_matches_enumeration_and_rows_constant() {
        let cfg = EnvConfig::default();
        for &gamma in &[0.0, 0.22, 0.5, 0.99] {
            let q = init_qtable(&params(0.1, 0.1, gamma), &cfg).unwrap();
            for a in 0..7u32 {
                let expected = oracle_mean_profit(a) / (1.0 - gamma);
                assert!((q.get(0, a as usize) - expected).abs() < 1e-12 * expected.max(1.0));
            }
            for s in 1..7 {
                assert_eq!(q.row(s), q.row(0));
            }
        }
        // greedy price of the initial row is 2 (36/7 beats 31.5/7)
        let q = init_qtable(&params(0.1, 0.1, 0.0), &cfg).unwrap();
        assert_eq!(q.argmax_set(0), vec![2]);
    }

    #[test]
    fn init_rejects_unit_discount() {
        let game = StageGame::new(&EnvConfig::default()).unwrap();
        assert!(matches!(init_from_game(1.0, &game), Err(Error::InitUndefined(_))));
    }

    #[test]
    fn greedy_unique_argmax() {
        let mut q = QTable::zeros(7, 7);
        for (a, v) in [0.0, 1.0, 5.0, 2.0, 0.0, 0.0, 0.0].into_iter().enumerate() {
            q.set(3, a, v);
        }
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            assert_eq!(select_action(&q, 3, 0.0, &mut rng), 2);
        }
    }

    #[test]
    fn greedy_tie_is_uniform_over_maximizers() {
        let mut q = QTable::zeros(7, 7);
        q.set(0, 1, 3.0);
        q.set(0, 4, 3.0);
        let mut counts = [0usize; 7];
        for seed in 0..4000 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            counts[select_action(&q, 0, 0.0, &mut rng)] += 1;
        }
        assert_eq!(counts[1] + counts[4], 4000);
        // binomial(4000, 1/2): sd ~ 32
        assert!((counts[1] as i64 - 2000).abs() < 160, "{counts:?}");
    }

    /// Pearson chi-square survival for 6 degrees of freedom, closed form.
    fn chi2_sf_df6(x: f64) -> f64 {
        let h = x / 2.0;
        (-h).exp() * (1.0 + h + h * h / 2.0)
    }

    #[test]
    fn full_exploration_is_uniform() {
        let mut q = QTable::zeros(7, 7);
        q.set(0, 5, 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut counts = [0f64; 7];
        for _ in 0..n {
            counts[select_action(&q, 0, 1.0, &mut rng)] += 1.0;
        }
        let e = n as f64 / 7.0;
        let chi2: f64 = counts.iter().map(|c| (c - e).powi(2) / e).sum();
        assert!(chi2_sf_df6(chi2) > 0.01, "chi2 = {chi2}");
    }

    #[test]
    fn epsilon_mixture_frequency() {
        let mut q = QTable::zeros(7, 7);
        q.set(2, 3, 1.0);
        let eps = 0.3;
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let non_greedy = (0..n).filter(|_| select_action(&q, 2, eps, &mut rng) != 3).count();
        let p = eps * 6.0 / 7.0;
        let expected = p * n as f64;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        // two-sided binomial z-test at the 1% level
        assert!(((non_greedy as f64 - expected) / sd).abs() < 2.576);
    }

    #[test]
    fn bellman_examples() {
        let mut q = QTable::zeros(7, 7);
        bellman_update(&mut q, 1, 3, 9.0, 0, &params(0.5, 0.0, 0.0));
        assert_eq!(q.get(1, 3), 4.5);

        for prior in [0.0, 3.0, -1.25, 12.5] {
            let mut q = QTable::zeros(7, 7);
            q.set(0, 0, prior);
            q.set(4, 6, 10.0);
            bellman_update(&mut q, 0, 0, 2.0, 4, &params(1.0, 0.0, 0.5));
            assert_eq!(q.get(0, 0), 7.0);
        }

        let mut q = QTable::zeros(7, 7);
        q.set(2, 3, 4.5);
        bellman_update(&mut q, 2, 3, 4.5, 5, &params(0.12, 0.0, 0.0));
        assert_eq!(q.get(2, 3), 4.5);
    }

    #[test]
    fn csv_and_binary_round_trip() {
        let cfg = EnvConfig::default();
        let mut q = init_qtable(&params(0.3, 0.1, 0.7), &cfg).unwrap();
        q.set(3, 3, -0.1);
        assert_eq!(QTable::from_csv(&q.to_csv()).unwrap(), q);
        let mut buf = Vec::new();
        q.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 2 + 4 + 4 + 49 * 8);
        assert_eq!(QTable::read_binary(buf.as_slice()).unwrap(), q);
    }

    mod props {
        use proptest::prelude::*;

        use super::*;

        fn table() -> impl Strategy<Value = QTable> {
            prop::collection::vec(-50.0f64..50.0, 49)
                .prop_map(|v| QTable::from_rows(v.chunks(7).map(<[f64]>::to_vec).collect()).unwrap())
        }

        proptest! {
            #[test]
            fn update_touches_one_entry(
                q in table(), s in 0usize..7, a in 0usize..7, s2 in 0usize..7,
                r in -10.0f64..10.0, alpha in 0.01f64..=1.0, gamma in 0.0f64..0.99,
            ) {
                let mut next = q.clone();
                bellman_update(&mut next, s, a, r, s2, &params(alpha, 0.0, gamma));
                for st in 0..7 {
                    for ac in 0..7 {
                        if (st, ac) != (s, a) {
                            prop_assert_eq!(next.get(st, ac), q.get(st, ac));
                        }
                    }
                }
            }

            #[test]
            fn zero_td_error_is_fixed_point(
                q in table(), s in 0usize..7, a in 0usize..7, s2 in 0usize..7,
                alpha in 0.01f64..=1.0, gamma in 0.0f64..0.99,
            ) {
                prop_assume!(s != s2);
                let mut q = q;
                q.set(s, a, 0.0);
                let value = gamma * q.row_max(s2);
                q.set(s, a, value);
                // reward chosen so that the target equals the current value
                let reward = value - gamma * q.row_max(s2);
                prop_assume!(reward + gamma * q.row_max(s2) == value);
                let before = q.get(s, a);
                bellman_update(&mut q, s, a, reward, s2, &params(alpha, 0.0, gamma));
                prop_assert_eq!(q.get(s, a), before);
            }

            #[test]
            fn greedy_with_unique_max_ignores_rng(q in table(), s in 0usize..7, seed in any::<u64>()) {
                prop_assume!(q.argmax_set(s).len() == 1);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                prop_assert_eq!(select_action(&q, s, 0.0, &mut rng), q.argmax_set(s)[0]);
            }
        }
    }
}
