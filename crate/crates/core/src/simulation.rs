//! Repeated duopoly play between two Q-learners.
//!
//! Each round both agents pick a price from their current state (the rival's
//! previous price), profits are paid, and both tables are updated with the
//! rival's new price as the next state. Within a round agent 1 draws from the
//! episode RNG before agent 2.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, Price, StageGame};
use crate::error::{Error, Result};
use crate::qlearning::{bellman_update, greedy_action, init_from_game, select_action, AgentParams, QTable};
use crate::rng::{episode_rng, substream};

const LIMIT_TIE_STREAM: u64 = 0x4c_494d_4954; // "LIMIT"
const RECORD_MAGIC: &[u8; 4] = b"EPRC";
const RECORD_VERSION: u16 = 1;

/// Whether an episode keeps its per-round streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fidelity {
    Full,
    Aggregate,
}

/// Exploration rate over the course of an episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExplorationSchedule {
    /// Each agent uses its own fixed epsilon.
    Fixed,
    /// Both agents use `eps0 * exp(-beta * t)` in round `t` (0-based).
    Decayed { eps0: f64, beta: f64 },
}

impl ExplorationSchedule {
    /// Decay from `eps0` to `eps0 / 1000` over `horizon` rounds.
    pub fn decayed_over(horizon: usize, eps0: f64) -> Self {
        Self::Decayed { eps0, beta: 1000f64.ln() / horizon as f64 }
    }
}

/// Realized joint price pairs, indexed by (agent 1 level, agent 2 level).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointCounts {
    levels: usize,
    counts: Vec<u64>,
}

impl JointCounts {
    pub fn new(levels: usize) -> Self {
        Self { levels, counts: vec![0; levels * levels] }
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> u64 {
        self.counts[u * self.levels + v]
    }

    #[inline]
    fn bump(&mut self, u: usize, v: usize) {
        self.counts[u * self.levels + v] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Number of joint pairs never visited.
    pub fn unvisited(&self) -> usize {
        self.counts.iter().filter(|&&c| c == 0).count()
    }

    fn marginal(&self, player: usize) -> Vec<u64> {
        let n = self.levels;
        (0..n)
            .map(|k| (0..n).map(|o| if player == 0 { self.get(k, o) } else { self.get(o, k) }).sum())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Streams {
    pub prices: Vec<[Price; 2]>,
    pub profits: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub params: [AgentParams; 2],
    pub env: EnvConfig,
    pub seed: u64,
    pub horizon: usize,
    pub schedule: ExplorationSchedule,
    pub mean_profit: [f64; 2],
    pub streams: Option<Streams>,
    pub final_q: Option<[QTable; 2]>,
    pub visits: Option<JointCounts>,
}

impl EpisodeRecord {
    /// Prices posted by `player` (0 or 1), if streams were retained.
    pub fn price_stream(&self, player: usize) -> Option<Vec<Price>> {
        self.streams.as_ref().map(|s| s.prices.iter().map(|p| p[player]).collect())
    }

    /// `round,p1,p2,r1,r2` with 1-based rounds.
    pub fn to_csv(&self) -> Result<String> {
        let streams = self.streams.as_ref().ok_or(Error::InsufficientFidelity("price streams"))?;
        let mut out = String::with_capacity(streams.prices.len() * 16 + 32);
        out.push_str("round,p1,p2,r1,r2\n");
        for (t, (p, r)) in streams.prices.iter().zip(&streams.profits).enumerate() {
            out.push_str(&format!("{},{},{},{},{}\n", t + 1, p[0], p[1], r[0], r[1]));
        }
        Ok(out)
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let meta = RecordMeta {
            params: self.params,
            env: self.env.clone(),
            seed: self.seed,
            horizon: self.horizon,
            schedule: self.schedule,
            mean_profit: self.mean_profit,
            tool_version: crate::VERSION.to_string(),
        };
        let meta = serde_json::to_vec(&meta)?;
        w.write_all(RECORD_MAGIC)?;
        w.write_u16::<LittleEndian>(RECORD_VERSION)?;
        w.write_u32::<LittleEndian>(meta.len() as u32)?;
        w.write_all(&meta)?;
        let flags = u8::from(self.streams.is_some())
            | u8::from(self.final_q.is_some()) << 1
            | u8::from(self.visits.is_some()) << 2;
        w.write_u8(flags)?;
        if let Some(s) = &self.streams {
            for (p, r) in s.prices.iter().zip(&s.profits) {
                w.write_u32::<LittleEndian>(p[0])?;
                w.write_u32::<LittleEndian>(p[1])?;
                w.write_f64::<LittleEndian>(r[0])?;
                w.write_f64::<LittleEndian>(r[1])?;
            }
        }
        if let Some([q1, q2]) = &self.final_q {
            q1.write_binary(&mut w)?;
            q2.write_binary(&mut w)?;
        }
        if let Some(v) = &self.visits {
            w.write_u32::<LittleEndian>(v.levels as u32)?;
            for &c in &v.counts {
                w.write_u64::<LittleEndian>(c)?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let bad = |m: &str| Error::InvalidParams(format!("episode record: {m}"));
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != RECORD_MAGIC {
            return Err(bad("bad magic"));
        }
        if r.read_u16::<LittleEndian>()? != RECORD_VERSION {
            return Err(bad("unsupported version"));
        }
        let len = r.read_u32::<LittleEndian>()? as usize;
        let mut meta = vec![0u8; len];
        r.read_exact(&mut meta)?;
        let meta: RecordMeta = serde_json::from_slice(&meta)?;
        let flags = r.read_u8()?;
        let streams = if flags & 1 != 0 {
            let mut prices = Vec::with_capacity(meta.horizon);
            let mut profits = Vec::with_capacity(meta.horizon);
            for _ in 0..meta.horizon {
                prices.push([r.read_u32::<LittleEndian>()?, r.read_u32::<LittleEndian>()?]);
                profits.push([r.read_f64::<LittleEndian>()?, r.read_f64::<LittleEndian>()?]);
            }
            Some(Streams { prices, profits })
        } else {
            None
        };
        let final_q = if flags & 2 != 0 {
            Some([QTable::read_binary(&mut r)?, QTable::read_binary(&mut r)?])
        } else {
            None
        };
        let visits = if flags & 4 != 0 {
            let levels = r.read_u32::<LittleEndian>()? as usize;
            let mut counts = vec![0u64; levels * levels];
            r.read_u64_into::<LittleEndian>(&mut counts)?;
            Some(JointCounts { levels, counts })
        } else {
            None
        };
        Ok(Self {
            params: meta.params,
            env: meta.env,
            seed: meta.seed,
            horizon: meta.horizon,
            schedule: meta.schedule,
            mean_profit: meta.mean_profit,
            streams,
            final_q,
            visits,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct RecordMeta {
    params: [AgentParams; 2],
    env: EnvConfig,
    seed: u64,
    horizon: usize,
    schedule: ExplorationSchedule,
    mean_profit: [f64; 2],
    tool_version: String,
}

/// Reusable episode driver over one environment.
#[derive(Debug, Clone)]
pub struct EpisodeRunner {
    env: EnvConfig,
    game: StageGame,
    schedule: ExplorationSchedule,
    initial_states: Option<[usize; 2]>,
}

impl EpisodeRunner {
    pub fn new(env: &EnvConfig) -> Result<Self> {
        Ok(Self {
            env: env.clone(),
            game: StageGame::new(env)?,
            schedule: ExplorationSchedule::Fixed,
            initial_states: None,
        })
    }

    pub fn with_schedule(mut self, schedule: ExplorationSchedule) -> Self {
        self.schedule = schedule;
        self
    }

    /// Pin the round-1 perceived states (grid indices) instead of drawing
    /// them from the episode RNG.
    pub fn with_initial_states(mut self, states: [usize; 2]) -> Self {
        self.initial_states = Some(states);
        self
    }

    pub fn game(&self) -> &StageGame {
        &self.game
    }

    pub fn run(
        &self,
        p1: &AgentParams,
        p2: &AgentParams,
        horizon: usize,
        seed: u64,
        fidelity: Fidelity,
    ) -> Result<EpisodeRecord> {
        p1.validate()?;
        p2.validate()?;
        if horizon == 0 {
            return Err(Error::InvalidParams("horizon must be at least one round".into()));
        }
        let game = &self.game;
        let n = game.levels();
        let mut rng = episode_rng(seed);
        let mut q1 = init_from_game(p1.gamma, game)?;
        let mut q2 = init_from_game(p2.gamma, game)?;
        let mut state = match self.initial_states {
            Some(s) if s[0] < n && s[1] < n => s,
            Some(_) => return Err(Error::InvalidParams("initial state off the grid".into())),
            None => [rng.gen_range(0..n), rng.gen_range(0..n)],
        };

        let mut visits = JointCounts::new(n);
        let mut totals = [0.0f64; 2];
        let mut streams = (fidelity == Fidelity::Full).then(|| Streams {
            prices: Vec::with_capacity(horizon),
            profits: Vec::with_capacity(horizon),
        });

        for t in 0..horizon {
            let (e1, e2) = match self.schedule {
                ExplorationSchedule::Fixed => (p1.epsilon, p2.epsilon),
                ExplorationSchedule::Decayed { eps0, beta } => {
                    let e = eps0 * (-beta * t as f64).exp();
                    (e, e)
                }
            };
            let a1 = select_action(&q1, state[0], e1, &mut rng);
            let a2 = select_action(&q2, state[1], e2, &mut rng);
            let [r1, r2] = game.profits(a1, a2);
            bellman_update(&mut q1, state[0], a1, r1, a2, p1);
            bellman_update(&mut q2, state[1], a2, r2, a1, p2);
            state = [a2, a1];

            visits.bump(a1, a2);
            totals[0] += r1;
            totals[1] += r2;
            if let Some(s) = streams.as_mut() {
                s.prices.push([game.price(a1), game.price(a2)]);
                s.profits.push([r1, r2]);
            }
        }

        Ok(EpisodeRecord {
            params: [*p1, *p2],
            env: self.env.clone(),
            seed,
            horizon,
            schedule: self.schedule,
            mean_profit: [totals[0] / horizon as f64, totals[1] / horizon as f64],
            streams,
            final_q: Some([q1, q2]),
            visits: Some(visits),
        })
    }
}

pub fn run_episode(
    p1: &AgentParams,
    p2: &AgentParams,
    cfg: &EnvConfig,
    horizon: usize,
    seed: u64,
    fidelity: Fidelity,
) -> Result<EpisodeRecord> {
    EpisodeRunner::new(cfg)?.run(p1, p2, horizon, seed, fidelity)
}

/// Mean profit per player over the whole learning period.
pub fn online_payoff(rec: &EpisodeRecord) -> [f64; 2] {
    match &rec.streams {
        Some(s) => {
            let mut totals = [0.0; 2];
            for r in &s.profits {
                totals[0] += r[0];
                totals[1] += r[1];
            }
            let t = s.profits.len() as f64;
            [totals[0] / t, totals[1] / t]
        }
        None => rec.mean_profit,
    }
}

/// Which historical distribution weights the greedy-policy replay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LimitWeighting {
    /// Empirical joint distribution of realized price pairs.
    #[default]
    JointHistory,
    /// Product of the two players' marginal price distributions.
    IndependentMarginals,
}

/// Profit of the learned greedy policies replayed against the historical
/// price distribution: from a historical pair `(u, v)`, agent 1 answers `v`
/// with its greedy price and agent 2 answers `u`.
pub fn limit_payoff(rec: &EpisodeRecord) -> Result<[f64; 2]> {
    limit_payoff_with(rec, LimitWeighting::JointHistory)
}

pub fn limit_payoff_with(rec: &EpisodeRecord, weighting: LimitWeighting) -> Result<[f64; 2]> {
    let [q1, q2] = rec.final_q.as_ref().ok_or(Error::InsufficientFidelity("final Q-tables"))?;
    let visits = rec.visits.as_ref().ok_or(Error::InsufficientFidelity("joint visit counts"))?;
    let game = StageGame::new(&rec.env)?;
    let n = game.levels();
    if visits.levels() != n || q1.states() != n || q2.states() != n {
        return Err(Error::InvalidParams("record tables do not match its price grid".into()));
    }
    let mut tie_rng = substream(rec.seed, LIMIT_TIE_STREAM);
    let g1: Vec<usize> = (0..n).map(|s| greedy_action(q1, s, &mut tie_rng)).collect();
    let g2: Vec<usize> = (0..n).map(|s| greedy_action(q2, s, &mut tie_rng)).collect();

    let mut acc = [0.0f64; 2];
    match weighting {
        LimitWeighting::JointHistory => {
            let total = visits.total() as f64;
            for u in 0..n {
                for v in 0..n {
                    let c = visits.get(u, v) as f64;
                    if c > 0.0 {
                        let [r1, r2] = game.profits(g1[v], g2[u]);
                        acc[0] += c * r1;
                        acc[1] += c * r2;
                    }
                }
            }
            Ok([acc[0] / total, acc[1] / total])
        }
        LimitWeighting::IndependentMarginals => {
            let m1 = visits.marginal(0);
            let m2 = visits.marginal(1);
            let total = visits.total() as f64;
            for u in 0..n {
                for v in 0..n {
                    let w = (m1[u] as f64 / total) * (m2[v] as f64 / total);
                    let [r1, r2] = game.profits(g1[v], g2[u]);
                    acc[0] += w * r1;
                    acc[1] += w * r2;
                }
            }
            Ok(acc)
        }
    }
}
