//! Testing whether two observed price streams look like equilibrium play of
//! the meta-game.
//!
//! The test walks three gates in order. A noise gate rejects pairs where
//! neither stream keeps experimenting; a symmetry gate rejects pairs whose
//! price distributions differ; a level gate separates low-price equilibrium
//! play from supra-competitive play.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::env::{benchmarks, EnvConfig, Price};
use crate::error::{Error, Result};
use crate::metagame::REFERENCE_META_NASH;
use crate::qlearning::AgentParams;
use crate::rng::episode_rng;
use crate::simulation::{EpisodeRunner, ExplorationSchedule, Fidelity};

/// A price series on a known grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceStream {
    prices: Vec<Price>,
    env: EnvConfig,
    burn_in: Option<usize>,
}

impl PriceStream {
    pub fn new(prices: Vec<Price>, env: EnvConfig) -> Result<Self> {
        env.validate()?;
        for &p in &prices {
            env.level_index(p)?;
        }
        Ok(Self { prices, env, burn_in: None })
    }

    pub fn with_burn_in(mut self, rounds: usize) -> Self {
        self.burn_in = Some(rounds);
        self
    }

    pub fn prices(&self) -> &[Price] {
        &self.prices
    }

    pub fn env(&self) -> &EnvConfig {
        &self.env
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    /// Explicit burn-in, or a quarter of the stream.
    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(self.prices.len() / 4)
    }

    /// The last `window` prices, which must lie after the burn-in.
    pub fn trailing(&self, window: usize) -> Result<&[Price]> {
        let available = self.prices.len().saturating_sub(self.burn_in());
        if window > available {
            return Err(Error::WindowTooLarge { window, available });
        }
        Ok(&self.prices[self.prices.len() - window..])
    }
}

/// Default analysis window: half the stream, capped at `cap`.
pub fn default_window(len: usize, cap: usize) -> usize {
    (len / 2).min(cap)
}

/// Fraction of consecutive rounds in the trailing window where the price changes.
pub fn noise_stat(x: &PriceStream, window: usize) -> Result<f64> {
    let w = x.trailing(window)?;
    Ok(change_rate(w))
}

fn change_rate(w: &[Price]) -> f64 {
    if w.len() < 2 {
        return 0.0;
    }
    w.windows(2).filter(|p| p[0] != p[1]).count() as f64 / (w.len() - 1) as f64
}

/// Largest sample autocorrelation over lags `1..=max_lag`, with its lag.
/// `None` for a constant or too-short window.
pub fn peak_autocorrelation(w: &[Price], max_lag: usize) -> Option<(usize, f64)> {
    let n = w.len();
    let mean = w.iter().map(|&p| p as f64).sum::<f64>() / n as f64;
    let dev: Vec<f64> = w.iter().map(|&p| p as f64 - mean).collect();
    let var: f64 = dev.iter().map(|d| d * d).sum();
    if var == 0.0 {
        return None;
    }
    (1..=max_lag.min(n.saturating_sub(1)))
        .map(|lag| (lag, dev.iter().zip(&dev[lag..]).map(|(a, b)| a * b).sum::<f64>() / var))
        .max_by(|a, b| a.1.total_cmp(&b.1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PValueMethod {
    Asymptotic,
    #[default]
    Permutation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub method: PValueMethod,
    /// Shuffles and seed behind a permutation p-value.
    pub permutations: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsOptions {
    pub method: PValueMethod,
    pub permutations: usize,
    pub seed: u64,
}

impl Default for KsOptions {
    fn default() -> Self {
        Self { method: PValueMethod::Permutation, permutations: 2000, seed: 0 }
    }
}

/// Pooled samples relabelled by rank among the distinct values.
struct Pooled {
    labels: Vec<u32>,
    levels: usize,
}

fn pool(x: &[f64], y: &[f64]) -> Pooled {
    let mut distinct: Vec<f64> = x.iter().chain(y).copied().collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let rank = |v: &f64| distinct.binary_search_by(|d| d.total_cmp(v)).expect("value is pooled") as u32;
    Pooled { labels: x.iter().chain(y).map(rank).collect(), levels: distinct.len() }
}

/// Largest ECDF gap given the first sample's count per level.
fn gap(counts_x: &[u64], totals: &[u64], nx: usize, ny: usize) -> f64 {
    let (mut cx, mut ct) = (0u64, 0u64);
    let mut d = 0.0f64;
    for (&a, &t) in counts_x.iter().zip(totals) {
        cx += a;
        ct += t;
        let fx = cx as f64 / nx as f64;
        let fy = (ct - cx) as f64 / ny as f64;
        d = d.max((fx - fy).abs());
    }
    d
}

/// Survival function of the Kolmogorov distribution.
fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov-Smirnov test.
///
/// Permutation p-values count shuffles at least as extreme as observed,
/// `(1 + hits) / (1 + shuffles)`, and are reproducible from the seed.
pub fn ks_two_sample(x: &[f64], y: &[f64], opts: &KsOptions) -> Result<KsResult> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptySample);
    }
    let (nx, ny) = (x.len(), y.len());
    let pooled = pool(x, y);
    let mut totals = vec![0u64; pooled.levels];
    for &l in &pooled.labels {
        totals[l as usize] += 1;
    }
    let count_first = |labels: &[u32]| {
        let mut c = vec![0u64; pooled.levels];
        for &l in labels {
            c[l as usize] += 1;
        }
        c
    };
    let statistic = gap(&count_first(&pooled.labels[..nx]), &totals, nx, ny);

    let result = match opts.method {
        PValueMethod::Asymptotic => {
            let ne = (nx * ny) as f64 / (nx + ny) as f64;
            let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * statistic;
            KsResult { statistic, p_value: kolmogorov_sf(lambda), method: opts.method, permutations: None, seed: None }
        }
        PValueMethod::Permutation => {
            let mut rng = episode_rng(opts.seed);
            let mut labels = pooled.labels;
            let mut hits = 0usize;
            for _ in 0..opts.permutations {
                let (first, _) = labels.partial_shuffle(&mut rng, nx);
                if gap(&count_first(first), &totals, nx, ny) >= statistic - 1e-12 {
                    hits += 1;
                }
            }
            KsResult {
                statistic,
                p_value: (1 + hits) as f64 / (1 + opts.permutations) as f64,
                method: opts.method,
                permutations: Some(opts.permutations),
                seed: Some(opts.seed),
            }
        }
    };
    Ok(result)
}

fn as_f64(w: &[Price]) -> Vec<f64> {
    w.iter().map(|&p| p as f64).collect()
}

/// Calibration of the test. Every field is exposed as configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    /// Minimum change rate for a stream to count as noisy.
    pub noise_eta: f64,
    /// Significance level of every KS comparison.
    pub significance: f64,
    /// Grid steps above the competitive price still counted as low pricing.
    pub level_band_steps: usize,
    /// Autocorrelation above which a stream counts as periodic.
    pub periodic_acf: f64,
    pub periodic_max_lag: usize,
    pub burn_in_fraction: f64,
    pub max_window: usize,
    pub permutations: usize,
    pub permutation_seed: u64,
    pub p_method: PValueMethod,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            noise_eta: 0.05,
            significance: 0.05,
            level_band_steps: 1,
            periodic_acf: 0.9,
            periodic_max_lag: 14,
            burn_in_fraction: 0.25,
            max_window: 10_000,
            permutations: 2000,
            permutation_seed: 0,
            p_method: PValueMethod::Permutation,
        }
    }
}

impl Thresholds {
    fn ks_options(&self) -> KsOptions {
        KsOptions { method: self.p_method, permutations: self.permutations, seed: self.permutation_seed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    FailToRejectMn,
    RejectForMetagameCollusion,
    RejectForNoisyPareto,
    RejectForNoiseFreeClass,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::FailToRejectMn => "fail-to-reject-mn",
            Verdict::RejectForMetagameCollusion => "reject-for-metagame-collusion",
            Verdict::RejectForNoisyPareto => "reject-for-noisy-pareto",
            Verdict::RejectForNoiseFreeClass => "reject-for-noise-free-class",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSummary {
    pub change_rate: f64,
    /// Strongest autocorrelation and its lag, if the window varies.
    pub peak_acf: Option<(usize, f64)>,
}

impl NoiseSummary {
    pub fn periodic(&self, th: &Thresholds) -> bool {
        self.peak_acf.is_some_and(|(_, r)| r > th.periodic_acf)
    }

    pub fn noisy(&self, th: &Thresholds) -> bool {
        self.change_rate >= th.noise_eta && !self.periodic(th)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub verdict: Verdict,
    /// Gate outcomes in evaluation order.
    pub path: Vec<String>,
    pub noise: [NoiseSummary; 2],
    pub symmetry_ks: KsResult,
    pub mean_price: [f64; 2],
    pub competitive_price: Price,
    pub window: usize,
    pub burn_in: [usize; 2],
    /// KS of each observed stream against the same player's baseline stream.
    pub baseline_ks: BTreeMap<String, [KsResult; 2]>,
    pub thresholds: Thresholds,
}

impl DetectionReport {
    /// Re-derive the verdict from the stored statistics alone.
    pub fn recompute(&self) -> (Verdict, Vec<String>) {
        decide(&self.noise, &self.symmetry_ks, self.mean_price, self.competitive_price, &self.thresholds)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// The decision tree over precomputed statistics.
pub fn decide(
    noise: &[NoiseSummary; 2],
    symmetry: &KsResult,
    mean_price: [f64; 2],
    competitive_price: Price,
    th: &Thresholds,
) -> (Verdict, Vec<String>) {
    let mut path = Vec::new();
    let noisy = noise.map(|n| n.noisy(th));
    if !(noisy[0] || noisy[1]) {
        path.push(format!(
            "noise: change rates {:.4}/{:.4} below {} or periodic",
            noise[0].change_rate, noise[1].change_rate, th.noise_eta
        ));
        return (Verdict::RejectForNoiseFreeClass, path);
    }
    path.push(format!("noise: noisy streams {noisy:?}"));
    if symmetry.p_value < th.significance {
        path.push(format!("symmetry: KS p {:.4} below {}", symmetry.p_value, th.significance));
        return (Verdict::RejectForNoisyPareto, path);
    }
    path.push(format!("symmetry: KS p {:.4} at or above {}", symmetry.p_value, th.significance));
    let level = (mean_price[0] + mean_price[1]) / 2.0;
    let ceiling = competitive_price as f64 + th.level_band_steps as f64;
    if level <= ceiling {
        path.push(format!("level: mean price {level:.4} within {ceiling}"));
        (Verdict::FailToRejectMn, path)
    } else {
        path.push(format!("level: mean price {level:.4} above {ceiling}"));
        (Verdict::RejectForMetagameCollusion, path)
    }
}

/// Run the test on an observed pair, attaching KS comparisons against any
/// supplied baselines as evidence.
pub fn meta_nash_test(
    x1: &PriceStream,
    x2: &PriceStream,
    th: &Thresholds,
    baselines: &BTreeMap<String, (PriceStream, PriceStream)>,
) -> Result<DetectionReport> {
    if x1.env != x2.env {
        return Err(Error::GridMismatch("the two streams use different price grids".into()));
    }
    let env = &x1.env;
    let burn = |x: &PriceStream| {
        x.burn_in.unwrap_or((x.len() as f64 * th.burn_in_fraction).floor() as usize)
    };
    let x1 = x1.clone().with_burn_in(burn(x1));
    let x2 = x2.clone().with_burn_in(burn(x2));
    let window = default_window(x1.len().min(x2.len()), th.max_window);
    if window < 2 {
        return Err(Error::WindowTooLarge { window: 2, available: window });
    }
    let w1 = x1.trailing(window)?;
    let w2 = x2.trailing(window)?;
    let summary = |w: &[Price]| NoiseSummary {
        change_rate: change_rate(w),
        peak_acf: peak_autocorrelation(w, th.periodic_max_lag),
    };
    let noise = [summary(w1), summary(w2)];
    let (f1, f2) = (as_f64(w1), as_f64(w2));
    let symmetry_ks = ks_two_sample(&f1, &f2, &th.ks_options())?;
    let mean = |f: &[f64]| f.iter().sum::<f64>() / f.len() as f64;
    let mean_price = [mean(&f1), mean(&f2)];
    let competitive_price = benchmarks(env)?.competitive_price;

    let mut baseline_ks = BTreeMap::new();
    for (name, (b1, b2)) in baselines {
        if &b1.env != env || &b2.env != env {
            return Err(Error::GridMismatch(format!("baseline {name} uses a different grid")));
        }
        let bw = default_window(b1.len().min(b2.len()), th.max_window);
        let tail = |b: &PriceStream| as_f64(&b.prices()[b.len() - bw..]);
        baseline_ks.insert(
            name.clone(),
            [
                ks_two_sample(&f1, &tail(b1), &th.ks_options())?,
                ks_two_sample(&f2, &tail(b2), &th.ks_options())?,
            ],
        );
    }

    let (verdict, path) = decide(&noise, &symmetry_ks, mean_price, competitive_price, th);
    Ok(DetectionReport {
        verdict,
        path,
        noise,
        symmetry_ks,
        mean_price,
        competitive_price,
        window,
        burn_in: [x1.burn_in(), x2.burn_in()],
        baseline_ks,
        thresholds: *th,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    MetaNash,
    ParetoFront,
    DecayedExploration,
}

impl BaselineKind {
    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::MetaNash => "meta-nash",
            BaselineKind::ParetoFront => "pareto-front",
            BaselineKind::DecayedExploration => "decayed-exploration",
        }
    }
}

impl std::str::FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "meta-nash" => Ok(BaselineKind::MetaNash),
            "pareto-front" => Ok(BaselineKind::ParetoFront),
            "decayed-exploration" | "decayed" => Ok(BaselineKind::DecayedExploration),
            _ => Err(Error::InvalidParams(format!("unknown baseline kind {s:?}"))),
        }
    }
}

/// Initial exploration rate of the decayed baseline.
pub const DECAYED_EPS0: f64 = 1.0;

/// Simulate a reference price pair.
///
/// Equilibrium and front baselines need the profile pair to simulate. The
/// decayed baseline uses the supplied pair's learning and discount rates,
/// or those of [`REFERENCE_META_NASH`], with exploration decaying from
/// [`DECAYED_EPS0`] to a thousandth of it over the horizon.
pub fn generate_baseline(
    kind: BaselineKind,
    profiles: Option<[AgentParams; 2]>,
    env: &EnvConfig,
    horizon: usize,
    seed: u64,
) -> Result<(PriceStream, PriceStream)> {
    let mut runner = EpisodeRunner::new(env)?;
    let [p1, p2] = match kind {
        BaselineKind::MetaNash => profiles.ok_or(Error::MissingReference("equilibrium profile"))?,
        BaselineKind::ParetoFront => profiles.ok_or(Error::MissingReference("front profile pair"))?,
        BaselineKind::DecayedExploration => {
            runner = runner.with_schedule(ExplorationSchedule::decayed_over(horizon, DECAYED_EPS0));
            profiles.unwrap_or([REFERENCE_META_NASH; 2])
        }
    };
    let rec = runner.run(&p1, &p2, horizon, seed, Fidelity::Full)?;
    let stream = |player| {
        PriceStream::new(rec.price_stream(player).expect("full fidelity keeps streams"), env.clone())
    };
    Ok((stream(0)?, stream(1)?))
}

/// Read `round,price_1,price_2` rows (simulation exports with `p1,p2`
/// columns are accepted too). Without an explicit grid, prices are assumed
/// to be the integers from zero to the largest observed price.
pub fn read_streams_csv<R: std::io::Read>(
    reader: R,
    env: Option<&EnvConfig>,
) -> Result<(PriceStream, PriceStream)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let malformed = |line: usize, reason: String| Error::MalformedCsv { line, reason };
    let headers = rdr.headers().map_err(|e| malformed(1, e.to_string()))?.clone();
    let column = |names: &[&str]| {
        headers
            .iter()
            .position(|h| names.contains(&h))
            .ok_or_else(|| malformed(1, format!("missing column {}", names[0])))
    };
    let (c1, c2) = (column(&["price_1", "p1"])?, column(&["price_2", "p2"])?);
    let mut prices = (Vec::new(), Vec::new());
    for (k, row) in rdr.records().enumerate() {
        let line = k + 2;
        let row = row.map_err(|e| malformed(line, e.to_string()))?;
        let parse = |c: usize| {
            row.get(c)
                .ok_or_else(|| malformed(line, "short row".into()))?
                .parse::<Price>()
                .map_err(|e| malformed(line, e.to_string()))
        };
        prices.0.push(parse(c1)?);
        prices.1.push(parse(c2)?);
    }
    if prices.0.is_empty() {
        return Err(Error::EmptySample);
    }
    let env = match env {
        Some(e) => e.clone(),
        None => {
            let top = prices.0.iter().chain(&prices.1).copied().max().unwrap_or(0);
            EnvConfig::with_levels((0..=top).collect())?
        }
    };
    Ok((PriceStream::new(prices.0, env.clone())?, PriceStream::new(prices.1, env)?))
}
