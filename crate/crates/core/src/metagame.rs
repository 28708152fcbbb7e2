//! Game-theoretic analysis of a payoff tensor.
//!
//! Player 1 picks the row profile `i`, player 2 the column profile `j`.
//! Best responses are set-valued; where one representative is needed the
//! lowest profile index wins.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{benchmarks, Benchmarks, EnvConfig};
use crate::error::{Error, Result};
use crate::qlearning::AgentParams;
use crate::sweep::{Axis, EvaluationKind, PayoffTensor};

/// The equilibrium profile reported for online evaluation on the full grid.
pub const REFERENCE_META_NASH: AgentParams = AgentParams { alpha: 0.12, epsilon: 0.278, gamma: 0.22 };

/// Indices attaining the maximum of `values`.
fn argmax_set(values: impl Iterator<Item = f64>) -> (Vec<usize>, f64) {
    let mut best = f64::NEG_INFINITY;
    let mut set = Vec::new();
    for (k, v) in values.enumerate() {
        if v > best {
            best = v;
            set.clear();
            set.push(k);
        } else if v == best {
            set.push(k);
        }
    }
    (set, best)
}

/// Player 1's best responses to column profile `j`.
pub fn best_response(t: &PayoffTensor, j: usize) -> Vec<usize> {
    argmax_set((0..t.n()).map(|i| t.m1(i, j))).0
}

/// Player 2's best responses to row profile `i`.
pub fn best_response_2(t: &PayoffTensor, i: usize) -> Vec<usize> {
    argmax_set((0..t.n()).map(|j| t.m2(i, j))).0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestResponseEntry {
    pub column: usize,
    pub best: Vec<usize>,
    pub payoff: f64,
    /// Distance to the best payoff outside the argmax set; `None` when every
    /// profile ties.
    pub runner_up_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestResponseMap {
    pub entries: Vec<BestResponseEntry>,
}

impl BestResponseMap {
    pub fn new(t: &PayoffTensor) -> Self {
        let entries = (0..t.n())
            .map(|j| {
                let (best, payoff) = argmax_set((0..t.n()).map(|i| t.m1(i, j)));
                let runner_up = (0..t.n())
                    .map(|i| t.m1(i, j))
                    .filter(|&v| v < payoff)
                    .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
                BestResponseEntry { column: j, best, payoff, runner_up_gap: runner_up.map(|r| payoff - r) }
            })
            .collect();
        Self { entries }
    }

    /// How often each profile appears in a best-response set.
    pub fn counts(&self, n: usize) -> Vec<usize> {
        let mut counts = vec![0; n];
        for e in &self.entries {
            for &i in &e.best {
                counts[i] += 1;
            }
        }
        counts
    }
}

/// Tolerance for approximate best responses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Slack {
    /// A fixed payoff slack.
    Fixed(f64),
    /// A multiple of the larger standard error of the two compared cells.
    StderrMultiple(f64),
}

impl Default for Slack {
    fn default() -> Self {
        Slack::StderrMultiple(2.0)
    }
}

impl Slack {
    fn validate(self) -> Result<()> {
        let v = match self {
            Slack::Fixed(v) | Slack::StderrMultiple(v) => v,
        };
        if v.is_finite() && v >= 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("slack must be finite and non-negative, got {v}")))
        }
    }

    #[inline]
    fn tolerance(self, se_a: f64, se_b: f64) -> f64 {
        match self {
            Slack::Fixed(tau) => tau,
            Slack::StderrMultiple(k) => k * se_a.max(se_b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub row: usize,
    pub column: usize,
    pub theta_1: AgentParams,
    pub theta_2: AgentParams,
    pub symmetric: bool,
    pub exact: bool,
    pub payoff: [f64; 2],
    pub stderr: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub kind: EvaluationKind,
    pub slack: Slack,
    pub exact_nash: Vec<Equilibrium>,
    pub epsilon_nash: Vec<Equilibrium>,
}

impl EquilibriumReport {
    pub fn symmetric_epsilon_nash(&self) -> impl Iterator<Item = &Equilibrium> {
        self.epsilon_nash.iter().filter(|e| e.symmetric)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn no_profitable_deviation(t: &PayoffTensor, i: usize, j: usize, slack: Option<Slack>) -> bool {
    let n = t.n();
    let tol1 = |k: usize| slack.map_or(0.0, |s| s.tolerance(t.se1(k, j), t.se1(i, j)));
    let tol2 = |k: usize| slack.map_or(0.0, |s| s.tolerance(t.se2(i, k), t.se2(i, j)));
    (0..n).all(|k| t.m1(k, j) - t.m1(i, j) <= tol1(k)) && (0..n).all(|k| t.m2(i, k) - t.m2(i, j) <= tol2(k))
}

/// Exact and approximate pure meta-equilibria.
///
/// A profile is approximate when no unilateral deviation gains more than the
/// slack; with zero slack the two sets coincide.
pub fn nash_equilibria(t: &PayoffTensor, slack: Slack) -> Result<EquilibriumReport> {
    slack.validate()?;
    let n = t.n();
    let found: Vec<(usize, usize, bool)> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            (0..n).filter_map(move |j| {
                if !no_profitable_deviation(t, i, j, Some(slack)) {
                    return None;
                }
                Some((i, j, no_profitable_deviation(t, i, j, None)))
            })
        })
        .collect();
    let describe = |&(i, j, exact): &(usize, usize, bool)| {
        let (theta_1, theta_2) = (t.grid.params(i), t.grid.params(j));
        Equilibrium {
            row: i,
            column: j,
            theta_1,
            theta_2,
            symmetric: i == j,
            exact,
            payoff: [t.m1(i, j), t.m2(i, j)],
            stderr: [t.se1(i, j), t.se2(i, j)],
        }
    };
    let epsilon_nash: Vec<Equilibrium> = found.iter().map(describe).collect();
    let exact_nash = epsilon_nash.iter().filter(|e| e.exact).cloned().collect();
    Ok(EquilibriumReport { kind: t.kind, slack, exact_nash, epsilon_nash })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParetoMode {
    /// Undominated among all profiles in the payoff plane.
    #[default]
    Joint,
    /// Undominated among player 1's deviations with the column held fixed.
    Unilateral,
}

impl std::str::FromStr for ParetoMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(ParetoMode::Joint),
            "unilateral" => Ok(ParetoMode::Unilateral),
            _ => Err(Error::InvalidParams(format!("unknown Pareto mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontPoint {
    pub row: usize,
    pub column: usize,
    pub theta_1: AgentParams,
    pub theta_2: AgentParams,
    pub payoff: [f64; 2],
}

/// Pareto-undominated profiles as `(row, column)`, sorted by row then column.
pub fn pareto_front(t: &PayoffTensor, mode: ParetoMode) -> Vec<(usize, usize)> {
    let n = t.n();
    let mut front = match mode {
        ParetoMode::Joint => {
            let mut cells: Vec<usize> = (0..n * n).collect();
            cells.sort_by(|&a, &b| {
                t.mean_1[b].total_cmp(&t.mean_1[a]).then(t.mean_2[b].total_cmp(&t.mean_2[a]))
            });
            let mut front = Vec::new();
            let mut best_above = f64::NEG_INFINITY;
            let mut k = 0;
            while k < cells.len() {
                let m1 = t.mean_1[cells[k]];
                let group_top = t.mean_2[cells[k]];
                let mut end = k;
                while end < cells.len() && t.mean_1[cells[end]] == m1 {
                    let c = cells[end];
                    if t.mean_2[c] == group_top && group_top > best_above {
                        front.push((c / n, c % n));
                    }
                    end += 1;
                }
                best_above = best_above.max(group_top);
                k = end;
            }
            front
        }
        ParetoMode::Unilateral => (0..n)
            .into_par_iter()
            .flat_map_iter(|i| {
                (0..n).filter(move |&j| {
                    !(0..n).any(|k| t.m1(k, j) > t.m1(i, j) && t.m2(k, j) >= t.m2(i, j))
                })
                .map(move |j| (i, j))
            })
            .collect(),
    };
    front.sort_unstable();
    front
}

/// Front points ordered by player 1's payoff, so consecutive points form
/// the connecting segments of the frontier.
pub fn front_points(t: &PayoffTensor, front: &[(usize, usize)]) -> Vec<FrontPoint> {
    let mut points: Vec<FrontPoint> = front
        .iter()
        .map(|&(i, j)| FrontPoint {
            row: i,
            column: j,
            theta_1: t.grid.params(i),
            theta_2: t.grid.params(j),
            payoff: [t.m1(i, j), t.m2(i, j)],
        })
        .collect();
    points.sort_by(|a, b| a.payoff[0].total_cmp(&b.payoff[0]).then(b.payoff[1].total_cmp(&a.payoff[1])));
    points
}

pub fn front_csv(points: &[FrontPoint]) -> String {
    let mut out = String::from("order,row,column,alpha_1,epsilon_1,gamma_1,alpha_2,epsilon_2,gamma_2,payoff_1,payoff_2\n");
    for (k, p) in points.iter().enumerate() {
        out.push_str(&format!(
            "{k},{},{},{},{},{},{},{},{},{},{}\n",
            p.row,
            p.column,
            p.theta_1.alpha,
            p.theta_1.epsilon,
            p.theta_1.gamma,
            p.theta_2.alpha,
            p.theta_2.epsilon,
            p.theta_2.gamma,
            p.payoff[0],
            p.payoff[1]
        ));
    }
    out
}

/// Deviation from a symmetric profile to a best response against it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arrow {
    pub from: usize,
    pub to: usize,
    pub from_params: AgentParams,
    pub to_params: AgentParams,
    pub gain: f64,
}

impl Arrow {
    pub fn is_self_loop(&self) -> bool {
        self.from == self.to
    }
}

/// One arrow per symmetric profile `(theta, theta)`.
pub fn best_response_field(t: &PayoffTensor) -> Vec<Arrow> {
    (0..t.n())
        .map(|s| {
            let to = best_response(t, s)[0];
            Arrow {
                from: s,
                to,
                from_params: t.grid.params(s),
                to_params: t.grid.params(to),
                gain: t.m1(to, s) - t.m1(s, s),
            }
        })
        .collect()
}

pub fn arrows_csv(arrows: &[Arrow]) -> String {
    let mut out = String::from("from,to,alpha_from,epsilon_from,gamma_from,alpha_to,epsilon_to,gamma_to,gain\n");
    for a in arrows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            a.from,
            a.to,
            a.from_params.alpha,
            a.from_params.epsilon,
            a.from_params.gamma,
            a.to_params.alpha,
            a.to_params.epsilon,
            a.to_params.gamma,
            a.gain
        ));
    }
    out
}

/// Ego's best value on one axis against each alter value on that axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedLine {
    pub axis: Axis,
    pub anchor: usize,
    pub values: Vec<f64>,
    /// `payoff[v][w]`: ego's averaged payoff playing value `w` against alter value `v`.
    pub payoff: Vec<Vec<f64>>,
    pub best: Vec<Vec<usize>>,
}

impl ReducedLine {
    pub fn to_csv(&self) -> String {
        let mut out = format!("alter_{0},ego_{0},payoff,is_best\n", self.axis.name());
        for (v, row) in self.payoff.iter().enumerate() {
            for (w, p) in row.iter().enumerate() {
                let best = u8::from(self.best[v].contains(&w));
                out.push_str(&format!("{},{},{p},{best}\n", self.values[v], self.values[w]));
            }
        }
        out
    }
}

fn with_coord(t: &PayoffTensor, anchor: usize, axis: Axis, value: usize) -> usize {
    let mut c = t.grid.coords(anchor);
    c[axis.index()] = value;
    t.grid.index(c)
}

fn axis_len(t: &PayoffTensor, axis: Axis) -> usize {
    t.grid.shape()[axis.index()]
}

/// Profiles of alter whose coordinates on `fixed` match `values`.
fn alter_slice(t: &PayoffTensor, fixed: &[(Axis, usize)]) -> Vec<usize> {
    (0..t.n())
        .filter(|&j| {
            let c = t.grid.coords(j);
            fixed.iter().all(|&(a, v)| c[a.index()] == v)
        })
        .collect()
}

fn mean_against(t: &PayoffTensor, ego: usize, alters: &[usize]) -> f64 {
    alters.iter().map(|&j| t.m1(ego, j)).sum::<f64>() / alters.len() as f64
}

/// Best-response curve along one axis.
///
/// Ego keeps its other two parameters at `anchor`; alter's other two are
/// averaged uniformly.
pub fn reduced_line(t: &PayoffTensor, axis: Axis, anchor: usize) -> ReducedLine {
    let len = axis_len(t, axis);
    let payoff: Vec<Vec<f64>> = (0..len)
        .map(|v| {
            let alters = alter_slice(t, &[(axis, v)]);
            (0..len).map(|w| mean_against(t, with_coord(t, anchor, axis, w), &alters)).collect()
        })
        .collect();
    let best = payoff.iter().map(|row| argmax_set(row.iter().copied()).0).collect();
    ReducedLine { axis, anchor, values: t.grid.axis_values(axis).to_vec(), payoff, best }
}

/// Best-response field over a pair of axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedFace {
    pub axes: [Axis; 2],
    pub anchor: usize,
    pub values: [Vec<f64>; 2],
    /// `best[a][b]`: ego's best `(a', b')` cells against alter at `(a, b)`.
    pub best: Vec<Vec<Vec<(usize, usize)>>>,
    pub payoff: Vec<Vec<f64>>,
}

impl ReducedFace {
    /// The cell that is the lowest-index best response for the most alter
    /// cells, with that count.
    pub fn attractor(&self) -> ((usize, usize), usize) {
        let width = self.values[1].len();
        let mut counts = vec![0usize; self.values[0].len() * width];
        for row in &self.best {
            for set in row {
                let (a, b) = set[0];
                counts[a * width + b] += 1;
            }
        }
        let (k, c) = counts
            .iter()
            .enumerate()
            .fold((0, 0), |best, (k, &c)| if c > best.1 { (k, c) } else { best });
        ((k / width, k % width), c)
    }

    pub fn to_csv(&self) -> String {
        let [x, y] = self.axes.map(Axis::name);
        let mut out = format!("alter_{x},alter_{y},ego_{x},ego_{y},payoff\n");
        for (a, row) in self.best.iter().enumerate() {
            for (b, set) in row.iter().enumerate() {
                let payoff = self.payoff[a][b];
                for &(ea, eb) in set {
                    out.push_str(&format!(
                        "{},{},{},{},{payoff}\n",
                        self.values[0][a], self.values[1][b], self.values[0][ea], self.values[1][eb]
                    ));
                }
            }
        }
        out
    }
}

/// Face version of [`reduced_line`]: alter's third parameter is averaged,
/// ego's third stays at `anchor`.
pub fn reduced_face(t: &PayoffTensor, axes: [Axis; 2], anchor: usize) -> Result<ReducedFace> {
    if axes[0] == axes[1] {
        return Err(Error::InvalidParams("a face needs two distinct axes".into()));
    }
    let [x, y] = axes;
    let (nx, ny) = (axis_len(t, x), axis_len(t, y));
    let ego = |a: usize, b: usize| with_coord(t, with_coord(t, anchor, x, a), y, b);
    let mut best = Vec::with_capacity(nx);
    let mut payoff = Vec::with_capacity(nx);
    for a in 0..nx {
        let mut best_row = Vec::with_capacity(ny);
        let mut payoff_row = Vec::with_capacity(ny);
        for b in 0..ny {
            let alters = alter_slice(t, &[(x, a), (y, b)]);
            let values = (0..nx * ny).map(|k| mean_against(t, ego(k / ny, k % ny), &alters));
            let (set, top) = argmax_set(values);
            best_row.push(set.into_iter().map(|k| (k / ny, k % ny)).collect());
            payoff_row.push(top);
        }
        best.push(best_row);
        payoff.push(payoff_row);
    }
    Ok(ReducedFace { axes, anchor, values: [x, y].map(|a| t.grid.axis_values(a).to_vec()), best, payoff })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeBand {
    CompetitiveBand,
    SlightlySupraCompetitive,
    CollusiveBand,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub band: OutcomeBand,
    /// Mean joint payoff rescaled so competitive is 0 and monopoly is 1.
    pub normalized: f64,
}

pub fn classify_payoffs(payoff: [f64; 2], bench: &Benchmarks) -> Classification {
    let mean = (payoff[0] + payoff[1]) / 2.0;
    let span = bench.monopoly_profit - bench.competitive_profit;
    let normalized = if span > 0.0 { (mean - bench.competitive_profit) / span } else { 0.0 };
    let band = if normalized < 0.25 {
        OutcomeBand::CompetitiveBand
    } else if normalized <= 0.5 {
        OutcomeBand::SlightlySupraCompetitive
    } else {
        OutcomeBand::CollusiveBand
    };
    Classification { band, normalized }
}

pub fn classify_profile(t: &PayoffTensor, row: usize, column: usize, cfg: &EnvConfig) -> Result<Classification> {
    Ok(classify_payoffs([t.m1(row, column), t.m2(row, column)], &benchmarks(cfg)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sweep::{build_grid, GridSpec, ParameterGrid};

    fn two_point_grid() -> ParameterGrid {
        ParameterGrid::from_values(vec![0.5], vec![0.1], vec![0.0, 0.5]).unwrap()
    }

    fn tensor(grid: ParameterGrid, m1: Vec<f64>, m2: Vec<f64>) -> PayoffTensor {
        PayoffTensor::from_means(grid, m1, m2).unwrap()
    }

    fn transpose(m: &[f64], n: usize) -> Vec<f64> {
        (0..n * n).map(|k| m[(k % n) * n + k / n]).collect()
    }

    #[test]
    fn dominant_row_is_best_response() {
        let m1 = vec![3.0, 0.0, 5.0, 1.0];
        let t = tensor(two_point_grid(), m1.clone(), transpose(&m1, 2));
        assert_eq!(best_response(&t, 0), vec![1]);
        assert_eq!(best_response(&t, 1), vec![1]);
        let map = BestResponseMap::new(&t);
        assert_eq!(map.entries[0].runner_up_gap, Some(2.0));
        assert_eq!(map.counts(2), vec![0, 2]);
    }

    #[test]
    fn constant_tensor_ties_everywhere() {
        let grid = build_grid(&GridSpec::with_points(2)).unwrap();
        let n = grid.len();
        let t = tensor(grid, vec![1.0; n * n], vec![1.0; n * n]);
        assert_eq!(best_response(&t, 3), (0..n).collect::<Vec<_>>());
        let report = nash_equilibria(&t, Slack::Fixed(0.0)).unwrap();
        assert_eq!(report.exact_nash.len(), n * n);
        assert_eq!(pareto_front(&t, ParetoMode::Joint).len(), n * n);
        assert_eq!(pareto_front(&t, ParetoMode::Unilateral).len(), n * n);
        assert_eq!(BestResponseMap::new(&t).entries[0].runner_up_gap, None);
    }

    #[test]
    fn prisoners_dilemma_has_mutual_defection() {
        // index 0 cooperates, index 1 defects
        let m1 = vec![3.0, 0.0, 5.0, 1.0];
        let t = tensor(two_point_grid(), m1.clone(), transpose(&m1, 2));
        let report = nash_equilibria(&t, Slack::Fixed(0.0)).unwrap();
        assert_eq!(report.exact_nash.len(), 1);
        let eq = &report.exact_nash[0];
        assert_eq!((eq.row, eq.column, eq.symmetric), (1, 1, true));
        let front = pareto_front(&t, ParetoMode::Joint);
        assert_eq!(front, vec![(0, 0), (0, 1), (1, 0)]);
    }

    #[test]
    fn joint_front_drops_dominated_pairs() {
        // achievable pairs (1,1), (2,2), (3,0), (2,2)
        let t = tensor(two_point_grid(), vec![1.0, 2.0, 3.0, 2.0], vec![1.0, 2.0, 0.0, 2.0]);
        assert_eq!(pareto_front(&t, ParetoMode::Joint), vec![(0, 1), (1, 0), (1, 1)]);
        let points = front_points(&t, &pareto_front(&t, ParetoMode::Joint));
        assert_eq!(points.last().unwrap().payoff, [3.0, 0.0]);
        assert_eq!(front_csv(&points).lines().count(), 4);
    }

    #[test]
    fn slack_widens_equilibrium_set() {
        let m1 = vec![3.0, 0.0, 3.2, 1.0];
        let mut t = tensor(two_point_grid(), m1.clone(), transpose(&m1, 2));
        let exact = nash_equilibria(&t, Slack::Fixed(0.0)).unwrap();
        assert_eq!(exact.epsilon_nash.len(), 1);
        let loose = nash_equilibria(&t, Slack::Fixed(0.25)).unwrap();
        assert!(loose.epsilon_nash.iter().any(|e| (e.row, e.column) == (0, 0) && !e.exact));
        t.stderr_1 = vec![0.11; 4];
        t.stderr_2 = vec![0.11; 4];
        let se = nash_equilibria(&t, Slack::default()).unwrap();
        assert!(se.epsilon_nash.iter().any(|e| (e.row, e.column) == (0, 0)));
        assert!(nash_equilibria(&t, Slack::Fixed(-1.0)).is_err());
    }

    #[test]
    fn arrows_follow_dominant_strategy() {
        let grid = build_grid(&GridSpec::with_points(2)).unwrap();
        let n = grid.len();
        let m1: Vec<f64> = (0..n * n).map(|k| if k / n == 5 { 2.0 } else { 1.0 }).collect();
        let t = tensor(grid, m1.clone(), transpose(&m1, n));
        let field = best_response_field(&t);
        assert!(field.iter().all(|a| a.to == 5));
        assert!(field[5].is_self_loop() && field[5].gain == 0.0);
        assert_eq!(field[0].gain, 1.0);
        assert_eq!(arrows_csv(&field).lines().count(), n + 1);
    }

    #[test]
    fn reduced_line_finds_closed_form_peak() {
        let grid = build_grid(&GridSpec::with_points(4)).unwrap();
        let n = grid.len();
        // ego payoff -(gamma - 0.5)^2, gamma grid 0, 0.33, 0.66, 0.99
        let m1: Vec<f64> = (0..n * n).map(|k| -(grid.params(k / n).gamma - 0.5).powi(2)).collect();
        let t = tensor(grid.clone(), m1.clone(), transpose(&m1, n));
        let line = reduced_line(&t, Axis::Gamma, 0);
        let nearest = (0..4).min_by(|&a, &b| {
            (grid.gamma[a] - 0.5).abs().total_cmp(&(grid.gamma[b] - 0.5).abs())
        });
        assert!(line.best.iter().all(|b| b == &vec![nearest.unwrap()]));
        let flat = reduced_line(&t, Axis::Alpha, 0);
        assert!(flat.best.iter().all(|b| b.len() == 4));
        assert_eq!(line.to_csv().lines().count(), 17);
    }

    #[test]
    fn separable_face_is_product_of_lines() {
        let grid = build_grid(&GridSpec::with_points(3)).unwrap();
        let n = grid.len();
        let score = |p: AgentParams| -(p.alpha - 0.7).powi(2) - (p.gamma - 0.2).powi(2);
        let m1: Vec<f64> = (0..n * n).map(|k| score(grid.params(k / n))).collect();
        let t = tensor(grid, m1.clone(), transpose(&m1, n));
        let face = reduced_face(&t, [Axis::Alpha, Axis::Gamma], 13).unwrap();
        let a = reduced_line(&t, Axis::Alpha, 13).best[0][0];
        let g = reduced_line(&t, Axis::Gamma, 13).best[0][0];
        for row in &face.best {
            for set in row {
                assert_eq!(set, &vec![(a, g)]);
            }
        }
        assert_eq!(face.attractor(), ((a, g), 9));
        assert!(reduced_face(&t, [Axis::Alpha, Axis::Alpha], 0).is_err());
    }

    #[test]
    fn classification_bands() {
        let b = benchmarks(&EnvConfig::default()).unwrap();
        assert_eq!(classify_payoffs([2.5, 2.5], &b).band, OutcomeBand::CompetitiveBand);
        assert_eq!(classify_payoffs([4.5, 4.5], &b).band, OutcomeBand::CollusiveBand);
        let edge = classify_payoffs([3.0, 3.0], &b);
        assert_eq!(edge.normalized, 0.25);
        assert_eq!(edge.band, OutcomeBand::SlightlySupraCompetitive);
        assert_eq!(classify_payoffs([3.5, 3.5], &b).band, OutcomeBand::SlightlySupraCompetitive);
        assert_eq!(classify_payoffs([3.6, 3.5], &b).band, OutcomeBand::CollusiveBand);
    }

    #[test]
    fn report_serializes() {
        let m1 = vec![3.0, 0.0, 5.0, 1.0];
        let t = tensor(two_point_grid(), m1.clone(), transpose(&m1, 2));
        let json = nash_equilibria(&t, Slack::default()).unwrap().to_json().unwrap();
        let back: EquilibriumReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.exact_nash[0].theta_1.gamma, 0.5);
        assert!(json.contains("stderr_multiple"));
    }
}
