use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qlearning::AgentParams;

/// A hyperparameter axis of the strategy space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Alpha,
    Epsilon,
    Gamma,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::Alpha, Axis::Epsilon, Axis::Gamma];

    pub fn index(self) -> usize {
        match self {
            Axis::Alpha => 0,
            Axis::Epsilon => 1,
            Axis::Gamma => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::Alpha => "alpha",
            Axis::Epsilon => "epsilon",
            Axis::Gamma => "gamma",
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha" | "a" => Ok(Axis::Alpha),
            "epsilon" | "eps" | "e" => Ok(Axis::Epsilon),
            "gamma" | "g" => Ok(Axis::Gamma),
            _ => Err(Error::InvalidGrid(format!("unknown axis {s:?}"))),
        }
    }
}

/// `points` equidistant values from `lo` to `hi` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl AxisSpec {
    pub fn new(lo: f64, hi: f64, points: usize) -> Self {
        Self { lo, hi, points }
    }

    fn values(&self) -> Result<Vec<f64>> {
        if self.points == 0 {
            return Err(Error::InvalidGrid("an axis needs at least one point".into()));
        }
        if !(self.lo.is_finite() && self.hi.is_finite()) {
            return Err(Error::InvalidGrid("axis bounds must be finite".into()));
        }
        if self.points == 1 {
            return Ok(vec![self.lo]);
        }
        let step = (self.hi - self.lo) / (self.points - 1) as f64;
        Ok((0..self.points)
            .map(|k| if k + 1 == self.points { self.hi } else { self.lo + step * k as f64 })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub alpha: AxisSpec,
    pub epsilon: AxisSpec,
    pub gamma: AxisSpec,
}

impl GridSpec {
    /// Same bounds as the default grid with `points` values per axis.
    pub fn with_points(points: usize) -> Self {
        Self {
            alpha: AxisSpec::new(0.01, 1.0, points),
            epsilon: AxisSpec::new(0.0, 0.5, points),
            gamma: AxisSpec::new(0.0, 0.99, points),
        }
    }
}

impl Default for GridSpec {
    /// Ten points per axis. The discount axis stops at 0.99 because the
    /// Q-table initialization divides by `1 - gamma`.
    fn default() -> Self {
        Self::with_points(10)
    }
}

/// The discretized strategy space. Profiles are indexed row-major over
/// `(alpha, epsilon, gamma)` with gamma varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterGrid {
    pub alpha: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub gamma: Vec<f64>,
}

pub fn build_grid(spec: &GridSpec) -> Result<ParameterGrid> {
    ParameterGrid::from_values(spec.alpha.values()?, spec.epsilon.values()?, spec.gamma.values()?)
}

impl ParameterGrid {
    pub fn from_values(alpha: Vec<f64>, epsilon: Vec<f64>, gamma: Vec<f64>) -> Result<Self> {
        for (axis, values) in [(Axis::Alpha, &alpha), (Axis::Epsilon, &epsilon), (Axis::Gamma, &gamma)] {
            if values.is_empty() {
                return Err(Error::InvalidGrid(format!("{} axis is empty", axis.name())));
            }
            if !values.windows(2).all(|w| w[0] < w[1]) {
                return Err(Error::InvalidGrid(format!(
                    "{} values must be strictly increasing",
                    axis.name()
                )));
            }
        }
        if let Some(&g) = gamma.iter().find(|&&g| g >= 1.0) {
            return Err(Error::InvalidGrid(format!(
                "gamma value {g} is not below 1; the Q-table initialization is undefined there"
            )));
        }
        let grid = Self { alpha, epsilon, gamma };
        for a in &grid.alpha {
            for e in &grid.epsilon {
                for g in &grid.gamma {
                    AgentParams::new(*a, *e, *g).map_err(|e| Error::InvalidGrid(e.to_string()))?;
                }
            }
        }
        Ok(grid)
    }

    /// Number of profiles per player.
    pub fn len(&self) -> usize {
        self.alpha.len() * self.epsilon.len() * self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.alpha.len(), self.epsilon.len(), self.gamma.len()]
    }

    pub fn axis_values(&self, axis: Axis) -> &[f64] {
        match axis {
            Axis::Alpha => &self.alpha,
            Axis::Epsilon => &self.epsilon,
            Axis::Gamma => &self.gamma,
        }
    }

    pub fn coords(&self, index: usize) -> [usize; 3] {
        let [_, ne, ng] = self.shape();
        [index / (ne * ng), (index / ng) % ne, index % ng]
    }

    pub fn index(&self, coords: [usize; 3]) -> usize {
        let [_, ne, ng] = self.shape();
        (coords[0] * ne + coords[1]) * ng + coords[2]
    }

    pub fn params(&self, index: usize) -> AgentParams {
        let [a, e, g] = self.coords(index);
        AgentParams { alpha: self.alpha[a], epsilon: self.epsilon[e], gamma: self.gamma[g] }
    }

    /// Profile whose values are nearest to `target` on each axis.
    pub fn nearest(&self, target: &AgentParams) -> usize {
        let nearest = |values: &[f64], x: f64| {
            values
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - x).abs().total_cmp(&(b.1 - x).abs()))
                .map(|(i, _)| i)
                .expect("axes are non-empty")
        };
        self.index([
            nearest(&self.alpha, target.alpha),
            nearest(&self.epsilon, target.epsilon),
            nearest(&self.gamma, target.gamma),
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn default_grid_values() {
        let g = build_grid(&GridSpec::default()).unwrap();
        let alphas = [0.01, 0.12, 0.23, 0.34, 0.45, 0.56, 0.67, 0.78, 0.89, 1.0];
        assert!(close(&g.alpha, &alphas));
        let gammas: Vec<f64> = (0..10).map(|k| 0.11 * k as f64).collect();
        assert!(close(&g.gamma, &gammas));
        assert!((g.epsilon[1] - 0.0556).abs() < 1e-4);
        assert!((g.epsilon[5] - 0.2778).abs() < 1e-4);
        assert!(g.gamma.iter().any(|&x| (x - 0.22).abs() < 1e-12));
        assert_eq!(*g.gamma.last().unwrap(), 0.99);
        assert_eq!(g.len(), 1000);
    }

    #[test]
    fn unit_discount_rejected() {
        let mut spec = GridSpec::default();
        spec.gamma.hi = 1.0;
        assert!(matches!(build_grid(&spec), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn bad_axes_rejected() {
        let mut spec = GridSpec::default();
        spec.alpha.lo = 0.0;
        assert!(build_grid(&spec).is_err());
        let mut spec = GridSpec::default();
        spec.epsilon = AxisSpec::new(0.5, 0.0, 3);
        assert!(build_grid(&spec).is_err());
        assert!(ParameterGrid::from_values(vec![0.1], vec![], vec![0.0]).is_err());
    }

    #[test]
    fn index_round_trip() {
        let g = build_grid(&GridSpec::with_points(4)).unwrap();
        for i in 0..g.len() {
            assert_eq!(g.index(g.coords(i)), i);
        }
        let mn = AgentParams::new(0.12, 0.278, 0.22).unwrap();
        let full = build_grid(&GridSpec::default()).unwrap();
        let p = full.params(full.nearest(&mn));
        assert!((p.alpha - 0.12).abs() < 1e-12 && (p.gamma - 0.22).abs() < 1e-12);
        assert!((p.epsilon - 0.27778).abs() < 1e-4);
    }
}
