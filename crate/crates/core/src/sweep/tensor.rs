//! Meta-game payoff estimates over a parameter grid.
//!
//! Binary layout (little endian):
//!
//! ```text
//! magic "MGPT" | version u16 | kind u8 | reps u32 | horizon u64 | master_seed u64
//! | 3 x (len u32, values f64...)          grid axes alpha, epsilon, gamma
//! | metadata_len u32 | metadata JSON      embedded run configuration
//! | mean_1 | mean_2 | stderr_1 | stderr_2 row-major n x n f64 arrays
//! ```

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::grid::ParameterGrid;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"MGPT";
const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvaluationKind {
    Online,
    Limit,
}

impl EvaluationKind {
    fn code(self) -> u8 {
        match self {
            EvaluationKind::Online => 0,
            EvaluationKind::Limit => 1,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(EvaluationKind::Online),
            1 => Ok(EvaluationKind::Limit),
            _ => Err(Error::MalformedTensor(format!("unknown evaluation kind {code}"))),
        }
    }
}

impl std::fmt::Display for EvaluationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EvaluationKind::Online => "online",
            EvaluationKind::Limit => "limit",
        })
    }
}

/// Estimated payoffs `pi(theta_1, theta_2)`. Arrays are `n x n` row-major,
/// with the row indexing player 1's profile.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffTensor {
    pub grid: ParameterGrid,
    pub replications: usize,
    pub horizon: usize,
    pub master_seed: u64,
    pub kind: EvaluationKind,
    pub mean_1: Vec<f64>,
    pub mean_2: Vec<f64>,
    pub stderr_1: Vec<f64>,
    pub stderr_2: Vec<f64>,
    pub metadata: serde_json::Value,
}

impl PayoffTensor {
    /// A tensor with zero standard errors, for analysis of fixed payoffs.
    pub fn from_means(grid: ParameterGrid, mean_1: Vec<f64>, mean_2: Vec<f64>) -> Result<Self> {
        let cells = grid.len() * grid.len();
        let t = Self {
            grid,
            replications: 1,
            horizon: 0,
            master_seed: 0,
            kind: EvaluationKind::Online,
            stderr_1: vec![0.0; cells],
            stderr_2: vec![0.0; cells],
            mean_1,
            mean_2,
            metadata: serde_json::Value::Null,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let cells = self.n() * self.n();
        for (name, a) in [
            ("mean_1", &self.mean_1),
            ("mean_2", &self.mean_2),
            ("stderr_1", &self.stderr_1),
            ("stderr_2", &self.stderr_2),
        ] {
            if a.len() != cells {
                return Err(Error::MalformedTensor(format!(
                    "{name} has {} entries, expected {cells}",
                    a.len()
                )));
            }
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::MalformedTensor(format!("{name} has non-finite entries")));
            }
        }
        if self.stderr_1.iter().chain(&self.stderr_2).any(|&s| s < 0.0) {
            return Err(Error::MalformedTensor("negative standard error".into()));
        }
        Ok(())
    }

    /// Profiles per player.
    #[inline]
    pub fn n(&self) -> usize {
        self.grid.len()
    }

    #[inline]
    pub fn m1(&self, i: usize, j: usize) -> f64 {
        self.mean_1[i * self.n() + j]
    }

    #[inline]
    pub fn m2(&self, i: usize, j: usize) -> f64 {
        self.mean_2[i * self.n() + j]
    }

    #[inline]
    pub fn se1(&self, i: usize, j: usize) -> f64 {
        self.stderr_1[i * self.n() + j]
    }

    #[inline]
    pub fn se2(&self, i: usize, j: usize) -> f64 {
        self.stderr_2[i * self.n() + j]
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_u16::<LittleEndian>(VERSION)?;
        w.write_u8(self.kind.code())?;
        w.write_u32::<LittleEndian>(self.replications as u32)?;
        w.write_u64::<LittleEndian>(self.horizon as u64)?;
        w.write_u64::<LittleEndian>(self.master_seed)?;
        for axis in [&self.grid.alpha, &self.grid.epsilon, &self.grid.gamma] {
            w.write_u32::<LittleEndian>(axis.len() as u32)?;
            for &v in axis {
                w.write_f64::<LittleEndian>(v)?;
            }
        }
        let meta = serde_json::to_vec(&self.metadata)?;
        w.write_u32::<LittleEndian>(meta.len() as u32)?;
        w.write_all(&meta)?;
        for a in [&self.mean_1, &self.mean_2, &self.stderr_1, &self.stderr_2] {
            for &v in a {
                w.write_f64::<LittleEndian>(v)?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let truncated = |e: std::io::Error| Error::MalformedTensor(format!("truncated file: {e}"));
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != MAGIC {
            return Err(Error::MalformedTensor("bad magic bytes".into()));
        }
        let version = r.read_u16::<LittleEndian>().map_err(truncated)?;
        if version != VERSION {
            return Err(Error::MalformedTensor(format!("unsupported version {version}")));
        }
        let kind = EvaluationKind::from_code(r.read_u8().map_err(truncated)?)?;
        let replications = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
        let horizon = r.read_u64::<LittleEndian>().map_err(truncated)? as usize;
        let master_seed = r.read_u64::<LittleEndian>().map_err(truncated)?;
        let mut axes = Vec::with_capacity(3);
        for _ in 0..3 {
            let len = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
            if len > 1 << 20 {
                return Err(Error::MalformedTensor(format!("implausible axis length {len}")));
            }
            let mut v = vec![0.0; len];
            r.read_f64_into::<LittleEndian>(&mut v).map_err(truncated)?;
            axes.push(v);
        }
        let gamma = axes.pop().expect("three axes");
        let epsilon = axes.pop().expect("three axes");
        let alpha = axes.pop().expect("three axes");
        let grid = ParameterGrid::from_values(alpha, epsilon, gamma)
            .map_err(|e| Error::MalformedTensor(e.to_string()))?;
        let meta_len = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
        let mut meta = vec![0u8; meta_len];
        r.read_exact(&mut meta).map_err(truncated)?;
        let metadata = serde_json::from_slice(&meta)
            .map_err(|e| Error::MalformedTensor(format!("metadata: {e}")))?;
        let cells = grid.len() * grid.len();
        let mut arrays = Vec::with_capacity(4);
        for _ in 0..4 {
            let mut v = vec![0.0; cells];
            r.read_f64_into::<LittleEndian>(&mut v).map_err(truncated)?;
            arrays.push(v);
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(Error::MalformedTensor("trailing bytes after arrays".into()));
        }
        let stderr_2 = arrays.pop().expect("four arrays");
        let stderr_1 = arrays.pop().expect("four arrays");
        let mean_2 = arrays.pop().expect("four arrays");
        let mean_1 = arrays.pop().expect("four arrays");
        let t = Self {
            grid,
            replications,
            horizon,
            master_seed,
            kind,
            mean_1,
            mean_2,
            stderr_1,
            stderr_2,
            metadata,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_binary(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_binary(std::io::BufReader::new(f))
    }

    /// One row per cell: `a1,e1,g1,a2,e2,g2,mean1,mean2,stderr1,stderr2`.
    pub fn to_csv(&self) -> String {
        let n = self.n();
        let mut out = String::with_capacity(n * n * 96);
        out.push_str("alpha_1,epsilon_1,gamma_1,alpha_2,epsilon_2,gamma_2,mean_1,mean_2,stderr_1,stderr_2\n");
        for i in 0..n {
            let p = self.grid.params(i);
            for j in 0..n {
                let q = self.grid.params(j);
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{}\n",
                    p.alpha,
                    p.epsilon,
                    p.gamma,
                    q.alpha,
                    q.epsilon,
                    q.gamma,
                    self.m1(i, j),
                    self.m2(i, j),
                    self.se1(i, j),
                    self.se2(i, j)
                ));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sweep::grid::{build_grid, GridSpec};

    fn sample() -> PayoffTensor {
        let grid = build_grid(&GridSpec::with_points(2)).unwrap();
        let n = grid.len();
        let m1: Vec<f64> = (0..n * n).map(|k| k as f64 * 0.5).collect();
        let m2: Vec<f64> = (0..n * n).map(|k| 9.0 - k as f64 * 0.125).collect();
        let mut t = PayoffTensor::from_means(grid, m1, m2).unwrap();
        t.stderr_1[3] = 0.25;
        t.kind = EvaluationKind::Limit;
        t.metadata = serde_json::json!({"note": "fixture"});
        t
    }

    #[test]
    fn binary_round_trip() {
        let t = sample();
        let mut buf = Vec::new();
        t.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"MGPT");
        assert_eq!(PayoffTensor::read_binary(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn rejects_garbage() {
        let t = sample();
        let mut buf = Vec::new();
        t.write_binary(&mut buf).unwrap();
        assert!(matches!(
            PayoffTensor::read_binary(&buf[..buf.len() - 3]),
            Err(Error::MalformedTensor(_))
        ));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(PayoffTensor::read_binary(bad.as_slice()).is_err());
        let mut longer = buf;
        longer.push(0);
        assert!(PayoffTensor::read_binary(longer.as_slice()).is_err());
    }

    #[test]
    fn csv_has_one_row_per_cell() {
        let t = sample();
        let csv = t.to_csv();
        assert_eq!(csv.lines().count(), 1 + 64);
        let second = csv.lines().nth(2).unwrap();
        assert_eq!(second.split(',').count(), 10);
    }

    #[test]
    fn shape_is_checked() {
        let grid = build_grid(&GridSpec::with_points(2)).unwrap();
        assert!(PayoffTensor::from_means(grid, vec![0.0; 3], vec![0.0; 3]).is_err());
    }
}
