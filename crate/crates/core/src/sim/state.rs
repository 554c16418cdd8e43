use nalgebra::DVector;

use crate::error::{Error, Result};

/// Positions and velocities of all agents at one instant. Velocities stay
/// zero for single-integrator runs.
#[derive(Debug, Clone, PartialEq)]
pub struct SwarmState {
    pub t: f64,
    pub positions: Vec<DVector<f64>>,
    pub velocities: Vec<DVector<f64>>,
}

impl SwarmState {
    pub fn at_rest(t: f64, positions: Vec<DVector<f64>>) -> Result<Self> {
        let dim = positions
            .first()
            .map(|p| p.len())
            .ok_or_else(|| Error::param("agents", "need at least one agent"))?;
        if let Some(p) = positions.iter().find(|p| p.len() != dim) {
            return Err(Error::Dimension {
                expected: dim,
                got: p.len(),
            });
        }
        let velocities = vec![DVector::zeros(dim); positions.len()];
        Ok(Self {
            t,
            positions,
            velocities,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.positions.first().map_or(0, |p| p.len())
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self
                .positions
                .iter()
                .chain(&self.velocities)
                .all(|v| v.iter().all(|x| x.is_finite()))
    }

    pub fn mean_position(&self) -> DVector<f64> {
        mean(&self.positions, self.dim())
    }

    pub fn mean_velocity(&self) -> DVector<f64> {
        mean(&self.velocities, self.dim())
    }

    /// Smallest pairwise distance and the pair attaining it.
    pub fn min_pair_distance(&self) -> Option<(f64, usize, usize)> {
        let n = self.len();
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            for j in i + 1..n {
                let r = (&self.positions[i] - &self.positions[j]).norm();
                if best.is_none_or(|(b, _, _)| r < b) {
                    best = Some((r, i, j));
                }
            }
        }
        best
    }
}

fn mean(vs: &[DVector<f64>], dim: usize) -> DVector<f64> {
    let n = vs.len().max(1) as f64;
    vs.iter().fold(DVector::zeros(dim), |acc, v| acc + v) / n
}
