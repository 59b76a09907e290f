//! Simulation time grids.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Strictly increasing sampling times starting at 0; the last entry is the
/// horizon `T > 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::domain(format!(
                "a time grid needs at least 2 points, got {}",
                times.len()
            )));
        }
        if times[0] != 0.0 {
            return Err(Error::domain(format!("time grids start at 0, got {}", times[0])));
        }
        for w in times.windows(2) {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(Error::domain(format!(
                    "time grid must be strictly increasing and finite, got {} after {}",
                    w[1], w[0]
                )));
            }
        }
        Ok(Self { times })
    }

    /// `n` equally spaced points `0, T/(n-1), ..., T`.
    pub fn uniform(n: usize, horizon: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::domain(format!("a uniform grid needs at least 2 points, got {n}")));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::domain(format!("horizon must be positive, got {horizon}")));
        }
        let times = (0..n).map(|i| horizon * i as f64 / (n - 1) as f64).collect();
        Self::from_times(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Index of an exact grid time, if present.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.times
            .binary_search_by(|x| x.total_cmp(&t))
            .ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_endpoints() {
        let g = TimeGrid::uniform(5, 2.0).unwrap();
        assert_eq!(g.times()[0], 0.0);
        assert_eq!(g.horizon(), 2.0);
        assert_eq!(g.len(), 5);
        assert_eq!(g.index_of(1.0), Some(2));
        assert_eq!(g.index_of(0.3), None);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(TimeGrid::from_times(vec![0.0]).is_err());
        assert!(TimeGrid::from_times(vec![0.1, 0.2]).is_err());
        assert!(TimeGrid::from_times(vec![0.0, 0.2, 0.2]).is_err());
        assert!(TimeGrid::from_times(vec![0.0, 0.2, 0.1]).is_err());
        assert!(TimeGrid::uniform(1, 1.0).is_err());
        assert!(TimeGrid::uniform(4, 0.0).is_err());
    }
}
