use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Strictly increasing quantile levels inside `(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct QuantileGrid {
    levels: Vec<f64>,
}

impl QuantileGrid {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidInput("quantile grid is empty".into()));
        }
        if let Some(t) = levels.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(Error::InvalidInput(format!("quantile level {t} is outside (0, 1)")));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("quantile levels must be strictly increasing".into()));
        }
        Ok(QuantileGrid { levels })
    }

    /// `m / (count + 1)` for `m = 1..=count`; `equally_spaced(15)` is the `m/16` grid.
    pub fn equally_spaced(count: usize) -> Result<Self> {
        let denom = (count + 1) as f64;
        QuantileGrid::new((1..=count).map(|m| m as f64 / denom).collect())
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

impl Default for QuantileGrid {
    fn default() -> Self {
        QuantileGrid::equally_spaced(15).expect("m/16 grid is valid")
    }
}

impl TryFrom<Vec<f64>> for QuantileGrid {
    type Error = Error;

    fn try_from(levels: Vec<f64>) -> Result<Self> {
        QuantileGrid::new(levels)
    }
}

impl From<QuantileGrid> for Vec<f64> {
    fn from(g: QuantileGrid) -> Self {
        g.levels
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_sixteenths() {
        let g = QuantileGrid::default();
        assert_eq!(g.len(), 15);
        assert_eq!(g.levels()[0], 1.0 / 16.0);
        assert_eq!(g.levels()[7], 0.5);
    }

    #[test]
    fn rejects_bad_levels() {
        assert!(QuantileGrid::new(vec![]).is_err());
        assert!(QuantileGrid::new(vec![0.0, 0.5]).is_err());
        assert!(QuantileGrid::new(vec![0.5, 1.0]).is_err());
        assert!(QuantileGrid::new(vec![0.5, 0.5]).is_err());
        assert!(QuantileGrid::new(vec![0.6, 0.4]).is_err());
        assert!(QuantileGrid::new(vec![f64::NAN]).is_err());
    }
}
