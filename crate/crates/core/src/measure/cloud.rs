//! Weighted point clouds on ℙ¹ and ℙ².

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::ProjPoint;

/// Where a cloud came from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub map: String,
    pub kind: String,
    /// Start point as (re, im) pairs of normalized coordinates.
    pub start: Vec<[f64; 2]>,
    pub burn_in: usize,
    pub depth: usize,
    pub chains: usize,
}

/// A weighted sample on ℙ^(N−1) (`N = 2` or `3`). Weights are positive and
/// sum to 1.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloudMeasure<const N: usize> {
    points: Vec<ProjPoint<N>>,
    weights: Vec<f64>,
    pub seed: u64,
    pub provenance: Provenance,
}

pub type Cloud1 = PointCloudMeasure<2>;
pub type Cloud2 = PointCloudMeasure<3>;

impl<const N: usize> PointCloudMeasure<N> {
    /// Equal weights `1/len`.
    pub fn uniform(points: Vec<ProjPoint<N>>, seed: u64, provenance: Provenance) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("empty point cloud".into()));
        }
        let w = 1.0 / points.len() as f64;
        let weights = vec![w; points.len()];
        Ok(PointCloudMeasure { points, weights, seed, provenance })
    }

    /// Arbitrary positive weights, renormalized to total mass 1.
    pub fn weighted(points: Vec<ProjPoint<N>>, weights: Vec<f64>, seed: u64, provenance: Provenance) -> Result<Self> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::InvalidInput("points and weights must be nonempty and of equal length".into()));
        }
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidInput("weights must be positive and finite".into()));
        }
        let s: f64 = weights.iter().sum();
        let weights = weights.into_iter().map(|w| w / s).collect();
        Ok(PointCloudMeasure { points, weights, seed, provenance })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        N - 1
    }

    pub fn points(&self) -> &[ProjPoint<N>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ProjPoint<N>, f64)> {
        self.points.iter().zip(self.weights.iter().copied())
    }

    /// Concatenate clouds in order, each contributing in proportion to its
    /// point count.
    pub fn concat(parts: Vec<Self>, seed: u64, provenance: Provenance) -> Result<Self> {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for p in parts {
            let n = p.len() as f64;
            weights.extend(p.weights.iter().map(|w| w * n));
            points.extend(p.points);
        }
        Self::weighted(points, weights, seed, provenance)
    }

    /// Sub-cloud of the points satisfying `keep`, renormalized.
    pub fn restrict(&self, keep: impl Fn(&ProjPoint<N>) -> bool) -> Option<Self> {
        let (p, w): (Vec<_>, Vec<_>) = self.iter().filter(|(p, _)| keep(p)).map(|(p, w)| (*p, w)).unzip();
        Self::weighted(p, w, self.seed, self.provenance.clone()).ok()
    }

    /// CSV rows `coord0_re, coord0_im, ..., weight`.
    pub fn write_csv<W: std::io::Write>(&self, out: W, header: &serde_json::Value) -> Result<()> {
        let rows = self.iter().map(|(p, w)| {
            let mut r: Vec<f64> = p.coords().iter().flat_map(|c| [c.re, c.im]).collect();
            r.push(w);
            r
        });
        crate::io::write_csv(out, header, &coord_columns(N), rows)
    }

    pub fn read_csv(text: &str) -> Result<(serde_json::Value, Self)> {
        let (header, rows) = crate::io::read_csv(text, 2 * N + 1)?;
        let mut pts = Vec::with_capacity(rows.len());
        let mut ws = Vec::with_capacity(rows.len());
        for r in rows {
            let c: [crate::numeric::C64; N] = std::array::from_fn(|i| crate::numeric::C64::new(r[2 * i], r[2 * i + 1]));
            pts.push(ProjPoint::new(c)?);
            ws.push(r[2 * N]);
        }
        let seed = header.get("seed").and_then(|s| s.as_u64()).unwrap_or(0);
        let prov = header.get("provenance").and_then(|p| serde_json::from_value(p.clone()).ok()).unwrap_or_default();
        Ok((header, Self::weighted(pts, ws, seed, prov)?))
    }
}

pub fn coord_columns(n: usize) -> Vec<String> {
    let mut cols: Vec<String> = (0..n).flat_map(|i| [format!("coord{i}_re"), format!("coord{i}_im")]).collect();
    cols.push("weight".into());
    cols
}
