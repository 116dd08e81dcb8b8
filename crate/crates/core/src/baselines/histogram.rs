//! State-space discretization.
//!
//! Only occupied cells are stored, so memory grows with the number of visited
//! cells instead of `BINS^d`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::StateDataset;

pub const BINS: usize = 10;

/// Per-dimension uniform binning between the observed minimum and maximum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinEdges {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl BinEdges {
    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// The `BINS + 1` edges of one dimension; a constant dimension has a
    /// single degenerate bin `[min, min]`.
    pub fn edges(&self, dim: usize) -> Vec<f64> {
        let (lo, hi) = (self.min[dim], self.max[dim]);
        if hi <= lo {
            return vec![lo, lo];
        }
        (0..=BINS)
            .map(|i| {
                if i == BINS {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / BINS as f64
                }
            })
            .collect()
    }

    /// Half-open bins, with the maximum folded into the last bin. Values
    /// outside the fitted range are clamped to the outer bins.
    pub fn bin(&self, dim: usize, x: f64) -> u8 {
        let (lo, hi) = (self.min[dim], self.max[dim]);
        if hi <= lo {
            return 0;
        }
        let pos = ((x - lo) / (hi - lo) * BINS as f64).floor();
        pos.clamp(0.0, (BINS - 1) as f64) as u8
    }

    pub fn cell(&self, state: &[f64]) -> Vec<u8> {
        state
            .iter()
            .enumerate()
            .map(|(j, &x)| self.bin(j, x))
            .collect()
    }
}

pub fn compute_bin_edges(pooled: &StateDataset) -> Result<BinEdges> {
    if pooled.is_empty() {
        return Err(Error::Empty("binning data"));
    }
    let d = pooled.dim();
    let mut min = vec![f64::INFINITY; d];
    let mut max = vec![f64::NEG_INFINITY; d];
    for s in pooled.states() {
        for j in 0..d {
            min[j] = min[j].min(s[j]);
            max[j] = max[j].max(s[j]);
        }
    }
    Ok(BinEdges { min, max })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramBc {
    edges: BinEdges,
    cells: BTreeMap<Vec<u8>, f64>,
}

impl HistogramBc {
    pub fn edges(&self) -> &BinEdges {
        &self.edges
    }

    pub fn occupied_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn probability(&self, cell: &[u8]) -> f64 {
        self.cells.get(cell).copied().unwrap_or(0.0)
    }

    pub fn cells(&self) -> impl Iterator<Item = (&[u8], f64)> {
        self.cells.iter().map(|(k, &v)| (k.as_slice(), v))
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = HistogramDocument {
            kind: "histogram_bc".into(),
            bins: BINS,
            min: self.edges.min.clone(),
            max: self.edges.max.clone(),
            cells: self
                .cells
                .iter()
                .map(|(c, &p)| CellEntry { cell: c.clone(), p })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: HistogramDocument = serde_json::from_str(text)?;
        if doc.kind != "histogram_bc" || doc.bins != BINS {
            return Err(Error::Parse("not a 10-bin histogram_bc document".into()));
        }
        Error::check_dim(doc.min.len(), doc.max.len())?;
        let mut cells = BTreeMap::new();
        for e in doc.cells {
            Error::check_dim(doc.min.len(), e.cell.len())?;
            if !(e.p >= 0.0) {
                return Err(Error::Parse(
                    "cell probabilities must be non-negative".into(),
                ));
            }
            cells.insert(e.cell, e.p);
        }
        let total: f64 = cells.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Parse(format!("cell probabilities sum to {total}")));
        }
        Ok(HistogramBc {
            edges: BinEdges {
                min: doc.min,
                max: doc.max,
            },
            cells,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct HistogramDocument {
    #[serde(rename = "type")]
    kind: String,
    bins: usize,
    min: Vec<f64>,
    max: Vec<f64>,
    cells: Vec<CellEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CellEntry {
    cell: Vec<u8>,
    p: f64,
}

/// Normalized visit counts per occupied cell.
pub fn fit_histogram_bc(data: &StateDataset, edges: &BinEdges) -> Result<HistogramBc> {
    Error::check_dim(edges.dim(), data.dim())?;
    if data.is_empty() {
        return Err(Error::Empty("histogram data"));
    }
    let mut counts: BTreeMap<Vec<u8>, usize> = BTreeMap::new();
    for s in data.states() {
        *counts.entry(edges.cell(s)).or_default() += 1;
    }
    let n = data.len() as f64;
    Ok(HistogramBc {
        edges: edges.clone(),
        cells: counts.into_iter().map(|(c, k)| (c, k as f64 / n)).collect(),
    })
}

/// Total-variation distance `½ Σ_cells |p - q|` over a shared binning.
pub fn histogram_distance(a: &HistogramBc, b: &HistogramBc) -> Result<f64> {
    if a.edges != b.edges {
        return Err(Error::EdgeMismatch);
    }
    let mut sum = 0.0;
    let mut ia = a.cells.iter().peekable();
    let mut ib = b.cells.iter().peekable();
    loop {
        match (ia.peek(), ib.peek()) {
            (Some((ka, &pa)), Some((kb, &pb))) => match ka.cmp(kb) {
                std::cmp::Ordering::Less => {
                    sum += pa;
                    ia.next();
                }
                std::cmp::Ordering::Greater => {
                    sum += pb;
                    ib.next();
                }
                std::cmp::Ordering::Equal => {
                    sum += (pa - pb).abs();
                    ia.next();
                    ib.next();
                }
            },
            (Some((_, &pa)), None) => {
                sum += pa;
                ia.next();
            }
            (None, Some((_, &pb))) => {
                sum += pb;
                ib.next();
            }
            (None, None) => break,
        }
    }
    Ok((0.5 * sum).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(rows: &[f64]) -> StateDataset {
        StateDataset::from_states(1, &rows.iter().map(|&x| vec![x]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn unit_edges() {
        let e = compute_bin_edges(&ds(&[0.0, 3.0, 10.0])).unwrap();
        let edges = e.edges(0);
        assert_eq!(edges.len(), 11);
        for (i, v) in edges.iter().enumerate() {
            assert!((v - i as f64).abs() < 1e-12);
        }
        assert_eq!(e.bin(0, 10.0), 9);
        assert_eq!(e.bin(0, 9.999), 9);
        assert_eq!(e.bin(0, 1.0), 1);
        assert_eq!(e.bin(0, 0.0), 0);
    }

    #[test]
    fn constant_dimension_single_bin() {
        let e = compute_bin_edges(&ds(&[2.0, 2.0])).unwrap();
        assert_eq!(e.edges(0), vec![2.0, 2.0]);
        let h = fit_histogram_bc(&ds(&[2.0, 2.0, 2.0]), &e).unwrap();
        assert_eq!(h.occupied_cells(), 1);
        assert_eq!(h.probability(&[0]), 1.0);
        assert!(compute_bin_edges(&ds(&[])).is_err());
    }

    #[test]
    fn counting() {
        let e = compute_bin_edges(&ds(&[0.0, 10.0])).unwrap();
        let h = fit_histogram_bc(&ds(&[0.5, 0.6, 9.5, 9.9]), &e).unwrap();
        assert_eq!(h.probability(&[0]), 0.5);
        assert_eq!(h.probability(&[9]), 0.5);
        let total: f64 = h.cells().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn distances() {
        let e = compute_bin_edges(&ds(&[0.0, 10.0])).unwrap();
        let half = fit_histogram_bc(&ds(&[0.5, 9.5]), &e).unwrap();
        let left = fit_histogram_bc(&ds(&[0.5, 0.7]), &e).unwrap();
        let right = fit_histogram_bc(&ds(&[9.5]), &e).unwrap();
        assert_eq!(histogram_distance(&half, &half).unwrap(), 0.0);
        assert_eq!(histogram_distance(&left, &right).unwrap(), 1.0);
        assert!((histogram_distance(&half, &left).unwrap() - 0.5).abs() < 1e-15);

        let other = compute_bin_edges(&ds(&[0.0, 11.0])).unwrap();
        let h = fit_histogram_bc(&ds(&[1.0]), &other).unwrap();
        assert!(matches!(
            histogram_distance(&h, &half),
            Err(Error::EdgeMismatch)
        ));
    }

    #[test]
    fn json_round_trip() {
        let e = compute_bin_edges(
            &StateDataset::from_states(2, &[vec![0.0, 1.0], vec![1.0, 3.0]]).unwrap(),
        )
        .unwrap();
        let h = fit_histogram_bc(
            &StateDataset::from_states(2, &[vec![0.2, 1.0], vec![1.0, 3.0]]).unwrap(),
            &e,
        )
        .unwrap();
        assert_eq!(HistogramBc::from_json(&h.to_json().unwrap()).unwrap(), h);
    }

    #[test]
    fn sparse_in_high_dimension() {
        // 30 dimensions would need 10^30 dense cells
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|i| (0..30).map(|j| ((i * 7 + j) % 13) as f64).collect())
            .collect();
        let data = StateDataset::from_states(30, &rows).unwrap();
        let e = compute_bin_edges(&data).unwrap();
        let h = fit_histogram_bc(&data, &e).unwrap();
        assert!(h.occupied_cells() <= 50);
    }
}
