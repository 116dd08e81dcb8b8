use crate::error::{Error, Result};
use crate::io::format_number;

const SYMMETRY_TOL: f64 = 1e-9;

/// Symmetric, non-negative, zero-diagonal matrix of pairwise BC distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    labels: Vec<String>,
    values: Vec<f64>,
}

pub fn default_labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("policy_{i}")).collect()
}

impl DistanceMatrix {
    /// Validates a row-major `n x n` buffer.
    pub fn new(labels: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let n = labels.len();
        Error::check_dim(n * n, values.len())?;
        for i in 0..n {
            if values[i * n + i] != 0.0 {
                return Err(Error::invalid(format!(
                    "diagonal entry {i} is {}",
                    values[i * n + i]
                )));
            }
            for j in 0..n {
                let v = values[i * n + j];
                if !v.is_finite() {
                    return Err(Error::NonFinite("distance matrix"));
                }
                if v < 0.0 {
                    return Err(Error::invalid(format!(
                        "negative distance {v} at ({i}, {j})"
                    )));
                }
                let t = values[j * n + i];
                if (v - t).abs() > SYMMETRY_TOL * v.abs().max(t.abs()).max(1.0) {
                    return Err(Error::invalid(format!(
                        "asymmetric entries at ({i}, {j}): {v} vs {t}"
                    )));
                }
            }
        }
        Ok(DistanceMatrix { labels, values })
    }

    /// Evaluates `f(i, j)` on the strict upper triangle and mirrors it.
    pub fn from_fn(
        labels: Vec<String>,
        mut f: impl FnMut(usize, usize) -> Result<f64>,
    ) -> Result<Self> {
        let n = labels.len();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = f(i, j)?;
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        Self::new(labels, values)
    }

    /// Builds from a precomputed upper triangle in row-major order.
    pub fn from_upper(labels: Vec<String>, upper: &[f64]) -> Result<Self> {
        let n = labels.len();
        Error::check_dim(n * n.saturating_sub(1) / 2, upper.len())?;
        let mut it = upper.iter();
        Self::from_fn(labels, |_, _| Ok(*it.next().unwrap()))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.len() + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        Error::check_dim(self.len(), labels.len())?;
        self.labels = labels;
        Ok(self)
    }

    /// Entries `(i, j)` with `i < j`, row-major.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let n = self.len();
        let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                out.push(self.values[i * n + j]);
            }
        }
        out
    }

    /// Applies `f` to every off-diagonal entry; the diagonal stays zero.
    pub fn map_off_diagonal(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let n = self.len();
        let mut values = self.values.clone();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    values[i * n + j] = f(values[i * n + j]);
                }
            }
        }
        Self::new(self.labels.clone(), values)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.labels)?;
        let n = self.len();
        for i in 0..n {
            w.write_record(
                self.values[i * n..(i + 1) * n]
                    .iter()
                    .map(|&v| format_number(v)),
            )?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let labels: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
        let mut values = Vec::with_capacity(labels.len() * labels.len());
        for rec in r.records() {
            let rec = rec?;
            Error::check_dim(labels.len(), rec.len())?;
            for field in rec.iter() {
                values.push(
                    field
                        .trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(format!("bad distance value {field:?}: {e}")))?,
                );
            }
        }
        Self::new(labels, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_invariant_violations() {
        let l = default_labels(2);
        assert!(DistanceMatrix::new(l.clone(), vec![0.0, 1.0, 1.0, 0.0]).is_ok());
        assert!(DistanceMatrix::new(l.clone(), vec![0.0, 1.0, 2.0, 0.0]).is_err());
        assert!(DistanceMatrix::new(l.clone(), vec![0.1, 1.0, 1.0, 0.0]).is_err());
        assert!(DistanceMatrix::new(l.clone(), vec![0.0, -1.0, -1.0, 0.0]).is_err());
        assert!(DistanceMatrix::new(l, vec![0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn csv_layout() {
        let m = DistanceMatrix::from_upper(
            vec!["a".into(), "b".into(), "c".into()],
            &[2.0 / 17.0, 1.5, 3.0],
        )
        .unwrap();
        let text = m.to_csv().unwrap();
        assert_eq!(text, "a,b,c\n0,0.117647059,1.5\n0.117647059,0,3\n1.5,3,0\n");
        let back = DistanceMatrix::from_csv(&text).unwrap();
        assert_eq!(back.labels(), m.labels());
        assert!((back.get(0, 1) - m.get(0, 1)).abs() < 1e-9);
    }
}
