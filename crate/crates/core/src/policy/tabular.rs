use crate::error::{Error, Result};
use crate::math::Rng;

use super::Policy;

pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const LEFT: usize = 2;
pub const RIGHT: usize = 3;
pub const DIRECTIONS: usize = 4;

const TOKENS: [char; DIRECTIONS] = ['U', 'D', 'L', 'R'];

/// Per-cell categorical distribution over `U, D, L, R`; wall cells have none.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    rows: usize,
    cols: usize,
    cells: Vec<Option<[f64; DIRECTIONS]>>,
}

impl TabularPolicy {
    pub fn new(rows: usize, cols: usize, cells: Vec<Option<[f64; DIRECTIONS]>>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("grid must have at least one cell"));
        }
        Error::check_dim(rows * cols, cells.len())?;
        for (i, row) in cells.iter().enumerate() {
            if let Some(p) = row {
                let sum: f64 = p.iter().sum();
                if p.iter().any(|&x| !(x >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid(format!(
                        "cell {i} is not a probability vector: {p:?}"
                    )));
                }
            }
        }
        Ok(TabularPolicy { rows, cols, cells })
    }

    /// One-hot rows; `None` marks a wall.
    pub fn deterministic(rows: usize, cols: usize, actions: &[Option<usize>]) -> Result<Self> {
        let cells = actions
            .iter()
            .map(|a| match a {
                Some(a) if *a < DIRECTIONS => {
                    let mut p = [0.0; DIRECTIONS];
                    p[*a] = 1.0;
                    Ok(Some(p))
                }
                Some(a) => Err(Error::invalid(format!("direction index {a} out of range"))),
                None => Ok(None),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows, cols, cells)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_wall(&self, row: usize, col: usize) -> bool {
        self.cells[row * self.cols + col].is_none()
    }

    pub fn wall_mask(&self) -> Vec<bool> {
        self.cells.iter().map(Option::is_none).collect()
    }

    pub fn distribution(&self, row: usize, col: usize) -> Result<&[f64; DIRECTIONS]> {
        if row >= self.rows || col >= self.cols {
            return Err(Error::invalid(format!(
                "cell ({row}, {col}) outside the grid"
            )));
        }
        self.cells[row * self.cols + col]
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("cell ({row}, {col}) is a wall")))
    }

    pub fn cells(&self) -> &[Option<[f64; DIRECTIONS]>] {
        &self.cells
    }

    /// Flat `rows * cols * 4` tensor with zeros on wall cells.
    pub fn params(&self) -> Vec<f64> {
        self.cells
            .iter()
            .flat_map(|c| c.unwrap_or([0.0; DIRECTIONS]))
            .collect()
    }

    pub fn with_params(&self, flat: &[f64]) -> Result<Self> {
        Error::check_dim(self.cells.len() * DIRECTIONS, flat.len())?;
        let cells = self
            .cells
            .iter()
            .zip(flat.chunks(DIRECTIONS))
            .map(|(c, p)| c.map(|_| [p[0], p[1], p[2], p[3]]))
            .collect();
        Self::new(self.rows, self.cols, cells)
    }

    /// Parses the grid text format: one whitespace-separated token per cell,
    /// one line per row. `U D L R` are deterministic moves, `#` a wall, `*`
    /// uniform, and `u:d:l:r` an explicit distribution. Lines starting with
    /// `;` are comments.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cells = Vec::new();
        let mut rows = 0;
        let mut cols = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with(';') {
                continue;
            }
            let tokens: Vec<&str> = line.split_whitespace().collect();
            match cols {
                None => cols = Some(tokens.len()),
                Some(c) if c != tokens.len() => {
                    return Err(Error::Parse(format!(
                        "line {}: expected {c} cells, found {}",
                        lineno + 1,
                        tokens.len()
                    )))
                }
                _ => {}
            }
            for tok in tokens {
                cells.push(
                    parse_token(tok)
                        .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?,
                );
            }
            rows += 1;
        }
        Self::new(rows, cols.unwrap_or(0), cells)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in 0..self.rows {
            let line: Vec<String> = (0..self.cols)
                .map(|c| match &self.cells[r * self.cols + c] {
                    None => "#".to_string(),
                    Some(p) => match p.iter().position(|&x| x == 1.0) {
                        Some(a) => TOKENS[a].to_string(),
                        None => p
                            .iter()
                            .map(|x| x.to_string())
                            .collect::<Vec<_>>()
                            .join(":"),
                    },
                })
                .collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

fn parse_token(tok: &str) -> std::result::Result<Option<[f64; DIRECTIONS]>, String> {
    if tok == "#" {
        return Ok(None);
    }
    if tok == "*" {
        return Ok(Some([0.25; DIRECTIONS]));
    }
    if let Some(a) = TOKENS
        .iter()
        .position(|t| tok.len() == 1 && tok.starts_with(*t))
    {
        let mut p = [0.0; DIRECTIONS];
        p[a] = 1.0;
        return Ok(Some(p));
    }
    let parts: Vec<&str> = tok.split(':').collect();
    if parts.len() != DIRECTIONS {
        return Err(format!("unrecognized cell token {tok:?}"));
    }
    let mut p = [0.0; DIRECTIONS];
    for (slot, part) in p.iter_mut().zip(parts) {
        *slot = part
            .parse()
            .map_err(|_| format!("bad probability {part:?} in {tok:?}"))?;
    }
    Ok(Some(p))
}

impl Policy for TabularPolicy {
    type Action = usize;

    /// Observations are `(row, col)` coordinates.
    fn sample(&self, state: &[f64], rng: &mut Rng) -> Result<usize> {
        Error::check_dim(2, state.len())?;
        if state.iter().any(|&x| x < 0.0) {
            return Err(Error::invalid("negative grid coordinate"));
        }
        let p = self.distribution(state[0].round() as usize, state[1].round() as usize)?;
        if let Some(a) = p.iter().position(|&x| x == 1.0) {
            return Ok(a);
        }
        rng.weighted_index(p)
            .ok_or_else(|| Error::invalid("empty action distribution"))
    }
}
