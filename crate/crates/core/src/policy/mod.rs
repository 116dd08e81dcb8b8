//! Policies acted on by the environments and trainers.

mod network;
mod tabular;

pub use network::{AnglePolicy, SoftmaxPolicy, HIDDEN};
pub use tabular::{TabularPolicy, DIRECTIONS, DOWN, LEFT, RIGHT, UP};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Activation, Mlp, Rng};

pub trait Policy {
    type Action;

    fn sample(&self, state: &[f64], rng: &mut Rng) -> Result<Self::Action>;
}

impl<P: Policy + ?Sized> Policy for &P {
    type Action = P::Action;

    fn sample(&self, state: &[f64], rng: &mut Rng) -> Result<Self::Action> {
        (**self).sample(state, rng)
    }
}

/// Any policy, for loading and saving.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyPolicy {
    Tabular(TabularPolicy),
    Softmax(SoftmaxPolicy),
    Angle(AnglePolicy),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum PolicyFile {
    Tabular {
        rows: usize,
        cols: usize,
        walls: Vec<bool>,
        params: Vec<f64>,
    },
    Softmax {
        sizes: Vec<usize>,
        params: Vec<f64>,
    },
    Angle {
        sizes: Vec<usize>,
        params: Vec<f64>,
    },
}

fn sizes_of(net: &Mlp) -> Vec<usize> {
    std::iter::once(net.input_dim())
        .chain(net.layers().iter().map(|l| l.outputs))
        .collect()
}

fn net_from(sizes: &[usize], params: &[f64]) -> Result<Mlp> {
    let mut net = Mlp::zeros(sizes, Activation::Identity)?;
    net.set_params(params)?;
    Ok(net)
}

impl AnyPolicy {
    pub fn to_json(&self) -> Result<String> {
        let file = match self {
            AnyPolicy::Tabular(p) => PolicyFile::Tabular {
                rows: p.rows(),
                cols: p.cols(),
                walls: p.wall_mask(),
                params: p.params(),
            },
            AnyPolicy::Softmax(p) => PolicyFile::Softmax {
                sizes: sizes_of(p.net()),
                params: p.params(),
            },
            AnyPolicy::Angle(p) => PolicyFile::Angle {
                sizes: sizes_of(p.net()),
                params: p.params(),
            },
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(match serde_json::from_str(text)? {
            PolicyFile::Tabular {
                rows,
                cols,
                walls,
                params,
            } => {
                Error::check_dim(rows * cols, walls.len())?;
                Error::check_dim(rows * cols * DIRECTIONS, params.len())?;
                let cells = walls
                    .iter()
                    .zip(params.chunks(DIRECTIONS))
                    .map(|(&w, p)| (!w).then(|| [p[0], p[1], p[2], p[3]]))
                    .collect();
                AnyPolicy::Tabular(TabularPolicy::new(rows, cols, cells)?)
            }
            PolicyFile::Softmax { sizes, params } => {
                AnyPolicy::Softmax(SoftmaxPolicy::from_net(net_from(&sizes, &params)?)?)
            }
            PolicyFile::Angle { sizes, params } => {
                AnyPolicy::Angle(AnglePolicy::from_net(net_from(&sizes, &params)?)?)
            }
        })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            AnyPolicy::Tabular(_) => "tabular",
            AnyPolicy::Softmax(_) => "softmax",
            AnyPolicy::Angle(_) => "angle",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trips() {
        let mut rng = Rng::new(5);
        let all = [
            AnyPolicy::Tabular(TabularPolicy::parse("R # *\nU D 0.1:0.2:0.3:0.4").unwrap()),
            AnyPolicy::Softmax(SoftmaxPolicy::new(5, 5, &mut rng).unwrap()),
            AnyPolicy::Angle(AnglePolicy::new(2, &mut rng).unwrap()),
        ];
        for p in all {
            let text = p.to_json().unwrap();
            assert!(text.contains(&format!("\"type\": \"{}\"", p.kind())));
            assert_eq!(AnyPolicy::from_json(&text).unwrap(), p);
        }
        assert!(
            AnyPolicy::from_json("{\"type\":\"softmax\",\"sizes\":[2,3],\"params\":[1.0]}")
                .is_err()
        );
    }
}
