use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::math::Rng;

use super::{Environment, Step};

pub const WALL_Y: f64 = 0.65;
pub const WALL_HALF_WIDTH: f64 = 1.0;
pub const SIDE_WALL_BOTTOM: f64 = -0.2;
pub const POINT_SPEED: f64 = 0.05;
pub const POINT_STEPS: usize = 98;

const CONTACT_GAP: f64 = 1e-9;
const HIT_TOL: f64 = 1e-9;

/// Point mass starting at the origin below a U-shaped wall. Each step moves
/// `speed` along heading `φ`, stopping just short of any wall in the way,
/// and pays the change in `y`.
#[derive(Debug, Clone)]
pub struct PointWorld {
    pos: [f64; 2],
    steps: usize,
    max_steps: usize,
    speed: f64,
}

impl Default for PointWorld {
    fn default() -> Self {
        PointWorld {
            pos: [0.0, 0.0],
            steps: 0,
            max_steps: POINT_STEPS,
            speed: POINT_SPEED,
        }
    }
}

impl PointWorld {
    pub fn new(max_steps: usize, speed: f64) -> Result<Self> {
        if max_steps == 0 || !(speed > 0.0) {
            return Err(Error::invalid("step limit and speed must be positive"));
        }
        Ok(PointWorld {
            max_steps,
            speed,
            ..Default::default()
        })
    }

    pub fn position(&self) -> [f64; 2] {
        self.pos
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    /// Fraction of the move `p -> p + v` that can be travelled before touching a wall.
    fn free_fraction(p: [f64; 2], v: [f64; 2]) -> f64 {
        let mut t_hit = f64::INFINITY;
        // top segment
        if v[1] != 0.0 {
            let t = (WALL_Y - p[1]) / v[1];
            let x = p[0] + t * v[0];
            if (-HIT_TOL..=1.0 + HIT_TOL).contains(&t) && x.abs() <= WALL_HALF_WIDTH + HIT_TOL {
                t_hit = t_hit.min(t);
            }
        }
        // side segments
        if v[0] != 0.0 {
            for wx in [-WALL_HALF_WIDTH, WALL_HALF_WIDTH] {
                let t = (wx - p[0]) / v[0];
                let y = p[1] + t * v[1];
                if (-HIT_TOL..=1.0 + HIT_TOL).contains(&t)
                    && (SIDE_WALL_BOTTOM - HIT_TOL..=WALL_Y + HIT_TOL).contains(&y)
                {
                    t_hit = t_hit.min(t);
                }
            }
        }
        if t_hit.is_finite() {
            let len = v[0].hypot(v[1]);
            (t_hit - CONTACT_GAP / len).clamp(0.0, 1.0)
        } else {
            1.0
        }
    }
}

impl Environment for PointWorld {
    type Action = f64;

    fn observation_dim(&self) -> usize {
        2
    }

    fn reset(&mut self, _rng: &mut Rng) -> Vec<f64> {
        self.pos = [0.0, 0.0];
        self.steps = 0;
        self.pos.to_vec()
    }

    fn step(&mut self, phi: &f64, _rng: &mut Rng) -> Result<Step> {
        if !phi.is_finite() || *phi < 0.0 || *phi > 2.0 * PI {
            return Err(Error::invalid(format!("heading {phi} outside [0, 2π]")));
        }
        let v = [self.speed * phi.cos(), self.speed * phi.sin()];
        let t = Self::free_fraction(self.pos, v);
        let y_old = self.pos[1];
        self.pos = [self.pos[0] + t * v[0], self.pos[1] + t * v[1]];
        self.steps += 1;
        Ok(Step {
            state: self.pos.to_vec(),
            reward: self.pos[1] - y_old,
            done: self.steps >= self.max_steps,
        })
    }
}
