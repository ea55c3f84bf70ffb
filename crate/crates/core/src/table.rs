use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense `[h][x][a]` table of action values.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn filled(horizon: usize, num_states: usize, num_actions: usize, value: f64) -> Self {
        Self {
            horizon,
            num_states,
            num_actions,
            values: vec![value; horizon * num_states * num_actions],
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn index(&self, h: usize, x: usize, a: usize) -> usize {
        (h * self.num_states + x) * self.num_actions + a
    }

    #[inline]
    pub fn get(&self, h: usize, x: usize, a: usize) -> f64 {
        self.values[self.index(h, x, a)]
    }

    #[inline]
    pub fn set(&mut self, h: usize, x: usize, a: usize, value: f64) {
        let i = self.index(h, x, a);
        self.values[i] = value;
    }

    #[inline]
    pub fn row(&self, h: usize, x: usize) -> &[f64] {
        let start = self.index(h, x, 0);
        &self.values[start..start + self.num_actions]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn to_nested(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.horizon)
            .map(|h| (0..self.num_states).map(|x| self.row(h, x).to_vec()).collect())
            .collect()
    }

    pub fn from_nested(nested: &[Vec<Vec<f64>>]) -> Result<Self> {
        let horizon = nested.len();
        let num_states = nested.first().map_or(0, Vec::len);
        let num_actions = nested.first().and_then(|r| r.first()).map_or(0, Vec::len);
        let mut values = Vec::with_capacity(horizon * num_states * num_actions);
        for step in nested {
            if step.len() != num_states {
                return Err(Error::Parse("ragged Q-table".into()));
            }
            for row in step {
                if row.len() != num_actions {
                    return Err(Error::Parse("ragged Q-table".into()));
                }
                values.extend_from_slice(row);
            }
        }
        Ok(Self {
            horizon,
            num_states,
            num_actions,
            values,
        })
    }
}

/// JSON snapshot of one agent's Q-table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QSnapshot {
    pub agent: usize,
    pub q: Vec<Vec<Vec<f64>>>,
}
