//! Field samples on a lattice box.

use crate::lattice::{BoxSpec, Point};
use serde::{Deserialize, Serialize};

/// Which model generated a sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelTag {
    Gff,
    Brw,
    Mbrw,
    Coarse,
    Fine,
}

impl ModelTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelTag::Gff => "GFF",
            ModelTag::Brw => "BRW",
            ModelTag::Mbrw => "MBRW",
            ModelTag::Coarse => "COARSE",
            ModelTag::Fine => "FINE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "GFF" => Some(ModelTag::Gff),
            "BRW" => Some(ModelTag::Brw),
            "MBRW" => Some(ModelTag::Mbrw),
            "COARSE" => Some(ModelTag::Coarse),
            "FINE" => Some(ModelTag::Fine),
            _ => None,
        }
    }
}

/// Square row-major grid of reals. Index `(x, y)` lives at `y * side + x`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    side: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn zeros(side: usize) -> Self {
        Grid {
            side,
            data: vec![0.0; side * side],
        }
    }

    pub fn from_vec(side: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), side * side);
        Grid { side, data }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.side + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.side + x] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn max_abs_diff(&self, other: &Grid) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// One realization of a field on a box, tagged with its model and seed.
#[derive(Clone, Debug)]
pub struct FieldSample {
    pub box_spec: BoxSpec,
    pub values: Grid,
    pub model: ModelTag,
    pub seed: u64,
}

impl FieldSample {
    /// Value at an absolute lattice point of the box.
    pub fn value_at(&self, p: Point) -> f64 {
        let (ox, oy) = self.box_spec.origin();
        self.values.get((p.0 - ox) as usize, (p.1 - oy) as usize)
    }

    /// Maximum value together with all argmax sites.
    pub fn max_with_ties(&self) -> (f64, Vec<Point>) {
        let side = self.values.side();
        let (ox, oy) = self.box_spec.origin();
        let mut best = f64::NEG_INFINITY;
        let mut ties: Vec<Point> = Vec::new();
        for y in 0..side {
            for x in 0..side {
                let v = self.values.get(x, y);
                if v > best {
                    best = v;
                    ties.clear();
                    ties.push((ox + x as i64, oy + y as i64));
                } else if v == best {
                    ties.push((ox + x as i64, oy + y as i64));
                }
            }
        }
        (best, ties)
    }

    pub fn max_value(&self) -> f64 {
        self.max_with_ties().0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_indexing_round_trip() {
        let mut g = Grid::zeros(4);
        g.set(1, 2, 7.5);
        assert_eq!(g.get(1, 2), 7.5);
        assert_eq!(g.as_slice()[2 * 4 + 1], 7.5);
    }

    #[test]
    fn max_with_ties_reports_all() {
        let b = BoxSpec::new(2).unwrap();
        let mut g = Grid::zeros(2);
        g.set(0, 0, 3.0);
        g.set(1, 1, 3.0);
        let f = FieldSample {
            box_spec: b,
            values: g,
            model: ModelTag::Gff,
            seed: 0,
        };
        let (m, ties) = f.max_with_ties();
        assert_eq!(m, 3.0);
        assert_eq!(ties, vec![(0, 0), (1, 1)]);
    }
}
