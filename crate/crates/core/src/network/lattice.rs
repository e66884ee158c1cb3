use super::{Intersection, RoadNetwork, RoadSpec, DEFAULT_L_REF, DEFAULT_N_REF};
use crate::error::{Error, Result};

/// Square lattice of `rows * cols` intersections joined by two-way roads of
/// length `spacing`. Corner intersections have only two approaches and are
/// left unsignalized; every other intersection carries a signal.
///
/// Intersection ids are `row * cols + col + 1`, with row 0 at `y = 0`.
pub fn generate_lattice(rows: usize, cols: usize, spacing: f64) -> Result<RoadNetwork> {
    if rows < 2 || cols < 2 {
        return Err(Error::InvalidArgument(format!(
            "lattice needs at least 2 rows and 2 columns, got {rows}x{cols}"
        )));
    }
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::InvalidArgument(format!("spacing must be positive, got {spacing}")));
    }

    let id = |r: usize, c: usize| (r * cols + c + 1) as u32;
    let mut intersections = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let corner = (r == 0 || r == rows - 1) && (c == 0 || c == cols - 1);
            intersections.push(Intersection {
                id: id(r, c),
                x: c as f64 * spacing,
                y: r as f64 * spacing,
                signalized: !corner,
            });
        }
    }

    let mut roads = Vec::with_capacity(4 * rows * cols);
    let mut link = |a: u32, b: u32| {
        for (from, to) in [(a, b), (b, a)] {
            roads.push(RoadSpec { from, to, length: spacing, sign: None, group_coeff: None });
        }
    };
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                link(id(r, c), id(r, c + 1));
            }
            if r + 1 < rows {
                link(id(r, c), id(r + 1, c));
            }
        }
    }

    RoadNetwork::new(intersections, roads, DEFAULT_L_REF, DEFAULT_N_REF)
}
