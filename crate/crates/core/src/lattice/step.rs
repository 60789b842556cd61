//! Per-step vertex geometry shared by the lattice and tree engines.

use crate::error::{HedgeError, Result};
use crate::geometry;
use crate::linalg::{self, Lu};
use crate::minmax::{self, Candidate, ExtremeSet, GeometryMode, Sense};

/// Jump outcomes of one step with their extreme risk-neutral laws.
#[derive(Debug, Clone)]
pub struct StepGeometry {
    /// Price relatives `xi_I`, one per outcome.
    pub factors: Vec<Vec<f64>>,
    /// Capital increments per unit of holding, `xi_I - rho` for the
    /// frictionless model.
    pub centered: Vec<Vec<f64>>,
    pub extreme: ExtremeSet,
    lus: Vec<Option<Lu>>,
}

/// Price relatives of the `2^J` vertices; bit `j` of the index set means
/// asset `j` moved up.
pub fn vertex_factors(down: &[f64], up: &[f64]) -> Vec<Vec<f64>> {
    let j = down.len();
    (0..1usize << j)
        .map(|mask| (0..j).map(|a| if mask >> a & 1 == 1 { up[a] } else { down[a] }).collect())
        .collect()
}

impl StepGeometry {
    /// Geometry of the vertex model with capital factor `scale * xi - rho`
    /// (`scale = 1` without fixed costs).
    pub fn vertex(down: &[f64], up: &[f64], rho: f64, scale: f64, mode: Option<GeometryMode>) -> Result<(Self, Option<String>)> {
        let factors = vertex_factors(down, up);
        let centered = factors
            .iter()
            .map(|xi| xi.iter().map(|x| scale * x - rho).collect())
            .collect();
        Self::from_vectors(factors, centered, mode)
    }

    /// Builds the geometry from explicit outcomes. With `mode = None`
    /// strict enumeration is used unless some d increments are dependent,
    /// in which case lower-dimensional extreme laws are enumerated and a
    /// warning is returned.
    pub fn from_vectors(
        factors: Vec<Vec<f64>>,
        centered: Vec<Vec<f64>>,
        mode: Option<GeometryMode>,
    ) -> Result<(Self, Option<String>)> {
        let d = centered.first().map_or(0, |v| v.len());
        let mut warning = None;
        let mode = match mode {
            Some(m) => m,
            None => match geometry::dependent_subset(&centered, d) {
                Some(s) => {
                    warning = Some(format!(
                        "outcomes {s:?} have linearly dependent increments; using lower-dimensional extreme measures"
                    ));
                    GeometryMode::Extended
                }
                None => GeometryMode::Strict,
            },
        };
        let extreme = minmax::extreme_measures(&centered, mode)?;
        let lus = extreme
            .candidates
            .iter()
            .map(|c| {
                if c.indices.len() != d + 1 {
                    return None;
                }
                let base = &centered[c.indices[0]];
                let rows: Vec<Vec<f64>> = c.indices[1..].iter().map(|&i| linalg::sub(&centered[i], base)).collect();
                Lu::new(&rows, 1e-14)
            })
            .collect();
        Ok((Self { factors, centered, extreme, lus }, warning))
    }

    pub fn candidate(&self, pos: usize) -> &Candidate {
        &self.extreme.candidates[pos]
    }

    pub fn mode(&self) -> GeometryMode {
        self.extreme.mode
    }

    /// Objective of every candidate for the given outcome values.
    pub fn objectives(&self, values: &[f64]) -> Vec<f64> {
        self.extreme.candidates.iter().map(|c| c.expectation(values)).collect()
    }

    /// Hedge vector in capital units (before dividing by prices) making
    /// `value` a certified bound for candidate `pos`.
    pub fn scaled_gamma(&self, values: &[f64], pos: usize, value: f64, sense: Sense) -> Result<Vec<f64>> {
        let cand = &self.extreme.candidates[pos];
        if let Some(lu) = &self.lus[pos] {
            let f0 = values[cand.indices[0]];
            let rhs: Vec<f64> = cand.indices[1..].iter().map(|&i| values[i] - f0).collect();
            let g = lu.solve(&rhs);
            let scale = 1.0 + linalg::max_abs(values);
            let ok = self.centered.iter().zip(values).all(|(c, &f)| {
                let r = f - linalg::dot(c, &g);
                match sense {
                    Sense::Upper => r <= value + 1e-9 * scale,
                    Sense::Lower => r >= value - 1e-9 * scale,
                }
            });
            if ok {
                return Ok(g);
            }
        }
        minmax::hedge_vector(&self.centered, values, cand, value, sense)
    }

    /// Solves one node: returns `(B value, candidate position, gamma)`,
    /// where `gamma` is divided coordinate-wise by `z` when given.
    pub fn solve(&self, values: &[f64], z: Option<&[f64]>, sense: Sense) -> Result<(f64, usize, Vec<f64>)> {
        let obj = self.objectives(values);
        let (pos, value) = minmax::select(&obj, sense);
        let mut g = self.scaled_gamma(values, pos, value, sense)?;
        if let Some(z) = z {
            for (gi, zi) in g.iter_mut().zip(z) {
                *gi /= zi;
            }
        }
        Ok((value, pos, g))
    }

    /// Fixed-point hedge vector in capital units for candidate `pos` when
    /// the outcome values depend on the hedge, `(c_i - c_0, g) = F_i(g) - F_0(g)`.
    pub fn fixed_point(
        &self,
        pos: usize,
        f: &dyn Fn(usize, &[f64]) -> f64,
        start: Vec<f64>,
    ) -> Result<Vec<f64>> {
        let cand = &self.extreme.candidates[pos];
        if self.lus[pos].is_none() {
            return Err(HedgeError::Degenerate(
                "costed recursion needs full-dimensional extreme measures".into(),
            ));
        }
        Ok(minmax::fixed_point_gamma(&self.centered, &cand.indices, f, start)?.gamma)
    }
}
