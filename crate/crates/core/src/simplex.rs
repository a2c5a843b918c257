//! Uniform lattice on the probability simplex with barycentric
//! interpolation over its Freudenthal (Kuhn) triangulation.
//!
//! A lattice point of resolution `M` over `n` types is a composition
//! `c = (c_0, .., c_{n-1})` of `M`, representing `z = c / M`. Points are
//! ordered lexicographically by `c`. Interpolation works in cumulative
//! coordinates `u_k = M * (z_0 + .. + z_{k-1})`, `k = 1..n-1`, where the
//! simplex becomes the order simplex `0 <= u_1 <= .. <= u_{n-1} <= M` and
//! the standard Kuhn subdivision of unit cubes restricts to it.

use crate::error::{Error, Result};
use crate::model::MeanField;

/// Distance from the simplex tolerated by interpolation.
pub const INTERP_TOL: f64 = 1e-9;

const SNAP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexGrid {
    resolution: usize,
    n_types: usize,
    compositions: Vec<Vec<usize>>,
    points: Vec<MeanField>,
    // binom[m][k] = number of compositions of m into k + 1 parts
    binom: Vec<Vec<usize>>,
}

/// Convex weights over grid vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct Barycentric {
    pub vertices: Vec<(usize, f64)>,
}

impl Barycentric {
    /// Weighted sum of a per-vertex quantity.
    pub fn combine(&self, mut f: impl FnMut(usize) -> f64) -> f64 {
        self.vertices.iter().map(|&(p, w)| w * f(p)).sum()
    }
}

impl SimplexGrid {
    pub fn new(resolution: usize, n_types: usize) -> Result<Self> {
        if resolution == 0 {
            return Err(Error::arg("grid resolution must be positive"));
        }
        if n_types == 0 {
            return Err(Error::arg("number of types must be positive"));
        }
        let mut binom = vec![vec![0usize; n_types]; resolution + 1];
        for (m, row) in binom.iter_mut().enumerate() {
            row[0] = 1;
            for k in 1..n_types {
                // compositions of m into k+1 parts = C(m + k, k)
                row[k] = row[k - 1] * (m + k) / k;
            }
        }
        let mut compositions = Vec::with_capacity(binom[resolution][n_types - 1]);
        let mut current = vec![0usize; n_types];
        enumerate(resolution, 0, &mut current, &mut compositions);
        let points = compositions
            .iter()
            .map(|c| MeanField::from_raw(c.iter().map(|&ci| ci as f64 / resolution as f64).collect()))
            .collect();
        Ok(SimplexGrid { resolution, n_types, compositions, points, binom })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn n_types(&self) -> usize {
        self.n_types
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[MeanField] {
        &self.points
    }

    pub fn point(&self, index: usize) -> &MeanField {
        &self.points[index]
    }

    /// Integer composition of `M` behind grid point `index`.
    pub fn composition(&self, index: usize) -> &[usize] {
        &self.compositions[index]
    }

    /// Lexicographic rank of a composition of `M`.
    pub fn index_of(&self, composition: &[usize]) -> Option<usize> {
        if composition.len() != self.n_types || composition.iter().sum::<usize>() != self.resolution {
            return None;
        }
        let mut rank = 0;
        let mut remaining = self.resolution;
        for (i, &c) in composition.iter().enumerate().take(self.n_types - 1) {
            let parts_after = self.n_types - i - 2;
            for v in 0..c {
                rank += self.binom[remaining - v][parts_after];
            }
            remaining -= c;
        }
        Some(rank)
    }

    /// Grid index of a population state that lies exactly on the lattice.
    pub fn locate(&self, z: &[f64]) -> Option<usize> {
        let m = self.resolution as f64;
        let c: Vec<usize> = z.iter().map(|v| (v * m).round().max(0.0) as usize).collect();
        let on_lattice = z.iter().zip(&c).all(|(v, &ci)| (v * m - ci as f64).abs() < 1e-9);
        if on_lattice {
            self.index_of(&c)
        } else {
            None
        }
    }

    /// Barycentric coordinates of `z` in the enclosing lattice simplex.
    pub fn barycentric(&self, z: &[f64]) -> Result<Barycentric> {
        let n = self.n_types;
        if z.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: z.len() });
        }
        let sum: f64 = z.iter().sum();
        if !sum.is_finite() || (sum - 1.0).abs() > INTERP_TOL || z.iter().any(|v| *v < -INTERP_TOL) {
            return Err(Error::arg(format!("population state {z:?} is off the simplex")));
        }
        if n == 1 {
            return Ok(Barycentric { vertices: vec![(0, 1.0)] });
        }
        let m = self.resolution as f64;
        let d = n - 1;
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0; d];
        let mut acc = 0.0;
        for k in 0..d {
            acc += z[k].max(0.0);
            let mut u = (acc * m).clamp(0.0, m);
            // cumulative sums of lattice points land within rounding of an integer
            if (u - u.round()).abs() <= SNAP_TOL {
                u = u.round();
            }
            let f = u.floor();
            base[k] = f as usize;
            frac[k] = u - f;
            if base[k] == self.resolution {
                base[k] -= 1;
                frac[k] = 1.0;
            }
        }
        // descending fractional part, ties broken by larger coordinate first
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&i, &j| frac[j].total_cmp(&frac[i]).then(j.cmp(&i)));

        let mut vertices = Vec::with_capacity(n);
        let mut u = base.clone();
        let mut prev = 1.0;
        for step in 0..=d {
            let next = if step < d { frac[order[step]] } else { 0.0 };
            let w = prev - next;
            if w > 0.0 {
                vertices.push((self.cumulative_index(&u), w));
            }
            if step < d {
                u[order[step]] += 1;
                prev = next;
            }
        }
        Ok(Barycentric { vertices })
    }

    fn cumulative_index(&self, u: &[usize]) -> usize {
        let n = self.n_types;
        let mut c = vec![0usize; n];
        let mut prev = 0;
        for k in 0..n - 1 {
            c[k] = u[k] - prev;
            prev = u[k];
        }
        c[n - 1] = self.resolution - prev;
        self.index_of(&c).expect("Kuhn vertex outside the simplex lattice")
    }
}

fn enumerate(remaining: usize, pos: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if pos == current.len() - 1 {
        current[pos] = remaining;
        out.push(current.clone());
        return;
    }
    for v in 0..=remaining {
        current[pos] = v;
        enumerate(remaining - v, pos + 1, current, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binomial(n: usize, k: usize) -> usize {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn counts_match_stars_and_bars() {
        for m in 1..=20 {
            for n in 1..=4 {
                let g = SimplexGrid::new(m, n).unwrap();
                assert_eq!(g.len(), binomial(m + n - 1, n - 1), "M={m} n={n}");
            }
        }
    }

    #[test]
    fn two_type_grid_order() {
        let g = SimplexGrid::new(10, 2).unwrap();
        assert_eq!(g.len(), 11);
        assert_eq!(g.point(0).as_slice(), &[0.0, 1.0]);
        assert_eq!(g.point(1).as_slice(), &[0.1, 0.9]);
        assert_eq!(g.point(10).as_slice(), &[1.0, 0.0]);
        assert_eq!(SimplexGrid::new(4, 3).unwrap().len(), 15);
        let one = SimplexGrid::new(1, 1).unwrap();
        assert_eq!(one.points(), &[MeanField::new(vec![1.0]).unwrap()]);
    }

    #[test]
    fn zero_arguments_rejected() {
        assert!(SimplexGrid::new(0, 2).is_err());
        assert!(SimplexGrid::new(3, 0).is_err());
    }

    #[test]
    fn rank_inverts_enumeration() {
        let g = SimplexGrid::new(6, 4).unwrap();
        for i in 0..g.len() {
            assert_eq!(g.index_of(g.composition(i)), Some(i));
            assert_eq!(g.locate(g.point(i).as_slice()), Some(i));
        }
        assert_eq!(g.index_of(&[1, 1, 1]), None);
    }

    #[test]
    fn weights_are_exact_at_vertices() {
        let g = SimplexGrid::new(5, 3).unwrap();
        for i in 0..g.len() {
            let b = g.barycentric(g.point(i).as_slice()).unwrap();
            assert_eq!(b.vertices, vec![(i, 1.0)]);
        }
    }

    #[test]
    fn off_simplex_rejected() {
        let g = SimplexGrid::new(5, 3).unwrap();
        assert!(g.barycentric(&[0.5, 0.5, 0.5]).is_err());
        assert!(g.barycentric(&[0.5, 0.5]).is_err());
    }
}
