//! Staggered tensor grids for the discrete complex.
//!
//! Nodes sit at cell centers; the k-component of a 1-form lives on
//! k-edge midpoints (one fewer point along dimension k); 2-form
//! components are staggered in two dimensions. Anything outside the box
//! is zero, so only interior locations are unknowns.

use crate::poly::PolyJet;

/// Staggering pattern: bit k set means offset by half a cell in
/// dimension k.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Layout(pub u32);

impl Layout {
    pub const NODES: Layout = Layout(0);

    pub fn edge(k: usize) -> Layout {
        Layout(1 << k)
    }

    pub fn face(j: usize, k: usize) -> Layout {
        assert!(j != k);
        Layout((1 << j) | (1 << k))
    }

    pub fn staggered_in(self, k: usize) -> bool {
        self.0 & (1 << k) != 0
    }

    pub fn with(self, k: usize) -> Layout {
        Layout(self.0 | (1 << k))
    }
}

#[derive(Debug, Clone)]
pub struct GridSpec {
    /// box half-width per dimension
    pub half_widths: Vec<f64>,
    /// nodes per dimension
    pub n_points: Vec<usize>,
}

impl GridSpec {
    pub fn new(half_widths: Vec<f64>, n_points: Vec<usize>) -> Self {
        assert_eq!(half_widths.len(), n_points.len());
        assert!(n_points.iter().all(|&n| n >= 16), "need at least 16 points per dimension");
        GridSpec { half_widths, n_points }
    }

    /// Uniform box [-l, l]^dim with n nodes per dimension.
    pub fn cube(dim: usize, l: f64, n: usize) -> Self {
        GridSpec::new(vec![l; dim], vec![n; dim])
    }

    pub fn dim(&self) -> usize {
        self.n_points.len()
    }

    pub fn spacing(&self, k: usize) -> f64 {
        2.0 * self.half_widths[k] / self.n_points[k] as f64
    }

    /// Point count along dimension k for the given layout.
    pub fn count(&self, layout: Layout, k: usize) -> usize {
        if layout.staggered_in(k) {
            self.n_points[k] - 1
        } else {
            self.n_points[k]
        }
    }

    pub fn size(&self, layout: Layout) -> usize {
        (0..self.dim()).map(|k| self.count(layout, k)).product()
    }

    /// Coordinate of grid index i along dimension k.
    pub fn coord(&self, layout: Layout, k: usize, i: usize) -> f64 {
        let d = self.spacing(k);
        let l = self.half_widths[k];
        if layout.staggered_in(k) {
            -l + (i as f64 + 1.0) * d
        } else {
            -l + (i as f64 + 0.5) * d
        }
    }

    /// Multi-index from flat index (dimension 0 fastest).
    pub fn to_multi(&self, layout: Layout, mut idx: usize) -> Vec<usize> {
        let mut m = vec![0usize; self.dim()];
        for (k, mk) in m.iter_mut().enumerate() {
            let c = self.count(layout, k);
            *mk = idx % c;
            idx /= c;
        }
        m
    }

    pub fn from_multi(&self, layout: Layout, multi: &[usize]) -> usize {
        let mut idx = 0usize;
        let mut stride = 1usize;
        for k in 0..self.dim() {
            debug_assert!(multi[k] < self.count(layout, k));
            idx += multi[k] * stride;
            stride *= self.count(layout, k);
        }
        idx
    }

    pub fn position(&self, layout: Layout, multi: &[usize]) -> Vec<f64> {
        (0..self.dim()).map(|k| self.coord(layout, k, multi[k])).collect()
    }

    /// phi sampled at every location of a layout.
    pub fn sample(&self, layout: Layout, jet: &PolyJet) -> Vec<f64> {
        let n = self.size(layout);
        let mut v = Vec::with_capacity(n);
        for idx in 0..n {
            let m = self.to_multi(layout, idx);
            v.push(jet.value(&self.position(layout, &m)));
        }
        v
    }

    /// Crude bound on the relative squared Maxwellian mass outside the
    /// box: exp(-2 (min boundary phi - min phi) / h).
    pub fn maxwellian_tail_ratio(&self, jet: &PolyJet, h: f64) -> f64 {
        let phi_nodes = self.sample(Layout::NODES, jet);
        let phi_min = phi_nodes.iter().fold(f64::INFINITY, |m, v| m.min(*v));
        let mut phi_bd = f64::INFINITY;
        for idx in 0..self.size(Layout::NODES) {
            let m = self.to_multi(Layout::NODES, idx);
            let on_boundary = m
                .iter()
                .enumerate()
                .any(|(k, &i)| i == 0 || i + 1 == self.n_points[k]);
            if on_boundary {
                phi_bd = phi_bd.min(phi_nodes[idx]);
            }
        }
        (-2.0 * (phi_bd - phi_min) / h).exp()
    }

    /// Ordering of the concatenated 1-form vector that interleaves the
    /// components cell by cell, keeping the banded solver bandwidth
    /// proportional to one grid line.
    pub fn edge_interleave_permutation(&self) -> Vec<usize> {
        let dim = self.dim();
        let mut keyed: Vec<(usize, usize)> = Vec::new(); // (site key, concat index)
        let mut offset = 0usize;
        for k in 0..dim {
            let layout = Layout::edge(k);
            for idx in 0..self.size(layout) {
                let multi = self.to_multi(layout, idx);
                // anchor the edge at its lower node, order by node index
                // then component
                let site = self.from_multi(Layout::NODES, &multi);
                keyed.push((site * (dim + 1) + k, offset + idx));
            }
            offset += self.size(layout);
        }
        keyed.sort_unstable();
        let mut perm = vec![0usize; keyed.len()];
        for (new_pos, &(_, old)) in keyed.iter().enumerate() {
            perm[old] = new_pos;
        }
        perm
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{Poly, PolyJet};

    #[test]
    fn layout_counts_and_coords() {
        let g = GridSpec::cube(2, 2.0, 20);
        assert_eq!(g.size(Layout::NODES), 400);
        assert_eq!(g.size(Layout::edge(0)), 19 * 20);
        assert_eq!(g.size(Layout::edge(1)), 20 * 19);
        assert_eq!(g.size(Layout::face(0, 1)), 19 * 19);
        assert_eq!(g.spacing(0), 0.2);
        // first and last node centered inside the box
        assert!((g.coord(Layout::NODES, 0, 0) + 1.9).abs() < 1e-14);
        assert!((g.coord(Layout::NODES, 0, 19) - 1.9).abs() < 1e-14);
        // staggered points sit between nodes, strictly inside
        assert!((g.coord(Layout::edge(0), 0, 0) + 1.8).abs() < 1e-14);
        assert!((g.coord(Layout::edge(0), 0, 18) - 1.8).abs() < 1e-14);
    }

    #[test]
    fn multi_index_round_trip() {
        let g = GridSpec::new(vec![1.0, 2.0, 1.5], vec![16, 17, 18]);
        for layout in [Layout::NODES, Layout::edge(1), Layout::face(0, 2)] {
            for idx in [0, 5, 100, g.size(layout) - 1] {
                let m = g.to_multi(layout, idx);
                assert_eq!(g.from_multi(layout, &m), idx);
            }
        }
    }

    #[test]
    fn tail_ratio_small_for_dw1_box() {
        let phi = Poly::from_terms(2, &[(&[0, 2], 0.5), (&[4, 0], 0.25), (&[2, 0], -0.5)]);
        let jet = PolyJet::new(phi);
        let g = GridSpec::cube(2, 2.5, 64);
        let r = g.maxwellian_tail_ratio(&jet, 0.14);
        assert!(r < 1e-12, "tail ratio {r}");
    }

    #[test]
    fn interleave_is_a_permutation() {
        let g = GridSpec::cube(2, 1.0, 16);
        let p = g.edge_interleave_permutation();
        let total = g.size(Layout::edge(0)) + g.size(Layout::edge(1));
        assert_eq!(p.len(), total);
        let mut seen = vec![false; total];
        for &v in &p {
            assert!(!seen[v]);
            seen[v] = true;
        }
    }
}
