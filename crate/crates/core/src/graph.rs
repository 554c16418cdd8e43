//! Proximity graph with a grow-only bonded edge set, plus the Laplacian,
//! incidence matrix and algebraic connectivity derived from it.
//!
//! Pairs closer than the radius at construction are bonded. Afterwards a pair
//! bonds once it comes within `radius - hysteresis`; bonds are never dropped.
//! A bonded pair reaching the radius is reported as a connectivity violation.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// `λ₂` above this is treated as connected.
pub const CONNECTIVITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum WeightRule {
    Unit,
    /// Symmetric table of positive weights; only entries of bonded pairs are read.
    Custom(DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum EdgeEvent {
    Bonded { i: usize, j: usize, distance: f64 },
    ConnectivityViolation { i: usize, j: usize, distance: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProximityGraph {
    radius: f64,
    hysteresis: f64,
    rule: WeightRule,
    weights: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct SpectralSummary {
    pub laplacian: DMatrix<f64>,
    pub incidence: DMatrix<f64>,
    pub lambda2: f64,
    pub connected: bool,
}

fn distance(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm()
}

impl ProximityGraph {
    pub fn build_initial(
        positions: &[DVector<f64>],
        radius: f64,
        hysteresis: f64,
        rule: WeightRule,
    ) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::param("radius", format!("must be positive, got {radius}")));
        }
        if !(hysteresis > 0.0 && hysteresis < radius) {
            return Err(Error::param(
                "hysteresis",
                format!("must lie in (0, {radius}), got {hysteresis}"),
            ));
        }
        let n = positions.len();
        if let WeightRule::Custom(table) = &rule {
            if table.nrows() != n || table.ncols() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: table.nrows(),
                });
            }
        }
        if positions.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite("initial positions".into()));
        }
        let mut graph = Self {
            radius,
            hysteresis,
            rule,
            weights: DMatrix::zeros(n, n),
        };
        for i in 0..n {
            for j in i + 1..n {
                let r = distance(&positions[i], &positions[j]);
                if r == 0.0 {
                    return Err(Error::Coincident { i, j, distance: r });
                }
                if r < radius {
                    graph.bond(i, j)?;
                }
            }
        }
        Ok(graph)
    }

    fn bond(&mut self, i: usize, j: usize) -> Result<()> {
        let w = match &self.rule {
            WeightRule::Unit => 1.0,
            WeightRule::Custom(table) => {
                let w = table[(i, j)];
                if !(w > 0.0) || w != table[(j, i)] {
                    return Err(Error::param(
                        "weights",
                        format!("entry ({i},{j}) must be positive and symmetric"),
                    ));
                }
                w
            }
        };
        self.weights[(i, j)] = w;
        self.weights[(j, i)] = w;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.weights.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn hysteresis(&self) -> f64 {
        self.hysteresis
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn is_bonded(&self, i: usize, j: usize) -> bool {
        self.weights[(i, j)] > 0.0
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&j| j != i && self.is_bonded(i, j))
    }

    /// Bonded pairs `(i, j, a_ij)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.len();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if self.is_bonded(i, j) {
                    out.push((i, j, self.weights[(i, j)]));
                }
            }
        }
        out
    }

    /// Bonds newly close pairs and reports bonded pairs at or beyond the radius.
    pub fn update_edges(&mut self, positions: &[DVector<f64>]) -> Vec<EdgeEvent> {
        let n = self.len();
        let threshold = self.radius - self.hysteresis;
        let mut events = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let r = distance(&positions[i], &positions[j]);
                if self.is_bonded(i, j) {
                    if !(r < self.radius) {
                        events.push(EdgeEvent::ConnectivityViolation { i, j, distance: r });
                    }
                } else if r <= threshold {
                    // a custom table lacking a positive entry for this pair leaves it unbonded
                    if self.bond(i, j).is_ok() {
                        events.push(EdgeEvent::Bonded { i, j, distance: r });
                    }
                }
            }
        }
        events
    }

    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut l = -self.weights.clone();
        for i in 0..n {
            l[(i, i)] = self.weights.row(i).sum();
        }
        l
    }

    /// Incidence matrix with one column per edge: `+√a` at `i`, `-√a` at `j`.
    pub fn incidence(&self) -> DMatrix<f64> {
        let edges = self.edges();
        let mut d = DMatrix::zeros(self.len(), edges.len());
        for (k, &(i, j, w)) in edges.iter().enumerate() {
            let s = w.sqrt();
            d[(i, k)] = s;
            d[(j, k)] = -s;
        }
        d
    }

    pub fn lambda2(&self) -> f64 {
        algebraic_connectivity(&self.laplacian())
    }

    pub fn spectral(&self) -> SpectralSummary {
        let laplacian = self.laplacian();
        let lambda2 = algebraic_connectivity(&laplacian);
        SpectralSummary {
            incidence: self.incidence(),
            connected: self.len() < 2 || lambda2 > CONNECTIVITY_TOL,
            laplacian,
            lambda2,
        }
    }
}

/// Second-smallest eigenvalue of a symmetric matrix, clamped at zero.
/// Returns 0 for matrices smaller than 2×2.
pub fn algebraic_connectivity(laplacian: &DMatrix<f64>) -> f64 {
    if laplacian.nrows() < 2 {
        return 0.0;
    }
    let mut eig: Vec<f64> = SymmetricEigen::new(laplacian.clone())
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eig.sort_by(|a, b| a.total_cmp(b));
    eig[1].max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line(points: &[f64]) -> Vec<DVector<f64>> {
        points.iter().map(|&x| dvector![x, 0.0]).collect()
    }

    #[test]
    fn initial_bonding_examples() {
        let g = ProximityGraph::build_initial(&line(&[0.0, 3.0]), 5.0, 0.5, WeightRule::Unit).unwrap();
        assert!(g.is_bonded(0, 1));
        let g = ProximityGraph::build_initial(&line(&[0.0, 6.0]), 5.0, 0.5, WeightRule::Unit).unwrap();
        assert!(!g.is_bonded(0, 1));
        let g = ProximityGraph::build_initial(&line(&[0.0, 4.0, 8.0]), 5.0, 0.5, WeightRule::Unit)
            .unwrap();
        assert_eq!(
            g.edges().iter().map(|e| (e.0, e.1)).collect::<Vec<_>>(),
            vec![(0, 1), (1, 2)]
        );
    }

    #[test]
    fn initial_rejects_bad_input() {
        assert!(matches!(
            ProximityGraph::build_initial(&line(&[1.0, 1.0]), 5.0, 0.5, WeightRule::Unit),
            Err(Error::Coincident { .. })
        ));
        assert!(matches!(
            ProximityGraph::build_initial(&line(&[0.0, f64::NAN]), 5.0, 0.5, WeightRule::Unit),
            Err(Error::NonFinite(_))
        ));
        assert!(ProximityGraph::build_initial(&line(&[0.0, 1.0]), 5.0, 5.0, WeightRule::Unit).is_err());
        assert!(ProximityGraph::build_initial(&line(&[0.0, 1.0]), 0.0, 0.0, WeightRule::Unit).is_err());
    }

    #[test]
    fn update_edges_examples() {
        let (r, h) = (5.0, 0.5);
        let mut g = ProximityGraph::build_initial(&line(&[0.0, 6.0]), r, h, WeightRule::Unit).unwrap();
        assert!(g.update_edges(&line(&[0.0, 6.0])).is_empty());
        // inside the radius but not past the hysteresis band: still unbonded
        assert!(g.update_edges(&line(&[0.0, r - h + 0.01])).is_empty());
        let ev = g.update_edges(&line(&[0.0, r - h - 0.01]));
        assert!(matches!(ev.as_slice(), [EdgeEvent::Bonded { i: 0, j: 1, .. }]));

        let ev = g.update_edges(&line(&[0.0, r + 0.1]));
        assert!(matches!(
            ev.as_slice(),
            [EdgeEvent::ConnectivityViolation { i: 0, j: 1, .. }]
        ));
        assert!(g.is_bonded(0, 1));

        let before = g.clone();
        assert!(g.update_edges(&line(&[0.0, 2.0])).is_empty());
        assert_eq!(g, before);
    }

    #[test]
    fn spectral_examples() {
        let g = ProximityGraph::build_initial(&line(&[0.0, 1.0]), 5.0, 0.5, WeightRule::Unit).unwrap();
        let s = g.spectral();
        assert_eq!(s.laplacian, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        assert!((s.lambda2 - 2.0).abs() < 1e-12);
        assert!(s.connected);

        let g = ProximityGraph::build_initial(&line(&[0.0, 10.0, 20.0]), 5.0, 0.5, WeightRule::Unit)
            .unwrap();
        let s = g.spectral();
        assert_eq!(s.lambda2, 0.0);
        assert!(!s.connected);

        let g = ProximityGraph::build_initial(&line(&[0.0, 4.0, 8.0]), 5.0, 0.5, WeightRule::Unit)
            .unwrap();
        assert!((g.lambda2() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn custom_weights() {
        let table = DMatrix::from_row_slice(2, 2, &[0.0, 3.0, 3.0, 0.0]);
        let g = ProximityGraph::build_initial(&line(&[0.0, 1.0]), 5.0, 0.5, WeightRule::Custom(table))
            .unwrap();
        assert!((g.lambda2() - 6.0).abs() < 1e-12);
        let asym = DMatrix::from_row_slice(2, 2, &[0.0, 3.0, 2.0, 0.0]);
        assert!(ProximityGraph::build_initial(&line(&[0.0, 1.0]), 5.0, 0.5, WeightRule::Custom(asym))
            .is_err());
    }

    fn random_graph(seed: u64) -> ProximityGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(2..=8);
        let pts: Vec<_> = (0..n)
            .map(|_| dvector![rng.gen_range(-6.0..6.0), rng.gen_range(-6.0..6.0)])
            .collect();
        let mut table = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                let w = rng.gen_range(0.1..5.0);
                table[(i, j)] = w;
                table[(j, i)] = w;
            }
        }
        ProximityGraph::build_initial(&pts, 5.0, 0.5, WeightRule::Custom(table)).unwrap()
    }

    proptest! {
        #[test]
        fn laplacian_structure(seed in any::<u64>()) {
            let g = random_graph(seed);
            let s = g.spectral();
            let ones = DVector::from_element(g.len(), 1.0);
            prop_assert!((&s.laplacian * ones).norm() <= 1e-12);
            let ddt = &s.incidence * s.incidence.transpose();
            prop_assert!((ddt - &s.laplacian).amax() <= 1e-12);
            prop_assert_eq!(s.connected, s.lambda2 > CONNECTIVITY_TOL);
        }
    }

    #[test]
    fn rayleigh_quotient_bounded_by_lambda2() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for seed in 0..10 {
            let g = random_graph(seed);
            let (l, l2, n) = (g.laplacian(), g.lambda2(), g.len());
            for _ in 0..1000 {
                let mut x = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
                let mean = x.mean();
                x.add_scalar_mut(-mean);
                if x.norm() < 1e-9 {
                    continue;
                }
                let q = x.dot(&(&l * &x)) / x.norm_squared();
                assert!(q >= l2 - 1e-9, "quotient {q} below lambda2 {l2}");
            }
        }
    }
}
