//! The normalized player interaction graph.

use super::tensor::Tensor;

/// Symmetrically normalized adjacency over the on-court players.
///
/// Holds `D^{-1/2} (A + I) D^{-1/2}` for a binary adjacency `A`. Entries are
/// non-negative and the matrix is symmetric with spectral radius <= 1.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerGraph {
    n: usize,
    adj: Tensor,
}

impl PlayerGraph {
    /// Normalize an arbitrary binary adjacency (self-loops added here).
    pub fn from_binary_adjacency(n: usize, binary: &[Vec<bool>]) -> Self {
        assert!(n >= 1);
        assert_eq!(binary.len(), n);
        let mut a = vec![0.0f64; n * n];
        for i in 0..n {
            assert_eq!(binary[i].len(), n);
            for j in 0..n {
                if i == j || binary[i][j] {
                    a[i * n + j] = 1.0;
                }
            }
        }
        let deg: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| a[i * n + j]).sum())
            .collect();
        let mut norm = vec![0.0f64; n * n];
        for i in 0..n {
            for j in 0..n {
                if a[i * n + j] != 0.0 {
                    norm[i * n + j] = a[i * n + j] / (deg[i] * deg[j]).sqrt();
                }
            }
        }
        PlayerGraph {
            n,
            adj: Tensor::from_vec(&[n, n], norm).unwrap(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn adjacency(&self) -> &Tensor {
        &self.adj
    }

    /// Largest-magnitude eigenvalue estimate via power iteration.
    pub fn spectral_radius(&self, iters: usize) -> f64 {
        let n = self.n;
        let mut v = vec![1.0 / (n as f64).sqrt(); n];
        let mut lambda = 0.0;
        for _ in 0..iters {
            let mut w = vec![0.0; n];
            for i in 0..n {
                for j in 0..n {
                    w[i] += self.adj.data()[i * n + j] * v[j];
                }
            }
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            lambda = norm;
            for x in &mut w {
                *x /= norm;
            }
            v = w;
        }
        lambda
    }
}

/// Fully connected graph with self-loops over `n` players, symmetrically
/// normalized. For the fully connected case every entry equals `1/n`.
pub fn normalized_adjacency(n: usize) -> PlayerGraph {
    let binary = vec![vec![true; n]; n];
    PlayerGraph::from_binary_adjacency(n, &binary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_node() {
        let g = normalized_adjacency(1);
        assert_eq!(g.adjacency().data(), &[1.0]);
    }

    #[test]
    fn two_nodes() {
        // A + I = all ones, D = 2I, so every normalized entry is 0.5.
        let g = normalized_adjacency(2);
        assert_eq!(g.adjacency().data(), &[0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn ten_nodes_uniform() {
        let g = normalized_adjacency(10);
        for &v in g.adjacency().data() {
            assert!((v - 0.1).abs() < 1e-15);
        }
        for i in 0..10 {
            let row: f64 = (0..10).map(|j| g.adjacency().at(&[i, j])).sum();
            assert!((row - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_nonnegative() {
        let g = normalized_adjacency(10);
        for i in 0..10 {
            for j in 0..10 {
                let a = g.adjacency().at(&[i, j]);
                assert!(a >= 0.0);
                assert!((a - g.adjacency().at(&[j, i])).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn spectral_radius_at_most_one() {
        for n in [1, 2, 3, 10] {
            let g = normalized_adjacency(n);
            let r = g.spectral_radius(200);
            assert!(r <= 1.0 + 1e-9, "n={n} radius={r}");
        }
        // Non-complete topology keeps the bound too.
        let ring: Vec<Vec<bool>> = (0..6)
            .map(|i| (0..6).map(|j| (i + 1) % 6 == j || (j + 1) % 6 == i).collect())
            .collect();
        let g = PlayerGraph::from_binary_adjacency(6, &ring);
        assert!(g.spectral_radius(300) <= 1.0 + 1e-9);
    }
}
