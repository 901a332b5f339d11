/// Complete binary tree of nonnegative leaf weights. Internal nodes are
/// always recomputed as the sum of their children, so the root never drifts
/// away from the leaf total.
#[derive(Debug, Clone)]
pub(crate) struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub(crate) fn new(weights: &[f64]) -> Self {
        let leaves = weights.len().max(1).next_power_of_two();
        let mut nodes = vec![0.0; 2 * leaves];
        nodes[leaves..leaves + weights.len()].copy_from_slice(weights);
        for i in (1..leaves).rev() {
            nodes[i] = nodes[2 * i] + nodes[2 * i + 1];
        }
        Self { leaves, nodes }
    }

    #[inline]
    pub(crate) fn total(&self) -> f64 {
        self.nodes[1]
    }

    #[inline]
    pub(crate) fn get(&self, i: usize) -> f64 {
        self.nodes[self.leaves + i]
    }

    #[inline]
    pub(crate) fn set(&mut self, i: usize, w: f64) {
        let mut j = self.leaves + i;
        self.nodes[j] = w;
        while j > 1 {
            j /= 2;
            self.nodes[j] = self.nodes[2 * j] + self.nodes[2 * j + 1];
        }
    }

    /// Leaf `i` with `Σ_{j<i} w_j <= u < Σ_{j<=i} w_j`, for `u` in `[0, total)`.
    #[inline]
    pub(crate) fn find(&self, mut u: f64) -> usize {
        let mut j = 1;
        while j < self.leaves {
            let left = self.nodes[2 * j];
            if u < left {
                j *= 2;
            } else {
                u -= left;
                j = 2 * j + 1;
            }
        }
        // rounding can walk into a zero-weight leaf at the far right
        let mut i = j - self.leaves;
        while self.get(i) == 0.0 && i > 0 {
            i -= 1;
        }
        i
    }
}
