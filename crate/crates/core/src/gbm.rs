//! Gradient-boosted regression trees under the pinball (quantile) loss.
//!
//! Each round fits a depth-limited tree to the negative loss gradient by variance reduction on
//! histogram-binned features, then replaces every leaf value with the `alpha`-quantile of the
//! current residuals in that leaf. The initial prediction is the `alpha`-quantile of the labels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{empirical_quantile, quantile_sorted};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbmParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    /// Histogram resolution per feature (at most 256).
    pub max_bins: usize,
}

impl Default for GbmParams {
    fn default() -> Self {
        GbmParams {
            n_trees: 200,
            max_depth: 3,
            learning_rate: 0.05,
            min_samples_leaf: 20,
            max_bins: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    /// Features used by at least one split.
    pub fn split_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { feature, .. } => Some(*feature),
            Node::Leaf { .. } => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileGbm {
    pub alpha: f64,
    pub n_features: usize,
    pub init: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
}

/// Per-feature cut points; bin `k` holds values in `(cuts[k-1], cuts[k]]`.
struct Binning {
    cuts: Vec<Vec<f64>>,
    /// Column-major bin indices for the sampled rows.
    bins: Vec<Vec<u8>>,
}

impl Binning {
    fn build(x: &[Vec<f64>], sample: &[usize], n_features: usize, max_bins: usize) -> Self {
        let max_bins = max_bins.clamp(2, 256);
        let mut cuts = Vec::with_capacity(n_features);
        let mut bins = Vec::with_capacity(n_features);
        for f in 0..n_features {
            let mut col: Vec<f64> = sample.iter().map(|&i| x[i][f]).collect();
            col.sort_by(f64::total_cmp);
            let mut uniq = col.clone();
            uniq.dedup();
            let c: Vec<f64> = if uniq.len() <= max_bins {
                uniq.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
            } else {
                let mut c: Vec<f64> = (1..max_bins)
                    .map(|k| quantile_sorted(&col, k as f64 / max_bins as f64))
                    .collect();
                c.dedup();
                // a cut equal to the maximum would leave an empty right side
                c.retain(|v| *v < uniq[uniq.len() - 1]);
                c
            };
            let b: Vec<u8> = sample
                .iter()
                .map(|&i| c.partition_point(|cut| x[i][f] > *cut) as u8)
                .collect();
            cuts.push(c);
            bins.push(b);
        }
        Binning { cuts, bins }
    }
}

struct Grower<'a> {
    binning: &'a Binning,
    grad: &'a [f64],
    params: &'a GbmParams,
}

struct BestSplit {
    feature: usize,
    bin: usize,
    gain: f64,
}

impl Grower<'_> {
    /// `rows` index into the sample (0..sample.len()).
    fn best_split(&self, rows: &[usize]) -> Option<BestSplit> {
        let n = rows.len();
        let min_leaf = self.params.min_samples_leaf.max(1);
        if n < 2 * min_leaf {
            return None;
        }
        let total: f64 = rows.iter().map(|&r| self.grad[r]).sum();
        let parent = total * total / n as f64;
        let mut best: Option<BestSplit> = None;
        let mut sum = [0.0f64; 256];
        let mut cnt = [0usize; 256];
        for (f, cuts) in self.binning.cuts.iter().enumerate() {
            if cuts.is_empty() {
                continue;
            }
            let nb = cuts.len() + 1;
            sum[..nb].fill(0.0);
            cnt[..nb].fill(0);
            let col = &self.binning.bins[f];
            for &r in rows {
                let b = col[r] as usize;
                sum[b] += self.grad[r];
                cnt[b] += 1;
            }
            let (mut gl, mut nl) = (0.0, 0usize);
            for k in 0..nb - 1 {
                gl += sum[k];
                nl += cnt[k];
                let nr = n - nl;
                if nl < min_leaf {
                    continue;
                }
                if nr < min_leaf {
                    break;
                }
                let gr = total - gl;
                let gain = gl * gl / nl as f64 + gr * gr / nr as f64 - parent;
                if gain > 1e-12 && best.as_ref().map_or(true, |b| gain > b.gain) {
                    best = Some(BestSplit {
                        feature: f,
                        bin: k,
                        gain,
                    });
                }
            }
        }
        best
    }

    /// Grows a tree; returns it with each leaf's member rows (in node order).
    fn grow(&self, rows: Vec<usize>) -> (Vec<Node>, Vec<(usize, Vec<usize>)>) {
        let mut nodes = vec![Node::Leaf { value: 0.0 }];
        let mut leaves = Vec::new();
        let mut stack = vec![(0usize, rows, 0usize)];
        while let Some((id, rows, depth)) = stack.pop() {
            let split = if depth < self.params.max_depth {
                self.best_split(&rows)
            } else {
                None
            };
            match split {
                None => leaves.push((id, rows)),
                Some(s) => {
                    let col = &self.binning.bins[s.feature];
                    let (l, r): (Vec<usize>, Vec<usize>) =
                        rows.into_iter().partition(|&i| (col[i] as usize) <= s.bin);
                    let left = nodes.len();
                    nodes.push(Node::Leaf { value: 0.0 });
                    nodes.push(Node::Leaf { value: 0.0 });
                    nodes[id] = Node::Split {
                        feature: s.feature,
                        threshold: self.binning.cuts[s.feature][s.bin],
                        left,
                        right: left + 1,
                    };
                    stack.push((left + 1, r, depth + 1));
                    stack.push((left, l, depth + 1));
                }
            }
        }
        (nodes, leaves)
    }
}

impl QuantileGbm {
    /// Fits on the rows listed in `sample` (repeats allowed, as produced by a bootstrap).
    pub fn fit(
        x: &[Vec<f64>],
        y: &[f64],
        sample: &[usize],
        alpha: f64,
        params: &GbmParams,
    ) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::Fit("empty training sample".into()));
        }
        if !(0.0..1.0).contains(&alpha) || alpha == 0.0 {
            return Err(Error::Fit(format!("alpha {alpha} outside (0, 1)")));
        }
        let n_features = x[sample[0]].len();
        if sample.iter().any(|&i| x[i].len() != n_features) {
            return Err(Error::Fit("ragged feature matrix".into()));
        }
        let ys: Vec<f64> = sample.iter().map(|&i| y[i]).collect();
        if ys.iter().any(|v| !v.is_finite()) {
            return Err(Error::Fit("non-finite label".into()));
        }
        let init = empirical_quantile(&ys, alpha)?;
        let binning = Binning::build(x, sample, n_features, params.max_bins);

        let n = sample.len();
        let mut pred = vec![init; n];
        let mut grad = vec![0.0; n];
        let mut trees = Vec::with_capacity(params.n_trees);
        for _ in 0..params.n_trees {
            for i in 0..n {
                grad[i] = if ys[i] > pred[i] { alpha } else { alpha - 1.0 };
            }
            let grower = Grower {
                binning: &binning,
                grad: &grad,
                params,
            };
            let (mut nodes, leaves) = grower.grow((0..n).collect());
            for (id, rows) in leaves {
                let mut resid: Vec<f64> = rows.iter().map(|&r| ys[r] - pred[r]).collect();
                resid.sort_by(f64::total_cmp);
                let value = quantile_sorted(&resid, alpha);
                nodes[id] = Node::Leaf { value };
                let step = params.learning_rate * value;
                for &r in &rows {
                    pred[r] += step;
                }
            }
            trees.push(Tree { nodes });
        }
        Ok(QuantileGbm {
            alpha,
            n_features,
            init,
            learning_rate: params.learning_rate,
            trees,
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::FeatureMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        let boost: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        Ok(self.init + self.learning_rate * boost)
    }

    pub fn used_features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self.trees.iter().flat_map(|t| t.split_features()).collect();
        f.sort_unstable();
        f.dedup();
        f
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_label_is_reproduced() {
        let x: Vec<Vec<f64>> = (0..600).map(|i| vec![i as f64, (i % 7) as f64]).collect();
        let y = vec![-0.02; 600];
        let sample: Vec<usize> = (0..600).collect();
        let m = QuantileGbm::fit(&x, &y, &sample, 0.05, &GbmParams::default()).unwrap();
        for probe in [vec![0.0, 0.0], vec![599.0, 6.0], vec![-1e9, 1e9]] {
            assert!((m.predict(&probe).unwrap() + 0.02).abs() < 1e-12);
        }
    }

    #[test]
    fn wrong_width_is_rejected() {
        let x: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let sample: Vec<usize> = (0..50).collect();
        let m = QuantileGbm::fit(&x, &y, &sample, 0.5, &GbmParams::default()).unwrap();
        assert!(matches!(
            m.predict(&[1.0, 2.0]),
            Err(Error::FeatureMismatch { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn in_sample_coverage_close_to_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 4000;
        let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(0.0..1.0)]).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|r| (0.5 + r[0]) * rng.random_range(-1.0..1.0))
            .collect();
        let sample: Vec<usize> = (0..n).collect();
        let m = QuantileGbm::fit(&x, &y, &sample, 0.1, &GbmParams::default()).unwrap();
        let below = (0..n)
            .filter(|&i| y[i] < m.predict(&x[i]).unwrap())
            .count();
        let rate = below as f64 / n as f64;
        assert!((rate - 0.1).abs() < 0.02, "rate {rate}");
    }

    #[test]
    fn constant_column_is_never_split() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<Vec<f64>> = (0..1000)
            .map(|_| vec![rng.random_range(0.0..1.0), 3.0])
            .collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] + rng.random_range(0.0..0.1)).collect();
        let sample: Vec<usize> = (0..1000).collect();
        let m = QuantileGbm::fit(&x, &y, &sample, 0.05, &GbmParams::default()).unwrap();
        assert_eq!(m.used_features(), vec![0]);
        let a = m.predict(&[0.4, 3.0]).unwrap();
        let b = m.predict(&[0.4, -100.0]).unwrap();
        assert_eq!(a, b);
    }
}
