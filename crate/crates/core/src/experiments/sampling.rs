use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probspace::ContrastiveProblem;
use crate::rng::{tags, Categorical, CounterRng};

/// Supervised sample: each anchor carries its own `m` negatives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScrlSample {
    pub anchors: Vec<usize>,
    pub positives: Vec<usize>,
    /// `negatives[i]` holds the `m` negatives of anchor `i`.
    pub negatives: Vec<Vec<usize>>,
    pub seed: u64,
}

/// Self-supervised sample: `n` positive pairs contrasted with one shared negative list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SscrlSample {
    pub anchors: Vec<usize>,
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
    pub seed: u64,
}

impl ScrlSample {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    /// Negatives per anchor (the `m` of the first anchor).
    pub fn negatives_per_anchor(&self) -> usize {
        self.negatives.first().map_or(0, Vec::len)
    }

    pub(crate) fn check_shape(&self, anchor_size: usize, item_size: usize) -> Result<()> {
        let n = self.anchors.len();
        if n == 0 || self.positives.len() != n || self.negatives.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{n} anchors, {} positives, {} negative lists",
                self.positives.len(),
                self.negatives.len()
            )));
        }
        let m = self.negatives[0].len();
        if m == 0 || self.negatives.iter().any(|row| row.len() != m) {
            return Err(Error::ShapeMismatch("negative lists must share one nonzero length".into()));
        }
        check_indices(&self.anchors, anchor_size)?;
        check_indices(&self.positives, item_size)?;
        for row in &self.negatives {
            check_indices(row, item_size)?;
        }
        Ok(())
    }
}

impl SscrlSample {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    /// The equivalent per-anchor sample in which every anchor reuses the shared list.
    pub fn to_scrl(&self) -> ScrlSample {
        ScrlSample {
            anchors: self.anchors.clone(),
            positives: self.positives.clone(),
            negatives: vec![self.negatives.clone(); self.anchors.len()],
            seed: self.seed,
        }
    }

    pub(crate) fn check_shape(&self, anchor_size: usize, item_size: usize) -> Result<()> {
        let n = self.anchors.len();
        if n == 0 || self.positives.len() != n || self.negatives.is_empty() {
            return Err(Error::ShapeMismatch(format!(
                "{n} anchors, {} positives, {} shared negatives",
                self.positives.len(),
                self.negatives.len()
            )));
        }
        check_indices(&self.anchors, anchor_size)?;
        check_indices(&self.positives, item_size)?;
        check_indices(&self.negatives, item_size)
    }
}

fn check_indices(indices: &[usize], size: usize) -> Result<()> {
    match indices.iter().find(|&&i| i >= size) {
        Some(i) => Err(Error::ShapeMismatch(format!("index {i} out of range for size {size}"))),
        None => Ok(()),
    }
}

/// Inverse-CDF samplers for every distribution in a problem.
pub(crate) struct ProblemSampler {
    anchor: Categorical,
    pos: Vec<Categorical>,
    neg: Vec<Categorical>,
}

impl ProblemSampler {
    pub(crate) fn new(problem: &ContrastiveProblem) -> Self {
        let nx = problem.anchor_size();
        Self {
            anchor: Categorical::new(problem.anchor_marginal()),
            pos: (0..nx).map(|x| Categorical::new(problem.pos_row(x))).collect(),
            neg: (0..nx).map(|x| Categorical::new(problem.neg_row(x))).collect(),
        }
    }

    /// One `(x, y⁺)` pair.
    pub(crate) fn pair(&self, rng: &mut CounterRng) -> (usize, usize) {
        let x = self.anchor.sample(rng);
        (x, self.pos[x].sample(rng))
    }

    pub(crate) fn negative(&self, x: usize, rng: &mut CounterRng) -> usize {
        self.neg[x].sample(rng)
    }
}

/// Draws an SCRL sample.
///
/// Pairs come from one stream and the negatives of anchor `i` from stream
/// `i + 1`, so a sample with more negatives extends a smaller one.
pub fn sample_scrl(problem: &ContrastiveProblem, n: usize, m: usize, seed: u64) -> Result<ScrlSample> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidArgument(format!("n and m must be positive, got n={n}, m={m}")));
    }
    let sampler = ProblemSampler::new(problem);
    let mut pair_rng = CounterRng::tagged(seed, tags::SCRL, 0);
    let mut anchors = Vec::with_capacity(n);
    let mut positives = Vec::with_capacity(n);
    let mut negatives = Vec::with_capacity(n);
    for i in 0..n {
        let (x, y) = sampler.pair(&mut pair_rng);
        let mut neg_rng = CounterRng::tagged(seed, tags::SCRL, i as u64 + 1);
        negatives.push((0..m).map(|_| sampler.negative(x, &mut neg_rng)).collect());
        anchors.push(x);
        positives.push(y);
    }
    Ok(ScrlSample {
        anchors,
        positives,
        negatives,
        seed,
    })
}

/// Draws an SSCRL sample; requires identical negative rows.
pub fn sample_sscrl(problem: &ContrastiveProblem, n: usize, m: usize, seed: u64) -> Result<SscrlSample> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidArgument(format!("n and m must be positive, got n={n}, m={m}")));
    }
    let spread = problem.negative_row_spread();
    if spread > 1e-12 {
        return Err(Error::HeterogeneousNegatives(spread));
    }
    let sampler = ProblemSampler::new(problem);
    let mut pair_rng = CounterRng::tagged(seed, tags::SSCRL, 0);
    let mut neg_rng = CounterRng::tagged(seed, tags::SSCRL, 1);
    let (anchors, positives) = (0..n).map(|_| sampler.pair(&mut pair_rng)).unzip();
    let negatives = (0..m).map(|_| sampler.negative(0, &mut neg_rng)).collect();
    Ok(SscrlSample {
        anchors,
        positives,
        negatives,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::Table;

    fn two_point() -> ContrastiveProblem {
        ContrastiveProblem::new(
            vec![1.0],
            Table::from_rows(&[[0.8, 0.2]]).unwrap(),
            Table::from_rows(&[[0.5, 0.5]]).unwrap(),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn point_masses_give_the_unique_sample() {
        let p = ContrastiveProblem::new(
            vec![0.0, 1.0],
            Table::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap(),
            Table::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap(),
            1.0,
        )
        .unwrap();
        let s = sample_scrl(&p, 4, 3, 9).unwrap();
        assert_eq!(s.anchors, vec![1; 4]);
        assert_eq!(s.positives, vec![1; 4]);
        assert!(s.negatives.iter().all(|row| row == &vec![1; 3]));
    }

    #[test]
    fn positive_frequency_within_binomial_band() {
        let s = sample_scrl(&two_point(), 10_000, 1, 5).unwrap();
        let freq = s.positives.iter().filter(|&&y| y == 0).count() as f64 / 1e4;
        assert!((freq - 0.8).abs() <= 0.012, "{freq}");
    }

    #[test]
    fn reproducible_and_prefix_nested() {
        let p = two_point();
        assert_eq!(sample_scrl(&p, 7, 5, 3).unwrap(), sample_scrl(&p, 7, 5, 3).unwrap());
        let small = sample_scrl(&p, 7, 5, 3).unwrap();
        let big = sample_scrl(&p, 7, 9, 3).unwrap();
        assert_eq!(small.positives, big.positives);
        for (a, b) in small.negatives.iter().zip(&big.negatives) {
            assert_eq!(a[..], b[..5]);
        }
        let small = sample_sscrl(&p, 4, 3, 1).unwrap();
        let big = sample_sscrl(&p, 4, 8, 1).unwrap();
        assert_eq!(small.negatives[..], big.negatives[..3]);
    }

    #[test]
    fn sscrl_requires_shared_negatives() {
        let p = ContrastiveProblem::new(
            vec![0.5, 0.5],
            Table::from_rows(&[[0.5, 0.5], [0.5, 0.5]]).unwrap(),
            Table::from_rows(&[[0.5, 0.5], [0.4, 0.6]]).unwrap(),
            1.0,
        )
        .unwrap();
        assert!(matches!(sample_sscrl(&p, 3, 2, 0), Err(Error::HeterogeneousNegatives(_))));
        let one = sample_sscrl(&two_point(), 1, 4, 2).unwrap();
        assert_eq!(one.to_scrl().negatives.len(), 1);
    }
}
