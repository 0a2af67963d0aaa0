use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probspace::ContrastiveProblem;
use crate::table::Table;

/// A scoring function `s(x, y)` on a finite anchor × item grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scorer {
    /// Explicit score matrix.
    Tabular { scores: Table },
    /// `s(x, y) = ⟨U_x, V_y⟩` with `U` of shape `|X|×d` and `V` of shape `|Y|×d`.
    LinearEmbed { anchors: Table, items: Table },
}

impl Scorer {
    pub fn tabular(scores: Table) -> Self {
        Scorer::Tabular { scores }
    }

    pub fn constant(anchor_size: usize, item_size: usize, value: f64) -> Self {
        Scorer::tabular(Table::filled(anchor_size, item_size, value))
    }

    pub fn linear_embed(anchors: Table, items: Table) -> Result<Self> {
        if anchors.cols() != items.cols() {
            return Err(Error::DimensionMismatch(format!(
                "anchor embeddings have width {}, item embeddings {}",
                anchors.cols(),
                items.cols()
            )));
        }
        Ok(Scorer::LinearEmbed { anchors, items })
    }

    /// Embedding form of a score matrix: `U = S`, `V = I`. Scores are preserved exactly.
    pub fn embed_tabular(scores: &Table) -> Self {
        let n = scores.cols();
        let identity = Table::from_fn(n, n, |r, c| if r == c { 1.0 } else { 0.0 });
        Scorer::LinearEmbed {
            anchors: scores.clone(),
            items: identity,
        }
    }

    pub fn anchor_size(&self) -> usize {
        match self {
            Scorer::Tabular { scores } => scores.rows(),
            Scorer::LinearEmbed { anchors, .. } => anchors.rows(),
        }
    }

    pub fn item_size(&self) -> usize {
        match self {
            Scorer::Tabular { scores } => scores.cols(),
            Scorer::LinearEmbed { items, .. } => items.rows(),
        }
    }

    pub fn score(&self, x: usize, y: usize) -> f64 {
        match self {
            Scorer::Tabular { scores } => scores.get(x, y),
            Scorer::LinearEmbed { anchors, items } => {
                anchors.row(x).iter().zip(items.row(y)).map(|(a, b)| a * b).sum()
            }
        }
    }

    /// `Δ(x, y, y′) = s(x, y′) − s(x, y)`.
    pub fn delta(&self, x: usize, y: usize, y_neg: usize) -> f64 {
        self.score(x, y_neg) - self.score(x, y)
    }

    /// Materialized score matrix.
    pub fn to_table(&self) -> Table {
        match self {
            Scorer::Tabular { scores } => scores.clone(),
            _ => Table::from_fn(self.anchor_size(), self.item_size(), |x, y| self.score(x, y)),
        }
    }

    /// `B = max |s(x, y)|`.
    pub fn bound(&self) -> f64 {
        match self {
            Scorer::Tabular { scores } => scores.max_abs(),
            _ => self.to_table().max_abs(),
        }
    }

    /// `s(x, y) + g(x)` as a tabular scorer.
    pub fn shifted(&self, gauge: &[f64]) -> Result<Scorer> {
        if gauge.len() != self.anchor_size() {
            return Err(Error::DimensionMismatch(format!(
                "gauge has {} entries for {} anchors",
                gauge.len(),
                self.anchor_size()
            )));
        }
        let t = self.to_table();
        Ok(Scorer::tabular(Table::from_fn(t.rows(), t.cols(), |x, y| t.get(x, y) + gauge[x])))
    }

    /// Ensures the scorer lives on the problem's grid and has finite scores.
    pub fn check_against(&self, problem: &ContrastiveProblem) -> Result<()> {
        self.check_shape(problem.anchor_size(), problem.item_size())
    }

    pub fn check_shape(&self, anchor_size: usize, item_size: usize) -> Result<()> {
        if self.anchor_size() != anchor_size || self.item_size() != item_size {
            return Err(Error::DimensionMismatch(format!(
                "scorer is {}x{}, problem is {anchor_size}x{item_size}",
                self.anchor_size(),
                self.item_size()
            )));
        }
        if let Scorer::Tabular { scores } = self {
            if let Some(v) = scores.as_slice().iter().find(|v| !v.is_finite()) {
                return Err(Error::NonFiniteInput(format!("score {v}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedding_round_trip_is_exact() {
        let s = Table::from_rows(&[[0.1, -2.5, 3.25], [1e-7, 4.0, -0.3]]).unwrap();
        let e = Scorer::embed_tabular(&s);
        assert_eq!(e.to_table(), s);
        assert_eq!(e.bound(), 4.0);
        assert_eq!(e.delta(0, 0, 1), -2.6);
    }

    #[test]
    fn shift_and_shape_checks() {
        let s = Scorer::constant(2, 3, 1.0);
        let t = s.shifted(&[0.5, -1.0]).unwrap().to_table();
        assert_eq!(t.row(1), &[0.0, 0.0, 0.0]);
        assert!(s.shifted(&[1.0]).is_err());
        assert!(s.check_shape(2, 4).is_err());
        assert!(Scorer::linear_embed(Table::zeros(2, 3), Table::zeros(4, 2)).is_err());
    }

    #[test]
    fn json_is_tagged() {
        let s = Scorer::constant(1, 2, 0.5);
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"{"kind":"tabular","scores":[[0.5,0.5]]}"#);
        assert_eq!(serde_json::from_str::<Scorer>(&json).unwrap(), s);
    }
}
