//! Finite anchor/item spaces and the contrastive problems built on them.
//!
//! A [`ContrastiveProblem`] holds the anchor marginal `p_X`, the per-anchor
//! positive conditionals `p_x^+` and negative conditionals `p_x^-`, and the
//! temperature `τ`. Constructors cover the supervised (labeled joint), the
//! self-supervised (pair joint with marginal negatives) and the multi-class
//! regimes. Every constructor funnels through the same validation, so a value
//! of this type always satisfies:
//!
//! - every probability vector is nonnegative and sums to 1 within `1e-12`;
//! - `p_x^-(y) > 0` wherever `p_x^+(y) > 0` (finite density ratio);
//! - `τ > 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{tags, CounterRng};
use crate::table::Table;

/// Input tolerance on row sums; anything within it is renormalized.
pub const INPUT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProblemDocument", into = "ProblemDocument")]
pub struct ContrastiveProblem {
    anchor_marginal: Vec<f64>,
    pos_cond: Table,
    neg_cond: Table,
    temperature: f64,
}

/// On-disk JSON layout of a problem; matrices are row-major arrays of rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDocument {
    pub anchor_marginal: Vec<f64>,
    pub pos_cond: Table,
    pub neg_cond: Table,
    pub temperature: f64,
}

impl TryFrom<ProblemDocument> for ContrastiveProblem {
    type Error = Error;

    fn try_from(doc: ProblemDocument) -> Result<Self> {
        ContrastiveProblem::new(doc.anchor_marginal, doc.pos_cond, doc.neg_cond, doc.temperature)
    }
}

impl From<ContrastiveProblem> for ProblemDocument {
    fn from(p: ContrastiveProblem) -> Self {
        ProblemDocument {
            anchor_marginal: p.anchor_marginal,
            pos_cond: p.pos_cond,
            neg_cond: p.neg_cond,
            temperature: p.temperature,
        }
    }
}

/// Checks a probability vector to [`INPUT_TOL`] and renormalizes it in place.
fn normalize_distribution(v: &mut [f64], what: &dyn Fn() -> String) -> Result<()> {
    let mut sum = 0.0;
    for p in v.iter_mut() {
        if !p.is_finite() {
            return Err(Error::NotADistribution(format!("{}: non-finite entry", what())));
        }
        if *p < 0.0 {
            if *p < -INPUT_TOL {
                return Err(Error::NotADistribution(format!("{}: negative entry {p}", what())));
            }
            *p = 0.0;
        }
        sum += *p;
    }
    if (sum - 1.0).abs() > INPUT_TOL {
        return Err(Error::NotADistribution(format!("{}: sums to {sum}", what())));
    }
    for p in v.iter_mut() {
        *p /= sum;
    }
    Ok(())
}

fn check_temperature(t: f64) -> Result<()> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidTemperature(t))
    }
}

/// Per-class positive rows `𝒟_c` and complement rows
/// `𝒟̄_c = Σ_{c′≠c} ρ(c′)𝒟_{c′} / (1 − ρ(c))`, both indexed by class.
///
/// No support check is made here; disjoint class supports give complements
/// that [`ContrastiveProblem::from_multiclass`] rejects as a support violation.
pub fn multiclass_conditionals(classes: &ClassStructure, class_cond: &Table) -> Result<(Table, Table)> {
    let c_count = classes.class_count();
    if class_cond.rows() != c_count {
        return Err(Error::DimensionMismatch(format!(
            "{c_count} classes but {} class-conditional rows",
            class_cond.rows()
        )));
    }
    let nx = class_cond.cols();
    let mut cond = class_cond.clone();
    for c in 0..c_count {
        normalize_distribution(cond.row_mut(c), &|| format!("class-conditional row {c}"))?;
    }
    let rho = classes.prior();
    let mut complements = Table::zeros(c_count, nx);
    for c in 0..c_count {
        if rho[c] >= 1.0 - 1e-12 {
            return Err(Error::DegenerateClassPrior(c));
        }
        for x in 0..nx {
            let mass: f64 = (0..c_count)
                .filter(|&k| k != c)
                .map(|k| rho[k] * cond.get(k, x))
                .sum();
            complements.set(c, x, mass / (1.0 - rho[c]));
        }
    }
    Ok((cond, complements))
}

impl ContrastiveProblem {
    /// Validates and builds a problem from its raw components.
    pub fn new(
        mut anchor_marginal: Vec<f64>,
        mut pos_cond: Table,
        mut neg_cond: Table,
        temperature: f64,
    ) -> Result<Self> {
        let nx = anchor_marginal.len();
        if nx == 0 {
            return Err(Error::DimensionMismatch("anchor space is empty".into()));
        }
        if pos_cond.rows() != nx || neg_cond.rows() != nx {
            return Err(Error::DimensionMismatch(format!(
                "{nx} anchors but conditionals have {} and {} rows",
                pos_cond.rows(),
                neg_cond.rows()
            )));
        }
        let ny = pos_cond.cols();
        if ny == 0 || neg_cond.cols() != ny {
            return Err(Error::DimensionMismatch(format!(
                "item counts differ or are zero: {ny} vs {}",
                neg_cond.cols()
            )));
        }
        check_temperature(temperature)?;
        normalize_distribution(&mut anchor_marginal, &|| "anchor marginal".into())?;
        for x in 0..nx {
            normalize_distribution(pos_cond.row_mut(x), &|| format!("positive row {x}"))?;
            normalize_distribution(neg_cond.row_mut(x), &|| format!("negative row {x}"))?;
            for y in 0..ny {
                if pos_cond.get(x, y) > 0.0 && neg_cond.get(x, y) == 0.0 {
                    return Err(Error::SupportViolation { anchor: x, item: y });
                }
            }
        }
        Ok(Self {
            anchor_marginal,
            pos_cond,
            neg_cond,
            temperature,
        })
    }

    /// Self-supervised construction: positives from `p(y|x)`, negatives from `p_Y`.
    pub fn from_joint(joint: &Table, temperature: f64) -> Result<Self> {
        check_temperature(temperature)?;
        let (nx, ny) = (joint.rows(), joint.cols());
        let mut total = 0.0;
        for &v in joint.as_slice() {
            if !v.is_finite() || v < -INPUT_TOL {
                return Err(Error::NotADistribution(format!("joint entry {v}")));
            }
            total += v.max(0.0);
        }
        if (total - 1.0).abs() > INPUT_TOL {
            return Err(Error::NotADistribution(format!("joint sums to {total}")));
        }
        let mut anchor_marginal = vec![0.0; nx];
        let mut item_marginal = vec![0.0; ny];
        let mut pos = Table::zeros(nx, ny);
        for x in 0..nx {
            let row: Vec<f64> = joint.row(x).iter().map(|v| v.max(0.0) / total).collect();
            let mass: f64 = row.iter().sum();
            if mass <= 0.0 {
                return Err(Error::ZeroMarginal(x));
            }
            anchor_marginal[x] = mass;
            for (y, &v) in row.iter().enumerate() {
                item_marginal[y] += v;
                pos.set(x, y, v / mass);
            }
        }
        let neg = Table::from_fn(nx, ny, |_, y| item_marginal[y]);
        Self::new(anchor_marginal, pos, neg, temperature)
    }

    /// Supervised construction from a joint over `(x, y, z)`.
    pub fn from_labeled(labeled: &LabeledJoint, temperature: f64) -> Result<Self> {
        check_temperature(temperature)?;
        let (nx, ny) = (labeled.positive.rows(), labeled.positive.cols());
        let mut anchor_marginal = vec![0.0; nx];
        let mut pos = Table::zeros(nx, ny);
        let mut neg = Table::zeros(nx, ny);
        for x in 0..nx {
            let pm: f64 = labeled.positive.row(x).iter().sum();
            let nm: f64 = labeled.negative.row(x).iter().sum();
            anchor_marginal[x] = pm + nm;
            if pm + nm == 0.0 {
                // Zero-mass anchor: rows are never weighted, fill uniformly.
                pos.row_mut(x).fill(1.0 / ny as f64);
                neg.row_mut(x).fill(1.0 / ny as f64);
                continue;
            }
            for y in 0..ny {
                pos.set(x, y, labeled.positive.get(x, y) / pm);
                neg.set(x, y, labeled.negative.get(x, y) / nm);
            }
        }
        Self::new(anchor_marginal, pos, neg, temperature)
    }

    /// Multi-class construction with `𝒴 = 𝒳`.
    ///
    /// `class_cond` holds the class-conditional input distributions `𝒟_c`
    /// (one row per class). Anchors are class-tagged inputs laid out as
    /// `a = c·|X| + x` with mass `ρ(c)·𝒟_c(x)`; an anchor of class `c` has
    /// positives `𝒟_c` and negatives `𝒟̄_c = Σ_{c'≠c} ρ(c')𝒟_{c'} / (1−ρ(c))`.
    pub fn from_multiclass(
        classes: &ClassStructure,
        class_cond: &Table,
        temperature: f64,
    ) -> Result<Self> {
        let c_count = classes.class_count();
        let nx = class_cond.cols();
        let (cond, complements) = multiclass_conditionals(classes, class_cond)?;
        let rho = classes.prior();
        let mut anchor_marginal = Vec::with_capacity(c_count * nx);
        let mut pos = Table::zeros(c_count * nx, nx);
        let mut neg = Table::zeros(c_count * nx, nx);
        for c in 0..c_count {
            for x in 0..nx {
                let a = c * nx + x;
                anchor_marginal.push(rho[c] * cond.get(c, x));
                pos.row_mut(a).copy_from_slice(cond.row(c));
                neg.row_mut(a).copy_from_slice(complements.row(c));
            }
        }
        Self::new(anchor_marginal, pos, neg, temperature)
    }

    /// Deterministic random instance with every probability entry at least `min_mass`.
    ///
    /// Rows are `min_mass + (1 − k·min_mass)·D` with `D` a flat Dirichlet draw;
    /// `τ` is log-uniform on `[0.1, 10]`.
    pub fn random(anchor_size: usize, item_size: usize, seed: u64, min_mass: f64) -> Result<Self> {
        if anchor_size == 0 || item_size == 0 {
            return Err(Error::DimensionMismatch("empty anchor or item space".into()));
        }
        if !(min_mass > 0.0) {
            return Err(Error::InvalidArgument(format!("min_mass must be positive, got {min_mass}")));
        }
        for size in [anchor_size, item_size] {
            if min_mass * size as f64 >= 1.0 {
                return Err(Error::InfeasibleFloor { min_mass, size });
            }
        }
        let mut rng = CounterRng::tagged(seed, tags::PROBLEM, 0);
        let anchor_marginal = floored_simplex(&mut rng, anchor_size, min_mass);
        let mut pos = Table::zeros(anchor_size, item_size);
        let mut neg = Table::zeros(anchor_size, item_size);
        for x in 0..anchor_size {
            pos.row_mut(x).copy_from_slice(&floored_simplex(&mut rng, item_size, min_mass));
            neg.row_mut(x).copy_from_slice(&floored_simplex(&mut rng, item_size, min_mass));
        }
        let temperature = (rng.uniform_in(0.1f64.ln(), 10f64.ln())).exp();
        Self::new(anchor_marginal, pos, neg, temperature)
    }

    pub fn anchor_size(&self) -> usize {
        self.anchor_marginal.len()
    }

    pub fn item_size(&self) -> usize {
        self.pos_cond.cols()
    }

    pub fn anchor_marginal(&self) -> &[f64] {
        &self.anchor_marginal
    }

    pub fn pos_cond(&self) -> &Table {
        &self.pos_cond
    }

    pub fn neg_cond(&self) -> &Table {
        &self.neg_cond
    }

    pub fn pos_row(&self, x: usize) -> &[f64] {
        self.pos_cond.row(x)
    }

    pub fn neg_row(&self, x: usize) -> &[f64] {
        self.neg_cond.row(x)
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    /// Same distributions under a different temperature.
    pub fn with_temperature(&self, temperature: f64) -> Result<Self> {
        check_temperature(temperature)?;
        Ok(Self {
            temperature,
            ..self.clone()
        })
    }

    /// `p_x^+(y) / p_x^-(y)` with `0/0 → 0`.
    pub fn density_ratio(&self, x: usize) -> Vec<f64> {
        self.pos_row(x)
            .iter()
            .zip(self.neg_row(x))
            .map(|(&p, &q)| if p == 0.0 { 0.0 } else { p / q })
            .collect()
    }

    /// Joint mass `p_X(x)·p_x^+(y)` as a table.
    pub fn positive_joint(&self) -> Table {
        Table::from_fn(self.anchor_size(), self.item_size(), |x, y| {
            self.anchor_marginal[x] * self.pos_cond.get(x, y)
        })
    }

    /// Largest deviation between any negative row and the first one.
    pub fn negative_row_spread(&self) -> f64 {
        let first = self.neg_row(0);
        (1..self.anchor_size())
            .flat_map(|x| self.neg_row(x).iter().zip(first).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    }
}

fn floored_simplex(rng: &mut CounterRng, k: usize, floor: f64) -> Vec<f64> {
    let draws: Vec<f64> = (0..k).map(|_| rng.exponential() + 1e-300).collect();
    let total: f64 = draws.iter().sum();
    let free = 1.0 - k as f64 * floor;
    draws.iter().map(|d| floor + free * d / total).collect()
}

/// Joint over `(x, y, z)` with `z ∈ {−1, +1}`, stored as two `|X|×|Y|` slices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LabeledDocument", into = "LabeledDocument")]
pub struct LabeledJoint {
    positive: Table,
    negative: Table,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledDocument {
    pub positive: Table,
    pub negative: Table,
}

impl TryFrom<LabeledDocument> for LabeledJoint {
    type Error = Error;
    fn try_from(d: LabeledDocument) -> Result<Self> {
        LabeledJoint::new(d.positive, d.negative)
    }
}

impl From<LabeledJoint> for LabeledDocument {
    fn from(l: LabeledJoint) -> Self {
        LabeledDocument {
            positive: l.positive,
            negative: l.negative,
        }
    }
}

impl LabeledJoint {
    /// `positive[x][y] = p(x, y, z=+1)`, `negative[x][y] = p(x, y, z=−1)`.
    pub fn new(positive: Table, negative: Table) -> Result<Self> {
        if positive.rows() != negative.rows() || positive.cols() != negative.cols() {
            return Err(Error::DimensionMismatch("label slices differ in shape".into()));
        }
        if positive.rows() == 0 || positive.cols() == 0 {
            return Err(Error::DimensionMismatch("empty labeled joint".into()));
        }
        let mut total = 0.0;
        for &v in positive.as_slice().iter().chain(negative.as_slice()) {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::NotADistribution(format!("labeled joint entry {v}")));
            }
            total += v;
        }
        if (total - 1.0).abs() > INPUT_TOL {
            return Err(Error::NotADistribution(format!("labeled joint sums to {total}")));
        }
        let (positive, negative) = (positive.map(|v| v / total), negative.map(|v| v / total));
        for x in 0..positive.rows() {
            let pm: f64 = positive.row(x).iter().sum();
            let nm: f64 = negative.row(x).iter().sum();
            if pm + nm > 0.0 {
                if pm == 0.0 {
                    return Err(Error::MissingLabelSlice { anchor: x, slice: "z=+1" });
                }
                if nm == 0.0 {
                    return Err(Error::MissingLabelSlice { anchor: x, slice: "z=-1" });
                }
            }
        }
        Ok(Self { positive, negative })
    }

    pub fn positive(&self) -> &Table {
        &self.positive
    }

    pub fn negative(&self) -> &Table {
        &self.negative
    }
}

/// Class prior, per-class item distributions and an optional item → class map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ClassDocument", into = "ClassDocument")]
pub struct ClassStructure {
    prior: Vec<f64>,
    item_dists: Table,
    label_map: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassDocument {
    pub prior: Vec<f64>,
    pub item_dists: Table,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_map: Option<Vec<usize>>,
}

impl TryFrom<ClassDocument> for ClassStructure {
    type Error = Error;
    fn try_from(d: ClassDocument) -> Result<Self> {
        ClassStructure::new(d.prior, d.item_dists, d.label_map)
    }
}

impl From<ClassStructure> for ClassDocument {
    fn from(c: ClassStructure) -> Self {
        ClassDocument {
            prior: c.prior,
            item_dists: c.item_dists,
            label_map: c.label_map,
        }
    }
}

impl ClassStructure {
    pub fn new(mut prior: Vec<f64>, mut item_dists: Table, label_map: Option<Vec<usize>>) -> Result<Self> {
        if prior.is_empty() || item_dists.rows() != prior.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} class priors but {} item distributions",
                prior.len(),
                item_dists.rows()
            )));
        }
        normalize_distribution(&mut prior, &|| "class prior".into())?;
        for c in 0..item_dists.rows() {
            normalize_distribution(item_dists.row_mut(c), &|| format!("item distribution of class {c}"))?;
        }
        if let Some(map) = &label_map {
            if map.len() != item_dists.cols() || map.iter().any(|&c| c >= prior.len()) {
                return Err(Error::DimensionMismatch("label map does not fit the item space".into()));
            }
        }
        Ok(Self {
            prior,
            item_dists,
            label_map,
        })
    }

    pub fn class_count(&self) -> usize {
        self.prior.len()
    }

    pub fn item_size(&self) -> usize {
        self.item_dists.cols()
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn item_dist(&self, c: usize) -> &[f64] {
        self.item_dists.row(c)
    }

    pub fn item_dists(&self) -> &Table {
        &self.item_dists
    }

    pub fn label_map(&self) -> Option<&[usize]> {
        self.label_map.as_deref()
    }
}
