//! Paired nonparametric inference over GTC samples.
//!
//! * Wilcoxon signed-rank test on the paired differences `male − female`.
//!   Zero differences are dropped, tied magnitudes get mid-ranks, and `V` is
//!   the rank sum of the positive differences. Without ties and with at most
//!   [`EXACT_MAX_N`] non-zero differences the two-sided p-value comes from
//!   the exact null distribution; otherwise from the normal approximation
//!   with tie and continuity corrections.
//! * Vargha–Delaney `A` over all cross pairs of the two samples, reported
//!   raw: `A > 0.5` favours the male sample, `A < 0.5` the female one.
//! * Neutrality offset `Δ = |A − 0.5|` and the mono/multi difference
//!   `Δ_mono − Δ_multi`.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::corpus::{Gender, JobCategory};
use crate::error::{Error, Result};

/// Largest number of non-zero differences for which the exact distribution
/// is used automatically (tie-free samples only).
pub const EXACT_MAX_N: usize = 25;

/// Largest sample accepted by the exact distribution on request.
pub const EXACT_HARD_LIMIT: usize = 120;

pub const DEFAULT_ALPHA: f64 = 0.05;

// ---------------------------------------------------------------------------
// Samples
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl PairedSample {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::InvalidSample(format!(
                "paired samples differ in length ({} vs {})",
                x.len(),
                y.len()
            )));
        }
        if x.is_empty() {
            return Err(Error::InvalidSample("paired sample is empty".into()));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidSample("non-finite value in sample".into()));
        }
        Ok(PairedSample { x, y })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn swapped(&self) -> Self {
        PairedSample {
            x: self.y.clone(),
            y: self.x.clone(),
        }
    }
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank
// ---------------------------------------------------------------------------

/// A rank sum, stored doubled so mid-ranks stay integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct RankSum {
    twice: u64,
}

impl RankSum {
    pub fn from_twice(twice: u64) -> Self {
        RankSum { twice }
    }

    pub fn twice(self) -> u64 {
        self.twice
    }

    pub fn value(self) -> f64 {
        self.twice as f64 / 2.0
    }

    pub fn is_integral(self) -> bool {
        self.twice.is_multiple_of(2)
    }
}

impl fmt::Display for RankSum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integral() {
            write!(f, "{}", self.twice / 2)
        } else {
            write!(f, "{}.5", self.twice / 2)
        }
    }
}

impl Serialize for RankSum {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        if self.is_integral() {
            serializer.serialize_u64(self.twice / 2)
        } else {
            serializer.serialize_f64(self.value())
        }
    }
}

impl<'de> Deserialize<'de> for RankSum {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let v = f64::deserialize(deserializer)?;
        let twice = v * 2.0;
        if twice.is_nan() || twice < 0.0 || twice.fract() != 0.0 {
            return Err(serde::de::Error::custom(format!(
                "rank sum {v} is not a non-negative multiple of 0.5"
            )));
        }
        Ok(RankSum {
            twice: twice as u64,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PValueMethod {
    /// Exact when tie-free with at most [`EXACT_MAX_N`] non-zero differences,
    /// normal approximation otherwise.
    Auto,
    Exact,
    Normal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WilcoxonResult {
    pub v: RankSum,
    pub p_value: f64,
    pub n_nonzero: usize,
    pub n_zero: usize,
    pub has_ties: bool,
    /// Method actually used (`Exact` or `Normal`).
    pub method: PValueMethod,
}

/// Signed ranks after dropping zeros: doubled mid-ranks of `|d|` and whether
/// each difference is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedRanks {
    pub doubled_ranks: Vec<u64>,
    pub positive: Vec<bool>,
    pub n_zero: usize,
    /// Sizes of tie groups (only groups of two or more).
    pub tie_groups: Vec<usize>,
}

impl SignedRanks {
    pub fn from_differences(differences: &[f64]) -> Self {
        let mut nonzero: Vec<f64> = differences.iter().copied().filter(|d| *d != 0.0).collect();
        let n_zero = differences.len() - nonzero.len();
        nonzero.sort_by(|a, b| a.abs().total_cmp(&b.abs()));

        let mut doubled_ranks = Vec::with_capacity(nonzero.len());
        let mut tie_groups = Vec::new();
        let mut start = 0;
        while start < nonzero.len() {
            let mut end = start;
            while end + 1 < nonzero.len() && nonzero[end + 1].abs() == nonzero[start].abs() {
                end += 1;
            }
            // 1-based positions start+1..=end+1; doubled mid-rank is their sum.
            let doubled = (start + 1 + end + 1) as u64;
            doubled_ranks.extend(std::iter::repeat_n(doubled, end - start + 1));
            if end > start {
                tie_groups.push(end - start + 1);
            }
            start = end + 1;
        }
        let positive = nonzero.iter().map(|d| *d > 0.0).collect();
        SignedRanks {
            doubled_ranks,
            positive,
            n_zero,
            tie_groups,
        }
    }

    pub fn n(&self) -> usize {
        self.doubled_ranks.len()
    }

    pub fn has_ties(&self) -> bool {
        !self.tie_groups.is_empty()
    }

    pub fn v(&self) -> RankSum {
        RankSum::from_twice(
            self.doubled_ranks
                .iter()
                .zip(&self.positive)
                .filter(|(_, pos)| **pos)
                .map(|(r, _)| r)
                .sum(),
        )
    }
}

/// Null distribution of the doubled positive-rank sum: `counts[s]` is the
/// number of the `2^n` sign assignments whose doubled sum equals `s`.
pub fn signed_rank_counts(doubled_ranks: &[u64]) -> Vec<u128> {
    let total: u64 = doubled_ranks.iter().sum();
    let mut counts = vec![0u128; total as usize + 1];
    counts[0] = 1;
    let mut reach = 0usize;
    for &r in doubled_ranks {
        let r = r as usize;
        for s in (0..=reach).rev() {
            let c = counts[s];
            if c != 0 {
                counts[s + r] += c;
            }
        }
        reach += r;
    }
    counts
}

/// Exact two-sided p-value `min(1, 2·min(P(T ≤ v), P(T ≥ v)))` under the
/// permutation null, conditional on the observed (possibly tied) ranks.
pub fn exact_p_value(ranks: &SignedRanks) -> Result<f64> {
    let n = ranks.n();
    if n > EXACT_HARD_LIMIT {
        return Err(Error::InvalidSample(format!(
            "exact distribution limited to {EXACT_HARD_LIMIT} non-zero differences, got {n}"
        )));
    }
    let counts = signed_rank_counts(&ranks.doubled_ranks);
    let v = ranks.v().twice() as usize;
    let le: u128 = counts[..=v].iter().sum();
    let ge: u128 = counts[v..].iter().sum();
    let total = 2f64.powi(n as i32);
    Ok((2.0 * le.min(ge) as f64 / total).min(1.0))
}

/// Normal approximation with tie correction of the variance and a 0.5
/// continuity correction.
pub fn normal_p_value(ranks: &SignedRanks) -> f64 {
    let n = ranks.n() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let tie_term: f64 = ranks
        .tie_groups
        .iter()
        .map(|&t| {
            let t = t as f64;
            t * t * t - t
        })
        .sum();
    let variance = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if variance <= 0.0 {
        return 1.0;
    }
    let z = ((ranks.v().value() - mean).abs() - 0.5).max(0.0) / variance.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * normal.sf(z)).min(1.0)
}

pub fn wilcoxon_signed_rank(sample: &PairedSample) -> Result<WilcoxonResult> {
    wilcoxon_signed_rank_with(sample, PValueMethod::Auto)
}

pub fn wilcoxon_signed_rank_with(
    sample: &PairedSample,
    method: PValueMethod,
) -> Result<WilcoxonResult> {
    let differences: Vec<f64> = sample.x.iter().zip(&sample.y).map(|(a, b)| a - b).collect();
    let ranks = SignedRanks::from_differences(&differences);
    if ranks.n() == 0 {
        return Err(Error::DegenerateSample);
    }
    let method = match method {
        PValueMethod::Auto if !ranks.has_ties() && ranks.n() <= EXACT_MAX_N => PValueMethod::Exact,
        PValueMethod::Auto => PValueMethod::Normal,
        m => m,
    };
    let p_value = match method {
        PValueMethod::Exact => exact_p_value(&ranks)?,
        _ => normal_p_value(&ranks),
    };
    Ok(WilcoxonResult {
        v: ranks.v(),
        p_value,
        n_nonzero: ranks.n(),
        n_zero: ranks.n_zero,
        has_ties: ranks.has_ties(),
        method,
    })
}

// ---------------------------------------------------------------------------
// Vargha–Delaney A
// ---------------------------------------------------------------------------

/// Cross-pair counts: how many `(x_i, y_j)` have `x_i > y_j` and `x_i = y_j`.
pub fn dominance_counts(x: &[f64], y: &[f64]) -> (u64, u64) {
    let mut sorted = y.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut greater = 0u64;
    let mut equal = 0u64;
    for xi in x {
        let below = sorted.partition_point(|v| v < xi);
        let not_above = sorted.partition_point(|v| v <= xi);
        greater += below as u64;
        equal += (not_above - below) as u64;
    }
    (greater, equal)
}

/// `A = (#{x_i > y_j} + ½·#{x_i = y_j}) / (n·m)`.
pub fn vargha_delaney_a(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::InvalidSample(
            "Vargha–Delaney A needs two non-empty samples".into(),
        ));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidSample("non-finite value in sample".into()));
    }
    let (greater, equal) = dominance_counts(x, y);
    let den = 2 * x.len() as u64 * y.len() as u64;
    let num = 2 * greater + equal;
    // Evaluating the upper half as a complement makes A(y, x) == 1 − A(x, y)
    // hold bit for bit.
    if 2 * num > den {
        Ok(1.0 - (den - num) as f64 / den as f64)
    } else {
        Ok(num as f64 / den as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Magnitude {
    Negligible,
    Small,
    Medium,
    Large,
}

impl fmt::Display for Magnitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Magnitude::Negligible => "negligible",
            Magnitude::Small => "small",
            Magnitude::Medium => "medium",
            Magnitude::Large => "large",
        })
    }
}

/// Vargha–Delaney magnitude from the distance `|A − 0.5|`:
/// < 0.06 negligible, < 0.14 small, < 0.21 medium, else large.
pub fn magnitude_label(a_value: f64) -> Magnitude {
    let d = delta(a_value);
    if d < 0.06 {
        Magnitude::Negligible
    } else if d < 0.14 {
        Magnitude::Small
    } else if d < 0.21 {
        Magnitude::Medium
    } else {
        Magnitude::Large
    }
}

/// Neutrality offset `|A − 0.5|`.
pub fn delta(a_value: f64) -> f64 {
    (a_value - 0.5).abs()
}

// ---------------------------------------------------------------------------
// Category statistics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    MaleFavoring,
    FemaleFavoring,
    None,
}

impl Direction {
    pub fn from_effect(a_value: f64, p_value: f64, alpha: f64) -> Direction {
        if p_value < alpha && a_value > 0.5 {
            Direction::MaleFavoring
        } else if p_value < alpha && a_value < 0.5 {
            Direction::FemaleFavoring
        } else {
            Direction::None
        }
    }

    pub fn gender(self) -> Option<Gender> {
        match self {
            Direction::MaleFavoring => Some(Gender::Male),
            Direction::FemaleFavoring => Some(Gender::Female),
            Direction::None => None,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::MaleFavoring => "male-favoring",
            Direction::FemaleFavoring => "female-favoring",
            Direction::None => "none",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Stereotypical,
    Alternative,
    Neutral,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classification::Stereotypical => "stereotypical",
            Classification::Alternative => "alternative",
            Classification::Neutral => "neutral",
        })
    }
}

/// How zero differences are handled before ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZeroPolicy {
    /// Zeros are discarded (Wilcoxon's original treatment).
    Wilcox,
}

/// Test results for one (model, category). `n` is the number of non-zero
/// differences that entered the test; `n = 0` marks a degenerate sample
/// (all differences zero), reported with `V = 0` and `p = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryStatistics {
    pub category: JobCategory,
    pub n: usize,
    pub v_value: RankSum,
    pub p_value: f64,
    pub a_value: f64,
    pub magnitude: Magnitude,
    pub direction: Direction,
    pub classification: Classification,
}

impl CategoryStatistics {
    pub fn is_degenerate(&self) -> bool {
        self.n == 0
    }
}

/// Neutral when not significant or negligible; otherwise stereotypical when
/// the favoured gender matches the category's stereotype.
pub fn classify_category(
    stats: &CategoryStatistics,
    reference: JobCategory,
    alpha: f64,
) -> Classification {
    if stats.p_value >= alpha || stats.magnitude == Magnitude::Negligible {
        return Classification::Neutral;
    }
    match Direction::from_effect(stats.a_value, stats.p_value, alpha).gender() {
        Some(g) if g == reference.stereotypical_gender() => Classification::Stereotypical,
        Some(_) => Classification::Alternative,
        None => Classification::Neutral,
    }
}

/// Runs the full per-category protocol on male (`x`) and female (`y`) GTCs.
pub fn category_statistics(
    category: JobCategory,
    sample: &PairedSample,
    alpha: f64,
) -> Result<CategoryStatistics> {
    let a_value = vargha_delaney_a(sample.x(), sample.y())?;
    let (n, v_value, p_value) = match wilcoxon_signed_rank(sample) {
        Ok(w) => (w.n_nonzero, w.v, w.p_value),
        Err(Error::DegenerateSample) => (0, RankSum::default(), 1.0),
        Err(e) => return Err(e),
    };
    let mut stats = CategoryStatistics {
        category,
        n,
        v_value,
        p_value,
        a_value,
        magnitude: magnitude_label(a_value),
        direction: Direction::from_effect(a_value, p_value, alpha),
        classification: Classification::Neutral,
    };
    stats.classification = classify_category(&stats, category, alpha);
    Ok(stats)
}

/// One line of the statistics results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRecord {
    pub model_id: String,
    #[serde(flatten)]
    pub stats: CategoryStatistics,
    pub alpha: f64,
    pub zero_policy: ZeroPolicy,
}

// ---------------------------------------------------------------------------
// Monolingual vs multilingual
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaComparison {
    pub category: JobCategory,
    pub delta_mono: f64,
    pub delta_multi: f64,
    pub difference: f64,
}

/// `Δ_mono − Δ_multi`; positive means the multilingual model sits closer to
/// neutrality.
pub fn mono_multi_difference(
    category: JobCategory,
    delta_mono: f64,
    delta_multi: f64,
) -> Result<DeltaComparison> {
    for (name, d) in [("delta_mono", delta_mono), ("delta_multi", delta_multi)] {
        if !(0.0..=0.5).contains(&d) {
            return Err(Error::InvalidSample(format!(
                "{name} = {d} outside [0, 0.5]"
            )));
        }
    }
    Ok(DeltaComparison {
        category,
        delta_mono,
        delta_multi,
        difference: delta_mono - delta_multi,
    })
}

/// One delta row per job category from two models' statistics.
pub fn compare_statistics(
    mono: &[CategoryStatistics],
    multi: &[CategoryStatistics],
) -> Result<Vec<DeltaComparison>> {
    let find = |rows: &[CategoryStatistics], category: JobCategory, which: &str| {
        rows.iter()
            .find(|s| s.category == category)
            .map(|s| s.a_value)
            .ok_or_else(|| {
                Error::Validation(format!("{which} statistics lack category {category}"))
            })
    };
    JobCategory::ALL
        .into_iter()
        .map(|category| {
            let a_mono = find(mono, category, "monolingual")?;
            let a_multi = find(multi, category, "multilingual")?;
            mono_multi_difference(category, delta(a_mono), delta(a_multi))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force two-sided p over all 2^n sign assignments of the ranks.
    fn enumerate_p(differences: &[f64]) -> f64 {
        let ranks = SignedRanks::from_differences(differences);
        let n = ranks.n();
        let v = ranks.v().twice();
        let (mut le, mut ge) = (0u64, 0u64);
        for mask in 0u64..(1 << n) {
            let t: u64 = (0..n)
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| ranks.doubled_ranks[i])
                .sum();
            le += (t <= v) as u64;
            ge += (t >= v) as u64;
        }
        (2.0 * le.min(ge) as f64 / (1u64 << n) as f64).min(1.0)
    }

    fn sample(x: &[f64], y: &[f64]) -> PairedSample {
        PairedSample::new(x.to_vec(), y.to_vec()).unwrap()
    }

    #[test]
    fn eight_differences_match_enumeration() {
        let d = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, -8.0];
        let zeros = [0.0; 8];
        let w = wilcoxon_signed_rank(&sample(&d, &zeros)).unwrap();
        assert_eq!(w.method, PValueMethod::Exact);
        assert_eq!(w.v, RankSum::from_twice(56));
        // 2 * #{T <= 28} / 256 = 2 * 25 / 256 (frozen from enumerate_p).
        assert_eq!(enumerate_p(&d), 50.0 / 256.0);
        assert_eq!(w.p_value, 50.0 / 256.0);
    }

    #[test]
    fn saturated_sixty() {
        let x: Vec<f64> = (1..=60).map(|i| i as f64 / 100.0 + 0.5).collect();
        let y = vec![0.0; 60];
        let w = wilcoxon_signed_rank(&sample(&x, &y)).unwrap();
        assert_eq!(w.v.to_string(), "1830");
        assert_eq!(w.method, PValueMethod::Normal);
        assert!(w.p_value < 0.01);
    }

    #[test]
    fn identical_pairs_are_degenerate() {
        let x = [0.1, 0.2, 0.3];
        assert!(matches!(
            wilcoxon_signed_rank(&sample(&x, &x)),
            Err(Error::DegenerateSample)
        ));
    }

    #[test]
    fn ties_get_mid_ranks() {
        let ranks = SignedRanks::from_differences(&[1.0, -1.0, 2.0, 0.0, 3.0, 3.0]);
        assert_eq!(ranks.n_zero, 1);
        assert_eq!(ranks.doubled_ranks, vec![3, 3, 6, 9, 9]);
        assert_eq!(ranks.tie_groups, vec![2, 2]);
        assert_eq!(ranks.v(), RankSum::from_twice(3 + 6 + 9 + 9));
        assert_eq!(ranks.v().to_string(), "13.5");
    }

    #[test]
    fn tied_samples_use_normal_by_default() {
        let w =
            wilcoxon_signed_rank(&sample(&[2.0, 3.0, 1.0, 5.0], &[1.0, 2.0, 0.0, 1.0])).unwrap();
        assert!(w.has_ties);
        assert_eq!(w.method, PValueMethod::Normal);
    }

    #[test]
    fn distribution_counts_sum_to_two_to_the_n() {
        let counts = signed_rank_counts(&[2, 4, 6, 8]);
        assert_eq!(counts.iter().sum::<u128>(), 16);
        assert_eq!(counts[0], 1);
        assert_eq!(counts[20], 1);
    }

    #[test]
    fn sample_validation() {
        assert!(PairedSample::new(vec![1.0], vec![]).is_err());
        assert!(PairedSample::new(vec![], vec![]).is_err());
        assert!(PairedSample::new(vec![f64::NAN], vec![1.0]).is_err());
    }

    #[test]
    fn vargha_delaney_examples() {
        assert_eq!(vargha_delaney_a(&[1.0, 2.0], &[1.0, 3.0]).unwrap(), 0.375);
        assert_eq!(
            vargha_delaney_a(&[5.0, 6.0], &[1.0, 2.0, 3.0]).unwrap(),
            1.0
        );
        let x = [0.3, 0.1, 0.2, 0.2];
        assert_eq!(vargha_delaney_a(&x, &x).unwrap(), 0.5);
        assert!(vargha_delaney_a(&[], &[1.0]).is_err());
    }

    #[test]
    fn magnitude_thresholds() {
        assert_eq!(magnitude_label(0.50), Magnitude::Negligible);
        assert_eq!(magnitude_label(0.5), Magnitude::Negligible);
        assert_eq!(magnitude_label(0.98), Magnitude::Large);
        assert_eq!(magnitude_label(0.45), Magnitude::Negligible);
        assert_eq!(magnitude_label(0.37), Magnitude::Small);
        assert_eq!(magnitude_label(0.68), Magnitude::Medium);
        assert_eq!(magnitude_label(0.09), Magnitude::Large);
    }

    #[test]
    fn delta_examples() {
        assert_eq!(delta(1.0), 0.5);
        assert_eq!(delta(0.5), 0.0);
        assert!((delta(0.15) - 0.35).abs() < 1e-15);
    }

    #[test]
    fn difference_examples() {
        let stem = mono_multi_difference(JobCategory::Stem, 0.50, 0.45).unwrap();
        assert!((stem.difference - 0.05).abs() < 1e-12);
        let finance = mono_multi_difference(JobCategory::Finance, 0.47, 0.07).unwrap();
        assert!((finance.difference - 0.40).abs() < 1e-12);
        let equal = mono_multi_difference(JobCategory::Stem, 0.48, 0.48).unwrap();
        assert_eq!(equal.difference, 0.0);
        assert!(mono_multi_difference(JobCategory::Stem, 0.6, 0.1).is_err());
    }

    fn stats_with(category: JobCategory, a: f64, p: f64) -> CategoryStatistics {
        CategoryStatistics {
            category,
            n: 60,
            v_value: RankSum::default(),
            p_value: p,
            a_value: a,
            magnitude: magnitude_label(a),
            direction: Direction::from_effect(a, p, DEFAULT_ALPHA),
            classification: Classification::Neutral,
        }
    }

    #[test]
    fn classification_examples() {
        let stem = stats_with(JobCategory::Stem, 1.0, 0.001);
        assert_eq!(
            classify_category(&stem, JobCategory::Stem, DEFAULT_ALPHA),
            Classification::Stereotypical
        );
        let sm = stats_with(JobCategory::ServiceManagement, 0.91, 0.001);
        assert_eq!(
            classify_category(&sm, JobCategory::ServiceManagement, DEFAULT_ALPHA),
            Classification::Alternative
        );
        let sports = stats_with(JobCategory::Sports, 0.50, 0.53);
        assert_eq!(
            classify_category(&sports, JobCategory::Sports, DEFAULT_ALPHA),
            Classification::Neutral
        );
        let fashion = stats_with(JobCategory::Fashion, 0.16, 0.001);
        assert_eq!(
            classify_category(&fashion, JobCategory::Fashion, DEFAULT_ALPHA),
            Classification::Stereotypical
        );
        let significant_but_negligible = stats_with(JobCategory::Finance, 0.53, 0.001);
        assert_eq!(
            classify_category(
                &significant_but_negligible,
                JobCategory::Finance,
                DEFAULT_ALPHA
            ),
            Classification::Neutral
        );
    }

    #[test]
    fn direction_rule() {
        assert_eq!(
            Direction::from_effect(0.9, 0.01, 0.05),
            Direction::MaleFavoring
        );
        assert_eq!(
            Direction::from_effect(0.1, 0.01, 0.05),
            Direction::FemaleFavoring
        );
        assert_eq!(Direction::from_effect(0.9, 0.05, 0.05), Direction::None);
        assert_eq!(Direction::from_effect(0.5, 0.01, 0.05), Direction::None);
    }

    #[test]
    fn degenerate_category_is_neutral() {
        let x = vec![0.2; 10];
        let stats = category_statistics(JobCategory::Finance, &sample(&x, &x), 0.05).unwrap();
        assert!(stats.is_degenerate());
        assert_eq!(stats.p_value, 1.0);
        assert_eq!(stats.a_value, 0.5);
        assert_eq!(stats.classification, Classification::Neutral);
    }

    #[test]
    fn stats_record_wire_shape() {
        let mut stats = stats_with(JobCategory::Stem, 1.0, 0.001);
        stats.v_value = RankSum::from_twice(3660);
        let record = StatsRecord {
            model_id: "m".into(),
            stats,
            alpha: 0.05,
            zero_policy: ZeroPolicy::Wilcox,
        };
        let json = serde_json::to_string(&record).unwrap();
        assert_eq!(
            json,
            r#"{"model_id":"m","category":"STEM","n":60,"v_value":1830,"p_value":0.001,"a_value":1.0,"magnitude":"large","direction":"male-favoring","classification":"neutral","alpha":0.05,"zero_policy":"wilcox"}"#
        );
        let back: StatsRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back, record);
        let half: RankSum = serde_json::from_str("13.5").unwrap();
        assert_eq!(half.twice(), 27);
        assert!(serde_json::from_str::<RankSum>("1.25").is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn small_int_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
            proptest::collection::vec((-20i32..=20).prop_map(f64::from), len)
        }

        fn paired() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
            (1usize..=12).prop_flat_map(|n| (small_int_vec(n), small_int_vec(n)))
        }

        proptest! {
            #[test]
            fn v_invariant_under_monotone_transform((x, y) in paired()) {
                let s = PairedSample::new(x.clone(), y.clone()).unwrap();
                let t = |v: &f64| (v / 7.0).exp();
                let tx: Vec<f64> = x.iter().map(t).collect();
                let ty: Vec<f64> = y.iter().map(t).collect();
                let st = PairedSample::new(tx, ty).unwrap();
                match (wilcoxon_signed_rank(&s), wilcoxon_signed_rank(&st)) {
                    (Ok(a), Ok(b)) => {
                        prop_assert_eq!(a.n_nonzero, b.n_nonzero);
                        // Signs are preserved; magnitudes may re-order, so
                        // only compare when the transform keeps |d| ordering,
                        // i.e. when all differences share one sign.
                        if x.iter().zip(&y).all(|(a, b)| a >= b) {
                            prop_assert_eq!(a.v, RankSum::from_twice((a.n_nonzero * (a.n_nonzero + 1)) as u64));
                            prop_assert_eq!(a.v, b.v);
                        }
                    }
                    (Err(_), Err(_)) => {}
                    _ => prop_assert!(false, "degeneracy changed under transform"),
                }
            }

            #[test]
            fn exact_matches_enumeration((x, y) in paired()) {
                let s = PairedSample::new(x.clone(), y.clone()).unwrap();
                if let Ok(w) = wilcoxon_signed_rank_with(&s, PValueMethod::Exact) {
                    let d: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
                    prop_assert_eq!(w.p_value, enumerate_p(&d));
                }
            }

            #[test]
            fn v_bounded((x, y) in paired()) {
                let s = PairedSample::new(x, y).unwrap();
                if let Ok(w) = wilcoxon_signed_rank(&s) {
                    let max = (w.n_nonzero * (w.n_nonzero + 1)) as u64;
                    prop_assert!(w.v.twice() <= max);
                    prop_assert!((0.0..=1.0).contains(&w.p_value));
                }
            }

            #[test]
            fn a_complements((x, y) in paired()) {
                let a = vargha_delaney_a(&x, &y).unwrap();
                let b = vargha_delaney_a(&y, &x).unwrap();
                prop_assert!(b == 1.0 - a || a == 1.0 - b);
                prop_assert!((a + b - 1.0).abs() <= 1e-12);
                prop_assert!((delta(a) - delta(b)).abs() <= 1e-12);
            }

            #[test]
            fn swapped_classification((x, y) in paired(), cat in 0usize..7) {
                let category = JobCategory::ALL[cat];
                let s = PairedSample::new(x, y).unwrap();
                let a = category_statistics(category, &s, DEFAULT_ALPHA).unwrap();
                let b = category_statistics(category, &s.swapped(), DEFAULT_ALPHA).unwrap();
                let expected = match a.classification {
                    Classification::Stereotypical => Classification::Alternative,
                    Classification::Alternative => Classification::Stereotypical,
                    Classification::Neutral => Classification::Neutral,
                };
                prop_assert_eq!(b.classification, expected);
            }
        }
    }
}
