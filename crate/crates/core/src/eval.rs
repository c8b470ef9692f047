//! Decision rule, accuracy, the exact Wilcoxon signed-rank test and
//! per-method reports.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::data::Partition;
use crate::error::{Error, Result};
use crate::real::Real;

/// Largest sample size handled by exact enumeration.
pub const WILCOXON_MAX_N: usize = 20;
/// Differences (and gaps between absolute differences) at or below this are
/// treated as zero (respectively tied).
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Index of the larger probability; exact ties go to class 0.
pub fn decide<F: Real>(p: &[F]) -> u8 {
    u8::from(p[1] > p[0])
}

pub fn accuracy(decisions: &[u8], labels: &[u8]) -> Result<f64> {
    if decisions.len() != labels.len() {
        Error::check_dim("accuracy", "length", labels.len(), decisions.len())?;
    }
    if decisions.is_empty() {
        return Err(Error::invalid("accuracy of an empty decision list"));
    }
    let correct = decisions.iter().zip(labels).filter(|(d, l)| d == l).count();
    Ok(correct as f64 / decisions.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    pub p_value: f64,
    /// Rank sum of positive differences.
    pub w_plus: f64,
    pub w_minus: f64,
    /// Non-zero differences that entered the test.
    pub n_used: usize,
    /// Set when every difference was zero; `p_value` is then 1.
    pub degenerate: bool,
}

/// Average ranks (1-based) of `values`, ties within [`TIE_TOLERANCE`].
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && values[idx[j]] - values[idx[j - 1]] <= TIE_TOLERANCE {
            j += 1;
        }
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Exact two-sided Wilcoxon signed-rank test on paired samples.
///
/// Zero differences are dropped and tied magnitudes get average ranks. The
/// p-value is the null probability, over all equally likely sign
/// assignments of the ranks, that `min(W+, W-)` is at most its observed
/// value. Counts come from a subset-sum table over doubled ranks, which are
/// integers even with ties.
pub fn wilcoxon_signed_rank_exact(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        Error::check_dim("wilcoxon", "pairs", a.len(), b.len())?;
    }
    if a.is_empty() || a.len() > WILCOXON_MAX_N {
        return Err(Error::invalid(format!(
            "exact signed-rank test needs 1..={WILCOXON_MAX_N} pairs, got {}",
            a.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("signed-rank test input".into()));
    }
    let d: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| d.abs() > TIE_TOLERANCE)
        .collect();
    if d.is_empty() {
        return Ok(WilcoxonResult {
            p_value: 1.0,
            w_plus: 0.0,
            w_minus: 0.0,
            n_used: 0,
            degenerate: true,
        });
    }
    let mags: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks = average_ranks(&mags);
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let w_plus2: usize = doubled
        .iter()
        .zip(&d)
        .filter(|(_, v)| **v > 0.0)
        .map(|(r, _)| r)
        .sum();
    let observed = w_plus2.min(total - w_plus2);

    // counts[s]: sign assignments whose doubled positive rank sum is s
    let mut counts = vec![0u64; total + 1];
    counts[0] = 1;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] != 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let extreme: u64 = counts
        .iter()
        .enumerate()
        .filter(|&(s, _)| s <= observed || s >= total - observed)
        .map(|(_, c)| c)
        .sum();
    let p_value = (extreme as f64 / (1u64 << d.len()) as f64).min(1.0);
    Ok(WilcoxonResult {
        p_value,
        w_plus: w_plus2 as f64 / 2.0,
        w_minus: (total - w_plus2) as f64 / 2.0,
        n_used: d.len(),
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "**")]
    P01,
    #[serde(rename = "*")]
    P05,
    #[serde(rename = "ns")]
    NotSignificant,
}

impl Verdict {
    pub fn from_p(p: f64) -> Self {
        if p < 0.01 {
            Verdict::P01
        } else if p < 0.05 {
            Verdict::P05
        } else {
            Verdict::NotSignificant
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Verdict::P01 => "**",
            Verdict::P05 => "*",
            Verdict::NotSignificant => "ns",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Per-subject accuracies of one method under one partition strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: String,
    pub partition: Partition,
    /// `(subject, accuracy)` sorted by subject.
    pub subjects: Vec<(u32, f64)>,
}

impl RunReport {
    pub fn new(
        method: impl Into<String>,
        partition: Partition,
        mut subjects: Vec<(u32, f64)>,
    ) -> Result<Self> {
        subjects.sort_by_key(|s| s.0);
        if subjects.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::invalid("report lists a subject twice"));
        }
        if let Some((s, a)) = subjects.iter().find(|(_, a)| !(0.0..=1.0).contains(a)) {
            return Err(Error::invalid(format!(
                "subject {s}: accuracy {a} outside [0, 1]"
            )));
        }
        Ok(RunReport {
            method: method.into(),
            partition,
            subjects,
        })
    }

    pub fn accuracies(&self) -> Vec<f64> {
        self.subjects.iter().map(|s| s.1).collect()
    }

    pub fn mean(&self) -> f64 {
        mean(&self.accuracies())
    }

    /// Sample standard deviation over subjects.
    pub fn sd(&self) -> f64 {
        sample_sd(&self.accuracies())
    }
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Standard deviation with the `n - 1` denominator; 0 for fewer than two
/// values.
pub fn sample_sd(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub test: WilcoxonResult,
    pub verdict: Verdict,
}

/// Paired signed-rank comparison of two methods over the same subjects.
pub fn compare(a: &RunReport, b: &RunReport) -> Result<Comparison> {
    if a.partition != b.partition {
        return Err(Error::Consistency(format!(
            "cannot compare {} ({}) with {} ({})",
            a.method, a.partition, b.method, b.partition
        )));
    }
    let ids = |r: &RunReport| r.subjects.iter().map(|s| s.0).collect::<Vec<_>>();
    if ids(a) != ids(b) {
        return Err(Error::Consistency(format!(
            "{} covers subjects {:?} but {} covers {:?}",
            a.method,
            ids(a),
            b.method,
            ids(b)
        )));
    }
    let test = wilcoxon_signed_rank_exact(&a.accuracies(), &b.accuracies())?;
    Ok(Comparison {
        test,
        verdict: Verdict::from_p(test.p_value),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decision_rule() {
        assert_eq!(decide(&[0.9f64, 0.1]), 0);
        assert_eq!(decide(&[0.2f64, 0.8]), 1);
        assert_eq!(decide(&[0.5f64, 0.5]), 0);
    }

    #[test]
    fn accuracy_cases() {
        assert_eq!(accuracy(&[0, 1, 1], &[0, 1, 1]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 0, 0], &[0, 1, 1]).unwrap(), 0.0);
        assert_eq!(accuracy(&[0, 1, 1, 0], &[0, 1, 1, 1]).unwrap(), 0.75);
        assert!(accuracy(&[], &[]).is_err());
        assert!(accuracy(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn all_positive_eight() {
        let a: Vec<f64> = (1..=8).map(|i| 0.5 + 0.01 * i as f64).collect();
        let b = vec![0.5; 8];
        let r = wilcoxon_signed_rank_exact(&a, &b).unwrap();
        assert_eq!(r.p_value, 0.0078125);
        assert_eq!(r.w_plus, 36.0);
        assert_eq!(r.n_used, 8);
    }

    #[test]
    fn identical_is_degenerate() {
        let a = [0.7, 0.8, 0.9];
        let r = wilcoxon_signed_rank_exact(&a, &a).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert!(r.degenerate);
    }

    #[test]
    fn bad_sizes() {
        assert!(wilcoxon_signed_rank_exact(&[], &[]).is_err());
        assert!(wilcoxon_signed_rank_exact(&[1.0; 21], &[0.0; 21]).is_err());
        assert!(wilcoxon_signed_rank_exact(&[1.0; 3], &[0.0; 2]).is_err());
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), [3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn sd_uses_n_minus_one() {
        assert!((sample_sd(&[1.0, 2.0, 3.0, 4.0]) - 1.2909944487358056).abs() < 1e-15);
        assert_eq!(sample_sd(&[5.0]), 0.0);
    }

    fn report(method: &str, acc: &[f64]) -> RunReport {
        RunReport::new(
            method,
            Partition::WithinTrial,
            acc.iter()
                .enumerate()
                .map(|(i, &a)| (i as u32 + 1, a))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn compare_verdicts() {
        let base = [0.6, 0.62, 0.7, 0.55, 0.8, 0.66, 0.71, 0.59];
        let plus: Vec<f64> = base.iter().map(|a| a + 0.1).collect();
        let a = report("a", &base);
        let b = report("b", &plus);
        let same = compare(&a, &a).unwrap();
        assert_eq!(
            (same.verdict, same.test.p_value),
            (Verdict::NotSignificant, 1.0)
        );
        let c = compare(&b, &a).unwrap();
        assert_eq!(c.verdict, Verdict::P01);
        assert_eq!(c.test.p_value, 0.0078125);
        assert_eq!(compare(&a, &b).unwrap().test.p_value, c.test.p_value);
        let mut other = report("c", &base);
        other.partition = Partition::CrossTrial;
        assert!(compare(&a, &other).is_err());
        let short = report("d", &base[..7]);
        assert!(compare(&a, &short).is_err());
    }

    #[test]
    fn report_stats() {
        let r = report("m", &[0.5, 0.7]);
        assert!((r.mean() - 0.6).abs() < 1e-15);
        assert!((r.sd() - 0.1414213562373095).abs() < 1e-12);
        assert!(RunReport::new("x", Partition::CrossTrial, vec![(1, 1.2)]).is_err());
    }
}
