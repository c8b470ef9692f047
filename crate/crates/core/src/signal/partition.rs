use alloc::format;
use alloc::vec::Vec;

use super::ProcessedTrial;
use crate::error::{Error, Result};
use crate::real::Real;

/// Trials per (subject, scenario) group needed for the cross-trial split.
pub const MIN_CROSS_TRIALS: usize = 16;
pub const CROSS_TRAIN_TRIALS: usize = 10;
pub const CROSS_TEST_TRIALS: usize = 4;

/// Contiguous 8:1 split: the first `floor(8 M / 9)` samples train, the
/// rest validate.
pub fn partition_within_trial<F: Real>(
    trial: &ProcessedTrial<F>,
) -> (ProcessedTrial<F>, ProcessedTrial<F>) {
    let m = trial.len();
    let cut = m * 8 / 9;
    (trial.slice_rows(0, cut), trial.slice_rows(cut, m))
}

#[derive(Debug, Clone)]
pub struct CrossTrialSplit<'a, F> {
    pub train: Vec<&'a ProcessedTrial<F>>,
    pub val: Vec<&'a ProcessedTrial<F>>,
    pub test: Vec<&'a ProcessedTrial<F>>,
}

/// Splits one (subject, scenario) group by trial index: the first ten
/// trials train, the last four test and any in between validate.
pub fn partition_cross_trial<F: Real>(
    trials: &[ProcessedTrial<F>],
) -> Result<CrossTrialSplit<'_, F>> {
    let Some(first) = trials.first() else {
        return Err(Error::invalid("cross-trial split of an empty trial group"));
    };
    let (subject, scenario) = (first.meta.subject, first.meta.scenario);
    if let Some(t) = trials
        .iter()
        .find(|t| t.meta.subject != subject || t.meta.scenario != scenario)
    {
        return Err(Error::invalid(format!(
            "cross-trial group mixes subject {subject} ({scenario}) with subject {} ({})",
            t.meta.subject, t.meta.scenario
        )));
    }
    if trials.len() < MIN_CROSS_TRIALS {
        return Err(Error::invalid(format!(
            "subject {subject} ({scenario}) has {} trials, cross-trial split needs {MIN_CROSS_TRIALS}",
            trials.len()
        )));
    }
    let mut sorted: Vec<&ProcessedTrial<F>> = trials.iter().collect();
    sorted.sort_by_key(|t| t.meta.trial);
    if sorted
        .windows(2)
        .any(|p| p[0].meta.trial == p[1].meta.trial)
    {
        return Err(Error::invalid(format!(
            "subject {subject} ({scenario}) has duplicate trial indices"
        )));
    }
    let n = sorted.len();
    let test = sorted.split_off(n - CROSS_TEST_TRIALS);
    let val = sorted.split_off(CROSS_TRAIN_TRIALS);
    Ok(CrossTrialSplit {
        train: sorted,
        val,
        test,
    })
}
