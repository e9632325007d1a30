use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::ActionError;

/// Default occurrence count at which a lone repeating event counts as
/// "repeating a large number of times".
pub const DEFAULT_REPEAT_THRESHOLD: usize = 3;

/// Repetition shape of the event multiset emitted by one transaction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    /// Every event occurs once.
    UniqueEvents,
    /// Every event occurs exactly k ≥ 2 times.
    AllRepeatK,
    /// Every event occurs k ≥ 2 times except one bulk event occurring once.
    AllRepeatKPlusBulk,
    /// One event occurs at least the repeat threshold, the rest once.
    OneRepeatsRestOnce,
    Mixed,
}

impl PatternKind {
    pub const ALL: [PatternKind; 5] = [
        PatternKind::UniqueEvents,
        PatternKind::AllRepeatK,
        PatternKind::AllRepeatKPlusBulk,
        PatternKind::OneRepeatsRestOnce,
        PatternKind::Mixed,
    ];
}

fn counts<S: AsRef<str>>(names: &[S]) -> BTreeMap<&str, usize> {
    let mut out = BTreeMap::new();
    for n in names {
        *out.entry(n.as_ref()).or_insert(0) += 1;
    }
    out
}

/// Classify an event-name multiset. Rules are tried in declaration order of
/// [`PatternKind`]; the first that matches wins.
pub fn match_pattern<S: AsRef<str>>(names: &[S], repeat_threshold: usize) -> Result<PatternKind, ActionError> {
    if names.is_empty() {
        return Err(ActionError::EmptySequence);
    }
    let c: Vec<usize> = counts(names).into_values().collect();

    if c.iter().all(|&n| n == 1) {
        return Ok(PatternKind::UniqueEvents);
    }
    let k = c[0];
    if k >= 2 && c.iter().all(|&n| n == k) {
        return Ok(PatternKind::AllRepeatK);
    }

    let singles = c.iter().filter(|&&n| n == 1).count();
    let rest: Vec<usize> = c.iter().copied().filter(|&n| n != 1).collect();
    if singles == 1 && !rest.is_empty() && rest.iter().all(|&n| n == rest[0]) && rest[0] >= 2 {
        return Ok(PatternKind::AllRepeatKPlusBulk);
    }
    if rest.len() == 1 && rest[0] >= repeat_threshold {
        return Ok(PatternKind::OneRepeatsRestOnce);
    }
    Ok(PatternKind::Mixed)
}

fn distinct_in_order<S: AsRef<str>>(names: &[S]) -> Vec<&str> {
    let mut seen = HashSet::new();
    names
        .iter()
        .map(AsRef::as_ref)
        .filter(|n| seen.insert(*n))
        .collect()
}

/// Reduce an ordered event-name list to the canonical list of its action.
///
/// Repeating chunks collapse to one copy in first-occurrence order, a bulk
/// event is appended after its chunk, a lone repeating event is kept once,
/// and unique or mixed lists are kept whole.
pub fn get_events<S: AsRef<str>>(
    names: &[S],
    pattern: PatternKind,
    repeat_threshold: usize,
) -> Result<Vec<String>, ActionError> {
    let actual = match_pattern(names, repeat_threshold)?;
    if actual != pattern {
        return Err(ActionError::PatternMismatch {
            expected: pattern,
            actual,
        });
    }
    let own = |v: Vec<&str>| v.into_iter().map(str::to_string).collect();
    Ok(match pattern {
        PatternKind::UniqueEvents | PatternKind::Mixed => names.iter().map(|n| n.as_ref().to_string()).collect(),
        PatternKind::AllRepeatK | PatternKind::OneRepeatsRestOnce => own(distinct_in_order(names)),
        PatternKind::AllRepeatKPlusBulk => {
            let c = counts(names);
            let (chunk, bulk): (Vec<&str>, Vec<&str>) =
                distinct_in_order(names).into_iter().partition(|n| c[n] > 1);
            own(chunk.into_iter().chain(bulk).collect())
        }
    })
}

/// Classify and reduce in one step.
pub fn reduce_events<S: AsRef<str>>(names: &[S], repeat_threshold: usize) -> Result<(PatternKind, Vec<String>), ActionError> {
    let pattern = match_pattern(names, repeat_threshold)?;
    Ok((pattern, get_events(names, pattern, repeat_threshold)?))
}
