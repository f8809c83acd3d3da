//! Convergent and divergent creativity scores over evaluation records.
//!
//! Everything is exact rational arithmetic; rounding is left to reporting.

use std::collections::BTreeMap;

use num::{BigInt, BigRational, One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ConstraintState, EvaluationRecord, TechniqueSet};

pub type Ratio = BigRational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("no instances at state {t}")]
    EmptyState { t: usize },
    #[error("no human technique profile for problem {problem_id}")]
    MissingProfile { problem_id: String },
    #[error("problem {problem_id} has {m} human solutions; at least 2 are needed")]
    MDeficient { problem_id: String, m: usize },
    #[error("no human technique profiles supplied")]
    NoProfiles,
}

/// Techniques found in each of a problem's human solutions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanTechniqueProfile {
    pub problem_id: String,
    pub solutions: Vec<TechniqueSet>,
}

impl HumanTechniqueProfile {
    pub fn new(problem_id: impl Into<String>, solutions: Vec<TechniqueSet>) -> Self {
        HumanTechniqueProfile {
            problem_id: problem_id.into(),
            solutions,
        }
    }

    pub fn m(&self) -> usize {
        self.solutions.len()
    }

    pub fn union(&self) -> TechniqueSet {
        self.solutions.iter().fold(TechniqueSet::empty(), |acc, s| acc.union(s))
    }

    /// Union of every solution except `held_out`.
    pub fn union_without(&self, held_out: usize) -> TechniqueSet {
        self.solutions
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != held_out)
            .fold(TechniqueSet::empty(), |acc, (_, s)| acc.union(s))
    }
}

pub type Profiles = BTreeMap<String, HumanTechniqueProfile>;

/// Indexes profiles by problem id.
pub fn index_profiles(profiles: impl IntoIterator<Item = HumanTechniqueProfile>) -> Profiles {
    profiles.into_iter().map(|p| (p.problem_id.clone(), p)).collect()
}

fn ratio(num: usize, den: usize) -> Ratio {
    Ratio::new(BigInt::from(num), BigInt::from(den))
}

fn indicator(b: bool) -> Ratio {
    if b {
        Ratio::one()
    } else {
        Ratio::zero()
    }
}

fn mean(values: impl IntoIterator<Item = Ratio>, t: usize) -> Result<Ratio, MetricsError> {
    let mut sum = Ratio::zero();
    let mut n = 0usize;
    for v in values {
        sum += v;
        n += 1;
    }
    if n == 0 {
        return Err(MetricsError::EmptyState { t });
    }
    Ok(sum / BigInt::from(n))
}

/// Records that belong to state `t`: exactly `t` denied techniques.
pub fn at_state(records: &[EvaluationRecord], t: usize) -> impl Iterator<Item = &EvaluationRecord> {
    records.iter().filter(move |r| r.constraint_state.constraints.len() == t)
}

/// Correct and free of every denied technique.
pub fn instance_convergent(record: &EvaluationRecord) -> Ratio {
    indicator(record.correct && record.constraint_free)
}

/// Share of detected techniques that no human solution used. Zero for an
/// empty detected set.
pub fn instance_divergent(detected: &TechniqueSet, human_union: &TechniqueSet) -> Ratio {
    if detected.is_empty() {
        return Ratio::zero();
    }
    ratio(detected.difference(human_union).len(), detected.len())
}

pub fn convergent_at(records: &[EvaluationRecord], t: usize) -> Result<Ratio, MetricsError> {
    mean(at_state(records, t).map(instance_convergent), t)
}

/// With one sample per instance this is the fraction of correct records.
pub fn pass_at_1(records: &[EvaluationRecord], t: usize) -> Result<Ratio, MetricsError> {
    mean(at_state(records, t).map(|r| indicator(r.correct)), t)
}

pub fn constraint_following(records: &[EvaluationRecord], t: usize) -> Result<Ratio, MetricsError> {
    mean(at_state(records, t).map(|r| indicator(r.constraint_free)), t)
}

pub fn divergent_at(records: &[EvaluationRecord], profiles: &Profiles, t: usize) -> Result<Ratio, MetricsError> {
    Scorer::new(profiles).divergent_at(records, t)
}

pub fn neogauge_at(records: &[EvaluationRecord], profiles: &Profiles, t: usize) -> Result<Ratio, MetricsError> {
    Scorer::new(profiles).neogauge_at(records, t)
}

pub fn cumulative_neogauge(records: &[EvaluationRecord], profiles: &Profiles, up_to_t: usize) -> Result<Ratio, MetricsError> {
    Scorer::new(profiles).cumulative_neogauge(records, up_to_t)
}

/// Share of (instance, human solution) pairs at state `t` where the human
/// solution avoids every denied technique. Human solutions count as correct.
pub fn human_convergent(profiles: &Profiles, states: &[ConstraintState], t: usize) -> Result<Ratio, MetricsError> {
    let mut values = Vec::new();
    for state in states.iter().filter(|s| s.constraints.len() == t) {
        let profile = lookup(profiles, &state.problem_id)?;
        let denied = state.constraint_set();
        values.extend(profile.solutions.iter().map(|s| indicator(s.is_disjoint(&denied))));
    }
    mean(values, t)
}

/// Mean over every human solution of the share of its techniques that no
/// other solution to the same problem used.
pub fn human_divergent(profiles: &Profiles) -> Result<Ratio, MetricsError> {
    if profiles.is_empty() {
        return Err(MetricsError::NoProfiles);
    }
    let mut values = Vec::new();
    for profile in profiles.values() {
        if profile.m() < 2 {
            return Err(MetricsError::MDeficient {
                problem_id: profile.problem_id.clone(),
                m: profile.m(),
            });
        }
        for (j, own) in profile.solutions.iter().enumerate() {
            values.push(instance_divergent(own, &profile.union_without(j)));
        }
    }
    mean(values, 0)
}

/// Index of the sample with the largest convergent-times-divergent product,
/// earliest on ties. `None` for no samples.
pub fn best_of_k_select(products: &[Ratio]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, p) in products.iter().enumerate() {
        if best.is_none_or(|b| p > &products[b]) {
            best = Some(i);
        }
    }
    best
}

fn lookup<'p>(profiles: &'p Profiles, problem_id: &str) -> Result<&'p HumanTechniqueProfile, MetricsError> {
    profiles.get(problem_id).ok_or_else(|| MetricsError::MissingProfile {
        problem_id: problem_id.to_string(),
    })
}

/// Profile-dependent scores, optionally ignoring some techniques (for
/// example the `misc` catch-all) on both sides of the divergence ratio.
#[derive(Debug, Clone)]
pub struct Scorer<'p> {
    profiles: &'p Profiles,
    ignore: TechniqueSet,
}

impl<'p> Scorer<'p> {
    pub fn new(profiles: &'p Profiles) -> Self {
        Scorer {
            profiles,
            ignore: TechniqueSet::empty(),
        }
    }

    pub fn ignoring(mut self, techniques: TechniqueSet) -> Self {
        self.ignore = techniques;
        self
    }

    pub fn profiles(&self) -> &'p Profiles {
        self.profiles
    }

    pub fn record_divergent(&self, record: &EvaluationRecord) -> Result<Ratio, MetricsError> {
        let profile = lookup(self.profiles, record.problem_id())?;
        let detected = record.detected.difference(&self.ignore);
        Ok(instance_divergent(&detected, &profile.union().difference(&self.ignore)))
    }

    pub fn record_neogauge(&self, record: &EvaluationRecord) -> Result<Ratio, MetricsError> {
        let convergent = instance_convergent(record);
        if convergent.is_zero() {
            // Still require the profile so missing data is never masked.
            lookup(self.profiles, record.problem_id())?;
            return Ok(convergent);
        }
        Ok(convergent * self.record_divergent(record)?)
    }

    pub fn divergent_at(&self, records: &[EvaluationRecord], t: usize) -> Result<Ratio, MetricsError> {
        let values = at_state(records, t).map(|r| self.record_divergent(r)).collect::<Result<Vec<_>, _>>()?;
        mean(values, t)
    }

    pub fn neogauge_at(&self, records: &[EvaluationRecord], t: usize) -> Result<Ratio, MetricsError> {
        let values = at_state(records, t).map(|r| self.record_neogauge(r)).collect::<Result<Vec<_>, _>>()?;
        mean(values, t)
    }

    /// Running sum of per-state NeoGauge over `0..=up_to_t`; empty states
    /// add nothing.
    pub fn cumulative_neogauge(&self, records: &[EvaluationRecord], up_to_t: usize) -> Result<Ratio, MetricsError> {
        let mut total = Ratio::zero();
        for t in 0..=up_to_t {
            match self.neogauge_at(records, t) {
                Ok(v) => total += v,
                Err(MetricsError::EmptyState { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(total)
    }

    /// Reduces every sampling group to its best record. Untagged records
    /// pass through; output keeps first-appearance order.
    pub fn select_best_of_k(&self, records: &[EvaluationRecord]) -> Result<Vec<EvaluationRecord>, MetricsError> {
        let mut order: Vec<Option<&str>> = Vec::new();
        let mut groups: BTreeMap<&str, Vec<&EvaluationRecord>> = BTreeMap::new();
        for record in records {
            match &record.sample {
                Some(tag) => {
                    let members = groups.entry(tag.group.as_str()).or_default();
                    if members.is_empty() {
                        order.push(Some(tag.group.as_str()));
                    }
                    members.push(record);
                }
                None => order.push(None),
            }
        }
        let mut untagged = records.iter().filter(|r| r.sample.is_none());
        let mut out = Vec::with_capacity(order.len());
        for slot in order {
            match slot {
                None => out.push(untagged.next().expect("counted above").clone()),
                Some(group) => {
                    let mut members = groups[group].clone();
                    members.sort_by_key(|r| r.sample.as_ref().map(|s| s.index));
                    let products = members.iter().map(|r| self.record_neogauge(r)).collect::<Result<Vec<_>, _>>()?;
                    let best = best_of_k_select(&products).expect("groups are non-empty");
                    out.push(members[best].clone());
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Solution, Technique};

    fn set(items: &[Technique]) -> TechniqueSet {
        items.iter().collect()
    }

    fn record(problem: &str, denied: &[Technique], detected: &[Technique], correct: bool) -> EvaluationRecord {
        let state = ConstraintState::new(problem, denied.to_vec()).unwrap();
        let solution = Solution::extracted(String::new(), String::new(), "stub");
        EvaluationRecord::new(state, solution, set(detected), correct)
    }

    fn r(n: i64, d: i64) -> Ratio {
        Ratio::new(n.into(), d.into())
    }

    fn profiles(entries: &[(&str, Vec<TechniqueSet>)]) -> Profiles {
        index_profiles(entries.iter().map(|(id, sets)| HumanTechniqueProfile::new(*id, sets.clone())))
    }

    #[test]
    fn worked_example_ratio_is_one_third() {
        use Technique as T;
        let detected = set(&[T::IF_STATEMENT, T::FOR_LOOP, T::RECURSION]);
        let humans = set(&[T::IF_STATEMENT, T::FOR_LOOP, T::WHILE_LOOP]);
        assert_eq!(instance_divergent(&detected, &humans), r(1, 3));
        assert_eq!(instance_divergent(&set(&[T::IF_STATEMENT]), &humans), r(0, 1));
        assert_eq!(instance_divergent(&TechniqueSet::empty(), &humans), r(0, 1));
    }

    #[test]
    fn convergence_requires_correct_and_free() {
        use Technique as T;
        assert_eq!(instance_convergent(&record("a", &[T::SET], &[T::FOR_LOOP], true)), r(1, 1));
        assert_eq!(instance_convergent(&record("a", &[T::FOR_LOOP], &[T::FOR_LOOP], true)), r(0, 1));
        assert_eq!(instance_convergent(&record("a", &[], &[T::RECURSION], false)), r(0, 1));
    }

    #[test]
    fn state_means() {
        use Technique as T;
        let mut records: Vec<_> = (0..10).map(|i| record(&format!("p{i}"), &[], &[T::FOR_LOOP], i < 2)).collect();
        records.push(record("p0", &[T::FOR_LOOP], &[T::FOR_LOOP], true));
        assert_eq!(convergent_at(&records, 0).unwrap(), r(1, 5));
        assert_eq!(pass_at_1(&records, 0).unwrap(), r(1, 5));
        assert_eq!(constraint_following(&records, 0).unwrap(), r(1, 1));
        assert_eq!(constraint_following(&records, 1).unwrap(), r(0, 1));
        assert_eq!(convergent_at(&records, 2), Err(MetricsError::EmptyState { t: 2 }));
    }

    #[test]
    fn neogauge_is_mean_of_products() {
        use Technique as T;
        let profs = profiles(&[("a", vec![set(&[T::FOR_LOOP])]), ("b", vec![set(&[T::SET])])]);
        let records = vec![
            // convergent, divergent 1/2
            record("a", &[], &[T::FOR_LOOP, T::WHILE_LOOP], true),
            // not convergent, divergent 1
            record("b", &[], &[T::WHILE_LOOP], false),
        ];
        assert_eq!(neogauge_at(&records, &profs, 0).unwrap(), r(1, 4));
        assert_eq!(divergent_at(&records, &profs, 0).unwrap(), r(3, 4));
        assert_eq!(cumulative_neogauge(&records, &profs, 3).unwrap(), r(1, 4));
        let missing = vec![record("zzz", &[], &[], false)];
        assert!(matches!(neogauge_at(&missing, &profs, 0), Err(MetricsError::MissingProfile { .. })));
    }

    #[test]
    fn ignoring_misc_changes_divergence() {
        use Technique as T;
        let profs = profiles(&[("a", vec![set(&[T::FOR_LOOP])])]);
        let records = vec![record("a", &[], &[T::FOR_LOOP, T::MISC], true)];
        assert_eq!(divergent_at(&records, &profs, 0).unwrap(), r(1, 2));
        let scorer = Scorer::new(&profs).ignoring(set(&[T::MISC]));
        assert_eq!(scorer.divergent_at(&records, 0).unwrap(), r(0, 1));
    }

    #[test]
    fn human_baselines() {
        use Technique as T;
        let profs = profiles(&[("a", vec![set(&[T::FOR_LOOP, T::IF_STATEMENT]), set(&[T::FOR_LOOP])])]);
        assert_eq!(human_divergent(&profs).unwrap(), r(1, 4));
        let disjoint = profiles(&[("a", vec![set(&[T::SET]), set(&[T::HEAP])])]);
        assert_eq!(human_divergent(&disjoint).unwrap(), r(1, 1));
        let single = profiles(&[("a", vec![set(&[T::SET])])]);
        assert!(matches!(human_divergent(&single), Err(MetricsError::MDeficient { m: 1, .. })));

        let states = vec![
            ConstraintState::new("a", vec![]).unwrap(),
            ConstraintState::new("a", vec![T::IF_STATEMENT]).unwrap(),
        ];
        assert_eq!(human_convergent(&profs, &states, 0).unwrap(), r(1, 1));
        assert_eq!(human_convergent(&profs, &states, 1).unwrap(), r(1, 2));
        assert_eq!(human_convergent(&profs, &states, 2), Err(MetricsError::EmptyState { t: 2 }));
    }

    #[test]
    fn best_of_k_prefers_earliest_maximum() {
        assert_eq!(best_of_k_select(&[r(0, 1), r(1, 5), r(1, 10)]), Some(1));
        assert_eq!(best_of_k_select(&[r(0, 1), r(0, 1)]), Some(0));
        assert_eq!(best_of_k_select(&[r(1, 2)]), Some(0));
        assert_eq!(best_of_k_select(&[]), None);
    }

    #[test]
    fn groups_reduce_to_best_member() {
        use Technique as T;
        let profs = profiles(&[("a", vec![set(&[T::FOR_LOOP])])]);
        let records = vec![
            record("a", &[], &[T::FOR_LOOP], true).with_sample("a@0", 0),
            record("a", &[], &[T::SET], true).with_sample("a@0", 1),
            record("a", &[], &[T::HEAP], true).with_sample("a@0", 2),
            record("a", &[T::SET], &[], false),
        ];
        let best = Scorer::new(&profs).select_best_of_k(&records).unwrap();
        assert_eq!(best.len(), 2);
        assert_eq!(best[0].detected, set(&[T::SET]));
        assert!(best[1].sample.is_none());
    }
}
