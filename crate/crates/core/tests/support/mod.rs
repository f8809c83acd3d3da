//! Shared helpers for integration tests: the detector corpus, a synthetic
//! record generator and a brute-force metric reference that works on plain
//! lists of technique indices.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use neogauge::metrics::{
    best_of_k_select, constraint_following, convergent_at, cumulative_neogauge, divergent_at, human_convergent,
    human_divergent, index_profiles, instance_convergent, instance_divergent, neogauge_at, pass_at_1, HumanTechniqueProfile,
    MetricsError, Profiles, Ratio, Scorer,
};
use neogauge::model::{ConstraintState, EvaluationRecord, Solution, Technique, TechniqueSet};
use num::rational::Ratio as SmallRatio;
use num::{ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

pub type Exact = SmallRatio<i128>;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[derive(Debug, Deserialize)]
pub struct Snippet {
    pub name: String,
    pub expected: Vec<Technique>,
    pub source: String,
}

#[derive(Deserialize)]
struct Corpus {
    snippet: Vec<Snippet>,
}

pub fn detector_corpus() -> Vec<Snippet> {
    let text = std::fs::read_to_string(fixture("detector_corpus.toml")).expect("corpus readable");
    toml::from_str::<Corpus>(&text).expect("corpus parses").snippet
}

pub fn small(x: &Ratio) -> Exact {
    Exact::new(x.numer().to_i128().unwrap(), x.denom().to_i128().unwrap())
}

// ---- raw synthetic data ---------------------------------------------------

/// One record as plain data: problem index, ordered denied list, detected
/// techniques, correctness and optional (group, index) sample tag.
#[derive(Debug, Clone)]
pub struct RawRecord {
    pub problem: usize,
    pub denied: Vec<usize>,
    pub detected: Vec<usize>,
    pub correct: bool,
    pub sample: Option<(String, usize)>,
}

#[derive(Debug, Clone)]
pub struct RawData {
    /// Per problem, per human solution, technique indices.
    pub humans: Vec<Vec<Vec<usize>>>,
    pub records: Vec<RawRecord>,
    pub max_t: usize,
}

pub fn problem_id(i: usize) -> String {
    format!("P{i:03}")
}

fn technique(i: usize) -> Technique {
    Technique::from_index(i).unwrap()
}

pub fn to_set(items: &[usize]) -> TechniqueSet {
    items.iter().map(|&i| technique(i)).collect()
}

fn random_subset(rng: &mut ChaCha8Rng, alphabet: usize, max_len: usize) -> Vec<usize> {
    let len = rng.gen_range(0..=max_len);
    let mut picked: Vec<usize> = (0..alphabet).collect();
    picked.shuffle(rng);
    picked.truncate(len);
    picked
}

/// Random problems (at most 50) with 1..=5 human solutions, each walked
/// through a chain of up to five constraints with one record per state.
/// Techniques come from a small alphabet so sets overlap often.
pub fn synthetic(seed: u64) -> RawData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alphabet = 8;
    let n_problems = rng.gen_range(1..=50);
    let max_t = 5;
    let mut humans = Vec::new();
    let mut records = Vec::new();
    for p in 0..n_problems {
        let m = rng.gen_range(1..=5);
        humans.push((0..m).map(|_| random_subset(&mut rng, alphabet, 4)).collect());
        let mut chain: Vec<usize> = (0..alphabet).collect();
        chain.shuffle(&mut rng);
        chain.truncate(rng.gen_range(0..=max_t));
        for t in 0..=chain.len() {
            records.push(RawRecord {
                problem: p,
                denied: chain[..t].to_vec(),
                detected: random_subset(&mut rng, alphabet, 5),
                correct: rng.gen_bool(0.6),
                sample: None,
            });
        }
    }
    RawData { humans, records, max_t }
}

/// Same shape as [`synthetic`] but every instance gets `k` tagged samples.
pub fn synthetic_sampled(seed: u64, k: usize) -> RawData {
    let mut base = synthetic(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut records = Vec::new();
    for (n, r) in base.records.iter().enumerate() {
        for i in 0..k {
            records.push(RawRecord {
                detected: random_subset(&mut rng, 8, 5),
                correct: rng.gen_bool(0.6),
                sample: Some((format!("g{n}"), i)),
                ..r.clone()
            });
        }
    }
    base.records = records;
    base
}

pub fn build_record(r: &RawRecord) -> EvaluationRecord {
    let denied = r.denied.iter().map(|&i| technique(i)).collect();
    let state = ConstraintState::new(problem_id(r.problem), denied).unwrap();
    let record = EvaluationRecord::new(state, Solution::extracted(String::new(), String::new(), "synthetic"), to_set(&r.detected), r.correct);
    match &r.sample {
        Some((group, index)) => record.with_sample(group.clone(), *index),
        None => record,
    }
}

pub fn build_records(data: &RawData) -> Vec<EvaluationRecord> {
    data.records.iter().map(build_record).collect()
}

pub fn build_profiles(data: &RawData) -> Profiles {
    index_profiles(
        data.humans
            .iter()
            .enumerate()
            .map(|(p, sols)| HumanTechniqueProfile::new(problem_id(p), sols.iter().map(|s| to_set(s)).collect())),
    )
}

pub fn build_states(data: &RawData) -> Vec<ConstraintState> {
    build_records(data).into_iter().map(|r| r.constraint_state).collect()
}

// ---- brute-force reference ------------------------------------------------

fn uniq(items: &[usize]) -> BTreeSet<usize> {
    items.iter().copied().collect()
}

fn avg(values: &[Exact]) -> Option<Exact> {
    if values.is_empty() {
        return None;
    }
    let sum = values.iter().fold(Exact::zero(), |a, b| a + b);
    Some(sum / Exact::from_integer(values.len() as i128))
}

fn share_new(own: &BTreeSet<usize>, others: &BTreeSet<usize>) -> Exact {
    if own.is_empty() {
        return Exact::zero();
    }
    let fresh = own.iter().filter(|x| !others.contains(x)).count();
    Exact::new(fresh as i128, own.len() as i128)
}

pub fn ref_follows(r: &RawRecord) -> bool {
    let detected = uniq(&r.detected);
    r.denied.iter().all(|d| !detected.contains(d))
}

pub fn ref_convergent(r: &RawRecord) -> Exact {
    Exact::from_integer((r.correct && ref_follows(r)) as i128)
}

pub fn ref_human_union(data: &RawData, problem: usize) -> BTreeSet<usize> {
    data.humans[problem].iter().flatten().copied().collect()
}

pub fn ref_divergent(data: &RawData, r: &RawRecord) -> Exact {
    share_new(&uniq(&r.detected), &ref_human_union(data, r.problem))
}

fn at(data: &RawData, t: usize) -> Vec<&RawRecord> {
    data.records.iter().filter(|r| r.denied.len() == t).collect()
}

pub fn ref_pass_at_1(data: &RawData, t: usize) -> Option<Exact> {
    avg(&at(data, t).iter().map(|r| Exact::from_integer(r.correct as i128)).collect::<Vec<_>>())
}

pub fn ref_constraint_following(data: &RawData, t: usize) -> Option<Exact> {
    avg(&at(data, t).iter().map(|r| Exact::from_integer(ref_follows(r) as i128)).collect::<Vec<_>>())
}

pub fn ref_convergent_at(data: &RawData, t: usize) -> Option<Exact> {
    avg(&at(data, t).iter().map(|r| ref_convergent(r)).collect::<Vec<_>>())
}

pub fn ref_divergent_at(data: &RawData, t: usize) -> Option<Exact> {
    avg(&at(data, t).iter().map(|r| ref_divergent(data, r)).collect::<Vec<_>>())
}

pub fn ref_neogauge_at(data: &RawData, t: usize) -> Option<Exact> {
    avg(&at(data, t).iter().map(|r| ref_convergent(r) * ref_divergent(data, r)).collect::<Vec<_>>())
}

pub fn ref_cumulative(data: &RawData, up_to: usize) -> Exact {
    (0..=up_to).filter_map(|t| ref_neogauge_at(data, t)).fold(Exact::zero(), |a, b| a + b)
}

pub fn ref_human_convergent(data: &RawData, t: usize) -> Option<Exact> {
    let mut values = Vec::new();
    for r in at(data, t) {
        let denied = uniq(&r.denied);
        for sol in &data.humans[r.problem] {
            values.push(Exact::from_integer(sol.iter().all(|x| !denied.contains(x)) as i128));
        }
    }
    avg(&values)
}

/// `None` when any problem has fewer than two human solutions.
pub fn ref_human_divergent(data: &RawData) -> Option<Exact> {
    let mut values = Vec::new();
    for sols in &data.humans {
        if sols.len() < 2 {
            return None;
        }
        for j in 0..sols.len() {
            let others: BTreeSet<usize> = sols.iter().enumerate().filter(|(k, _)| *k != j).flat_map(|(_, s)| s.iter().copied()).collect();
            values.push(share_new(&uniq(&sols[j]), &others));
        }
    }
    avg(&values)
}

/// Position of the first maximum.
pub fn ref_argmax(values: &[Exact]) -> Option<usize> {
    let best = values.iter().max()?;
    values.iter().position(|v| v == best)
}

// ---- comparisons --------------------------------------------------------

pub fn opt(r: Result<Ratio, MetricsError>) -> Option<Exact> {
    match r {
        Ok(v) => Some(small(&v)),
        Err(MetricsError::EmptyState { .. } | MetricsError::MDeficient { .. }) => None,
        Err(e) => panic!("unexpected {e}"),
    }
}

pub fn check_against_reference(data: &RawData) {
    let records = build_records(data);
    let profiles = build_profiles(data);
    let states = build_states(data);
    for (raw, rec) in data.records.iter().zip(&records) {
        assert_eq!(small(&instance_convergent(rec)), ref_convergent(raw));
        let union = to_set(&ref_human_union(data, raw.problem).into_iter().collect::<Vec<_>>());
        assert_eq!(small(&instance_divergent(&rec.detected, &union)), ref_divergent(data, raw));
    }
    for t in 0..=data.max_t {
        assert_eq!(opt(pass_at_1(&records, t)), ref_pass_at_1(data, t), "pass@1 t={t}");
        assert_eq!(opt(constraint_following(&records, t)), ref_constraint_following(data, t), "cf t={t}");
        assert_eq!(opt(convergent_at(&records, t)), ref_convergent_at(data, t), "conv t={t}");
        assert_eq!(opt(divergent_at(&records, &profiles, t)), ref_divergent_at(data, t), "div t={t}");
        assert_eq!(opt(neogauge_at(&records, &profiles, t)), ref_neogauge_at(data, t), "neo t={t}");
        assert_eq!(small(&cumulative_neogauge(&records, &profiles, t).unwrap()), ref_cumulative(data, t), "cum t={t}");
        assert_eq!(opt(human_convergent(&profiles, &states, t)), ref_human_convergent(data, t), "hconv t={t}");
    }
    assert_eq!(opt(human_divergent(&profiles)), ref_human_divergent(data));
}

pub fn check_best_of_k(data: &RawData) {
    let records = build_records(data);
    let profiles = build_profiles(data);
    let chosen = Scorer::new(&profiles).select_best_of_k(&records).unwrap();
    let groups: Vec<&[RawRecord]> = data.records.chunks(data.records.len() / chosen.len()).collect();
    assert_eq!(groups.len(), chosen.len());
    for (group, pick) in groups.iter().zip(&chosen) {
        let products: Vec<Exact> = group.iter().map(|r| ref_convergent(r) * ref_divergent(data, r)).collect();
        let best = ref_argmax(&products).unwrap();
        assert_eq!(pick, &build_record(&group[best]));
        let ours: Vec<Ratio> = products.iter().map(|p| Ratio::new((*p.numer()).into(), (*p.denom()).into())).collect();
        assert_eq!(best_of_k_select(&ours), Some(best));
    }
}
