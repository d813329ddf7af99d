//! Repackaged-malware detection without prior signatures.
//!
//! Score every pair of apps by the absolute API weight of the class
//! digests they share, cluster bottom-up with average linkage until no
//! pair of clusters clears the threshold, then flag clusters that are
//! large but mostly unlabeled: a popular app cloned many times with
//! only a couple of known-bad members is exactly the repackaging
//! pattern.
//!
//! The score is intentionally not normalized. Two repackaged variants
//! share their whole payload, a big absolute weight, while two large
//! unrelated apps share almost nothing; dividing by app size would let
//! huge apps drown out the signal.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::analytics::ClassSigSet;
use crate::error::{Error, Result};
use crate::signature::SignatureBundle;
use crate::store::Label;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroDayConfig {
    /// Minimum average shared API weight for two clusters to merge.
    pub threshold: u64,
    /// Clusters must be strictly larger than this to be suspicious.
    pub min_cluster_size: usize,
    /// Suspicious clusters have at most this fraction of members
    /// already labeled malicious.
    pub max_malicious_fraction: f64,
    /// Class digests ignored entirely: shared SDKs, ad libraries.
    pub whitelist: BTreeSet<String>,
}

impl Default for ZeroDayConfig {
    fn default() -> ZeroDayConfig {
        ZeroDayConfig {
            threshold: 100,
            min_cluster_size: 10,
            max_malicious_fraction: 0.2,
            whitelist: BTreeSet::new(),
        }
    }
}

impl ZeroDayConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_cluster_size < 1 {
            return Err(Error::Config("min_cluster_size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.max_malicious_fraction)
            || self.max_malicious_fraction.is_nan()
        {
            return Err(Error::Config(format!(
                "max_malicious_fraction must be within 0..=1, got {}",
                self.max_malicious_fraction
            )));
        }
        Ok(())
    }
}

/// One merge step: the two clusters (named by their smallest member)
/// and the exact average score that justified the merge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeRecord {
    pub a: String,
    pub b: String,
    pub score_num: u64,
    pub score_den: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterVerdict {
    pub members: Vec<String>,
    pub size: usize,
    pub malicious_count: usize,
    pub malicious_fraction: f64,
    pub suspicious: bool,
    /// Class digests present in every member, after whitelisting.
    pub common_classes: Vec<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ClusterRun {
    pub config: ZeroDayConfig,
    /// Each cluster's member app ids, sorted; clusters sorted by first
    /// member.
    pub clusters: Vec<Vec<String>>,
    pub merge_log: Vec<MergeRecord>,
    /// Filled by `flag_suspicious`, parallel to `clusters`.
    pub verdicts: Vec<ClusterVerdict>,
    /// Whitelisted feature sets per app, kept for the flagging pass.
    #[serde(skip)]
    sets: BTreeMap<String, ClassSigSet>,
}

/// Shared API weight between two whitelisted feature sets.
pub fn common_api_score(a: &ClassSigSet, b: &ClassSigSet) -> u64 {
    a.shared_weight(b)
}

/// All pairwise shared weights; `out[i][j] == out[j][i]`, diagonal zero.
#[cfg(feature = "parallel")]
pub fn pairwise_scores(sets: &[ClassSigSet]) -> Vec<Vec<u64>> {
    use rayon::prelude::*;
    (0..sets.len())
        .into_par_iter()
        .map(|i| score_row(sets, i))
        .collect()
}

#[cfg(not(feature = "parallel"))]
pub fn pairwise_scores(sets: &[ClassSigSet]) -> Vec<Vec<u64>> {
    pairwise_scores_seq(sets)
}

/// Single-threaded variant, for measurement baselines.
pub fn pairwise_scores_seq(sets: &[ClassSigSet]) -> Vec<Vec<u64>> {
    (0..sets.len()).map(|i| score_row(sets, i)).collect()
}

fn score_row(sets: &[ClassSigSet], i: usize) -> Vec<u64> {
    (0..sets.len())
        .map(|j| {
            if i == j {
                0
            } else {
                common_api_score(&sets[i], &sets[j])
            }
        })
        .collect()
}

/// Average-linkage agglomerative clustering over the corpus.
pub fn cluster(corpus: &[SignatureBundle], cfg: &ZeroDayConfig) -> Result<ClusterRun> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::Config("empty corpus".into()));
    }
    let mut seen = BTreeSet::new();
    for bundle in corpus {
        if !seen.insert(bundle.app_id.as_str()) {
            return Err(Error::Validation(format!(
                "app {} appears twice in the corpus",
                bundle.app_id
            )));
        }
        if bundle.table_fp != corpus[0].table_fp || bundle.hash_alg != corpus[0].hash_alg {
            return Err(Error::TableMismatch {
                a: corpus[0].table_fp.clone(),
                b: bundle.table_fp.clone(),
            });
        }
    }

    let sets: Vec<ClassSigSet> = corpus
        .iter()
        .map(|b| ClassSigSet::from_bundle(b).without(&cfg.whitelist))
        .collect();
    let base = pairwise_scores(&sets);

    let n = corpus.len();
    let mut active: Vec<bool> = vec![true; n];
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut reps: Vec<&str> = corpus.iter().map(|b| b.app_id.as_str()).collect();
    // sums[i][j]: total pairwise score between every member of cluster
    // i and every member of cluster j. Averages derive from it exactly.
    let mut sums = base;
    let mut merge_log = Vec::new();

    loop {
        let mut best: Option<(usize, usize)> = None;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in (i + 1)..n {
                if !active[j] {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((bi, bj)) => {
                        let lhs = sums[i][j] as u128
                            * (members[bi].len() * members[bj].len()) as u128;
                        let rhs = sums[bi][bj] as u128
                            * (members[i].len() * members[j].len()) as u128;
                        lhs > rhs || (lhs == rhs && pair_key(&reps, i, j) < pair_key(&reps, bi, bj))
                    }
                };
                if better {
                    best = Some((i, j));
                }
            }
        }
        let Some((i, j)) = best else {
            break;
        };
        let pairs = (members[i].len() * members[j].len()) as u64;
        if (sums[i][j] as u128) < cfg.threshold as u128 * pairs as u128 {
            break;
        }
        let (a, b) = pair_key(&reps, i, j);
        merge_log.push(MergeRecord {
            a: a.to_string(),
            b: b.to_string(),
            score_num: sums[i][j],
            score_den: pairs,
        });
        let moved = std::mem::take(&mut members[j]);
        members[i].extend(moved);
        if reps[j] < reps[i] {
            reps[i] = reps[j];
        }
        active[j] = false;
        for k in 0..n {
            if k != i && active[k] {
                sums[i][k] += sums[j][k];
                sums[k][i] = sums[i][k];
            }
        }
    }

    let mut clusters: Vec<Vec<String>> = (0..n)
        .filter(|&i| active[i])
        .map(|i| {
            let mut ids: Vec<String> = members[i]
                .iter()
                .map(|&idx| corpus[idx].app_id.clone())
                .collect();
            ids.sort();
            ids
        })
        .collect();
    clusters.sort();

    Ok(ClusterRun {
        config: cfg.clone(),
        clusters,
        merge_log,
        verdicts: Vec::new(),
        sets: corpus
            .iter()
            .zip(&sets)
            .map(|(b, s)| (b.app_id.clone(), s.clone()))
            .collect(),
    })
}

fn pair_key<'a>(reps: &[&'a str], i: usize, j: usize) -> (&'a str, &'a str) {
    if reps[i] <= reps[j] {
        (reps[i], reps[j])
    } else {
        (reps[j], reps[i])
    }
}

/// Judge each cluster of a run produced by `cluster` in this process.
/// Apps missing from `labels` count as unknown.
pub fn flag_suspicious(
    mut run: ClusterRun,
    labels: &BTreeMap<String, Label>,
    cfg: &ZeroDayConfig,
) -> ClusterRun {
    run.verdicts = run
        .clusters
        .iter()
        .map(|members| {
            let size = members.len();
            let malicious_count = members
                .iter()
                .filter(|id| labels.get(*id).copied() == Some(Label::Malicious))
                .count();
            let malicious_fraction = malicious_count as f64 / size as f64;
            let suspicious = size > cfg.min_cluster_size
                && malicious_fraction <= cfg.max_malicious_fraction;
            ClusterVerdict {
                members: members.clone(),
                size,
                malicious_count,
                malicious_fraction,
                suspicious,
                common_classes: common_classes(&run.sets, members),
            }
        })
        .collect();
    run
}

fn common_classes(sets: &BTreeMap<String, ClassSigSet>, members: &[String]) -> Vec<String> {
    let mut iter = members.iter().filter_map(|id| sets.get(id));
    let Some(first) = iter.next() else {
        return Vec::new();
    };
    let mut common = first.clone();
    for set in iter {
        common = common.intersection(set);
    }
    common.digests().map(str::to_string).collect()
}
