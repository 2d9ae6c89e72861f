//! Deterministic consensus detection: single-linkage clustering of
//! same-dimension viewpoints whose statement embeddings reach cosine `tau`.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

use super::{Dimension, FusionError, Stance, Viewpoint};
use crate::eval::cosine;
use crate::gateway::{embed_text, Backend};

pub const DEFAULT_TAU: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportTier {
    HighlyConsistent,
    PartiallySupported,
    Divergent,
}

impl SupportTier {
    pub fn label(self) -> &'static str {
        match self {
            SupportTier::HighlyConsistent => "highly consistent",
            SupportTier::PartiallySupported => "partially supported",
            SupportTier::Divergent => "divergent",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusFinding {
    pub id: String,
    pub dimension: Dimension,
    pub stance: Stance,
    pub merged_statement: String,
    pub members: Vec<String>,
    pub sources: Vec<String>,
    /// Distinct source models among the members.
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnverifiedFinding {
    pub id: String,
    pub viewpoint: String,
    pub source_model: String,
    pub dimension: Dimension,
    pub stance: Stance,
    pub statement: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictSide {
    pub stance: Stance,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictFinding {
    pub id: String,
    pub dimension: Dimension,
    pub sides: Vec<ConflictSide>,
    pub sources: Vec<String>,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedViewpoints {
    pub tau: f64,
    /// Input viewpoints sorted by id.
    pub viewpoints: Vec<Viewpoint>,
    pub consensus: Vec<ConsensusFinding>,
    pub to_be_verified: Vec<UnverifiedFinding>,
    pub conflicts: Vec<ConflictFinding>,
}

/// Bucket-independent view of one classified finding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FindingSummary {
    pub id: String,
    pub tier: SupportTier,
    pub dimension: Dimension,
    /// Concern for conflicts, which always contain a concern side.
    pub stance: Stance,
    pub statement: String,
    pub sources: Vec<String>,
    pub members: Vec<String>,
}

impl ClassifiedViewpoints {
    /// Consensus, then single-source, then conflict findings.
    pub fn findings(&self) -> Vec<FindingSummary> {
        let mut out = Vec::new();
        for c in &self.consensus {
            out.push(FindingSummary {
                id: c.id.clone(),
                tier: SupportTier::HighlyConsistent,
                dimension: c.dimension,
                stance: c.stance,
                statement: c.merged_statement.clone(),
                sources: c.sources.clone(),
                members: c.members.clone(),
            });
        }
        for u in &self.to_be_verified {
            out.push(FindingSummary {
                id: u.id.clone(),
                tier: SupportTier::PartiallySupported,
                dimension: u.dimension,
                stance: u.stance,
                statement: u.statement.clone(),
                sources: vec![u.source_model.clone()],
                members: vec![u.viewpoint.clone()],
            });
        }
        for d in &self.conflicts {
            out.push(FindingSummary {
                id: d.id.clone(),
                tier: SupportTier::Divergent,
                dimension: d.dimension,
                stance: Stance::Concern,
                statement: d.summary.clone(),
                sources: d.sources.clone(),
                members: d.sides.iter().flat_map(|s| s.members.clone()).collect(),
            });
        }
        out
    }

    pub fn finding(&self, id: &str) -> Option<FindingSummary> {
        self.findings().into_iter().find(|f| f.id == id)
    }

    /// Tier implied by the bucket holding `id`.
    pub fn tier_of(&self, id: &str) -> Option<SupportTier> {
        if self.consensus.iter().any(|c| c.id == id) {
            Some(SupportTier::HighlyConsistent)
        } else if self.to_be_verified.iter().any(|u| u.id == id) {
            Some(SupportTier::PartiallySupported)
        } else if self.conflicts.iter().any(|d| d.id == id) {
            Some(SupportTier::Divergent)
        } else {
            None
        }
    }

    /// Viewpoint ids as they appear across the three buckets.
    pub fn member_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = Vec::new();
        for c in &self.consensus {
            ids.extend(c.members.iter().map(String::as_str));
        }
        ids.extend(self.to_be_verified.iter().map(|u| u.viewpoint.as_str()));
        for d in &self.conflicts {
            for s in &d.sides {
                ids.extend(s.members.iter().map(String::as_str));
            }
        }
        ids
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }

    fn find(&mut self, i: usize) -> usize {
        let mut root = i;
        while self.0[root] != root {
            root = self.0[root];
        }
        let mut j = i;
        while self.0[j] != root {
            let next = self.0[j];
            self.0[j] = root;
            j = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller index wins so roots are order-stable
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.0[hi] = lo;
        }
    }
}

/// Clusters of indices into `vectors`, linking pairs with cosine ≥ `tau`.
/// Clusters are sorted by their smallest index and hold ascending indices.
pub fn single_linkage(
    vectors: &[&[f64]],
    tau: f64,
) -> Result<Vec<Vec<usize>>, (usize, usize, crate::eval::SimilarityError)> {
    let mut uf = UnionFind::new(vectors.len());
    for i in 0..vectors.len() {
        for j in i + 1..vectors.len() {
            let s = cosine(vectors[i], vectors[j]).map_err(|e| (i, j, e))?;
            if s >= tau {
                uf.union(i, j);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..vectors.len() {
        let root = uf.find(i);
        groups.entry(root).or_default().push(i);
    }
    let mut clusters: Vec<Vec<usize>> = groups.into_values().collect();
    clusters.sort_by_key(|c| c[0]);
    Ok(clusters)
}

enum Bucket {
    Consensus,
    Unverified,
    Conflict,
}

/// Partitions viewpoints into consensus, single-source and conflict
/// findings. The result does not depend on input order: viewpoints are
/// processed sorted by id and finding ids are numbered per bucket in
/// (dimension, first member id) order.
pub fn classify_viewpoints(
    viewpoints: &[Viewpoint],
    embedder: &dyn Backend,
    tau: f64,
) -> Result<ClassifiedViewpoints, FusionError> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(FusionError::TauOutOfRange(tau));
    }
    let mut sorted = viewpoints.to_vec();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(w) = sorted.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(FusionError::DuplicateViewpoint(w[0].id.clone()));
    }
    if let Some(v) = sorted.iter().find(|v| v.statement.trim().is_empty()) {
        return Err(FusionError::EmptyStatement(v.id.clone()));
    }
    let sources: BTreeSet<&str> = sorted.iter().map(|v| v.source_model.as_str()).collect();
    if sources.len() < 2 {
        return Err(FusionError::TooFewSources(sources.len()));
    }

    let mut cache: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for v in &sorted {
        if cache.contains_key(v.statement.as_str()) {
            continue;
        }
        let e = embed_text(embedder, &v.statement).map_err(|source| FusionError::Embedding {
            id: v.id.clone(),
            source,
        })?;
        cache.insert(v.statement.as_str(), e.values().to_vec());
    }

    let mut consensus = Vec::new();
    let mut unverified = Vec::new();
    let mut conflicts = Vec::new();
    for dimension in Dimension::ALL {
        let members: Vec<&Viewpoint> = sorted.iter().filter(|v| v.dimension == dimension).collect();
        let vectors: Vec<&[f64]> = members
            .iter()
            .map(|v| cache[v.statement.as_str()].as_slice())
            .collect();
        let clusters = single_linkage(&vectors, tau).map_err(|(i, j, source)| {
            FusionError::Similarity {
                a: members[i].id.clone(),
                b: members[j].id.clone(),
                source,
            }
        })?;
        for cluster in clusters {
            let group: Vec<&Viewpoint> = cluster.iter().map(|&i| members[i]).collect();
            let stances: BTreeSet<Stance> = group.iter().map(|v| v.stance).collect();
            let models: BTreeSet<&str> = group.iter().map(|v| v.source_model.as_str()).collect();
            let bucket = if stances.contains(&Stance::Positive) && stances.contains(&Stance::Concern) {
                Bucket::Conflict
            } else if models.len() >= 2 {
                Bucket::Consensus
            } else {
                Bucket::Unverified
            };
            let ids: Vec<String> = group.iter().map(|v| v.id.clone()).collect();
            let model_list: Vec<String> = models.iter().map(|m| m.to_string()).collect();
            match bucket {
                Bucket::Conflict => {
                    let sides = [Stance::Positive, Stance::Concern, Stance::Neutral]
                        .into_iter()
                        .filter_map(|stance| {
                            let m: Vec<String> = group
                                .iter()
                                .filter(|v| v.stance == stance)
                                .map(|v| v.id.clone())
                                .collect();
                            (!m.is_empty()).then_some(ConflictSide { stance, members: m })
                        })
                        .collect::<Vec<_>>();
                    let count = |s: Stance| group.iter().filter(|v| v.stance == s).count();
                    let summary = format!(
                        "{dimension}: {} positive vs {} concern reading(s) of \"{}\"",
                        count(Stance::Positive),
                        count(Stance::Concern),
                        group[0].statement
                    );
                    conflicts.push(ConflictFinding {
                        id: format!("D{}", conflicts.len() + 1),
                        dimension,
                        sides,
                        sources: model_list,
                        summary,
                    });
                }
                Bucket::Consensus => {
                    let stance = if stances.contains(&Stance::Concern) {
                        Stance::Concern
                    } else if stances.contains(&Stance::Positive) {
                        Stance::Positive
                    } else {
                        Stance::Neutral
                    };
                    consensus.push(ConsensusFinding {
                        id: format!("C{}", consensus.len() + 1),
                        dimension,
                        stance,
                        merged_statement: group[0].statement.clone(),
                        members: ids,
                        support: model_list.len(),
                        sources: model_list,
                    });
                }
                Bucket::Unverified => {
                    for v in group {
                        unverified.push(UnverifiedFinding {
                            id: format!("U{}", unverified.len() + 1),
                            viewpoint: v.id.clone(),
                            source_model: v.source_model.clone(),
                            dimension,
                            stance: v.stance,
                            statement: v.statement.clone(),
                        });
                    }
                }
            }
        }
    }
    Ok(ClassifiedViewpoints {
        tau,
        viewpoints: sorted,
        consensus,
        to_be_verified: unverified,
        conflicts,
    })
}
