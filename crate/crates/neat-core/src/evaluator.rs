//! Ranking evaluation: recall sets from co-purchase frequency, pluggable
//! scorers, and HR@K / NDCG@K aggregation over label records.
//!
//! For every label (q, v) the candidate pool is the query's most co-purchased
//! items in the training stats; a scorer re-ranks the pool and the label is
//! scored by hit rate and rank-discounted binary relevance at each cutoff.
//! Ties always break by item name so reports are reproducible.

use std::io::Write;

use crate::corpus::{CoPurchaseStats, ItemId, Vocab};
use crate::embedding::{cosine_raw, EmbeddingTable};
use crate::error::{Error, Result};
use crate::labelgen::LabelRecord;

/// Candidate pool for one query, ordered by co-purchase frequency descending
/// (ties by item name).
#[derive(Debug, Clone)]
pub struct RecallSet {
    pub query: ItemId,
    pub candidates: Vec<ItemId>,
}

/// Top co-purchased items for the query; `None` when the query has no
/// training co-purchases (a skip, not an error).
pub fn build_recall_set(
    query: ItemId,
    stats: &CoPurchaseStats,
    size: usize,
    vocab: &Vocab,
) -> Option<RecallSet> {
    if !stats.contains_query(query) {
        return None;
    }
    let mut scored: Vec<(ItemId, u64)> = stats.co_recs(query).filter(|&(rec, _)| rec != query).collect();
    scored.sort_by(|a, b| {
        b.1.cmp(&a.1)
            .then_with(|| vocab.item_name(a.0).cmp(vocab.item_name(b.0)))
    });
    scored.truncate(size);
    Some(RecallSet {
        query,
        candidates: scored.into_iter().map(|(rec, _)| rec).collect(),
    })
}

/// 1 if the label occurs in the first k entries, else 0.
pub fn hr_at_k(ranked: &[ItemId], label: ItemId, k: usize) -> f64 {
    debug_assert!(k >= 1);
    if ranked.iter().take(k).any(|&item| item == label) {
        1.0
    } else {
        0.0
    }
}

/// Rank-discounted binary relevance: 1/log2(1 + rank) if the label lands in
/// the top k (ranks are 1-based), else 0.
pub fn ndcg_at_k(ranked: &[ItemId], label: ItemId, k: usize) -> f64 {
    debug_assert!(k >= 1);
    match ranked.iter().take(k).position(|&item| item == label) {
        Some(pos) => 1.0 / ((pos as f64 + 2.0).log2()),
        None => 0.0,
    }
}

/// Ranking strategy applied to a recall set.
pub enum Scorer<'a> {
    /// Cosine similarity between mean vectors of the trained embeddings.
    NeatCosine(&'a EmbeddingTable),
    /// Keep the co-purchase frequency order of the recall set.
    PopCo,
    /// Ignore the recall set; rank by global purchase counts.
    Pop(&'a [ItemId]),
}

impl Scorer<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Scorer::NeatCosine(_) => "neat",
            Scorer::PopCo => "popco",
            Scorer::Pop(_) => "pop",
        }
    }
}

/// Items sorted by raw purchase count descending, names breaking ties.
pub fn global_popularity_order(vocab: &Vocab) -> Vec<ItemId> {
    let mut items: Vec<ItemId> = vocab.item_ids().collect();
    items.sort_by(|&a, &b| {
        vocab
            .purchases(b)
            .cmp(&vocab.purchases(a))
            .then_with(|| vocab.item_name(a).cmp(vocab.item_name(b)))
    });
    items
}

/// Result of ranking one recall set.
pub enum Ranking {
    Ranked {
        items: Vec<ItemId>,
        unscored_candidates: usize,
    },
    /// The query itself cannot be scored (e.g. no embedding): skip the label.
    QueryUnscorable,
}

/// Order the recall set under the scorer. Candidates a scorer cannot handle
/// are dropped and counted.
pub fn rank_candidates(recall: &RecallSet, scorer: &Scorer<'_>, vocab: &Vocab) -> Ranking {
    match scorer {
        Scorer::PopCo => Ranking::Ranked {
            items: recall.candidates.clone(),
            unscored_candidates: 0,
        },
        Scorer::Pop(order) => {
            let items = order
                .iter()
                .copied()
                .filter(|&item| item != recall.query)
                .take(recall.candidates.len().max(1))
                .collect();
            Ranking::Ranked {
                items,
                unscored_candidates: 0,
            }
        }
        Scorer::NeatCosine(table) => {
            let query_mean = match table.item_mean(vocab.item_name(recall.query)) {
                Ok(mean) => mean,
                Err(_) => return Ranking::QueryUnscorable,
            };
            let mut unscored = 0usize;
            let mut scored: Vec<(ItemId, f64)> = Vec::with_capacity(recall.candidates.len());
            for &candidate in &recall.candidates {
                match table.item_mean(vocab.item_name(candidate)) {
                    Ok(mean) => match cosine_raw(query_mean, mean) {
                        Some(score) => scored.push((candidate, score)),
                        None => unscored += 1,
                    },
                    Err(_) => unscored += 1,
                }
            }
            scored.sort_by(|a, b| {
                b.1.partial_cmp(&a.1)
                    .unwrap()
                    .then_with(|| vocab.item_name(a.0).cmp(vocab.item_name(b.0)))
            });
            Ranking::Ranked {
                items: scored.into_iter().map(|(item, _)| item).collect(),
                unscored_candidates: unscored,
            }
        }
    }
}

/// Mean HR@K / NDCG@K per cutoff for one method.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub method: String,
    pub rows: Vec<EvalRow>,
    pub n_evaluated: usize,
    pub n_skipped: usize,
    pub n_unscored_candidates: usize,
}

#[derive(Debug, Clone)]
pub struct EvalRow {
    pub k: usize,
    pub hr: f64,
    pub ndcg: f64,
}

impl EvalReport {
    /// Rows in the report CSV format (no header).
    pub fn write_csv_rows<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        for row in &self.rows {
            writeln!(
                w,
                "{},{},{:.6},{:.6},{},{}",
                self.method, row.k, row.hr, row.ndcg, self.n_evaluated, self.n_skipped
            )?;
        }
        Ok(())
    }

    pub const CSV_HEADER: &'static str = "method,K,HR,NDCG,n_evaluated,n_skipped";
}

impl std::fmt::Display for EvalReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "{:<8} {:>4} {:>10} {:>10}   ({} evaluated, {} skipped)",
            self.method, "K", "HR", "NDCG", self.n_evaluated, self.n_skipped
        )?;
        for row in &self.rows {
            writeln!(
                f,
                "{:<8} {:>4} {:>10.4} {:>10.4}",
                "", row.k, row.hr, row.ndcg
            )?;
        }
        Ok(())
    }
}

/// Score every label and aggregate per-K means.
///
/// Labels whose query has no recall set (or no embedding under the cosine
/// scorer) are skipped and counted; it is an error if nothing survives.
pub fn evaluate(
    labels: &[LabelRecord],
    stats: &CoPurchaseStats,
    scorer: &Scorer<'_>,
    ks: &[usize],
    recall_size: usize,
    vocab: &Vocab,
) -> Result<EvalReport> {
    if labels.is_empty() {
        return Err(Error::EmptyInput("labels"));
    }
    let mut hr_sums = vec![0.0; ks.len()];
    let mut ndcg_sums = vec![0.0; ks.len()];
    let mut n_evaluated = 0usize;
    let mut n_skipped = 0usize;
    let mut n_unscored = 0usize;

    for label in labels {
        let Some(recall) = build_recall_set(label.query, stats, recall_size, vocab) else {
            n_skipped += 1;
            continue;
        };
        let (ranked, unscored) = match rank_candidates(&recall, scorer, vocab) {
            Ranking::Ranked {
                items,
                unscored_candidates,
            } => (items, unscored_candidates),
            Ranking::QueryUnscorable => {
                n_skipped += 1;
                continue;
            }
        };
        n_unscored += unscored;
        n_evaluated += 1;
        for (i, &k) in ks.iter().enumerate() {
            hr_sums[i] += hr_at_k(&ranked, label.rec, k);
            ndcg_sums[i] += ndcg_at_k(&ranked, label.rec, k);
        }
    }

    if n_evaluated == 0 {
        return Err(Error::AllLabelsSkipped(labels.len()));
    }
    let rows = ks
        .iter()
        .enumerate()
        .map(|(i, &k)| EvalRow {
            k,
            hr: hr_sums[i] / n_evaluated as f64,
            ndcg: ndcg_sums[i] / n_evaluated as f64,
        })
        .collect();
    Ok(EvalReport {
        method: scorer.name().to_string(),
        rows,
        n_evaluated,
        n_skipped,
        n_unscored_candidates: n_unscored,
    })
}
