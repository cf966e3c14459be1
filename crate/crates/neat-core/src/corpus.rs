//! Transaction ingestion, co-purchase pair sampling, and frequency statistics.
//!
//! A transaction is an ordered basket of items purchased by one user. Directed
//! co-purchase pairs are sampled from each basket within a positional window,
//! optionally filtered to cross-category pairs, and aggregated into a
//! frequency table over directed pairs plus per-item marginals.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Dense index of an item in a [`Vocab`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ItemId(pub u32);

/// Dense index of a user in a [`Vocab`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UserId(pub u32);

/// Symbol table for item, user, and category identifiers.
///
/// Identifiers are opaque strings; everything downstream works on dense
/// indexes and resolves back to names at file boundaries. Categories and raw
/// purchase counts are attached per item when known.
#[derive(Debug, Default, Clone)]
pub struct Vocab {
    item_names: Vec<String>,
    item_index: HashMap<String, ItemId>,
    item_category: Vec<Option<u32>>,
    item_purchases: Vec<u64>,
    category_names: Vec<String>,
    category_index: HashMap<String, u32>,
    user_names: Vec<String>,
    user_index: HashMap<String, UserId>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern_item(&mut self, name: &str) -> ItemId {
        if let Some(&id) = self.item_index.get(name) {
            return id;
        }
        let id = ItemId(self.item_names.len() as u32);
        self.item_names.push(name.to_string());
        self.item_index.insert(name.to_string(), id);
        self.item_category.push(None);
        self.item_purchases.push(0);
        id
    }

    pub fn item_id(&self, name: &str) -> Option<ItemId> {
        self.item_index.get(name).copied()
    }

    pub fn item_name(&self, id: ItemId) -> &str {
        &self.item_names[id.0 as usize]
    }

    pub fn n_items(&self) -> usize {
        self.item_names.len()
    }

    pub fn item_ids(&self) -> impl Iterator<Item = ItemId> {
        (0..self.item_names.len() as u32).map(ItemId)
    }

    pub fn item_names(&self) -> &[String] {
        &self.item_names
    }

    fn intern_category(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.category_index.get(name) {
            return id;
        }
        let id = self.category_names.len() as u32;
        self.category_names.push(name.to_string());
        self.category_index.insert(name.to_string(), id);
        id
    }

    /// Tag an item with a category; a second, different tag is an error.
    pub fn set_item_category(&mut self, id: ItemId, category: &str) -> Result<()> {
        let cat = self.intern_category(category);
        match self.item_category[id.0 as usize] {
            None => {
                self.item_category[id.0 as usize] = Some(cat);
                Ok(())
            }
            Some(existing) if existing == cat => Ok(()),
            Some(existing) => Err(Error::CategoryConflict {
                item: self.item_name(id).to_string(),
                first: self.category_names[existing as usize].clone(),
                second: category.to_string(),
            }),
        }
    }

    pub fn category_of(&self, id: ItemId) -> Option<&str> {
        self.item_category[id.0 as usize].map(|c| self.category_names[c as usize].as_str())
    }

    pub fn n_categories(&self) -> usize {
        self.category_names.len()
    }

    pub fn add_purchases(&mut self, id: ItemId, count: u64) {
        self.item_purchases[id.0 as usize] += count;
    }

    /// Raw purchase count of the item across all ingested transactions.
    pub fn purchases(&self, id: ItemId) -> u64 {
        self.item_purchases[id.0 as usize]
    }

    pub fn intern_user(&mut self, name: &str) -> UserId {
        if let Some(&id) = self.user_index.get(name) {
            return id;
        }
        let id = UserId(self.user_names.len() as u32);
        self.user_names.push(name.to_string());
        self.user_index.insert(name.to_string(), id);
        id
    }

    pub fn user_name(&self, id: UserId) -> &str {
        &self.user_names[id.0 as usize]
    }

    pub fn user_names(&self) -> &[String] {
        &self.user_names
    }

    pub fn n_users(&self) -> usize {
        self.user_names.len()
    }
}

/// One purchase basket, items in purchase order.
#[derive(Debug, Clone)]
pub struct Transaction {
    pub id: String,
    pub user: UserId,
    pub items: Vec<ItemId>,
}

/// All transactions plus the symbol table they reference.
#[derive(Debug, Default, Clone)]
pub struct TransactionCorpus {
    pub vocab: Vocab,
    pub transactions: Vec<Transaction>,
}

impl TransactionCorpus {
    pub fn n_transactions(&self) -> usize {
        self.transactions.len()
    }
}

/// A directed co-purchase record: `query` was bought together with `rec`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CoPurchasePair {
    pub query: ItemId,
    pub rec: ItemId,
    pub user: UserId,
}

/// Frequency table over directed co-purchase pairs.
///
/// `marginal` sums pair counts over the query slot; with the symmetric pair
/// emission of [`sample_pairs`] this equals the rec-slot sum. `total` is the
/// grand sum of all pair counts.
#[derive(Debug, Default, Clone)]
pub struct CoPurchaseStats {
    pub pair_freq: BTreeMap<(ItemId, ItemId), u64>,
    pub marginal: BTreeMap<ItemId, u64>,
    pub total: u64,
}

impl CoPurchaseStats {
    pub fn freq(&self, query: ItemId, rec: ItemId) -> u64 {
        self.pair_freq.get(&(query, rec)).copied().unwrap_or(0)
    }

    pub fn marginal_of(&self, item: ItemId) -> u64 {
        self.marginal.get(&item).copied().unwrap_or(0)
    }

    pub fn contains_query(&self, item: ItemId) -> bool {
        self.marginal.contains_key(&item)
    }

    /// Items co-purchased with `query`, with their counts.
    pub fn co_recs(&self, query: ItemId) -> impl Iterator<Item = (ItemId, u64)> + '_ {
        self.pair_freq
            .range((query, ItemId(0))..=(query, ItemId(u32::MAX)))
            .map(|(&(_, rec), &count)| (rec, count))
    }

    /// Merge another table into this one (count addition: associative and
    /// commutative, so shard-and-merge is safe).
    pub fn merge(&mut self, other: &CoPurchaseStats) {
        for (&pair, &count) in &other.pair_freq {
            *self.pair_freq.entry(pair).or_insert(0) += count;
        }
        for (&item, &count) in &other.marginal {
            *self.marginal.entry(item).or_insert(0) += count;
        }
        self.total += other.total;
    }
}

/// Parse a transaction file: comma-delimited rows
/// `user_id,transaction_id,position,item_id,category_id` under a header row.
///
/// Rows of one transaction need not be contiguous; positions within a
/// transaction must be unique. Duplicate items within a basket are
/// deduplicated to their first occurrence. Transactions keep file order of
/// first appearance; items within a transaction are ordered by position.
pub fn ingest_transactions<R: BufRead>(reader: R) -> Result<TransactionCorpus> {
    let mut vocab = Vocab::new();
    // transaction id -> (user, rows of (position, item))
    let mut baskets: BTreeMap<String, (UserId, Vec<(u64, ItemId)>)> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();

    let mut offset: u64 = 0;
    for (line_no, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| Error::Io {
            path: "<input>".into(),
            source,
        })?;
        let line_offset = offset;
        offset += line.len() as u64 + 1;
        if line_no == 0 {
            continue; // header row
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(Error::MalformedRow {
                offset: line_offset,
                field: "row",
                message: format!("expected 5 comma-separated fields, found {}", fields.len()),
            });
        }
        let (user_raw, txn_raw, pos_raw, item_raw, cat_raw) =
            (fields[0], fields[1], fields[2], fields[3], fields[4]);
        for (field, value) in [
            ("user_id", user_raw),
            ("transaction_id", txn_raw),
            ("item_id", item_raw),
            ("category_id", cat_raw),
        ] {
            if value.is_empty() {
                return Err(Error::MalformedRow {
                    offset: line_offset,
                    field,
                    message: "empty field".to_string(),
                });
            }
        }
        let position: u64 = pos_raw.parse().map_err(|_| Error::MalformedRow {
            offset: line_offset,
            field: "position",
            message: format!("`{pos_raw}` is not a non-negative integer"),
        })?;

        let item = vocab.intern_item(item_raw);
        vocab.set_item_category(item, cat_raw)?;
        vocab.add_purchases(item, 1);
        let user = vocab.intern_user(user_raw);

        match baskets.entry(txn_raw.to_string()) {
            Entry::Vacant(slot) => {
                order.push(txn_raw.to_string());
                slot.insert((user, vec![(position, item)]));
            }
            Entry::Occupied(mut slot) => {
                let (existing_user, rows) = slot.get_mut();
                if *existing_user != user {
                    return Err(Error::MalformedRow {
                        offset: line_offset,
                        field: "user_id",
                        message: format!(
                            "transaction `{txn_raw}` already belongs to user `{}`",
                            vocab.user_name(*existing_user)
                        ),
                    });
                }
                if rows.iter().any(|&(p, _)| p == position) {
                    return Err(Error::MalformedRow {
                        offset: line_offset,
                        field: "position",
                        message: format!("duplicate position {position} in transaction `{txn_raw}`"),
                    });
                }
                rows.push((position, item));
            }
        }
    }

    let mut transactions = Vec::with_capacity(order.len());
    for id in order {
        let (user, mut rows) = baskets.remove(&id).expect("basket recorded");
        rows.sort_by_key(|&(p, _)| p);
        // Dedup to first occurrence before pair sampling; a repeated SKU
        // carries no co-purchase signal with itself.
        let mut items = Vec::with_capacity(rows.len());
        for (_, item) in rows {
            if !items.contains(&item) {
                items.push(item);
            }
        }
        transactions.push(Transaction { id, user, items });
    }

    Ok(TransactionCorpus {
        vocab,
        transactions,
    })
}

/// Write a corpus back out in the transaction file format.
pub fn write_transactions<W: Write>(w: &mut W, corpus: &TransactionCorpus) -> std::io::Result<()> {
    writeln!(w, "user_id,transaction_id,position,item_id,category_id")?;
    for txn in &corpus.transactions {
        for (pos, &item) in txn.items.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{}",
                corpus.vocab.user_name(txn.user),
                txn.id,
                pos,
                corpus.vocab.item_name(item),
                corpus.vocab.category_of(item).unwrap_or("")
            )?;
        }
    }
    Ok(())
}

/// Emit every directed pair of distinct basket positions within `window`.
///
/// For positions i < j with j - i <= window both (items[i], items[j]) and
/// (items[j], items[i]) are emitted, each carrying the transaction's user.
pub fn sample_pairs(corpus: &TransactionCorpus, window: usize) -> Vec<CoPurchasePair> {
    assert!(window >= 1, "window must be >= 1");
    let mut pairs = Vec::new();
    for txn in &corpus.transactions {
        let n = txn.items.len();
        for i in 0..n {
            for j in (i + 1)..n.min(i + window + 1) {
                let (a, b) = (txn.items[i], txn.items[j]);
                pairs.push(CoPurchasePair {
                    query: a,
                    rec: b,
                    user: txn.user,
                });
                pairs.push(CoPurchasePair {
                    query: b,
                    rec: a,
                    user: txn.user,
                });
            }
        }
    }
    pairs
}

/// Keep only pairs whose two items have different categories.
pub fn filter_same_category(
    pairs: impl IntoIterator<Item = CoPurchasePair>,
    vocab: &Vocab,
) -> Result<Vec<CoPurchasePair>> {
    let mut kept = Vec::new();
    for pair in pairs {
        let query_cat = vocab
            .category_of(pair.query)
            .ok_or_else(|| Error::MissingCategory(vocab.item_name(pair.query).to_string()))?;
        let rec_cat = vocab
            .category_of(pair.rec)
            .ok_or_else(|| Error::MissingCategory(vocab.item_name(pair.rec).to_string()))?;
        if query_cat != rec_cat {
            kept.push(pair);
        }
    }
    Ok(kept)
}

/// Tally pair occurrences into a frequency table with query-slot marginals.
pub fn build_stats(pairs: &[CoPurchasePair]) -> CoPurchaseStats {
    let mut stats = CoPurchaseStats::default();
    for pair in pairs {
        *stats.pair_freq.entry((pair.query, pair.rec)).or_insert(0) += 1;
        *stats.marginal.entry(pair.query).or_insert(0) += 1;
        stats.total += 1;
    }
    stats
}

// ---------------------------------------------------------------------------
// File formats for persisted pairs, stats, and catalogs.
// ---------------------------------------------------------------------------

/// TSV: `query<TAB>rec<TAB>user`, one row per sampled pair occurrence.
pub fn write_pairs<W: Write>(
    w: &mut W,
    pairs: &[CoPurchasePair],
    vocab: &Vocab,
) -> std::io::Result<()> {
    writeln!(w, "# query\trec\tuser")?;
    for pair in pairs {
        writeln!(
            w,
            "{}\t{}\t{}",
            vocab.item_name(pair.query),
            vocab.item_name(pair.rec),
            vocab.user_name(pair.user)
        )?;
    }
    Ok(())
}

pub fn load_pairs<R: BufRead>(reader: R, vocab: &mut Vocab) -> Result<Vec<CoPurchasePair>> {
    let mut pairs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| Error::Io {
            path: "<pairs>".into(),
            source,
        })?;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        let (query, rec, user) = match (fields.next(), fields.next(), fields.next(), fields.next())
        {
            (Some(q), Some(r), Some(u), None) => (q, r, u),
            _ => {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: "expected 3 tab-separated fields".to_string(),
                })
            }
        };
        pairs.push(CoPurchasePair {
            query: vocab.intern_item(query),
            rec: vocab.intern_item(rec),
            user: vocab.intern_user(user),
        });
    }
    Ok(pairs)
}

/// TSV: `query<TAB>rec<TAB>count`, sorted by item name for stable output.
pub fn write_stats<W: Write>(
    w: &mut W,
    stats: &CoPurchaseStats,
    vocab: &Vocab,
) -> std::io::Result<()> {
    writeln!(w, "# query\trec\tcount")?;
    let mut rows: Vec<(&str, &str, u64)> = stats
        .pair_freq
        .iter()
        .map(|(&(q, r), &c)| (vocab.item_name(q), vocab.item_name(r), c))
        .collect();
    rows.sort_unstable();
    for (query, rec, count) in rows {
        writeln!(w, "{query}\t{rec}\t{count}")?;
    }
    Ok(())
}

pub fn load_stats<R: BufRead>(reader: R, vocab: &mut Vocab) -> Result<CoPurchaseStats> {
    let mut stats = CoPurchaseStats::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| Error::Io {
            path: "<stats>".into(),
            source,
        })?;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            line: idx + 1,
            message,
        };
        let mut fields = line.split('\t');
        let (query, rec, count) = match (fields.next(), fields.next(), fields.next(), fields.next())
        {
            (Some(q), Some(r), Some(c), None) => (q, r, c),
            _ => return Err(parse_err("expected 3 tab-separated fields".to_string())),
        };
        let count: u64 = count
            .parse()
            .map_err(|_| parse_err(format!("`{count}` is not a count")))?;
        let query = vocab.intern_item(query);
        let rec = vocab.intern_item(rec);
        *stats.pair_freq.entry((query, rec)).or_insert(0) += count;
        *stats.marginal.entry(query).or_insert(0) += count;
        stats.total += count;
    }
    Ok(stats)
}

/// TSV: `item<TAB>category<TAB>purchases`, sorted by item name.
pub fn write_catalog<W: Write>(w: &mut W, vocab: &Vocab) -> std::io::Result<()> {
    writeln!(w, "# item\tcategory\tpurchases")?;
    let mut rows: Vec<(&str, &str, u64)> = vocab
        .item_ids()
        .map(|id| {
            (
                vocab.item_name(id),
                vocab.category_of(id).unwrap_or(""),
                vocab.purchases(id),
            )
        })
        .collect();
    rows.sort_unstable();
    for (item, category, purchases) in rows {
        writeln!(w, "{item}\t{category}\t{purchases}")?;
    }
    Ok(())
}

/// Load a catalog file, attaching categories and purchase counts to `vocab`.
pub fn load_catalog<R: BufRead>(reader: R, vocab: &mut Vocab) -> Result<()> {
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| Error::Io {
            path: "<catalog>".into(),
            source,
        })?;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            line: idx + 1,
            message,
        };
        let mut fields = line.split('\t');
        let (item, category, purchases) =
            match (fields.next(), fields.next(), fields.next(), fields.next()) {
                (Some(i), Some(c), Some(p), None) => (i, c, p),
                _ => return Err(parse_err("expected 3 tab-separated fields".to_string())),
            };
        let purchases: u64 = purchases
            .parse()
            .map_err(|_| parse_err(format!("`{purchases}` is not a count")))?;
        let id = vocab.intern_item(item);
        if !category.is_empty() {
            vocab.set_item_category(id, category)?;
        }
        vocab.add_purchases(id, purchases);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn corpus_from(rows: &str) -> TransactionCorpus {
        let text = format!("user_id,transaction_id,position,item_id,category_id\n{rows}");
        ingest_transactions(Cursor::new(text)).unwrap()
    }

    #[test]
    fn ingest_single_transaction() {
        let corpus = corpus_from("u1,t1,0,a,c1\nu1,t1,1,b,c1\nu1,t1,2,c,c2\n");
        assert_eq!(corpus.n_transactions(), 1);
        assert_eq!(corpus.transactions[0].items.len(), 3);
        assert_eq!(corpus.vocab.n_items(), 3);
        assert_eq!(corpus.vocab.n_users(), 1);
        let names: Vec<&str> = corpus.transactions[0]
            .items
            .iter()
            .map(|&i| corpus.vocab.item_name(i))
            .collect();
        assert_eq!(names, ["a", "b", "c"]);
    }

    #[test]
    fn ingest_empty_file() {
        let corpus = ingest_transactions(Cursor::new("")).unwrap();
        assert_eq!(corpus.n_transactions(), 0);
        assert_eq!(corpus.vocab.n_items(), 0);
        assert_eq!(corpus.vocab.n_users(), 0);
    }

    #[test]
    fn ingest_dedups_repeated_item_to_first_occurrence() {
        // Enumerating the fixture by hand: positions 0,1,2 carry a,b,a; the
        // deduped basket must be [a, b].
        let corpus = corpus_from("u1,t1,0,a,c1\nu1,t1,1,b,c2\nu1,t1,2,a,c1\n");
        let names: Vec<&str> = corpus.transactions[0]
            .items
            .iter()
            .map(|&i| corpus.vocab.item_name(i))
            .collect();
        assert_eq!(names, ["a", "b"]);
        // raw purchase count still sees both rows for `a`
        let a = corpus.vocab.item_id("a").unwrap();
        assert_eq!(corpus.vocab.purchases(a), 2);
    }

    #[test]
    fn ingest_orders_by_position_not_file_order() {
        let corpus = corpus_from("u1,t1,2,c,c1\nu1,t1,0,a,c1\nu1,t1,1,b,c1\n");
        let names: Vec<&str> = corpus.transactions[0]
            .items
            .iter()
            .map(|&i| corpus.vocab.item_name(i))
            .collect();
        assert_eq!(names, ["a", "b", "c"]);
    }

    #[test]
    fn ingest_reports_byte_offset_of_bad_row() {
        let text = "user_id,transaction_id,position,item_id,category_id\nu1,t1,zero,a,c1\n";
        let err = ingest_transactions(Cursor::new(text)).unwrap_err();
        match err {
            Error::MalformedRow { offset, field, .. } => {
                assert_eq!(offset, 52); // header line + newline
                assert_eq!(field, "position");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn ingest_rejects_duplicate_position() {
        let err = corpus_err("u1,t1,0,a,c1\nu1,t1,0,b,c1\n");
        assert!(matches!(err, Error::MalformedRow { field: "position", .. }));
    }

    #[test]
    fn ingest_rejects_category_conflict() {
        let err = corpus_err("u1,t1,0,a,c1\nu2,t2,0,a,c2\n");
        match err {
            Error::CategoryConflict { item, .. } => assert_eq!(item, "a"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    fn corpus_err(rows: &str) -> Error {
        let text = format!("user_id,transaction_id,position,item_id,category_id\n{rows}");
        ingest_transactions(Cursor::new(text)).unwrap_err()
    }

    fn pair_names(corpus: &TransactionCorpus, pairs: &[CoPurchasePair]) -> Vec<(String, String)> {
        pairs
            .iter()
            .map(|p| {
                (
                    corpus.vocab.item_name(p.query).to_string(),
                    corpus.vocab.item_name(p.rec).to_string(),
                )
            })
            .collect()
    }

    /// Brute-force oracle: enumerate position pairs directly.
    fn enumerate_pairs(items: &[&str], window: usize) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for i in 0..items.len() {
            for j in 0..items.len() {
                if i != j && i.abs_diff(j) <= window {
                    out.push((items[i].to_string(), items[j].to_string()));
                }
            }
        }
        out.sort();
        out
    }

    #[test]
    fn single_item_transaction_yields_no_pairs() {
        let corpus = corpus_from("u1,t1,0,a,c1\n");
        assert!(sample_pairs(&corpus, 5).is_empty());
    }

    #[test]
    fn window_five_covers_all_pairs_of_three() {
        let corpus = corpus_from("u1,t1,0,a,c1\nu1,t1,1,b,c1\nu1,t1,2,c,c1\n");
        let mut got = pair_names(&corpus, &sample_pairs(&corpus, 5));
        got.sort();
        assert_eq!(got, enumerate_pairs(&["a", "b", "c"], 5));
        assert_eq!(got.len(), 6);
    }

    #[test]
    fn window_one_keeps_adjacent_pairs_only() {
        let corpus = corpus_from("u1,t1,0,a,c1\nu1,t1,1,b,c1\nu1,t1,2,c,c1\nu1,t1,3,d,c1\n");
        let mut got = pair_names(&corpus, &sample_pairs(&corpus, 1));
        got.sort();
        assert_eq!(got, enumerate_pairs(&["a", "b", "c", "d"], 1));
        assert_eq!(got.len(), 6);
    }

    #[test]
    fn pair_count_matches_position_pair_formula() {
        for n in 1..8usize {
            for window in 1..6usize {
                let rows: String = (0..n)
                    .map(|i| format!("u1,t1,{i},item{i},c1\n"))
                    .collect();
                let corpus = corpus_from(&rows);
                let expected = (0..n)
                    .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
                    .filter(|&(i, j)| j - i <= window)
                    .count();
                assert_eq!(sample_pairs(&corpus, window).len(), 2 * expected);
            }
        }
    }

    #[test]
    fn filter_drops_same_category_keeps_cross_category() {
        let corpus = corpus_from("u1,t1,0,a,c1\nu1,t1,1,b,c1\nu1,t1,2,c,c2\n");
        let pairs = sample_pairs(&corpus, 5);
        let kept = filter_same_category(pairs.clone(), &corpus.vocab).unwrap();
        for pair in &kept {
            assert_ne!(
                corpus.vocab.category_of(pair.query),
                corpus.vocab.category_of(pair.rec)
            );
        }
        // a-b share c1 and are dropped; a-c and b-c cross categories.
        assert_eq!(kept.len(), 4);
        assert!(filter_same_category(Vec::new(), &corpus.vocab)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn filter_errors_on_item_without_category() {
        let mut vocab = Vocab::new();
        let a = vocab.intern_item("a");
        let b = vocab.intern_item("b");
        vocab.set_item_category(a, "c1").unwrap();
        let err = filter_same_category(
            vec![CoPurchasePair {
                query: a,
                rec: b,
                user: UserId(0),
            }],
            &vocab,
        )
        .unwrap_err();
        match err {
            Error::MissingCategory(item) => assert_eq!(item, "b"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn build_stats_tallies_pairs_and_marginals() {
        let mut vocab = Vocab::new();
        let a = vocab.intern_item("a");
        let b = vocab.intern_item("b");
        let c = vocab.intern_item("c");
        let u = UserId(0);
        let mk = |q, r| CoPurchasePair {
            query: q,
            rec: r,
            user: u,
        };
        let stats = build_stats(&[mk(a, b), mk(a, b), mk(a, c)]);
        assert_eq!(stats.freq(a, b), 2);
        assert_eq!(stats.freq(a, c), 1);
        assert_eq!(stats.marginal_of(a), 3);
        assert_eq!(stats.total, 3);

        let empty = build_stats(&[]);
        assert_eq!(empty.total, 0);
        assert!(empty.pair_freq.is_empty());

        let single = build_stats(&[mk(a, b)]);
        assert_eq!(single.total, 1);
        assert_eq!(single.marginal_of(a), 1);
    }

    #[test]
    fn stats_invariants_hold_and_are_shuffle_independent() {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;

        let corpus = corpus_from(
            "u1,t1,0,a,c1\nu1,t1,1,b,c2\nu1,t1,2,c,c1\nu2,t2,0,b,c2\nu2,t2,1,c,c1\nu2,t2,2,d,c3\n",
        );
        let mut pairs = sample_pairs(&corpus, 5);
        let stats = build_stats(&pairs);
        assert_eq!(stats.total, pairs.len() as u64);
        assert_eq!(stats.total, stats.pair_freq.values().sum::<u64>());
        for (&item, &m) in &stats.marginal {
            let query_slot: u64 = stats.co_recs(item).map(|(_, c)| c).sum();
            assert_eq!(m, query_slot);
            assert!(m <= stats.total);
            // symmetric emission: rec-slot sum equals query-slot sum
            let rec_slot: u64 = stats
                .pair_freq
                .iter()
                .filter(|(&(_, r), _)| r == item)
                .map(|(_, &c)| c)
                .sum();
            assert_eq!(m, rec_slot);
        }

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        pairs.shuffle(&mut rng);
        let reshuffled = build_stats(&pairs);
        assert_eq!(stats.pair_freq, reshuffled.pair_freq);
        assert_eq!(stats.marginal, reshuffled.marginal);
    }

    #[test]
    fn stats_merge_matches_whole_build() {
        let corpus = corpus_from(
            "u1,t1,0,a,c1\nu1,t1,1,b,c2\nu2,t2,0,b,c2\nu2,t2,1,c,c1\nu2,t2,2,a,c1\n",
        );
        let pairs = sample_pairs(&corpus, 5);
        let whole = build_stats(&pairs);
        let (left, right) = pairs.split_at(pairs.len() / 2);
        let mut merged = build_stats(left);
        merged.merge(&build_stats(right));
        assert_eq!(whole.pair_freq, merged.pair_freq);
        assert_eq!(whole.marginal, merged.marginal);
        assert_eq!(whole.total, merged.total);
    }

    #[test]
    fn pairs_and_stats_round_trip_through_files() {
        let corpus = corpus_from("u1,t1,0,a,c1\nu1,t1,1,b,c2\nu1,t1,2,c,c3\n");
        let pairs = sample_pairs(&corpus, 5);
        let stats = build_stats(&pairs);

        let mut buf = Vec::new();
        write_pairs(&mut buf, &pairs, &corpus.vocab).unwrap();
        let mut vocab2 = Vocab::new();
        let loaded = load_pairs(Cursor::new(buf), &mut vocab2).unwrap();
        assert_eq!(loaded.len(), pairs.len());
        let loaded_stats = build_stats(&loaded);
        assert_eq!(loaded_stats.total, stats.total);

        let mut buf = Vec::new();
        write_stats(&mut buf, &stats, &corpus.vocab).unwrap();
        let mut vocab3 = Vocab::new();
        let reloaded = load_stats(Cursor::new(buf), &mut vocab3).unwrap();
        assert_eq!(reloaded.total, stats.total);
        for (&(q, r), &c) in &stats.pair_freq {
            let q2 = vocab3.item_id(corpus.vocab.item_name(q)).unwrap();
            let r2 = vocab3.item_id(corpus.vocab.item_name(r)).unwrap();
            assert_eq!(reloaded.freq(q2, r2), c);
        }
    }
}
