//! Trustworthy evaluation labels from a chi-squared independence test.
//!
//! Treating the purchase of each item as a Bernoulli variable, every directed
//! pair in the co-purchase table gets a 2x2 contingency table built from its
//! joint count, the two item marginals, and the grand total. Pairs whose
//! uncorrected chi-squared statistic (1 dof) exceeds the critical value for
//! the requested p-value AND whose observed joint count exceeds the
//! independence expectation are emitted as positively-dependent labels.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use crate::corpus::{CoPurchaseStats, ItemId, Vocab};
use crate::error::{Error, Result};

/// Observed and expected counts of the four purchase events for one pair.
///
/// `o1` counts co-purchases of the pair itself, `o2`/`o3` co-purchases of one
/// item without the other, `o4` everything else; `e*` are the expectations
/// under independence.
#[derive(Debug, Clone, PartialEq)]
pub struct ContingencyTable {
    pub o1: u64,
    pub o2: u64,
    pub o3: u64,
    pub o4: u64,
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub e4: f64,
    pub n: u64,
}

/// One positively-dependent pair with its test statistic.
#[derive(Debug, Clone)]
pub struct LabelRecord {
    pub query: ItemId,
    pub rec: ItemId,
    pub chi2: f64,
    pub o1: u64,
    pub e1: f64,
}

/// Labels partitioned by test outcome, plus the degenerate-marginal skip
/// count. The three partitions cover the pair set exactly.
#[derive(Debug, Default)]
pub struct LabelGenOutcome {
    pub qualified: Vec<LabelRecord>,
    pub negatively_dependent: Vec<LabelRecord>,
    pub independent: Vec<LabelRecord>,
    pub skipped_degenerate: u64,
}

/// Build the 2x2 table for a pair from the co-purchase stats.
pub fn build_contingency(
    stats: &CoPurchaseStats,
    query: ItemId,
    rec: ItemId,
    vocab: &Vocab,
) -> Result<ContingencyTable> {
    let named_err = |make: fn(String, String) -> Error| {
        make(
            vocab.item_name(query).to_string(),
            vocab.item_name(rec).to_string(),
        )
    };
    let o1 = *stats
        .pair_freq
        .get(&(query, rec))
        .ok_or_else(|| named_err(|query, rec| Error::PairAbsent { query, rec }))?;
    let n = stats.total;
    let f_query = stats.marginal_of(query);
    let f_rec = stats.marginal_of(rec);

    let checked = |value: u64, bound: u64, cell: &'static str| {
        if value > bound {
            Err(Error::InconsistentCounts {
                query: vocab.item_name(query).to_string(),
                rec: vocab.item_name(rec).to_string(),
                cell,
            })
        } else {
            Ok(bound - value)
        }
    };
    let o2 = checked(o1, f_rec, "o2")?;
    let o3 = checked(o1, f_query, "o3")?;
    let o4 = checked(f_query + f_rec, n + o1, "o4")?;

    let nf = n as f64;
    let (fq, fr) = (f_query as f64, f_rec as f64);
    Ok(ContingencyTable {
        o1,
        o2,
        o3,
        o4,
        e1: fq * fr / nf,
        e2: (nf - fq) * fr / nf,
        e3: fq * (nf - fr) / nf,
        e4: (nf - fq) * (nf - fr) / nf,
        n,
    })
}

/// Uncorrected chi-squared statistic of the table (1 degree of freedom).
pub fn chi_squared(table: &ContingencyTable) -> Result<f64> {
    let observed = [table.o1, table.o2, table.o3, table.o4];
    let expected = [table.e1, table.e2, table.e3, table.e4];
    let mut stat = 0.0;
    for (&o, &e) in observed.iter().zip(&expected) {
        if e == 0.0 {
            return Err(Error::DegenerateCell);
        }
        let diff = o as f64 - e;
        stat += diff * diff / e;
    }
    Ok(stat)
}

/// Critical values of the chi-squared(1) upper tail for the standard
/// p-values; anything else is inverted numerically.
const CRITICAL_TABLE: [(f64, f64); 3] = [
    (0.05, 3.8414588206941285),
    (0.01, 6.634896601021217),
    (0.001, 10.827566170662733),
];

/// chi-squared(1) survival function: P(X > x) = erfc(sqrt(x / 2)).
fn chi2_survival(x: f64) -> f64 {
    libm::erfc((x / 2.0).sqrt())
}

/// Upper-tail critical value of chi-squared with 1 dof for the p-value.
///
/// The three standard p-values come from a built-in table; other values are
/// found by bisecting the survival function to 1e-9.
pub fn threshold_for(p_value: f64) -> Result<f64> {
    if !(p_value > 0.0 && p_value < 1.0) {
        return Err(Error::PValueOutOfRange(p_value));
    }
    for &(p, threshold) in &CRITICAL_TABLE {
        if p == p_value {
            return Ok(threshold);
        }
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while chi2_survival(hi) > p_value {
        hi *= 2.0;
    }
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if chi2_survival(mid) > p_value {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Test every pair in the stats and partition it.
///
/// Qualified: statistic above threshold and o1 > e1. Negatively dependent:
/// above threshold with o1 <= e1. Everything else independent. Pairs with a
/// zero expected cell are skipped and counted. Each partition is sorted by
/// statistic descending (ties by item name).
pub fn generate_labels(
    stats: &CoPurchaseStats,
    p_value: f64,
    vocab: &Vocab,
) -> Result<LabelGenOutcome> {
    if stats.total == 0 {
        return Err(Error::EmptyInput("co-purchase stats"));
    }
    let threshold = threshold_for(p_value)?;
    let mut outcome = LabelGenOutcome::default();
    for (&(query, rec), &o1) in &stats.pair_freq {
        debug_assert!(o1 > 0);
        let table = build_contingency(stats, query, rec, vocab)?;
        let chi2 = match chi_squared(&table) {
            Ok(stat) => stat,
            Err(Error::DegenerateCell) => {
                log::debug!(
                    "skipping pair ({}, {}): zero expected cell",
                    vocab.item_name(query),
                    vocab.item_name(rec)
                );
                outcome.skipped_degenerate += 1;
                continue;
            }
            Err(other) => return Err(other),
        };
        let record = LabelRecord {
            query,
            rec,
            chi2,
            o1,
            e1: table.e1,
        };
        if chi2 > threshold {
            if (o1 as f64) > table.e1 {
                outcome.qualified.push(record);
            } else {
                outcome.negatively_dependent.push(record);
            }
        } else {
            outcome.independent.push(record);
        }
    }
    let sort = |records: &mut Vec<LabelRecord>| {
        records.sort_by(|a, b| {
            b.chi2
                .partial_cmp(&a.chi2)
                .unwrap()
                .then_with(|| vocab.item_name(a.query).cmp(vocab.item_name(b.query)))
                .then_with(|| vocab.item_name(a.rec).cmp(vocab.item_name(b.rec)))
        });
    };
    sort(&mut outcome.qualified);
    sort(&mut outcome.negatively_dependent);
    sort(&mut outcome.independent);
    Ok(outcome)
}

/// Write qualified labels as TSV, deduplicating symmetric twins (the
/// direction whose query is lexicographically smaller is kept).
pub fn write_labels<W: Write>(
    w: &mut W,
    qualified: &[LabelRecord],
    vocab: &Vocab,
    p_value: f64,
    threshold: f64,
) -> std::io::Result<()> {
    writeln!(w, "# p_value={p_value}\tchi2_threshold={threshold:.3}")?;
    writeln!(w, "# query\trec\tchi2\to1\te1")?;
    let mut seen: HashSet<(ItemId, ItemId)> = HashSet::new();
    for record in qualified {
        let (a, b) = (record.query, record.rec);
        let canonical = if vocab.item_name(a) <= vocab.item_name(b) {
            (a, b)
        } else {
            (b, a)
        };
        if !seen.insert(canonical) {
            continue;
        }
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            vocab.item_name(canonical.0),
            vocab.item_name(canonical.1),
            record.chi2,
            record.o1,
            record.e1
        )?;
    }
    Ok(())
}

/// Parsed label file: header values plus the records.
pub struct LabelFile {
    pub p_value: f64,
    pub threshold: f64,
    pub records: Vec<LabelRecord>,
}

pub fn load_labels<R: BufRead>(reader: R, vocab: &mut Vocab) -> Result<LabelFile> {
    let mut p_value = f64::NAN;
    let mut threshold = f64::NAN;
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| Error::Io {
            path: "<labels>".into(),
            source,
        })?;
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            for token in rest.split('\t') {
                let token = token.trim();
                if let Some(v) = token.strip_prefix("p_value=") {
                    p_value = v.parse().unwrap_or(f64::NAN);
                } else if let Some(v) = token.strip_prefix("chi2_threshold=") {
                    threshold = v.parse().unwrap_or(f64::NAN);
                }
            }
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            line: idx + 1,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(parse_err("expected 5 tab-separated fields".to_string()));
        }
        records.push(LabelRecord {
            query: vocab.intern_item(fields[0]),
            rec: vocab.intern_item(fields[1]),
            chi2: fields[2]
                .parse()
                .map_err(|_| parse_err(format!("bad chi2 `{}`", fields[2])))?,
            o1: fields[3]
                .parse()
                .map_err(|_| parse_err(format!("bad o1 `{}`", fields[3])))?,
            e1: fields[4]
                .parse()
                .map_err(|_| parse_err(format!("bad e1 `{}`", fields[4])))?,
        });
    }
    Ok(LabelFile {
        p_value,
        threshold,
        records,
    })
}

/// Partition counts as a JSON-style text block.
pub fn diagnostics_json(outcome: &LabelGenOutcome) -> String {
    format!(
        "{{\n  \"qualified\": {},\n  \"negatively_dependent\": {},\n  \"independent\": {},\n  \"skipped_degenerate\": {}\n}}\n",
        outcome.qualified.len(),
        outcome.negatively_dependent.len(),
        outcome.independent.len(),
        outcome.skipped_degenerate
    )
}
