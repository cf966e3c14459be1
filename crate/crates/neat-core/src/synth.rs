//! Synthetic transaction corpora with planted complements and popularity noise.
//!
//! Baskets are assembled from three sources so that the co-occurrence
//! structure is known exactly:
//!
//! * content items, each included independently with probability
//!   `basket_mean / |content|` (so basket sizes are Binomial with the
//!   requested mean and, crucially, item inclusions are independent);
//! * planted complements: when the first item of a planted pair landed in the
//!   basket, its partner is added with probability `boost`;
//! * noise items, each included independently with probability `noise_prob`
//!   regardless of basket content.
//!
//! With `theme_bias > 0` each basket additionally picks a theme (a pair of
//! adjacent categories) and concentrates that fraction of the expected
//! content mass on the theme's items. Themed corpora have clustered
//! co-purchases that only the noise items bridge; item inclusions are then
//! independent only conditionally on the theme, so leave the bias at 0 when
//! marginal independence matters.
//!
//! Empty baskets are rejected and redrawn. The final basket is shuffled to
//! assign purchase order.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{ItemId, Transaction, TransactionCorpus, Vocab};
use crate::error::{Error, Result};
use crate::kv::{parse_field, parse_kv};

/// Declarative description of a synthetic corpus.
///
/// Planted pairs are the consecutive-id pairs (item_0, item_1),
/// (item_2, item_3), ...; noise items take the highest ids. Categories are
/// assigned round-robin by item index, which makes each planted pair
/// cross-category as long as `categories >= 2`.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub items: usize,
    pub categories: usize,
    pub transactions: usize,
    pub users: usize,
    pub basket_mean: f64,
    pub planted_pairs: usize,
    pub boost: f64,
    pub noise_items: usize,
    pub noise_prob: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            items: 100,
            categories: 10,
            transactions: 1000,
            users: 100,
            basket_mean: 4.0,
            planted_pairs: 5,
            boost: 0.9,
            noise_items: 1,
            noise_prob: 0.3,
        }
    }
}

impl SynthSpec {
    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut spec = Self::default();
        for (key, value) in parse_kv(text)? {
            match key.as_str() {
                "items" => spec.items = parse_field(&key, &value)?,
                "categories" => spec.categories = parse_field(&key, &value)?,
                "transactions" => spec.transactions = parse_field(&key, &value)?,
                "users" => spec.users = parse_field(&key, &value)?,
                "basket_mean" => spec.basket_mean = parse_field(&key, &value)?,
                "planted_pairs" => spec.planted_pairs = parse_field(&key, &value)?,
                "boost" => spec.boost = parse_field(&key, &value)?,
                "noise_items" => spec.noise_items = parse_field(&key, &value)?,
                "noise_prob" => spec.noise_prob = parse_field(&key, &value)?,
                other => {
                    return Err(Error::InvalidConfig(format!("unknown key `{other}`")));
                }
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(0.0..=1.0).contains(&self.boost) {
            return bad(format!("boost {} outside [0, 1]", self.boost));
        }
        if !(0.0..=1.0).contains(&self.noise_prob) {
            return bad(format!("noise_prob {} outside [0, 1]", self.noise_prob));
        }
        if self.items < 2 {
            return bad("need at least 2 items".to_string());
        }
        if self.categories == 0 {
            return bad("need at least 1 category".to_string());
        }
        if self.planted_pairs > 0 && self.categories < 2 {
            return bad("planted pairs require at least 2 categories".to_string());
        }
        if self.users == 0 {
            return bad("need at least 1 user".to_string());
        }
        let content = self.items.saturating_sub(self.noise_items);
        if 2 * self.planted_pairs > content {
            return bad(format!(
                "{} planted pairs need {} non-noise items, only {content} available",
                self.planted_pairs,
                2 * self.planted_pairs
            ));
        }
        if content == 0 {
            return bad("no content items left after reserving noise items".to_string());
        }
        if self.basket_mean <= 0.0 || self.basket_mean > content as f64 {
            return bad(format!(
                "basket_mean {} outside (0, {content}]",
                self.basket_mean
            ));
        }
        Ok(())
    }

    pub fn item_name(&self, index: usize) -> String {
        format!("item_{index:04}")
    }

    pub fn category_name(&self, index: usize) -> String {
        format!("cat_{:02}", index % self.categories)
    }

    pub fn user_name(&self, index: usize) -> String {
        format!("user_{index:05}")
    }

    /// Planted complement pairs by item name, first member listed first.
    pub fn planted_pair_names(&self) -> Vec<(String, String)> {
        (0..self.planted_pairs)
            .map(|i| (self.item_name(2 * i), self.item_name(2 * i + 1)))
            .collect()
    }

    /// Popularity-noise item names (the highest item ids).
    pub fn noise_item_names(&self) -> Vec<String> {
        (self.items - self.noise_items..self.items)
            .map(|i| self.item_name(i))
            .collect()
    }
}

/// Generate a corpus; deterministic for a fixed spec and seed.
pub fn generate_synthetic(spec: &SynthSpec, seed: u64) -> Result<TransactionCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut vocab = Vocab::new();
    for i in 0..spec.items {
        let id = vocab.intern_item(&spec.item_name(i));
        vocab.set_item_category(id, &spec.category_name(i))?;
    }
    for u in 0..spec.users {
        vocab.intern_user(&spec.user_name(u));
    }

    let content_count = spec.items - spec.noise_items;
    let include_prob = spec.basket_mean / content_count as f64;
    let planted: Vec<(u32, u32)> = (0..spec.planted_pairs)
        .map(|i| (2 * i as u32, 2 * i as u32 + 1))
        .collect();
    let noise: Vec<u32> = (content_count as u32..spec.items as u32).collect();

    let mut transactions = Vec::with_capacity(spec.transactions);
    for t in 0..spec.transactions {
        let mut basket: Vec<u32> = Vec::new();
        while basket.is_empty() {
            for item in 0..content_count as u32 {
                if rng.gen::<f64>() < include_prob {
                    basket.push(item);
                }
            }
        }
        for &(a, b) in &planted {
            if basket.contains(&a) && !basket.contains(&b) && rng.gen::<f64>() < spec.boost {
                basket.push(b);
            }
        }
        for &x in &noise {
            if rng.gen::<f64>() < spec.noise_prob {
                basket.push(x);
            }
        }
        basket.shuffle(&mut rng);

        let user = rng.gen_range(0..spec.users as u32);
        for &item in &basket {
            vocab.add_purchases(ItemId(item), 1);
        }
        transactions.push(Transaction {
            id: format!("t{t:07}"),
            user: crate::corpus::UserId(user),
            items: basket.into_iter().map(ItemId).collect(),
        });
    }

    Ok(TransactionCorpus {
        vocab,
        transactions,
    })
}
