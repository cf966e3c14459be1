//! Margin/BPR loss surfaces, analytic gradients, negative sampling, and the
//! mini-batch SGD loop.
//!
//! The per-record objective is a hinge over the log expected likelihood:
//! `max(0, margin - logE(q, v) + logE(q, v'))`, summed over the record's
//! negatives. The user-aware mode adds two pairwise logistic (BPR) terms that
//! prefer the user's purchased items over unpurchased ones. Gradients are
//! closed-form; the hinge uses subgradient 0 at the kink, so a clipped term
//! contributes nothing.
//!
//! Training accumulates each mini-batch's gradient, applies one plain SGD
//! step with the batch mean (`parameter -= lr * batch_grad / batch_len`), and
//! clamps every touched variance into `[c_min, c_max]`. With one thread the
//! run is bit-reproducible under a fixed seed; with more threads, batches are
//! sharded across workers that write unsynchronized sparse updates (lost
//! updates tolerated, no reproducibility promise).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{build_stats, CoPurchasePair, CoPurchaseStats, ItemId, Vocab};
use crate::embedding::{
    init_table, log_el_parts, log_expected_likelihood, EmbeddingTable, GaussianEmbedding,
};
use crate::error::{Error, Result};

/// Which objective the trainer optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    /// Item-level margin loss only.
    Neat,
    /// Margin loss plus the two user-item BPR terms.
    NeatBpr,
}

impl TrainMode {
    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "neat" => Ok(TrainMode::Neat),
            "neat-bpr" | "neat_bpr" => Ok(TrainMode::NeatBpr),
            other => Err(Error::InvalidConfig(format!(
                "unknown mode `{other}` (expected `neat` or `neat-bpr`)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            TrainMode::Neat => "neat",
            TrainMode::NeatBpr => "neat-bpr",
        }
    }
}

/// Hyperparameters and run controls.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub margin: f64,
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub num_negatives: usize,
    pub window: usize,
    pub mode: TrainMode,
    pub seed: u64,
    pub c_min: f64,
    pub c_max: f64,
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            margin: 0.5,
            dim: 100,
            epochs: 5,
            learning_rate: 0.05,
            batch_size: 128,
            num_negatives: 5,
            window: 5,
            mode: TrainMode::Neat,
            seed: 42,
            c_min: 1e-3,
            c_max: 10.0,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.margin <= 0.0 {
            return bad(format!("margin {} must be positive", self.margin));
        }
        if self.learning_rate <= 0.0 {
            return bad(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            ));
        }
        if self.dim == 0
            || self.epochs == 0
            || self.batch_size == 0
            || self.num_negatives == 0
            || self.window == 0
            || self.threads == 0
        {
            return bad("dim, epochs, batch_size, num_negatives, window, threads must be >= 1"
                .to_string());
        }
        if self.c_min <= 0.0 || self.c_min >= self.c_max {
            return bad(format!(
                "variance clamp [{}, {}] must satisfy 0 < c_min < c_max",
                self.c_min, self.c_max
            ));
        }
        Ok(())
    }

    /// Apply `key = value` overrides (config-file contents).
    pub fn apply_kv(&mut self, entries: &[(String, String)]) -> Result<()> {
        use crate::kv::parse_field;
        for (key, value) in entries {
            match key.as_str() {
                "margin" => self.margin = parse_field(key, value)?,
                "dim" => self.dim = parse_field(key, value)?,
                "epochs" => self.epochs = parse_field(key, value)?,
                "learning_rate" => self.learning_rate = parse_field(key, value)?,
                "batch_size" => self.batch_size = parse_field(key, value)?,
                "num_negatives" => self.num_negatives = parse_field(key, value)?,
                "window" => self.window = parse_field(key, value)?,
                "mode" => self.mode = TrainMode::parse(value)?,
                "seed" => self.seed = parse_field(key, value)?,
                "c_min" => self.c_min = parse_field(key, value)?,
                "c_max" => self.c_max = parse_field(key, value)?,
                "threads" => self.threads = parse_field(key, value)?,
                other => {
                    return Err(Error::InvalidConfig(format!("unknown key `{other}`")));
                }
            }
        }
        Ok(())
    }

    fn init_scale(&self) -> f64 {
        0.5 / self.dim as f64
    }
}

/// One training record: a co-purchase (query, positive) with its negatives,
/// plus user context in BPR mode.
#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub query: String,
    pub positive: String,
    pub negatives: Vec<String>,
    pub bpr: Option<BprContext>,
}

/// User context for the two BPR terms: items the user never purchased.
#[derive(Debug, Clone)]
pub struct BprContext {
    pub user: String,
    pub neg_query: String,
    pub neg_positive: String,
}

/// Gradient of one sample's loss, keyed by identifier; only touched
/// parameters appear.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradientSet {
    pub means: BTreeMap<String, Vec<f64>>,
    pub variances: BTreeMap<String, f64>,
    pub thetas: BTreeMap<String, Vec<f64>>,
}

/// Hinge loss of one (query, positive, negative) triple.
pub fn item_margin_loss(
    q: &GaussianEmbedding,
    v: &GaussianEmbedding,
    v_neg: &GaussianEmbedding,
    margin: f64,
) -> Result<f64> {
    let le_pos = log_expected_likelihood(q, v)?;
    let le_neg = log_expected_likelihood(q, v_neg)?;
    Ok((margin - le_pos + le_neg).max(0.0))
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Pairwise logistic loss `1 - sigma(theta . pos - theta . neg)`, in (0, 1).
pub fn bpr_loss(theta: &[f64], pos_mean: &[f64], neg_mean: &[f64]) -> Result<f64> {
    if theta.len() != pos_mean.len() || theta.len() != neg_mean.len() {
        return Err(Error::DimMismatch {
            left: theta.len(),
            right: pos_mean.len().max(neg_mean.len()),
        });
    }
    Ok(1.0 - sigmoid(dot(theta, pos_mean) - dot(theta, neg_mean)))
}

// ---------------------------------------------------------------------------
// Shared per-sample kernel.
//
// Both the audited public `sample_loss`/`gradients` and the hot training loop
// build a `SampleView` snapshot and run the same arithmetic.
// ---------------------------------------------------------------------------

struct SampleView {
    dim: usize,
    query_mean: Vec<f64>,
    query_var: f64,
    pos_mean: Vec<f64>,
    pos_var: f64,
    neg_means: Vec<Vec<f64>>,
    neg_vars: Vec<f64>,
    bpr: Option<BprView>,
}

struct BprView {
    theta: Vec<f64>,
    neg_query_mean: Vec<f64>,
    neg_pos_mean: Vec<f64>,
}

#[derive(Default)]
struct SampleGrads {
    loss: f64,
    any_hinge_active: bool,
    d_query_mean: Vec<f64>,
    d_query_var: f64,
    d_pos_mean: Vec<f64>,
    d_pos_var: f64,
    d_neg_means: Vec<Vec<f64>>,
    d_neg_vars: Vec<f64>,
    neg_active: Vec<bool>,
    d_theta: Vec<f64>,
    d_neg_query_mean: Vec<f64>,
    d_neg_pos_mean: Vec<f64>,
}

fn margin_hinge_terms(view: &SampleView, margin: f64) -> (f64, Vec<f64>) {
    let (le_pos, _, _) = log_el_parts(
        &view.query_mean,
        view.query_var,
        &view.pos_mean,
        view.pos_var,
    );
    let terms = view
        .neg_means
        .iter()
        .zip(&view.neg_vars)
        .map(|(neg_mean, &neg_var)| {
            let (le_neg, _, _) = log_el_parts(&view.query_mean, view.query_var, neg_mean, neg_var);
            margin - le_pos + le_neg
        })
        .collect();
    (le_pos, terms)
}

fn compute_sample_loss(view: &SampleView, margin: f64) -> f64 {
    let (_, terms) = margin_hinge_terms(view, margin);
    let mut loss: f64 = terms.iter().map(|t| t.max(0.0)).sum();
    if let Some(bpr) = &view.bpr {
        let z1 = dot(&bpr.theta, &view.query_mean) - dot(&bpr.theta, &bpr.neg_query_mean);
        let z2 = dot(&bpr.theta, &view.pos_mean) - dot(&bpr.theta, &bpr.neg_pos_mean);
        loss += (1.0 - sigmoid(z1)) + (1.0 - sigmoid(z2));
    }
    loss
}

fn compute_sample_grads(view: &SampleView, margin: f64) -> SampleGrads {
    let dim = view.dim;
    let d = dim as f64;
    let mut g = SampleGrads {
        d_query_mean: vec![0.0; dim],
        d_pos_mean: vec![0.0; dim],
        d_neg_means: vec![vec![0.0; dim]; view.neg_means.len()],
        d_neg_vars: vec![0.0; view.neg_means.len()],
        neg_active: vec![false; view.neg_means.len()],
        ..Default::default()
    };

    let (le_pos, s_pos, dist_pos) = log_el_parts(
        &view.query_mean,
        view.query_var,
        &view.pos_mean,
        view.pos_var,
    );
    let inv_s_pos = 1.0 / s_pos;
    // dlogE/dvar, same for both variances of the pair
    let var_grad_pos = -d / (2.0 * s_pos) + dist_pos / (2.0 * s_pos * s_pos);

    for (j, (neg_mean, &neg_var)) in view.neg_means.iter().zip(&view.neg_vars).enumerate() {
        let (le_neg, s_neg, dist_neg) =
            log_el_parts(&view.query_mean, view.query_var, neg_mean, neg_var);
        let term = margin - le_pos + le_neg;
        if term <= 0.0 {
            continue; // clipped hinge: subgradient 0
        }
        g.loss += term;
        g.any_hinge_active = true;
        g.neg_active[j] = true;
        let inv_s_neg = 1.0 / s_neg;
        let var_grad_neg = -d / (2.0 * s_neg) + dist_neg / (2.0 * s_neg * s_neg);
        for i in 0..dim {
            let delta_pos = view.query_mean[i] - view.pos_mean[i];
            let delta_neg = view.query_mean[i] - neg_mean[i];
            g.d_query_mean[i] += delta_pos * inv_s_pos - delta_neg * inv_s_neg;
            g.d_pos_mean[i] -= delta_pos * inv_s_pos;
            g.d_neg_means[j][i] += delta_neg * inv_s_neg;
        }
        g.d_query_var += -var_grad_pos + var_grad_neg;
        g.d_pos_var -= var_grad_pos;
        g.d_neg_vars[j] += var_grad_neg;
    }

    if let Some(bpr) = &view.bpr {
        g.d_theta = vec![0.0; dim];
        g.d_neg_query_mean = vec![0.0; dim];
        g.d_neg_pos_mean = vec![0.0; dim];

        let z1 = dot(&bpr.theta, &view.query_mean) - dot(&bpr.theta, &bpr.neg_query_mean);
        let s1 = sigmoid(z1);
        g.loss += 1.0 - s1;
        let c1 = s1 * (1.0 - s1);
        let z2 = dot(&bpr.theta, &view.pos_mean) - dot(&bpr.theta, &bpr.neg_pos_mean);
        let s2 = sigmoid(z2);
        g.loss += 1.0 - s2;
        let c2 = s2 * (1.0 - s2);
        for i in 0..dim {
            g.d_theta[i] += -c1 * (view.query_mean[i] - bpr.neg_query_mean[i])
                - c2 * (view.pos_mean[i] - bpr.neg_pos_mean[i]);
            g.d_query_mean[i] += -c1 * bpr.theta[i];
            g.d_neg_query_mean[i] += c1 * bpr.theta[i];
            g.d_pos_mean[i] += -c2 * bpr.theta[i];
            g.d_neg_pos_mean[i] += c2 * bpr.theta[i];
        }
    }

    g
}

fn view_from_table(
    sample: &TrainingSample,
    table: &EmbeddingTable,
    config: &TrainConfig,
) -> Result<SampleView> {
    let q = table.item(&sample.query)?;
    let v = table.item(&sample.positive)?;
    let mut neg_means = Vec::with_capacity(sample.negatives.len());
    let mut neg_vars = Vec::with_capacity(sample.negatives.len());
    for name in &sample.negatives {
        let e = table.item(name)?;
        neg_means.push(e.mean);
        neg_vars.push(e.variance);
    }
    let bpr = match (config.mode, &sample.bpr) {
        (TrainMode::Neat, _) => None,
        (TrainMode::NeatBpr, Some(ctx)) => Some(BprView {
            theta: table.user_vector(&ctx.user)?.to_vec(),
            neg_query_mean: table.item_mean(&ctx.neg_query)?.to_vec(),
            neg_pos_mean: table.item_mean(&ctx.neg_positive)?.to_vec(),
        }),
        (TrainMode::NeatBpr, None) => {
            return Err(Error::InvalidConfig(
                "neat-bpr mode requires user context on every sample".to_string(),
            ))
        }
    };
    Ok(SampleView {
        dim: table.dim(),
        query_mean: q.mean,
        query_var: q.variance,
        pos_mean: v.mean,
        pos_var: v.variance,
        neg_means,
        neg_vars,
        bpr,
    })
}

/// Loss of one sample under the configured mode.
pub fn sample_loss(
    sample: &TrainingSample,
    table: &EmbeddingTable,
    config: &TrainConfig,
) -> Result<f64> {
    let view = view_from_table(sample, table, config)?;
    Ok(compute_sample_loss(&view, config.margin))
}

/// Analytic gradient of [`sample_loss`] with respect to every touched
/// parameter.
pub fn gradients(
    sample: &TrainingSample,
    table: &EmbeddingTable,
    config: &TrainConfig,
) -> Result<GradientSet> {
    let view = view_from_table(sample, table, config)?;
    let g = compute_sample_grads(&view, config.margin);
    let mut set = GradientSet::default();

    let mut add_item = |name: &str, mean: &[f64], var: f64| {
        let entry = set
            .means
            .entry(name.to_string())
            .or_insert_with(|| vec![0.0; mean.len()]);
        for (e, m) in entry.iter_mut().zip(mean) {
            *e += m;
        }
        *set.variances.entry(name.to_string()).or_insert(0.0) += var;
    };

    if g.any_hinge_active || view.bpr.is_some() {
        add_item(&sample.query, &g.d_query_mean, g.d_query_var);
        add_item(&sample.positive, &g.d_pos_mean, g.d_pos_var);
    }
    for (j, name) in sample.negatives.iter().enumerate() {
        if g.neg_active[j] {
            add_item(name, &g.d_neg_means[j], g.d_neg_vars[j]);
        }
    }
    if let Some(ctx) = &sample.bpr {
        if config.mode == TrainMode::NeatBpr {
            add_item(&ctx.neg_query, &g.d_neg_query_mean, 0.0);
            add_item(&ctx.neg_positive, &g.d_neg_pos_mean, 0.0);
            let entry = set
                .thetas
                .entry(ctx.user.clone())
                .or_insert_with(|| vec![0.0; g.d_theta.len()]);
            for (e, t) in entry.iter_mut().zip(&g.d_theta) {
                *e += t;
            }
        }
    }
    Ok(set)
}

// ---------------------------------------------------------------------------
// Negative sampling
// ---------------------------------------------------------------------------

const NEGATIVE_MAX_RETRIES: usize = 50;
const UNIGRAM_POWER: f64 = 0.75;

/// Rejection sampler over the powered unigram distribution.
///
/// Draws items proportional to `marginal^0.75`, rejecting candidates that are
/// co-purchased with the query (or, for user negatives, purchased by the
/// user). After `NEGATIVE_MAX_RETRIES` rejections the last draw is returned
/// with a logged warning.
pub struct NegativeSampler<'a> {
    stats: &'a CoPurchaseStats,
    items: Vec<ItemId>,
    dist: WeightedIndex<f64>,
    rng: ChaCha8Rng,
}

impl<'a> NegativeSampler<'a> {
    pub fn new(stats: &'a CoPurchaseStats, catalog: &[ItemId], seed: u64) -> Result<Self> {
        if catalog.len() < 2 {
            return Err(Error::CatalogTooSmall(catalog.len()));
        }
        let mut weights: Vec<f64> = catalog
            .iter()
            .map(|&item| (stats.marginal_of(item) as f64).powf(UNIGRAM_POWER))
            .collect();
        if weights.iter().all(|&w| w == 0.0) {
            weights.iter_mut().for_each(|w| *w = 1.0);
        }
        let dist = WeightedIndex::new(&weights)
            .map_err(|e| Error::InvalidConfig(format!("bad sampling weights: {e}")))?;
        Ok(Self {
            stats,
            items: catalog.to_vec(),
            dist,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    fn draw_raw(&mut self) -> ItemId {
        self.items[self.dist.sample(&mut self.rng)]
    }

    /// Draw a negative for `query`: an item not co-purchased with it.
    pub fn draw(&mut self, query: ItemId) -> ItemId {
        let mut last = self.draw_raw();
        for _ in 0..NEGATIVE_MAX_RETRIES {
            if last != query && self.stats.freq(query, last) == 0 {
                return last;
            }
            last = self.draw_raw();
        }
        log::warn!(
            "negative sampling exhausted {NEGATIVE_MAX_RETRIES} retries for query {query:?}; \
             returning a co-purchased item"
        );
        last
    }

    /// Draw an item the user never purchased.
    pub fn draw_user_negative(&mut self, purchased: &HashSet<ItemId>) -> ItemId {
        let mut last = self.draw_raw();
        for _ in 0..NEGATIVE_MAX_RETRIES {
            if !purchased.contains(&last) {
                return last;
            }
            last = self.draw_raw();
        }
        log::warn!(
            "negative sampling exhausted {NEGATIVE_MAX_RETRIES} retries for a user negative; \
             returning a purchased item"
        );
        last
    }
}

// ---------------------------------------------------------------------------
// SGD loop
// ---------------------------------------------------------------------------

/// Per-epoch trace entry.
#[derive(Debug, Clone)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub seconds: f64,
}

/// Final table plus the loss trace.
#[derive(Debug)]
pub struct TrainOutcome {
    pub table: EmbeddingTable,
    pub trace: Vec<EpochStats>,
}

/// Parameter store shared across workers; f64 values bit-packed in atomics so
/// hogwild-style workers can update without locks.
struct ParamStore {
    dim: usize,
    means: Vec<AtomicU64>,
    vars: Vec<AtomicU64>,
    thetas: Vec<AtomicU64>,
}

impl ParamStore {
    fn from_table(table: &EmbeddingTable) -> Self {
        let pack = |v: &[f64]| v.iter().map(|x| AtomicU64::new(x.to_bits())).collect();
        Self {
            dim: table.dim(),
            means: pack(&table.means),
            vars: pack(&table.variances),
            thetas: pack(&table.thetas),
        }
    }

    fn into_table(self, item_names: Vec<String>, user_names: Vec<String>) -> EmbeddingTable {
        let unpack = |v: Vec<AtomicU64>| -> Vec<f64> {
            v.into_iter()
                .map(|x| f64::from_bits(x.into_inner()))
                .collect()
        };
        EmbeddingTable::from_parts(
            self.dim,
            item_names,
            unpack(self.means),
            unpack(self.vars),
            user_names,
            unpack(self.thetas),
        )
    }

    #[inline]
    fn load(slot: &AtomicU64) -> f64 {
        f64::from_bits(slot.load(Ordering::Relaxed))
    }

    #[inline]
    fn store(slot: &AtomicU64, value: f64) {
        slot.store(value.to_bits(), Ordering::Relaxed)
    }

    fn copy_mean(&self, item: u32, out: &mut Vec<f64>) {
        out.clear();
        let base = item as usize * self.dim;
        out.extend(self.means[base..base + self.dim].iter().map(ParamStore::load));
    }

    fn copy_theta(&self, user: u32, out: &mut Vec<f64>) {
        out.clear();
        let base = user as usize * self.dim;
        out.extend(self.thetas[base..base + self.dim].iter().map(ParamStore::load));
    }

    fn var(&self, item: u32) -> f64 {
        ParamStore::load(&self.vars[item as usize])
    }
}

#[derive(Default)]
struct BatchAcc {
    item_means: HashMap<u32, Vec<f64>>,
    item_vars: HashMap<u32, f64>,
    user_thetas: HashMap<u32, Vec<f64>>,
}

impl BatchAcc {
    fn clear(&mut self) {
        self.item_means.clear();
        self.item_vars.clear();
        self.user_thetas.clear();
    }

    fn add_item(&mut self, dim: usize, item: u32, mean: &[f64], var: f64) {
        let entry = self
            .item_means
            .entry(item)
            .or_insert_with(|| vec![0.0; dim]);
        for (e, m) in entry.iter_mut().zip(mean) {
            *e += m;
        }
        *self.item_vars.entry(item).or_insert(0.0) += var;
    }

    fn add_user(&mut self, dim: usize, user: u32, theta: &[f64]) {
        let entry = self
            .user_thetas
            .entry(user)
            .or_insert_with(|| vec![0.0; dim]);
        for (e, t) in entry.iter_mut().zip(theta) {
            *e += t;
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn derive_seed(base: u64, stream: u64, epoch: u64, worker: u64) -> u64 {
    splitmix(base ^ splitmix(stream ^ splitmix(epoch ^ splitmix(worker))))
}

struct WorkerCtx<'a> {
    params: &'a ParamStore,
    pairs: &'a [CoPurchasePair],
    stats: &'a CoPurchaseStats,
    catalog: &'a [ItemId],
    purchased: &'a HashMap<u32, HashSet<ItemId>>,
    config: &'a TrainConfig,
}

/// Process a set of batches; returns the summed loss.
fn run_batches(
    ctx: &WorkerCtx<'_>,
    order: &[u32],
    batch_indices: impl Iterator<Item = usize>,
    sampler_seed: u64,
    epoch: usize,
) -> Result<f64> {
    let cfg = ctx.config;
    let dim = cfg.dim;
    let mut sampler = NegativeSampler::new(ctx.stats, ctx.catalog, sampler_seed)?;
    let mut acc = BatchAcc::default();
    let mut loss_sum = 0.0;

    let mut view = SampleView {
        dim,
        query_mean: Vec::with_capacity(dim),
        query_var: 0.0,
        pos_mean: Vec::with_capacity(dim),
        pos_var: 0.0,
        neg_means: Vec::new(),
        neg_vars: Vec::new(),
        bpr: None,
    };
    let mut neg_ids = Vec::with_capacity(cfg.num_negatives);
    let empty_purchases = HashSet::new();

    for batch_index in batch_indices {
        let start = batch_index * cfg.batch_size;
        if start >= order.len() {
            break;
        }
        let batch = &order[start..(start + cfg.batch_size).min(order.len())];
        acc.clear();

        for &pair_idx in batch {
            let pair = ctx.pairs[pair_idx as usize];
            let (q, v) = (pair.query.0, pair.rec.0);

            ctx.params.copy_mean(q, &mut view.query_mean);
            view.query_var = ctx.params.var(q);
            ctx.params.copy_mean(v, &mut view.pos_mean);
            view.pos_var = ctx.params.var(v);

            neg_ids.clear();
            view.neg_means.clear();
            view.neg_vars.clear();
            for _ in 0..cfg.num_negatives {
                let neg = sampler.draw(pair.query);
                let mut mean = Vec::with_capacity(dim);
                ctx.params.copy_mean(neg.0, &mut mean);
                view.neg_means.push(mean);
                view.neg_vars.push(ctx.params.var(neg.0));
                neg_ids.push(neg.0);
            }

            let mut bpr_ids: Option<(u32, u32, u32)> = None;
            view.bpr = if cfg.mode == TrainMode::NeatBpr {
                let user = pair.user.0;
                let purchased = ctx.purchased.get(&user).unwrap_or(&empty_purchases);
                let neg_q = sampler.draw_user_negative(purchased);
                let neg_v = sampler.draw_user_negative(purchased);
                bpr_ids = Some((user, neg_q.0, neg_v.0));
                let mut theta = Vec::with_capacity(dim);
                ctx.params.copy_theta(user, &mut theta);
                let mut nq_mean = Vec::with_capacity(dim);
                ctx.params.copy_mean(neg_q.0, &mut nq_mean);
                let mut nv_mean = Vec::with_capacity(dim);
                ctx.params.copy_mean(neg_v.0, &mut nv_mean);
                Some(BprView {
                    theta,
                    neg_query_mean: nq_mean,
                    neg_pos_mean: nv_mean,
                })
            } else {
                None
            };

            let g = compute_sample_grads(&view, cfg.margin);
            loss_sum += g.loss;

            if g.any_hinge_active || view.bpr.is_some() {
                acc.add_item(dim, q, &g.d_query_mean, g.d_query_var);
                acc.add_item(dim, v, &g.d_pos_mean, g.d_pos_var);
            }
            for (j, &neg) in neg_ids.iter().enumerate() {
                if g.neg_active[j] {
                    acc.add_item(dim, neg, &g.d_neg_means[j], g.d_neg_vars[j]);
                }
            }
            if let Some((user, neg_q, neg_v)) = bpr_ids {
                acc.add_item(dim, neg_q, &g.d_neg_query_mean, 0.0);
                acc.add_item(dim, neg_v, &g.d_neg_pos_mean, 0.0);
                acc.add_user(dim, user, &g.d_theta);
            }
        }

        // apply the mean batch gradient, then clamp touched variances
        let lr = cfg.learning_rate / batch.len() as f64;
        let mut finite = true;
        for (&item, grad) in &acc.item_means {
            let base = item as usize * dim;
            for (i, &gi) in grad.iter().enumerate() {
                let slot = &ctx.params.means[base + i];
                let next = ParamStore::load(slot) - lr * gi;
                finite &= next.is_finite();
                ParamStore::store(slot, next);
            }
        }
        for (&item, &gv) in &acc.item_vars {
            let slot = &ctx.params.vars[item as usize];
            let next = (ParamStore::load(slot) - lr * gv).clamp(cfg.c_min, cfg.c_max);
            finite &= next.is_finite();
            ParamStore::store(slot, next);
        }
        for (&user, grad) in &acc.user_thetas {
            let base = user as usize * dim;
            for (i, &gi) in grad.iter().enumerate() {
                let slot = &ctx.params.thetas[base + i];
                let next = ParamStore::load(slot) - lr * gi;
                finite &= next.is_finite();
                ParamStore::store(slot, next);
            }
        }
        if !finite {
            return Err(Error::NonFiniteParameter { epoch, batch_index });
        }
    }
    Ok(loss_sum)
}

/// Run mini-batch SGD over the pair set.
///
/// Every vocab item gets an embedding; in BPR mode every vocab user gets a
/// preference vector and user purchase sets are derived from the pairs.
pub fn train(
    pairs: &[CoPurchasePair],
    vocab: &Vocab,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(Error::EmptyInput("training pairs"));
    }

    let stats = build_stats(pairs);
    let catalog: Vec<ItemId> = vocab.item_ids().collect();
    let user_names: Vec<String> = if config.mode == TrainMode::NeatBpr {
        vocab.user_names().to_vec()
    } else {
        Vec::new()
    };
    let table = init_table(
        vocab.item_names(),
        &user_names,
        config.dim,
        config.seed,
        config.init_scale(),
    );
    let params = ParamStore::from_table(&table);

    let mut purchased: HashMap<u32, HashSet<ItemId>> = HashMap::new();
    if config.mode == TrainMode::NeatBpr {
        for pair in pairs {
            let entry = purchased.entry(pair.user.0).or_default();
            entry.insert(pair.query);
            entry.insert(pair.rec);
        }
    }

    let ctx = WorkerCtx {
        params: &params,
        pairs,
        stats: &stats,
        catalog: &catalog,
        purchased: &purchased,
        config,
    };

    let n_batches = pairs.len().div_ceil(config.batch_size);
    let mut order: Vec<u32> = (0..pairs.len() as u32).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 1, 0, 0));
    let mut trace = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let started = Instant::now();
        order.shuffle(&mut shuffle_rng);

        let loss_sum = if config.threads <= 1 {
            run_batches(
                &ctx,
                &order,
                0..n_batches,
                derive_seed(config.seed, 2, epoch as u64, 0),
                epoch,
            )?
        } else {
            let threads = config.threads;
            let order_ref = &order;
            let ctx_ref = &ctx;
            std::thread::scope(|scope| {
                let handles: Vec<_> = (0..threads)
                    .map(|worker| {
                        scope.spawn(move || {
                            run_batches(
                                ctx_ref,
                                order_ref,
                                (worker..n_batches).step_by(threads),
                                derive_seed(config.seed, 2, epoch as u64, worker as u64 + 1),
                                epoch,
                            )
                        })
                    })
                    .collect();
                let mut total = 0.0;
                for handle in handles {
                    total += handle.join().expect("worker panicked")?;
                }
                Ok::<f64, Error>(total)
            })?
        };

        trace.push(EpochStats {
            epoch: epoch + 1,
            mean_loss: loss_sum / pairs.len() as f64,
            seconds: started.elapsed().as_secs_f64(),
        });
    }

    let table = params.into_table(vocab.item_names().to_vec(), user_names);
    Ok(TrainOutcome { table, trace })
}
