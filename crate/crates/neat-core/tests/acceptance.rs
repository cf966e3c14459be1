//! Acceptance suite: one test per criterion, each printing a PASS line.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines
//! and the measured values behind them.

use std::collections::{BTreeMap, HashSet};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use neat_core::corpus::{
    build_stats, filter_same_category, ingest_transactions, sample_pairs, CoPurchasePair,
    CoPurchaseStats, ItemId, UserId, Vocab,
};
use neat_core::embedding::{
    init_table, log_expected_likelihood, EmbeddingTable, GaussianEmbedding,
};
use neat_core::evaluator::{
    evaluate, global_popularity_order, hr_at_k, ndcg_at_k, EvalReport, Scorer,
};
use neat_core::labelgen::{
    build_contingency, chi_squared, generate_labels, threshold_for, write_labels, LabelRecord,
};
use neat_core::synth::{generate_synthetic, SynthSpec};
use neat_core::trainer::{
    gradients, sample_loss, train, BprContext, TrainConfig, TrainMode, TrainingSample,
};

// ---------------------------------------------------------------------------
// Criterion 1: closed-form log expected likelihood vs numerical integration
// ---------------------------------------------------------------------------

fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let z = x - mean;
    (-z * z / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

fn simpson(f: &impl Fn(f64) -> f64, a: f64, m: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_simpson(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    eps: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(f, a, lm, m, fa, flm, fm);
    let right = simpson(f, m, rm, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * eps {
        left + right + delta / 15.0
    } else {
        adaptive_simpson(f, a, m, fa, flm, fm, left, eps / 2.0, depth - 1)
            + adaptive_simpson(f, m, b, fm, frm, fb, right, eps / 2.0, depth - 1)
    }
}

/// Numerical oracle for the 1-D expected likelihood integral.
fn integrate_density_product(mean_a: f64, var_a: f64, mean_b: f64, var_b: f64) -> f64 {
    let f = |x: f64| normal_pdf(x, mean_a, var_a) * normal_pdf(x, mean_b, var_b);
    let sigma = var_a.max(var_b).sqrt();
    let lo = mean_a.min(mean_b) - 12.0 * sigma;
    let hi = mean_a.max(mean_b) + 12.0 * sigma;
    let m = 0.5 * (lo + hi);
    let (fa, fm, fb) = (f(lo), f(m), f(hi));
    let whole = simpson(&f, lo, m, hi, fa, fm, fb);
    // absolute tolerance scaled from the first estimate keeps the relative
    // error far below 1e-6 even for tiny integrals
    let eps = (whole.abs() * 1e-11).max(1e-300);
    adaptive_simpson(&f, lo, hi, fa, fm, fb, whole, eps, 48)
}

#[test]
fn acceptance_1_expected_likelihood_matches_integration_oracle() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let a = GaussianEmbedding {
            mean: vec![rng.gen_range(-2.0..2.0)],
            variance: rng.gen_range(0.1..3.0),
        };
        let b = GaussianEmbedding {
            mean: vec![rng.gen_range(-2.0..2.0)],
            variance: rng.gen_range(0.1..3.0),
        };
        let closed = log_expected_likelihood(&a, &b).unwrap();
        let quad = integrate_density_product(a.mean[0], a.variance, b.mean[0], b.variance).ln();
        worst = worst.max((closed - quad).abs());
        assert!(
            (closed - quad).abs() < 1e-6,
            "closed={closed} quad={quad} a={a:?} b={b:?}"
        );
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "oracle comparison took {elapsed:.1}s");
    println!(
        "criterion 1 (expected-likelihood oracle, worst |diff|={worst:.2e}, {elapsed:.2}s): PASS"
    );
}

// ---------------------------------------------------------------------------
// Criterion 2: analytic gradients vs central finite differences
// ---------------------------------------------------------------------------

const KINK_SLACK: f64 = 1e-3;
const FD_STEP: f64 = 1e-5;
const FD_REL_TOL: f64 = 1e-4;

/// Random table + sample whose hinge terms all sit at least `KINK_SLACK`
/// from the kink.
fn random_fd_case(
    rng: &mut ChaCha8Rng,
    dim: usize,
    mode: TrainMode,
) -> (EmbeddingTable, TrainingSample, TrainConfig) {
    let names: Vec<String> = ["q", "v", "n0", "n1", "n2", "n3", "n4", "bq", "bv"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let users = vec!["u".to_string()];
    let config = TrainConfig {
        dim,
        mode,
        ..TrainConfig::default()
    };
    'outer: loop {
        let mut table = init_table(&names, &users, dim, rng.gen(), 1.0);
        for name in &names {
            for value in table.item_mean_mut(name).unwrap() {
                *value = rng.gen_range(-1.5..1.5);
            }
            *table.item_variance_mut(name).unwrap() = rng.gen_range(0.3..3.0);
        }
        for value in table.user_vector_mut("u").unwrap() {
            *value = rng.gen_range(-1.5..1.5);
        }
        let sample = TrainingSample {
            query: "q".into(),
            positive: "v".into(),
            negatives: (0..5).map(|j| format!("n{j}")).collect(),
            bpr: match mode {
                TrainMode::Neat => None,
                TrainMode::NeatBpr => Some(BprContext {
                    user: "u".into(),
                    neg_query: "bq".into(),
                    neg_positive: "bv".into(),
                }),
            },
        };
        // reject draws too close to any hinge kink
        let q = table.item("q").unwrap();
        let v = table.item("v").unwrap();
        let le_pos = log_expected_likelihood(&q, &v).unwrap();
        for neg_name in &sample.negatives {
            let n = table.item(neg_name).unwrap();
            let le_neg = log_expected_likelihood(&q, &n).unwrap();
            if (config.margin - le_pos + le_neg).abs() < KINK_SLACK {
                continue 'outer;
            }
        }
        return (table, sample, config);
    }
}

fn assert_fd_close(analytic: f64, fd: f64, what: &str) {
    let denom = analytic.abs().max(fd.abs());
    if denom < 1e-8 {
        return;
    }
    let rel = (analytic - fd).abs() / denom;
    assert!(
        rel < FD_REL_TOL,
        "{what}: analytic={analytic} fd={fd} rel={rel}"
    );
}

#[test]
fn acceptance_2_gradients_match_finite_differences() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut checked_partials = 0usize;
    for case in 0..500 {
        let dim = if case % 2 == 0 { 2 } else { 10 };
        let mode = if case % 4 < 2 {
            TrainMode::Neat
        } else {
            TrainMode::NeatBpr
        };
        let (table, sample, config) = random_fd_case(&mut rng, dim, mode);
        let grads = gradients(&sample, &table, &config).unwrap();

        for (name, mean_grad) in &grads.means {
            for (i, &analytic) in mean_grad.iter().enumerate() {
                let mut t = table.clone();
                t.item_mean_mut(name).unwrap()[i] += FD_STEP;
                let up = sample_loss(&sample, &t, &config).unwrap();
                t.item_mean_mut(name).unwrap()[i] -= 2.0 * FD_STEP;
                let down = sample_loss(&sample, &t, &config).unwrap();
                assert_fd_close(analytic, (up - down) / (2.0 * FD_STEP), name);
                checked_partials += 1;
            }
        }
        for (name, &analytic) in &grads.variances {
            let mut t = table.clone();
            *t.item_variance_mut(name).unwrap() += FD_STEP;
            let up = sample_loss(&sample, &t, &config).unwrap();
            *t.item_variance_mut(name).unwrap() -= 2.0 * FD_STEP;
            let down = sample_loss(&sample, &t, &config).unwrap();
            assert_fd_close(analytic, (up - down) / (2.0 * FD_STEP), name);
            checked_partials += 1;
        }
        for (name, theta_grad) in &grads.thetas {
            for (i, &analytic) in theta_grad.iter().enumerate() {
                let mut t = table.clone();
                t.user_vector_mut(name).unwrap()[i] += FD_STEP;
                let up = sample_loss(&sample, &t, &config).unwrap();
                t.user_vector_mut(name).unwrap()[i] -= 2.0 * FD_STEP;
                let down = sample_loss(&sample, &t, &config).unwrap();
                assert_fd_close(analytic, (up - down) / (2.0 * FD_STEP), name);
                checked_partials += 1;
            }
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "gradient check took {elapsed:.1}s");
    println!(
        "criterion 2 (gradient correctness, {checked_partials} partials, {elapsed:.2}s): PASS"
    );
}

// ---------------------------------------------------------------------------
// Criterion 3: chi-squared pipeline vs an independent raw-count oracle
// ---------------------------------------------------------------------------

/// Independent reimplementation working from the raw pair list alone.
fn brute_force_labels(
    raw_pairs: &[(String, String)],
    threshold: f64,
) -> BTreeMap<(String, String), (f64, &'static str)> {
    let mut pair_counts: BTreeMap<(String, String), u64> = BTreeMap::new();
    let mut query_slot: BTreeMap<String, u64> = BTreeMap::new();
    for (a, b) in raw_pairs {
        *pair_counts.entry((a.clone(), b.clone())).or_insert(0) += 1;
        *query_slot.entry(a.clone()).or_insert(0) += 1;
    }
    let n = raw_pairs.len() as f64;
    let mut out = BTreeMap::new();
    for ((a, b), &o1) in &pair_counts {
        let fa = *query_slot.get(a).unwrap_or(&0) as f64;
        let fb = *query_slot.get(b).unwrap_or(&0) as f64;
        let o = [
            o1 as f64,
            fb - o1 as f64,
            fa - o1 as f64,
            n - fa - fb + o1 as f64,
        ];
        let e = [
            fa * fb / n,
            (n - fa) * fb / n,
            fa * (n - fb) / n,
            (n - fa) * (n - fb) / n,
        ];
        if e.iter().any(|&x| x == 0.0) {
            out.insert((a.clone(), b.clone()), (f64::NAN, "skipped"));
            continue;
        }
        let mut stat = 0.0;
        for (oi, ei) in o.iter().zip(&e) {
            let diff = oi - ei;
            stat += diff * diff / ei;
        }
        let verdict = if stat > threshold {
            if o[0] > e[0] {
                "qualified"
            } else {
                "negative"
            }
        } else {
            "independent"
        };
        out.insert((a.clone(), b.clone()), (stat, verdict));
    }
    out
}

/// Random small corpus: a handful of baskets over a small catalog.
fn random_corpus_pairs(seed: u64) -> (CoPurchaseStats, Vocab, Vec<(String, String)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vocab = Vocab::new();
    let n_items = rng.gen_range(5..12);
    let items: Vec<ItemId> = (0..n_items)
        .map(|i| vocab.intern_item(&format!("i{i:02}")))
        .collect();
    let mut pairs: Vec<CoPurchasePair> = Vec::new();
    for _ in 0..8 {
        let size = rng.gen_range(2..=4);
        let mut basket: Vec<ItemId> = Vec::new();
        while basket.len() < size {
            let item = items[rng.gen_range(0..items.len())];
            if !basket.contains(&item) {
                basket.push(item);
            }
        }
        for i in 0..basket.len() {
            for j in (i + 1)..basket.len() {
                pairs.push(CoPurchasePair {
                    query: basket[i],
                    rec: basket[j],
                    user: UserId(0),
                });
                pairs.push(CoPurchasePair {
                    query: basket[j],
                    rec: basket[i],
                    user: UserId(0),
                });
            }
        }
    }
    assert!(pairs.len() <= 200, "corpus has {} pairs", pairs.len());
    let raw = pairs
        .iter()
        .map(|p| {
            (
                vocab.item_name(p.query).to_string(),
                vocab.item_name(p.rec).to_string(),
            )
        })
        .collect();
    (build_stats(&pairs), vocab, raw)
}

#[test]
fn acceptance_3_chi_squared_matches_brute_force() {
    let threshold = threshold_for(0.05).unwrap();
    let mut compared = 0usize;
    for seed in 0..100u64 {
        let (stats, vocab, raw) = random_corpus_pairs(300 + seed);
        let brute = brute_force_labels(&raw, threshold);
        let outcome = generate_labels(&stats, 0.05, &vocab).unwrap();
        let collect = |records: &[LabelRecord]| -> BTreeMap<(String, String), f64> {
            records
                .iter()
                .map(|r| {
                    (
                        (
                            vocab.item_name(r.query).to_string(),
                            vocab.item_name(r.rec).to_string(),
                        ),
                        r.chi2,
                    )
                })
                .collect()
        };
        let qualified = collect(&outcome.qualified);
        let negative = collect(&outcome.negatively_dependent);
        let independent = collect(&outcome.independent);
        let mut skipped = 0u64;
        for (pair, (stat, verdict)) in brute {
            match verdict {
                "qualified" => assert_eq!(qualified[&pair], stat, "{pair:?}"),
                "negative" => assert_eq!(negative[&pair], stat, "{pair:?}"),
                "independent" => assert_eq!(independent[&pair], stat, "{pair:?}"),
                "skipped" => skipped += 1,
                _ => unreachable!(),
            }
            compared += 1;
        }
        assert_eq!(skipped, outcome.skipped_degenerate);
        assert_eq!(
            qualified.len() + negative.len() + independent.len(),
            stats.pair_freq.len() - skipped as usize
        );
    }

    // hand-derived table
    let mut vocab = Vocab::new();
    let vi = vocab.intern_item("vi");
    let vj = vocab.intern_item("vj");
    let mut stats = CoPurchaseStats::default();
    stats.pair_freq.insert((vi, vj), 30);
    stats.marginal.insert(vi, 40);
    stats.marginal.insert(vj, 50);
    stats.total = 1000;
    let table = build_contingency(&stats, vi, vj, &vocab).unwrap();
    assert_eq!(table.e1, 2.0, "e1 must be exactly 2");
    let stat = chi_squared(&table).unwrap();
    assert!(
        (stat - 429.83).abs() <= 0.01,
        "hand-derived statistic {stat}"
    );
    println!("criterion 3 (chi-squared brute-force equivalence, {compared} pairs): PASS");
}

// ---------------------------------------------------------------------------
// Criterion 4: critical-value fidelity
// ---------------------------------------------------------------------------

#[test]
fn acceptance_4_threshold_fidelity() {
    let t001 = threshold_for(0.001).unwrap();
    assert!((10.827..=10.829).contains(&t001), "t(0.001)={t001}");
    let t05 = threshold_for(0.05).unwrap();
    assert!((t05 - 3.841).abs() <= 0.001, "t(0.05)={t05}");
    let t01 = threshold_for(0.01).unwrap();
    assert!((t01 - 6.635).abs() <= 0.001, "t(0.01)={t01}");
    println!("criterion 4 (threshold fidelity: {t05:.4}, {t01:.4}, {t001:.4}): PASS");
}

// ---------------------------------------------------------------------------
// Criterion 5: label-set nesting across p-values
// ---------------------------------------------------------------------------

#[test]
fn acceptance_5_label_sets_nest() {
    let mut checked = 0usize;
    for seed in 0..50u64 {
        let (stats, vocab, _) = random_corpus_pairs(500 + seed);
        if stats.total == 0 {
            continue;
        }
        let keys = |p: f64| -> HashSet<(ItemId, ItemId)> {
            generate_labels(&stats, p, &vocab)
                .unwrap()
                .qualified
                .iter()
                .map(|r| (r.query, r.rec))
                .collect()
        };
        let q001 = keys(0.001);
        let q01 = keys(0.01);
        let q05 = keys(0.05);
        assert!(q001.len() <= q01.len() && q01.len() <= q05.len());
        assert!(q001.is_subset(&q01), "seed {seed}");
        assert!(q01.is_subset(&q05), "seed {seed}");
        checked += 1;
    }
    println!("criterion 5 (label-set nesting on {checked} random stats): PASS");
}

// ---------------------------------------------------------------------------
// Criteria 6 and 7: planted-synthetic pipeline
// ---------------------------------------------------------------------------

fn planted_spec() -> SynthSpec {
    SynthSpec {
        items: 500,
        categories: 10,
        transactions: 50_000,
        users: 2_000,
        basket_mean: 4.0,
        planted_pairs: 50,
        boost: 0.85,
        noise_items: 3,
        noise_prob: 0.9,
    }
}

fn acceptance_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        dim: 48,
        seed,
        ..TrainConfig::default()
    }
}

struct PlantedRun {
    vocab: Vocab,
    stats: CoPurchaseStats,
    table: EmbeddingTable,
    planted_labels: Vec<LabelRecord>,
    planted_qualified_rate: f64,
    noise_qualified_rate: f64,
}

fn run_planted_pipeline(spec: &SynthSpec, seed: u64) -> PlantedRun {
    let corpus = generate_synthetic(spec, seed).expect("synth");
    let raw_pairs = sample_pairs(&corpus, 5);
    let stats = build_stats(&raw_pairs);
    let train_pairs = filter_same_category(raw_pairs, &corpus.vocab).expect("filter");
    let outcome = train(&train_pairs, &corpus.vocab, &acceptance_train_config(seed)).expect("train");

    let labels = generate_labels(&stats, 0.05, &corpus.vocab).expect("labelgen");
    let qualified: HashSet<(ItemId, ItemId)> = labels
        .qualified
        .iter()
        .map(|r| (r.query, r.rec))
        .collect();

    // planted labels, deduped to the lexicographically smaller query
    let planted: Vec<(ItemId, ItemId)> = spec
        .planted_pair_names()
        .iter()
        .map(|(a, b)| {
            (
                corpus.vocab.item_id(a).unwrap(),
                corpus.vocab.item_id(b).unwrap(),
            )
        })
        .collect();
    let planted_labels: Vec<LabelRecord> = labels
        .qualified
        .iter()
        .filter(|r| planted.contains(&(r.query, r.rec)))
        .cloned()
        .collect();
    let planted_hit = planted
        .iter()
        .filter(|&&(a, b)| qualified.contains(&(a, b)) && qualified.contains(&(b, a)))
        .count();
    let planted_qualified_rate = planted_hit as f64 / planted.len() as f64;

    // pure-noise pairs: directed pairs among the noise items
    let noise: Vec<ItemId> = spec
        .noise_item_names()
        .iter()
        .map(|n| corpus.vocab.item_id(n).unwrap())
        .collect();
    let mut noise_pairs = 0usize;
    let mut noise_qualified = 0usize;
    for &x in &noise {
        for &y in &noise {
            if x != y && stats.freq(x, y) > 0 {
                noise_pairs += 1;
                noise_qualified += qualified.contains(&(x, y)) as usize;
            }
        }
    }
    let noise_qualified_rate = if noise_pairs == 0 {
        0.0
    } else {
        noise_qualified as f64 / noise_pairs as f64
    };

    PlantedRun {
        vocab: corpus.vocab,
        stats,
        table: outcome.table,
        planted_labels,
        planted_qualified_rate,
        noise_qualified_rate,
    }
}

fn report_row(report: &EvalReport, k: usize) -> (f64, f64) {
    let row = report.rows.iter().find(|r| r.k == k).unwrap();
    (row.hr, row.ndcg)
}

#[test]
fn acceptance_6_noise_resistance_ordering() {
    let started = Instant::now();
    let spec = planted_spec();
    let run = run_planted_pipeline(&spec, 4242);

    // label-quality side conditions: planted pairs qualify, noise pairs lag
    assert!(
        run.planted_qualified_rate > 0.98,
        "planted qualification rate {}",
        run.planted_qualified_rate
    );
    assert!(
        run.noise_qualified_rate < run.planted_qualified_rate,
        "noise pairs should qualify less often than planted ones ({} vs {})",
        run.noise_qualified_rate,
        run.planted_qualified_rate
    );
    assert!(!run.planted_labels.is_empty());

    let ks = [1, 5];
    let pop_order = global_popularity_order(&run.vocab);
    let neat = evaluate(
        &run.planted_labels,
        &run.stats,
        &Scorer::NeatCosine(&run.table),
        &ks,
        100,
        &run.vocab,
    )
    .unwrap();
    let popco = evaluate(
        &run.planted_labels,
        &run.stats,
        &Scorer::PopCo,
        &ks,
        100,
        &run.vocab,
    )
    .unwrap();
    let pop = evaluate(
        &run.planted_labels,
        &run.stats,
        &Scorer::Pop(&pop_order),
        &ks,
        100,
        &run.vocab,
    )
    .unwrap();

    let (neat_hr5, neat_ndcg5) = report_row(&neat, 5);
    let (popco_hr5, popco_ndcg5) = report_row(&popco, 5);
    let (pop_hr5, pop_ndcg5) = report_row(&pop, 5);
    let (pop_hr1, _) = report_row(&pop, 1);

    println!(
        "  neat  HR@5={neat_hr5:.4} NDCG@5={neat_ndcg5:.4}\n  popco HR@5={popco_hr5:.4} NDCG@5={popco_ndcg5:.4}\n  pop   HR@5={pop_hr5:.4} NDCG@5={pop_ndcg5:.4} HR@1={pop_hr1:.4}"
    );

    assert!(neat_hr5 >= popco_hr5, "neat HR@5 {neat_hr5} < popco {popco_hr5}");
    assert!(
        neat_ndcg5 >= popco_ndcg5,
        "neat NDCG@5 {neat_ndcg5} < popco {popco_ndcg5}"
    );
    assert!(popco_hr5 >= pop_hr5, "popco HR@5 {popco_hr5} < pop {pop_hr5}");
    assert!(
        popco_ndcg5 >= pop_ndcg5,
        "popco NDCG@5 {popco_ndcg5} < pop {pop_ndcg5}"
    );
    assert_eq!(pop_hr1, 0.0, "pop must miss at K=1 on noise-free labels");

    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 600.0, "pipeline took {elapsed:.0}s");
    println!("criterion 6 (noise-resistance ordering, {elapsed:.0}s): PASS");
}

#[test]
fn acceptance_7_noise_items_learn_higher_variance() {
    let spec = planted_spec();
    let mut noise_means = Vec::new();
    let mut planted_means = Vec::new();
    for seed in [11u64, 12, 13] {
        let run = run_planted_pipeline(&spec, seed);
        let mean_var = |names: &[String]| -> f64 {
            let vars: Vec<f64> = names
                .iter()
                .map(|n| run.table.item_variance(n).unwrap())
                .collect();
            vars.iter().sum::<f64>() / vars.len() as f64
        };
        let noise = mean_var(&spec.noise_item_names());
        let planted_names: Vec<String> = spec
            .planted_pair_names()
            .into_iter()
            .flat_map(|(a, b)| [a, b])
            .collect();
        let planted = mean_var(&planted_names);
        println!("  seed {seed}: noise variance {noise:.4}, planted variance {planted:.4}");
        noise_means.push(noise);
        planted_means.push(planted);
    }
    let noise_mean = noise_means.iter().sum::<f64>() / noise_means.len() as f64;
    let planted_mean = planted_means.iter().sum::<f64>() / planted_means.len() as f64;
    assert!(
        noise_mean > planted_mean,
        "noise group variance {noise_mean} must exceed planted group variance {planted_mean}"
    );
    println!(
        "criterion 7 (variance/popularity: noise {noise_mean:.4} > planted {planted_mean:.4}): PASS"
    );
}

// ---------------------------------------------------------------------------
// Criterion 8: metric unit suite
// ---------------------------------------------------------------------------

#[test]
fn acceptance_8_metric_unit_suite() {
    let ranked: Vec<ItemId> = (0..25).map(ItemId).collect();
    assert_eq!(hr_at_k(&ranked, ItemId(0), 1), 1.0);
    assert_eq!(ndcg_at_k(&ranked, ItemId(0), 1), 1.0);
    assert_eq!(ndcg_at_k(&ranked, ItemId(2), 5), 0.5);
    assert_eq!(hr_at_k(&ranked, ItemId(99), 20), 0.0);
    assert_eq!(ndcg_at_k(&ranked, ItemId(99), 20), 0.0);

    let mut rng = ChaCha8Rng::seed_from_u64(808);
    for _ in 0..10_000 {
        let len = rng.gen_range(1..40usize);
        let ranked: Vec<ItemId> = (0..len as u32).map(ItemId).collect();
        let target = ItemId(rng.gen_range(0..60));
        let k = rng.gen_range(1..=25usize);
        let hr = hr_at_k(&ranked, target, k);
        let ndcg = ndcg_at_k(&ranked, target, k);
        assert!(ndcg <= hr, "ndcg {ndcg} > hr {hr}");
        assert!((0.0..=1.0).contains(&ndcg) && (0.0..=1.0).contains(&hr));
    }
    println!("criterion 8 (metric unit suite, 10000 random rankings): PASS");
}

// ---------------------------------------------------------------------------
// Criterion 9: byte-identical artifacts under a fixed seed
// ---------------------------------------------------------------------------

fn deterministic_pipeline_artifacts(seed: u64) -> (Vec<u8>, Vec<u8>) {
    let spec = SynthSpec {
        items: 60,
        categories: 6,
        transactions: 2_000,
        users: 100,
        basket_mean: 4.0,
        planted_pairs: 6,
        boost: 0.9,
        noise_items: 1,
        noise_prob: 0.5,
    };
    let corpus = generate_synthetic(&spec, seed).unwrap();
    let raw_pairs = sample_pairs(&corpus, 5);
    let stats = build_stats(&raw_pairs);
    let train_pairs = filter_same_category(raw_pairs, &corpus.vocab).unwrap();
    let config = TrainConfig {
        dim: 16,
        epochs: 2,
        seed,
        threads: 1,
        ..TrainConfig::default()
    };
    let outcome = train(&train_pairs, &corpus.vocab, &config).unwrap();

    let mut embedding_bytes = Vec::new();
    outcome.table.save_items(&mut embedding_bytes).unwrap();

    let labels = generate_labels(&stats, 0.05, &corpus.vocab).unwrap();
    let pop_order = global_popularity_order(&corpus.vocab);
    let mut csv = Vec::new();
    csv.extend_from_slice(EvalReport::CSV_HEADER.as_bytes());
    csv.push(b'\n');
    for scorer in [
        Scorer::Pop(&pop_order),
        Scorer::PopCo,
        Scorer::NeatCosine(&outcome.table),
    ] {
        let report = evaluate(
            &labels.qualified,
            &stats,
            &scorer,
            &[1, 3, 5, 10, 20],
            100,
            &corpus.vocab,
        )
        .unwrap();
        report.write_csv_rows(&mut csv).unwrap();
    }

    // the label file participates in the round trip as well
    let mut label_bytes = Vec::new();
    write_labels(
        &mut label_bytes,
        &labels.qualified,
        &corpus.vocab,
        0.05,
        threshold_for(0.05).unwrap(),
    )
    .unwrap();
    csv.extend_from_slice(&label_bytes);

    (embedding_bytes, csv)
}

#[test]
fn acceptance_9_deterministic_artifacts() {
    let (emb_a, csv_a) = deterministic_pipeline_artifacts(909);
    let (emb_b, csv_b) = deterministic_pipeline_artifacts(909);
    assert_eq!(emb_a, emb_b, "embedding files differ between runs");
    assert_eq!(csv_a, csv_b, "evaluation CSVs differ between runs");
    let (emb_c, _) = deterministic_pipeline_artifacts(910);
    assert_ne!(emb_a, emb_c, "different seeds should differ");
    println!(
        "criterion 9 (determinism: {} embedding bytes, {} csv bytes): PASS",
        emb_a.len(),
        csv_a.len()
    );
}

// ---------------------------------------------------------------------------
// sanity: the transaction format round-trips through ingest
// ---------------------------------------------------------------------------

#[test]
fn synthetic_corpus_round_trips_through_ingest() {
    let spec = SynthSpec {
        items: 30,
        categories: 5,
        transactions: 200,
        users: 20,
        basket_mean: 3.0,
        planted_pairs: 3,
        boost: 0.8,
        noise_items: 1,
        noise_prob: 0.4,
    };
    let corpus = generate_synthetic(&spec, 3).unwrap();
    let mut buf = Vec::new();
    neat_core::corpus::write_transactions(&mut buf, &corpus).unwrap();
    let reloaded = ingest_transactions(std::io::Cursor::new(buf)).unwrap();
    assert_eq!(reloaded.n_transactions(), corpus.n_transactions());
    assert_eq!(reloaded.vocab.n_items(), corpus.vocab.n_items());
    let pairs_a = sample_pairs(&corpus, 5).len();
    let pairs_b = sample_pairs(&reloaded, 5).len();
    assert_eq!(pairs_a, pairs_b);
}
