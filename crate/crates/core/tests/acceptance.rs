//! One line per acceptance criterion. Exits non-zero if any fails.

mod common;

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand_core::RngCore;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use surrogate_core::analysis::{
    mean_std_bands, rank_policies_per_mr, welch_t_test, BaselineDeltaTable, Counts, GroupShareTable, ALL,
    REPORT_FILES,
};
use surrogate_core::config::CliConfig;
use surrogate_core::forest::{
    best_split, evaluate, fit_forest, grow_tree, load_forest, metrics_from_confusion, ConfusionMatrix, FeatureMatrix,
    Hyperparams,
};
use surrogate_core::labeling::{label_dataset, split_train_test, LabelSpec, LabeledDataset};
use surrogate_core::pipeline::{emulate, Pipeline, FOREST, REPORT_DIR, VALID_RUNS};
use surrogate_core::sampler::{fit_moments, sample_discrete, ConfigGenerator, TruncatedNormal};
use surrogate_core::schema::{ingest_path, DiscreteParamSpec, ParameterSchema, Role, RunRecord};
use surrogate_core::seeding::{self, Domain};
use surrogate_core::stats::StudentT;
use surrogate_core::toyabm::{generate_corpus, ToyWorld, ToyWorldSpec, CALIBRATED_NOISE, GDP_INDICATOR, GINI_INDICATOR};

type Outcome = Result<String, String>;
type Criterion<'a> = (u32, &'static str, Box<dyn FnOnce() -> Outcome + 'a>);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    check(elapsed < limit, format!("took {elapsed:.1?}, limit {limit:?}"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn c1_metrics() -> Outcome {
    let m = metrics_from_confusion(&ConfusionMatrix {
        tn: 2602,
        fp: 2,
        fn_: 21,
        tp: 144,
    });
    let got = [m.accuracy, m.precision, m.recall, m.f1].map(Option::unwrap);
    let want = [0.9917, 0.9863, 0.8727, 0.9260];
    for (g, w) in got.iter().zip(want) {
        check((g - w).abs() <= 1e-4, format!("{got:?} vs {want:?}"))?;
    }
    Ok(format!("acc {:.4} prec {:.4} rec {:.4} f1 {:.4}", got[0], got[1], got[2], got[3]))
}

fn c2_regional_deltas() -> Outcome {
    let table = BaselineDeltaTable::from_csv(fs::File::open(fixture("regional_deltas.csv")).unwrap()).map_err(|e| e.to_string())?;
    check(table.rows.len() == 46, format!("{} regions", table.rows.len()))?;
    let ranking = rank_policies_per_mr(&table);
    let idx = |name: &str| table.policies.iter().position(|p| p == name).unwrap();
    let rent = ranking.tally[idx("Rent vouchers")];
    let monetary = ranking.tally[idx("Monetary aid")];
    let purchase = ranking.tally[idx("Purchase")];
    check(
        (rent, monetary, purchase, ranking.ties, ranking.no_gain) == (24, 19, 0, 1, 2),
        format!("rent {rent} monetary {monetary} purchase {purchase} ties {} no gain {}", ranking.ties, ranking.no_gain),
    )?;
    let all = &table.all;
    check(all.region == ALL, "pooled row")?;
    let want = [-14.25, 13.16, 15.05];
    check(all.deltas == want, format!("All deltas {:?}", all.deltas))?;
    Ok(format!("Rent {rent} / Monetary {monetary} / tie {}; All {:?}", ranking.ties, all.deltas))
}

fn c3_dispersion() -> Outcome {
    let table = GroupShareTable {
        regions: vec!["R".into()],
        policies: vec!["No-policy".into()],
        cells: vec![Counts { n: 10_000, optimal: 1_787 }],
    };
    let bands = mean_std_bands(&table);
    let all = bands.iter().find(|b| b.region == ALL).ok_or("no pooled band")?;
    check((all.std - 38.31).abs() <= 0.01, format!("sigma {}", all.std))?;
    Ok(format!("sigma {:.4} p.p.", all.std))
}

fn random_instance(rng: &mut impl RngCore, max_rows: usize, max_features: usize) -> (Vec<Vec<f64>>, Vec<u8>) {
    let n = 2 + seeding::uniform_index(rng, max_rows - 1);
    let f = 1 + seeding::uniform_index(rng, max_features);
    let levels = 2 + seeding::uniform_index(rng, 20);
    let rows = (0..n)
        .map(|_| (0..f).map(|_| seeding::uniform_index(rng, levels) as f64 * 0.25).collect())
        .collect();
    let labels = (0..n).map(|_| (rng.next_u32() & 1) as u8).collect();
    (rows, labels)
}

fn c4_cart() -> Outcome {
    let start = Instant::now();
    let mut rng = seeding::stream(4, Domain::Test, 0);
    for case in 0..200 {
        let (rows, labels) = random_instance(&mut rng, 50, 5);
        let matrix = FeatureMatrix::from_rows(&rows).unwrap();
        let all: Vec<usize> = (0..rows.len()).collect();
        let features: Vec<usize> = (0..rows[0].len()).collect();
        let got = best_split(&all, &matrix, &labels, &features, 1);
        let want = common::exhaustive_split(&rows, &labels, &all);
        match (got, want) {
            (None, None) => {}
            (Some(g), Some((f, t, imp))) => {
                check(
                    g.feature == f && g.threshold == t && (g.impurity - imp).abs() < 1e-12,
                    format!("case {case}: {g:?} vs {:?}", (f, t, imp)),
                )?;
            }
            (g, w) => return Err(format!("case {case}: {g:?} vs {w:?}")),
        }
    }
    let params = Hyperparams {
        n_trees: 1,
        max_depth: 2,
        features_per_split: Some(5),
        min_samples_leaf: 1,
    };
    for case in 0..50 {
        let (rows, labels) = random_instance(&mut rng, 50, 5);
        let matrix = FeatureMatrix::from_rows(&rows).unwrap();
        let mut all: Vec<usize> = (0..rows.len()).collect();
        let tree = grow_tree(&matrix, &labels, &mut all, &params, &mut seeding::stream(4, Domain::Test, 1));
        let want = common::greedy_tree(&rows, &labels, 2);
        check(tree.nodes() == want.as_slice(), format!("depth-2 case {case}"))?;
    }
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!("200 splits + 50 depth-2 trees match in {:.1?}", start.elapsed()))
}

fn c5_labeling() -> Outcome {
    let start = Instant::now();
    let mut rng = seeding::stream(5, Domain::Test, 0);
    let names = vec!["high".to_string(), "low".to_string()];
    let mut disagreements = 0usize;
    for corpus in 0..100 {
        let coarse = corpus % 2 == 0;
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
            if coarse {
                seeding::uniform_index(rng, 12) as f64
            } else {
                seeding::uniform01(rng) * 10.0 - 5.0
            }
        };
        let records: Vec<RunRecord> = (0..1000u64)
            .map(|id| RunRecord {
                id,
                config: Vec::new(),
                indicators: vec![draw(&mut rng), draw(&mut rng)],
                valid: true,
            })
            .collect();
        let refs: Vec<&RunRecord> = records.iter().collect();
        let mut spec = LabelSpec::new("high", "low");
        if corpus % 3 == 0 {
            spec.high_quantile = 0.05 + 0.9 * seeding::uniform01(&mut rng);
            spec.low_quantile = 0.05 + 0.9 * seeding::uniform01(&mut rng);
        }
        let got = label_dataset(&refs, &names, &spec).map_err(|e| e.to_string())?;
        let high: Vec<f64> = records.iter().map(|r| r.indicators[0]).collect();
        let low: Vec<f64> = records.iter().map(|r| r.indicators[1]).collect();
        let want = common::brute_force_labels(&high, &low, spec.high_quantile, spec.low_quantile);
        disagreements += got.iter().zip(&want).filter(|(a, b)| a != b).count();
    }
    check(disagreements == 0, format!("{disagreements} disagreements"))?;
    within(start.elapsed(), Duration::from_secs(5))?;
    Ok(format!("100 x 1000 rows agree in {:.1?}", start.elapsed()))
}

fn c6_sampler() -> Outcome {
    let start = Instant::now();
    let settings = [
        (0.0, 1.0, -1.0, 1.0),
        (5.0, 2.0, 0.0, 20.0),
        (0.5, 0.1, 0.45, 0.46),
        (0.0, 1.0, 1.5, 4.0),
        (3.0, 30.0, 0.0, 1.0),
    ];
    let n = 100_000;
    let mut worst: f64 = 0.0;
    for (k, &(mean, std, lo, hi)) in settings.iter().enumerate() {
        let tn = TruncatedNormal::new(mean, std, lo, hi);
        let mut rng = seeding::stream(6, Domain::Test, k as u64);
        let sample: Vec<f64> = (0..n).map(|_| tn.sample(&mut rng)).collect();
        let out = sample.iter().filter(|&&x| !(lo..=hi).contains(&x)).count();
        check(out == 0, format!("setting {k}: {out} draws out of bounds"))?;
        let d = common::ks_statistic(&sample, |x| common::truncated_normal_cdf(x, mean, std, lo, hi));
        check(d < 0.01, format!("setting {k}: D = {d}"))?;
        worst = worst.max(d);
    }
    let spec = DiscreteParamSpec {
        name: "m4".into(),
        alternatives: (0..4).map(|i| i.to_string()).collect(),
        role: None::<Role>,
    };
    let mut counts = [0u64; 4];
    let mut rng = seeding::stream(6, Domain::Test, 99);
    for _ in 0..n {
        let i = sample_discrete(&spec, &mut rng);
        check(i < 4, "discrete draw out of range")?;
        counts[i] += 1;
    }
    let expected = n as f64 / 4.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p = ChiSquared::new(3.0).unwrap().sf(chi2);
    check(p > 0.001, format!("chi-square p {p}"))?;
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!("max KS D {worst:.5}, chi-square p {p:.3}"))
}

fn learn(noise: f64) -> Result<(f64, f64, f64), String> {
    let schema = ParameterSchema::default_schema();
    let world = ToyWorld::new(&ToyWorldSpec::default_preset(&schema).with_noise(noise), &schema).map_err(|e| e.to_string())?;
    let corpus = generate_corpus(&world, &schema, 11_076, 7).map_err(|e| e.to_string())?;
    let refs: Vec<&RunRecord> = corpus.records.iter().collect();
    let spec = LabelSpec::new(GDP_INDICATOR, GINI_INDICATOR);
    let data = LabeledDataset::from_records(&refs, &corpus.indicator_names, &schema, &spec).map_err(|e| e.to_string())?;
    let (train, test) = split_train_test(&data, 0.25, 7, true).map_err(|e| e.to_string())?;
    let params = Hyperparams {
        n_trees: 100,
        max_depth: 15,
        ..Hyperparams::default()
    };
    let forest = fit_forest(&train.features, &train.labels, &params, 7).map_err(|e| e.to_string())?;
    let m = evaluate(&forest, &test).map_err(|e| e.to_string())?.metrics;
    Ok((m.accuracy.unwrap_or(0.0), m.recall.unwrap_or(0.0), m.f1.unwrap_or(0.0)))
}

fn c7_learnability() -> Outcome {
    let start = Instant::now();
    let (acc0, rec0, _) = learn(0.0)?;
    check(acc0 >= 0.99 && rec0 >= 0.95, format!("noise 0: acc {acc0:.4} rec {rec0:.4}"))?;
    let (acc, _, f1) = learn(CALIBRATED_NOISE)?;
    check(acc >= 0.95 && f1 >= 0.90, format!("noise {CALIBRATED_NOISE}: acc {acc:.4} f1 {f1:.4}"))?;
    within(start.elapsed(), Duration::from_secs(120))?;
    Ok(format!(
        "noise 0: acc {acc0:.4} rec {rec0:.4}; noise {CALIBRATED_NOISE}: acc {acc:.4} f1 {f1:.4} ({:.1?})",
        start.elapsed()
    ))
}

fn desk_config(out: &Path) -> CliConfig {
    let mut c = CliConfig::parse("seed = 42\n[toy]\nruns = 11076\n").unwrap();
    c.out = out.to_path_buf();
    c.desk_scale();
    c
}

fn run_in_pool(workers: usize, out: &Path) -> Result<(), String> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().map_err(|e| e.to_string())?;
    pool.install(|| {
        let mut p = Pipeline::open(desk_config(out))?;
        p.run_all().map(|_| ())
    })
    .map_err(|e| e.to_string())
}

fn c8_direction(out: &Path) -> Outcome {
    let start = Instant::now();
    run_in_pool(4, out)?;
    let elapsed = start.elapsed();
    let path = out.join(REPORT_DIR).join(REPORT_FILES[0]);
    let table = BaselineDeltaTable::from_csv(fs::File::open(&path).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let idx = |name: &str| table.policies.iter().position(|p| p == name).unwrap();
    let (p, r, m) = (idx("Purchase"), idx("Rent vouchers"), idx("Monetary aid"));
    let hits = table
        .rows
        .iter()
        .filter(|row| row.deltas[p] < 0.0 && row.deltas[r] > 0.0 && row.deltas[m] > 0.0)
        .count();
    let share = hits as f64 / table.rows.len() as f64;
    check(share >= 0.9, format!("{hits}/{} regions", table.rows.len()))?;
    within(elapsed, Duration::from_secs(300))?;
    Ok(format!("{hits}/{} regions ({:.1}%) in {elapsed:.1?}", table.rows.len(), 100.0 * share))
}

fn report_bytes(out: &Path) -> Vec<Vec<u8>> {
    REPORT_FILES
        .iter()
        .map(|f| fs::read(out.join(REPORT_DIR).join(f)).unwrap_or_default())
        .collect()
}

fn c9_determinism(first: &Path, scratch: &Path) -> Outcome {
    let reference = report_bytes(first);
    check(reference.iter().all(|b| !b.is_empty()), "reference report incomplete")?;
    for (workers, dir) in [(1, "k1"), (4, "k4")] {
        let out = scratch.join(dir);
        run_in_pool(workers, &out)?;
        check(report_bytes(&out) == reference, format!("report differs with {workers} workers"))?;
    }
    Ok(format!("{} report files byte-identical over 3 runs, K in {{1, 4}}", REPORT_FILES.len()))
}

fn c10_throughput(out: &Path) -> Outcome {
    let schema = ParameterSchema::default_schema();
    let forest = load_forest(&out.join(FOREST)).map_err(|e| e.to_string())?;
    check(forest.trees().len() == 100, format!("{} trees", forest.trees().len()))?;
    let corpus = ingest_path(&out.join(VALID_RUNS), &schema).map_err(|e| e.to_string())?;
    let refs: Vec<&RunRecord> = corpus.records.iter().collect();
    let generator = ConfigGenerator::new(&schema, &fit_moments(&refs, &schema).unwrap()).unwrap();
    let n = 1_000_000u64;

    let start = Instant::now();
    let configs = generator.batches(42, n, 65_536).flatten().map(Ok);
    let mut count = 0u64;
    let mut optimal = 0u64;
    for item in emulate(&forest, &schema, configs, 65_536).map_err(|e| e.to_string())? {
        let (cfg, p) = item.map_err(|e| e.to_string())?;
        check(cfg.id == count, "order not preserved")?;
        count += 1;
        optimal += u64::from(p.class);
    }
    let elapsed = start.elapsed();
    check(count == n, format!("{count} predictions for {n} configs"))?;
    within(elapsed, Duration::from_secs(180))?;

    let sharded: Vec<_> = (0..8).flat_map(|k| generator.shard(42, n, k, 8)).collect();
    check(sharded.len() as u64 == n, "shard sizes")?;
    for (id, cfg) in sharded.iter().enumerate() {
        if *cfg != generator.config(42, id as u64) {
            return Err(format!("shard config {id} differs from the sequential stream"));
        }
    }
    Ok(format!("{count} configs classified in {elapsed:.1?} ({optimal} optimal); 8 shards reconcile"))
}

fn c11_welch() -> Outcome {
    let mut rng = seeding::stream(11, Domain::Test, 0);
    let (mut dt, mut dp) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let na = 2 + seeding::uniform_index(&mut rng, 60);
        let nb = 2 + seeding::uniform_index(&mut rng, 60);
        let (sa, sb) = (0.1 + 5.0 * seeding::uniform01(&mut rng), 0.1 + 5.0 * seeding::uniform01(&mut rng));
        let shift = 2.0 * seeding::uniform01(&mut rng) - 1.0;
        let a: Vec<f64> = (0..na).map(|_| sa * seeding::uniform01(&mut rng)).collect();
        let b: Vec<f64> = (0..nb).map(|_| shift + sb * seeding::uniform01(&mut rng)).collect();
        let got = welch_t_test(&a, &b).map_err(|e| e.to_string())?;
        let (t, _, p) = common::textbook_welch(&a, &b);
        dt = dt.max((got.t - t).abs());
        dp = dp.max((got.p - p).abs());
    }
    check(dt < 1e-9 && dp < 1e-8, format!("max |dt| {dt:e}, max |dp| {dp:e}"))?;
    // two-sided critical values, 10 significant digits
    let table = [
        (1.0, 0.975, 12.70620474),
        (2.0, 0.975, 4.302652730),
        (5.0, 0.975, 2.570581836),
        (10.0, 0.975, 2.228138852),
        (30.0, 0.975, 2.042272456),
        (100.0, 0.975, 1.983971518),
        (1.0, 0.995, 63.65674116),
        (10.0, 0.995, 3.169272673),
        (20.0, 0.95, 1.724718243),
        (3.0, 0.999, 10.21453185),
        (60.0, 0.9, 1.295821093),
    ];
    let mut worst = 0.0f64;
    for (df, q, want) in table {
        let got = StudentT::new(df).quantile(q);
        worst = worst.max((got - want).abs());
    }
    check(worst < 1e-6, format!("critical values off by {worst:e}"))?;
    Ok(format!("max |dt| {dt:.1e}, max |dp| {dp:.1e}; critical values within {worst:.1e}"))
}

fn main() {
    let scratch = tempfile::tempdir().expect("temp dir");
    let desk = scratch.path().join("desk");
    let criteria: Vec<Criterion> = vec![
        (1, "metrics golden", Box::new(c1_metrics)),
        (2, "regional delta consistency", Box::new(c2_regional_deltas)),
        (3, "dispersion consistency", Box::new(c3_dispersion)),
        (4, "CART oracle equivalence", Box::new(c4_cart)),
        (5, "quantile/labeling oracle", Box::new(c5_labeling)),
        (6, "sampler statistics", Box::new(c6_sampler)),
        (7, "planted-rule learnability", Box::new(c7_learnability)),
        (8, "end-to-end direction", Box::new(|| c8_direction(&desk))),
        (9, "determinism", Box::new(|| c9_determinism(&desk, scratch.path()))),
        (10, "throughput and sharding", Box::new(|| c10_throughput(&desk))),
        (11, "welch oracle", Box::new(c11_welch)),
    ];
    let mut failed = 0;
    for (n, name, f) in criteria {
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {n:>2} {name}: PASS ({detail})"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} {name}: FAIL ({detail})");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} criteria failed");
        std::process::exit(1);
    }
}
