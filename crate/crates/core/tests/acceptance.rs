//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use relbench::corpus::synthetic::{planted_instances, PlantedSpec};
use relbench::corpus::{write_instances, RelevanceRank};
use relbench::cosine_baseline::{classify_by_thresholds, grid_search_thresholds, threshold_tau};
use relbench::encoding::{
    encode_onehot, encode_thermometer, rank_four, readout_onehot, readout_thermometer_grouped, Codec,
};
use relbench::metrics::{bootstrap, f1_per_class, kendall_tau, TauVariant};
use relbench::models::{ModelConfig, SgdConfig};
use relbench::runner::{emit_run, run_experiment, ExperimentConfig, FixedSpec, Method};

type Outcome = Result<String, String>;

fn rank(v: u8) -> RelevanceRank {
    RelevanceRank::new(v).unwrap()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------
// 1. Metric oracle equivalence
// ---------------------------------------------------------------------------

fn brute_tau(pred: &[u8], truth: &[u8]) -> (u64, u64, f64) {
    let (mut c, mut d) = (0u64, 0u64);
    for i in 0..pred.len() {
        for j in i + 1..pred.len() {
            let s = (pred[i] as i32 - pred[j] as i32).signum() * (truth[i] as i32 - truth[j] as i32).signum();
            if s > 0 {
                c += 1;
            } else if s < 0 {
                d += 1;
            }
        }
    }
    let tau = if c + d == 0 {
        0.0
    } else {
        (c as f64 - d as f64) / (c + d) as f64
    };
    (c, d, tau)
}

fn metric_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut heavy = 0;
    for case in 0..1000 {
        let n = rng.random_range(2..=50);
        // Small alphabets give heavy ties; every third case uses a single value.
        let levels: u8 = match case % 3 {
            0 => 1,
            1 => 2,
            _ => 4,
        };
        let pred: Vec<u8> = (0..n)
            .map(|_| if levels == 1 { 0 } else { rng.random_range(0..levels) })
            .collect();
        let truth: Vec<u8> = (0..n).map(|_| rng.random_range(0..4)).collect();
        if levels <= 2 {
            heavy += 1;
        }
        let (c, d, tau) = brute_tau(&pred, &truth);
        let fast = kendall_tau(&pred, &truth, TauVariant::ConcordanceRatio).map_err(|e| e.to_string())?;
        ensure(fast.concordant == c && fast.discordant == d && fast.tau == tau, || {
            format!(
                "case {case}: got C={} D={} tau={}, oracle C={c} D={d} tau={tau}",
                fast.concordant, fast.discordant, fast.tau
            )
        })?;
        ensure(fast.degenerate == (c + d == 0), || {
            format!("case {case}: degenerate flag")
        })?;

        let p: Vec<RelevanceRank> = pred.iter().map(|&v| rank(v)).collect();
        let t: Vec<RelevanceRank> = truth.iter().map(|&v| rank(v)).collect();
        let m = f1_per_class(&p, &t).map_err(|e| e.to_string())?;
        for k in 0..4u8 {
            let tp = pred.iter().zip(&truth).filter(|(a, b)| **a == k && **b == k).count() as f64;
            let fp = pred.iter().zip(&truth).filter(|(a, b)| **a == k && **b != k).count() as f64;
            let fneg = pred.iter().zip(&truth).filter(|(a, b)| **a != k && **b == k).count() as f64;
            let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let recall = if tp + fneg > 0.0 { tp / (tp + fneg) } else { 0.0 };
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            let got = m.per_class[k as usize];
            ensure(
                (got.precision - precision).abs() < 1e-12
                    && (got.recall - recall).abs() < 1e-12
                    && (got.f1 - f1).abs() < 1e-12,
                || format!("case {case} class {k}: got {got:?}, oracle p={precision} r={recall} f1={f1}"),
            )?;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 10.0, || format!("took {secs:.2}s"))?;
    Ok(format!("1000 cases ({heavy} heavy-tie) exact in {secs:.2}s"))
}

// ---------------------------------------------------------------------------
// 2. Label table
// ---------------------------------------------------------------------------

fn label_table() -> Outcome {
    let onehot = [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]];
    let thermo = [[0, 0, 0], [1, 0, 0], [1, 1, 0], [1, 1, 1]];
    for r in 0..4u8 {
        ensure(encode_onehot(rank(r)) == onehot[r as usize], || {
            format!("one-hot encode of {r}")
        })?;
        ensure(encode_thermometer(rank(r)) == thermo[r as usize], || {
            format!("thermometer encode of {r}")
        })?;
    }
    ensure(readout_onehot(&[0.9, -7.1, 5.0, 2.0]) == rank(2), || {
        "one-hot paper 1".into()
    })?;
    ensure(readout_onehot(&[-5.3, 2.5, 4.0, 1.0]) == rank(2), || {
        "one-hot paper 2".into()
    })?;
    let group = [
        [0.91, 0.82, 0.17],
        [0.94, 0.1, 0.3],
        [0.23, 0.02, 0.1],
        [0.90, 0.89, 0.96],
    ];
    let got = readout_thermometer_grouped(&group).map_err(|e| e.to_string())?;
    ensure(got == [rank(2), rank(1), rank(0), rank(3)], || {
        format!("thermometer group gave {got:?}")
    })?;
    Ok("8 encodings and 5 readouts reproduced".into())
}

// ---------------------------------------------------------------------------
// 3. Grouped readout invariants
// ---------------------------------------------------------------------------

fn is_permutation(ranks: &[RelevanceRank; 4]) -> bool {
    let mut seen = [false; 4];
    ranks.iter().for_each(|r| seen[r.index()] = true);
    seen.iter().all(|&s| s)
}

fn grouped_readout() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..10_000 {
        // Every fourth group is coarsely quantized so that sums tie.
        let coarse = case % 4 == 0;
        let group: [[f64; 3]; 4] = std::array::from_fn(|_| {
            std::array::from_fn(|_| {
                let p: f64 = rng.random_range(0.0..=1.0);
                if coarse {
                    (p * 2.0).round() / 2.0
                } else {
                    p
                }
            })
        });
        let ranks = readout_thermometer_grouped(&group).map_err(|e| e.to_string())?;
        ensure(is_permutation(&ranks), || {
            format!("case {case}: {ranks:?} from {group:?}")
        })?;
    }
    let transforms: [fn(f64) -> f64; 4] = [
        |x| 3.0 * x + 1.0,
        |x| x * x * x + x,
        f64::exp,
        |x| 1.0 / (1.0 + (-x).exp()),
    ];
    for case in 0..1000 {
        let sums: [f64; 4] = std::array::from_fn(|_| (rng.random_range(0.0..3.0f64) * 20.0).round() / 20.0);
        let f = transforms[case % transforms.len()];
        let before = rank_four(&sums);
        let after = rank_four(&sums.map(f));
        ensure(before == after, || {
            format!("replay {case}: {sums:?} -> {before:?} vs {after:?}")
        })?;
    }
    Ok("10000 groups are permutations; 1000 monotone replays invariant".into())
}

// ---------------------------------------------------------------------------
// 4. Threshold search recovery
// ---------------------------------------------------------------------------

fn banded(n: usize, seed: u64) -> Vec<(f64, RelevanceRank)> {
    let centers = [0.1, 0.4, 0.6, 0.9];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let r = (i % 4) as u8;
            (centers[r as usize] + rng.random_range(-0.05..0.05), rank(r))
        })
        .collect()
}

fn threshold_search() -> Outcome {
    let start = Instant::now();
    let train = banded(400, 4);
    let test = banded(400, 5);
    let s = grid_search_thresholds(&train, 0.025, TauVariant::TauB).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let t = s.triple.as_array();
    for (k, &th) in t.iter().enumerate() {
        let below = train
            .iter()
            .chain(&test)
            .filter(|x| x.1.index() <= k)
            .map(|x| x.0)
            .fold(f64::MIN, f64::max);
        let above = train
            .iter()
            .chain(&test)
            .filter(|x| x.1.index() > k)
            .map(|x| x.0)
            .fold(f64::MAX, f64::min);
        ensure(below < th && th <= above, || {
            format!("t{} = {th} does not separate {below} | {above}", k + 1)
        })?;
    }
    let all_right = test.iter().all(|x| classify_by_thresholds(x.0, &s.triple) == x.1);
    let tau = threshold_tau(&test, &s.triple, TauVariant::ConcordanceRatio).map_err(|e| e.to_string())?;
    ensure(all_right && tau == 1.0, || format!("test tau {tau}"))?;
    ensure(secs < 5.0, || format!("took {secs:.2}s"))?;
    Ok(format!("thresholds {t:?}, test tau {tau}, {secs:.3}s"))
}

// ---------------------------------------------------------------------------
// 5. Bootstrap sanity
// ---------------------------------------------------------------------------

fn bootstrap_sanity() -> Outcome {
    let constant = vec![1u8; 400];
    let s = bootstrap(&constant, 1000, 11, "const", |_| 1.0).map_err(|e| e.to_string())?;
    ensure(s.se == 0.0 && s.mean == 1.0, || {
        format!("constant gave mean {} se {}", s.mean, s.se)
    })?;

    // 320 of 400 groups correct.
    let groups: Vec<bool> = (0..400).map(|i| i % 5 != 0).collect();
    let acc = |sample: &[&bool]| sample.iter().filter(|&&&b| b).count() as f64 / sample.len() as f64;
    let a = bootstrap(&groups, 1000, 12, "accuracy", acc).map_err(|e| e.to_string())?;
    let b = bootstrap(&groups, 1000, 12, "accuracy", acc).map_err(|e| e.to_string())?;
    let analytic = (0.8f64 * 0.2 / 400.0).sqrt();
    let rel = (a.se - analytic).abs() / analytic;
    ensure(rel <= 0.2, || {
        format!("se {} vs analytic {analytic} ({:.1}% off)", a.se, rel * 100.0)
    })?;
    ensure(a == b, || "seeded runs differ".into())?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let c = pool
        .install(|| bootstrap(&groups, 1000, 12, "accuracy", acc))
        .map_err(|e| e.to_string())?;
    ensure(
        a.se.to_bits() == c.se.to_bits() && a.mean.to_bits() == c.mean.to_bits(),
        || "single-threaded run differs".into(),
    )?;
    Ok(format!(
        "constant se 0; binomial se {:.5} vs {analytic:.5}; deterministic",
        a.se
    ))
}

// ---------------------------------------------------------------------------
// 6. End-to-end pipeline
// ---------------------------------------------------------------------------

fn write_planted(dir: &Path, n: usize, seed: u64) -> std::path::PathBuf {
    let path = dir.join("planted.jsonl");
    let file = fs::File::create(&path).unwrap();
    write_instances(
        std::io::BufWriter::new(file),
        &planted_instances(&PlantedSpec::new(n, seed)),
    )
    .unwrap();
    path
}

fn sgd_thermometer_config(data: &Path, out: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(
        data,
        Method::Fixed(FixedSpec {
            pca_components: None,
            model: ModelConfig::Sgd(SgdConfig::new(0.0001, 30, 5)),
        }),
    );
    c.codec = Codec::Thermometer;
    c.split.seed = 3;
    c.seed = 8;
    c.output_dir = out.to_path_buf();
    c
}

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = write_planted(dir.path(), 200, 21);
    let config = sgd_thermometer_config(&data, &dir.path().join("out"));
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let out = pool.install(|| run_experiment(&config)).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let tau = out.record.test.tau.tau;
    let f1_most = out.record.test.classes.per_class[3].f1;
    ensure(out.predictions.iter().all(|p| is_permutation(&p.ranked)), || {
        "non-permutation ranking".into()
    })?;
    ensure(tau >= 0.95 && f1_most >= 0.95, || {
        format!("tau {tau:.4}, f1_most {f1_most:.4}")
    })?;
    ensure(secs < 60.0, || format!("took {secs:.1}s"))?;
    Ok(format!(
        "{} test groups: tau {tau:.4}, f1_most {f1_most:.4}, {secs:.2}s single-threaded",
        out.record.test_instances
    ))
}

// ---------------------------------------------------------------------------
// 7. Determinism
// ---------------------------------------------------------------------------

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().is_some_and(|n| n != "timings.json"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect()
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = write_planted(dir.path(), 60, 33);
    let out_dir = dir.path().join("out");
    let mut configs = vec![sgd_thermometer_config(&data, &out_dir)];
    let mut cosine = configs[0].clone();
    cosine.method = Method::Cosine(Default::default());
    configs.push(cosine);
    let mut files = 0;
    for config in &configs {
        let mut snaps = Vec::new();
        for threads in [1, 4] {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            let out = pool.install(|| run_experiment(config)).map_err(|e| e.to_string())?;
            emit_run(&out, &out_dir).map_err(|e| e.to_string())?;
            snaps.push(snapshot(&out_dir));
            fs::remove_dir_all(&out_dir).map_err(|e| e.to_string())?;
        }
        ensure(snaps[0] == snaps[1], || {
            let differing: Vec<_> = snaps[0]
                .keys()
                .filter(|k| snaps[0].get(*k) != snaps[1].get(*k))
                .collect();
            format!("outputs differ: {differing:?}")
        })?;
        files += snaps[0].len();
    }
    Ok(format!(
        "{files} CSV/JSON/model files byte-identical across reruns (1 and 4 threads)"
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("metric-oracle", metric_oracle),
        ("label-table", label_table),
        ("grouped-readout", grouped_readout),
        ("threshold-search", threshold_search),
        ("bootstrap", bootstrap_sanity),
        ("end-to-end", end_to_end),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
