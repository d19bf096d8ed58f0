//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Prints every line even when some fail. The process exits non-zero on a
//! failure only when `ACCEPTANCE_STRICT=1`, so the regular test run reports
//! without aborting the rest of the workspace suite.

use std::path::Path;
use std::time::Instant;

use tdt::checkpoint::Checkpoint;
use tdt::checks::{
    cdf_center_check, cdf_derivative_check, gradcheck_suite, integral_check, midpoint_identity_check,
    variance_check, CheckOutcome,
};
use tdt::config::{age_analogue, Config};
use tdt::distributions::MOMENT_MATCHED_B;
use tdt::harness::curves::discrepancy_curve;
use tdt::harness::{
    angular_stats, evaluate, export_curves, predict_dataset, symmetry_axis_summary, train, triangular_fit,
    Experiment, Metrics, ProbeGrid, TrainOptions,
};
use tdt::losses::loss_angular;
use tdt::model::TdtModel;
use tdt::prior::{cache_prior_features, select_random, PriorSet, Selection};
use tdt::tensor::Tensor;

const SEEDS: [u64; 3] = [0, 1, 2];
const MAE_LIMIT: f64 = 3.5;
const PEARSON_LIMIT: f64 = 0.9;
const TRAIN_BUDGET_SECS: f64 = 300.0;

struct Line {
    id: u8,
    title: &'static str,
    pass: bool,
    detail: String,
}

fn regime(seed: u64) -> Config {
    let mut c = age_analogue();
    c.data.seed = 100 + seed;
    c.model.init_seed = seed;
    c.train.seed = seed;
    c.prior = Selection::Random { n: 256, seed };
    c
}

struct Run {
    model: TdtModel,
    priors: PriorSet,
    metrics: Metrics,
    secs: f64,
}

fn run(config: &Config) -> Run {
    let exp = Experiment::new(config).expect("valid regime");
    let t = Instant::now();
    let out = exp.train(None).expect("training converges");
    let secs = t.elapsed().as_secs_f64();
    let metrics = evaluate(&out.model, &exp.priors, &exp.test_set).expect("evaluates");
    Run {
        model: out.model,
        priors: exp.priors,
        metrics,
        secs,
    }
}

/// Trains on the labeled prefix only.
fn run_labeled_only(config: &Config) -> Run {
    let exp = Experiment::new(config).expect("valid regime");
    let keep: Vec<usize> = (0..config.labeled_count()).collect();
    let subset = exp.train_set.subset(&keep);
    let t = Instant::now();
    let out = train(&subset, &exp.priors, exp.fresh_model().unwrap(), &config.train, TrainOptions::default())
        .expect("training converges");
    let secs = t.elapsed().as_secs_f64();
    let metrics = evaluate(&out.model, &exp.priors, &exp.test_set).expect("evaluates");
    Run {
        model: out.model,
        priors: exp.priors,
        metrics,
        secs,
    }
}

fn summarize(outcomes: &[CheckOutcome]) -> String {
    outcomes
        .iter()
        .map(|o| format!("{}={:.2e}/{:.0e}", o.name, o.value, o.tolerance))
        .collect::<Vec<_>>()
        .join(" ")
}

fn criterion_1() -> Line {
    let t = Instant::now();
    let checks = vec![
        integral_check(MOMENT_MATCHED_B),
        variance_check(),
        cdf_center_check(),
        cdf_derivative_check(),
    ];
    let secs = t.elapsed().as_secs_f64();
    Line {
        id: 1,
        title: "distribution exactness",
        pass: checks.iter().all(|c| c.passed) && secs < 1.0,
        detail: format!("{} ({secs:.3}s)", summarize(&checks)),
    }
}

fn criterion_2() -> Line {
    let t = Instant::now();
    let c = midpoint_identity_check(2024).expect("constructions build");
    let secs = t.elapsed().as_secs_f64();
    Line {
        id: 2,
        title: "midpoint identity",
        pass: c.passed && secs < 1.0,
        detail: format!("max_err={:.2e} tol={:.0e} {} ({secs:.3}s)", c.value, c.tolerance, c.note),
    }
}

fn criterion_3() -> Line {
    let t = Instant::now();
    let out = gradcheck_suite(0, None).expect("suite runs");
    let secs = t.elapsed().as_secs_f64();
    let failed: Vec<&str> = out.iter().filter(|o| !o.passed).map(|o| o.name.as_str()).collect();
    let worst = out.iter().map(|o| o.value).fold(0.0, f64::max);
    let composed = out.iter().filter(|o| o.name.starts_with("composed")).count();
    Line {
        id: 3,
        title: "gradient correctness",
        pass: failed.is_empty() && composed > 0 && secs < 120.0,
        detail: format!(
            "cases={} seeds=20 worst_rel_err={worst:.2e} failed={failed:?} ({secs:.1}s)",
            out.len()
        ),
    }
}

fn main() {
    let started = Instant::now();
    let mut lines = vec![criterion_1(), criterion_2(), criterion_3()];

    // Main regime, three seeds, four variants each.
    let mut all = Vec::new();
    let mut no_ls = Vec::new();
    let mut semi = Vec::new();
    let mut lab75 = Vec::new();
    for seed in SEEDS {
        let cfg = regime(seed);
        all.push(run(&cfg));

        let mut c = cfg.clone();
        c.train.use_ls = false;
        no_ls.push(run(&c));

        let mut c = cfg.clone();
        c.data.labeled_fraction = 0.75;
        semi.push(run(&c));
        lab75.push(run_labeled_only(&c));
        eprintln!("seed {seed} done ({:.0}s)", started.elapsed().as_secs_f64());
    }

    // 4: regression quality, with the generator inverse as the noise floor.
    let exp0 = Experiment::new(&regime(0)).unwrap();
    let probe = 50;
    let oracle_mae = (0..probe)
        .map(|i| (exp0.generator.invert(exp0.test_set.input(i)).unwrap() - exp0.test_set.label(i)[0]).abs())
        .sum::<f64>()
        / probe as f64;
    let ok4 = all
        .iter()
        .filter(|r| {
            r.metrics.mae < MAE_LIMIT && r.metrics.pair_pearson.unwrap_or(0.0) > PEARSON_LIMIT && r.secs <= TRAIN_BUDGET_SECS
        })
        .count();
    lines.push(Line {
        id: 4,
        title: "end-to-end synthetic regression",
        pass: ok4 >= 2,
        detail: format!(
            "mae={:?} pearson={:?} train_s={:?} passing_seeds={ok4}/3 oracle_mae={oracle_mae:.3} limits mae<{MAE_LIMIT} r>{PEARSON_LIMIT}",
            all.iter().map(|r| round(r.metrics.mae)).collect::<Vec<_>>(),
            all.iter().map(|r| round(r.metrics.pair_pearson.unwrap_or(f64::NAN))).collect::<Vec<_>>(),
            all.iter().map(|r| r.secs.round()).collect::<Vec<_>>(),
        ),
    });

    // 5 and 6: diagnostics on the seed-0 model.
    let lead = &all[0];
    let sweep = export_curves(&lead.model, &lead.priors, &exp0.generator, &ProbeGrid::gap_sweep(35.0, 0.0, 70.0, 70))
        .unwrap();
    let (gap, disc) = discrepancy_curve(&sweep);
    let fit = triangular_fit(&gap, &disc).unwrap();
    lines.push(Line {
        id: 5,
        title: "triangular-shape diagnostic",
        pass: fit.r2 > 0.9,
        detail: format!("r2={:.4} apex={:.2} slope={:.4e} points={}", fit.r2, fit.apex, fit.slope, gap.len()),
    });

    let sym = export_curves(
        &lead.model,
        &lead.priors,
        &exp0.generator,
        &ProbeGrid::symmetric(&[17.5, 35.0, 52.5], 15.0, 100),
    )
    .unwrap();
    let buckets = symmetry_axis_summary(&sym, 1.0);
    let tol = 0.05 * 70.0;
    lines.push(Line {
        id: 6,
        title: "symmetry-axis diagnostic",
        pass: buckets.len() == 3 && buckets.iter().all(|b| b.count >= 100 && b.error <= tol),
        detail: buckets
            .iter()
            .map(|b| format!("m={} decoded={:.2} n={}", b.midpoint, b.mean_decoded, b.count))
            .collect::<Vec<_>>()
            .join("; ")
            + &format!(" tol={tol}"),
    });

    // 7: ablation directions.
    let ls_worse = all.iter().zip(&no_ls).filter(|(a, n)| n.metrics.mae >= a.metrics.mae).count();
    let semi_better = semi.iter().zip(&lab75).filter(|(s, l)| s.metrics.mae <= l.metrics.mae).count();
    lines.push(Line {
        id: 7,
        title: "ablation directions",
        pass: ls_worse >= 2 && semi_better >= 2,
        detail: format!(
            "no_ls_degrades={ls_worse}/3 (all={:?} no_ls={:?}); semi_improves={semi_better}/3 (semi={:?} lab75={:?})",
            maes(&all),
            maes(&no_ls),
            maes(&semi),
            maes(&lab75)
        ),
    });

    // 8: prior count, same trained models.
    let mut m64 = Vec::new();
    for (r, seed) in all.iter().zip(SEEDS) {
        let exp = Experiment::new(&regime(seed)).unwrap();
        let sub = select_random(&r.priors.samples, 64, 1000 + seed).unwrap();
        m64.push(evaluate(&r.model, &sub, &exp.test_set).unwrap().mae);
    }
    let ok8 = all.iter().zip(&m64).filter(|(r, m)| r.metrics.mae <= **m).count();
    lines.push(Line {
        id: 8,
        title: "prior-count trend",
        pass: ok8 >= 2,
        detail: format!(
            "mae256={:?} mae64={:?} seeds={ok8}/3",
            maes(&all),
            m64.iter().map(|v| round(*v)).collect::<Vec<_>>()
        ),
    });

    lines.push(criterion_9(lead, &exp0));
    lines.push(criterion_10());

    for l in &lines {
        println!(
            "{} criterion {}: {} | {}",
            if l.pass { "PASS" } else { "FAIL" },
            l.id,
            l.title,
            l.detail
        );
    }
    let passed = lines.iter().filter(|l| l.pass).count();
    println!("acceptance: {passed}/{} passed in {:.0}s", lines.len(), started.elapsed().as_secs_f64());
    if passed < lines.len() && std::env::var("ACCEPTANCE_STRICT").as_deref() == Ok("1") {
        std::process::exit(1);
    }
}

fn round(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

fn maes(runs: &[Run]) -> Vec<f64> {
    runs.iter().map(|r| round(r.metrics.mae)).collect()
}

fn criterion_9(lead: &Run, exp0: &Experiment) -> Line {
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tiny.toml");
    let tiny = Config::load(&fixture).unwrap();
    let bytes = || {
        let exp = Experiment::new(&tiny).unwrap();
        let out = exp.train(None).unwrap();
        let priors = cache_prior_features(&out.model, &exp.priors).unwrap();
        Checkpoint {
            config: tiny.clone(),
            model: out.model,
            priors,
        }
        .to_bytes()
        .unwrap()
    };
    let same_train = bytes() == bytes();

    let cached = cache_prior_features(&lead.model, &lead.priors).unwrap();
    let ck = Checkpoint {
        config: regime(0),
        model: lead.model.clone(),
        priors: cached.clone(),
    };
    let b = ck.to_bytes().unwrap();
    let round_trip = Checkpoint::from_bytes(&b).unwrap().to_bytes().unwrap() == b;

    let uncached = predict_dataset(&lead.model, &lead.priors, &exp0.test_set).unwrap();
    let with_cache = predict_dataset(&lead.model, &cached, &exp0.test_set).unwrap();
    let transparent = uncached == with_cache;
    Line {
        id: 9,
        title: "determinism and persistence",
        pass: same_train && round_trip && transparent,
        detail: format!(
            "train_bytes_identical={same_train} checkpoint_round_trip={round_trip} ({} bytes) cache_bit_equal={transparent}",
            b.len()
        ),
    }
}

fn criterion_10() -> Line {
    let deg = |p: Vec<f64>, q: Vec<f64>| {
        loss_angular(&Tensor::from_vec(p), &Tensor::from_vec(q)).unwrap().item().unwrap()
    };
    let r = 0.5f64.sqrt();
    let zero = deg(vec![0.3, 0.5, 0.2], vec![0.3, 0.5, 0.2]);
    let right = deg(vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]);
    let half = deg(vec![r, r, 0.0], vec![1.0, 0.0, 0.0]);
    let fixtures_ok = zero == 0.0 && (right - 90.0).abs() < 1e-12 && (half - 45.0).abs() < 1e-12;

    // Oracle values from a linear-interpolation percentile reference.
    let s = angular_stats(&[0.5, 1.2, 2.0, 3.7, 4.1, 8.9, 12.3]).unwrap();
    let expect = [
        (s.median, 3.7),
        (s.trimean, 3.875),
        (s.pct95, 11.28),
        (s.mean, 4.671428571428572),
        (s.best25, 0.5),
        (s.worst25, 10.6),
    ];
    let worst = expect.iter().map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Line {
        id: 10,
        title: "angular loss unit checks",
        pass: fixtures_ok && worst < 1e-12,
        detail: format!("deg(0)={zero} deg(90)={right} deg(45)={half} stats_max_err={worst:.1e}"),
    }
}
