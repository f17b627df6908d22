mod common;

use tip::ckks::{CkksContext, CkksParams};
use tip::influence::{Example, Model};
use tip::market::*;

fn small(reps: usize, sellers: usize, n_seller: usize) -> MarketConfig {
    MarketConfig {
        num_replications: reps,
        num_sellers_per_trial: sellers,
        n_seller,
        ..MarketConfig::default()
    }
}

fn homogeneous(cfg: &MarketConfig) -> MarketConfig {
    let mut c = cfg.clone();
    c.heterogeneity = Heterogeneity {
        max_shift: 0.0,
        max_label_noise: 0.0,
    };
    c
}

fn sig(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Full-batch head-only gradient descent on a logistic head written out by
/// hand on the hidden activations, then the eval loss reduction.
fn head_gd_oracle(model: &Model, bundle: &[Example], eval: &[Example], lr: f64, steps: usize) -> f64 {
    let last = model.layers.len() - 1;
    let mut w: Vec<f64> = model.layers[last].weights.row(0).iter().copied().collect();
    let mut b = model.layers[last].bias[0];
    let feats = |data: &[Example]| -> Vec<(Vec<f64>, f64)> {
        data.iter()
            .map(|z| (model.head_inputs(&z.features).iter().copied().collect(), z.label))
            .collect()
    };
    let tr = feats(bundle);
    let ev = feats(eval);
    let loss = |w: &[f64], b: f64| {
        ev.iter()
            .map(|(h, y)| {
                let p = sig(h.iter().zip(w).map(|(a, c)| a * c).sum::<f64>() + b);
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum::<f64>()
            / ev.len() as f64
    };
    let before = loss(&w, b);
    for _ in 0..steps {
        let mut gw: Vec<f64> = w.iter().map(|v| v * model.l2).collect();
        let mut gb = b * model.l2;
        for (h, y) in &tr {
            let r = sig(h.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>() + b) - y;
            for (g, hv) in gw.iter_mut().zip(h) {
                *g += r * hv / tr.len() as f64;
            }
            gb += r / tr.len() as f64;
        }
        for (wv, g) in w.iter_mut().zip(&gw) {
            *wv -= lr * g;
        }
        b -= lr * gb;
    }
    before - loss(&w, b)
}

#[test]
fn same_seed_same_instance() {
    let cfg = small(2, 3, 30);
    assert_eq!(generate_market(&cfg, 1), generate_market(&cfg, 1));
    assert_ne!(generate_market(&cfg, 0).train, generate_market(&cfg, 1).train);
}

#[test]
fn homogeneous_market_draws_sellers_from_the_buyer_distribution() {
    let cfg = homogeneous(&small(1, 4, 2000));
    let inst = generate_market(&cfg, 0);
    let scales = feature_scales(&cfg);
    for s in &inst.sellers {
        assert_eq!((s.shift, s.label_noise), (0.0, 0.0));
        // Class-conditional means sit at ±separation/2 on every feature.
        for class in [0.0, 1.0] {
            let pts: Vec<&Example> = s.data.iter().filter(|z| z.label == class).collect();
            let want = if class == 1.0 { 0.5 } else { -0.5 } * cfg.class_separation;
            for (j, sc) in scales.iter().enumerate() {
                let m = pts.iter().map(|z| z.features[j]).sum::<f64>() / pts.len() as f64;
                let se = sc / (pts.len() as f64).sqrt();
                assert!((m - want).abs() < 5.0 * se, "feature {j}: mean {m}, want {want}");
            }
        }
    }
}

#[test]
fn heterogeneous_sellers_have_distinct_realized_benefits() {
    let cfg = small(1, 5, 200);
    let res = run_replication(&cfg, &generate_market(&cfg, 0), Mode::Plaintext, None).unwrap();
    let b: Vec<f64> = res.sellers.iter().map(|s| s.realized_benefit).collect();
    let m = b.iter().sum::<f64>() / b.len() as f64;
    let var = b.iter().map(|x| (x - m).powi(2)).sum::<f64>() / b.len() as f64;
    assert!(var > 0.0);
}

#[test]
fn zero_epochs_means_zero_benefit() {
    let mut cfg = small(1, 3, 40);
    cfg.ground_truth.epochs = 0;
    let res = run_replication(&cfg, &generate_market(&cfg, 0), Mode::Plaintext, None).unwrap();
    assert!(res.sellers.iter().all(|s| s.realized_benefit == 0.0));
}

#[test]
fn realized_benefit_matches_hand_written_head_descent() {
    let mut cfg = small(1, 2, 60);
    // One batch per epoch makes the update order-free.
    cfg.ground_truth.batch_size = 1000;
    cfg.ground_truth.epochs = 3;
    cfg.ground_truth.lr = 0.05;
    let inst = generate_market(&cfg, 0);
    let base = baseline(&cfg, &inst).unwrap();
    for (i, s) in inst.sellers.iter().enumerate() {
        let got = realized_benefit(&cfg, &base.model, &s.data, &inst.eval, i as u64).unwrap();
        let want = head_gd_oracle(&base.model, &s.data, &inst.eval, 0.05, 3);
        assert!((got - want).abs() < 1e-12 * (1.0 + want.abs()), "{got} vs {want}");
    }
}

#[test]
fn eval_copy_seller_has_the_highest_benefit() {
    let cfg = homogeneous(&small(1, 5, 200));
    let mut inst = generate_market(&cfg, 0);
    inst.sellers[2].data = inst.eval.clone();
    let base = baseline(&cfg, &inst).unwrap();
    let benefits: Vec<f64> = inst
        .sellers
        .iter()
        .enumerate()
        .map(|(i, s)| realized_benefit(&cfg, &base.model, &s.data, &inst.eval, i as u64).unwrap())
        .collect();
    let best = (0..benefits.len())
        .max_by(|&a, &b| benefits[a].total_cmp(&benefits[b]))
        .unwrap();
    assert_eq!(best, 2, "{benefits:?}");
}

#[test]
fn planted_seller_ranks_first() {
    // Heavy tail: seven small bundles of fresh buyer-distribution points
    // and one large bundle holding the buyer's own eval set, whose utility
    // n·g_evalᵀ(H + λ)⁻¹g_eval is positive by construction.
    let cfg = homogeneous(&small(4, 8, 50));
    for r in 0..cfg.num_replications {
        let mut inst = generate_market(&cfg, r);
        inst.sellers[4].data = inst.eval.clone();
        let res = run_replication(&cfg, &inst, Mode::Plaintext, None).unwrap();
        let u: Vec<f64> = res.sellers.iter().map(|s| s.utility_if).collect();
        let rank = rank_distribution(&u).unwrap();
        assert_eq!(rank.rows[0].index, 4, "replication {r}: {u:?}");
        assert_eq!(rank.rows[0].rank, 1);
    }
}

#[test]
fn encrypted_mode_agrees_with_plaintext() {
    let cfg = small(2, 4, 12);
    let params = CkksParams::desk_scale();
    let keys = CkksContext::new(params.clone()).unwrap().keygen(5);
    let enc = EncryptedValuation {
        params: &params,
        keys: &keys,
    };
    for r in 0..cfg.num_replications {
        let inst = generate_market(&cfg, r);
        let plain = run_replication(&cfg, &inst, Mode::Plaintext, None).unwrap();
        let secret = run_replication(&cfg, &inst, Mode::Encrypted, Some(&enc)).unwrap();
        let p: Vec<f64> = plain.sellers.iter().map(|s| s.utility_if).collect();
        let e: Vec<f64> = secret.sellers.iter().map(|s| s.utility_if).collect();
        for (a, b) in p.iter().zip(&e) {
            assert!((a - b).abs() <= 1e-3 * cfg.n_seller as f64, "{a} vs {b}");
        }
        // Identical rankings are only meaningful when gaps exceed the
        // perturbation bound.
        let mut sorted = p.clone();
        sorted.sort_by(f64::total_cmp);
        assert!(sorted.windows(2).all(|w| w[1] - w[0] > 2e-3), "{sorted:?}");
        let order = |xs: &[f64]| {
            rank_distribution(xs)
                .unwrap()
                .rows
                .iter()
                .map(|r| r.index)
                .collect::<Vec<_>>()
        };
        assert_eq!(order(&p), order(&e));
        // Cosine, random and realized benefit do not depend on the mode.
        for (a, b) in plain.sellers.iter().zip(&secret.sellers) {
            assert_eq!(
                (a.utility_cos, a.utility_rand, a.realized_benefit),
                (b.utility_cos, b.utility_rand, b.realized_benefit)
            );
        }
    }
}

#[test]
fn encrypted_mode_needs_keys() {
    let cfg = small(1, 2, 10);
    let err = run_replication(&cfg, &generate_market(&cfg, 0), Mode::Encrypted, None);
    assert!(matches!(err, Err(MarketError::InvalidConfig(_))));
}

#[test]
fn outputs_are_reproducible_and_thread_independent() {
    let cfg = small(3, 3, 40);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let run = simulate(&cfg, Mode::Plaintext, None, 1).unwrap();
    output::write_market_outputs(a.path(), &run.results, &run.summary, &run.rank).unwrap();
    let run = simulate(&cfg, Mode::Plaintext, None, 3).unwrap();
    output::write_market_outputs(b.path(), &run.results, &run.summary, &run.rank).unwrap();
    for f in ["replications.csv", "summary.json", "rank_distribution.csv"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
    let csv = std::fs::read_to_string(a.path().join("replications.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 3);
    assert!(a.path().join("timings.csv").exists());
}

#[test]
fn single_replication_gives_degenerate_interval_and_warning() {
    let run = simulate(&small(1, 3, 30), Mode::Plaintext, None, 1).unwrap();
    let d = &run.summary.paired_pearson;
    assert_eq!((d.ci_low, d.ci_high), (d.mean, d.mean));
    assert!(d.warning.is_some() && d.p_value.is_none());
    assert!(run.summary.render_table().contains("warning"));
}

#[test]
fn summary_uses_a_thousand_resamples() {
    let run = simulate(&small(4, 3, 30), Mode::Plaintext, None, 1).unwrap();
    assert_eq!(run.summary.paired_pearson.resamples, 1000);
    assert_eq!(run.summary.pairs, 12);
    let table = run.summary.render_table();
    for col in [
        "Mean |Pearson| (r)",
        "Mean |Spearman| (rho)",
        "Mean Δ (IF - Cos)",
        "95% CI",
        "p-value",
    ] {
        assert!(table.contains(col), "{col}");
    }
}

#[test]
fn config_json_roundtrip_and_validation() {
    let cfg = MarketConfig::default();
    assert_eq!(MarketConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    let partial = MarketConfig::from_json(r#"{"num_replications": 3}"#).unwrap();
    assert_eq!(partial.num_replications, 3);
    assert_eq!(partial.n_seller, cfg.n_seller);
    for bad in [
        r#"{"num_replications": 0}"#,
        r#"{"n_seller": 0}"#,
        r#"{"unknown": 1}"#,
        r#"{"heterogeneity": {"max_label_noise": 1.5}}"#,
        r#"{"valuation": {"k_in": 40}}"#,
        "not json",
    ] {
        assert!(
            matches!(MarketConfig::from_json(bad), Err(MarketError::InvalidConfig(_))),
            "{bad}"
        );
    }
}

#[test]
fn plaintext_bench_reports_zero_overhead() {
    let mut cfg = BenchConfig::desk(384, Mode::Plaintext, 1);
    cfg.batch_sizes = vec![10, 100];
    let rows = bench_overhead(&cfg).unwrap();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert_eq!((r.encrypted_secs, r.per_sample_overhead), (0.0, 0.0));
        assert!(r.per_sample_plaintext > 0.0);
    }
}

#[test]
fn per_sample_cost_grows_with_k() {
    let params = CkksParams::desk_scale();
    let keys = CkksContext::new(params.clone()).unwrap().keygen(2);
    let run = |k: usize| {
        let mut cfg = BenchConfig::desk(k, Mode::Encrypted, 3);
        cfg.batch_sizes = vec![10];
        cfg.min_candidates = 10;
        cfg.keys = Some(keys.clone());
        bench_overhead(&cfg).unwrap()[0].per_sample_encrypted
    };
    // 6 vs 12 rotations in the inner-product circuit.
    let (lo, hi) = (run(64), run(4096));
    assert!(hi > lo, "{lo} vs {hi}");
}
