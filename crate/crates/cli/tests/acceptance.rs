//! Acceptance suite: one test per criterion, each printing a PASS line
//! (visible with `--nocapture`). Run with
//! `cargo test -p austeer-cli --test acceptance -- --nocapture`.

use std::path::Path;
use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use austeer_core::analysis::{kl_convergence, pairwise_divergence, taylor_residual};
use austeer_core::audecomp::{au_column, decompose_projection, AUId};
use austeer_core::data::{
    build_pairs_from_qa, gen_synthetic_task, random_model, synthetic_config, synthetic_tokenizer,
    ContrastivePair, SyntheticSpec,
};
use austeer_core::eval::{compare_modes, evaluate, sweep, CompareConfig};
use austeer_core::model::{HookSite, ModelConfig, ProjectionBlock};
use austeer_core::momentum::{localize_stats, pair_momentum, top_k, MomentumStats};
use austeer_core::numerics::{matvec, Matrix, Vector};
use austeer_core::steering::{build_austeer, PlanProvenance, SteeringEntry, SteeringPlan};

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn localization_sites() -> Vec<HookSite> {
    vec![HookSite::ffn_hidden(0), HookSite::ffn_hidden(1)]
}

#[test]
fn criterion_01_eq1_reassembly() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for case in 0..100 {
        let rows = rng.gen_range(1..=512usize);
        let cols = rng.gen_range(1..=512usize);
        let w = Matrix::new(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.gen_range(-1.0f32..1.0)).collect(),
        )
        .unwrap();
        let x = Vector::new((0..cols).map(|_| rng.gen_range(-1.0f32..1.0)).collect()).unwrap();

        let direct = matvec(&w, &x).unwrap();
        let contribs = decompose_projection(&w, &x, HookSite::ffn_hidden(0)).unwrap();
        let mut sum = vec![0.0f64; rows];
        for c in &contribs {
            for (s, &v) in sum.iter_mut().zip(c.contribution.as_slice()) {
                *s += v as f64;
            }
        }
        let direct64: Vec<f64> = direct.as_slice().iter().map(|&v| v as f64).collect();
        let resid: Vec<f64> = sum.iter().zip(&direct64).map(|(a, b)| a - b).collect();
        let rel = l2(&resid) / l2(&direct64).max(1e-12);
        assert!(rel <= 1e-5, "case {case} ({rows}x{cols}): relative error {rel}");
    }
    println!("[PASS] criterion 1: Eq. 1 reassembly within 1e-5 over 100 random (W, x)");
}

#[test]
fn criterion_02_au_surgery_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for trial in 0..50u64 {
        let model = random_model(&synthetic_config(16), 9000 + trial);
        let c = *model.config();
        let len = rng.gen_range(3..8usize);
        let tokens: Vec<u32> = (0..len).map(|_| rng.gen_range(2..16u32)).collect();

        let (site, block) = if trial % 2 == 0 {
            (
                HookSite::ffn_hidden(rng.gen_range(0..c.n_layers)),
                ProjectionBlock::Ffn,
            )
        } else {
            (
                HookSite::attn_head_out(rng.gen_range(0..c.n_layers), rng.gen_range(0..c.n_heads)),
                ProjectionBlock::Attention,
            )
        };
        let dim = rng.gen_range(0..site.dim(&c));
        let au = AUId::new(site, dim);
        let gamma: f32 = rng.gen_range(0.5..5.0);

        let trace = model.record_activations(&tokens, &[site]).unwrap();
        let x_i = trace.get(&site).unwrap().get(dim);
        let plan = SteeringPlan::new(
            "surgery",
            PlanProvenance::new("surgery"),
            vec![SteeringEntry::multiplicative(au, gamma)],
        )
        .unwrap();

        let base = model.projection_output(&tokens, None, site.layer, block).unwrap();
        let steered = model
            .projection_output(&tokens, Some(&plan), site.layer, block)
            .unwrap();
        let delta: Vec<f64> = steered.iter().zip(&base).map(|(s, b)| s - b).collect();

        let column = au_column(&model, &au).unwrap();
        let gamma_xi = (x_i * (1.0 + gamma)) as f64 - x_i as f64;
        let predicted: Vec<f64> = column.as_slice().iter().map(|&cv| gamma_xi * cv as f64).collect();
        let resid: Vec<f64> = delta.iter().zip(&predicted).map(|(d, p)| d - p).collect();
        let pred_norm = l2(&predicted);
        if pred_norm == 0.0 {
            assert!(l2(&delta) <= 1e-9, "trial {trial}: zero coefficient, nonzero delta");
        } else {
            let rel = l2(&resid) / pred_norm;
            assert!(rel <= 1e-5, "trial {trial} at {site}:{dim}: relative error {rel}");
        }
    }
    println!("[PASS] criterion 2: AU surgery shifts the projection by gamma*x_i*column within 1e-5 over 50 triples");
}

/// Criteria 3 and 4 share the 200-pair run.
fn momentum_oracle_run() -> (Vec<MomentumStats>, Vec<Vec<Vec<f32>>>, Vec<HookSite>) {
    let model = random_model(&synthetic_config(16), 33);
    let tokenizer = synthetic_tokenizer(16);
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let pairs: Vec<ContrastivePair> = (0..200)
        .map(|i| {
            let ql = rng.gen_range(2..6usize);
            let q: Vec<String> = (0..ql).map(|_| format!("t{}", rng.gen_range(3..16))).collect();
            let q = q.join(" ");
            let a = rng.gen_range(3..16u32);
            let mut b = rng.gen_range(3..16u32);
            if b == a {
                b = 3 + (b - 2) % 13;
            }
            ContrastivePair::new(format!("p{i:03}"), format!("{q} t{a}"), format!("{q} t{b}"))
                .unwrap()
        })
        .collect();

    let sites = localization_sites();
    let stats = localize_stats(&model, &tokenizer, &pairs, &sites).unwrap();

    // Brute-force oracle: materialize the full N x dim momentum matrix per
    // site by re-recording every pair.
    let mut matrices: Vec<Vec<Vec<f32>>> = vec![Vec::new(); sites.len()];
    for pair in &pairs {
        let tp = model
            .record_activations(&tokenizer.tokenize(&pair.positive), &sites)
            .unwrap();
        let tn = model
            .record_activations(&tokenizer.tokenize(&pair.negative), &sites)
            .unwrap();
        for (si, site) in sites.iter().enumerate() {
            matrices[si].push(pair_momentum(&tp, &tn, site).unwrap().as_slice().to_vec());
        }
    }
    (stats, matrices, sites)
}

#[test]
fn criterion_03_and_04_momentum_oracle_and_eq2_bounds() {
    let (stats, matrices, sites) = momentum_oracle_run();
    let config = synthetic_config(16);

    let mut idx = 0;
    for (si, site) in sites.iter().enumerate() {
        for d in 0..site.dim(&config) {
            let column: Vec<f32> = matrices[si].iter().map(|row| row[d]).collect();
            let n = column.len() as u64;
            let n_pos = column.iter().filter(|&&m| m > 0.0).count() as u64;
            let n_neg = column.iter().filter(|&&m| m < 0.0).count() as u64;
            let n_zero = n - n_pos - n_neg;
            let mean: f64 = column.iter().map(|&m| m as f64).sum::<f64>() / n as f64;
            let mean_abs: f64 =
                column.iter().map(|&m| (m as f64).abs()).sum::<f64>() / n as f64;

            // Criterion 3: exact counts, means within 1e-6.
            let s = &stats[idx];
            assert_eq!(
                (s.n_pos, s.n_neg, s.n_zero, s.n_total),
                (n_pos, n_neg, n_zero, n),
                "au {}",
                s.au
            );
            assert!((s.mean_momentum().unwrap() - mean).abs() <= 1e-6, "au {}", s.au);
            let score = s.finalize().unwrap();
            assert!((score.mean_abs_m - mean_abs).abs() <= 1e-6, "au {}", s.au);

            // Criterion 4: Eq. 2 bounds with integer counts.
            assert!((0.0..=1.0).contains(&score.r_pos));
            assert!((0.0..=1.0).contains(&score.r_neg));
            assert_eq!(s.n_pos + s.n_neg + s.n_zero, s.n_total);
            let total_ratio = (s.n_pos + s.n_neg + s.n_zero) as f64 / s.n_total as f64;
            assert_eq!(total_ratio, 1.0);
            idx += 1;
        }
    }
    assert_eq!(idx, stats.len());
    println!("[PASS] criterion 3: streaming localize matches the brute-force momentum matrix (N=200)");
    println!("[PASS] criterion 4: r_pos, r_neg in [0,1] and counts partition N exactly for every AU");
}

#[test]
fn criterion_05_planted_au_recovery() {
    let mut hits = 0;
    for seed in 0..10u64 {
        let task = gen_synthetic_task(&SyntheticSpec::with_seed(seed)).unwrap();
        let pairs = build_pairs_from_qa(&task.items).unwrap();
        let scores = austeer_core::momentum::localize(
            &task.model,
            &task.tokenizer,
            &pairs,
            &localization_sites(),
        )
        .unwrap();
        if top_k(&scores, 1).unwrap()[0].au == task.target_au {
            hits += 1;
        }
    }
    assert!(hits >= 9, "planted AU recovered in only {hits}/10 seeds");
    println!("[PASS] criterion 5: planted AU ranked top-1 in {hits}/10 seeds");
}

#[test]
fn criterion_06_steering_mode_ordering() {
    let n_seeds = 10u64;
    let mut mean = std::collections::BTreeMap::<String, f64>::new();
    for seed in 0..n_seeds {
        let task = gen_synthetic_task(&SyntheticSpec::with_seed(seed)).unwrap();
        let pairs = build_pairs_from_qa(&task.items).unwrap();
        let cfg = CompareConfig {
            sites: localization_sites(),
            k: 8,
            alpha: 10.0,
            seed,
            fixed_gamma: 5.0,
            suppress_fraction: 0.5,
            suppress_factor: 0.5,
            block_site: HookSite::ffn_hidden(1),
            max_new: 1,
            dataset_id: "planted".into(),
        };
        let reports =
            compare_modes(&task.model, &task.tokenizer, &pairs, &task.items, &cfg).unwrap();
        for r in &reports {
            *mean.entry(r.provenance.mode.clone()).or_default() += r.accuracy / n_seeds as f64;
        }
    }
    let get = |mode: &str| *mean.get(mode).unwrap();
    assert!(
        get("austeer") > get("random"),
        "austeer {} vs random {}",
        get("austeer"),
        get("random")
    );
    assert!(
        get("austeer") >= get("block_mean_diff"),
        "austeer {} vs block {}",
        get("austeer"),
        get("block_mean_diff")
    );
    assert!(
        get("steer_all") <= get("vanilla") + 0.02,
        "steer_all {} vs vanilla {}",
        get("steer_all"),
        get("vanilla")
    );
    assert!(
        get("austeer") > get("vanilla"),
        "austeer {} vs vanilla {}",
        get("austeer"),
        get("vanilla")
    );
    println!(
        "[PASS] criterion 6: 10-seed means austeer={:.3} > random={:.3}, austeer >= block={:.3}, steer_all={:.3} <= vanilla={:.3}+0.02",
        get("austeer"),
        get("random"),
        get("block_mean_diff"),
        get("steer_all"),
        get("vanilla")
    );
}

#[test]
fn criterion_07_kl_convergence_analogue() {
    let task = gen_synthetic_task(&SyntheticSpec::with_seed(4)).unwrap();
    let prompt = task
        .tokenizer
        .tokenize(&austeer_core::data::qa_prompt(&task.items[0].question));
    let strengths = [10.0, 100.0, 1_000.0, 10_000.0, 100_000.0];

    let series = kl_convergence(&task.model, &prompt, task.target_au, &strengths).unwrap();
    assert!(series.normalized, "first grid value should exceed 1e-9");
    // Normalized value at 10^4 vs the (normalized to 1) value at 10.
    assert!(
        series.values[3] < 0.5 * series.values[0],
        "no convergence: {:?}",
        series.values
    );

    let pairwise = pairwise_divergence(
        &task.model,
        &prompt,
        task.target_au,
        task.distractor_au,
        &strengths,
    )
    .unwrap();
    assert!(
        pairwise.values[3] > pairwise.values[0],
        "pairwise divergence did not grow: {:?}",
        pairwise.values
    );
    println!(
        "[PASS] criterion 7: normalized KL at 1e4 = {:.4} < 0.5; pairwise divergence {:.3} -> {:.3}",
        series.values[3], pairwise.values[0], pairwise.values[3]
    );
}

#[test]
fn criterion_08_taylor_check() {
    // Linearized toy: a single layer with an enormous norm_eps makes every
    // RMSNorm a fixed scaling, so the prediction is exact to rounding.
    let toy_config = ModelConfig {
        n_layers: 1,
        d_model: 32,
        n_heads: 2,
        d_head: 16,
        d_ff: 64,
        vocab_size: 16,
        max_seq: 16,
        norm_eps: 1e12,
    };
    let toy = random_model(&toy_config, 8);
    let au = AUId::new(HookSite::ffn_hidden(0), 7);
    let rec = taylor_residual(&toy, &[2, 5, 3], au, 1.0, 0.05).unwrap();
    assert!(rec.relative_error <= 1e-4, "linear toy relative error {}", rec.relative_error);

    // Smooth random model: halving the surgical step scales the residual
    // quadratically (ratio near 4).
    let mut ratios = Vec::new();
    for seed in [0u64, 3, 5] {
        let model = random_model(&synthetic_config(16), seed);
        let au = AUId::new(HookSite::ffn_hidden(0), 3);
        let full = taylor_residual(&model, &[2, 5, 3, 7], au, 2.0, 0.01).unwrap();
        let half = taylor_residual(&model, &[2, 5, 3, 7], au, 1.0, 0.01).unwrap();
        let ratio = (full.relative_error * full.delta_logits_norm)
            / (half.relative_error * half.delta_logits_norm);
        assert!((2.5..=6.0).contains(&ratio), "seed {seed}: ratio {ratio}");
        ratios.push(ratio);
    }
    println!(
        "[PASS] criterion 8: linear-toy Taylor error {:.2e} <= 1e-4; halving ratios {:?} in [2.5, 6]",
        rec.relative_error, ratios
    );
}

#[test]
fn criterion_09_fast_sweep_analogue() {
    let k_grid = [1usize, 2, 4, 8];
    let alpha_grid = [1.0, 4.0, 10.0, 20.0];
    let mut gaps = Vec::new();
    for seed in 0..5u64 {
        let mut spec = SyntheticSpec::with_seed(seed);
        spec.n_items = 120;
        let task = gen_synthetic_task(&spec).unwrap();
        let pairs = build_pairs_from_qa(&task.items).unwrap();
        let scores = austeer_core::momentum::localize(
            &task.model,
            &task.tokenizer,
            &pairs,
            &localization_sites(),
        )
        .unwrap();

        let full = sweep(
            &task.model,
            &task.tokenizer,
            &scores,
            &task.items,
            &k_grid,
            &alpha_grid,
            1,
            "full",
        )
        .unwrap();
        let fast = sweep(
            &task.model,
            &task.tokenizer,
            &scores,
            &task.items[..50],
            &k_grid,
            &alpha_grid,
            1,
            "fast",
        )
        .unwrap();

        // Evaluate the fast-search best cell on the full set.
        let fast_plan = build_austeer(&scores, fast.best.k, fast.best.alpha).unwrap();
        let fast_on_full = evaluate(
            &task.model,
            &task.tokenizer,
            Some(&fast_plan),
            &task.items,
            "full",
            1,
        )
        .unwrap()
        .accuracy;
        gaps.push(full.best.accuracy - fast_on_full);
    }
    let mean_gap: f64 = gaps.iter().sum::<f64>() / gaps.len() as f64;
    assert!(
        mean_gap <= 0.02,
        "fast-sweep best trails the full-sweep best by {mean_gap} on average: {gaps:?}"
    );
    println!(
        "[PASS] criterion 9: 50-item fast sweep within {:.4} accuracy points of the full sweep (5-seed mean)",
        mean_gap
    );
}

#[test]
fn criterion_10_cli_determinism() {
    let bin = env!("CARGO_BIN_EXE_austeer");
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    let config_path = root.join("config.json");
    std::fs::write(
        &config_path,
        serde_json::json!({
            "synthetic": {"n_items": 20},
            "seed": 5,
            "strategy": {"k": 4, "alpha": 10.0},
            "sweep": {"k_grid": [1, 4], "alpha_grid": [4.0, 10.0]},
            "analyze": {
                "au": {"layer": 1, "kind": "ffn_hidden", "dim": 5},
                "au_b": {"layer": 1, "kind": "ffn_hidden", "dim": 69},
                "epsilon": 0.01,
                "topk": 5
            }
        })
        .to_string(),
    )
    .unwrap();

    let run = |args: &[&str], out: &Path| {
        let output = Command::new(bin)
            .args(args)
            .arg("--config")
            .arg(&config_path)
            .arg("--out")
            .arg(out)
            .output()
            .expect("binary runs");
        assert!(
            output.status.success(),
            "austeer {args:?} failed: {}",
            String::from_utf8_lossy(&output.stderr)
        );
    };

    // localize and plan first so later commands can consume their files.
    let loc = root.join("loc");
    run(&["localize"], &loc);
    let plan_dir = root.join("plan");
    let scores_arg = loc.join("scores.json");
    let run_with_inputs = |args: &[&str], out: &Path| {
        let mut full: Vec<&str> = args.to_vec();
        let scores_s = scores_arg.to_str().unwrap().to_string();
        let plan_s = plan_dir.join("plan.json").to_str().unwrap().to_string();
        let scores_owned = ["--scores".to_string(), scores_s];
        let plan_owned = ["--plan".to_string(), plan_s];
        let extra: Vec<String> = match args[0] {
            "plan" => scores_owned.to_vec(),
            "eval" => plan_owned.to_vec(),
            _ => vec![],
        };
        let extra_refs: Vec<&str> = extra.iter().map(String::as_str).collect();
        full.extend(extra_refs);
        let output = Command::new(bin)
            .args(&full)
            .arg("--config")
            .arg(&config_path)
            .arg("--out")
            .arg(out)
            .output()
            .expect("binary runs");
        assert!(
            output.status.success(),
            "austeer {full:?} failed: {}",
            String::from_utf8_lossy(&output.stderr)
        );
    };
    run_with_inputs(&["plan"], &plan_dir);

    let commands: Vec<Vec<&str>> = vec![
        vec!["gen"],
        vec!["localize"],
        vec!["plan"],
        vec!["eval"],
        vec!["sweep"],
        vec!["analyze", "kl"],
        vec!["analyze", "pairwise"],
        vec!["analyze", "topk"],
        vec!["analyze", "taylor"],
        vec!["compare"],
    ];
    for args in &commands {
        let name = args.join("_");
        let out_a = root.join(format!("{name}_a"));
        let out_b = root.join(format!("{name}_b"));
        run_with_inputs(args, &out_a);
        run_with_inputs(args, &out_b);

        let mut entries: Vec<_> = std::fs::read_dir(&out_a)
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        entries.sort();
        assert!(!entries.is_empty(), "{name}: no outputs");
        for entry in entries {
            let a = std::fs::read(out_a.join(&entry)).unwrap();
            let b = std::fs::read(out_b.join(&entry)).unwrap();
            assert_eq!(
                a,
                b,
                "{name}: {} differs between reruns",
                entry.to_string_lossy()
            );
        }
    }
    println!("[PASS] criterion 10: all CLI commands rerun byte-identically");
}
