//! Independent oracles for the column decomposition and momentum counting:
//! brute-force reassembly, in-model surgery deltas, and a materialized
//! momentum matrix checked against the streaming path.

use austeer_core::audecomp::{au_column, decompose_projection, AUId};
use austeer_core::data::{random_model, synthetic_config, synthetic_tokenizer, ContrastivePair};
use austeer_core::model::{HookSite, ProjectionBlock, SiteKind};
use austeer_core::momentum::{localize_stats, pair_momentum};
use austeer_core::numerics::{matvec, Vector};
use austeer_core::steering::{PlanProvenance, SteeringEntry, SteeringPlan};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[test]
fn reassembly_matches_matvec_on_model_sites() {
    // Sum of per-AU contributions reproduces the projection output at every
    // supported site of a random model.
    let model = random_model(&synthetic_config(32), 7);
    let c = *model.config();
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    for layer in 0..c.n_layers {
        // FFN hidden -> w_down.
        let x = Vector::new((0..c.d_ff).map(|_| rng.gen_range(-2.0f32..2.0)).collect()).unwrap();
        let w = &model.layer(layer).w_down;
        let contribs = decompose_projection(w, &x, HookSite::ffn_hidden(layer)).unwrap();
        let direct = matvec(w, &x).unwrap();
        let mut sum = vec![0.0f64; c.d_model];
        for contrib in &contribs {
            for (s, &v) in sum.iter_mut().zip(contrib.contribution.as_slice()) {
                *s += v as f64;
            }
        }
        let norm: f64 = l2(&direct.as_slice().iter().map(|&v| v as f64).collect::<Vec<_>>());
        for (i, &s) in sum.iter().enumerate() {
            assert!((s - direct.get(i) as f64).abs() <= 1e-5 * norm.max(1.0));
        }

        // Per-head slice of W_O: columns of head h are the AU columns.
        for head in [0usize, c.n_heads - 1] {
            let xh =
                Vector::new((0..c.d_head).map(|_| rng.gen_range(-2.0f32..2.0)).collect()).unwrap();
            let mut sum = vec![0.0f64; c.d_model];
            for dim in 0..c.d_head {
                let au = AUId::new(HookSite::attn_head_out(layer, head), dim);
                let col = au_column(&model, &au).unwrap();
                for (s, &cv) in sum.iter_mut().zip(col.as_slice()) {
                    *s += xh.get(dim) as f64 * cv as f64;
                }
            }
            // Direct: W_O applied to the concat vector with only head h set.
            let mut concat = vec![0.0f32; c.d_model];
            concat[head * c.d_head..(head + 1) * c.d_head].copy_from_slice(xh.as_slice());
            let direct = matvec(&model.layer(layer).wo, &Vector::new(concat).unwrap()).unwrap();
            let norm: f64 =
                l2(&direct.as_slice().iter().map(|&v| v as f64).collect::<Vec<_>>());
            for (i, &s) in sum.iter().enumerate() {
                assert!((s - direct.get(i) as f64).abs() <= 1e-5 * norm.max(1.0));
            }
        }
    }
}

#[test]
fn steering_one_au_shifts_projection_by_gamma_x_column() {
    // In-model check of the hook-site/AU correspondence: steering one AU
    // changes the consuming projection's output by exactly gamma * x_i *
    // column, measured on the f64 probe.
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for trial in 0..12 {
        let model = random_model(&synthetic_config(16), 1000 + trial);
        let c = *model.config();
        let tokens: Vec<u32> = (0..6).map(|_| rng.gen_range(2..16u32)).collect();

        let (site, block) = if trial % 2 == 0 {
            (HookSite::ffn_hidden(rng.gen_range(0..c.n_layers)), ProjectionBlock::Ffn)
        } else {
            (
                HookSite::attn_head_out(rng.gen_range(0..c.n_layers), rng.gen_range(0..c.n_heads)),
                ProjectionBlock::Attention,
            )
        };
        let dim = rng.gen_range(0..site.dim(&c));
        let au = AUId::new(site, dim);
        let gamma: f32 = rng.gen_range(0.5..4.0);

        let trace = model.record_activations(&tokens, &[site]).unwrap();
        let x_i = trace.get(&site).unwrap().get(dim);

        let plan = SteeringPlan::new(
            "surgery",
            PlanProvenance::new("surgery"),
            vec![SteeringEntry::multiplicative(au, gamma)],
        )
        .unwrap();
        let base = model
            .projection_output(&tokens, None, site.layer, block)
            .unwrap();
        let steered = model
            .projection_output(&tokens, Some(&plan), site.layer, block)
            .unwrap();
        let delta: Vec<f64> = steered.iter().zip(&base).map(|(s, b)| s - b).collect();

        let column = au_column(&model, &au).unwrap();
        // The steered coefficient is rounded to f32 inside the pass.
        let gamma_xi = (x_i * (1.0 + gamma)) as f64 - x_i as f64;
        let predicted: Vec<f64> = column.as_slice().iter().map(|&cv| gamma_xi * cv as f64).collect();

        let pred_norm = l2(&predicted);
        let resid: Vec<f64> = delta.iter().zip(&predicted).map(|(d, p)| d - p).collect();
        if pred_norm == 0.0 {
            assert!(l2(&delta) <= 1e-9, "trial {trial}: zero prediction, nonzero delta");
        } else {
            let rel = l2(&resid) / pred_norm;
            assert!(rel <= 1e-5, "trial {trial} at {site}: relative error {rel}");
        }
    }
}

#[test]
fn streaming_localize_matches_materialized_momentum_matrix() {
    // Brute-force oracle: record traces per pair, materialize the full
    // pair x dim momentum matrix, count signs and sum by scanning it, then
    // compare with the streaming path.
    let model = random_model(&synthetic_config(16), 5);
    let tokenizer = synthetic_tokenizer(16);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let pairs: Vec<ContrastivePair> = (0..40)
        .map(|i| {
            let ql = rng.gen_range(2..5usize);
            let q: Vec<String> = (0..ql).map(|_| format!("t{}", rng.gen_range(3..16))).collect();
            let q = q.join(" ");
            let a = rng.gen_range(3..16u32);
            let mut b = rng.gen_range(3..16u32);
            if b == a {
                b = 3 + (b + 1 - 3) % 13;
            }
            ContrastivePair::new(format!("p{i}"), format!("{q} t{a}"), format!("{q} t{b}"))
                .unwrap()
        })
        .collect();

    let sites = [HookSite::attn_head_out(1, 2), HookSite::ffn_hidden(0)];
    let stats = localize_stats(&model, &tokenizer, &pairs, &sites).unwrap();

    // Oracle: full matrix per site, in canonical order (layer ascending, so
    // the layer-0 FFN site comes first).
    let c = *model.config();
    let dims = [c.d_ff, c.d_head];
    let ordered_sites = [sites[1], sites[0]];
    let mut matrices: Vec<Vec<Vec<f32>>> = vec![Vec::new(), Vec::new()];
    for pair in &pairs {
        let tp = model
            .record_activations(&tokenizer.tokenize(&pair.positive), &ordered_sites)
            .unwrap();
        let tn = model
            .record_activations(&tokenizer.tokenize(&pair.negative), &ordered_sites)
            .unwrap();
        for (si, site) in ordered_sites.iter().enumerate() {
            let m = pair_momentum(&tp, &tn, site).unwrap();
            matrices[si].push(m.as_slice().to_vec());
        }
    }

    let mut idx = 0;
    for (si, dim) in dims.iter().enumerate() {
        for d in 0..*dim {
            let column: Vec<f32> = matrices[si].iter().map(|row| row[d]).collect();
            let n_pos = column.iter().filter(|&&m| m > 0.0).count() as u64;
            let n_neg = column.iter().filter(|&&m| m < 0.0).count() as u64;
            let n_zero = column.len() as u64 - n_pos - n_neg;
            let mean: f64 =
                column.iter().map(|&m| m as f64).sum::<f64>() / column.len() as f64;
            let mean_abs: f64 =
                column.iter().map(|&m| (m as f64).abs()).sum::<f64>() / column.len() as f64;

            let s = &stats[idx];
            assert_eq!(s.n_pos, n_pos, "au {}", s.au);
            assert_eq!(s.n_neg, n_neg, "au {}", s.au);
            assert_eq!(s.n_zero, n_zero, "au {}", s.au);
            assert!((s.mean_momentum().unwrap() - mean).abs() <= 1e-6);
            let score = s.finalize().unwrap();
            assert!((score.mean_abs_m - mean_abs).abs() <= 1e-6);
            // Eq.-2 bound with integer counts.
            assert_eq!(s.n_pos + s.n_neg + s.n_zero, s.n_total);
            idx += 1;
        }
    }
    assert_eq!(idx, stats.len());
}

#[test]
fn surgery_equivalence_links_decomposition_and_steering() {
    // Steering AU i by gamma then projecting equals projecting then adding
    // gamma * x_i * column.
    let model = random_model(&synthetic_config(16), 3);
    let c = *model.config();
    let w = &model.layer(0).w_down;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = Vector::new((0..c.d_ff).map(|_| rng.gen_range(-1.5f32..1.5)).collect()).unwrap();
    let site = HookSite::ffn_hidden(0);
    for _ in 0..10 {
        let dim = rng.gen_range(0..c.d_ff);
        let gamma: f32 = rng.gen_range(-0.9..3.0);
        let au = AUId::new(site, dim);
        let entry = [SteeringEntry::multiplicative(au, gamma)];
        let steered_x = austeer_core::steering::apply_steering(&x, &entry).unwrap();
        let via_steering = matvec(w, &steered_x).unwrap();

        let direct = matvec(w, &x).unwrap();
        let column = au_column(&model, &au).unwrap();
        let gamma_xi = (x.get(dim) * (1.0 + gamma)) as f64 - x.get(dim) as f64;
        let norm: f64 = l2(&via_steering
            .as_slice()
            .iter()
            .map(|&v| v as f64)
            .collect::<Vec<_>>());
        for i in 0..c.d_model {
            let expect = direct.get(i) as f64 + gamma_xi * column.get(i) as f64;
            assert!(
                (via_steering.get(i) as f64 - expect).abs() <= 1e-5 * norm.max(1.0),
                "dim {dim} row {i}"
            );
        }
    }
}

#[test]
fn ffn_out_and_residual_aus_have_no_column() {
    let model = random_model(&synthetic_config(16), 6);
    for site in [HookSite::ffn_out(0), HookSite::residual(1)] {
        assert!(au_column(&model, &AUId::new(site, 0)).is_err());
    }
    let _ = SiteKind::Residual;
}
