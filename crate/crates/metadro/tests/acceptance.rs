//! End-to-end acceptance suite. Each test covers one release criterion and
//! prints a single PASS line (visible with `cargo test -- --nocapture`).

use std::process::Command;
use std::time::Instant;

use metadro::autodiff::{Tape, Tensor, Var};
use metadro::dro::{
    partition_by_group, robust_objective, update_stats, DroConfig, DroMode, GroupStats,
};
use metadro::episodes::{sample_episode, TaskSpec};
use metadro::models::{sgd_step_on_tape, MamlOrder, MlpEncoder, ProtoNetModel};
use metadro::numcheck::{central_diff_grad, max_rel_err};
use metadro::synth::{generate, SynthSpec};
use metadro::trainer::{
    export_metrics, import_metrics, meta_test, meta_train, MetricsFormat, MetricsRecord,
    ModelKind, TrainConfig, METRICS_CSV_HEADER,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FD_H: f64 = 1e-5;
const FD_TOL: f64 = 1e-4;

/// Check the tape gradient of `build` (inputs → scalar) against central
/// finite differences at `x0`.
fn fd_check(name: &str, x0: &Tensor, build: impl Fn(&mut Tape, Var) -> Var) {
    let eval = |xs: &[f64]| -> f64 {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(x0.shape().to_vec(), xs.to_vec()).unwrap());
        let out = build(&mut tape, x);
        tape.value(out).item().unwrap()
    };
    let mut tape = Tape::new();
    let x = tape.parameter(x0.clone());
    let out = build(&mut tape, x.var);
    let grads = tape.grad(out, &[x.var]).unwrap();
    let analytic = tape.value(grads[0]).data().to_vec();
    let numeric = central_diff_grad(&eval, x0.data(), FD_H);
    let err = max_rel_err(&analytic, &numeric);
    assert!(err < FD_TOL, "{}: FD relative error {} >= {}", name, err, FD_TOL);
}

/// Random values bounded away from zero so kinked/singular ops (relu, ln,
/// recip) stay differentiable in the FD window.
fn away_from_zero(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let m = 0.2 + rng.gen::<f64>() * 1.3;
            if rng.gen::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect()
}

#[test]
fn criterion_1_finite_difference_gradient_suite() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(510);
    for trial in 0..20 {
        let v6 = Tensor::vector(away_from_zero(&mut rng, 6));
        let m23 = Tensor::matrix(2, 3, away_from_zero(&mut rng, 6)).unwrap();
        let cm32 = Tensor::matrix(3, 2, away_from_zero(&mut rng, 6)).unwrap();
        let c6 = Tensor::vector(away_from_zero(&mut rng, 6));
        let pos6 = Tensor::vector((0..6).map(|_| 0.2 + rng.gen::<f64>() * 2.0).collect());
        let w6 = Tensor::vector(away_from_zero(&mut rng, 6));

        fd_check("matmul", &m23, |t, x| {
            let c = t.constant(cm32.clone());
            let y = t.matmul(x, c).unwrap();
            t.sum_all(y)
        });
        fd_check("transpose", &m23, |t, x| {
            let y = t.transpose(x).unwrap();
            let w = t.constant(cm32.clone());
            let z = t.mul(y, w).unwrap();
            t.sum_all(z)
        });
        fd_check("add", &v6, |t, x| {
            let c = t.constant(c6.clone());
            let y = t.add(x, c).unwrap();
            let w = t.constant(w6.clone());
            let z = t.mul(y, w).unwrap();
            t.sum_all(z)
        });
        fd_check("sub", &v6, |t, x| {
            let c = t.constant(c6.clone());
            let y = t.sub(c, x).unwrap();
            let w = t.constant(w6.clone());
            let z = t.mul(y, w).unwrap();
            t.sum_all(z)
        });
        fd_check("mul", &v6, |t, x| {
            let c = t.constant(c6.clone());
            let y = t.mul(x, c).unwrap();
            t.sum_all(y)
        });
        fd_check("scale", &v6, |t, x| {
            let y = t.scale(x, -2.5);
            t.sum_all(y)
        });
        fd_check("relu", &v6, |t, x| {
            let y = t.relu(x);
            let w = t.constant(w6.clone());
            let z = t.mul(y, w).unwrap();
            t.sum_all(z)
        });
        fd_check("exp", &v6, |t, x| {
            let y = t.exp(x);
            t.sum_all(y)
        });
        fd_check("ln", &pos6, |t, x| {
            let y = t.ln(x).unwrap();
            t.sum_all(y)
        });
        fd_check("recip", &v6, |t, x| {
            let y = t.recip(x).unwrap();
            t.sum_all(y)
        });
        fd_check("sum_all", &m23, |t, x| t.sum_all(x));
        fd_check("broadcast_to", &Tensor::scalar(away_from_zero(&mut rng, 1)[0]), |t, x| {
            let y = t.broadcast_to(x, &[2, 3]).unwrap();
            let w = t.constant(m23.clone());
            let z = t.mul(y, w).unwrap();
            t.sum_all(z)
        });
        fd_check("reshape", &m23, |t, x| {
            let y = t.reshape(x, &[3, 2]).unwrap();
            let w = t.constant(cm32.clone());
            let z = t.mul(y, w).unwrap();
            t.sum_all(z)
        });
        fd_check("softmax_cross_entropy", &m23, |t, x| {
            t.softmax_cross_entropy(x, &[2, 0]).unwrap()
        });

        // Full ProtoNet episode loss with respect to the encoder weights.
        let store = generate(&SynthSpec {
            dim: 4,
            classes: 4,
            groups_per_class: 2,
            records_per_class: 10,
            mean_scale: 3.0,
            noise_sigma: 0.7,
            shift_delta: 0.5,
            minority_frac: 0.2,
            seed: 600 + trial,
        })
        .unwrap();
        let task = TaskSpec::new(3, 2, 2).unwrap();
        let pool = store.classes();
        let mut ep_rng = ChaCha8Rng::seed_from_u64(700 + trial as u64);
        let episode = sample_episode(&store, &task, &pool, &mut ep_rng).unwrap();
        let mut enc_rng = ChaCha8Rng::seed_from_u64(800 + trial as u64);
        let encoder = MlpEncoder::new(vec![4, 4], &mut enc_rng).unwrap();
        let w0 = encoder.weights[0].clone();
        fd_check("protonet_loss", &w0, |t, w| {
            let b = t.constant(encoder.biases[0].clone());
            let model = ProtoNetModel::new(encoder.clone());
            model.episode_losses(t, &[(w, b)], &episode).unwrap().mean
        });
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 60, "suite took {:?}", elapsed);
    println!(
        "criterion 1: PASS — all primitives and the ProtoNet loss match finite differences (rel err < {}, 20 inputs each, {:?})",
        FD_TOL, elapsed
    );
}

fn toy_meta_gradient(through: bool) -> f64 {
    let mut tape = Tape::new();
    let theta = tape.parameter(Tensor::scalar(0.0));
    let one = tape.constant(Tensor::scalar(1.0));
    let two = tape.constant(Tensor::scalar(2.0));
    let d = tape.sub(theta.var, one).unwrap();
    let sq = tape.mul(d, d).unwrap();
    let support = tape.scale(sq, 0.5);
    let adapted = sgd_step_on_tape(&mut tape, &[theta.var], support, 0.5, through).unwrap();
    let dq = tape.sub(adapted[0], two).unwrap();
    let sq2 = tape.mul(dq, dq).unwrap();
    let query = tape.scale(sq2, 0.5);
    let g = tape.grad(query, &[theta.var]).unwrap();
    tape.value(g[0]).item().unwrap()
}

#[test]
fn criterion_2_second_order_toy_meta_gradient() {
    let second = toy_meta_gradient(true);
    let first = toy_meta_gradient(false);
    assert!((second - (-0.75)).abs() < 1e-10, "second order: {}", second);
    assert!((first - (-1.5)).abs() < 1e-10, "first order: {}", first);
    println!(
        "criterion 2: PASS — 1-D toy meta-gradients {:.12} (second) and {:.12} (first) match analytic values to 1e-10",
        second, first
    );
}

#[test]
fn criterion_3_protonet_reaches_95_percent_on_held_out_classes() {
    let start = Instant::now();
    let mut peaks = Vec::new();
    for seed in 0..5u64 {
        let store = generate(&SynthSpec {
            dim: 16,
            classes: 20,
            groups_per_class: 2,
            records_per_class: 50,
            mean_scale: 5.0,
            noise_sigma: 1.0,
            shift_delta: 0.0,
            minority_frac: 0.1,
            seed,
        })
        .unwrap();
        let cfg = TrainConfig {
            task: TaskSpec::new(10, 5, 1).unwrap(),
            model: ModelKind::Protonet,
            meta_batch_size: 16,
            outer_lr: 0.005,
            meta_iterations: 2000,
            eval_interval: 200,
            eval_tasks: 100,
            seed,
            dro: DroConfig::default(),
            hidden: vec![],
            embed_dim: 64,
            maml_order: MamlOrder::Second,
            inner_lr: 0.01,
            inner_steps: 1,
            holdout_classes: 10,
        };
        let out = meta_train(&cfg, &store, |_| {}).unwrap();
        let peak = out.history.iter().map(|r| r.avg).fold(f64::MIN, f64::max);
        assert!(
            peak >= 0.95,
            "seed {}: peak held-out accuracy {:.4} < 0.95 within 2000 iterations",
            seed,
            peak
        );
        peaks.push(peak);
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 300, "took {:?}", elapsed);
    println!(
        "criterion 3: PASS — 10-way 5-shot ProtoNet reached ≥0.95 on held-out classes for 5/5 seeds (peaks {:?}, {:?})",
        peaks.iter().map(|p| (p * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
        elapsed
    );
}

#[test]
fn criterion_4_adjusted_dro_beats_erm_on_worst_group() {
    let shifted_store = |seed: u64| {
        generate(&SynthSpec {
            dim: 16,
            classes: 8,
            groups_per_class: 2,
            records_per_class: 100,
            mean_scale: 1.5,
            noise_sigma: 0.25,
            shift_delta: 3.0,
            minority_frac: 0.1,
            seed,
        })
        .unwrap()
    };
    let config = |seed: u64, mode: DroMode| TrainConfig {
        task: TaskSpec::new(5, 5, 2).unwrap(),
        model: ModelKind::Maml,
        meta_batch_size: 16,
        outer_lr: 0.02,
        meta_iterations: 800,
        eval_interval: 0,
        eval_tasks: 200,
        seed,
        dro: DroConfig { mode, ..DroConfig::default() },
        hidden: vec![],
        embed_dim: 16,
        maml_order: MamlOrder::First,
        inner_lr: 0.5,
        inner_steps: 3,
        holdout_classes: 0,
    };
    let mut erm_sum = 0.0;
    let mut dro_sum = 0.0;
    for seed in 0..5u64 {
        let store = shifted_store(seed);
        for (mode, sum) in
            [(DroMode::Erm, &mut erm_sum), (DroMode::GroupAdjustedDro, &mut dro_sum)]
        {
            let cfg = config(seed, mode);
            let out = meta_train(&cfg, &store, |_| {}).unwrap();
            let rec = meta_test(&out.model, &cfg, &store, cfg.eval_tasks, seed ^ 0xABCD).unwrap();
            *sum += rec.worst;
        }
    }
    let erm = erm_sum / 5.0;
    let dro = dro_sum / 5.0;
    assert!(
        dro >= erm + 0.05,
        "worst-group accuracy: adjusted DRO {:.4} vs ERM {:.4} — gap below 0.05",
        dro,
        erm
    );
    println!(
        "criterion 4: PASS — adjusted-DRO MAML worst-group accuracy {:.4} ≥ ERM {:.4} + 0.05 (5-seed average, δ=3 ρ=0.1 shift)",
        dro, erm
    );
}

/// Build a group batch on a tape from literal (group, loss) pairs.
fn literal_batch(tape: &mut Tape, pairs: &[(&str, f64)]) -> metadro::dro::GroupBatch {
    let losses: Vec<(String, Var)> = pairs
        .iter()
        .map(|(g, v)| (g.to_string(), tape.constant(Tensor::scalar(*v))))
        .collect();
    partition_by_group(tape, &losses).unwrap()
}

#[test]
fn criterion_5_reduction_identities() {
    let dummy_params: Vec<Var> = Vec::new();

    // Single group: DRO == ERM to 1e-12.
    {
        let mut tape = Tape::new();
        let batch = literal_batch(&mut tape, &[("g", 0.3), ("g", 1.7), ("g", 0.9)]);
        let stats = update_stats(&GroupStats::new(), &batch);
        let erm = DroConfig { mode: DroMode::Erm, ..DroConfig::default() };
        let dro = DroConfig { mode: DroMode::Dro, ..DroConfig::default() };
        let (oe, _) = robust_objective(&mut tape, &batch, &stats, &erm, &dummy_params).unwrap();
        let (od, _) = robust_objective(&mut tape, &batch, &stats, &dro, &dummy_params).unwrap();
        let (ve, vd) = (tape.value(oe).item().unwrap(), tape.value(od).item().unwrap());
        assert!((ve - vd).abs() < 1e-12, "single-group DRO {} vs ERM {}", vd, ve);
    }

    // C = 0: adjusted DRO == plain DRO exactly.
    {
        let mut tape = Tape::new();
        let batch = literal_batch(&mut tape, &[("a", 0.4), ("b", 2.0), ("b", 0.1)]);
        let stats = update_stats(&GroupStats::new(), &batch);
        let dro = DroConfig { mode: DroMode::Dro, ..DroConfig::default() };
        let adj = DroConfig {
            mode: DroMode::GroupAdjustedDro,
            adjust_scale: 0.0,
            ..DroConfig::default()
        };
        let (od, gd) = robust_objective(&mut tape, &batch, &stats, &dro, &dummy_params).unwrap();
        let (oa, ga) = robust_objective(&mut tape, &batch, &stats, &adj, &dummy_params).unwrap();
        assert_eq!(tape.value(od).item().unwrap(), tape.value(oa).item().unwrap());
        assert_eq!(gd, ga);
    }

    // λ = 0 adds nothing, exactly, even with parameters present.
    {
        let mut tape = Tape::new();
        let theta = tape.parameter(Tensor::vector(vec![3.0, -4.0]));
        let batch = literal_batch(&mut tape, &[("a", 1.0), ("b", 0.5)]);
        let stats = update_stats(&GroupStats::new(), &batch);
        let plain = DroConfig { mode: DroMode::Dro, ..DroConfig::default() };
        let (o0, _) = robust_objective(&mut tape, &batch, &stats, &plain, &[theta.var]).unwrap();
        assert_eq!(tape.value(o0).item().unwrap(), 1.0);
    }

    // Adjustment arithmetic: n_g = 16 contributes exactly C/√16 = 0.25.
    {
        let mut tape = Tape::new();
        let batch = literal_batch(&mut tape, &[("g", 2.0)]);
        let stats = GroupStats::from_entries([("g".to_string(), 16u64, 32.0)]);
        let dro = DroConfig { mode: DroMode::Dro, ..DroConfig::default() };
        let adj = DroConfig {
            mode: DroMode::GroupAdjustedDro,
            adjust_scale: 1.0,
            count_mode: metadro::dro::CountMode::Batch,
            ..DroConfig::default()
        };
        // Batch count mode would use the batch count (1); cumulative uses 16.
        let cum = DroConfig {
            mode: DroMode::GroupAdjustedDro,
            adjust_scale: 1.0,
            ..DroConfig::default()
        };
        let (od, _) = robust_objective(&mut tape, &batch, &stats, &dro, &dummy_params).unwrap();
        let (oc, _) = robust_objective(&mut tape, &batch, &stats, &cum, &dummy_params).unwrap();
        let diff = tape.value(oc).item().unwrap() - tape.value(od).item().unwrap();
        assert_eq!(diff, 0.25, "1/√16 adjustment");
        let (ob, _) = robust_objective(&mut tape, &batch, &stats, &adj, &dummy_params).unwrap();
        let diff_batch = tape.value(ob).item().unwrap() - tape.value(od).item().unwrap();
        assert_eq!(diff_batch, 1.0, "1/√1 adjustment under batch counts");
    }

    println!("criterion 5: PASS — single-group==ERM (1e-12), C=0==DRO (exact), λ=0 adds nothing (exact), 1/√16 = 0.25 (exact)");
}

#[test]
fn criterion_6_sampler_properties() {
    let store = generate(&SynthSpec {
        dim: 4,
        classes: 12,
        groups_per_class: 2,
        records_per_class: 12,
        mean_scale: 3.0,
        noise_sigma: 1.0,
        shift_delta: 1.0,
        minority_frac: 0.25,
        seed: 31,
    })
    .unwrap();
    let task = TaskSpec::new(4, 2, 2).unwrap();
    let pool = store.classes();

    // Disjointness over 10,000 episodes.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..10_000 {
        let ep = sample_episode(&store, &task, &pool, &mut rng).unwrap();
        let support: std::collections::BTreeSet<&str> =
            ep.support.iter().map(|s| s.record_id.as_str()).collect();
        for q in &ep.query {
            assert!(
                !support.contains(q.record_id.as_str()),
                "episode {}: query record {} also in support",
                i,
                q.record_id
            );
        }
    }

    // Seed determinism: identical streams are bit-identical.
    let mut a = ChaCha8Rng::seed_from_u64(77);
    let mut b = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..50 {
        let ea = sample_episode(&store, &task, &pool, &mut a).unwrap();
        let eb = sample_episode(&store, &task, &pool, &mut b).unwrap();
        assert_eq!(
            serde_json::to_string(&ea).unwrap(),
            serde_json::to_string(&eb).unwrap()
        );
    }

    // Insufficient classes is an error.
    let small_pool: Vec<String> = pool.iter().take(3).cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(sample_episode(&store, &task, &small_pool, &mut rng).is_err());

    println!("criterion 6: PASS — support/query disjoint over 10,000 episodes, seeded sampling bit-identical, insufficient classes rejected");
}

#[test]
fn criterion_7_cli_pipeline_is_deterministic() {
    let bin = env!("CARGO_BIN_EXE_metadro");
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        "n_ways = 4\nk_shots = 3\nq_queries = 2\nsynth_classes = 10\nsynth_records_per_class = 30\nsynth_dim = 8\nembed_dim = 8\nhidden = []\nmeta_iterations = 60\neval_interval = 30\neval_tasks = 8\nholdout_classes = 4\nseed = 5\n",
    )
    .unwrap();

    let run_pipeline = |tag: &str| -> (Vec<u8>, Vec<u8>, Vec<u8>, String) {
        let store = dir.path().join(format!("store_{}.bin", tag));
        let ckpt = dir.path().join(format!("model_{}.ckpt", tag));
        let metrics = dir.path().join(format!("metrics_{}.csv", tag));
        let run = |args: &[&str]| {
            let out = Command::new(bin).args(args).output().unwrap();
            assert!(
                out.status.success(),
                "{:?} failed: {}",
                args,
                String::from_utf8_lossy(&out.stderr)
            );
            out
        };
        run(&["gen-synth", "--config", config.to_str().unwrap(), "--out", store.to_str().unwrap()]);
        run(&[
            "train",
            "--config",
            config.to_str().unwrap(),
            "--store",
            store.to_str().unwrap(),
            "--out",
            ckpt.to_str().unwrap(),
            "--metrics",
            metrics.to_str().unwrap(),
        ]);
        let eval = run(&[
            "eval",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--store",
            store.to_str().unwrap(),
            "--config",
            config.to_str().unwrap(),
            "--tasks",
            "8",
        ]);
        (
            std::fs::read(&store).unwrap(),
            std::fs::read(&ckpt).unwrap(),
            std::fs::read(&metrics).unwrap(),
            String::from_utf8(eval.stdout).unwrap(),
        )
    };

    let (store_a, ckpt_a, metrics_a, eval_a) = run_pipeline("a");
    let (store_b, ckpt_b, metrics_b, eval_b) = run_pipeline("b");
    assert_eq!(store_a, store_b, "store bytes differ across reruns");
    assert_eq!(ckpt_a, ckpt_b, "checkpoint bytes differ across reruns");
    assert_eq!(metrics_a, metrics_b, "metrics bytes differ across reruns");
    assert_eq!(eval_a, eval_b, "eval stdout differs across reruns");

    let metrics_text = String::from_utf8(metrics_a).unwrap();
    assert_eq!(metrics_text.lines().next().unwrap(), METRICS_CSV_HEADER);
    assert_eq!(eval_a.lines().next().unwrap(), METRICS_CSV_HEADER);

    println!("criterion 7: PASS — gen-synth → train → eval deterministic, metrics header matches, reruns byte-identical");
}

#[test]
fn criterion_8_summary_format_round_trips() {
    let record = MetricsRecord {
        iteration: 1200,
        avg: 0.714,
        avg_hw: 0.029,
        avg_std: 0.117,
        worst: 0.594,
        worst_hw: 0.020,
        best: 0.963,
        best_hw: 0.007,
        middle: 0.631,
        middle_hw: 0.021,
        worst_group: "g1".into(),
        best_group: "g0".into(),
        middle_group: "g2".into(),
        groups: vec![],
    };
    let row = record.format_summary_row();
    assert_eq!(row, "0.714±0.029, 0.594±0.020, 0.963±0.007, 0.631±0.021");
    let parsed = MetricsRecord::parse_summary_row(&row).unwrap();
    assert!((parsed.avg - record.avg).abs() < 1e-12);
    assert!((parsed.middle_hw - record.middle_hw).abs() < 1e-12);

    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("m.csv");
    let json_path = dir.path().join("m.jsonl");
    export_metrics(&[record.clone()], &csv_path, MetricsFormat::Csv).unwrap();
    export_metrics(&[record.clone()], &json_path, MetricsFormat::Json).unwrap();
    let from_csv = import_metrics(&csv_path, MetricsFormat::Csv).unwrap();
    let from_json = import_metrics(&json_path, MetricsFormat::Json).unwrap();
    assert!(from_csv[0].csv_fields_eq(&record));
    assert!(from_json[0].csv_fields_eq(&record));
    assert_eq!(from_json[0].format_summary_row(), row);

    println!("criterion 8: PASS — Table-style ± summary renders and round-trips through CSV and JSON export");
}
