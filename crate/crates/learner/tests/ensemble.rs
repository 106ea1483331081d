use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use triage_core::dataset::{build_schema, encode, encode_rows, truncate, EncodedDataset, EncodingMode, TruncationSpec};
use triage_core::samples::sample_pack;
use triage_core::simulator::{clean, generate_cohort, CohortSpec, InterviewRecord};
use triage_core::UrgencyLevel;
use triage_learner::tree::Node;
use triage_learner::{train, train_traced, Ensemble, GbdtConfig, LearnerError, Prediction, Strategy};

fn cohort(n: usize, seed: u64, noise: f64) -> Vec<InterviewRecord> {
    clean(generate_cohort(sample_pack(), &CohortSpec::golden().with_size(n).with_seed(seed).with_noise(noise)).unwrap())
}

fn dataset(records: &[InterviewRecord], mode: EncodingMode) -> EncodedDataset {
    let schema = build_schema(records).unwrap();
    encode(records, &schema, mode).unwrap()
}

fn small_config(strategy: Strategy) -> GbdtConfig {
    GbdtConfig {
        n_rounds: 15,
        ..GbdtConfig::for_strategy(strategy)
    }
}

#[test]
fn zero_rounds_predict_class_priors() {
    let ds = dataset(&cohort(1_500, 2, 0.1), EncodingMode::MissingAware);
    let config = GbdtConfig {
        n_rounds: 0,
        ..GbdtConfig::default()
    };
    let model = train(&config, &ds).unwrap();
    let counts = ds.label_counts();
    let priors: Vec<f64> = counts.iter().map(|&c| c as f64 / ds.n_rows() as f64).collect();
    let argmax = (0..5).rev().max_by(|&a, &b| priors[a].total_cmp(&priors[b])).unwrap();
    for p in model.predict_dataset(&ds).unwrap().iter().take(50) {
        for k in 0..5 {
            assert!((p.probabilities[k] - priors[k]).abs() < 1e-9);
        }
        assert_eq!(p.level.ordinal() as usize, argmax);
    }
}

#[test]
fn exact_ties_go_to_the_more_urgent_level() {
    assert_eq!(Prediction::from_probabilities([0.4, 0.4, 0.2, 0.0, 0.0]).level, UrgencyLevel::Planned);
    assert_eq!(Prediction::from_probabilities([0.2; 5]).level, UrgencyLevel::Acute);
    // Two equally frequent labels and no trees: the priors tie exactly.
    let mut records = cohort(400, 3, 0.1);
    records.retain(|r| matches!(r.outcome, UrgencyLevel::Planned | UrgencyLevel::Promptly));
    let n_planned = records.iter().filter(|r| r.outcome == UrgencyLevel::Planned).count();
    let n_promptly = records.len() - n_planned;
    let keep = n_planned.min(n_promptly);
    let mut seen = [0usize; 5];
    records.retain(|r| {
        seen[r.outcome.ordinal() as usize] += 1;
        seen[r.outcome.ordinal() as usize] <= keep
    });
    let ds = dataset(&records, EncodingMode::MissingAware);
    let model = train(&GbdtConfig { n_rounds: 0, ..GbdtConfig::default() }, &ds).unwrap();
    let p = model.predict_row(ds.matrix.row(0));
    assert_eq!(p.probabilities[1], p.probabilities[2]);
    assert_eq!(p.level, UrgencyLevel::Promptly);
}

#[test]
fn training_is_byte_deterministic() {
    let ds = dataset(&cohort(2_000, 4, 0.1), EncodingMode::MissingAware);
    for strategy in Strategy::ALL {
        let config = GbdtConfig {
            feature_fraction: 0.7,
            row_fraction: 0.8,
            seed: 9,
            ..small_config(strategy)
        };
        let a = train(&config, &ds).unwrap().to_artifact(false);
        let b = train(&config, &ds).unwrap().to_artifact(false);
        assert_eq!(a, b, "{strategy}");
        let c = train(&config.clone().with_seed(10), &ds).unwrap().to_artifact(false);
        assert_ne!(a, c, "{strategy}: seed should matter");
    }
}

#[test]
fn artifact_round_trip_preserves_predictions() {
    let records = cohort(2_000, 5, 0.1);
    let ds = dataset(&records, EncodingMode::MissingAware);
    for strategy in Strategy::ALL {
        let model = train(&small_config(strategy), &ds).unwrap();
        let text = model.to_artifact(true);
        let back = Ensemble::from_artifact(&text).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.to_artifact(true), text);
        assert!(!model.to_artifact(false).contains("train_time_ms"));
        assert_eq!(back.predict_dataset(&ds).unwrap(), model.predict_dataset(&ds).unwrap());
    }
}

#[test]
fn artifact_keys_are_sorted() {
    let ds = dataset(&cohort(600, 5, 0.1), EncodingMode::ZeroFilled);
    let text = train(&small_config(Strategy::LeafWise), &ds).unwrap().to_artifact(false);
    let value: Value = serde_json::from_str(&text).unwrap();
    let keys: Vec<&String> = value.as_object().unwrap().keys().collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    let first_line_keys: Vec<&str> = text
        .lines()
        .filter(|l| l.starts_with("  \"") && !l.starts_with("   "))
        .map(|l| l.trim_start().split('"').nth(1).unwrap())
        .collect();
    assert_eq!(first_line_keys.first(), Some(&"base_scores"));
}

#[test]
fn corrupt_artifacts_are_rejected() {
    let ds = dataset(&cohort(600, 6, 0.1), EncodingMode::MissingAware);
    let text = train(&small_config(Strategy::LevelWise), &ds).unwrap().to_artifact(false);
    let mut value: Value = serde_json::from_str(&text).unwrap();
    value["format_version"] = Value::from(2);
    assert!(Ensemble::from_artifact(&value.to_string()).is_err());
    let mut value: Value = serde_json::from_str(&text).unwrap();
    value["schema_fingerprint"] = Value::from("0000");
    assert!(Ensemble::from_artifact(&value.to_string()).is_err());
    assert!(Ensemble::from_artifact("{").is_err());
}

#[test]
fn schema_and_mode_mismatch_are_errors() {
    let records = cohort(1_000, 7, 0.1);
    let ds = dataset(&records, EncodingMode::MissingAware);
    let model = train(&small_config(Strategy::LeafWise), &ds).unwrap();
    let other = dataset(&records[..40], EncodingMode::MissingAware);
    if other.schema != ds.schema {
        assert!(matches!(model.predict_dataset(&other), Err(LearnerError::SchemaMismatch { .. })));
    }
    let zero = encode(&records, &ds.schema, EncodingMode::ZeroFilled).unwrap();
    assert!(matches!(model.predict_dataset(&zero), Err(LearnerError::ModeMismatch { .. })));
}

#[test]
fn training_preconditions() {
    let records = cohort(300, 8, 0.1);
    let mut single: Vec<InterviewRecord> = records.clone();
    let first = single[0].outcome;
    single.retain(|r| r.outcome == first);
    let ds = dataset(&single, EncodingMode::MissingAware);
    assert_eq!(train(&GbdtConfig::default(), &ds), Err(LearnerError::SingleLabel));
    let ds = dataset(&records, EncodingMode::MissingAware);
    for bad in [
        GbdtConfig { learning_rate: 0.0, ..GbdtConfig::default() },
        GbdtConfig { n_bins: 1, ..GbdtConfig::default() },
        GbdtConfig { feature_fraction: 1.5, ..GbdtConfig::default() },
        GbdtConfig { max_leaves: 0, ..GbdtConfig::default() },
        GbdtConfig { l2_lambda: -1.0, ..GbdtConfig::default() },
    ] {
        assert!(matches!(train(&bad, &ds), Err(LearnerError::InvalidConfig(_))));
    }
}

#[test]
fn single_leaf_trees_hold_the_newton_step() {
    let ds = dataset(&cohort(800, 9, 0.1), EncodingMode::MissingAware);
    let config = GbdtConfig {
        n_rounds: 1,
        max_leaves: 1,
        learning_rate: 0.3,
        l2_lambda: 2.0,
        ..GbdtConfig::default()
    };
    let model = train(&config, &ds).unwrap();
    let n = ds.n_rows() as f64;
    for (k, tree) in model.trees[0].iter().enumerate() {
        let p = model.base_scores[k].exp();
        let count = ds.labels.iter().filter(|&&l| l as usize == k).count() as f64;
        let g = n * p - count;
        let h = n * p * (1.0 - p);
        let expected = -g / (h + 2.0) * 0.3;
        assert_eq!(tree.nodes.len(), 1);
        let Node::Leaf { value } = &tree.nodes[0] else { panic!() };
        assert!((value[0] - expected).abs() < 1e-9, "class {k}: {} vs {expected}", value[0]);
    }
}

#[test]
fn symmetric_trees_share_one_split_per_level() {
    let ds = dataset(&cohort(2_000, 10, 0.1), EncodingMode::MissingAware);
    let config = GbdtConfig {
        max_depth: 4,
        ..small_config(Strategy::Symmetric)
    };
    let model = train(&config, &ds).unwrap();
    for tree in model.trees.iter().flatten() {
        let depth = tree.depth();
        assert!(depth <= 4);
        assert!(tree.n_leaves() <= 1 << depth);
        let mut levels: Vec<Vec<(usize, String, bool)>> = vec![Vec::new(); depth + 1];
        fn walk(nodes: &[Node], i: usize, d: usize, levels: &mut Vec<Vec<(usize, String, bool)>>, leaf_depths: &mut Vec<usize>) {
            match &nodes[i] {
                Node::Leaf { .. } => leaf_depths.push(d),
                Node::Split { feature, rule, missing_left, left, right } => {
                    levels[d].push((*feature, format!("{rule:?}"), *missing_left));
                    walk(nodes, *left, d + 1, levels, leaf_depths);
                    walk(nodes, *right, d + 1, levels, leaf_depths);
                }
            }
        }
        let mut leaf_depths = Vec::new();
        walk(&tree.nodes, 0, 0, &mut levels, &mut leaf_depths);
        for level in &levels {
            assert!(level.windows(2).all(|w| w[0] == w[1]), "level splits differ: {level:?}");
        }
        assert!(leaf_depths.iter().all(|&d| d == depth), "oblivious trees are complete");
    }
}

#[test]
fn leaf_wise_respects_max_leaves() {
    let ds = dataset(&cohort(2_000, 11, 0.1), EncodingMode::MissingAware);
    let config = GbdtConfig {
        max_leaves: 7,
        min_samples_leaf: 5,
        ..small_config(Strategy::LeafWise)
    };
    let model = train(&config, &ds).unwrap();
    assert!(model.trees.iter().flatten().all(|t| t.n_leaves() <= 7));
    assert!(model.trees.iter().flatten().any(|t| t.n_leaves() == 7));
    let level = GbdtConfig { max_depth: 2, ..small_config(Strategy::LevelWise) };
    let model = train(&level, &ds).unwrap();
    assert!(model.trees.iter().flatten().all(|t| t.depth() <= 2));
}

#[test]
fn forest_leaves_are_distributions() {
    let ds = dataset(&cohort(1_500, 12, 0.1), EncodingMode::MissingAware);
    let model = train(&small_config(Strategy::Forest), &ds).unwrap();
    assert_eq!(model.trees.len(), 15);
    for tree in model.trees.iter().flatten() {
        for node in &tree.nodes {
            if let Node::Leaf { value } = node {
                assert_eq!(value.len(), 5);
                assert!((value.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
    for p in model.predict_dataset(&ds).unwrap() {
        assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn all_missing_rows_still_predict() {
    let records = cohort(1_500, 13, 0.1);
    let ds = dataset(&records, EncodingMode::MissingAware);
    for strategy in Strategy::ALL {
        let model = train(&small_config(strategy), &ds).unwrap();
        let empty = encode_rows([(&[][..], UrgencyLevel::Wait)], &ds.schema, EncodingMode::MissingAware).unwrap();
        let p = model.predict_row(empty.matrix.row(0));
        assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let dense = model.predict_dense(&vec![f64::NAN; ds.schema.len()]);
        assert_eq!(dense, p);
    }
}

#[test]
fn absent_and_explicit_missing_agree() {
    let records = cohort(1_500, 14, 0.1);
    let ds = dataset(&records, EncodingMode::MissingAware);
    let model = train(&small_config(Strategy::LeafWise), &ds).unwrap();
    for i in 0..300 {
        let row = ds.matrix.row(i);
        let dense: Vec<f64> = row
            .to_dense(ds.schema.len(), EncodingMode::MissingAware)
            .into_iter()
            .map(|v| v.unwrap_or(f64::NAN))
            .collect();
        assert_eq!(model.predict_row(row), model.predict_dense(&dense));
    }
}

/// Evaluates the serialized trees directly on raw values, checking each
/// node's condition written out from the artifact JSON.
fn interpret(artifact: &Value, values: &[Option<f64>]) -> [f64; 5] {
    let edges_of = |col: usize| -> Option<Vec<f64>> {
        let bins = &artifact["binning"]["columns"][col];
        (bins["kind"] == "numeric").then(|| bins["edges"].as_array().unwrap().iter().map(|e| e.as_f64().unwrap()).collect())
    };
    let forest = artifact["config"]["strategy"] == "forest";
    let mut scores: Vec<f64> = artifact["base_scores"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let mut votes = [0.0; 5];
    for round in artifact["trees"].as_array().unwrap() {
        for (k, tree) in round.as_array().unwrap().iter().enumerate() {
            let nodes = tree["nodes"].as_array().unwrap();
            let mut i = 0;
            let leaf = loop {
                let node = &nodes[i];
                if let Some(leaf) = node.get("leaf") {
                    break leaf["value"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect::<Vec<f64>>();
                }
                let s = &node["split"];
                let feature = s["feature"].as_u64().unwrap() as usize;
                let left = match values[feature] {
                    None => s["missing_left"].as_bool().unwrap(),
                    Some(v) => {
                        if let Some(t) = s["rule"].get("threshold") {
                            let t = t.as_u64().unwrap() as usize;
                            match edges_of(feature) {
                                Some(edges) => t >= edges.len() || v <= edges[t],
                                None => v <= t as f64,
                            }
                        } else {
                            s["rule"]["categories"].as_array().unwrap().iter().any(|c| c.as_f64().unwrap() == v)
                        }
                    }
                };
                let target = if left { &s["left"] } else { &s["right"] };
                i = target.as_u64().unwrap() as usize;
            };
            if forest {
                for c in 0..5 {
                    votes[c] += leaf[c];
                }
            } else {
                scores[k] += leaf[0];
            }
        }
    }
    if forest {
        let total: f64 = votes.iter().sum();
        return votes.map(|v| v / total);
    }
    let max = scores.iter().copied().fold(f64::MIN, f64::max);
    let exp: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exp.iter().sum();
    std::array::from_fn(|k| exp[k] / z)
}

#[test]
fn routing_matches_an_independent_interpreter() {
    let records = cohort(3_400, 15, 0.1);
    let train_set = dataset(&records[..2_000], EncodingMode::MissingAware);
    // Truncated held-out interviews exercise the missing directions.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let held_out: Vec<_> = records[2_000..]
        .iter()
        .map(|r| truncate(r, &TruncationSpec::new(rng.random_range(0.2..=1.0)).unwrap()))
        .collect();
    let test = encode_rows(
        held_out.iter().map(|t| (t.answers.as_slice(), UrgencyLevel::Wait)),
        &train_set.schema,
        EncodingMode::MissingAware,
    )
    .unwrap();
    assert!(test.n_rows() >= 1_000);
    for strategy in Strategy::ALL {
        let model = train(&small_config(strategy), &train_set).unwrap();
        let artifact: Value = serde_json::from_str(&model.to_artifact(false)).unwrap();
        for i in 0..test.n_rows().min(1_000) {
            let row = test.matrix.row(i);
            let expected = interpret(&artifact, &row.to_dense(test.schema.len(), EncodingMode::MissingAware));
            let got = model.predict_row(row).probabilities;
            for k in 0..5 {
                assert!((got[k] - expected[k]).abs() < 1e-12, "{strategy} row {i}");
            }
        }
    }
}

#[test]
fn training_loss_never_increases() {
    let ds = dataset(&cohort(10_000, 1, 0.1), EncodingMode::MissingAware);
    for strategy in [Strategy::LeafWise, Strategy::LevelWise, Strategy::Symmetric] {
        let config = GbdtConfig {
            n_rounds: 50,
            ..GbdtConfig::for_strategy(strategy)
        };
        let (_, trace) = train_traced(&config, &ds).unwrap();
        assert_eq!(trace.len(), 50);
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{strategy}: {} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn noise_free_cohort_is_learned_exactly() {
    let ds = dataset(&cohort(5_000, 16, 0.0), EncodingMode::MissingAware);
    let config = GbdtConfig {
        n_rounds: 60,
        learning_rate: 0.5,
        max_leaves: 4_096,
        min_samples_leaf: 1,
        l2_lambda: 0.0,
        ..GbdtConfig::default()
    };
    let model = train(&config, &ds).unwrap();
    let predictions = model.predict_dataset(&ds).unwrap();
    let wrong = predictions.iter().zip(&ds.labels).filter(|(p, &l)| p.level.ordinal() != l).count();
    assert_eq!(wrong, 0);
}
