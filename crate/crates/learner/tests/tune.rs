use triage_core::dataset::{build_schema, encode, EncodedDataset, EncodingMode};
use triage_core::samples::sample_pack;
use triage_core::simulator::{clean, generate_cohort, CohortSpec};
use triage_learner::{tune, GbdtConfig, LearnerError, ParamRange, SearchSpace, Strategy, TuneSpec};

fn dataset(n: usize) -> EncodedDataset {
    let records = clean(generate_cohort(sample_pack(), &CohortSpec::golden().with_size(n).with_seed(21)).unwrap());
    let schema = build_schema(&records).unwrap();
    encode(&records, &schema, EncodingMode::MissingAware).unwrap()
}

fn quick(strategy: Strategy) -> GbdtConfig {
    GbdtConfig {
        n_rounds: 10,
        ..GbdtConfig::for_strategy(strategy)
    }
}

#[test]
fn budget_of_one_evaluates_the_template() {
    let ds = dataset(1_200);
    let template = quick(Strategy::LeafWise);
    let spec = TuneSpec {
        budget: 1,
        ..TuneSpec::new(Strategy::LeafWise, 3)
    };
    let (best, report) = tune(&spec, &template, &ds).unwrap();
    assert_eq!(report.trials.len(), 1);
    assert_eq!(best, template);
    let zero = TuneSpec { budget: 0, ..spec };
    assert!(matches!(tune(&zero, &template, &ds), Err(LearnerError::InvalidConfig(_))));
}

#[test]
fn fixed_space_returns_the_template() {
    let ds = dataset(1_200);
    let template = quick(Strategy::LevelWise);
    let spec = TuneSpec {
        space: SearchSpace::fixed(&template),
        budget: 5,
        include_template: false,
        ..TuneSpec::new(Strategy::LevelWise, 4)
    };
    let (best, report) = tune(&spec, &template, &ds).unwrap();
    assert_eq!(best, template);
    assert_eq!(report.trials.len(), 5);
    let first = report.trials[0].validation_balanced_accuracy;
    assert!(report.trials.iter().all(|t| t.validation_balanced_accuracy == first));
    assert_eq!(report.best_index, 0, "earliest trial wins ties");
}

#[test]
fn search_never_ends_below_the_template() {
    let ds = dataset(2_000);
    for strategy in [Strategy::LeafWise, Strategy::Symmetric] {
        let template = quick(strategy);
        let mut spec = TuneSpec {
            budget: 4,
            ..TuneSpec::new(strategy, 5)
        };
        spec.space.n_rounds = ParamRange::Int { lo: 5, hi: 20 };
        let (best, report) = tune(&spec, &template, &ds).unwrap();
        assert_eq!(report.trials[0].config, template);
        let template_score = report.trials[0].validation_balanced_accuracy;
        assert!(report.best().validation_balanced_accuracy >= template_score);
        assert_eq!(best, report.best().config);
        assert!(report.trials.iter().all(|t| t.config.strategy == strategy));
    }
}

#[test]
fn tuning_is_deterministic() {
    let ds = dataset(1_200);
    let mut spec = TuneSpec {
        budget: 3,
        ..TuneSpec::new(Strategy::LeafWise, 6)
    };
    spec.space.n_rounds = ParamRange::Int { lo: 3, hi: 8 };
    let template = quick(Strategy::LeafWise);
    let (a, ra) = tune(&spec, &template, &ds).unwrap();
    let (b, rb) = tune(&spec, &template, &ds).unwrap();
    assert_eq!(a, b);
    let scores = |r: &triage_learner::TuneReport| r.trials.iter().map(|t| (t.config.clone(), t.validation_balanced_accuracy)).collect::<Vec<_>>();
    assert_eq!(scores(&ra), scores(&rb));
}

#[test]
fn sampled_configs_stay_inside_their_ranges() {
    use rand::SeedableRng;
    let space = SearchSpace::for_strategy(Strategy::LeafWise);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let template = GbdtConfig::default();
    for _ in 0..500 {
        let c = space.sample(&template, &mut rng);
        c.validate().unwrap();
        assert!((50..=200).contains(&c.n_rounds));
        assert!((0.03..=0.3).contains(&c.learning_rate));
        assert!((0.01..=10.0).contains(&c.l2_lambda));
        assert!((0.5..=1.0).contains(&c.feature_fraction));
        assert_eq!(c.n_bins, template.n_bins);
    }
}

#[test]
fn bad_ranges_are_rejected() {
    let ds = dataset(600);
    let mut spec = TuneSpec::new(Strategy::LeafWise, 1);
    spec.space.learning_rate = ParamRange::LogUniform { lo: 0.0, hi: 0.1 };
    assert!(matches!(tune(&spec, &quick(Strategy::LeafWise), &ds), Err(LearnerError::InvalidConfig(_))));
}
