mod common;

use std::collections::HashMap;

use heurank::domains::{generate_instance, DomainParams, DomainTag, StateId};
use heurank::harness::prepare;
use heurank::losses::LossKind;
use heurank::models::{Activation, HeuristicModel, ModelSpec};
use heurank::oracle::OracleLimits;
use heurank::trace::RecordOptions;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn loss_kinds() -> impl Strategy<Value = LossKind> {
    prop::sample::select(LossKind::ALL.to_vec())
}

fn spec(which: u8, d: usize) -> ModelSpec {
    match which {
        0 => ModelSpec::tabular(),
        1 => ModelSpec::linear(d),
        2 => ModelSpec::mlp(d, vec![5], Activation::Softplus),
        _ => {
            let mut s = ModelSpec::mlp(d, vec![4, 3], Activation::Softplus);
            s.output_softplus = true;
            s
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn backprop_matches_finite_differences(
        kind in loss_kinds(),
        which in 0u8..4,
        maze_seed in 0u64..500,
        param_seed in 0u64..1_000,
    ) {
        let inst = generate_instance(DomainTag::MazeTeleport, &DomainParams::sized(5), maze_seed).unwrap();
        let p = prepare(&[inst], true, &OracleLimits::default()).unwrap().remove(0);
        let set = p.trace.training_records(kind, &RecordOptions::default()).unwrap();
        let (alpha, beta) = kind.merit();
        let mut model = HeuristicModel::init(spec(which, p.instance.feature_dim()), param_seed).unwrap();
        model.register_states(&set.instance_id, set.states.iter().map(|e| e.state));
        let mut rng = ChaCha8Rng::seed_from_u64(param_seed);
        let scale = if which == 0 { 10.0 } else { 0.5 };
        let p: Vec<f64> = model.params().iter().map(|_| rng.gen_range(-scale..scale)).collect();
        model.set_params(p).unwrap();
        if kind == LossKind::Lbe {
            let h: HashMap<StateId, f64> = model
                .forward(&set.instance_id, set.states.iter().map(|e| (e.state, e.features.as_slice())))
                .unwrap()
                .values;
            prop_assume!(common::lbe_kink_margin(&set, &h) > 1e-2);
        }
        let err = common::fd_max_relative_error(kind, &model, &set, alpha, beta);
        prop_assert!(err < 1e-4, "relative error {err:e}");
    }
}
