use cagecoopt_core::morph::{
    bo_baseline, ga_baseline, mtbo_loop, OptimizerConfig, PolicyEvaluator, ScoreConfig, SyntheticTwoTask,
};
use cagecoopt_core::policy::{policy_forward, train_universal_policy, PPOConfig, PolicyParams, RewardWeights};
use cagecoopt_core::rng::rng_from_seed;
use cagecoopt_core::tasks::{observe, reset, TaskSpec};
use proptest::prelude::*;

#[test]
fn every_optimizer_returns_a_design_inside_the_box() {
    let cfg = OptimizerConfig { iterations: 3, ..OptimizerConfig::default() };
    for run in [
        mtbo_loop(&mut SyntheticTwoTask::default(), &cfg, 1).unwrap(),
        bo_baseline(&mut SyntheticTwoTask::default(), &cfg, 1).unwrap(),
        ga_baseline(&mut SyntheticTwoTask::default(), &cfg, 1).unwrap(),
    ] {
        assert!(run.best_d.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(run.iterations.len(), 4);
        let rollouts: usize = run.evaluations.iter().map(|e| e.rollouts).sum();
        assert_eq!(rollouts, run.total_rollouts);
    }
}

#[test]
fn tiny_policy_drives_a_real_optimizer() {
    let spec = TaskSpec::catch();
    let ppo = PPOConfig { total_steps: 512, steps_per_update: 256, hidden: vec![8, 8], mee_budget: 30, ..PPOConfig::default() };
    let (params, log) =
        train_universal_policy(&spec, &ppo, &RewardWeights::for_reference(spec.mee_reference), 0.0, 4).unwrap();
    assert_eq!(log.len(), 2);
    let score = ScoreConfig { n_rollouts: 1, mee_budget: 30, ..ScoreConfig::default() };
    let mut ev = PolicyEvaluator { spec: &spec, params: &params, cfg: score };
    let cfg = OptimizerConfig { iterations: 1, ..OptimizerConfig::default() };
    let run = mtbo_loop(&mut ev, &cfg, 2).unwrap();
    assert!(spec.in_bounds(&run.best_d));
    for e in &run.evaluations {
        assert!((0.0..=1.0).contains(&e.f_suc) && e.f.is_finite());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn observations_fit_the_policy_input(seed in 0u64..1000, h in 0usize..3) {
        let spec = TaskSpec::upush();
        let mut rng = rng_from_seed(seed);
        let d = spec.sample_morphology(&mut rng).unwrap();
        let h = h % spec.shapes.len();
        let state = reset(&spec, &d, h, &mut rng).unwrap();
        let obs = observe(&spec, &d, h, &state);
        prop_assert_eq!(obs.len(), spec.observation_dim());
        let p = PolicyParams::new(spec.observation_dim(), &[8], spec.action_dim(), -0.5, &mut rng);
        let (mean, std, value) = policy_forward(&p, &obs).unwrap();
        prop_assert_eq!(mean.len(), spec.action_dim());
        prop_assert!(std.iter().all(|s| *s > 0.0) && value.is_finite());
    }
}
