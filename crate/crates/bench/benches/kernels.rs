use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use flnet::env::seeded_rng;
use flnet::space::state_features;
use flnet::{
    build_exact_mdp, decode_state, step, value_iteration, DdqnAgent, EnvConfig, JointAction, Mlp, TrainerConfig,
    Transition,
};

fn env_step(c: &mut Criterion) {
    let config = EnvConfig::table_one();
    let mut rng = seeded_rng(0);
    let state = decode_state(1234, &config).unwrap();
    let action = JointAction::uniform(3, 2, 1);
    c.bench_function("env_step_l3", |b| {
        b.iter(|| step(black_box(&state), &action, &mut rng, &config).unwrap())
    });
}

fn forward(c: &mut Criterion) {
    let config = EnvConfig::table_one();
    let net = Mlp::new(&[9, 32, 32, 32, 4096], &mut seeded_rng(1));
    let x = state_features(&decode_state(77, &config).unwrap(), &config);
    c.bench_function("mlp_forward_4096", |b| b.iter(|| net.forward(black_box(&x)).unwrap()));
}

fn train_step(c: &mut Criterion) {
    let config = EnvConfig::table_one();
    let mut agent = DdqnAgent::new(&config, &TrainerConfig::default()).unwrap();
    let mut rng = seeded_rng(2);
    let batch: Vec<Transition> = (0..32u64)
        .map(|i| {
            let s = decode_state(i * 97, &config).unwrap();
            let a = JointAction::uniform(3, (i % 4) as usize, (i % 3) as usize);
            let out = step(&s, &a, &mut rng, &config).unwrap();
            Transition {
                state: s,
                action: flnet::encode_action(&a, &config).unwrap() as usize,
                reward: out.reward,
                next_state: out.next_state,
            }
        })
        .collect();
    let refs: Vec<&Transition> = batch.iter().collect();
    c.bench_function("ddqn_train_step_b32", |b| b.iter(|| agent.train_step(&refs).unwrap()));
}

fn solve(c: &mut Criterion) {
    let config = EnvConfig::table_one().with_num_workers(1);
    let mdp = build_exact_mdp(&config).unwrap();
    c.bench_function("value_iteration_l1", |b| {
        b.iter_batched(|| (), |_| value_iteration(&mdp, 0.9, 1e-8).unwrap(), BatchSize::SmallInput)
    });
    let config2 = config.with_num_workers(2);
    c.bench_function("build_exact_mdp_l2", |b| b.iter(|| build_exact_mdp(black_box(&config2)).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = env_step, forward, train_step, solve
}
criterion_main!(benches);
