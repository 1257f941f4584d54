use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn flnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flnet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// A quick single-worker spec with every agent.
fn small_spec(dir: &Path) -> String {
    let path = dir.join("spec.toml");
    fs::write(
        &path,
        r#"
agents = ["dql", "ql", "greedy", "random", "oracle"]
master_seed = 3
eval_episodes = 5
smoothing_window = 5

[env]
num_workers = 1
num_channels = 3
max_energy = 3
utility_delta = 5.0
recharge_weight = [0.1]
recharge_weight_out = 0.8
channel_cost = [2.0, 3.0]
p_success_default = 0.5
p_success_special = [0.95, 0.98]
p_energy_two = [0.5]
p_in_coverage = [0.8]
scale_utility = 3.0
scale_channel = 1.0
scale_energy = 1.0

[trainer]
episodes = 10
steps_per_episode = 20
hidden_layers = [8, 8]
"#,
    )
    .unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn oracle_writes_q_values() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("q.csv");
    let o = flnet(&["oracle", "--workers", "1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("16 states, 16 actions"));
    let text = fs::read_to_string(out).unwrap();
    assert_eq!(text.lines().next(), Some("state,action,q"));
    assert_eq!(text.lines().count(), 257);
}

#[test]
fn oracle_refuses_full_size() {
    let o = flnet(&["oracle", "--workers", "3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("too large"));
}

#[test]
fn train_then_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(dir.path());
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();
    for agent in ["dql", "ql"] {
        let trained = flnet(&["train", "--agent", agent, "--spec", &spec, "--out", out_s]);
        assert!(trained.status.success(), "{trained:?}");
        let eval_csv = out.join(format!("{agent}_eval.csv"));
        let first = fs::read(&eval_csv).unwrap();
        assert!(out.join(format!("{agent}_train.csv")).exists());
        let ckpt = fs::read_dir(&out)
            .unwrap()
            .map(|e| e.unwrap().path())
            .find(|p| {
                let name = p.file_name().unwrap().to_string_lossy().into_owned();
                name.starts_with(agent) && (name.ends_with(".ckpt") || name.ends_with("actions.csv"))
            })
            .unwrap();
        let evaluated = flnet(&[
            "evaluate",
            "--agent",
            agent,
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--spec",
            &spec,
            "--out",
            out_s,
        ]);
        assert!(evaluated.status.success(), "{evaluated:?}");
        assert_eq!(fs::read(&eval_csv).unwrap(), first, "{agent} evaluation differs after reload");
    }
}

#[test]
fn evaluate_baselines_and_missing_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(dir.path());
    let out = dir.path().join("out");
    for agent in ["greedy", "random", "oracle"] {
        let o = flnet(&["evaluate", "--agent", agent, "--spec", &spec, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{o:?}");
        let policy = fs::read_to_string(out.join(format!("{agent}_policy.csv"))).unwrap();
        assert!(policy.starts_with("worker,in_coverage,channel,count\n"));
    }
    let o = flnet(&["evaluate", "--agent", "dql", "--spec", &spec, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = flnet(&["train", "--agent", "greedy", "--spec", &spec, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_is_deterministic_and_reportable() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(dir.path());
    let mut summaries = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = flnet(&[
            "sweep", "--spec", &spec, "--param", "q_mo", "--values", "0.2,0.8", "--out", out.to_str().unwrap(),
        ]);
        // A 10-episode agent need not win the ordering, so only the error
        // exit code is ruled out.
        assert_ne!(o.status.code(), Some(2), "{o:?}");
        assert!(stdout(&o).contains("q_mo=0.8"));
        summaries.push(fs::read(out.join("summary.csv")).unwrap());
        assert!(out.join("cell1_dql_train.csv").exists());
        assert!(out.join("metadata.toml").exists());
    }
    assert_eq!(summaries[0], summaries[1]);
    let o = flnet(&["report", dir.path().join("a").to_str().unwrap()]);
    assert!(matches!(o.status.code(), Some(0) | Some(1)), "{o:?}");
    assert!(stdout(&o).contains("dql reward non-decreasing along the sweep"));
}

fn summary_with(rewards: [(&str, f64); 4]) -> String {
    let mut text = String::from(
        "cell,parameter,value,agent,train_seed,eval_seed,eval_episodes,eval_steps,smoothing_window,\
         final_smoothed_reward,mean_reward,mean_utility,mean_channel_cost,mean_energy_cost\n",
    );
    for (agent, r) in rewards {
        text.push_str(&format!("0,,,{agent},0,0,1,100,100,{r},{r},0,0,0\n"));
    }
    text
}

#[test]
fn report_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("summary.csv");
    fs::write(&path, summary_with([("dql", 4300.0), ("ql", 2700.0), ("greedy", 2550.0), ("random", 480.0)])).unwrap();
    let o = flnet(&["report", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    assert!(stdout(&o).ends_with("PASS\n"));

    fs::write(&path, summary_with([("dql", 100.0), ("ql", 100.0), ("greedy", 100.0), ("random", 100.0)])).unwrap();
    let o = flnet(&["report", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{o:?}");
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn rejects_unknown_agent() {
    let o = flnet(&["evaluate", "--agent", "ppo"]);
    assert!(!o.status.success());
}
