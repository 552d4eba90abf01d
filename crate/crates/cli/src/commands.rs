use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;
use vcs_core::artifacts::{line_plot_svg, sha256_file, write_csv, Manifest, Series};
use vcs_core::dataset::{self, action_spread, Dataset, StateQuantizer};
use vcs_core::demo::stitch_demo;
use vcs_core::envs::{grid_dataset, make_env, reach_rollout, BehaviorPolicy, Reach2D, StitchGrid};
use vcs_core::eval::{evaluate_run, write_visits_csv, EvalReport, ScoreRegistry};
use vcs_core::iql::train_iql;
use vcs_core::nn::write_params;
use vcs_core::ntk::{
    densest_state_profile, omrr, profile_range, write_profile_csv, ActionQuantizer, DensestProfile,
};
use vcs_core::policy::{train_policy, Baseline};
use vcs_core::{Error, Result, RunConfig};

use crate::store::{critic_hash, load_critic, load_policy, save_critic, PolicyMeta};
use crate::{Command, QualityArg};

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenData {
            env,
            quality,
            n_traj,
            seed,
            out,
        } => gen_data(&env, quality, n_traj, seed, &out),
        Command::TrainValue {
            config,
            dataset,
            out,
            seed,
        } => train_value(&config, &dataset, &out, seed),
        Command::TrainPolicy {
            config,
            dataset,
            critic,
            baseline,
            out,
            seed,
        } => train_policy_cmd(&config, &dataset, &critic, &baseline, &out, seed),
        Command::Eval {
            config,
            policies,
            out,
        } => eval(&config, &policies, &out),
        Command::Omrr {
            config,
            dataset,
            critic,
            out,
            seed,
        } => omrr_cmd(&config, &dataset, &critic, &out, seed),
        Command::Profile {
            config,
            dataset,
            critic,
            out,
        } => profile(&config, &dataset, &critic, &out),
        Command::Spread {
            config,
            dataset,
            out,
        } => spread(&config, &dataset, &out),
        Command::StitchDemo { config, out, seeds } => demo(config.as_deref(), &out, seeds),
    }
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn write_resolved(cfg: &RunConfig, dir: &Path) -> Result<()> {
    fs::write(dir.join("config.json"), cfg.to_json()? + "\n")?;
    Ok(())
}

fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)?;
    RunConfig::from_json(&text)
}

/// Relative `--out` paths land under the config's `output_dir` when it is set.
fn resolve_out(cfg: &RunConfig, out: &Path) -> PathBuf {
    match &cfg.output_dir {
        Some(dir) if out.is_relative() => dir.join(out),
        _ => out.to_path_buf(),
    }
}

fn load_dataset(path: &Path, cfg: &RunConfig) -> Result<Dataset> {
    let ds = dataset::load(path)?;
    let env = make_env(&cfg.env)?;
    if ds.state_dim != env.state_dim() || ds.action_dim != env.action_dim() {
        return Err(Error::Config(format!(
            "dataset ({}x{}) does not fit env {} ({}x{})",
            ds.state_dim,
            ds.action_dim,
            cfg.env,
            env.state_dim(),
            env.action_dim()
        )));
    }
    Ok(ds)
}

fn gen_data(env: &str, quality: QualityArg, n_traj: usize, seed: u64, out: &Path) -> Result<()> {
    let ds = match env {
        StitchGrid::ID => grid_dataset(),
        Reach2D::ID => {
            let policy = match quality {
                QualityArg::Expert => BehaviorPolicy::expert(),
                QualityArg::Medium => BehaviorPolicy::medium(),
                QualityArg::Mixture => BehaviorPolicy::mixture(0.25),
            };
            reach_rollout(&policy, n_traj, seed)
        }
        other => return Err(Error::UnknownEnv(other.to_string())),
    };
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        prepare_dir(parent)?;
    }
    dataset::save(&ds, out)?;
    let mut manifest = Manifest::new(
        "dataset",
        json!({
            "env": env,
            "quality": ds.meta.get("quality"),
            "n_traj": ds.trajectories.len(),
            "seed": seed,
            "r_star": ds.r_star,
            "meta": ds.meta,
        }),
    );
    let name = out
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    manifest.outputs.insert(name, sha256_file(out)?);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(sidecar(out), text)?;
    println!(
        "wrote {} trajectories ({} transitions) to {}",
        ds.trajectories.len(),
        ds.num_transitions(),
        out.display()
    );
    Ok(())
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    s.into()
}

fn loss_plot(title: &str, series: Vec<Series>) -> String {
    line_plot_svg(title, "step", "loss", &series)
}

fn train_value(config: &Path, data: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut cfg = load_config(config)?;
    let out = &resolve_out(&cfg, out);
    if let Some(s) = seed {
        cfg.iql.seed = s;
    }
    let ds = load_dataset(data, &cfg)?;
    prepare_dir(out)?;
    let art = train_iql(&ds, &cfg.iql)?;
    save_critic(&art.ensemble, out)?;
    write_params(&art.value, out.join("value.vcsp"))?;
    write_resolved(&cfg, out)?;
    let mut manifest = Manifest::new("critic", serde_json::to_value(&cfg.iql)?);
    manifest.input(data)?;
    let rows = art.loss_history.iter().map(|r| {
        vec![
            r.step.to_string(),
            r.v_loss.to_string(),
            r.q_loss.to_string(),
        ]
    });
    let mut csv = Vec::new();
    write_csv(&mut csv, &["step", "v_loss", "q_loss"], rows)?;
    manifest.emit(out, "loss.csv", &csv)?;
    let series = |label: &str, f: fn(&vcs_core::iql::LossRecord) -> f64| Series {
        label: label.into(),
        points: art
            .loss_history
            .iter()
            .map(|r| (r.step as f64, f(r)))
            .collect(),
    };
    let svg = loss_plot(
        "value pretraining",
        vec![
            series("v_loss", |r| r.v_loss),
            series("q_loss", |r| r.q_loss),
        ],
    );
    manifest.emit(out, "loss.svg", svg.as_bytes())?;
    for name in [
        "q1.vcsp",
        "q2.vcsp",
        "q1_target.vcsp",
        "q2_target.vcsp",
        "value.vcsp",
        "critic.json",
        "config.json",
    ] {
        manifest
            .outputs
            .insert(name.into(), sha256_file(out.join(name))?);
    }
    manifest.save(out)?;
    let last = art.loss_history.last();
    println!(
        "trained critic for {} steps (final v_loss {:.6}, q_loss {:.6}) -> {}",
        cfg.iql.steps,
        last.map_or(f64::NAN, |r| r.v_loss),
        last.map_or(f64::NAN, |r| r.q_loss),
        out.display()
    );
    Ok(())
}

fn train_policy_cmd(
    config: &Path,
    data: &Path,
    critic_dir: &Path,
    baseline: &str,
    out: &Path,
    seed: Option<u64>,
) -> Result<()> {
    let mut cfg = load_config(config)?;
    let out = &resolve_out(&cfg, out);
    if let Some(s) = seed {
        cfg.policy.seed = s;
    }
    let baseline = Baseline::parse(baseline)?;
    let ds = load_dataset(data, &cfg)?;
    let critic = load_critic(critic_dir)?;
    prepare_dir(out)?;
    prepare_dir(&out.join("checkpoints"))?;
    let art = train_policy(&ds, &critic, &cfg.policy, baseline)?;
    write_params(&art.policy.net, out.join("policy.vcsp"))?;
    let mut names = Vec::new();
    for (step, p) in &art.checkpoints {
        let name = format!("checkpoints/step_{step:07}.vcsp");
        write_params(&p.net, out.join(&name))?;
        names.push(name);
    }
    let weight_fn = cfg.policy.weight_fn(&ds);
    let meta = PolicyMeta {
        spec: art.policy.spec.clone(),
        baseline,
        lambda: weight_fn.lambda,
        floor: weight_fn.floor,
        r_star: weight_fn.r_star,
        base_return: ds.max_return(),
        multipliers: cfg.eval.multipliers.clone(),
        q_normalizer: art.q_normalizer,
        seed: cfg.policy.seed,
        env: cfg.env.clone(),
        critic_sha256: critic_hash(critic_dir)?,
        checkpoints: names.clone(),
    };
    fs::write(
        out.join("policy.json"),
        serde_json::to_string_pretty(&meta)? + "\n",
    )?;
    write_resolved(&cfg, out)?;
    let mut manifest = Manifest::new("policy", serde_json::to_value(&meta)?);
    manifest.input(data)?;
    manifest.input(critic_dir.join("q1.vcsp"))?;
    manifest.input(critic_dir.join("q2.vcsp"))?;
    let mut csv = Vec::new();
    write_csv(
        &mut csv,
        &["step", "loss"],
        art.loss_history
            .iter()
            .map(|r| vec![r.step.to_string(), r.loss.to_string()]),
    )?;
    manifest.emit(out, "loss.csv", &csv)?;
    let svg = loss_plot(
        &format!("{} policy", baseline.label()),
        vec![Series {
            label: "loss".into(),
            points: art
                .loss_history
                .iter()
                .map(|r| (r.step as f64, r.loss))
                .collect(),
        }],
    );
    manifest.emit(out, "loss.svg", svg.as_bytes())?;
    for name in
        names
            .iter()
            .map(String::as_str)
            .chain(["policy.vcsp", "policy.json", "config.json"])
    {
        manifest
            .outputs
            .insert(name.into(), sha256_file(out.join(name))?);
    }
    manifest.save(out)?;
    println!(
        "trained {} policy for {} steps, {} checkpoints -> {}",
        baseline.label(),
        cfg.policy.steps,
        art.checkpoints.len(),
        out.display()
    );
    Ok(())
}

fn eval(config: &Path, policy_dirs: &[PathBuf], out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let out = &resolve_out(&cfg, out);
    let registry = ScoreRegistry::builtin();
    let env = make_env(&cfg.env)?;
    prepare_dir(out)?;
    let mut manifest = Manifest::new("eval", serde_json::to_value(&cfg.eval)?);
    let mut per_seed = Vec::new();
    for dir in policy_dirs {
        let (meta, _, checkpoints) = load_policy(dir)?;
        if meta.env != cfg.env {
            return Err(Error::Config(format!(
                "policy in {} was trained on {}, config is for {}",
                dir.display(),
                meta.env,
                cfg.env
            )));
        }
        manifest.input(dir.join("policy.json"))?;
        let report = evaluate_run(
            &checkpoints,
            env.as_ref(),
            meta.base_return,
            &cfg.eval,
            &registry,
            meta.seed,
        )?;
        for curve in &report.curves {
            let tag = curve
                .multiplier
                .map_or_else(|| "goal".to_string(), |m| format!("m{m}"));
            let mut csv = Vec::new();
            write_visits_csv(&curve.visits, env.state_dim(), &mut csv)?;
            manifest.emit(out, &format!("visits_seed{}_{tag}.csv", meta.seed), &csv)?;
        }
        per_seed.push(report);
    }
    let report = EvalReport::summarize(&cfg.env, per_seed)?;
    let interval = cfg.eval.checkpoint_interval as f64;
    let series: Vec<Series> = report
        .per_seed
        .iter()
        .flat_map(|s| {
            s.curves.iter().map(move |c| Series {
                label: format!(
                    "seed {} {}",
                    s.seed,
                    c.multiplier
                        .map_or_else(|| "goal".to_string(), |m| format!("x{m}"))
                ),
                points: c
                    .running
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| ((i + 1) as f64 * interval, v))
                    .collect(),
            })
        })
        .collect();
    let svg = line_plot_svg(
        "running normalized score",
        "gradient step",
        "normalized score",
        &series,
    );
    manifest.emit(out, "curves.svg", svg.as_bytes())?;
    let text = serde_json::to_string_pretty(&report)? + "\n";
    manifest.emit(out, "report.json", text.as_bytes())?;
    write_resolved(&cfg, out)?;
    manifest.save(out)?;
    println!(
        "best normalized score {:.2} (multiplier {:?}) over {} seeds -> {}",
        report.best_score,
        report.best_multiplier,
        report.per_seed.len(),
        out.display()
    );
    Ok(())
}

fn quantizers(cfg: &RunConfig) -> Result<(ActionQuantizer, StateQuantizer)> {
    let env = make_env(&cfg.env)?;
    let aq = match cfg.env.as_str() {
        StitchGrid::ID => ActionQuantizer::Discrete {
            actions: vcs_core::envs::GridAction::ALL
                .iter()
                .map(|a| a.one_hot())
                .collect(),
        },
        _ => ActionQuantizer::uniform(cfg.probe.action_bins, env.action_range()),
    };
    Ok((
        aq,
        StateQuantizer::new(cfg.probe.state_bins, env.state_range()),
    ))
}

fn write_json_file(path: &Path, value: &serde_json::Value) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        prepare_dir(parent)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn omrr_cmd(
    config: &Path,
    data: &Path,
    critic_dir: &Path,
    out: &Path,
    seed: Option<u64>,
) -> Result<()> {
    let cfg = load_config(config)?;
    let out = &resolve_out(&cfg, out);
    let ds = load_dataset(data, &cfg)?;
    let critic = load_critic(critic_dir)?;
    let (aq, _) = quantizers(&cfg)?;
    let seed = seed.unwrap_or(cfg.probe.seed);
    let report = omrr(&critic.q1_view(), &ds, &aq, cfg.probe.n_pairs, seed)?;
    write_json_file(
        out,
        &json!({
            "estimate": report.estimate,
            "n_pairs": report.n_pairs,
            "skipped": report.skipped,
            "bins": report.bins,
            "seed": report.seed,
            "critic": report.critic,
            "dataset_sha256": sha256_file(data)?,
            "critic_sha256": critic_hash(critic_dir)?,
        }),
    )?;
    println!(
        "omrr {:.6} over {} pairs -> {}",
        report.estimate,
        report.n_pairs,
        out.display()
    );
    Ok(())
}

fn profile(config: &Path, data: &Path, critic_dir: &Path, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let out = &resolve_out(&cfg, out);
    let ds = load_dataset(data, &cfg)?;
    let critic = load_critic(critic_dir)?;
    let (aq, sq) = quantizers(&cfg)?;
    let DensestProfile { state, a_ref, rows } =
        densest_state_profile(&critic.q1_view(), &ds, &sq, &aq)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        prepare_dir(parent)?;
    }
    let mut csv = Vec::new();
    write_profile_csv(&rows, &mut csv)?;
    fs::write(out, csv)?;
    println!(
        "profile at state {:?} against action {:?}: {} rows, normalized-kernel range {:.6} -> {}",
        state,
        a_ref,
        rows.len(),
        profile_range(&rows),
        out.display()
    );
    Ok(())
}

fn spread(config: &Path, data: &Path, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let out = &resolve_out(&cfg, out);
    let ds = load_dataset(data, &cfg)?;
    let (_, sq) = quantizers(&cfg)?;
    let h = action_spread(&ds, &sq);
    write_json_file(
        out,
        &json!({
            "spread": h,
            "state_bins": cfg.probe.state_bins,
            "dataset_sha256": sha256_file(data)?,
        }),
    )?;
    println!("action spread {h:.6} -> {}", out.display());
    Ok(())
}

fn demo(config: Option<&Path>, out: &Path, seeds: u64) -> Result<()> {
    let cfg = match config {
        Some(p) => load_config(p)?,
        None => RunConfig::preset(StitchGrid::ID)?,
    };
    let out = &resolve_out(&cfg, out);
    prepare_dir(out)?;
    let seeds: Vec<u64> = (0..seeds).collect();
    let report = stitch_demo(&cfg, &seeds)?;
    write_resolved(&cfg, out)?;
    let mut manifest = Manifest::new("stitch-demo", json!({ "seeds": seeds }));
    let text = serde_json::to_string_pretty(&report)? + "\n";
    manifest.emit(out, "stitch_report.json", text.as_bytes())?;
    manifest.save(out)?;
    for s in &report.seeds {
        let ret = |label: &str, t: f64| {
            s.baseline(label)
                .and_then(|b| b.return_at(t))
                .map_or_else(|| "-".to_string(), |r| r.to_string())
        };
        println!(
            "seed {}: Q(s1,UP)={:.4} Q(s1,RIGHT)={:.4} rcsl_only@6={} vcs@7={} q_greedy@7={} {}",
            s.seed,
            s.q(vcs_core::envs::Cell::S1, vcs_core::envs::GridAction::Up)
                .unwrap_or(f64::NAN),
            s.q(vcs_core::envs::Cell::S1, vcs_core::envs::GridAction::Right)
                .unwrap_or(f64::NAN),
            ret("rcsl_only", 6.0),
            ret("vcs", 7.0),
            ret("q_greedy", 7.0),
            if s.passed { "ok" } else { "FAIL" }
        );
    }
    println!(
        "{} of {} seeds failed -> {}",
        report.failures,
        report.seeds.len(),
        out.display()
    );
    Ok(())
}
