//! Drives the command layer end to end in a scratch directory: generate,
//! train, report, evaluate, project, then resume from the midpoint and
//! confirm the final report is unchanged.

use std::fs;

use modir::cli::{
    cmd_eval, cmd_generate, cmd_project, cmd_report, cmd_train, EvalArgs, GenerateArgs, ProjectArgs, ReportArgs,
    RunConfig, TrainArgs,
};

fn main() -> modir::Result<()> {
    let root = std::env::temp_dir().join(format!("modir-pipeline-{}", std::process::id()));
    let io = |e| modir::Error::io(&root, e);
    fs::create_dir_all(&root).map_err(io)?;
    let mut stdout = std::io::stdout();

    let mut cfg = RunConfig::default();
    cfg.train.total_steps = 1000;
    cfg.train.eval_every = 100;
    let config = root.join("config.json");
    fs::write(&config, cfg.to_pretty_json()?).map_err(io)?;

    let corpora = root.join("corpora");
    cmd_generate(
        &GenerateArgs {
            config: Some(config.clone()),
            out: corpora.clone(),
            seed: None,
            force: true,
        },
        &mut stdout,
    )?;

    let train = |out: &str, resume| TrainArgs {
        config: Some(config.clone()),
        corpora: corpora.clone(),
        out: root.join(out),
        seed: None,
        force: true,
        resume,
    };
    cmd_train(&train("run", None), &mut stdout)?;
    cmd_report(
        &ReportArgs {
            run: root.join("run"),
            out: None,
            force: true,
        },
        &mut stdout,
    )?;
    let final_ck = root.join("run/checkpoints/final.json");
    cmd_eval(
        &EvalArgs {
            config: None,
            checkpoint: final_ck.clone(),
            corpora: corpora.clone(),
            k: Some(5),
            seed: None,
            out: Some(root.join("eval-k5.json")),
            force: true,
        },
        &mut stdout,
    )?;
    cmd_project(
        &ProjectArgs {
            checkpoint: final_ck,
            corpora: corpora.clone(),
            out: root.join("projection.csv"),
            force: true,
        },
        &mut stdout,
    )?;

    let mid = root.join("run/checkpoints/step-000500.json");
    cmd_train(&train("resumed", Some(mid)), &mut std::io::sink())?;
    let last = |dir: &str| {
        fs::read_to_string(root.join(dir).join("metrics.jsonl"))
            .map(|s| s.lines().last().unwrap_or_default().to_string())
            .map_err(io)
    };
    println!("\nresumed final report identical: {}", last("run")? == last("resumed")?);
    println!("artifacts in {}", root.display());
    Ok(())
}
