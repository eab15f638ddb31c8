//! Subcommands of the `scen` binary.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Arg, ArgAction, ArgMatches, Command};

use scen_core::data::generate_synthetic;
use scen_core::eval::{evaluate, EvalReport};
use scen_core::train::{Model, TrainOutcome, Trainer, Variant};
use scen_core::{DatasetBundle, Split};

use crate::config::{RunConfig, KEYS, SEED_ENV};
use crate::error::{Error, Result};
use crate::report::{self, AblationEntry, ReportSummary};
use crate::{checkpoint, io};

const BOOL_KEYS: [&str; 3] = ["normalize", "deterministic", "force"];

fn with_keys(mut cmd: Command) -> Command {
    cmd = cmd.arg(
        Arg::new("config")
            .long("config")
            .value_name("FILE")
            .help("`key = value` configuration file"),
    );
    for (key, help) in KEYS {
        let mut arg = Arg::new(*key).long(*key).help(*help).action(ArgAction::Set).overrides_with(*key);
        if BOOL_KEYS.contains(key) {
            arg = arg.num_args(0..=1).default_missing_value("true").value_name("BOOL");
        } else {
            arg = arg.value_name("VALUE");
        }
        cmd = cmd.arg(arg);
    }
    cmd
}

pub fn cli() -> Command {
    Command::new("scen")
        .about("Siamese contrastive embedding network for compositional zero-shot learning")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(with_keys(
            Command::new("gen-data").about("write a synthetic dataset (metadata.txt, features.bin) to out_dir"),
        ))
        .subcommand(with_keys(
            Command::new("train").about("train one variant; writes train_log.csv, best.ckpt, final.ckpt, report.json"),
        ))
        .subcommand(with_keys(
            Command::new("eval").about("evaluate a checkpoint; writes curve.csv and report.json"),
        ))
        .subcommand(with_keys(
            Command::new("ablate").about("train all four variants over n_seeds seeds; writes ablation.csv"),
        ))
}

fn resolve(m: &ArgMatches, env_seed: Option<&str>) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = m.get_one::<String>("config") {
        let path = Path::new(path);
        let text = String::from_utf8(io::read(path)?).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        cfg.apply_text(&text)?;
    }
    cfg.apply_env(env_seed)?;
    for (key, _) in KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    Ok(cfg)
}

/// The configured dataset files, or the synthetic dataset generated with `data_seed`.
pub fn load_data(cfg: &RunConfig) -> Result<DatasetBundle> {
    match (&cfg.metadata, &cfg.features) {
        (Some(m), Some(f)) => io::load_bundle(m, f),
        (None, None) => Ok(generate_synthetic(&cfg.synthetic(cfg.data_seed))?),
        _ => Err(Error::config("metadata and features must be given together")),
    }
}

fn check_dims(model: &Model, bundle: &DatasetBundle) -> Result<()> {
    let d = model.scen.dims();
    if (d.feature_dim, d.n_states, d.n_objects) != (bundle.feature_dim(), bundle.n_states(), bundle.n_objects()) {
        return Err(Error::Usage(format!(
            "checkpoint expects feature_dim {}, {} states, {} objects; dataset has {}, {}, {}",
            d.feature_dim,
            d.n_states,
            d.n_objects,
            bundle.feature_dim(),
            bundle.n_states(),
            bundle.n_objects()
        )));
    }
    Ok(())
}

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.out_dir.join(name)
}

fn gen_data(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let meta = out_path(cfg, "metadata.txt");
    let feats = out_path(cfg, "features.bin");
    if !cfg.force {
        if let Some(p) = [&meta, &feats].into_iter().find(|p| p.exists()) {
            return Err(Error::Usage(format!("{} exists; pass --force to overwrite", p.display())));
        }
    }
    let bundle = generate_synthetic(&cfg.synthetic(cfg.seed))?;
    io::save_bundle(&bundle, &meta, &feats)?;
    write!(out, "{}", report::split_table("synthetic", &bundle.split_stats())).ok();
    Ok(())
}

/// Trains the configured variant and writes its log and checkpoints.
pub fn train_run(cfg: &RunConfig, bundle: &DatasetBundle) -> Result<TrainOutcome> {
    let trainer = Trainer::new(cfg.train_config(), bundle)?;
    Ok(trainer.fit()?)
}

fn train(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let bundle = load_data(cfg)?;
    let outcome = train_run(cfg, &bundle)?;
    io::write(&out_path(cfg, "train_log.csv"), report::log_csv(&outcome.log).as_bytes())?;
    io::write(&out_path(cfg, "best.ckpt"), &checkpoint::encode(&outcome.best))?;
    io::write(&out_path(cfg, "final.ckpt"), &checkpoint::encode(&outcome.final_model))?;
    io::write(&out_path(cfg, "run.cfg"), cfg.render().as_bytes())?;
    let r = evaluate(&outcome.best.scen, &bundle, Split::Test)?;
    io::write(&out_path(cfg, "report.json"), report::report_json(&r).as_bytes())?;
    writeln!(
        out,
        "variant {} seed {}: best epoch {} val AUC {}",
        cfg.variant.as_str(),
        cfg.seed,
        outcome.best_epoch,
        outcome.best_val_auc
    )
    .ok();
    writeln!(out, "{:<8} {}\n{:<8} {}", "split", report::RESULT_HEADER, "test", report::result_row(&(&r).into())).ok();
    Ok(())
}

pub fn eval_checkpoint(cfg: &RunConfig, bundle: &DatasetBundle) -> Result<EvalReport> {
    let path = cfg
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::Usage("eval needs --checkpoint".into()))?;
    let model = checkpoint::decode(&io::read(path)?)?;
    check_dims(&model, bundle)?;
    if cfg.split == Split::Train {
        return Err(Error::Usage(
            "the train split has no unseen-pair images; evaluate on val or test".into(),
        ));
    }
    Ok(evaluate(&model.scen, bundle, cfg.split)?)
}

fn eval(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let bundle = load_data(cfg)?;
    let r = eval_checkpoint(cfg, &bundle)?;
    io::write(&out_path(cfg, "curve.csv"), report::curve_csv(&r.curve).as_bytes())?;
    io::write(&out_path(cfg, "report.json"), report::report_json(&r).as_bytes())?;
    writeln!(out, "{:<8} {}\n{:<8} {}", "split", report::RESULT_HEADER, cfg.split.as_str(), report::result_row(&(&r).into())).ok();
    Ok(())
}

/// Per variant, one entry per seed `cfg.seed .. cfg.seed + n_seeds`.
pub fn ablation(cfg: &RunConfig, bundle: &DatasetBundle) -> Result<Vec<(Variant, Vec<AblationEntry>)>> {
    if cfg.n_seeds == 0 {
        return Err(Error::config("n_seeds must be at least 1"));
    }
    Variant::ALL
        .iter()
        .map(|&variant| {
            let entries = (0..cfg.n_seeds as u64)
                .map(|i| {
                    let run = RunConfig {
                        variant,
                        seed: cfg.seed + i,
                        ..cfg.clone()
                    };
                    let outcome = train_run(&run, bundle)?;
                    let test = evaluate(&outcome.best.scen, bundle, Split::Test)?;
                    Ok(AblationEntry {
                        val_auc: outcome.best_val_auc,
                        test: ReportSummary::from(&test),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((variant, entries))
        })
        .collect()
}

fn ablate(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let bundle = load_data(cfg)?;
    let results = ablation(cfg, &bundle)?;
    let rows: Vec<(&str, Vec<AblationEntry>)> = results.iter().map(|(v, e)| (v.as_str(), e.clone())).collect();
    let seeds: Vec<u64> = (0..cfg.n_seeds as u64).map(|i| cfg.seed + i).collect();
    io::write(&out_path(cfg, "ablation.csv"), report::ablation_csv(&rows).as_bytes())?;
    io::write(&out_path(cfg, "ablation_seeds.csv"), report::ablation_seeds_csv(&rows, &seeds).as_bytes())?;
    writeln!(out, "{:<8} {}", "variant", report::RESULT_HEADER).ok();
    for (name, entries) in &rows {
        let m = report::mean_metrics(entries);
        let mean = ReportSummary {
            auc: m[1],
            best_hm: m[2],
            best_seen: m[3],
            best_unseen: m[4],
            state_acc: m[5],
            object_acc: m[6],
        };
        writeln!(out, "{:<8} {}", name, report::result_row(&mean)).ok();
    }
    Ok(())
}

/// Parses `args` (program name first) and runs the chosen subcommand.
pub fn run<I, T>(args: I, env_seed: Option<&str>, out: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = cli().try_get_matches_from(args).map_err(|e| Error::Usage(e.to_string()))?;
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let cfg = resolve(sub, env_seed)?;
    match name {
        "gen-data" => gen_data(&cfg, out),
        "train" => train(&cfg, out),
        "eval" => eval(&cfg, out),
        "ablate" => ablate(&cfg, out),
        _ => unreachable!("clap rejects unknown subcommands"),
    }
}

/// `SCEN_SEED` from the process environment.
pub fn env_seed() -> Option<String> {
    std::env::var(SEED_ENV).ok()
}
