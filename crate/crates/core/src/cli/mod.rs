//! Command-line front end: one JSON config and one seed determine a run.
//!
//! Every run writes `resolved_config.json` (all defaults filled in) and
//! `summary.json` (one row per check) into the output directory, next to
//! the bulk JSON/CSV data of the command. Exit status: 0 when every check
//! passes, 1 on a failed check or a runtime error, 2 on a config error.

pub mod checks;
pub mod config;
pub mod report;

use std::path::{Path, PathBuf};

use crate::error::{LabError, Result};
use crate::scenes::SceneParams;
pub use config::{output_dir, Command, Format, RunConfig, Tolerances};
pub use report::{CheckRow, Output, RowStatus, Summary};

#[derive(Debug)]
pub struct Outcome {
    pub rows: Vec<CheckRow>,
    /// Runtime errors of check families; each also adds a failing row.
    pub errors: Vec<String>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.errors.is_empty() && !self.rows.iter().any(CheckRow::failed)
    }

    pub fn failing(&self) -> Vec<&str> {
        self.rows.iter().filter(|r| r.failed()).map(|r| r.name.as_str()).collect()
    }
}

/// Errors caused by the configuration rather than by the numerics.
pub fn is_config_error(e: &LabError) -> bool {
    matches!(
        e,
        LabError::Config(_) | LabError::UnknownScene(_) | LabError::BadParams(_) | LabError::NotLocalModel(_)
    )
}

struct Runner {
    rows: Vec<CheckRow>,
    errors: Vec<String>,
}

impl Runner {
    /// Runs one check family; config errors abort the run, anything else is
    /// recorded as a failing `<family>.error` row.
    fn family<F>(&mut self, name: &str, f: F) -> Result<()>
    where
        F: FnOnce(&mut Vec<CheckRow>) -> Result<()>,
    {
        let mut rows = vec![];
        match f(&mut rows) {
            Ok(()) => {
                self.rows.extend(rows);
                Ok(())
            }
            Err(e) if is_config_error(&e) => Err(e),
            Err(e) => {
                log::warn!("{name}: {e}");
                self.rows.extend(rows);
                self.rows.push(CheckRow::new(format!("{name}.error"), "runtime", f64::NAN, 0.0));
                self.errors.push(format!("{name}: {e}"));
                Ok(())
            }
        }
    }
}

/// Config for one piece of the `checkall` suite.
fn sub_config(base: &RunConfig, scene: &str, n: usize, command: Command, eps: Option<f64>) -> Result<RunConfig> {
    let mut c = base.clone();
    c.scene = scene.into();
    c.params = SceneParams::with_n(n);
    c.n = None;
    c.eps = eps;
    c.nesting_eps = None;
    c.resolve(command, None)
}

fn checkall(cfg: &RunConfig, out: &Output, run: &mut Runner) -> Result<()> {
    let out = out.sub("checkall");
    for (name, n) in [("local_nc", 2), ("cpn_o2h", 2), ("cpn_x_cpn", 2)] {
        let c = sub_config(cfg, name, n, Command::Crit, Some(0.05))?;
        let s = c.scene()?;
        let o = out.sub(&format!("kernel_{}", checks::scene_tag(&s)));
        run.family(&format!("kernel.{}", checks::scene_tag(&s)), |r| checks::kernel(&c, &s, &o, r))?;
    }
    let c = sub_config(cfg, "cpn_o2h", 2, Command::Crit, Some(0.05))?;
    let s = c.scene()?;
    run.family("morse_bott", |r| checks::morse_bott(&c, &s, &out.sub("morse_bott"), r))?;
    let c = sub_config(cfg, "local_nc", 2, Command::Crit, Some(0.05))?;
    let s = c.scene()?;
    run.family("local_spectrum", |r| checks::local_spectrum(&c, &s, &checks::LOCAL_SPECTRUM_EPS, r))?;
    for (name, n) in [("cpn_x_cpn", 2), ("local_nc", 2), ("cpn_o2h", 2)] {
        let c = sub_config(cfg, name, n, Command::Crit, Some(0.05))?;
        let s = c.scene()?;
        let tag = checks::scene_tag(&s);
        run.family(&format!("crit.{tag}"), |r| checks::crit(&c, &s, &out.sub(&format!("crit_{tag}")), r).map(|_| ()))?;
    }
    for (name, n) in [("cpn_o2h", 2), ("cpn_o2h", 3), ("cpn_x_cpn", 2)] {
        let c = sub_config(cfg, name, n, Command::Ladder, None)?;
        let s = c.scene()?;
        let tag = checks::scene_tag(&s);
        run.family(&format!("ladder.{tag}"), |r| checks::ladder(&c, &s, &out.sub(&format!("ladder_{tag}")), r))?;
    }
    for (name, n) in [("local_nc", 3), ("cpn_o2h", 2), ("cpn_o2h", 3), ("cpn_x_cpn", 2)] {
        let c = sub_config(cfg, name, n, Command::Thimble, Some(0.04))?;
        let s = c.scene()?;
        let tag = checks::scene_tag(&s);
        run.family(&format!("alignment.{tag}"), |r| checks::alignment(&c, &s, 0.04, &out.sub("alignment"), r))?;
    }
    let c = sub_config(cfg, "local_nc", 2, Command::Thimble, Some(0.04))?;
    let s = c.scene()?;
    run.family("thimble", |r| checks::thimble(&c, &s, &out.sub("thimble"), r).map(|_| ()))?;
    let c = sub_config(cfg, "local_nc", 2, Command::Glue, Some(0.02))?;
    let s = c.scene()?;
    run.family("glue", |r| checks::glue(&c, &s, &out.sub("glue"), r))?;
    run.family("plane", |r| checks::unstable_plane(&c, &s, &out.sub("plane"), r))?;
    Ok(())
}

/// Runs a resolved config. Config errors are returned; numerical failures
/// and runtime errors end up in the outcome.
pub fn run(cfg: &RunConfig, out: &Output) -> Result<Outcome> {
    let command = cfg
        .command
        .ok_or_else(|| LabError::Config("`command` is not set".into()))?;
    let mut runner = Runner {
        rows: vec![],
        errors: vec![],
    };
    match command {
        Command::Checkall => checkall(cfg, out, &mut runner)?,
        cmd => {
            let scene = cfg.scene()?;
            if cmd == Command::Glue && !(scene.name == "local_nc" && scene.n == 2) {
                return Err(LabError::NotLocalModel(format!(
                    "glue needs scene local_nc with n = 2, got {} with n = {}",
                    scene.name, scene.n
                )));
            }
            runner.family(cmd.name(), |r| match cmd {
                Command::Crit => checks::crit(cfg, &scene, out, r).map(|_| ()),
                Command::Ladder => checks::ladder(cfg, &scene, out, r),
                Command::Thimble => checks::thimble(cfg, &scene, out, r).map(|_| ()),
                Command::Glue => checks::glue(cfg, &scene, out, r),
                Command::Checkall => unreachable!(),
            })?;
        }
    }
    Ok(Outcome {
        rows: runner.rows,
        errors: runner.errors,
    })
}

/// Loads, resolves and runs a config file and writes the reports; returns
/// the process exit code.
pub fn execute(command: Command, config: &Path, seed: Option<u64>, out: Option<&Path>) -> i32 {
    let cfg = match RunConfig::load(config).and_then(|c| c.resolve(command, seed)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return 2;
        }
    };
    let dir: PathBuf = output_dir(out, &cfg);
    let output = Output {
        dir: dir.clone(),
        json: cfg.formats_has(Format::Json),
        csv: cfg.formats_has(Format::Csv),
    };
    if let Err(e) = output.force_json("resolved_config.json", &cfg) {
        eprintln!("error: {e}");
        return 1;
    }
    let outcome = match run(&cfg, &output) {
        Ok(o) => o,
        Err(e) if is_config_error(&e) => {
            eprintln!("{e}");
            return 2;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let failing = outcome.failing();
    let summary = Summary {
        schema_version: config::SCHEMA_VERSION,
        command: command.name(),
        seed: cfg.seed,
        pass: outcome.passed(),
        failing: failing.clone(),
        errors: &outcome.errors,
        checks: &outcome.rows,
    };
    if let Err(e) = output.force_json("summary.json", &summary) {
        eprintln!("error: {e}");
        return 1;
    }
    let passed = outcome.rows.iter().filter(|r| r.pass).count();
    println!(
        "{}: {passed}/{} checks passed, reports in {}",
        command.name(),
        outcome.rows.len(),
        dir.display()
    );
    for e in &outcome.errors {
        eprintln!("error: {e}");
    }
    for name in &failing {
        eprintln!("FAIL {name}");
    }
    if outcome.passed() {
        0
    } else {
        1
    }
}
