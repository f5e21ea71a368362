//! Experiment configuration flags shared by every verb: `--config FILE`
//! followed by one `--<key>` flag per configuration key.

use std::path::PathBuf;

use clap::{Arg, ArgAction, ArgMatches, Args, Command, FromArgMatches};
use jotrecon::experiment::ExperimentConfig;
use jotrecon::io::Manifest;

#[derive(Clone, Debug, Default)]
pub struct ConfigArgs {
    pub file: Option<PathBuf>,
    /// Explicit overrides in command-line order.
    pub overrides: Vec<(String, String)>,
}

fn flag(key: &str) -> String {
    key.replace('_', "-")
}

impl ConfigArgs {
    /// Defaults, then the config file, then the flags.
    pub fn resolve(&self, base: Option<&ExperimentConfig>) -> jotrecon::Result<ExperimentConfig> {
        let mut cfg = base.cloned().unwrap_or_default();
        if let Some(path) = &self.file {
            cfg.apply(&Manifest::read(path)?)?;
        }
        let mut overrides = Manifest::new();
        for (k, v) in &self.overrides {
            overrides.set(k, v);
        }
        cfg.apply(&overrides)?;
        Ok(cfg)
    }

    pub fn is_set(&self, key: &str) -> bool {
        self.overrides.iter().any(|(k, _)| k == key)
    }
}

impl FromArgMatches for ConfigArgs {
    fn from_arg_matches(matches: &ArgMatches) -> Result<Self, clap::Error> {
        let mut out = ConfigArgs {
            file: matches.get_one::<PathBuf>("config").cloned(),
            overrides: Vec::new(),
        };
        for &key in ExperimentConfig::KEYS {
            if let Some(v) = matches.get_one::<String>(key) {
                out.overrides.push((key.to_string(), v.clone()));
            }
        }
        Ok(out)
    }

    fn update_from_arg_matches(&mut self, matches: &ArgMatches) -> Result<(), clap::Error> {
        *self = Self::from_arg_matches(matches)?;
        Ok(())
    }
}

impl Args for ConfigArgs {
    fn augment_args(cmd: Command) -> Command {
        let mut cmd = cmd.arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .value_parser(clap::value_parser!(PathBuf))
                .help("Flat key=value configuration file; flags below override it"),
        );
        for &key in ExperimentConfig::KEYS {
            cmd = cmd.arg(
                Arg::new(key)
                    .long(flag(key))
                    .value_name("VALUE")
                    .action(ArgAction::Set)
                    .help_heading("Experiment configuration")
                    .help(format!("Config key '{key}'")),
            );
        }
        cmd
    }

    fn augment_args_for_update(cmd: Command) -> Command {
        Self::augment_args(cmd)
    }
}
