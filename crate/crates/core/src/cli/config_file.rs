//! `key = value` defaults for subcommand flags.
//!
//! Keys are the long flag names. A key is only applied when the flag was not
//! given on the command line. Multi-valued flags take whitespace-separated
//! values; switches take `true` or `false`.

use std::ffi::OsString;
use std::path::Path;

use clap::parser::ValueSource;
use clap::{ArgAction, ArgMatches, Command};

use super::CliError;

pub(crate) fn parse(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key=value", i + 1)))?;
        out.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}

/// Appends config-file values for flags the user did not pass.
pub(crate) fn merge(
    root: &Command,
    matches: &ArgMatches,
    mut argv: Vec<OsString>,
    path: &Path,
) -> Result<Vec<OsString>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Dysem(crate::error::DysemError::io(path, e)))?;
    let entries = parse(&text)?;

    // descend to the innermost subcommand that was invoked
    let mut cmd = root;
    let mut m = matches;
    while let Some((name, sub)) = m.subcommand() {
        cmd = cmd
            .find_subcommand(name)
            .ok_or_else(|| CliError::Usage(format!("unknown subcommand {name}")))?;
        m = sub;
    }

    for (key, value) in entries {
        if key == "config" {
            return Err(CliError::Usage("config files cannot nest".into()));
        }
        let arg = cmd
            .get_arguments()
            .chain(root.get_arguments())
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| CliError::Usage(format!("unknown config key `{key}`")))?;
        let id = arg.get_id().as_str();
        // globals are propagated into the innermost matches
        let given = match m.try_contains_id(id) {
            Ok(true) => m.value_source(id),
            _ => None,
        };
        if given == Some(ValueSource::CommandLine) {
            continue;
        }
        let flag = OsString::from(format!("--{key}"));
        match arg.get_action() {
            ArgAction::SetTrue => match value.as_str() {
                "true" => argv.push(flag),
                "false" => {}
                other => {
                    return Err(CliError::Usage(format!("config key `{key}` expects true|false, got `{other}`")))
                }
            },
            _ => {
                let multi = arg.get_num_args().is_some_and(|n| n.max_values() > 1);
                argv.push(flag);
                if multi {
                    argv.extend(value.split_whitespace().map(OsString::from));
                } else {
                    argv.push(OsString::from(value));
                }
            }
        }
    }
    Ok(argv)
}
