//! `key = value` config files.
//!
//! Keys are long flag names without dashes. A key already given on the
//! command line wins. `true` turns a switch on, `false` leaves it off, and
//! `command = <name>` supplies the subcommand when argv has none.

use std::path::Path;

use anyhow::{bail, Context};

const SUBCOMMANDS: [&str; 5] = ["blocks", "odometer", "rotation", "evc", "maharam"];

/// Parses the config text into ordered `(key, value)` pairs.
pub fn parse_config(text: &str) -> anyhow::Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("config line {}: expected key = value", no + 1);
        };
        let key = key.trim().trim_start_matches("--");
        if key.is_empty() || key.contains(char::is_whitespace) {
            bail!("config line {}: bad key {key:?}", no + 1);
        }
        out.push((key.to_string(), value.trim().to_string()));
    }
    Ok(out)
}

fn config_path(args: &[String]) -> anyhow::Result<Option<String>> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return match it.next() {
                Some(p) => Ok(Some(p.clone())),
                None => bail!("--config needs a path"),
            };
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Ok(Some(p.to_string()));
        }
    }
    Ok(None)
}

fn has_flag(args: &[String], key: &str) -> bool {
    let flag = format!("--{key}");
    let with_eq = format!("--{key}=");
    args.iter().any(|a| *a == flag || a.starts_with(&with_eq))
}

/// Appends config entries missing from `args`.
pub fn merge_config(args: &[String]) -> anyhow::Result<Vec<String>> {
    let Some(path) = config_path(args)? else {
        return Ok(args.to_vec());
    };
    let text = std::fs::read_to_string(Path::new(&path)).with_context(|| format!("reading config {path}"))?;
    merge_entries(args, &parse_config(&text)?)
}

pub fn merge_entries(args: &[String], entries: &[(String, String)]) -> anyhow::Result<Vec<String>> {
    let mut out = args.to_vec();
    let has_command = args.iter().skip(1).any(|a| SUBCOMMANDS.contains(&a.as_str()));
    if !has_command {
        match entries.iter().find(|(k, _)| k == "command") {
            Some((_, name)) if SUBCOMMANDS.contains(&name.as_str()) => out.push(name.clone()),
            Some((_, name)) => bail!("config: unknown command {name:?}"),
            None => {}
        }
    }
    for (key, value) in entries {
        if key == "command" || key == "config" || has_flag(args, key) {
            continue;
        }
        match value.as_str() {
            "true" => out.push(format!("--{key}")),
            "false" => {}
            _ => out.push(format!("--{key}={value}")),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn argv_wins_and_command_is_supplied() {
        let entries = parse_config("command = blocks\n# comment\ngamma = 1,2\nverify = true\nseed = 9\njson = false\n").unwrap();
        let merged = merge_entries(&argv("cocycles --seed 3"), &entries).unwrap();
        assert_eq!(merged, argv("cocycles --seed 3 blocks --gamma=1,2 --verify"));
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(parse_config("gamma 1,2").is_err());
        assert!(merge_entries(&argv("x"), &[("command".into(), "nope".into())]).is_err());
    }
}
