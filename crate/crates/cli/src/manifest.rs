//! Flat `key=value` run manifest written next to every artifact set.
//!
//! Every resolved flag except `--out` is stored as `arg.<name>=<values>`, so
//! replaying a manifest rebuilds the exact command line.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::{ArgMatches, Command};

pub const FILE_NAME: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub subcommand: String,
    /// Flag name (with hyphens) and its values in command-line order.
    pub args: Vec<(String, Vec<String>)>,
    pub artifacts: Vec<String>,
}

impl Manifest {
    /// `command` is the subcommand definition; it separates real flags from
    /// argument groups, which also show up among the matched ids.
    pub fn from_matches(command: &Command, matches: &ArgMatches) -> Self {
        let is_flag = |id: &str| command.get_arguments().any(|a| a.get_id().as_str() == id);
        let mut args: Vec<(String, Vec<String>)> = matches
            .ids()
            .filter(|id| id.as_str() != "out" && is_flag(id.as_str()))
            .filter_map(|id| {
                let raw = matches.try_get_raw(id.as_str()).ok()??;
                let values = raw.map(|v| v.to_string_lossy().into_owned()).collect();
                Some((id.as_str().replace('_', "-"), values))
            })
            .collect();
        args.sort();
        Self { subcommand: command.get_name().to_string(), args, artifacts: Vec::new() }
    }

    pub fn seed(&self) -> Option<&str> {
        self.args.iter().find(|(k, _)| k == "seed").and_then(|(_, v)| v.first()).map(String::as_str)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str("tool=autopeer\n");
        s.push_str(&format!("version={}\n", env!("CARGO_PKG_VERSION")));
        s.push_str(&format!("subcommand={}\n", self.subcommand));
        if let Some(seed) = self.seed() {
            s.push_str(&format!("seed={seed}\n"));
        }
        for (k, v) in &self.args {
            s.push_str(&format!("arg.{k}={}\n", v.join(",")));
        }
        for a in &self.artifacts {
            s.push_str(&format!("artifact={a}\n"));
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(FILE_NAME);
        fs::write(&path, self.render()).with_context(|| format!("writing {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut subcommand = None;
        let mut args = Vec::new();
        let mut artifacts = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("manifest line {}: expected key=value", n + 1);
            };
            match key {
                "subcommand" => subcommand = Some(value.to_string()),
                "artifact" => artifacts.push(value.to_string()),
                _ => {
                    if let Some(name) = key.strip_prefix("arg.") {
                        let values = if value.is_empty() { Vec::new() } else { value.split(',').map(str::to_string).collect() };
                        args.push((name.to_string(), values));
                    }
                }
            }
        }
        let subcommand = subcommand.context("manifest has no subcommand line")?;
        Ok(Self { subcommand, args, artifacts })
    }

    /// Command line reproducing this run with outputs under `out`.
    pub fn argv(&self, out: &Path) -> Vec<String> {
        let mut argv = vec!["autopeer".to_string(), self.subcommand.clone()];
        for (k, v) in &self.args {
            argv.push(format!("--{k}"));
            if !v.is_empty() {
                argv.push(v.join(","));
            }
        }
        argv.push("--out".into());
        argv.push(out.display().to_string());
        argv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_parse_round_trip() {
        let m = Manifest {
            subcommand: "eclipse".into(),
            args: vec![("k".into(), vec!["4".into()]), ("n-attackers".into(), vec!["5".into(), "20".into()]), ("x".into(), vec![])],
            artifacts: vec!["eclipse.csv".into()],
        };
        let parsed = Manifest::parse(&m.render()).unwrap();
        assert_eq!(parsed, m);
        assert_eq!(
            m.argv(Path::new("o")),
            ["autopeer", "eclipse", "--k", "4", "--n-attackers", "5,20", "--x", "--out", "o"]
        );
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(Manifest::parse("nonsense").is_err());
        assert!(Manifest::parse("arg.k=4\n").is_err());
    }
}
