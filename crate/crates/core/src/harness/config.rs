//! Flat `key = value` configuration files. Every key is a command-line flag
//! without its leading dashes; flags given on the command line win.

use crate::error::{Error, Result};

pub fn parse_config(text: &str) -> Result<Vec<String>> {
    let mut args = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = match line.split_once('=') {
            Some((k, v)) => (k.trim(), v.trim()),
            None => (line, "true"),
        };
        if key.is_empty() || key.starts_with('-') || key.contains(char::is_whitespace) {
            return Err(Error::InvalidParameter(format!(
                "config line {}: bad key '{key}'",
                lineno + 1
            )));
        }
        match value {
            "true" => args.push(format!("--{key}")),
            "false" => {}
            v => {
                args.push(format!("--{key}"));
                args.push(v.to_string());
            }
        }
    }
    Ok(args)
}

/// Splice the contents of any `--config PATH` into `argv` directly after the
/// subcommand, so that explicit flags later in `argv` override them.
pub fn expand_config_args(argv: Vec<String>) -> Result<Vec<String>> {
    let pos = argv
        .iter()
        .position(|a| a == "--config" || a.starts_with("--config="));
    let Some(pos) = pos else {
        return Ok(argv);
    };
    let (path, consumed) = match argv[pos].strip_prefix("--config=") {
        Some(p) => (p.to_string(), 1),
        None => match argv.get(pos + 1) {
            Some(p) => (p.clone(), 2),
            None => {
                return Err(Error::InvalidParameter("--config needs a path".into()));
            }
        },
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::InvalidParameter(format!("cannot read config '{path}': {e}")))?;
    let extra = parse_config(&text)?;
    let mut rest: Vec<String> = argv;
    rest.drain(pos..pos + consumed);
    // argv[0] is the program, argv[1] the subcommand
    let at = rest.len().min(2);
    rest.splice(at..at, extra);
    Ok(rest)
}
