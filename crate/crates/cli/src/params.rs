//! `--params FILE`: a JSON object whose keys are long flag names. A run
//! manifest works too; its `params` object is used.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde_json::Value;

/// Expand `--params FILE` into flags. Flags already on the command line win.
pub fn expand(args: Vec<String>) -> Result<Vec<String>> {
    let mut file = None;
    let mut rest = Vec::with_capacity(args.len());
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        if a == "--params" {
            match it.next() {
                Some(p) => file = Some(p),
                None => bail!("--params needs a file"),
            }
        } else if let Some(p) = a.strip_prefix("--params=") {
            file = Some(p.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(file) = file else {
        return Ok(rest);
    };
    let extra = flags_from_file(Path::new(&file))?;
    for (key, value) in extra {
        let flag = format!("--{key}");
        let present = rest.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}=")));
        if present {
            continue;
        }
        match value {
            None => rest.push(flag),
            Some(v) => rest.push(format!("{flag}={v}")),
        }
    }
    Ok(rest)
}

fn flags_from_file(path: &Path) -> Result<Vec<(String, Option<String>)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let root: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let obj = match root.get("params") {
        Some(Value::Object(o)) => o.clone(),
        _ => match root {
            Value::Object(o) => o,
            _ => bail!("{}: expected a JSON object", path.display()),
        },
    };
    let mut out = Vec::new();
    for (k, v) in obj {
        match v {
            Value::Null | Value::Bool(false) => {}
            Value::Bool(true) => out.push((k, None)),
            Value::Array(items) => {
                let parts: Vec<String> = items.iter().map(scalar).collect::<Result<_>>()?;
                if !parts.is_empty() {
                    out.push((k, Some(parts.join(","))));
                }
            }
            other => out.push((k, Some(scalar(&other)?))),
        }
    }
    Ok(out)
}

fn scalar(v: &Value) -> Result<String> {
    Ok(match v {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        Value::Bool(b) => b.to_string(),
        other => bail!("unsupported parameter value {other}"),
    })
}
