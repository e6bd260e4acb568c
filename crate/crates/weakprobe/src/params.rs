//! Per-command parameter schemas, `key = value` scenario files and flag
//! overrides.
//!
//! A scenario file holds one `key = value` pair per line; `#` starts a
//! comment. Flags use the same keys (`--theta 0.05` or `--theta=0.05`) and
//! take precedence over the file. Keys are matched with `_` and `-`
//! treated alike; anything outside the command's schema is rejected.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CliError, Result};

/// One accepted key with its default (empty means required).
#[derive(Clone, Copy, Debug)]
pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

pub const fn key(name: &'static str, default: &'static str, help: &'static str) -> Key {
    Key { name, default, help }
}

/// Keys understood by every command.
pub const GLOBAL_KEYS: [&str; 2] = ["seed", "out-dir"];

fn canonical(k: &str) -> String {
    k.trim().replace('_', "-")
}

/// Parses a scenario file into raw key/value pairs.
pub fn read_scenario(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("cannot read scenario {}: {e}", path.display())))?;
    parse_scenario(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

pub fn parse_scenario(text: &str) -> std::result::Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| format!("line {}: expected key = value", no + 1))?;
        let k = canonical(k);
        if k.is_empty() {
            return Err(format!("line {}: empty key", no + 1));
        }
        if out.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(format!("line {}: duplicate key {k}", no + 1));
        }
    }
    Ok(out)
}

/// Splits `--key value` / `--key=value` arguments into pairs.
pub fn parse_flags(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let body = arg
            .strip_prefix("--")
            .ok_or_else(|| CliError::validation(format!("unexpected argument {arg:?}; parameters are --key value")))?;
        let (k, v) = match body.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it.next().ok_or_else(|| CliError::validation(format!("--{body} needs a value")))?;
                (body.to_string(), v.clone())
            }
        };
        out.push((canonical(&k), v));
    }
    Ok(out)
}

/// Fully resolved parameters of one command, in schema order.
#[derive(Clone, Debug)]
pub struct Params {
    command: &'static str,
    values: Vec<(&'static str, String)>,
}

impl Params {
    /// Flags win over the scenario file, which wins over defaults.
    pub fn resolve(
        command: &'static str,
        schema: &[Key],
        scenario: &BTreeMap<String, String>,
        flags: &[(String, String)],
    ) -> Result<Self> {
        let known = |k: &str| schema.iter().any(|s| s.name == k) || GLOBAL_KEYS.contains(&k);
        for k in scenario.keys() {
            if !known(k) {
                return Err(CliError::validation(format!("unknown key {k:?} for {command}")));
            }
        }
        let mut seen = Vec::new();
        for (k, _) in flags {
            if !known(k) {
                return Err(CliError::validation(format!("unknown parameter --{k} for {command}")));
            }
            if seen.contains(k) {
                return Err(CliError::validation(format!("--{k} given twice")));
            }
            seen.push(k.clone());
        }
        let mut values = Vec::with_capacity(schema.len());
        for s in schema {
            let v = flags
                .iter()
                .find(|(k, _)| k == s.name)
                .map(|(_, v)| v.clone())
                .or_else(|| scenario.get(s.name).cloned())
                .unwrap_or_else(|| s.default.to_string());
            if v.is_empty() {
                return Err(CliError::validation(format!("missing required parameter --{}", s.name)));
            }
            values.push((s.name, v));
        }
        Ok(Self { command, values })
    }

    pub fn command(&self) -> &'static str {
        self.command
    }

    pub fn str(&self, k: &str) -> &str {
        self.values
            .iter()
            .find(|(name, _)| *name == k)
            .map(|(_, v)| v.as_str())
            .unwrap_or_else(|| panic!("{k} is not in the {} schema", self.command))
    }

    fn bad(&self, k: &str, what: &str) -> CliError {
        CliError::validation(format!("--{k} {:?}: {what}", self.str(k)))
    }

    pub fn f64(&self, k: &str) -> Result<f64> {
        match self.str(k).parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.bad(k, "expected a finite number")),
        }
    }

    pub fn positive(&self, k: &str) -> Result<f64> {
        let v = self.f64(k)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(self.bad(k, "must be positive"))
        }
    }

    pub fn non_negative(&self, k: &str) -> Result<f64> {
        let v = self.f64(k)?;
        if v >= 0.0 {
            Ok(v)
        } else {
            Err(self.bad(k, "must be non-negative"))
        }
    }

    pub fn usize(&self, k: &str) -> Result<usize> {
        self.str(k).parse::<usize>().map_err(|_| self.bad(k, "expected a non-negative integer"))
    }

    pub fn bool(&self, k: &str) -> Result<bool> {
        match self.str(k) {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            _ => Err(self.bad(k, "expected true or false")),
        }
    }

    /// Radians; accepts `pi`, `pi/4`, `3pi/4`, `-pi/2` and plain numbers.
    pub fn angle(&self, k: &str) -> Result<f64> {
        parse_angle(self.str(k)).ok_or_else(|| self.bad(k, "expected an angle in radians such as 0.3 or 3pi/4"))
    }

    /// Comma-separated list of angles in radians.
    pub fn angles(&self, k: &str) -> Result<Vec<f64>> {
        self.str(k)
            .split(',')
            .map(|s| parse_angle(s).ok_or_else(|| self.bad(k, "expected comma-separated angles")))
            .collect()
    }

    /// `start:stop:step`, inclusive of `stop`.
    pub fn range(&self, k: &str) -> Result<Vec<f64>> {
        let parts: Vec<&str> = self.str(k).split(':').collect();
        let nums: Option<Vec<f64>> = parts.iter().map(|p| p.trim().parse::<f64>().ok()).collect();
        match nums.as_deref() {
            Some(&[start, stop, step]) => weakprobe_core::experiment::angle_range(start, stop, step)
                .map_err(|_| self.bad(k, "need start ≤ stop and step > 0")),
            _ => Err(self.bad(k, "expected start:stop:step")),
        }
    }

    /// `key=value` pairs for the CSV comment line.
    pub fn describe(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.values {
            let _ = write!(s, " {k}={v}");
        }
        s
    }
}

pub fn parse_angle(s: &str) -> Option<f64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<f64>() {
        return v.is_finite().then_some(v);
    }
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim().parse::<f64>().ok().filter(|d| *d != 0.0)?),
        None => (s, 1.0),
    };
    let coeff = num.strip_suffix("pi")?.trim();
    let coeff = match coeff {
        "" | "+" => 1.0,
        "-" => -1.0,
        c => c.trim_end_matches('*').parse::<f64>().ok()?,
    };
    Some(coeff * PI / den)
}

/// Help text listing a command's keys.
pub fn usage(command: &str, about: &str, schema: &[Key]) -> String {
    let mut s = format!("weakprobe {command}: {about}\n\nparameters (flag or scenario key):\n");
    for k in schema {
        let default = if k.default.is_empty() { "required".to_string() } else { format!("default {}", k.default) };
        let _ = writeln!(s, "  --{:<14} {} [{default}]", k.name, k.help);
    }
    s.push_str("\nglobal: --config FILE, --out-dir DIR, --seed N, --dry-run\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCHEMA: [Key; 3] = [key("theta", "0.05", ""), key("case", "i", ""), key("data", "", "")];

    #[test]
    fn angles_parse() {
        assert_eq!(parse_angle("0.5"), Some(0.5));
        assert_eq!(parse_angle("pi"), Some(PI));
        assert_eq!(parse_angle("pi/4"), Some(PI / 4.0));
        assert_eq!(parse_angle("3pi/4"), Some(3.0 * PI / 4.0));
        assert_eq!(parse_angle("-pi/2"), Some(-PI / 2.0));
        assert_eq!(parse_angle("pie"), None);
        assert_eq!(parse_angle("pi/0"), None);
    }

    #[test]
    fn flags_beat_scenario_beats_default() {
        let scenario = parse_scenario("# comment\ntheta = 0.1\ncase=ii # trailing\ndata = x.csv\n").unwrap();
        let flags = parse_flags(&["--theta".into(), "0.2".into()]).unwrap();
        let p = Params::resolve("fit", &SCHEMA, &scenario, &flags).unwrap();
        assert_eq!(p.str("theta"), "0.2");
        assert_eq!(p.str("case"), "ii");
        assert_eq!(p.describe(), " theta=0.2 case=ii data=x.csv");
    }

    #[test]
    fn unknown_and_missing_keys_rejected() {
        let scenario = parse_scenario("bogus = 1").unwrap();
        assert!(Params::resolve("fit", &SCHEMA, &scenario, &[]).is_err());
        let flags = parse_flags(&["--nope=1".into()]).unwrap();
        assert!(Params::resolve("fit", &SCHEMA, &BTreeMap::new(), &flags).is_err());
        assert!(Params::resolve("fit", &SCHEMA, &BTreeMap::new(), &[]).is_err());
        assert!(parse_scenario("novalue").is_err());
        assert!(parse_flags(&["--theta".into()]).is_err());
    }

    #[test]
    fn ranges() {
        let flags = parse_flags(&["--data=a".into(), "--theta=5:6:0.5".into()]).unwrap();
        let p = Params::resolve("fit", &SCHEMA, &BTreeMap::new(), &flags).unwrap();
        assert_eq!(p.range("theta").unwrap(), vec![5.0, 5.5, 6.0]);
        assert!(p.f64("theta").is_err());
    }
}
