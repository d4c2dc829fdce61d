//! Flat `key = value` configuration files.
//!
//! Every command-line flag has a key of the same name with dashes replaced
//! by underscores. `rho` takes a space- or comma-separated list. Lines
//! starting with `#` are comments.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Settings that may come from flags or a config file. `None` means unset.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub nb: Option<usize>,
    pub nt: Option<usize>,
    pub users_per_bs: Option<usize>,
    pub gamma: Option<f64>,
    pub sigma2: Option<f64>,
    pub rho: Option<Vec<f64>>,
    pub zeta: Option<f64>,
    pub steps: Option<usize>,
    pub tracks: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub random: Option<u64>,
    pub instance: Option<PathBuf>,
    pub inject_fault: Option<String>,
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("bad value {v:?} for {key}"))
}

impl Overrides {
    pub fn parse(text: &str, origin: &str) -> Result<Self, String> {
        let mut o = Self::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let at = |msg: String| format!("{origin}:{}: {msg}", no + 1);
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| at(format!("expected key = value, found {line:?}")))?;
            let (key, v) = (key.trim().replace('-', "_"), value.trim());
            let k = key.as_str();
            match k {
                "nb" => o.nb = Some(num(k, v).map_err(at)?),
                "nt" => o.nt = Some(num(k, v).map_err(at)?),
                "users_per_bs" => o.users_per_bs = Some(num(k, v).map_err(at)?),
                "gamma" => o.gamma = Some(num(k, v).map_err(at)?),
                "sigma2" => o.sigma2 = Some(num(k, v).map_err(at)?),
                "rho" => {
                    let list = v
                        .split(|c: char| c == ',' || c.is_whitespace())
                        .filter(|s| !s.is_empty())
                        .map(|s| num(k, s))
                        .collect::<Result<Vec<f64>, _>>()
                        .map_err(at)?;
                    o.rho = Some(list);
                }
                "zeta" => o.zeta = Some(num(k, v).map_err(at)?),
                "steps" => o.steps = Some(num(k, v).map_err(at)?),
                "tracks" => o.tracks = Some(num(k, v).map_err(at)?),
                "seed" => o.seed = Some(num(k, v).map_err(at)?),
                "out" => o.out = Some(PathBuf::from(v)),
                "jobs" => o.jobs = Some(num(k, v).map_err(at)?),
                "random" => o.random = Some(num(k, v).map_err(at)?),
                "instance" => o.instance = Some(PathBuf::from(v)),
                "inject_fault" => o.inject_fault = Some(v.to_string()),
                _ => return Err(at(format!("unknown key {k:?}"))),
            }
        }
        Ok(o)
    }

    pub fn read(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Fields set in `self` win over those in `base`.
    pub fn over(self, base: Self) -> Self {
        Self {
            nb: self.nb.or(base.nb),
            nt: self.nt.or(base.nt),
            users_per_bs: self.users_per_bs.or(base.users_per_bs),
            gamma: self.gamma.or(base.gamma),
            sigma2: self.sigma2.or(base.sigma2),
            rho: self.rho.or(base.rho),
            zeta: self.zeta.or(base.zeta),
            steps: self.steps.or(base.steps),
            tracks: self.tracks.or(base.tracks),
            seed: self.seed.or(base.seed),
            out: self.out.or(base.out),
            jobs: self.jobs.or(base.jobs),
            random: self.random.or(base.random),
            instance: self.instance.or(base.instance),
            inject_fault: self.inject_fault.or(base.inject_fault),
        }
    }

    /// Set fields in config-file syntax, in a fixed order.
    pub fn format(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                writeln!(s, "{k} = {v}").unwrap();
            }
        };
        put("nb", self.nb.map(|v| v.to_string()));
        put("nt", self.nt.map(|v| v.to_string()));
        put("users_per_bs", self.users_per_bs.map(|v| v.to_string()));
        put("gamma", self.gamma.map(|v| format!("{v:?}")));
        put("sigma2", self.sigma2.map(|v| format!("{v:?}")));
        put(
            "rho",
            self.rho
                .as_ref()
                .map(|r| r.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ")),
        );
        put("zeta", self.zeta.map(|v| format!("{v:?}")));
        put("steps", self.steps.map(|v| v.to_string()));
        put("tracks", self.tracks.map(|v| v.to_string()));
        put("seed", self.seed.map(|v| v.to_string()));
        put("out", self.out.as_ref().map(|p| p.display().to_string()));
        put("jobs", self.jobs.map(|v| v.to_string()));
        put("random", self.random.map(|v| v.to_string()));
        put("instance", self.instance.as_ref().map(|p| p.display().to_string()));
        put("inject_fault", self.inject_fault.clone());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn format_parses_back() {
        let o = Overrides {
            nb: Some(3),
            gamma: Some(0.1),
            rho: Some(vec![1.0, 50.0, 0.25]),
            out: Some(PathBuf::from("runs/a")),
            inject_fault: Some("none".into()),
            ..Overrides::default()
        };
        assert_eq!(Overrides::parse(&o.format(), "mem").unwrap(), o);
    }

    #[test]
    fn flags_win() {
        let file = Overrides::parse("steps = 3\nzeta = 0.5\nusers-per-bs = 1", "mem").unwrap();
        let flags = Overrides {
            steps: Some(4),
            ..Overrides::default()
        };
        let m = flags.over(file);
        assert_eq!(m.steps, Some(4));
        assert_eq!(m.zeta, Some(0.5));
        assert_eq!(m.users_per_bs, Some(1));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(Overrides::parse("colour = red", "mem").unwrap_err().contains("mem:1"));
        assert!(Overrides::parse("# c\n\nsteps = many", "mem").unwrap_err().contains("mem:3"));
        assert_eq!(Overrides::parse("rho = 1, 50 1000", "mem").unwrap().rho, Some(vec![1.0, 50.0, 1000.0]));
    }
}
