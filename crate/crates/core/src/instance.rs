//! Plain-text instance files.
//!
//! ```text
//! # comment
//! base_stations = 2
//! users = 4
//! antennas = 4
//! assignment = 1 1 2 2          serving base station of each user, 1-based
//! gamma = 10 10 10 10
//! sigma2 = 10 10 10 10
//! channels = 1                  number of channel sections that follow
//!
//! [channel 1]
//! h 1 1 = re im re im ...       h_mk for base station m, user k (1-based),
//! h 1 2 = ...                   one (re, im) pair per antenna
//! ```
//!
//! A scenario file carries one channel section; a track file carries one per
//! step. Numbers are written in shortest round-trip form, so reading a file
//! back reproduces every value exactly.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{ChannelSet, QosSpec, Scenario, Topology};

/// Scenario plus one or more channel sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub scenario: Scenario,
    pub channels: Vec<ChannelSet>,
}

fn join(values: impl Iterator<Item = String>) -> String {
    values.collect::<Vec<_>>().join(" ")
}

pub fn format_instance(inst: &Instance) -> String {
    let topo = &inst.scenario.topology;
    let qos = &inst.scenario.qos;
    let mut s = String::new();
    writeln!(s, "base_stations = {}", topo.base_stations()).unwrap();
    writeln!(s, "users = {}", topo.users()).unwrap();
    writeln!(s, "antennas = {}", topo.antennas()).unwrap();
    writeln!(s, "assignment = {}", join(topo.assignment().iter().map(|b| (b + 1).to_string()))).unwrap();
    writeln!(s, "gamma = {}", join(qos.gamma.iter().map(|v| format!("{v:?}")))).unwrap();
    writeln!(s, "sigma2 = {}", join(qos.sigma2.iter().map(|v| format!("{v:?}")))).unwrap();
    writeln!(s, "channels = {}", inst.channels.len()).unwrap();
    for (i, h) in inst.channels.iter().enumerate() {
        writeln!(s, "\n[channel {}]", i + 1).unwrap();
        for m in 0..topo.base_stations() {
            for k in 0..topo.users() {
                let vals = join(h.get(m, k).iter().map(|z| format!("{:?} {:?}", z.re, z.im)));
                writeln!(s, "h {} {} = {vals}", m + 1, k + 1).unwrap();
            }
        }
    }
    s
}

pub fn write_instance(path: &Path, inst: &Instance) -> Result<()> {
    std::fs::write(path, format_instance(inst))?;
    Ok(())
}

pub fn read_instance(path: &Path) -> Result<Instance> {
    let text = std::fs::read_to_string(path)?;
    parse_instance(&text, &path.display().to_string())
}

/// Parses instance text; `origin` names the source in error messages.
pub fn parse_instance(text: &str, origin: &str) -> Result<Instance> {
    let err = |line: usize, msg: String| Error::Parse {
        path: origin.to_string(),
        line,
        msg,
    };
    let mut header: Vec<(String, String, usize)> = Vec::new();
    let mut sections: Vec<Vec<(usize, usize, Vec<f64>, usize)>> = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let lineno = no + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(inner) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let n: usize = inner
                .strip_prefix("channel")
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| err(lineno, format!("bad section header {line:?}")))?;
            if n != sections.len() + 1 {
                return Err(err(lineno, format!("expected channel {}, found {n}", sections.len() + 1)));
            }
            sections.push(Vec::new());
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(lineno, format!("expected key = value, found {line:?}")))?;
        let key = key.trim();
        if let Some(idx) = key.strip_prefix("h ") {
            let section = sections
                .last_mut()
                .ok_or_else(|| err(lineno, "channel entry outside a [channel] section".into()))?;
            let ids: Vec<usize> = idx
                .split_whitespace()
                .map(|v| v.parse().map_err(|_| err(lineno, format!("bad index {v:?}"))))
                .collect::<Result<_>>()?;
            let [m, k] = ids[..] else {
                return Err(err(lineno, "expected two indices after h".into()));
            };
            if m == 0 || k == 0 {
                return Err(err(lineno, "indices are 1-based".into()));
            }
            let vals = value
                .split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|_| err(lineno, format!("bad number {v:?}"))))
                .collect::<Result<Vec<_>>>()?;
            section.push((m - 1, k - 1, vals, lineno));
        } else {
            if !sections.is_empty() {
                return Err(err(lineno, format!("header key {key:?} after channel data")));
            }
            if header.iter().any(|(k, _, _)| k == key) {
                return Err(err(lineno, format!("duplicate key {key:?}")));
            }
            header.push((key.to_string(), value.trim().to_string(), lineno));
        }
    }

    let field = |name: &str| -> Result<(&str, usize)> {
        header
            .iter()
            .find(|(k, _, _)| k == name)
            .map(|(_, v, l)| (v.as_str(), *l))
            .ok_or_else(|| err(0, format!("missing key {name:?}")))
    };
    let count = |name: &str| -> Result<usize> {
        let (v, l) = field(name)?;
        v.parse().map_err(|_| err(l, format!("{name} must be a nonnegative integer")))
    };
    let list = |name: &str| -> Result<Vec<f64>> {
        let (v, l) = field(name)?;
        v.split_whitespace()
            .map(|x| x.parse::<f64>().map_err(|_| err(l, format!("bad number {x:?} in {name}"))))
            .collect()
    };
    if let Some((k, _, l)) = header.iter().find(|(k, _, _)| {
        !["base_stations", "users", "antennas", "assignment", "gamma", "sigma2", "channels"].contains(&k.as_str())
    }) {
        return Err(err(*l, format!("unknown key {k:?}")));
    }
    let nb = count("base_stations")?;
    let nk = count("users")?;
    let nt = count("antennas")?;
    let (assign_text, assign_line) = field("assignment")?;
    let assign = assign_text
        .split_whitespace()
        .map(|v| match v.parse::<usize>() {
            Ok(b) if b >= 1 => Ok(b - 1),
            _ => Err(err(assign_line, format!("bad base station {v:?}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    if assign.len() != nk {
        return Err(err(assign_line, format!("{} assignments for {nk} users", assign.len())));
    }
    let topo = Topology::new(nb, nt, assign)?;
    let scenario = Scenario::new(topo, QosSpec::new(list("gamma")?, list("sigma2")?)?)?;
    let declared = count("channels")?;
    if declared != sections.len() {
        return Err(err(field("channels")?.1, format!("declared {declared} channels, found {}", sections.len())));
    }
    let mut channels = Vec::with_capacity(sections.len());
    for section in sections {
        let mut h = ChannelSet::for_topology(&scenario.topology);
        let mut seen = vec![false; nb * nk];
        for (m, k, vals, line) in section {
            if m >= nb || k >= nk {
                return Err(err(line, format!("channel h {} {} out of range", m + 1, k + 1)));
            }
            if std::mem::replace(&mut seen[m * nk + k], true) {
                return Err(err(line, format!("duplicate channel h {} {}", m + 1, k + 1)));
            }
            if vals.len() != 2 * nt {
                return Err(err(line, format!("expected {} numbers, found {}", 2 * nt, vals.len())));
            }
            for (z, pair) in h.get_mut(m, k).iter_mut().zip(vals.chunks(2)) {
                *z = Complex64::new(pair[0], pair[1]);
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(err(
                0,
                format!("channel section lacks h {} {}", missing / nk + 1, missing % nk + 1),
            ));
        }
        h.check(&scenario.topology)?;
        channels.push(h);
    }
    Ok(Instance { scenario, channels })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Instance {
        let scenario = Scenario::new(
            Topology::new(2, 2, vec![0, 1, 1]).unwrap(),
            QosSpec::new(vec![10.0, 0.1, 3.5], vec![1.0, 2.0, 1e-3]).unwrap(),
        )
        .unwrap();
        let mut h = ChannelSet::for_topology(&scenario.topology);
        for (i, z) in h.as_mut_slice().iter_mut().enumerate() {
            *z = Complex64::new((i as f64 * 0.37).sin() / 3.0, 1.0 / (i as f64 + 7.0));
        }
        Instance {
            scenario,
            channels: vec![h.clone(), h.scaled(std::f64::consts::PI)],
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let inst = sample();
        let text = format_instance(&inst);
        assert_eq!(parse_instance(&text, "mem").unwrap(), inst);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = format_instance(&sample()).replace("h 2 3 = ", "h 2 3 = x ");
        match parse_instance(&text, "mem") {
            Err(Error::Parse { line, .. }) => assert!(line > 8),
            other => panic!("{other:?}"),
        }
        let text = format_instance(&sample()).replace("channels = 2", "channels = 3");
        assert!(parse_instance(&text, "mem").is_err());
        let text = format_instance(&sample()).replace("assignment = 1 2 2", "assignment = 1 2 0");
        assert!(parse_instance(&text, "mem").is_err());
    }
}
