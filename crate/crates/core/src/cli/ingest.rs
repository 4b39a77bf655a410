use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{MpcError, Result};
use crate::fda::ProfileSample;

const HEADER: [&str; 4] = ["obs_id", "channel", "time_index", "value"];
const MAX_LISTED: usize = 10;

/// A dense sample read from long-format CSV, with its original labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LongCsv {
    pub obs_ids: Vec<String>,
    /// Channel labels in order of first appearance.
    pub channels: Vec<String>,
    /// Distinct `time_index` values, ascending.
    pub times: Vec<f64>,
    /// Grid is `times` rescaled to `[0, 1]`.
    pub sample: ProfileSample,
}

impl LongCsv {
    /// Observations as `p × n` row-major blocks with channels reordered to
    /// `channels`; the grid must match `grid`.
    pub fn aligned(&self, channels: &[String], grid: &[f64]) -> Result<Vec<Vec<f64>>> {
        let g = self.sample.grid();
        if g.len() != grid.len() || g.iter().zip(grid).any(|(a, b)| (a - b).abs() > 1e-9) {
            return Err(MpcError::DimensionMismatch(format!(
                "stream has {} time points that do not match the model's {}",
                g.len(),
                grid.len()
            )));
        }
        if channels.len() != self.channels.len() {
            return Err(MpcError::DimensionMismatch(format!(
                "stream has {} channels, model expects {}",
                self.channels.len(),
                channels.len()
            )));
        }
        let order: Vec<usize> = channels
            .iter()
            .map(|c| {
                self.channels
                    .iter()
                    .position(|x| x == c)
                    .ok_or_else(|| MpcError::InvalidInput(format!("channel '{c}' missing from stream")))
            })
            .collect::<Result<_>>()?;
        Ok((0..self.sample.n_obs())
            .map(|i| order.iter().flat_map(|&j| self.sample.curve(i, j).iter().copied()).collect())
            .collect())
    }
}

pub fn ingest_profiles(path: &Path) -> Result<LongCsv> {
    let f = std::fs::File::open(path)
        .map_err(|e| MpcError::InvalidInput(format!("cannot open {}: {e}", path.display())))?;
    read_long_csv(f)
}

fn interned(map: &mut HashMap<String, usize>, order: &mut Vec<String>, key: &str) -> usize {
    if let Some(&i) = map.get(key) {
        return i;
    }
    order.push(key.to_string());
    map.insert(key.to_string(), order.len() - 1);
    order.len() - 1
}

/// Parses `obs_id,channel,time_index,value` rows into a dense sample.
pub fn read_long_csv<R: Read>(reader: R) -> Result<LongCsv> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col: Vec<usize> = HEADER
        .iter()
        .map(|h| {
            headers
                .iter()
                .position(|x| x == *h)
                .ok_or_else(|| MpcError::Format(format!("missing column '{h}'; header must be {}", HEADER.join(","))))
        })
        .collect::<Result<_>>()?;

    let (mut obs_map, mut obs_ids) = (HashMap::new(), Vec::new());
    let (mut ch_map, mut channels) = (HashMap::new(), Vec::new());
    let mut time_map: HashMap<u64, usize> = HashMap::new();
    let mut times: Vec<f64> = Vec::new();
    let mut cells: HashMap<(usize, usize, usize), f64> = HashMap::new();

    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |c: usize| rec.get(col[c]).unwrap_or("");
        let number = |c: usize| -> Result<f64> {
            let s = field(c);
            match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(MpcError::Format(format!("line {line}: non-numeric {} '{s}'", HEADER[c]))),
            }
        };
        let t = number(2)? + 0.0;
        let v = number(3)?;
        let o = interned(&mut obs_map, &mut obs_ids, field(0));
        let c = interned(&mut ch_map, &mut channels, field(1));
        let ti = *time_map.entry(t.to_bits()).or_insert_with(|| {
            times.push(t);
            times.len() - 1
        });
        if cells.insert((o, c, ti), v).is_some() {
            return Err(MpcError::Format(format!(
                "line {line}: duplicate cell (obs {}, channel {}, time {t})",
                field(0),
                field(1)
            )));
        }
    }
    if obs_ids.is_empty() {
        return Err(MpcError::InvalidInput("no data rows".into()));
    }
    if times.len() < 2 {
        return Err(MpcError::InvalidInput("profiles need at least two distinct time points".into()));
    }

    let mut by_time: Vec<usize> = (0..times.len()).collect();
    by_time.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let (n_obs, p, n) = (obs_ids.len(), channels.len(), times.len());
    let mut values = Vec::with_capacity(n_obs * p * n);
    let mut missing = Vec::new();
    let mut n_missing = 0usize;
    for o in 0..n_obs {
        for c in 0..p {
            for &ti in &by_time {
                match cells.get(&(o, c, ti)) {
                    Some(&v) => values.push(v),
                    None => {
                        n_missing += 1;
                        if missing.len() < MAX_LISTED {
                            missing.push(format!("(obs {}, channel {}, time {})", obs_ids[o], channels[c], times[ti]));
                        }
                        values.push(f64::NAN);
                    }
                }
            }
        }
    }
    if n_missing > 0 {
        return Err(MpcError::InvalidInput(format!(
            "{n_missing} missing cell(s), first {}: {}",
            missing.len(),
            missing.join(", ")
        )));
    }
    let sorted: Vec<f64> = by_time.iter().map(|&i| times[i]).collect();
    let (lo, hi) = (sorted[0], sorted[n - 1]);
    let grid: Vec<f64> = sorted.iter().map(|t| (t - lo) / (hi - lo)).collect();
    let sample = ProfileSample::new(n_obs, p, grid, values)?;
    Ok(LongCsv {
        obs_ids,
        channels,
        times: sorted,
        sample,
    })
}

/// Writes `sample` as long CSV with integer time indices.
pub fn write_long_csv<W: Write>(out: W, sample: &ProfileSample, channels: &[String], first_obs: usize) -> Result<()> {
    if channels.len() != sample.n_channels() {
        return Err(MpcError::DimensionMismatch("channel labels do not match the sample".into()));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for i in 0..sample.n_obs() {
        let id = (first_obs + i).to_string();
        for (j, ch) in channels.iter().enumerate() {
            for (h, v) in sample.curve(i, j).iter().enumerate() {
                w.write_record([id.as_str(), ch.as_str(), &h.to_string(), &v.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-group mean functions subtracted from every channel of the group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCentering {
    /// Group label of each channel, in model channel order.
    pub groups: Vec<String>,
    /// Mean function of each group on the raw grid.
    pub means: BTreeMap<String, Vec<f64>>,
}

/// Reads a channel-to-group map: a JSON object, or CSV with header
/// `channel,group`.
pub fn read_group_map(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)?;
    if text.trim_start().starts_with('{') {
        return Ok(serde_json::from_str(&text)?);
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["channel", "group"] {
        return Err(MpcError::Format("group map CSV header must be channel,group".into()));
    }
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        out.insert(rec[0].to_string(), rec[1].to_string());
    }
    Ok(out)
}

impl GroupCentering {
    /// Group means over every observation and member channel of `sample`.
    pub fn fit(sample: &ProfileSample, channels: &[String], map: &BTreeMap<String, String>) -> Result<Self> {
        let groups: Vec<String> = channels
            .iter()
            .map(|c| {
                map.get(c)
                    .cloned()
                    .ok_or_else(|| MpcError::InvalidInput(format!("channel '{c}' has no group")))
            })
            .collect::<Result<_>>()?;
        let n = sample.n_points();
        let mut means: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for i in 0..sample.n_obs() {
            for (j, g) in groups.iter().enumerate() {
                let acc = means.entry(g.clone()).or_insert_with(|| vec![0.0; n]);
                for (a, v) in acc.iter_mut().zip(sample.curve(i, j)) {
                    *a += v;
                }
                *counts.entry(g.clone()).or_default() += 1;
            }
        }
        for (g, m) in means.iter_mut() {
            let c = counts[g] as f64;
            m.iter_mut().for_each(|v| *v /= c);
        }
        Ok(Self { groups, means })
    }

    pub fn validate(&self, channels: &[String], n_points: usize) -> Result<()> {
        if self.groups.len() != channels.len() {
            return Err(MpcError::Format("centering groups do not match the channels".into()));
        }
        for g in &self.groups {
            match self.means.get(g) {
                Some(m) if m.len() == n_points && m.iter().all(|v| v.is_finite()) => {}
                _ => return Err(MpcError::Format(format!("centering group '{g}' has no valid mean"))),
            }
        }
        Ok(())
    }

    /// Centers one `p × n` row-major observation in place.
    pub fn apply(&self, obs: &mut [f64]) {
        let n = obs.len() / self.groups.len().max(1);
        for (j, g) in self.groups.iter().enumerate() {
            for (v, m) in obs[j * n..(j + 1) * n].iter_mut().zip(&self.means[g]) {
                *v -= m;
            }
        }
    }

    pub fn apply_sample(&self, sample: &ProfileSample) -> Result<ProfileSample> {
        let obs: Vec<Vec<f64>> = (0..sample.n_obs())
            .map(|i| {
                let mut o = sample.observation(i).to_vec();
                self.apply(&mut o);
                o
            })
            .collect();
        ProfileSample::from_observations(sample.grid().to_vec(), &obs, sample.n_channels())
    }
}
