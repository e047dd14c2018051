//! Running campaigns and writing their results.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::config::Campaign;
use crate::seed::RngSeedPlan;
use crate::sim;

/// Fixed trailing CSV columns.
pub const RESULT_COLUMNS: [&str; 5] = ["run", "seed", "final_gap", "final_min_y", "runtime_ms"];

/// How equal loads are ordered when ties are not broken at random.
pub const DETERMINISTIC_TIE_RULE: &str =
    "equal loads are ranked by ascending bin index; ties between the two endpoints of a sampled edge are broken by a fair coin";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Record wall-clock time per run. Off by default so that results are a
    /// pure function of the campaign and seed.
    pub timing: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignRow {
    pub point_id: usize,
    pub values: Vec<String>,
    pub run: usize,
    /// Child seed of the run's RNG stream.
    pub seed: u64,
    pub final_gap: f64,
    pub final_min_y: f64,
    pub runtime_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub campaign: Campaign,
    pub columns: Vec<String>,
    pub rows: Vec<CampaignRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignMeta {
    pub campaign: Campaign,
    pub master_seed: u64,
    pub seed_derivation: String,
    pub tie_rule: String,
    pub rows: usize,
}

impl CampaignResult {
    /// Final gaps of the rows whose swept columns match every `(column, value)` filter.
    pub fn final_gaps(&self, filter: &[(&str, &str)]) -> Result<Vec<f64>> {
        let idx: Vec<(usize, &str)> = filter
            .iter()
            .map(|(col, val)| {
                self.columns
                    .iter()
                    .position(|c| c == col)
                    .map(|i| (i, *val))
                    .ok_or_else(|| Error::invalid(format!("no column `{col}` in campaign")))
            })
            .collect::<Result<_>>()?;
        Ok(self
            .rows
            .iter()
            .filter(|r| idx.iter().all(|(i, v)| r.values[*i] == *v))
            .map(|r| r.final_gap)
            .collect())
    }

    pub fn meta(&self) -> CampaignMeta {
        CampaignMeta {
            campaign: self.campaign.clone(),
            master_seed: self.campaign.seed,
            seed_derivation: "run k of the campaign (point_id * runs_per_point + run) uses \
                              mix64(master_seed ^ 0x9E3779B97F4A7C15 * (k + 1)) seeding ChaCha8"
                .into(),
            tie_rule: DETERMINISTIC_TIE_RULE.into(),
            rows: self.rows.len(),
        }
    }
}

/// Executes every grid point `runs_per_point` times. Runs execute in
/// parallel; rows come back ordered by `(point_id, run)`.
pub fn run_campaign(campaign: &Campaign) -> Result<CampaignResult> {
    run_campaign_with(campaign, RunOptions::default())
}

pub fn run_campaign_with(campaign: &Campaign, options: RunOptions) -> Result<CampaignResult> {
    let points = campaign.expand()?;
    let runs = campaign.runs_per_point;
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..runs).map(move |r| (p, r)))
        .collect();
    let rows = jobs
        .into_par_iter()
        .map(|(p, run)| {
            let point = &points[p];
            let mut config = point.config.clone();
            config.seed_plan = RngSeedPlan::new(campaign.seed, (p * runs + run) as u64);
            let start = Instant::now();
            let trace = sim::run(&config)?;
            let elapsed = start.elapsed().as_secs_f64() * 1e3;
            let last = trace.final_record();
            Ok(CampaignRow {
                point_id: point.id,
                values: point.values.clone(),
                run,
                seed: config.seed_plan.child_seed(),
                final_gap: last.gap,
                final_min_y: last.min_y,
                runtime_ms: if options.timing { elapsed } else { 0.0 },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CampaignResult {
        campaign: campaign.clone(),
        columns: campaign.columns(),
        rows,
    })
}

pub fn csv_header(columns: &[String]) -> Vec<String> {
    std::iter::once("point_id".to_string())
        .chain(columns.iter().cloned())
        .chain(RESULT_COLUMNS.iter().map(|s| s.to_string()))
        .collect()
}

/// Writes `point_id,<swept fields...>,run,seed,final_gap,final_min_y,runtime_ms`
/// with LF line endings and shortest round-trip float formatting.
pub fn write_csv_to<W: std::io::Write>(result: &CampaignResult, sink: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink);
    w.write_record(csv_header(&result.columns))?;
    for row in &result.rows {
        let mut record = Vec::with_capacity(result.columns.len() + 6);
        record.push(row.point_id.to_string());
        record.extend(row.values.iter().cloned());
        record.push(row.run.to_string());
        record.push(row.seed.to_string());
        record.push(format!("{}", row.final_gap));
        record.push(format!("{}", row.final_min_y));
        record.push(format!("{}", row.runtime_ms));
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn write_csv(result: &CampaignResult, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv_to(result, std::io::BufWriter::new(file))
}

/// Sidecar path `<csv>.meta.json`.
pub fn meta_path(csv_path: &Path) -> PathBuf {
    let mut s = csv_path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn write_meta(result: &CampaignResult, csv_path: &Path) -> Result<()> {
    let path = meta_path(csv_path);
    let text = serde_json::to_string_pretty(&result.meta())?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::config::{ProcessConfig, ProcessName, SweepAxis, SweepField};

    fn small() -> Campaign {
        let mut c = Campaign::new("small", 16, 16, 160);
        c.sweep = vec![
            SweepAxis::new(SweepField::BOverN, [1, 2]),
            SweepAxis::new(
                SweepField::Process,
                [ProcessConfig::new(ProcessName::TwoChoice), ProcessConfig::one_plus_beta(0.5)],
            ),
        ];
        c.runs_per_point = 3;
        c.seed = 5;
        c
    }

    #[test]
    fn one_point_one_run() {
        let r = run_campaign(&Campaign::new("one", 8, 8, 64)).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert!(r.columns.is_empty());
    }

    #[test]
    fn rows_cover_the_grid_in_order() {
        let r = run_campaign(&small()).unwrap();
        assert_eq!(r.rows.len(), 4 * 3);
        let keys: Vec<(usize, usize)> = r.rows.iter().map(|x| (x.point_id, x.run)).collect();
        let expected: Vec<(usize, usize)> = (0..4).flat_map(|p| (0..3).map(move |k| (p, k))).collect();
        assert_eq!(keys, expected);
        assert!(r.rows.iter().all(|x| x.runtime_ms == 0.0));
        let gaps = r.final_gaps(&[("b_over_n", "2"), ("process", "two_choice")]).unwrap();
        assert_eq!(gaps.len(), 3);
        assert!(r.final_gaps(&[("nope", "1")]).is_err());
    }

    #[test]
    fn csv_shape_and_determinism() {
        let c = small();
        let mut a = Vec::new();
        write_csv_to(&run_campaign(&c).unwrap(), &mut a).unwrap();
        let mut b = Vec::new();
        write_csv_to(&run_campaign(&c).unwrap(), &mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(!text.contains('\r'));
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "point_id,b_over_n,process,run,seed,final_gap,final_min_y,runtime_ms"
        );
        assert_eq!(lines.count(), 12);

        let mut rd = csv::Reader::from_reader(text.as_bytes());
        for (rec, row) in rd.records().zip(run_campaign(&c).unwrap().rows) {
            let rec = rec.unwrap();
            let gap: f64 = rec[5].parse().unwrap();
            assert_eq!(gap.to_bits(), row.final_gap.to_bits(), "float round trip");
        }
    }

    #[test]
    fn timing_is_opt_in() {
        let c = Campaign::new("t", 64, 64, 64 * 64);
        let r = run_campaign_with(&c, RunOptions { timing: true }).unwrap();
        assert!(r.rows[0].runtime_ms > 0.0);
    }

    #[test]
    fn meta_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        let r = run_campaign(&small()).unwrap();
        write_csv(&r, &path).unwrap();
        write_meta(&r, &path).unwrap();
        let meta: CampaignMeta =
            serde_json::from_str(&std::fs::read_to_string(meta_path(&path)).unwrap()).unwrap();
        assert_eq!(meta.rows, 12);
        assert_eq!(meta.master_seed, 5);
        assert_eq!(meta.campaign, small());
    }
}
