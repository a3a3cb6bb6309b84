//! CSV and manifest writers. Every file is a pure function of the run's
//! config and seed, so repeated invocations produce identical bytes.

use std::path::{Path, PathBuf};

use dpws_core::config::SimConfig;
use dpws_core::kpi::{CellKpiReport, ThroughputStats, FACTOR_LABELS};
use dpws_core::sim::{ComparisonRow, StepRecord, SwitchRecord, TrainLogRow};
use dpws_core::waveform::PaprPoint;
use serde::Serialize;

use crate::Failure;

pub struct Outputs {
    dir: PathBuf,
}

#[derive(Serialize)]
pub struct RunManifest<'a> {
    command: String,
    version: &'static str,
    seed: u64,
    config: &'a SimConfig,
}

impl<'a> RunManifest<'a> {
    pub fn new(command: &str, config: &'a SimConfig) -> Self {
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            seed: config.run.seed,
            config,
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl Outputs {
    pub fn create(dir: &Path) -> Result<Self, Failure> {
        std::fs::create_dir_all(dir)
            .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Outputs { dir: dir.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn writer(&self, name: &str) -> Result<csv::Writer<std::fs::File>, Failure> {
        Ok(csv::Writer::from_path(self.path(name))?)
    }

    pub fn manifest(&self, m: &RunManifest) -> Result<(), Failure> {
        let text = toml::to_string(m).map_err(|e| Failure::Runtime(e.to_string()))?;
        std::fs::write(self.path("manifest.toml"), text)?;
        Ok(())
    }

    pub fn training_log(&self, rows: &[TrainLogRow]) -> Result<(), Failure> {
        let mut w = self.writer("training_log.csv")?;
        w.write_record(["episode", "step", "epsilon", "action", "zeta", "xi", "reward", "loss"])?;
        for r in rows {
            w.write_record([
                r.episode.to_string(),
                r.step.to_string(),
                r.epsilon.to_string(),
                r.action.to_string(),
                r.zeta.to_string(),
                r.xi.to_string(),
                opt(r.reward),
                opt(r.loss),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn episode_rewards(&self, rewards: &[f64]) -> Result<(), Failure> {
        let mut w = self.writer("episode_rewards.csv")?;
        w.write_record(["episode", "mean_reward"])?;
        for (i, r) in rewards.iter().enumerate() {
            w.write_record([i.to_string(), r.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn kpi_steps(&self, steps: &[StepRecord]) -> Result<(), Failure> {
        let mut w = self.writer("kpi_steps.csv")?;
        let header = format!("episode,{}", CellKpiReport::csv_header());
        w.write_record(header.split(','))?;
        for s in steps {
            let row = format!("{},{}", s.episode, s.report.csv_row(s.step, s.zeta, s.xi));
            w.write_record(row.split(','))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn switch_events(&self, events: &[SwitchRecord]) -> Result<(), Failure> {
        let mut w = self.writer("switch_events.csv")?;
        w.write_record(["episode", "step", "ue", "slot", "from", "to"])?;
        for e in events {
            w.write_record([
                e.episode.to_string(),
                e.step.to_string(),
                e.ue_id.to_string(),
                e.slot.to_string(),
                e.from.label().to_string(),
                e.to.label().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `factor,value_bps` rows in reward-factor order.
    pub fn stats(&self, name: &str, s: &ThroughputStats) -> Result<(), Failure> {
        let mut w = self.writer(name)?;
        w.write_record(["factor", "value_bps"])?;
        for (label, v) in FACTOR_LABELS.iter().zip(s.values) {
            w.write_record([label.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn comparison(&self, rows: &[(String, ComparisonRow)]) -> Result<(), Failure> {
        let mut w = self.writer("comparison.csv")?;
        w.write_record(["baseline", "factor", "value_bps", "baseline_bps", "gain_percent", "gain_mbps"])?;
        for (base, r) in rows {
            w.write_record([
                base.clone(),
                r.factor.clone(),
                r.value_a.to_string(),
                r.value_b.to_string(),
                r.relative_percent.to_string(),
                r.absolute_mbps.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn papr(&self, rows: &[PaprPoint]) -> Result<(), Failure> {
        let mut w = self.writer("papr.csv")?;
        w.write_record(["waveform", "modulation", "percentile", "papr_db"])?;
        for r in rows {
            w.write_record([
                r.waveform.label().to_string(),
                r.modulation.label().to_string(),
                r.percentile.to_string(),
                r.papr_db.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads a `stats.csv`. Anything other than exactly the nine reward factors
/// in order is a schema error.
pub fn read_stats(path: &Path) -> Result<ThroughputStats, Failure> {
    let schema = |msg: String| Failure::Config(format!("{}: {msg}", path.display()));
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| Failure::Runtime(format!("cannot read {}: {e}", path.display())))?;
    let header = r.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != ["factor", "value_bps"] {
        return Err(schema(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(schema(format!("row with {} fields", rec.len())));
        }
        labels.push(rec[0].to_string());
        values.push(
            rec[1]
                .parse::<f64>()
                .map_err(|e| schema(format!("bad value {:?}: {e}", &rec[1])))?,
        );
    }
    if labels != FACTOR_LABELS {
        return Err(schema(format!("factor set {labels:?} does not match {FACTOR_LABELS:?}")));
    }
    let mut out = [0.0; 9];
    out.copy_from_slice(&values);
    Ok(ThroughputStats { values: out })
}
