use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use pho_core::config::PredictorKind;
use pho_core::engine::{
    normalized_drop_pct, sweep as run_sweep, write_events_jsonl, write_frames_jsonl,
    write_trace_csv, SweepAxis,
};
use pho_core::predictor::{
    generate_dataset as gen, grid_mae, r_squared, read_dataset_csv, read_model, split,
    train as fit, write_dataset_csv, write_history_csv, write_model, BlockagePredictor,
    RegressionNet,
};
use pho_core::scene::MPS_PER_MPH;
use pho_core::{run, RunResult, Scenario, ScenarioConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use tracing::info;

use crate::{CliError, Common, RunArgs};

pub fn load_config(common: &Common) -> Result<ScenarioConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                CliError::Usage(format!("cannot read config {}: {e}", path.display()))
            })?;
            ScenarioConfig::from_toml(&text)?
        }
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.run.seed = seed;
    }
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

pub fn generate_dataset(common: &Common, n: Option<usize>, out: &Path) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let n = n.unwrap_or(cfg.train.samples);
    if n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    let s = cfg.build()?;
    let edge = s
        .blocked_edge()
        .ok_or_else(|| CliError::runtime("the scenario has no blocked area to label against"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed);
    let rows =
        gen(&s.scene, edge, n, &cfg.train.speeds_mps(), &mut rng).map_err(CliError::runtime)?;
    write_dataset_csv(&rows, create(out)?).map_err(CliError::runtime)?;
    println!("wrote {} rows to {}", rows.len(), out.display());
    Ok(())
}

pub fn train(
    common: &Common,
    dataset: &Path,
    out: Option<PathBuf>,
    history: Option<PathBuf>,
) -> Result<(), CliError> {
    let mut cfg = load_config(common)?;
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
    }
    let s = cfg.build()?;
    let data = read_dataset_csv(open(dataset)?).map_err(CliError::runtime)?;
    let (tr, va, te) = split(&data, cfg.train.split, cfg.train.seed).map_err(CliError::runtime)?;
    let outcome = fit(&tr, &va, &cfg.train.train_config()).map_err(CliError::runtime)?;

    let model_path = out.unwrap_or_else(|| PathBuf::from(&cfg.paths.model));
    let history_path = history.unwrap_or_else(|| model_path.with_file_name("history.csv"));
    write_model(&outcome.net, create(&model_path)?).map_err(CliError::runtime)?;
    write_history_csv(&outcome.history, create(&history_path)?).map_err(CliError::runtime)?;

    let r2 = r_squared(&outcome.net, &te).map_err(CliError::runtime)?;
    println!(
        "test R2 {r2:.6} on {} samples (best epoch {})",
        te.len(),
        outcome.best_epoch
    );
    if let Some(edge) = s.blocked_edge() {
        let t = &s.scene.trajectory;
        let mae = grid_mae(
            &outcome.net,
            edge,
            t.direction,
            t.y_lane,
            s.scene.street_length_m,
            50,
            &cfg.train.speeds_mps(),
        )
        .map_err(CliError::runtime)?;
        println!("grid MAE {mae:.4} s");
    }
    println!(
        "model {} history {}",
        model_path.display(),
        history_path.display()
    );
    Ok(())
}

fn load_model(cfg: &ScenarioConfig, args: &RunArgs) -> Result<Option<RegressionNet>, CliError> {
    if cfg.strategy.predictor != PredictorKind::Model {
        return Ok(None);
    }
    let path = args
        .model
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.paths.model));
    read_model(open(&path)?)
        .map(Some)
        .map_err(CliError::runtime)
}

fn apply_run_args(cfg: &mut ScenarioConfig, args: &RunArgs) -> Result<PathBuf, CliError> {
    if let Some(kind) = args.strategy()? {
        cfg.strategy.kind = kind;
    }
    if args.frames {
        cfg.run.record_frames = true;
    }
    Ok(args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.paths.out_dir)))
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    config_hash: String,
    seed: u64,
    strategy: &'a str,
    config: &'a ScenarioConfig,
    summary: &'a pho_core::Summary,
}

/// Writes trace.csv, rss.csv, events.jsonl, summary.json and, when
/// recorded, frames.jsonl.
fn write_bundle(dir: &Path, cfg: &ScenarioConfig, r: &RunResult) -> Result<(), CliError> {
    write_trace_csv(&r.trace, create(&dir.join("trace.csv"))?).map_err(CliError::runtime)?;
    write_events_jsonl(&r.events, create(&dir.join("events.jsonl"))?).map_err(CliError::runtime)?;
    write_rss_csv(r, create(&dir.join("rss.csv"))?).map_err(CliError::runtime)?;
    if cfg.run.record_frames {
        write_frames_jsonl(&r.frames, create(&dir.join("frames.jsonl"))?)
            .map_err(CliError::runtime)?;
    }
    let file = SummaryFile {
        config_hash: cfg.hash(),
        seed: r.seed,
        strategy: r.strategy.as_str(),
        config: cfg,
        summary: &r.summary,
    };
    let mut w = create(&dir.join("summary.json"))?;
    serde_json::to_writer_pretty(&mut w, &file).map_err(CliError::runtime)?;
    w.write_all(b"\n")
        .and_then(|_| w.flush())
        .map_err(CliError::runtime)
}

/// Every SBS's RSS at each sample, one column per SBS.
fn write_rss_csv<W: Write>(r: &RunResult, w: W) -> Result<(), csv::Error> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["t_s".to_string(), "x_m".to_string()];
    header.extend(r.rss_traces.iter().map(|t| format!("sbs_{}", t.sbs_id.0)));
    wr.write_record(&header)?;
    for (i, row) in r.trace.iter().enumerate() {
        let mut rec = vec![row.t_s.to_string(), row.x_m.to_string()];
        rec.extend(r.rss_traces.iter().map(|t| t.rssi_dbm[i].to_string()));
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}

fn run_one(s: &Scenario, model: Option<&RegressionNet>) -> Result<RunResult, CliError> {
    let analytic = s.analytic_predictor();
    let predictor: Option<&dyn BlockagePredictor> = match model {
        Some(m) => Some(m),
        None => analytic.as_ref().map(|p| p as &dyn BlockagePredictor),
    };
    Ok(run(s, predictor, s.seed)?)
}

pub fn simulate(common: &Common, args: &RunArgs) -> Result<(), CliError> {
    let mut cfg = load_config(common)?;
    let out = apply_run_args(&mut cfg, args)?;
    let s = cfg.build()?;
    let model = load_model(&cfg, args)?;
    let r = run_one(&s, model.as_ref())?;
    write_bundle(&out, &cfg, &r)?;
    let m = &r.summary;
    println!(
        "{}: {} handover(s), min MOS {:.3}, in-shadow {:.3} s, interruption {:.3} s",
        r.strategy.as_str(),
        m.handovers,
        m.min_mos,
        m.in_shadow_s,
        m.interruption_s
    );
    if let Some(p) = &m.plan {
        println!(
            "plan: t_to_blk {:.4} s, t_w {:.4} s, D {:.3} m, t_exec {:.4} s",
            p.predicted_t_to_blk_s, p.t_w_s, p.d_m, p.t_exec_s
        );
    }
    info!(dir = %out.display(), "bundle written");
    Ok(())
}

pub fn parse_values(text: &str) -> Result<Vec<f64>, CliError> {
    let values = text
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| {
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| CliError::Usage(format!("bad sweep value `{v}`")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err(CliError::Usage("--values needs at least one value".into()));
    }
    Ok(values)
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(String::new, |x| format!("{x:.digits$}"))
}

pub fn sweep(common: &Common, args: &RunArgs, axis: &str, values: &str) -> Result<(), CliError> {
    let axis =
        SweepAxis::parse(axis).ok_or_else(|| CliError::Usage(format!("unknown axis `{axis}`")))?;
    let values = parse_values(values)?;
    let mut cfg = load_config(common)?;
    let out = apply_run_args(&mut cfg, args)?;
    cfg.build()?;
    let model = load_model(&cfg, args)?;
    let points = run_sweep(
        &cfg,
        axis,
        &values,
        model.as_ref().map(|m| m as &dyn BlockagePredictor),
    )?;
    let drops = normalized_drop_pct(&points);

    let header = [
        "value",
        "speed_mph",
        "speed_mps",
        "t_to_blk_s",
        "t_w_s",
        "d_m",
        "ho_rssi_dbm",
        "ho_rssi_norm",
        "norm_rssi_drop_pct",
        "min_mos",
        "in_shadow_s",
    ];
    let mut table = csv::Writer::from_writer(create(&out.join("sweep.csv"))?);
    table.write_record(header).map_err(CliError::runtime)?;
    println!("{}", header.join("\t"));
    for (p, drop) in points.iter().zip(&drops) {
        let mut point_cfg = cfg.clone();
        axis.apply(&mut point_cfg, p.value);
        write_bundle(
            &out.join(format!("{}_{}", axis.as_str(), p.value)),
            &point_cfg,
            &p.result,
        )?;
        let done = p.result.completion;
        let row = [
            p.value.to_string(),
            format!("{:.3}", p.table.speed_mps / MPS_PER_MPH),
            format!("{:.4}", p.table.speed_mps),
            format!("{:.4}", p.table.t_to_blk_s),
            opt(p.table.t_w_s, 4),
            opt(p.table.d_m, 3),
            opt(done.map(|c| c.rssi_dbm), 3),
            opt(done.and_then(|c| c.rssi_norm), 4),
            opt(*drop, 2),
            format!("{:.3}", p.result.summary.min_mos),
            format!("{:.3}", p.result.summary.in_shadow_s),
        ];
        table.write_record(&row).map_err(CliError::runtime)?;
        println!("{}", row.join("\t"));
    }
    table.flush().map_err(CliError::runtime)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_accept_negatives_and_spaces() {
        assert_eq!(parse_values("-10, -5,0").unwrap(), [-10.0, -5.0, 0.0]);
    }

    #[test]
    fn empty_and_junk_values_are_usage_errors() {
        for bad in ["", " , ", "1,x", "nan"] {
            assert!(
                matches!(parse_values(bad), Err(CliError::Usage(_))),
                "{bad}"
            );
        }
    }
}
