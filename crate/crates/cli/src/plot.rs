//! SVG rendering of a simulation bundle.

use std::fs;
use std::path::Path;

use plotters::prelude::*;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Deserialize)]
struct Row {
    t_s: f64,
    rssi_dbm: f64,
    mos: f64,
}

#[derive(Debug, Deserialize)]
struct Event {
    t: f64,
    transition: String,
}

/// Handover start and end times read from the event log.
#[derive(Debug, Default, Clone, Copy, PartialEq)]
pub struct Marks {
    pub trigger: Option<f64>,
    pub completion: Option<f64>,
}

fn marks(events: &[Event]) -> Marks {
    let first = |names: &[&str]| {
        events
            .iter()
            .find(|e| names.contains(&e.transition.as_str()))
            .map(|e| e.t)
    };
    Marks {
        trigger: first(&["ho_triggered", "interrupted"]),
        completion: first(&["ho_complete", "reconnected"]),
    }
}

fn read_trace(path: &Path) -> Result<Vec<Row>, CliError> {
    let mut rd = csv::Reader::from_path(path)
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    rd.deserialize()
        .collect::<Result<Vec<Row>, _>>()
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

fn read_events(path: &Path) -> Result<Vec<Event>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l)
                .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
        })
        .collect()
}

type Series = (String, Vec<(f64, f64)>);

/// Other cells' RSS from rss.csv, when present.
fn read_rss(path: &Path) -> Result<Vec<Series>, CliError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let err = |e: csv::Error| CliError::runtime(format!("{}: {e}", path.display()));
    let mut rd = csv::Reader::from_path(path).map_err(err)?;
    let names: Vec<String> = rd
        .headers()
        .map_err(err)?
        .iter()
        .skip(2)
        .map(str::to_owned)
        .collect();
    let mut series: Vec<(String, Vec<(f64, f64)>)> =
        names.into_iter().map(|n| (n, Vec::new())).collect();
    for rec in rd.records() {
        let rec = rec.map_err(err)?;
        let num = |i: usize| rec.get(i).and_then(|v| v.parse::<f64>().ok());
        let Some(t) = num(0) else { continue };
        for (j, (_, pts)) in series.iter_mut().enumerate() {
            if let Some(v) = num(j + 2) {
                pts.push((t, v));
            }
        }
    }
    Ok(series)
}

fn value_at(rows: &[Row], t: f64, f: impl Fn(&Row) -> f64) -> f64 {
    let i = rows.partition_point(|r| r.t_s < t).min(rows.len() - 1);
    f(&rows[i])
}

fn draw_err<E: std::fmt::Debug>(e: E) -> CliError {
    CliError::runtime(format!("plot: {e:?}"))
}

#[allow(clippy::too_many_arguments)]
fn chart(
    path: &Path,
    caption: &str,
    y_desc: &str,
    y_range: (f64, f64),
    rows: &[Row],
    f: impl Fn(&Row) -> f64 + Copy,
    extra: &[Series],
    m: Marks,
) -> Result<(), CliError> {
    let t_end = rows.last().map_or(1.0, |r| r.t_s).max(1e-3);
    let root = SVGBackend::new(path, (900, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(draw_err)?;
    let mut c = ChartBuilder::on(&root)
        .caption(caption, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(0.0..t_end, y_range.0..y_range.1)
        .map_err(draw_err)?;
    c.configure_mesh()
        .x_desc("time (s)")
        .y_desc(y_desc)
        .draw()
        .map_err(draw_err)?;
    for (i, (name, pts)) in extra.iter().enumerate() {
        let color = Palette99::pick(i + 2).mix(0.6);
        c.draw_series(LineSeries::new(pts.iter().copied(), color))
            .map_err(draw_err)?
            .label(name.clone())
            .legend(move |(x, y)| PathElement::new([(x, y), (x + 16, y)], color));
    }
    c.draw_series(LineSeries::new(
        rows.iter().map(|r| (r.t_s, f(r))),
        BLUE.stroke_width(2),
    ))
    .map_err(draw_err)?
    .label("serving")
    .legend(|(x, y)| PathElement::new([(x, y), (x + 16, y)], BLUE.stroke_width(2)));
    let clamp = |v: f64| v.clamp(y_range.0, y_range.1);
    if let Some(t) = m.trigger {
        c.draw_series([Circle::new(
            (t, clamp(value_at(rows, t, f))),
            6,
            RED.filled(),
        )])
        .map_err(draw_err)?
        .label("handover trigger")
        .legend(|(x, y)| Circle::new((x + 8, y), 5, RED.filled()));
    }
    if let Some(t) = m.completion {
        c.draw_series([TriangleMarker::new(
            (t, clamp(value_at(rows, t, f))),
            8,
            GREEN.filled(),
        )])
        .map_err(draw_err)?
        .label("handover complete")
        .legend(|(x, y)| TriangleMarker::new((x + 8, y), 6, GREEN.filled()));
    }
    c.configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .position(SeriesLabelPosition::LowerLeft)
        .draw()
        .map_err(draw_err)?;
    root.present().map_err(draw_err)
}

/// Writes `rssi.svg` and `mos.svg` for the bundle in `dir`.
pub fn plot_bundle(dir: &Path, out: &Path) -> Result<(), CliError> {
    let rows = read_trace(&dir.join("trace.csv"))?;
    if rows.is_empty() {
        return Err(CliError::runtime("trace.csv has no samples to plot"));
    }
    let events_path = dir.join("events.jsonl");
    let m = if events_path.exists() {
        marks(&read_events(&events_path)?)
    } else {
        Marks::default()
    };
    let others = read_rss(&dir.join("rss.csv"))?;
    fs::create_dir_all(out).map_err(|e| CliError::runtime(format!("{}: {e}", out.display())))?;

    let (lo, hi) = rows
        .iter()
        .map(|r| r.rssi_dbm)
        .chain(others.iter().flat_map(|(_, p)| p.iter().map(|q| q.1)))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        });
    let (lo, hi) = (
        (lo / 5.0).floor() * 5.0 - 5.0,
        (hi / 5.0).ceil() * 5.0 + 5.0,
    );
    chart(
        &out.join("rssi.svg"),
        "Serving RSSI",
        "RSSI (dBm)",
        (lo, hi),
        &rows,
        |r| r.rssi_dbm,
        &others,
        m,
    )?;
    chart(
        &out.join("mos.svg"),
        "MOS",
        "MOS",
        (1.0, 5.0),
        &rows,
        |r| r.mos,
        &[],
        m,
    )?;
    println!(
        "wrote {} and {}",
        out.join("rssi.svg").display(),
        out.join("mos.svg").display()
    );
    Ok(())
}
