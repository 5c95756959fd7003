use std::fmt::Write as _;

use anyhow::Context;
use patchmix::mixing::{decode_manifest, ManifestRecord};

use crate::args::StatsArgs;
use crate::files::{require_input, write_atomic};
use crate::{Session, Status};

const BINS: usize = 10;

struct Row<'a> {
    record: &'a ManifestRecord,
    score_share: Option<f64>,
    point_share: Option<f64>,
}

impl Row<'_> {
    fn divergence(&self) -> Option<f64> {
        Some(self.point_share? - self.score_share?)
    }
}

#[derive(Default)]
struct Summary {
    n: usize,
    mean: f64,
    std: f64,
    min: f64,
    max: f64,
}

fn summarize(values: impl Iterator<Item = f64>) -> Summary {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        return Summary::default();
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Summary {
        n: v.len(),
        mean,
        std: var.sqrt(),
        min: v.iter().copied().fold(f64::INFINITY, f64::min),
        max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

fn line(out: &mut String, name: &str, s: &Summary) {
    if s.n == 0 {
        let _ = writeln!(out, "{name:<12}-");
    } else {
        let _ = writeln!(
            out,
            "{name:<12}mean {:.6}  std {:.6}  min {:.6}  max {:.6}",
            s.mean, s.std, s.min, s.max
        );
    }
}

fn csv_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn render_csv(rows: &[Row<'_>]) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "out_id", "source_a", "source_b", "lambda", "popcount", "w1", "w2", "score_share", "point_share", "divergence",
    ])?;
    for r in rows {
        let m = r.record;
        w.write_record([
            m.out_id.clone(),
            m.source_a.clone(),
            m.source_b.clone(),
            m.lambda.to_string(),
            m.popcount.to_string(),
            m.w1.to_string(),
            m.w2.to_string(),
            csv_cell(r.score_share),
            csv_cell(r.point_share),
            csv_cell(r.divergence()),
        ])?;
    }
    Ok(w.into_inner()?)
}

pub fn run(args: &StatsArgs, session: &mut Session) -> anyhow::Result<Status> {
    let input = require_input(session.input(&args.common).as_deref(), "input")?;
    let units = args.patches.or(session.config.patches);
    let text = std::fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
    let records = decode_manifest(&text).with_context(|| format!("in manifest {}", input.display()))?;

    let rows: Vec<Row<'_>> = records
        .iter()
        .map(|m| {
            let total = m.w1 + m.w2;
            Row {
                record: m,
                score_share: (total > 0.0).then(|| m.w1 / total),
                point_share: units.filter(|&u| u > 0).map(|u| m.popcount as f64 / u as f64),
            }
        })
        .collect();

    let mut out = String::new();
    let _ = writeln!(out, "{:<12}{}", "mixes", rows.len());
    line(&mut out, "lambda", &summarize(records.iter().map(|m| m.lambda)));
    line(&mut out, "w1", &summarize(records.iter().map(|m| m.w1)));
    line(&mut out, "w2", &summarize(records.iter().map(|m| m.w2)));
    line(&mut out, "score_share", &summarize(rows.iter().filter_map(|r| r.score_share)));
    if units.is_some() {
        line(&mut out, "divergence", &summarize(rows.iter().filter_map(Row::divergence)));
        line(&mut out, "|divergence|", &summarize(rows.iter().filter_map(|r| r.divergence().map(f64::abs))));
    }
    let mut hist = [0usize; BINS];
    for m in &records {
        hist[((m.lambda * BINS as f64) as usize).min(BINS - 1)] += 1;
    }
    let _ = writeln!(out, "lambda histogram");
    for (b, count) in hist.iter().enumerate() {
        let lo = b as f64 / BINS as f64;
        let close = if b + 1 == BINS { ']' } else { ')' };
        let _ = writeln!(out, "  [{lo:.1}, {:.1}{close}  {count}", lo + 1.0 / BINS as f64);
    }
    if !rows.is_empty() {
        let _ = writeln!(out, "per mix");
        let _ = writeln!(out, "  out_id\tlambda\tpopcount\tw1\tw2\tdivergence");
        for r in &rows {
            let m = r.record;
            let _ = writeln!(
                out,
                "  {}\t{:.6}\t{}\t{:.6}\t{:.6}\t{}",
                m.out_id,
                m.lambda,
                m.popcount,
                m.w1,
                m.w2,
                r.divergence().map(|d| format!("{d:.6}")).unwrap_or_else(|| "-".into())
            );
        }
    }
    print!("{out}");

    if let Some(path) = session.output(&args.common) {
        write_atomic(&path, &render_csv(&rows)?)?;
    }
    Ok(Status::Done)
}
