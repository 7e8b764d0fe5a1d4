use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DatasetManifest, Split};
use super::train::load_clip;
use crate::error::{Error, Result};
use crate::metrics::{bonferroni, bss_eval, wilcoxon_signed_rank, BssResult, PMethod};

/// Label of the mixture-as-estimate baseline rows.
pub const MIXTURE_LABEL: &str = "mixture";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub song_id: String,
    pub model: String,
    pub sdr_db: f64,
    pub sir_db: f64,
    pub sar_db: f64,
    pub capped: bool,
}

impl MetricRow {
    fn new(song_id: String, model: &str, r: BssResult) -> Self {
        let ([sdr_db, sir_db, sar_db], capped) = r.capped();
        MetricRow {
            song_id,
            model: model.to_string(),
            sdr_db,
            sir_db,
            sar_db,
            capped,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub n: usize,
}

/// Linear-interpolation quartiles.
pub fn quartiles(values: &[f64]) -> Option<Quartiles> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let at = |q: f64| {
        let pos = q * (v.len() - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    Some(Quartiles {
        q1: at(0.25),
        median: at(0.5),
        q3: at(0.75),
        n: v.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: String,
    pub sdr_db: Option<Quartiles>,
    pub sir_db: Option<Quartiles>,
    pub sar_db: Option<Quartiles>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub metric: String,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub p_bonferroni: Option<f64>,
    pub n_effective: Option<usize>,
    pub method: Option<PMethod>,
    /// Why no test was run.
    pub skipped: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<MetricRow>,
    pub summaries: Vec<ModelSummary>,
    pub comparisons: Vec<Comparison>,
    /// Test songs without an estimate file.
    pub missing: Vec<PathBuf>,
}

pub fn summarise(rows: &[MetricRow], model: &str) -> ModelSummary {
    let pick = |f: fn(&MetricRow) -> f64| -> Option<Quartiles> {
        quartiles(&rows.iter().filter(|r| r.model == model).map(f).collect::<Vec<_>>())
    };
    ModelSummary {
        model: model.to_string(),
        sdr_db: pick(|r| r.sdr_db),
        sir_db: pick(|r| r.sir_db),
        sar_db: pick(|r| r.sar_db),
    }
}

/// Paired Wilcoxon tests of `a` against `b` on each metric, over the songs
/// both have, Bonferroni-corrected for the number of tests run.
pub fn compare(rows: &[MetricRow], a: &str, b: &str) -> Vec<Comparison> {
    let metrics: [(&str, fn(&MetricRow) -> f64); 3] = [
        ("sdr_db", |r| r.sdr_db),
        ("sir_db", |r| r.sir_db),
        ("sar_db", |r| r.sar_db),
    ];
    let mut out: Vec<Comparison> = metrics
        .iter()
        .map(|(name, f)| {
            let mut xa = Vec::new();
            let mut xb = Vec::new();
            for ra in rows.iter().filter(|r| r.model == a) {
                if let Some(rb) = rows.iter().find(|r| r.model == b && r.song_id == ra.song_id) {
                    xa.push(f(ra));
                    xb.push(f(rb));
                }
            }
            let mut c = Comparison {
                a: a.to_string(),
                b: b.to_string(),
                metric: name.to_string(),
                statistic: None,
                p_value: None,
                p_bonferroni: None,
                n_effective: None,
                method: None,
                skipped: None,
            };
            match wilcoxon_signed_rank(&xa, &xb) {
                Ok(r) => {
                    c.statistic = Some(r.statistic);
                    c.p_value = Some(r.p_value);
                    c.n_effective = Some(r.n_effective);
                    c.method = Some(r.method);
                }
                Err(e) => c.skipped = Some(e.to_string()),
            }
            c
        })
        .collect();
    let ran: Vec<f64> = out.iter().filter_map(|c| c.p_value).collect();
    let corrected = bonferroni(&ran, ran.len());
    let mut it = corrected.into_iter();
    for c in out.iter_mut().filter(|c| c.p_value.is_some()) {
        c.p_bonferroni = it.next();
    }
    out
}

fn fit(mut x: Vec<f64>, len: usize) -> Vec<f64> {
    x.resize(len, 0.0);
    x
}

/// Scores `<estimates_dir>/<song_id>.wav` for every test song against its
/// vocal stem, with the accompaniment (mixture minus vocal) as interferer.
/// With `baseline`, the mixture itself is scored too under
/// [`MIXTURE_LABEL`] and compared with the model.
pub fn evaluate(
    manifest: &DatasetManifest,
    estimates_dir: &Path,
    model: &str,
    filter_len: usize,
    baseline: bool,
) -> Result<EvalReport> {
    let songs = manifest.require(Split::Test)?;
    let results: Vec<Result<(Vec<MetricRow>, Option<PathBuf>)>> = songs
        .par_iter()
        .map(|entry| {
            let id = entry.song_id();
            let vocal = load_clip(&manifest.resolve(&entry.vocal_stem_path))?;
            let mix = load_clip(&manifest.resolve(&entry.mixture_path))?;
            let len = vocal.len();
            let mix = fit(mix.samples, len);
            let accomp: Vec<f64> = mix.iter().zip(&vocal.samples).map(|(m, v)| m - v).collect();
            let refs: [&[f64]; 2] = [&vocal.samples, &accomp];
            let mut rows = Vec::new();
            if baseline {
                rows.push(MetricRow::new(
                    id.clone(),
                    MIXTURE_LABEL,
                    bss_eval(&mix, &refs, 0, filter_len)?,
                ));
            }
            let path = estimates_dir.join(format!("{id}.wav"));
            if !path.exists() {
                log::warn!("missing estimate {}", path.display());
                return Ok((rows, Some(path)));
            }
            let est = load_clip(&path)?;
            if est.len() != len {
                log::warn!("{}: {} samples, reference has {len}", path.display(), est.len());
            }
            let est = fit(est.samples, len);
            let r = bss_eval(&est, &refs, 0, filter_len).map_err(|e| e.in_node(&id))?;
            rows.push(MetricRow::new(id, model, r));
            Ok((rows, None))
        })
        .collect();
    let mut rows = Vec::new();
    let mut missing = Vec::new();
    for r in results {
        let (mut r, miss) = r?;
        rows.append(&mut r);
        missing.extend(miss);
    }
    let mut summaries = vec![summarise(&rows, model)];
    let mut comparisons = Vec::new();
    if baseline {
        summaries.push(summarise(&rows, MIXTURE_LABEL));
        comparisons = compare(&rows, model, MIXTURE_LABEL);
    }
    Ok(EvalReport {
        rows,
        summaries,
        comparisons,
        missing,
    })
}

pub fn write_csv(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "song_id,model,sdr_db,sir_db,sar_db,capped")?;
    for r in rows {
        writeln!(
            f,
            "{},{},{:.4},{:.4},{:.4},{}",
            r.song_id, r.model, r.sdr_db, r.sir_db, r.sar_db, r.capped
        )?;
    }
    Ok(())
}

/// Writes `metrics.csv` and `summary.json` into `out_dir`.
pub fn cmd_evaluate(
    manifest: &DatasetManifest,
    estimates_dir: &Path,
    model: &str,
    filter_len: usize,
    baseline: bool,
    out_dir: &Path,
) -> Result<EvalReport> {
    if model == MIXTURE_LABEL && baseline {
        return Err(Error::invalid(
            "evaluate",
            "model label clashes with the baseline label",
        ));
    }
    let report = evaluate(manifest, estimates_dir, model, filter_len, baseline)?;
    fs::create_dir_all(out_dir)?;
    write_csv(&out_dir.join("metrics.csv"), &report.rows)?;
    let summary = serde_json::json!({
        "summaries": report.summaries,
        "comparisons": report.comparisons,
        "missing": report.missing,
    });
    fs::write(out_dir.join("summary.json"), serde_json::to_vec_pretty(&summary)?)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartiles_interpolate() {
        let q = quartiles(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((q.q1, q.median, q.q3, q.n), (1.75, 2.5, 3.25, 4));
        assert!(quartiles(&[]).is_none());
    }

    #[test]
    fn self_comparison_is_skipped() {
        let rows: Vec<MetricRow> = (0..6)
            .map(|i| MetricRow {
                song_id: format!("s{i}"),
                model: "m".into(),
                sdr_db: i as f64,
                sir_db: 1.0,
                sar_db: 2.0,
                capped: false,
            })
            .collect();
        let c = compare(&rows, "m", "m");
        assert!(c.iter().all(|c| c.skipped.is_some() && c.p_value.is_none()));
    }
}
