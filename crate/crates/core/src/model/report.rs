use std::fmt::Write;

use super::params::count_params;
use super::spec::{LayerKind, ModelKind, ModelSpec};
use crate::dsp::{BandSpec, StftConfig, SAMPLE_RATE};
use crate::error::Result;
use crate::tensor::Shape;

fn dims(s: Shape) -> String {
    format!("{}x{}x{}", s.channels, s.time, s.freq)
}

/// Human-readable layer table with parameter totals; the multi-band model
/// also lists its bands with their edge frequencies.
pub fn describe(spec: &ModelSpec) -> Result<String> {
    let shapes = spec.shapes(1)?;
    let mut out = String::new();
    let _ = writeln!(out, "{} ({})", spec.kind.title(), spec.kind.id());
    let _ = writeln!(
        out,
        "{:<12} {:<13} {:>7} {:>11} {:>7} {:>14} {:>14} {:>10}",
        "layer", "kind", "filters", "kernel", "stride", "in", "out", "params"
    );
    for (i, layer) in spec.layers.iter().enumerate() {
        if layer.kind == LayerKind::Input {
            continue;
        }
        let input = layer
            .inputs
            .iter()
            .map(|&j| dims(shapes[j]))
            .collect::<Vec<_>>()
            .join("+");
        let (filters, kernel, stride) = match &layer.kind {
            LayerKind::Conv(p) | LayerKind::ConvTranspose(p) => (
                p.out_channels.to_string(),
                format!("({},{})", p.kernel_time, p.kernel_freq),
                format!("({},{})", p.stride_time, p.stride_freq),
            ),
            LayerKind::Dense { outputs, .. } => (outputs.to_string(), "-".into(), "-".into()),
            _ => ("-".into(), "-".into(), "-".into()),
        };
        let (trainable, stats) = layer.kind.param_counts();
        let _ = writeln!(
            out,
            "{:<12} {:<13} {:>7} {:>11} {:>7} {:>14} {:>14} {:>10}",
            layer.name,
            layer.kind.label(),
            filters,
            kernel,
            stride,
            input,
            dims(shapes[i]),
            trainable + stats
        );
    }
    let report = count_params(spec);
    let _ = writeln!(
        out,
        "total parameters: {} (trainable {}, batch-norm statistics {})",
        report.total, report.trainable, report.statistics
    );
    if spec.kind == ModelKind::MbrFcn {
        let bands: Vec<&BandSpec> = spec
            .layers
            .iter()
            .filter_map(|l| match &l.kind {
                LayerKind::SliceBand(b) => Some(b),
                _ => None,
            })
            .collect();
        let _ = writeln!(out, "bands (bin from, bin to, Hz from, Hz to, stride):");
        for b in bands {
            let _ = writeln!(out, "  {}", band_row(b));
        }
    }
    Ok(out)
}

/// `"<name>: <from> <to> <hz from> <hz to> stride <s>"`, Hz rounded and
/// capped at Nyquist.
pub fn band_row(b: &BandSpec) -> String {
    let (lo, hi) = b.hz_range(&StftConfig::default(), SAMPLE_RATE);
    format!(
        "{}: {} {} {} {} stride {}",
        b.name,
        b.bin_from,
        b.bin_to,
        lo.round(),
        hi.round(),
        b.stride_freq
    )
}
