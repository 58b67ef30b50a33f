//! Report serialization: one pretty JSON file or a set of CSV tables.

use std::path::{Path, PathBuf};

use super::config::ExperimentKind;
use super::run::ScanReport;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

/// Row of CSV fields, each rendered with `Display`.
macro_rules! row {
    ($($x:expr),* $(,)?) => { vec![$($x.to_string()),*] };
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(vec![]);
    // writing to memory cannot fail
    w.write_record(header).expect("in-memory csv");
    for r in rows {
        w.write_record(&r).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 fields")
}

pub fn to_json(report: &ScanReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

/// Named CSV tables for a report. Tables with no rows keep their header.
pub fn csv_tables(report: &ScanReport) -> Vec<(String, String)> {
    let mut out = vec![
        (
            "checks.csv".to_string(),
            table(
                &["name", "value", "threshold", "pass"],
                report.checks.iter().map(|c| row![c.name, opt(c.value), c.threshold, c.pass]),
            ),
        ),
        ("failures.csv".to_string(), table(&["cell", "error"], report.failures.iter().map(|f| row![f.cell, f.error]))),
    ];
    match report.kind {
        ExperimentKind::IdentitySuite => {
            out.push((
                "identities.csv".into(),
                table(
                    &[
                        "index",
                        "n",
                        "z_re",
                        "z_im",
                        "lr",
                        "lr_rewritten",
                        "rl",
                        "symmetric",
                        "shift_identity",
                        "ratio",
                        "triviality",
                        "resolvent_c",
                        "hs_ratio",
                    ],
                    report.identities.iter().map(|c| {
                        row![
                            c.index,
                            c.n,
                            c.z.re,
                            c.z.im,
                            c.variant_rel[0],
                            c.variant_rel[1],
                            c.variant_rel[2],
                            c.variant_rel[3],
                            c.shift_identity_residual,
                            c.ratio_rel,
                            c.triviality_err,
                            c.resolvent_c,
                            opt(c.hs_ratio)
                        ]
                    }),
                ),
            ));
            out.push((
                "limit.csv".into(),
                table(
                    &["potential", "z_re", "z_im", "n", "ratio_re", "ratio_im", "whole_re", "whole_im", "gap"],
                    report.limits.iter().flat_map(|c| {
                        c.half_widths.iter().enumerate().map(move |(i, n)| {
                            row![
                                c.potential,
                                c.z.re,
                                c.z.im,
                                n,
                                c.ratios[i].re,
                                c.ratios[i].im,
                                c.whole_line.re,
                                c.whole_line.im,
                                c.gaps[i]
                            ]
                        })
                    }),
                ),
            ));
        }
        ExperimentKind::RouteAgreement => {
            // potential-major, one row per route
            out.push((
                "routes.csv".into(),
                table(
                    &["z_re", "z_im", "a_re", "a_im", "b_re", "b_im", "route"],
                    report.routes.iter().flat_map(|c| {
                        [
                            row![c.z.re, c.z.im, c.jost.re, c.jost.im, c.b_jost.re, c.b_jost.im, "JOST"],
                            row![c.z.re, c.z.im, c.det.re, c.det.im, "", "", "DET"],
                            row![c.z.re, c.z.im, c.formula.re, c.formula.im, "", "", "FORMULA"],
                        ]
                    }),
                ),
            ));
            out.push((
                "real_band.csv".into(),
                table(
                    &[
                        "potential",
                        "min_abs_a",
                        "wronskian",
                        "m_side_raw",
                        "m_side_extrapolated",
                        "offset_sensitivity",
                        "raw_offset_sensitivity",
                    ],
                    report.real_band.iter().map(|c| {
                        row![
                            c.potential,
                            c.min_abs_a,
                            c.max_wronskian_err,
                            c.m_side_raw,
                            c.m_side_extrapolated,
                            c.offset_sensitivity,
                            c.raw_offset_sensitivity
                        ]
                    }),
                ),
            ));
        }
        ExperimentKind::EntropyScan => {
            out.push((
                "entropy.csv".into(),
                table(
                    &["N", "interval", "a", "b", "panels", "entropy", "refinement_change"],
                    report.entropy.iter().map(|c| {
                        row![c.n, c.interval, c.a, c.b, c.panels, opt(c.entropy), opt(c.refinement_change)]
                    }),
                ),
            ));
            out.push((
                "entropy_summary.csv".into(),
                table(
                    &["interval", "a", "b", "min_entropy", "final_decrement"],
                    report
                        .entropy_summary
                        .iter()
                        .map(|s| row![s.interval, s.a, s.b, opt(s.min_entropy), opt(s.final_decrement)]),
                ),
            ));
            out.push((
                "cut_curve.csv".into(),
                table(
                    &["cut", "interval", "entropy"],
                    report.cut_curve.iter().map(|c| row![c.cut, c.interval, opt(c.entropy)]),
                ),
            ));
        }
        ExperimentKind::TransferDiag => {
            out.push((
                "transfer_summary.csv".into(),
                table(
                    &[
                        "z_re",
                        "z_im",
                        "det_err",
                        "eig_product_err",
                        "diag_err",
                        "w_route_err",
                        "alpha_sum_err",
                        "step_residual",
                        "reconstruction_residual",
                        "split_residual",
                        "w_l2",
                        "max_abs_phi",
                        "min_abs_phi",
                        "max_abs_nu",
                        "upsilon_alpha",
                        "upsilon_delta",
                        "growth_rate_min",
                        "growth_rate_max",
                        "growth_c",
                        "jost_c",
                    ],
                    report.transfer.iter().map(|r| {
                        row![
                            r.z.re,
                            r.z.im,
                            r.max_det_err,
                            r.max_eig_product_err,
                            r.max_diag_err,
                            r.max_w_route_err,
                            r.max_alpha_sum_err,
                            r.step_residual,
                            r.reconstruction_residual,
                            r.split_residual,
                            r.w_l2,
                            r.max_abs_phi,
                            r.min_abs_phi,
                            r.max_abs_nu,
                            r.upsilon_alpha,
                            r.upsilon_delta,
                            r.growth_rate_min,
                            r.growth_rate_max,
                            r.growth_c,
                            r.jost_c
                        ]
                    }),
                ),
            ));
            out.push((
                "modified_jost.csv".into(),
                table(
                    &["z_re", "z_im", "N", "ln_abs_f"],
                    report
                        .transfer
                        .iter()
                        .flat_map(|r| r.jost.iter().map(move |j| row![r.z.re, r.z.im, j.n, j.ln_abs_f])),
                ),
            ));
            for (i, r) in report.transfer.iter().enumerate() {
                out.push((
                    format!("transfer_trace_{i}.csv"),
                    table(
                        &["m", "ln_abs_s", "ln_abs_p", "abs_phi", "abs_nu", "w_norm"],
                        r.trace.iter().map(|t| row![t.m, t.ln_abs_s, t.ln_abs_p, t.abs_phi, t.abs_nu, t.w_norm]),
                    ),
                ));
            }
        }
        ExperimentKind::Density => {
            out.push((
                "density.csv".into(),
                table(
                    &["z", "rho_prime", "N"],
                    report.density.iter().flat_map(|d| {
                        d.samples.grid.iter().zip(&d.samples.rho_prime).map(move |(x, r)| row![x, r, d.samples.n_trunc])
                    }),
                ),
            ));
        }
    }
    out
}

/// Writes the report under `dir` and returns the files written.
pub fn write_report(report: &ScanReport, dir: &Path, format: Format) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })?;
    let files = match format {
        Format::Json => vec![("report.json".to_string(), to_json(report)?)],
        Format::Csv => csv_tables(report),
    };
    let mut written = vec![];
    for (name, text) in files {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|source| Error::Io { path: path.clone(), source })?;
        written.push(path);
    }
    Ok(written)
}
