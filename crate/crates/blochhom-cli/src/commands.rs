//! One function per subcommand. Each writes its files, then reports any
//! failed acceptance check as an error so the exit status reflects it.

use std::f64::consts::PI;

use blochhom::bloch::{
    dispersion_diagram, eigenpair_at_gamma, find_band_gaps, gamma_x_m_gamma, uniform_1d, DispersionDiagram, GammaPair,
    Operator, SIMPLICITY_THRESHOLD,
};
use blochhom::cell::{homogenize, Homogenization};
use blochhom::convergence::{convergence_report, reference_solution, ConvergenceInputs, ReferenceConfig, SlopeFit};
use blochhom::fields::{branch_solution, effective_envelope, exact_bloch_solution, homogenized_field, EnvelopeOrder};
use blochhom::grid::{FieldKind, FieldOnGrid, Frame, Grid, PeriodicSampler};
use blochhom::medium::{build_medium, Medium};
use blochhom::source::{make_frequency, sample_source, FrequencySpec};
use blochhom::tensor::Tensor;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{PathKind, RunConfig};
use crate::output::{frame_name, num, Output};
use crate::{CliError, Context, Flags};

struct Setup {
    medium: Medium,
    op: Operator,
    pair: GammaPair,
}

fn setup(cfg: &RunConfig, out: &Output) -> Result<Setup, CliError> {
    let medium = build_medium(cfg.medium.clone()).ctx("medium")?;
    let op = Operator::new(&medium, cfg.cutoff, cfg.stiffness_rule).ctx("bloch")?;
    out.log(format!("basis of {} plane waves, {:?} stiffness rule", op.len(), cfg.stiffness_rule.resolve(&medium)));
    let pair = eigenpair_at_gamma(&op, cfg.p, SIMPLICITY_THRESHOLD).ctx("bloch")?;
    Ok(Setup { medium, op, pair })
}

fn homogenization(s: &Setup, out: &Output) -> Result<Homogenization, CliError> {
    let h = homogenize(&s.op, &s.pair).ctx("cell")?;
    out.log(format!("cell problems solved, worst stats {:?}", h.stats()));
    Ok(h)
}

#[derive(Serialize, Deserialize)]
struct CachedDiagram {
    ks: Vec<[f64; 2]>,
    omega_sq: Vec<Vec<f64>>,
    count: usize,
}

fn k_path(cfg: &RunConfig) -> Vec<[f64; 2]> {
    match cfg.path() {
        PathKind::GammaXMGamma => gamma_x_m_gamma(cfg.path_samples()),
        _ => uniform_1d(cfg.path_samples()),
    }
}

/// The dispersion diagram, reused from the cache when the medium, basis and
/// path are unchanged.
fn diagram(cfg: &RunConfig, out: &Output, op: &Operator) -> Result<DispersionDiagram, CliError> {
    let c = out.cached("dispersion", &cfg.dispersion_hash(), || {
        let d = dispersion_diagram(op, &k_path(cfg), cfg.branch_count()).ctx("bloch")?;
        Ok(CachedDiagram { ks: d.ks, omega_sq: d.omega_sq, count: d.count })
    })?;
    Ok(DispersionDiagram { ks: c.ks, omega_sq: c.omega_sq, count: c.count })
}

fn frequencies(cfg: &RunConfig, pair: &GammaPair, diagram: &DispersionDiagram) -> Result<Vec<FrequencySpec>, CliError> {
    cfg.eps
        .iter()
        .map(|&e| make_frequency(pair, diagram, cfg.sigma, cfg.omega_hat, e).ctx("source"))
        .collect()
}

fn omega(w: f64) -> f64 {
    w.max(0.0).sqrt()
}

pub fn dispersion(cfg: &RunConfig, out: &Output, flags: &Flags) -> Result<(), CliError> {
    let medium = build_medium(cfg.medium.clone()).ctx("medium")?;
    let op = Operator::new(&medium, cfg.cutoff, cfg.stiffness_rule).ctx("bloch")?;
    let diag = diagram(cfg, out, &op)?;
    let bg = medium.background();
    let (k0, w0) = if flags.normalized { (PI, (bg.g / bg.rho).sqrt()) } else { (1.0, 1.0) };
    let mut rows = Vec::with_capacity(diag.ks.len() * diag.count);
    for (i, (k, w)) in diag.ks.iter().zip(&diag.omega_sq).enumerate() {
        for (m, &wm) in w.iter().enumerate() {
            rows.push(vec![i.to_string(), num(k[0] / k0), num(k[1] / k0), m.to_string(), num(omega(wm) / w0)]);
        }
    }
    let note = if flags.normalized {
        format!("normalized: k / pi, omega / sqrt(G1/rho1) with sqrt(G1/rho1) = {}", num(w0))
    } else {
        "unnormalized".to_string()
    };
    out.write_csv("dispersion.csv", &[note], &["k_index", "k_1", "k_2", "m", "omega"], &rows)?;
    Ok(())
}

pub fn gaps(cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    let medium = build_medium(cfg.medium.clone()).ctx("medium")?;
    let op = Operator::new(&medium, cfg.cutoff, cfg.stiffness_rule).ctx("bloch")?;
    let diag = diagram(cfg, out, &op)?;
    let found = find_band_gaps(&diag);
    let bg = medium.background();
    let w0 = (bg.g / bg.rho).sqrt();
    let list: Vec<Value> = found
        .iter()
        .map(|g| {
            json!({
                "lower_branch": g.lower_branch,
                "omega_sq": [g.lo, g.hi],
                "omega": [omega(g.lo), omega(g.hi)],
                "omega_normalized": [omega(g.lo) / w0, omega(g.hi) / w0],
            })
        })
        .collect();
    out.write_json(
        "gaps.json",
        json!({
            "branches": diag.count,
            "k_samples": diag.ks.len(),
            "count": found.len(),
            "expected": cfg.gaps.expected,
            "gaps": list,
        }),
    )?;
    match cfg.gaps.expected {
        Some(n) if n != found.len() => Err(CliError::Acceptance(format!("found {} complete gaps, expected {n}", found.len()))),
        _ => Ok(()),
    }
}

fn multi_indices(d: usize, rank: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..rank {
        out = out.into_iter().flat_map(|p: Vec<usize>| (0..d).map(move |a| [p.clone(), vec![a]].concat())).collect();
    }
    out
}

fn index_label(idx: &[usize]) -> String {
    idx.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join("")
}

pub fn cell(cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    let s = setup(cfg, out)?;
    let h = homogenization(&s, out)?;
    let d = cfg.d();
    let n = cfg.cell_samples();
    let step = 1.0 / n as f64;
    let grid = Grid {
        d,
        origin: [0.0, 0.0],
        spacing: [step, if d == 2 { step } else { 0.0 }],
        counts: [n, if d == 2 { n } else { 1 }],
        frame: Frame::Fast,
    };
    let sampler = PeriodicSampler::new(&grid, &s.op.basis).ctx("cell")?;
    let mut functions: Vec<(String, String, &[_])> = vec![("phi".into(), String::new(), &h.pair.phi)];
    for (name, chi) in [("chi1", &h.chi1), ("chi2", &h.chi2), ("chi3", &h.chi3)] {
        for idx in multi_indices(d, chi.rank) {
            functions.push((name.into(), index_label(&idx), chi.get(&idx)));
        }
    }
    let mut rows = Vec::new();
    for (name, label, coeffs) in &functions {
        let values = sampler.synthesize(&s.op.basis, coeffs);
        for (i, v) in values.iter().enumerate() {
            let x = grid.point(i);
            let mut r = vec![name.clone(), label.clone(), num(x[0])];
            if d == 2 {
                r.push(num(x[1]));
            }
            r.push(num(v.re));
            r.push(num(v.im));
            rows.push(r);
        }
    }
    let header: &[&str] = if d == 1 { &["function", "index", "x1", "re", "im"] } else { &["function", "index", "x1", "x2", "re", "im"] };
    out.write_csv("cell_functions.csv", &[format!("p={} samples_per_axis={n}", cfg.p)], header, &rows)?;
    let stats = h.stats();
    out.write_json(
        "cell.json",
        json!({
            "p": s.pair.p,
            "omega0_sq": s.pair.omega_sq,
            "simple": s.pair.simple,
            "separation": s.pair.separation,
            "orthonormality": s.pair.orthonormality,
            "basis_size": s.op.len(),
            "functions": functions.iter().map(|(n, l, _)| if l.is_empty() { n.clone() } else { format!("{n}_{l}") }).collect::<Vec<_>>(),
            "solve_stats": {
                "compatibility": stats.compatibility,
                "constraint": stats.constraint,
                "residual": stats.residual,
                "within_tolerance": stats.within_tolerance(),
            },
        }),
    )?;
    Ok(())
}

fn tensor_json(t: &Tensor) -> Value {
    let entries: Vec<Value> = (0..t.data.len())
        .map(|flat| {
            let v = t.data[flat];
            json!({ "index": t.unflatten(flat), "re": v.re, "im": v.im })
        })
        .collect();
    json!({ "rank": t.rank, "d": t.d, "norm": t.norm(), "entries": entries })
}

pub fn effective(cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    let s = setup(cfg, out)?;
    let h = homogenization(&s, out)?;
    let c = &h.coefficients;
    let (r1, m1, r2) = c.diagnostic_norms();
    out.write_json(
        "effective.json",
        json!({
            "p": c.p,
            "omega0_sq": c.omega0_sq,
            "alpha": c.alpha,
            "rho0": c.rho0,
            "mu0": tensor_json(&c.mu0),
            "mu2": tensor_json(&c.mu2),
            "mu2_asymmetry": c.mu2_asymmetry,
            "c1": tensor_json(&c.c1),
            "diagnostics": {
                "rho1": tensor_json(&c.rho1),
                "mu1": tensor_json(&c.mu1),
                "rho2": tensor_json(&c.rho2),
                "norms": { "rho1": r1, "mu1": m1, "rho2": r2 },
                "tolerances_met": c.tolerances_met,
            },
        }),
    )?;
    if !c.tolerances_met {
        out.log("diagnostic tensors exceed tolerance; expected for sharp media, which stall the corrector series");
    }
    Ok(())
}

fn file_stem(kind: FieldKind, eps: f64) -> String {
    format!("field_{}_eps{}", kind.name(), num(eps))
}

pub fn fields(cfg: &RunConfig, out: &Output, flags: &Flags) -> Result<(), CliError> {
    let d = cfg.d();
    if flags.line.is_some() && d != 2 {
        return Err(CliError::Validation("--line needs a 2D medium".into()));
    }
    let s = setup(cfg, out)?;
    let diag = diagram(cfg, out, &s.op)?;
    let freqs = frequencies(cfg, &s.pair, &diag)?;
    let source = cfg.source_spec()?;
    let quad = cfg.wavenumber_quadrature()?;
    let kinds = &cfg.fields.kinds;
    let needs_hom = kinds.iter().any(|k| matches!(k, FieldKind::W0 | FieldKind::W2 | FieldKind::U0 | FieldKind::U1 | FieldKind::U2));
    let hom = if needs_hom { Some(homogenization(&s, out)?) } else { None };
    let mut summary = Vec::new();
    for freq in &freqs {
        let hw = cfg.fields.half_width.unwrap_or_else(|| cfg.reference.half_width(freq.eps));
        let fast = Grid::cell_centered(d, hw, cfg.fields.n_cell).ctx("fields")?;
        let slow = fast.relabel(freq.eps, Frame::Slow);
        let mut f_src: Option<FieldOnGrid> = None;
        let mut src = || -> Result<FieldOnGrid, CliError> {
            if f_src.is_none() {
                f_src = Some(sample_source(&s.medium, &s.op, &s.pair, &source, freq, &fast).ctx("source")?);
            }
            Ok(f_src.clone().unwrap())
        };
        for &kind in kinds {
            out.log(format!("eps {}: {}", freq.eps, kind.name()));
            let mut extra = Vec::new();
            let field = match kind {
                FieldKind::Source => src()?,
                FieldKind::Exact => {
                    let syn = exact_bloch_solution(&s.op, &s.pair, freq, &source, &quad, cfg.mode_count(), &fast).ctx("fields")?;
                    extra.push(format!("modes={} tail={:e}", cfg.mode_count(), syn.tail));
                    syn.field
                }
                FieldKind::Branch => branch_solution(&s.op, &s.pair, freq, &source, &quad, &fast).ctx("fields")?.field,
                FieldKind::Reference => {
                    let rc = ReferenceConfig { n_dom: Some(hw), n_cell: cfg.fields.n_cell, ..cfg.reference };
                    let r = reference_solution(&s.medium, freq, &src()?, &rc).ctx("convergence")?;
                    extra.push(format!("decay_ratio={:e} residual={:e}", r.decay_ratio, r.residual));
                    r.field
                }
                FieldKind::W0 | FieldKind::W2 => {
                    let order = if kind == FieldKind::W0 { EnvelopeOrder::Zero } else { EnvelopeOrder::Two };
                    let exp = hom.as_ref().unwrap().coefficients.expansion();
                    effective_envelope(&exp, freq, &source, &quad, order, &[], &slow).ctx("fields")?
                }
                FieldKind::U0 | FieldKind::U1 | FieldKind::U2 => {
                    let order = match kind {
                        FieldKind::U0 => 0,
                        FieldKind::U1 => 1,
                        _ => 2,
                    };
                    homogenized_field(hom.as_ref().unwrap(), &s.op, freq, &source, &quad, order, &slow).ctx("fields")?
                }
            };
            let stem = file_stem(kind, freq.eps);
            let mut files = vec![out.write_field_csv(&format!("{stem}.csv"), &field, &extra)?];
            if cfg.fields.binary {
                files.push(out.write_field_binary(&format!("{stem}.bin"), &field)?);
            }
            if let Some(y0) = flags.line {
                // y0 is a slow coordinate; fast-frame fields sit at y0 / eps.
                let y = if field.grid.frame == Frame::Fast { y0 / freq.eps } else { y0 };
                let t = field.transect(y).ctx("fields")?;
                let mut e = extra.clone();
                e.push(format!("transect y0={} (slow), row nearest x2={}", num(y0), num(y)));
                files.push(out.write_field_csv(&format!("{stem}_line.csv"), &t, &e)?);
            }
            summary.push(json!({
                "eps": freq.eps,
                "field": kind.name(),
                "frame": frame_name(field.grid.frame),
                "samples": field.grid.counts,
                "max_abs": field.max_abs(),
                "max_imag": field.max_imag(),
                "files": files.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect::<Vec<_>>(),
            }));
        }
    }
    out.write_json("fields.json", json!({ "omega_sq": freqs.iter().map(|f| f.omega_sq()).collect::<Vec<_>>(), "fields": summary }))?;
    Ok(())
}

fn slope_json(fits: &[SlopeFit]) -> Value {
    json!(fits.iter().enumerate().map(|(m, f)| json!({ "order": m, "slope": f.slope, "intercept": f.intercept, "residual": f.residual })).collect::<Vec<_>>())
}

pub fn converge(cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    if cfg.eps.len() < 3 {
        return Err(CliError::Validation("converge: slope fits need at least 3 eps values".into()));
    }
    let s = setup(cfg, out)?;
    let diag = diagram(cfg, out, &s.op)?;
    let freqs = frequencies(cfg, &s.pair, &diag)?;
    let hom = homogenization(&s, out)?;
    let source = cfg.source_spec()?;
    let quad = cfg.wavenumber_quadrature()?;
    let inputs = ConvergenceInputs {
        medium: &s.medium,
        op: &s.op,
        pair: &s.pair,
        hom: &hom,
        hom_op: &s.op,
        source: &source,
        quad: &quad,
        sigma: cfg.sigma,
        omega_hat: cfg.omega_hat,
        reference: cfg.reference,
        m_eval: cfg.converge.m_eval,
        exact_modes: cfg.exact_modes(),
    };
    let report = convergence_report(&inputs, &freqs).ctx("convergence")?;

    let bands = cfg.converge.bands;
    let mut violations = Vec::new();
    for (m, (fit, band)) in report.slopes.iter().zip(&bands).enumerate() {
        if !(fit.slope >= band[0] && fit.slope <= band[1]) {
            violations.push(format!("order {m} slope {:.3} outside [{}, {}]", fit.slope, band[0], band[1]));
        }
    }
    for r in &report.rows {
        if !(r.errors[2] < r.errors[1] && r.errors[1] < r.errors[0]) {
            violations.push(format!("errors not ordered e2 < e1 < e0 at eps {}", r.eps));
        }
    }
    if let Some(vs) = &report.slopes_vs_exact {
        for (m, (a, b)) in report.slopes.iter().zip(vs).enumerate() {
            if (a.slope - b.slope).abs() > cfg.converge.max_slope_disagreement {
                violations.push(format!("order {m}: slope {:.3} against the reference, {:.3} against the exact solution", a.slope, b.slope));
            }
        }
    }

    let mut rows = Vec::new();
    for r in &report.rows {
        for m in 0..3 {
            rows.push(vec![num(r.eps), m.to_string(), num(r.errors[m]), "reference".into()]);
        }
        if let Some(e) = r.errors_vs_exact {
            for (m, v) in e.iter().enumerate() {
                rows.push(vec![num(r.eps), m.to_string(), num(*v), "exact".into()]);
            }
        }
    }
    let mut slope_rows = Vec::new();
    for (against, fits) in [("reference", Some(&report.slopes)), ("exact", report.slopes_vs_exact.as_ref())] {
        for (m, f) in fits.into_iter().flatten().enumerate() {
            slope_rows.push(vec![m.to_string(), num(f.slope), num(f.intercept), num(f.residual), against.to_string()]);
        }
    }
    out.write_csv_sections(
        "report.csv",
        &[format!("p={} sigma={} omega_hat={}", cfg.p, num(cfg.sigma), num(cfg.omega_hat))],
        &[
            (None, &["eps", "order", "error", "against"][..], rows),
            (Some("slopes"), &["order", "slope", "intercept", "residual", "against"][..], slope_rows),
        ],
    )?;
    out.write_json(
        "report.json",
        json!({
            "rows": report.rows,
            "slopes": slope_json(&report.slopes),
            "slopes_vs_exact": report.slopes_vs_exact.as_deref().map(slope_json),
            "bands": bands,
            "max_slope_disagreement": cfg.converge.max_slope_disagreement,
            "violations": violations,
            "pass": violations.is_empty(),
        }),
    )?;
    if violations.is_empty() {
        Ok(())
    } else {
        Err(CliError::Acceptance(violations.join("; ")))
    }
}
