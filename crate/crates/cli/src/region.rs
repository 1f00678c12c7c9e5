//! `region-map` and `expansions`.

use rayon::prelude::*;
use strata::eigen::{expansion_sample, Expansion};
use strata::hyperbolicity::{classify_with_tol, Regime};
use strata::model::{NondimState, PhysParams};

use crate::doc::{ExpansionsSpec, GridPoint, RegionMapSpec, SCHEMA};
use crate::format::{float, opt_float, to_csv};
use crate::CliError;

fn regime_name(r: Regime) -> &'static str {
    match r {
        Regime::Subcritical => "subcritical",
        Regime::Gap => "gap",
        Regime::Supercritical => "supercritical",
        Regime::Boundary => "boundary",
        Regime::Degenerate => "degenerate",
    }
}

/// Classifies one grid point through its `h1 = 1`, `g = 1` representative.
fn row(spec: &RegionMapSpec, pt: GridPoint, tol: f64) -> Vec<String> {
    let state = PhysParams::new(pt.gamma, 1.0, 0.0)
        .map_err(|e| e.to_string())
        .and_then(|p| {
            NondimState::new(pt.fx, pt.fy, pt.h)
                .map(|nd| (p, nd))
                .map_err(|e| e.to_string())
        });
    let axis = |var| match var {
        crate::doc::AxisVar::Fx => pt.fx,
        crate::doc::AxisVar::Fy => pt.fy,
        crate::doc::AxisVar::H => pt.h,
        crate::doc::AxisVar::Gamma => pt.gamma,
    };
    let mut out = vec![
        SCHEMA.to_string(),
        float(axis(spec.x.var)),
        float(axis(spec.y.var)),
    ];
    match state {
        Ok((p, nd)) => {
            let r = classify_with_tol(&nd.to_layer_state(p.g), &p, tol);
            out.push(regime_name(r.regime).into());
            out.push(r.hyperbolic_1d.as_str().into());
            out.push(r.hyperbolic_2d.as_str().into());
            out.push(r.symmetrizable.to_string());
            out.push(opt_float(r.f_crit.map(|f| f.f_minus)));
            out.push(opt_float(r.f_crit.map(|f| f.f_plus)));
            let minors = r.certificate.map(|c| c.minors);
            out.extend((0..4).map(|k| opt_float(minors.map(|m| m[k]))));
        }
        Err(_) => {
            out.extend(["degenerate", "false", "false", "false"].map(String::from));
            out.extend(std::iter::repeat_n(String::new(), 6));
        }
    }
    out
}

/// Rows run over the y axis (outer) and the x axis (inner).
pub fn region_map(spec: &RegionMapSpec, tol: f64) -> Result<String, CliError> {
    spec.validate()?;
    let (nx, ny) = (spec.x.n, spec.y.n);
    let rows: Vec<Vec<String>> = (0..ny)
        .into_par_iter()
        .flat_map_iter(|j| (0..nx).map(move |i| (i, j)))
        .map(|(i, j)| row(spec, spec.point(i, j), tol))
        .collect();
    let header = [
        "schema",
        spec.x.var.name(),
        spec.y.var.name(),
        "regime",
        "hyperbolic_1d",
        "hyperbolic_2d",
        "symmetrizable",
        "f_crit_minus",
        "f_crit_plus",
        "m1",
        "m2",
        "m3",
        "m4",
    ];
    Ok(to_csv(&header, &rows))
}

const EXPANSIONS: [Expansion; 4] = [
    Expansion::FcritMinusSquared,
    Expansion::FcritPlus,
    Expansion::RigidLidGap,
    Expansion::SubcriticalLambda,
];

fn ls_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// One `sample` row per gamma and a final `slope` row holding the
/// log-log order fit of each error column.
pub fn expansions(spec: &ExpansionsSpec) -> Result<String, CliError> {
    let mut rows = Vec::new();
    let mut errs: Vec<Vec<(f64, f64)>> = vec![Vec::new(); EXPANSIONS.len()];
    for &gamma in &spec.gammas {
        let eps = 1.0 - gamma;
        let mut row = vec![
            SCHEMA.to_string(),
            "sample".into(),
            float(gamma),
            float(eps),
        ];
        for (k, which) in EXPANSIONS.into_iter().enumerate() {
            let s = expansion_sample(spec.h, gamma, which)
                .map_err(|e| CliError::Input(e.to_string()))?;
            if s.error > 0.0 {
                errs[k].push((eps.ln(), s.error.ln()));
            }
            let scalar = |p: strata::eigen::Prediction| match p {
                strata::eigen::Prediction::Scalar(x) => Some(x),
                strata::eigen::Prediction::Lambdas(_) => None,
            };
            if which == Expansion::FcritMinusSquared {
                row.push(opt_float(scalar(s.oracle).map(f64::sqrt)));
            }
            if which != Expansion::SubcriticalLambda {
                row.push(opt_float(scalar(s.oracle)));
                row.push(opt_float(scalar(s.predicted)));
            }
            row.push(float(s.error));
        }
        rows.push(row);
    }
    let mut footer = vec![
        SCHEMA.to_string(),
        "slope".into(),
        String::new(),
        String::new(),
    ];
    for (k, which) in EXPANSIONS.into_iter().enumerate() {
        let blanks = match which {
            Expansion::FcritMinusSquared => 3,
            Expansion::SubcriticalLambda => 0,
            _ => 2,
        };
        footer.extend(std::iter::repeat_n(String::new(), blanks));
        footer.push(opt_float(ls_slope(&errs[k])));
    }
    rows.push(footer);
    let header = [
        "schema",
        "record",
        "gamma",
        "one_minus_gamma",
        "f_minus",
        "f_minus_sq",
        "f_minus_sq_pred",
        "f_minus_sq_err",
        "f_plus",
        "f_plus_pred",
        "f_plus_err",
        "rigid_lid_gap",
        "rigid_lid_gap_pred",
        "rigid_lid_gap_err",
        "subcritical_lambda_err",
    ];
    Ok(to_csv(&header, &rows))
}
