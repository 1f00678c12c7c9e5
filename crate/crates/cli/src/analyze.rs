//! `analyze` and `eigen`.

use std::f64::consts::PI;

use serde::Serialize;
use strata::eigen::{
    augmented_eigenvectors, augmented_spectrum, characteristic_fields,
    characteristic_fields_augmented, eigen_decomposition, is_diagonalizable, spectrum,
    EigenDecomposition, FieldReport, LabeledSpectrum,
};
use strata::hyperbolicity::{
    classify_with_tol, symmetrizable_by_sylvester, CriticalFroude, Regime,
};
use strata::model::NondimState;
use strata::polynomial::RootCertificate;
use strata::TriState;

use crate::doc::{Resolved, StateDocument};
use crate::CliError;

/// `theta_j = j pi / n`: the symbol at `theta + pi` is the negated one.
pub fn theta_grid(n: usize) -> Vec<f64> {
    (0..n).map(|j| PI * j as f64 / n as f64).collect()
}

#[derive(Debug, Serialize)]
pub struct Eigenvalue {
    pub label: String,
    pub re: f64,
    pub im: f64,
}

fn eigenvalues(sp: &LabeledSpectrum) -> Vec<Eigenvalue> {
    sp.labels()
        .iter()
        .zip(&sp.values)
        .map(|(l, z)| Eigenvalue {
            label: l.name(sp.augmented),
            re: z.re,
            im: z.im,
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct Direction {
    theta: f64,
    real_spectrum: TriState,
    max_imag: Option<f64>,
    diagonalizable: TriState,
}

/// Classification with every verdict written as a tri-state string.
#[derive(Debug, Serialize)]
struct Classification {
    regime: Regime,
    hyperbolic_1d: TriState,
    hyperbolic_2d: TriState,
    symmetrizable: TriState,
    symmetrizable_sylvester: TriState,
    reasons: Vec<String>,
    nondim: Option<NondimState>,
    f_crit: Option<CriticalFroude>,
    certificate: Option<RootCertificate>,
}

#[derive(Debug, Serialize)]
struct Analysis {
    augmented: bool,
    #[serde(flatten)]
    classification: Classification,
    /// Spectrum of the x-direction symbol.
    spectrum: Option<Vec<Eigenvalue>>,
    /// Conjunction over the sampled directions.
    diagonalizable: TriState,
    directions: Vec<Direction>,
    fields: Option<Vec<FieldReport>>,
    errors: Vec<String>,
}

#[derive(Debug, Serialize)]
struct AnalyzeOutput<'a> {
    #[serde(flatten)]
    input: &'a StateDocument,
    analysis: Analysis,
}

pub fn analyze(
    doc: &StateDocument,
    tol: f64,
    theta_samples: usize,
    strict: bool,
) -> Result<String, CliError> {
    let r = doc.resolve()?;
    let (s, p) = (&r.layer, &r.params);
    let classification = classify_with_tol(s, p, tol);
    if strict && classification.regime == Regime::Degenerate {
        return Err(CliError::Guard(format!(
            "degenerate state: {}",
            classification.reasons.join(", ")
        )));
    }
    let mut errors = Vec::new();
    let spectrum_x = match r.augmented {
        Some(v) => augmented_spectrum(&v, p, 0.0),
        None => spectrum(s, p, 0.0),
    };
    let spectrum_x = spectrum_x
        .map(|sp| eigenvalues(&sp))
        .map_err(|e| errors.push(format!("spectrum: {e}")))
        .ok();

    let directions: Vec<Direction> = theta_grid(theta_samples)
        .into_iter()
        .map(|theta| {
            let sp = spectrum(s, p, theta).ok();
            Direction {
                theta,
                real_spectrum: sp.as_ref().map_or(TriState::False, |x| x.real()),
                max_imag: sp.as_ref().map(|x| x.max_imag()),
                diagonalizable: is_diagonalizable(s, p, theta),
            }
        })
        .collect();
    let diagonalizable = directions
        .iter()
        .fold(TriState::True, |acc, d| acc.and(d.diagonalizable));

    let fields = match r.augmented {
        Some(v) => characteristic_fields_augmented(&v, p),
        None => characteristic_fields(s, p),
    };
    let fields = fields.map_err(|e| errors.push(format!("fields: {e}"))).ok();

    let classification = Classification {
        regime: classification.regime,
        hyperbolic_1d: classification.hyperbolic_1d,
        hyperbolic_2d: classification.hyperbolic_2d,
        symmetrizable: classification.symmetrizable.into(),
        symmetrizable_sylvester: symmetrizable_by_sylvester(s, p, theta_samples).into(),
        reasons: classification.reasons,
        nondim: classification.nondim,
        f_crit: classification.f_crit,
        certificate: classification.certificate,
    };
    let analysis = Analysis {
        augmented: r.augmented.is_some(),
        classification,
        spectrum: spectrum_x,
        diagonalizable,
        directions,
        fields,
        errors,
    };
    Ok(crate::format::to_json(&AnalyzeOutput {
        input: doc,
        analysis,
    }))
}

#[derive(Debug, Serialize)]
struct EigenDirection {
    theta: f64,
    eigenvalues: Option<Vec<Eigenvalue>>,
    /// Right eigenvectors, one per label.
    right: Option<Vec<Vec<f64>>>,
    left: Option<Vec<Vec<f64>>>,
    residuals: Option<Vec<f64>>,
    max_relative_residual: Option<f64>,
    diagonalizable: TriState,
    numeric_fallback: Vec<String>,
    error: Option<String>,
}

#[derive(Debug, Serialize)]
struct EigenOutput {
    schema: &'static str,
    augmented: bool,
    directions: Vec<EigenDirection>,
}

fn eigen_direction(r: &Resolved, theta: f64) -> EigenDirection {
    let p = &r.params;
    let sp = match r.augmented {
        Some(v) => augmented_spectrum(&v, p, theta),
        None => spectrum(&r.layer, p, theta),
    };
    let dec: strata::Result<EigenDecomposition> = match r.augmented {
        Some(v) => augmented_eigenvectors(&v, p, theta),
        None => eigen_decomposition(&r.layer, p, theta),
    };
    match dec {
        Ok(d) => EigenDirection {
            theta,
            eigenvalues: Some(eigenvalues(&d.spectrum)),
            right: Some(
                d.right
                    .iter()
                    .map(|x| x.iter().copied().collect())
                    .collect(),
            ),
            left: Some(d.left.iter().map(|x| x.iter().copied().collect()).collect()),
            max_relative_residual: Some(d.max_relative_residual()),
            residuals: Some(d.residuals.clone()),
            diagonalizable: d.diagonalizable,
            numeric_fallback: d
                .numeric_fallback
                .iter()
                .map(|l| l.name(d.spectrum.augmented))
                .collect(),
            error: None,
        },
        Err(e) => EigenDirection {
            theta,
            eigenvalues: sp.ok().map(|x| eigenvalues(&x)),
            right: None,
            left: None,
            residuals: None,
            max_relative_residual: None,
            diagonalizable: match e {
                strata::Error::NonRealSpectrum { .. } | strata::Error::DegenerateLayer(_) => {
                    TriState::False
                }
                _ => TriState::Boundary,
            },
            numeric_fallback: Vec::new(),
            error: Some(e.to_string()),
        },
    }
}

pub fn eigen(doc: &StateDocument, theta_samples: usize, strict: bool) -> Result<String, CliError> {
    let r = doc.resolve()?;
    if strict && !(r.layer.h1 > 0.0 && r.layer.h2 > 0.0) {
        return Err(CliError::Guard(
            "degenerate state: layer thickness not positive".into(),
        ));
    }
    let directions = theta_grid(theta_samples)
        .into_iter()
        .map(|t| eigen_direction(&r, t))
        .collect();
    Ok(crate::format::to_json(&EigenOutput {
        schema: crate::doc::SCHEMA,
        augmented: r.augmented.is_some(),
        directions,
    }))
}
