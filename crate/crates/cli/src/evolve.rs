//! `evolve`: frozen-coefficient linear evolution of a random band-limited
//! perturbation.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use strata::evolution::{
    evolve_linear_augmented, make_compatible, vorticity_mismatch, LinearEvolution, PeriodicField,
};
use strata::hyperbolicity::classify_with_tol;
use strata::model::nondimensionalize;
use strata::polynomial::{char_quartic_from, max_imag_root};

use crate::doc::{StateDocument, SCHEMA};
use crate::format::{float, opt_float, to_csv, to_json};
use crate::CliError;

#[derive(Debug, Clone, Copy)]
pub struct EvolveOptions {
    pub grid: usize,
    pub length: f64,
    /// Final time in characteristic times `L / sqrt(g (h1 + h2))`.
    pub time: f64,
    pub steps: usize,
    pub kmax: i32,
    pub seed: u64,
    pub tol: f64,
    pub allow_illposed: bool,
}

pub struct EvolveOutput {
    pub history: String,
    pub snapshot: String,
}

#[derive(Serialize)]
struct Snapshot<'a> {
    schema: &'static str,
    n: usize,
    dim: usize,
    length: f64,
    t: f64,
    /// One row-major `n x n` array per component.
    components: Vec<&'a [f64]>,
}

struct Mode {
    kx: i32,
    ky: i32,
    amp: Vec<f64>,
    phase: Vec<f64>,
}

fn modes(kmax: i32, dim: usize, seed: u64) -> Vec<Mode> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for ky in -kmax..=kmax {
        for kx in -kmax..=kmax {
            // one representative of each +-k pair
            if ky < 0 || (ky == 0 && kx <= 0) {
                continue;
            }
            let amp = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let phase = (0..dim).map(|_| rng.gen_range(0.0..TAU)).collect();
            out.push(Mode { kx, ky, amp, phase });
        }
    }
    out
}

fn initial_field(opts: &EvolveOptions, dim: usize) -> Result<(PeriodicField, Vec<Mode>), CliError> {
    if opts.kmax < 1 || 4 * opts.kmax as usize > opts.grid {
        return Err(CliError::Input(format!(
            "kmax must lie in 1..={}",
            opts.grid / 4
        )));
    }
    let ms = modes(opts.kmax, dim, opts.seed);
    let k0 = TAU / opts.length;
    let field = PeriodicField::from_fn(opts.grid, dim, opts.length, |x, y| {
        (0..dim)
            .map(|c| {
                ms.iter()
                    .map(|m| {
                        m.amp[c] * (k0 * (m.kx as f64 * x + m.ky as f64 * y) + m.phase[c]).cos()
                    })
                    .sum()
            })
            .collect()
    })
    .map_err(|e| CliError::Input(e.to_string()))?;
    Ok((field, ms))
}

fn ls_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    sxy / sxx
}

pub fn evolve(doc: &StateDocument, opts: &EvolveOptions) -> Result<EvolveOutput, CliError> {
    let r = doc.resolve()?;
    let (s, p) = (&r.layer, &r.params);
    if !(opts.time.is_finite() && opts.time > 0.0 && opts.length.is_finite() && opts.length > 0.0) {
        return Err(CliError::Input("time and length must be positive".into()));
    }
    if opts.steps < 2 {
        return Err(CliError::Input("need at least 2 history steps".into()));
    }
    let report = classify_with_tol(s, p, opts.tol);
    if !report.hyperbolic_2d.is_true() && !opts.allow_illposed {
        return Err(CliError::Guard(format!(
            "background is not hyperbolic in 2D (hyperbolic_2d = {}, regime {:?}); pass --allow-illposed to run anyway",
            report.hyperbolic_2d, report.regime
        )));
    }
    let nd = nondimensionalize(s, p).map_err(|e| CliError::Input(e.to_string()))?;
    let t_end = opts.time * opts.length / (p.g * (s.h1 + s.h2)).sqrt();
    let times: Vec<f64> = (0..=opts.steps)
        .map(|j| t_end * j as f64 / opts.steps as f64)
        .collect();

    let dim = if r.augmented.is_some() { 8 } else { 6 };
    let (mut init, ms) = initial_field(opts, dim)?;
    let k0 = TAU / opts.length;
    let oracle = ms
        .iter()
        .map(|m| {
            let (kx, ky) = (k0 * m.kx as f64, k0 * m.ky as f64);
            let f = nd.directional(ky.atan2(kx));
            kx.hypot(ky) * (p.g * s.h1).sqrt() * max_imag_root(&char_quartic_from(f, nd.h, p.gamma))
        })
        .fold(0.0, f64::max);

    let (fields, c_t, phis): (Vec<PeriodicField>, Option<f64>, Option<Vec<[f64; 2]>>) =
        match r.augmented {
            None => {
                let evo = LinearEvolution::new(s, p, &init)
                    .map_err(|e| CliError::Input(e.to_string()))?;
                // the condition number bounds growth only for a real spectrum
                let c_t = report.hyperbolic_2d.is_true().then(|| evo.c_t());
                (times.iter().map(|&t| evo.at(t)).collect(), c_t, None)
            }
            Some(v) => {
                make_compatible(&mut init).map_err(|e| CliError::Input(e.to_string()))?;
                let fields = times
                    .iter()
                    .map(|&t| evolve_linear_augmented(&v, p, &init, t))
                    .collect::<strata::Result<Vec<_>>>()
                    .map_err(|e| CliError::Input(e.to_string()))?;
                let phis = fields
                    .iter()
                    .map(|f| {
                        vorticity_mismatch(f).map(|[a, b]| {
                            let m = |x: &[f64]| x.iter().fold(0.0f64, |acc, y| acc.max(y.abs()));
                            [m(&a), m(&b)]
                        })
                    })
                    .collect::<strata::Result<Vec<_>>>()
                    .map_err(|e| CliError::Input(e.to_string()))?;
                (fields, None, Some(phis))
            }
        };

    let n0 = fields[0].l2_norm();
    let norms: Vec<f64> = fields.iter().map(|f| f.l2_norm()).collect();
    let late: Vec<(f64, f64)> = times
        .iter()
        .zip(&norms)
        .filter(|(t, n)| **t >= 0.5 * t_end && **n > 0.0)
        .map(|(t, n)| (*t, n.ln()))
        .collect();
    let growth = if late.len() >= 2 {
        Some(ls_slope(&late))
    } else {
        None
    };
    let max_ratio = norms.iter().map(|n| n / n0).fold(0.0, f64::max);

    let mut rows = Vec::new();
    for (j, (&t, &norm)) in times.iter().zip(&norms).enumerate() {
        let phi = phis.as_ref().map(|v| v[j]);
        rows.push(vec![
            SCHEMA.into(),
            "history".into(),
            float(t),
            float(norm),
            float(norm / n0),
            opt_float(phi.map(|x| x[0])),
            opt_float(phi.map(|x| x[1])),
            String::new(),
            String::new(),
            String::new(),
        ]);
    }
    rows.push(vec![
        SCHEMA.into(),
        "summary".into(),
        float(t_end),
        String::new(),
        float(max_ratio),
        String::new(),
        String::new(),
        opt_float(c_t),
        opt_float(growth),
        float(oracle),
    ]);
    let header = [
        "schema",
        "record",
        "t",
        "l2_norm",
        "ratio",
        "phi1",
        "phi2",
        "c_t",
        "growth_rate",
        "oracle_growth_rate",
    ];
    let last = fields.last().unwrap();
    let snapshot = Snapshot {
        schema: SCHEMA,
        n: last.n(),
        dim: last.dim(),
        length: last.length(),
        t: t_end,
        components: (0..last.dim()).map(|c| last.component(c)).collect(),
    };
    Ok(EvolveOutput {
        history: to_csv(&header, &rows),
        snapshot: to_json(&snapshot),
    })
}
