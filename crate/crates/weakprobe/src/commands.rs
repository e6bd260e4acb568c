use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use weakprobe_core::experiment::{
    delta_variance, fit, mean_curve, polarization, synthesize_data, variance_curve, Case, DataPoint, FitMethod,
    FitModel, FitOptions, FitProblem, FreeParams, PreSelectionSpec, Quantity,
};
use weakprobe_core::fracft::{frft, lens_freespace_propagate, optical_params};
use weakprobe_core::probe::{gaussian_at, moment_series_probe, quadrature_moments, wigner, Grid, KAxis, ProbeWavefunction};
use weakprobe_core::shaping::{ladder_observable, solve, uniform_post, verify_shape, Realization, ShapingProblem};
use weakprobe_core::vnsim::{compare, simulate, CouplingConfig, Strength};
use weakprobe_core::weakstats::{weak_value, Selection, WeakStats};

use crate::error::{CliError, Result};
use crate::output::{heatmap, line_plot, number, Cell, Series, Sink};
use crate::params::{key, Key, Params};

/// Per-invocation state shared by all commands.
pub struct Run {
    pub seed: u64,
    pub dry_run: bool,
    pub sink: Sink,
    pub report: Vec<String>,
}

impl Run {
    fn say(&mut self, line: impl Into<String>) {
        self.report.push(line.into());
    }
}

pub struct Command {
    pub name: &'static str,
    pub about: &'static str,
    pub schema: &'static [Key],
    pub run: fn(&Params, &mut Run) -> Result<()>,
}

pub const COMMANDS: [Command; 9] = [
    Command { name: "weakstats", about: "weak value, weak variance, moments and weak-valued probabilities", schema: &WEAKSTATS, run: weakstats },
    Command { name: "simulate", about: "exact grid simulation against the second-order predictions", schema: &SIMULATE, run: simulate_cmd },
    Command { name: "sweep", about: "theory curves of one quadrature over a range of waveplate angles", schema: &SWEEP, run: sweep },
    Command { name: "wigner", about: "Wigner function of a probe built from weak moments", schema: &WIGNER, run: wigner_cmd },
    Command { name: "fracft-demo", about: "lens and free-space realization of a fractional Fourier transform", schema: &FRACFT, run: fracft_demo },
    Command { name: "curves", about: "mean and variance-change curves for several quadratures", schema: &CURVES, run: curves },
    Command { name: "synthesize", about: "noisy synthetic data from the theory curves", schema: &SYNTHESIZE, run: synthesize },
    Command { name: "fit", about: "least-squares fit of the theory curve to data", schema: &FIT, run: fit_cmd },
    Command { name: "shape", about: "shape the post-selected probe toward a target waveform", schema: &SHAPE, run: shape },
];

pub fn find(name: &str) -> Option<&'static Command> {
    let name = if name == "fracft" { "fracft-demo" } else { name };
    COMMANDS.iter().find(|c| c.name == name)
}

const WEAKSTATS: [Key; 3] = [
    key("case", "i", "i (half-wave plate) or ii (quarter-wave plate)"),
    key("angle", "15", "waveplate angle, degrees"),
    key("delta", "0", "waveplate angle error, degrees"),
];

const SIMULATE: [Key; 6] = [
    key("case", "i", "i or ii"),
    key("angle", "15", "waveplate angle, degrees"),
    key("theta", "3.62e-2", "coupling strength"),
    key("alphas", "0,pi/4,pi/2,3pi/4", "quadrature angles, radians"),
    key("n", "4096", "grid points"),
    key("x-max", "20", "grid half-width"),
];

const MODEL_KEYS: [Key; 5] = [
    key("theta", "3.62e-2", "coupling strength"),
    key("visibility", "1", "visibility V"),
    key("delta", "0", "waveplate angle error, degrees"),
    key("background", "0", "background intensity N"),
    key("half-width", "5.6", "background half-width L"),
];

const SWEEP: [Key; 11] = [
    key("case", "i", "i or ii"),
    key("alpha", "0", "quadrature angle, radians"),
    key("angles", "5:45:0.5", "waveplate angles start:stop:step, degrees"),
    MODEL_KEYS[0],
    MODEL_KEYS[1],
    MODEL_KEYS[2],
    MODEL_KEYS[3],
    MODEL_KEYS[4],
    key("exact", "false", "also run the grid simulation (V = 1, N = 0) at every angle"),
    key("n", "4096", "grid points"),
    key("x-max", "20", "grid half-width"),
];

const WIGNER: [Key; 8] = [
    key("re-wvar", "0.5", "Re σ²_w θ²"),
    key("im-wvar", "0", "Im σ²_w θ²"),
    key("re-shift", "0", "Re ⟨A⟩_w θ"),
    key("im-shift", "0", "Im ⟨A⟩_w θ"),
    key("extent", "4", "plot half-width in X and K"),
    key("samples", "121", "samples per axis"),
    key("n", "4096", "grid points"),
    key("x-max", "20", "grid half-width"),
];

const FRACFT: [Key; 7] = [
    key("alpha", "pi/2", "pi/4, pi/2 or 3pi/4"),
    key("focal-length", "1", "dimensionless focal length F"),
    key("shift", "1", "input Gaussian centre"),
    key("boost", "0", "input Gaussian mean wavenumber"),
    key("extent", "8", "half-width of the written profile"),
    key("n", "4096", "grid points"),
    key("x-max", "20", "grid half-width"),
];

const CURVES: [Key; 8] = [
    key("case", "i", "i or ii"),
    key("alphas", "0,pi/4,pi/2,3pi/4", "quadrature angles, radians"),
    key("angles", "1:45:0.5", "waveplate angles start:stop:step, degrees"),
    MODEL_KEYS[0],
    MODEL_KEYS[1],
    MODEL_KEYS[2],
    MODEL_KEYS[3],
    MODEL_KEYS[4],
];

const SYNTHESIZE: [Key; 10] = [
    key("case", "i", "i or ii"),
    key("alpha", "0", "quadrature angle, radians"),
    key("quantity", "variance", "mean or variance"),
    key("angles", "1:45:0.5", "waveplate angles start:stop:step, degrees"),
    key("noise", "1e-4", "Gaussian noise standard deviation"),
    MODEL_KEYS[0],
    MODEL_KEYS[1],
    MODEL_KEYS[2],
    MODEL_KEYS[3],
    MODEL_KEYS[4],
];

const FIT: [Key; 12] = [
    key("data", "", "CSV with angle_deg and value columns"),
    key("case", "i", "i or ii"),
    key("alpha", "0", "quadrature angle, radians"),
    key("quantity", "variance", "mean or variance"),
    key("free", "theta,visibility,delta,background", "parameters to fit"),
    key("method", "lm", "lm (Levenberg-Marquardt) or nm (Nelder-Mead)"),
    key("max-iters", "500", "iteration limit"),
    key("theta", "5e-2", "initial coupling strength"),
    key("visibility", "1", "initial visibility"),
    key("delta", "0", "initial angle error, degrees"),
    key("background", "0", "initial background"),
    key("half-width", "5.6", "background half-width L (fixed)"),
];

const SHAPE: [Key; 8] = [
    key("target", "shift", "shift (e^{-iθaK}φ) or narrow ((1 − θ²vK²/2)φ)"),
    key("shift", "0.4", "a for the shift target"),
    key("wvar", "-2", "v for the narrow target"),
    key("order", "2", "number of matched weak moments"),
    key("theta", "0.1", "coupling strength"),
    key("window", "4", "matching window half-width in K"),
    key("n", "4096", "grid points"),
    key("x-max", "20", "grid half-width"),
];

fn case(p: &Params) -> Result<Case> {
    match p.str("case") {
        "i" | "half-wave" => Ok(Case::HalfWave),
        "ii" | "quarter-wave" => Ok(Case::QuarterWave),
        other => Err(CliError::validation(format!("--case {other:?}: expected i or ii"))),
    }
}

fn grid(p: &Params) -> Result<Grid> {
    Ok(Grid::new(p.usize("n")?, p.positive("x-max")?)?)
}

fn quantity(p: &Params) -> Result<Quantity> {
    match p.str("quantity") {
        "mean" => Ok(Quantity::Mean),
        "variance" => Ok(Quantity::Variance),
        other => Err(CliError::validation(format!("--quantity {other:?}: expected mean or variance"))),
    }
}

fn model(p: &Params) -> Result<FitModel> {
    let m = FitModel {
        theta: p.f64("theta")?,
        visibility: p.f64("visibility")?,
        delta_deg: p.f64("delta")?,
        background: p.f64("background")?,
        half_width: p.f64("half-width")?,
    };
    m.validate()?;
    Ok(m)
}

fn selection(case: Case, angle_deg: f64) -> Result<Selection> {
    Ok(PreSelectionSpec::new(case, angle_deg).selection()?)
}

/// Quadrature name for the standard readout angles.
fn quadrature_name(alpha: f64) -> String {
    let near = |t: f64| ((alpha - t) / PI - ((alpha - t) / PI).round()).abs() < 1e-9;
    if near(0.0) {
        "X".into()
    } else if near(FRAC_PI_4) {
        "Omega".into()
    } else if near(FRAC_PI_2) {
        "K".into()
    } else if near(3.0 * FRAC_PI_4) {
        "Xi".into()
    } else {
        format!("M({})", number(alpha))
    }
}

fn weakstats(p: &Params, run: &mut Run) -> Result<()> {
    let case = case(p)?;
    let angle = p.f64("angle")? + p.f64("delta")?;
    if run.dry_run {
        return Ok(());
    }
    let sel = selection(case, angle)?;
    let a = polarization::observable();
    let stats = WeakStats::compute(&sel, &a)?;
    let mut rows: Vec<Vec<Cell>> = vec![
        vec!["weak_value".into(), stats.weak_value.re.into(), stats.weak_value.im.into()],
        vec!["weak_variance".into(), stats.weak_variance.re.into(), stats.weak_variance.im.into()],
        vec!["a_tilde".into(), stats.a_tilde.re.into(), stats.a_tilde.im.into()],
    ];
    for n in 1..=4 {
        let m = stats.moment(n).unwrap_or_default();
        rows.push(vec![format!("moment_{n}").into(), m.re.into(), m.im.into()]);
    }
    for (v, pw) in stats.eigenvalues.iter().zip(&stats.weak_probs) {
        rows.push(vec![format!("prob[{}]", number(*v)).into(), pw.re.into(), pw.im.into()]);
    }
    run.say(format!("weak value    {}", fmt_c(stats.weak_value)));
    run.say(format!("weak variance {}", fmt_c(stats.weak_variance)));
    run.say(format!("|<f|i>|^2     {}", number(sel.overlap().re)));
    run.sink.csv("weakstats.csv", &["quantity", "re", "im"], &rows)
}

fn fmt_c(z: Complex64) -> String {
    format!("{} {} {}i", number(z.re), if z.im < 0.0 { "-" } else { "+" }, number(z.im.abs()))
}

fn simulate_cmd(p: &Params, run: &mut Run) -> Result<()> {
    let case = case(p)?;
    let angle = p.f64("angle")?;
    let theta = p.f64("theta")?;
    let alphas = p.angles("alphas")?;
    let g = grid(p)?;
    let a = polarization::observable();
    if CouplingConfig::new(theta, a.clone())?.strength() == Strength::Strong {
        run.say("warning: θ‖A‖ ≥ 1, the second-order predictions do not apply");
    }
    if run.dry_run {
        return Ok(());
    }
    let sel = selection(case, angle)?;
    let reports = compare(&sel, &a, theta, &alphas, g)?;
    let rows: Vec<Vec<Cell>> = reports
        .iter()
        .map(|r| {
            vec![
                quadrature_name(r.alpha).into(),
                r.alpha.into(),
                r.exact_mean.into(),
                r.exact_var.into(),
                r.pert_mean.into(),
                r.pert_var.into(),
                r.residual_mean.into(),
                r.residual_var.into(),
                r.success_prob.into(),
            ]
        })
        .collect();
    if let Some(r) = reports.first() {
        run.say(format!("success probability {}", number(r.success_prob)));
    }
    for r in &reports {
        run.say(format!(
            "{:<8} mean {:<24} variance {}",
            quadrature_name(r.alpha),
            number(r.exact_mean),
            number(r.exact_var)
        ));
    }
    run.sink.csv(
        "simulate.csv",
        &[
            "quadrature",
            "alpha",
            "exact_mean",
            "exact_variance",
            "perturbative_mean",
            "perturbative_variance",
            "residual_mean",
            "residual_variance",
            "success_probability",
        ],
        &rows,
    )
}

fn sweep(p: &Params, run: &mut Run) -> Result<()> {
    let case = case(p)?;
    let alpha = p.angle("alpha")?;
    let angles = p.range("angles")?;
    let m = model(p)?;
    let exact = p.bool("exact")?;
    let g = grid(p)?;
    if run.dry_run {
        return Ok(());
    }
    let a = polarization::observable();
    let (s, c) = alpha.sin_cos();
    let rows: Vec<Vec<Cell>> = angles
        .par_iter()
        .map(|&deg| -> Result<Vec<Cell>> {
            let spec = PreSelectionSpec::new(case, deg);
            let mean = mean_curve(&spec, &m, alpha);
            let dvar = delta_variance(variance_curve(&spec, &m, alpha));
            let sel = selection(case, deg + m.delta_deg)?;
            let w = weak_value(&sel, &a)?;
            let mut row: Vec<Cell> = vec![deg.into(), mean.into(), dvar.into(), (m.theta * (c * w.re + s * w.im)).into()];
            if exact {
                let q = simulate(&sel, &a, m.theta, g)?.quadrature(alpha)?;
                row.push(q.mean.into());
                row.push(delta_variance(q.variance).into());
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let name = quadrature_name(alpha);
    let mut header = vec!["angle_deg", "delta_mean", "delta_variance", "weak_value_shift"];
    if exact {
        header.extend(["exact_delta_mean", "exact_delta_variance"]);
    }
    run.sink.csv("sweep.csv", &header, &rows)?;
    let col = |k: usize| -> Vec<(f64, f64)> {
        rows.iter()
            .map(|r| match (&r[0], &r[k]) {
                (Cell::Num(x), Cell::Num(y)) => (*x, *y),
                _ => (f64::NAN, f64::NAN),
            })
            .collect()
    };
    let mut mean_series = vec![Series::new("theory", col(1)), Series::new("θ·weak value", col(3)).dashed()];
    let mut var_series = vec![Series::new("theory", col(2))];
    if exact {
        mean_series.push(Series::new("simulation", col(4)).dashed());
        var_series.push(Series::new("simulation", col(5)).dashed());
    }
    run.sink.svg("sweep_mean.svg", &line_plot(&format!("Δ⟨{name}⟩"), "waveplate angle (deg)", "mean shift", &mean_series))?;
    run.sink.svg(
        "sweep_variance.svg",
        &line_plot(&format!("Δσ²({name})"), "waveplate angle (deg)", "relative variance change", &var_series),
    )?;
    run.say(format!("{} angles written", rows.len()));
    Ok(())
}

fn wigner_cmd(p: &Params, run: &mut Run) -> Result<()> {
    let wvar = Complex64::new(p.f64("re-wvar")?, p.f64("im-wvar")?);
    let shift = Complex64::new(p.f64("re-shift")?, p.f64("im-shift")?);
    let extent = p.positive("extent")?;
    let samples = p.usize("samples")?;
    if !(2..=1001).contains(&samples) {
        return Err(CliError::validation("--samples must lie in 2..=1001"));
    }
    let g = grid(p)?;
    if extent > g.x_max() || extent > g.k_max() / 2.0 {
        return Err(CliError::validation(format!(
            "--extent {extent} exceeds the grid; need at most {}",
            number(g.x_max().min(g.k_max() / 2.0))
        )));
    }
    if run.dry_run {
        return Ok(());
    }
    // θ is absorbed into the supplied products
    let psi = moment_series_probe(g, 1.0, &[shift, wvar + shift * shift])?;
    let axis: Vec<f64> = (0..samples).map(|k| -extent + 2.0 * extent * k as f64 / (samples - 1) as f64).collect();
    let map = wigner(&psi, &axis, &KAxis::Samples(axis.clone()))?;
    let mut rows = Vec::with_capacity(samples * samples);
    for (i, x) in axis.iter().enumerate() {
        for (j, k) in axis.iter().enumerate() {
            rows.push(vec![(*x).into(), (*k).into(), map.get(i, j).into()]);
        }
    }
    run.sink.csv("wigner.csv", &["x", "k", "w"], &rows)?;
    let title = format!("Wigner function, θ²σ²_w = {}", fmt_c(wvar));
    run.sink.svg("wigner.svg", &heatmap(&title, "X", "K", &axis, &axis, |i, j| map.get(i, j)))?;
    let mut qrows = Vec::new();
    for alpha in [0.0, FRAC_PI_4, FRAC_PI_2, 3.0 * FRAC_PI_4] {
        let q = quadrature_moments(&psi, alpha)?;
        run.say(format!("{:<6} mean {:<24} variance {}", quadrature_name(alpha), number(q.mean), number(q.variance)));
        qrows.push(vec![quadrature_name(alpha).into(), alpha.into(), q.mean.into(), q.variance.into()]);
    }
    run.sink.csv("quadratures.csv", &["quadrature", "alpha", "mean", "variance"], &qrows)
}

fn fracft_demo(p: &Params, run: &mut Run) -> Result<()> {
    let alpha = p.angle("alpha")?;
    let focal = p.positive("focal-length")?;
    let shift = p.f64("shift")?;
    let boost = p.f64("boost")?;
    let extent = p.positive("extent")?;
    let g = grid(p)?;
    let r = optical_params(alpha, focal)?;
    if extent > g.x_max() {
        return Err(CliError::validation("--extent exceeds the grid half-width"));
    }
    if run.dry_run {
        return Ok(());
    }
    let base = gaussian_at(g, shift);
    let psi = base.with_amplitudes(
        base.amplitudes()
            .iter()
            .zip(g.xs())
            .map(|(v, x)| v * Complex64::from_polar(1.0, boost * x))
            .collect(),
    )?;
    let out = lens_freespace_propagate(&psi, r.focal_length, r.distance)?;
    let xs = g.xs();
    let scaled_in: Vec<f64> = xs.iter().map(|x| x * r.input_scale).collect();
    let psi_s = ProbeWavefunction::new(g, psi.sample_at(&scaled_in))?.normalize()?;
    let rotated = frft(&psi_s, alpha)?;
    let scaled_out: Vec<f64> = xs.iter().map(|x| x / r.scale).collect();
    let reference: Vec<f64> = rotated.sample_at(&scaled_out).iter().map(|v| v.norm_sqr() / r.scale).collect();
    let optical: Vec<f64> = out.psi.amplitudes().iter().map(|v| v.norm_sqr()).collect();
    let l1: f64 = reference.iter().zip(&optical).map(|(a, b)| (a - b).abs()).sum::<f64>() * g.dx();
    run.say(format!("D = {}, output scale = {}", number(r.distance), number(r.scale)));
    run.say(format!("L1 difference optical vs transform: {}", number(l1)));
    if out.aliasing_warning {
        run.say(format!("warning: {} of the probability is near the grid edge", number(out.edge_fraction)));
    }
    let rows: Vec<Vec<Cell>> = (0..g.n())
        .filter(|&k| xs[k].abs() <= extent)
        .map(|k| {
            vec![xs[k].into(), psi.amplitudes()[k].norm_sqr().into(), optical[k].into(), reference[k].into()]
        })
        .collect();
    run.sink.csv("fracft.csv", &["x", "input_intensity", "optical_intensity", "transform_intensity"], &rows)?;
    let col = |k: usize| -> Vec<(f64, f64)> {
        rows.iter()
            .map(|r| match (&r[0], &r[k]) {
                (Cell::Num(x), Cell::Num(y)) => (*x, *y),
                _ => (f64::NAN, f64::NAN),
            })
            .collect()
    };
    let series =
        [Series::new("input", col(1)), Series::new("lens + free space", col(2)), Series::new("F_α", col(3)).dashed()];
    run.sink.svg("fracft.svg", &line_plot(&format!("α = {}", number(alpha)), "X", "intensity", &series))
}

fn curves(p: &Params, run: &mut Run) -> Result<()> {
    let case = case(p)?;
    let alphas = p.angles("alphas")?;
    let angles = p.range("angles")?;
    let m = model(p)?;
    if run.dry_run {
        return Ok(());
    }
    let names: Vec<String> = alphas.iter().map(|a| quadrature_name(*a)).collect();
    let mut header = vec!["angle_deg".to_string()];
    for n in &names {
        header.push(format!("delta_mean_{n}"));
        header.push(format!("delta_variance_{n}"));
    }
    let rows: Vec<Vec<Cell>> = angles
        .iter()
        .map(|&deg| {
            let spec = PreSelectionSpec::new(case, deg);
            let mut row: Vec<Cell> = vec![deg.into()];
            for &alpha in &alphas {
                row.push(mean_curve(&spec, &m, alpha).into());
                row.push(delta_variance(variance_curve(&spec, &m, alpha)).into());
            }
            row
        })
        .collect();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    run.sink.csv("curves.csv", &header_refs, &rows)?;
    let series = |offset: usize| -> Vec<Series> {
        alphas
            .iter()
            .enumerate()
            .map(|(k, _)| {
                let pts = angles
                    .iter()
                    .zip(&rows)
                    .map(|(d, r)| match &r[1 + 2 * k + offset] {
                        Cell::Num(v) => (*d, *v),
                        Cell::Text(_) => (f64::NAN, f64::NAN),
                    })
                    .collect();
                Series::new(names[k].clone(), pts)
            })
            .collect()
    };
    run.sink.svg("curves_mean.svg", &line_plot("Δ⟨M⟩", "waveplate angle (deg)", "mean shift", &series(0)))?;
    run.sink.svg(
        "curves_variance.svg",
        &line_plot("Δσ²(M)", "waveplate angle (deg)", "relative variance change", &series(1)),
    )
}

fn synthesize(p: &Params, run: &mut Run) -> Result<()> {
    let case = case(p)?;
    let alpha = p.angle("alpha")?;
    let quantity = quantity(p)?;
    let angles = p.range("angles")?;
    let noise = p.non_negative("noise")?;
    let m = model(p)?;
    if run.dry_run {
        return Ok(());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
    let data = synthesize_data(case, &angles, &m, alpha, quantity, noise, || rng.sample(StandardNormal))?;
    let rows: Vec<Vec<Cell>> = data.iter().map(|d| vec![d.angle_deg.into(), d.value.into()]).collect();
    run.say(format!("{} samples", rows.len()));
    run.sink.csv("data.csv", &["angle_deg", "value"], &rows)
}

fn read_data(path: &Path) -> Result<Vec<DataPoint>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| CliError::validation(format!("cannot read data {}: {e}", path.display())))?;
    let headers = reader.headers().map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CliError::validation(format!("{}: missing column {name}", path.display())))
    };
    let (ia, iv) = (col("angle_deg")?, col("value")?);
    let mut out = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        let num = |i: usize| {
            rec.get(i).and_then(|s| s.trim().parse::<f64>().ok()).filter(|v| v.is_finite()).ok_or_else(|| {
                CliError::validation(format!("{}: record {} is not numeric", path.display(), line + 1))
            })
        };
        out.push(DataPoint { angle_deg: num(ia)?, value: num(iv)? });
    }
    Ok(out)
}

fn free_params(p: &Params) -> Result<FreeParams> {
    let mut f = FreeParams { theta: false, visibility: false, delta: false, background: false };
    for name in p.str("free").split(',').map(str::trim) {
        match name {
            "theta" => f.theta = true,
            "visibility" | "v" => f.visibility = true,
            "delta" => f.delta = true,
            "background" | "n" => f.background = true,
            "all" => f = FreeParams::ALL,
            other => return Err(CliError::validation(format!("--free: unknown parameter {other:?}"))),
        }
    }
    Ok(f)
}

fn fit_cmd(p: &Params, run: &mut Run) -> Result<()> {
    let case = case(p)?;
    let alpha = p.angle("alpha")?;
    let quantity = quantity(p)?;
    let free = free_params(p)?;
    let method = match p.str("method") {
        "lm" => FitMethod::LevenbergMarquardt,
        "nm" => FitMethod::NelderMead,
        other => return Err(CliError::validation(format!("--method {other:?}: expected lm or nm"))),
    };
    let options = FitOptions { method, max_iters: p.usize("max-iters")? };
    let initial = model(p)?;
    let data = read_data(Path::new(p.str("data")))?;
    if data.len() < 2 * free.count().max(1) {
        return Err(CliError::validation(format!(
            "{} data points for {} free parameters; need at least twice as many",
            data.len(),
            free.count()
        )));
    }
    if run.dry_run {
        return Ok(());
    }
    let r = fit(FitProblem { data: &data, case, alpha, quantity, free }, initial, options)?;
    let e = r.estimates;
    let rows: Vec<Vec<Cell>> = vec![
        vec!["theta".into(), e.theta.into(), free.theta.into()],
        vec!["visibility".into(), e.visibility.into(), free.visibility.into()],
        vec!["delta_deg".into(), e.delta_deg.into(), free.delta.into()],
        vec!["background".into(), e.background.into(), free.background.into()],
        vec!["half_width".into(), e.half_width.into(), false.into()],
        vec!["residual_norm".into(), r.residual_norm.into(), "".into()],
        vec!["iterations".into(), (r.iterations as f64).into(), "".into()],
        vec!["converged".into(), r.converged.into(), "".into()],
    ];
    run.sink.csv("fit.csv", &["parameter", "estimate", "free"], &rows)?;
    let measured: Vec<(f64, f64)> = data.iter().map(|d| (d.angle_deg, d.value)).collect();
    let fitted: Vec<(f64, f64)> = data
        .iter()
        .map(|d| (d.angle_deg, quantity.evaluate(&PreSelectionSpec::new(case, d.angle_deg), &e, alpha)))
        .collect();
    let series = [Series::new("data", measured).dashed(), Series::new("fit", fitted)];
    run.sink.svg("fit.svg", &line_plot("fit", "waveplate angle (deg)", p.str("quantity"), &series))?;
    run.say(format!(
        "θ = {}, V = {}, Δ = {}°, N = {}, residual {}",
        number(e.theta),
        number(e.visibility),
        number(e.delta_deg),
        number(e.background),
        number(r.residual_norm)
    ));
    if !r.converged {
        return Err(CliError::NonConvergence(format!("fit did not converge in {} iterations", r.iterations)));
    }
    Ok(())
}

fn shape(p: &Params, run: &mut Run) -> Result<()> {
    let order = p.usize("order")?;
    if !(1..=8).contains(&order) {
        return Err(CliError::validation("--order must lie in 1..=8"));
    }
    let theta = p.positive("theta")?;
    let window = p.positive("window")?;
    let g = grid(p)?;
    let phi = |k: f64| PI.powf(-0.25) * (-k * k / 2.0).exp();
    let target: Box<dyn Fn(f64) -> Complex64> = match p.str("target") {
        "shift" => {
            let a = p.f64("shift")?;
            Box::new(move |k| Complex64::from_polar(phi(k), -theta * a * k))
        }
        "narrow" => {
            let v = p.f64("wvar")?;
            Box::new(move |k| Complex64::new((1.0 - 0.5 * theta * theta * v * k * k) * phi(k), 0.0))
        }
        other => return Err(CliError::validation(format!("--target {other:?}: expected shift or narrow"))),
    };
    let problem = ShapingProblem::from_fn(g, target, ladder_observable(order + 1)?, theta, order)?.with_window(window)?;
    if run.dry_run {
        return Ok(());
    }
    let post = uniform_post(order + 1);
    let sol = solve(&problem, &post)?;
    let pre = match &sol.realization {
        Realization::Feasible { pre, .. } => pre.clone(),
        Realization::Infeasible { index } => {
            return Err(CliError::Numerical(weakprobe_core::Error::InvalidParameter(format!(
                "weak-valued probability {index} cannot be realized with this post-selection"
            ))))
        }
    };
    let report = verify_shape(&sol, &problem)?;
    let eig = problem.observable.eigenvalues();
    let sel_rows: Vec<Vec<Cell>> = (0..=order)
        .map(|j| {
            vec![
                j.into(),
                eig[j].into(),
                sol.weak_probs[j].re.into(),
                sol.weak_probs[j].im.into(),
                pre.amplitudes()[j].re.into(),
                pre.amplitudes()[j].im.into(),
            ]
        })
        .collect();
    run.sink.csv("shape_selection.csv", &["level", "eigenvalue", "prob_re", "prob_im", "pre_re", "pre_im"], &sel_rows)?;

    let ks = g.ks();
    let dk = g.dk();
    let achieved = report.achieved.fourier();
    let norm = |v: &[Complex64]| (v.iter().map(|z| z.norm_sqr()).sum::<f64>() * dk).sqrt();
    let tn = norm(&problem.target);
    let ov: Complex64 = problem.target.iter().zip(&achieved).map(|(t, a)| t.conj() * a).sum();
    let phase = if ov.norm() > 0.0 { ov.conj() / ov.norm() } else { Complex64::new(1.0, 0.0) };
    let an = norm(&achieved);
    let rows: Vec<Vec<Cell>> = (0..g.n())
        .filter(|&m| ks[m].abs() <= 2.0 * window)
        .map(|m| {
            let t = problem.target[m] / tn;
            let a = achieved[m] * phase / an;
            vec![ks[m].into(), t.re.into(), t.im.into(), a.re.into(), a.im.into()]
        })
        .collect();
    run.sink.csv("shape.csv", &["k", "target_re", "target_im", "achieved_re", "achieved_im"], &rows)?;
    let col = |re: usize| -> Vec<(f64, f64)> {
        rows.iter()
            .map(|r| match (&r[0], &r[re], &r[re + 1]) {
                (Cell::Num(k), Cell::Num(x), Cell::Num(y)) => (*k, x.hypot(*y)),
                _ => (f64::NAN, f64::NAN),
            })
            .collect()
    };
    let series = [Series::new("|target|", col(1)), Series::new("|achieved|", col(3)).dashed()];
    run.sink.svg("shape.svg", &line_plot("probe in K", "K", "amplitude", &series))?;
    for (n, m) in sol.weak_moments.iter().enumerate() {
        run.say(format!("<A^{}>_w = {}", n + 1, fmt_c(*m)));
    }
    run.say(format!("window error {}, truncation estimate {}", number(report.achieved_error), number(report.truncation_bound)));
    run.say(format!("success probability {}", number(report.success_prob)));
    Ok(())
}
