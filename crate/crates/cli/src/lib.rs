//! Command-line front end. [`run_cli`] is the whole program; `main` only
//! forwards the process arguments and exit code.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use specsum::afe::{afe_zeta_pair, MaassFormRecord};
use specsum::arith::{kloosterman, weil_bound, KloostermanQuery};
use specsum::io::{emit_dataset, fmt15, load_dataset, Check, OutputFormat, Report, RunConfig};
use specsum::moments::{
    fit_theorem2, kuznetsov_count, reciprocal_zeta_integral, series_a, series_b, sum_alpha_h,
    theorem1_decomposition, weighted_zeta_integral,
};
use specsum::smoothing::WeightSpec;
use specsum::special::{zeta, Complex64};
use specsum::trace::{deconvolve, trace_identity, FPlus, FPlusMethod, DEFAULT_NARROW_G};
use specsum::{par, Error};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "specsum", version, about = "Spectral sums for SL(2, Z): trace formula, AFE and zeta moments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Dataset of Maass forms (JSON Lines).
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Write the report (or dataset, for `ingest` and `extract-alpha`) here.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Report format: csv (default) or json.
    #[arg(long, global = true)]
    format: Option<OutputFormat>,
    /// Pass/fail tolerance of the command's main check.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Worker threads (also SPECSUM_THREADS); results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// key=value config file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// ζ(s) at a complex point such as `2+0i` or `0.5+14.1347i`.
    ZetaEval {
        #[arg(long, allow_hyphen_values = true)]
        s: String,
    },
    /// The Kloosterman sum S(m, n; c) against the Weil bound.
    Kloosterman {
        #[arg(long, allow_negative_numbers = true)]
        m: i64,
        #[arg(long, allow_negative_numbers = true)]
        n: i64,
        #[arg(long)]
        c: u64,
    },
    /// f₊(x) for the Gaussian window at (K, G), by both representations.
    BesselPlus {
        #[arg(long)]
        x: f64,
        #[arg(long = "K")]
        k: f64,
        #[arg(long = "G")]
        g: f64,
    },
    /// Smoothed divisor sum against |ζ(1/2 + ir)|².
    AfeCheck {
        #[arg(long)]
        r: f64,
    },
    /// Both sides of the trace formula for a Gaussian window.
    TraceCheck {
        #[arg(long = "K")]
        k: f64,
        #[arg(long = "G")]
        g: f64,
        #[arg(long, default_value_t = 1)]
        m: u64,
        #[arg(long, default_value_t = 1)]
        n: u64,
    },
    /// Recover α_j for every form in the dataset from the arithmetic side.
    ExtractAlpha {
        #[arg(long = "G", default_value_t = DEFAULT_NARROW_G)]
        g: f64,
    },
    /// Recover t_j(2), t_j(3), t_j(6) and compare with the dataset.
    HeckeCheck {
        #[arg(long = "G", default_value_t = DEFAULT_NARROW_G)]
        g: f64,
        /// Number of forms (from the bottom of the spectrum) to compare.
        #[arg(long, default_value_t = 5)]
        count: usize,
    },
    /// I_k(T), and with --data the spectral first moment and count at T.
    Moments {
        #[arg(long = "T", default_value_t = 25.0)]
        t: f64,
        #[arg(long, default_value_t = 1)]
        k: u32,
        /// Also split the dyadic sum over (K0, 2 K0].
        #[arg(long = "K0")]
        k0: Option<f64>,
        #[arg(long = "G")]
        g: Option<f64>,
    },
    /// Fit I_1(T) ≈ T(A log T + B) and compare with the series constants.
    Theorem2Fit {
        /// start:stop:step
        #[arg(long, default_value = "50:500:50")]
        grid: String,
        #[arg(long, default_value_t = 10_000)]
        cutoff: u64,
    },
    /// Validate a dataset, print its manifest and optionally write it in
    /// canonical form.
    Ingest {
        /// Catalog id to fetch instead of --data (needs the `remote` feature).
        #[arg(long)]
        remote: Option<String>,
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        cache: Option<PathBuf>,
    },
}

struct Ctx {
    cfg: RunConfig,
    common: Common,
}

/// Failures that map to exit code 2 rather than 1.
fn is_usage(e: &Error) -> bool {
    matches!(
        e,
        Error::Parse { .. }
            | Error::Schema { .. }
            | Error::Io(_)
            | Error::OutOfValidatedRange(_)
            | Error::InvalidWeight(_)
            | Error::RegimeTooSmall(_)
            | Error::SeriesRegimeExceeded { .. }
            | Error::OutsideRegularityStrip(_)
            | Error::ModulusTooLarge { .. }
            | Error::NotCoprime { .. }
    )
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Parse { .. } => "parse",
        Error::Schema { .. } => "schema",
        Error::Io(_) => "io",
        Error::Network(_) => "network",
        Error::ChecksumMismatch { .. } => "checksum",
        Error::OutOfValidatedRange(_)
        | Error::InvalidWeight(_)
        | Error::RegimeTooSmall(_)
        | Error::SeriesRegimeExceeded { .. }
        | Error::OutsideRegularityStrip(_)
        | Error::ModulusTooLarge { .. }
        | Error::NotCoprime { .. } => "range",
        _ => "numerical",
    }
}

/// Runs the program on `argv` (including the program name).
pub fn run_cli<I, S>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if code == EXIT_OK {
                let _ = write!(stdout, "{text}");
            } else {
                let _ = write!(stderr, "{text}");
            }
            return code;
        }
    };
    let json_errors = cli.common.format == Some(OutputFormat::Json);
    let fail = |stderr: &mut dyn Write, e: &Error| {
        if json_errors {
            let _ = writeln!(stderr, "{}", json!({"error": error_kind(e), "message": e.to_string()}));
        } else {
            let _ = writeln!(stderr, "error: {e}");
        }
        if is_usage(e) {
            EXIT_USAGE
        } else {
            EXIT_FAILED
        }
    };
    let cfg = match build_config(&cli.common) {
        Ok(c) => c,
        Err(e) => return fail(stderr, &e),
    };
    let ctx = Ctx { cfg, common: cli.common.clone() };
    let mut notes = Vec::new();
    let result = par::with_threads(ctx.cfg.threads, || dispatch(&ctx, &cli.cmd, &mut notes));
    for n in &notes {
        let _ = writeln!(stderr, "{n}");
    }
    match result {
        Ok(report) => {
            let text = report.render(ctx.cfg.format);
            let written = match (&ctx.common.out, &cli.cmd) {
                // these two write a dataset to --out, the report still goes to stdout
                (Some(_), Command::Ingest { .. } | Command::ExtractAlpha { .. }) | (None, _) => {
                    stdout.write_all(text.as_bytes()).map_err(Error::from)
                }
                (Some(p), _) => std::fs::write(p, &text).map_err(Error::from),
            };
            if let Err(e) = written {
                return fail(stderr, &e);
            }
            if report.passed() {
                EXIT_OK
            } else {
                EXIT_FAILED
            }
        }
        Err(e) => fail(stderr, &e),
    }
}

fn build_config(c: &Common) -> specsum::Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_env()?;
    if let Some(t) = c.threads {
        cfg.threads = t;
    }
    if let Some(f) = c.format {
        cfg.format = f;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_complex(s: &str) -> specsum::Result<Complex64> {
    let bad = || Error::Parse { line: 0, msg: format!("cannot read `{s}` as a complex number") };
    let t = s.replace(' ', "");
    // split at the last sign that is not an exponent sign or the leading one
    let bytes = t.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&i| (bytes[i] == b'+' || bytes[i] == b'-') && !matches!(bytes[i - 1], b'e' | b'E'));
    let (re, im) = match (split, t.strip_suffix('i')) {
        (Some(i), Some(_)) => (&t[..i], &t[i..t.len() - 1]),
        (None, Some(im)) => ("0", im),
        (_, None) => (t.as_str(), "0"),
    };
    let im = match im {
        "+" | "" => "1",
        "-" => "-1",
        v => v,
    };
    Ok(Complex64::new(re.parse().map_err(|_| bad())?, im.parse().map_err(|_| bad())?))
}

fn parse_grid(s: &str) -> specsum::Result<Vec<f64>> {
    let bad = || Error::Parse { line: 0, msg: format!("grid `{s}` is not start:stop:step") };
    let p: Vec<f64> = s.split(':').map(|v| v.parse().map_err(|_| bad())).collect::<specsum::Result<_>>()?;
    let [a, b, h] = p[..] else { return Err(bad()) };
    if !(h > 0.0 && b >= a) {
        return Err(bad());
    }
    let n = ((b - a) / h + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| a + h * i as f64).collect())
}

fn dataset(ctx: &Ctx) -> specsum::Result<(Vec<MaassFormRecord>, Value)> {
    let path = ctx
        .common
        .data
        .as_deref()
        .ok_or_else(|| Error::Parse { line: 0, msg: "this command needs --data".into() })?;
    let (forms, manifest) = load_dataset(path)?;
    Ok((forms, serde_json::to_value(manifest).expect("manifest serializes")))
}

/// The forms with α set, running the deconvolution if the file has none.
/// A file written by `extract-alpha` leaves α out for forms it could not
/// resolve; those are used as they are.
fn with_alphas(ctx: &Ctx, forms: Vec<MaassFormRecord>, notes: &mut Vec<String>) -> specsum::Result<Vec<MaassFormRecord>> {
    if forms.iter().any(|f| f.alpha.is_some()) {
        return Ok(forms);
    }
    notes.push("dataset has no alpha values; extracting them (several minutes)".into());
    let kappas: Vec<f64> = forms.iter().map(|f| f.kappa).collect();
    let d = deconvolve(&kappas, &[1], DEFAULT_NARROW_G, &ctx.cfg.trace())?;
    Ok(d.with_alphas(&forms))
}

fn tol(ctx: &Ctx, default: f64) -> f64 {
    ctx.common.tol.unwrap_or(default)
}

fn dispatch(ctx: &Ctx, cmd: &Command, notes: &mut Vec<String>) -> specsum::Result<Report> {
    match cmd {
        Command::ZetaEval { s } => {
            let s = parse_complex(s)?;
            let z = zeta(s)?;
            let mut r = Report::new("zeta-eval");
            r.details = json!({"s": [s.re, s.im], "re": z.re, "im": z.im, "value": format!("{}{}{}i", fmt15(z.re), if z.im < 0.0 { "-" } else { "+" }, fmt15(z.im.abs()))});
            r.checks.push(Check::abs("re", z.re, z.re, 0.0));
            r.checks.push(Check::abs("im", z.im, z.im, 0.0));
            Ok(r)
        }
        Command::Kloosterman { m, n, c } => {
            // S depends on m, n mod c only; use the representative in 1..=c
            let rep = |v: i64| if *c == 0 { 0 } else { (v - 1).rem_euclid(*c as i64) as u64 + 1 };
            let q = KloostermanQuery::with_cap(rep(*m), rep(*n), *c, ctx.cfg.modulus_cap.max(*c))?;
            let s = kloosterman(&q);
            let bound = weil_bound(q.m, q.n, *c);
            let mut r = Report::new("kloosterman");
            r.details = json!({"m": m, "n": n, "c": c, "value": s, "weil_bound": bound});
            r.checks.push(Check::at_most("abs_S_over_weil", s.abs() / bound, 1.0 + 1e-9));
            Ok(r)
        }
        Command::BesselPlus { x, k, g } => {
            let w = WeightSpec::gaussian(*k, *g)?;
            let quad = ctx.cfg.quadrature();
            let integral = FPlus::new(&w, &quad, FPlusMethod::Integral).eval(*x)?;
            let mut r = Report::new("bessel-plus");
            r.checks.push(Check::abs("f_plus_integral", integral, integral, 0.0));
            if *x <= specsum::special::SERIES_X_MAX {
                let series = FPlus::new(&w, &quad, FPlusMethod::Series).eval(*x)?;
                r.checks.push(Check::abs("f_plus_series", series, integral, tol(ctx, 1e-6)));
            }
            r.details = json!({"x": x, "K": k, "G": g, "value": integral});
            Ok(r)
        }
        Command::AfeCheck { r: rr } => {
            let p = ctx.cfg.smoothing(*rr)?;
            let afe = afe_zeta_pair(*rr, &p)?;
            let exact = zeta(Complex64::new(0.5, *rr))?.norm_sqr();
            let rel = (afe.value - exact).abs() / exact;
            let mut r = Report::new("afe-check");
            r.checks.push(Check::at_most("relative_error", rel, tol(ctx, 1e-3)));
            r.details = json!({"r": rr, "afe": afe, "zeta_abs_sq": exact, "relative_error": rel});
            Ok(r)
        }
        Command::TraceCheck { k, g, m, n } => {
            let (forms, manifest) = dataset(ctx)?;
            let forms = with_alphas(ctx, forms, notes)?;
            let w = WeightSpec::gaussian(*k, *g)?;
            let b = trace_identity(&forms, *m, *n, &w, &ctx.cfg.trace())?;
            let mut r = Report::new("trace-check");
            r.checks.push(Check::at_most("relative_residual", (b.residual / b.diagonal).abs(), tol(ctx, 1e-2)));
            r.details = json!({"K": k, "G": g, "m": m, "n": n, "breakdown": b, "dataset": manifest});
            Ok(r)
        }
        Command::ExtractAlpha { g } => {
            let (forms, manifest) = dataset(ctx)?;
            let kappas: Vec<f64> = forms.iter().map(|f| f.kappa).collect();
            let d = deconvolve(&kappas, &[1], *g, &ctx.cfg.trace())?;
            let rows: Vec<Value> = (0..kappas.len())
                .map(|j| {
                    json!({"kappa": kappas[j], "alpha": d.alpha(j), "error": d.alpha_error(j),
                           "amplification": d.amplification[j], "isolation": d.isolation[j],
                           "reliable": d.reliable(j)})
                })
                .collect();
            let mut r = Report::new("extract-alpha");
            for j in 0..kappas.len() {
                r.checks.push(Check {
                    name: format!("alpha[{}]", fmt15(kappas[j])),
                    value: d.alpha(j),
                    reference: 0.0,
                    tolerance: d.alpha_error(j),
                    // unreliable forms are reported, not failed: they sit at the dataset edge
                    pass: d.alpha(j).is_finite(),
                });
            }
            r.details = json!({"G": g, "condition": d.condition, "moduli": d.moduli, "forms": rows, "dataset": manifest});
            if let Some(out) = &ctx.common.out {
                std::fs::write(out, emit_dataset(&d.with_alphas(&forms)))?;
            }
            Ok(r)
        }
        Command::HeckeCheck { g, count } => {
            let (forms, manifest) = dataset(ctx)?;
            let kappas: Vec<f64> = forms.iter().map(|f| f.kappa).collect();
            let d = deconvolve(&kappas, &[1, 2, 3, 6], *g, &ctx.cfg.trace())?;
            let t = tol(ctx, 1e-2);
            let mut r = Report::new("hecke-check");
            for (j, f) in forms.iter().enumerate().take(*count) {
                let (t2, t3, t6) = (d.hecke(j, 2)?, d.hecke(j, 3)?, d.hecke(j, 6)?);
                let name = fmt15(f.kappa);
                r.checks.push(Check::abs(format!("t2[{name}]"), t2, f.coefficient(2)?, t));
                r.checks.push(Check::abs(format!("t3[{name}]"), t3, f.coefficient(3)?, t));
                r.checks.push(Check::abs(format!("t2t3_vs_t6[{name}]"), t2 * t3, t6, 2.0 * t));
            }
            r.details = json!({"G": g, "condition": d.condition, "moduli": d.moduli, "dataset": manifest});
            Ok(r)
        }
        Command::Moments { t, k, k0, g } => moments(ctx, *t, *k, *k0, *g, notes),
        Command::Theorem2Fit { grid, cutoff } => {
            let ts = parse_grid(grid)?;
            let fit = fit_theorem2(&ts, &ctx.cfg.quadrature())?;
            let (a, a_tail) = series_a(*cutoff);
            let (b, b_tail) = series_b(*cutoff);
            let mut r = Report::new("theorem2-fit");
            r.checks.push(Check::rel("A_hat", fit.a_hat, a, tol(ctx, 0.05)));
            r.checks.push(Check::abs("B_hat", fit.b_hat, b, 0.2));
            r.details = json!({"fit": fit, "series_A": a, "series_A_tail": a_tail, "series_B": b, "series_B_tail": b_tail});
            Ok(r)
        }
        Command::Ingest { remote, catalog, cache } => ingest(ctx, remote.as_deref(), catalog.as_deref(), cache.as_deref()),
    }
}

fn moments(
    ctx: &Ctx,
    t: f64,
    k: u32,
    k0: Option<f64>,
    g: Option<f64>,
    notes: &mut Vec<String>,
) -> specsum::Result<Report> {
    let quad = ctx.cfg.quadrature();
    let ik = weighted_zeta_integral(t, k, &quad)?;
    let mut r = Report::new("moments");
    let mut details = json!({"T": t, "k": k, "I_k": ik});
    r.checks.push(Check { name: format!("I_{k}"), value: ik, reference: 0.0, tolerance: 0.0, pass: ik >= 0.0 });
    if ctx.common.data.is_some() {
        let (forms, _) = dataset(ctx)?;
        let forms = with_alphas(ctx, forms, notes)?;
        let p = ctx.cfg.smoothing(t.max(2.0))?;
        let band = (t / std::f64::consts::PI).powi(2);
        let h = sum_alpha_h(t, &forms, &p)?;
        let i1 = if k == 1 { ik } else { weighted_zeta_integral(t, 1, &quad)? };
        let with_h = h.value + 2.0 / std::f64::consts::PI * i1;
        r.checks.push(Check::rel("first_moment_band", with_h, band, 0.5));
        let c = kuznetsov_count(t, &forms)?;
        let with_c = c.value + 2.0 / std::f64::consts::PI * reciprocal_zeta_integral(t, &quad)?;
        r.checks.push(Check::rel("count_band", with_c, band, 0.5));
        notes.extend(h.warning.iter().map(|w| format!("warning: {w}")));
        details["sum_alpha_H"] = serde_json::to_value(&h).expect("serializes");
        details["kuznetsov_count"] = serde_json::to_value(&c).expect("serializes");
        if let Some(k0) = k0 {
            let g = g.unwrap_or(3.0 * k0.ln().sqrt());
            let d = theorem1_decomposition(k0, g, &forms, &quad)?;
            r.checks.push(Check::at_most("theorem1_deviation_units", d.deviation_units.abs(), tol(ctx, 10.0)));
            notes.extend(d.warnings.iter().map(|w| format!("warning: {w}")));
            details["theorem1"] = serde_json::to_value(&d).expect("serializes");
        }
    }
    r.details = details;
    Ok(r)
}

fn ingest(ctx: &Ctx, remote: Option<&str>, catalog: Option<&Path>, cache: Option<&Path>) -> specsum::Result<Report> {
    let path = match remote {
        Some(id) => fetch(id, catalog, cache)?,
        None => ctx
            .common
            .data
            .clone()
            .ok_or_else(|| Error::Parse { line: 0, msg: "ingest needs --data or --remote".into() })?,
    };
    let (forms, manifest) = load_dataset(&path)?;
    let mut r = Report::new("ingest");
    r.checks.push(Check::at_most("sanity_cap_violations", forms.iter().filter(|f| !f.within_sanity_cap()).count() as f64, 0.0));
    r.details = serde_json::to_value(&manifest).expect("manifest serializes");
    if let Some(out) = &ctx.common.out {
        std::fs::write(out, emit_dataset(&forms))?;
    }
    Ok(r)
}

#[cfg(feature = "remote")]
fn fetch(id: &str, catalog: Option<&Path>, cache: Option<&Path>) -> specsum::Result<PathBuf> {
    use specsum::io::{fetch_remote, Catalog, HttpTransport};
    let catalog = match catalog {
        Some(p) => Catalog::parse(&std::fs::read_to_string(p)?)?,
        None => Catalog::default(),
    };
    let cache = cache.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(".specsum-cache"));
    fetch_remote(id, &cache, &catalog, &HttpTransport)
}

#[cfg(not(feature = "remote"))]
fn fetch(id: &str, _catalog: Option<&Path>, _cache: Option<&Path>) -> specsum::Result<PathBuf> {
    Err(Error::Network(format!("cannot fetch `{id}`: built without the `remote` feature")))
}
