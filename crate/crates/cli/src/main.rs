mod output;
mod range;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use opo_comb::model::{steady_state, OpoParams, ParamSpec};
use opo_comb::montecarlo::{dt_bias_check, simulate_dc_variance, DtBias, McEstimate, SimConfig};
use opo_comb::spectra::{
    transfer_closed_form, transfer_numeric, witness_variance, witness_variance_dc,
};
use opo_comb::stability::is_stable;
use opo_comb::vlf::{
    build_case, evaluate, optimize_x, phase_squeezing_minimum, phase_squeezing_point, scan_surface,
    VlfIndices, VlfKind,
};
use opo_comb::Witness;

use output::{num, opt_num, Meta, Sink};
use range::{IntRange, RealRange};

/// Input rejected before any numerics ran.
#[derive(Debug)]
struct Invalid(String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

#[derive(Parser, Debug)]
#[command(
    name = "opo-comb",
    version,
    about = "Steady state, stability, spectra and entanglement witnesses of a multimode OPO comb"
)]
struct Cli {
    /// Worker threads for parallel scans and simulations.
    #[arg(long, global = true, env = "OPO_THREADS")]
    threads: Option<usize>,

    /// Write results here instead of standard output.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,

    /// Output format; each command has its own default.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Mean fields above threshold.
    SteadyState(ParamArgs),
    /// Jacobian eigenvalues, closed-form comparison and stability verdict.
    Stability(ParamArgs),
    /// Witness variance over a frequency grid.
    Spectrum(SpectrumArgs),
    /// Entanglement witnesses.
    #[command(subcommand)]
    Vlf(VlfCommand),
    /// Phase squeezing of the comb witness against single-pair squeezing.
    Fig2(Fig2Args),
    /// Monte-Carlo check of an analytic zero-frequency variance.
    Verify(VerifyArgs),
}

#[derive(Subcommand, Debug)]
enum VlfCommand {
    /// Evaluate one witness inequality.
    Eval(VlfEvalArgs),
    /// Violation surface over a (sigma, n) grid.
    Scan(VlfScanArgs),
}

#[derive(Args, Debug, Clone)]
struct RateArgs {
    /// Pump to signal damping ratio k_p / k_a.
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    /// Signal damping rate.
    #[arg(long)]
    k_a: Option<f64>,
    /// Nonlinear coupling.
    #[arg(long)]
    chi: Option<f64>,
}

#[derive(Args, Debug, Clone)]
struct ParamArgs {
    /// JSON parameter file; explicit flags override its fields.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Pump to signal damping ratio k_p / k_a [default: 1].
    #[arg(long)]
    kappa: Option<f64>,
    /// Pump power relative to threshold.
    #[arg(long)]
    sigma: Option<f64>,
    /// Number of signal/idler pairs.
    #[arg(long)]
    n: Option<usize>,
    /// Relative pair amplitudes, comma separated.
    #[arg(long, value_delimiter = ',')]
    profile: Option<Vec<f64>>,
    /// Signal damping rate [default: 1].
    #[arg(long)]
    k_a: Option<f64>,
    /// Nonlinear coupling [default: 1].
    #[arg(long)]
    chi: Option<f64>,
}

impl ParamArgs {
    fn resolve(&self) -> Result<OpoParams> {
        let mut spec = match &self.params {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read {}", path.display()))?;
                serde_json::from_str::<ParamSpec>(&text)
                    .map_err(|e| invalid(format!("{}: {e}", path.display())))?
            }
            None => ParamSpec {
                kappa: 1.0,
                sigma: self.sigma.ok_or_else(|| invalid("--sigma is required"))?,
                n: self.n.ok_or_else(|| invalid("--n is required"))?,
                profile: None,
                k_a: None,
                chi: None,
            },
        };
        if let Some(v) = self.kappa {
            spec.kappa = v;
        }
        if let Some(v) = self.sigma {
            spec.sigma = v;
        }
        if let Some(v) = self.n {
            spec.n = v;
        }
        if self.profile.is_some() {
            spec.profile = self.profile.clone();
        }
        if self.k_a.is_some() {
            spec.k_a = self.k_a;
        }
        if self.chi.is_some() {
            spec.chi = self.chi;
        }
        let params = spec.resolve()?;
        log::debug!("resolved parameters: {params:?}");
        Ok(params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Normalize {
    None,
    /// Divide by the vacuum variance of the witness.
    Shot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Closed,
    Numeric,
}

#[derive(Args, Debug)]
struct SpectrumArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long, default_value_t = 1e-3)]
    omega_min: f64,
    #[arg(long, default_value_t = 10.0)]
    omega_max: f64,
    #[arg(long, default_value_t = 200)]
    points: usize,
    /// Logarithmic frequency spacing.
    #[arg(long)]
    log: bool,
    /// Witness, e.g. "1*P+1,1*P+2,-2*Pp".
    #[arg(long)]
    witness: String,
    #[arg(long, value_enum, default_value_t = Normalize::None)]
    normalize: Normalize,
    /// Transfer matrix route.
    #[arg(long, value_enum, default_value_t = Method::Closed)]
    method: Method,
}

#[derive(Args, Debug)]
struct VlfEvalArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long)]
    kind: VlfKind,
    #[arg(long, default_value_t = 1)]
    j: usize,
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Witness weight; defaults to sigma when neither this nor --optimize is given.
    #[arg(long, conflicts_with = "optimize")]
    x: Option<f64>,
    /// Minimise the variance sum over x.
    #[arg(long)]
    optimize: bool,
}

#[derive(Args, Debug)]
struct VlfScanArgs {
    #[command(flatten)]
    rates: RateArgs,
    #[arg(long)]
    kind: VlfKind,
    #[arg(long, default_value_t = 1)]
    j: usize,
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Pump ratios as [log:]start:end:steps.
    #[arg(long)]
    sigma_range: RealRange,
    /// Pair counts as start:end.
    #[arg(long)]
    n_range: IntRange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum XPolicy {
    /// x = sigma.
    Sigma,
    /// x minimising the S1 variance sum.
    Optimal,
}

#[derive(Args, Debug)]
struct Fig2Args {
    #[command(flatten)]
    rates: RateArgs,
    #[arg(long, default_value_t = 3)]
    n: usize,
    #[arg(long, value_enum, default_value_t = XPolicy::Sigma)]
    x_policy: XPolicy,
    #[arg(long, default_value = "1:3:200")]
    sigma_range: RealRange,
    #[arg(long, value_enum, default_value_t = Normalize::None)]
    normalize: Normalize,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long)]
    witness: String,
    /// Number of trajectories.
    #[arg(long, default_value_t = 10_000)]
    traj: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Integrator step; defaults to 0.01 / max(k_a, k_p).
    #[arg(long)]
    dt: Option<f64>,
    /// Discarded transient; defaults to ten slowest decay times.
    #[arg(long)]
    burn_in: Option<f64>,
    /// Short averaging window; the long window is twice as long.
    #[arg(long)]
    window: Option<f64>,
    /// Repeat at half the step and report the difference.
    #[arg(long)]
    dt_check: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<Invalid>().is_some() {
        return 2;
    }
    match e.downcast_ref::<opo_comb::Error>() {
        Some(err) if err.is_validation() => 2,
        Some(_) => 3,
        None => 1,
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            bail!(invalid("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("cannot configure the thread pool")?;
    }
    let out = cli.output.as_deref();
    match cli.command {
        Command::SteadyState(a) => {
            json_only(cli.format)?;
            let p = a.resolve()?;
            let ss = steady_state(&p)?;
            let result = json!({
                "steady_state": ss,
                "total_power": ss.total_power(),
                "threshold_residual": ss.threshold_residual(&p),
            });
            Sink::open(out)?.json(&Meta::new(params_json(&p)), &result)
        }
        Command::Stability(a) => {
            json_only(cli.format)?;
            let p = a.resolve()?;
            let report = is_stable(&p)?;
            Sink::open(out)?.json(&Meta::new(params_json(&p)), &report)
        }
        Command::Spectrum(a) => spectrum(a, cli.format.unwrap_or(Format::Csv), out),
        Command::Vlf(VlfCommand::Eval(a)) => {
            json_only(cli.format)?;
            vlf_eval(a, out)
        }
        Command::Vlf(VlfCommand::Scan(a)) => vlf_scan(a, cli.format.unwrap_or(Format::Csv), out),
        Command::Fig2(a) => fig2(a, cli.format.unwrap_or(Format::Csv), out),
        Command::Verify(a) => {
            json_only(cli.format)?;
            verify(a, out)
        }
    }
}

fn json_only(format: Option<Format>) -> Result<()> {
    match format {
        Some(Format::Csv) => Err(invalid("this command only produces JSON")),
        _ => Ok(()),
    }
}

fn params_json(p: &OpoParams) -> serde_json::Value {
    serde_json::to_value(ParamSpec::from(p)).expect("parameters serialise")
}

fn template(r: &RateArgs) -> Result<OpoParams> {
    Ok(OpoParams::new(r.kappa, 1.0, 1)?.with_rates(r.k_a.unwrap_or(1.0), r.chi.unwrap_or(1.0))?)
}

fn template_json(r: &RateArgs, extra: serde_json::Value) -> Result<serde_json::Value> {
    let t = template(r)?;
    let mut v = json!({ "kappa": t.kappa(), "k_a": t.k_a, "chi": t.chi });
    if let (Some(obj), serde_json::Value::Object(more)) = (v.as_object_mut(), extra) {
        obj.extend(more);
    }
    Ok(v)
}

fn parse_witness(spec: &str, n: usize) -> Result<Witness> {
    let w = Witness::parse(spec)?;
    w.check_range(n)?;
    Ok(w)
}

fn spectrum(a: SpectrumArgs, format: Format, out: Option<&std::path::Path>) -> Result<()> {
    let p = a.params.resolve()?;
    let w = parse_witness(&a.witness, p.n)?;
    if a.points == 0 {
        bail!(invalid("--points must be at least 1"));
    }
    let spec = format!(
        "{}{}:{}:{}",
        if a.log { "log:" } else { "" },
        a.omega_min,
        a.omega_max,
        a.points
    );
    let omegas = spec
        .parse::<RealRange>()
        .map_err(|e| invalid(format!("frequency grid: {e}")))?
        .values();
    let ss = steady_state(&p)?;
    let scale = match a.normalize {
        Normalize::None => 1.0,
        Normalize::Shot => w.vacuum_variance(),
    };
    let mut params = params_json(&p);
    params["witness"] = json!(w.to_spec());
    params["normalize"] = json!(format!("{:?}", a.normalize).to_lowercase());
    params["method"] = json!(format!("{:?}", a.method).to_lowercase());
    let meta = Meta::new(params);

    let eval = |omega: f64| -> Result<f64> {
        let t = match a.method {
            Method::Closed => transfer_closed_form(&p, &ss, omega)?,
            Method::Numeric => transfer_numeric(&p, &ss, omega)?,
        };
        Ok(witness_variance(&w, &t)? / scale)
    };

    let mut sink = Sink::open(out)?;
    match format {
        Format::Json => {
            let rows = omegas
                .iter()
                .map(|&o| eval(o).map(|v| json!({ "omega": o, "variance": v })))
                .collect::<Result<Vec<_>>>()?;
            sink.json(&meta, &rows)
        }
        Format::Csv => {
            sink.csv_header(&meta, &["omega", "variance"])?;
            for &o in &omegas {
                match eval(o) {
                    Ok(v) => sink.csv_row(&[num(o), num(v)])?,
                    Err(e) => {
                        sink.csv_finish(Some(&e.to_string()))?;
                        return Err(e);
                    }
                }
            }
            sink.csv_finish(None)
        }
    }
}

fn vlf_eval(a: VlfEvalArgs, out: Option<&std::path::Path>) -> Result<()> {
    let p = a.params.resolve()?;
    let ss = steady_state(&p)?;
    let idx = VlfIndices { j: a.j, k: a.k };
    let result = if a.optimize && a.kind.has_x() {
        optimize_x(a.kind, &p, &ss, idx)?
    } else {
        let x = a.kind.has_x().then(|| a.x.unwrap_or(p.sigma));
        evaluate(&build_case(a.kind, &p, &ss, idx, x)?, &p, &ss)?
    };
    let mut params = params_json(&p);
    params["kind"] = json!(a.kind.to_string());
    params["j"] = json!(a.j);
    params["k"] = json!(a.k);
    Sink::open(out)?.json(&Meta::new(params), &result)
}

fn vlf_scan(a: VlfScanArgs, format: Format, out: Option<&std::path::Path>) -> Result<()> {
    let t = template(&a.rates)?;
    let idx = VlfIndices { j: a.j, k: a.k };
    let sigmas = a.sigma_range.values();
    if let Some(&s) = sigmas.iter().find(|&&s| s < 1.0) {
        bail!(invalid(format!("sigma = {s} is below threshold")));
    }
    let ns = a.n_range.values();
    if ns[0] < a.kind.min_pairs() {
        bail!(invalid(format!(
            "{} needs n >= {}",
            a.kind,
            a.kind.min_pairs()
        )));
    }
    let meta = Meta::new(template_json(
        &a.rates,
        json!({
            "kind": a.kind.to_string(),
            "j": a.j,
            "k": a.k,
            "sigma_range": a.sigma_range.to_string(),
            "n_range": a.n_range.to_string(),
        }),
    )?);

    let mut sink = Sink::open(out)?;
    if format == Format::Json {
        let grid = scan_surface(a.kind, &sigmas, &ns, &t, idx);
        return sink.json(&meta, &grid);
    }
    sink.csv_header(
        &meta,
        &["sigma", "n", "violation", "x_opt", "S", "bound", "status"],
    )?;
    let mut failed = 0usize;
    for &n in &ns {
        let grid = scan_surface(a.kind, &sigmas, &[n], &t, idx);
        for c in &grid.cells {
            let status = match &c.error {
                Some(e) => {
                    failed += 1;
                    format!("\"error: {}\"", e.replace('"', "'"))
                }
                None if !c.converged && a.kind.has_x() => "unconverged".into(),
                None => "ok".into(),
            };
            sink.csv_row(&[
                num(c.sigma),
                c.n.to_string(),
                num(c.violation),
                opt_num(c.x_opt),
                num(c.s),
                num(c.bound),
                status,
            ])?;
        }
        sink.flush()?;
    }
    if failed > 0 {
        let msg = format!("{failed} cells failed");
        sink.csv_finish(Some(&msg))?;
        return Err(opo_comb::Error::Simulation(msg)).context("surface scan");
    }
    sink.csv_finish(None)
}

fn fig2(a: Fig2Args, format: Format, out: Option<&std::path::Path>) -> Result<()> {
    let t = template(&a.rates)?;
    let sigmas = a.sigma_range.values();
    if let Some(&s) = sigmas.iter().find(|&&s| s < 1.0) {
        bail!(invalid(format!("sigma = {s} is below threshold")));
    }
    if a.n == 0 {
        bail!(invalid("--n must be at least 1"));
    }
    let shot = a.normalize == Normalize::Shot;
    // each column is scaled by the vacuum variance of its own witness
    let point = |sigma: f64| -> Result<(f64, f64, Option<f64>)> {
        let pt = phase_squeezing_point(&t, a.n, sigma)?;
        let p = t.with_pairs(a.n)?.with_sigma(sigma)?;
        let ss = steady_state(&p)?;
        let (v_phase, x) = match a.x_policy {
            XPolicy::Sigma => (pt.v_phase, Some(sigma)),
            XPolicy::Optimal => {
                let r = optimize_x(VlfKind::S1, &p, &ss, VlfIndices::default())?;
                (r.variance_v, r.x_opt)
            }
        };
        if !shot {
            return Ok((pt.n_v_pplus, v_phase, x));
        }
        let vacuum = build_case(VlfKind::S1, &p, &ss, VlfIndices::default(), x)?
            .v
            .vacuum_variance();
        Ok((pt.n_v_pplus / 2.0, v_phase / vacuum, x))
    };
    let meta = Meta::new(template_json(
        &a.rates,
        json!({
            "n": a.n,
            "x_policy": format!("{:?}", a.x_policy).to_lowercase(),
            "sigma_range": a.sigma_range.to_string(),
            "normalize": format!("{:?}", a.normalize).to_lowercase(),
        }),
    )?);

    let mut rows = Vec::with_capacity(sigmas.len());
    let mut sink = Sink::open(out)?;
    if format == Format::Csv {
        sink.csv_header(&meta, &["sigma", "nV_Pplus", "V_v1", "x"])?;
    }
    for &s in &sigmas {
        let (pair, phase, x) = match point(s) {
            Ok(v) => v,
            Err(e) => {
                if format == Format::Csv {
                    sink.csv_finish(Some(&e.to_string()))?;
                }
                return Err(e);
            }
        };
        if format == Format::Csv {
            sink.csv_row(&[num(s), num(pair), num(phase), opt_num(x)])?;
        }
        rows.push(json!({ "sigma": s, "nV_Pplus": pair, "V_v1": phase, "x": x }));
    }
    let minimum = if a.x_policy == XPolicy::Sigma && sigmas.len() >= 3 {
        let m = phase_squeezing_minimum(&t, a.n, &sigmas)?;
        let v = if shot { point(m.sigma)?.1 } else { m.v_phase };
        Some(json!({ "sigma": m.sigma, "V_v1": v }))
    } else {
        None
    };
    match format {
        Format::Csv => {
            if let Some(m) = &minimum {
                sink.csv_row(&[format!(
                    "# minimum: sigma={} V_v1={}",
                    m["sigma"], m["V_v1"]
                )])?;
            }
            sink.csv_finish(None)
        }
        Format::Json => sink.json(&meta, &json!({ "rows": rows, "minimum": minimum })),
    }
}

#[derive(Serialize)]
struct VerifyReport {
    witness: String,
    estimate: f64,
    stderr: f64,
    analytic: f64,
    sigma_distance: f64,
    undersampled: bool,
    config: SimConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    dt_bias: Option<DtBias>,
}

fn verify(a: VerifyArgs, out: Option<&std::path::Path>) -> Result<()> {
    let p = a.params.resolve()?;
    let w = parse_witness(&a.witness, p.n)?;
    let ss = steady_state(&p)?;
    let mut cfg = SimConfig::recommended(&p, &ss, a.traj, a.seed)?;
    if let Some(dt) = a.dt {
        cfg.dt = dt;
    }
    if let Some(b) = a.burn_in {
        cfg.t_total += b - cfg.burn_in;
        cfg.burn_in = b;
    }
    if let Some(window) = a.window {
        if !(window > 0.0) {
            bail!(invalid("--window must be positive"));
        }
        cfg.lowpass_bandwidth = 1.0 / window;
        cfg.t_total = cfg.burn_in + 2.0 * window;
    }
    cfg.validate(&p, &ss)?;
    let analytic = witness_variance_dc(&w, &p, &ss)?;
    let est: McEstimate = simulate_dc_variance(&w, &p, &ss, &cfg)?;
    let dt_bias = if a.dt_check {
        Some(
            dt_bias_check(std::slice::from_ref(&w), &p, &ss, &cfg)?
                .pop()
                .ok_or_else(|| anyhow!("empty step-size check"))?,
        )
    } else {
        None
    };
    let report = VerifyReport {
        witness: w.to_spec(),
        estimate: est.estimate,
        stderr: est.stderr,
        analytic,
        sigma_distance: est.sigma_distance(analytic),
        undersampled: est.undersampled,
        config: cfg.clone(),
        dt_bias,
    };
    let mut params = params_json(&p);
    params["witness"] = json!(w.to_spec());
    params["traj"] = json!(a.traj);
    Sink::open(out)?.json(&Meta::new(params).with_seed(a.seed), &report)
}
