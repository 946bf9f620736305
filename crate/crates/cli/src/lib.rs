//! Configuration, task dispatch and report emission for the `idrate` binary.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use idrate::dimension::{SlopeSettings, SurrogateSettings, Transform};
use idrate::quant::{bussgang_coefficient, lemma4_spectrum_check};
use idrate::rd::log_ladder;
use idrate::report::write_csv;
use idrate::rng::derive_seed;
use idrate::{
    corollary_bound, eval_spectrum, idr_slope_estimate, invariance_suite, kl_bound_check,
    normalize_components, properness_check, rank_integral, rd_curve, rd_dimension_estimate,
    surrogate_idr_estimate, ComplexSpectrum, EstimateReport, FrequencyGrid, ModelDocument,
    RankTolerance, SpectralModel, WelchSettings,
};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const THREADS_ENV: &str = "IDRATE_THREADS";

#[derive(Parser, Debug)]
#[command(
    name = "idrate",
    version,
    about = "Information dimension rate of stationary Gaussian processes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub task: Task,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Rank integral, rank profile and the complex-process bound.
    Analyze,
    /// Block-entropy slope and Gaussian-surrogate estimates.
    Estimate,
    /// Rate-distortion curve and dimension.
    Rd,
    /// Invariance, Bussgang, spectral-residual and KL checks.
    Verify,
    /// Treat a bivariate model as `(Re Z, Im Z)`.
    Complex,
}

#[derive(Args, Debug, Default, Clone)]
pub struct Flags {
    /// JSON experiment config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Model document path, or `builtin:<name>`.
    #[arg(long, global = true)]
    pub model: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Frequency grid size.
    #[arg(long, global = true)]
    pub grid: Option<usize>,
    /// Comma-separated quantizer precisions for the block-entropy slope.
    #[arg(long, global = true, value_delimiter = ',')]
    pub m_ladder: Option<Vec<u32>>,
    /// Report file; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Model given inline or by reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelRef {
    /// File path, or `builtin:<name>` for a benchmark model.
    Path(String),
    Inline(Box<ModelDocument>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateConfig {
    pub m_ladder: Option<Vec<u32>>,
    pub k: Option<usize>,
    pub paths: Option<usize>,
    pub synthesis_grid: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub slope: f64,
    pub surrogate: f64,
    pub rd: f64,
    pub invariance: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            slope: 0.05,
            surrogate: 0.05,
            rd: 0.01,
            invariance: 0.05,
        }
    }
}

/// On-disk experiment description. Every field is optional so flags can
/// fill the gaps; precedence is flags, then config, then defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: Option<ModelRef>,
    pub task: Option<Task>,
    pub seed: Option<u64>,
    pub grid: Option<usize>,
    pub m_ladder: Option<Vec<u32>>,
    /// Block length; absent means chosen by the undersampling guard.
    pub k: Option<usize>,
    pub paths: Option<usize>,
    #[serde(default)]
    pub surrogate: SurrogateConfig,
    pub d_ladder: Option<Vec<f64>>,
    /// Bussgang precisions for `verify`.
    pub bussgang_m: Option<Vec<u32>>,
    pub tolerances: Option<Tolerances>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    fn overlay(mut self, flags: &Flags) -> Self {
        if let Some(m) = &flags.model {
            self.model = Some(ModelRef::Path(m.clone()));
        }
        self.seed = flags.seed.or(self.seed);
        self.grid = flags.grid.or(self.grid);
        self.m_ladder = flags.m_ladder.clone().or(self.m_ladder);
        self.out = flags.out.clone().or(self.out);
        self.format = flags.format.or(self.format);
        self
    }
}

/// Settings after flags, config and defaults are merged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub task: Task,
    pub model: ModelRef,
    pub seed: Option<u64>,
    /// Absent: the model document's grid, else the default.
    pub grid: Option<usize>,
    pub slope: SlopeSettings,
    pub surrogate: SurrogateSettings,
    pub d_ladder: Vec<f64>,
    pub bussgang_m: Vec<u32>,
    pub tolerances: Tolerances,
    pub format: Format,
    pub out: Option<PathBuf>,
}

pub fn resolve(task: Task, flags: &Flags) -> Result<Resolved> {
    let cfg = match &flags.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    }
    .overlay(flags);
    if let Some(t) = cfg.task.filter(|t| *t != task) {
        bail!("config is for task `{t:?}` but `{task:?}` was requested");
    }
    let model = cfg
        .model
        .clone()
        .context("no model given: set `model` in the config or pass --model")?;
    let stochastic = matches!(task, Task::Estimate | Task::Verify);
    if stochastic && cfg.seed.is_none() {
        bail!("task `{task:?}` draws random samples and needs a seed (--seed or `seed` in the config)");
    }
    let seed = cfg.seed.unwrap_or(0);
    let slope_default = SlopeSettings::default();
    let slope = SlopeSettings {
        m_ladder: cfg.m_ladder.clone().unwrap_or(slope_default.m_ladder),
        k: cfg.k.or(slope_default.k),
        paths: cfg.paths.unwrap_or(slope_default.paths),
        seed: derive_seed(seed, "slope"),
        miller_madow: true,
    };
    let sd = SurrogateSettings::default();
    let surrogate = SurrogateSettings {
        m_ladder: cfg.surrogate.m_ladder.clone().unwrap_or(sd.m_ladder),
        k: cfg.surrogate.k.unwrap_or(sd.k),
        paths: cfg.surrogate.paths.unwrap_or(sd.paths),
        seed: derive_seed(seed, "surrogate"),
        welch: WelchSettings::default(),
        synthesis_grid: cfg.surrogate.synthesis_grid.unwrap_or(sd.synthesis_grid),
    };
    Ok(Resolved {
        task,
        model,
        seed: cfg.seed,
        grid: cfg.grid,
        slope,
        surrogate,
        d_ladder: cfg
            .d_ladder
            .clone()
            .unwrap_or_else(|| vec![1e-2, 1e-4, 1e-6]),
        bussgang_m: cfg
            .bussgang_m
            .clone()
            .unwrap_or_else(|| vec![2, 4, 8, 16, 32, 64, 128, 256]),
        tolerances: cfg.tolerances.clone().unwrap_or_default(),
        format: cfg.format.unwrap_or_default(),
        out: cfg.out,
    })
}

pub fn load_document(r: &ModelRef) -> Result<ModelDocument> {
    match r {
        ModelRef::Inline(doc) => Ok((**doc).clone()),
        ModelRef::Path(p) => {
            if let Some(name) = p.strip_prefix("builtin:") {
                let suite = idrate::suite::benchmark_suite()?;
                return suite
                    .into_iter()
                    .find(|m| m.name == name)
                    .map(|m| m.model.to_document())
                    .with_context(|| format!("unknown builtin model `{name}`"));
            }
            let text = std::fs::read_to_string(p).with_context(|| format!("reading model {p}"))?;
            Ok(ModelDocument::from_json(&text)?)
        }
    }
}

pub fn load_model(r: &ModelRef) -> Result<SpectralModel> {
    Ok(SpectralModel::from_document(&load_document(r)?)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub task: Task,
    /// SHA-256 of the canonical model document.
    pub model: String,
    pub settings: Resolved,
    pub reports: Vec<EstimateReport>,
    /// Excluded from determinism comparisons.
    pub wall_time_s: f64,
    pub pass: bool,
}

pub fn run(settings: &Resolved) -> Result<RunReport> {
    let start = Instant::now();
    let doc = load_document(&settings.model)?;
    let model = SpectralModel::from_document(&doc)?;
    let grid = FrequencyGrid::new(
        settings
            .grid
            .or(doc.grid)
            .unwrap_or(idrate::spectral::DEFAULT_GRID),
    )?;
    let tol = RankTolerance {
        relative: doc.tau_rank.unwrap_or(RankTolerance::default().relative),
        ..RankTolerance::default()
    };
    let reports = match settings.task {
        Task::Analyze => analyze(&model, &grid, tol)?,
        Task::Estimate => estimate(&model, settings)?,
        Task::Rd => rd(&model, &grid, settings)?,
        Task::Verify => verify(&model, settings)?,
        Task::Complex => complex(&model, &grid, tol)?,
    };
    let pass = reports.iter().all(EstimateReport::passed);
    Ok(RunReport {
        task: settings.task,
        model: model.fingerprint(),
        settings: settings.clone(),
        reports,
        wall_time_s: start.elapsed().as_secs_f64(),
        pass,
    })
}

fn analyze(
    model: &SpectralModel,
    grid: &FrequencyGrid,
    tol: RankTolerance,
) -> Result<Vec<EstimateReport>> {
    let ri = rank_integral(model, grid, tol).context("analyze: rank integral")?;
    let mut out = vec![EstimateReport::exact("d", "rank-integral", ri.value)
        .setting("grid", grid.len())
        .setting("tau_rank", tol.relative)];
    for (r, f) in ri
        .profile
        .rank_fractions(model.dim())
        .into_iter()
        .enumerate()
    {
        out.push(EstimateReport::exact(
            format!("rank-fraction-{r}"),
            "rank-profile",
            f,
        ));
    }
    if model.dim() == 2 {
        out.extend(complex_bound(model, grid, tol)?);
    }
    Ok(out)
}

fn complex_bound(
    model: &SpectralModel,
    grid: &FrequencyGrid,
    tol: RankTolerance,
) -> Result<Vec<EstimateReport>> {
    let b = corollary_bound(model, grid, tol).context("complex bound")?;
    Ok(vec![
        EstimateReport::exact("support-measure", "s_z-support", b.support_measure),
        EstimateReport::exact("complex-bound", "two-support-measure", b.bound)
            .with_check(b.ordering_holds, b.grid_tolerance)
            .setting("d", b.d_exact)
            .setting("equal", b.equal),
    ])
}

fn estimate(model: &SpectralModel, s: &Resolved) -> Result<Vec<EstimateReport>> {
    let slope = idr_slope_estimate(model, &s.slope).context("estimate: block-entropy slope")?;
    let sur = surrogate_idr_estimate(model, &s.surrogate).context("estimate: surrogate")?;
    Ok(vec![
        EstimateReport::from_dimension("d", &slope, s.tolerances.slope),
        EstimateReport::from_dimension("d", &sur, s.tolerances.surrogate),
    ])
}

fn rd(model: &SpectralModel, grid: &FrequencyGrid, s: &Resolved) -> Result<Vec<EstimateReport>> {
    let est = rd_dimension_estimate(model, grid, &s.d_ladder).context("rd: dimension")?;
    let norm = normalize_components(model)?;
    let mut out = vec![EstimateReport::from_dimension("d", &est, s.tolerances.rd)];
    if norm.model.dim() > 0 {
        let total = norm.model.dim() as f64;
        let curve = rd_curve(&norm.model, grid, &log_ladder(total, total * 1e-6, 25))
            .context("rd: curve")?;
        for p in &curve.points {
            out.push(
                EstimateReport::exact("rate", "reverse-water-filling", p.rate)
                    .setting("D", p.distortion)
                    .setting("w", p.water_level),
            );
        }
        if let Some(path) = &s.out {
            let curve_path = path.with_extension("rd.csv");
            curve
                .write_csv(&curve_path)
                .with_context(|| format!("writing {}", curve_path.display()))?;
        }
    }
    Ok(out)
}

fn verify(model: &SpectralModel, s: &Resolved) -> Result<Vec<EstimateReport>> {
    let seed = s.seed.expect("seed checked in resolve");
    let tol = s.tolerances.invariance;
    let mut out = Vec::new();
    for t in [
        Transform::Scale(vec![3.0]),
        Transform::Translate(vec![10.0]),
    ] {
        let name = match t {
            Transform::Scale(_) => "scale",
            Transform::Translate(_) => "translate",
        };
        let r = invariance_suite(model, &t, &s.slope)
            .with_context(|| format!("verify: {name} invariance"))?;
        out.push(
            EstimateReport::exact(format!("{name}-invariance"), "slope-difference", r.delta)
                .with_se(r.base.se.hypot(r.transformed.se))
                .against(0.0, tol),
        );
        for e in &r.exact {
            out.push(
                EstimateReport::exact("translation-entropy-shift", "cell-quadrature", e.delta)
                    .with_check(e.pass, e.bound)
                    .setting("m", e.m)
                    .setting("offset", &e.offset),
            );
        }
    }
    let norm = normalize_components(model)?;
    if norm.model.dim() == 0 {
        return Ok(out);
    }
    let batch = idrate::dimension::sample_blocks(
        &norm.model,
        1024,
        500,
        derive_seed(seed, "verify:bussgang"),
    )?;
    for &m in &s.bussgang_m {
        let r = bussgang_coefficient(&batch, m)
            .with_context(|| format!("verify: Bussgang at m = {m}"))?;
        for (i, c) in r.components.iter().enumerate() {
            out.push(
                EstimateReport::exact(format!("bussgang-gain-{i}"), "regression", c.a)
                    .with_se(c.se)
                    .with_check(c.bound_holds, c.bound)
                    .setting("m", m),
            );
            out.push(
                EstimateReport::exact(format!("noise-variance-{i}"), "sample", c.noise_variance)
                    .with_check(c.noise_holds, c.noise_bound)
                    .setting("m", m),
            );
        }
    }
    for m in [1, 8] {
        let r = lemma4_spectrum_check(&batch, m, WelchSettings::default())
            .with_context(|| format!("verify: spectral residual at m = {m}"))?;
        out.push(
            EstimateReport::exact("spectral-residual", "welch", r.mean_residual)
                .with_se(r.se)
                .with_check(r.pass, 5.0 * r.se)
                .setting("m", m)
                .setting("noise_power", r.noise_power),
        );
    }
    if norm.model.dim() <= 2 {
        for m in [1, 2, 4, 8] {
            let r = kl_bound_check(&norm.model, 1, m)
                .with_context(|| format!("verify: KL at m = {m}"))?;
            out.push(
                EstimateReport::exact("kl-divergence", "cell-quadrature", r.kl)
                    .with_check(r.pass, r.bound)
                    .setting("m", m),
            );
        }
    }
    Ok(out)
}

fn complex(
    model: &SpectralModel,
    grid: &FrequencyGrid,
    tol: RankTolerance,
) -> Result<Vec<EstimateReport>> {
    if model.dim() != 2 {
        bail!(
            "complex: model must be bivariate (Re, Im), got L = {}",
            model.dim()
        );
    }
    let spec = eval_spectrum(model, grid)?;
    let p = properness_check(&spec)?;
    let cs = ComplexSpectrum::from_bivariate(spec)?;
    let power: f64 = cs.s_z.iter().sum::<f64>() * grid.weight();
    let mut out = vec![
        EstimateReport::exact("properness-gap", "diagonal", p.max_diagonal_gap)
            .setting("proper", p.proper),
        EstimateReport::exact("properness-gap", "real-cross", p.max_real_cross)
            .setting("tolerance", p.tolerance),
        EstimateReport::exact("power", "s_z", power),
    ];
    out.extend(complex_bound(model, grid, tol)?);
    Ok(out)
}

pub fn emit(report: &RunReport, format: Format, out: Option<&Path>) -> Result<()> {
    let mut buf = Vec::new();
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut buf, report)?;
            buf.push(b'\n');
        }
        Format::Csv => write_csv(&report.reports, &mut buf)?,
    }
    match out {
        Some(p) => std::fs::write(p, buf).with_context(|| format!("writing {}", p.display())),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(&buf)?;
            Ok(())
        }
    }
}

pub fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .with_context(|| format!("{THREADS_ENV} must be a positive integer, got `{v}`"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(model: &str) -> Flags {
        Flags {
            model: Some(model.into()),
            ..Flags::default()
        }
    }

    #[test]
    fn unknown_config_fields_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"seed": 1, "sead": 2}"#).is_err());
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"surrogate": {"kk": 2}}"#).is_err());
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"model": "builtin:white", "task": "rd"}"#).unwrap();
        assert_eq!(cfg.task, Some(Task::Rd));
    }

    #[test]
    fn stochastic_tasks_need_a_seed() {
        let err = resolve(Task::Estimate, &flags("builtin:white")).unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
        assert!(resolve(Task::Analyze, &flags("builtin:white")).is_ok());
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(
            &path,
            r#"{"model": "builtin:zero", "seed": 5, "grid": 512, "m_ladder": [4, 8]}"#,
        )
        .unwrap();
        let f = Flags {
            config: Some(path),
            grid: Some(1024),
            ..Flags::default()
        };
        let r = resolve(Task::Estimate, &f).unwrap();
        assert_eq!(r.grid, Some(1024));
        assert_eq!(r.seed, Some(5));
        assert_eq!(r.slope.m_ladder, vec![4, 8]);
        assert_eq!(r.model, ModelRef::Path("builtin:zero".into()));
    }

    #[test]
    fn analyze_band_model() {
        let r = run(&resolve(Task::Analyze, &flags("builtin:band-0.4")).unwrap()).unwrap();
        assert!((r.reports[0].value - 0.4).abs() < 1e-12);
        // Profile fractions are per grid cell; only the integral is endpoint-exact.
        assert!(
            (r.reports[2].value - 0.4).abs() <= 1.0 / 4096.0,
            "rank-1 fraction"
        );
        assert!(r.pass);
    }

    #[test]
    fn inline_model_document() {
        let cfg: ExperimentConfig = serde_json::from_str(
            r#"{"model": {"L": 1, "bands": [{"lo": -0.25, "hi": 0.25, "re": [[2.0]]}]}}"#,
        )
        .unwrap();
        let m = load_model(cfg.model.as_ref().unwrap()).unwrap();
        assert_eq!(m.dim(), 1);
    }

    #[test]
    fn schema_lists_every_config_field() {
        let schema: serde_json::Value =
            serde_json::from_str(include_str!("../config.schema.json")).unwrap();
        let mut documented: Vec<&String> =
            schema["properties"].as_object().unwrap().keys().collect();
        documented.sort();
        let full = ExperimentConfig {
            model: Some(ModelRef::Path("x".into())),
            task: Some(Task::Rd),
            seed: Some(1),
            grid: Some(8),
            m_ladder: Some(vec![1]),
            k: Some(1),
            paths: Some(2),
            surrogate: SurrogateConfig::default(),
            d_ladder: Some(vec![1.0]),
            bussgang_m: Some(vec![1]),
            tolerances: Some(Tolerances::default()),
            out: Some("o".into()),
            format: Some(Format::Csv),
        };
        let value = serde_json::to_value(&full).unwrap();
        let mut fields: Vec<&String> = value.as_object().unwrap().keys().collect();
        fields.sort();
        assert_eq!(documented, fields);
    }

    #[test]
    fn document_grid_is_used_unless_overridden() {
        let cfg: ExperimentConfig = serde_json::from_str(
            r#"{"model": {"L": 1, "bands": [{"lo": -0.3, "hi": 0.3, "re": [[1.0]]}], "grid": 64}}"#,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
        let f = Flags {
            config: Some(path),
            ..Flags::default()
        };
        let r = run(&resolve(Task::Analyze, &f).unwrap()).unwrap();
        assert_eq!(r.reports[0].settings["grid"], 64);
        let f = Flags {
            grid: Some(128),
            ..f
        };
        let r = run(&resolve(Task::Analyze, &f).unwrap()).unwrap();
        assert_eq!(r.reports[0].settings["grid"], 128);
    }
}
