//! Command-line front end.
//!
//! Every subcommand reads optional settings from `--config`, then applies
//! `--set key=value` overrides, then its own flags. Results go to standard
//! output; failures return a message and an exit code (1 usage, 2 data,
//! 3 numeric).

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::acquisition::Acquisition;
use crate::das::{position_wise, superpose, DasImage};
use crate::error::{Error, Result};
use crate::geometry::{build_delay_table, view_mask, ArrayGeometry, ImageGrid};
use crate::io::checkpoint::{read_checkpoint, write_checkpoint};
use crate::io::config::Settings;
use crate::io::pgm::export_pgm;
use crate::io::records::{
    read_image, read_mask, read_signals, read_stack, write_image, write_pressure, write_signals,
    write_stack,
};
use crate::loss::{
    overlay_loss, rec_loss, response_loss, texture_loss, OverlayMode, VectorizedStack,
};
use crate::metrics::{cnr, psnr, ssim, MetricReport};
use crate::phantom::{gen_dataset, gen_phantom, Manifest, PhantomKind, Split, MANIFEST_NAME};
use crate::postproc::{threshold_separate, Polarity, ThresholdConfig};
use crate::trainer::{
    ablate, build_model, forward_pass, load_phantom, load_split, processed_output, train_samples,
    write_loss_log, ModelParams, TrainConfig,
};

#[derive(Debug, Parser)]
#[command(
    name = "pactkit",
    version,
    about = "Limited-view photoacoustic reconstruction toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone, Default)]
struct Common {
    /// Settings file with `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one setting, e.g. `--set grid=64`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

impl Common {
    fn settings(&self) -> Result<Settings> {
        let mut s = match &self.config {
            Some(p) => Settings::load(p)?,
            None => Settings::default(),
        };
        for o in &self.overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got {o:?}")))?;
            s.set(k.trim(), v.trim()).map_err(usage)?;
        }
        Ok(s)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate one phantom, or a train/test dataset with a manifest.
    Phantom(PhantomArgs),
    /// Simulate full-ring detector signals for a phantom.
    Forward(ForwardArgs),
    /// Position-wise delay-and-sum of a channel range.
    Das(DasArgs),
    /// Sum a position-wise stack into an image.
    Superpose(SuperposeArgs),
    /// Evaluate one loss between two containers.
    Loss(LossArgs),
    /// Train the compensation network on a dataset.
    Train(TrainArgs),
    /// Run a trained model on a quarter-view stack.
    Infer(InferArgs),
    /// Train four models with the delay-data losses toggled.
    Ablate(AblateArgs),
    /// Image quality metrics against a reference.
    Metrics(MetricsArgs),
    /// Threshold a superposed compensator output.
    Threshold(ThresholdArgs),
    /// Write an image container as a 16-bit PGM.
    ExportPgm(ExportArgs),
    /// Phantom, forward, DAS, superposition and metrics in one seeded run.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
struct PhantomArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "discs")]
    kind: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Single phantom output file.
    #[arg(long, conflicts_with = "dataset")]
    out: Option<PathBuf>,
    /// Dataset directory (writes a manifest).
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    n_train: usize,
    #[arg(long, default_value_t = 10)]
    n_test: usize,
}

#[derive(Debug, Args)]
struct ForwardArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    phantom: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Noise seed (defaults to the settings seed).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct DasArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    signals: PathBuf,
    /// Half-open channel range `a:b`.
    #[arg(long)]
    channels: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SuperposeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    stack: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct LossArgs {
    #[command(flatten)]
    common: Common,
    /// response, overlay, texture or rec.
    #[arg(long)]
    kind: String,
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Dataset directory containing a manifest.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model_out: PathBuf,
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct InferArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: PathBuf,
    /// Quarter-view position-wise stack.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, requires = "background")]
    roi: Option<PathBuf>,
    #[arg(long, requires = "roi")]
    background: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ThresholdArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    tau: Option<f64>,
    /// negative or positive.
    #[arg(long, default_value = "negative")]
    polarity: String,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "discs")]
    kind: String,
    #[arg(long)]
    out_dir: PathBuf,
}

/// Exit code and, on failure, a message for the error stream. Results
/// meant for machines are in `stdout`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandOutcome {
    pub code: i32,
    pub stdout: String,
    pub message: Option<String>,
}

struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: e.exit_code(),
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Error {
    Error::InvalidParameter(message.into())
}

type CmdResult = std::result::Result<String, Failure>;

pub fn run<I, T>(argv: I) -> CommandOutcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            return if code == 0 {
                CommandOutcome {
                    code,
                    stdout: text,
                    message: None,
                }
            } else {
                CommandOutcome {
                    code,
                    stdout: String::new(),
                    message: Some(text),
                }
            };
        }
    };
    match dispatch(cli.command) {
        Ok(stdout) => CommandOutcome {
            code: 0,
            stdout,
            message: None,
        },
        Err(f) => CommandOutcome {
            code: f.code,
            stdout: String::new(),
            message: Some(f.message),
        },
    }
}

fn dispatch(command: Command) -> CmdResult {
    match command {
        Command::Phantom(a) => cmd_phantom(a),
        Command::Forward(a) => cmd_forward(a),
        Command::Das(a) => cmd_das(a),
        Command::Superpose(a) => cmd_superpose(a),
        Command::Loss(a) => cmd_loss(a),
        Command::Train(a) => cmd_train(a),
        Command::Infer(a) => cmd_infer(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Metrics(a) => cmd_metrics(a),
        Command::Threshold(a) => cmd_threshold(a),
        Command::ExportPgm(a) => cmd_export(a),
        Command::Pipeline(a) => cmd_pipeline(a),
    }
}

/// Usage errors (bad flags or settings) exit with 1.
fn settings_of(common: &Common) -> std::result::Result<Settings, Failure> {
    common.settings().map_err(|e| Failure {
        code: match e {
            Error::InvalidParameter(_) => 1,
            ref other => other.exit_code(),
        },
        message: e.to_string(),
    })
}

fn parse_or_usage<T: std::str::FromStr<Err = Error>>(s: &str) -> std::result::Result<T, Failure> {
    s.parse().map_err(|e: Error| Failure {
        code: 1,
        message: e.to_string(),
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn cmd_phantom(a: PhantomArgs) -> CmdResult {
    let mut s = settings_of(&a.common)?;
    if let Some(seed) = a.seed {
        s.seed = seed;
    }
    let kind: PhantomKind = parse_or_usage(&a.kind)?;
    let acq = Acquisition::from_settings(&s)?;
    match (a.out, a.dataset) {
        (Some(out), None) => {
            let p0 = gen_phantom(kind, &acq.grid, s.seed)?;
            write_pressure(&out, &p0)?;
            Ok(format!("wrote {}\n", out.display()))
        }
        (None, Some(dir)) => {
            let m = gen_dataset(kind, &acq.grid, s.seed, a.n_train, a.n_test, &dir)?;
            Ok(format!(
                "wrote {} phantoms and {}\n",
                m.entries.len(),
                dir.join(MANIFEST_NAME).display()
            ))
        }
        _ => Err(Failure {
            code: 1,
            message: "phantom needs exactly one of --out or --dataset".into(),
        }),
    }
}

fn cmd_forward(a: ForwardArgs) -> CmdResult {
    let s = settings_of(&a.common)?;
    let acq = Acquisition::from_settings(&s)?;
    let p0 = load_phantom(&a.phantom, &acq)?;
    let signals = acq.simulate(&p0, a.seed.unwrap_or(s.seed))?;
    write_signals(&a.out, &signals)?;
    Ok(format!(
        "wrote {} ({} channels x {} samples)\n",
        a.out.display(),
        signals.channels,
        signals.samples_per_channel
    ))
}

fn parse_range(text: &str, total: usize) -> std::result::Result<(usize, usize), Failure> {
    let bad = || Failure {
        code: 1,
        message: format!("channel range must be a:b with 0 <= a < b <= {total}, got {text:?}"),
    };
    let (a, b) = text.split_once(':').ok_or_else(bad)?;
    let a: usize = a.trim().parse().map_err(|_| bad())?;
    let b: usize = b.trim().parse().map_err(|_| bad())?;
    if a >= b || b > total {
        return Err(bad());
    }
    Ok((a, b))
}

fn cmd_das(a: DasArgs) -> CmdResult {
    let s = settings_of(&a.common)?;
    let signals = read_signals(&a.signals)?;
    let (lo, hi) = parse_range(&a.channels, signals.channels)?;
    let grid = ImageGrid::square(s.grid, s.extent_m)?;
    let table = build_delay_table(&signals.geometry, &grid);
    let channels = view_mask(&signals.geometry, lo, hi - lo)?;
    let stack = position_wise(&signals, &grid, &table, &channels)?;
    write_stack(&a.out, &stack, &signals.geometry)?;
    Ok(format!(
        "wrote {} (C={})\n",
        a.out.display(),
        stack.channels()
    ))
}

fn cmd_superpose(a: SuperposeArgs) -> CmdResult {
    settings_of(&a.common)?;
    let stack = read_stack(&a.stack)?;
    write_image(&a.out, &superpose(&stack), stack.grid.extent)?;
    Ok(format!("wrote {}\n", a.out.display()))
}

fn cmd_loss(a: LossArgs) -> CmdResult {
    settings_of(&a.common)?;
    let value = match a.kind.as_str() {
        "response" | "overlay" => {
            let x = VectorizedStack::from_stack(&read_stack(&a.a)?);
            let y = VectorizedStack::from_stack(&read_stack(&a.b)?);
            if a.kind == "response" {
                response_loss(&x, &y)?.value
            } else {
                overlay_loss(&x, &y, OverlayMode::ClosedForm)?.value
            }
        }
        "texture" => texture_loss(&read_image(&a.a)?.0, &read_image(&a.b)?.0)?.value,
        "rec" => rec_loss(&read_image(&a.a)?.0, &read_image(&a.b)?.0)?.value,
        other => {
            return Err(Failure {
                code: 1,
                message: format!("unknown loss kind {other:?} (response, overlay, texture, rec)"),
            })
        }
    };
    Ok(format!("{value}\n"))
}

fn train_config(s: &Settings) -> std::result::Result<TrainConfig, Failure> {
    let cfg = TrainConfig::from_settings(s);
    cfg.validate().map_err(|e| Failure {
        code: 1,
        message: e.to_string(),
    })?;
    Ok(cfg)
}

fn load_manifest(dir: &Path) -> Result<Manifest> {
    Manifest::read(&dir.join(MANIFEST_NAME))
}

fn cmd_train(a: TrainArgs) -> CmdResult {
    let mut s = settings_of(&a.common)?;
    if let Some(e) = a.epochs {
        s.epochs = e;
    }
    if let Some(seed) = a.seed {
        s.seed = seed;
    }
    let cfg = train_config(&s)?;
    let acq = Acquisition::from_settings(&s)?;
    let manifest = load_manifest(&a.data)?;
    let samples = load_split(&manifest, Split::Train, &acq, s.input_channels, s.seed)?;
    let out = train_samples(build_model(&cfg, s.seed)?, &samples, &cfg)?;
    write_checkpoint(&a.model_out, &out.model.to_named_tensors())?;
    write_loss_log(&a.log, &out.log)?;
    let (first, last) = (out.log[0].total, out.log[out.log.len() - 1].total);
    Ok(format!(
        "epochs={} first_total={first} final_total={last}\n",
        out.log.len()
    ))
}

fn cmd_infer(a: InferArgs) -> CmdResult {
    let s = settings_of(&a.common)?;
    let model = ModelParams::from_named_tensors(read_checkpoint(&a.model)?)?;
    let x = read_stack(&a.input)?;
    let cfg = TrainConfig {
        residual_sign: model.arch.residual_sign,
        ..TrainConfig::from_settings(&s)
    };
    let bundle = forward_pass(&model, &x, &superpose(&x))?;
    let processed = processed_output(&bundle, &cfg)?;
    create_dir(&a.out_dir)?;
    let extent = x.grid.extent;
    let mut out = String::new();
    for (name, img) in [
        ("y0", &bundle.y0),
        ("y_hat", &bundle.y_hat),
        ("sum_g", &bundle.sum_g),
        ("processed", &processed),
    ] {
        let p = a.out_dir.join(format!("{name}.pwd"));
        write_image(&p, img, extent)?;
        out.push_str(&format!("wrote {}\n", p.display()));
    }
    Ok(out)
}

fn cmd_ablate(a: AblateArgs) -> CmdResult {
    let mut s = settings_of(&a.common)?;
    if let Some(e) = a.epochs {
        s.epochs = e;
    }
    let cfg = train_config(&s)?;
    let acq = Acquisition::from_settings(&s)?;
    let manifest = load_manifest(&a.data)?;
    let train = load_split(&manifest, Split::Train, &acq, s.input_channels, s.seed)?;
    let test = load_split(&manifest, Split::Test, &acq, s.input_channels, s.seed)?;
    let result = ablate(&train, &test, &cfg)?;
    create_dir(&a.out_dir)?;
    for case in &result.cases {
        write_image(
            &a.out_dir.join(format!("sum_g_{}.pwd", case.name)),
            &case.bundle.sum_g,
            acq.grid.extent,
        )?;
    }
    let report = a.out_dir.join("report.txt");
    std::fs::write(&report, &result.report).map_err(|e| Error::io(&report, e))?;
    Ok(result.report)
}

fn report_lines(reports: &[MetricReport]) -> String {
    reports.iter().map(|r| format!("{r}\n")).collect()
}

fn cmd_metrics(a: MetricsArgs) -> CmdResult {
    settings_of(&a.common)?;
    let (reference, _) = read_image(&a.reference)?;
    let (test, _) = read_image(&a.test)?;
    let make = |name: &'static str, value: f64, parameters: &str| MetricReport {
        name,
        value,
        reference_id: a.reference.display().to_string(),
        test_id: a.test.display().to_string(),
        parameters: parameters.to_string(),
    };
    let mut reports = vec![
        make("ssim", ssim(&reference, &test)?, "gaussian 11x11 sigma 1.5"),
        make("psnr", psnr(&reference, &test)?, "peak 1 after min-max"),
    ];
    if let (Some(roi), Some(bg)) = (&a.roi, &a.background) {
        let value = cnr(&test, &read_mask(roi)?, &read_mask(bg)?)?;
        reports.push(make("cnr", value, "population std of background"));
    }
    Ok(report_lines(&reports))
}

fn cmd_threshold(a: ThresholdArgs) -> CmdResult {
    let s = settings_of(&a.common)?;
    let polarity: Polarity = parse_or_usage(&a.polarity)?;
    let cfg =
        ThresholdConfig::new(a.tau.unwrap_or(s.tau_fraction), polarity).map_err(|e| Failure {
            code: 1,
            message: e.to_string(),
        })?;
    let (img, grid) = read_image(&a.input)?;
    write_image(&a.out, &threshold_separate(&img, &cfg)?, grid.extent)?;
    Ok(format!("wrote {}\n", a.out.display()))
}

fn cmd_export(a: ExportArgs) -> CmdResult {
    settings_of(&a.common)?;
    let (img, _) = read_image(&a.input)?;
    export_pgm(&img, &a.out)?;
    Ok(format!("wrote {}\n", a.out.display()))
}

fn cmd_pipeline(a: PipelineArgs) -> CmdResult {
    let mut s = settings_of(&a.common)?;
    if let Some(seed) = a.seed {
        s.seed = seed;
    }
    let kind: PhantomKind = parse_or_usage(&a.kind)?;
    let acq = Acquisition::from_settings(&s)?;
    if s.input_channels == 0 || s.input_channels >= s.num_elements {
        return Err(Failure {
            code: 1,
            message: format!("input_channels must lie in [1, {})", s.num_elements),
        });
    }
    create_dir(&a.out_dir)?;
    let dir = &a.out_dir;
    let p0 = gen_phantom(kind, &acq.grid, s.seed)?;
    let signals = acq.simulate(&p0, s.seed)?;
    let quarter = acq.position_wise(&signals, 0, s.input_channels)?;
    let full = acq.position_wise(&signals, 0, s.num_elements)?;
    let das_quarter = superpose(&quarter);
    let das_full = superpose(&full);
    let reference = DasImage::from_pressure(&p0);

    write_pressure(&dir.join("p0.pwd"), &p0)?;
    write_signals(&dir.join("signals.pwd"), &signals)?;
    write_stack(&dir.join("stack_quarter.pwd"), &quarter, &acq.geometry)?;
    write_image(&dir.join("das_quarter.pwd"), &das_quarter, acq.grid.extent)?;
    write_image(&dir.join("das_full.pwd"), &das_full, acq.grid.extent)?;
    export_pgm(&reference, &dir.join("p0.pgm"))?;
    export_pgm(&das_quarter, &dir.join("das_quarter.pgm"))?;
    export_pgm(&das_full, &dir.join("das_full.pgm"))?;

    let mut text = String::new();
    for (label, img) in [("full", &das_full), ("quarter", &das_quarter)] {
        let ssim_v = ssim(&reference, img)?;
        let psnr_v = psnr(&reference, img)?;
        text.push_str(&format!(
            "ssim_{label}={ssim_v:.12}\npsnr_{label}={psnr_v:.12}\n"
        ));
    }
    let metrics = dir.join("metrics.txt");
    std::fs::write(&metrics, &text).map_err(|e| Error::io(&metrics, e))?;
    Ok(text)
}

/// Full-ring geometry used by the settings (for callers building stacks).
pub fn ring_from_settings(s: &Settings) -> Result<ArrayGeometry> {
    ArrayGeometry::full_ring(s.num_elements, s.ring_radius_m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_ok(args: &[&str]) -> String {
        let out = run(std::iter::once("pactkit").chain(args.iter().copied()));
        assert_eq!(out.code, 0, "{args:?}: {:?}", out.message);
        out.stdout
    }

    #[test]
    fn unknown_subcommand_is_usage_error() {
        assert_eq!(run(["pactkit", "frobnicate"]).code, 1);
        assert_eq!(run(["pactkit"]).code, 1);
    }

    #[test]
    fn help_exits_zero() {
        for sub in ["das", "loss", "pipeline", "train"] {
            let out = run(["pactkit", sub, "--help"]);
            assert_eq!(out.code, 0);
            assert!(out.stdout.contains("--config"), "{sub}");
        }
    }

    #[test]
    fn bad_range_and_set_are_usage_errors() {
        assert!(parse_range("5:3", 32).is_err());
        assert!(parse_range("0:33", 32).is_err());
        assert_eq!(parse_range("0:32", 32).ok(), Some((0, 32)));
        let dir = tempfile::tempdir().unwrap();
        let out = run([
            "pactkit",
            "pipeline",
            "--set",
            "bogus=1",
            "--out-dir",
            dir.path().to_str().unwrap(),
        ]);
        assert_eq!(out.code, 1);
        assert!(out.message.unwrap().contains("bogus"));
    }

    #[test]
    fn missing_file_is_data_error() {
        let out = run([
            "pactkit",
            "superpose",
            "--stack",
            "/nonexistent/x.pwd",
            "--out",
            "/tmp/never.pwd",
        ]);
        assert_eq!(out.code, 2);
    }

    #[test]
    fn config_file_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.txt");
        std::fs::write(
            &cfg,
            "grid = 16\nnum_elements = 16\ninput_channels = 4\nseed = 3\n",
        )
        .unwrap();
        let out_dir = dir.path().join("run");
        let text = run_ok(&[
            "pipeline",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "5",
            "--out-dir",
            out_dir.to_str().unwrap(),
        ]);
        assert!(text.contains("ssim_full="));
        let (p0, _) = read_image(&out_dir.join("p0.pwd")).unwrap();
        assert_eq!(p0.height, 16);
        let expected = gen_phantom(
            PhantomKind::Discs,
            &ImageGrid::square(16, 0.026).unwrap(),
            5,
        )
        .unwrap();
        for (a, b) in p0.values.iter().zip(&expected.values) {
            assert_eq!(*a, *b as f32 as f64);
        }
    }
}
