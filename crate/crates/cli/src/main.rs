//! `edgereg`: edge-augmented diffeomorphic registration of 2D images.
//!
//! Exit status: 0 success, 1 usage error, 2 data error, 3 numerical
//! divergence.

mod flags;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{value_parser, Arg, ArgMatches, Command};
use edgereg_core::bench::{run_bench, threads_from_env, write_rows_csv, write_summary_csv, BenchConfig, THREADS_ENV};
use edgereg_core::edge::{edge_map, EdgeOptions};
use edgereg_core::eval::{evaluate_displacement, EvalReport};
use edgereg_core::io::{load_label_pgm, load_pgm, read_field, save_label_pgm, save_pgm, write_field, PgmDepth};
use edgereg_core::register::{register_pair, ImageLoss, RegistrationConfig};
use edgereg_core::synth::make_pair;
use edgereg_core::transform::warp_image;
use edgereg_core::Error;

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type CmdResult = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn path_arg(id: &'static str, help: &'static str) -> Arg {
    Arg::new(id)
        .long(id)
        .value_name("PATH")
        .help(help)
        .required(true)
        .value_parser(value_parser!(PathBuf))
}

fn depth_arg() -> Arg {
    Arg::new("depth")
        .long("depth")
        .help("Bit depth of written PGM images")
        .value_parser(["8", "16"])
        .default_value("8")
}

fn jobs_arg() -> Arg {
    Arg::new("jobs")
        .long("jobs")
        .value_name("N")
        .help(format!("Worker threads (default: all cores, capped by {THREADS_ENV})"))
        .value_parser(value_parser!(u64).range(1..))
}

fn command() -> Command {
    let defaults = BenchConfig::default();
    let list = |xs: &[f64]| xs.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
    Command::new("edgereg")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Edge-augmented diffeomorphic registration of 2D multi-modal images")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(
            Command::new("edgemap")
                .about("Write the normalized gradient-magnitude edge map of an image")
                .arg(path_arg("input", "Input PGM image"))
                .arg(path_arg("out", "Output PGM image"))
                .arg(
                    Arg::new("sigma")
                        .long("sigma")
                        .help("Gaussian pre-smoothing in pixels")
                        .value_parser(value_parser!(f64))
                        .default_value(EdgeOptions::default().sigma_pre.to_string()),
                )
                .arg(
                    Arg::new("normalize")
                        .long("normalize")
                        .help("Divide by the maximum magnitude")
                        .value_parser(value_parser!(bool))
                        .default_value(EdgeOptions::default().normalize.to_string()),
                )
                .arg(depth_arg()),
        )
        .subcommand(
            Command::new("synth")
                .about("Generate a seeded multi-modal phantom pair with ground truth")
                .arg(
                    Arg::new("seed")
                        .long("seed")
                        .value_parser(value_parser!(u64))
                        .default_value("0")
                        .help("Phantom and deformation seed"),
                )
                .arg(
                    Arg::new("size")
                        .long("size")
                        .value_parser(value_parser!(usize))
                        .default_value(defaults.size.to_string())
                        .help("Image width and height in pixels"),
                )
                .arg(
                    Arg::new("max-disp")
                        .long("max-disp")
                        .value_parser(value_parser!(f64))
                        .default_value(defaults.max_disp.to_string())
                        .help("Peak ground-truth displacement in pixels"),
                )
                .arg(path_arg("out", "Output directory")),
        )
        .subcommand(
            Command::new("register")
                .about("Register a moving image onto a fixed image")
                .arg(path_arg("fixed", "Fixed PGM image"))
                .arg(path_arg("moving", "Moving PGM image"))
                .arg(path_arg("out", "Output directory (disp.edr1, warped.pgm, report.json, loss_history.json)"))
                .arg(
                    Arg::new("fixed-seg")
                        .long("fixed-seg")
                        .value_name("PATH")
                        .help("Fixed segmentation PGM; enables Dice in the report")
                        .requires("moving-seg")
                        .value_parser(value_parser!(PathBuf)),
                )
                .arg(
                    Arg::new("moving-seg")
                        .long("moving-seg")
                        .value_name("PATH")
                        .help("Moving segmentation PGM")
                        .requires("fixed-seg")
                        .value_parser(value_parser!(PathBuf)),
                )
                .arg(depth_arg())
                .args(flags::config_args(&[])),
        )
        .subcommand(
            Command::new("eval")
                .about("Score a displacement field against a pair of segmentations")
                .arg(path_arg("fixed-seg", "Fixed segmentation PGM"))
                .arg(path_arg("moving-seg", "Moving segmentation PGM"))
                .arg(path_arg("disp", "Displacement field (EDR1)"))
                .arg(path_arg("out", "Output JSON report"))
                .arg(
                    Arg::new("run-report")
                        .long("run-report")
                        .value_name("PATH")
                        .help("report.json of the registration run; its config and runtime are echoed")
                        .value_parser(value_parser!(PathBuf)),
                ),
        )
        .subcommand(
            Command::new("bench")
                .about("Benchmark edge-on vs edge-off registration on synthetic pairs")
                .arg(
                    Arg::new("pairs")
                        .long("pairs")
                        .value_parser(value_parser!(usize))
                        .default_value(defaults.pairs.to_string())
                        .help("Number of phantom pairs"),
                )
                .arg(
                    Arg::new("seed")
                        .long("seed")
                        .value_parser(value_parser!(u64))
                        .default_value(defaults.seed.to_string())
                        .help("Seed of the first pair; pair i uses seed + i"),
                )
                .arg(
                    Arg::new("size")
                        .long("size")
                        .value_parser(value_parser!(usize))
                        .default_value(defaults.size.to_string())
                        .help("Image width and height in pixels"),
                )
                .arg(
                    Arg::new("max-disp")
                        .long("max-disp")
                        .value_parser(value_parser!(f64))
                        .default_value(defaults.max_disp.to_string())
                        .help("Peak ground-truth displacement in pixels"),
                )
                .arg(
                    Arg::new("losses")
                        .long("losses")
                        .value_delimiter(',')
                        .value_parser(["lncc", "nmi", "ngf", "mse"])
                        .default_value("lncc,nmi,ngf")
                        .help("Image similarities to compare"),
                )
                .arg(
                    Arg::new("sweep-lambda2")
                        .long("sweep-lambda2")
                        .value_delimiter(',')
                        .value_parser(value_parser!(f64))
                        .default_value(list(&defaults.lambda2))
                        .help("Edge weights to sweep"),
                )
                .arg(
                    Arg::new("sweep-lambda3")
                        .long("sweep-lambda3")
                        .value_delimiter(',')
                        .value_parser(value_parser!(f64))
                        .default_value(list(&defaults.lambda3))
                        .help("Regularization weights to sweep"),
                )
                .arg(jobs_arg())
                .arg(path_arg("out", "Output directory (results.csv, summary.csv, bench.json)"))
                .args(flags::config_args(&["seed"])),
        )
}

fn depth(m: &ArgMatches) -> PgmDepth {
    match m.get_one::<String>("depth").map(String::as_str) {
        Some("16") => PgmDepth::Word,
        _ => PgmDepth::Byte,
    }
}

fn path<'a>(m: &'a ArgMatches, id: &str) -> &'a Path {
    m.get_one::<PathBuf>(id).expect("required path")
}

fn create_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).map_err(|e| Failure::Data(Error::Io {
        path: dir.to_path_buf(),
        source: e,
    }))
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> CmdResult {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    fs::write(path, text + "\n").map_err(|e| {
        Failure::Data(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn create_file(path: &Path) -> Result<fs::File, Failure> {
    fs::File::create(path).map_err(|e| {
        Failure::Data(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn cmd_edgemap(m: &ArgMatches) -> CmdResult {
    let img = load_pgm(path(m, "input"))?;
    let opts = EdgeOptions {
        sigma_pre: *m.get_one::<f64>("sigma").unwrap(),
        normalize: *m.get_one::<bool>("normalize").unwrap(),
    };
    if !(opts.sigma_pre >= 0.0 && opts.sigma_pre.is_finite()) {
        return Err(usage("--sigma must be a non-negative number"));
    }
    let edges = edge_map(&img, &opts)?;
    save_pgm(&edges, path(m, "out"), depth(m))?;
    Ok(())
}

fn cmd_synth(m: &ArgMatches) -> CmdResult {
    let seed = *m.get_one::<u64>("seed").unwrap();
    let size = *m.get_one::<usize>("size").unwrap();
    let max_disp = *m.get_one::<f64>("max-disp").unwrap();
    let pair = make_pair(seed, size, max_disp).map_err(|e| match e {
        Error::InvalidArgument(msg) => usage(msg),
        other => Failure::Data(other),
    })?;
    let out = path(m, "out");
    create_dir(out)?;
    save_pgm(&pair.fixed, out.join("fixed.pgm"), PgmDepth::Word)?;
    save_pgm(&pair.moving, out.join("moving.pgm"), PgmDepth::Word)?;
    save_label_pgm(&pair.fixed_seg, out.join("fixed_seg.pgm"))?;
    save_label_pgm(&pair.moving_seg, out.join("moving_seg.pgm"))?;
    write_field(&pair.gt_displacement, out.join("gt_disp.edr1"))?;
    let manifest = serde_json::json!({
        "seed": seed,
        "size": size,
        "max_disp": max_disp,
        "files": {
            "fixed": "fixed.pgm",
            "moving": "moving.pgm",
            "fixed_seg": "fixed_seg.pgm",
            "moving_seg": "moving_seg.pgm",
            "gt_displacement": "gt_disp.edr1",
        },
    });
    write_json(&manifest, &out.join("manifest.json"))
}

fn cmd_register(m: &ArgMatches) -> CmdResult {
    let cfg = flags::config_from(m).map_err(usage)?;
    let fixed = load_pgm(path(m, "fixed"))?;
    let moving = load_pgm(path(m, "moving"))?;
    let segs = match (m.get_one::<PathBuf>("fixed-seg"), m.get_one::<PathBuf>("moving-seg")) {
        (Some(f), Some(s)) => Some((load_label_pgm(f)?, load_label_pgm(s)?)),
        _ => None,
    };
    let out = path(m, "out");
    create_dir(out)?;
    let result = match register_pair(&fixed, &moving, &cfg) {
        Ok(r) => r,
        Err(Error::Divergence {
            level,
            iteration,
            what,
            partial_history,
        }) => {
            write_json(&partial_history, &out.join("loss_history.json"))?;
            return Err(Failure::Data(Error::Divergence {
                level,
                iteration,
                what,
                partial_history: vec![],
            }));
        }
        Err(e) => return Err(e.into()),
    };
    write_field(&result.displacement, out.join("disp.edr1"))?;
    let warped = warp_image(&moving, &result.displacement)?;
    save_pgm(&warped, out.join("warped.pgm"), depth(m))?;
    write_json(&result.loss_history, &out.join("loss_history.json"))?;
    let (fixed_seg, moving_seg) = match segs {
        Some(s) => s,
        None => {
            // no segmentations: the report carries only the regularity metrics
            let empty = edgereg_core::LabelMap2D::new(fixed.width(), fixed.height(), vec![0; fixed.len()])?;
            (empty.clone(), empty)
        }
    };
    let report = evaluate_displacement(&fixed_seg, &moving_seg, &result.displacement, result.runtime_ms, &cfg)?;
    write_json(&report, &out.join("report.json"))
}

fn cmd_eval(m: &ArgMatches) -> CmdResult {
    let fixed_seg = load_label_pgm(path(m, "fixed-seg"))?;
    let moving_seg = load_label_pgm(path(m, "moving-seg"))?;
    let disp = read_field(path(m, "disp"))?;
    let (config, runtime_ms) = match m.get_one::<PathBuf>("run-report") {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::Data(Error::Io {
                path: p.clone(),
                source: e,
            }))?;
            let run: EvalReport = serde_json::from_str(&text).map_err(Error::from)?;
            (run.config, run.runtime_ms)
        }
        None => (RegistrationConfig::default(), 0.0),
    };
    let report = evaluate_displacement(&fixed_seg, &moving_seg, &disp, runtime_ms, &config)?;
    write_json(&report, path(m, "out"))
}

fn cmd_bench(m: &ArgMatches) -> CmdResult {
    let seed = *m.get_one::<u64>("seed").unwrap();
    let base = RegistrationConfig {
        seed,
        ..flags::config_from(m).map_err(usage)?
    };
    let losses = m
        .get_many::<String>("losses")
        .unwrap()
        .map(|s| s.parse::<ImageLoss>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| usage(e.to_string()))?;
    let cfg = BenchConfig {
        pairs: *m.get_one::<usize>("pairs").unwrap(),
        seed,
        size: *m.get_one::<usize>("size").unwrap(),
        max_disp: *m.get_one::<f64>("max-disp").unwrap(),
        losses,
        lambda2: m.get_many::<f64>("sweep-lambda2").unwrap().copied().collect(),
        lambda3: m.get_many::<f64>("sweep-lambda3").unwrap().copied().collect(),
        base,
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let jobs = m.get_one::<u64>("jobs").map(|&j| usize::try_from(j).unwrap_or(usize::MAX));
    let threads = match (jobs, threads_from_env()) {
        (Some(j), Some(cap)) => Some(j.min(cap)),
        (j, cap) => j.or(cap),
    };
    let out = path(m, "out");
    create_dir(out)?;
    let outcome = run_bench(&cfg, threads, &|done, total| {
        eprintln!("bench: {done}/{total} registrations");
    })?;
    write_rows_csv(&outcome.rows, create_file(&out.join("results.csv"))?)?;
    write_summary_csv(&outcome.summary, create_file(&out.join("summary.csv"))?)?;
    write_json(&cfg, &out.join("bench.json"))
}

fn main() -> ExitCode {
    let matches = match command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let outcome = match name {
        "edgemap" => cmd_edgemap(sub),
        "synth" => cmd_synth(sub),
        "register" => cmd_register(sub),
        "eval" => cmd_eval(sub),
        "bench" => cmd_bench(sub),
        _ => unreachable!("unknown subcommand"),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e @ Error::Divergence { .. })) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_is_well_formed() {
        command().debug_assert();
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("cfg.json");
        fs::write(&file, r#"{"lambda2": 0.25, "window": 5}"#).unwrap();
        let m = command()
            .try_get_matches_from([
                "edgereg", "register", "--fixed", "f", "--moving", "m", "--out", "o", "--config",
                file.to_str().unwrap(), "--window", "7",
            ])
            .unwrap();
        let cfg = flags::config_from(m.subcommand_matches("register").unwrap()).unwrap_or_else(|e| panic!("{e}"));
        assert_eq!(cfg.lambda2, 0.25);
        assert_eq!(cfg.window, 7);
        assert_eq!(cfg.lambda1, RegistrationConfig::default().lambda1);
    }
}
