//! Command-line flags mirroring `RegistrationConfig`, one per field.

use clap::parser::ValueSource;
use clap::{Arg, ArgAction, ArgMatches};
use edgereg_core::register::RegistrationConfig;

type Getter = fn(&RegistrationConfig) -> String;
type Setter = fn(&mut RegistrationConfig, &str) -> Result<(), String>;

pub struct ConfigFlag {
    pub id: &'static str,
    help: &'static str,
    choices: &'static [&'static str],
    get: Getter,
    set: Setter,
}

fn parse<T: std::str::FromStr>(id: &str, s: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e| format!("invalid value '{s}' for --{id}: {e}"))
}

macro_rules! flag {
    ($id:literal, $($field:ident).+, $help:literal) => {
        flag!($id, $($field).+, $help, &[])
    };
    ($id:literal, $($field:ident).+, $help:literal, $choices:expr) => {
        ConfigFlag {
            id: $id,
            help: $help,
            choices: $choices,
            get: |c| c.$($field).+.to_string(),
            set: |c, s| {
                c.$($field).+ = parse($id, s)?;
                Ok(())
            },
        }
    };
}

const IMAGE_LOSSES: &[&str] = &["lncc", "nmi", "ngf", "mse"];
const EDGE_LOSSES: &[&str] = &["lncc", "mse", "none"];
const MODELS: &[&str] = &["svf-dense", "svf-bspline"];
const BOOLS: &[&str] = &["true", "false"];

pub const CONFIG_FLAGS: &[ConfigFlag] = &[
    flag!("lambda1", lambda1, "Weight of the image similarity term"),
    flag!("lambda2", lambda2, "Weight of the edge-map similarity term"),
    flag!("lambda3", lambda3, "Weight of the diffusion regularizer on the velocity"),
    flag!("im-sim", im_sim, "Image similarity", IMAGE_LOSSES),
    flag!("ed-sim", ed_sim, "Edge-map similarity", EDGE_LOSSES),
    flag!("model", model, "Velocity parameterization", MODELS),
    flag!("spacing", spacing, "B-spline control point spacing in pixels (finest level)"),
    flag!("squaring-steps", squaring_steps, "Scaling-and-squaring steps K"),
    flag!("levels", levels, "Pyramid levels"),
    flag!("iters-per-level", iters_per_level, "Adam iterations per pyramid level"),
    flag!("lr0", optimizer.lr0, "Initial learning rate (pixels per step)"),
    flag!("beta1", optimizer.beta1, "Adam first-moment decay"),
    flag!("beta2", optimizer.beta2, "Adam second-moment decay"),
    flag!("eps-adam", optimizer.eps_adam, "Adam denominator offset"),
    flag!("decay-factor", optimizer.decay_factor, "Learning-rate multiplier per decay step"),
    flag!("decay-every", optimizer.decay_every, "Iterations between learning-rate decays"),
    flag!("window", window, "LNCC window size (odd)"),
    flag!("lncc-eps", lncc_eps, "LNCC variance offset"),
    flag!("bins", bins, "NMI histogram bins"),
    flag!("sigma-ratio", sigma_ratio, "NMI Parzen kernel width in bins"),
    flag!("eps-rel", eps_rel, "NGF noise level relative to the mean gradient magnitude"),
    flag!("sigma-pre", sigma_pre, "Gaussian pre-smoothing of edge maps in pixels"),
    flag!("edge-normalize", edge_normalize, "Divide edge maps by their maximum", BOOLS),
    flag!("seed", seed, "Seed recorded with the run"),
];

/// The `--config` option plus one option per config field except `skip`,
/// with defaults shown in `--help`.
pub fn config_args(skip: &[&str]) -> Vec<Arg> {
    let defaults = RegistrationConfig::default();
    let mut args = vec![Arg::new("config")
        .long("config")
        .value_name("FILE")
        .help("JSON file with registration settings; explicit flags take precedence")
        .action(ArgAction::Set)];
    for f in CONFIG_FLAGS.iter().filter(|f| !skip.contains(&f.id)) {
        let mut arg = Arg::new(f.id)
            .long(f.id)
            .help(f.help)
            .action(ArgAction::Set)
            .default_value((f.get)(&defaults));
        if !f.choices.is_empty() {
            arg = arg.value_parser(f.choices.to_vec());
        }
        args.push(arg);
    }
    args
}

/// Config from defaults, then the `--config` file, then flags given on the
/// command line.
pub fn config_from(m: &ArgMatches) -> Result<RegistrationConfig, String> {
    let mut cfg = match m.get_one::<String>("config") {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config {path}: {e}"))?;
            serde_json::from_str(&text).map_err(|e| format!("invalid config {path}: {e}"))?
        }
        None => RegistrationConfig::default(),
    };
    for f in CONFIG_FLAGS.iter().filter(|f| m.try_contains_id(f.id).unwrap_or(false)) {
        if m.value_source(f.id) == Some(ValueSource::CommandLine) {
            let raw = m.get_one::<String>(f.id).expect("flag has a value");
            (f.set)(&mut cfg, raw)?;
        }
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}
