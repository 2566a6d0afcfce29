//! Registration driver.
//!
//! One velocity field drives both the image branch and the edge branch:
//!
//! ```text
//! total = l1 * sim(F, M o phi) + l2 * edge_sim(E_F, E_M o phi) + l3 * reg(v)
//! phi   = exp(v)
//! ```
//!
//! The gradients of both similarity branches are summed into a single
//! displacement cotangent before being pulled back through scaling and
//! squaring (and through the B-spline expansion for the lattice model).

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::edge::{edge_map, EdgeOptions};
use crate::error::{check_shape, Error, Result};
use crate::grid::{normalize_minmax, Image2D, VectorField2D};
use crate::optim::{AdamState, OptimizerConfig};
use crate::similarity::{lncc, mse, ngf, nmi, reg_diffusion, LossValueGrad};
use crate::transform::{
    bspline_adjoint, bspline_to_dense, svf_exp, svf_exp_adjoint_from_trace, svf_exp_trace,
    warp_adjoint, warp_image, BSplineGrid, SquaringConfig, MAX_SQUARINGS,
};

/// Smallest image side accepted by [`register_pair`].
pub const MIN_REGISTRATION_SIZE: usize = 16;

/// Smallest side of the coarsest pyramid level.
pub const MIN_LEVEL_SIZE: usize = 4;

macro_rules! keyword_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(Error::invalid(format!(
                        "unknown {} '{}' (expected one of: {})",
                        stringify!($name),
                        other,
                        [$($text),+].join(", ")
                    ))),
                }
            }
        }
    };
}

keyword_enum!(
    /// Similarity measure of the image branch.
    ImageLoss { Lncc => "lncc", Nmi => "nmi", Ngf => "ngf", Mse => "mse" }
);

keyword_enum!(
    /// Similarity measure of the edge branch.
    EdgeLoss { Lncc => "lncc", Mse => "mse", None => "none" }
);

keyword_enum!(
    /// Velocity parameterization.
    TransformModel { SvfDense => "svf-dense", SvfBspline => "svf-bspline" }
);

/// Every knob of a registration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistrationConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub im_sim: ImageLoss,
    pub ed_sim: EdgeLoss,
    pub model: TransformModel,
    /// Control-point spacing at the finest level (B-spline model only).
    pub spacing: usize,
    /// Number of squarings in the exponential.
    pub squaring_steps: u32,
    pub levels: usize,
    pub iters_per_level: usize,
    pub optimizer: OptimizerConfig,
    pub window: usize,
    pub lncc_eps: f64,
    pub bins: usize,
    pub sigma_ratio: f64,
    pub eps_rel: f64,
    pub sigma_pre: f64,
    pub edge_normalize: bool,
    pub seed: u64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 0.1,
            im_sim: ImageLoss::Lncc,
            ed_sim: EdgeLoss::Lncc,
            model: TransformModel::SvfBspline,
            spacing: 8,
            squaring_steps: SquaringConfig::default().steps(),
            levels: 3,
            iters_per_level: 300,
            optimizer: OptimizerConfig::default(),
            window: 9,
            lncc_eps: 1e-5,
            bins: 64,
            sigma_ratio: 0.5,
            eps_rel: 0.01,
            sigma_pre: 1.0,
            edge_normalize: true,
            seed: 0,
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2), ("lambda3", self.lambda3)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a finite non-negative weight, got {v}"));
            }
        }
        if !(self.lambda1 + self.lambda2 > 0.0) {
            return bad("lambda1 + lambda2 must be positive".into());
        }
        if self.squaring_steps > MAX_SQUARINGS {
            return bad(format!("squaring_steps must be <= {MAX_SQUARINGS}"));
        }
        if self.levels == 0 {
            return bad("levels must be >= 1".into());
        }
        if self.iters_per_level == 0 {
            return bad("iters_per_level must be > 0".into());
        }
        if self.model == TransformModel::SvfBspline && self.spacing < 2 {
            return bad("spacing must be >= 2".into());
        }
        if self.window < 3 || self.window.is_multiple_of(2) {
            return bad(format!("window must be odd and >= 3, got {}", self.window));
        }
        if self.bins < 8 {
            return bad(format!("bins must be >= 8, got {}", self.bins));
        }
        for (name, v) in [("lncc_eps", self.lncc_eps), ("sigma_ratio", self.sigma_ratio), ("eps_rel", self.eps_rel)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.sigma_pre >= 0.0 && self.sigma_pre.is_finite()) {
            return bad(format!("sigma_pre must be >= 0, got {}", self.sigma_pre));
        }
        self.optimizer.validate()
    }

    pub fn squaring(&self) -> SquaringConfig {
        SquaringConfig::new(self.squaring_steps).expect("validated squaring steps")
    }

    pub fn edge_options(&self) -> EdgeOptions {
        EdgeOptions {
            sigma_pre: self.sigma_pre,
            normalize: self.edge_normalize,
        }
    }

    /// Whether the edge branch contributes to the objective at all.
    pub fn edge_branch_active(&self) -> bool {
        self.ed_sim != EdgeLoss::None && self.lambda2 > 0.0
    }
}

/// Weighted loss components of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub total: f64,
}

/// One entry of the optimization trace. `level` 0 is the finest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub level: usize,
    pub iteration: usize,
    #[serde(flatten)]
    pub terms: LossTerms,
}

/// Optimized velocity parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Velocity {
    Dense(VectorField2D),
    BSpline(BSplineGrid),
}

impl Velocity {
    pub fn zeros(model: TransformModel, width: usize, height: usize, spacing: usize) -> Result<Self> {
        Ok(match model {
            TransformModel::SvfDense => Velocity::Dense(VectorField2D::zeros(width, height)),
            TransformModel::SvfBspline => Velocity::BSpline(BSplineGrid::zeros(width, height, spacing)?),
        })
    }

    pub fn params(&self) -> &[f64] {
        match self {
            Velocity::Dense(v) => v.as_slice(),
            Velocity::BSpline(g) => g.as_slice(),
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match self {
            Velocity::Dense(v) => v.as_mut_slice(),
            Velocity::BSpline(g) => g.as_mut_slice(),
        }
    }

    /// Dense velocity on a `width x height` grid.
    pub fn densify(&self, width: usize, height: usize) -> Result<VectorField2D> {
        match self {
            Velocity::Dense(v) => {
                check_shape((width, height), v.shape())?;
                Ok(v.clone())
            }
            Velocity::BSpline(g) => bspline_to_dense(g, width, height),
        }
    }
}

/// Images of one registration problem at one resolution.
#[derive(Debug, Clone)]
pub struct LevelImages {
    pub fixed: Image2D,
    pub moving: Image2D,
    pub fixed_edges: Image2D,
    pub moving_edges: Image2D,
}

impl LevelImages {
    pub fn new(fixed: Image2D, moving: Image2D, cfg: &RegistrationConfig) -> Result<Self> {
        check_shape(fixed.shape(), moving.shape())?;
        let opts = cfg.edge_options();
        let fixed_edges = edge_map(&fixed, &opts)?;
        let moving_edges = edge_map(&moving, &opts)?;
        Ok(Self {
            fixed,
            moving,
            fixed_edges,
            moving_edges,
        })
    }
}

fn image_loss(kind: ImageLoss, f: &Image2D, m: &Image2D, cfg: &RegistrationConfig) -> Result<LossValueGrad<Image2D>> {
    match kind {
        ImageLoss::Lncc => lncc(f, m, cfg.window, cfg.lncc_eps),
        ImageLoss::Nmi => nmi(f, m, cfg.bins, cfg.sigma_ratio),
        ImageLoss::Ngf => ngf(f, m, cfg.eps_rel),
        ImageLoss::Mse => mse(f, m),
    }
}

fn scaled_add(acc: &mut [f64], other: &[f64]) {
    acc.iter_mut().zip(other).for_each(|(a, b)| *a += b);
}

/// Composite objective and its gradient with respect to the velocity
/// parameters (same shape as `velocity`).
pub fn composite_loss_and_grad(
    fixed: &Image2D,
    moving: &Image2D,
    fixed_edges: &Image2D,
    moving_edges: &Image2D,
    velocity: &Velocity,
    cfg: &RegistrationConfig,
) -> Result<(LossTerms, Velocity)> {
    let shape = fixed.shape();
    check_shape(shape, moving.shape())?;
    check_shape(shape, fixed_edges.shape())?;
    check_shape(shape, moving_edges.shape())?;
    let (w, h) = shape;

    let v = velocity.densify(w, h)?;
    let trace = svf_exp_trace(&v, cfg.squaring());
    let u = trace.last().unwrap();

    let mut dl_du = VectorField2D::zeros(w, h);
    let mut l1 = 0.0;
    if cfg.lambda1 > 0.0 {
        let warped = warp_image(moving, u)?;
        let r = image_loss(cfg.im_sim, fixed, &warped, cfg)?;
        l1 = cfg.lambda1 * r.value;
        let g = r.grad.map(|x| cfg.lambda1 * x);
        scaled_add(dl_du.as_mut_slice(), warp_adjoint(moving, u, &g)?.as_slice());
    }
    let mut l2 = 0.0;
    if cfg.edge_branch_active() {
        let warped = warp_image(moving_edges, u)?;
        let r = match cfg.ed_sim {
            EdgeLoss::Lncc => lncc(fixed_edges, &warped, cfg.window, cfg.lncc_eps)?,
            EdgeLoss::Mse => mse(fixed_edges, &warped)?,
            EdgeLoss::None => unreachable!("inactive edge branch"),
        };
        l2 = cfg.lambda2 * r.value;
        let g = r.grad.map(|x| cfg.lambda2 * x);
        scaled_add(dl_du.as_mut_slice(), warp_adjoint(moving_edges, u, &g)?.as_slice());
    }
    let reg = reg_diffusion(&v)?;
    let l3 = cfg.lambda3 * reg.value;

    let mut dl_dv = svf_exp_adjoint_from_trace(&trace, &dl_du);
    if cfg.lambda3 > 0.0 {
        let g = reg.grad.scaled(cfg.lambda3);
        scaled_add(dl_dv.as_mut_slice(), g.as_slice());
    }
    let grad = match velocity {
        Velocity::Dense(_) => Velocity::Dense(dl_dv),
        Velocity::BSpline(grid) => Velocity::BSpline(bspline_adjoint(grid, &dl_dv)?),
    };
    let terms = LossTerms {
        l1,
        l2,
        l3,
        total: l1 + l2 + l3,
    };
    if !terms.total.is_finite() {
        return Err(Error::NonFinite(format!("composite loss {terms:?}")));
    }
    if grad.params().iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("composite gradient".into()));
    }
    Ok((terms, grad))
}

/// Final state of a registration.
#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationResult {
    pub velocity: Velocity,
    /// Displacement of `exp(velocity)` at full resolution.
    pub displacement: VectorField2D,
    pub loss_history: Vec<LossRecord>,
    pub runtime_ms: f64,
}

impl RegistrationResult {
    /// History entries of one pyramid level.
    pub fn level_history(&self, level: usize) -> impl Iterator<Item = &LossRecord> {
        self.loss_history.iter().filter(move |r| r.level == level)
    }
}

/// 2x2 mean pooling; odd trailing rows/columns are dropped.
pub fn downsample(img: &Image2D) -> Image2D {
    let (w, h) = (img.width() / 2, img.height() / 2);
    Image2D::from_fn(w, h, |x, y| {
        0.25 * (img.get(2 * x, 2 * y)
            + img.get(2 * x + 1, 2 * y)
            + img.get(2 * x, 2 * y + 1)
            + img.get(2 * x + 1, 2 * y + 1))
    })
}

/// Bilinear upsampling of a coarse velocity to `width x height`, with
/// vectors doubled to stay in (finer) pixel units.
pub fn upsample_field(coarse: &VectorField2D, width: usize, height: usize) -> VectorField2D {
    let (cw, ch) = coarse.shape();
    let data = coarse.as_slice();
    VectorField2D::from_fn(width, height, |x, y| {
        let s = crate::transform::sampling::Stencil::new(
            (x as f64 + 0.5) / 2.0 - 0.5,
            (y as f64 + 0.5) / 2.0 - 0.5,
            cw,
            ch,
        );
        [2.0 * s.value_interleaved(data, 0), 2.0 * s.value_interleaved(data, 1)]
    })
}

fn upsample_grid(
    coarse: &BSplineGrid,
    coarse_shape: (usize, usize),
    width: usize,
    height: usize,
    spacing: usize,
) -> Result<BSplineGrid> {
    let mut fine = BSplineGrid::zeros(width, height, spacing)?;
    let (fw, fh) = fine.cp_shape();
    let (cw, ch) = coarse.cp_shape();
    if spacing == 2 * coarse.spacing() {
        // lattices coincide: control point k sits at the same physical place
        for j in 0..fh {
            for i in 0..fw {
                let c = coarse.get(i.min(cw - 1), j.min(ch - 1));
                fine.set(i, j, [2.0 * c[0], 2.0 * c[1]]);
            }
        }
    } else {
        // quasi-interpolation: sample the coarse spline at each control site
        let s = spacing as f64;
        for j in 0..fh {
            for i in 0..fw {
                let px = ((i as f64 - 1.0) * s + 0.5) / 2.0 - 0.5;
                let py = ((j as f64 - 1.0) * s + 0.5) / 2.0 - 0.5;
                let c = coarse.evaluate(coarse_shape.0, coarse_shape.1, px, py);
                fine.set(i, j, [2.0 * c[0], 2.0 * c[1]]);
            }
        }
    }
    Ok(fine)
}

fn level_spacing(spacing: usize, level: usize) -> usize {
    (spacing >> level.min(usize::BITS as usize - 1)).max(2)
}

/// Multi-resolution registration of `moving` onto `fixed`.
///
/// Both images are min-max normalized first. Edge maps are recomputed at
/// every pyramid level from the pooled images.
pub fn register_pair(fixed: &Image2D, moving: &Image2D, cfg: &RegistrationConfig) -> Result<RegistrationResult> {
    let start = Instant::now();
    cfg.validate()?;
    check_shape(fixed.shape(), moving.shape())?;
    let (w, h) = fixed.shape();
    if w.min(h) < MIN_REGISTRATION_SIZE {
        return Err(Error::invalid(format!(
            "images must be at least {MIN_REGISTRATION_SIZE}x{MIN_REGISTRATION_SIZE}, got {w}x{h}"
        )));
    }
    let coarsest = w.min(h) >> (cfg.levels - 1).min(usize::BITS as usize - 1);
    if coarsest < MIN_LEVEL_SIZE {
        return Err(Error::invalid(format!(
            "{} pyramid levels shrink a {w}x{h} image below {MIN_LEVEL_SIZE} pixels",
            cfg.levels
        )));
    }

    let mut pyramid = vec![(normalize_minmax(fixed), normalize_minmax(moving))];
    for _ in 1..cfg.levels {
        let (f, m) = pyramid.last().unwrap();
        pyramid.push((downsample(f), downsample(m)));
    }

    let mut history = Vec::new();
    let mut velocity: Option<(Velocity, (usize, usize))> = None;
    for level in (0..cfg.levels).rev() {
        let (f, m) = &pyramid[level];
        let images = LevelImages::new(f.clone(), m.clone(), cfg)?;
        let (lw, lh) = f.shape();
        let spacing = level_spacing(cfg.spacing, level);
        let mut vel = match velocity.take() {
            None => Velocity::zeros(cfg.model, lw, lh, spacing)?,
            Some((Velocity::Dense(v), _)) => Velocity::Dense(upsample_field(&v, lw, lh)),
            Some((Velocity::BSpline(g), shape)) => Velocity::BSpline(upsample_grid(&g, shape, lw, lh, spacing)?),
        };
        optimize_level(&images, &mut vel, cfg, level, &mut history)?;
        velocity = Some((vel, (lw, lh)));
    }

    let (velocity, _) = velocity.expect("at least one level");
    let displacement = svf_exp(&velocity.densify(w, h)?, cfg.squaring());
    Ok(RegistrationResult {
        velocity,
        displacement,
        loss_history: history,
        runtime_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

fn optimize_level(
    images: &LevelImages,
    velocity: &mut Velocity,
    cfg: &RegistrationConfig,
    level: usize,
    history: &mut Vec<LossRecord>,
) -> Result<()> {
    let mut adam = AdamState::new(velocity.params().len());
    let diverged = |iteration: usize, e: Error, history: &[LossRecord]| match e {
        Error::NonFinite(what) => Error::Divergence {
            level,
            iteration,
            what,
            partial_history: history.to_vec(),
        },
        other => other,
    };
    for iteration in 0..=cfg.iters_per_level {
        let (terms, grad) = composite_loss_and_grad(
            &images.fixed,
            &images.moving,
            &images.fixed_edges,
            &images.moving_edges,
            velocity,
            cfg,
        )
        .map_err(|e| diverged(iteration, e, history))?;
        history.push(LossRecord {
            level,
            iteration,
            terms,
        });
        if iteration == cfg.iters_per_level {
            break;
        }
        adam.step(velocity.params_mut(), grad.params(), &cfg.optimizer)
            .map_err(|e| diverged(iteration, e, history))?;
    }
    Ok(())
}
