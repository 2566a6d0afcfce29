//! Acceptance suite. Each test prints one `PASS`/`FAIL` line and then
//! asserts it. Run with `cargo test --test acceptance -- --nocapture` to
//! see the lines.

mod common;

use std::sync::OnceLock;
use std::time::Instant;

use edgereg_core::bench::{run_bench, threads_from_env, write_rows_csv, write_summary_csv, BenchConfig, BenchOutcome};
use edgereg_core::eval::{dice, foreground_labels, mean_dice};
use edgereg_core::register::{composite_loss_and_grad, register_pair, EdgeLoss, ImageLoss, RegistrationConfig, Velocity};
use edgereg_core::similarity::{lncc, mse, ngf, nmi, reg_diffusion};
use edgereg_core::synth::make_phantom;
use edgereg_core::transform::{compose, jacobian_determinant, svf_exp, warp_labels, BSplineGrid, SquaringConfig};
use edgereg_core::{edge::edge_map, Image2D, LabelMap2D, VectorField2D};

use common::*;

fn report(id: u32, name: &str, pass: bool, detail: String) {
    println!("[{}] criterion {id} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

const FD_STEP: f64 = 1e-6;
const GRAD_FLOOR: f64 = 1e-10;

fn image_fd(f: &Image2D, m: &Image2D, loss: impl Fn(&Image2D, &Image2D) -> f64) -> Vec<f64> {
    let (w, h) = m.shape();
    finite_diff(m.as_slice(), FD_STEP, |p| loss(f, &Image2D::new(w, h, p.to_vec()).unwrap()))
}

fn composite_fd_error(velocity: Velocity, cfg: &RegistrationConfig, seed: u64) -> f64 {
    let f = random_image(16, 16, 0.0, 1.0, seed);
    let m = random_image(16, 16, 0.0, 1.0, seed + 1);
    let opts = cfg.edge_options();
    let (ef, em) = (edge_map(&f, &opts).unwrap(), edge_map(&m, &opts).unwrap());
    let (_, grad) = composite_loss_and_grad(&f, &m, &ef, &em, &velocity, cfg).unwrap();
    let fd = finite_diff(velocity.params(), FD_STEP, |p| {
        let mut v = velocity.clone();
        v.params_mut().copy_from_slice(p);
        composite_loss_and_grad(&f, &m, &ef, &em, &v, cfg).unwrap().0.total
    });
    max_rel_err(grad.params(), &fd, GRAD_FLOOR)
}

#[test]
fn criterion_1_gradient_correctness() {
    let start = Instant::now();
    let mut errs = Vec::new();
    let (w, h) = (16, 16);
    let f = random_image(w, h, 0.05, 0.95, 11);
    let m = random_image(w, h, 0.05, 0.95, 12);

    let g = lncc(&f, &m, 9, 1e-5).unwrap().grad;
    let fd = image_fd(&f, &m, |a, b| lncc(a, b, 9, 1e-5).unwrap().value);
    errs.push(("lncc", max_rel_err(g.as_slice(), &fd, GRAD_FLOOR)));

    let g = nmi(&f, &m, 64, 0.5).unwrap().grad;
    let fd = image_fd(&f, &m, |a, b| nmi(a, b, 64, 0.5).unwrap().value);
    errs.push(("nmi", max_rel_err(g.as_slice(), &fd, GRAD_FLOOR)));

    let g = ngf(&f, &m, 0.01).unwrap().grad;
    let fd = image_fd(&f, &m, |a, b| ngf(a, b, 0.01).unwrap().value);
    errs.push(("ngf", max_rel_err(g.as_slice(), &fd, GRAD_FLOOR)));

    let g = mse(&f, &m).unwrap().grad;
    let fd = image_fd(&f, &m, |a, b| mse(a, b).unwrap().value);
    errs.push(("mse", max_rel_err(g.as_slice(), &fd, GRAD_FLOOR)));

    let v = random_field(w, h, 1.0, 13);
    let g = reg_diffusion(&v).unwrap().grad;
    let fd = finite_diff(v.as_slice(), FD_STEP, |p| {
        reg_diffusion(&VectorField2D::new(w, h, p.to_vec()).unwrap()).unwrap().value
    });
    errs.push(("reg_diffusion", max_rel_err(g.as_slice(), &fd, GRAD_FLOOR)));

    let cfg = RegistrationConfig {
        squaring_steps: 4,
        spacing: 4,
        im_sim: ImageLoss::Lncc,
        ed_sim: EdgeLoss::Lncc,
        ..Default::default()
    };
    let dense = Velocity::Dense(random_field(w, h, 0.8, 14));
    errs.push(("composite dense K=4", composite_fd_error(dense, &cfg, 15)));
    let mut grid = BSplineGrid::zeros(w, h, 4).unwrap();
    let mut r = rng(16);
    for c in grid.as_mut_slice() {
        *c = 1.6 * (rand::Rng::random::<f64>(&mut r) - 0.5);
    }
    errs.push(("composite b-spline s=4", composite_fd_error(Velocity::BSpline(grid), &cfg, 17)));

    let worst = errs.iter().map(|e| e.1).fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    let detail = errs.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect::<Vec<_>>().join(", ");
    report(
        1,
        "gradient correctness",
        worst < 1e-4 && secs < 60.0,
        format!("max rel err {worst:.2e} (limit 1e-4) in {secs:.1}s [{detail}]"),
    );
}

/// Both quantities are measured away from the border: with clamp-to-edge
/// sampling, `exp(-v)` cannot undo a pull from outside the grid.
#[test]
fn criterion_2_exponential_oracle() {
    let start = Instant::now();
    let (n, margin) = (64, 4);
    let cfg = SquaringConfig::new(6).unwrap();
    let mut worst_flow: f64 = 0.0;
    let mut worst_inverse: f64 = 0.0;
    for seed in 0..20 {
        let v = smooth_field(n, n, 8.0, 3.0, 100 + seed);
        let u = svf_exp(&v, cfg);
        let reference = euler_flow(&v, 4096);
        let round_trip = compose(&u, &svf_exp(&v.scaled(-1.0), cfg)).unwrap();
        for y in margin..n - margin {
            for x in margin..n - margin {
                let (a, b) = (u.get(x, y), reference.get(x, y));
                worst_flow = worst_flow.max((a[0] - b[0]).hypot(a[1] - b[1]));
                let r = round_trip.get(x, y);
                worst_inverse = worst_inverse.max(r[0].hypot(r[1]));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        2,
        "exponential map",
        worst_flow <= 1e-3 && worst_inverse < 0.1 && secs < 30.0,
        format!(
            "max interior |exp - euler| {worst_flow:.2e} px (limit 1e-3), max interior |exp(v) o exp(-v)| {worst_inverse:.3} px (limit 0.1), {secs:.1}s"
        ),
    );
}

#[test]
fn criterion_3_metric_oracles() {
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let f = random_image(16, 16, 0.0, 1.0, 200 + 2 * seed);
        let m = random_image(16, 16, 0.0, 1.0, 201 + 2 * seed);
        worst = worst.max((lncc(&f, &m, 9, 1e-5).unwrap().value - common::lncc(&f, &m, 9, 1e-5)).abs());
        worst = worst.max((ngf(&f, &m, 0.01).unwrap().value - common::ngf(&f, &m, 0.01)).abs());
        worst = worst.max((mse(&f, &m).unwrap().value - common::mse(&f, &m)).abs());

        let mut r = rng(300 + seed);
        let a = LabelMap2D::from_fn(16, 16, |_, _| rand::Rng::random_range(&mut r, 0..4));
        let b = LabelMap2D::from_fn(16, 16, |_, _| rand::Rng::random_range(&mut r, 0..4));
        let labels = [0, 1, 2, 3, 9];
        let got = dice(&a, &b, &labels).unwrap();
        let want = common::dice(&a, &b, &labels);
        assert_eq!(got.keys().collect::<Vec<_>>(), want.keys().collect::<Vec<_>>());
        for (k, v) in &got {
            worst = worst.max((v - want[k]).abs());
        }

        let u = random_field(16, 16, 0.7, 400 + seed);
        let j = jacobian_determinant(&u).unwrap();
        for (a, b) in j.as_slice().iter().zip(common::jacobian(&u)) {
            worst = worst.max((a - b).abs());
        }
    }
    let f = random_image(128, 128, 0.0, 1.0, 500);
    let m = random_image(128, 128, 0.0, 1.0, 501);
    let soft = -nmi(&f, &m, 32, 0.5).unwrap().value;
    let hard = nmi_hard(&f, &m, 32);
    let nmi_gap = (soft - hard).abs();
    report(
        3,
        "metric oracles",
        worst <= 1e-12 && nmi_gap <= 0.05,
        format!("max |lib - brute force| {worst:.1e} (limit 1e-12), nmi soft {soft:.4} vs hard {hard:.4} (limit 0.05)"),
    );
}

#[test]
fn criterion_4_self_registration() {
    let start = Instant::now();
    let cfg = RegistrationConfig::default();
    let mut worst_u: f64 = 0.0;
    let mut worst_dice: f64 = 1.0;
    for seed in 0..5 {
        let (labels, img, _) = make_phantom(600 + seed, 192).unwrap();
        let r = register_pair(&img, &img, &cfg).unwrap();
        worst_u = worst_u.max(r.displacement.mean_norm());
        let warped = warp_labels(&labels, &r.displacement).unwrap();
        let fg = foreground_labels(&labels, &warped);
        worst_dice = worst_dice.min(mean_dice(&dice(&labels, &warped, &fg).unwrap()).unwrap());
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        4,
        "self-registration",
        worst_u < 0.1 && worst_dice >= 0.99 && secs < 120.0,
        format!("worst mean |u| {worst_u:.2e} px (limit 0.1), worst Dice {worst_dice:.4} (limit 0.99), {secs:.1}s"),
    );
}

fn trend_config() -> BenchConfig {
    BenchConfig {
        lambda2: vec![0.0, 1.0],
        lambda3: vec![0.1],
        ..BenchConfig::default()
    }
}

fn csv_bytes(outcome: &BenchOutcome) -> Vec<u8> {
    let mut buf = Vec::new();
    write_rows_csv(&outcome.rows, &mut buf).unwrap();
    write_summary_csv(&outcome.summary, &mut buf).unwrap();
    buf
}

/// The edge-on/edge-off benchmark, run once and shared.
fn trend_bench() -> &'static (BenchOutcome, f64) {
    static BENCH: OnceLock<(BenchOutcome, f64)> = OnceLock::new();
    BENCH.get_or_init(|| {
        let start = Instant::now();
        let out = run_bench(&trend_config(), threads_from_env(), &|_, _| {}).unwrap();
        (out, start.elapsed().as_secs_f64())
    })
}

#[test]
fn criterion_5_edge_augmentation_trend() {
    let (out, secs) = trend_bench();
    let mut pass = out.rows.iter().all(|r| r.is_ok()) && *secs < 1800.0;
    let mut parts = Vec::new();
    for loss in [ImageLoss::Lncc, ImageLoss::Nmi, ImageLoss::Ngf] {
        let off = out.cell(loss, 0.0, 0.1).unwrap();
        let on = out.cell(loss, 1.0, 0.1).unwrap();
        let gain = on.dice_mean - off.dice_mean;
        pass &= gain >= 0.005 && off.dice_mean > off.dice_pre_mean && on.dice_mean > on.dice_pre_mean;
        parts.push(format!(
            "{loss} pre {:.4} off {:.4} on {:.4} gain {gain:+.4}",
            off.dice_pre_mean, off.dice_mean, on.dice_mean
        ));
    }
    report(
        5,
        "edge-augmentation trend",
        pass,
        format!("{} (gain limit 0.005), {} runs in {secs:.0}s", parts.join("; "), out.rows.len()),
    );
}

#[test]
fn criterion_6_regularity() {
    let (out, _) = trend_bench();
    let worst = out
        .rows
        .iter()
        .map(|r| r.fold_ratio.unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    report(
        6,
        "regularity",
        worst <= 1e-3,
        format!("max fold ratio {worst:.2e} over {} runs with lambda3 = 0.1 (limit 1e-3)", out.rows.len()),
    );
}

#[test]
fn criterion_7_determinism() {
    let (first, _) = trend_bench();
    let pool = threads_from_env()
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let other = if pool == 1 { 3 } else { 1 };
    let again = run_bench(&trend_config(), Some(other), &|_, _| {}).unwrap();
    let (a, b) = (csv_bytes(first), csv_bytes(&again));
    report(
        7,
        "determinism",
        a == b,
        format!("{} CSV bytes, {pool} vs {other} threads identical: {}", a.len(), a == b),
    );
}
