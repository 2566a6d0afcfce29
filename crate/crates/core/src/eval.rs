//! Overlap and regularity metrics, and the per-run JSON report.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{check_shape, Error, Result};
use crate::grid::{LabelMap2D, VectorField2D};
use crate::register::{RegistrationConfig, RegistrationResult};
use crate::synth::PhantomPair;
use crate::transform::{jacobian_determinant, warp_labels};

/// Per-label Dice overlap. Labels absent from both maps are left out.
pub fn dice(a: &LabelMap2D, b: &LabelMap2D, labels: &[u32]) -> Result<BTreeMap<u32, f64>> {
    check_shape(a.shape(), b.shape())?;
    let mut out = BTreeMap::new();
    for &l in labels {
        let (mut na, mut nb, mut both) = (0usize, 0usize, 0usize);
        for (&x, &y) in a.as_slice().iter().zip(b.as_slice()) {
            na += usize::from(x == l);
            nb += usize::from(y == l);
            both += usize::from(x == l && y == l);
        }
        if na + nb > 0 {
            out.insert(l, 2.0 * both as f64 / (na + nb) as f64);
        }
    }
    Ok(out)
}

/// Non-background labels present in either map, ascending.
pub fn foreground_labels(a: &LabelMap2D, b: &LabelMap2D) -> Vec<u32> {
    let mut labels = a.label_set();
    labels.extend(b.label_set());
    labels.sort_unstable();
    labels.dedup();
    labels.retain(|&l| l != 0);
    labels
}

/// Unweighted mean of the scores, `None` when there are none.
pub fn mean_dice(scores: &BTreeMap<u32, f64>) -> Option<f64> {
    (!scores.is_empty()).then(|| scores.values().sum::<f64>() / scores.len() as f64)
}

/// Fraction of pixels with a negative Jacobian determinant and the mean
/// magnitude of its central-difference gradient.
pub fn jacobian_stats(u: &VectorField2D) -> Result<(f64, f64)> {
    let j = jacobian_determinant(u)?;
    let n = j.len() as f64;
    let folds = j.as_slice().iter().filter(|&&d| d < 0.0).count();
    let g = crate::edge::gradient_central(&j)?;
    let grad_mean = g
        .as_slice()
        .chunks_exact(2)
        .map(|c| c[0].hypot(c[1]))
        .sum::<f64>()
        / n;
    Ok((folds as f64 / n, grad_mean))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dice_per_label: BTreeMap<u32, f64>,
    /// `None` when neither segmentation has a foreground label.
    pub dice_mean: Option<f64>,
    pub fold_ratio: f64,
    pub grad_jac_mean: f64,
    pub runtime_ms: f64,
    pub config: RegistrationConfig,
}

/// Dice of the fixed segmentation against the moving segmentation warped
/// by `displacement`, plus Jacobian statistics of `displacement`.
pub fn evaluate_displacement(
    fixed_seg: &LabelMap2D,
    moving_seg: &LabelMap2D,
    displacement: &VectorField2D,
    runtime_ms: f64,
    config: &RegistrationConfig,
) -> Result<EvalReport> {
    check_shape(fixed_seg.shape(), moving_seg.shape())?;
    let warped = warp_labels(moving_seg, displacement)?;
    let labels = foreground_labels(fixed_seg, moving_seg);
    let dice_per_label = dice(fixed_seg, &warped, &labels)?;
    let (fold_ratio, grad_jac_mean) = jacobian_stats(displacement)?;
    if !(fold_ratio.is_finite() && grad_jac_mean.is_finite()) {
        return Err(Error::NonFinite("jacobian statistics".into()));
    }
    Ok(EvalReport {
        dice_mean: mean_dice(&dice_per_label),
        dice_per_label,
        fold_ratio,
        grad_jac_mean,
        runtime_ms,
        config: config.clone(),
    })
}

pub fn evaluate_registration(
    pair: &PhantomPair,
    result: &RegistrationResult,
    config: &RegistrationConfig,
) -> Result<EvalReport> {
    evaluate_displacement(
        &pair.fixed_seg,
        &pair.moving_seg,
        &result.displacement,
        result.runtime_ms,
        config,
    )
}

/// Dice between the segmentations before any registration.
pub fn baseline_dice(pair: &PhantomPair) -> Result<Option<f64>> {
    let labels = foreground_labels(&pair.fixed_seg, &pair.moving_seg);
    Ok(mean_dice(&dice(&pair.fixed_seg, &pair.moving_seg, &labels)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::register::Velocity;
    use crate::synth::{make_pair, random_smooth_svf};
    use crate::transform::{svf_exp, SquaringConfig};

    fn row(v: &[u32]) -> LabelMap2D {
        LabelMap2D::new(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn dice_examples() {
        let a = row(&[1, 1, 0, 0]);
        let b = row(&[0, 1, 1, 0]);
        assert_eq!(dice(&a, &b, &[1]).unwrap()[&1], 0.5);
        assert_eq!(dice(&a, &a, &[0, 1]).unwrap().values().copied().collect::<Vec<_>>(), vec![1.0, 1.0]);
        let c = row(&[0, 0, 1, 1]);
        assert_eq!(dice(&a, &c, &[1]).unwrap()[&1], 0.0);
        // absent from both: omitted
        assert!(dice(&a, &b, &[7]).unwrap().is_empty());
        assert!(dice(&a, &row(&[1, 1, 0]), &[1]).is_err());
    }

    #[test]
    fn jacobian_examples() {
        assert_eq!(jacobian_stats(&VectorField2D::zeros(6, 6)).unwrap(), (0.0, 0.0));
        let scale = VectorField2D::from_fn(8, 8, |x, y| [0.1 * x as f64, 0.1 * y as f64]);
        let (folds, grad) = jacobian_stats(&scale).unwrap();
        assert_eq!(folds, 0.0);
        assert!(grad < 1e-12);
        let flip = VectorField2D::from_fn(8, 8, |x, _| [-2.0 * x as f64, 0.0]);
        assert_eq!(jacobian_stats(&flip).unwrap().0, 1.0);
    }

    #[test]
    fn identity_on_undeformed_pair() {
        let pair = make_pair(1, 64, 0.0).unwrap();
        let r = evaluate_displacement(
            &pair.fixed_seg,
            &pair.moving_seg,
            &VectorField2D::zeros(64, 64),
            0.0,
            &RegistrationConfig::default(),
        )
        .unwrap();
        assert_eq!(r.dice_mean, Some(1.0));
        assert_eq!(r.fold_ratio, 0.0);
        assert_eq!(r.dice_per_label.keys().copied().collect::<Vec<_>>(), vec![1, 2, 3, 4]);
    }

    #[test]
    fn identity_result_reports_baseline() {
        let pair = make_pair(4, 96, 5.0).unwrap();
        let result = RegistrationResult {
            velocity: Velocity::Dense(VectorField2D::zeros(96, 96)),
            displacement: VectorField2D::zeros(96, 96),
            loss_history: vec![],
            runtime_ms: 1.5,
        };
        let r = evaluate_registration(&pair, &result, &RegistrationConfig::default()).unwrap();
        assert_eq!(r.dice_mean, baseline_dice(&pair).unwrap());
        assert!(r.dice_mean.unwrap() < 1.0);
        assert_eq!(r.runtime_ms, 1.5);
    }

    #[test]
    fn report_round_trips() {
        let pair = make_pair(2, 64, 3.0).unwrap();
        let r = evaluate_displacement(
            &pair.fixed_seg,
            &pair.moving_seg,
            &pair.gt_displacement,
            12.25,
            &RegistrationConfig::default(),
        )
        .unwrap();
        let text = serde_json::to_string(&r).unwrap();
        let keys: serde_json::Value = serde_json::from_str(&text).unwrap();
        for k in ["dice_per_label", "dice_mean", "fold_ratio", "grad_jac_mean", "runtime_ms", "config"] {
            assert!(keys.get(k).is_some(), "missing {k}");
        }
        assert_eq!(serde_json::from_str::<EvalReport>(&text).unwrap(), r);
    }

    #[test]
    fn synthetic_fields_do_not_fold() {
        for seed in 0..20 {
            let v = random_smooth_svf(seed, 128, 8.0, None).unwrap();
            let u = svf_exp(&v, SquaringConfig::default());
            assert_eq!(jacobian_stats(&u).unwrap().0, 0.0, "seed {seed}");
        }
    }

    #[test]
    fn synthetic_pairs_have_moderate_overlap() {
        for seed in 0..20 {
            let pair = make_pair(seed, 192, 8.0).unwrap();
            assert_eq!(pair.fixed_seg.label_set(), pair.moving_seg.label_set());
            let d = baseline_dice(&pair).unwrap().unwrap();
            assert!(d > 0.3 && d < 0.95, "seed {seed}: {d}");
        }
    }
}
