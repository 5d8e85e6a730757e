//! Pareto Scale Balance and the Pearson correlation used to validate it.
//!
//! The metric multiplies the spread of per-scale fine-tuning losses by a
//! penalty for every scale whose accuracy dropped:
//!
//! ```text
//! f = std(L_small, L_middle, L_large) * prod_{i in dropped} AP_i / AP_i^p
//! ```
//!
//! Lower is better.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::policy::ScaleCategory;

/// Default guard on post-fine-tune AP denominators, in fraction units.
pub const DEFAULT_EPS: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub enum MetricError {
    /// Stats document does not match the schema.
    Schema { path: String, message: String },
    /// A value is outside its domain (negative AP, negative loss, NaN...).
    Domain { field: String, value: f64 },
    /// Correlation input lengths differ or are too short.
    Length { xs: usize, ys: usize },
    /// One of the correlation inputs is constant.
    UndefinedCorrelation,
}

impl fmt::Display for MetricError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Schema { path, message } => {
                if path.is_empty() || path == "." {
                    write!(f, "stats document: {message}")
                } else {
                    write!(f, "stats document at `{path}`: {message}")
                }
            }
            Self::Domain { field, value } => write!(f, "{field}: value {value} out of range"),
            Self::Length { xs, ys } => {
                write!(f, "need two equal-length series of at least 2 values, got {xs} and {ys}")
            }
            Self::UndefinedCorrelation => f.write_str("correlation undefined: zero variance"),
        }
    }
}

impl std::error::Error for MetricError {}

/// One value per object scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerScale<T> {
    pub small: T,
    pub middle: T,
    pub large: T,
}

impl<T: Copy> PerScale<T> {
    pub fn new(small: T, middle: T, large: T) -> Self {
        Self {
            small,
            middle,
            large,
        }
    }

    pub fn get(&self, scale: ScaleCategory) -> T {
        match scale {
            ScaleCategory::Small => self.small,
            ScaleCategory::Middle => self.middle,
            ScaleCategory::Large => self.large,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ScaleCategory, T)> + '_ {
        ScaleCategory::ALL.into_iter().map(|s| (s, self.get(s)))
    }

    pub fn map<U>(&self, f: impl Fn(T) -> U) -> PerScale<U> {
        PerScale {
            small: f(self.small),
            middle: f(self.middle),
            large: f(self.large),
        }
    }
}

/// Per-scale statistics reported for one fine-tuned child model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleStats {
    /// Accumulated training loss per scale.
    pub losses: PerScale<f64>,
    /// Plain-model AP per scale.
    pub ap_before: PerScale<f64>,
    /// Fine-tuned AP per scale, same unit as `ap_before`.
    pub ap_after: PerScale<f64>,
    /// Overall fine-tuned AP; recorded for reporting only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overall_ap_after: Option<f64>,
}

/// Whether APs are fractions in `[0, 1]` or percentages in `[0, 100]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ApUnit {
    Fraction,
    Percent,
}

impl ApUnit {
    fn scale(self) -> f64 {
        match self {
            ApUnit::Fraction => 1.0,
            ApUnit::Percent => 100.0,
        }
    }
}

impl ScaleStats {
    /// Parses and validates a JSON stats document.
    pub fn from_json(doc: &str) -> Result<Self, MetricError> {
        let de = &mut serde_json::Deserializer::from_str(doc);
        let stats: ScaleStats =
            serde_path_to_error::deserialize(de).map_err(|e| MetricError::Schema {
                path: e.path().to_string(),
                message: e.inner().to_string(),
            })?;
        stats.validate()?;
        Ok(stats)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialize")
    }

    /// Percent if any AP exceeds 1, fraction otherwise.
    pub fn unit(&self) -> ApUnit {
        let any_above_one = self
            .ap_before
            .iter()
            .chain(self.ap_after.iter())
            .any(|(_, v)| v > 1.0);
        if any_above_one {
            ApUnit::Percent
        } else {
            ApUnit::Fraction
        }
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        for (scale, v) in self.losses.iter() {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(MetricError::Domain {
                    field: format!("losses.{scale}"),
                    value: v,
                });
            }
        }
        let max = self.unit().scale();
        for (name, aps) in [("ap_before", &self.ap_before), ("ap_after", &self.ap_after)] {
            for (scale, v) in aps.iter() {
                if !(0.0..=max).contains(&v) {
                    return Err(MetricError::Domain {
                        field: format!("{name}.{scale}"),
                        value: v,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Metric value with its two factors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub value: f64,
    pub std_component: f64,
    pub penalty_component: f64,
    pub dropped_scales: Vec<ScaleCategory>,
}

/// Population standard deviation of the three losses.
pub fn loss_std(losses: &PerScale<f64>) -> f64 {
    let values = [losses.small, losses.middle, losses.large];
    if values.iter().all(|&v| v == values[0]) {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Product of `before / max(after, eps)` over scales whose AP dropped.
///
/// `eps` is in the same unit as the APs.
pub fn penalty(
    ap_before: &PerScale<f64>,
    ap_after: &PerScale<f64>,
    eps: f64,
) -> Result<(f64, Vec<ScaleCategory>), MetricError> {
    if !(eps > 0.0) {
        return Err(MetricError::Domain {
            field: "eps".into(),
            value: eps,
        });
    }
    for (name, aps) in [("ap_before", ap_before), ("ap_after", ap_after)] {
        for (scale, v) in aps.iter() {
            if !(v >= 0.0) {
                return Err(MetricError::Domain {
                    field: format!("{name}.{scale}"),
                    value: v,
                });
            }
        }
    }
    let mut phi = 1.0;
    let mut dropped = Vec::new();
    for scale in ScaleCategory::ALL {
        let (before, after) = (ap_before.get(scale), ap_after.get(scale));
        if after < before {
            phi *= before / after.max(eps);
            dropped.push(scale);
        }
    }
    Ok((phi, dropped))
}

/// Pareto Scale Balance for one child model. `eps` is in fraction units and
/// rescaled when the stats carry percentages.
pub fn pareto_scale_balance(stats: &ScaleStats, eps: f64) -> Result<MetricValue, MetricError> {
    stats.validate()?;
    let std_component = loss_std(&stats.losses);
    let (penalty_component, dropped_scales) =
        penalty(&stats.ap_before, &stats.ap_after, eps * stats.unit().scale())?;
    Ok(MetricValue {
        value: std_component * penalty_component,
        std_component,
        penalty_component,
        dropped_scales,
    })
}

/// Pearson product-moment correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, MetricError> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(MetricError::Length {
            xs: xs.len(),
            ys: ys.len(),
        });
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricError::UndefinedCorrelation);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ps(a: f64, b: f64, c: f64) -> PerScale<f64> {
        PerScale::new(a, b, c)
    }

    fn stats(losses: PerScale<f64>, before: PerScale<f64>, after: PerScale<f64>) -> ScaleStats {
        ScaleStats {
            losses,
            ap_before: before,
            ap_after: after,
            overall_ap_after: None,
        }
    }

    #[test]
    fn std_examples() {
        assert_eq!(loss_std(&ps(1.0, 1.0, 1.0)), 0.0);
        assert!((loss_std(&ps(0.0, 0.0, 3.0)) - 2f64.sqrt()).abs() < 1e-12);
        assert!((loss_std(&ps(2.0, 4.0, 6.0)) - (8.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((loss_std(&ps(2.0, 4.0, 6.0)) - 1.63299).abs() < 1e-5);
    }

    #[test]
    fn penalty_examples() {
        let before = ps(20.0, 30.0, 40.0);
        assert_eq!(penalty(&before, &ps(25.0, 30.0, 41.0), 1e-2).unwrap(), (1.0, vec![]));
        let (phi, dropped) = penalty(&before, &ps(10.0, 30.0, 40.0), 1e-2).unwrap();
        assert_eq!(phi, 2.0);
        assert_eq!(dropped, vec![ScaleCategory::Small]);
        let (phi, dropped) = penalty(&before, &ps(10.0, 15.0, 40.0), 1e-2).unwrap();
        assert_eq!(phi, 4.0);
        assert_eq!(dropped, vec![ScaleCategory::Small, ScaleCategory::Middle]);
        assert!(penalty(&ps(-1.0, 1.0, 1.0), &before, 1e-2).is_err());
    }

    #[test]
    fn combined_example() {
        let s = stats(ps(0.0, 0.0, 3.0), ps(20.0, 30.0, 40.0), ps(10.0, 30.0, 40.0));
        let m = pareto_scale_balance(&s, DEFAULT_EPS).unwrap();
        assert!((m.value - 2.0 * 2f64.sqrt()).abs() < 1e-12);
        assert!((m.value - 2.82843).abs() < 1e-5);
    }

    #[test]
    fn zero_after_ap_is_guarded() {
        let s = stats(ps(1.0, 2.0, 3.0), ps(0.3, 0.4, 0.5), ps(0.0, 0.4, 0.5));
        let m = pareto_scale_balance(&s, DEFAULT_EPS).unwrap();
        assert!(m.value.is_finite());
        assert!((m.penalty_component - 0.3 / 1e-4).abs() < 1e-6);
        // Same collapse expressed in percent gives the same penalty.
        let p = stats(ps(1.0, 2.0, 3.0), ps(30.0, 40.0, 50.0), ps(0.0, 40.0, 50.0));
        let mp = pareto_scale_balance(&p, DEFAULT_EPS).unwrap();
        assert!((mp.penalty_component / m.penalty_component - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_iff_equal_losses_and_no_drop() {
        let s = stats(ps(2.0, 2.0, 2.0), ps(0.2, 0.3, 0.4), ps(0.2, 0.35, 0.4));
        assert_eq!(pareto_scale_balance(&s, DEFAULT_EPS).unwrap().value, 0.0);
        let s = stats(ps(2.0, 2.0, 2.1), ps(0.2, 0.3, 0.4), ps(0.2, 0.35, 0.4));
        assert!(pareto_scale_balance(&s, DEFAULT_EPS).unwrap().value > 0.0);
    }

    #[test]
    fn stats_document_errors_name_the_field() {
        let doc = r#"{"losses": {"small": 1, "middle": 2},
                      "ap_before": {"small": 0.1, "middle": 0.2, "large": 0.3},
                      "ap_after": {"small": 0.1, "middle": 0.2, "large": 0.3}}"#;
        let err = ScaleStats::from_json(doc).unwrap_err();
        assert!(matches!(&err, MetricError::Schema { path, message }
            if path == "losses" && message.contains("large")), "{err}");
        let doc = r#"{"losses": {"small": 1, "middle": 2, "large": 3, "tiny": 0},
                      "ap_before": {"small": 0.1, "middle": 0.2, "large": 0.3},
                      "ap_after": {"small": 0.1, "middle": 0.2, "large": 0.3}}"#;
        assert!(ScaleStats::from_json(doc).unwrap_err().to_string().contains("tiny"));
        let doc = r#"{"losses": {"small": 1, "middle": 2, "large": 3},
                      "ap_before": {"small": 0.1, "middle": 0.2, "large": 0.3},
                      "ap_after": {"small": -0.1, "middle": 0.2, "large": 0.3},
                      "overall_ap_after": 0.2}"#;
        assert!(ScaleStats::from_json(doc).unwrap_err().to_string().contains("ap_after.small"));
    }

    #[test]
    fn pearson_examples() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.5];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        assert!((pearson(&xs, &ys).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert!((pearson(&xs, &neg).unwrap() + 1.0).abs() < 1e-12);
        let r = pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r - 0.8).abs() < 1e-12);
        assert_eq!(pearson(&[1.0, 1.0], &[2.0, 3.0]), Err(MetricError::UndefinedCorrelation));
        assert!(matches!(pearson(&[1.0], &[2.0]), Err(MetricError::Length { .. })));
    }

    proptest! {
        #[test]
        fn value_scales_with_losses(
            l in proptest::array::uniform3(0.0f64..10.0),
            c in 0.01f64..100.0,
            after in proptest::array::uniform3(0.0f64..1.0),
        ) {
            let before = ps(0.5, 0.5, 0.5);
            let a = stats(ps(l[0], l[1], l[2]), before, ps(after[0], after[1], after[2]));
            let b = stats(ps(c * l[0], c * l[1], c * l[2]), before, a.ap_after);
            let va = pareto_scale_balance(&a, DEFAULT_EPS).unwrap().value;
            let vb = pareto_scale_balance(&b, DEFAULT_EPS).unwrap().value;
            prop_assert!((vb - c * va).abs() <= 1e-9 * vb.abs().max(1.0));
        }

        #[test]
        fn penalty_is_monotone_in_drops(
            before in proptest::array::uniform3(0.05f64..1.0),
            frac in proptest::array::uniform3(0.0f64..1.0),
            which in 0usize..3, shrink in 0.01f64..0.99,
        ) {
            let b = ps(before[0], before[1], before[2]);
            let mut after = [before[0] * frac[0], before[1] * frac[1], before[2] * frac[2]];
            let base = penalty(&b, &ps(after[0], after[1], after[2]), 1e-4).unwrap().0;
            after[which] *= shrink;
            if after[which] >= 1e-4 {
                let lower = penalty(&b, &ps(after[0], after[1], after[2]), 1e-4).unwrap().0;
                prop_assert!(lower > base);
            }
        }

        #[test]
        fn penalty_is_unit_free(before in proptest::array::uniform3(0.01f64..1.0), after in proptest::array::uniform3(0.01f64..1.0)) {
            let f = penalty(&ps(before[0], before[1], before[2]), &ps(after[0], after[1], after[2]), 1e-4).unwrap();
            let p = penalty(
                &ps(100.0 * before[0], 100.0 * before[1], 100.0 * before[2]),
                &ps(100.0 * after[0], 100.0 * after[1], 100.0 * after[2]),
                1e-2,
            ).unwrap();
            prop_assert_eq!(&f.1, &p.1);
            prop_assert!((f.0 / p.0 - 1.0).abs() < 1e-12);
        }
    }
}
